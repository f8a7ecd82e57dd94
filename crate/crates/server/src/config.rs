//! Service configuration: one TOML file plus environment overrides.
//!
//! Every data path is optional. A missing path falls back to the embedded
//! fixture data, so an empty config yields a working demo engine. Relative
//! paths are resolved against the config file's directory.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use selftalk_core::corpus::{self, BankEntry, TopicRegistry};
use selftalk_core::dialogue_manager::{load_questions, Blocklist, Engine, EngineConfig, EngineParts, NoExternalAnswer};
use selftalk_core::fixtures;
use selftalk_core::generator::{NgramGenerator, NgramModel, SamplerConfig};
use selftalk_core::lexicon::{tokenize, IdfLexicon};
use selftalk_core::match_index::{InvertedIndex, ScoringParams};
use selftalk_core::preprocess::Gazetteer;
use selftalk_core::rules::{FactStore, LikesConfig, RuleSet};

use crate::error::{ServerError, ServerResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerSection,
    pub store: StoreSection,
    pub data: DataSection,
    pub scoring: ScoringParams,
    pub engine: EngineSection,
    pub generator: GeneratorSection,
    pub session: SessionSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub host: String,
    pub port: u16,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    /// Session record directory; sessions stay in memory when unset.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFile {
    pub topic: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub topics: Option<PathBuf>,
    pub frequencies: Option<PathBuf>,
    pub corpus: Vec<CorpusFile>,
    /// Bank file written by `ingest`; used instead of `corpus` when set.
    pub bank: Option<PathBuf>,
    /// Index snapshot written by `build-index`; carries its own bank and
    /// lexicon, so it overrides `corpus`, `bank` and `frequencies`.
    pub index: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub facts: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub blocklist: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub backup: Option<PathBuf>,
    pub greetings: Option<PathBuf>,
    /// n-gram model snapshot; trained from the bank responses when unset.
    pub generator: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub proactive_interval: u32,
    pub trending_popularity: u64,
}

impl Default for EngineSection {
    fn default() -> Self {
        let d = EngineConfig::default();
        Self {
            proactive_interval: d.proactive_interval,
            trending_popularity: d.likes.trending_popularity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub order: usize,
    pub smoothing: f64,
    pub temperature: f64,
    pub max_tokens: usize,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            order: fixtures::GENERATOR_ORDER,
            smoothing: fixtures::GENERATOR_SMOOTHING,
            temperature: s.temperature,
            max_tokens: s.max_tokens,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    /// Seeds every new session identically; random per session when unset.
    pub seed: Option<u64>,
}

/// Environment variables that override config keys.
pub const ENV_KEYS: &[(&str, &str)] = &[
    ("SELFTALK_HOST", "server.host"),
    ("SELFTALK_PORT", "server.port"),
    ("SELFTALK_STORE_DIR", "store.dir"),
    ("SELFTALK_INDEX", "data.index"),
    ("SELFTALK_LAMBDA", "scoring.lambda"),
    ("SELFTALK_RESPOND_THRESHOLD", "scoring.respond_threshold"),
    ("SELFTALK_PRIORITY_THRESHOLD", "scoring.priority_threshold"),
    ("SELFTALK_TEMPERATURE", "generator.temperature"),
    ("SELFTALK_SEED", "session.seed"),
];

fn parse_env<T: std::str::FromStr>(key: &str, value: &str) -> ServerResult<T> {
    value
        .trim()
        .parse()
        .map_err(|_| ServerError::Usage(format!("{key}: cannot parse `{value}`")))
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> ServerResult<Self> {
        toml::from_str(text).map_err(|source| ServerError::ConfigParse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> ServerResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ServerError::io(path, e))?;
        let mut config = Self::from_toml(&text, path)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let d = &mut self.data;
        for p in [
            &mut d.topics,
            &mut d.frequencies,
            &mut d.bank,
            &mut d.index,
            &mut d.rules,
            &mut d.facts,
            &mut d.entities,
            &mut d.blocklist,
            &mut d.questions,
            &mut d.backup,
            &mut d.greetings,
            &mut d.generator,
            &mut self.store.dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for c in &mut d.corpus {
            fix(&mut c.path);
        }
    }

    /// Applies [`ENV_KEYS`] overrides found through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> ServerResult<()> {
        for (key, _) in ENV_KEYS {
            let Some(v) = lookup(key) else { continue };
            match *key {
                "SELFTALK_HOST" => self.server.host = v,
                "SELFTALK_PORT" => self.server.port = parse_env(key, &v)?,
                "SELFTALK_STORE_DIR" => self.store.dir = Some(v.into()),
                "SELFTALK_INDEX" => self.data.index = Some(v.into()),
                "SELFTALK_LAMBDA" => self.scoring.lambda = parse_env(key, &v)?,
                "SELFTALK_RESPOND_THRESHOLD" => self.scoring.respond_threshold = parse_env(key, &v)?,
                "SELFTALK_PRIORITY_THRESHOLD" => self.scoring.priority_threshold = parse_env(key, &v)?,
                "SELFTALK_TEMPERATURE" => self.generator.temperature = parse_env(key, &v)?,
                "SELFTALK_SEED" => self.session.seed = Some(parse_env(key, &v)?),
                _ => unreachable!("every ENV_KEYS entry is handled"),
            }
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            params: self.scoring,
            proactive_interval: self.engine.proactive_interval,
            likes: LikesConfig {
                trending_popularity: self.engine.trending_popularity,
            },
        }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            temperature: self.generator.temperature,
            max_tokens: self.generator.max_tokens,
            seed: None,
        }
    }
}

fn open(path: &Path) -> ServerResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| ServerError::io(path, e))
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

fn wrap<T>(path: &Path, r: selftalk_core::Result<T>) -> ServerResult<T> {
    r.map_err(|e| ServerError::core(name(path), e))
}

fn read_text(path: &Path) -> ServerResult<String> {
    std::fs::read_to_string(path).map_err(|e| ServerError::io(path, e))
}

pub fn load_registry(data: &DataSection) -> ServerResult<TopicRegistry> {
    match &data.topics {
        Some(p) => wrap(p, TopicRegistry::load(open(p)?, &name(p))),
        None => Ok(fixtures::registry()),
    }
}

pub fn load_lexicon(data: &DataSection) -> ServerResult<IdfLexicon> {
    match &data.frequencies {
        Some(p) => wrap(p, IdfLexicon::load_frequencies(open(p)?, &name(p))),
        None => Ok(fixtures::lexicon()),
    }
}

/// Ingests the configured corpus files.
pub fn load_corpus(files: &[CorpusFile], registry: &TopicRegistry) -> ServerResult<Vec<corpus::SelfDialogue>> {
    let mut out = Vec::new();
    for f in files {
        out.extend(wrap(&f.path, corpus::ingest(open(&f.path)?, &f.topic, registry, &name(&f.path)))?);
    }
    Ok(out)
}

pub fn read_bank_file(path: &Path) -> ServerResult<Vec<BankEntry>> {
    wrap(path, corpus::read_bank(open(path)?, &name(path)))
}

/// Bank from, in order of preference: the bank file, the corpus list, the
/// embedded fixtures.
pub fn load_bank(data: &DataSection, registry: &TopicRegistry) -> ServerResult<Vec<BankEntry>> {
    if let Some(p) = &data.bank {
        return read_bank_file(p);
    }
    if !data.corpus.is_empty() {
        return Ok(corpus::to_bank(&load_corpus(&data.corpus, registry)?));
    }
    Ok(fixtures::bank())
}

pub fn read_index_file(path: &Path) -> ServerResult<InvertedIndex> {
    wrap(path, InvertedIndex::read_snapshot(open(path)?))
}

pub fn load_index(data: &DataSection, registry: &TopicRegistry) -> ServerResult<InvertedIndex> {
    match &data.index {
        Some(p) => read_index_file(p),
        None => {
            let bank = load_bank(data, registry)?;
            InvertedIndex::build(bank, load_lexicon(data)?).map_err(|e| ServerError::core("index", e))
        }
    }
}

/// Assembles an engine from the configuration.
pub fn load_engine(config: &Config) -> ServerResult<Engine> {
    let data = &config.data;
    let registry = load_registry(data)?;
    let index = load_index(data, &registry)?;

    let mut gazetteer = Gazetteer::from_registry(&registry);
    let (entities, entities_name) = match &data.entities {
        Some(p) => (read_text(p)?, name(p)),
        None => (fixtures::ENTITIES.to_string(), "entities.tsv".into()),
    };
    gazetteer
        .extend_from_reader(entities.as_bytes(), &registry, &entities_name)
        .map_err(|e| ServerError::core(entities_name, e))?;

    let rules = match &data.rules {
        Some(p) => wrap(p, RuleSet::load(open(p)?, &name(p)))?,
        None => fixtures::rules(),
    };
    let facts = match &data.facts {
        Some(p) => wrap(p, FactStore::load(open(p)?, &name(p)))?,
        None => fixtures::facts(),
    };
    let questions = match &data.questions {
        Some(p) => wrap(p, load_questions(open(p)?, &name(p), &registry))?,
        None => fixtures::questions(&registry),
    };
    let blocklist = match &data.blocklist {
        Some(p) => wrap(p, Blocklist::load(open(p)?))?,
        None => fixtures::blocklist(),
    };
    let backup = match &data.backup {
        Some(p) => fixtures::lines(&read_text(p)?),
        None => fixtures::lines(fixtures::BACKUP),
    };
    let greetings = match &data.greetings {
        Some(p) => fixtures::lines(&read_text(p)?),
        None => fixtures::lines(fixtures::GREETINGS),
    };
    let model = match &data.generator {
        Some(p) => wrap(p, NgramModel::read_snapshot(open(p)?, &name(p)))?,
        None => train_generator(&index, &config.generator)?,
    };
    let generator =
        NgramGenerator::new(model, config.sampler()).map_err(|e| ServerError::core("generator", e))?;

    Engine::new(EngineParts {
        index,
        registry,
        gazetteer,
        rules,
        facts,
        questions,
        generator: Box::new(generator),
        blocklist,
        backup,
        greetings,
        external: Box::new(NoExternalAnswer),
        config: config.engine_config(),
    })
    .map_err(|e| ServerError::core("engine", e))
}

/// Every turn is the response of exactly one bank entry, so the responses
/// are the corpus turns in order.
pub fn train_generator(index: &InvertedIndex, g: &GeneratorSection) -> ServerResult<NgramModel> {
    let turns: Vec<Vec<String>> = index.entries().map(|e| tokenize(&e.response)).collect();
    NgramModel::train_with_smoothing(&turns, g.order, g.smoothing).map_err(|e| ServerError::core("generator", e))
}
