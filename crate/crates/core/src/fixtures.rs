//! A small embedded data set: topics, a self-dialogue corpus, rules, facts,
//! proactive questions and the other lists an [`Engine`] needs. It backs the
//! demos, the CLI defaults and the scripted tests.

use crate::corpus::{self, BankEntry, SelfDialogue, TopicRegistry};
use crate::dialogue_manager::{
    load_questions, Blocklist, Component, Engine, EngineConfig, EngineParts, NoExternalAnswer,
    ProactiveQuestion,
};
use crate::error::Result;
use crate::generator::{NgramGenerator, NgramModel, SamplerConfig};
use crate::lexicon::{tokenize, IdfLexicon};
use crate::match_index::InvertedIndex;
use crate::preprocess::Gazetteer;
use crate::rules::{FactStore, RuleSet};

pub const TOPICS: &str = include_str!("../fixtures/topics.tsv");
pub const FREQUENCIES: &str = include_str!("../fixtures/frequencies.tsv");
pub const RULES: &str = include_str!("../fixtures/rules.tsv");
pub const FACTS: &str = include_str!("../fixtures/facts.tsv");
pub const ENTITIES: &str = include_str!("../fixtures/entities.tsv");
pub const BLOCKLIST: &str = include_str!("../fixtures/blocklist.txt");
pub const QUESTIONS: &str = include_str!("../fixtures/questions.tsv");
pub const BACKUP: &str = include_str!("../fixtures/backup.txt");
pub const GREETINGS: &str = include_str!("../fixtures/greetings.txt");

/// Three dialogues, ten turns, 38 whitespace-separated words.
pub const STATS_CORPUS: &str = include_str!("../fixtures/stats_fixture.txt");

/// (topic, file contents) pairs.
pub const CORPUS: &[(&str, &str)] = &[
    ("movies", include_str!("../fixtures/corpus/movies.txt")),
    ("star_wars", include_str!("../fixtures/corpus/star_wars.txt")),
    ("horror", include_str!("../fixtures/corpus/horror.txt")),
    ("music", include_str!("../fixtures/corpus/music.txt")),
    ("the_beatles", include_str!("../fixtures/corpus/the_beatles.txt")),
    ("nfl_football", include_str!("../fixtures/corpus/nfl_football.txt")),
];

/// n-gram order of the fixture generator.
pub const GENERATOR_ORDER: usize = 3;

/// Additive smoothing of the fixture generator. The corpus is tiny, so
/// add-one would flatten every distribution.
pub const GENERATOR_SMOOTHING: f64 = 1e-4;

/// A conversation exercising each stage of the queue, paired with the
/// component expected to reply. The engine must use seed [`SCRIPT_SEED`].
pub const SCRIPTED_CONVERSATION: &[(&str, Component)] = &[
    ("what is your name", Component::RuleBased),
    ("Which Star Wars movie is your favorite?", Component::MatchingScore),
    ("I love the Beatles, Abbey Road my favorite album", Component::LikesDislikes),
    ("Han Solo the coolest smuggler in the galaxy", Component::MatchingScore),
    ("purple elephants dance quietly", Component::Proactive),
    ("yes I have", Component::Proactive),
    ("is Yoda training Luke your favorite bit", Component::MatchingScore),
    ("purple elephants dance quietly", Component::Generator),
    ("let's talk about the election", Component::RuleBased),
];

pub const SCRIPT_SEED: u64 = 17;

pub fn registry() -> TopicRegistry {
    TopicRegistry::load(TOPICS.as_bytes(), "topics.tsv").expect("fixture topics parse")
}

pub fn dialogues() -> Vec<SelfDialogue> {
    let registry = registry();
    CORPUS
        .iter()
        .flat_map(|(topic, text)| {
            corpus::ingest(text.as_bytes(), topic, &registry, topic).expect("fixture corpus parses")
        })
        .collect()
}

pub fn bank() -> Vec<BankEntry> {
    corpus::to_bank(&dialogues())
}

pub fn lexicon() -> IdfLexicon {
    IdfLexicon::load_frequencies(FREQUENCIES.as_bytes(), "frequencies.tsv")
        .expect("fixture frequencies parse")
}

pub fn index() -> InvertedIndex {
    InvertedIndex::build(bank(), lexicon()).expect("fixture bank is non-empty")
}

pub fn gazetteer(registry: &TopicRegistry) -> Gazetteer {
    let mut gaz = Gazetteer::from_registry(registry);
    gaz.extend_from_reader(ENTITIES.as_bytes(), registry, "entities.tsv")
        .expect("fixture entities parse");
    gaz
}

pub fn rules() -> RuleSet {
    RuleSet::load(RULES.as_bytes(), "rules.tsv").expect("fixture rules parse")
}

pub fn facts() -> FactStore {
    FactStore::load(FACTS.as_bytes(), "facts.tsv").expect("fixture facts parse")
}

pub fn questions(registry: &TopicRegistry) -> Vec<ProactiveQuestion> {
    load_questions(QUESTIONS.as_bytes(), "questions.tsv", registry).expect("fixture questions parse")
}

pub fn blocklist() -> Blocklist {
    Blocklist::load(BLOCKLIST.as_bytes()).expect("fixture blocklist reads")
}

pub fn lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn ngram_model() -> NgramModel {
    let turns: Vec<Vec<String>> = dialogues()
        .into_iter()
        .flat_map(|d| d.turns)
        .map(|t| tokenize(&t))
        .collect();
    NgramModel::train_with_smoothing(&turns, GENERATOR_ORDER, GENERATOR_SMOOTHING)
        .expect("fixture corpus is non-empty")
}

/// All fixture parts with the given configuration.
pub fn parts(config: EngineConfig) -> EngineParts {
    let registry = registry();
    EngineParts {
        index: index(),
        gazetteer: gazetteer(&registry),
        rules: rules(),
        facts: facts(),
        questions: questions(&registry),
        generator: Box::new(
            NgramGenerator::new(ngram_model(), SamplerConfig::default()).expect("default sampler is valid"),
        ),
        blocklist: blocklist(),
        backup: lines(BACKUP),
        greetings: lines(GREETINGS),
        external: Box::new(NoExternalAnswer),
        registry,
        config,
    }
}

pub fn engine() -> Result<Engine> {
    Engine::new(parts(EngineConfig::default()))
}
