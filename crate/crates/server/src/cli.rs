//! The `selftalk` command line.

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selftalk_core::corpus::{self, reconcile, stats};
use selftalk_core::dialogue_manager::{usage_report, Component, ComponentReply};
use selftalk_core::evalkit::{run_evaluation, InteractiveRater, Rater, SyntheticRater, TrialConfig};
use selftalk_core::match_index::InvertedIndex;
use selftalk_core::store::{FileStore, MemoryStore, SessionFilter, Store};

use crate::app::{router, AppState};
use crate::config::{self, Config, CorpusFile};
use crate::error::{ServerError, ServerResult};

#[derive(Debug, Parser)]
#[command(name = "selftalk", version, about = "Retrieval-first chat engine over self-dialogue corpora")]
pub struct Cli {
    /// TOML config file; embedded fixture data fills anything it omits.
    #[arg(long, short, global = true, env = "SELFTALK_CONFIG")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse corpus files into a bank file and print corpus statistics.
    Ingest(IngestArgs),
    /// Build an index snapshot from a bank file.
    BuildIndex(BuildIndexArgs),
    /// Chat with the engine on the terminal.
    Chat(ChatArgs),
    /// Run the retrieval evaluation protocol.
    Eval(EvalArgs),
    /// Print the share of replies per component over stored sessions.
    Report(ReportArgs),
    /// Run the HTTP service.
    Serve,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus file as TOPIC=PATH; repeatable. Defaults to the config's corpus list.
    #[arg(long = "corpus", value_name = "TOPIC=PATH", value_parser = parse_corpus_arg)]
    pub corpus: Vec<CorpusFile>,
    /// Where to write the bank file.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    /// Bank file from `ingest`; defaults to the config's bank or corpus.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// `word<TAB>count` frequency file; defaults to the config's.
    #[arg(long)]
    pub frequencies: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Also write the n-gram generator trained on the bank responses.
    #[arg(long)]
    pub generator_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Index snapshot to chat over.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Session seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Index snapshot to evaluate.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Rate on the terminal instead of with the synthetic rater.
    #[arg(long)]
    pub interactive: bool,
    /// Gaussian noise of the synthetic rater.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Chance of presenting a retrieved response rather than the true one.
    #[arg(long)]
    pub match_probability: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Session record directory; defaults to the config's store.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Only sessions whose final topic is this label.
    #[arg(long)]
    pub topic: Option<String>,
}

fn parse_corpus_arg(s: &str) -> Result<CorpusFile, String> {
    let (topic, path) = s.split_once('=').ok_or("expected TOPIC=PATH")?;
    if topic.is_empty() || path.is_empty() {
        return Err("expected TOPIC=PATH".into());
    }
    Ok(CorpusFile {
        topic: topic.into(),
        path: path.into(),
    })
}

/// Loads the config file, if any, then applies environment overrides.
pub fn resolve_config(path: Option<&Path>) -> ServerResult<Config> {
    let mut config = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    config.apply_env(|k| std::env::var(k).ok())?;
    Ok(config)
}

pub fn run(cli: Cli) -> ServerResult<()> {
    let mut config = resolve_config(cli.config.as_deref())?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Ingest(args) => ingest(&config, args, &mut out),
        Command::BuildIndex(args) => build_index(&config, args, &mut out),
        Command::Chat(args) => {
            if args.index.is_some() {
                config.data.index = args.index;
            }
            let seed = args.seed.or(config.session.seed).unwrap_or_else(rand::random);
            chat(&config, seed, io::stdin().lock(), &mut out)
        }
        Command::Eval(args) => {
            if args.index.is_some() {
                config.data.index = args.index.clone();
            }
            eval(&config, &args, &mut out)
        }
        Command::Report(args) => report(&config, args, &mut out),
        Command::Serve => serve(config),
    }
}

fn write_err(e: io::Error) -> ServerError {
    ServerError::io("<stdout>", e)
}

fn create(path: &Path) -> ServerResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ServerError::io(path, e))
}

fn ingest(config: &Config, args: IngestArgs, out: &mut impl Write) -> ServerResult<()> {
    let files = if args.corpus.is_empty() { config.data.corpus.clone() } else { args.corpus };
    if files.is_empty() {
        return Err(ServerError::Usage("no corpus files: pass --corpus TOPIC=PATH or set [[data.corpus]]".into()));
    }
    let registry = config::load_registry(&config.data)?;
    let dialogues = config::load_corpus(&files, &registry)?;
    let bank = corpus::to_bank(&dialogues);
    corpus::write_bank(&bank, create(&args.out)?).map_err(|e| ServerError::core(args.out.display().to_string(), e))?;

    let s = stats(&dialogues);
    let w = |out: &mut dyn Write, line: String| writeln!(out, "{line}").map_err(write_err);
    w(out, format!("{:<20} {:>13} {:>10} {:>8}", "topic", "conversations", "words", "turns"))?;
    for (topic, c) in &s.per_topic {
        w(out, format!("{topic:<20} {:>13} {:>10} {:>8}", c.conversations, c.words, c.turns))?;
    }
    let t = s.totals;
    w(out, format!("{:<20} {:>13} {:>10} {:>8}", "total", t.conversations, t.words, t.turns))?;
    for row in reconcile(&s) {
        let status = match (&row.published, row.matches()) {
            (None, _) => "unpublished".to_string(),
            (Some(_), true) => "matches published counts".to_string(),
            (Some(p), false) => format!(
                "DIFFERS from published {} / {} / {}",
                p.conversations, p.words, p.turns
            ),
        };
        w(out, format!("reconcile {}: {status}", row.topic))?;
    }
    w(out, format!("wrote {} bank entries to {}", bank.len(), args.out.display()))
}

fn build_index(config: &Config, args: BuildIndexArgs, out: &mut impl Write) -> ServerResult<()> {
    let mut data = config.data.clone();
    if args.bank.is_some() {
        data.bank = args.bank;
    }
    if args.frequencies.is_some() {
        data.frequencies = args.frequencies;
    }
    let registry = config::load_registry(&data)?;
    let bank = config::load_bank(&data, &registry)?;
    let index = InvertedIndex::build(bank, config::load_lexicon(&data)?).map_err(|e| ServerError::core("index", e))?;
    index
        .write_snapshot(create(&args.out)?)
        .map_err(|e| ServerError::core(args.out.display().to_string(), e))?;
    writeln!(out, "indexed {} entries into {}", index.len(), args.out.display()).map_err(write_err)?;
    if let Some(path) = &args.generator_out {
        config::train_generator(&index, &config.generator)?
            .write_snapshot(create(path)?)
            .map_err(|e| ServerError::core(path.display().to_string(), e))?;
        writeln!(out, "wrote generator model to {}", path.display()).map_err(write_err)?;
    }
    Ok(())
}

fn open_store(config: &Config) -> ServerResult<Arc<dyn Store>> {
    Ok(match &config.store.dir {
        Some(dir) => Arc::new(FileStore::open(dir).map_err(|e| ServerError::core(dir.display().to_string(), e))?),
        None => Arc::new(MemoryStore::new()),
    })
}

/// `[component confidence] text`, confidence only on matching-score replies.
pub fn format_reply(reply: &ComponentReply) -> String {
    match (reply.component, reply.confidence) {
        (Component::MatchingScore, Some(c)) => format!("[{} {c:.2}] {}", reply.component.tag(), reply.text),
        (c, _) => format!("[{}] {}", c.tag(), reply.text),
    }
}

/// Line-by-line chat until end of input or `/quit`.
pub fn chat(config: &Config, seed: u64, input: impl BufRead, out: &mut impl Write) -> ServerResult<()> {
    let engine = config::load_engine(config)?;
    let store = open_store(config)?;
    let id = uuid::Uuid::new_v4().to_string();
    let mut session = engine.start_session(id.clone(), seed);
    let save = |session: &selftalk_core::dialogue_manager::SessionState, from: usize| {
        store
            .save_turns(&id, &session.turn_records(from))
            .map_err(|e| ServerError::core("store", e))
    };
    save(&session, 0)?;
    writeln!(out, "[{}] {}", Component::StartMessage.tag(), session.transcript[0].raw).map_err(write_err)?;
    for line in input.lines() {
        let line = line.map_err(|e| ServerError::io("<stdin>", e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "/quit" {
            break;
        }
        let from = session.transcript.len();
        let reply = engine
            .respond(&mut session, line)
            .map_err(|e| ServerError::core("respond", e))?;
        save(&session, from)?;
        writeln!(out, "{}", format_reply(&reply)).map_err(write_err)?;
    }
    Ok(())
}

fn eval(config: &Config, args: &EvalArgs, out: &mut impl Write) -> ServerResult<()> {
    if args.trials < 2 {
        return Err(ServerError::Usage("--trials must be at least 2".into()));
    }
    let registry = config::load_registry(&config.data)?;
    let index = config::load_index(&config.data, &registry)?;
    let mut trial_config = TrialConfig::default();
    if let Some(p) = args.match_probability {
        trial_config.match_probability = p;
    }
    trial_config.validate().map_err(|e| ServerError::Usage(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
    let bank: Vec<_> = index.entries().cloned().collect();
    let mut rater: Box<dyn Rater> = if args.interactive {
        Box::new(InteractiveRater::new(io::stdin().lock(), io::stderr()))
    } else {
        Box::new(
            SyntheticRater::new(&bank, index.lexicon().clone(), args.noise, ChaCha8Rng::seed_from_u64(args.seed))
                .map_err(|e| ServerError::Usage(e.to_string()))?,
        )
    };
    let report = run_evaluation(&index, &config.scoring, &trial_config, args.trials, rater.as_mut(), &mut rng)
        .map_err(|e| ServerError::core("eval", e))?;
    writeln!(out, "{report}").map_err(write_err)?;
    for line in report.machine_lines() {
        writeln!(out, "{line}").map_err(write_err)?;
    }
    Ok(())
}

fn report(config: &Config, args: ReportArgs, out: &mut impl Write) -> ServerResult<()> {
    let dir = args
        .store
        .or_else(|| config.store.dir.clone())
        .ok_or_else(|| ServerError::Usage("no store: pass --store DIR or set [store] dir".into()))?;
    if !dir.is_dir() {
        return Err(ServerError::io(&dir, io::Error::new(io::ErrorKind::NotFound, "no such directory")));
    }
    let store = FileStore::open(&dir).map_err(|e| ServerError::core(dir.display().to_string(), e))?;
    let filter = SessionFilter { topic: args.topic };
    let ids = store.list_sessions(&filter).map_err(|e| ServerError::core("store", e))?;
    let records = ids
        .iter()
        .map(|id| store.load_session(id))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ServerError::core("store", e))?;
    if records.is_empty() && filter.topic.is_some() {
        return writeln!(out, "sessions: 0").map_err(write_err);
    }
    let usage = usage_report(&records).map_err(|e| ServerError::core(dir.display().to_string(), e))?;
    writeln!(out, "sessions: {}\n{usage}", records.len()).map_err(write_err)
}

fn serve(config: Config) -> ServerResult<()> {
    let engine = Arc::new(config::load_engine(&config)?);
    let store = open_store(&config)?;
    let state = Arc::new(AppState::new(engine, store.clone(), config.session.seed));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", config.server.host, config.server.port);
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(shutdown_signal())
            .await
    })?;
    store.close();
    Ok(())
}

/// Ctrl-C anywhere, or SIGTERM on Unix.
async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {}
        _ = terminate => {}
    }
    eprintln!("shutting down");
}
