//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use common::engines::{gating_engine, rate_limit_violations, safety_run, set_confidence, GATING_SCRIPT};
use common::{generated_bank, generated_queries, relative_diff, Oracle, Query};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selftalk_core::corpus::{ingest, reconcile, stats, BankEntry};
use selftalk_core::dialogue_manager::Component;
use selftalk_core::evalkit::{
    pearson, run_evaluation, SyntheticRater, TrialConfig, GROUP_ABOVE_PRIORITY, GROUP_ABOVE_RESPOND, GROUP_ALL,
};
use selftalk_core::fixtures;
use selftalk_core::generator::{apply_temperature, sample_index, GREEDY_TEMPERATURE};
use selftalk_core::lexicon::IdfLexicon;
use selftalk_core::match_index::{score_entry, InvertedIndex, QueryContext, ScoringParams};
use selftalk_core::store::{ConversationRecord, FileStore};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn qctx(q: &Query) -> QueryContext {
    let mut c = QueryContext::new(q.q.clone()).unwrap();
    if let Some(qc) = &q.qc {
        c = c.with_previous(qc.clone());
    }
    if let Some(t) = &q.topic {
        c = c.with_topic(t.clone());
    }
    c
}

fn oracle_equivalence() -> Outcome {
    let g = generated_bank(11, 500, 0.15);
    let params = ScoringParams::default();
    let oracle = Oracle::new(&g.counts);
    let queries = generated_queries(&g, 12, 200);
    let started = Instant::now();
    let index = InvertedIndex::build(g.bank.clone(), g.lexicon()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for q in &queries {
        let got = index.query(&qctx(q), &params, 5).map_err(|e| e.to_string())?;
        let want = oracle.top_k(q, &g.bank, &params, 5, None);
        let got_ids: Vec<usize> = got.iter().map(|r| r.entry_id).collect();
        let want_ids: Vec<usize> = want.iter().map(|r| r.index).collect();
        ensure!(got_ids == want_ids, "order differs for {:?}: {got_ids:?} vs {want_ids:?}", q.q);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max(relative_diff(a.score, b.score));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(worst <= 1e-9, "max relative score difference {worst:e}");
    ensure!(secs < 10.0, "took {secs:.2} s");
    Ok(format!("500 entries, 200 queries, max rel diff {worst:.1e}, {secs:.2} s"))
}

fn worked_example() -> Outcome {
    let lexicon = IdfLexicon::from_weights(
        [("bowie", 3.0), ("favorite", 1.5), ("love", 1.0), ("i", 0.0)].map(|(w, x)| (w.to_string(), x)),
        3.0,
    );
    let entry = BankEntry {
        response: "i love bowie".into(),
        context1: Some("favorite bowie".into()),
        context2: None,
        topic: "music".into(),
        dialogue_id: "d".into(),
        turn_index: 1,
    };
    let r = score_entry(&QueryContext::new("bowie").unwrap(), &entry, &ScoringParams::default(), &lexicon);
    // closed form: q = {bowie}, c1 = {favorite, bowie}, r ∩ q = {bowie}
    let s_c = 3f64.powi(6);
    let eta = 3f64.powi(3) * (3f64.powi(6) + 1.5f64.powi(6)).sqrt();
    let s_cr = 3f64.powi(8);
    let score = (s_c + s_cr) * s_c.sqrt() / eta;
    let conf = s_c / eta;
    for (name, got, want) in [
        ("sC", r.sub.s_c, s_c),
        ("eta", r.sub.eta, eta),
        ("sCR", r.sub.s_cr, s_cr),
        ("score", r.score, score),
        ("confidence", r.confidence, conf),
    ] {
        ensure!(relative_diff(got, want) <= 1e-6, "{name}: got {got}, closed form {want}");
    }
    let quoted = [(734.676, r.sub.eta), (267.90, r.score), (0.99227, r.confidence)];
    let dev = quoted.iter().map(|(q, g)| relative_diff(*q, *g)).fold(0.0, f64::max);
    Ok(format!(
        "sC={} eta={:.5} sCR={} score={:.5} conf={:.8}; quoted rounded figures 734.676/267.90/0.99227 deviate by at most {dev:.1e}",
        r.sub.s_c, r.sub.eta, r.sub.s_cr, r.score, r.confidence
    ))
}

fn confidence_bounds() -> Outcome {
    let g = generated_bank(21, 500, 0.15);
    let lexicon = g.lexicon();
    let params = ScoringParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..10_000 {
        let e = &g.bank[rng.random_range(0..g.bank.len())];
        let other = &g.bank[rng.random_range(0..g.bank.len())];
        let q = QueryContext::new(other.response.clone()).unwrap();
        let c = score_entry(&q, e, &params, &lexicon).confidence;
        ensure!((0.0..=1.0).contains(&c), "confidence {c} out of bounds");
    }
    let mut selfs = 0;
    for e in g.bank.iter().filter(|e| e.context1.is_some()) {
        let mut words: Vec<&str> = e.context1.as_deref().unwrap().split(' ').collect();
        words.reverse();
        let q = QueryContext::new(words.join(" ")).unwrap();
        let c = score_entry(&q, e, &params, &lexicon).confidence;
        ensure!(c == 1.0, "self-match confidence {c} for {:?}", e.context1);
        selfs += 1;
    }
    Ok(format!("10000 random pairs in [0, 1]; {selfs} self-matches exactly 1"))
}

fn gating_truth_table() -> Outcome {
    let engine = gating_engine();
    let mut session = engine.start_session("g", 1);
    let mut replies = Vec::new();
    for (i, step) in GATING_SCRIPT.iter().enumerate() {
        let reply = engine.respond(&mut session, step.input).map_err(|e| e.to_string())?;
        ensure!(reply.component == step.component, "turn {} ({}): got {}", i + 1, step.branch, reply.component);
        if let Some((q, c)) = step.confidence {
            let want = set_confidence(q, c);
            ensure!(reply.confidence.is_some_and(|got| (got - want).abs() < 1e-12), "turn {} confidence {:?} vs {want}", i + 1, reply.confidence);
        }
        replies.push(reply);
    }
    ensure!(rate_limit_violations(&replies) == 0, "proactive rate limit violated in script");
    // random sessions never open two proactive exchanges within five replies
    let inputs = ["what is your name", "yes", "no", "golf", "alpha bravo", "november papa", "kilo lima mike", "zorro"];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total = 0;
    for s in 0..200 {
        let mut session = engine.start_session(format!("r{s}"), s);
        let replies: Vec<_> = (0..30)
            .map(|_| engine.respond(&mut session, inputs[rng.random_range(0..inputs.len())]).unwrap())
            .collect();
        total += rate_limit_violations(&replies);
    }
    ensure!(total == 0, "{total} rate-limit violations over random sessions");
    Ok(format!("{}/{} scripted turns agree; 0 rate-limit violations over 200 random sessions", GATING_SCRIPT.len(), GATING_SCRIPT.len()))
}

fn safety() -> Outcome {
    let run = safety_run(5);
    ensure!(run.turns == 1000 && run.blocklist.len() == 50, "run shape {} turns / {} words", run.turns, run.blocklist.len());
    ensure!(run.blocked_sources > 0, "corpus was not seeded");
    ensure!(run.leaked.is_empty(), "{} leaked replies, e.g. {:?}", run.leaked.len(), run.leaked.first());
    Ok(format!("1000 turns, 50-word blocklist, {} seeded bank responses, 0 leaks", run.blocked_sources))
}

fn eval_machinery() -> Outcome {
    let r = |xs: &[f64], ys: &[f64]| pearson(xs, ys).unwrap().unwrap();
    let up = r(&[0.1, 0.3, 0.5, 0.7, 0.9], &[1.0, 2.0, 3.0, 4.0, 5.0]);
    let down = r(&[0.1, 0.3, 0.5, 0.7, 0.9], &[5.0, 4.0, 3.0, 2.0, 1.0]);
    ensure!((up.r - 1.0).abs() < 1e-12 && (down.r + 1.0).abs() < 1e-12, "r = {} / {}", up.r, down.r);
    // Sxx = 1, Syy = 6, Sxy = 2; t = 2 with 2 degrees of freedom
    let t = r(&[0.0, 0.0, 1.0, 1.0], &[0.0, 0.0, 1.0, 3.0]);
    let want_r = 2.0 / 6f64.sqrt();
    let want_p = 1.0 - 2.0 / 6f64.sqrt();
    ensure!((t.r - want_r).abs() < 1e-12, "fixture r {} vs {want_r}", t.r);
    ensure!(t.p.is_some_and(|p| (p - want_p).abs() < 1e-9), "fixture p {:?} vs {want_p}", t.p);

    let g = generated_bank(41, 500, 0.35);
    let index = InvertedIndex::build(g.bank.clone(), g.lexicon()).map_err(|e| e.to_string())?;
    let mut rater = SyntheticRater::new(&g.bank, g.lexicon(), 0.5, ChaCha8Rng::seed_from_u64(7)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let report = run_evaluation(&index, &ScoringParams::default(), &TrialConfig::default(), 200, &mut rater, &mut rng)
        .map_err(|e| e.to_string())?;
    let c = report.correlation.ok_or("correlation undefined")?;
    let p = c.p.ok_or("p undefined")?;
    ensure!(c.r > 0.0 && p < 0.01, "synthetic r = {}, p = {p}", c.r);
    let mean = |name| report.group(name).and_then(|g| g.mean).unwrap_or(f64::NAN);
    let (all, above5, above7) = (mean(GROUP_ALL), mean(GROUP_ABOVE_RESPOND), mean(GROUP_ABOVE_PRIORITY));
    ensure!(all <= above5 && above5 <= above7, "bucket means not monotone: {all} {above5} {above7}");
    Ok(format!(
        "r=±1 exact, fixture r={:.6} p={:.6}; synthetic n={} r={:.3} p={p:.1e}; means {all:.2} <= {above5:.2} <= {above7:.2}",
        t.r, t.p.unwrap(), c.n, c.r
    ))
}

fn generator_temperature() -> Outcome {
    let probs = [0.8, 0.2];
    let a = 0.8f64.powf(1.0 / 0.7);
    let closed = a / (a + 0.2f64.powf(1.0 / 0.7));
    ensure!((apply_temperature(&probs, 0.7)[0] - closed).abs() < 1e-12, "adjusted distribution differs");
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = 200_000;
    let hits = (0..draws).filter(|_| sample_index(&probs, 0.7, &mut rng) == 0).count();
    let freq = hits as f64 / draws as f64;
    ensure!(relative_diff(freq, closed) <= 0.02, "frequency {freq} vs {closed}");
    for t in [GREEDY_TEMPERATURE / 2.0, 1e-6] {
        for dist in [&[0.3f64, 0.45, 0.25][..], &[0.51f64, 0.49][..]] {
            let argmax = dist.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
            ensure!((0..2000).all(|_| sample_index(dist, t, &mut rng) == argmax), "T={t} is not greedy");
        }
    }
    Ok(format!(
        "T=0.7 frequency {freq:.4} vs closed form {closed:.6} (quoted 0.917 deviates by {:.1}%); T<1e-3 greedy",
        100.0 * relative_diff(0.917, closed)
    ))
}

fn corpus_stats() -> Outcome {
    let registry = fixtures::registry();
    let dialogues = ingest(fixtures::STATS_CORPUS.as_bytes(), "music", &registry, "stats").map_err(|e| e.to_string())?;
    let s = stats(&dialogues);
    let got = (s.totals.conversations, s.totals.turns, s.totals.words);
    ensure!(got == (3, 10, 38), "fixture counts {got:?}, hand counts (3, 10, 38)");
    let Ok(dir) = std::env::var("SELFTALK_CORPUS_DIR") else {
        return Ok("fixture 3/10/38 matches; SELFTALK_CORPUS_DIR unset, released corpus not reconciled".into());
    };
    let mut all = Vec::new();
    for entry in std::fs::read_dir(&dir).map_err(|e| format!("{dir}: {e}"))? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let topic = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
        if registry.contains(&topic) {
            let file = std::io::BufReader::new(std::fs::File::open(&path).map_err(|e| e.to_string())?);
            all.extend(ingest(file, &topic, &registry, &path.display().to_string()).map_err(|e| e.to_string())?);
        }
    }
    let rows = reconcile(&stats(&all));
    for row in &rows {
        println!("      reconcile {}: published {:?} observed {:?}", row.topic, row.published, row.observed);
    }
    let differing = rows.iter().filter(|r| !r.matches()).count();
    Ok(format!("fixture 3/10/38 matches; {} topic rows reconciled, {differing} discrepancies reported", rows.len()))
}

fn service_contract() -> Outcome {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let store = Arc::new(FileStore::open(dir.path()).map_err(|e| e.to_string())?);
        let app = support::fixture_app(store);
        let engine = fixtures::engine().map_err(|e| e.to_string())?;
        let mut local = engine.start_session("local", fixtures::SCRIPT_SEED);
        let s = support::create(&app).await;
        let mut http = Vec::new();
        let mut in_process = Vec::new();
        for (utterance, _) in fixtures::SCRIPTED_CONVERSATION {
            http.push(support::message(&app, &s.session_id, utterance).await.component);
            in_process.push(engine.respond(&mut local, utterance).map_err(|e| e.to_string())?.component);
        }
        let expected: Vec<Component> = fixtures::SCRIPTED_CONVERSATION.iter().map(|(_, c)| *c).collect();
        ensure!(http == in_process && http == expected, "service {http:?} vs in-process {in_process:?}");

        let (_, bytes) = support::transcript(&app, &s.session_id).await;
        let record: ConversationRecord = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
        ensure!(record.turns.len() == 1 + 2 * expected.len(), "{} transcript turns", record.turns.len());
        let reencoded = serde_json::to_vec(&record).map_err(|e| e.to_string())?;
        let reopened = FileStore::open(dir.path())
            .and_then(|st| selftalk_core::store::Store::load_session(&st, &s.session_id))
            .map_err(|e| e.to_string())?;
        let reread = serde_json::to_vec(&reopened).map_err(|e| e.to_string())?;
        ensure!(reencoded == bytes && reread == bytes, "transcript bytes differ after round trip");
        Ok(format!("{} scripted turns agree over HTTP; {}-byte transcript round-trips identically", expected.len(), bytes.len()))
    })
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("scoring-oracle-equivalence", oracle_equivalence),
        ("worked-example", worked_example),
        ("confidence-bounds-and-self-match", confidence_bounds),
        ("gating-truth-table", gating_truth_table),
        ("safety", safety),
        ("eval-machinery", eval_machinery),
        ("generator-temperature", generator_temperature),
        ("corpus-stats", corpus_stats),
        ("service-contract", service_contract),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
