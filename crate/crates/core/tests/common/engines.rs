//! Purpose-built engines for tracing the reply queue by hand.

use std::collections::HashSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selftalk_core::corpus::{to_bank, SelfDialogue, TopicRegistry};
use selftalk_core::dialogue_manager::{
    Blocklist, Component, ComponentReply, Engine, EngineConfig, EngineParts, ExternalAnswerer,
    FollowUps, NoExternalAnswer, ProactiveQuestion, QuestionKind, ReplyMeta,
};
use selftalk_core::generator::{Generator, NgramGenerator, NgramModel, SamplerConfig};
use selftalk_core::lexicon::IdfLexicon;
use selftalk_core::match_index::InvertedIndex;
use selftalk_core::preprocess::{EntityClass, Gazetteer, GazetteerEntry};
use selftalk_core::rules::{EntityFact, FactStore, RuleSet};

use super::generated_bank;

/// Returns a blocklisted text whenever the user mentions "kilo".
pub struct ScriptedGenerator;

impl Generator for ScriptedGenerator {
    fn generate(&self, user: &str, _agent: Option<&str>, _rng: &mut dyn RngCore) -> String {
        if user.contains("kilo") {
            "a badword appears".into()
        } else {
            "generated filler".into()
        }
    }
}

pub struct WhoAnswers;

impl ExternalAnswerer for WhoAnswers {
    fn answer(&self, question: &str) -> Option<String> {
        question.starts_with("who").then(|| "An external answer.".into())
    }
}

fn dialogue(id: &str, turns: &[&str]) -> SelfDialogue {
    SelfDialogue {
        id: id.into(),
        topic: "movies".into(),
        turns: turns.iter().map(|t| t.to_string()).collect(),
        worker: None,
    }
}

/// Every word weighs the same, so confidence is |q ∩ c| / sqrt(|q| |c|).
pub fn gating_parts() -> EngineParts {
    let registry = TopicRegistry::load("movies\nmusic\n".as_bytes(), "topics").unwrap();
    let bank = to_bank(&[
        dialogue("d1", &["what is your name", "my name lives in the bank"]),
        dialogue("d2", &["alpha bravo charlie", "response one"]),
        dialogue("d3", &["november oscar", "response two"]),
        dialogue("d4", &["kilo lima mike", "this has badword inside"]),
    ]);
    let lexicon = IdfLexicon::from_weights(std::iter::empty::<(String, f64)>(), 2.0);
    let mut gazetteer = Gazetteer::from_registry(&registry);
    gazetteer.insert(
        "zorro",
        GazetteerEntry {
            canonical: "Zorro".into(),
            topic: "movies".into(),
            class: EntityClass::Male,
        },
    );
    let mut facts = FactStore::default();
    facts.insert(EntityFact {
        canonical: "Zorro".into(),
        blurb: "Zorro is a masked actor.".into(),
        popularity: 100,
        domain: "actor".into(),
    });
    EngineParts {
        index: InvertedIndex::build(bank, lexicon).unwrap(),
        gazetteer,
        rules: RuleSet::load("what is your name\tidentity\tI am the test bot.\n".as_bytes(), "rules").unwrap(),
        facts,
        questions: vec![
            ProactiveQuestion {
                id: "qa".into(),
                kind: QuestionKind::YesNoGauge,
                topic: "movies".into(),
                text: "Do you like films?".into(),
                follow_ups: Some(FollowUps {
                    yes: "Glad to hear it.".into(),
                    no: "Fair enough.".into(),
                }),
            },
            ProactiveQuestion {
                id: "qb".into(),
                kind: QuestionKind::EntityProbe,
                topic: "music".into(),
                text: "Which band do you like?".into(),
                follow_ups: None,
            },
        ],
        generator: Box::new(ScriptedGenerator),
        blocklist: Blocklist::new(["badword"]),
        backup: vec!["Backup fact one.".into(), "Backup fact two.".into()],
        greetings: vec!["Hello.".into()],
        external: Box::new(NoExternalAnswer),
        registry,
        config: EngineConfig::default(),
    }
}

pub fn gating_engine() -> Engine {
    Engine::new(gating_parts()).unwrap()
}

/// Expected confidence for a set-overlap query against a context.
pub fn set_confidence(q: &str, c: &str) -> f64 {
    let q: HashSet<&str> = q.split(' ').collect();
    let c: HashSet<&str> = c.split(' ').collect();
    q.intersection(&c).count() as f64 / ((q.len() * c.len()) as f64).sqrt()
}

pub struct Step {
    pub input: &'static str,
    pub component: Component,
    /// (query, context) whose set confidence the reply must carry.
    pub confidence: Option<(&'static str, &'static str)>,
    pub branch: &'static str,
}

/// Hand-traced with proactive interval 5 and the session starting eligible
/// for a question.
pub const GATING_SCRIPT: &[Step] = &[
    Step { input: "what is your name", component: Component::RuleBased, confidence: None, branch: "rule beats a confidence-1 match" },
    Step { input: "alpha bravo charlie zorro", component: Component::MatchingScore, confidence: Some(("alpha bravo charlie zorro", "alpha bravo charlie")), branch: "0.866 pre-empts likes/dislikes" },
    Step { input: "alpha bravo zorro", component: Component::LikesDislikes, confidence: None, branch: "likes/dislikes beats 0.667" },
    Step { input: "alpha bravo delta", component: Component::MatchingScore, confidence: Some(("alpha bravo delta", "alpha bravo charlie")), branch: "0.667 replies when nothing pre-empts" },
    Step { input: "november papa", component: Component::MatchingScore, confidence: Some(("november papa", "november oscar")), branch: "0.5 floor is inclusive" },
    Step { input: "alpha echo foxtrot", component: Component::Proactive, confidence: None, branch: "0.333 falls to a due question" },
    Step { input: "yes", component: Component::Proactive, confidence: None, branch: "yes/no follow-up" },
    Step { input: "golf hotel", component: Component::Generator, confidence: None, branch: "generator while questions are rate-limited" },
    Step { input: "golf hotel", component: Component::Generator, confidence: None, branch: "generator" },
    Step { input: "india juliet", component: Component::Generator, confidence: None, branch: "generator" },
    Step { input: "golf", component: Component::Generator, confidence: None, branch: "generator" },
    Step { input: "alpha echo foxtrot", component: Component::Generator, confidence: None, branch: "question not yet due after four replies" },
    Step { input: "hotel", component: Component::Proactive, confidence: None, branch: "question due after five replies" },
    Step { input: "kilo lima mike", component: Component::Backup, confidence: None, branch: "backup after every text is blocklisted" },
    Step { input: "november oscar zorro", component: Component::MatchingScore, confidence: Some(("november oscar zorro", "november oscar")), branch: "0.816 pre-empts likes/dislikes" },
];

/// Windows of five consecutive replies holding more than one proactive
/// exchange. A follow-up directly answering the question before it belongs
/// to that question's exchange; any other proactive reply opens one.
pub fn rate_limit_violations(replies: &[ComponentReply]) -> usize {
    let opens: Vec<bool> = replies
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let answers_previous = match (&r.meta, i.checked_sub(1).map(|j| &replies[j].meta)) {
                (ReplyMeta::FollowUp { question_id }, Some(ReplyMeta::Question { id })) => question_id == id,
                _ => false,
            };
            r.component == Component::Proactive && !answers_previous
        })
        .collect();
    opens
        .windows(5.min(opens.len().max(1)))
        .filter(|w| w.iter().filter(|&&o| o).count() > 1)
        .count()
}

pub struct SafetyRun {
    pub turns: usize,
    pub leaked: Vec<String>,
    pub blocklist: Vec<String>,
    pub blocked_sources: usize,
}

/// Independent tokenisation: lowercase runs of letters and digits.
pub fn plain_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// 1,000 turns against an engine whose corpus, rules, facts, questions and
/// generator are all seeded with 50 blocklisted words.
pub fn safety_run(seed: u64) -> SafetyRun {
    let g = generated_bank(seed, 600, 0.2);
    let blocked: Vec<String> = g.vocab[5..55].to_vec();
    let registry = TopicRegistry::load("movies\nmusic\nnfl football\n".as_bytes(), "topics").unwrap();
    let b = |i: usize| blocked[i].as_str();

    let rules = format!(
        "hello\tengagement\thello {}|hello there\n* {} *\tengagement\tyou said {}\n",
        b(0),
        b(1),
        b(2)
    );
    let mut gazetteer = Gazetteer::from_registry(&registry);
    let mut facts = FactStore::default();
    for (i, name) in g.vocab[..5].iter().enumerate() {
        gazetteer.insert(
            name,
            GazetteerEntry {
                canonical: name.clone(),
                topic: "music".into(),
                class: EntityClass::Plural,
            },
        );
        facts.insert(EntityFact {
            canonical: name.clone(),
            blurb: if i % 2 == 0 { format!("{name} are a band who love {}.", b(3 + i)) } else { format!("{name} are a band.") },
            popularity: 50_000,
            domain: "band".into(),
        });
    }
    let questions = (0..6)
        .map(|i| ProactiveQuestion {
            id: format!("q{i}"),
            kind: QuestionKind::YesNoGauge,
            topic: "music".into(),
            text: if i % 2 == 0 { format!("Do you like {}?", b(10 + i)) } else { "Do you like music?".into() },
            follow_ups: Some(FollowUps {
                yes: format!("Great, {} too.", b(20 + i)),
                no: "Okay.".into(),
            }),
        })
        .collect();
    let turns: Vec<Vec<String>> = g.dialogues.iter().flat_map(|d| d.turns.iter().map(|t| plain_tokens(t))).collect();
    let model = NgramModel::train_with_smoothing(&turns, 2, 0.01).unwrap();
    let blocklist = Blocklist::new(&blocked);
    let parts = EngineParts {
        index: InvertedIndex::build(g.bank.clone(), g.lexicon()).unwrap(),
        gazetteer,
        rules: RuleSet::load(rules.as_bytes(), "rules").unwrap(),
        facts,
        questions,
        generator: Box::new(NgramGenerator::new(model, SamplerConfig::default()).unwrap()),
        blocklist,
        backup: vec!["A clean fallback.".into()],
        greetings: vec!["Hi.".into()],
        external: Box::new(NoExternalAnswer),
        registry,
        config: EngineConfig::default(),
    };
    let blocked_sources = g
        .bank
        .iter()
        .filter(|e| plain_tokens(&e.response).iter().any(|t| blocked.contains(t)))
        .count();
    let engine = Engine::new(parts).unwrap();

    let block_set: HashSet<&String> = blocked.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5afe);
    let mut leaked = Vec::new();
    let mut turns = 0;
    for s in 0..20 {
        let mut session = engine.start_session(format!("s{s}"), seed + s);
        for _ in 0..50 {
            let input = match rng.random_range(0..5) {
                0 => "hello".to_string(),
                1 => "yes".to_string(),
                2 => format!("i like {}", g.vocab[rng.random_range(0..5)]),
                _ => {
                    let d = &g.dialogues[rng.random_range(0..g.dialogues.len())];
                    d.turns[rng.random_range(0..d.turns.len())].clone()
                }
            };
            let reply = engine.respond(&mut session, &input).unwrap();
            turns += 1;
            if plain_tokens(&reply.text).iter().any(|t| block_set.contains(t)) || reply.text.trim().is_empty() {
                leaked.push(reply.text);
            }
        }
    }
    SafetyRun {
        turns,
        leaked,
        blocklist: blocked,
        blocked_sources,
    }
}

pub fn external_engine() -> Engine {
    let mut parts = gating_parts();
    parts.external = Box::new(WhoAnswers);
    Engine::new(parts).unwrap()
}
