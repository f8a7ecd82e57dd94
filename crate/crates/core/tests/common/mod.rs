//! Shared test support: a seeded synthetic bank and a brute-force scorer
//! written from the scoring formula without touching the crate's vectors or
//! index.
#![allow(dead_code)]

pub mod engines;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selftalk_core::corpus::{to_bank, BankEntry, SelfDialogue};
use selftalk_core::lexicon::{IdfLexicon, LexiconOptions};
use selftalk_core::match_index::ScoringParams;

pub const TOPICS: &[&str] = &["movies", "music", "nfl_football"];

pub struct Generated {
    pub dialogues: Vec<SelfDialogue>,
    pub bank: Vec<BankEntry>,
    /// Frequency counts; words past `counts.len()` in `vocab` are unseen.
    pub counts: Vec<(String, u64)>,
    pub vocab: Vec<String>,
}

impl Generated {
    pub fn lexicon(&self) -> IdfLexicon {
        IdfLexicon::from_counts(self.counts.clone(), LexiconOptions::default())
    }
}

fn vocabulary(size: usize) -> Vec<String> {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
    let mut out = Vec::new();
    'outer: for o1 in ONSETS {
        for v1 in VOWELS {
            for o2 in ONSETS {
                for v2 in VOWELS {
                    out.push(format!("{o1}{v1}{o2}{v2}"));
                    if out.len() == size {
                        break 'outer;
                    }
                }
            }
        }
    }
    out
}

/// `entries` bank entries from seeded dialogues over a Zipf-like vocabulary.
/// With `paraphrase` > 0, turns are sometimes copied from earlier dialogues
/// with one word changed, so near-duplicate contexts exist.
pub fn generated_bank(seed: u64, entries: usize, paraphrase: f64) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary(140);
    let known = 110;
    let counts: Vec<(String, u64)> = vocab[..known]
        .iter()
        .enumerate()
        .map(|(r, w)| (w.clone(), 1_000_000 / (r as u64 + 1) + 7))
        .collect();
    let weights: Vec<f64> = (0..vocab.len()).map(|r| 1.0 / (r as f64 + 2.0).powf(0.8)).collect();
    let zipf = WeightedIndex::new(&weights).unwrap();

    let mut dialogues: Vec<SelfDialogue> = Vec::new();
    let mut produced = 0;
    while produced < entries {
        let n_turns = rng.random_range(4..=8);
        let mut turns: Vec<String> = Vec::new();
        for _ in 0..n_turns {
            let copy = !dialogues.is_empty() && rng.random::<f64>() < paraphrase;
            let turn = if copy {
                let d = &dialogues[rng.random_range(0..dialogues.len())];
                let mut words: Vec<String> = d.turns[rng.random_range(0..d.turns.len())]
                    .split(' ')
                    .map(str::to_string)
                    .collect();
                let at = rng.random_range(0..words.len());
                words[at] = vocab[zipf.sample(&mut rng)].clone();
                words.join(" ")
            } else {
                let len = rng.random_range(3..=9);
                (0..len)
                    .map(|_| vocab[zipf.sample(&mut rng)].as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            turns.push(turn);
        }
        produced += turns.len();
        dialogues.push(SelfDialogue {
            id: format!("gen-{:04}", dialogues.len()),
            topic: TOPICS[rng.random_range(0..TOPICS.len())].to_string(),
            turns,
            worker: None,
        });
    }
    let mut bank = to_bank(&dialogues);
    bank.truncate(entries);
    Generated {
        dialogues,
        bank,
        counts,
        vocab,
    }
}

pub struct Query {
    pub q: String,
    pub qc: Option<String>,
    pub topic: Option<String>,
}

/// A mix of fresh word strings, perturbed and exact context copies, and
/// response copies, with optional previous turn and topic.
pub fn generated_queries(g: &Generated, seed: u64, n: usize) -> Vec<Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let e = &g.bank[rng.random_range(0..g.bank.len())];
            let q = match i % 4 {
                0 => (0..rng.random_range(1..=6))
                    .map(|_| g.vocab[rng.random_range(0..g.vocab.len())].as_str())
                    .collect::<Vec<_>>()
                    .join(" "),
                1 => e.context1.clone().unwrap_or_else(|| e.response.clone()),
                2 => {
                    let mut words: Vec<&str> = e.response.split(' ').collect();
                    words.push(&g.vocab[rng.random_range(0..g.vocab.len())]);
                    let last = words.len() - 1;
                    words.swap(0, last);
                    words.join(" ")
                }
                _ => e.response.clone(),
            };
            let qc = rng
                .random_bool(0.6)
                .then(|| g.bank[rng.random_range(0..g.bank.len())].response.clone());
            let topic = rng
                .random_bool(0.5)
                .then(|| TOPICS[rng.random_range(0..TOPICS.len())].to_string());
            Query { q, qc, topic }
        })
        .collect()
}

/// Scores straight from the formula over word sets. Generated text is
/// lowercase words separated by single spaces, so splitting on whitespace is
/// the whole tokenizer.
pub struct Oracle {
    idf: HashMap<String, f64>,
    oov: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub index: usize,
    pub score: f64,
    pub confidence: f64,
}

fn words(text: &str) -> BTreeSet<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

impl Oracle {
    pub fn new(counts: &[(String, u64)]) -> Self {
        let total: u64 = counts.iter().map(|(_, c)| c).sum();
        let n = total as f64;
        Self {
            idf: counts
                .iter()
                .map(|(w, c)| (w.clone(), (n / *c as f64).ln()))
                .collect(),
            oov: n.ln(),
        }
    }

    fn weight(&self, w: &str) -> f64 {
        *self.idf.get(w).unwrap_or(&self.oov)
    }

    /// Sum over shared words of weight^power.
    fn overlap(&self, a: &BTreeSet<String>, b: &BTreeSet<String>, power: i32) -> f64 {
        a.intersection(b).map(|w| self.weight(w).powi(power)).sum()
    }

    pub fn score(&self, q: &Query, e: &BankEntry, p: &ScoringParams) -> (f64, f64) {
        let qw = words(&q.q);
        let c1 = e.context1.as_deref().map(words).unwrap_or_default();
        let r = words(&e.response);
        let s_c = self.overlap(&qw, &c1, 6);
        let eta = (self.overlap(&qw, &qw, 6) * self.overlap(&c1, &c1, 6)).sqrt();
        let s_cr = self.overlap(&qw, &r, 8);
        let s_2cq = match (&q.qc, &e.context2) {
            (Some(qc), Some(c2)) => self.overlap(&words(qc), &words(c2), 2),
            _ => 0.0,
        };
        let (mut score, confidence) = if eta > 0.0 {
            ((s_c + s_cr) * s_c.powf(p.n) / eta + p.lambda * s_2cq, (s_c / eta).min(1.0))
        } else {
            (p.lambda * s_2cq, 0.0)
        };
        if q.topic.as_deref() == Some(e.topic.as_str()) {
            score *= p.topic_bonus;
        }
        (score, confidence)
    }

    fn response_norm(&self, e: &BankEntry) -> f64 {
        let r = words(&e.response);
        self.overlap(&r, &r, 8).sqrt()
    }

    /// Scores every entry, keeps positives, ranks with near-tie grouping.
    pub fn top_k(&self, q: &Query, bank: &[BankEntry], p: &ScoringParams, k: usize, exclude: Option<usize>) -> Vec<OracleResult> {
        let mut all: Vec<OracleResult> = bank
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(index, e)| {
                let (score, confidence) = self.score(q, e, p);
                OracleResult { index, score, confidence }
            })
            .filter(|r| r.score > 0.0)
            .collect();
        let ident = |a: &OracleResult, b: &OracleResult| {
            let (ea, eb) = (&bank[a.index], &bank[b.index]);
            (&ea.dialogue_id, ea.turn_index).cmp(&(&eb.dialogue_id, eb.turn_index))
        };
        all.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then_with(|| ident(a, b)));
        let mut ranked = Vec::new();
        let mut rest = all.as_slice();
        while let Some(lead) = rest.first() {
            let len = rest
                .iter()
                .take_while(|r| lead.score - r.score <= p.near_tie_rel * lead.score.abs())
                .count();
            let mut group = rest[..len].to_vec();
            group.sort_by(|a, b| {
                self.response_norm(&bank[b.index])
                    .partial_cmp(&self.response_norm(&bank[a.index]))
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| ident(a, b))
            });
            ranked.extend(group);
            rest = &rest[len..];
        }
        ranked.truncate(k);
        ranked
    }
}

pub fn relative_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
