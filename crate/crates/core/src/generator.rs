//! Generative fallback: an add-one smoothed n-gram model sampled token by
//! token with temperature, conditioned on the last two turns.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::tokenize;

pub const START: &str = "<s>";
pub const END: &str = "</s>";

/// Below this temperature sampling is greedy.
pub const GREEDY_TEMPERATURE: f64 = 1e-3;

const SNAPSHOT_HEADER: &str = "#ngram-counts v1";

/// Anything that can produce a reply from the last user turn and the agent
/// turn before it.
pub trait Generator: Send + Sync {
    fn generate(&self, user: &str, agent: Option<&str>, rng: &mut dyn RngCore) -> String;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramModel {
    order: usize,
    smoothing: f64,
    counts: HashMap<Vec<String>, BTreeMap<String, u64>>,
    totals: HashMap<Vec<String>, u64>,
    vocabulary: Vec<String>,
}

impl NgramModel {
    pub fn train<S: AsRef<str>>(turns: &[Vec<S>], order: usize) -> Result<Self> {
        Self::train_with_smoothing(turns, order, 1.0)
    }

    /// Add-`smoothing` counts over `order`-token windows, each turn padded
    /// with `order - 1` start markers and one end marker.
    pub fn train_with_smoothing<S: AsRef<str>>(
        turns: &[Vec<S>],
        order: usize,
        smoothing: f64,
    ) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidArgument(format!("n-gram order {order} is below 2")));
        }
        if smoothing.is_nan() || smoothing <= 0.0 {
            return Err(Error::InvalidArgument("smoothing must be positive".into()));
        }
        let mut counts: HashMap<Vec<String>, BTreeMap<String, u64>> = HashMap::new();
        let mut vocabulary: BTreeSet<String> = BTreeSet::new();
        for turn in turns.iter().filter(|t| !t.is_empty()) {
            let mut padded: Vec<String> = vec![START.to_string(); order - 1];
            padded.extend(turn.iter().map(|t| t.as_ref().to_string()));
            padded.push(END.to_string());
            for window in padded.windows(order) {
                let (history, next) = window.split_at(order - 1);
                *counts
                    .entry(history.to_vec())
                    .or_default()
                    .entry(next[0].clone())
                    .or_default() += 1;
                vocabulary.insert(next[0].clone());
            }
        }
        if counts.is_empty() {
            return Err(Error::InvalidArgument("cannot train on an empty corpus".into()));
        }
        Ok(Self::from_counts(order, smoothing, counts, vocabulary))
    }

    pub fn train_texts<S: AsRef<str>>(texts: &[S], order: usize) -> Result<Self> {
        let turns: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        Self::train(&turns, order)
    }

    fn from_counts(
        order: usize,
        smoothing: f64,
        counts: HashMap<Vec<String>, BTreeMap<String, u64>>,
        vocabulary: BTreeSet<String>,
    ) -> Self {
        let totals = counts
            .iter()
            .map(|(h, next)| (h.clone(), next.values().sum()))
            .collect();
        Self {
            order,
            smoothing,
            counts,
            totals,
            vocabulary: vocabulary.into_iter().collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Tokens that can be generated, including the end marker, sorted.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn has_history(&self, history: &[String]) -> bool {
        self.counts.contains_key(history)
    }

    pub fn start_history(&self) -> Vec<String> {
        vec![START.to_string(); self.order - 1]
    }

    /// Smoothed conditional probability of `token` after `history`.
    pub fn probability(&self, history: &[String], token: &str) -> f64 {
        let v = self.vocabulary.len() as f64;
        let seen = self
            .counts
            .get(history)
            .and_then(|n| n.get(token))
            .copied()
            .unwrap_or(0) as f64;
        let total = self.totals.get(history).copied().unwrap_or(0) as f64;
        (seen + self.smoothing) / (total + self.smoothing * v)
    }

    /// Smoothed next-token distribution, aligned with [`vocabulary`](Self::vocabulary).
    pub fn distribution(&self, history: &[String]) -> Vec<f64> {
        self.vocabulary
            .iter()
            .map(|t| self.probability(history, t))
            .collect()
    }

    /// Seed history from the agent turn followed by the user turn; the start
    /// history when that window was never observed.
    pub fn conditioning_history(&self, user: &str, agent: Option<&str>) -> Vec<String> {
        let mut tokens: Vec<String> = agent.map(tokenize).unwrap_or_default();
        tokens.extend(tokenize(user));
        let k = self.order - 1;
        let mut history = self.start_history();
        history.extend(tokens);
        let window = history.split_off(history.len() - k);
        if self.has_history(&window) {
            window
        } else {
            self.start_history()
        }
    }

    pub fn generate<R: Rng + ?Sized>(
        &self,
        user: &str,
        agent: Option<&str>,
        config: &SamplerConfig,
        rng: &mut R,
    ) -> String {
        let mut history = self.conditioning_history(user, agent);
        let mut out: Vec<&str> = Vec::new();
        while out.len() < config.max_tokens {
            let probs = self.distribution(&history);
            let next = &self.vocabulary[sample_index(&probs, config.temperature, rng)];
            if next == END {
                break;
            }
            out.push(next);
            history.remove(0);
            history.push(next.clone());
        }
        out.join(" ")
    }

    /// Writes `history<TAB>token<TAB>count` lines after a versioned header.
    pub fn write_snapshot<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(
            writer,
            "{SNAPSHOT_HEADER}\torder={}\tsmoothing={}",
            self.order, self.smoothing
        )?;
        let mut histories: Vec<&Vec<String>> = self.counts.keys().collect();
        histories.sort();
        for h in histories {
            for (token, count) in &self.counts[h] {
                writeln!(writer, "{}\t{}\t{}", h.join(" "), token, count)?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::parse(source_name, 1, "missing header"))?;
        let mut fields = header.split('\t');
        if fields.next() != Some(SNAPSHOT_HEADER) {
            return Err(Error::parse(source_name, 1, "not an n-gram snapshot (v1)"));
        }
        let mut order = None;
        let mut smoothing = None;
        for f in fields {
            match f.split_once('=') {
                Some(("order", v)) => order = v.parse::<usize>().ok(),
                Some(("smoothing", v)) => smoothing = v.parse::<f64>().ok(),
                _ => return Err(Error::parse(source_name, 1, format!("bad header field `{f}`"))),
            }
        }
        let (Some(order), Some(smoothing)) = (order, smoothing) else {
            return Err(Error::parse(source_name, 1, "header needs order and smoothing"));
        };
        if order < 2 {
            return Err(Error::parse(source_name, 1, "order below 2"));
        }

        let mut counts: HashMap<Vec<String>, BTreeMap<String, u64>> = HashMap::new();
        let mut vocabulary = BTreeSet::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx + 2;
            let cols: Vec<&str> = line.split('\t').collect();
            let [history, token, count] = cols[..] else {
                return Err(Error::parse(source_name, lineno, "expected `history<TAB>token<TAB>count`"));
            };
            let history: Vec<String> = history.split(' ').map(str::to_string).collect();
            if history.len() != order - 1 {
                return Err(Error::parse(source_name, lineno, "history length does not match order"));
            }
            let count: u64 = count
                .parse()
                .ok()
                .filter(|&c| c > 0)
                .ok_or_else(|| Error::parse(source_name, lineno, "bad count"))?;
            counts.entry(history).or_default().insert(token.to_string(), count);
            vocabulary.insert(token.to_string());
        }
        if counts.is_empty() {
            return Err(Error::parse(source_name, 1, "snapshot has no counts"));
        }
        Ok(Self::from_counts(order, smoothing, counts, vocabulary))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed: Option<u64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 30,
            seed: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature > 0.0 && self.temperature.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument("temperature must be positive".into()))
        }
    }
}

/// `p_i^(1/T) / sum_j p_j^(1/T)`, computed in log space. Below
/// [`GREEDY_TEMPERATURE`] the result is one-hot on the first maximum.
pub fn apply_temperature(probs: &[f64], temperature: f64) -> Vec<f64> {
    if probs.is_empty() {
        return Vec::new();
    }
    if temperature < GREEDY_TEMPERATURE {
        let best = argmax(probs);
        return (0..probs.len()).map(|i| if i == best { 1.0 } else { 0.0 }).collect();
    }
    if temperature == 1.0 {
        return probs.to_vec();
    }
    let logs: Vec<f64> = probs.iter().map(|p| p.ln() / temperature).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > xs[best] { i } else { best })
}

/// Draws an index from the temperature-adjusted distribution.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], temperature: f64, rng: &mut R) -> usize {
    if temperature < GREEDY_TEMPERATURE {
        return argmax(probs);
    }
    let adjusted = apply_temperature(probs, temperature);
    let mut u: f64 = rng.random();
    for (i, p) in adjusted.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    adjusted.len() - 1
}

/// [`NgramModel`] behind the [`Generator`] interface.
#[derive(Debug, Clone)]
pub struct NgramGenerator {
    pub model: NgramModel,
    pub config: SamplerConfig,
}

impl NgramGenerator {
    pub fn new(model: NgramModel, config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { model, config })
    }

    /// Reproducible output from the configured seed (0 when unset).
    pub fn generate_seeded(&self, user: &str, agent: Option<&str>) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.unwrap_or(0));
        self.model.generate(user, agent, &self.config, &mut rng)
    }
}

impl Generator for NgramGenerator {
    fn generate(&self, user: &str, agent: Option<&str>, mut rng: &mut dyn RngCore) -> String {
        self.model.generate(user, agent, &self.config, &mut rng)
    }
}
