//! Offline evaluation of the matching score: sample a banked triple, retrieve
//! the top four responses with the true one held out, present either one of
//! them or the true response to a blind rater, then relate confidence to
//! rating.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::BankEntry;
use crate::error::{Error, Result};
use crate::lexicon::{IdfLexicon, Power, WeightedVector};
use crate::match_index::{InvertedIndex, MatchResult, QueryContext, ScoringParams};

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;
pub const TOP_K: usize = 4;

/// Chance of presenting a retrieved response rather than the true one,
/// from a 181 to 33 split of trials.
pub const DEFAULT_MATCH_PROBABILITY: f64 = 181.0 / 214.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Source {
    HumanTruth,
    /// Zero-based rank within the top four.
    MatchTopK { rank: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTrial {
    pub entry_id: usize,
    /// r_{i-2}
    pub context2: String,
    /// r_{i-1}
    pub context1: String,
    /// r_i
    pub truth: String,
    pub presented: String,
    pub source: Source,
    pub confidence: Option<f64>,
    /// Entry ids of the retrieved top four, best first.
    pub candidates: Vec<usize>,
    pub rating: Option<u8>,
}

/// Everything a rater may see: the two context turns and the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RaterView<'a> {
    pub qc: &'a str,
    pub q: &'a str,
    pub r: &'a str,
}

pub trait Rater {
    /// A rating in `1..=5`.
    fn rate(&mut self, view: RaterView<'_>) -> Result<u8>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub match_probability: f64,
    pub force: Option<ForceSource>,
}

/// Which source to present, overriding the random draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ForceSource {
    HumanTruth,
    Match,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            match_probability: DEFAULT_MATCH_PROBABILITY,
            force: None,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.match_probability) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("match probability must lie in [0, 1]".into()))
        }
    }
}

fn eligible(index: &InvertedIndex) -> Vec<usize> {
    index
        .entries()
        .enumerate()
        .filter(|(_, e)| e.context1.is_some() && e.context2.is_some())
        .map(|(i, _)| i)
        .collect()
}

/// Draws one unrated trial. Fails when no entry has two context turns.
pub fn sample_trial<R: Rng + ?Sized>(
    index: &InvertedIndex,
    params: &ScoringParams,
    config: &TrialConfig,
    rng: &mut R,
) -> Result<EvalTrial> {
    config.validate()?;
    let ids = eligible(index);
    if ids.is_empty() {
        return Err(Error::InvalidArgument("no bank entry has two context turns".into()));
    }
    let id = ids[rng.random_range(0..ids.len())];
    trial_for_entry(index, id, params, config, rng)
}

/// The trial for a given entry.
pub fn trial_for_entry<R: Rng + ?Sized>(
    index: &InvertedIndex,
    entry_id: usize,
    params: &ScoringParams,
    config: &TrialConfig,
    rng: &mut R,
) -> Result<EvalTrial> {
    let entry = index
        .entry(entry_id)
        .ok_or_else(|| Error::NotFound(format!("bank entry {entry_id}")))?;
    let (Some(c1), Some(c2)) = (&entry.context1, &entry.context2) else {
        return Err(Error::InvalidArgument(format!("entry {entry_id} lacks two context turns")));
    };
    let qctx = QueryContext::new(c1.clone())?.with_previous(c2.clone());
    let top: Vec<MatchResult> = index.query_excluding(&qctx, params, TOP_K, Some(entry_id))?;

    let use_match = match config.force {
        Some(ForceSource::HumanTruth) => false,
        Some(ForceSource::Match) => true,
        None => rng.random::<f64>() < config.match_probability,
    };
    let (presented, source, confidence) = if use_match && !top.is_empty() {
        let rank = rng.random_range(0..top.len());
        (
            top[rank].entry.response.clone(),
            Source::MatchTopK { rank },
            Some(top[rank].confidence),
        )
    } else {
        (entry.response.clone(), Source::HumanTruth, None)
    };
    Ok(EvalTrial {
        entry_id,
        context2: c2.clone(),
        context1: c1.clone(),
        truth: entry.response.clone(),
        presented,
        source,
        confidence,
        candidates: top.iter().map(|r| r.entry_id).collect(),
        rating: None,
    })
}

/// Rates by similarity between the query and the context the presented
/// response was banked under, plus seeded Gaussian noise. It sees only the
/// three texts, never the source or the matcher's confidence.
pub struct SyntheticRater<R: Rng> {
    lexicon: IdfLexicon,
    contexts: HashMap<String, Vec<WeightedVector>>,
    noise: Normal<f64>,
    rng: R,
}

impl<R: Rng> SyntheticRater<R> {
    pub fn new(bank: &[BankEntry], lexicon: IdfLexicon, noise_sd: f64, rng: R) -> Result<Self> {
        let noise = Normal::new(0.0, noise_sd)
            .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
        let mut contexts: HashMap<String, Vec<WeightedVector>> = HashMap::new();
        for e in bank {
            if let Some(c1) = &e.context1 {
                contexts
                    .entry(e.response.clone())
                    .or_default()
                    .push(lexicon.vectorize(c1, Power::Cubic));
            }
        }
        Ok(Self {
            lexicon,
            contexts,
            noise,
            rng,
        })
    }

    /// Best cosine between `q` and any context `r` was banked under.
    pub fn similarity(&self, q: &str, r: &str) -> f64 {
        let qv = self.lexicon.vectorize(q, Power::Cubic);
        let qn = qv.l2_norm();
        self.contexts
            .get(r)
            .into_iter()
            .flatten()
            .map(|c| {
                let denom = qn * c.l2_norm();
                if denom > 0.0 {
                    qv.dot(c) / denom
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

impl<R: Rng> Rater for SyntheticRater<R> {
    fn rate(&mut self, view: RaterView<'_>) -> Result<u8> {
        let sim = self.similarity(view.q, view.r);
        let raw = 1.0 + 4.0 * sim + self.noise.sample(&mut self.rng);
        Ok(raw.round().clamp(MIN_RATING as f64, MAX_RATING as f64) as u8)
    }
}

/// Prompts a person on a terminal.
pub struct InteractiveRater<I, O> {
    input: I,
    output: O,
}

impl<I: BufRead, O: Write> InteractiveRater<I, O> {
    pub fn new(input: I, output: O) -> Self {
        Self { input, output }
    }
}

impl<I: BufRead, O: Write> Rater for InteractiveRater<I, O> {
    fn rate(&mut self, view: RaterView<'_>) -> Result<u8> {
        writeln!(self.output, "\n  A: {}\n  B: {}\n  A: {}", view.qc, view.q, view.r)?;
        loop {
            write!(
                self.output,
                "Rate the last reply 1 (nonsense) to 5 (human-like and interesting): "
            )?;
            self.output.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Err(Error::InvalidArgument("rating input closed".into()));
            }
            match line.trim().parse::<u8>() {
                Ok(r) if (MIN_RATING..=MAX_RATING).contains(&r) => return Ok(r),
                _ => writeln!(self.output, "Please type a whole number from 1 to 5.")?,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pearson {
    pub r: f64,
    /// Two-sided, from Student's t with n - 2 degrees of freedom. Absent
    /// when n = 2.
    pub p: Option<f64>,
    pub n: usize,
}

/// Sample correlation. `Ok(None)` when either input has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Option<Pearson>> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument("inputs differ in length".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two pairs".into()));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p = (n > 2).then(|| {
        let df = (n - 2) as f64;
        let rest = 1.0 - r * r;
        if rest <= 0.0 {
            return 0.0;
        }
        let t = r * (df / rest).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * dist.sf(t.abs())).min(1.0)
    });
    Ok(Some(Pearson { r, p, n }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub name: String,
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation over √n; absent for n < 2.
    pub stderr: Option<f64>,
}

impl GroupStat {
    pub fn from_ratings(name: &str, ratings: &[f64]) -> Self {
        let n = ratings.len();
        let mean = (n > 0).then(|| ratings.iter().sum::<f64>() / n as f64);
        let stderr = mean.filter(|_| n >= 2).map(|m| {
            let var = ratings.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            var.sqrt() / (n as f64).sqrt()
        });
        Self {
            name: name.to_string(),
            n,
            mean,
            stderr,
        }
    }
}

pub const GROUP_HUMAN: &str = "humanTruth";
pub const GROUP_ALL: &str = "top4";
pub const GROUP_ABOVE_RESPOND: &str = "top4_conf_gt_0.5";
pub const GROUP_ABOVE_PRIORITY: &str = "top4_conf_gt_0.7";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub trials: Vec<EvalTrial>,
    /// Human truth, all top-4, top-4 above 0.5, top-4 above 0.7.
    pub groups: Vec<GroupStat>,
    /// Confidence against rating over top-4 trials; `None` when undefined.
    pub correlation: Option<Pearson>,
}

impl EvalReport {
    pub fn from_trials(trials: Vec<EvalTrial>) -> Result<Self> {
        let mut human = Vec::new();
        let mut matched: Vec<(f64, f64)> = Vec::new();
        for t in &trials {
            let rating = t
                .rating
                .ok_or_else(|| Error::InvalidArgument("trial without a rating".into()))?;
            match (t.source, t.confidence) {
                (Source::HumanTruth, _) => human.push(rating as f64),
                (Source::MatchTopK { .. }, Some(c)) => matched.push((c, rating as f64)),
                (Source::MatchTopK { .. }, None) => {
                    return Err(Error::InvalidArgument("retrieved trial without confidence".into()))
                }
            }
        }
        let above = |threshold: f64| -> Vec<f64> {
            matched
                .iter()
                .filter(|(c, _)| *c > threshold)
                .map(|(_, r)| *r)
                .collect()
        };
        let all: Vec<f64> = matched.iter().map(|(_, r)| *r).collect();
        let groups = vec![
            GroupStat::from_ratings(GROUP_HUMAN, &human),
            GroupStat::from_ratings(GROUP_ALL, &all),
            GroupStat::from_ratings(GROUP_ABOVE_RESPOND, &above(0.5)),
            GroupStat::from_ratings(GROUP_ABOVE_PRIORITY, &above(0.7)),
        ];
        let correlation = if matched.len() >= 2 {
            let (xs, ys): (Vec<f64>, Vec<f64>) = matched.iter().copied().unzip();
            pearson(&xs, &ys)?
        } else {
            None
        };
        Ok(Self {
            trials,
            groups,
            correlation,
        })
    }

    pub fn group(&self, name: &str) -> Option<&GroupStat> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Tab-separated lines: `group<TAB>name<TAB>n<TAB>mean<TAB>stderr` and
    /// `correlation<TAB>n<TAB>r<TAB>p`, with `NA` for undefined values.
    pub fn machine_lines(&self) -> Vec<String> {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        let mut out: Vec<String> = self
            .groups
            .iter()
            .map(|g| format!("group\t{}\t{}\t{}\t{}", g.name, g.n, fmt(g.mean), fmt(g.stderr)))
            .collect();
        out.push(match &self.correlation {
            Some(c) => format!("correlation\t{}\t{}\t{}", c.n, fmt(Some(c.r)), fmt(c.p)),
            None => "correlation\tNA\tNA\tNA".to_string(),
        });
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>5} {:>16}", "responses", "n", "rating")?;
        for g in &self.groups {
            let cell = match (g.mean, g.stderr) {
                (Some(m), Some(s)) => format!("{m:.2} ± {s:.2}"),
                (Some(m), None) => format!("{m:.2}"),
                _ => "-".to_string(),
            };
            writeln!(f, "{:<20} {:>5} {:>16}", g.name, g.n, cell)?;
        }
        match &self.correlation {
            Some(Pearson { r, p: Some(p), n }) => write!(f, "confidence vs rating: r = {r:.3}, p = {p:.2e} (n = {n})"),
            Some(Pearson { r, p: None, n }) => write!(f, "confidence vs rating: r = {r:.3} (n = {n})"),
            None => write!(f, "confidence vs rating: undefined (zero variance or too few trials)"),
        }
    }
}

/// Samples, rates and summarises `trials` trials.
pub fn run_evaluation<R: Rng + ?Sized>(
    index: &InvertedIndex,
    params: &ScoringParams,
    config: &TrialConfig,
    trials: usize,
    rater: &mut dyn Rater,
    rng: &mut R,
) -> Result<EvalReport> {
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least two trials".into()));
    }
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut trial = sample_trial(index, params, config, rng)?;
        let rating = rater.rate(RaterView {
            qc: &trial.context2,
            q: &trial.context1,
            r: &trial.presented,
        })?;
        if !(MIN_RATING..=MAX_RATING).contains(&rating) {
            return Err(Error::InvalidArgument(format!("rating {rating} is outside 1..=5")));
        }
        trial.rating = Some(rating);
        out.push(trial);
    }
    EvalReport::from_trials(out)
}
