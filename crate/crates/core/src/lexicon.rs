//! Tokenisation, IDF tables and sparse weighted bag-of-words vectors.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercased word tokens. Punctuation separates words; an apostrophe is kept
/// only between two word characters ("don't").
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text).into_iter().map(|(_, tok)| tok).collect()
}

/// Like [`tokenize`] but also returns the byte range of each token in `text`.
pub fn token_spans(text: &str) -> Vec<(Range<usize>, String)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let chars: Vec<(usize, char)> = text.char_indices().collect();

    let flush = |start: &mut Option<usize>, end: usize, out: &mut Vec<(Range<usize>, String)>| {
        if let Some(s) = start.take() {
            let word: String = text[s..end]
                .chars()
                .map(|c| if c == '\u{2019}' { '\'' } else { c })
                .flat_map(char::to_lowercase)
                .collect();
            out.push((s..end, word));
        }
    };

    for (idx, &(pos, ch)) in chars.iter().enumerate() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(pos);
            }
        } else if is_apostrophe(ch) && start.is_some() {
            let next_is_word = chars
                .get(idx + 1)
                .map(|&(_, c)| c.is_alphanumeric())
                .unwrap_or(false);
            if !next_is_word {
                flush(&mut start, pos, &mut out);
            }
        } else {
            flush(&mut start, pos, &mut out);
        }
    }
    flush(&mut start, text.len(), &mut out);
    out
}

fn is_apostrophe(ch: char) -> bool {
    ch == '\'' || ch == '\u{2019}'
}

/// Exponent applied to IDF weights when vectorising.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Power {
    Plain,
    Cubic,
    Quartic,
}

impl Power {
    pub fn exponent(self) -> i32 {
        match self {
            Power::Plain => 1,
            Power::Cubic => 3,
            Power::Quartic => 4,
        }
    }
}

/// How repeated words contribute to a vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occurrence {
    /// Each distinct word contributes its weight once.
    #[default]
    Binary,
    /// The weight is multiplied by the word's count in the text.
    TermFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexiconOptions {
    pub occurrence: Occurrence,
    /// `None` means natural log.
    pub log_base: Option<f64>,
}

impl Default for LexiconOptions {
    fn default() -> Self {
        Self {
            occurrence: Occurrence::Binary,
            log_base: None,
        }
    }
}

/// Word to inverse-document-frequency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfLexicon {
    weights: HashMap<String, f64>,
    oov_weight: f64,
    total_count: u64,
    occurrence: Occurrence,
}

impl IdfLexicon {
    /// Reads `word<TAB>count` lines (any whitespace separator is accepted).
    pub fn load_frequencies<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        Self::load_frequencies_with(reader, source_name, LexiconOptions::default())
    }

    pub fn load_frequencies_with<R: BufRead>(
        reader: R,
        source_name: &str,
        options: LexiconOptions,
    ) -> Result<Self> {
        let mut counts: Vec<(String, u64)> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(word), Some(count), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(Error::parse(source_name, lineno, "expected `word<TAB>count`"));
            };
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse(source_name, lineno, format!("bad count `{count}`")))?;
            if count == 0 {
                return Err(Error::parse(source_name, lineno, "count must be positive"));
            }
            counts.push((word.to_lowercase(), count));
        }
        if counts.is_empty() {
            return Err(Error::parse(source_name, 0, "frequency file is empty"));
        }
        Ok(Self::from_counts(counts, options))
    }

    /// Builds the table from raw counts; duplicate words are summed.
    pub fn from_counts<I>(counts: I, options: LexiconOptions) -> Self
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut merged: HashMap<String, u64> = HashMap::new();
        for (word, count) in counts {
            *merged.entry(word).or_default() += count;
        }
        let total: u64 = merged.values().sum();
        let log = |x: f64| match options.log_base {
            Some(base) => x.log(base),
            None => x.ln(),
        };
        let weights = merged
            .into_iter()
            .map(|(w, c)| (w, log(total as f64 / c as f64)))
            .collect();
        Self {
            weights,
            oov_weight: log(total as f64),
            total_count: total,
            occurrence: options.occurrence,
        }
    }

    /// Builds a table from explicit weights. `oov_weight` is raised to the
    /// largest stored weight if it is smaller.
    pub fn from_weights<I>(weights: I, oov_weight: f64) -> Self
    where
        I: IntoIterator<Item = (String, f64)>,
    {
        let weights: HashMap<String, f64> = weights
            .into_iter()
            .map(|(w, v)| (w.to_lowercase(), v.max(0.0)))
            .collect();
        let max = weights.values().copied().fold(0.0, f64::max);
        Self {
            weights,
            oov_weight: oov_weight.max(max),
            total_count: 0,
            occurrence: Occurrence::Binary,
        }
    }

    pub fn with_occurrence(mut self, occurrence: Occurrence) -> Self {
        self.occurrence = occurrence;
        self
    }

    /// Every weight (including out-of-vocabulary) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .map(|(w, v)| (w.clone(), v * factor))
                .collect(),
            oov_weight: self.oov_weight * factor,
            total_count: self.total_count,
            occurrence: self.occurrence,
        }
    }

    pub fn idf(&self, word: &str) -> f64 {
        self.weights.get(word).copied().unwrap_or(self.oov_weight)
    }

    pub fn oov_weight(&self) -> f64 {
        self.oov_weight
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn occurrence(&self) -> Occurrence {
        self.occurrence
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(w, v)| (w.as_str(), *v))
    }

    pub fn vectorize(&self, text: &str, power: Power) -> WeightedVector {
        self.vectorize_tokens(&tokenize(text), power)
    }

    pub fn vectorize_tokens<S: AsRef<str>>(&self, tokens: &[S], power: Power) -> WeightedVector {
        let mut entries: BTreeMap<String, f64> = BTreeMap::new();
        for tok in tokens {
            let tok = tok.as_ref();
            let weight = self.idf(tok);
            if weight == 0.0 {
                continue;
            }
            let value = weight.powi(power.exponent());
            match self.occurrence {
                Occurrence::Binary => {
                    entries.insert(tok.to_string(), value);
                }
                Occurrence::TermFrequency => {
                    *entries.entry(tok.to_string()).or_insert(0.0) += value;
                }
            }
        }
        WeightedVector { entries, power }
    }
}

/// Sparse bag-of-words vector. Zero weights are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedVector {
    entries: BTreeMap<String, f64>,
    power: Power,
}

impl WeightedVector {
    pub fn empty(power: Power) -> Self {
        Self {
            entries: BTreeMap::new(),
            power,
        }
    }

    pub fn from_entries<I: IntoIterator<Item = (String, f64)>>(entries: I, power: Power) -> Self {
        Self {
            entries: entries.into_iter().filter(|(_, v)| *v != 0.0).collect(),
            power,
        }
    }

    pub fn power(&self) -> Power {
        self.power
    }

    pub fn get(&self, word: &str) -> Option<f64> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(w, v)| (w.as_str(), *v))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Sparse inner product; iterates the shorter operand.
    pub fn dot(&self, other: &WeightedVector) -> f64 {
        debug_assert_eq!(self.power, other.power, "dot over mismatched powers");
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .entries
            .iter()
            .filter_map(|(w, a)| large.entries.get(w).map(|b| a * b))
            .sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.entries.values().map(|v| v * v).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }
}

pub fn dot(a: &WeightedVector, b: &WeightedVector) -> f64 {
    a.dot(b)
}

pub fn l2_norm(v: &WeightedVector) -> f64 {
    v.l2_norm()
}
