//! Inverted index over the response bank and the matching score.
//!
//! Each banked response `r` is scored against the user utterance `q` and the
//! agent turn before it `qc`:
//!
//! ```text
//! sC    = q³ · c1³            (context similarity, cubed IDF)
//! eta   = ‖q³‖ ‖c1³‖
//! sCR   = q⁴ · r⁴             (query/response overlap, quartic IDF)
//! s2CQ  = qc · c2             (wider context, plain IDF)
//! score = (sC + sCR) · sC^n / eta + λ · s2CQ
//! ```
//!
//! Ranking uses `score` (times the topic bonus when the entry's topic is the
//! session topic). Gating uses the confidence `sC / eta`, which lies in
//! `[0, 1]`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::BankEntry;
use crate::error::{Error, Result};
use crate::lexicon::{tokenize, IdfLexicon, Power, WeightedVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringParams {
    pub lambda: f64,
    pub n: f64,
    pub topic_bonus: f64,
    pub near_tie_rel: f64,
    pub respond_threshold: f64,
    pub priority_threshold: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            lambda: 0.005,
            n: 0.5,
            topic_bonus: 1.10,
            near_tie_rel: 1e-3,
            respond_threshold: 0.5,
            priority_threshold: 0.7,
        }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda >= 0.0
            && self.n >= 0.0
            && self.topic_bonus >= 1.0
            && self.near_tie_rel >= 0.0
            && 0.0 <= self.respond_threshold
            && self.respond_threshold <= self.priority_threshold
            && self.priority_threshold <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("scoring parameters out of range: {self:?}")))
        }
    }
}

/// The user utterance, the agent reply that preceded it, and the session topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryContext {
    pub q: String,
    pub qc: Option<String>,
    pub topic: Option<String>,
}

impl QueryContext {
    pub fn new(q: impl Into<String>) -> Result<Self> {
        let q = q.into();
        if q.trim().is_empty() {
            return Err(Error::InvalidArgument("query utterance is empty".into()));
        }
        Ok(Self {
            q,
            qc: None,
            topic: None,
        })
    }

    pub fn with_previous(mut self, qc: impl Into<String>) -> Self {
        self.qc = Some(qc.into());
        self
    }

    pub fn with_topic(mut self, topic: impl Into<String>) -> Self {
        self.topic = Some(topic.into());
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubScores {
    pub s_c: f64,
    pub s_cr: f64,
    pub s_2cq: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub entry_id: usize,
    pub entry: BankEntry,
    pub score: f64,
    pub confidence: f64,
    pub sub: SubScores,
    /// ‖r⁴‖, the tie-break key.
    pub response_norm: f64,
}

pub fn topic_of(result: &MatchResult) -> &str {
    &result.entry.topic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexedEntry {
    entry: BankEntry,
    context_cubic: WeightedVector,
    context_norm_sq: f64,
    response_quartic: WeightedVector,
    response_norm: f64,
    context2_plain: Option<WeightedVector>,
}

impl IndexedEntry {
    fn new(entry: BankEntry, lexicon: &IdfLexicon) -> Self {
        let context_cubic = match &entry.context1 {
            Some(c) => lexicon.vectorize(c, Power::Cubic),
            None => WeightedVector::empty(Power::Cubic),
        };
        let response_quartic = lexicon.vectorize(&entry.response, Power::Quartic);
        Self {
            context_norm_sq: context_cubic.norm_squared(),
            response_norm: response_quartic.l2_norm(),
            context2_plain: entry
                .context2
                .as_deref()
                .map(|c| lexicon.vectorize(c, Power::Plain)),
            context_cubic,
            response_quartic,
            entry,
        }
    }
}

struct QueryVectors<'a> {
    cubic: WeightedVector,
    cubic_norm_sq: f64,
    quartic: WeightedVector,
    previous: Option<WeightedVector>,
    topic: Option<&'a str>,
}

impl<'a> QueryVectors<'a> {
    fn new(qctx: &'a QueryContext, lexicon: &IdfLexicon) -> Self {
        let tokens = tokenize(&qctx.q);
        let cubic = lexicon.vectorize_tokens(&tokens, Power::Cubic);
        Self {
            cubic_norm_sq: cubic.norm_squared(),
            cubic,
            quartic: lexicon.vectorize_tokens(&tokens, Power::Quartic),
            previous: qctx
                .qc
                .as_deref()
                .map(|qc| lexicon.vectorize(qc, Power::Plain)),
            topic: qctx.topic.as_deref(),
        }
    }
}

fn score_indexed(
    qv: &QueryVectors<'_>,
    id: usize,
    e: &IndexedEntry,
    params: &ScoringParams,
) -> MatchResult {
    let s_c = qv.cubic.dot(&e.context_cubic);
    let eta = (qv.cubic_norm_sq * e.context_norm_sq).sqrt();
    let s_cr = qv.quartic.dot(&e.response_quartic);
    let s_2cq = match (&qv.previous, &e.context2_plain) {
        (Some(prev), Some(c2)) => prev.dot(c2),
        _ => 0.0,
    };

    let mut score = params.lambda * s_2cq;
    let mut confidence = 0.0;
    if eta > 0.0 {
        score += (s_c + s_cr) * s_c.powf(params.n) / eta;
        confidence = (s_c / eta).clamp(0.0, 1.0);
    }
    if qv.topic == Some(e.entry.topic.as_str()) {
        score *= params.topic_bonus;
    }

    MatchResult {
        entry_id: id,
        entry: e.entry.clone(),
        score,
        confidence,
        sub: SubScores {
            s_c,
            s_cr,
            s_2cq,
            eta,
        },
        response_norm: e.response_norm,
    }
}

/// Scores a single bank entry without an index.
pub fn score_entry(
    qctx: &QueryContext,
    entry: &BankEntry,
    params: &ScoringParams,
    lexicon: &IdfLexicon,
) -> MatchResult {
    let qv = QueryVectors::new(qctx, lexicon);
    let indexed = IndexedEntry::new(entry.clone(), lexicon);
    score_indexed(&qv, 0, &indexed, params)
}

/// Orders results by score, then inside each near-tie group by response norm
/// (descending) and entry identity.
///
/// A near-tie group starts at the highest remaining score `s` and takes every
/// following result whose score is within `near_tie_rel * s` of it.
pub fn rank_results(mut results: Vec<MatchResult>, near_tie_rel: f64) -> Vec<MatchResult> {
    results.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| identity_order(a, b))
    });
    let mut start = 0;
    while start < results.len() {
        let lead = results[start].score;
        let mut end = start + 1;
        while end < results.len() && lead - results[end].score <= near_tie_rel * lead.abs() {
            end += 1;
        }
        results[start..end].sort_by(|a, b| {
            b.response_norm
                .partial_cmp(&a.response_norm)
                .unwrap_or(Ordering::Equal)
                .then_with(|| identity_order(a, b))
        });
        start = end;
    }
    results
}

fn identity_order(a: &MatchResult, b: &MatchResult) -> Ordering {
    a.entry
        .dialogue_id
        .cmp(&b.entry.dialogue_id)
        .then(a.entry.turn_index.cmp(&b.entry.turn_index))
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"STLKIDX\0";
const SNAPSHOT_VERSION: u32 = 1;

/// Immutable inverted index over a response bank.
///
/// Three postings tables are kept: context words (probed with the user
/// utterance), response words (probed with the user utterance) and
/// second-context words (probed with the preceding agent reply). Together they
/// cover every entry that can score above zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    lexicon: IdfLexicon,
    entries: Vec<IndexedEntry>,
    context_postings: HashMap<String, Vec<u32>>,
    response_postings: HashMap<String, Vec<u32>>,
    context2_postings: HashMap<String, Vec<u32>>,
}

impl InvertedIndex {
    pub fn build(bank: Vec<BankEntry>, lexicon: IdfLexicon) -> Result<Self> {
        if bank.is_empty() {
            return Err(Error::InvalidArgument("cannot index an empty bank".into()));
        }
        let entries: Vec<IndexedEntry> = bank
            .into_iter()
            .map(|e| IndexedEntry::new(e, &lexicon))
            .collect();

        let mut context_postings: HashMap<String, Vec<u32>> = HashMap::new();
        let mut response_postings: HashMap<String, Vec<u32>> = HashMap::new();
        let mut context2_postings: HashMap<String, Vec<u32>> = HashMap::new();
        for (id, e) in entries.iter().enumerate() {
            let id = id as u32;
            for w in e.context_cubic.words() {
                context_postings.entry(w.to_string()).or_default().push(id);
            }
            for w in e.response_quartic.words() {
                response_postings.entry(w.to_string()).or_default().push(id);
            }
            if let Some(c2) = &e.context2_plain {
                for w in c2.words() {
                    context2_postings.entry(w.to_string()).or_default().push(id);
                }
            }
        }

        Ok(Self {
            lexicon,
            entries,
            context_postings,
            response_postings,
            context2_postings,
        })
    }

    pub fn lexicon(&self) -> &IdfLexicon {
        &self.lexicon
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: usize) -> Option<&BankEntry> {
        self.entries.get(id).map(|e| &e.entry)
    }

    pub fn entries(&self) -> impl Iterator<Item = &BankEntry> {
        self.entries.iter().map(|e| &e.entry)
    }

    pub fn context_postings(&self, word: &str) -> &[u32] {
        self.context_postings.get(word).map_or(&[], Vec::as_slice)
    }

    pub fn response_postings(&self, word: &str) -> &[u32] {
        self.response_postings.get(word).map_or(&[], Vec::as_slice)
    }

    /// Entry ids sharing at least one weighted word with the query, sorted.
    pub fn candidates(&self, qctx: &QueryContext) -> Vec<usize> {
        let mut seen = vec![false; self.entries.len()];
        let q = self.lexicon.vectorize(&qctx.q, Power::Plain);
        for w in q.words() {
            for &id in self.context_postings(w).iter().chain(self.response_postings(w)) {
                seen[id as usize] = true;
            }
        }
        if let Some(qc) = &qctx.qc {
            for w in self.lexicon.vectorize(qc, Power::Plain).words() {
                for &id in self.context2_postings.get(w).map_or(&[][..], Vec::as_slice) {
                    seen[id as usize] = true;
                }
            }
        }
        seen.iter()
            .enumerate()
            .filter_map(|(id, &hit)| hit.then_some(id))
            .collect()
    }

    /// Scores one indexed entry.
    pub fn score(&self, qctx: &QueryContext, id: usize, params: &ScoringParams) -> Option<MatchResult> {
        let e = self.entries.get(id)?;
        let qv = QueryVectors::new(qctx, &self.lexicon);
        Some(score_indexed(&qv, id, e, params))
    }

    /// Top-`k` entries with a positive score.
    pub fn query(
        &self,
        qctx: &QueryContext,
        params: &ScoringParams,
        k: usize,
    ) -> Result<Vec<MatchResult>> {
        self.query_excluding(qctx, params, k, None)
    }

    /// Like [`query`](Self::query) with one entry id left out.
    pub fn query_excluding(
        &self,
        qctx: &QueryContext,
        params: &ScoringParams,
        k: usize,
        exclude: Option<usize>,
    ) -> Result<Vec<MatchResult>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let qv = QueryVectors::new(qctx, &self.lexicon);
        let scored: Vec<MatchResult> = self
            .candidates(qctx)
            .into_iter()
            .filter(|&id| Some(id) != exclude)
            .map(|id| score_indexed(&qv, id, &self.entries[id], params))
            .filter(|r| r.score > 0.0)
            .collect();
        let mut ranked = rank_results(scored, params.near_tie_rel);
        ranked.truncate(k);
        Ok(ranked)
    }

    pub fn write_snapshot<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(SNAPSHOT_MAGIC)?;
        writer.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        serde_json::to_writer(&mut writer, self)?;
        writer.flush()?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut reader: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        reader
            .read_exact(&mut magic)
            .map_err(|_| Error::Snapshot("truncated header".into()))?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("not an index snapshot".into()));
        }
        let mut version = [0u8; 4];
        reader
            .read_exact(&mut version)
            .map_err(|_| Error::Snapshot("truncated header".into()))?;
        let version = u32::from_le_bytes(version);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {version} (expected {SNAPSHOT_VERSION})"
            )));
        }
        let index: InvertedIndex = serde_json::from_reader(reader)?;
        index.check_postings()?;
        Ok(index)
    }

    fn check_postings(&self) -> Result<()> {
        let n = self.entries.len() as u32;
        let tables = [
            &self.context_postings,
            &self.response_postings,
            &self.context2_postings,
        ];
        if tables
            .iter()
            .flat_map(|t| t.values())
            .flatten()
            .any(|&id| id >= n)
        {
            return Err(Error::Snapshot("posting refers to a missing entry".into()));
        }
        Ok(())
    }
}
