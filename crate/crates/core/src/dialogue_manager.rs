//! The priority-queue arbiter.
//!
//! Components are tried in a fixed order: rules, an optional external
//! answerer for WH-questions, high-confidence retrieval, likes/dislikes,
//! mid-confidence retrieval, proactive questions, the generator and finally
//! the backup list. Every candidate text is checked against the blocklist
//! and a rejected text falls through to the next stage.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TopicRegistry;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::lexicon::tokenize;
use crate::match_index::{InvertedIndex, MatchResult, QueryContext, ScoringParams};
use crate::preprocess::{preprocess, Gazetteer, UserSignal, PRONOUN_WINDOW};
use crate::rules::{likes_dislikes, FactStore, LikesConfig, RuleCategory, RuleSet};
use crate::store::{ConversationRecord, Speaker, TurnRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Component {
    RuleBased,
    MatchingScore,
    LikesDislikes,
    Proactive,
    Generator,
    ExternalAnswerer,
    Backup,
    /// The session greeting. Not a reply, so usage reports skip it.
    StartMessage,
}

impl Component {
    pub const ALL: [Component; 8] = [
        Component::RuleBased,
        Component::MatchingScore,
        Component::LikesDislikes,
        Component::Proactive,
        Component::Generator,
        Component::ExternalAnswerer,
        Component::Backup,
        Component::StartMessage,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Component::RuleBased => "ruleBased",
            Component::MatchingScore => "matchingScore",
            Component::LikesDislikes => "likesDislikes",
            Component::Proactive => "proactive",
            Component::Generator => "generator",
            Component::ExternalAnswerer => "externalAnswerer",
            Component::Backup => "backup",
            Component::StartMessage => "startMessage",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Component::ALL
            .into_iter()
            .find(|c| c.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown component `{s}`"))
    }
}

/// Where a reply came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ReplyMeta {
    Rule {
        index: usize,
        pattern: String,
        category: RuleCategory,
    },
    BankEntry {
        entry_id: usize,
        dialogue_id: String,
        turn_index: usize,
        topic: String,
    },
    Question {
        id: String,
    },
    /// The yes/no follow-up to an earlier question.
    FollowUp {
        question_id: String,
    },
    Entity {
        canonical: String,
    },
    Backup {
        index: usize,
    },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReply {
    pub text: String,
    pub component: Component,
    /// Present only for matching-score replies.
    pub confidence: Option<f64>,
    pub meta: ReplyMeta,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserPrefs {
    pub likes: BTreeSet<String>,
    pub dislikes: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum QuestionKind {
    EntityProbe,
    YesNoGauge,
}

impl FromStr for QuestionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entityprobe" | "probe" => Ok(QuestionKind::EntityProbe),
            "yesnogauge" | "yesno" | "gauge" => Ok(QuestionKind::YesNoGauge),
            other => Err(format!("unknown question kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowUps {
    pub yes: String,
    pub no: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProactiveQuestion {
    pub id: String,
    pub kind: QuestionKind,
    pub topic: String,
    pub text: String,
    pub follow_ups: Option<FollowUps>,
}

/// Reads `id<TAB>kind<TAB>topic<TAB>text[<TAB>yes<TAB>no]` lines. Blank lines
/// and `#` comments are skipped.
pub fn load_questions<R: BufRead>(
    reader: R,
    source_name: &str,
    registry: &TopicRegistry,
) -> Result<Vec<ProactiveQuestion>> {
    let mut out: Vec<ProactiveQuestion> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let n = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 4 && fields.len() != 6 {
            return Err(Error::parse(source_name, n, "expected 4 or 6 tab-separated fields"));
        }
        let kind: QuestionKind = fields[1].parse().map_err(|e| Error::parse(source_name, n, e))?;
        let topic = fields[2].to_string();
        if !registry.contains(&topic) {
            return Err(Error::parse(source_name, n, format!("unknown topic `{topic}`")));
        }
        let follow_ups = (fields.len() == 6).then(|| FollowUps {
            yes: fields[4].to_string(),
            no: fields[5].to_string(),
        });
        match (kind, &follow_ups) {
            (QuestionKind::YesNoGauge, None) => {
                return Err(Error::parse(source_name, n, "yes/no question needs both follow-ups"))
            }
            (QuestionKind::EntityProbe, Some(_)) => {
                return Err(Error::parse(source_name, n, "entity probe takes no follow-ups"))
            }
            _ => {}
        }
        if fields[0].is_empty() || fields[3].is_empty() {
            return Err(Error::parse(source_name, n, "empty id or text"));
        }
        if out.iter().any(|q| q.id == fields[0]) {
            return Err(Error::parse(source_name, n, format!("duplicate question id `{}`", fields[0])));
        }
        out.push(ProactiveQuestion {
            id: fields[0].to_string(),
            kind,
            topic,
            text: fields[3].to_string(),
            follow_ups,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blocklist {
    words: HashSet<String>,
}

impl Blocklist {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .flat_map(|w| tokenize(w.as_ref()))
                .collect(),
        }
    }

    /// One token per line; blank lines and `#` comments are skipped.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut words = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let w = line.trim();
            if !w.is_empty() && !w.starts_with('#') {
                words.push(w.to_string());
            }
        }
        Ok(Self::new(words))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterVerdict {
    Pass,
    Reject,
}

/// Token-level check: a blocklisted word inside a longer clean word passes.
pub fn profanity_filter(text: &str, blocklist: &Blocklist) -> FilterVerdict {
    if tokenize(text).iter().any(|t| blocklist.contains(t)) {
        FilterVerdict::Reject
    } else {
        FilterVerdict::Pass
    }
}

/// Answers factual WH-questions from an outside knowledge source.
pub trait ExternalAnswerer: Send + Sync {
    fn answer(&self, question: &str) -> Option<String>;
}

/// Always abstains.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoExternalAnswer;

impl ExternalAnswerer for NoExternalAnswer {
    fn answer(&self, _question: &str) -> Option<String> {
        None
    }
}

const WH_WORDS: &[&str] = &["who", "what", "when", "where", "why", "which", "how", "whose", "whom"];
const AFFIRMATIVE: &[&str] = &[
    "yes", "yeah", "yep", "yup", "sure", "absolutely", "definitely", "certainly", "ok", "okay",
    "of course", "i do", "i did", "i have",
];
const NEGATIVE: &[&str] = &[
    "no", "nope", "nah", "not really", "never", "i don't", "i do not", "i didn't", "i haven't",
];

pub fn is_wh_question(text: &str) -> bool {
    tokenize(text)
        .first()
        .is_some_and(|t| WH_WORDS.contains(&t.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Answer {
    Yes,
    No,
}

/// Yes/no detection from the leading words of the utterance.
pub fn classify_answer(text: &str) -> Option<Answer> {
    let tokens = tokenize(text);
    let starts = |phrase: &str| {
        let words: Vec<&str> = phrase.split(' ').collect();
        words.len() <= tokens.len() && words.iter().zip(&tokens).all(|(a, b)| a == b)
    };
    // negatives first so "i don't" is not read as "i do"
    if NEGATIVE.iter().any(|p| starts(p)) {
        Some(Answer::No)
    } else if AFFIRMATIVE.iter().any(|p| starts(p)) {
        Some(Answer::Yes)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TranscriptTurn {
    pub timestamp_ms: u64,
    pub speaker: Speaker,
    pub raw: String,
    pub resolved: Option<String>,
    pub component: Option<Component>,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub session_id: String,
    pub transcript: Vec<TranscriptTurn>,
    pub current_topic: Option<String>,
    pub user_prefs: UserPrefs,
    /// Agent replies since the last proactive exchange.
    pub turns_since_proactive: u32,
    pub component_counters: BTreeMap<Component, u64>,
    pending_follow_up: Option<(String, FollowUps)>,
    asked: BTreeSet<String>,
    backup_cursor: usize,
    rng: ChaCha8Rng,
}

impl SessionState {
    /// The question awaiting a yes/no answer, with its follow-ups.
    pub fn pending_follow_up(&self) -> Option<(&str, &FollowUps)> {
        self.pending_follow_up.as_ref().map(|(id, f)| (id.as_str(), f))
    }

    pub fn last_agent_text(&self) -> Option<&str> {
        self.transcript
            .iter()
            .rev()
            .find(|t| t.speaker == Speaker::Agent)
            .map(|t| t.raw.as_str())
    }

    /// Number of agent replies so far, excluding the greeting.
    pub fn reply_count(&self) -> u64 {
        self.component_counters.values().sum()
    }

    /// The turn records a store should hold for this transcript suffix.
    pub fn turn_records(&self, from: usize) -> Vec<TurnRecord> {
        self.transcript[from..]
            .iter()
            .map(|t| TurnRecord {
                timestamp_ms: t.timestamp_ms,
                speaker: t.speaker,
                raw: t.raw.clone(),
                resolved: t.resolved.clone(),
                component: t.component,
                confidence: t.confidence,
                topic: self.current_topic.clone(),
                prefs: (t.speaker == Speaker::Agent).then(|| self.user_prefs.clone()),
            })
            .collect()
    }

    fn push(&mut self, speaker: Speaker, raw: &str, resolved: Option<String>, reply: Option<&ComponentReply>) {
        let now = now_ms();
        let last = self.transcript.last().map_or(0, |t| t.timestamp_ms);
        self.transcript.push(TranscriptTurn {
            timestamp_ms: now.max(last),
            speaker,
            raw: raw.to_string(),
            resolved,
            component: reply.map(|r| r.component),
            confidence: reply.and_then(|r| r.confidence),
        });
    }
}

type QuestionTier<'a> = Box<dyn Fn(&ProactiveQuestion) -> bool + 'a>;

#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
fn now_ms() -> u64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

// no clock without a host; turns still get monotone stamps
#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
fn now_ms() -> u64 {
    0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub params: ScoringParams,
    /// Agent replies that must pass between proactive exchanges.
    pub proactive_interval: u32,
    pub likes: LikesConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            params: ScoringParams::default(),
            proactive_interval: 5,
            likes: LikesConfig::default(),
        }
    }
}

/// Everything an [`Engine`] is assembled from.
pub struct EngineParts {
    pub index: InvertedIndex,
    pub registry: TopicRegistry,
    pub gazetteer: Gazetteer,
    pub rules: RuleSet,
    pub facts: FactStore,
    pub questions: Vec<ProactiveQuestion>,
    pub generator: Box<dyn Generator>,
    pub blocklist: Blocklist,
    pub backup: Vec<String>,
    pub greetings: Vec<String>,
    pub external: Box<dyn ExternalAnswerer>,
    pub config: EngineConfig,
}

/// Immutable shared resources plus the reply pipeline. Sessions carry all
/// mutable state, so one engine can serve many sessions concurrently.
pub struct Engine {
    parts: EngineParts,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("bank", &self.parts.index.len())
            .field("rules", &self.parts.rules.len())
            .field("questions", &self.parts.questions.len())
            .field("config", &self.parts.config)
            .finish()
    }
}

impl Engine {
    /// Validates that the backup and greeting lists are non-empty and clean,
    /// which keeps the pipeline total.
    pub fn new(parts: EngineParts) -> Result<Self> {
        parts.config.params.validate()?;
        if parts.config.proactive_interval == 0 {
            return Err(Error::InvalidArgument("proactive interval must be at least 1".into()));
        }
        for (name, list) in [("backup", &parts.backup), ("greeting", &parts.greetings)] {
            if list.is_empty() {
                return Err(Error::InvalidArgument(format!("{name} list is empty")));
            }
            for text in list {
                if text.trim().is_empty() || profanity_filter(text, &parts.blocklist) == FilterVerdict::Reject {
                    return Err(Error::InvalidArgument(format!(
                        "{name} text is empty or blocklisted: `{text}`"
                    )));
                }
            }
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &EngineParts {
        &self.parts
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.parts.index
    }

    pub fn config(&self) -> &EngineConfig {
        &self.parts.config
    }

    /// A fresh session whose transcript opens with a greeting.
    pub fn start_session(&self, session_id: impl Into<String>, seed: u64) -> SessionState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let greeting = self
            .parts
            .greetings
            .choose(&mut rng)
            .expect("greetings validated non-empty")
            .clone();
        let mut session = SessionState {
            session_id: session_id.into(),
            transcript: Vec::new(),
            current_topic: None,
            user_prefs: UserPrefs::default(),
            turns_since_proactive: self.parts.config.proactive_interval,
            component_counters: BTreeMap::new(),
            pending_follow_up: None,
            asked: BTreeSet::new(),
            backup_cursor: 0,
            rng,
        };
        let reply = ComponentReply {
            text: greeting.clone(),
            component: Component::StartMessage,
            confidence: None,
            meta: ReplyMeta::None,
        };
        session.push(Speaker::Agent, &greeting, None, Some(&reply));
        session
    }

    fn clean(&self, text: &str) -> bool {
        !text.trim().is_empty() && profanity_filter(text, &self.parts.blocklist) == FilterVerdict::Pass
    }

    /// Runs the pipeline for one user utterance. Fails only on blank input.
    pub fn respond(&self, session: &mut SessionState, raw: &str) -> Result<ComponentReply> {
        if raw.trim().is_empty() {
            return Err(Error::InvalidArgument("utterance is empty".into()));
        }
        let history: Vec<String> = session
            .transcript
            .iter()
            .rev()
            .take(PRONOUN_WINDOW)
            .map(|t| t.raw.clone())
            .collect();
        let processed = preprocess(raw, &history, &self.parts.gazetteer, &self.parts.registry);
        apply_signal(session, processed.signal.as_ref());
        let pending = session.pending_follow_up.take();

        let reply = self.select(session, &processed.raw, &processed.resolved, pending);

        *session.component_counters.entry(reply.component).or_insert(0) += 1;
        if reply.component == Component::Proactive {
            session.turns_since_proactive = 0;
        } else {
            session.turns_since_proactive = session.turns_since_proactive.saturating_add(1);
        }
        if let ReplyMeta::BankEntry { topic, .. } = &reply.meta {
            session.current_topic = Some(topic.clone());
        }
        session.push(Speaker::User, raw, Some(processed.resolved.clone()), None);
        session.push(Speaker::Agent, &reply.text, None, Some(&reply));
        Ok(reply)
    }

    fn select(
        &self,
        session: &mut SessionState,
        raw: &str,
        resolved: &str,
        pending: Option<(String, FollowUps)>,
    ) -> ComponentReply {
        let p = &self.parts;

        if let Some(m) = p.rules.match_rule(raw, &mut session.rng) {
            if self.clean(&m.reply) {
                return ComponentReply {
                    text: m.reply,
                    component: Component::RuleBased,
                    confidence: None,
                    meta: ReplyMeta::Rule {
                        index: m.rule_index,
                        pattern: m.pattern,
                        category: m.category,
                    },
                };
            }
        }

        if is_wh_question(resolved) {
            if let Some(text) = p.external.answer(resolved) {
                if self.clean(&text) {
                    return plain(text, Component::ExternalAnswerer, ReplyMeta::None);
                }
            }
        }

        let top = self.best_match(session, resolved);
        let mut candidate = None;
        if let Some(best) = top {
            if self.clean(&best.entry.response) {
                if best.confidence >= p.config.params.priority_threshold {
                    return match_reply(best);
                }
                if best.confidence >= p.config.params.respond_threshold {
                    candidate = Some(best);
                }
            }
        }

        let entities = p.gazetteer.tag(resolved);
        if let Some(l) = likes_dislikes(&entities, &p.facts, &p.config.likes) {
            if self.clean(&l.text) {
                return plain(l.text, Component::LikesDislikes, ReplyMeta::Entity { canonical: l.canonical });
            }
        }

        if let Some(best) = candidate {
            return match_reply(best);
        }

        if let (Some((question_id, f)), Some(answer)) = (pending, classify_answer(raw)) {
            let text = match answer {
                Answer::Yes => f.yes,
                Answer::No => f.no,
            };
            if self.clean(&text) {
                return plain(text, Component::Proactive, ReplyMeta::FollowUp { question_id });
            }
        }
        if session.turns_since_proactive >= p.config.proactive_interval {
            if let Some(q) = self.pick_question(session) {
                session.asked.insert(q.id.clone());
                session.current_topic = Some(q.topic.clone());
                session.pending_follow_up = q.follow_ups.clone().map(|f| (q.id.clone(), f));
                return plain(q.text.clone(), Component::Proactive, ReplyMeta::Question { id: q.id.clone() });
            }
        }

        let last_agent = session.last_agent_text().map(str::to_string);
        let generated = p.generator.generate(resolved, last_agent.as_deref(), &mut session.rng);
        if self.clean(&generated) {
            return plain(generated, Component::Generator, ReplyMeta::None);
        }

        let index = session.backup_cursor % p.backup.len();
        session.backup_cursor += 1;
        plain(p.backup[index].clone(), Component::Backup, ReplyMeta::Backup { index })
    }

    fn best_match(&self, session: &SessionState, resolved: &str) -> Option<MatchResult> {
        let mut qctx = QueryContext::new(resolved).ok()?;
        if let Some(prev) = session.last_agent_text() {
            qctx = qctx.with_previous(prev);
        }
        if let Some(topic) = &session.current_topic {
            qctx = qctx.with_topic(topic.clone());
        }
        self.parts
            .index
            .query(&qctx, &self.parts.config.params, 1)
            .ok()?
            .into_iter()
            .next()
    }

    /// Unasked clean questions, preferring the current topic, then liked
    /// topics, and never disliked ones.
    fn pick_question(&self, session: &mut SessionState) -> Option<&ProactiveQuestion> {
        let usable: Vec<&ProactiveQuestion> = self
            .parts
            .questions
            .iter()
            .filter(|q| !session.user_prefs.dislikes.contains(&q.topic))
            .filter(|q| self.clean(&q.text))
            .filter(|q| q.follow_ups.as_ref().is_none_or(|f| self.clean(&f.yes) && self.clean(&f.no)))
            .collect();
        let fresh: Vec<&ProactiveQuestion> = usable
            .iter()
            .copied()
            .filter(|q| !session.asked.contains(&q.id))
            .collect();
        let pool = if fresh.is_empty() { usable } else { fresh };
        let current = session.current_topic.clone();
        let tiers: [QuestionTier; 3] = [
            Box::new(|q| current.as_deref() == Some(q.topic.as_str())),
            Box::new(|q| session.user_prefs.likes.contains(&q.topic)),
            Box::new(|_| true),
        ];
        let chosen: Vec<&ProactiveQuestion> = tiers
            .iter()
            .map(|keep| pool.iter().copied().filter(|q| keep(q)).collect::<Vec<_>>())
            .find(|tier| !tier.is_empty())?;
        chosen.choose(&mut session.rng).copied()
    }
}

fn plain(text: String, component: Component, meta: ReplyMeta) -> ComponentReply {
    ComponentReply {
        text,
        component,
        confidence: None,
        meta,
    }
}

fn match_reply(best: MatchResult) -> ComponentReply {
    ComponentReply {
        text: best.entry.response.clone(),
        component: Component::MatchingScore,
        confidence: Some(best.confidence),
        meta: ReplyMeta::BankEntry {
            entry_id: best.entry_id,
            dialogue_id: best.entry.dialogue_id,
            turn_index: best.entry.turn_index,
            topic: best.entry.topic,
        },
    }
}

fn apply_signal(session: &mut SessionState, signal: Option<&UserSignal>) {
    match signal {
        Some(UserSignal::ChangeTopic(topic)) => session.current_topic = topic.clone(),
        Some(UserSignal::Likes(t)) => {
            session.user_prefs.dislikes.remove(t);
            session.user_prefs.likes.insert(t.clone());
        }
        Some(UserSignal::Dislikes(t)) => {
            session.user_prefs.likes.remove(t);
            session.user_prefs.dislikes.insert(t.clone());
        }
        None => {}
    }
}

/// Share of agent replies per component, in percent. Greetings are not replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub total: u64,
    pub counts: BTreeMap<Component, u64>,
    pub percentages: BTreeMap<Component, f64>,
}

impl UsageReport {
    pub fn from_counts(counts: &BTreeMap<Component, u64>) -> Result<Self> {
        let counts: BTreeMap<Component, u64> = counts
            .iter()
            .filter(|(c, n)| **c != Component::StartMessage && **n > 0)
            .map(|(c, n)| (*c, *n))
            .collect();
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("no replies recorded".into()));
        }
        let percentages = counts
            .iter()
            .map(|(c, n)| (*c, 100.0 * *n as f64 / total as f64))
            .collect();
        Ok(Self {
            total,
            counts,
            percentages,
        })
    }
}

impl fmt::Display for UsageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>7} {:>8}", "component", "replies", "percent")?;
        for (c, pct) in &self.percentages {
            writeln!(f, "{:<18} {:>7} {:>7.2}%", c.tag(), self.counts[c], pct)?;
        }
        write!(f, "{:<18} {:>7} {:>7.2}%", "total", self.total, 100.0)
    }
}

pub fn usage_report(sessions: &[ConversationRecord]) -> Result<UsageReport> {
    let mut counts = BTreeMap::new();
    for record in sessions {
        for turn in &record.turns {
            if let (Speaker::Agent, Some(c)) = (turn.speaker, turn.component) {
                *counts.entry(c).or_insert(0) += 1;
            }
        }
    }
    UsageReport::from_counts(&counts)
}
