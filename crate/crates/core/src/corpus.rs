//! Self-dialogue corpora: ingestion, the response bank and corpus statistics.
//!
//! Corpus files hold one conversation per block and one turn per line, with
//! blocks separated by an empty line. A block may open with `# key=value`
//! metadata lines (`id`, `worker`). A line holding only whitespace is not a
//! separator; it is an empty turn and is rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalises a display name ("Rap / Hip-Hop") to a topic label ("rap_hip_hop").
pub fn topic_label(name: &str) -> String {
    let mut label = String::new();
    for word in name
        .split(|c: char| !c.is_alphanumeric() && c != '&')
        .filter(|w| !w.is_empty())
    {
        let word = if word == "&" { "and" } else { word };
        if !label.is_empty() {
            label.push('_');
        }
        label.extend(word.chars().flat_map(char::to_lowercase));
    }
    label
}

/// Topic/subtopic registry. Every label (topic or subtopic) is a valid
/// dialogue topic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopicRegistry {
    parents: BTreeMap<String, Option<String>>,
}

impl TopicRegistry {
    /// Reads `topic<TAB>sub1|sub2|...` lines; the subtopic column is optional.
    /// Names are normalised with [`topic_label`]. `#` starts a comment line.
    pub fn load<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut registry = TopicRegistry::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let topic = topic_label(cols.next().unwrap_or_default());
            if topic.is_empty() {
                return Err(Error::parse(source_name, idx + 1, "empty topic name"));
            }
            registry.add_topic(&topic);
            if let Some(subs) = cols.next() {
                for sub in subs.split('|').map(topic_label).filter(|s| !s.is_empty()) {
                    registry.add_subtopic(&topic, &sub);
                }
            }
            if cols.next().is_some() {
                return Err(Error::parse(source_name, idx + 1, "too many columns"));
            }
        }
        Ok(registry)
    }

    pub fn add_topic(&mut self, topic: &str) {
        self.parents.entry(topic.to_string()).or_insert(None);
    }

    pub fn add_subtopic(&mut self, topic: &str, sub: &str) {
        self.add_topic(topic);
        self.parents.insert(sub.to_string(), Some(topic.to_string()));
    }

    pub fn contains(&self, label: &str) -> bool {
        self.parents.contains_key(label)
    }

    pub fn parent(&self, label: &str) -> Option<&str> {
        self.parents.get(label).and_then(|p| p.as_deref())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.parents.keys().map(String::as_str)
    }

    pub fn check(&self, label: &str) -> Result<()> {
        if self.contains(label) {
            Ok(())
        } else {
            Err(Error::UnknownTopic(label.to_string()))
        }
    }

    /// Resolves a phrase ("star wars", "The Beatles") to a registered label.
    pub fn resolve(&self, phrase: &str) -> Option<&str> {
        let label = topic_label(phrase);
        self.parents.get_key_value(&label).map(|(k, _)| k.as_str())
    }

    /// Human-readable form of a label.
    pub fn display(label: &str) -> String {
        label.replace('_', " ")
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfDialogue {
    pub id: String,
    pub topic: String,
    pub turns: Vec<String>,
    pub worker: Option<String>,
}

/// One banked response with up to two preceding turns of context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankEntry {
    pub response: String,
    pub context1: Option<String>,
    pub context2: Option<String>,
    pub topic: String,
    pub dialogue_id: String,
    pub turn_index: usize,
}

/// Parses a corpus stream into dialogues tagged with `topic`.
///
/// Dialogues without an `id` metadata line are named `<topic>:<n>` where `n`
/// is the block's position in the stream.
pub fn ingest<R: BufRead>(
    reader: R,
    topic: &str,
    registry: &TopicRegistry,
    source_name: &str,
) -> Result<Vec<SelfDialogue>> {
    registry.check(topic)?;

    let mut dialogues = Vec::new();
    let mut block: Option<BlockBuilder> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(&line);

        if line.is_empty() {
            if let Some(b) = block.take() {
                dialogues.push(b.finish(topic, dialogues.len(), source_name)?);
            }
            continue;
        }

        let b = block.get_or_insert_with(|| BlockBuilder::new(lineno));
        if let Some(meta) = line.strip_prefix('#') {
            if !b.turns.is_empty() {
                return Err(Error::parse(source_name, lineno, "metadata after first turn"));
            }
            let (key, value) = meta
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::parse(source_name, lineno, "expected `# key=value`"))?;
            let value = value.trim().to_string();
            match key.trim() {
                "id" => b.id = Some(value),
                "worker" => b.worker = Some(value),
                other => {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        format!("unknown metadata key `{other}`"),
                    ))
                }
            }
            continue;
        }

        let turn = line.trim();
        if turn.is_empty() {
            return Err(Error::parse(source_name, lineno, "empty turn inside conversation"));
        }
        b.turns.push(turn.to_string());
    }
    if let Some(b) = block.take() {
        dialogues.push(b.finish(topic, dialogues.len(), source_name)?);
    }
    Ok(dialogues)
}

struct BlockBuilder {
    start_line: usize,
    id: Option<String>,
    worker: Option<String>,
    turns: Vec<String>,
}

impl BlockBuilder {
    fn new(start_line: usize) -> Self {
        Self {
            start_line,
            id: None,
            worker: None,
            turns: Vec::new(),
        }
    }

    fn finish(self, topic: &str, position: usize, source_name: &str) -> Result<SelfDialogue> {
        if self.turns.is_empty() {
            return Err(Error::parse(
                source_name,
                self.start_line,
                "conversation block has no turns",
            ));
        }
        Ok(SelfDialogue {
            id: self.id.unwrap_or_else(|| format!("{topic}:{position}")),
            topic: topic.to_string(),
            turns: self.turns,
            worker: self.worker,
        })
    }
}

/// Writes dialogues in the corpus file format. Topics are not written; they
/// come from the file's placement in the corpus configuration.
pub fn serialize<W: Write>(dialogues: &[SelfDialogue], mut writer: W) -> Result<()> {
    for (i, d) in dialogues.iter().enumerate() {
        if i > 0 {
            writeln!(writer)?;
        }
        writeln!(writer, "# id={}", d.id)?;
        if let Some(worker) = &d.worker {
            writeln!(writer, "# worker={worker}")?;
        }
        for turn in &d.turns {
            writeln!(writer, "{turn}")?;
        }
    }
    Ok(())
}

/// Unrolls dialogues into bank entries. Context never crosses a dialogue
/// boundary.
pub fn to_bank(dialogues: &[SelfDialogue]) -> Vec<BankEntry> {
    dialogues
        .iter()
        .flat_map(|d| {
            d.turns.iter().enumerate().map(move |(i, response)| BankEntry {
                response: response.clone(),
                context1: i.checked_sub(1).map(|j| d.turns[j].clone()),
                context2: i.checked_sub(2).map(|j| d.turns[j].clone()),
                topic: d.topic.clone(),
                dialogue_id: d.id.clone(),
                turn_index: i,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicCounts {
    pub conversations: u64,
    pub words: u64,
    pub turns: u64,
}

impl TopicCounts {
    fn add(&mut self, other: &TopicCounts) {
        self.conversations += other.conversations;
        self.words += other.words;
        self.turns += other.turns;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_topic: BTreeMap<String, TopicCounts>,
    pub totals: TopicCounts,
}

/// Conversation, whitespace-word and turn counts per topic.
pub fn stats(dialogues: &[SelfDialogue]) -> CorpusStats {
    let mut per_topic: BTreeMap<String, TopicCounts> = BTreeMap::new();
    for d in dialogues {
        let counts = per_topic.entry(d.topic.clone()).or_default();
        counts.conversations += 1;
        counts.turns += d.turns.len() as u64;
        counts.words += d
            .turns
            .iter()
            .map(|t| t.split_whitespace().count() as u64)
            .sum::<u64>();
    }
    let mut totals = TopicCounts::default();
    for c in per_topic.values() {
        totals.add(c);
    }
    CorpusStats { per_topic, totals }
}

/// Published per-task counts for the released self-dialogue corpus:
/// (label, conversations, words, turns).
pub const PUBLISHED_COUNTS: &[(&str, u64, u64, u64)] = &[
    ("movies", 4_126, 814_842, 82_018),
    ("action", 414, 37_037, 4_140),
    ("comedy", 414, 36_401, 4_140),
    ("fast_and_furious", 343, 33_964, 3_430),
    ("harry_potter", 414, 44_220, 4_140),
    ("disney", 2_331, 232_573, 23_287),
    // printed as "428,33" in the source table
    ("horror", 414, 42_833, 4_138),
    ("thriller", 828, 77_975, 8_277),
    ("star_wars", 1_726, 178_351, 17_260),
    ("superhero", 414, 40_967, 4_140),
    ("music", 4_911, 924_993, 98_123),
    ("pop", 684, 62_383, 6_840),
    ("rap_hip_hop", 684, 66_376, 6_840),
    ("rock", 684, 63_349, 6_837),
    ("the_beatles", 679, 68_396, 6_781),
    ("lady_gaga", 558, 49_313, 5_566),
    ("music_and_movies", 216, 37_303, 4_320),
    ("nfl_football", 2_801, 562_801, 55_939),
];

/// Published corpus totals: conversations, words, turns.
pub const PUBLISHED_TOTALS: TopicCounts = TopicCounts {
    conversations: 24_283,
    words: 3_653_313,
    turns: 141_945,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reconciliation {
    pub topic: String,
    pub published: Option<TopicCounts>,
    pub observed: TopicCounts,
}

impl Reconciliation {
    pub fn matches(&self) -> bool {
        self.published == Some(self.observed)
    }
}

/// Compares observed counts against [`PUBLISHED_COUNTS`], one row per topic
/// present in `stats`. Discrepancies are returned, not hidden.
pub fn reconcile(stats: &CorpusStats) -> Vec<Reconciliation> {
    stats
        .per_topic
        .iter()
        .map(|(topic, observed)| Reconciliation {
            topic: topic.clone(),
            published: PUBLISHED_COUNTS
                .iter()
                .find(|(label, ..)| label == topic)
                .map(|&(_, conversations, words, turns)| TopicCounts {
                    conversations,
                    words,
                    turns,
                }),
            observed: *observed,
        })
        .collect()
}

/// Distinct topics in a set of dialogues.
pub fn topics(dialogues: &[SelfDialogue]) -> BTreeSet<&str> {
    dialogues.iter().map(|d| d.topic.as_str()).collect()
}

const BANK_FORMAT: &str = "selftalk-bank";
const BANK_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BankHeader {
    format: String,
    version: u32,
    entries: usize,
}

/// Writes a bank as JSON lines after a header line naming format, version
/// and entry count.
pub fn write_bank<W: Write>(bank: &[BankEntry], mut writer: W) -> Result<()> {
    let header = BankHeader {
        format: BANK_FORMAT.into(),
        version: BANK_VERSION,
        entries: bank.len(),
    };
    writeln!(writer, "{}", serde_json::to_string(&header)?)?;
    for e in bank {
        writeln!(writer, "{}", serde_json::to_string(e)?)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_bank<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<BankEntry>> {
    let mut lines = reader.lines().enumerate();
    let header: BankHeader = match lines.next() {
        Some((_, line)) => serde_json::from_str(&line?)
            .map_err(|e| Error::parse(source_name, 1, format!("bad header: {e}")))?,
        None => return Err(Error::parse(source_name, 0, "empty bank file")),
    };
    if header.format != BANK_FORMAT || header.version != BANK_VERSION {
        return Err(Error::parse(source_name, 1, "not a version 1 bank file"));
    }
    let mut bank = Vec::with_capacity(header.entries);
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        bank.push(serde_json::from_str(&line).map_err(|e| Error::parse(source_name, idx + 1, e.to_string()))?);
    }
    if bank.len() != header.entries {
        return Err(Error::parse(
            source_name,
            0,
            format!("header promises {} entries, found {}", header.entries, bank.len()),
        ));
    }
    Ok(bank)
}
