//! Conversation persistence.
//!
//! The file backend keeps one append-only record file per session: a header
//! line naming the format and version, then one JSON turn per line. A
//! trailing line without a newline is an interrupted write and is ignored on
//! read, so a reader always sees a prefix of acknowledged turns.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dialogue_manager::{Component, UserPrefs};
use crate::error::{Error, Result};

pub const RECORD_FORMAT: &str = "selftalk-session";
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TurnRecord {
    pub timestamp_ms: u64,
    pub speaker: Speaker,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<Component>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Session topic after this turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefs: Option<UserPrefs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConversationRecord {
    pub session_id: String,
    pub turns: Vec<TurnRecord>,
    pub final_topic: Option<String>,
    pub preferences: UserPrefs,
}

impl ConversationRecord {
    fn from_turns(session_id: &str, turns: Vec<TurnRecord>) -> Self {
        let final_topic = turns.last().and_then(|t| t.topic.clone());
        let preferences = turns
            .iter()
            .rev()
            .find_map(|t| t.prefs.clone())
            .unwrap_or_default();
        Self {
            session_id: session_id.to_string(),
            turns,
            final_topic,
            preferences,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionFilter {
    /// Only sessions whose final topic is this label.
    pub topic: Option<String>,
}

pub trait Store: Send + Sync {
    /// Appends turns atomically: either all are acknowledged or none are.
    fn save_turns(&self, session_id: &str, turns: &[TurnRecord]) -> Result<()>;

    fn save_turn(&self, session_id: &str, turn: &TurnRecord) -> Result<()> {
        self.save_turns(session_id, std::slice::from_ref(turn))
    }

    fn load_session(&self, session_id: &str) -> Result<ConversationRecord>;

    /// Session ids in creation order.
    fn list_sessions(&self, filter: &SessionFilter) -> Result<Vec<String>>;

    fn close(&self);
}

fn check_monotone(last: Option<u64>, turns: &[TurnRecord]) -> Result<()> {
    let mut prev = last.unwrap_or(0);
    for t in turns {
        if t.timestamp_ms < prev {
            return Err(Error::InvalidArgument("turn timestamps must not decrease".into()));
        }
        prev = t.timestamp_ms;
    }
    Ok(())
}

fn filter_matches(filter: &SessionFilter, record: &ConversationRecord) -> bool {
    filter
        .topic
        .as_ref()
        .is_none_or(|t| record.final_topic.as_ref() == Some(t))
}

type SessionTurns = BTreeMap<String, Vec<TurnRecord>>;

#[derive(Default)]
pub struct MemoryStore {
    sessions: Mutex<(Vec<String>, SessionTurns)>,
    closed: AtomicBool,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Store for MemoryStore {
    fn save_turns(&self, session_id: &str, turns: &[TurnRecord]) -> Result<()> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(Error::StoreClosed);
        }
        let mut guard = self.sessions.lock().expect("store lock poisoned");
        let (order, sessions) = &mut *guard;
        let last = sessions
            .get(session_id)
            .and_then(|t| t.last())
            .map(|t| t.timestamp_ms);
        check_monotone(last, turns)?;
        if !sessions.contains_key(session_id) {
            order.push(session_id.to_string());
        }
        sessions
            .entry(session_id.to_string())
            .or_default()
            .extend_from_slice(turns);
        Ok(())
    }

    fn load_session(&self, session_id: &str) -> Result<ConversationRecord> {
        let guard = self.sessions.lock().expect("store lock poisoned");
        guard
            .1
            .get(session_id)
            .map(|turns| ConversationRecord::from_turns(session_id, turns.clone()))
            .ok_or_else(|| Error::NotFound(session_id.to_string()))
    }

    fn list_sessions(&self, filter: &SessionFilter) -> Result<Vec<String>> {
        let ids = self.sessions.lock().expect("store lock poisoned").0.clone();
        let mut out = Vec::new();
        for id in ids {
            if filter_matches(filter, &self.load_session(&id)?) {
                out.push(id);
            }
        }
        Ok(out)
    }

    fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RecordHeader {
    format: String,
    version: u32,
    session_id: String,
}

/// Append-only record files under one directory plus a `sessions.index`
/// file listing session ids in creation order.
pub struct FileStore {
    dir: PathBuf,
    // last acknowledged timestamp per session; also serialises writers
    writers: Mutex<BTreeMap<String, u64>>,
    closed: AtomicBool,
}

impl FileStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            writers: Mutex::new(BTreeMap::new()),
            closed: AtomicBool::new(false),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn session_path(&self, session_id: &str) -> Result<PathBuf> {
        let valid = !session_id.is_empty()
            && session_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !valid {
            return Err(Error::InvalidArgument(format!("invalid session id `{session_id}`")));
        }
        Ok(self.dir.join(format!("{session_id}.session.jsonl")))
    }

    fn index_path(&self) -> PathBuf {
        self.dir.join("sessions.index")
    }

    fn read_turns(&self, session_id: &str) -> Result<Vec<TurnRecord>> {
        let path = self.session_path(session_id)?;
        let mut text = String::new();
        match File::open(&path) {
            Ok(mut f) => f.read_to_string(&mut text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::NotFound(session_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let source = path.display().to_string();
        // only newline-terminated lines were acknowledged
        let complete = match text.rfind('\n') {
            Some(end) => &text[..end],
            None => "",
        };
        let mut lines = complete.lines().enumerate();
        let Some((_, header)) = lines.next() else {
            return Err(Error::NotFound(session_id.to_string()));
        };
        let header: RecordHeader = serde_json::from_str(header)
            .map_err(|e| Error::parse(&source, 1, format!("bad header: {e}")))?;
        if header.format != RECORD_FORMAT || header.version != RECORD_VERSION {
            return Err(Error::parse(
                &source,
                1,
                format!("unsupported record format {} v{}", header.format, header.version),
            ));
        }
        lines
            .map(|(idx, line)| {
                serde_json::from_str(line).map_err(|e| Error::parse(&source, idx + 1, e.to_string()))
            })
            .collect()
    }

    fn last_timestamp(&self, session_id: &str) -> Result<Option<u64>> {
        match self.read_turns(session_id) {
            Ok(turns) => Ok(turns.last().map(|t| t.timestamp_ms)),
            Err(Error::NotFound(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

impl Store for FileStore {
    fn save_turns(&self, session_id: &str, turns: &[TurnRecord]) -> Result<()> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(Error::StoreClosed);
        }
        let path = self.session_path(session_id)?;
        let mut writers = self.writers.lock().expect("store lock poisoned");
        let last = match writers.get(session_id) {
            Some(&ts) => Some(ts),
            None => self.last_timestamp(session_id)?,
        };
        check_monotone(last, turns)?;

        let mut payload = String::new();
        let is_new = !path.exists();
        if is_new {
            let header = RecordHeader {
                format: RECORD_FORMAT.into(),
                version: RECORD_VERSION,
                session_id: session_id.into(),
            };
            payload.push_str(&serde_json::to_string(&header)?);
            payload.push('\n');
        }
        for t in turns {
            payload.push_str(&serde_json::to_string(t)?);
            payload.push('\n');
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        file.write_all(payload.as_bytes())?;
        file.sync_data()?;

        if is_new {
            let mut index = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.index_path())?;
            writeln!(index, "{session_id}")?;
        }
        if let Some(t) = turns.last() {
            writers.insert(session_id.to_string(), t.timestamp_ms);
        } else if let Some(ts) = last {
            writers.insert(session_id.to_string(), ts);
        }
        Ok(())
    }

    fn load_session(&self, session_id: &str) -> Result<ConversationRecord> {
        Ok(ConversationRecord::from_turns(session_id, self.read_turns(session_id)?))
    }

    fn list_sessions(&self, filter: &SessionFilter) -> Result<Vec<String>> {
        let file = match File::open(self.index_path()) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let id = line?;
            let id = id.trim();
            if id.is_empty() || !seen.insert(id.to_string()) {
                continue;
            }
            let record = match self.load_session(id) {
                Ok(r) => r,
                Err(Error::NotFound(_)) => continue,
                Err(e) => return Err(e),
            };
            if filter_matches(filter, &record) {
                out.push(id.to_string());
            }
        }
        Ok(out)
    }

    fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
    }
}
