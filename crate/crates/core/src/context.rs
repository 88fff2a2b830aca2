//! Per-group slot context with an append-only event log and snapshot files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dialog::{Frame, SlotValue};

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("undeclared slot {0:?}")]
    UndeclaredSlot(String),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub group: String,
    pub slot: String,
    pub value: SlotValue,
    pub writer: String,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub kind: String,
    pub payload: Value,
    pub timestamp: u64,
}

pub const SLOT_EVENT: &str = "slot";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupContext {
    pub group_id: String,
    pub slots: BTreeMap<String, SlotValue>,
    pub log: Vec<LogEntry>,
    pub next_seq: u64,
}

impl GroupContext {
    fn new(group_id: &str) -> Self {
        GroupContext { group_id: group_id.to_string(), next_seq: 1, ..Default::default() }
    }

    fn append(&mut self, kind: &str, payload: Value, timestamp: u64) -> &LogEntry {
        let entry = LogEntry { seq: self.next_seq, kind: kind.to_string(), payload, timestamp };
        self.next_seq += 1;
        self.log.push(entry);
        self.log.last().expect("just pushed")
    }

    fn validate(&self) -> Result<(), String> {
        for (i, e) in self.log.iter().enumerate() {
            if e.seq != i as u64 + 1 {
                return Err(format!("log seq {} at position {}", e.seq, i));
            }
        }
        if self.next_seq != self.log.len() as u64 + 1 {
            return Err(format!("next_seq {} after {} entries", self.next_seq, self.log.len()));
        }
        let rebuilt = replay_slots(&self.log).map_err(|e| e.to_string())?;
        if rebuilt != self.slots {
            return Err("slot map does not match the log".into());
        }
        Ok(())
    }
}

/// Rebuilds a slot map from the slot records of a log.
pub fn replay_slots(log: &[LogEntry]) -> Result<BTreeMap<String, SlotValue>, serde_json::Error> {
    let mut slots = BTreeMap::new();
    for e in log.iter().filter(|e| e.kind == SLOT_EVENT) {
        let rec: ContextRecord = serde_json::from_value(e.payload.clone())?;
        slots.insert(rec.slot, rec.value);
    }
    Ok(slots)
}

#[derive(Debug, Default)]
pub struct ContextStore {
    vocabulary: BTreeSet<String>,
    groups: HashMap<String, GroupContext>,
    dir: Option<PathBuf>,
}

impl ContextStore {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(vocabulary: I) -> Self {
        ContextStore { vocabulary: vocabulary.into_iter().map(Into::into).collect(), ..Default::default() }
    }

    /// Mirror the log (`<group>.log.jsonl`) and snapshots
    /// (`<group>.snapshot.json`) under `dir`.
    pub fn with_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self, ContextError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| io_err(&dir, source))?;
        self.dir = Some(dir);
        Ok(self)
    }

    pub fn declares(&self, slot: &str) -> bool {
        self.vocabulary.contains(slot)
    }

    fn group_mut(&mut self, group: &str) -> &mut GroupContext {
        self.groups.entry(group.to_string()).or_insert_with(|| GroupContext::new(group))
    }

    pub fn put_slot(
        &mut self,
        group: &str,
        name: &str,
        value: SlotValue,
        writer: &str,
        timestamp: u64,
    ) -> Result<Option<SlotValue>, ContextError> {
        if !self.declares(name) {
            return Err(ContextError::UndeclaredSlot(name.to_string()));
        }
        let record = ContextRecord {
            group: group.to_string(),
            slot: name.to_string(),
            value: value.clone(),
            writer: writer.to_string(),
            timestamp,
        };
        let payload = serde_json::to_value(&record).expect("record serializes");
        self.log_event(group, SLOT_EVENT, payload, timestamp)?;
        Ok(self.group_mut(group).slots.insert(name.to_string(), value))
    }

    pub fn get_slot(&self, group: &str, name: &str) -> Option<&SlotValue> {
        self.groups.get(group).and_then(|g| g.slots.get(name))
    }

    pub fn frame(&self, group: &str) -> Frame {
        Frame { slots: self.groups.get(group).map(|g| g.slots.clone()).unwrap_or_default() }
    }

    pub fn log(&self, group: &str) -> &[LogEntry] {
        self.groups.get(group).map_or(&[], |g| g.log.as_slice())
    }

    /// Sequence number the next log entry of `group` will receive.
    pub fn next_seq(&self, group: &str) -> u64 {
        self.groups.get(group).map_or(1, |g| g.next_seq)
    }

    pub fn log_event(&mut self, group: &str, kind: &str, payload: Value, timestamp: u64) -> Result<u64, ContextError> {
        let dir = self.dir.clone();
        let entry = self.group_mut(group).append(kind, payload, timestamp).clone();
        if let Some(dir) = dir {
            let path = dir.join(format!("{}.log.jsonl", file_stem(group)));
            let mut f =
                OpenOptions::new().create(true).append(true).open(&path).map_err(|source| io_err(&path, source))?;
            let line = serde_json::to_string(&entry).expect("entry serializes");
            writeln!(f, "{line}").map_err(|source| io_err(&path, source))?;
        }
        Ok(entry.seq)
    }

    pub fn snapshot(&self, group: &str) -> Vec<u8> {
        let ctx = self.groups.get(group).cloned().unwrap_or_else(|| GroupContext::new(group));
        serde_json::to_vec(&ctx).expect("context serializes")
    }

    /// Writes the snapshot of `group` to the context directory, if any.
    pub fn persist(&self, group: &str) -> Result<Option<PathBuf>, ContextError> {
        let Some(dir) = &self.dir else { return Ok(None) };
        let path = dir.join(format!("{}.snapshot.json", file_stem(group)));
        fs::write(&path, self.snapshot(group)).map_err(|source| io_err(&path, source))?;
        Ok(Some(path))
    }

    /// Replaces the context of the blob's group. A blob that does not parse
    /// or is internally inconsistent leaves the store untouched.
    pub fn restore(&mut self, blob: &[u8]) -> Result<String, ContextError> {
        let ctx: GroupContext = serde_json::from_slice(blob).map_err(|e| ContextError::Corrupt(e.to_string()))?;
        ctx.validate().map_err(ContextError::Corrupt)?;
        if let Some(bad) = ctx.slots.keys().find(|k| !self.declares(k)) {
            return Err(ContextError::UndeclaredSlot(bad.clone()));
        }
        let id = ctx.group_id.clone();
        self.groups.insert(id.clone(), ctx);
        Ok(id)
    }

    pub fn remove(&mut self, group: &str) -> Option<GroupContext> {
        self.groups.remove(group)
    }
}

fn file_stem(group: &str) -> String {
    group.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn io_err(path: &Path, source: std::io::Error) -> ContextError {
    ContextError::Io { path: path.display().to_string(), source }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::TimeUnit;
    use proptest::prelude::*;

    fn store() -> ContextStore {
        ContextStore::new(["period", "initial_value"])
    }

    #[test]
    fn write_read_and_previous() {
        let mut s = store();
        assert_eq!(s.get_slot("g", "period"), None);
        let two = SlotValue::period(2.0, TimeUnit::Year);
        assert_eq!(s.put_slot("g", "period", two.clone(), "u", 1).unwrap(), None);
        assert_eq!(s.get_slot("g", "period"), Some(&two));
        let six = SlotValue::period(6.0, TimeUnit::Month);
        assert_eq!(s.put_slot("g", "period", six.clone(), "u", 2).unwrap(), Some(two));
        assert_eq!(s.get_slot("g", "period"), Some(&six));
        assert!(matches!(
            s.put_slot("g", "foo", six, "u", 3),
            Err(ContextError::UndeclaredSlot(n)) if n == "foo"
        ));
        assert_eq!(s.log("g").len(), 2);
    }

    #[test]
    fn empty_round_trip() {
        let mut s = store();
        let blob = s.snapshot("g");
        let mut t = store();
        assert_eq!(t.restore(&blob).unwrap(), "g");
        assert!(t.frame("g").slots.is_empty());
        assert_eq!(t.next_seq("g"), 1);
        s.restore(&blob).unwrap();
    }

    #[test]
    fn corrupt_blob_leaves_state_intact() {
        let mut s = store();
        s.put_slot("g", "initial_value", SlotValue::amount(50.0, "BRL"), "u", 1).unwrap();
        let blob = s.snapshot("g");
        let before = s.snapshot("g");
        assert!(matches!(s.restore(&blob[..blob.len() / 2]), Err(ContextError::Corrupt(_))));
        let mut tampered: GroupContext = serde_json::from_slice(&blob).unwrap();
        tampered.next_seq = 9;
        assert!(s.restore(&serde_json::to_vec(&tampered).unwrap()).is_err());
        let mut tampered: GroupContext = serde_json::from_slice(&blob).unwrap();
        tampered.slots.clear();
        assert!(s.restore(&serde_json::to_vec(&tampered).unwrap()).is_err());
        assert_eq!(s.snapshot("g"), before);
    }

    #[test]
    fn groups_are_isolated() {
        let mut s = store();
        s.put_slot("a", "period", SlotValue::period(1.0, TimeUnit::Day), "u", 1).unwrap();
        assert_eq!(s.get_slot("b", "period"), None);
        assert_eq!(s.next_seq("b"), 1);
    }

    #[test]
    fn files_mirror_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = store().with_dir(dir.path()).unwrap();
        s.put_slot("g/1", "period", SlotValue::period(3.0, TimeUnit::Year), "u", 1).unwrap();
        s.log_event("g/1", "utterance", serde_json::json!({"text": "hi"}), 2).unwrap();
        let path = s.persist("g/1").unwrap().unwrap();
        let log = fs::read_to_string(dir.path().join("g_1.log.jsonl")).unwrap();
        let entries: Vec<LogEntry> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(entries, s.log("g/1"));
        let mut t = store();
        t.restore(&fs::read(path).unwrap()).unwrap();
        assert_eq!(t.frame("g/1"), s.frame("g/1"));
    }

    proptest! {
        #[test]
        fn log_replay_and_round_trip(writes in proptest::collection::vec((0usize..2, 1u32..1000), 0..30)) {
            let mut s = store();
            for (i, (slot, v)) in writes.iter().enumerate() {
                let (name, value) = if *slot == 0 {
                    ("period", SlotValue::period(*v as f64, TimeUnit::Month))
                } else {
                    ("initial_value", SlotValue::amount(*v as f64, "BRL"))
                };
                s.put_slot("g", name, value, "u", i as u64).unwrap();
                s.log_event("g", "utterance", Value::Null, i as u64).unwrap();
            }
            let seqs: Vec<u64> = s.log("g").iter().map(|e| e.seq).collect();
            let expected: Vec<u64> = (1..=seqs.len() as u64).collect();
            prop_assert_eq!(seqs, expected);
            prop_assert_eq!(replay_slots(s.log("g")).unwrap(), s.frame("g").slots);
            let blob = s.snapshot("g");
            let mut t = store();
            t.restore(&blob).unwrap();
            prop_assert_eq!(t.snapshot("g"), blob);
            prop_assert_eq!(t.next_seq("g"), s.next_seq("g"));
        }
    }
}
