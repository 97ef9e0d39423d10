//! Newline-delimited JSON event journal plus an atomically replaced snapshot.
//!
//! Every line is `{"seq":N,"recordedAt":...,"event":{...}}` with `seq`
//! starting at 1 and increasing by one. Appends are fsynced before they are
//! acknowledged. The journal is never rewritten during normal operation; the
//! snapshot only shortens replay.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use warden_core::ingest::to_canonical_json;

pub const JOURNAL_FILE: &str = "journal.ndjson";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt journal after sequence {last_valid_seq}: {reason}")]
    Corrupt { last_valid_seq: u64, reason: String },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Entry<E> {
    pub seq: u64,
    pub recorded_at: DateTime<Utc>,
    pub event: E,
}

#[derive(Serialize)]
struct EntryRef<'a, E> {
    seq: u64,
    #[serde(rename = "recordedAt")]
    recorded_at: DateTime<Utc>,
    event: &'a E,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<S> {
    pub seq: u64,
    pub state: S,
}

/// Result of scanning a journal file.
#[derive(Debug)]
pub struct Scan<E> {
    pub entries: Vec<Entry<E>>,
    /// Byte length of the valid prefix.
    pub valid_len: u64,
    /// Set when the file has bytes past the valid prefix.
    pub corruption: Option<String>,
}

impl<E> Scan<E> {
    pub fn last_seq(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.seq)
    }
}

/// Parse as many well-formed, contiguous entries as possible.
pub fn scan<E: DeserializeOwned>(bytes: &[u8]) -> Scan<E> {
    let mut entries: Vec<Entry<E>> = Vec::new();
    let mut offset = 0usize;
    let mut corruption = None;
    while offset < bytes.len() {
        let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            corruption = Some("truncated final event".to_owned());
            break;
        };
        let line = &bytes[offset..offset + nl];
        let expected = entries.last().map_or(1, |e| e.seq + 1);
        match serde_json::from_slice::<Entry<E>>(line) {
            Ok(entry) if entry.seq == expected => entries.push(entry),
            Ok(entry) => {
                corruption = Some(format!("expected sequence {expected}, found {}", entry.seq));
                break;
            }
            Err(e) => {
                corruption = Some(format!("unreadable event {expected}: {e}"));
                break;
            }
        }
        offset += nl + 1;
    }
    Scan { entries, valid_len: offset as u64, corruption }
}

/// Append handle on the journal file.
#[derive(Debug)]
pub struct Journal {
    file: File,
    path: PathBuf,
    last_seq: u64,
}

impl Journal {
    /// Open the journal in `dir`, returning the handle and every entry.
    ///
    /// A damaged tail is an error unless `repair` is set, in which case the
    /// file is cut back to its last complete event.
    pub fn open<E: DeserializeOwned>(dir: &Path, repair: bool) -> Result<(Self, Vec<Entry<E>>), JournalError> {
        let path = dir.join(JOURNAL_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let scanned = scan::<E>(&bytes);
        let file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        if let Some(reason) = scanned.corruption.clone() {
            if !repair {
                return Err(JournalError::Corrupt { last_valid_seq: scanned.last_seq(), reason });
            }
            tracing::warn!(last_valid_seq = scanned.last_seq(), %reason, "cutting journal back to last complete event");
            file.set_len(scanned.valid_len)?;
            file.sync_all()?;
        }
        let last_seq = scanned.entries.last().map_or(0, |e| e.seq);
        Ok((Self { file, path, last_seq }, scanned.entries))
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Durably append `event` as the next sequence number.
    pub fn append<E: Serialize>(&mut self, recorded_at: DateTime<Utc>, event: &E) -> Result<u64, JournalError> {
        let seq = self.last_seq + 1;
        let mut line = serde_json::to_vec(&EntryRef { seq, recorded_at, event }).expect("events always serialize");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.last_seq = seq;
        Ok(seq)
    }
}

pub fn read_snapshot<S: DeserializeOwned>(dir: &Path) -> Result<Option<Snapshot<S>>, JournalError> {
    match fs::read(dir.join(SNAPSHOT_FILE)) {
        Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(|e| JournalError::CorruptSnapshot(e.to_string())),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Replace the snapshot atomically: write a temporary file, fsync, rename.
pub fn write_snapshot<S: Serialize>(dir: &Path, seq: u64, state: &S) -> Result<(), JournalError> {
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&to_canonical_json(&Snapshot { seq, state }))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
    // Persist the rename itself; not every platform lets a directory be opened.
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}
