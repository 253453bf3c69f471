//! Append-only logs and the on-disk store.
//!
//! Every log line is `{"ts":N,"act":<frame>,"crc":C}` where `C` is the CRC-32
//! of the bytes `{"ts":N,"act":<frame>}`. Timestamps never decrease within a
//! file. A store directory holds:
//!
//! | path | content |
//! |---|---|
//! | `descriptor.json` | the deployment the kernel was booted from |
//! | `index.json` | seed, per-session counters, final tick and trace digest |
//! | `journal.log` | every accepted external submission |
//! | `sessions/<id>.log` | acts the archive agent filed for that session |
//!
//! The journal alone is enough to rebuild the kernel; the session logs are
//! the queryable record.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use placid_core::agent::EventPattern;
use placid_core::kernel::{KernelConfig, SubmitError};
use placid_core::microtools::{DeployError, Descriptor};
use placid_core::{CommunicationAct, Kernel, Tick};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::wire;

pub const JOURNAL: &str = "journal.log";
pub const SESSIONS: &str = "sessions";
pub const INDEX: &str = "index.json";
pub const DESCRIPTOR: &str = "descriptor.json";

/// Tick bound for draining a replayed kernel to quiescence.
pub const SETTLE_TICKS: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub ts: Tick,
    pub act: CommunicationAct,
}

fn framed(ts: Tick, act: &CommunicationAct) -> String {
    format!("{{\"ts\":{ts},\"act\":{}}}", wire::encode_str(act, None))
}

/// One log line without its terminator.
pub fn encode_record(ts: Tick, act: &CommunicationAct) -> String {
    let mut line = framed(ts, act);
    let crc = crc32fast::hash(line.as_bytes());
    line.pop();
    line.push_str(&format!(",\"crc\":{crc}}}"));
    line
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Framed {
    ts: Tick,
    act: Value,
}

/// Parses one log line (without terminator). The error is a reason string.
pub fn decode_record(line: &str) -> Result<LogRecord, String> {
    const KEY: &str = ",\"crc\":";
    let at = line.rfind(KEY).ok_or("missing crc")?;
    let digits = line[at + KEY.len()..].strip_suffix('}').ok_or("unterminated record")?;
    let crc: u32 = digits.parse().map_err(|_| "bad crc value")?;
    let body = format!("{}}}", &line[..at]);
    if crc32fast::hash(body.as_bytes()) != crc {
        return Err("crc mismatch".into());
    }
    let f: Framed = serde_json::from_str(&body).map_err(|e| format!("json: {e}"))?;
    let act = wire::from_value(f.act).map_err(|e| e.reason.to_string())?.act;
    if framed(f.ts, &act) != body {
        return Err("non-canonical record".into());
    }
    Ok(LogRecord { ts: f.ts, act })
}

/// Where a log failed to parse: byte offset of the offending line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseFailure {
    pub offset: u64,
    pub reason: String,
}

/// Parses a whole log. Every line must end with LF and timestamps must not
/// decrease.
pub fn parse_log(bytes: &[u8]) -> Result<Vec<LogRecord>, ParseFailure> {
    let mut out: Vec<LogRecord> = Vec::new();
    let mut offset = 0usize;
    while offset < bytes.len() {
        let fail = |reason: String| ParseFailure { offset: offset as u64, reason };
        let rest = &bytes[offset..];
        let end = rest.iter().position(|b| *b == b'\n').ok_or_else(|| fail("truncated record".into()))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| fail("encoding".into()))?;
        let rec = decode_record(line).map_err(fail)?;
        if let Some(prev) = out.last() {
            if rec.ts < prev.ts {
                return Err(fail(format!("tick {} after tick {}", rec.ts, prev.ts)));
            }
        }
        out.push(rec);
        offset += end + 1;
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{}: record at tick {ts} follows tick {last}", path.display())]
    OutOfOrder { path: PathBuf, last: Tick, ts: Tick },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: corrupt record at byte {offset}: {reason}", path.display())]
    Corrupt { path: PathBuf, offset: u64, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogError + '_ {
    move |source| LogError::Io { path: path.to_owned(), source }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, LogError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_log(&bytes).map_err(|f| LogError::Corrupt { path: path.to_owned(), offset: f.offset, reason: f.reason })
}

/// When appended records are forced to stable storage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FsyncPolicy {
    /// Leave it to the OS.
    Never,
    #[default]
    EveryRecord,
    /// Only when the store is closed.
    OnClose,
}

impl FromStr for FsyncPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "never" => Ok(FsyncPolicy::Never),
            "every-record" => Ok(FsyncPolicy::EveryRecord),
            "on-close" => Ok(FsyncPolicy::OnClose),
            other => Err(format!("unknown fsync policy `{other}` (never, every-record, on-close)")),
        }
    }
}

pub struct LogWriter {
    path: PathBuf,
    out: BufWriter<File>,
    last: Option<Tick>,
    policy: FsyncPolicy,
    records: u64,
}

impl LogWriter {
    /// Opens `path` for appending, validating what is already there.
    pub fn open(path: &Path, policy: FsyncPolicy) -> Result<Self, LogError> {
        let existing = if path.exists() { read_log(path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
        Ok(LogWriter {
            path: path.to_owned(),
            out: BufWriter::new(file),
            last: existing.last().map(|r| r.ts),
            policy,
            records: existing.len() as u64,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn append(&mut self, ts: Tick, act: &CommunicationAct) -> Result<(), LogError> {
        if let Some(last) = self.last {
            if ts < last {
                return Err(LogError::OutOfOrder { path: self.path.clone(), last, ts });
            }
        }
        let mut line = encode_record(ts, act);
        line.push('\n');
        self.out.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))?;
        if self.policy == FsyncPolicy::EveryRecord {
            self.out.get_ref().sync_data().map_err(io_err(&self.path))?;
        }
        self.last = Some(ts);
        self.records += 1;
        Ok(())
    }

    pub fn sync(&mut self) -> Result<(), LogError> {
        self.out.flush().map_err(io_err(&self.path))?;
        if self.policy != FsyncPolicy::Never {
            self.out.get_ref().sync_all().map_err(io_err(&self.path))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub records: u64,
    pub first_ts: Tick,
    pub last_ts: Tick,
    pub closed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Index {
    pub seed: u64,
    #[serde(default)]
    pub journal_records: u64,
    /// Tick and trace digest at the last orderly shutdown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_tick: Option<Tick>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_digest: Option<String>,
    #[serde(default)]
    pub sessions: BTreeMap<String, SessionEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{}: no descriptor (not a log directory?)", .0.display())]
    MissingDescriptor(PathBuf),
    #[error("{}: already holds a log; replay it or pick another directory", .0.display())]
    NotEmpty(PathBuf),
    #[error(transparent)]
    Deploy(#[from] DeployError),
    #[error("journal record {index} was rejected on replay: {error}")]
    Rejected { index: usize, error: SubmitError },
    #[error("replay did not settle within {0} ticks")]
    Unsettled(u64),
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value).expect("store files serialize");
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Format { path: path.to_owned(), reason: e.to_string() })
}

/// A log directory open for writing.
pub struct Store {
    dir: PathBuf,
    policy: FsyncPolicy,
    index: Index,
    journal: LogWriter,
    sessions: BTreeMap<String, LogWriter>,
}

impl Store {
    /// Starts a fresh log in `dir`, which may not hold one already.
    pub fn create(dir: &Path, descriptor: &Descriptor, seed: u64, policy: FsyncPolicy) -> Result<Store, StoreError> {
        fs::create_dir_all(dir.join(SESSIONS)).map_err(io_err(dir))?;
        let desc_path = dir.join(DESCRIPTOR);
        if desc_path.exists() || dir.join(JOURNAL).exists() {
            return Err(StoreError::NotEmpty(dir.to_owned()));
        }
        write_json(&desc_path, descriptor)?;
        let index = Index { seed, ..Index::default() };
        write_json(&dir.join(INDEX), &index)?;
        let journal = LogWriter::open(&dir.join(JOURNAL), policy)?;
        Ok(Store { dir: dir.to_owned(), policy, index, journal, sessions: BTreeMap::new() })
    }

    /// Reopens an existing log for appending. Returns the store together
    /// with the kernel rebuilt from its journal and advanced to the tick of
    /// the last shutdown.
    pub fn resume(dir: &Path, policy: FsyncPolicy, tap_users: bool) -> Result<(Store, Kernel), StoreError> {
        let recorded = Recorded::load(dir)?;
        let mut kernel = recorded.rebuild(true, tap_users)?;
        kernel.archive_mut().drain_new();
        let journal = LogWriter::open(&dir.join(JOURNAL), policy)?;
        let mut index = recorded.index;
        index.final_tick = None;
        index.trace_digest = None;
        let store = Store { dir: dir.to_owned(), policy, index, journal, sessions: BTreeMap::new() };
        store.write_index()?;
        Ok((store, kernel))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    /// Records an accepted external submission.
    pub fn journal(&mut self, ts: Tick, act: &CommunicationAct) -> Result<(), StoreError> {
        self.journal.append(ts, act)?;
        self.index.journal_records = self.journal.records();
        Ok(())
    }

    /// Mirrors newly filed archive records into the session logs.
    pub fn sync_archive(&mut self, kernel: &mut Kernel) -> Result<usize, StoreError> {
        let new = kernel.archive_mut().drain_new();
        for (session, filed) in &new {
            let writer = match self.sessions.get_mut(session) {
                Some(w) => w,
                None => {
                    let path = self.dir.join(SESSIONS).join(format!("{session}.log"));
                    let w = LogWriter::open(&path, self.policy)?;
                    self.sessions.entry(session.clone()).or_insert(w)
                }
            };
            writer.append(filed.tick, &filed.act)?;
            let entry = self.index.sessions.entry(session.clone()).or_insert(SessionEntry {
                first_ts: filed.tick,
                ..SessionEntry::default()
            });
            entry.records += 1;
            entry.last_ts = filed.tick;
            entry.closed |= filed.act.msg_type().as_str() == placid_core::archive::CLOSE_EVENT;
        }
        if !new.is_empty() {
            self.write_index()?;
        }
        Ok(new.len())
    }

    fn write_index(&self) -> Result<(), StoreError> {
        write_json(&self.dir.join(INDEX), &self.index)
    }

    /// Records the final tick and trace digest and syncs every file.
    pub fn close(&mut self, kernel: &mut Kernel) -> Result<(), StoreError> {
        self.sync_archive(kernel)?;
        self.index.final_tick = Some(kernel.tick());
        self.index.trace_digest = Some(kernel.trace_digest());
        self.journal.sync()?;
        for w in self.sessions.values_mut() {
            w.sync()?;
        }
        self.write_index()
    }
}

/// Everything read back from a log directory.
#[derive(Clone, Debug)]
pub struct Recorded {
    pub dir: PathBuf,
    pub descriptor: Descriptor,
    pub index: Index,
    pub journal: Vec<LogRecord>,
}

impl Recorded {
    pub fn load(dir: &Path) -> Result<Recorded, StoreError> {
        let desc_path = dir.join(DESCRIPTOR);
        if !desc_path.exists() {
            return Err(StoreError::MissingDescriptor(dir.to_owned()));
        }
        let descriptor: Descriptor = read_json(&desc_path)?;
        let index: Index = read_json(&dir.join(INDEX))?;
        let journal_path = dir.join(JOURNAL);
        let journal = if journal_path.exists() { read_log(&journal_path)? } else { Vec::new() };
        Ok(Recorded { dir: dir.to_owned(), descriptor, index, journal })
    }

    /// Boots the descriptor and feeds the journal back in. With `settle`,
    /// the kernel is then advanced to the recorded final tick, or run to
    /// quiescence when the log was never closed.
    pub fn rebuild(&self, settle: bool, tap_users: bool) -> Result<Kernel, StoreError> {
        let config = KernelConfig { timeout: self.descriptor.timeout, seed: self.index.seed, tap_users };
        let mut kernel = self.descriptor.boot_with(config)?;
        feed(&mut kernel, &self.journal)?;
        if settle {
            match self.index.final_tick {
                Some(t) => kernel.run_until(t),
                None => {
                    if !kernel.run(SETTLE_TICKS).quiescent {
                        return Err(StoreError::Unsettled(SETTLE_TICKS));
                    }
                }
            }
        }
        Ok(kernel)
    }
}

/// Submits each record at its tick, advancing the kernel as needed.
pub fn feed(kernel: &mut Kernel, records: &[LogRecord]) -> Result<(), StoreError> {
    for (index, r) in records.iter().enumerate() {
        kernel.run_until(r.ts);
        kernel.submit(r.act.clone()).map_err(|error| StoreError::Rejected { index, error })?;
    }
    Ok(())
}

/// Outcome of replaying a log directory.
pub struct Replayed {
    pub kernel: Kernel,
    pub records: usize,
    pub trace_digest: String,
    /// Digest stored at the last orderly shutdown, if any.
    pub recorded_digest: Option<String>,
    /// Sessions whose log file differs from what the replay filed.
    pub diverged_sessions: Vec<String>,
}

impl Replayed {
    pub fn consistent(&self) -> bool {
        self.diverged_sessions.is_empty() && self.recorded_digest.as_ref().is_none_or(|d| *d == self.trace_digest)
    }
}

pub fn replay(dir: &Path) -> Result<Replayed, StoreError> {
    let recorded = Recorded::load(dir)?;
    let kernel = recorded.rebuild(true, false)?;
    let mut diverged = Vec::new();
    let mut names: Vec<String> = kernel.archive().sessions().map(|(s, _)| s.to_owned()).collect();
    for name in session_names(dir)? {
        if !names.contains(&name) {
            names.push(name);
        }
    }
    for name in names {
        let path = dir.join(SESSIONS).join(format!("{name}.log"));
        let on_disk = if path.exists() { read_log(&path)? } else { Vec::new() };
        let replayed: Vec<LogRecord> = kernel
            .archive()
            .session(&name)
            .map(|s| s.records().iter().map(|f| LogRecord { ts: f.tick, act: f.act.clone() }).collect())
            .unwrap_or_default();
        if on_disk != replayed {
            diverged.push(name);
        }
    }
    Ok(Replayed {
        trace_digest: kernel.trace_digest(),
        records: recorded.journal.len(),
        recorded_digest: recorded.index.trace_digest,
        diverged_sessions: diverged,
        kernel,
    })
}

fn session_names(dir: &Path) -> Result<Vec<String>, StoreError> {
    let sessions = dir.join(SESSIONS);
    if !sessions.exists() {
        return Ok(Vec::new());
    }
    let mut names = Vec::new();
    for entry in fs::read_dir(&sessions).map_err(io_err(&sessions))? {
        let path = entry.map_err(io_err(&sessions))?.path();
        if path.extension().is_some_and(|e| e == "log") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_owned());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Selects records from the session logs.
#[derive(Clone, Debug, Default)]
pub struct QueryFilter {
    pub session: Option<String>,
    pub msg_type: Option<EventPattern>,
    /// Inclusive range over `body.seq`; records without one are excluded.
    pub seq: Option<RangeInclusive<u64>>,
}

impl QueryFilter {
    pub fn matches(&self, session: &str, record: &LogRecord) -> bool {
        self.session.as_deref().is_none_or(|s| s == session)
            && self.msg_type.as_ref().is_none_or(|p| p.matches(record.act.msg_type()))
            && self
                .seq
                .as_ref()
                .is_none_or(|r| record.act.body().get("seq").and_then(Value::as_u64).is_some_and(|s| r.contains(&s)))
    }
}

/// Matching records as `(session, record)`, sessions in name order.
pub fn query(dir: &Path, filter: &QueryFilter) -> Result<Vec<(String, LogRecord)>, StoreError> {
    let mut out = Vec::new();
    for name in session_names(dir)? {
        if filter.session.as_deref().is_some_and(|s| s != name) {
            continue;
        }
        for r in read_log(&dir.join(SESSIONS).join(format!("{name}.log")))? {
            if filter.matches(&name, &r) {
                out.push((name.clone(), r));
            }
        }
    }
    Ok(out)
}
