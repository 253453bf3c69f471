//! Line-delimited JSON frames.
//!
//! A frame is one JSON object on one line with keys in this order:
//! `v`, `perf`, `from`, `to`, `type`, `conv` (optional), `seq` (optional,
//! server-assigned), `body`. Unknown keys are rejected.

use std::fmt;

use placid_core::interaction::{make_act, ActError, AgentId, ConvId, Performative};
use placid_core::CommunicationAct;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const VERSION: u64 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    v: u64,
    perf: String,
    from: String,
    to: Vec<String>,
    #[serde(rename = "type")]
    msg_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seq: Option<u64>,
    body: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reason {
    Encoding,
    Newline,
    Json(String),
    Version(u64),
    Performative,
    Sender,
    Receiver,
    Receivers,
    Conv,
    Type,
    /// A client frame carried a server-assigned `seq`.
    Seq,
    /// A client frame claimed a sender other than the authenticated user.
    Spoofed,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::Encoding => f.write_str("encoding"),
            Reason::Newline => f.write_str("newline"),
            Reason::Json(e) => write!(f, "json: {e}"),
            Reason::Version(v) => write!(f, "version {v}"),
            Reason::Performative => f.write_str("performative"),
            Reason::Sender => f.write_str("sender"),
            Reason::Receiver => f.write_str("receiver"),
            Reason::Receivers => f.write_str("receivers"),
            Reason::Conv => f.write_str("conv"),
            Reason::Type => f.write_str("type"),
            Reason::Seq => f.write_str("seq"),
            Reason::Spoofed => f.write_str("from"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("malformed frame at byte {offset}: {reason}")]
pub struct MalformedFrame {
    pub offset: usize,
    pub reason: Reason,
}

/// A decoded frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub act: CommunicationAct,
    pub seq: Option<u64>,
}

fn raw_of(act: &CommunicationAct, seq: Option<u64>) -> Raw {
    Raw {
        v: VERSION,
        perf: act.performative().as_str().to_owned(),
        from: act.sender().to_string(),
        to: act.receivers().iter().map(ToString::to_string).collect(),
        msg_type: act.msg_type().as_str().to_owned(),
        conv: act.conv().map(|c| c.as_str().to_owned()),
        seq,
        body: act.body().clone(),
    }
}

/// Frame as a JSON value, for embedding in log records.
pub fn to_value(act: &CommunicationAct, seq: Option<u64>) -> Value {
    serde_json::to_value(raw_of(act, seq)).expect("frames serialize")
}

/// Frame text without the line terminator.
pub fn encode_str(act: &CommunicationAct, seq: Option<u64>) -> String {
    serde_json::to_string(&raw_of(act, seq)).expect("frames serialize")
}

/// Frame as one LF-terminated line.
pub fn encode(act: &CommunicationAct, seq: Option<u64>) -> Vec<u8> {
    let mut line = encode_str(act, seq).into_bytes();
    line.push(b'\n');
    line
}

fn key_offset(text: &str, key: &str) -> usize {
    text.find(&format!("\"{key}\"")).unwrap_or(0)
}

fn json_offset(text: &str, e: &serde_json::Error) -> usize {
    if e.is_eof() {
        return text.len();
    }
    let line_start: usize = text.split_inclusive('\n').take(e.line().saturating_sub(1)).map(str::len).sum();
    (line_start + e.column().saturating_sub(1)).min(text.len())
}

fn check(raw: Raw, text: &str) -> Result<Frame, MalformedFrame> {
    let at = |key: &str, reason: Reason| MalformedFrame { offset: key_offset(text, key), reason };
    if raw.v != VERSION {
        return Err(at("v", Reason::Version(raw.v)));
    }
    let perf: Performative = raw.perf.parse().map_err(|_| at("perf", Reason::Performative))?;
    let from: AgentId = raw.from.parse().map_err(|_| at("from", Reason::Sender))?;
    let to = raw
        .to
        .iter()
        .map(|r| r.parse::<AgentId>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| at("to", Reason::Receiver))?;
    let act = make_act(perf, from, to, &raw.msg_type, raw.body, raw.conv.map(ConvId)).map_err(|e| match e {
        ActError::BadMsgType(_) => at("type", Reason::Type),
        ActError::InvalidReceivers { .. } | ActError::DuplicateReceiver(_) => at("to", Reason::Receivers),
        ActError::MissingConv(_) | ActError::UnexpectedConv => at("conv", Reason::Conv),
    })?;
    Ok(Frame { act, seq: raw.seq })
}

/// Parses one frame. A single trailing LF is allowed.
pub fn decode(line: &[u8]) -> Result<Frame, MalformedFrame> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let text = std::str::from_utf8(line)
        .map_err(|e| MalformedFrame { offset: e.valid_up_to(), reason: Reason::Encoding })?;
    if let Some(i) = text.find(['\n', '\r']) {
        return Err(MalformedFrame { offset: i, reason: Reason::Newline });
    }
    let raw: Raw = serde_json::from_str(text)
        .map_err(|e| MalformedFrame { offset: json_offset(text, &e), reason: Reason::Json(e.to_string()) })?;
    check(raw, text)
}

/// Parses a frame embedded in a larger JSON document.
pub fn from_value(v: Value) -> Result<Frame, MalformedFrame> {
    let raw: Raw =
        serde_json::from_value(v).map_err(|e| MalformedFrame { offset: 0, reason: Reason::Json(e.to_string()) })?;
    check(raw, "")
}

/// Parses a frame sent by the authenticated client `user`.
pub fn decode_client(line: &[u8], user: &AgentId) -> Result<CommunicationAct, MalformedFrame> {
    let frame = decode(line)?;
    let text = String::from_utf8_lossy(line);
    if frame.seq.is_some() {
        return Err(MalformedFrame { offset: key_offset(&text, "seq"), reason: Reason::Seq });
    }
    if frame.act.sender() != user {
        return Err(MalformedFrame { offset: key_offset(&text, "from"), reason: Reason::Spoofed });
    }
    Ok(frame.act)
}
