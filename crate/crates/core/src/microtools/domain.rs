//! Plain data and pure functions behind the meeting tools. The agents in
//! [`super::agents`] keep these values in their working memory.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::archive::SessionArchive;
use crate::interaction::AgentId;
use crate::Tick;

/// Longest accepted chat text, in Unicode scalar values.
pub const MAX_TEXT_CHARS: usize = 4096;

/// Error codes carried in `{"error": code}` answer bodies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ToolError {
    #[error("AuthFailed")]
    AuthFailed,
    #[error("SessionExists")]
    SessionExists,
    #[error("BadSessionId")]
    BadSessionId,
    #[error("UnknownParticipant")]
    UnknownParticipant,
    #[error("UnknownSession")]
    UnknownSession,
    #[error("SessionNotActive")]
    SessionNotActive,
    #[error("SessionClosed")]
    SessionClosed,
    #[error("NotPresent")]
    NotPresent,
    #[error("TextTooLong")]
    TextTooLong,
    #[error("NotAuthorized")]
    NotAuthorized,
    #[error("BadOptions")]
    BadOptions,
    #[error("PollExists")]
    PollExists,
    #[error("UnknownPoll")]
    UnknownPoll,
    #[error("PollClosed")]
    PollClosed,
    #[error("AlreadyVoted")]
    AlreadyVoted,
    #[error("BadIndex")]
    BadIndex,
    #[error("PastStart")]
    PastStart,
    #[error("EntryExists")]
    EntryExists,
    #[error("BadRequest")]
    BadRequest,
}

impl ToolError {
    pub const ALL: [ToolError; 19] = [
        ToolError::AuthFailed,
        ToolError::SessionExists,
        ToolError::BadSessionId,
        ToolError::UnknownParticipant,
        ToolError::UnknownSession,
        ToolError::SessionNotActive,
        ToolError::SessionClosed,
        ToolError::NotPresent,
        ToolError::TextTooLong,
        ToolError::NotAuthorized,
        ToolError::BadOptions,
        ToolError::PollExists,
        ToolError::UnknownPoll,
        ToolError::PollClosed,
        ToolError::AlreadyVoted,
        ToolError::BadIndex,
        ToolError::PastStart,
        ToolError::EntryExists,
        ToolError::BadRequest,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ToolError::AuthFailed => "AuthFailed",
            ToolError::SessionExists => "SessionExists",
            ToolError::BadSessionId => "BadSessionId",
            ToolError::UnknownParticipant => "UnknownParticipant",
            ToolError::UnknownSession => "UnknownSession",
            ToolError::SessionNotActive => "SessionNotActive",
            ToolError::SessionClosed => "SessionClosed",
            ToolError::NotPresent => "NotPresent",
            ToolError::TextTooLong => "TextTooLong",
            ToolError::NotAuthorized => "NotAuthorized",
            ToolError::BadOptions => "BadOptions",
            ToolError::PollExists => "PollExists",
            ToolError::UnknownPoll => "UnknownPoll",
            ToolError::PollClosed => "PollClosed",
            ToolError::AlreadyVoted => "AlreadyVoted",
            ToolError::BadIndex => "BadIndex",
            ToolError::PastStart => "PastStart",
            ToolError::EntryExists => "EntryExists",
            ToolError::BadRequest => "BadRequest",
        }
    }

    pub fn from_code(code: &str) -> Option<ToolError> {
        ToolError::ALL.into_iter().find(|e| e.code() == code)
    }

    pub fn body(self) -> Value {
        json!({ "error": self.code() })
    }

    /// Error code of an answer body, if it is an error.
    pub fn of_body(body: &Value) -> Option<ToolError> {
        body.get("error").and_then(Value::as_str).and_then(ToolError::from_code)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Opening,
    Active,
    Closing,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presence {
    Pending,
    Present,
    Absent,
}

/// A chat session as tracked by its mediator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub opener: AgentId,
    pub state: SessionState,
    pub roster: BTreeMap<AgentId, Presence>,
    pub head_seq: u64,
    pub opened_at: Tick,
    /// Tools that still have to acknowledge the close.
    #[serde(default)]
    pub awaiting_close: BTreeSet<AgentId>,
}

impl Session {
    pub fn new(id: &str, opener: AgentId, participants: &BTreeSet<AgentId>, now: Tick) -> Self {
        Session {
            id: id.to_owned(),
            opener,
            state: SessionState::Opening,
            roster: participants.iter().map(|p| (p.clone(), Presence::Pending)).collect(),
            head_seq: 0,
            opened_at: now,
            awaiting_close: BTreeSet::new(),
        }
    }

    /// Moves forward to `to`. Staying put is allowed; going back is not.
    pub fn advance(&mut self, to: SessionState) -> bool {
        if to < self.state {
            return false;
        }
        self.state = to;
        true
    }

    /// Records the answer to an invitation. Returns false if the
    /// participant was not waiting for one.
    pub fn resolve_invite(&mut self, who: &AgentId, present: bool) -> bool {
        match self.roster.get_mut(who) {
            Some(p @ Presence::Pending) => {
                *p = if present { Presence::Present } else { Presence::Absent };
                true
            }
            _ => false,
        }
    }

    pub fn all_resolved(&self) -> bool {
        self.roster.values().all(|p| *p != Presence::Pending)
    }

    pub fn is_present(&self, who: &AgentId) -> bool {
        self.roster.get(who) == Some(&Presence::Present)
    }

    pub fn present(&self) -> impl Iterator<Item = &AgentId> {
        self.roster.iter().filter(|(_, p)| **p == Presence::Present).map(|(id, _)| id)
    }

    /// Presence flag of every participant; pending counts as absent.
    pub fn check_presences(&self) -> Result<BTreeMap<AgentId, bool>, ToolError> {
        if self.state == SessionState::Closed {
            return Err(ToolError::SessionClosed);
        }
        Ok(self.roster.iter().map(|(id, p)| (id.clone(), *p == Presence::Present)).collect())
    }
}

/// Chat text validation.
pub fn check_text(text: &str) -> Result<(), ToolError> {
    if text.chars().count() > MAX_TEXT_CHARS {
        Err(ToolError::TextTooLong)
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub session: String,
    pub seq: u64,
    pub author: AgentId,
    pub text: String,
    pub tick: Tick,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PollState {
    Open,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Decided,
    Tie,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub counts: Vec<u64>,
    pub winners: Vec<String>,
    pub status: OutcomeStatus,
}

/// Plurality count over ballots given as option indices.
///
/// Indices outside `options` are ignored. Winners keep option order; with no
/// ballots every option ties.
pub fn tally<I: IntoIterator<Item = usize>>(options: &[String], ballots: I) -> Outcome {
    let mut counts = alloc::vec![0u64; options.len()];
    for b in ballots {
        if let Some(c) = counts.get_mut(b) {
            *c += 1;
        }
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let winners: Vec<String> =
        options.iter().zip(&counts).filter(|(_, c)| **c == top).map(|(o, _)| o.clone()).collect();
    let status = if winners.len() == 1 { OutcomeStatus::Decided } else { OutcomeStatus::Tie };
    Outcome { counts, winners, status }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Poll {
    pub id: String,
    pub session: String,
    pub opener: AgentId,
    pub question: String,
    pub options: Vec<String>,
    pub state: PollState,
    pub ballots: BTreeMap<AgentId, usize>,
    pub outcome: Option<Outcome>,
}

impl Poll {
    pub fn new(id: &str, session: &str, opener: AgentId, question: &str, options: Vec<String>) -> Result<Self, ToolError> {
        let distinct: BTreeSet<&String> = options.iter().collect();
        if options.len() < 2 || distinct.len() != options.len() {
            return Err(ToolError::BadOptions);
        }
        Ok(Poll {
            id: id.to_owned(),
            session: session.to_owned(),
            opener,
            question: question.to_owned(),
            options,
            state: PollState::Open,
            ballots: BTreeMap::new(),
            outcome: None,
        })
    }

    /// Records a ballot. The first ballot of a voter stands.
    pub fn cast(&mut self, voter: &AgentId, option: usize) -> Result<(), ToolError> {
        if self.state == PollState::Closed {
            return Err(ToolError::PollClosed);
        }
        if self.ballots.contains_key(voter) {
            return Err(ToolError::AlreadyVoted);
        }
        if option >= self.options.len() {
            return Err(ToolError::BadIndex);
        }
        self.ballots.insert(voter.clone(), option);
        Ok(())
    }

    pub fn close(&mut self, closer: &AgentId, is_supervisor: bool) -> Result<&Outcome, ToolError> {
        if self.state == PollState::Closed {
            return Err(ToolError::PollClosed);
        }
        if *closer != self.opener && !is_supervisor {
            return Err(ToolError::NotAuthorized);
        }
        Ok(self.force_close())
    }

    /// Closes without an authority check, as done when the session ends.
    pub fn force_close(&mut self) -> &Outcome {
        self.state = PollState::Closed;
        let outcome = tally(&self.options, self.ballots.values().copied());
        self.outcome.insert(outcome)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgendaEntry {
    pub id: String,
    pub title: String,
    pub start_tick: Tick,
    pub participants: BTreeSet<AgentId>,
    pub auto_start: bool,
    #[serde(default)]
    pub fired: bool,
}

impl AgendaEntry {
    pub fn new(
        id: &str,
        title: &str,
        start_tick: Tick,
        participants: BTreeSet<AgentId>,
        auto_start: bool,
        now: Tick,
    ) -> Result<Self, ToolError> {
        if start_tick <= now {
            return Err(ToolError::PastStart);
        }
        Ok(AgendaEntry { id: id.to_owned(), title: title.to_owned(), start_tick, participants, auto_start, fired: false })
    }
}

/// Archived chat messages of one session with `from <= seq <= to`, in seq order.
pub fn archive_query(archive: &SessionArchive, from: u64, to: u64) -> Vec<ChatMessage> {
    let mut out: Vec<ChatMessage> = archive
        .records()
        .iter()
        .filter(|r| r.act.msg_type().as_str() == super::CHAT_MSG)
        .filter_map(|r| serde_json::from_value::<ChatMessage>(r.act.body().clone()).ok())
        .filter(|m| (from..=to).contains(&m.seq))
        .collect();
    out.sort_by_key(|m| m.seq);
    out
}
