//! Tool operations as data, and the acts that carry them.
//!
//! Scenario scripts, the terminal client and tests name an operation and its
//! arguments; [`Request::to_act`] turns that into the act a user agent sends.
//! The argument structs double as the body schemas the tool agents parse.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::interaction::{make_act, ActError, AgentId, CommunicationAct, Performative};
use crate::Tick;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenSession {
    pub session: String,
    #[serde(default)]
    pub participants: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRef {
    pub session: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostMessage {
    pub session: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenPoll {
    pub session: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poll: Option<String>,
    pub question: String,
    pub options: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CastBallot {
    pub session: String,
    pub poll: String,
    pub option: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PollRef {
    pub session: String,
    pub poll: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub start_tick: Tick,
    #[serde(default)]
    pub participants: Vec<String>,
    #[serde(default)]
    pub auto_start: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveQuery {
    pub session: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lookup {
    pub competence: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoArgs {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Request {
    OpenSession(OpenSession),
    CheckPresences(SessionRef),
    PostMessage(PostMessage),
    CloseSession(SessionRef),
    OpenPoll(OpenPoll),
    CastBallot(CastBallot),
    ClosePoll(PollRef),
    ScheduleEntry(ScheduleEntry),
    ListAgenda,
    ArchiveQuery(ArchiveQuery),
    GroupMembers(SessionRef),
    LookupCompetence(Lookup),
    Connect,
    Disconnect,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RequestError {
    #[error("unknown operation `{0}`")]
    UnknownOp(String),
    #[error("bad arguments for `{op}`: {reason}")]
    BadArgs { op: String, reason: String },
}

fn parse<T: DeserializeOwned>(op: &str, args: Value) -> Result<T, RequestError> {
    let args = if args.is_null() { Value::Object(Default::default()) } else { args };
    serde_json::from_value(args).map_err(|e| RequestError::BadArgs { op: op.to_owned(), reason: e.to_string() })
}

impl Request {
    /// Every operation name accepted by [`Request::parse`].
    pub const OPS: [&'static str; 14] = [
        "open_session",
        "check_presences",
        "post_message",
        "close_session",
        "open_poll",
        "cast_ballot",
        "close_poll",
        "schedule_entry",
        "list_agenda",
        "archive_query",
        "group_members",
        "lookup_competence",
        "connect",
        "disconnect",
    ];

    pub fn parse(op: &str, args: Value) -> Result<Request, RequestError> {
        Ok(match op {
            "open_session" => Request::OpenSession(parse(op, args)?),
            "check_presences" => Request::CheckPresences(parse(op, args)?),
            "post_message" => Request::PostMessage(parse(op, args)?),
            "close_session" => Request::CloseSession(parse(op, args)?),
            "open_poll" => Request::OpenPoll(parse(op, args)?),
            "cast_ballot" => Request::CastBallot(parse(op, args)?),
            "close_poll" => Request::ClosePoll(parse(op, args)?),
            "schedule_entry" => Request::ScheduleEntry(parse(op, args)?),
            "list_agenda" => {
                parse::<NoArgs>(op, args)?;
                Request::ListAgenda
            }
            "archive_query" => Request::ArchiveQuery(parse(op, args)?),
            "group_members" => Request::GroupMembers(parse(op, args)?),
            "lookup_competence" => Request::LookupCompetence(parse(op, args)?),
            "connect" => {
                parse::<NoArgs>(op, args)?;
                Request::Connect
            }
            "disconnect" => {
                parse::<NoArgs>(op, args)?;
                Request::Disconnect
            }
            other => return Err(RequestError::UnknownOp(other.to_owned())),
        })
    }

    pub fn op(&self) -> &'static str {
        match self {
            Request::OpenSession(_) => "open_session",
            Request::CheckPresences(_) => "check_presences",
            Request::PostMessage(_) => "post_message",
            Request::CloseSession(_) => "close_session",
            Request::OpenPoll(_) => "open_poll",
            Request::CastBallot(_) => "cast_ballot",
            Request::ClosePoll(_) => "close_poll",
            Request::ScheduleEntry(_) => "schedule_entry",
            Request::ListAgenda => "list_agenda",
            Request::ArchiveQuery(_) => "archive_query",
            Request::GroupMembers(_) => "group_members",
            Request::LookupCompetence(_) => "lookup_competence",
            Request::Connect => "connect",
            Request::Disconnect => "disconnect",
        }
    }

    pub fn args(&self) -> Value {
        let v = match self {
            Request::OpenSession(a) => serde_json::to_value(a),
            Request::CheckPresences(a) | Request::CloseSession(a) | Request::GroupMembers(a) => serde_json::to_value(a),
            Request::PostMessage(a) => serde_json::to_value(a),
            Request::OpenPoll(a) => serde_json::to_value(a),
            Request::CastBallot(a) => serde_json::to_value(a),
            Request::ClosePoll(a) => serde_json::to_value(a),
            Request::ScheduleEntry(a) => serde_json::to_value(a),
            Request::ArchiveQuery(a) => serde_json::to_value(a),
            Request::LookupCompetence(a) => serde_json::to_value(a),
            Request::ListAgenda | Request::Connect | Request::Disconnect => serde_json::to_value(NoArgs {}),
        };
        v.expect("argument structs serialize")
    }

    /// Performative, receiver and message type carrying this request.
    pub fn route(&self, actor: &AgentId) -> (Performative, AgentId, &'static str) {
        use super::*;
        match self {
            Request::OpenSession(_) => (Performative::Ask, papoticiel(), SESSION_OPEN),
            Request::CheckPresences(_) => (Performative::Ask, papoticiel(), SESSION_PRESENCES),
            Request::CloseSession(_) => (Performative::Ask, papoticiel(), SESSION_CLOSE),
            Request::PostMessage(_) => (Performative::Ask, com(), CHAT_POST),
            Request::OpenPoll(_) => (Performative::Ask, vote(), VOTE_OPEN),
            Request::CastBallot(_) => (Performative::Ask, vote(), VOTE_BALLOT),
            Request::ClosePoll(_) => (Performative::Ask, vote(), VOTE_CLOSE),
            Request::ScheduleEntry(_) => (Performative::Ask, agenda(), AGENDA_SCHEDULE),
            Request::ListAgenda => (Performative::Ask, agenda(), AGENDA_LIST),
            Request::ArchiveQuery(_) => (Performative::Ask, db(), DB_QUERY),
            Request::GroupMembers(_) => (Performative::Ask, group(), GROUP_MEMBERS),
            Request::LookupCompetence(_) => (Performative::Ask, group(), GROUP_LOOKUP),
            Request::Connect => (Performative::Diffuse, actor.clone(), USER_CONNECTED),
            Request::Disconnect => (Performative::Diffuse, actor.clone(), USER_DISCONNECTED),
        }
    }

    pub fn to_act(&self, actor: &AgentId) -> Result<CommunicationAct, ActError> {
        let (performative, to, msg_type) = self.route(actor);
        make_act(performative, actor.clone(), alloc::vec![to], msg_type, self.args(), None)
    }
}

/// Reads a participant given either as a bare user name or as `user:<name>`.
pub fn parse_participant(s: &str) -> Option<AgentId> {
    if s.contains(':') {
        s.parse::<AgentId>().ok().filter(AgentId::is_user)
    } else {
        AgentId::user(s).ok()
    }
}
