//! Meeting tools built from agents: a mediated chat, a vote and an agenda.
//!
//! Each tool is an ordinary agent whose rules invoke the skills in
//! [`agents`]. A session is a community named after the session id and
//! mediated by `agent:papoticiel`; `agent:com` orders chat messages,
//! `agent:vote` runs polls, `agent:archive` files everything that happens in
//! a session and `agent:db` answers queries over that archive.
//! `agent:group` fronts the registry and `agent:agenda` can open sessions on
//! a schedule. [`deploy::Descriptor`] wires them into a [`crate::Kernel`].
//!
//! Message types by namespace:
//!
//! | type | performative | from → to |
//! |------|--------------|-----------|
//! | `session.open` | ask | user or agenda → papoticiel |
//! | `session.invite` | inform | papoticiel → each participant |
//! | `session.opened`, `session.active`, `session.presence`, `session.closed` | diffuse | papoticiel → community |
//! | `session.presences` | ask | member → papoticiel |
//! | `session.close` | ask | opener or supervisor → papoticiel |
//! | `session.closing` | ask | papoticiel → com, vote |
//! | `chat.post` | ask | participant → com |
//! | `chat.msg` | diffuse | com → present participants, archive |
//! | `chat.closed` | diffuse | papoticiel → community |
//! | `vote.open`, `vote.ballot`, `vote.close` | ask | participant → vote |
//! | `vote.opened`, `vote.cast`, `vote.outcome` | diffuse | vote → present participants, archive |
//! | `agenda.schedule`, `agenda.list` | ask | user → agenda |
//! | `agenda.due` | diffuse | agenda → itself (timer) |
//! | `db.query` | ask | any → db |
//! | `group.members`, `group.lookup` | ask | any → group |
//! | `user.connected`, `user.disconnected` | diffuse | user → itself |

pub mod agents;
pub mod deploy;
pub mod domain;
pub mod request;

pub use agents::skills;
pub use deploy::{Descriptor, DeployError, UserSpec};
pub use domain::{
    archive_query, tally, AgendaEntry, ChatMessage, Outcome, OutcomeStatus, Poll, PollState, Presence, Session,
    SessionState, ToolError, MAX_TEXT_CHARS,
};
pub use request::{Request, RequestError};

use crate::interaction::AgentId;

pub const SESSION_OPEN: &str = "session.open";
pub const SESSION_INVITE: &str = "session.invite";
pub const SESSION_OPENED: &str = "session.opened";
pub const SESSION_ACTIVE: &str = "session.active";
pub const SESSION_PRESENCE: &str = "session.presence";
pub const SESSION_PRESENCES: &str = "session.presences";
pub const SESSION_CLOSE: &str = "session.close";
pub const SESSION_CLOSING: &str = "session.closing";
pub const SESSION_CLOSED: &str = crate::archive::CLOSE_EVENT;
pub const CHAT_POST: &str = "chat.post";
pub const CHAT_MSG: &str = "chat.msg";
pub const CHAT_CLOSED: &str = "chat.closed";
pub const VOTE_OPEN: &str = "vote.open";
pub const VOTE_OPENED: &str = "vote.opened";
pub const VOTE_BALLOT: &str = "vote.ballot";
pub const VOTE_CAST: &str = "vote.cast";
pub const VOTE_CLOSE: &str = "vote.close";
pub const VOTE_OUTCOME: &str = "vote.outcome";
pub const AGENDA_SCHEDULE: &str = "agenda.schedule";
pub const AGENDA_LIST: &str = "agenda.list";
pub const AGENDA_DUE: &str = "agenda.due";
pub const DB_QUERY: &str = "db.query";
pub const GROUP_MEMBERS: &str = "group.members";
pub const GROUP_LOOKUP: &str = "group.lookup";
pub const USER_CONNECTED: &str = "user.connected";
pub const USER_DISCONNECTED: &str = "user.disconnected";

/// Competences the tools use to find each other.
pub const COMPETENCE_MEDIATION: &str = "access-management-to-application";
pub const COMPETENCE_CHAT: &str = "messages-queues-management";
pub const COMPETENCE_VOTE: &str = "activation-of-beginning-and-end-of-votes";
pub const COMPETENCE_ARCHIVE: &str = "filing-of-messages";
pub const COMPETENCE_QUERY: &str = "sending-of-results";
pub const COMPETENCE_GROUPS: &str = "management-of-various-working-groups";
pub const COMPETENCE_DIARY: &str = "maintenance-of-a-diary";

/// Competences every user agent advertises.
pub const USER_COMPETENCES: [&str; 3] =
    ["authentication-and-user-identification", "access-management-towards-other-agents", "transmission-of-messages"];

pub fn papoticiel() -> AgentId {
    AgentId::agent("papoticiel").expect("valid id")
}
pub fn com() -> AgentId {
    AgentId::agent("com").expect("valid id")
}
pub fn vote() -> AgentId {
    AgentId::agent("vote").expect("valid id")
}
pub fn archive() -> AgentId {
    AgentId::agent("archive").expect("valid id")
}
pub fn db() -> AgentId {
    AgentId::agent("db").expect("valid id")
}
pub fn group() -> AgentId {
    AgentId::agent("group").expect("valid id")
}
pub fn agenda() -> AgentId {
    AgentId::agent("agenda").expect("valid id")
}
