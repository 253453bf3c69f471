//! Communication acts and the conversation protocol.
//!
//! Every exchange between agents is a [`CommunicationAct`]: a performative,
//! a sender, one or more receivers, a dotted message type and a structured
//! body. `ask` and `inform` open a [`Conversation`] that is discharged by
//! exactly one `answer` or `confirm`, or by a timeout.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::Tick;

/// Default number of ticks a conversation waits for its reply.
pub const DEFAULT_TIMEOUT: Tick = 100;

/// Prefix of community pseudo-receivers, e.g. `agent:community/session-1`.
pub const COMMUNITY_PREFIX: &str = "community/";

/// The five speech acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Performative {
    Inform,
    Diffuse,
    Ask,
    Answer,
    Confirm,
}

impl Performative {
    pub const ALL: [Performative; 5] = [
        Performative::Inform,
        Performative::Diffuse,
        Performative::Ask,
        Performative::Answer,
        Performative::Confirm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Performative::Inform => "inform",
            Performative::Diffuse => "diffuse",
            Performative::Ask => "ask",
            Performative::Answer => "answer",
            Performative::Confirm => "confirm",
        }
    }

    /// The reply this performative obliges, if any.
    pub fn expects_reply(self) -> Option<Performative> {
        match self {
            Performative::Ask => Some(Performative::Answer),
            Performative::Inform => Some(Performative::Confirm),
            Performative::Diffuse | Performative::Answer | Performative::Confirm => None,
        }
    }

    pub fn is_reply(self) -> bool {
        matches!(self, Performative::Answer | Performative::Confirm)
    }
}

/// Free-function form of [`Performative::expects_reply`].
pub fn expects_reply(performative: Performative) -> Option<Performative> {
    performative.expects_reply()
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown performative `{0}`")]
pub struct UnknownPerformative(pub String);

impl FromStr for Performative {
    type Err = UnknownPerformative;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Performative::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| UnknownPerformative(s.to_owned()))
    }
}

impl Serialize for Performative {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Performative {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whether an identity stands for a human participant or a software agent.
///
/// `Agent` sorts first so that the derived order matches the order of the
/// canonical text forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentKind {
    Agent,
    User,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Agent => "agent",
            AgentKind::User => "user",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AgentIdError {
    #[error("agent id `{0}` lacks a `<kind>:` prefix")]
    MissingKind(String),
    #[error("unknown agent kind `{0}`")]
    UnknownKind(String),
    #[error("invalid agent name `{0}` (expected [a-z0-9_-]+)")]
    BadName(String),
}

/// `<kind>:<name>` identity of an agent.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId {
    kind: AgentKind,
    name: String,
}

pub(crate) fn is_name(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

impl AgentId {
    pub fn new(kind: AgentKind, name: &str) -> Result<Self, AgentIdError> {
        let ok = match name.strip_prefix(COMMUNITY_PREFIX) {
            Some(rest) => kind == AgentKind::Agent && is_name(rest),
            None => is_name(name),
        };
        if !ok {
            return Err(AgentIdError::BadName(name.to_owned()));
        }
        Ok(AgentId { kind, name: name.to_owned() })
    }

    pub fn user(name: &str) -> Result<Self, AgentIdError> {
        Self::new(AgentKind::User, name)
    }

    pub fn agent(name: &str) -> Result<Self, AgentIdError> {
        Self::new(AgentKind::Agent, name)
    }

    /// Pseudo-receiver addressing every member of a community.
    pub fn community(community: &str) -> Result<Self, AgentIdError> {
        if !is_name(community) {
            return Err(AgentIdError::BadName(community.to_owned()));
        }
        Ok(AgentId { kind: AgentKind::Agent, name: format!("{COMMUNITY_PREFIX}{community}") })
    }

    /// The kernel's own identity, used for timeout and error notices.
    pub fn kernel() -> Self {
        AgentId { kind: AgentKind::Agent, name: "kernel".to_owned() }
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_user(&self) -> bool {
        self.kind == AgentKind::User
    }

    /// Community id when this is a community pseudo-receiver.
    pub fn community_id(&self) -> Option<&str> {
        match self.kind {
            AgentKind::Agent => self.name.strip_prefix(COMMUNITY_PREFIX),
            AgentKind::User => None,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.name)
    }
}

impl FromStr for AgentId {
    type Err = AgentIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, name) = s.split_once(':').ok_or_else(|| AgentIdError::MissingKind(s.to_owned()))?;
        let kind = match kind {
            "agent" => AgentKind::Agent,
            "user" => AgentKind::User,
            other => return Err(AgentIdError::UnknownKind(other.to_owned())),
        };
        AgentId::new(kind, name)
    }
}

impl Serialize for AgentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Dotted lowercase message type such as `chat.msg`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgType(String);

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid message type `{0}` (expected dotted lowercase segments)")]
pub struct BadMsgType(pub String);

impl MsgType {
    pub fn new(s: &str) -> Result<Self, BadMsgType> {
        if s.split('.').all(is_name) {
            Ok(MsgType(s.to_owned()))
        } else {
            Err(BadMsgType(s.to_owned()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Leading segment, e.g. `chat` for `chat.msg`.
    pub fn namespace(&self) -> &str {
        self.0.split('.').next().unwrap_or(&self.0)
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for MsgType {
    type Err = BadMsgType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MsgType::new(s)
    }
}

impl Serialize for MsgType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for MsgType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        MsgType::new(&s).map_err(serde::de::Error::custom)
    }
}

/// Conversation identifier, `c-` followed by a zero-padded counter when
/// assigned by the kernel.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConvId(pub String);

impl ConvId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ConvId {
    fn from(s: &str) -> Self {
        ConvId(s.to_owned())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ActError {
    #[error("{performative} takes {expected} receiver(s), got {got}")]
    InvalidReceivers { performative: Performative, expected: &'static str, got: usize },
    #[error("diffuse receivers contain duplicate `{0}`")]
    DuplicateReceiver(AgentId),
    #[error("{0} must carry a conversation id")]
    MissingConv(Performative),
    #[error("diffuse acts must not carry a conversation id")]
    UnexpectedConv,
    #[error(transparent)]
    BadMsgType(#[from] BadMsgType),
}

/// A validated communication act.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommunicationAct {
    performative: Performative,
    sender: AgentId,
    receivers: Vec<AgentId>,
    msg_type: MsgType,
    body: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    conv: Option<ConvId>,
}

/// Builds a validated act.
///
/// Checks run in a fixed order (message type, receiver arity, conversation
/// id) so every malformed input maps to exactly one error.
pub fn make_act(
    performative: Performative,
    sender: AgentId,
    receivers: Vec<AgentId>,
    msg_type: &str,
    body: Value,
    conv: Option<ConvId>,
) -> Result<CommunicationAct, ActError> {
    let msg_type = MsgType::new(msg_type)?;
    CommunicationAct::new(performative, sender, receivers, msg_type, body, conv)
}

impl CommunicationAct {
    pub fn new(
        performative: Performative,
        sender: AgentId,
        receivers: Vec<AgentId>,
        msg_type: MsgType,
        body: Value,
        conv: Option<ConvId>,
    ) -> Result<Self, ActError> {
        match performative {
            Performative::Diffuse => {
                if receivers.is_empty() {
                    return Err(ActError::InvalidReceivers {
                        performative,
                        expected: "at least 1",
                        got: 0,
                    });
                }
                for (i, r) in receivers.iter().enumerate() {
                    if receivers[..i].contains(r) {
                        return Err(ActError::DuplicateReceiver(r.clone()));
                    }
                }
                if conv.is_some() {
                    return Err(ActError::UnexpectedConv);
                }
            }
            _ => {
                if receivers.len() != 1 {
                    return Err(ActError::InvalidReceivers {
                        performative,
                        expected: "exactly 1",
                        got: receivers.len(),
                    });
                }
                if performative.is_reply() && conv.is_none() {
                    return Err(ActError::MissingConv(performative));
                }
            }
        }
        Ok(CommunicationAct { performative, sender, receivers, msg_type, body, conv })
    }

    pub fn performative(&self) -> Performative {
        self.performative
    }

    pub fn sender(&self) -> &AgentId {
        &self.sender
    }

    pub fn receivers(&self) -> &[AgentId] {
        &self.receivers
    }

    pub fn msg_type(&self) -> &MsgType {
        &self.msg_type
    }

    pub fn body(&self) -> &Value {
        &self.body
    }

    pub fn conv(&self) -> Option<&ConvId> {
        self.conv.as_ref()
    }

    pub fn is_addressed_to(&self, id: &AgentId) -> bool {
        self.receivers.contains(id)
    }

    /// Copy of this act carrying the given conversation id. Only meaningful
    /// for non-diffuse acts; the kernel uses it to stamp openers.
    pub(crate) fn with_conv(&self, conv: ConvId) -> Self {
        debug_assert!(self.performative != Performative::Diffuse);
        let mut act = self.clone();
        act.conv = Some(conv);
        act
    }

    /// Reply to this act with the performative it obliges.
    pub fn reply(&self, from: AgentId, body: Value) -> Result<CommunicationAct, ReplyError> {
        let performative = self.performative.expects_reply().ok_or(ReplyError::NotAnOpener(self.performative))?;
        let conv = self.conv.clone().ok_or(ReplyError::NoConversation)?;
        Ok(CommunicationAct {
            performative,
            sender: from,
            receivers: alloc::vec![self.sender.clone()],
            msg_type: self.msg_type.clone(),
            body,
            conv: Some(conv),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ReplyError {
    #[error("{0} acts take no reply")]
    NotAnOpener(Performative),
    #[error("act has no conversation id to reply on")]
    NoConversation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvState {
    AwaitingReply,
    Closed,
    TimedOut,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ConvError {
    #[error("{0} acts expect no reply")]
    NotAnOpener(Performative),
    #[error("conversation {0} is no longer awaiting a reply")]
    AlreadyClosed(ConvId),
}

/// Why a reply failed to discharge a conversation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orphan {
    WrongConv,
    WrongPerformative,
    NotAReceiver,
}

impl Orphan {
    pub fn as_str(self) -> &'static str {
        match self {
            Orphan::WrongConv => "wrong_conv",
            Orphan::WrongPerformative => "wrong_performative",
            Orphan::NotAReceiver => "not_a_receiver",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplyMatch {
    Closed,
    Orphan(Orphan),
}

/// Monotone source of kernel-assigned conversation ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConvCounter(u64);

impl ConvCounter {
    pub fn next_id(&mut self) -> ConvId {
        self.0 += 1;
        ConvId(format!("c-{:06}", self.0))
    }

    pub fn issued(&self) -> u64 {
        self.0
    }
}

/// An obligation opened by `ask` or `inform`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Conversation {
    id: ConvId,
    opener: CommunicationAct,
    state: ConvState,
    deadline: Tick,
}

/// Opens a conversation for `act` with a fresh id from `ids`.
pub fn open_conversation(
    ids: &mut ConvCounter,
    act: &CommunicationAct,
    now: Tick,
    timeout: Tick,
) -> Result<Conversation, ConvError> {
    if act.performative.expects_reply().is_none() {
        return Err(ConvError::NotAnOpener(act.performative));
    }
    let id = ids.next_id();
    Ok(Conversation {
        opener: act.with_conv(id.clone()),
        id,
        state: ConvState::AwaitingReply,
        deadline: now.saturating_add(timeout),
    })
}

impl Conversation {
    pub fn id(&self) -> &ConvId {
        &self.id
    }

    /// The opening act, stamped with this conversation's id.
    pub fn opener(&self) -> &CommunicationAct {
        &self.opener
    }

    pub fn state(&self) -> ConvState {
        self.state
    }

    pub fn deadline(&self) -> Tick {
        self.deadline
    }

    /// Checks `act` against this conversation and closes it on a match.
    /// A mismatch leaves the conversation untouched.
    pub fn match_reply(&mut self, act: &CommunicationAct) -> Result<ReplyMatch, ConvError> {
        if self.state != ConvState::AwaitingReply {
            return Err(ConvError::AlreadyClosed(self.id.clone()));
        }
        let m = if act.conv.as_ref() != Some(&self.id) {
            ReplyMatch::Orphan(Orphan::WrongConv)
        } else if self.opener.performative.expects_reply() != Some(act.performative) {
            ReplyMatch::Orphan(Orphan::WrongPerformative)
        } else if !self.opener.receivers.contains(&act.sender) {
            ReplyMatch::Orphan(Orphan::NotAReceiver)
        } else {
            ReplyMatch::Closed
        };
        if m == ReplyMatch::Closed {
            self.state = ConvState::Closed;
        }
        Ok(m)
    }

    /// Times the conversation out once `now` is past its deadline.
    /// Returns whether this call performed the transition.
    pub fn expire(&mut self, now: Tick) -> bool {
        if self.state == ConvState::AwaitingReply && now > self.deadline {
            self.state = ConvState::TimedOut;
            true
        } else {
            false
        }
    }
}

impl fmt::Display for CommunicationAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({} -> ", self.performative, self.sender)?;
        for (i, r) in self.receivers.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        write!(f, ", {})", self.msg_type)
    }
}

pub(crate) fn id_list(ids: &[AgentId]) -> String {
    let mut s = String::new();
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&id.to_string());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn u(n: &str) -> AgentId {
        AgentId::user(n).unwrap()
    }
    fn a(n: &str) -> AgentId {
        AgentId::agent(n).unwrap()
    }

    #[test]
    fn performative_parsing_is_closed() {
        for p in Performative::ALL {
            assert_eq!(p.as_str().parse::<Performative>().unwrap(), p);
        }
        assert!("reply".parse::<Performative>().is_err());
        assert!("Inform".parse::<Performative>().is_err());
    }

    #[test]
    fn agent_id_text_form() {
        let id: AgentId = "user:alice".parse().unwrap();
        assert_eq!(id, u("alice"));
        assert_eq!(id.to_string(), "user:alice");
        assert!("alice".parse::<AgentId>().is_err());
        assert!("robot:x".parse::<AgentId>().is_err());
        assert!("user:".parse::<AgentId>().is_err());
        assert!("user:Alice".parse::<AgentId>().is_err());
        assert!("user:community/x".parse::<AgentId>().is_err());
        let c: AgentId = "agent:community/session-1".parse().unwrap();
        assert_eq!(c.community_id(), Some("session-1"));
    }

    #[test]
    fn canonical_order_matches_text_order() {
        let mut ids = [u("bob"), a("vote"), u("alice"), a("com"), a("community/x")];
        ids.sort();
        let mut texts: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
        let sorted = texts.clone();
        texts.sort();
        assert_eq!(texts, sorted);
    }

    #[test]
    fn make_act_examples() {
        let ask = make_act(Performative::Ask, u("alice"), alloc::vec![a("vote")], "vote.open", json!({}), None).unwrap();
        assert_eq!(ask.performative(), Performative::Ask);
        assert_eq!(ask.receivers().len(), 1);

        let diffuse =
            make_act(Performative::Diffuse, a("com"), alloc::vec![u("a"), u("b")], "chat.msg", json!({}), None).unwrap();
        assert_eq!(diffuse.receivers().len(), 2);

        let err =
            make_act(Performative::Answer, a("vote"), alloc::vec![u("alice")], "vote.open", json!({}), None).unwrap_err();
        assert_eq!(err, ActError::MissingConv(Performative::Answer));
    }

    #[test]
    fn msg_type_grammar() {
        assert!(MsgType::new("chat").is_ok());
        assert!(MsgType::new("chat.msg").is_ok());
        assert!(MsgType::new("a.b_c.d-1").is_ok());
        for bad in ["", "Chat.msg", "chat..msg", ".chat", "chat.", "chat msg", "chat.*"] {
            assert!(MsgType::new(bad).is_err(), "{bad}");
        }
        let e = make_act(Performative::Ask, u("a"), alloc::vec![a("b")], "Chat", json!(null), None).unwrap_err();
        assert!(matches!(e, ActError::BadMsgType(_)));
    }

    #[test]
    fn diffuse_rejects_duplicates() {
        let e = make_act(Performative::Diffuse, a("com"), alloc::vec![u("a"), u("a")], "chat.msg", json!({}), None)
            .unwrap_err();
        assert_eq!(e, ActError::DuplicateReceiver(u("a")));
    }

    #[test]
    fn reply_pairs() {
        assert_eq!(expects_reply(Performative::Ask), Some(Performative::Answer));
        assert_eq!(expects_reply(Performative::Inform), Some(Performative::Confirm));
        assert_eq!(expects_reply(Performative::Diffuse), None);
        assert_eq!(expects_reply(Performative::Answer), None);
        assert_eq!(expects_reply(Performative::Confirm), None);
    }

    fn ask() -> CommunicationAct {
        make_act(Performative::Ask, u("alice"), alloc::vec![a("vote")], "vote.open", json!({"q": 1}), None).unwrap()
    }

    #[test]
    fn open_conversation_contract() {
        let mut ids = ConvCounter::default();
        let c = open_conversation(&mut ids, &ask(), 10, 100).unwrap();
        assert_eq!(c.deadline(), 110);
        assert_eq!(c.state(), ConvState::AwaitingReply);
        assert_eq!(c.id().as_str(), "c-000001");
        assert_eq!(c.opener().conv(), Some(c.id()));

        let c2 = open_conversation(&mut ids, &ask(), 10, 100).unwrap();
        assert_ne!(c.id(), c2.id());

        let reply = c.opener().reply(a("vote"), json!({})).unwrap();
        let confirm = make_act(Performative::Confirm, a("vote"), alloc::vec![u("alice")], "x", json!({}), Some("c-9".into()))
            .unwrap();
        assert_eq!(open_conversation(&mut ids, &confirm, 0, 1).unwrap_err(), ConvError::NotAnOpener(Performative::Confirm));
        assert_eq!(reply.performative(), Performative::Answer);
    }

    #[test]
    fn match_reply_closes_exactly_once() {
        let mut ids = ConvCounter::default();
        let mut c = open_conversation(&mut ids, &ask(), 0, 100).unwrap();
        let answer = c.opener().reply(a("vote"), json!({"ok": true})).unwrap();

        let wrong = make_act(Performative::Answer, a("vote"), alloc::vec![u("alice")], "vote.open", json!({}), Some("c-404".into()))
            .unwrap();
        let before = c.clone();
        assert_eq!(c.match_reply(&wrong).unwrap(), ReplyMatch::Orphan(Orphan::WrongConv));
        assert_eq!(c, before);

        let intruder = c.opener().reply(a("com"), json!({})).unwrap();
        assert_eq!(c.match_reply(&intruder).unwrap(), ReplyMatch::Orphan(Orphan::NotAReceiver));
        let confirm = make_act(Performative::Confirm, a("vote"), alloc::vec![u("alice")], "vote.open", json!({}), Some(c.id().clone()))
            .unwrap();
        assert_eq!(c.match_reply(&confirm).unwrap(), ReplyMatch::Orphan(Orphan::WrongPerformative));
        assert_eq!(c, before);

        assert_eq!(c.match_reply(&answer).unwrap(), ReplyMatch::Closed);
        assert_eq!(c.state(), ConvState::Closed);
        assert_eq!(c.match_reply(&answer).unwrap_err(), ConvError::AlreadyClosed(c.id().clone()));
        assert!(!c.expire(1_000));
    }

    #[test]
    fn expiry_is_strictly_past_deadline() {
        let mut ids = ConvCounter::default();
        let mut c = open_conversation(&mut ids, &ask(), 10, 5).unwrap();
        assert!(!c.expire(15));
        assert!(c.expire(16));
        assert!(!c.expire(17));
        assert_eq!(c.state(), ConvState::TimedOut);
        let answer = c.opener().reply(a("vote"), json!({})).unwrap();
        assert!(c.match_reply(&answer).is_err());
    }
}
