use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Action;
use crate::interaction::{BadMsgType, CommunicationAct, MsgType};

/// Crisp fact value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Int(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Str(v.to_owned())
    }
}

impl From<String> for Scalar {
    fn from(v: String) -> Self {
        Scalar::Str(v)
    }
}

impl Scalar {
    fn partial_cmp_same_type(&self, other: &Scalar) -> Option<Ordering> {
        match (self, other) {
            (Scalar::Bool(a), Scalar::Bool(b)) => Some(a.cmp(b)),
            (Scalar::Int(a), Scalar::Int(b)) => Some(a.cmp(b)),
            (Scalar::Str(a), Scalar::Str(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "exists")]
    Exists,
}

/// `(fact key, comparator, literal)` predicate.
///
/// An absent fact fails every comparator. Values of different types are
/// unequal and unordered.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub key: String,
    pub op: Comparator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Scalar>,
}

impl Condition {
    pub fn new(key: &str, op: Comparator, value: impl Into<Scalar>) -> Self {
        Condition { key: key.to_owned(), op, value: Some(value.into()) }
    }

    pub fn exists(key: &str) -> Self {
        Condition { key: key.to_owned(), op: Comparator::Exists, value: None }
    }

    pub fn holds(&self, facts: &BTreeMap<String, Scalar>) -> bool {
        let Some(fact) = facts.get(&self.key) else {
            return false;
        };
        let Some(lit) = &self.value else {
            return self.op == Comparator::Exists;
        };
        match self.op {
            Comparator::Exists => true,
            Comparator::Eq => fact == lit,
            Comparator::Ne => fact != lit,
            op => match fact.partial_cmp_same_type(lit) {
                None => false,
                Some(ord) => match op {
                    Comparator::Lt => ord == Ordering::Less,
                    Comparator::Le => ord != Ordering::Greater,
                    Comparator::Gt => ord == Ordering::Greater,
                    Comparator::Ge => ord != Ordering::Less,
                    _ => unreachable!(),
                },
            },
        }
    }
}

/// Exact message type or `prefix.*` wildcard.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventPattern {
    Exact(MsgType),
    /// Matches any type whose leading dotted segments equal the prefix.
    Prefix(MsgType),
}

impl EventPattern {
    pub fn matches(&self, msg_type: &MsgType) -> bool {
        match self {
            EventPattern::Exact(t) => t == msg_type,
            EventPattern::Prefix(p) => msg_type
                .as_str()
                .strip_prefix(p.as_str())
                .is_some_and(|rest| rest.starts_with('.')),
        }
    }
}

impl fmt::Display for EventPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventPattern::Exact(t) => write!(f, "{t}"),
            EventPattern::Prefix(p) => write!(f, "{p}.*"),
        }
    }
}

impl FromStr for EventPattern {
    type Err = BadMsgType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_suffix(".*") {
            Some(prefix) => MsgType::new(prefix).map(EventPattern::Prefix).map_err(|_| BadMsgType(s.to_owned())),
            None => MsgType::new(s).map(EventPattern::Exact),
        }
    }
}

impl Serialize for EventPattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EventPattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Behaviour level of a rule. Reflex rules fire without consulting facts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Reflex,
    #[default]
    RuleBased,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("rule `{0}` has no events")]
    NoEvents(String),
    #[error("rule `{0}` has no actions")]
    NoActions(String),
    #[error("reflex rule `{0}` cannot have conditions")]
    ReflexWithConditions(String),
    #[error("rule `{0}`: condition on `{1}` needs a literal")]
    MissingLiteral(String, String),
    #[error("rule id must be nonempty")]
    EmptyId,
}

/// Event/condition/action rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRule")]
pub struct Rule {
    id: String,
    events: Vec<EventPattern>,
    conditions: Vec<Condition>,
    actions: Vec<Action>,
    priority: i64,
    level: Level,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    id: String,
    events: Vec<EventPattern>,
    #[serde(default)]
    conditions: Vec<Condition>,
    actions: Vec<Action>,
    #[serde(default)]
    priority: i64,
    #[serde(default)]
    level: Level,
}

impl TryFrom<RawRule> for Rule {
    type Error = RuleError;

    fn try_from(r: RawRule) -> Result<Self, Self::Error> {
        Rule::new(&r.id, r.events, r.conditions, r.actions, r.priority, r.level)
    }
}

impl Rule {
    pub fn new(
        id: &str,
        events: Vec<EventPattern>,
        conditions: Vec<Condition>,
        actions: Vec<Action>,
        priority: i64,
        level: Level,
    ) -> Result<Self, RuleError> {
        if id.is_empty() {
            return Err(RuleError::EmptyId);
        }
        if events.is_empty() {
            return Err(RuleError::NoEvents(id.to_owned()));
        }
        if actions.is_empty() {
            return Err(RuleError::NoActions(id.to_owned()));
        }
        if level == Level::Reflex && !conditions.is_empty() {
            return Err(RuleError::ReflexWithConditions(id.to_owned()));
        }
        if let Some(c) = conditions.iter().find(|c| c.op != Comparator::Exists && c.value.is_none()) {
            return Err(RuleError::MissingLiteral(id.to_owned(), c.key.clone()));
        }
        Ok(Rule { id: id.to_owned(), events, conditions, actions, priority, level })
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn events(&self) -> &[EventPattern] {
        &self.events
    }
    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }
    pub fn actions(&self) -> &[Action] {
        &self.actions
    }
    pub fn priority(&self) -> i64 {
        self.priority
    }
    pub fn level(&self) -> Level {
        self.level
    }

    pub fn triggered_by(&self, msg_type: &MsgType) -> bool {
        self.events.iter().any(|e| e.matches(msg_type))
    }

    pub fn applies(&self, facts: &BTreeMap<String, Scalar>, msg_type: &MsgType) -> bool {
        self.triggered_by(msg_type)
            && (self.level == Level::Reflex || self.conditions.iter().all(|c| c.holds(facts)))
    }
}

/// Rules of `rules` that fire for `act`, in firing order: priority
/// descending, then reflex before rule-based, then insertion order.
pub fn match_rules<'r>(rules: &'r [Rule], facts: &BTreeMap<String, Scalar>, act: &CommunicationAct) -> Vec<&'r Rule> {
    let mut fired: Vec<(usize, &Rule)> =
        rules.iter().enumerate().filter(|(_, r)| r.applies(facts, act.msg_type())).collect();
    fired.sort_by_key(|(i, r)| (core::cmp::Reverse(r.priority), r.level, *i));
    fired.into_iter().map(|(_, r)| r).collect()
}
