//! The agent model: observation, decision, action and a knowledge base.
//!
//! An [`AgentState`] owns three managers. Its inbox is the message manager,
//! its task table the action manager, and its [`KnowledgeBase`] the
//! knowledge-base manager. One [`step`] pops a single act, fires every
//! matching [`Rule`], and enacts the fired actions as one [`Task`].

mod rule;
mod skill;

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

pub use rule::{match_rules, Comparator, Condition, EventPattern, Level, Rule, RuleError, Scalar};
pub use skill::{Effect, NoWorld, Output, SkillCtx, SkillError, SkillFn, SkillSet, World};

use crate::interaction::{AgentId, CommunicationAct, MsgType, Performative};
use crate::Tick;

/// Receiver of a rule-level send.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    /// The sender of the act being handled.
    Sender,
    Agent(AgentId),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Sender => f.write_str("$sender"),
            Target::Agent(id) => write!(f, "{id}"),
        }
    }
}

impl FromStr for Target {
    type Err = crate::interaction::AgentIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "$sender" {
            Ok(Target::Sender)
        } else {
            s.parse().map(Target::Agent)
        }
    }
}

impl Serialize for Target {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Body placeholder copying the handled act's body.
pub const BODY_PLACEHOLDER: &str = "$body";

fn empty_object() -> Value {
    json!({})
}

/// Action descriptor carried by rules and tasks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Send {
        performative: Performative,
        to: Vec<Target>,
        #[serde(rename = "type")]
        msg_type: MsgType,
        #[serde(default = "empty_object")]
        body: Value,
    },
    /// Answer or confirm the handled act on its conversation.
    Reply {
        #[serde(default = "empty_object")]
        body: Value,
    },
    AssertFact {
        key: String,
        value: Scalar,
    },
    RetractFact {
        key: String,
    },
    Invoke {
        skill: String,
    },
}

impl Action {
    pub fn send(performative: Performative, to: Vec<Target>, msg_type: &str, body: Value) -> Self {
        Action::Send { performative, to, msg_type: MsgType::new(msg_type).expect("valid msg type"), body }
    }

    pub fn invoke(skill: &str) -> Self {
        Action::Invoke { skill: skill.to_owned() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Pending,
    Running,
    Done,
    Failed,
}

/// A unit of work held by the action manager.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Task {
    id: String,
    actions: Vec<Action>,
    state: TaskState,
    results: Vec<Value>,
}

impl Task {
    fn new(id: String, actions: Vec<Action>) -> Self {
        Task { id, actions, state: TaskState::Pending, results: Vec::new() }
    }

    fn start(&mut self) {
        debug_assert_eq!(self.state, TaskState::Pending);
        self.state = TaskState::Running;
    }

    fn finish(&mut self, results: Vec<Value>, failed: bool) {
        debug_assert_eq!(self.state, TaskState::Running);
        self.results = results;
        self.state = if failed { TaskState::Failed } else { TaskState::Done };
    }

    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn actions(&self) -> &[Action] {
        &self.actions
    }
    pub fn state(&self) -> TaskState {
        self.state
    }
    pub fn results(&self) -> &[Value] {
        &self.results
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum KbError {
    #[error("rule id `{0}` already present")]
    DuplicateRule(String),
}

/// Facts, structured memory, rules and acquaintances of one agent.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct KnowledgeBase {
    pub facts: BTreeMap<String, Scalar>,
    /// Structured working memory used by skills.
    pub memory: BTreeMap<String, Value>,
    rules: Vec<Rule>,
    pub acquaintances: BTreeSet<AgentId>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rules(rules: Vec<Rule>) -> Result<Self, KbError> {
        let mut kb = Self::new();
        for r in rules {
            kb.add_rule(r)?;
        }
        Ok(kb)
    }

    pub fn add_rule(&mut self, rule: Rule) -> Result<(), KbError> {
        if self.rules.iter().any(|r| r.id() == rule.id()) {
            return Err(KbError::DuplicateRule(rule.id().to_owned()));
        }
        self.rules.push(rule);
        Ok(())
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Upserts a fact.
    pub fn assert_fact(&mut self, key: &str, value: impl Into<Scalar>) {
        self.facts.insert(key.to_owned(), value.into());
    }

    /// Deletes a fact; absent keys are ignored.
    pub fn retract_fact(&mut self, key: &str) {
        self.facts.remove(key);
    }

    pub fn fact(&self, key: &str) -> Option<&Scalar> {
        self.facts.get(key)
    }

    pub fn match_rules(&self, act: &CommunicationAct) -> Vec<&Rule> {
        match_rules(&self.rules, &self.facts, act)
    }
}

/// Facts refreshed by every decision before rules are matched.
pub const FACT_LAST_EVENT: &str = "last_event";
pub const FACT_LAST_PERFORMATIVE: &str = "last_performative";
pub const FACT_LAST_SENDER: &str = "last_sender";

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error("act {act} is not addressed to {agent}")]
    NotAddressed { agent: AgentId, act: String },
    #[error("inbox of {0} is empty")]
    EmptyInbox(AgentId),
}

/// Runtime state of one agent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentState {
    id: AgentId,
    inbox: VecDeque<CommunicationAct>,
    tasks: BTreeMap<String, Task>,
    pub kb: KnowledgeBase,
    behavior_level: Level,
}

/// Level-3 hook consulted when no rule fires.
pub type DeliberateFn = fn(&AgentState, &CommunicationAct) -> Vec<Action>;

/// What a step may consult besides the agent itself.
pub struct Env<'a> {
    pub now: Tick,
    pub skills: &'a SkillSet,
    pub world: &'a dyn World,
    pub deliberate: Option<DeliberateFn>,
}

impl<'a> Env<'a> {
    pub fn new(now: Tick, skills: &'a SkillSet, world: &'a dyn World) -> Self {
        Env { now, skills, world, deliberate: None }
    }
}

/// Result of [`AgentState::decide`].
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub act: CommunicationAct,
    pub fired: Vec<String>,
    pub deliberated: bool,
    pub actions: Vec<Action>,
}

/// Result of [`AgentState::enact`].
#[derive(Clone, Debug, PartialEq)]
pub struct Enactment {
    pub task: String,
    pub state: TaskState,
    pub error: Option<String>,
    pub outputs: Vec<Output>,
}

impl Enactment {
    pub fn acts(&self) -> impl Iterator<Item = &CommunicationAct> {
        self.outputs.iter().filter_map(|o| match o {
            Output::Act { act, .. } => Some(act),
            Output::Effect(_) => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub decision: Decision,
    pub enactment: Enactment,
}

impl AgentState {
    pub fn new(id: AgentId, kb: KnowledgeBase) -> Self {
        AgentState { id, inbox: VecDeque::new(), tasks: BTreeMap::new(), kb, behavior_level: Level::RuleBased }
    }

    pub fn id(&self) -> &AgentId {
        &self.id
    }

    pub fn inbox(&self) -> &VecDeque<CommunicationAct> {
        &self.inbox
    }

    pub fn tasks(&self) -> &BTreeMap<String, Task> {
        &self.tasks
    }

    pub fn behavior_level(&self) -> Level {
        self.behavior_level
    }

    /// Appends `act` to the inbox tail.
    pub fn observe(&mut self, act: CommunicationAct) -> Result<(), AgentError> {
        if !act.is_addressed_to(&self.id) {
            return Err(AgentError::NotAddressed { agent: self.id.clone(), act: act.to_string() });
        }
        self.inbox.push_back(act);
        Ok(())
    }

    /// Pops the inbox head and returns the actions of every fired rule.
    pub fn decide(&mut self, env: &Env<'_>) -> Result<Decision, AgentError> {
        let act = self.inbox.pop_front().ok_or_else(|| AgentError::EmptyInbox(self.id.clone()))?;
        self.kb.assert_fact(FACT_LAST_EVENT, act.msg_type().as_str());
        self.kb.assert_fact(FACT_LAST_PERFORMATIVE, act.performative().as_str());
        self.kb.assert_fact(FACT_LAST_SENDER, act.sender().to_string());
        let fired = self.kb.match_rules(&act);
        let mut actions = Vec::new();
        for r in &fired {
            actions.extend(r.actions().iter().cloned());
        }
        let fired: Vec<String> = fired.iter().map(|r| r.id().to_owned()).collect();
        let mut deliberated = false;
        if fired.is_empty() {
            if let Some(hook) = env.deliberate {
                actions = hook(self, &act);
                deliberated = !actions.is_empty();
            }
        }
        Ok(Decision { act, fired, deliberated, actions })
    }

    /// Runs `actions` as one task triggered by `trigger`.
    ///
    /// The task stops at the first failing action; outputs and fact changes
    /// of the actions before it stand.
    pub fn enact(&mut self, trigger: &CommunicationAct, actions: Vec<Action>, env: &Env<'_>) -> Enactment {
        let id = format!("t-{:06}", self.tasks.len() + 1);
        let mut task = Task::new(id.clone(), actions);
        task.start();
        let mut outputs = Vec::new();
        let mut results = Vec::new();
        let mut error = None;
        for action in task.actions.iter() {
            match self.run_action(action, trigger, env, &mut outputs) {
                Ok(v) => results.push(v),
                Err(e) => {
                    results.push(json!({ "error": e.0 }));
                    error = Some(e.0);
                    break;
                }
            }
        }
        task.finish(results, error.is_some());
        let state = task.state;
        self.tasks.insert(id.clone(), task);
        Enactment { task: id, state, error, outputs }
    }

    fn run_action(
        &mut self,
        action: &Action,
        trigger: &CommunicationAct,
        env: &Env<'_>,
        out: &mut Vec<Output>,
    ) -> Result<Value, SkillError> {
        match action {
            Action::Send { performative, to, msg_type, body } => {
                let mut receivers = Vec::with_capacity(to.len());
                for t in to {
                    let id = match t {
                        Target::Sender => trigger.sender().clone(),
                        Target::Agent(id) => {
                            if !self.kb.acquaintances.contains(id) && id != trigger.sender() {
                                return Err(SkillError(format!("UnknownReceiver: {id}")));
                            }
                            id.clone()
                        }
                    };
                    receivers.push(id);
                }
                let body = if body.as_str() == Some(BODY_PLACEHOLDER) { trigger.body().clone() } else { body.clone() };
                let act = CommunicationAct::new(*performative, self.id.clone(), receivers, msg_type.clone(), body, None)
                    .map_err(SkillError::new)?;
                out.push(Output::Act { act, deliver_at: None });
                Ok(json!({ "sent": msg_type.as_str() }))
            }
            Action::Reply { body } => {
                let body = if body.as_str() == Some(BODY_PLACEHOLDER) { trigger.body().clone() } else { body.clone() };
                let act = trigger.reply(self.id.clone(), body).map_err(SkillError::new)?;
                let p = act.performative();
                out.push(Output::Act { act, deliver_at: None });
                Ok(json!({ "sent": p.as_str() }))
            }
            Action::AssertFact { key, value } => {
                self.kb.assert_fact(key, value.clone());
                Ok(json!({ "asserted": key }))
            }
            Action::RetractFact { key } => {
                self.kb.retract_fact(key);
                Ok(json!({ "retracted": key }))
            }
            Action::Invoke { skill } => {
                let f = env.skills.get(skill).ok_or_else(|| SkillError(format!("UnknownSkill: {skill}")))?;
                let mut ctx =
                    SkillCtx { me: &self.id, now: env.now, trigger, kb: &mut self.kb, world: env.world, out };
                f(&mut ctx)
            }
        }
    }

    /// One perceive/decide/act cycle. `None` when the inbox is empty.
    pub fn step(&mut self, env: &Env<'_>) -> Option<StepReport> {
        if self.inbox.is_empty() {
            return None;
        }
        let decision = self.decide(env).expect("inbox is nonempty");
        let enactment = self.enact(&decision.act, decision.actions.clone(), env);
        Some(StepReport { decision, enactment })
    }
}
