use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::KnowledgeBase;
use crate::archive::SessionArchive;
use crate::interaction::{AgentId, CommunicationAct};
use crate::organization::{Community, Interaction, Role};
use crate::Tick;

/// Something an agent wants the kernel to do after a step.
#[derive(Clone, Debug, PartialEq)]
pub enum Output {
    /// Route an act. `deliver_at` schedules delivery no earlier than that tick.
    Act { act: CommunicationAct, deliver_at: Option<Tick> },
    Effect(Effect),
}

/// Organization and memory changes only the kernel may apply.
#[derive(Clone, Debug, PartialEq)]
pub enum Effect {
    FormCommunity { id: String, members: BTreeSet<AgentId>, mediator: AgentId, interactions: BTreeSet<Interaction> },
    JoinCommunity { id: String, member: AgentId },
    DissolveCommunity { id: String },
    /// File an act into a session archive.
    File { session: String, act: CommunicationAct },
}

/// Read-only view of the surroundings an agent may consult while acting.
pub trait World {
    fn is_registered(&self, id: &AgentId) -> bool;
    fn has_role(&self, id: &AgentId, role: &Role) -> bool;
    fn resolve(&self, competence: &str) -> Vec<AgentId>;
    fn community(&self, id: &str) -> Option<&Community>;
    fn archive(&self, session: &str) -> Option<&SessionArchive>;
}

/// A world with nothing in it.
pub struct NoWorld;

impl World for NoWorld {
    fn is_registered(&self, _: &AgentId) -> bool {
        false
    }
    fn has_role(&self, _: &AgentId, _: &Role) -> bool {
        false
    }
    fn resolve(&self, _: &str) -> Vec<AgentId> {
        Vec::new()
    }
    fn community(&self, _: &str) -> Option<&Community> {
        None
    }
    fn archive(&self, _: &str) -> Option<&SessionArchive> {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct SkillError(pub String);

impl SkillError {
    pub fn new(msg: impl ToString) -> Self {
        SkillError(msg.to_string())
    }
}

/// Native procedure a rule can invoke by name.
pub type SkillFn = fn(&mut SkillCtx<'_>) -> Result<Value, SkillError>;

/// Named skills available to agents.
#[derive(Clone, Default)]
pub struct SkillSet(BTreeMap<String, SkillFn>);

impl SkillSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, skill: SkillFn) -> &mut Self {
        self.0.insert(name.to_owned(), skill);
        self
    }

    pub fn get(&self, name: &str) -> Option<SkillFn> {
        self.0.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

impl core::fmt::Debug for SkillSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_set().entries(self.0.keys()).finish()
    }
}

/// Everything a skill sees while it runs.
pub struct SkillCtx<'a> {
    pub(super) me: &'a AgentId,
    pub(super) now: Tick,
    pub(super) trigger: &'a CommunicationAct,
    pub(super) kb: &'a mut KnowledgeBase,
    pub(super) world: &'a dyn World,
    pub(super) out: &'a mut Vec<Output>,
}

impl<'a> SkillCtx<'a> {
    pub fn me(&self) -> &AgentId {
        self.me
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn trigger(&self) -> &CommunicationAct {
        self.trigger
    }

    pub fn kb(&self) -> &KnowledgeBase {
        self.kb
    }

    pub fn kb_mut(&mut self) -> &mut KnowledgeBase {
        self.kb
    }

    pub fn world(&self) -> &dyn World {
        self.world
    }

    pub fn send(&mut self, act: CommunicationAct) -> Result<(), SkillError> {
        self.send_at(act, None)
    }

    pub fn send_at(&mut self, act: CommunicationAct, deliver_at: Option<Tick>) -> Result<(), SkillError> {
        if act.sender() != self.me {
            return Err(SkillError::new("cannot send on behalf of another agent"));
        }
        self.out.push(Output::Act { act, deliver_at });
        Ok(())
    }

    /// Replies to the triggering act with the performative it obliges.
    pub fn reply(&mut self, body: Value) -> Result<(), SkillError> {
        let act = self.trigger.reply(self.me.clone(), body).map_err(SkillError::new)?;
        self.send(act)
    }

    pub fn effect(&mut self, effect: Effect) {
        self.out.push(Output::Effect(effect));
    }

    /// Loads a structured memory entry, or its default when absent.
    pub fn load<T: DeserializeOwned + Default>(&self, key: &str) -> Result<T, SkillError> {
        match self.kb.memory.get(key) {
            None => Ok(T::default()),
            Some(v) => T::deserialize(v).map_err(SkillError::new),
        }
    }

    pub fn store<T: Serialize>(&mut self, key: &str, value: &T) -> Result<(), SkillError> {
        let v = serde_json::to_value(value).map_err(SkillError::new)?;
        self.kb.memory.insert(key.to_owned(), v);
        Ok(())
    }
}
