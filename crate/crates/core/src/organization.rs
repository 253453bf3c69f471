//! Agents, roles, communities and the competence directory.
//!
//! The registry is the `⟨Agt, Int, Ro, Co⟩` of a running system: which agents
//! exist, what roles and competences they advertise, and how they are grouped
//! into communities fronted by a mediator.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agent::EventPattern;
use crate::interaction::{is_name, make_act, AgentId, CommunicationAct, Performative};

/// Hierarchy tier or open tool role such as `chat.com`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Specialist,
    Mediator,
    Supervisor,
    Tool(String),
}

impl Role {
    pub fn as_str(&self) -> &str {
        match self {
            Role::Specialist => "specialist",
            Role::Mediator => "mediator",
            Role::Supervisor => "supervisor",
            Role::Tool(s) => s,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = OrgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "specialist" => Role::Specialist,
            "mediator" => Role::Mediator,
            "supervisor" => Role::Supervisor,
            other if crate::interaction::MsgType::new(other).is_ok() => Role::Tool(other.to_owned()),
            other => return Err(OrgError::BadRole(other.to_owned())),
        })
    }
}

impl Serialize for Role {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Lowercase-hyphenated skill name, e.g. `filing-of-messages`.
pub fn is_competence(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('-')
        && !s.ends_with('-')
        && !s.contains("--")
        && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OrgError {
    #[error("agent {0} is already registered")]
    DuplicateAgent(AgentId),
    #[error("agent {0} must hold at least one role")]
    NoRoles(AgentId),
    #[error("invalid role `{0}`")]
    BadRole(String),
    #[error("invalid competence `{0}` (expected lowercase-hyphenated)")]
    BadCompetence(String),
    #[error("community pseudo-receiver {0} cannot be registered as an agent")]
    ReservedId(AgentId),
    #[error("invalid community id `{0}`")]
    BadCommunityId(String),
    #[error("community `{0}` already exists")]
    CommunityExists(String),
    #[error("unknown community `{0}`")]
    UnknownCommunity(String),
    #[error("community must have at least one member")]
    EmptyCommunity,
    #[error("member {0} is not registered")]
    UnknownMember(AgentId),
    #[error("mediator {0} is not a member of the community")]
    MediatorNotMember(AgentId),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MediateError {
    #[error("sender {0} is not a member of community `{1}`")]
    SenderNotMember(AgentId, String),
    #[error("({0}, {1}) is not an allowed interaction in community `{2}`")]
    InteractionNotAllowed(Performative, String, String),
    #[error("community-addressed acts must be diffuse with a single receiver")]
    NotADiffuse,
}

/// Registry entry for one agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Registration {
    pub roles: BTreeSet<Role>,
    pub competences: BTreeSet<String>,
}

/// One allowed `(performative, msg_type pattern)` pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interaction {
    pub performative: Performative,
    #[serde(rename = "type")]
    pub pattern: EventPattern,
}

impl Interaction {
    pub fn new(performative: Performative, pattern: EventPattern) -> Self {
        Interaction { performative, pattern }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Community {
    id: String,
    members: BTreeSet<AgentId>,
    mediator: AgentId,
    /// Empty means unrestricted.
    interactions: BTreeSet<Interaction>,
}

impl Community {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn members(&self) -> &BTreeSet<AgentId> {
        &self.members
    }

    pub fn mediator(&self) -> &AgentId {
        &self.mediator
    }

    pub fn interactions(&self) -> &BTreeSet<Interaction> {
        &self.interactions
    }

    pub fn pseudo_receiver(&self) -> AgentId {
        // The id was validated on formation.
        AgentId::community(&self.id).expect("validated community id")
    }

    pub fn allows(&self, performative: Performative, msg_type: &crate::interaction::MsgType) -> bool {
        self.interactions.is_empty()
            || self.interactions.iter().any(|i| i.performative == performative && i.pattern.matches(msg_type))
    }

    fn check(&self) {
        debug_assert!(!self.members.is_empty() && self.members.contains(&self.mediator));
    }
}

/// Polices `act` and rewrites community-addressed diffuses into a fan-out
/// from the mediator to every other member.
///
/// Acts that do not address the community pass through unchanged once the
/// sender and the interaction pair are checked.
pub fn mediate(community: &Community, act: &CommunicationAct) -> Result<Vec<CommunicationAct>, MediateError> {
    if !community.members.contains(act.sender()) {
        return Err(MediateError::SenderNotMember(act.sender().clone(), community.id.clone()));
    }
    if !community.allows(act.performative(), act.msg_type()) {
        return Err(MediateError::InteractionNotAllowed(
            act.performative(),
            act.msg_type().as_str().to_owned(),
            community.id.clone(),
        ));
    }
    let pseudo = community.pseudo_receiver();
    if !act.is_addressed_to(&pseudo) {
        return Ok(alloc::vec![act.clone()]);
    }
    if act.performative() != Performative::Diffuse || act.receivers().len() != 1 {
        return Err(MediateError::NotADiffuse);
    }
    let receivers: Vec<AgentId> = community.members.iter().filter(|m| *m != act.sender()).cloned().collect();
    if receivers.is_empty() {
        return Ok(Vec::new());
    }
    let rewritten = make_act(
        Performative::Diffuse,
        community.mediator.clone(),
        receivers,
        act.msg_type().as_str(),
        act.body().clone(),
        None,
    )
    .expect("fan-out of a valid diffuse is valid");
    Ok(alloc::vec![rewritten])
}

/// Agent and community directory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Registry {
    agents: BTreeMap<AgentId, Registration>,
    communities: BTreeMap<String, Community>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_agent(
        &mut self,
        id: AgentId,
        roles: BTreeSet<Role>,
        competences: BTreeSet<String>,
    ) -> Result<(), OrgError> {
        if id.community_id().is_some() || id == AgentId::kernel() {
            return Err(OrgError::ReservedId(id));
        }
        if self.agents.contains_key(&id) {
            return Err(OrgError::DuplicateAgent(id));
        }
        if roles.is_empty() {
            return Err(OrgError::NoRoles(id));
        }
        if let Some(bad) = competences.iter().find(|c| !is_competence(c)) {
            return Err(OrgError::BadCompetence(bad.clone()));
        }
        self.agents.insert(id, Registration { roles, competences });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn get(&self, id: &AgentId) -> Option<&Registration> {
        self.agents.get(id)
    }

    pub fn contains(&self, id: &AgentId) -> bool {
        self.agents.contains_key(id)
    }

    pub fn agents(&self) -> impl Iterator<Item = (&AgentId, &Registration)> {
        self.agents.iter()
    }

    pub fn has_role(&self, id: &AgentId, role: &Role) -> bool {
        self.agents.get(id).is_some_and(|r| r.roles.contains(role))
    }

    pub fn supervisors(&self) -> Vec<AgentId> {
        self.agents.iter().filter(|(_, r)| r.roles.contains(&Role::Supervisor)).map(|(id, _)| id.clone()).collect()
    }

    /// Agents advertising `competence`, in canonical id order.
    pub fn resolve_by_competence(&self, competence: &str) -> Vec<AgentId> {
        self.agents.iter().filter(|(_, r)| r.competences.contains(competence)).map(|(id, _)| id.clone()).collect()
    }

    pub fn form_community(
        &mut self,
        id: &str,
        members: BTreeSet<AgentId>,
        mediator: AgentId,
        interactions: BTreeSet<Interaction>,
    ) -> Result<&Community, OrgError> {
        if !is_name(id) {
            return Err(OrgError::BadCommunityId(id.to_owned()));
        }
        if self.communities.contains_key(id) {
            return Err(OrgError::CommunityExists(id.to_owned()));
        }
        if members.is_empty() {
            return Err(OrgError::EmptyCommunity);
        }
        if let Some(m) = members.iter().find(|m| !self.agents.contains_key(*m)) {
            return Err(OrgError::UnknownMember(m.clone()));
        }
        if !members.contains(&mediator) {
            return Err(OrgError::MediatorNotMember(mediator));
        }
        let community = Community { id: id.to_owned(), members, mediator, interactions };
        community.check();
        Ok(self.communities.entry(id.to_owned()).or_insert(community))
    }

    pub fn community(&self, id: &str) -> Option<&Community> {
        self.communities.get(id)
    }

    pub fn communities(&self) -> impl Iterator<Item = &Community> {
        self.communities.values()
    }

    pub fn join_community(&mut self, id: &str, member: AgentId) -> Result<(), OrgError> {
        if !self.agents.contains_key(&member) {
            return Err(OrgError::UnknownMember(member));
        }
        let c = self.communities.get_mut(id).ok_or_else(|| OrgError::UnknownCommunity(id.to_owned()))?;
        c.members.insert(member);
        c.check();
        Ok(())
    }

    /// Removes a member. The mediator cannot leave; dissolve the community instead.
    pub fn leave_community(&mut self, id: &str, member: &AgentId) -> Result<(), OrgError> {
        let c = self.communities.get_mut(id).ok_or_else(|| OrgError::UnknownCommunity(id.to_owned()))?;
        if *member == c.mediator {
            return Err(OrgError::MediatorNotMember(member.clone()));
        }
        c.members.remove(member);
        c.check();
        Ok(())
    }

    pub fn dissolve_community(&mut self, id: &str) -> Result<Community, OrgError> {
        self.communities.remove(id).ok_or_else(|| OrgError::UnknownCommunity(id.to_owned()))
    }
}
