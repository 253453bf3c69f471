//! Deployment descriptors: which agents exist, with what roles, competences,
//! facts and rules, plus the human users and any standing communities.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentState, KbError, KnowledgeBase, Rule, Scalar};
use crate::interaction::{AgentId, DEFAULT_TIMEOUT};
use crate::kernel::{Kernel, KernelConfig};
use crate::organization::{Interaction, OrgError, Role};
use crate::Tick;

use super::agents::{skills, CONNECTED};
use super::USER_COMPETENCES;

/// The shipped descriptor of the meeting tools.
pub const PAPOTICIEL_JSON: &str = include_str!("../../assets/papoticiel.json");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub name: String,
    #[serde(default)]
    pub password: String,
    #[serde(default)]
    pub supervisor: bool,
    /// Whether the user counts as connected at boot.
    #[serde(default = "yes")]
    pub connected: bool,
}

fn yes() -> bool {
    true
}

impl UserSpec {
    pub fn new(name: &str) -> Self {
        UserSpec { name: name.to_owned(), password: String::new(), supervisor: false, connected: true }
    }

    pub fn id(&self) -> Result<AgentId, DeployError> {
        AgentId::user(&self.name).map_err(|e| DeployError::BadUser(self.name.clone(), e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: AgentId,
    pub roles: BTreeSet<Role>,
    #[serde(default)]
    pub competences: BTreeSet<String>,
    #[serde(default)]
    pub acquaintances: BTreeSet<AgentId>,
    #[serde(default)]
    pub facts: BTreeMap<String, Scalar>,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunitySpec {
    pub id: String,
    pub members: BTreeSet<AgentId>,
    pub mediator: AgentId,
    #[serde(default)]
    pub interactions: BTreeSet<Interaction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Descriptor {
    #[serde(default = "default_timeout")]
    pub timeout: Tick,
    #[serde(default)]
    pub users: Vec<UserSpec>,
    /// Rules given to every user agent.
    #[serde(default)]
    pub user_rules: Vec<Rule>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub communities: Vec<CommunitySpec>,
}

fn default_timeout() -> Tick {
    DEFAULT_TIMEOUT
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DeployError {
    #[error("descriptor does not parse: {0}")]
    Parse(String),
    #[error("bad user `{0}`: {1}")]
    BadUser(String, String),
    #[error("duplicate user `{0}`")]
    DuplicateUser(String),
    #[error(transparent)]
    Org(#[from] OrgError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

impl Descriptor {
    pub fn parse(json: &str) -> Result<Self, DeployError> {
        serde_json::from_str(json).map_err(|e| DeployError::Parse(e.to_string()))
    }

    /// The shipped tool set without users.
    pub fn papoticiel() -> Self {
        Self::parse(PAPOTICIEL_JSON).expect("shipped descriptor parses")
    }

    /// The shipped tool set with the named users, all connected.
    pub fn with_users<S: AsRef<str>>(names: &[S]) -> Self {
        let mut d = Self::papoticiel();
        d.users = names.iter().map(|n| UserSpec::new(n.as_ref())).collect();
        d
    }

    pub fn user(&self, name: &str) -> Option<&UserSpec> {
        self.users.iter().find(|u| u.name == name)
    }

    /// Builds a kernel, registers every agent and user, forms standing
    /// communities and sends the boot notice.
    pub fn boot(&self, seed: u64) -> Result<Kernel, DeployError> {
        self.boot_with(KernelConfig { timeout: self.timeout, seed, tap_users: false })
    }

    pub fn boot_with(&self, config: KernelConfig) -> Result<Kernel, DeployError> {
        let mut kernel = Kernel::new(config, skills());
        for spec in &self.agents {
            let mut kb = KnowledgeBase::with_rules(spec.rules.clone())?;
            kb.facts = spec.facts.clone();
            kb.acquaintances = spec.acquaintances.clone();
            kernel.add_agent(AgentState::new(spec.id.clone(), kb), spec.roles.clone(), spec.competences.clone())?;
        }
        let mut seen = BTreeSet::new();
        for u in &self.users {
            if !seen.insert(u.name.as_str()) {
                return Err(DeployError::DuplicateUser(u.name.clone()));
            }
            let id = u.id()?;
            let mut kb = KnowledgeBase::with_rules(self.user_rules.clone())?;
            kb.assert_fact(CONNECTED, u.connected);
            let mut roles: BTreeSet<Role> = [Role::Specialist].into_iter().collect();
            if u.supervisor {
                roles.insert(Role::Supervisor);
            }
            let competences = USER_COMPETENCES.iter().map(|c| (*c).to_owned()).collect();
            kernel.add_agent(AgentState::new(id, kb), roles, competences)?;
        }
        for c in &self.communities {
            kernel.registry_mut().form_community(&c.id, c.members.clone(), c.mediator.clone(), c.interactions.clone())?;
        }
        kernel.boot();
        Ok(kernel)
    }
}
