//! Deterministic scheduler.
//!
//! Each loop of [`Kernel::tick_once`] delivers every act due at the current
//! tick in `(due, seq)` order, steps every agent with a nonempty inbox in
//! canonical id order until its inbox drains, expires conversations whose
//! deadline has passed, and advances the tick. Acts emitted during a tick are
//! delivered on the next one. Everything observable is appended to a trace
//! whose digest is stable across runs and platforms.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::Serialize;
use serde_json::json;

use crate::agent::{AgentState, DeliberateFn, Effect, Env, Output, SkillSet, StepReport, TaskState, World};
use crate::archive::{Archive, SessionArchive};
use crate::digest::{short_hex, LineHasher};
use crate::interaction::{
    id_list, open_conversation, AgentId, CommunicationAct, ConvCounter, ConvId, ConvState, Conversation, Orphan,
    Performative, ReplyMatch, DEFAULT_TIMEOUT,
};
use crate::organization::{mediate, Community, MediateError, OrgError, Registry, Role};
use crate::Tick;

/// Message type of the notice sent to every agent by [`Kernel::boot`].
pub const BOOT_EVENT: &str = "sys.start";
/// Notice sent to an opener (and supervisors) when a conversation times out.
pub const TIMEOUT_EVENT: &str = "conv.timeout";
/// Notice sent to supervisors when a task fails.
pub const TASK_FAILED_EVENT: &str = "task.failed";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Delivered,
    FiredRule,
    TaskDone,
    TaskFailed,
    ConvOpened,
    ConvClosed,
    ConvTimeout,
    Dropped,
}

/// One trace line. Field order is the serialization order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub tick: Tick,
    pub kind: TraceKind,
    pub subject: String,
    pub detail: String,
    pub digest: String,
}

impl TraceEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace events serialize")
    }
}

/// Short digest of an act's canonical serialization.
pub fn act_digest(act: &CommunicationAct) -> String {
    let bytes = serde_json::to_vec(act).expect("acts serialize");
    short_hex(&bytes, 8)
}

/// Digest over the JSON-lines form of `trace`.
pub fn digest_of(trace: &[TraceEvent]) -> String {
    let mut h = LineHasher::default();
    for e in trace {
        h.push_line(&e.to_json_line());
    }
    h.finish()
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("unknown sender {0}")]
    UnknownSender(AgentId),
    #[error("unknown receiver {0}")]
    UnknownReceiver(AgentId),
    #[error("unknown community `{0}`")]
    UnknownCommunity(String),
    #[error(transparent)]
    Mediation(#[from] MediateError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submitted {
    /// Conversation opened for this act, if it was an opener.
    pub conv: Option<ConvId>,
    pub deliveries: usize,
    /// Why a reply was dropped instead of delivered.
    pub dropped: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub ticks: u64,
    pub quiescent: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KernelConfig {
    pub timeout: Tick,
    pub seed: u64,
    /// Keep a copy of every act delivered to a user agent.
    pub tap_users: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { timeout: DEFAULT_TIMEOUT, seed: 0, tap_users: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct Delivery {
    receiver: AgentId,
    act: CommunicationAct,
}

enum ReplyStatus {
    Opener,
    Reply(ConvId),
    Plain,
}

struct Plan {
    act: CommunicationAct,
    status: ReplyStatus,
    due: Tick,
}

struct KernelWorld<'a> {
    registry: &'a Registry,
    archive: &'a Archive,
}

impl World for KernelWorld<'_> {
    fn is_registered(&self, id: &AgentId) -> bool {
        self.registry.contains(id)
    }
    fn has_role(&self, id: &AgentId, role: &Role) -> bool {
        self.registry.has_role(id, role)
    }
    fn resolve(&self, competence: &str) -> Vec<AgentId> {
        self.registry.resolve_by_competence(competence)
    }
    fn community(&self, id: &str) -> Option<&Community> {
        self.registry.community(id)
    }
    fn archive(&self, session: &str) -> Option<&SessionArchive> {
        self.archive.session(session)
    }
}

/// The whole running system.
pub struct Kernel {
    tick: Tick,
    agents: BTreeMap<AgentId, AgentState>,
    registry: Registry,
    archive: Archive,
    open: BTreeMap<ConvId, Conversation>,
    settled: BTreeMap<ConvId, ConvState>,
    pending: BTreeMap<(Tick, u64), Delivery>,
    trace: Vec<TraceEvent>,
    config: KernelConfig,
    convs: ConvCounter,
    seq: u64,
    skills: SkillSet,
    deliberation: BTreeMap<AgentId, DeliberateFn>,
    tapped: Vec<(AgentId, CommunicationAct)>,
}

impl Kernel {
    pub fn new(config: KernelConfig, skills: SkillSet) -> Self {
        Kernel {
            tick: 0,
            agents: BTreeMap::new(),
            registry: Registry::new(),
            archive: Archive::default(),
            open: BTreeMap::new(),
            settled: BTreeMap::new(),
            pending: BTreeMap::new(),
            trace: Vec::new(),
            config,
            convs: ConvCounter::default(),
            seq: 0,
            skills,
            deliberation: BTreeMap::new(),
            tapped: Vec::new(),
        }
    }

    pub fn add_agent(
        &mut self,
        state: AgentState,
        roles: BTreeSet<Role>,
        competences: BTreeSet<String>,
    ) -> Result<(), OrgError> {
        self.registry.register_agent(state.id().clone(), roles, competences)?;
        self.agents.insert(state.id().clone(), state);
        Ok(())
    }

    pub fn set_deliberation(&mut self, agent: AgentId, hook: DeliberateFn) {
        self.deliberation.insert(agent, hook);
    }

    /// Notifies every agent that the system started.
    pub fn boot(&mut self) {
        let ids: Vec<AgentId> = self.agents.keys().cloned().collect();
        if ids.is_empty() {
            return;
        }
        let act = CommunicationAct::new(
            Performative::Diffuse,
            AgentId::kernel(),
            ids,
            crate::interaction::MsgType::new(BOOT_EVENT).expect("valid"),
            json!({}),
            None,
        )
        .expect("valid boot act");
        self.route_internal(act, None);
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut Registry {
        &mut self.registry
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn archive_mut(&mut self) -> &mut Archive {
        &mut self.archive
    }

    pub fn agent(&self, id: &AgentId) -> Option<&AgentState> {
        self.agents.get(id)
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.values()
    }

    pub fn open_conversations(&self) -> &BTreeMap<ConvId, Conversation> {
        &self.open
    }

    pub fn settled_conversations(&self) -> &BTreeMap<ConvId, ConvState> {
        &self.settled
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn trace_digest(&self) -> String {
        digest_of(&self.trace)
    }

    /// Acts delivered to user agents since the last call (requires `tap_users`).
    pub fn take_user_deliveries(&mut self) -> Vec<(AgentId, CommunicationAct)> {
        core::mem::take(&mut self.tapped)
    }

    /// No pending deliveries, no unread inbox, no open conversation.
    pub fn is_quiescent(&self) -> bool {
        self.pending.is_empty() && self.open.is_empty() && self.agents.values().all(|a| a.inbox().is_empty())
    }

    /// Earliest tick whose `tick_once` has work: an unread inbox, a due
    /// delivery, or a conversation timing out. `None` when fully idle.
    pub fn next_due(&self) -> Option<Tick> {
        if self.agents.values().any(|a| !a.inbox().is_empty()) {
            return Some(self.tick);
        }
        let delivery = self.pending.keys().next().map(|(due, _)| (*due).max(self.tick));
        let expiry = self.open.values().map(|c| c.deadline().saturating_add(1).max(self.tick)).min();
        match (delivery, expiry) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Enqueues an externally submitted act at the current tick.
    ///
    /// Rejected acts leave the kernel untouched. Replies that match no
    /// awaiting conversation are accepted but dropped with a trace event.
    pub fn submit(&mut self, act: CommunicationAct) -> Result<Submitted, SubmitError> {
        if act.sender() == &AgentId::kernel() || !self.registry.contains(act.sender()) {
            return Err(SubmitError::UnknownSender(act.sender().clone()));
        }
        let plan = self.plan(act, None)?;
        Ok(self.commit(plan))
    }

    fn plan(&self, act: CommunicationAct, deliver_at: Option<Tick>) -> Result<Plan, SubmitError> {
        let act = match act.receivers().iter().find_map(|r| r.community_id()) {
            Some(cid) => {
                let community =
                    self.registry.community(cid).ok_or_else(|| SubmitError::UnknownCommunity(cid.to_owned()))?;
                if act.receivers().len() != 1 {
                    return Err(MediateError::NotADiffuse.into());
                }
                match mediate(community, &act)?.pop() {
                    Some(a) => a,
                    None => {
                        // Nobody else in the community: nothing to deliver.
                        return Ok(Plan { act, status: ReplyStatus::Plain, due: self.tick });
                    }
                }
            }
            None => act,
        };
        if let Some(r) = act.receivers().iter().find(|r| !self.agents.contains_key(*r)) {
            return Err(SubmitError::UnknownReceiver(r.clone()));
        }
        let status = if act.performative().expects_reply().is_some() {
            ReplyStatus::Opener
        } else if act.performative().is_reply() {
            ReplyStatus::Reply(act.conv().cloned().expect("replies carry a conv id"))
        } else {
            ReplyStatus::Plain
        };
        let due = deliver_at.map_or(self.tick, |t| t.max(self.tick));
        Ok(Plan { act, status, due })
    }

    fn commit(&mut self, plan: Plan) -> Submitted {
        let Plan { mut act, status, due } = plan;
        if act.receivers().iter().any(|r| r.community_id().is_some()) {
            return Submitted { conv: None, deliveries: 0, dropped: Some("empty_community".to_owned()) };
        }
        let mut conv = None;
        match status {
            ReplyStatus::Opener => {
                let c = open_conversation(&mut self.convs, &act, self.tick, self.config.timeout)
                    .expect("openers expect a reply");
                act = c.opener().clone();
                self.push_trace(
                    TraceKind::ConvOpened,
                    c.id().to_string(),
                    format!("{} {} {}->{}", act.performative(), act.msg_type(), act.sender(), id_list(act.receivers())),
                    &act,
                );
                conv = Some(c.id().clone());
                self.open.insert(c.id().clone(), c);
            }
            ReplyStatus::Reply(id) => {
                let reason = match self.open.get_mut(&id) {
                    Some(c) => match c.match_reply(&act).expect("open conversations await a reply") {
                        ReplyMatch::Closed => None,
                        ReplyMatch::Orphan(o) => Some(o.as_str()),
                    },
                    None if self.settled.contains_key(&id) => Some("already_closed"),
                    None => Some(Orphan::WrongConv.as_str()),
                };
                if let Some(reason) = reason {
                    self.push_trace(
                        TraceKind::Dropped,
                        act.sender().to_string(),
                        format!("orphan {reason} {} {}", act.performative(), id),
                        &act,
                    );
                    return Submitted { conv: None, deliveries: 0, dropped: Some(reason.to_owned()) };
                }
                let c = self.open.remove(&id).expect("matched conversation is open");
                self.settled.insert(id.clone(), c.state());
                self.push_trace(
                    TraceKind::ConvClosed,
                    id.to_string(),
                    format!("{} by {}", act.performative(), act.sender()),
                    &act,
                );
            }
            ReplyStatus::Plain => {}
        }
        let deliveries = act.receivers().len();
        for r in act.receivers() {
            self.seq += 1;
            self.pending.insert((due, self.seq), Delivery { receiver: r.clone(), act: act.clone() });
        }
        Submitted { conv, deliveries, dropped: None }
    }

    fn route_internal(&mut self, act: CommunicationAct, deliver_at: Option<Tick>) {
        match self.plan(act.clone(), deliver_at) {
            Ok(plan) => {
                self.commit(plan);
            }
            Err(e) => self.push_trace(TraceKind::Dropped, act.sender().to_string(), e.to_string(), &act),
        }
    }

    fn push_trace(&mut self, kind: TraceKind, subject: String, detail: String, act: &CommunicationAct) {
        self.trace.push(TraceEvent { tick: self.tick, kind, subject, detail, digest: act_digest(act) });
    }

    /// One scheduler loop. Always advances the tick by one.
    pub fn tick_once(&mut self) {
        self.deliver_due();
        self.step_agents();
        self.expire_conversations();
        self.tick += 1;
    }

    fn deliver_due(&mut self) {
        while let Some(entry) = self.pending.first_entry() {
            if entry.key().0 > self.tick {
                break;
            }
            let Delivery { receiver, act } = entry.remove();
            self.push_trace(
                TraceKind::Delivered,
                receiver.to_string(),
                {
                    let mut d = format!("{} {} {}", act.performative(), act.msg_type(), act.sender());
                    if let Some(c) = act.conv() {
                        d.push(' ');
                        d.push_str(c.as_str());
                    }
                    d
                },
                &act,
            );
            if self.config.tap_users && receiver.is_user() {
                self.tapped.push((receiver.clone(), act.clone()));
            }
            self.agents.get_mut(&receiver).expect("receivers are checked on enqueue").observe(act).expect("addressed");
        }
    }

    fn step_agents(&mut self) {
        let ids: Vec<AgentId> =
            self.agents.iter().filter(|(_, a)| !a.inbox().is_empty()).map(|(id, _)| id.clone()).collect();
        for id in ids {
            loop {
                let report = {
                    let world = KernelWorld { registry: &self.registry, archive: &self.archive };
                    let env = Env {
                        now: self.tick,
                        skills: &self.skills,
                        world: &world,
                        deliberate: self.deliberation.get(&id).copied(),
                    };
                    let agent = self.agents.get_mut(&id).expect("listed agent");
                    match agent.step(&env) {
                        Some(r) => r,
                        None => break,
                    }
                };
                self.absorb(&id, report);
            }
        }
    }

    fn absorb(&mut self, id: &AgentId, report: StepReport) {
        let StepReport { decision, enactment } = report;
        let trigger = &decision.act;
        for rule in &decision.fired {
            self.push_trace(TraceKind::FiredRule, id.to_string(), rule.clone(), trigger);
        }
        if decision.fired.is_empty() && !decision.deliberated {
            self.push_trace(TraceKind::Dropped, id.to_string(), format!("no_rule {}", trigger.msg_type()), trigger);
            return;
        }
        for output in enactment.outputs {
            match output {
                Output::Act { act, deliver_at } => {
                    if act.sender() != id {
                        self.push_trace(TraceKind::Dropped, id.to_string(), "forged_sender".to_owned(), &act);
                    } else {
                        self.route_internal(act, deliver_at);
                    }
                }
                Output::Effect(effect) => self.apply(id, effect, trigger),
            }
        }
        match enactment.state {
            TaskState::Failed => {
                let err = enactment.error.unwrap_or_default();
                self.push_trace(TraceKind::TaskFailed, id.to_string(), format!("{}: {}", enactment.task, err), trigger);
                let supervisors: Vec<AgentId> = self.registry.supervisors().into_iter().filter(|s| s != id).collect();
                if !supervisors.is_empty() {
                    self.notify(supervisors, TASK_FAILED_EVENT, json!({
                        "agent": id.to_string(),
                        "task": enactment.task,
                        "error": err,
                    }));
                }
            }
            _ => self.push_trace(TraceKind::TaskDone, id.to_string(), enactment.task, trigger),
        }
    }

    fn apply(&mut self, id: &AgentId, effect: Effect, trigger: &CommunicationAct) {
        let result = match effect {
            Effect::FormCommunity { id: cid, members, mediator, interactions } => {
                self.registry.form_community(&cid, members, mediator, interactions).map(|_| ())
            }
            Effect::JoinCommunity { id: cid, member } => self.registry.join_community(&cid, member),
            Effect::DissolveCommunity { id: cid } => self.registry.dissolve_community(&cid).map(|_| ()),
            Effect::File { session, act } => {
                self.archive.file(&session, self.tick, act);
                Ok(())
            }
        };
        if let Err(e) = result {
            self.push_trace(TraceKind::Dropped, id.to_string(), format!("effect {e}"), trigger);
        }
    }

    fn notify(&mut self, receivers: Vec<AgentId>, msg_type: &str, body: serde_json::Value) {
        let act = CommunicationAct::new(
            Performative::Diffuse,
            AgentId::kernel(),
            receivers,
            crate::interaction::MsgType::new(msg_type).expect("valid"),
            body,
            None,
        )
        .expect("valid notice");
        self.route_internal(act, None);
    }

    fn expire_conversations(&mut self) {
        let now = self.tick;
        let expired: Vec<ConvId> =
            self.open.iter().filter(|(_, c)| now > c.deadline()).map(|(id, _)| id.clone()).collect();
        for cid in expired {
            let mut c = self.open.remove(&cid).expect("listed");
            let fired = c.expire(now);
            debug_assert!(fired);
            self.settled.insert(cid.clone(), c.state());
            let opener = c.opener().clone();
            self.push_trace(TraceKind::ConvTimeout, cid.to_string(), opener.msg_type().to_string(), &opener);
            let mut to = alloc::vec![opener.sender().clone()];
            for s in self.registry.supervisors() {
                if !to.contains(&s) {
                    to.push(s);
                }
            }
            self.notify(to, TIMEOUT_EVENT, json!({
                "conv": cid.as_str(),
                "type": opener.msg_type().as_str(),
                "to": opener.receivers().iter().map(|r| r.to_string()).collect::<Vec<_>>(),
                "body": opener.body(),
            }));
        }
    }

    /// Loops until quiescent or `max_ticks` loops have run.
    pub fn run(&mut self, max_ticks: u64) -> RunOutcome {
        let mut ticks = 0;
        while ticks < max_ticks && !self.is_quiescent() {
            self.tick_once();
            ticks += 1;
        }
        RunOutcome { ticks, quiescent: self.is_quiescent() }
    }

    /// Loops, quiescent or not, until the tick reaches `target`.
    pub fn run_until(&mut self, target: Tick) {
        while self.tick < target {
            self.tick_once();
        }
    }

    /// Digest over the serialized state of every agent, the organization,
    /// the archive, conversations, pending deliveries and the trace.
    pub fn state_digest(&self) -> String {
        self.digest_view(Some(self.trace_digest()))
    }

    /// Like [`Kernel::state_digest`] but leaves the trace out, so it only
    /// changes when something other than the trace does.
    pub fn world_digest(&self) -> String {
        self.digest_view(None)
    }

    fn digest_view(&self, trace: Option<String>) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            tick: Tick,
            seed: u64,
            agents: Vec<&'a AgentState>,
            registry: &'a Registry,
            archive: &'a Archive,
            open: Vec<&'a Conversation>,
            settled: &'a BTreeMap<ConvId, ConvState>,
            pending: Vec<(&'a Tick, &'a Delivery)>,
            #[serde(skip_serializing_if = "Option::is_none")]
            trace: Option<String>,
        }
        let view = View {
            tick: self.tick,
            seed: self.config.seed,
            agents: self.agents.values().collect(),
            registry: &self.registry,
            archive: &self.archive,
            open: self.open.values().collect(),
            settled: &self.settled,
            pending: self.pending.iter().map(|((due, _), d)| (due, d)).collect(),
            trace,
        };
        crate::digest::sha256_hex(&serde_json::to_vec(&view).expect("state serializes"))
    }
}
