//! Scripted runs against a fresh kernel.
//!
//! A scenario file is a JSON object:
//!
//! ```json
//! {
//!   "participants": ["alice", {"name": "bob", "supervisor": true}],
//!   "seed": 7,
//!   "expected_digest": "…",
//!   "script": [{"at": 0, "actor": "alice", "op": "open_session", "args": {"session": "s1"}}]
//! }
//! ```
//!
//! `descriptor` may replace the shipped tool set; `participants` are added to
//! its users. Steps run in `(at, position)` order: the kernel is advanced to
//! `at`, the step's act is submitted, and after the last step the kernel runs
//! until quiescent.

use std::path::Path;

use placid_core::interaction::AgentId;
use placid_core::kernel::{KernelConfig, SubmitError};
use placid_core::microtools::request::parse_participant;
use placid_core::microtools::{DeployError, Descriptor, Request, UserSpec};
use placid_core::{Kernel, Tick};
use serde::Deserialize;
use serde_json::Value;

use crate::persistence::{Store, StoreError, SETTLE_TICKS};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    descriptor: Option<Descriptor>,
    #[serde(default)]
    participants: Vec<Participant>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    expected_digest: Option<String>,
    #[serde(default)]
    script: Vec<RawStep>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Participant {
    Name(String),
    Spec(UserSpec),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    at: Tick,
    actor: String,
    op: String,
    #[serde(default)]
    args: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub at: Tick,
    pub actor: AgentId,
    pub request: Request,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub descriptor: Descriptor,
    pub seed: u64,
    pub expected_digest: Option<String>,
    pub steps: Vec<Step>,
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("scenario does not parse: {0}")]
    Json(String),
    #[error("step {index}: {reason}")]
    Step { index: usize, reason: String },
    #[error(transparent)]
    Deploy(#[from] DeployError),
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("step {index} was rejected: {error}")]
    Rejected { index: usize, error: SubmitError },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("kernel did not settle within {0} ticks")]
    Unsettled(u64),
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ParseError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ParseError::Read { path: path.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Scenario, ParseError> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| ParseError::Json(e.to_string()))?;
        let mut descriptor = raw.descriptor.unwrap_or_else(Descriptor::papoticiel);
        for p in raw.participants {
            descriptor.users.push(match p {
                Participant::Name(n) => UserSpec::new(&n),
                Participant::Spec(s) => s,
            });
        }
        // boot once so a bad descriptor surfaces as a parse error
        let probe = descriptor.boot(raw.seed)?;
        let mut steps = Vec::with_capacity(raw.script.len());
        for (index, s) in raw.script.into_iter().enumerate() {
            let fail = |reason: String| ParseError::Step { index, reason };
            let actor = if s.actor.contains(':') { s.actor.parse::<AgentId>().ok() } else { parse_participant(&s.actor) }
                .ok_or_else(|| fail(format!("bad actor `{}`", s.actor)))?;
            if probe.agent(&actor).is_none() {
                return Err(fail(format!("actor {actor} is not deployed")));
            }
            let request = Request::parse(&s.op, s.args).map_err(|e| fail(e.to_string()))?;
            steps.push(Step { at: s.at, actor, request });
        }
        steps.sort_by_key(|s| s.at);
        Ok(Scenario { descriptor, seed: raw.seed, expected_digest: raw.expected_digest, steps })
    }

    pub fn boot(&self, seed: u64) -> Result<Kernel, DeployError> {
        self.descriptor.boot_with(KernelConfig { timeout: self.descriptor.timeout, seed, tap_users: false })
    }

    /// Runs the script from a fresh kernel. When `store` is given every
    /// submission is journaled and archive records are mirrored.
    pub fn run(&self, seed: u64, mut store: Option<&mut Store>) -> Result<Kernel, RunError> {
        let mut kernel = self.boot(seed).map_err(StoreError::from)?;
        for (index, step) in self.steps.iter().enumerate() {
            kernel.run_until(step.at);
            if let Some(s) = store.as_deref_mut() {
                s.sync_archive(&mut kernel)?;
            }
            let act = step.request.to_act(&step.actor).expect("requests build valid acts");
            kernel.submit(act.clone()).map_err(|error| RunError::Rejected { index, error })?;
            if let Some(s) = store.as_deref_mut() {
                s.journal(kernel.tick(), &act)?;
            }
        }
        if !kernel.run(SETTLE_TICKS).quiescent {
            return Err(RunError::Unsettled(SETTLE_TICKS));
        }
        if let Some(s) = store {
            s.close(&mut kernel)?;
        }
        Ok(kernel)
    }
}

/// The trace as JSON lines, LF-terminated.
pub fn trace_jsonl(kernel: &Kernel) -> String {
    let mut out = String::new();
    for e in kernel.trace() {
        out.push_str(&e.to_json_line());
        out.push('\n');
    }
    out
}
