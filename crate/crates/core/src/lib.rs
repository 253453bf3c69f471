#![cfg_attr(not(test), no_std)]
//! Rule-based multi-agent kernel.
//!
//! Agents exchange [`CommunicationAct`]s drawn from five performatives, decide
//! with event/condition/action rules, and record their work as tasks. The
//! [`kernel`] schedules them deterministically over logical ticks, and
//! [`microtools`] provides the meeting tool set (chat, agenda, vote) as agent
//! communities on top of it.
//!
//! The crate only needs `alloc`; IO, networking and file formats live in the
//! `placid` companion crate.

extern crate alloc;

pub mod agent;
pub mod archive;
pub mod digest;
pub mod interaction;
pub mod kernel;
pub mod microtools;
pub mod organization;

pub use agent::{Action, AgentState, KnowledgeBase, Rule, Scalar, Task, TaskState};
pub use interaction::{AgentId, CommunicationAct, ConvId, Conversation, MsgType, Performative};
pub use kernel::{Kernel, TraceEvent, TraceKind};
pub use organization::{Community, Registry, Role};

/// Logical time.
pub type Tick = u64;
