//! In-memory session archive written by the Archive agent and read by the
//! DB agent. The `placid` crate mirrors new records into per-session log files.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use crate::interaction::CommunicationAct;
use crate::Tick;

/// Message type that marks a session archive as closed.
pub const CLOSE_EVENT: &str = "session.closed";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Filed {
    pub tick: Tick,
    pub act: CommunicationAct,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SessionArchive {
    records: Vec<Filed>,
    closed: bool,
}

impl SessionArchive {
    pub fn records(&self) -> &[Filed] {
        &self.records
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Archive {
    sessions: BTreeMap<String, SessionArchive>,
    /// Filing order across sessions, as (session, index) pairs.
    order: Vec<(String, usize)>,
    #[serde(skip)]
    drained: usize,
}

impl Archive {
    pub fn file(&mut self, session: &str, tick: Tick, act: CommunicationAct) {
        let s = self.sessions.entry(session.to_owned()).or_default();
        if act.msg_type().as_str() == CLOSE_EVENT {
            s.closed = true;
        }
        s.records.push(Filed { tick, act });
        self.order.push((session.to_owned(), s.records.len() - 1));
    }

    pub fn session(&self, id: &str) -> Option<&SessionArchive> {
        self.sessions.get(id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = (&str, &SessionArchive)> {
        self.sessions.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Records filed since the previous call, in filing order.
    pub fn drain_new(&mut self) -> Vec<(String, Filed)> {
        let new: Vec<(String, Filed)> = self.order[self.drained..]
            .iter()
            .map(|(s, i)| (s.clone(), self.sessions[s].records[*i].clone()))
            .collect();
        self.drained = self.order.len();
        new
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::{make_act, AgentId, Performative};
    use serde_json::json;

    fn act(t: &str) -> CommunicationAct {
        make_act(Performative::Diffuse, AgentId::agent("com").unwrap(), alloc::vec![AgentId::agent("archive").unwrap()], t, json!({}), None)
            .unwrap()
    }

    #[test]
    fn drain_returns_each_record_once() {
        let mut a = Archive::default();
        a.file("s1", 1, act("chat.msg"));
        a.file("s2", 1, act("chat.msg"));
        assert_eq!(a.drain_new().len(), 2);
        a.file("s1", 2, act(CLOSE_EVENT));
        let d = a.drain_new();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].0, "s1");
        assert!(a.drain_new().is_empty());
        assert!(a.session("s1").unwrap().is_closed());
        assert!(!a.session("s2").unwrap().is_closed());
    }
}
