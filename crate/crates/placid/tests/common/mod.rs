//! Generators shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use placid_core::interaction::{make_act, AgentId, ConvId, Performative};
use placid_core::CommunicationAct;
use proptest::prelude::*;
use serde_json::{Map, Number, Value};

pub fn name() -> impl Strategy<Value = String> {
    "[a-z0-9_-]{1,10}"
}

pub fn agent_id() -> impl Strategy<Value = AgentId> {
    prop_oneof![
        name().prop_map(|n| AgentId::user(&n).unwrap()),
        name().prop_map(|n| AgentId::agent(&n).unwrap()),
        "[a-z0-9]{1,6}".prop_map(|n| AgentId::community(&n).unwrap()),
    ]
}

pub fn msg_type() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z0-9_-]{1,6}", 1..=4).prop_map(|s| s.join("."))
}

fn number() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i64>().prop_map(|i| Value::Number(i.into())),
        any::<u64>().prop_map(|u| Value::Number(u.into())),
        any::<f64>().prop_filter_map("finite", |f| Number::from_f64(f).map(Value::Number)),
    ]
}

pub fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        number(),
        any::<String>().prop_map(Value::String),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map(any::<String>(), inner, 0..4).prop_map(|m| Value::Object(m.into_iter().collect::<Map<_, _>>())),
        ]
    })
}

pub fn performative() -> impl Strategy<Value = Performative> {
    prop_oneof![
        Just(Performative::Inform),
        Just(Performative::Diffuse),
        Just(Performative::Ask),
        Just(Performative::Answer),
        Just(Performative::Confirm),
    ]
}

/// Any valid act together with an optional frame seq.
pub fn frame() -> impl Strategy<Value = (CommunicationAct, Option<u64>)> {
    (
        performative(),
        agent_id(),
        prop::collection::btree_set(agent_id(), 1..5),
        msg_type(),
        json_value(),
        prop::option::of(any::<String>()),
        prop::option::of(any::<u64>()),
    )
        .prop_map(|(p, from, to, t, body, conv, seq)| {
            let mut to: Vec<AgentId> = to.into_iter().collect();
            let conv = match p {
                Performative::Diffuse => None,
                Performative::Answer | Performative::Confirm => Some(conv.unwrap_or_else(|| "c-000001".into())),
                _ => conv,
            };
            if p != Performative::Diffuse {
                to.truncate(1);
            }
            (make_act(p, from, to, &t, body, conv.map(ConvId)).expect("generated acts are valid"), seq)
        })
}
