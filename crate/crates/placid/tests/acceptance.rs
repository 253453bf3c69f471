//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `harness = false`, so the lines reach the terminal even under
//! `cargo test`. Every run that produces a log directory is replayed by the
//! replay criterion at the end.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use placid::persistence::{replay, FsyncPolicy, Store, SETTLE_TICKS};
use placid::scenario::{trace_jsonl, Scenario};
use placid::wire::{self, Reason};
use placid_core::agent::{match_rules, Action, Comparator, Condition, EventPattern, Level, Rule, Scalar};
use placid_core::interaction::{make_act, AgentId, ConvId, Performative};
use placid_core::kernel::KernelConfig;
use placid_core::microtools::{domain::tally, Descriptor, Request};
use placid_core::{CommunicationAct, Kernel, TraceKind};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Logged {
    dir: PathBuf,
    digest: String,
}

struct Suite {
    root: tempfile::TempDir,
    dirs: usize,
    logs: Vec<Logged>,
    failed: usize,
}

impl Suite {
    fn log_dir(&mut self, prefix: &str) -> PathBuf {
        self.dirs += 1;
        self.root.path().join(format!("{prefix}-{:05}", self.dirs))
    }

    fn store(&mut self, prefix: &str, d: &Descriptor, seed: u64) -> Store {
        let dir = self.log_dir(prefix);
        Store::create(&dir, d, seed, FsyncPolicy::Never).expect("fresh log directory")
    }

    fn finish(&mut self, mut store: Store, kernel: &mut Kernel) {
        store.close(kernel).expect("store closes");
        self.logs.push(Logged { dir: store.dir().to_owned(), digest: kernel.trace_digest() });
    }

    fn check(&mut self, name: &str, f: impl FnOnce(&mut Suite) -> Outcome) {
        let start = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(|| f(self))).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = start.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("PASS  {name:<28} {detail} [{took:.2}s]"),
            Err(why) => {
                self.failed += 1;
                println!("FAIL  {name:<28} {why} [{took:.2}s]");
            }
        }
    }
}

fn main() -> ExitCode {
    let mut s = Suite { root: tempfile::tempdir().unwrap(), dirs: 0, logs: Vec::new(), failed: 0 };
    println!("acceptance criteria");
    s.check("begin-end golden trace", golden_trace);
    s.check("protocol totality", protocol_totality);
    s.check("transcript agreement", transcript_agreement);
    s.check("vote oracle", vote_oracle);
    s.check("replay determinism", replay_determinism);
    s.check("rule-engine equivalence", rule_equivalence);
    s.check("wire round-trip", wire_round_trip);
    if s.failed == 0 {
        println!("all 7 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{} of 7 criteria failed", s.failed);
        ExitCode::FAILURE
    }
}

fn user(n: &str) -> AgentId {
    AgentId::user(n).unwrap()
}

fn settle(k: &mut Kernel) -> Result<(), String> {
    ensure!(k.run(SETTLE_TICKS).quiescent, "kernel did not reach quiescence");
    Ok(())
}

// ---- begin-end golden trace ---------------------------------------------

fn golden_trace(s: &mut Suite) -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/begin-end.json");
    let sc = Scenario::load(&path).map_err(|e| e.to_string())?;
    let golden = sc.expected_digest.clone().ok_or("shipped scenario has no golden digest")?;
    let mut slowest = Duration::ZERO;
    let mut traces = BTreeSet::new();
    for _ in 0..3 {
        let mut store = s.store("golden", &sc.descriptor, sc.seed);
        let start = Instant::now();
        let mut k = sc.run(sc.seed, Some(&mut store)).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        ensure!(k.trace_digest() == golden, "digest {} differs from golden {golden}", k.trace_digest());
        traces.insert(trace_jsonl(&k));
        s.logs.push(Logged { dir: store.dir().to_owned(), digest: k.trace_digest() });
        drop(store);
        let _ = &mut k;
    }
    ensure!(traces.len() == 1, "trace bytes differ between runs");
    ensure!(slowest < Duration::from_secs(1), "slowest run took {slowest:?}");
    Ok(format!("3 runs, digest {}…, slowest {} ms (< 1000 ms)", &golden[..12], slowest.as_millis()))
}

// ---- protocol totality ---------------------------------------------------

fn protocol_descriptor() -> Descriptor {
    let d = json!({
        "timeout": 8,
        "users": [{"name": "u0", "supervisor": true}, {"name": "u1"}, {"name": "u2"}, {"name": "u3"}],
        "agents": [
            {"id": "agent:echo", "roles": ["specialist"], "rules": [
                {"id": "answer", "events": ["q.*", "r.*"], "actions": [{"reply": {"body": {"ok": true}}}]},
                {"id": "ack", "events": ["note.*"], "actions": [{"reply": {}}]}
            ]},
            {"id": "agent:relay", "roles": ["specialist"], "rules": [
                {"id": "relay", "events": ["q.*"], "actions": [
                    {"send": {"performative": "ask", "to": ["agent:echo"], "type": "r.inner"}},
                    {"reply": {}}
                ]},
                {"id": "deep", "events": ["note.*"], "actions": [
                    {"send": {"performative": "ask", "to": ["agent:sink"], "type": "q.deep"}},
                    {"reply": {}}
                ]}
            ]},
            {"id": "agent:sink", "roles": ["specialist"], "rules": []},
            {"id": "agent:flaky", "roles": ["specialist"], "rules": [
                {"id": "explode", "events": ["q.*", "note.*"], "actions": [{"invoke": {"skill": "no-such-skill"}}]}
            ]}
        ],
        "communities": [
            {"id": "crowd", "members": ["user:u0", "user:u1", "user:u2", "agent:echo"], "mediator": "agent:echo"}
        ]
    });
    serde_json::from_value(d).expect("protocol descriptor parses")
}

struct Opened {
    conv: ConvId,
    receiver: AgentId,
}

fn random_act(rng: &mut ChaCha8Rng, everyone: &[AgentId], users: &[AgentId], opened: &[Opened]) -> CommunicationAct {
    let sender = users.choose(rng).unwrap().clone();
    let roll = rng.random_range(0..100);
    if roll < 30 {
        let to = everyone.choose(rng).unwrap().clone();
        let t = *["q.a", "q.b", "x.y"].choose(rng).unwrap();
        make_act(Performative::Ask, sender, vec![to], t, json!({}), None).unwrap()
    } else if roll < 45 {
        let to = everyone.choose(rng).unwrap().clone();
        let t = *["note.a", "x.z"].choose(rng).unwrap();
        make_act(Performative::Inform, sender, vec![to], t, json!({}), None).unwrap()
    } else if roll < 60 {
        let to = if rng.random_bool(0.3) {
            vec![AgentId::community("crowd").unwrap()]
        } else {
            let n = rng.random_range(1..=everyone.len());
            everyone.choose_multiple(rng, n).cloned().collect()
        };
        let t = *["q.a", "note.b", "chat.msg"].choose(rng).unwrap();
        make_act(Performative::Diffuse, sender, to, t, json!({}), None).unwrap()
    } else {
        let perf = if rng.random_bool(0.5) { Performative::Answer } else { Performative::Confirm };
        let (conv, from) = match opened.choose(rng) {
            Some(o) if rng.random_bool(0.7) => {
                let from = if rng.random_bool(0.6) { o.receiver.clone() } else { users.choose(rng).unwrap().clone() };
                (o.conv.clone(), from)
            }
            _ => (ConvId(format!("c-9{:05}", rng.random_range(0..100_000))), sender.clone()),
        };
        let to = users.choose(rng).unwrap().clone();
        make_act(perf, from, vec![to], "x.reply", json!({}), Some(conv)).unwrap()
    }
}

fn protocol_totality(s: &mut Suite) -> Outcome {
    let d = protocol_descriptor();
    let users: Vec<AgentId> = d.users.iter().map(|u| u.id().unwrap()).collect();
    let mut everyone: Vec<AgentId> = d.agents.iter().map(|a| a.id.clone()).collect();
    everyone.extend(users.iter().cloned());
    let start = Instant::now();
    let (mut acts, mut convs, mut orphans, mut timeouts) = (0usize, 0usize, 0usize, 0usize);
    for seq in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seq);
        let mut store = s.store("protocol", &d, seq);
        let mut k = d.boot(seq).map_err(|e| e.to_string())?;
        let mut opened = Vec::new();
        let n = rng.random_range(5..=50);
        for _ in 0..n {
            let gap = rng.random_range(0..4);
            k.run_until(k.tick() + gap);
            store.sync_archive(&mut k).unwrap();
            let act = random_act(&mut rng, &everyone, &users, &opened);
            let before = k.world_digest();
            match k.submit(act.clone()) {
                Ok(r) => {
                    store.journal(k.tick(), &act).unwrap();
                    if let Some(c) = r.conv {
                        opened.push(Opened { conv: c, receiver: act.receivers()[0].clone() });
                    }
                    if let Some(why) = r.dropped {
                        orphans += 1;
                        ensure!(k.world_digest() == before, "sequence {seq}: dropped reply ({why}) changed the state");
                    }
                }
                Err(e) => ensure!(k.world_digest() == before, "sequence {seq}: rejected act ({e}) changed the state"),
            }
            acts += 1;
        }
        settle(&mut k)?;
        let count = |kind| k.trace().iter().filter(|e| e.kind == kind).count();
        let (o, c, t) = (count(TraceKind::ConvOpened), count(TraceKind::ConvClosed), count(TraceKind::ConvTimeout));
        ensure!(o == c + t, "sequence {seq}: {o} opened but {c} closed and {t} timed out");
        let mut ends: BTreeMap<&str, usize> = BTreeMap::new();
        for e in k.trace().iter().filter(|e| matches!(e.kind, TraceKind::ConvClosed | TraceKind::ConvTimeout)) {
            *ends.entry(e.subject.as_str()).or_default() += 1;
        }
        for e in k.trace().iter().filter(|e| e.kind == TraceKind::ConvOpened) {
            let ended = ends.get(e.subject.as_str()).copied().unwrap_or(0);
            ensure!(ended == 1, "sequence {seq}: {} ({}) ended {ended} times", e.subject, e.detail);
        }
        ensure!(k.open_conversations().is_empty() && k.settled_conversations().len() == o, "sequence {seq}: settled set disagrees with trace");
        convs += o;
        timeouts += t;
        s.finish(store, &mut k);
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(30), "took {took:?}");
    Ok(format!("1000 sequences, {acts} acts, {convs} conversations ({timeouts} timed out), {orphans} dropped replies left state untouched"))
}

// ---- transcript agreement ------------------------------------------------

fn tapped_kernel(d: &Descriptor, seed: u64) -> Kernel {
    d.boot_with(KernelConfig { timeout: d.timeout, seed, tap_users: true }).unwrap()
}

fn submit(k: &mut Kernel, store: &mut Store, actor: &AgentId, op: &str, args: Value) -> Result<(), String> {
    let act = Request::parse(op, args).map_err(|e| e.to_string())?.to_act(actor).map_err(|e| e.to_string())?;
    k.submit(act.clone()).map_err(|e| e.to_string())?;
    store.journal(k.tick(), &act).map_err(|e| e.to_string())
}

fn transcript_agreement(s: &mut Suite) -> Outcome {
    let names = ["u0", "u1", "u2", "u3", "u4"];
    let d = Descriptor::with_users(&names);
    let users: Vec<AgentId> = names.iter().map(|n| user(n)).collect();
    let start = Instant::now();
    let mut store = s.store("transcript", &d, 5);
    let mut k = tapped_kernel(&d, 5);
    submit(&mut k, &mut store, &users[0], "open_session", json!({"session": "room", "participants": &names[1..]}))?;
    settle(&mut k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut posted: Vec<(String, String)> = Vec::new();
    for i in 0..200 {
        k.run_until(k.tick() + rng.random_range(0..3));
        let author = users.choose(&mut rng).unwrap().clone();
        let text = format!("message {i} from {}", author.name());
        submit(&mut k, &mut store, &author, "post_message", json!({"session": "room", "text": text}))?;
        posted.push((author.to_string(), text));
    }
    settle(&mut k)?;
    let mut seen: BTreeMap<AgentId, Vec<(u64, String, String)>> = BTreeMap::new();
    for (to, act) in k.take_user_deliveries() {
        let b = act.body();
        let chat = match (act.performative(), act.msg_type().as_str()) {
            (Performative::Diffuse, "chat.msg") => true,
            (Performative::Answer, "chat.post") => b.get("error").is_none(),
            _ => false,
        };
        if chat {
            let entry = (b["seq"].as_u64().unwrap(), b["author"].as_str().unwrap().to_owned(), b["text"].as_str().unwrap().to_owned());
            seen.entry(to).or_default().push(entry);
        }
    }
    ensure!(seen.len() == 5, "only {} users saw chat traffic", seen.len());
    let reference = &seen[&users[0]];
    for (u, t) in &seen {
        ensure!(t == reference, "{u} saw a different transcript");
    }
    let seqs: Vec<u64> = reference.iter().map(|e| e.0).collect();
    ensure!(seqs == (1..=200).collect::<Vec<_>>(), "seq is not exactly 1..200");
    let mut got: Vec<(String, String)> = reference.iter().map(|e| (e.1.clone(), e.2.clone())).collect();
    let mut want = posted.clone();
    for a in &users {
        let by = |v: &Vec<(String, String)>| v.iter().filter(|p| p.0 == a.to_string()).cloned().collect::<Vec<_>>();
        ensure!(by(&got) == by(&posted), "{a}'s messages arrived out of their posting order");
    }
    got.sort();
    want.sort();
    ensure!(got == want, "delivered messages differ from the posted ones");
    let took = start.elapsed();
    submit(&mut k, &mut store, &users[0], "close_session", json!({"session": "room"}))?;
    settle(&mut k)?;
    s.finish(store, &mut k);
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!("5 users, 200 posts, identical transcripts, seq 1..200 gap-free in {} ms (< 10 s)", took.as_millis()))
}

// ---- vote oracle -----------------------------------------------------------

fn argmax(options: &[String], counts: &[u64]) -> Vec<String> {
    let top = counts.iter().copied().fold(0, u64::max);
    let mut w = Vec::new();
    for (i, c) in counts.iter().enumerate() {
        if *c == top {
            w.push(options[i].clone());
        }
    }
    w
}

fn vote_oracle(s: &mut Suite) -> Outcome {
    let (mut ballots_total, mut late, mut dupes, mut ties) = (0, 0, 0, 0);
    for run in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + run);
        let n_users = rng.random_range(2..=6);
        let names: Vec<String> = (0..n_users).map(|i| format!("v{i}")).collect();
        let d = Descriptor::with_users(&names);
        let users: Vec<AgentId> = names.iter().map(|n| user(n)).collect();
        let options: Vec<String> = (0..rng.random_range(2..=5)).map(|i| format!("opt{i}")).collect();
        let mut store = s.store("vote", &d, run);
        let mut k = tapped_kernel(&d, run);
        let others: Vec<&String> = names[1..].iter().collect();
        submit(&mut k, &mut store, &users[0], "open_session", json!({"session": "s", "participants": others}))?;
        settle(&mut k)?;
        submit(&mut k, &mut store, &users[0], "open_poll", json!({"session": "s", "question": "q", "options": options}))?;
        settle(&mut k)?;

        let n_ballots = rng.random_range(1..=30);
        let close_at = rng.random_range(0..=n_ballots);
        let mut voted: BTreeMap<AgentId, usize> = BTreeMap::new();
        let mut accepted = Vec::new();
        let mut closed = false;
        for i in 0..=n_ballots {
            k.run_until(k.tick() + rng.random_range(0..3));
            if i == close_at {
                submit(&mut k, &mut store, &users[0], "close_poll", json!({"session": "s", "poll": "poll-1"}))?;
                closed = true;
            }
            if i == n_ballots {
                break;
            }
            let voter = users.choose(&mut rng).unwrap().clone();
            let option = rng.random_range(0..=options.len());
            submit(&mut k, &mut store, &voter, "cast_ballot", json!({"session": "s", "poll": "poll-1", "option": option}))?;
            ballots_total += 1;
            if closed {
                late += 1;
            } else if voted.contains_key(&voter) {
                dupes += 1;
            } else if option < options.len() {
                voted.insert(voter, option);
                accepted.push(option);
            }
        }
        settle(&mut k)?;

        let mut expected = vec![0u64; options.len()];
        for o in voted.values() {
            expected[*o] += 1;
        }
        let records = k.archive().session("s").ok_or("nothing archived")?.records();
        let mut first: BTreeMap<String, u64> = BTreeMap::new();
        for r in records.iter().filter(|r| r.act.msg_type().as_str() == "vote.cast") {
            let voter = r.act.body()["voter"].as_str().unwrap().to_owned();
            first.entry(voter).or_insert(r.act.body()["option"].as_u64().unwrap());
        }
        let recount: Vec<u64> = (0..options.len() as u64).map(|o| first.values().filter(|v| **v == o).count() as u64).collect();
        let outcomes: Vec<&Value> =
            records.iter().filter(|r| r.act.msg_type().as_str() == "vote.outcome").map(|r| r.act.body()).collect();
        ensure!(outcomes.len() == 1, "run {run}: {} outcomes archived", outcomes.len());
        let counts: Vec<u64> = serde_json::from_value(outcomes[0]["counts"].clone()).unwrap();
        let winners: Vec<String> = serde_json::from_value(outcomes[0]["winners"].clone()).unwrap();
        ensure!(counts == recount, "run {run}: outcome {counts:?} but archive recount {recount:?}");
        ensure!(counts == expected, "run {run}: outcome {counts:?} but ballot oracle {expected:?}");
        ensure!(winners == argmax(&options, &expected), "run {run}: winners {winners:?}");
        ensure!(outcomes[0]["ballots"] == voted.len(), "run {run}: ballot count");
        if winners.len() > 1 {
            ties += 1;
        }
        for times in 2..=4 {
            let replicated: Vec<usize> = accepted.iter().flat_map(|o| std::iter::repeat_n(*o, times)).collect();
            ensure!(tally(&options, replicated).winners == winners, "run {run}: winners change under {times}x replication");
        }
        submit(&mut k, &mut store, &users[0], "close_session", json!({"session": "s"}))?;
        settle(&mut k)?;
        s.finish(store, &mut k);
    }
    Ok(format!("500 polls, {ballots_total} ballots ({dupes} repeat voters, {late} late), {ties} ties; all outcomes match both recounts and survive replication"))
}

// ---- replay determinism --------------------------------------------------

fn replay_determinism(s: &mut Suite) -> Outcome {
    ensure!(!s.logs.is_empty(), "no logs were produced");
    for l in &s.logs {
        let r = replay(&l.dir).map_err(|e| format!("{}: {e}", l.dir.display()))?;
        ensure!(r.trace_digest == l.digest, "{}: replayed {} vs original {}", l.dir.display(), r.trace_digest, l.digest);
        ensure!(r.consistent(), "{}: session logs diverge: {:?}", l.dir.display(), r.diverged_sessions);
    }
    Ok(format!("{} of {} logs replay to their original digest (100%)", s.logs.len(), s.logs.len()))
}

// ---- rule-engine equivalence ---------------------------------------------

#[derive(Clone, Debug)]
enum Lit {
    B(bool),
    I(i64),
    S(&'static str),
}

struct Draft {
    events: Vec<String>,
    conds: Vec<(String, &'static str, Option<Lit>)>,
    priority: i64,
    reflex: bool,
}

fn rand_type(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=3);
    (0..n).map(|_| *["a", "b", "c"].choose(rng).unwrap()).collect::<Vec<_>>().join(".")
}

fn rand_lit(rng: &mut ChaCha8Rng) -> Lit {
    match rng.random_range(0..3) {
        0 => Lit::B(rng.random_bool(0.5)),
        1 => Lit::I(rng.random_range(-3..=3)),
        _ => Lit::S(*["x", "y"].choose(rng).unwrap()),
    }
}

fn scalar(l: &Lit) -> Scalar {
    match l {
        Lit::B(b) => Scalar::Bool(*b),
        Lit::I(i) => Scalar::Int(*i),
        Lit::S(s) => Scalar::Str((*s).to_owned()),
    }
}

fn naive_matches(specs: &[Draft], facts: &[(String, Lit)], t: &str) -> Vec<usize> {
    let fact = |k: &str| facts.iter().rev().find(|(fk, _)| fk == k).map(|(_, v)| v);
    let cond_ok = |(key, op, lit): &(String, &str, Option<Lit>)| {
        let Some(f) = fact(key) else { return false };
        let Some(l) = lit else { return true };
        let ord = match (f, l) {
            (Lit::B(a), Lit::B(b)) => Some(a.cmp(b)),
            (Lit::I(a), Lit::I(b)) => Some(a.cmp(b)),
            (Lit::S(a), Lit::S(b)) => Some(a.cmp(b)),
            _ => None,
        };
        match *op {
            "==" => ord == Some(std::cmp::Ordering::Equal),
            "!=" => ord != Some(std::cmp::Ordering::Equal),
            "<" => ord == Some(std::cmp::Ordering::Less),
            ">" => ord == Some(std::cmp::Ordering::Greater),
            "<=" => matches!(ord, Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)),
            ">=" => matches!(ord, Some(std::cmp::Ordering::Greater | std::cmp::Ordering::Equal)),
            _ => unreachable!(),
        }
    };
    let event_ok = |p: &String| match p.strip_suffix(".*") {
        Some(prefix) => t.split('.').count() > prefix.split('.').count() && t.starts_with(&format!("{prefix}.")),
        None => p == t,
    };
    // all rules, grouped from the highest priority down, reflex first
    let mut out = Vec::new();
    for prio in (-2..=2).rev() {
        for reflex in [true, false] {
            for (i, s) in specs.iter().enumerate() {
                if s.priority == prio && s.reflex == reflex && s.events.iter().any(event_ok) && (s.reflex || s.conds.iter().all(cond_ok)) {
                    out.push(i);
                }
            }
        }
    }
    out
}

fn rule_equivalence(_: &mut Suite) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut fired = 0;
    for case in 0..1000 {
        let specs: Vec<Draft> = (0..rng.random_range(0..=10))
            .map(|_| {
                let reflex = rng.random_bool(0.3);
                let events = (0..rng.random_range(1..=3))
                    .map(|_| {
                        let t = rand_type(&mut rng);
                        if rng.random_bool(0.4) { format!("{t}.*") } else { t }
                    })
                    .collect();
                let conds = if reflex {
                    vec![]
                } else {
                    (0..rng.random_range(0..=3))
                        .map(|_| {
                            let key = format!("k{}", rng.random_range(0..4));
                            let op = *["exists", "==", "!=", "<", "<=", ">", ">="].choose(&mut rng).unwrap();
                            let lit = (op != "exists").then(|| rand_lit(&mut rng));
                            (key, op, lit)
                        })
                        .collect()
                };
                Draft { events, conds, priority: rng.random_range(-2..=2), reflex }
            })
            .collect();
        let facts: Vec<(String, Lit)> =
            (0..rng.random_range(0..=4)).map(|_| (format!("k{}", rng.random_range(0..4)), rand_lit(&mut rng))).collect();
        let t = rand_type(&mut rng);
        let rules: Vec<Rule> = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let op = |o: &str| match o {
                    "==" => Comparator::Eq,
                    "!=" => Comparator::Ne,
                    "<" => Comparator::Lt,
                    "<=" => Comparator::Le,
                    ">" => Comparator::Gt,
                    ">=" => Comparator::Ge,
                    _ => Comparator::Exists,
                };
                let conditions = s.conds.iter().map(|(k, o, l)| Condition { key: k.clone(), op: op(o), value: l.as_ref().map(scalar) }).collect();
                Rule::new(
                    &format!("r{i}"),
                    s.events.iter().map(|e| e.parse::<EventPattern>().unwrap()).collect(),
                    conditions,
                    vec![Action::RetractFact { key: "tmp".into() }],
                    s.priority,
                    if s.reflex { Level::Reflex } else { Level::RuleBased },
                )
                .unwrap()
            })
            .collect();
        let fact_map: BTreeMap<String, Scalar> = facts.iter().map(|(k, v)| (k.clone(), scalar(v))).collect();
        let act = make_act(Performative::Diffuse, user("x"), vec![user("y")], &t, json!({}), None).unwrap();
        let got: Vec<String> = match_rules(&rules, &fact_map, &act).iter().map(|r| r.id().to_owned()).collect();
        let want: Vec<String> = naive_matches(&specs, &facts, &t).iter().map(|i| format!("r{i}")).collect();
        ensure!(got == want, "case {case}: engine {got:?}, oracle {want:?} for {t}");
        fired += got.len();
    }
    Ok(format!("1000 (rule set, act) pairs agree in content and order, {fired} firings"))
}

// ---- wire round-trip -----------------------------------------------------

fn wire_round_trip(_: &mut Suite) -> Outcome {
    let config = Config { cases: 10_000, failure_persistence: None, ..Config::default() };
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]);
    let mut runner = TestRunner::new_with_rng(config, rng);
    runner
        .run(&common::frame(), |(act, seq)| {
            let line = wire::encode(&act, seq);
            let f = wire::decode(&line).map_err(|e| proptest::test_runner::TestCaseError::fail(e.to_string()))?;
            proptest::prop_assert_eq!(&f.act, &act);
            proptest::prop_assert_eq!(f.seq, seq);
            proptest::prop_assert_eq!(wire::encode(&f.act, f.seq), line);
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    // performative x receivers {0,1,2} x conv {absent,present}
    let table: [(&str, [Option<Reason>; 6]); 5] = [
        ("inform", [Some(Reason::Receivers), Some(Reason::Receivers), None, None, Some(Reason::Receivers), Some(Reason::Receivers)]),
        ("diffuse", [Some(Reason::Receivers), Some(Reason::Receivers), None, Some(Reason::Conv), None, Some(Reason::Conv)]),
        ("ask", [Some(Reason::Receivers), Some(Reason::Receivers), None, None, Some(Reason::Receivers), Some(Reason::Receivers)]),
        ("answer", [Some(Reason::Receivers), Some(Reason::Receivers), Some(Reason::Conv), None, Some(Reason::Receivers), Some(Reason::Receivers)]),
        ("confirm", [Some(Reason::Receivers), Some(Reason::Receivers), Some(Reason::Conv), None, Some(Reason::Receivers), Some(Reason::Receivers)]),
    ];
    let mut cases = 0;
    for (perf, row) in table {
        for (i, want) in row.into_iter().enumerate() {
            let (n, conv) = (i / 2, i % 2 == 1);
            let to: Vec<&str> = ["user:a", "agent:b"][..n].to_vec();
            let mut frame = json!({"v": 1, "perf": perf, "from": "user:s", "to": to, "type": "x.y", "body": {}});
            if conv {
                frame["conv"] = json!("c-000001");
            }
            let got = wire::decode(serde_json::to_string(&frame).unwrap().as_bytes()).err().map(|e| e.reason);
            ensure!(got == want, "{perf} with {n} receivers, conv {conv}: got {got:?}, want {want:?}");
            cases += 1;
        }
    }
    Ok(format!("10000 generated frames round-trip byte-identically; {cases}/30 validation cases classified correctly"))
}
