//! Skills of the tool agents.
//!
//! Request handlers validate first and only then emit anything, so a
//! rejected request leaves no trace besides its `{"error": code}` answer.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::domain::*;
use super::request::{parse_participant, ArchiveQuery, CastBallot, Lookup, OpenPoll, OpenSession, PollRef, PostMessage, ScheduleEntry, SessionRef};
use super::*;
use crate::agent::{Effect, EventPattern, SkillCtx, SkillError, SkillSet};
use crate::interaction::{is_name, make_act, AgentId, MsgType, Performative};
use crate::organization::{Interaction, Role};
use crate::Tick;

enum Fail {
    Tool(ToolError),
    Skill(SkillError),
}

impl From<ToolError> for Fail {
    fn from(e: ToolError) -> Self {
        Fail::Tool(e)
    }
}

impl From<SkillError> for Fail {
    fn from(e: SkillError) -> Self {
        Fail::Skill(e)
    }
}

type Handler = fn(&mut SkillCtx<'_>) -> Result<Value, Fail>;

/// Runs `handler` and answers the triggering ask with its result.
fn answered(ctx: &mut SkillCtx<'_>, handler: Handler) -> Result<Value, SkillError> {
    let body = match handler(ctx) {
        Ok(v) => v,
        Err(Fail::Tool(e)) => e.body(),
        Err(Fail::Skill(e)) => return Err(e),
    };
    ctx.reply(body.clone())?;
    Ok(body)
}

fn args<T: DeserializeOwned>(ctx: &SkillCtx<'_>) -> Result<T, ToolError> {
    serde_json::from_value(ctx.trigger().body().clone()).map_err(|_| ToolError::BadRequest)
}

fn send(ctx: &mut SkillCtx<'_>, p: Performative, to: Vec<AgentId>, t: &str, body: Value) -> Result<(), SkillError> {
    let act = make_act(p, ctx.me().clone(), to, t, body, None).map_err(SkillError::new)?;
    ctx.send(act)
}

fn to_community(ctx: &mut SkillCtx<'_>, session: &str, t: &str, body: Value) -> Result<(), SkillError> {
    let pseudo = AgentId::community(session).map_err(SkillError::new)?;
    send(ctx, Performative::Diffuse, alloc::vec![pseudo], t, body)
}

fn locate(ctx: &SkillCtx<'_>, competence: &str) -> Result<AgentId, SkillError> {
    ctx.world()
        .resolve(competence)
        .into_iter()
        .next()
        .ok_or_else(|| SkillError(format!("NoProvider: {competence}")))
}

fn sender(ctx: &SkillCtx<'_>) -> AgentId {
    ctx.trigger().sender().clone()
}

fn is_supervisor(ctx: &SkillCtx<'_>, who: &AgentId) -> bool {
    ctx.world().has_role(who, &Role::Supervisor)
}

fn session_of(body: &Value) -> Option<&str> {
    body.get("session").and_then(Value::as_str)
}

/// Allowed community traffic: notices in the three tool namespaces.
pub fn session_interactions() -> BTreeSet<Interaction> {
    ["session", "chat", "vote"]
        .into_iter()
        .map(|ns| Interaction::new(Performative::Diffuse, EventPattern::Prefix(MsgType::new(ns).expect("valid"))))
        .collect()
}

// ---------------------------------------------------------------- papoticiel

const SESSIONS: &str = "sessions";

type Sessions = BTreeMap<String, Session>;

fn open_session(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: OpenSession = args(ctx)?;
    let opener = sender(ctx);
    let diary = ctx.world().resolve(COMPETENCE_DIARY);
    let authenticated = (opener.is_user() && ctx.world().is_registered(&opener)) || diary.contains(&opener);
    if !authenticated {
        return Err(ToolError::AuthFailed.into());
    }
    if !is_name(&a.session) {
        return Err(ToolError::BadSessionId.into());
    }
    let mut sessions: Sessions = ctx.load(SESSIONS)?;
    if sessions.contains_key(&a.session) || ctx.world().community(&a.session).is_some() {
        return Err(ToolError::SessionExists.into());
    }
    let mut participants = BTreeSet::new();
    for p in &a.participants {
        match parse_participant(p) {
            Some(id) if ctx.world().is_registered(&id) => participants.insert(id),
            _ => return Err(ToolError::UnknownParticipant.into()),
        };
    }
    if opener.is_user() {
        participants.insert(opener.clone());
    }
    if participants.is_empty() {
        return Err(ToolError::UnknownParticipant.into());
    }
    let tools = [locate(ctx, COMPETENCE_CHAT)?, locate(ctx, COMPETENCE_VOTE)?, locate(ctx, COMPETENCE_ARCHIVE)?];

    let me = ctx.me().clone();
    let mut members = participants.clone();
    members.insert(me.clone());
    members.extend(tools);
    ctx.effect(Effect::FormCommunity {
        id: a.session.clone(),
        members,
        mediator: me,
        interactions: session_interactions(),
    });
    let session = Session::new(&a.session, opener.clone(), &participants, ctx.now());
    to_community(ctx, &a.session, SESSION_OPENED, json!({
        "session": a.session,
        "opener": opener,
        "participants": participants,
    }))?;
    for p in &participants {
        send(ctx, Performative::Inform, alloc::vec![p.clone()], SESSION_INVITE, json!({
            "session": a.session,
            "opener": opener,
        }))?;
    }
    let reply = json!({ "session": a.session, "state": session.state, "roster": session.roster });
    sessions.insert(a.session, session);
    ctx.store(SESSIONS, &sessions)?;
    Ok(reply)
}

fn maybe_activate(ctx: &mut SkillCtx<'_>, s: &mut Session) -> Result<(), SkillError> {
    if s.state == SessionState::Opening && s.all_resolved() {
        s.advance(SessionState::Active);
        let roster = s.check_presences().expect("open session");
        to_community(ctx, &s.id.clone(), SESSION_ACTIVE, json!({
            "session": s.id,
            "opener": s.opener,
            "roster": roster,
        }))?;
    }
    Ok(())
}

fn resolve_invite(ctx: &mut SkillCtx<'_>, session: &str, who: &AgentId, present: bool) -> Result<(), SkillError> {
    let mut sessions: Sessions = ctx.load(SESSIONS)?;
    let Some(s) = sessions.get_mut(session) else {
        return Ok(());
    };
    if s.state == SessionState::Opening && s.resolve_invite(who, present) {
        let mut s = s.clone();
        maybe_activate(ctx, &mut s)?;
        sessions.insert(session.to_owned(), s);
        ctx.store(SESSIONS, &sessions)?;
    }
    Ok(())
}

fn pap_invite_reply(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    let body = ctx.trigger().body().clone();
    let who = sender(ctx);
    let present = body.get("present").and_then(Value::as_bool).unwrap_or(false);
    if let Some(session) = session_of(&body) {
        resolve_invite(ctx, session, &who, present)?;
    }
    Ok(Value::Null)
}

fn close_ack(ctx: &mut SkillCtx<'_>, session: &str, tool: &AgentId, last_seq: Option<u64>) -> Result<(), SkillError> {
    let mut sessions: Sessions = ctx.load(SESSIONS)?;
    let Some(s) = sessions.get_mut(session) else {
        return Ok(());
    };
    if s.state != SessionState::Closing || !s.awaiting_close.remove(tool) {
        return Ok(());
    }
    if let Some(n) = last_seq {
        s.head_seq = s.head_seq.max(n);
    }
    if s.awaiting_close.is_empty() {
        s.advance(SessionState::Closed);
        let (id, last, opener) = (s.id.clone(), s.head_seq, s.opener.clone());
        to_community(ctx, &id, CHAT_CLOSED, json!({ "session": id, "last_seq": last }))?;
        to_community(ctx, &id, SESSION_CLOSED, json!({ "session": id, "opener": opener, "last_seq": last }))?;
        ctx.effect(Effect::DissolveCommunity { id });
    }
    ctx.store(SESSIONS, &sessions)?;
    Ok(())
}

fn pap_closing_done(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    let body = ctx.trigger().body().clone();
    let tool = sender(ctx);
    if let Some(session) = session_of(&body) {
        close_ack(ctx, session, &tool, body.get("last_seq").and_then(Value::as_u64))?;
    }
    Ok(Value::Null)
}

fn pap_timeout(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    if *ctx.trigger().sender() != AgentId::kernel() {
        return Ok(Value::Null);
    }
    let notice = ctx.trigger().body().clone();
    let to = notice.get("to").and_then(|t| t.get(0)).and_then(Value::as_str).and_then(|s| s.parse::<AgentId>().ok());
    let session = notice.get("body").and_then(session_of);
    let (Some(to), Some(session)) = (to, session) else {
        return Ok(Value::Null);
    };
    match notice.get("type").and_then(Value::as_str) {
        Some(SESSION_INVITE) => resolve_invite(ctx, session, &to, false)?,
        Some(SESSION_CLOSING) => close_ack(ctx, session, &to, None)?,
        _ => {}
    }
    Ok(Value::Null)
}

fn pap_presence(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    let body = ctx.trigger().body().clone();
    let who = sender(ctx);
    let (Some(session), Some(present)) = (session_of(&body), body.get("present").and_then(Value::as_bool)) else {
        return Ok(Value::Null);
    };
    let mut sessions: Sessions = ctx.load(SESSIONS)?;
    let Some(s) = sessions.get_mut(session) else {
        return Ok(Value::Null);
    };
    let flag = if present { Presence::Present } else { Presence::Absent };
    let changed = match s.roster.get_mut(&who) {
        Some(p) if s.state == SessionState::Active && *p != flag => {
            *p = flag;
            true
        }
        _ => false,
    };
    if changed {
        let id = s.id.clone();
        ctx.store(SESSIONS, &sessions)?;
        to_community(ctx, &id, SESSION_PRESENCE, json!({ "session": id, "user": who, "present": present }))?;
    }
    Ok(Value::Null)
}

fn check_presences(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: SessionRef = args(ctx)?;
    let sessions: Sessions = ctx.load(SESSIONS)?;
    let s = sessions.get(&a.session).ok_or(ToolError::UnknownSession)?;
    let roster = s.check_presences()?;
    Ok(json!({ "session": s.id, "state": s.state, "roster": roster }))
}

fn close_session(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: SessionRef = args(ctx)?;
    let closer = sender(ctx);
    let mut sessions: Sessions = ctx.load(SESSIONS)?;
    let s = sessions.get_mut(&a.session).ok_or(ToolError::UnknownSession)?;
    if closer != s.opener && !is_supervisor(ctx, &closer) {
        return Err(ToolError::NotAuthorized.into());
    }
    match s.state {
        SessionState::Opening => return Err(ToolError::SessionNotActive.into()),
        SessionState::Closing | SessionState::Closed => {
            return Ok(json!({ "session": s.id, "state": s.state }));
        }
        SessionState::Active => {}
    }
    let tools = [locate(ctx, COMPETENCE_CHAT)?, locate(ctx, COMPETENCE_VOTE)?];
    s.advance(SessionState::Closing);
    s.awaiting_close = tools.iter().cloned().collect();
    let reply = json!({ "session": s.id, "state": s.state });
    ctx.store(SESSIONS, &sessions)?;
    for t in tools {
        send(ctx, Performative::Ask, alloc::vec![t], SESSION_CLOSING, json!({ "session": a.session }))?;
    }
    Ok(reply)
}

fn pap_open(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, open_session)
}

fn pap_check(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, check_presences)
}

fn pap_close(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, close_session)
}

// ----------------------------------------------------------- com and vote

const ROOMS: &str = "rooms";

/// A tool's view of one session, fed by the mediator's notices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Room {
    active: bool,
    roster: BTreeMap<AgentId, bool>,
    head_seq: u64,
    #[serde(default)]
    polls: BTreeMap<String, Poll>,
    #[serde(default)]
    polls_opened: u64,
}

impl Room {
    fn present(&self, who: &AgentId) -> bool {
        self.roster.get(who).copied().unwrap_or(false)
    }

    /// Present participants except `except`, then the archive.
    fn audience(&self, except: Option<&AgentId>, archive: AgentId) -> Vec<AgentId> {
        let mut v: Vec<AgentId> =
            self.roster.iter().filter(|(id, p)| **p && Some(*id) != except).map(|(id, _)| id.clone()).collect();
        v.push(archive);
        v
    }
}

type Rooms = BTreeMap<String, Room>;

/// Follows `session.active` and `session.presence` notices from a mediator.
fn track_session(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    let from = sender(ctx);
    if !ctx.world().has_role(&from, &Role::Mediator) {
        return Ok(Value::Null);
    }
    let body = ctx.trigger().body().clone();
    let Some(session) = session_of(&body) else {
        return Ok(Value::Null);
    };
    let mut rooms: Rooms = ctx.load(ROOMS)?;
    match ctx.trigger().msg_type().as_str() {
        SESSION_ACTIVE => {
            let roster: BTreeMap<AgentId, bool> =
                body.get("roster").cloned().map(serde_json::from_value).transpose().map_err(SkillError::new)?.unwrap_or_default();
            rooms.insert(session.to_owned(), Room { active: true, roster, ..Room::default() });
        }
        SESSION_PRESENCE => {
            let user = body.get("user").and_then(Value::as_str).and_then(|s| s.parse::<AgentId>().ok());
            let present = body.get("present").and_then(Value::as_bool);
            if let (Some(room), Some(user), Some(present)) = (rooms.get_mut(session), user, present) {
                if let Some(p) = room.roster.get_mut(&user) {
                    *p = present;
                }
            }
        }
        _ => return Ok(Value::Null),
    }
    ctx.store(ROOMS, &rooms)?;
    Ok(Value::Null)
}

fn post_message(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: PostMessage = args(ctx)?;
    let author = sender(ctx);
    let mut rooms: Rooms = ctx.load(ROOMS)?;
    let room = rooms.get_mut(&a.session).filter(|r| r.active).ok_or(ToolError::SessionNotActive)?;
    if !room.present(&author) {
        return Err(ToolError::NotPresent.into());
    }
    check_text(&a.text)?;
    let archive = locate(ctx, COMPETENCE_ARCHIVE)?;
    room.head_seq += 1;
    let msg = ChatMessage { session: a.session.clone(), seq: room.head_seq, author: author.clone(), text: a.text, tick: ctx.now() };
    let to = room.audience(Some(&author), archive);
    ctx.store(ROOMS, &rooms)?;
    let body = serde_json::to_value(&msg).map_err(SkillError::new)?;
    send(ctx, Performative::Diffuse, to, CHAT_MSG, body.clone())?;
    Ok(body)
}

fn com_closing(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: SessionRef = args(ctx)?;
    let mut rooms: Rooms = ctx.load(ROOMS)?;
    let last = match rooms.get_mut(&a.session) {
        Some(r) => {
            r.active = false;
            r.head_seq
        }
        None => 0,
    };
    ctx.store(ROOMS, &rooms)?;
    Ok(json!({ "session": a.session, "last_seq": last }))
}

fn com_post(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, post_message)
}

fn com_close(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, com_closing)
}

fn outcome_body(p: &Poll) -> Value {
    let o = p.outcome.as_ref().expect("closed poll has an outcome");
    json!({
        "session": p.session,
        "poll": p.id,
        "question": p.question,
        "options": p.options,
        "counts": o.counts,
        "winners": o.winners,
        "status": o.status,
        "ballots": p.ballots.len(),
    })
}

fn open_poll(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: OpenPoll = args(ctx)?;
    let opener = sender(ctx);
    let mut rooms: Rooms = ctx.load(ROOMS)?;
    let room = rooms.get_mut(&a.session).filter(|r| r.active).ok_or(ToolError::SessionNotActive)?;
    if !room.present(&opener) {
        return Err(ToolError::NotPresent.into());
    }
    let id = match a.poll {
        Some(id) if !is_name(&id) => return Err(ToolError::BadRequest.into()),
        Some(id) => id,
        None => format!("poll-{}", room.polls_opened + 1),
    };
    if room.polls.contains_key(&id) {
        return Err(ToolError::PollExists.into());
    }
    let poll = Poll::new(&id, &a.session, opener.clone(), &a.question, a.options)?;
    let archive = locate(ctx, COMPETENCE_ARCHIVE)?;
    let to = room.audience(None, archive);
    let body = json!({
        "session": a.session,
        "poll": id,
        "question": poll.question,
        "options": poll.options,
        "opener": opener,
    });
    room.polls_opened += 1;
    room.polls.insert(id, poll);
    ctx.store(ROOMS, &rooms)?;
    send(ctx, Performative::Diffuse, to, VOTE_OPENED, body.clone())?;
    Ok(body)
}

fn cast_ballot(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: CastBallot = args(ctx)?;
    let voter = sender(ctx);
    let mut rooms: Rooms = ctx.load(ROOMS)?;
    let room = rooms.get_mut(&a.session).ok_or(ToolError::SessionNotActive)?;
    let present = room.present(&voter);
    let poll = room.polls.get_mut(&a.poll).ok_or(ToolError::UnknownPoll)?;
    if poll.state == PollState::Closed {
        return Err(ToolError::PollClosed.into());
    }
    if !present {
        return Err(ToolError::NotPresent.into());
    }
    let option = usize::try_from(a.option).unwrap_or(usize::MAX);
    poll.cast(&voter, option)?;
    let archive = locate(ctx, COMPETENCE_ARCHIVE)?;
    let to = room.audience(None, archive);
    ctx.store(ROOMS, &rooms)?;
    let body = json!({ "session": a.session, "poll": a.poll, "voter": voter, "option": a.option });
    send(ctx, Performative::Diffuse, to, VOTE_CAST, body.clone())?;
    Ok(body)
}

fn close_poll(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: PollRef = args(ctx)?;
    let closer = sender(ctx);
    let supervisor = is_supervisor(ctx, &closer);
    let mut rooms: Rooms = ctx.load(ROOMS)?;
    let room = rooms.get_mut(&a.session).ok_or(ToolError::SessionNotActive)?;
    let poll = room.polls.get_mut(&a.poll).ok_or(ToolError::UnknownPoll)?;
    poll.close(&closer, supervisor)?;
    let body = outcome_body(poll);
    let archive = locate(ctx, COMPETENCE_ARCHIVE)?;
    let to = room.audience(None, archive);
    ctx.store(ROOMS, &rooms)?;
    send(ctx, Performative::Diffuse, to, VOTE_OUTCOME, body.clone())?;
    Ok(body)
}

fn vote_closing(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: SessionRef = args(ctx)?;
    let mut rooms: Rooms = ctx.load(ROOMS)?;
    let mut closed = Vec::new();
    if let Some(room) = rooms.get_mut(&a.session) {
        room.active = false;
        let archive = locate(ctx, COMPETENCE_ARCHIVE)?;
        let to = room.audience(None, archive);
        for poll in room.polls.values_mut().filter(|p| p.state == PollState::Open) {
            poll.force_close();
            closed.push((poll.id.clone(), outcome_body(poll)));
        }
        ctx.store(ROOMS, &rooms)?;
        for (_, body) in &closed {
            send(ctx, Performative::Diffuse, to.clone(), VOTE_OUTCOME, body.clone())?;
        }
    }
    let ids: Vec<String> = closed.into_iter().map(|(id, _)| id).collect();
    Ok(json!({ "session": a.session, "closed_polls": ids }))
}

fn vote_open(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, open_poll)
}

fn vote_ballot(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, cast_ballot)
}

fn vote_close(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, close_poll)
}

fn vote_session_closing(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, vote_closing)
}

// ------------------------------------------------------------ archive, db

/// Files every session-scoped act sent by a tool agent.
fn archive_file(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    let act = ctx.trigger().clone();
    if act.sender().is_user() {
        return Ok(Value::Null);
    }
    let Some(session) = session_of(act.body()).map(str::to_owned) else {
        return Ok(Value::Null);
    };
    ctx.effect(Effect::File { session: session.clone(), act });
    Ok(json!({ "filed": session }))
}

fn query(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: ArchiveQuery = args(ctx)?;
    let archive = ctx.world().archive(&a.session).ok_or(ToolError::UnknownSession)?;
    let messages = archive_query(archive, a.from.unwrap_or(1), a.to.unwrap_or(u64::MAX));
    Ok(json!({ "session": a.session, "closed": archive.is_closed(), "messages": messages }))
}

fn db_query(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, query)
}

// --------------------------------------------------------------- group

fn members(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: SessionRef = args(ctx)?;
    let c = ctx.world().community(&a.session).ok_or(ToolError::UnknownSession)?;
    Ok(json!({ "session": a.session, "members": c.members(), "mediator": c.mediator() }))
}

fn lookup(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: Lookup = args(ctx)?;
    let agents = ctx.world().resolve(&a.competence);
    Ok(json!({ "competence": a.competence, "agents": agents }))
}

fn group_members(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, members)
}

fn group_lookup(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, lookup)
}

// --------------------------------------------------------------- agenda

const ENTRIES: &str = "entries";
const TIMERS: &str = "timers";
const OPENED: &str = "opened";

fn schedule(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let a: ScheduleEntry = args(ctx)?;
    if !is_name(&a.id) {
        return Err(ToolError::BadSessionId.into());
    }
    let mut entries: BTreeMap<String, AgendaEntry> = ctx.load(ENTRIES)?;
    if entries.contains_key(&a.id) {
        return Err(ToolError::EntryExists.into());
    }
    let mut participants = BTreeSet::new();
    for p in &a.participants {
        match parse_participant(p) {
            Some(id) if ctx.world().is_registered(&id) => participants.insert(id),
            _ => return Err(ToolError::UnknownParticipant.into()),
        };
    }
    let entry = AgendaEntry::new(&a.id, &a.title, a.start_tick, participants, a.auto_start, ctx.now())?;
    if entry.auto_start {
        let mut timers: BTreeSet<Tick> = ctx.load(TIMERS)?;
        if timers.insert(entry.start_tick) {
            let me = ctx.me().clone();
            let timer = make_act(Performative::Diffuse, me.clone(), alloc::vec![me], AGENDA_DUE, json!({ "tick": entry.start_tick }), None)
                .map_err(SkillError::new)?;
            ctx.send_at(timer, Some(entry.start_tick))?;
            ctx.store(TIMERS, &timers)?;
        }
    }
    let body = serde_json::to_value(&entry).map_err(SkillError::new)?;
    entries.insert(a.id, entry);
    ctx.store(ENTRIES, &entries)?;
    Ok(body)
}

fn list(ctx: &mut SkillCtx<'_>) -> Result<Value, Fail> {
    let entries: BTreeMap<String, AgendaEntry> = ctx.load(ENTRIES)?;
    Ok(json!({ "entries": entries.values().collect::<Vec<_>>() }))
}

fn agenda_schedule(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, schedule)
}

fn agenda_list(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    answered(ctx, list)
}

/// Opens every auto-start entry that is due, in entry id order.
fn agenda_due(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    if ctx.trigger().sender() != ctx.me() {
        return Ok(Value::Null);
    }
    let now = ctx.now();
    let mut entries: BTreeMap<String, AgendaEntry> = ctx.load(ENTRIES)?;
    let mediator = locate(ctx, COMPETENCE_MEDIATION)?;
    let mut fired = Vec::new();
    for e in entries.values_mut().filter(|e| e.auto_start && !e.fired && e.start_tick <= now) {
        e.fired = true;
        fired.push((e.id.clone(), e.participants.iter().map(ToString::to_string).collect::<Vec<_>>()));
    }
    ctx.store(ENTRIES, &entries)?;
    for (id, participants) in &fired {
        send(ctx, Performative::Ask, alloc::vec![mediator.clone()], SESSION_OPEN, json!({
            "session": id,
            "participants": participants,
        }))?;
    }
    Ok(json!({ "opened": fired.len() }))
}

fn agenda_opened(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    let body = ctx.trigger().body().clone();
    let mut opened: BTreeMap<String, Value> = ctx.load(OPENED)?;
    let key = ctx.trigger().conv().map(|c| c.as_str().to_owned()).unwrap_or_default();
    opened.insert(key, body);
    ctx.store(OPENED, &opened)?;
    Ok(Value::Null)
}

// ----------------------------------------------------------------- users

/// Fact telling whether the human behind a user agent is connected.
pub const CONNECTED: &str = "connected";
const JOINED: &str = "sessions";
const EVENTS: &str = "events";

/// Memory key of a user's transcript for `session`.
pub fn transcript_key(session: &str) -> String {
    format!("transcript/{session}")
}

fn connected(ctx: &SkillCtx<'_>) -> bool {
    ctx.kb().fact(CONNECTED) == Some(&crate::agent::Scalar::Bool(true))
}

fn user_invite(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    let body = ctx.trigger().body().clone();
    let present = connected(ctx);
    if let Some(session) = session_of(&body) {
        let mut joined: BTreeSet<String> = ctx.load(JOINED)?;
        joined.insert(session.to_owned());
        ctx.store(JOINED, &joined)?;
        ctx.reply(json!({ "session": session, "present": present }))?;
    } else {
        ctx.reply(json!({ "present": present }))?;
    }
    Ok(json!(present))
}

fn push(ctx: &mut SkillCtx<'_>, key: String, v: Value) {
    match ctx.kb_mut().memory.entry(key).or_insert_with(|| Value::Array(Vec::new())) {
        Value::Array(a) => a.push(v),
        other => *other = Value::Array(alloc::vec![v]),
    }
}

/// Keeps the transcript and a log of every other notice received.
fn user_record(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    let act = ctx.trigger().clone();
    let t = act.msg_type().as_str();
    if t == SESSION_INVITE {
        return Ok(Value::Null);
    }
    let own_post = t == CHAT_POST && act.performative() == Performative::Answer && ToolError::of_body(act.body()).is_none();
    let chat = (t == CHAT_MSG && act.performative() == Performative::Diffuse) || own_post;
    match session_of(act.body()) {
        Some(session) if chat => {
            let key = transcript_key(session);
            push(ctx, key, act.body().clone());
        }
        _ => {
            if t == SESSION_CLOSED {
                if let Some(session) = session_of(act.body()) {
                    let mut joined: BTreeSet<String> = ctx.load(JOINED)?;
                    joined.remove(session);
                    ctx.store(JOINED, &joined)?;
                }
            }
            let entry = json!({ "perf": act.performative(), "type": t, "from": act.sender(), "body": act.body() });
            push(ctx, EVENTS.to_owned(), entry);
        }
    }
    Ok(Value::Null)
}

/// Tells the mediator about a (dis)connection for every joined session.
fn user_presence(ctx: &mut SkillCtx<'_>) -> Result<Value, SkillError> {
    if ctx.trigger().sender() != ctx.me() {
        return Ok(Value::Null);
    }
    let present = ctx.trigger().msg_type().as_str() == USER_CONNECTED;
    ctx.kb_mut().assert_fact(CONNECTED, present);
    let joined: BTreeSet<String> = ctx.load(JOINED)?;
    if joined.is_empty() {
        return Ok(json!(present));
    }
    let mediator = locate(ctx, COMPETENCE_MEDIATION)?;
    for session in joined {
        send(ctx, Performative::Diffuse, alloc::vec![mediator.clone()], SESSION_PRESENCE, json!({
            "session": session,
            "present": present,
        }))?;
    }
    Ok(json!(present))
}

/// Every skill referenced by the shipped rule sets.
pub fn skills() -> SkillSet {
    let mut s = SkillSet::new();
    s.register("pap_open", pap_open)
        .register("pap_invite_reply", pap_invite_reply)
        .register("pap_presence", pap_presence)
        .register("pap_check", pap_check)
        .register("pap_close", pap_close)
        .register("pap_closing_done", pap_closing_done)
        .register("pap_timeout", pap_timeout)
        .register("track_session", track_session)
        .register("com_post", com_post)
        .register("com_close", com_close)
        .register("vote_open", vote_open)
        .register("vote_ballot", vote_ballot)
        .register("vote_close", vote_close)
        .register("vote_session_closing", vote_session_closing)
        .register("archive_file", archive_file)
        .register("db_query", db_query)
        .register("group_members", group_members)
        .register("group_lookup", group_lookup)
        .register("agenda_schedule", agenda_schedule)
        .register("agenda_list", agenda_list)
        .register("agenda_due", agenda_due)
        .register("agenda_opened", agenda_opened)
        .register("user_invite", user_invite)
        .register("user_record", user_record)
        .register("user_presence", user_presence);
    s
}
