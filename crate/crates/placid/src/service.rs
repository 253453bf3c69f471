//! Live server: humans connect over TCP (one frame per line) or a websocket
//! (one frame per text message), authenticate as a deployed user and then
//! act as that user's agent.
//!
//! A single kernel task owns the kernel, the store and every user outbox.
//! Connection tasks only parse transport framing and forward lines; each
//! connection has its own unbounded writer queue, so a slow client never
//! holds up the kernel or any other client.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, Stream, StreamExt};
use placid_core::interaction::{make_act, AgentId, ConvId, Performative};
use placid_core::kernel::KernelConfig;
use placid_core::microtools::{Descriptor, Request};
use placid_core::{CommunicationAct, Kernel};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;
use tracing::{debug, info, warn};

use crate::persistence::{FsyncPolicy, Store, StoreError, DESCRIPTOR};
use crate::wire;

pub const LOGIN: &str = "auth.login";
pub const HELLO: &str = "auth.hello";
pub const AUTH_FAILED: &str = "auth.failed";
pub const REJECTED: &str = "sys.rejected";
pub const AUTH_CONV: &str = "auth";

/// Longest accepted frame in bytes.
pub const MAX_FRAME: usize = 1 << 20;

/// Bound on kernel ticks run back to back before yielding to the event loop.
const BURST: usize = 10_000;

#[derive(Clone, Debug)]
pub struct ServeConfig {
    /// Line-protocol TCP listener.
    pub listen: Option<SocketAddr>,
    /// HTTP listener carrying `/ws` and, optionally, static files.
    pub http: Option<SocketAddr>,
    pub static_dir: Option<PathBuf>,
    /// Wall-clock length of one idle tick.
    pub tick: Duration,
    pub log_dir: Option<PathBuf>,
    pub fsync: FsyncPolicy,
    pub seed: u64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            listen: None,
            http: None,
            static_dir: None,
            tick: Duration::from_millis(100),
            log_dir: None,
            fsync: FsyncPolicy::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("static directory {} does not exist", .0.display())]
    StaticDir(PathBuf),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Deploy(#[from] placid_core::microtools::DeployError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuthError {
    AuthFailed,
    AlreadyConnected,
}

impl AuthError {
    pub fn code(self) -> &'static str {
        match self {
            AuthError::AuthFailed => "AuthFailed",
            AuthError::AlreadyConnected => "AlreadyConnected",
        }
    }
}

/// Final state reported when the server stops.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Summary {
    pub tick: u64,
    pub trace_digest: String,
    pub journal_records: u64,
}

enum Command {
    Login {
        user: String,
        password: String,
        last_seq: u64,
        out: mpsc::UnboundedSender<String>,
        reply: oneshot::Sender<Result<(AgentId, u64), AuthError>>,
    },
    Frame {
        conn: u64,
        user: AgentId,
        line: Vec<u8>,
    },
    Detach {
        conn: u64,
        user: AgentId,
    },
}

struct Slot {
    password: String,
    /// Every frame sent to this user, seq = position + 1.
    outbox: Vec<String>,
    conn: Option<(u64, mpsc::UnboundedSender<String>)>,
}

struct Core {
    kernel: Kernel,
    store: Option<Store>,
    users: BTreeMap<AgentId, Slot>,
    next_conn: u64,
}

fn notice(to: &AgentId, perf: Performative, msg_type: &str, body: Value) -> String {
    let conv = (perf == Performative::Answer).then(|| ConvId::from(AUTH_CONV));
    let act = make_act(perf, AgentId::kernel(), vec![to.clone()], msg_type, body, conv).expect("valid notice");
    wire::encode_str(&act, None)
}

impl Core {
    fn login(
        &mut self,
        user: &str,
        password: &str,
        last_seq: u64,
        out: mpsc::UnboundedSender<String>,
    ) -> Result<(AgentId, u64), AuthError> {
        let id = AgentId::user(user).map_err(|_| AuthError::AuthFailed)?;
        let slot = self.users.get_mut(&id).ok_or(AuthError::AuthFailed)?;
        if slot.password != password {
            return Err(AuthError::AuthFailed);
        }
        if slot.conn.is_some() {
            return Err(AuthError::AlreadyConnected);
        }
        let conn = self.next_conn;
        self.next_conn += 1;
        let last = slot.outbox.len() as u64;
        let _ = out.send(notice(&id, Performative::Answer, HELLO, json!({"agent": id.to_string(), "last_seq": last})));
        for line in slot.outbox.iter().skip(last_seq.min(last) as usize) {
            let _ = out.send(line.clone());
        }
        slot.conn = Some((conn, out));
        info!(user = %id, conn, resume_from = last_seq, "attached");
        self.submit_from(&id, Request::Connect.to_act(&id).expect("valid act"));
        Ok((id, conn))
    }

    fn detach(&mut self, conn: u64, user: &AgentId) {
        let Some(slot) = self.users.get_mut(user) else { return };
        if slot.conn.as_ref().is_some_and(|(c, _)| *c == conn) {
            slot.conn = None;
            info!(user = %user, conn, "detached");
            self.submit_from(user, Request::Disconnect.to_act(user).expect("valid act"));
        }
    }

    fn reject(&self, user: &AgentId, body: Value) {
        if let Some((_, out)) = self.users.get(user).and_then(|s| s.conn.as_ref()) {
            let _ = out.send(notice(user, Performative::Diffuse, REJECTED, body));
        }
    }

    fn frame(&mut self, user: &AgentId, line: &[u8]) {
        match wire::decode_client(line, user) {
            Ok(act) => self.submit_from(user, act),
            Err(e) => {
                debug!(user = %user, error = %e, "malformed frame");
                self.reject(user, json!({"error": "MalformedFrame", "offset": e.offset, "reason": e.reason.to_string()}));
            }
        }
    }

    fn submit_from(&mut self, user: &AgentId, act: CommunicationAct) {
        match self.kernel.submit(act.clone()) {
            Ok(_) => {
                if let Some(store) = self.store.as_mut() {
                    if let Err(e) = store.journal(self.kernel.tick(), &act) {
                        warn!(error = %e, "journal write failed");
                    }
                }
            }
            Err(e) => self.reject(user, json!({"error": "Rejected", "reason": e.to_string()})),
        }
    }

    /// Ticks while work is due now, then flushes deliveries and the archive.
    fn pump(&mut self) {
        for _ in 0..BURST {
            if self.kernel.next_due() != Some(self.kernel.tick()) {
                break;
            }
            self.kernel.tick_once();
        }
        self.flush();
    }

    fn flush(&mut self) {
        for (user, act) in self.kernel.take_user_deliveries() {
            let Some(slot) = self.users.get_mut(&user) else { continue };
            let seq = slot.outbox.len() as u64 + 1;
            let line = wire::encode_str(&act, Some(seq));
            if let Some((_, out)) = &slot.conn {
                let _ = out.send(line.clone());
            }
            slot.outbox.push(line);
        }
        if let Some(store) = self.store.as_mut() {
            if let Err(e) = store.sync_archive(&mut self.kernel) {
                warn!(error = %e, "session log write failed");
            }
        }
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Login { user, password, last_seq, out, reply } => {
                let r = self.login(&user, &password, last_seq, out);
                if let Err(e) = r {
                    info!(user, error = e.code(), "login refused");
                }
                let _ = reply.send(r);
            }
            Command::Frame { conn, user, line } => {
                if self.users.get(&user).and_then(|s| s.conn.as_ref()).is_some_and(|(c, _)| *c == conn) {
                    self.frame(&user, &line);
                }
            }
            Command::Detach { conn, user } => self.detach(conn, &user),
        }
        self.pump();
    }
}

/// A started server.
pub struct Running {
    pub listen: Option<SocketAddr>,
    pub http: Option<SocketAddr>,
    shutdown: Option<oneshot::Sender<()>>,
    kernel: JoinHandle<Summary>,
    listeners: Vec<JoinHandle<()>>,
}

impl Running {
    /// Stops accepting, closes the store and reports the final state.
    pub async fn stop(mut self) -> Summary {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        for l in &self.listeners {
            l.abort();
        }
        self.kernel.await.expect("kernel task does not panic")
    }
}

/// Boots the kernel (resuming from `log_dir` when it holds a log) and binds
/// the configured listeners. Users start disconnected; logging in connects
/// them.
pub async fn start(descriptor: &Descriptor, config: ServeConfig) -> Result<Running, ServeError> {
    if let Some(dir) = &config.static_dir {
        if !dir.is_dir() {
            return Err(ServeError::StaticDir(dir.clone()));
        }
    }
    let mut descriptor = descriptor.clone();
    for u in &mut descriptor.users {
        u.connected = false;
    }
    let (kernel, store) = match &config.log_dir {
        Some(dir) if dir.join(DESCRIPTOR).exists() => {
            info!(dir = %dir.display(), "resuming from existing log");
            let (store, kernel) = Store::resume(dir, config.fsync, true)?;
            (kernel, Some(store))
        }
        Some(dir) => {
            let store = Store::create(dir, &descriptor, config.seed, config.fsync)?;
            let kernel = descriptor.boot_with(kcfg(&descriptor, config.seed))?;
            (kernel, Some(store))
        }
        None => (descriptor.boot_with(kcfg(&descriptor, config.seed))?, None),
    };
    let users = descriptor
        .users
        .iter()
        .map(|u| Ok((u.id()?, Slot { password: u.password.clone(), outbox: Vec::new(), conn: None })))
        .collect::<Result<_, placid_core::microtools::DeployError>>()?;
    let mut core = Core { kernel, store, users, next_conn: 1 };
    core.pump();

    let (cmd_tx, cmd_rx) = mpsc::channel::<Command>(1024);
    let mut listeners = Vec::new();
    let mut listen = None;
    if let Some(addr) = config.listen {
        let l = TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })?;
        listen = Some(l.local_addr().map_err(|source| ServeError::Bind { addr, source })?);
        info!(addr = %listen.unwrap(), "line protocol listening");
        listeners.push(tokio::spawn(accept_tcp(l, cmd_tx.clone())));
    }
    let mut http = None;
    if let Some(addr) = config.http {
        let l = TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })?;
        http = Some(l.local_addr().map_err(|source| ServeError::Bind { addr, source })?);
        info!(addr = %http.unwrap(), "http listening");
        let mut app = Router::new().route("/ws", get(ws_upgrade)).with_state(cmd_tx.clone());
        if let Some(dir) = &config.static_dir {
            app = app.fallback_service(ServeDir::new(dir));
        }
        listeners.push(tokio::spawn(async move {
            if let Err(e) = axum::serve(l, app).await {
                warn!(error = %e, "http server stopped");
            }
        }));
    }
    drop(cmd_tx);
    let (shutdown_tx, shutdown_rx) = oneshot::channel();
    let kernel = tokio::spawn(kernel_loop(core, cmd_rx, shutdown_rx, config.tick));
    Ok(Running { listen, http, shutdown: Some(shutdown_tx), kernel, listeners })
}

fn kcfg(d: &Descriptor, seed: u64) -> KernelConfig {
    KernelConfig { timeout: d.timeout, seed, tap_users: true }
}

async fn kernel_loop(
    mut core: Core,
    mut commands: mpsc::Receiver<Command>,
    mut shutdown: oneshot::Receiver<()>,
    tick: Duration,
) -> Summary {
    let mut clock = tokio::time::interval(tick);
    clock.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    clock.tick().await;
    loop {
        tokio::select! {
            biased;
            _ = &mut shutdown => break,
            cmd = commands.recv() => match cmd {
                Some(cmd) => core.handle(cmd),
                None => break,
            },
            _ = clock.tick() => {
                core.kernel.tick_once();
                core.pump();
            }
        }
    }
    core.flush();
    let journal_records = match core.store.as_mut() {
        Some(store) => {
            if let Err(e) = store.close(&mut core.kernel) {
                warn!(error = %e, "closing the store failed");
            }
            store.index().journal_records
        }
        None => 0,
    };
    info!(tick = core.kernel.tick(), "kernel stopped");
    Summary { tick: core.kernel.tick(), trace_digest: core.kernel.trace_digest(), journal_records }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LoginBody {
    password: String,
    #[serde(default)]
    last_seq: u64,
}

fn parse_login(line: &[u8]) -> Result<(String, LoginBody), String> {
    let frame = wire::decode(line).map_err(|e| e.to_string())?;
    let act = frame.act;
    if frame.seq.is_some() || act.performative() != Performative::Ask || act.msg_type().as_str() != LOGIN {
        return Err(format!("expected `ask {LOGIN}` before anything else"));
    }
    if !act.sender().is_user() || act.receivers() != [AgentId::kernel()] {
        return Err(format!("login must go from a user to {}", AgentId::kernel()));
    }
    let body: LoginBody = serde_json::from_value(act.body().clone()).map_err(|e| format!("login body: {e}"))?;
    Ok((act.sender().name().to_owned(), body))
}

/// Runs one client connection over any transport that yields frames and
/// accepts outgoing lines.
async fn converse<S>(mut incoming: S, out: mpsc::UnboundedSender<String>, commands: mpsc::Sender<Command>, peer: String)
where
    S: Stream<Item = Vec<u8>> + Unpin,
{
    let (user, conn) = loop {
        let Some(line) = incoming.next().await else { return };
        let (name, body) = match parse_login(&line) {
            Ok(l) => l,
            Err(reason) => {
                warn!(peer, reason, "frame before authentication");
                let to = AgentId::user("anonymous").expect("valid id");
                let _ = out.send(notice(&to, Performative::Diffuse, REJECTED, json!({"error": "NotAuthenticated", "reason": reason})));
                continue;
            }
        };
        let (reply_tx, reply_rx) = oneshot::channel();
        let login = Command::Login { user: name.clone(), password: body.password, last_seq: body.last_seq, out: out.clone(), reply: reply_tx };
        if commands.send(login).await.is_err() {
            return;
        }
        match reply_rx.await {
            Ok(Ok(attached)) => break attached,
            Ok(Err(e)) => {
                let to = AgentId::user(&name).unwrap_or_else(|_| AgentId::user("anonymous").expect("valid id"));
                let _ = out.send(notice(&to, Performative::Answer, AUTH_FAILED, json!({"error": e.code()})));
                return;
            }
            Err(_) => return,
        }
    };
    drop(out);
    while let Some(line) = incoming.next().await {
        if commands.send(Command::Frame { conn, user: user.clone(), line }).await.is_err() {
            return;
        }
    }
    let _ = commands.send(Command::Detach { conn, user }).await;
}

async fn accept_tcp(listener: TcpListener, commands: mpsc::Sender<Command>) {
    loop {
        match listener.accept().await {
            Ok((stream, peer)) => {
                debug!(%peer, "tcp connection");
                tokio::spawn(serve_tcp(stream, peer.to_string(), commands.clone()));
            }
            Err(e) => warn!(error = %e, "accept failed"),
        }
    }
}

/// Reads LF-terminated lines of at most [`MAX_FRAME`] bytes.
fn tcp_lines<R: tokio::io::AsyncRead + Unpin>(reader: R) -> impl Stream<Item = Vec<u8>> + Unpin {
    Box::pin(futures::stream::unfold(BufReader::new(reader), |mut r| async move {
        let mut line = Vec::new();
        let n = (&mut r).take(MAX_FRAME as u64 + 1).read_until(b'\n', &mut line).await.ok()?;
        if n == 0 || (line.len() > MAX_FRAME && line.last() != Some(&b'\n')) {
            return None;
        }
        Some((line, r))
    }))
}

async fn serve_tcp(stream: TcpStream, peer: String, commands: mpsc::Sender<Command>) {
    let (read, mut write) = stream.into_split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<String>();
    let writer = tokio::spawn(async move {
        while let Some(mut line) = out_rx.recv().await {
            line.push('\n');
            if write.write_all(line.as_bytes()).await.is_err() {
                break;
            }
        }
        let _ = write.shutdown().await;
    });
    converse(tcp_lines(read), out_tx, commands, peer).await;
    let _ = writer.await;
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(commands): State<mpsc::Sender<Command>>) -> axum::response::Response {
    ws.on_upgrade(move |socket| serve_ws(socket, commands))
}

async fn serve_ws(socket: WebSocket, commands: mpsc::Sender<Command>) {
    let (mut sink, stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<String>();
    let writer = tokio::spawn(async move {
        while let Some(line) = out_rx.recv().await {
            if sink.send(Message::Text(line.into())).await.is_err() {
                return;
            }
        }
        let _ = sink.send(Message::Close(None)).await;
    });
    let incoming = Box::pin(stream.filter_map(|m| async move {
        match m {
            Ok(Message::Text(t)) => Some(Some(t.as_bytes().to_vec())),
            Ok(Message::Binary(b)) => Some(Some(b.to_vec())),
            Ok(Message::Close(_)) | Err(_) => Some(None),
            Ok(_) => None,
        }
    }))
    .take_while(|m| futures::future::ready(m.is_some()))
    .map(|m| m.expect("filtered"));
    converse(Box::pin(incoming), out_tx, commands, "websocket".to_owned()).await;
    let _ = writer.await;
}
