use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use placid::persistence::{self, FsyncPolicy, Store};
use placid::scenario::{self, Scenario};
use placid::service::{self, ServeConfig};
use placid::wire;
use placid_core::interaction::{make_act, AgentId, Performative};
use placid_core::microtools::{Descriptor, Request};
use serde_json::json;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};

const OK: u8 = 0;
const MISMATCH: u8 = 1;
const CONFIG: u8 = 2;
const RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "placid", version, about = "Rule-based agents running a meeting room: chat, agenda and votes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file against a fresh simulated kernel.
    Run(RunArgs),
    /// Boot a deployment and accept client connections.
    Serve(ServeArgs),
    /// Line-oriented terminal client.
    Client(ClientArgs),
    /// Rebuild a kernel from a log directory and check its digest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Write the trace as JSON lines to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Override the seed given in the scenario.
    #[arg(long)]
    seed: Option<u64>,
    /// Also record the run as a log directory.
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Print a JSON summary on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Address of the line-protocol listener.
    #[arg(long, env = "PLACID_LISTEN", default_value = "127.0.0.1:7878")]
    listen: SocketAddr,
    /// Deployment descriptor; the shipped tool set when omitted.
    #[arg(long)]
    descriptor: Option<PathBuf>,
    #[arg(long, env = "PLACID_LOG_DIR")]
    log_dir: Option<PathBuf>,
    /// Address of the HTTP listener serving `/ws`.
    #[arg(long)]
    http: Option<SocketAddr>,
    /// Files served over HTTP next to `/ws`.
    #[arg(long, requires = "http")]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    tick_ms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// never, every-record or on-close.
    #[arg(long, default_value = "every-record")]
    fsync: FsyncPolicy,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ClientArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    connect: String,
    #[arg(long)]
    user: String,
    #[arg(long, default_value = "")]
    password: String,
    /// Last frame seq already seen; the server resends everything after it.
    #[arg(long, default_value_t = 0)]
    last_seq: u64,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    log_dir: PathBuf,
    /// Trace digest the replay must reproduce.
    #[arg(long)]
    expect: Option<String>,
    #[arg(long)]
    json: bool,
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("placid: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if matches!(cli.command, Command::Serve(_) | Command::Client(_)) {
        tracing_subscriber::fmt()
            .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
            .with_writer(std::io::stderr)
            .init();
    }
    match cli.command {
        Command::Run(a) => run(a),
        Command::Replay(a) => replay(a),
        Command::Serve(a) => runtime().map_or_else(|e| e, |rt| rt.block_on(serve(a))),
        Command::Client(a) => runtime().map_or_else(|e| e, |rt| rt.block_on(client(a))),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, ExitCode> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| fail(RUNTIME, e))
}

fn run(a: RunArgs) -> ExitCode {
    let sc = match Scenario::load(&a.scenario) {
        Ok(s) => s,
        Err(e) => return fail(CONFIG, e),
    };
    let seed = a.seed.unwrap_or(sc.seed);
    let mut store = match &a.log_dir {
        Some(dir) => match Store::create(dir, &sc.descriptor, seed, FsyncPolicy::OnClose) {
            Ok(s) => Some(s),
            Err(e) => return fail(CONFIG, e),
        },
        None => None,
    };
    let kernel = match sc.run(seed, store.as_mut()) {
        Ok(k) => k,
        Err(e) => return fail(RUNTIME, e),
    };
    if let Some(path) = &a.trace {
        if let Err(e) = std::fs::write(path, scenario::trace_jsonl(&kernel)) {
            return fail(RUNTIME, format!("{}: {e}", path.display()));
        }
    }
    let digest = kernel.trace_digest();
    let matched = sc.expected_digest.as_ref().map(|d| *d == digest);
    if a.json {
        let summary = json!({
            "scenario": a.scenario.display().to_string(),
            "seed": seed,
            "steps": sc.steps.len(),
            "ticks": kernel.tick(),
            "trace_events": kernel.trace().len(),
            "trace_digest": digest,
            "state_digest": kernel.state_digest(),
            "expected_digest": sc.expected_digest,
            "matched": matched,
        });
        println!("{summary}");
    } else {
        println!("{digest}");
    }
    if matched == Some(false) {
        return fail(MISMATCH, format!("trace digest {digest} differs from expected {}", sc.expected_digest.unwrap()));
    }
    ExitCode::from(OK)
}

fn replay(a: ReplayArgs) -> ExitCode {
    let r = match persistence::replay(&a.log_dir) {
        Ok(r) => r,
        Err(e @ (persistence::StoreError::MissingDescriptor(_) | persistence::StoreError::Format { .. })) => {
            return fail(CONFIG, e)
        }
        Err(e) => return fail(RUNTIME, e),
    };
    let expected = a.expect.clone().or_else(|| r.recorded_digest.clone());
    let digest_ok = expected.as_ref().is_none_or(|d| *d == r.trace_digest);
    if a.json {
        let summary = json!({
            "log_dir": a.log_dir.display().to_string(),
            "records": r.records,
            "ticks": r.kernel.tick(),
            "trace_digest": r.trace_digest,
            "expected_digest": expected,
            "matched": digest_ok,
            "diverged_sessions": r.diverged_sessions,
        });
        println!("{summary}");
    } else {
        println!("{}", r.trace_digest);
    }
    if !digest_ok {
        return fail(MISMATCH, format!("replayed digest {} differs from {}", r.trace_digest, expected.unwrap()));
    }
    if !r.diverged_sessions.is_empty() {
        return fail(MISMATCH, format!("session logs diverge from the replay: {}", r.diverged_sessions.join(", ")));
    }
    ExitCode::from(OK)
}

async fn serve(a: ServeArgs) -> ExitCode {
    let descriptor = match &a.descriptor {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match Descriptor::parse(&text) {
                Ok(d) => d,
                Err(e) => return fail(CONFIG, format!("{}: {e}", path.display())),
            },
            Err(e) => return fail(CONFIG, format!("descriptor {}: {e}", path.display())),
        },
        None => Descriptor::papoticiel(),
    };
    let config = ServeConfig {
        listen: Some(a.listen),
        http: a.http,
        static_dir: a.static_dir,
        tick: Duration::from_millis(a.tick_ms.max(1)),
        log_dir: a.log_dir,
        fsync: a.fsync,
        seed: a.seed,
    };
    let running = match service::start(&descriptor, config).await {
        Ok(r) => r,
        Err(e @ (service::ServeError::Bind { .. } | service::ServeError::Store(_))) => return fail(RUNTIME, e),
        Err(e) => return fail(CONFIG, e),
    };
    if let Err(e) = tokio::signal::ctrl_c().await {
        eprintln!("placid: cannot wait for ctrl-c: {e}");
    }
    let summary = running.stop().await;
    if a.json {
        println!("{}", json!({"ticks": summary.tick, "trace_digest": summary.trace_digest, "journal_records": summary.journal_records}));
    } else {
        eprintln!("placid: stopped at tick {} with trace digest {}", summary.tick, summary.trace_digest);
    }
    ExitCode::from(OK)
}

/// Turns a typed line into a frame: either a raw frame or `op {json args}`.
fn client_line(user: &AgentId, line: &str) -> Result<Vec<u8>, String> {
    let line = line.trim();
    if line.starts_with('{') {
        return Ok(line.as_bytes().to_vec());
    }
    let (op, args) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let args = if args.trim().is_empty() { serde_json::Value::Null } else { serde_json::from_str(args).map_err(|e| e.to_string())? };
    let act = Request::parse(op, args).map_err(|e| e.to_string())?.to_act(user).map_err(|e| e.to_string())?;
    Ok(wire::encode(&act, None))
}

async fn client(a: ClientArgs) -> ExitCode {
    let user = match AgentId::user(&a.user) {
        Ok(u) => u,
        Err(e) => return fail(CONFIG, e),
    };
    let stream = match tokio::net::TcpStream::connect(&a.connect).await {
        Ok(s) => s,
        Err(e) => return fail(RUNTIME, format!("cannot connect to {}: {e}", a.connect)),
    };
    let (read, mut write) = stream.into_split();
    let login = make_act(
        Performative::Ask,
        user.clone(),
        vec![AgentId::kernel()],
        service::LOGIN,
        json!({"password": a.password, "last_seq": a.last_seq}),
        None,
    )
    .expect("valid login");
    if let Err(e) = write.write_all(&wire::encode(&login, None)).await {
        return fail(RUNTIME, e);
    }
    let mut server = BufReader::new(read).lines();
    let mut stdin = BufReader::new(tokio::io::stdin()).lines();
    let mut stdin_open = true;
    loop {
        tokio::select! {
            line = server.next_line() => match line {
                Ok(Some(l)) => {
                    println!("{l}");
                    if let Ok(f) = wire::decode(l.as_bytes()) {
                        if f.act.msg_type().as_str() == service::AUTH_FAILED {
                            return fail(RUNTIME, format!("login refused: {}", f.act.body()));
                        }
                    }
                }
                Ok(None) => return ExitCode::from(OK),
                Err(e) => return fail(RUNTIME, e),
            },
            line = stdin.next_line(), if stdin_open => match line {
                Ok(Some(l)) if l.trim().is_empty() => {}
                Ok(Some(l)) => match client_line(&user, &l) {
                    Ok(mut frame) => {
                        if frame.last() != Some(&b'\n') {
                            frame.push(b'\n');
                        }
                        if let Err(e) = write.write_all(&frame).await {
                            return fail(RUNTIME, e);
                        }
                    }
                    Err(e) => eprintln!("placid: {e}"),
                },
                Ok(None) | Err(_) => {
                    stdin_open = false;
                    let _ = write.shutdown().await;
                }
            },
        }
    }
}
