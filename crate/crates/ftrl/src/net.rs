//! TCP transport for federation: a server with one acceptor and one
//! aggregation timer, and a client link that opens a connection per sync.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use ftrl_core::ddpg::ModelBundle;
use ftrl_core::federation::{
    AgentId, FederationLink, FederationServer, FederationSnapshot, RoundRecord,
};
use ftrl_core::wire::{
    bundle_from_payload, decode_envelope, decode_header, encode_envelope, payload_from_bundle,
    MessageKind, ModelEnvelope, HEADER_LEN,
};

use crate::error::{Error, Result};

/// Environment variable that overrides the configured server address.
pub const SERVER_ADDR_ENV: &str = "FTRL_SERVER_ADDR";
/// Largest payload accepted from the network.
pub const MAX_PAYLOAD: u64 = 64 << 20;
const IO_TIMEOUT: Duration = Duration::from_secs(10);
const POLL: Duration = Duration::from_millis(10);

/// The configured address unless the environment overrides it.
pub fn resolve_address(configured: &str) -> String {
    std::env::var(SERVER_ADDR_ENV)
        .ok()
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| configured.to_string())
}

/// Writes one frame.
pub fn write_frame(stream: &mut impl Write, env: &ModelEnvelope) -> std::io::Result<()> {
    stream.write_all(&encode_envelope(env))?;
    stream.flush()
}

/// Reads one frame. `Ok(None)` on a clean end of stream before any byte.
pub fn read_frame(stream: &mut impl Read) -> Result<Option<ModelEnvelope>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match stream.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Net("connection closed inside a frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Net(format!("read: {e}"))),
        }
    }
    let h = decode_header(&header)?;
    if h.payload_len > MAX_PAYLOAD {
        return Err(Error::Net(format!(
            "payload of {} bytes exceeds the {MAX_PAYLOAD} byte limit",
            h.payload_len
        )));
    }
    let mut frame = header.to_vec();
    frame.resize(HEADER_LEN + h.payload_len as usize, 0);
    stream
        .read_exact(&mut frame[HEADER_LEN..])
        .map_err(|e| Error::Net(format!("read payload: {e}")))?;
    Ok(Some(decode_envelope(&frame)?))
}

fn lock(state: &Mutex<FederationServer>) -> MutexGuard<'_, FederationServer> {
    // A panicking handler cannot leave a half-written snapshot behind:
    // snapshots are replaced whole.
    state.lock().unwrap_or_else(|e| e.into_inner())
}

/// A running federation server.
pub struct ServerHandle {
    addr: SocketAddr,
    state: Arc<Mutex<FederationServer>>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    /// Binds `bind` and aggregates every `federation_cycle` of wall time.
    pub fn start(bind: &str, federation_cycle: Duration) -> Result<Self> {
        let listener =
            TcpListener::bind(bind).map_err(|e| Error::Net(format!("bind {bind}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::Net(e.to_string()))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::Net(e.to_string()))?;
        let state = Arc::new(Mutex::new(FederationServer::new()));
        let stop = Arc::new(AtomicBool::new(false));

        let acceptor = {
            let (state, stop) = (state.clone(), stop.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let state = state.clone();
                            std::thread::spawn(move || serve_connection(stream, &state));
                        }
                        Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(POLL),
                        Err(e) => eprintln!("federation server: accept failed: {e}"),
                    }
                }
            })
        };

        let timer = {
            let (state, stop) = (state.clone(), stop.clone());
            std::thread::spawn(move || {
                let start = Instant::now();
                let mut next = federation_cycle;
                while !stop.load(Ordering::Relaxed) {
                    let elapsed = start.elapsed();
                    if elapsed >= next {
                        if let Err(e) = lock(&state).federate(elapsed.as_secs_f64()) {
                            eprintln!("federation server: aggregation failed: {e}");
                        }
                        next += federation_cycle;
                    }
                    std::thread::sleep(POLL);
                }
            })
        };

        Ok(Self {
            addr,
            state,
            stop,
            threads: vec![acceptor, timer],
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn round(&self) -> u32 {
        lock(&self.state).round()
    }

    /// Stops accepting and aggregating; returns the round history.
    pub fn shutdown(mut self) -> Vec<RoundRecord> {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        let history = lock(&self.state).history().to_vec();
        history
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
    }
}

fn serve_connection(mut stream: TcpStream, state: &Mutex<FederationServer>) {
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
    let _ = stream.set_write_timeout(Some(IO_TIMEOUT));
    loop {
        let request = match read_frame(&mut stream) {
            Ok(Some(r)) => r,
            Ok(None) => return,
            Err(e) => {
                eprintln!("federation server: dropping connection: {e}");
                return;
            }
        };
        let reply = handle(request, state);
        if write_frame(&mut stream, &reply).is_err() {
            return;
        }
    }
}

fn handle(request: ModelEnvelope, state: &Mutex<FederationServer>) -> ModelEnvelope {
    let agent = request.agent_id;
    let reject = |round| ModelEnvelope::new(MessageKind::Error, agent, round, vec![]);
    match request.kind {
        MessageKind::PushModel => {
            let pushed = bundle_from_payload(request.payload).and_then(|b| {
                let mut server = lock(state);
                server.push(agent, b)?;
                Ok(server.round())
            });
            match pushed {
                Ok(round) => ModelEnvelope::new(MessageKind::Ack, agent, round, vec![]),
                Err(e) => {
                    eprintln!("federation server: rejected push from agent {agent}: {e}");
                    reject(0)
                }
            }
        }
        MessageKind::PullRequest => {
            let snapshot = lock(state).latest();
            match snapshot {
                Some(s) => ModelEnvelope::new(
                    MessageKind::Snapshot,
                    agent,
                    s.round,
                    payload_from_bundle(&s.networks),
                ),
                None => ModelEnvelope::new(MessageKind::Snapshot, agent, 0, vec![]),
            }
        }
        _ => reject(0),
    }
}

/// Client side: each exchange connects, pushes, pulls and disconnects.
/// Connection failures surface as [`ftrl_core::Error::LinkUnavailable`] so
/// the agent keeps training locally.
#[derive(Clone, Debug)]
pub struct TcpLink {
    addr: String,
    timeout: Duration,
}

impl TcpLink {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            timeout: IO_TIMEOUT,
        }
    }

    fn connect(&self) -> std::io::Result<TcpStream> {
        let mut last = None;
        for a in self.addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&a, self.timeout) {
                Ok(s) => return Ok(s),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| {
            std::io::Error::new(ErrorKind::NotFound, "address resolved to nothing")
        }))
    }

    fn round_trip(
        &self,
        stream: &mut TcpStream,
        request: &ModelEnvelope,
    ) -> ftrl_core::Result<ModelEnvelope> {
        let unavailable =
            |e: String| ftrl_core::Error::LinkUnavailable(format!("{}: {e}", self.addr));
        write_frame(stream, request).map_err(|e| unavailable(e.to_string()))?;
        match read_frame(stream) {
            Ok(Some(reply)) => Ok(reply),
            Ok(None) => Err(unavailable("connection closed".into())),
            Err(Error::Core(e)) => Err(e),
            Err(e) => Err(unavailable(e.to_string())),
        }
    }
}

impl FederationLink for TcpLink {
    fn exchange(
        &mut self,
        agent: AgentId,
        local: &ModelBundle,
    ) -> ftrl_core::Result<Option<Arc<FederationSnapshot>>> {
        let mut stream = self
            .connect()
            .map_err(|e| ftrl_core::Error::LinkUnavailable(format!("{}: {e}", self.addr)))?;
        let _ = stream.set_read_timeout(Some(self.timeout));
        let _ = stream.set_write_timeout(Some(self.timeout));
        let _ = stream.set_nodelay(true);

        let push = ModelEnvelope::new(MessageKind::PushModel, agent, 0, payload_from_bundle(local));
        let ack = self.round_trip(&mut stream, &push)?;
        if ack.kind != MessageKind::Ack {
            return Err(ftrl_core::Error::Aggregation {
                agent,
                reason: "server rejected the pushed model".into(),
            });
        }
        let pull = ModelEnvelope::new(MessageKind::PullRequest, agent, 0, vec![]);
        let reply = self.round_trip(&mut stream, &pull)?;
        if reply.kind != MessageKind::Snapshot {
            return Err(ftrl_core::Error::Protocol {
                offset: 5,
                reason: format!("expected a snapshot, got {:?}", reply.kind),
            });
        }
        if reply.round == 0 {
            return Ok(None);
        }
        Ok(Some(Arc::new(FederationSnapshot {
            round: reply.round,
            networks: bundle_from_payload(reply.payload)?,
            created_at: 0.0,
        })))
    }
}
