//! WebSocket fan-out. One thread accepts connections, one thread serves each
//! client. The simulation thread never blocks on the network: outbound
//! messages go through a bounded queue per client, and a client whose queue
//! fills up is dropped.

use std::io::{self, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender, TryRecvError, TrySendError};
use serde::Serialize;
use tungstenite::handshake::HandshakeError;
use tungstenite::{Message, WebSocket};

use crate::protocol::{Envelope, Kind};
use crate::BridgeError;

const POLL: Duration = Duration::from_millis(2);
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(2);

#[derive(Clone, Copy, Debug)]
pub struct ServerOptions {
    /// Outbound messages buffered per client before it is dropped.
    pub queue_capacity: usize,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self { queue_capacity: 256 }
    }
}

/// A text message received from a client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inbound {
    pub client: u64,
    pub text: String,
}

struct Client {
    id: u64,
    tx: Sender<Arc<str>>,
    thread: Option<JoinHandle<()>>,
}

struct Shared {
    clients: Mutex<Vec<Client>>,
    shutdown: AtomicBool,
    next_id: AtomicU64,
}

pub struct BridgeServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    inbound: Receiver<Inbound>,
    seq: AtomicU64,
    accept: Option<JoinHandle<()>>,
}

impl BridgeServer {
    /// Binds to `addr`; port 0 picks a free port, see [`Self::local_addr`].
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self, BridgeError> {
        Self::bind_with(addr, ServerOptions::default())
    }

    pub fn bind_with(addr: impl ToSocketAddrs, opts: ServerOptions) -> Result<Self, BridgeError> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            clients: Mutex::new(Vec::new()),
            shutdown: AtomicBool::new(false),
            next_id: AtomicU64::new(1),
        });
        let (in_tx, inbound) = unbounded();
        let s = Arc::clone(&shared);
        let accept = thread::Builder::new()
            .name("pps-bridge-accept".into())
            .spawn(move || accept_loop(listener, s, in_tx, opts.queue_capacity.max(1)))?;
        log::info!("bridge listening on ws://{addr}");
        Ok(Self {
            addr,
            shared,
            inbound,
            seq: AtomicU64::new(0),
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        self.shared.clients.lock().expect("client list").len()
    }

    /// Messages received since the last call, in arrival order.
    pub fn drain(&self) -> Vec<Inbound> {
        self.inbound.try_iter().collect()
    }

    fn envelope(&self, kind: Kind, payload: &impl Serialize) -> Result<Arc<str>, BridgeError> {
        let seq = self.seq.fetch_add(1, Ordering::Relaxed);
        let env = Envelope::new(kind, seq, serde_json::to_value(payload)?);
        Ok(serde_json::to_string(&env)?.into())
    }

    /// Sends to every client. Returns the number of clients reached.
    pub fn broadcast(&self, kind: Kind, payload: &impl Serialize) -> Result<usize, BridgeError> {
        let text = self.envelope(kind, payload)?;
        let mut clients = self.shared.clients.lock().expect("client list");
        let mut dropped = Vec::new();
        clients.retain_mut(|c| match c.tx.try_send(Arc::clone(&text)) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                log::warn!("client {} is not keeping up, dropping it", c.id);
                dropped.extend(c.thread.take());
                false
            }
            Err(TrySendError::Disconnected(_)) => {
                dropped.extend(c.thread.take());
                false
            }
        });
        let reached = clients.len();
        drop(clients);
        // The client threads see their queue disconnect and exit on their own.
        drop(dropped);
        Ok(reached)
    }

    /// Sends to one client; `false` if it is gone or not keeping up.
    pub fn send_to(&self, client: u64, kind: Kind, payload: &impl Serialize) -> Result<bool, BridgeError> {
        let text = self.envelope(kind, payload)?;
        let clients = self.shared.clients.lock().expect("client list");
        Ok(clients
            .iter()
            .find(|c| c.id == client)
            .is_some_and(|c| c.tx.try_send(text).is_ok()))
    }
}

impl Drop for BridgeServer {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::Relaxed);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        let clients = std::mem::take(&mut *self.shared.clients.lock().expect("client list"));
        for mut c in clients {
            drop(c.tx);
            if let Some(h) = c.thread.take() {
                let _ = h.join();
            }
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, inbound: Sender<Inbound>, capacity: usize) {
    while !shared.shutdown.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
                let (tx, rx) = bounded(capacity);
                let s = Arc::clone(&shared);
                let inbound = inbound.clone();
                let spawned = thread::Builder::new()
                    .name(format!("pps-bridge-client-{id}"))
                    .spawn(move || {
                        match handshake(stream) {
                            Ok(ws) => {
                                log::info!("client {id} connected from {peer}");
                                serve_client(id, ws, rx, inbound, &s);
                            }
                            Err(e) => log::warn!("handshake with {peer} failed: {e}"),
                        }
                        s.clients.lock().expect("client list").retain(|c| c.id != id);
                        log::info!("client {id} disconnected");
                    });
                match spawned {
                    Ok(h) => shared.clients.lock().expect("client list").push(Client {
                        id,
                        tx,
                        thread: Some(h),
                    }),
                    Err(e) => log::error!("cannot spawn client thread: {e}"),
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

fn would_block(e: &io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

fn handshake(stream: TcpStream) -> Result<WebSocket<TcpStream>, BridgeError> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(POLL))?;
    stream.set_write_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    let deadline = Instant::now() + HANDSHAKE_TIMEOUT;
    let mut attempt = tungstenite::accept(stream);
    loop {
        match attempt {
            Ok(ws) => return Ok(ws),
            Err(HandshakeError::Failure(e)) => return Err(e.into()),
            Err(HandshakeError::Interrupted(mid)) => {
                if Instant::now() > deadline {
                    return Err(BridgeError::Handshake("timed out".into()));
                }
                attempt = mid.handshake();
            }
        }
    }
}

fn serve_client(
    id: u64,
    mut ws: WebSocket<TcpStream>,
    rx: Receiver<Arc<str>>,
    inbound: Sender<Inbound>,
    shared: &Shared,
) {
    let mut backlog = false;
    loop {
        if shared.shutdown.load(Ordering::Relaxed) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return;
        }
        // Only take more from the queue once the socket has accepted what
        // was written before, so a stalled client backs up into its queue.
        if !backlog {
            loop {
                match rx.try_recv() {
                    Ok(text) => {
                        backlog = true;
                        if let Err(e) = ws.write(Message::text(&*text)) {
                            log::debug!("client {id}: write failed: {e}");
                            return;
                        }
                    }
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => {
                        let _ = ws.close(None);
                        let _ = ws.flush();
                        return;
                    }
                }
            }
        }
        if backlog {
            match ws.flush() {
                Ok(()) => backlog = false,
                Err(tungstenite::Error::Io(e)) if would_block(&e) => {}
                Err(e) => {
                    log::debug!("client {id}: flush failed: {e}");
                    return;
                }
            }
        }
        match ws.read() {
            Ok(Message::Text(t)) => {
                if inbound
                    .send(Inbound {
                        client: id,
                        text: t.as_str().to_string(),
                    })
                    .is_err()
                {
                    return;
                }
            }
            Ok(Message::Binary(_)) => {
                let _ = inbound.send(Inbound {
                    client: id,
                    text: String::from("<binary>"),
                });
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                return;
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if would_block(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return,
            Err(e) => {
                log::debug!("client {id}: read failed: {e}");
                return;
            }
        }
    }
}
