//! TCP transport for session hosts: one thread per connection, one attached
//! client per session.

use std::collections::BTreeMap;
use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::host::SessionHost;
use super::wire::{
    decode, read_frame, send, ClientBody, ClientMessage, ErrorCode, ServerBody, ServerMessage,
};
use super::ServiceError;

/// What happens to a session whose client disconnects before completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisconnectPolicy {
    #[default]
    Abort,
    /// Keep the state; a new connection may resume it.
    Suspend,
}

impl std::str::FromStr for DisconnectPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abort" => Ok(Self::Abort),
            "suspend" => Ok(Self::Suspend),
            other => Err(format!(
                "unknown disconnect policy '{other}' (expected abort|suspend)"
            )),
        }
    }
}

#[derive(Debug)]
struct Slot {
    host: SessionHost,
    attached: bool,
}

/// Hosts any number of sessions behind one listener.
#[derive(Debug, Default)]
pub struct SessionService {
    sessions: Mutex<BTreeMap<String, Arc<Mutex<Slot>>>>,
    policy: DisconnectPolicy,
}

impl SessionService {
    pub fn new(policy: DisconnectPolicy) -> Self {
        Self {
            sessions: Mutex::new(BTreeMap::new()),
            policy,
        }
    }

    pub fn add_session(&self, host: SessionHost) {
        let id = host.session_id().to_string();
        self.sessions.lock().expect("session map").insert(
            id,
            Arc::new(Mutex::new(Slot {
                host,
                attached: false,
            })),
        );
    }

    fn slot(&self, id: &str) -> Option<Arc<Mutex<Slot>>> {
        self.sessions.lock().expect("session map").get(id).cloned()
    }

    /// Runs `f` against a session's host.
    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&SessionHost) -> T) -> Option<T> {
        let slot = self.slot(id)?;
        let guard = slot.lock().expect("session slot");
        Some(f(&guard.host))
    }

    /// True once every session is complete or aborted.
    pub fn all_closed(&self) -> bool {
        let slots: Vec<_> = self
            .sessions
            .lock()
            .expect("session map")
            .values()
            .cloned()
            .collect();
        slots
            .iter()
            .all(|s| s.lock().expect("session slot").host.state().is_closed())
    }

    /// Removes and returns every host.
    pub fn into_hosts(self) -> Vec<SessionHost> {
        self.sessions
            .into_inner()
            .expect("session map")
            .into_values()
            .map(|slot| {
                Arc::try_unwrap(slot)
                    .expect("no connection thread still holds the session")
                    .into_inner()
                    .expect("session slot")
                    .host
            })
            .collect()
    }

    /// Serves one connection until the client disconnects.
    pub fn handle_connection(&self, stream: TcpStream) -> Result<(), ServiceError> {
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        let mut attached: Option<(String, Arc<Mutex<Slot>>)> = None;
        let mut local_seq = 0u64;
        let mut local_error = |id: &str, code: ErrorCode, detail: String| {
            let m = ServerMessage::new(id, local_seq, ServerBody::ServerError { code, detail });
            local_seq += 1;
            m
        };
        let outcome = loop {
            let bytes = match read_frame(&mut reader) {
                Ok(Some(b)) => b,
                Ok(None) => break Ok(()),
                Err(e) => break Err(ServiceError::from(e)),
            };
            let msg: ClientMessage = match decode::<ClientBody>(&bytes) {
                Ok(m) => m,
                Err(e) => {
                    let id = attached.as_ref().map(|(id, _)| id.as_str()).unwrap_or("");
                    let reply = local_error(id, ErrorCode::BadMessage, e.to_string());
                    if let Err(e) = send(&mut writer, &reply) {
                        break Err(e.into());
                    }
                    continue;
                }
            };
            if attached.is_none() {
                match self.slot(&msg.session_id) {
                    None => {
                        let detail = format!("unknown session '{}'", msg.session_id);
                        let reply = local_error(&msg.session_id, ErrorCode::NoSession, detail);
                        if let Err(e) = send(&mut writer, &reply) {
                            break Err(e.into());
                        }
                        continue;
                    }
                    Some(slot) => {
                        let mut guard = slot.lock().expect("session slot");
                        if guard.attached {
                            drop(guard);
                            let reply = local_error(
                                &msg.session_id,
                                ErrorCode::SessionBusy,
                                "another client is attached".into(),
                            );
                            if let Err(e) = send(&mut writer, &reply) {
                                break Err(e.into());
                            }
                            continue;
                        }
                        guard.attached = true;
                        drop(guard);
                        attached = Some((msg.session_id.clone(), slot));
                    }
                }
            }
            let (_, slot) = attached.as_ref().expect("attached above");
            let replies = slot.lock().expect("session slot").host.handle(&msg);
            if let Err(e) = replies.iter().try_for_each(|r| send(&mut writer, r)) {
                break Err(e.into());
            }
        };
        if let Some((_, slot)) = attached {
            let mut guard = slot.lock().expect("session slot");
            guard.attached = false;
            if self.policy == DisconnectPolicy::Abort {
                guard.host.abort();
            }
        }
        outcome
    }

    /// Accepts connections until every session is closed.
    pub fn serve_until_closed(self: &Arc<Self>, listener: TcpListener) -> Result<(), ServiceError> {
        listener.set_nonblocking(true)?;
        let mut workers = Vec::new();
        while !self.all_closed() {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    let service = Arc::clone(self);
                    workers.push(thread::spawn(move || service.handle_connection(stream)));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
            workers.retain(|w| !w.is_finished());
        }
        for w in workers {
            // a worker still attached to a closed session ends when its client leaves
            let _ = w.join();
        }
        Ok(())
    }
}

/// Serves a single session on `listener` until it completes or is aborted.
pub fn serve_session(
    host: SessionHost,
    listener: TcpListener,
    policy: DisconnectPolicy,
) -> Result<SessionHost, ServiceError> {
    let service = Arc::new(SessionService::new(policy));
    service.add_session(host);
    service.serve_until_closed(listener)?;
    let service = Arc::try_unwrap(service).expect("workers joined");
    Ok(service.into_hosts().pop().expect("one session"))
}

/// Blocking protocol client.
#[derive(Debug)]
pub struct SessionClient {
    session_id: String,
    next_seq: u64,
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl SessionClient {
    pub fn connect(
        addr: impl ToSocketAddrs,
        session_id: impl Into<String>,
    ) -> Result<Self, ServiceError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            session_id: session_id.into(),
            next_seq: 0,
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.writer.get_ref().local_addr()
    }

    /// Sends `body` with the next sequence number.
    pub fn send(&mut self, body: ClientBody) -> Result<(), ServiceError> {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.send_with_seq(seq, body)
    }

    /// Sends with an explicit sequence number, for replay and testing.
    pub fn send_with_seq(&mut self, seq: u64, body: ClientBody) -> Result<(), ServiceError> {
        send(
            &mut self.writer,
            &ClientMessage::new(self.session_id.clone(), seq, body),
        )?;
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Option<ServerMessage>, ServiceError> {
        super::wire::recv(&mut self.reader)
    }

    /// Reads one reply batch: messages up to and including the first one
    /// that is not a `ServerCapture`.
    pub fn recv_batch(&mut self) -> Result<Vec<ServerMessage>, ServiceError> {
        let mut out = Vec::new();
        loop {
            let Some(m) = self.recv()? else {
                return Err(ServiceError::Io("connection closed mid-batch".into()));
            };
            let last = !matches!(m.body, ServerBody::ServerCapture { .. });
            out.push(m);
            if last {
                return Ok(out);
            }
        }
    }

    pub fn exchange(&mut self, body: ClientBody) -> Result<Vec<ServerMessage>, ServiceError> {
        self.send(body)?;
        self.recv_batch()
    }
}
