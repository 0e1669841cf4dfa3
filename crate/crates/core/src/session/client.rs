//! Blocking native client over length-prefixed TCP.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::protocol::*;
use super::transport::{encode_frame, MAX_FRAME_BYTES};
use crate::model::{ClientKind, HandState, NodeDelta, Session};

#[derive(Debug)]
pub struct TcpClient {
    stream: TcpStream,
    buf: Vec<u8>,
    pending: VecDeque<WireMessage>,
    pub client_id: String,
    pub kind: ClientKind,
    heartbeat_every: Duration,
    last_sent: Instant,
    next_request: u64,
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

impl TcpClient {
    /// Connects and completes the `hello` handshake.
    pub fn connect(addr: impl ToSocketAddrs, kind: ClientKind, client_id: Option<String>) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut c = Self {
            stream,
            buf: Vec::new(),
            pending: VecDeque::new(),
            client_id: String::new(),
            kind,
            heartbeat_every: Duration::from_secs(1),
            last_sent: Instant::now(),
            next_request: 0,
        };
        c.send(&WireMessage::new(MessageType::Hello, HelloRequest { kind, client_id }))?;
        let reply = c.expect(Duration::from_secs(5), |m| m.kind == MessageType::Hello)?;
        let hello: HelloReply = reply.payload_as().map_err(|e| invalid(e.to_string()))?;
        c.client_id = hello.client_id;
        c.heartbeat_every = Duration::from_millis((hello.heartbeat_interval_ms / 2).max(50));
        Ok(c)
    }

    pub fn send(&mut self, msg: &WireMessage) -> io::Result<()> {
        self.stream.write_all(&encode_frame(&msg.encode()))?;
        self.last_sent = Instant::now();
        Ok(())
    }

    fn request_id(&mut self) -> String {
        self.next_request += 1;
        format!("r{}", self.next_request)
    }

    pub fn heartbeat_if_due(&mut self) -> io::Result<()> {
        if self.last_sent.elapsed() >= self.heartbeat_every {
            self.send(&WireMessage::new(MessageType::Heartbeat, HeartbeatRequest::default()))?;
        }
        Ok(())
    }

    fn take_frame(&mut self) -> io::Result<Option<WireMessage>> {
        if self.buf.len() < 4 {
            return Ok(None);
        }
        let n = u32::from_be_bytes(self.buf[..4].try_into().expect("4 bytes")) as usize;
        if n > MAX_FRAME_BYTES {
            return Err(invalid(format!("frame of {n} bytes exceeds limit")));
        }
        if self.buf.len() < 4 + n {
            return Ok(None);
        }
        let body: Vec<u8> = self.buf.drain(..4 + n).skip(4).collect();
        let text = String::from_utf8(body).map_err(|e| invalid(e.to_string()))?;
        WireMessage::decode(&text).map(Some).map_err(|e| invalid(e.to_string()))
    }

    /// Next message, or `None` if nothing arrives within `timeout`.
    pub fn recv_timeout(&mut self, timeout: Duration) -> io::Result<Option<WireMessage>> {
        if let Some(m) = self.pending.pop_front() {
            return Ok(Some(m));
        }
        self.recv_wire(timeout)
    }

    fn recv_wire(&mut self, timeout: Duration) -> io::Result<Option<WireMessage>> {
        let deadline = Instant::now() + timeout;
        let mut chunk = [0u8; 8192];
        loop {
            self.heartbeat_if_due()?;
            if let Some(m) = self.take_frame()? {
                return Ok(Some(m));
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            let wait = (deadline - now).min(self.heartbeat_every).max(Duration::from_millis(1));
            self.stream.set_read_timeout(Some(wait))?;
            match self.stream.read(&mut chunk) {
                Ok(0) => {
                    return Err(io::Error::new(
                        io::ErrorKind::UnexpectedEof,
                        "service closed the connection",
                    ))
                }
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(e) => return Err(e),
            }
        }
    }

    /// Waits for a message matching `pred`, queueing everything else for
    /// later [`TcpClient::recv_timeout`] calls.
    pub fn expect(&mut self, timeout: Duration, pred: impl Fn(&WireMessage) -> bool) -> io::Result<WireMessage> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.recv_wire(left)? {
                Some(m) if pred(&m) => return Ok(m),
                Some(m) => self.pending.push_back(m),
                None => return Err(io::Error::new(io::ErrorKind::TimedOut, "no reply from service")),
            }
        }
    }

    fn call(
        &mut self,
        kind: MessageType,
        mut payload: serde_json::Value,
        reply: MessageType,
    ) -> io::Result<WireMessage> {
        let rid = self.request_id();
        payload["request_id"] = rid.clone().into();
        self.send(&WireMessage {
            v: PROTOCOL_VERSION.into(),
            seq: None,
            kind,
            payload,
        })?;
        let m = self.expect(Duration::from_secs(5), |m| {
            (m.kind == reply || m.kind == MessageType::Error) && m.request_id().as_deref() == Some(rid.as_str())
        })?;
        if m.kind == MessageType::Error {
            let e: ErrorPayload = m.payload_as().map_err(|e| invalid(e.to_string()))?;
            return Err(io::Error::other(format!("{}: {}", e.code, e.message)));
        }
        Ok(m)
    }

    pub fn create_session(&mut self) -> io::Result<String> {
        let m = self.call(
            MessageType::CreateSession,
            serde_json::json!({}),
            MessageType::CreateSession,
        )?;
        let r: SessionCreated = m.payload_as().map_err(|e| invalid(e.to_string()))?;
        Ok(r.session_id)
    }

    /// Joins and returns the snapshot message (to seed a replica).
    pub fn join(&mut self, session_id: &str) -> io::Result<(Session, WireMessage)> {
        let m = self.call(
            MessageType::JoinSession,
            serde_json::json!({ "session_id": session_id }),
            MessageType::Snapshot,
        )?;
        let r: SnapshotReply = m.payload_as().map_err(|e| invalid(e.to_string()))?;
        Ok((r.session, m))
    }

    pub fn submit(&mut self, delta: NodeDelta) -> io::Result<()> {
        self.send(&WireMessage::new(
            MessageType::NodeDelta,
            DeltaRequest {
                delta,
                request_id: None,
            },
        ))
    }

    pub fn publish(&mut self, event: EventRequest) -> io::Result<()> {
        self.send(&WireMessage::new(MessageType::InteractionEvent, event))
    }

    pub fn publish_hand(&mut self, hand: HandState) -> io::Result<()> {
        self.send(&WireMessage::new(MessageType::HandUpdate, HandRequest { hand }))
    }

    pub fn request_snapshot(&mut self) -> io::Result<()> {
        self.send(&WireMessage::new(MessageType::Snapshot, SnapshotRequest::default()))
    }
}
