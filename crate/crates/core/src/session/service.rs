//! In-process session hub. Transports feed decoded messages in through
//! [`Service::handle`]; everything the service sends goes to per-client
//! unbounded outboxes, so a stalled client never blocks the others.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};

use super::protocol::*;
use crate::model::{
    apply_node_delta, validate_status, ClientDescriptor, ClientKind, HandState, InteractionEvent, ModelError,
    NodeDelta, NodeId, Session,
};

pub const ROOT_NODE_ID: &str = "root";

/// Millisecond time source. Tests drive a [`ManualClock`].
pub trait Clock: Send + Sync + fmt::Debug {
    fn now_ms(&self) -> u64;
}

#[derive(Debug)]
pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { start: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }
}

#[derive(Debug, Default)]
pub struct ManualClock {
    now: AtomicU64,
}

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self {
            now: AtomicU64::new(start_ms),
        }
    }

    pub fn set(&self, ms: u64) {
        self.now.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceConfig {
    pub heartbeat_interval_ms: u64,
    /// A client silent for more than this many intervals is dropped.
    pub missed_heartbeats: u32,
    /// Maximum hand-update fan-out rate per haptic client. Zero disables throttling.
    pub hand_rate_hz: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            heartbeat_interval_ms: 1000,
            missed_heartbeats: 2,
            hand_rate_hz: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("unknown-session: {0}")]
    UnknownSession(String),
    #[error("unknown-client: {0}")]
    UnknownClient(String),
    #[error("not-joined: client {0} has not joined a session")]
    NotJoined(String),
    #[error("unknown-node: {0}")]
    UnknownNode(NodeId),
    #[error("wrong-kind: {} clients cannot {action}", actual.as_str())]
    WrongKind { actual: ClientKind, action: &'static str },
    #[error("duplicate-client: {0}")]
    DuplicateClient(String),
    #[error("invalid-hand: hand state is not well formed")]
    InvalidHand,
    #[error("invalid-status: {0}")]
    InvalidStatus(String),
    #[error("handshake-required: first message must be hello")]
    HandshakeRequired,
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Decode(#[from] DecodeError),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "unknown-session",
            ServiceError::UnknownClient(_) => "unknown-client",
            ServiceError::NotJoined(_) => "not-joined",
            ServiceError::UnknownNode(_) => "unknown-node",
            ServiceError::WrongKind { .. } => "wrong-kind",
            ServiceError::DuplicateClient(_) => "duplicate-client",
            ServiceError::InvalidHand => "invalid-hand",
            ServiceError::InvalidStatus(_) => "invalid-status",
            ServiceError::HandshakeRequired => "handshake-required",
            ServiceError::Model(e) => e.code(),
            ServiceError::Decode(e) => e.code(),
        }
    }

    pub fn to_message(&self, request_id: Option<String>) -> WireMessage {
        WireMessage::new(
            MessageType::Error,
            ErrorPayload {
                code: self.code().to_owned(),
                message: self.to_string(),
                request_id,
            },
        )
    }
}

/// The receiving end of a connected client.
#[derive(Debug)]
pub struct ClientHandle {
    pub id: String,
    pub kind: ClientKind,
    rx: UnboundedReceiver<WireMessage>,
}

impl ClientHandle {
    pub fn try_next(&mut self) -> Option<WireMessage> {
        self.rx.try_recv().ok()
    }

    pub fn drain(&mut self) -> Vec<WireMessage> {
        std::iter::from_fn(|| self.try_next()).collect()
    }

    /// Waits for the next message; `None` once the service dropped the client.
    pub async fn recv(&mut self) -> Option<WireMessage> {
        self.rx.recv().await
    }
}

/// Connection-level bookkeeping for one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientConn {
    pub id: String,
    pub kind: ClientKind,
    pub session: Option<String>,
    pub last_acked_revision: Option<u64>,
    pub last_seen_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HandDisposition {
    Delivered { seq: u64 },
    Deferred,
    DroppedStale,
}

#[derive(Debug)]
struct ClientEntry {
    conn: ClientConn,
    tx: UnboundedSender<WireMessage>,
}

#[derive(Debug, Default)]
struct HandThrottle {
    last_sent_ms: Option<u64>,
    last_timestamp: Option<f64>,
    pending: Option<HandState>,
}

#[derive(Debug)]
struct Hub {
    session: Session,
    seq: u64,
    members: BTreeMap<String, UnboundedSender<WireMessage>>,
    hands: HashMap<String, HandThrottle>,
    next_event: u64,
}

impl Hub {
    fn broadcast(&mut self, kind: MessageType, payload: impl Serialize) -> u64 {
        self.seq += 1;
        let msg = WireMessage::new(kind, payload).with_seq(self.seq);
        for tx in self.members.values() {
            let _ = tx.send(msg.clone());
        }
        self.seq
    }

    fn snapshot(&self, request_id: Option<String>) -> WireMessage {
        WireMessage::new(
            MessageType::Snapshot,
            SnapshotReply {
                session: self.session.clone(),
                request_id,
            },
        )
        .with_seq(self.seq)
    }

    fn deliver_hand(&mut self, client: &str, hand: HandState, now: u64) -> u64 {
        let th = self.hands.entry(client.to_owned()).or_default();
        th.last_sent_ms = Some(now);
        th.last_timestamp = Some(hand.timestamp);
        th.pending = None;
        self.broadcast(
            MessageType::HandUpdate,
            HandBroadcast {
                source_client_id: client.to_owned(),
                hand,
            },
        )
    }

    fn leave(&mut self, client: &str) {
        if self.members.remove(client).is_none() {
            return;
        }
        self.hands.remove(client);
        if let Some(desc) = self.session.remove_client(client) {
            let notice = MembershipNotice {
                session_id: self.session.id.clone(),
                client: desc,
                membership: Membership::Left,
            };
            self.broadcast(MessageType::JoinSession, notice);
        }
    }
}

#[derive(Debug, Default)]
struct Registry {
    clients: BTreeMap<String, ClientEntry>,
    sessions: BTreeMap<String, Arc<Mutex<Hub>>>,
    next_client: u64,
    next_session: u64,
    last_heartbeat_ms: Option<u64>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

/// Session host. Lock order is registry first, then a session hub.
#[derive(Debug)]
pub struct Service {
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    registry: Mutex<Registry>,
}

impl Service {
    pub fn new(config: ServiceConfig, clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(Self {
            config,
            clock,
            registry: Mutex::new(Registry::default()),
        })
    }

    pub fn with_system_clock() -> Arc<Self> {
        Self::new(ServiceConfig::default(), Arc::new(SystemClock::new()))
    }

    pub fn config(&self) -> ServiceConfig {
        self.config
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    /// Registers a client. Its outbox immediately receives the `hello` reply.
    pub fn connect(&self, kind: ClientKind, requested_id: Option<String>) -> Result<ClientHandle, ServiceError> {
        let mut reg = lock(&self.registry);
        let id = match requested_id {
            Some(id) if reg.clients.contains_key(&id) => return Err(ServiceError::DuplicateClient(id)),
            Some(id) => id,
            None => loop {
                reg.next_client += 1;
                let id = format!("c{}", reg.next_client);
                if !reg.clients.contains_key(&id) {
                    break id;
                }
            },
        };
        let (tx, rx) = unbounded_channel();
        let _ = tx.send(WireMessage::new(
            MessageType::Hello,
            HelloReply {
                client_id: id.clone(),
                kind,
                protocol: PROTOCOL_VERSION.to_owned(),
                heartbeat_interval_ms: self.config.heartbeat_interval_ms,
            },
        ));
        let conn = ClientConn {
            id: id.clone(),
            kind,
            session: None,
            last_acked_revision: None,
            last_seen_ms: self.clock.now_ms(),
        };
        reg.clients.insert(id.clone(), ClientEntry { conn, tx });
        tracing::debug!(client = %id, kind = kind.as_str(), "client connected");
        Ok(ClientHandle { id, kind, rx })
    }

    /// Removes a client and notifies the rest of its session.
    pub fn disconnect(&self, client: &str) {
        let mut reg = lock(&self.registry);
        Self::disconnect_locked(&mut reg, client);
    }

    fn disconnect_locked(reg: &mut Registry, client: &str) {
        let Some(entry) = reg.clients.remove(client) else {
            return;
        };
        if let Some(hub) = entry.conn.session.and_then(|s| reg.sessions.get(&s)) {
            lock(hub).leave(client);
        }
        tracing::debug!(client, "client disconnected");
    }

    pub fn client(&self, client: &str) -> Option<ClientConn> {
        lock(&self.registry).clients.get(client).map(|e| e.conn.clone())
    }

    pub fn create_session(&self) -> String {
        let mut reg = lock(&self.registry);
        reg.next_session += 1;
        let id = format!("s{}", reg.next_session);
        let hub = Hub {
            session: Session::new(id.clone(), ROOT_NODE_ID),
            seq: 0,
            members: BTreeMap::new(),
            hands: HashMap::new(),
            next_event: 0,
        };
        reg.sessions.insert(id.clone(), Arc::new(Mutex::new(hub)));
        id
    }

    /// Current session state and the last sequence number it reflects.
    pub fn snapshot(&self, session_id: &str) -> Option<(Session, u64)> {
        let hub = lock(&self.registry).sessions.get(session_id).cloned()?;
        let hub = lock(&hub);
        Some((hub.session.clone(), hub.seq))
    }

    /// Joins `client` to `session_id`, leaving any previous session. Members
    /// (the joiner included) get a membership notice, then the joiner gets a
    /// snapshot carrying that notice's sequence number.
    pub fn join_session(
        &self,
        client: &str,
        session_id: &str,
        request_id: Option<String>,
    ) -> Result<(Session, u64), ServiceError> {
        let mut reg = lock(&self.registry);
        let hub = reg
            .sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_owned()))?;
        let entry = reg
            .clients
            .get(client)
            .ok_or_else(|| ServiceError::UnknownClient(client.to_owned()))?;
        let (kind, tx, previous) = (entry.conn.kind, entry.tx.clone(), entry.conn.session.clone());

        if let Some(prev) = previous.filter(|p| p != session_id) {
            if let Some(old) = reg.sessions.get(&prev) {
                lock(old).leave(client);
            }
        }
        let mut h = lock(&hub);
        if !h.members.contains_key(client) {
            h.members.insert(client.to_owned(), tx.clone());
            let desc = ClientDescriptor {
                id: client.to_owned(),
                kind,
            };
            h.session.add_client(desc.clone())?;
            h.broadcast(
                MessageType::JoinSession,
                MembershipNotice {
                    session_id: session_id.to_owned(),
                    client: desc,
                    membership: Membership::Joined,
                },
            );
        }
        let _ = tx.send(h.snapshot(request_id));
        let out = (h.session.clone(), h.seq);
        drop(h);
        let entry = reg.clients.get_mut(client).expect("checked above");
        entry.conn.session = Some(session_id.to_owned());
        entry.conn.last_acked_revision = Some(out.0.status.revision);
        Ok(out)
    }

    /// Sends the client a fresh snapshot of its session.
    pub fn request_snapshot(&self, client: &str, request_id: Option<String>) -> Result<u64, ServiceError> {
        let (hub, tx) = self.joined(client)?;
        let h = lock(&hub);
        let _ = tx.send(h.snapshot(request_id));
        Ok(h.seq)
    }

    fn joined(&self, client: &str) -> Result<(Arc<Mutex<Hub>>, UnboundedSender<WireMessage>), ServiceError> {
        let reg = lock(&self.registry);
        let entry = reg
            .clients
            .get(client)
            .ok_or_else(|| ServiceError::UnknownClient(client.to_owned()))?;
        let sid = entry
            .conn
            .session
            .as_ref()
            .ok_or_else(|| ServiceError::NotJoined(client.to_owned()))?;
        let hub = reg
            .sessions
            .get(sid)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(sid.clone()))?;
        Ok((hub, entry.tx.clone()))
    }

    /// Applies a delta in the session's total order and broadcasts it.
    /// Returns the new revision.
    pub fn submit_delta(
        &self,
        client: &str,
        delta: NodeDelta,
        request_id: Option<String>,
    ) -> Result<u64, ServiceError> {
        let (hub, _) = self.joined(client)?;
        let mut h = lock(&hub);
        let next = apply_node_delta(&h.session.status, &delta)?;
        let violations = validate_status(&next);
        if let Some(v) = violations.first() {
            return Err(ServiceError::InvalidStatus(v.to_string()));
        }
        h.session.status = next;
        let revision = h.session.status.revision;
        h.broadcast(
            MessageType::NodeDelta,
            DeltaBroadcast {
                delta,
                revision,
                source_client_id: client.to_owned(),
                request_id,
            },
        );
        drop(h);
        if let Some(e) = lock(&self.registry).clients.get_mut(client) {
            e.conn.last_acked_revision = Some(revision);
        }
        Ok(revision)
    }

    /// Stamps and fans out an interaction. Payloads are passed through untouched.
    pub fn publish_event(&self, client: &str, req: EventRequest) -> Result<InteractionEvent, ServiceError> {
        let (hub, _) = self.joined(client)?;
        let mut h = lock(&hub);
        if !h.session.status.contains(&req.target_node_id) {
            return Err(ServiceError::UnknownNode(req.target_node_id));
        }
        h.next_event += 1;
        let event = InteractionEvent {
            event_id: req
                .event_id
                .unwrap_or_else(|| format!("{}-e{}", h.session.id, h.next_event)),
            session_id: h.session.id.clone(),
            source_client_id: client.to_owned(),
            target_node_id: req.target_node_id,
            kind: req.kind,
            timestamp: self.clock.now_ms(),
            payload: req.payload,
        };
        h.broadcast(
            MessageType::InteractionEvent,
            EventBroadcast {
                event: event.clone(),
                request_id: req.request_id,
            },
        );
        Ok(event)
    }

    /// Latest-wins hand fan-out. Updates older than the last accepted one are
    /// dropped; inside the throttle window the newest update is held until
    /// the window opens (on a later publish or [`Service::tick`]).
    pub fn publish_hand(&self, client: &str, hand: HandState) -> Result<HandDisposition, ServiceError> {
        let kind = self
            .client(client)
            .ok_or_else(|| ServiceError::UnknownClient(client.to_owned()))?
            .kind;
        if kind != ClientKind::Haptic {
            return Err(ServiceError::WrongKind {
                actual: kind,
                action: "publish hand updates",
            });
        }
        if !hand.is_well_formed() || !hand.timestamp.is_finite() {
            return Err(ServiceError::InvalidHand);
        }
        let (hub, _) = self.joined(client)?;
        let now = self.clock.now_ms();
        let interval = self.throttle_interval_ms();
        let mut h = lock(&hub);
        let th = h.hands.entry(client.to_owned()).or_default();
        let newest = th.pending.map(|p| p.timestamp).or(th.last_timestamp);
        if newest.is_some_and(|t| hand.timestamp <= t) {
            return Ok(HandDisposition::DroppedStale);
        }
        let open = th
            .last_sent_ms
            .is_none_or(|t| (now.saturating_sub(t)) as f64 >= interval);
        if open {
            let seq = h.deliver_hand(client, hand, now);
            Ok(HandDisposition::Delivered { seq })
        } else {
            th.pending = Some(hand);
            Ok(HandDisposition::Deferred)
        }
    }

    fn throttle_interval_ms(&self) -> f64 {
        if self.config.hand_rate_hz > 0.0 {
            1000.0 / self.config.hand_rate_hz
        } else {
            0.0
        }
    }

    pub fn heartbeat(&self, client: &str, revision: Option<u64>) {
        let now = self.clock.now_ms();
        if let Some(e) = lock(&self.registry).clients.get_mut(client) {
            e.conn.last_seen_ms = now;
            if revision.is_some() {
                e.conn.last_acked_revision = revision;
            }
        }
    }

    /// Periodic housekeeping: flushes held hand updates, emits heartbeats and
    /// drops clients silent for too long. Returns the dropped client ids.
    pub fn tick(&self) -> Vec<String> {
        let now = self.clock.now_ms();
        let interval = self.throttle_interval_ms();
        let mut reg = lock(&self.registry);

        for hub in reg.sessions.values() {
            let mut h = lock(hub);
            let due: Vec<(String, HandState)> = h
                .hands
                .iter()
                .filter_map(|(id, th)| {
                    let p = th.pending?;
                    let ready = th
                        .last_sent_ms
                        .is_none_or(|t| (now.saturating_sub(t)) as f64 >= interval);
                    ready.then(|| (id.clone(), p))
                })
                .collect();
            let mut due = due;
            due.sort_by(|a, b| a.0.cmp(&b.0));
            for (id, hand) in due {
                h.deliver_hand(&id, hand, now);
            }
        }

        let hb = self.config.heartbeat_interval_ms;
        if reg.last_heartbeat_ms.is_none_or(|t| now.saturating_sub(t) >= hb) {
            reg.last_heartbeat_ms = Some(now);
            let msg = WireMessage::new(MessageType::Heartbeat, HeartbeatPayload { time_ms: now });
            for e in reg.clients.values() {
                let _ = e.tx.send(msg.clone());
            }
        }

        let limit = hb * u64::from(self.config.missed_heartbeats);
        let expired: Vec<String> = reg
            .clients
            .values()
            .filter(|e| now.saturating_sub(e.conn.last_seen_ms) > limit)
            .map(|e| e.conn.id.clone())
            .collect();
        for id in &expired {
            tracing::info!(client = %id, "client missed heartbeats, dropping");
            Self::disconnect_locked(&mut reg, id);
        }
        expired
    }

    /// Dispatches one decoded message from `client`. Replies and errors go
    /// to the client's outbox.
    pub fn handle(&self, client: &str, msg: WireMessage) {
        self.heartbeat(client, None);
        let request_id = msg.request_id();
        if let Err(e) = self.dispatch(client, &msg) {
            tracing::debug!(client, code = e.code(), "request rejected");
            self.reply(client, e.to_message(request_id));
        }
    }

    /// Decodes and dispatches raw text from a transport.
    pub fn handle_text(&self, client: &str, text: &str) {
        match WireMessage::decode(text) {
            Ok(msg) => self.handle(client, msg),
            Err(e) => {
                self.heartbeat(client, None);
                self.reply(client, ServiceError::Decode(e).to_message(None));
            }
        }
    }

    fn reply(&self, client: &str, msg: WireMessage) {
        if let Some(e) = lock(&self.registry).clients.get(client) {
            let _ = e.tx.send(msg);
        }
    }

    fn dispatch(&self, client: &str, msg: &WireMessage) -> Result<(), ServiceError> {
        match msg.kind {
            MessageType::Hello => {
                let conn = self
                    .client(client)
                    .ok_or_else(|| ServiceError::UnknownClient(client.to_owned()))?;
                self.reply(
                    client,
                    WireMessage::new(
                        MessageType::Hello,
                        HelloReply {
                            client_id: conn.id,
                            kind: conn.kind,
                            protocol: PROTOCOL_VERSION.to_owned(),
                            heartbeat_interval_ms: self.config.heartbeat_interval_ms,
                        },
                    ),
                );
            }
            MessageType::CreateSession => {
                let req: CreateSessionRequest = msg.payload_as()?;
                let session_id = self.create_session();
                self.reply(
                    client,
                    WireMessage::new(
                        MessageType::CreateSession,
                        SessionCreated {
                            session_id,
                            request_id: req.request_id,
                        },
                    ),
                );
            }
            MessageType::JoinSession => {
                let req: JoinSessionRequest = msg.payload_as()?;
                self.join_session(client, &req.session_id, req.request_id)?;
            }
            MessageType::Snapshot => {
                let req: SnapshotRequest = msg.payload_as()?;
                self.request_snapshot(client, req.request_id)?;
            }
            MessageType::NodeDelta => {
                let req: DeltaRequest = msg.payload_as()?;
                self.submit_delta(client, req.delta, req.request_id)?;
            }
            MessageType::InteractionEvent => {
                let req: EventRequest = msg.payload_as()?;
                self.publish_event(client, req)?;
            }
            MessageType::HandUpdate => {
                let req: HandRequest = msg.payload_as()?;
                self.publish_hand(client, req.hand)?;
            }
            MessageType::Heartbeat => {
                let req: HeartbeatRequest = msg.payload_as()?;
                self.heartbeat(client, req.revision);
            }
            MessageType::Error => {
                tracing::warn!(client, payload = %msg.payload, "client reported an error");
            }
        }
        Ok(())
    }
}
