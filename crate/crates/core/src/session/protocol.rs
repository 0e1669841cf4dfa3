//! The `harp/1` wire protocol.
//!
//! Every message is a JSON object `{v, seq, type, payload}`. `seq` is set on
//! messages the service broadcasts to a session (gapless per session) and on
//! snapshots (the last sequence number the snapshot includes); it is `null`
//! everywhere else. Unknown `type` tags are rejected. Unknown payload fields
//! are ignored.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{ClientDescriptor, ClientKind, EventKind, HandState, InteractionEvent, NodeDelta, NodeId, Session};

pub const PROTOCOL_VERSION: &str = "harp/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Hello,
    CreateSession,
    JoinSession,
    Snapshot,
    NodeDelta,
    InteractionEvent,
    HandUpdate,
    Heartbeat,
    Error,
}

impl MessageType {
    pub const ALL: [MessageType; 9] = [
        MessageType::Hello,
        MessageType::CreateSession,
        MessageType::JoinSession,
        MessageType::Snapshot,
        MessageType::NodeDelta,
        MessageType::InteractionEvent,
        MessageType::HandUpdate,
        MessageType::Heartbeat,
        MessageType::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::Hello => "hello",
            MessageType::CreateSession => "create_session",
            MessageType::JoinSession => "join_session",
            MessageType::Snapshot => "snapshot",
            MessageType::NodeDelta => "node_delta",
            MessageType::InteractionEvent => "interaction_event",
            MessageType::HandUpdate => "hand_update",
            MessageType::Heartbeat => "heartbeat",
            MessageType::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub v: String,
    pub seq: Option<u64>,
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeError {
    Json(String),
    Version(String),
    UnknownType(String),
    Payload(String),
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::Json(_) => "bad-json",
            DecodeError::Version(_) => "protocol-version",
            DecodeError::UnknownType(_) => "unknown-type",
            DecodeError::Payload(_) => "bad-payload",
        }
    }
}

impl std::fmt::Display for DecodeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecodeError::Json(e) => write!(f, "malformed message: {e}"),
            DecodeError::Version(v) => {
                write!(f, "unsupported protocol version `{v}`, expected `{PROTOCOL_VERSION}`")
            }
            DecodeError::UnknownType(t) => write!(f, "unknown message type `{t}`"),
            DecodeError::Payload(e) => write!(f, "bad payload: {e}"),
        }
    }
}

impl std::error::Error for DecodeError {}

impl WireMessage {
    pub fn new(kind: MessageType, payload: impl Serialize) -> Self {
        Self {
            v: PROTOCOL_VERSION.to_owned(),
            seq: None,
            kind,
            payload: serde_json::to_value(payload).expect("payloads serialize"),
        }
    }

    pub fn with_seq(mut self, seq: u64) -> Self {
        self.seq = Some(seq);
        self
    }

    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }

    /// Parses and checks version and type tag. The payload is left untyped.
    pub fn decode(text: &str) -> Result<Self, DecodeError> {
        #[derive(Deserialize)]
        struct Raw {
            v: Option<String>,
            #[serde(default)]
            seq: Option<u64>,
            #[serde(rename = "type")]
            kind: Option<String>,
            #[serde(default)]
            payload: Value,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| DecodeError::Json(e.to_string()))?;
        let v = raw.v.unwrap_or_default();
        if v != PROTOCOL_VERSION {
            return Err(DecodeError::Version(v));
        }
        let kind_text = raw.kind.ok_or_else(|| DecodeError::Json("missing `type`".into()))?;
        let kind = MessageType::parse(&kind_text).ok_or(DecodeError::UnknownType(kind_text))?;
        let payload = if raw.payload.is_null() {
            Value::Object(Default::default())
        } else {
            raw.payload
        };
        Ok(Self {
            v,
            seq: raw.seq,
            kind,
            payload,
        })
    }

    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, DecodeError> {
        serde_json::from_value(self.payload.clone()).map_err(|e| DecodeError::Payload(e.to_string()))
    }

    pub fn request_id(&self) -> Option<String> {
        self.payload
            .get("request_id")
            .and_then(|v| v.as_str())
            .map(str::to_owned)
    }
}

// Client -> service payloads.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloRequest {
    pub kind: ClientKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinSessionRequest {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SnapshotRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRequest {
    pub delta: NodeDelta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

/// An interaction as submitted by a client; the service fills in the
/// session, source, timestamp and (if absent) the event id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRequest {
    pub target_node_id: NodeId,
    pub kind: EventKind,
    #[serde(default)]
    pub payload: std::collections::BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandRequest {
    pub hand: HandState,
}

// Service -> client payloads.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloReply {
    pub client_id: String,
    pub kind: ClientKind,
    pub protocol: String,
    pub heartbeat_interval_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Joined,
    Left,
}

/// Broadcast under the `join_session` tag whenever membership changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipNotice {
    pub session_id: String,
    pub client: ClientDescriptor,
    pub membership: Membership,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotReply {
    pub session: Session,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaBroadcast {
    pub delta: NodeDelta,
    pub revision: u64,
    pub source_client_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBroadcast {
    pub event: InteractionEvent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandBroadcast {
    pub source_client_id: String,
    pub hand: HandState,
}

/// Client liveness ping, optionally acknowledging the last applied revision.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HeartbeatRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartbeatPayload {
    #[serde(default)]
    pub time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

/// Which side sent a message; payload schemas differ per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Client,
    Service,
}

/// Checks `msg` against the payload schema for its type and direction and
/// returns the payload re-encoded from the typed form.
pub fn check_payload(msg: &WireMessage, direction: Direction) -> Result<Value, DecodeError> {
    fn typed<T: Serialize + DeserializeOwned>(msg: &WireMessage) -> Result<Value, DecodeError> {
        let t: T = msg.payload_as()?;
        serde_json::to_value(t).map_err(|e| DecodeError::Payload(e.to_string()))
    }
    use MessageType as M;
    match (direction, msg.kind) {
        (Direction::Client, M::Hello) => typed::<HelloRequest>(msg),
        (Direction::Client, M::CreateSession) => typed::<CreateSessionRequest>(msg),
        (Direction::Client, M::JoinSession) => typed::<JoinSessionRequest>(msg),
        (Direction::Client, M::Snapshot) => typed::<SnapshotRequest>(msg),
        (Direction::Client, M::NodeDelta) => typed::<DeltaRequest>(msg),
        (Direction::Client, M::InteractionEvent) => typed::<EventRequest>(msg),
        (Direction::Client, M::HandUpdate) => typed::<HandRequest>(msg),
        (Direction::Client, M::Heartbeat) => typed::<HeartbeatRequest>(msg),
        (_, M::Error) => typed::<ErrorPayload>(msg),
        (Direction::Service, M::Hello) => typed::<HelloReply>(msg),
        (Direction::Service, M::CreateSession) => typed::<SessionCreated>(msg),
        (Direction::Service, M::JoinSession) => typed::<MembershipNotice>(msg),
        (Direction::Service, M::Snapshot) => typed::<SnapshotReply>(msg),
        (Direction::Service, M::NodeDelta) => typed::<DeltaBroadcast>(msg),
        (Direction::Service, M::InteractionEvent) => typed::<EventBroadcast>(msg),
        (Direction::Service, M::HandUpdate) => typed::<HandBroadcast>(msg),
        (Direction::Service, M::Heartbeat) => typed::<HeartbeatPayload>(msg),
    }
}

/// Types whose service-side messages carry a session sequence number.
pub fn is_sequenced(kind: MessageType) -> bool {
    matches!(
        kind,
        MessageType::JoinSession
            | MessageType::Snapshot
            | MessageType::NodeDelta
            | MessageType::InteractionEvent
            | MessageType::HandUpdate
    )
}
