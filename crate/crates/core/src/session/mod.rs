//! Session hosting: the `harp/1` protocol, the in-process hub, a client-side
//! replica, and the network front-end.

pub mod client;
pub mod protocol;
pub mod replica;
pub mod service;
pub mod transport;

pub use client::TcpClient;
pub use protocol::{DecodeError, MessageType, WireMessage, PROTOCOL_VERSION};
pub use replica::{Applied, Replica, ReplicaError};
pub use service::{
    ClientConn, ClientHandle, Clock, HandDisposition, ManualClock, Service, ServiceConfig, ServiceError, SystemClock,
    ROOT_NODE_ID,
};
