//! Client-side mirror of a session, fed from the service's message stream.

use std::collections::BTreeMap;

use super::protocol::*;
use crate::model::{apply_node_delta, HandState, InteractionEvent, ModelError, Session, SessionStatus};

#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Snapshot {
        seq: u64,
    },
    Delta {
        revision: u64,
    },
    Event(InteractionEvent),
    Hand {
        source: String,
    },
    Membership(MembershipNotice),
    /// Not state-bearing, already covered, or waiting for a snapshot.
    Ignored,
    /// A sequence number was skipped; a snapshot must be requested.
    Gap {
        expected: u64,
        got: u64,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplicaError {
    #[error("{0}")]
    Decode(#[from] DecodeError),
    #[error("replica diverged: {0}")]
    Model(#[from] ModelError),
    #[error("replica diverged: local revision {local}, service revision {remote}")]
    Revision { local: u64, remote: u64 },
}

#[derive(Debug, Clone, Default)]
pub struct Replica {
    session: Option<Session>,
    last_seq: Option<u64>,
    awaiting_snapshot: bool,
    events: Vec<InteractionEvent>,
    hands: BTreeMap<String, HandState>,
}

impl Replica {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    pub fn status(&self) -> Option<&SessionStatus> {
        self.session.as_ref().map(|s| &s.status)
    }

    pub fn canonical_json(&self) -> Option<String> {
        self.status().map(SessionStatus::canonical_json)
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    /// True before the first snapshot and after a gap or divergence.
    pub fn needs_snapshot(&self) -> bool {
        self.session.is_none() || self.awaiting_snapshot
    }

    /// Events seen, in sequence order.
    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<InteractionEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn latest_hand(&self, source: &str) -> Option<&HandState> {
        self.hands.get(source)
    }

    pub fn apply(&mut self, msg: &WireMessage) -> Result<Applied, ReplicaError> {
        if msg.kind == MessageType::Snapshot {
            let snap: SnapshotReply = msg.payload_as()?;
            let seq = msg.seq.unwrap_or(0);
            self.session = Some(snap.session);
            self.last_seq = Some(seq);
            self.awaiting_snapshot = false;
            return Ok(Applied::Snapshot { seq });
        }
        let Some(seq) = msg.seq else {
            return Ok(Applied::Ignored);
        };
        if self.needs_snapshot() {
            return Ok(Applied::Ignored);
        }
        let last = self.last_seq.unwrap_or(0);
        if seq <= last {
            return Ok(Applied::Ignored);
        }
        if seq != last + 1 {
            self.awaiting_snapshot = true;
            return Ok(Applied::Gap {
                expected: last + 1,
                got: seq,
            });
        }
        let result = self.apply_sequenced(msg);
        match &result {
            Ok(_) => self.last_seq = Some(seq),
            Err(_) => self.awaiting_snapshot = true,
        }
        result
    }

    fn apply_sequenced(&mut self, msg: &WireMessage) -> Result<Applied, ReplicaError> {
        let session = self.session.as_mut().expect("checked by caller");
        match msg.kind {
            MessageType::NodeDelta => {
                let b: DeltaBroadcast = msg.payload_as()?;
                let next = apply_node_delta(&session.status, &b.delta)?;
                if next.revision != b.revision {
                    return Err(ReplicaError::Revision {
                        local: next.revision,
                        remote: b.revision,
                    });
                }
                session.status = next;
                Ok(Applied::Delta { revision: b.revision })
            }
            MessageType::InteractionEvent => {
                let b: EventBroadcast = msg.payload_as()?;
                self.events.push(b.event.clone());
                Ok(Applied::Event(b.event))
            }
            MessageType::HandUpdate => {
                let b: HandBroadcast = msg.payload_as()?;
                self.hands.insert(b.source_client_id.clone(), b.hand);
                Ok(Applied::Hand {
                    source: b.source_client_id,
                })
            }
            MessageType::JoinSession => {
                let n: MembershipNotice = msg.payload_as()?;
                match n.membership {
                    Membership::Joined => {
                        let _ = session.add_client(n.client.clone());
                    }
                    Membership::Left => {
                        session.remove_client(&n.client.id);
                        self.hands.remove(&n.client.id);
                    }
                }
                Ok(Applied::Membership(n))
            }
            _ => Ok(Applied::Ignored),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClientKind;
    use crate::model::{Node, NodeDelta};
    use crate::session::{ManualClock, Service, ServiceConfig};
    use std::sync::Arc;

    #[test]
    fn gap_then_snapshot_recovers() {
        let svc = Service::new(ServiceConfig::default(), Arc::new(ManualClock::new(0)));
        let mut a = svc.connect(ClientKind::ArView, None).unwrap();
        let sid = svc.create_session();
        svc.join_session(&a.id, &sid, None).unwrap();
        let mut r = Replica::new();
        for m in a.drain() {
            r.apply(&m).unwrap();
        }
        for i in 0..3 {
            let node = Node::new(format!("n{i}")).with_parent("root");
            svc.submit_delta(&a.id, NodeDelta::Add { node }, None).unwrap();
        }
        let msgs = a.drain();
        r.apply(&msgs[0]).unwrap();
        assert!(matches!(
            r.apply(&msgs[2]).unwrap(),
            Applied::Gap { expected: 3, got: 4 }
        ));
        assert!(r.needs_snapshot());
        svc.request_snapshot(&a.id, None).unwrap();
        for m in a.drain() {
            r.apply(&m).unwrap();
        }
        assert!(!r.needs_snapshot());
        assert_eq!(
            r.canonical_json().unwrap(),
            svc.snapshot(&sid).unwrap().0.status.canonical_json()
        );
    }
}
