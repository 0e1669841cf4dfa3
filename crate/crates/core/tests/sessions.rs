mod common;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use harp_core::model::{ClientKind, HandState, Node, NodeDelta, Vec3};
use harp_core::session::protocol::{Membership, MembershipNotice};
use harp_core::session::{
    Applied, ClientHandle, HandDisposition, ManualClock, MessageType, Replica, Service, ServiceConfig, ROOT_NODE_ID,
};

use common::run_convergence;

fn manual() -> (Arc<Service>, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(0));
    (Service::new(ServiceConfig::default(), clock.clone()), clock)
}

fn joined(svc: &Service, kind: ClientKind, sid: &str) -> ClientHandle {
    let h = svc.connect(kind, None).unwrap();
    svc.join_session(&h.id, sid, None).unwrap();
    h
}

#[test]
fn concurrent_clients_converge_for_several_seeds() {
    for seed in 10..16 {
        let out = run_convergence(seed, 40, 20);
        assert!(out.converged(), "seed {seed}: {out:?}");
    }
}

#[test]
fn lossy_replica_recovers_through_snapshots() {
    let (svc, _) = manual();
    let sid = svc.create_session();
    let writer = joined(&svc, ClientKind::ArView, &sid);
    let mut reader = joined(&svc, ClientKind::Observer, &sid);
    let mut replica = Replica::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut gaps = 0;
    for k in 0..300 {
        let delta = if k % 3 == 2 {
            NodeDelta::Update {
                node: Node::new(format!("n{}", k - 1))
                    .with_parent(ROOT_NODE_ID)
                    .with_meta("k", k.to_string()),
            }
        } else {
            NodeDelta::Add {
                node: Node::new(format!("n{k}")).with_parent(ROOT_NODE_ID),
            }
        };
        svc.submit_delta(&writer.id, delta, None).unwrap();
        for msg in reader.drain() {
            if msg.kind != MessageType::Snapshot && rng.gen_bool(0.1) {
                continue;
            }
            if let Applied::Gap { .. } = replica.apply(&msg).unwrap() {
                gaps += 1;
                svc.request_snapshot(&reader.id, None).unwrap();
            }
        }
    }
    for msg in reader.drain() {
        replica.apply(&msg).unwrap();
    }
    assert!(gaps > 0);
    let (session, _) = svc.snapshot(&sid).unwrap();
    assert_eq!(replica.canonical_json().unwrap(), session.status.canonical_json());
}

#[test]
fn late_joiner_snapshot_is_tagged_with_its_notice() {
    let (svc, _) = manual();
    let sid = svc.create_session();
    let early = joined(&svc, ClientKind::ArView, &sid);
    for k in 0..5 {
        svc.submit_delta(
            &early.id,
            NodeDelta::Add {
                node: Node::new(format!("n{k}")).with_parent(ROOT_NODE_ID),
            },
            None,
        )
        .unwrap();
    }
    let mut late = joined(&svc, ClientKind::Observer, &sid);
    let msgs = late.drain();
    let notice = msgs.iter().find(|m| m.kind == MessageType::JoinSession).unwrap();
    let snap = msgs.iter().find(|m| m.kind == MessageType::Snapshot).unwrap();
    let n: MembershipNotice = notice.payload_as().unwrap();
    assert_eq!(n.membership, Membership::Joined);
    assert_eq!(n.client.id, late.id);
    assert_eq!(notice.seq, snap.seq);
    let mut replica = Replica::new();
    for m in &msgs {
        replica.apply(m).unwrap();
    }
    assert_eq!(replica.status().unwrap().revision, 5);
}

#[test]
fn hand_fanout_never_exceeds_ten_hertz() {
    let (svc, clock) = manual();
    let sid = svc.create_session();
    let glove = joined(&svc, ClientKind::Haptic, &sid);
    let mut viewer = joined(&svc, ClientKind::ArView, &sid);
    viewer.drain();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut t_ms = 0u64;
    let mut delivered_at = Vec::new();
    let mut last_ts = 0.0;
    while t_ms < 3000 {
        t_ms += rng.gen_range(1..25);
        clock.set(t_ms);
        last_ts = t_ms as f64 / 1000.0;
        let d = svc
            .publish_hand(&glove.id, HandState::at(Vec3::new(0.0, 0.0, 0.2), last_ts))
            .unwrap();
        assert_ne!(d, HandDisposition::DroppedStale);
        svc.heartbeat(&glove.id, None);
        svc.heartbeat(&viewer.id, None);
        svc.tick();
        for m in viewer.drain() {
            if m.kind == MessageType::HandUpdate {
                delivered_at.push((t_ms, m.payload["hand"]["timestamp"].as_f64().unwrap()));
            }
        }
    }
    for w in delivered_at.windows(2) {
        assert!(w[1].0 - w[0].0 >= 100, "deliveries at {} and {} ms", w[0].0, w[1].0);
        assert!(w[1].1 > w[0].1);
    }
    assert!(delivered_at.len() >= 25);
    clock.advance(100);
    svc.heartbeat(&glove.id, None);
    svc.heartbeat(&viewer.id, None);
    svc.tick();
    let flushed: Vec<_> = viewer
        .drain()
        .into_iter()
        .filter(|m| m.kind == MessageType::HandUpdate)
        .collect();
    let final_ts = flushed
        .last()
        .map(|m| m.payload["hand"]["timestamp"].as_f64().unwrap())
        .unwrap_or(delivered_at.last().unwrap().1);
    assert_eq!(final_ts, last_ts);
}

#[test]
fn silent_member_is_dropped_and_announced() {
    let (svc, clock) = manual();
    let sid = svc.create_session();
    let quiet = joined(&svc, ClientKind::Haptic, &sid);
    let mut chatty = joined(&svc, ClientKind::ArView, &sid);
    for step in 1..=25 {
        clock.set(step * 100);
        svc.heartbeat(&chatty.id, None);
        let dropped = svc.tick();
        let silent_for = step * 100;
        if silent_for <= 2000 {
            assert!(dropped.is_empty(), "dropped at {silent_for} ms");
        } else if !dropped.is_empty() {
            assert_eq!(dropped, vec![quiet.id.clone()]);
        }
    }
    assert!(svc.client(&quiet.id).is_none());
    assert!(svc.client(&chatty.id).is_some());
    let left = chatty
        .drain()
        .into_iter()
        .filter(|m| m.kind == MessageType::JoinSession)
        .map(|m| m.payload_as::<MembershipNotice>().unwrap())
        .find(|n| n.membership == Membership::Left)
        .expect("left notice");
    assert_eq!(left.client.id, quiet.id);
    let (session, _) = svc.snapshot(&sid).unwrap();
    assert!(session.clients.iter().all(|c| c.id != quiet.id));
}
