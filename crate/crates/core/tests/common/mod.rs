//! Independent oracles and harnesses shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use harp_core::model::{ClientKind, EventKind, Mesh, Node, NodeDelta, NodeId, Transform, Vec3};
use harp_core::render::{GridSpec, HapticPoint};
use harp_core::session::protocol::EventRequest;
use harp_core::session::{Applied, ManualClock, Replica, Service, ServiceConfig, ROOT_NODE_ID};

pub type Cells = BTreeSet<[usize; 3]>;

// ---------------------------------------------------------------- scheduler

/// Distinct points tagged by index in `intensity`.
pub fn tagged_points(n: usize) -> Vec<HapticPoint> {
    (0..n)
        .map(|i| HapticPoint {
            position: Vec3::new(i as f64 * 1e-3, 0.0, 0.2),
            intensity: (i + 1) as f64 / (n + 1) as f64,
        })
        .collect()
}

/// Checks the device limit and the window fairness of `frames` produced for
/// `n` points: every window of `ceil(n/k)` consecutive frames shows each
/// point exactly once.
pub fn check_fair(frames: &[Vec<usize>], n: usize, k: usize) -> Result<(), String> {
    let g = n.div_ceil(k);
    for (f, fr) in frames.iter().enumerate() {
        if fr.len() > k {
            return Err(format!("N={n}: frame {f} has {} points", fr.len()));
        }
    }
    for start in 0..=frames.len().saturating_sub(g) {
        let mut seen = vec![0u32; n];
        for fr in &frames[start..start + g] {
            for &i in fr {
                seen[i] += 1;
            }
        }
        if let Some(i) = seen.iter().position(|&c| c != 1) {
            return Err(format!(
                "N={n}: point {i} shown {} times in window starting at {start}",
                seen[i]
            ));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- voxels

/// Cell along one axis by scanning the boundaries; far face and a 1e-9
/// cell tolerance on either face are inclusive.
pub fn scan_axis(spec: &GridSpec, axis: usize, x: f64) -> Option<usize> {
    let n = spec.dims[axis];
    let tol = 1e-9 * spec.cell_size.get(axis);
    let lo = spec.boundary(axis, 0);
    let hi = spec.boundary(axis, n as i64);
    if x < lo - tol || x > hi + tol {
        return None;
    }
    if x < lo {
        return Some(0);
    }
    for i in 0..n {
        if spec.boundary(axis, i as i64) <= x && x < spec.boundary(axis, i as i64 + 1) {
            return Some(i);
        }
    }
    Some(n - 1)
}

pub fn scan_cell(spec: &GridSpec, p: Vec3) -> Option<[usize; 3]> {
    Some([
        scan_axis(spec, 0, p.x)?,
        scan_axis(spec, 1, p.y)?,
        scan_axis(spec, 2, p.z)?,
    ])
}

pub fn posed(mesh: &Mesh, t: &Transform) -> Vec<Vec3> {
    mesh.vertices.iter().map(|&v| t.apply(v)).collect()
}

pub fn oracle_vertex_cells(mesh: &Mesh, t: &Transform, spec: &GridSpec) -> Cells {
    posed(mesh, t)
        .into_iter()
        .map(|p| scan_cell(spec, p).expect("vertex inside grid"))
        .collect()
}

/// Plane-major enumeration: for each layer's center plane, every undirected
/// mesh edge crossing it contributes the cell of its crossing point.
pub fn oracle_edge_cells(mesh: &Mesh, t: &Transform, spec: &GridSpec) -> Cells {
    let pts = posed(mesh, t);
    let mut edges = BTreeSet::new();
    for tri in &mesh.triangles {
        for e in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            edges.insert((e.0.min(e.1), e.0.max(e.1)));
        }
    }
    let mut cells = oracle_vertex_cells(mesh, t, spec);
    for k in 0..spec.dims[2] {
        let z = spec.origin.z + (k as f64 + 0.5) * spec.cell_size.z;
        for &(a, b) in &edges {
            let (pa, pb) = (pts[a as usize], pts[b as usize]);
            if pa.z == pb.z {
                continue;
            }
            let hit = if pa.z == z {
                pa
            } else if pb.z == z {
                pb
            } else if (pa.z - z) * (pb.z - z) < 0.0 {
                let s = (z - pa.z) / (pb.z - pa.z);
                Vec3::new(pa.x + (pb.x - pa.x) * s, pa.y + (pb.y - pa.y) * s, z)
            } else {
                continue;
            };
            let i = scan_axis(spec, 0, hit.x).expect("crossing inside grid");
            let j = scan_axis(spec, 1, hit.y).expect("crossing inside grid");
            cells.insert([i, j, k]);
        }
    }
    cells
}

/// Generalized winding number of a closed triangle mesh around `q`
/// (van Oosterom–Strackee solid angles); about 1 inside and 0 outside.
pub fn winding_number(pts: &[Vec3], tris: &[[u32; 3]], q: Vec3) -> f64 {
    let mut total = 0.0;
    for t in tris {
        let a = pts[t[0] as usize] - q;
        let b = pts[t[1] as usize] - q;
        let c = pts[t[2] as usize] - q;
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(b.cross(c));
        let den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * std::f64::consts::PI)
}

fn coord(y: f64, z: f64) -> robust::Coord<f64> {
    robust::Coord { x: y, y: z }
}

fn coord3(p: Vec3) -> robust::Coord3D<f64> {
    robust::Coord3D { x: p.x, y: p.y, z: p.z }
}

/// A query exactly on a projected edge counts for the triangle lying
/// toward +y of it, or toward +z for edges parallel to y.
fn edge_claims(p: (f64, f64), r: (f64, f64)) -> bool {
    let (dy, dz) = (r.0 - p.0, r.1 - p.1);
    dz < 0.0 || (dz == 0.0 && dy > 0.0)
}

/// Whether the ray from `q` toward +x crosses triangle `[a, b, c]`, decided
/// with exact predicates. A query on the triangle's plane is treated as
/// lying just past it, so that crossing does not count.
pub fn exact_ray_crosses(a: Vec3, b: Vec3, c: Vec3, q: Vec3) -> bool {
    let yz = |v: Vec3| (v.y, v.z);
    let area = robust::orient2d(coord(a.y, a.z), coord(b.y, b.z), coord(c.y, c.z));
    if area == 0.0 {
        return false;
    }
    let (a, b, c) = if area > 0.0 { (a, b, c) } else { (a, c, b) };
    let qq = coord(q.y, q.z);
    for (p, r) in [(a, b), (b, c), (c, a)] {
        let w = robust::orient2d(coord(p.y, p.z), coord(r.y, r.z), qq);
        if w < 0.0 || (w == 0.0 && !edge_claims(yz(p), yz(r))) {
            return false;
        }
    }
    // orient3d(a, b, c, q) = -n.(q - a) with n = (b - a) x (c - a), whose x
    // component is positive after the reordering above, so its sign is the
    // sign of the ray parameter at the crossing.
    robust::orient3d(coord3(a), coord3(b), coord3(c), coord3(q)) > 0.0
}

/// Edge cells plus every cell whose center has odd +x crossing parity,
/// computed exactly.
pub fn oracle_interior_cells(mesh: &Mesh, t: &Transform, spec: &GridSpec) -> Cells {
    let pts = posed(mesh, t);
    let mut cells = oracle_edge_cells(mesh, t, spec);
    let [nx, ny, nz] = spec.dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = spec.cell_center([i, j, k]);
                let crossings = mesh
                    .triangles
                    .iter()
                    .filter(|tri| {
                        exact_ray_crosses(pts[tri[0] as usize], pts[tri[1] as usize], pts[tri[2] as usize], c)
                    })
                    .count();
                if crossings % 2 == 1 {
                    cells.insert([i, j, k]);
                }
            }
        }
    }
    cells
}

/// Distance from `q` to triangle `[a, b, c]`.
pub fn point_triangle_distance(q: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let n = (b - a).cross(c - a);
    let nn = n.dot(n);
    if nn > 0.0 {
        let d = (q - a).dot(n) / nn;
        let p = q - n * d;
        let inside = [(a, b), (b, c), (c, a)]
            .iter()
            .all(|&(u, v)| (v - u).cross(p - u).dot(n) >= 0.0);
        if inside {
            return (q - p).norm();
        }
    }
    let seg = |u: Vec3, v: Vec3| {
        let e = v - u;
        let l = e.dot(e);
        let s = if l > 0.0 {
            ((q - u).dot(e) / l).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (q - (u + e * s)).norm()
    };
    seg(a, b).min(seg(b, c)).min(seg(c, a))
}

/// Cells whose centers lie at least `margin` from the surface, with their
/// winding-number classification.
pub fn winding_classified(mesh: &Mesh, t: &Transform, spec: &GridSpec, margin: f64) -> Vec<([usize; 3], bool)> {
    let pts = posed(mesh, t);
    let mut out = Vec::new();
    let [nx, ny, nz] = spec.dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = spec.cell_center([i, j, k]);
                let near = mesh.triangles.iter().any(|tri| {
                    point_triangle_distance(c, pts[tri[0] as usize], pts[tri[1] as usize], pts[tri[2] as usize])
                        < margin
                });
                if !near {
                    let w = winding_number(&pts, &mesh.triangles, c);
                    out.push(([i, j, k], w.round().abs() >= 1.0));
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------- meshes

/// Random mesh with exact and near duplicates (well under `eps`) mixed in.
pub fn random_mesh(rng: &mut ChaCha8Rng, eps: f64) -> Mesh {
    let base = rng.gen_range(1..40);
    let mut vertices: Vec<Vec3> = (0..base)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    for _ in 0..rng.gen_range(0..base + 1) {
        let v = vertices[rng.gen_range(0..vertices.len())];
        let jitter = if rng.gen_bool(0.5) { 0.0 } else { eps * 0.1 };
        vertices.push(v + Vec3::new(rng.gen_range(-jitter..=jitter), 0.0, 0.0));
    }
    let n = vertices.len() as u32;
    let triangles = (0..rng.gen_range(0..60))
        .map(|_| [rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n)])
        .collect();
    let normals = (0..n).map(|i| Vec3::new(0.0, 0.0, i as f64)).collect();
    Mesh {
        vertices,
        normals,
        triangles,
    }
}

/// Axis-aligned cube `[0,1]^3` with separate vertices per face, as an OBJ
/// exporter would write it.
pub fn unit_cube_split_faces() -> Mesh {
    let corners = |f: [[f64; 3]; 4]| f.map(|c| Vec3::new(c[0], c[1], c[2]));
    let faces = [
        corners([[0., 0., 0.], [0., 1., 0.], [1., 1., 0.], [1., 0., 0.]]),
        corners([[0., 0., 1.], [1., 0., 1.], [1., 1., 1.], [0., 1., 1.]]),
        corners([[0., 0., 0.], [1., 0., 0.], [1., 0., 1.], [0., 0., 1.]]),
        corners([[0., 1., 0.], [0., 1., 1.], [1., 1., 1.], [1., 1., 0.]]),
        corners([[0., 0., 0.], [0., 0., 1.], [0., 1., 1.], [0., 1., 0.]]),
        corners([[1., 0., 0.], [1., 1., 0.], [1., 1., 1.], [1., 0., 1.]]),
    ];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for f in faces {
        let b = vertices.len() as u32;
        vertices.extend(f);
        triangles.push([b, b + 1, b + 2]);
        triangles.push([b, b + 2, b + 3]);
    }
    Mesh::from_parts(vertices, triangles)
}

// ---------------------------------------------------------------- sessions

#[derive(Debug)]
pub struct ConvergenceOutcome {
    pub accepted_deltas: usize,
    pub accepted_events: usize,
    pub rejected: usize,
    pub service_json: String,
    pub replica_json: Vec<String>,
    pub event_orders: Vec<Vec<String>>,
    pub elapsed: Duration,
}

impl ConvergenceOutcome {
    pub fn converged(&self) -> bool {
        self.replica_json.iter().all(|j| *j == self.service_json)
            && self.event_orders.windows(2).all(|w| w[0] == w[1])
            && self.event_orders[0].len() == self.accepted_events
    }
}

fn random_delta(rng: &mut ChaCha8Rng, replica: &Replica, me: &str, counter: &mut usize) -> NodeDelta {
    let status = replica.status().expect("joined");
    let ids: Vec<&NodeId> = status.nodes.keys().collect();
    let others: Vec<&NodeId> = ids.iter().copied().filter(|id| id.as_str() != ROOT_NODE_ID).collect();
    let roll = rng.gen_range(0..10);
    if others.is_empty() || roll < 5 {
        *counter += 1;
        let parent = ids[rng.gen_range(0..ids.len())].clone();
        let node = Node::new(format!("{me}-n{counter}"))
            .with_parent(parent)
            .with_transform(Transform::from_position(Vec3::new(
                rng.gen_range(-0.1..0.1),
                rng.gen_range(-0.1..0.1),
                rng.gen_range(0.1..0.3),
            )))
            .with_meta("by", me);
        return NodeDelta::Add { node };
    }
    let target = others[rng.gen_range(0..others.len())];
    if roll < 8 {
        let mut node = status.get(target).expect("listed").clone();
        node.metadata
            .insert("touched".into(), format!("{me}-{}", rng.gen::<u16>()));
        node.transform.position.z = rng.gen_range(0.1..0.3);
        if rng.gen_bool(0.3) {
            node.parent = Some(ROOT_NODE_ID.into());
        }
        NodeDelta::Update { node }
    } else {
        NodeDelta::Remove { id: target.clone() }
    }
}

/// Three clients submitting concurrently from their own (possibly stale)
/// replicas until `deltas` deltas and `events` events have been accepted
/// in total, then quiescence.
pub fn run_convergence(seed: u64, deltas: usize, events: usize) -> ConvergenceOutcome {
    let start = Instant::now();
    let svc = Service::new(ServiceConfig::default(), Arc::new(ManualClock::new(0)));
    let sid = svc.create_session();
    let kinds = [ClientKind::ArView, ClientKind::Haptic, ClientKind::Observer];
    let mut handles = Vec::new();
    for kind in kinds {
        let h = svc.connect(kind, None).expect("connect");
        svc.join_session(&h.id, &sid, None).expect("join");
        handles.push(h);
    }

    let quotas: Vec<(usize, usize)> = (0..3)
        .map(|i| {
            (
                deltas / 3 + usize::from(i < deltas % 3),
                events / 3 + usize::from(i < events % 3),
            )
        })
        .collect();
    let workers: Vec<_> = handles
        .into_iter()
        .zip(quotas)
        .enumerate()
        .map(|(w, (mut handle, (mut d_left, mut e_left)))| {
            let svc = Arc::clone(&svc);
            thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(w as u64));
                let mut replica = Replica::new();
                let mut counter = 0;
                let mut rejected = 0;
                let pump = |replica: &mut Replica, handle: &mut harp_core::session::ClientHandle| {
                    for m in handle.drain() {
                        if let Applied::Gap { .. } = replica.apply(&m).expect("well-formed") {
                            panic!("in-process delivery skipped a sequence number");
                        }
                    }
                };
                while d_left + e_left > 0 {
                    pump(&mut replica, &mut handle);
                    let do_event = e_left > 0 && (d_left == 0 || rng.gen_bool(0.33));
                    if do_event {
                        let status = replica.status().expect("joined");
                        let ids: Vec<&NodeId> = status.nodes.keys().collect();
                        let target = ids[rng.gen_range(0..ids.len())].clone();
                        let kind = [EventKind::Touch, EventKind::Press, EventKind::Release][rng.gen_range(0..3)];
                        let req = EventRequest {
                            target_node_id: target,
                            kind,
                            payload: BTreeMap::from([("n".to_owned(), e_left.to_string())]),
                            event_id: None,
                            request_id: None,
                        };
                        match svc.publish_event(&handle.id, req) {
                            Ok(_) => e_left -= 1,
                            Err(_) => rejected += 1,
                        }
                    } else {
                        let d = random_delta(&mut rng, &replica, &handle.id, &mut counter);
                        match svc.submit_delta(&handle.id, d, None) {
                            Ok(_) => d_left -= 1,
                            Err(_) => rejected += 1,
                        }
                    }
                    if rng.gen_bool(0.2) {
                        thread::yield_now();
                    }
                }
                (handle, replica, rejected)
            })
        })
        .collect();

    let mut finished = Vec::new();
    let mut rejected = 0;
    for w in workers {
        let (h, r, rej) = w.join().expect("worker panicked");
        rejected += rej;
        finished.push((h, r));
    }
    let mut replica_json = Vec::new();
    let mut event_orders = Vec::new();
    for (mut h, mut r) in finished {
        for m in h.drain() {
            r.apply(&m).expect("well-formed");
        }
        replica_json.push(r.canonical_json().expect("joined"));
        event_orders.push(r.events().iter().map(|e| e.event_id.clone()).collect());
    }
    let service_json = svc.snapshot(&sid).expect("session").0.status.canonical_json();
    ConvergenceOutcome {
        accepted_deltas: deltas,
        accepted_events: events,
        rejected,
        service_json,
        replica_json,
        event_orders,
        elapsed: start.elapsed(),
    }
}
