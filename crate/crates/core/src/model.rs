//! Shared scene data model: sessions, node trees, meshes and the small
//! math carriers they are built from.
//!
//! Everything here is plain data. The only way to change a [`SessionStatus`]
//! is [`apply_node_delta`], which returns a new value and leaves the input
//! untouched on rejection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// A point or direction in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const ONE: Vec3 = Vec3::new(1.0, 1.0, 1.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or `None` for a zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn min_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn get(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::from(a))
    }
}

/// Rotation quaternion, stored and encoded as `[x, y, z, w]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    pub const fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Self { x, y, z, w }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let Some(a) = axis.normalized() else {
            return Quat::IDENTITY;
        };
        let (s, c) = (angle * 0.5).sin_cos();
        Quat::new(a.x * s, a.y * s, a.z * s, c)
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        Quat::new(self.x / n, self.y / n, self.z / n, self.w / n)
    }

    pub fn is_unit(self, tol: f64) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.z.is_finite()
            && self.w.is_finite()
            && (self.norm() - 1.0).abs() <= tol
    }

    pub fn conjugate(self) -> Quat {
        Quat::new(-self.x, -self.y, -self.z, self.w)
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z + self.w * o.w
    }

    /// Rotates `v` by this (unit) quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Row-major 3x3 rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quat { x, y, z, w } = self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - z * w),
                2.0 * (x * z + y * w),
            ],
            [
                2.0 * (x * y + z * w),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - x * w),
            ],
            [
                2.0 * (x * z - y * w),
                2.0 * (y * z + x * w),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Quaternion of a proper rotation matrix whose columns are the images
    /// of the x, y and z axes.
    pub fn from_basis(x_axis: Vec3, y_axis: Vec3, z_axis: Vec3) -> Quat {
        let m = [
            [x_axis.x, y_axis.x, z_axis.x],
            [x_axis.y, y_axis.y, z_axis.y],
            [x_axis.z, y_axis.z, z_axis.z],
        ];
        Quat::from_matrix(m)
    }

    /// Shepperd's method: pick the largest diagonal term for stability.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Quat {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
                0.25 * s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat::new(
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[2][1] - m[1][2]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat::new(
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
                (m[0][2] - m[2][0]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat::new(
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
                (m[1][0] - m[0][1]) / s,
            )
        };
        let q = q.normalized();
        // Canonical hemisphere so equal rotations encode equally.
        if q.w < 0.0 {
            Quat::new(-q.x, -q.y, -q.z, -q.w)
        } else {
            q
        }
    }

    /// Angle in radians of the relative rotation between two unit quaternions.
    pub fn angle_to(self, o: Quat) -> f64 {
        let d = self.conjugate() * o;
        let v = Vec3::new(d.x, d.y, d.z).norm();
        2.0 * v.atan2(d.w.abs())
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
        )
    }
}

impl Serialize for Quat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.z, self.w].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Quat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, z, w] = <[f64; 4]>::deserialize(d)?;
        Ok(Quat::new(x, y, z, w))
    }
}

/// Position, rotation and per-axis scale of a node. A point `p` in mesh
/// space maps to `position + rotation * (scale ⊙ p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub position: Vec3,
    pub rotation: Quat,
    pub scale: Vec3,
}

impl Default for Transform {
    fn default() -> Self {
        Transform::IDENTITY
    }
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        position: Vec3::ZERO,
        rotation: Quat::IDENTITY,
        scale: Vec3::ONE,
    };

    pub fn from_position(position: Vec3) -> Self {
        Self {
            position,
            ..Self::IDENTITY
        }
    }

    pub fn with_uniform_scale(mut self, s: f64) -> Self {
        self.scale = Vec3::splat(s);
        self
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.position + self.rotation.rotate(self.scale.mul_elem(p))
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.position.is_finite() {
            return Err("non-finite position".into());
        }
        if !self.rotation.is_unit(1e-9) {
            return Err(format!("rotation norm {} is not 1", self.rotation.norm()));
        }
        let s = self.scale;
        if !(s.is_finite() && s.x > 0.0 && s.y > 0.0 && s.z > 0.0) {
            return Err("scale components must be finite and > 0".into());
        }
        Ok(())
    }
}

/// Minimal triangle mesh: vertices, one normal per vertex, index triples.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    /// Mesh with zero normals.
    pub fn from_parts(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        let normals = vec![Vec3::ZERO; vertices.len()];
        Self {
            vertices,
            normals,
            triangles,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.normals.len() != self.vertices.len() {
            return Err(format!(
                "{} normals for {} vertices",
                self.normals.len(),
                self.vertices.len()
            ));
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.is_finite()) {
            return Err(format!("vertex {i} is not finite"));
        }
        for (i, n) in self.normals.iter().enumerate() {
            let len = n.norm();
            if !(n.is_finite() && (len == 0.0 || (len - 1.0).abs() <= 1e-6)) {
                return Err(format!("normal {i} is neither zero nor unit"));
            }
        }
        let nv = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= nv) {
                return Err(format!("triangle {t} indexes past {nv} vertices"));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(format!("triangle {t} repeats an index"));
            }
        }
        Ok(())
    }

    pub fn transformed_vertices(&self, t: &Transform) -> Vec<Vec3> {
        self.vertices.iter().map(|&v| t.apply(v)).collect()
    }

    /// Unique undirected edges as sorted index pairs, in first-seen order.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let e = (a.min(b), a.max(b));
                if seen.insert(e) {
                    out.push(e);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(s: impl Into<String>) -> Self {
        NodeId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(default)]
    pub mesh: Option<Mesh>,
    #[serde(default)]
    pub transform: Transform,
    #[serde(default)]
    pub parent: Option<NodeId>,
    #[serde(default)]
    pub children: Vec<NodeId>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Node {
    pub fn new(id: impl Into<NodeId>) -> Self {
        Self {
            id: id.into(),
            mesh: None,
            transform: Transform::IDENTITY,
            parent: None,
            children: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_parent(mut self, parent: impl Into<NodeId>) -> Self {
        self.parent = Some(parent.into());
        self
    }

    pub fn with_mesh(mut self, mesh: Mesh) -> Self {
        self.mesh = Some(mesh);
        self
    }

    pub fn with_transform(mut self, t: Transform) -> Self {
        self.transform = t;
        self
    }

    pub fn with_meta(mut self, k: impl Into<String>, v: impl Into<String>) -> Self {
        self.metadata.insert(k.into(), v.into());
        self
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

/// Replicated scene tree of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub root: NodeId,
    pub nodes: BTreeMap<NodeId, Node>,
    pub revision: u64,
}

impl SessionStatus {
    /// A status holding only an empty root node, at revision 0.
    pub fn with_root(root: impl Into<NodeId>) -> Self {
        let root = root.into();
        let mut nodes = BTreeMap::new();
        nodes.insert(root.clone(), Node::new(root.clone()));
        Self {
            root,
            nodes,
            revision: 0,
        }
    }

    pub fn get(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    /// Canonical JSON text; equal statuses always encode to equal bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("status is always serializable")
    }

    /// Ids of `id` and all of its descendants, depth-first.
    pub fn subtree(&self, id: &NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id.clone()];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if !seen.insert(n.clone()) {
                continue;
            }
            if let Some(node) = self.nodes.get(&n) {
                stack.extend(node.children.iter().rev().cloned());
            }
            out.push(n);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClientKind {
    ArView,
    Haptic,
    Observer,
}

impl ClientKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClientKind::ArView => "ar-view",
            ClientKind::Haptic => "haptic",
            ClientKind::Observer => "observer",
        }
    }
}

impl std::str::FromStr for ClientKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ar-view" => Ok(ClientKind::ArView),
            "haptic" => Ok(ClientKind::Haptic),
            "observer" => Ok(ClientKind::Observer),
            other => Err(format!("unknown client kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientDescriptor {
    pub id: String,
    pub kind: ClientKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub clients: Vec<ClientDescriptor>,
    pub status: SessionStatus,
}

impl Session {
    pub fn new(id: impl Into<String>, root: impl Into<NodeId>) -> Self {
        Self {
            id: id.into(),
            clients: Vec::new(),
            status: SessionStatus::with_root(root),
        }
    }

    /// Adds a client, keeping the list sorted by id. Duplicate ids are rejected.
    pub fn add_client(&mut self, c: ClientDescriptor) -> Result<(), ModelError> {
        match self.clients.binary_search_by(|x| x.id.cmp(&c.id)) {
            Ok(_) => Err(ModelError::DuplicateClient(c.id)),
            Err(pos) => {
                self.clients.insert(pos, c);
                Ok(())
            }
        }
    }

    pub fn remove_client(&mut self, id: &str) -> Option<ClientDescriptor> {
        let pos = self.clients.iter().position(|c| c.id == id)?;
        Some(self.clients.remove(pos))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Touch,
    Press,
    Release,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub event_id: String,
    pub session_id: String,
    pub source_client_id: String,
    pub target_node_id: NodeId,
    pub kind: EventKind,
    /// Milliseconds since service start.
    pub timestamp: u64,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
}

/// Tracked palm in the device frame. `timestamp` is in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandState {
    pub palm_position: Vec3,
    pub palm_normal: Vec3,
    pub valid: bool,
    pub timestamp: f64,
}

impl HandState {
    /// Palm facing down toward the array.
    pub fn at(palm_position: Vec3, timestamp: f64) -> Self {
        Self {
            palm_position,
            palm_normal: Vec3::new(0.0, 0.0, -1.0),
            valid: true,
            timestamp,
        }
    }

    pub fn lost(timestamp: f64) -> Self {
        Self {
            palm_position: Vec3::ZERO,
            palm_normal: Vec3::new(0.0, 0.0, -1.0),
            valid: false,
            timestamp,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        !self.valid || (self.palm_position.is_finite() && (self.palm_normal.norm() - 1.0).abs() <= 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown-target: {0}")]
    UnknownTarget(NodeId),
    #[error("unknown-parent: {0}")]
    UnknownParent(NodeId),
    #[error("duplicate-id: {0}")]
    DuplicateId(NodeId),
    #[error("root-removal: the root node cannot be removed")]
    RootRemoval,
    #[error("invalid-node: {0}: {1}")]
    InvalidNode(NodeId, String),
    #[error("duplicate-client: {0}")]
    DuplicateClient(String),
}

impl ModelError {
    /// Stable machine-readable code used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::UnknownTarget(_) => "unknown-target",
            ModelError::UnknownParent(_) => "unknown-parent",
            ModelError::DuplicateId(_) => "duplicate-id",
            ModelError::RootRemoval => "root-removal",
            ModelError::InvalidNode(..) => "invalid-node",
            ModelError::DuplicateClient(_) => "duplicate-client",
        }
    }
}

/// A structural change to a session tree.
///
/// `Add` requires an existing parent and an empty child list. `Update`
/// replaces mesh, transform and metadata, and reparents when `parent`
/// differs; the child list is owned by the tree and is ignored. `Remove`
/// deletes the whole subtree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum NodeDelta {
    Add { node: Node },
    Update { node: Node },
    Remove { id: NodeId },
}

impl NodeDelta {
    pub fn target(&self) -> &NodeId {
        match self {
            NodeDelta::Add { node } | NodeDelta::Update { node } => &node.id,
            NodeDelta::Remove { id } => id,
        }
    }
}

/// One broken invariant found by [`validate_status`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingRoot(NodeId),
    RootHasParent(NodeId),
    IdMismatch { key: NodeId, id: NodeId },
    DanglingParent(NodeId),
    DanglingChild { node: NodeId, child: NodeId },
    DuplicateChild { node: NodeId, child: NodeId },
    Cycle(Vec<NodeId>),
    Unreachable(NodeId),
    InvalidMesh(NodeId, String),
    InvalidTransform(NodeId, String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingRoot(id) => write!(f, "missing-root: {id}"),
            Violation::RootHasParent(id) => write!(f, "root-has-parent: {id}"),
            Violation::IdMismatch { key, id } => write!(f, "id-mismatch: {key} holds {id}"),
            Violation::DanglingParent(id) => write!(f, "dangling-parent: {id}"),
            Violation::DanglingChild { node, child } => {
                write!(f, "dangling-child: {node} lists {child}")
            }
            Violation::DuplicateChild { node, child } => {
                write!(f, "duplicate-child: {node} lists {child} twice")
            }
            Violation::Cycle(path) => {
                let names: Vec<&str> = path.iter().map(|n| n.as_str()).collect();
                write!(f, "cycle: {}", names.join("→"))
            }
            Violation::Unreachable(id) => write!(f, "unreachable: {id}"),
            Violation::InvalidMesh(id, why) => write!(f, "invalid-mesh: {id}: {why}"),
            Violation::InvalidTransform(id, why) => write!(f, "invalid-transform: {id}: {why}"),
        }
    }
}

/// Checks every structural invariant of a session tree. Returns an empty
/// list iff the status is well formed.
pub fn validate_status(status: &SessionStatus) -> Vec<Violation> {
    let mut out = Vec::new();
    let nodes = &status.nodes;
    let mut dangling: BTreeSet<NodeId> = BTreeSet::new();

    match nodes.get(&status.root) {
        None => out.push(Violation::MissingRoot(status.root.clone())),
        Some(root) if root.parent.is_some() => out.push(Violation::RootHasParent(status.root.clone())),
        Some(_) => {}
    }

    for (key, node) in nodes {
        if &node.id != key {
            out.push(Violation::IdMismatch {
                key: key.clone(),
                id: node.id.clone(),
            });
        }
        if let Some(p) = &node.parent {
            let listed = nodes.get(p).is_some_and(|pn| pn.children.contains(key));
            if !listed {
                dangling.insert(key.clone());
                out.push(Violation::DanglingParent(key.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for c in &node.children {
            if !seen.insert(c) {
                out.push(Violation::DuplicateChild {
                    node: key.clone(),
                    child: c.clone(),
                });
                continue;
            }
            let back = nodes.get(c).is_some_and(|cn| cn.parent.as_ref() == Some(key));
            if !back {
                out.push(Violation::DanglingChild {
                    node: key.clone(),
                    child: c.clone(),
                });
            }
        }
        if let Some(m) = &node.mesh {
            if let Err(e) = m.validate() {
                out.push(Violation::InvalidMesh(key.clone(), e));
            }
        }
        if let Err(e) = node.transform.validate() {
            out.push(Violation::InvalidTransform(key.clone(), e));
        }
    }

    // Parent-pointer cycles, each reported once starting from its smallest id.
    let mut in_cycle: BTreeSet<NodeId> = BTreeSet::new();
    for start in nodes.keys() {
        if in_cycle.contains(start) {
            continue;
        }
        let mut path: Vec<NodeId> = vec![start.clone()];
        let mut cur = start.clone();
        while let Some(p) = nodes.get(&cur).and_then(|n| n.parent.clone()) {
            if let Some(pos) = path.iter().position(|x| *x == p) {
                let cyc = &path[pos..];
                if !cyc.iter().any(|n| in_cycle.contains(n)) {
                    let min = cyc.iter().enumerate().min_by(|a, b| a.1.cmp(b.1)).unwrap().0;
                    let mut ring: Vec<NodeId> = cyc[min..].iter().chain(cyc[..min].iter()).cloned().collect();
                    in_cycle.extend(ring.iter().cloned());
                    ring.push(ring[0].clone());
                    out.push(Violation::Cycle(ring));
                }
                break;
            }
            if !nodes.contains_key(&p) || path.len() > nodes.len() {
                break;
            }
            path.push(p.clone());
            cur = p;
        }
    }

    let reachable: BTreeSet<NodeId> = if nodes.contains_key(&status.root) {
        status.subtree(&status.root).into_iter().collect()
    } else {
        BTreeSet::new()
    };
    // A node cut off by an already reported broken link or cycle is not
    // reported again.
    let explained = |start: &NodeId| {
        let mut cur = Some(start.clone());
        let mut steps = 0;
        while let Some(id) = cur {
            if dangling.contains(&id) || in_cycle.contains(&id) {
                return true;
            }
            steps += 1;
            if steps > nodes.len() {
                return false;
            }
            cur = nodes.get(&id).and_then(|n| n.parent.clone());
        }
        false
    };
    for key in nodes.keys() {
        if !reachable.contains(key) && !explained(key) {
            out.push(Violation::Unreachable(key.clone()));
        }
    }
    out
}

fn check_node_payload(node: &Node) -> Result<(), ModelError> {
    if let Some(m) = &node.mesh {
        m.validate().map_err(|e| ModelError::InvalidNode(node.id.clone(), e))?;
    }
    node.transform
        .validate()
        .map_err(|e| ModelError::InvalidNode(node.id.clone(), e))?;
    if node.id.0.is_empty() {
        return Err(ModelError::InvalidNode(node.id.clone(), "empty id".into()));
    }
    Ok(())
}

/// Applies one delta, producing a new status at `revision + 1`.
pub fn apply_node_delta(status: &SessionStatus, delta: &NodeDelta) -> Result<SessionStatus, ModelError> {
    let mut next = status.clone();
    match delta {
        NodeDelta::Add { node } => {
            if next.nodes.contains_key(&node.id) {
                return Err(ModelError::DuplicateId(node.id.clone()));
            }
            let parent = node
                .parent
                .clone()
                .ok_or_else(|| ModelError::InvalidNode(node.id.clone(), "added node needs a parent".into()))?;
            if !next.nodes.contains_key(&parent) {
                return Err(ModelError::UnknownParent(parent));
            }
            if !node.children.is_empty() {
                return Err(ModelError::InvalidNode(
                    node.id.clone(),
                    "added node must not list children".into(),
                ));
            }
            check_node_payload(node)?;
            next.nodes
                .get_mut(&parent)
                .expect("parent checked above")
                .children
                .push(node.id.clone());
            next.nodes.insert(node.id.clone(), node.clone());
        }
        NodeDelta::Update { node } => {
            let current = next
                .nodes
                .get(&node.id)
                .ok_or_else(|| ModelError::UnknownTarget(node.id.clone()))?
                .clone();
            check_node_payload(node)?;
            if node.parent != current.parent {
                let Some(new_parent) = node.parent.clone() else {
                    return Err(ModelError::InvalidNode(
                        node.id.clone(),
                        "only the root may be parentless".into(),
                    ));
                };
                if node.id == next.root {
                    return Err(ModelError::InvalidNode(
                        node.id.clone(),
                        "the root cannot be reparented".into(),
                    ));
                }
                if !next.nodes.contains_key(&new_parent) {
                    return Err(ModelError::UnknownParent(new_parent));
                }
                if next.subtree(&node.id).contains(&new_parent) {
                    return Err(ModelError::InvalidNode(
                        node.id.clone(),
                        format!("reparenting under {new_parent} would form a cycle"),
                    ));
                }
                if let Some(old) = &current.parent {
                    if let Some(op) = next.nodes.get_mut(old) {
                        op.children.retain(|c| c != &node.id);
                    }
                }
                next.nodes
                    .get_mut(&new_parent)
                    .expect("checked above")
                    .children
                    .push(node.id.clone());
            }
            let slot = next.nodes.get_mut(&node.id).expect("checked above");
            slot.mesh = node.mesh.clone();
            slot.transform = node.transform;
            slot.metadata = node.metadata.clone();
            slot.parent = node.parent.clone();
        }
        NodeDelta::Remove { id } => {
            if *id == next.root {
                return Err(ModelError::RootRemoval);
            }
            let parent = next
                .nodes
                .get(id)
                .ok_or_else(|| ModelError::UnknownTarget(id.clone()))?
                .parent
                .clone();
            for n in next.subtree(id) {
                next.nodes.remove(&n);
            }
            if let Some(p) = parent {
                if let Some(pn) = next.nodes.get_mut(&p) {
                    pn.children.retain(|c| c != id);
                }
            }
        }
    }
    next.revision = status.revision + 1;
    Ok(next)
}
