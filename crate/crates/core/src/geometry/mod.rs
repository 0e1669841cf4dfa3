//! Mesh measurement and sizing: vertex deduplication, centroids, bounds,
//! and the shrink-to-fit and resize-to-height placement rules.

mod obj;
mod primitives;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Mesh, Node, Transform, Vec3};

pub use obj::{load_obj, save_obj, ObjError};
pub use primitives::{make_primitive, PrimitiveKind, FIGURE_NAMES};

/// Merge distance used when no explicit tolerance is given.
pub const DEFAULT_DEDUP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("empty-mesh")]
    EmptyMesh,
    #[error("degenerate-mesh: zero extent on every axis")]
    DegenerateMesh,
    #[error("zero-height mesh")]
    ZeroHeight,
    #[error("degenerate volume")]
    DegenerateVolume,
    #[error("invalid-parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown-figure: {0}")]
    UnknownFigure(String),
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// Bounds of a point set, `None` when empty.
    pub fn of_points<I: IntoIterator<Item = Vec3>>(pts: I) -> Option<Self> {
        let mut it = pts.into_iter();
        let first = it.next()?;
        Some(it.fold(Aabb::new(first, first), |b, p| {
            Aabb::new(b.min.min_elem(p), b.max.max_elem(p))
        }))
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite()
            && self.max.is_finite()
            && self.min.x <= self.max.x
            && self.min.y <= self.max.y
            && self.min.z <= self.max.z
    }

    /// Strictly positive extent on every axis.
    pub fn is_non_degenerate(&self) -> bool {
        let e = self.extent();
        self.is_valid() && e.x > 0.0 && e.y > 0.0 && e.z > 0.0
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        p.x >= self.min.x - tol
            && p.x <= self.max.x + tol
            && p.y >= self.min.y - tol
            && p.y <= self.max.y + tol
            && p.z >= self.min.z - tol
            && p.z <= self.max.z + tol
    }

    pub fn contains_box(&self, other: &Aabb, tol: f64) -> bool {
        self.contains(other.min, tol) && self.contains(other.max, tol)
    }
}

/// Greedy merge in input order: each vertex joins the earliest kept vertex
/// within `eps` (Euclidean), otherwise it is kept. Triangles are remapped and
/// those that collapse onto a repeated index are dropped. Kept vertices keep
/// their own normal.
pub fn dedup_vertices(mesh: &Mesh, eps: f64) -> Mesh {
    let eps = eps.max(0.0);
    let mut kept: Vec<usize> = Vec::new();
    let mut remap: Vec<u32> = Vec::with_capacity(mesh.vertices.len());
    let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();

    let key = |p: Vec3| -> [i64; 3] {
        if eps > 0.0 {
            [
                (p.x / eps).floor() as i64,
                (p.y / eps).floor() as i64,
                (p.z / eps).floor() as i64,
            ]
        } else {
            // +0.0 and -0.0 must land in the same bucket.
            let b = |v: f64| (v + 0.0).to_bits() as i64;
            [b(p.x), b(p.y), b(p.z)]
        }
    };

    for (i, &p) in mesh.vertices.iter().enumerate() {
        let k = key(p);
        let mut best: Option<u32> = None;
        let span: &[i64] = if eps > 0.0 { &[-1, 0, 1] } else { &[0] };
        for &dx in span {
            for &dy in span {
                for &dz in span {
                    let nk = [
                        k[0].saturating_add(dx),
                        k[1].saturating_add(dy),
                        k[2].saturating_add(dz),
                    ];
                    if let Some(list) = buckets.get(&nk) {
                        for &slot in list {
                            let q = mesh.vertices[kept[slot as usize]];
                            if p.distance(q) <= eps && best.is_none_or(|b| slot < b) {
                                best = Some(slot);
                            }
                        }
                    }
                }
            }
        }
        let slot = match best {
            Some(s) => s,
            None => {
                let s = kept.len() as u32;
                kept.push(i);
                buckets.entry(k).or_default().push(s);
                s
            }
        };
        remap.push(slot);
    }

    let vertices = kept.iter().map(|&i| mesh.vertices[i]).collect();
    let normals = kept
        .iter()
        .map(|&i| mesh.normals.get(i).copied().unwrap_or(Vec3::ZERO))
        .collect();
    let triangles = mesh
        .triangles
        .iter()
        .map(|t| t.map(|i| remap[i as usize]))
        .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
        .collect();
    Mesh {
        vertices,
        normals,
        triangles,
    }
}

/// Mean of the deduplicated vertices.
pub fn centroid(mesh: &Mesh) -> Result<Vec3, GeometryError> {
    let d = dedup_vertices(mesh, DEFAULT_DEDUP_EPS);
    if d.vertices.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    let n = d.vertices.len() as f64;
    let sum = d.vertices.iter().fold(Vec3::ZERO, |a, &v| a + v);
    Ok(Vec3::new(sum.x / n, sum.y / n, sum.z / n))
}

pub fn aabb(mesh: &Mesh, transform: &Transform) -> Result<Aabb, GeometryError> {
    Aabb::of_points(mesh.vertices.iter().map(|&v| transform.apply(v))).ok_or(GeometryError::EmptyMesh)
}

/// Scales `p` about `center` by `factor`, as a change to a transform.
fn scale_about(t: &Transform, center: Vec3, factor: f64) -> Transform {
    Transform {
        position: center + (t.position - center) * factor,
        rotation: t.rotation,
        scale: t.scale * factor,
    }
}

/// Shrinks (never enlarges) `transform` uniformly until the mesh fits inside
/// `volume`, then centers it in x/y and rests it on `volume.min.z`.
pub fn fit_to_volume(mesh: &Mesh, transform: &Transform, volume: &Aabb) -> Result<Transform, GeometryError> {
    if !volume.is_non_degenerate() {
        return Err(GeometryError::DegenerateVolume);
    }
    let b = aabb(mesh, transform)?;
    let e = b.extent();
    let v = volume.extent();
    if e.x <= 0.0 && e.y <= 0.0 && e.z <= 0.0 {
        return Err(GeometryError::DegenerateMesh);
    }
    let mut factor: f64 = 1.0;
    for axis in 0..3 {
        let ea = e.get(axis);
        if ea > 0.0 {
            factor = factor.min(v.get(axis) / ea);
        }
    }
    let anchor = Vec3::new(b.center().x, b.center().y, b.min.z);
    let scaled = scale_about(transform, anchor, factor);
    let target = Vec3::new(volume.center().x, volume.center().y, volume.min.z);
    let mut out = Transform {
        position: scaled.position + (target - anchor),
        ..scaled
    };
    // Rounding can leave the box a few ulps outside the volume; nudge it back,
    // shrinking slightly when the extent itself rounded past the volume.
    for attempt in 0..16 {
        let nb = aabb(mesh, &out)?;
        if volume.contains_box(&nb, 0.0) {
            break;
        }
        let ne = nb.extent();
        let nb = if attempt >= 2 || (0..3).any(|axis| ne.get(axis) >= v.get(axis) && ne.get(axis) > 0.0) {
            let anchor = Vec3::new(nb.center().x, nb.center().y, nb.min.z);
            out = scale_about(&out, anchor, 1.0 - 4.0 * f64::EPSILON);
            aabb(mesh, &out)?
        } else {
            nb
        };
        // A shift below half an ulp of the position would round away, so step
        // at least one ulp in its direction.
        let moved = [0, 1, 2].map(|axis| {
            let x = out.position.get(axis);
            let (lo, hi) = (nb.min.get(axis), nb.max.get(axis));
            let (vlo, vhi) = (volume.min.get(axis), volume.max.get(axis));
            if lo < vlo {
                (x + (vlo - lo)).max(x.next_up())
            } else if hi > vhi {
                (x + (vhi - hi)).min(x.next_down())
            } else {
                x
            }
        });
        out.position = Vec3::new(moved[0], moved[1], moved[2]);
    }
    Ok(out)
}

/// Uniformly scales the node so its world z-extent spans exactly
/// `[ground_z, ground_z + target_height]`, keeping the x/y center fixed.
pub fn resize_to_height(node: &Node, target_height: f64, ground_z: f64) -> Result<Transform, GeometryError> {
    let mesh = node.mesh.as_ref().ok_or(GeometryError::EmptyMesh)?;
    if !(target_height > 0.0 && target_height.is_finite()) {
        return Err(GeometryError::InvalidParameter(format!(
            "target height {target_height} must be positive"
        )));
    }
    let b = aabb(mesh, &node.transform)?;
    let h = b.extent().z;
    if h <= 0.0 {
        return Err(GeometryError::ZeroHeight);
    }
    let factor = target_height / h;
    let anchor = Vec3::new(b.center().x, b.center().y, b.min.z);
    let scaled = scale_about(&node.transform, anchor, factor);
    Ok(Transform {
        position: scaled.position + Vec3::new(0.0, 0.0, ground_z - b.min.z),
        ..scaled
    })
}

/// Signed enclosed volume by the divergence theorem; positive for closed
/// meshes with outward-facing (counter-clockwise) triangles.
pub fn signed_volume(mesh: &Mesh) -> f64 {
    mesh.triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| mesh.vertices[i as usize]);
            a.dot(b.cross(c)) / 6.0
        })
        .sum()
}
