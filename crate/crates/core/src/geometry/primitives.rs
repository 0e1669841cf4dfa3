//! Catalog of closed, outward-oriented primitive meshes. Every primitive is
//! centered on the z axis with its base on z = 0.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::model::{Mesh, Vec3};

/// Names of the ten inspection figures, in catalog order.
pub const FIGURE_NAMES: [&str; 10] = [
    "pyramid",
    "cone",
    "sphere",
    "hemisphere",
    "cube",
    "cylinder",
    "octahedron",
    "torus",
    "house",
    "arrow",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveKind {
    /// Unit cube, x/y in [-0.5, 0.5].
    Cube,
    /// UV sphere of unit diameter. `rings` counts latitude bands pole to pole.
    Sphere {
        segments: u32,
        rings: u32,
    },
    /// Dome of unit radius on a flat disk. `rings` counts bands equator to pole.
    Hemisphere {
        segments: u32,
        rings: u32,
    },
    Cone {
        segments: u32,
        radius: f64,
    },
    Cylinder {
        segments: u32,
        radius: f64,
    },
    /// Square base of side 1, apex at height 1.
    Pyramid,
    /// Vertices on the ±axes around (0, 0, 0.5).
    Octahedron,
    /// Ring around z with tube diameter 1; `tube_ratio` = tube radius / ring radius.
    Torus {
        major_segments: u32,
        minor_segments: u32,
        tube_ratio: f64,
    },
    /// Box body with a gabled roof, ridge along x; total height 1.
    House {
        roof_height: f64,
    },
    /// Upward arrow: square shaft topped by a truncated pyramid head.
    Arrow {
        shaft_half_width: f64,
        shaft_height: f64,
        head_half_width: f64,
        tip_half_width: f64,
    },
}

impl PrimitiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::Cube => "cube",
            PrimitiveKind::Sphere { .. } => "sphere",
            PrimitiveKind::Hemisphere { .. } => "hemisphere",
            PrimitiveKind::Cone { .. } => "cone",
            PrimitiveKind::Cylinder { .. } => "cylinder",
            PrimitiveKind::Pyramid => "pyramid",
            PrimitiveKind::Octahedron => "octahedron",
            PrimitiveKind::Torus { .. } => "torus",
            PrimitiveKind::House { .. } => "house",
            PrimitiveKind::Arrow { .. } => "arrow",
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidParameter(m));
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            PrimitiveKind::Sphere { segments, rings } if segments < 3 || rings < 2 => bad(format!(
                "sphere needs segments >= 3 and rings >= 2, got {segments}x{rings}"
            )),
            PrimitiveKind::Hemisphere { segments, rings } if segments < 3 || rings < 1 => bad(format!(
                "hemisphere needs segments >= 3 and rings >= 1, got {segments}x{rings}"
            )),
            PrimitiveKind::Cone { segments, radius } | PrimitiveKind::Cylinder { segments, radius }
                if segments < 3 || !pos(radius) =>
            {
                bad(format!("{} needs segments >= 3 and radius > 0", self.name()))
            }
            PrimitiveKind::Torus {
                major_segments,
                minor_segments,
                tube_ratio,
            } if major_segments < 3 || minor_segments < 3 || !(pos(tube_ratio) && tube_ratio < 1.0) => {
                bad("torus needs segments >= 3 and tube_ratio in (0, 1)".into())
            }
            PrimitiveKind::House { roof_height } if !(pos(roof_height) && roof_height < 1.0) => {
                bad("house roof_height must be in (0, 1)".into())
            }
            PrimitiveKind::Arrow {
                shaft_half_width,
                shaft_height,
                head_half_width,
                tip_half_width,
            } if !(pos(shaft_half_width)
                && pos(tip_half_width)
                && shaft_half_width < head_half_width
                && tip_half_width < head_half_width
                && pos(shaft_height)
                && shaft_height < 1.0) =>
            {
                bad("arrow needs 0 < shaft, tip < head widths and shaft_height in (0, 1)".into())
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for PrimitiveKind {
    type Err = GeometryError;

    /// Catalog defaults by name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "cube" => PrimitiveKind::Cube,
            "sphere" => PrimitiveKind::Sphere {
                segments: 16,
                rings: 12,
            },
            "hemisphere" => PrimitiveKind::Hemisphere { segments: 16, rings: 6 },
            "cone" => PrimitiveKind::Cone {
                segments: 16,
                radius: 0.5,
            },
            "cylinder" => PrimitiveKind::Cylinder {
                segments: 16,
                radius: 0.5,
            },
            "pyramid" => PrimitiveKind::Pyramid,
            "octahedron" => PrimitiveKind::Octahedron,
            "torus" => PrimitiveKind::Torus {
                major_segments: 16,
                minor_segments: 8,
                tube_ratio: 0.4,
            },
            "house" => PrimitiveKind::House { roof_height: 0.4 },
            "arrow" => PrimitiveKind::Arrow {
                shaft_half_width: 0.15,
                shaft_height: 0.6,
                head_half_width: 0.4,
                tip_half_width: 0.05,
            },
            other => return Err(GeometryError::UnknownFigure(other.to_owned())),
        })
    }
}

pub fn make_primitive(kind: &PrimitiveKind) -> Result<Mesh, GeometryError> {
    kind.validate()?;
    let (v, t) = match *kind {
        PrimitiveKind::Cube => cube(),
        PrimitiveKind::Sphere { segments, rings } => {
            let mut profile = vec![(0.0, 0.0)];
            for i in 1..rings {
                let th = PI * i as f64 / rings as f64;
                profile.push((0.5 * th.sin(), 0.5 - 0.5 * th.cos()));
            }
            profile.push((0.0, 1.0));
            revolve(&profile, segments)
        }
        PrimitiveKind::Hemisphere { segments, rings } => {
            let mut profile = vec![(0.0, 0.0)];
            for j in 0..rings {
                let phi = FRAC_PI_2 * (1.0 - j as f64 / rings as f64);
                profile.push((phi.sin(), phi.cos()));
            }
            profile.push((0.0, 1.0));
            revolve(&profile, segments)
        }
        PrimitiveKind::Cone { segments, radius } => revolve(&[(0.0, 0.0), (radius, 0.0), (0.0, 1.0)], segments),
        PrimitiveKind::Cylinder { segments, radius } => {
            revolve(&[(0.0, 0.0), (radius, 0.0), (radius, 1.0), (0.0, 1.0)], segments)
        }
        PrimitiveKind::Pyramid => pyramid(),
        PrimitiveKind::Octahedron => octahedron(),
        PrimitiveKind::Torus {
            major_segments,
            minor_segments,
            tube_ratio,
        } => torus(major_segments, minor_segments, 0.5 / tube_ratio, 0.5),
        PrimitiveKind::House { roof_height } => house(1.0 - roof_height),
        PrimitiveKind::Arrow {
            shaft_half_width,
            shaft_height,
            head_half_width,
            tip_half_width,
        } => arrow(shaft_half_width, shaft_height, head_half_width, tip_half_width),
    };
    Ok(Mesh::from_parts(v, t))
}

type Parts = (Vec<Vec3>, Vec<[u32; 3]>);

fn push_quad(t: &mut Vec<[u32; 3]>, a: u32, b: u32, c: u32, d: u32) {
    t.push([a, b, c]);
    t.push([a, c, d]);
}

fn cube() -> Parts {
    let v = (0..8)
        .map(|i| Vec3::new((i & 1) as f64 - 0.5, ((i >> 1) & 1) as f64 - 0.5, ((i >> 2) & 1) as f64))
        .collect();
    let mut t = Vec::with_capacity(12);
    for [a, b, c, d] in [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ] {
        push_quad(&mut t, a, b, c, d);
    }
    (v, t)
}

/// Surface of revolution about z. `profile` runs bottom to top as
/// (radius, z); zero-radius entries become single pole vertices.
fn revolve(profile: &[(f64, f64)], segments: u32) -> Parts {
    let n = segments;
    let mut v = Vec::new();
    let mut rows: Vec<Vec<u32>> = Vec::new();
    for &(r, z) in profile {
        if r == 0.0 {
            let idx = v.len() as u32;
            v.push(Vec3::new(0.0, 0.0, z));
            rows.push(vec![idx; n as usize]);
        } else {
            let start = v.len() as u32;
            for s in 0..n {
                let a = TAU * s as f64 / n as f64;
                v.push(Vec3::new(r * a.cos(), r * a.sin(), z));
            }
            rows.push((start..start + n).collect());
        }
    }
    let mut t = Vec::new();
    for w in rows.windows(2) {
        let (lo, hi) = (&w[0], &w[1]);
        for s in 0..n as usize {
            let s1 = (s + 1) % n as usize;
            let (a, b, c, d) = (lo[s], lo[s1], hi[s1], hi[s]);
            if a != b {
                t.push([a, b, c]);
            }
            if c != d {
                t.push([a, c, d]);
            }
        }
    }
    (v, t)
}

fn pyramid() -> Parts {
    let v = vec![
        Vec3::new(-0.5, -0.5, 0.0),
        Vec3::new(0.5, -0.5, 0.0),
        Vec3::new(0.5, 0.5, 0.0),
        Vec3::new(-0.5, 0.5, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    let t = vec![[0, 3, 2], [0, 2, 1], [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
    (v, t)
}

fn octahedron() -> Parts {
    let c = Vec3::new(0.0, 0.0, 0.5);
    let v = vec![
        c + Vec3::new(0.5, 0.0, 0.0),
        c + Vec3::new(-0.5, 0.0, 0.0),
        c + Vec3::new(0.0, 0.5, 0.0),
        c + Vec3::new(0.0, -0.5, 0.0),
        c + Vec3::new(0.0, 0.0, 0.5),
        c + Vec3::new(0.0, 0.0, -0.5),
    ];
    let mut t = Vec::with_capacity(8);
    for sx in [0u32, 1] {
        for sy in [2u32, 3] {
            for sz in [4u32, 5] {
                let odd = (sx + (sy - 2) + (sz - 4)) % 2 == 1;
                t.push(if odd { [sx, sz, sy] } else { [sx, sy, sz] });
            }
        }
    }
    (v, t)
}

fn torus(major: u32, minor: u32, ring_radius: f64, tube_radius: f64) -> Parts {
    let mut v = Vec::with_capacity((major * minor) as usize);
    for i in 0..major {
        let u = TAU * i as f64 / major as f64;
        for j in 0..minor {
            let w = TAU * j as f64 / minor as f64;
            let r = ring_radius + tube_radius * w.cos();
            v.push(Vec3::new(r * u.cos(), r * u.sin(), 0.5 + tube_radius * w.sin()));
        }
    }
    let idx = |i: u32, j: u32| (i % major) * minor + (j % minor);
    let mut t = Vec::with_capacity((2 * major * minor) as usize);
    for i in 0..major {
        for j in 0..minor {
            push_quad(&mut t, idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
        }
    }
    (v, t)
}

fn house(body_height: f64) -> Parts {
    let mut v: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                (i & 1) as f64 - 0.5,
                ((i >> 1) & 1) as f64 - 0.5,
                ((i >> 2) & 1) as f64 * body_height,
            )
        })
        .collect();
    v.push(Vec3::new(-0.5, 0.0, 1.0));
    v.push(Vec3::new(0.5, 0.0, 1.0));
    let mut t = Vec::with_capacity(16);
    push_quad(&mut t, 0, 2, 3, 1);
    push_quad(&mut t, 0, 1, 5, 4);
    push_quad(&mut t, 2, 6, 7, 3);
    // Gable walls are convex pentagons; fan from a bottom corner.
    t.extend([[0, 4, 8], [0, 8, 6], [0, 6, 2]]);
    t.extend([[1, 3, 7], [1, 7, 9], [1, 9, 5]]);
    push_quad(&mut t, 4, 5, 9, 8);
    push_quad(&mut t, 8, 9, 7, 6);
    (v, t)
}

fn arrow(shaft: f64, shaft_height: f64, head: f64, tip: f64) -> Parts {
    let square = |h: f64, z: f64| {
        [
            Vec3::new(-h, -h, z),
            Vec3::new(h, -h, z),
            Vec3::new(h, h, z),
            Vec3::new(-h, h, z),
        ]
    };
    let mut v = Vec::with_capacity(16);
    v.extend(square(shaft, 0.0));
    v.extend(square(shaft, shaft_height));
    v.extend(square(head, shaft_height));
    v.extend(square(tip, 1.0));
    let mut t = Vec::with_capacity(28);
    push_quad(&mut t, 0, 3, 2, 1);
    for k in 0..4u32 {
        let k1 = (k + 1) % 4;
        push_quad(&mut t, k, k1, k1 + 4, k + 4);
        // Underside of the head, between the shaft and the head rim.
        push_quad(&mut t, k + 4, k1 + 4, k1 + 8, k + 8);
        push_quad(&mut t, k + 8, k1 + 8, k1 + 12, k + 12);
    }
    push_quad(&mut t, 12, 13, 14, 15);
    (v, t)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::geometry::{aabb, signed_volume};
    use crate::model::Transform;

    /// Every directed edge appears once and its reverse once.
    fn is_closed_oriented(m: &Mesh) -> bool {
        let mut count: HashMap<(u32, u32), i32> = HashMap::new();
        for t in &m.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                *count.entry((a, b)).or_default() += 1;
            }
        }
        count
            .iter()
            .all(|(&(a, b), &c)| c == 1 && count.get(&(b, a)) == Some(&1))
    }

    #[test]
    fn catalog_is_closed_and_outward() {
        for name in FIGURE_NAMES {
            let kind: PrimitiveKind = name.parse().unwrap();
            let m = make_primitive(&kind).unwrap();
            m.validate().unwrap();
            assert!(is_closed_oriented(&m), "{name} is not a closed oriented surface");
            assert!(signed_volume(&m) > 0.0, "{name} faces inward");
            let b = aabb(&m, &Transform::IDENTITY).unwrap();
            assert!(b.min.z.abs() < 1e-12, "{name} base at {}", b.min.z);
            assert!((b.max.z - 1.0).abs() < 1e-12, "{name} height {}", b.max.z);
            assert!(b.center().x.abs() < 1e-12 && b.center().y.abs() < 1e-12, "{name}");
            assert_eq!(make_primitive(&kind).unwrap(), m);
        }
    }

    #[test]
    fn canonical_counts() {
        let cube = make_primitive(&PrimitiveKind::Cube).unwrap();
        assert_eq!((cube.vertices.len(), cube.triangles.len()), (8, 12));
        let oct = make_primitive(&PrimitiveKind::Octahedron).unwrap();
        assert_eq!((oct.vertices.len(), oct.triangles.len()), (6, 8));
        for v in &oct.vertices {
            let d = *v - Vec3::new(0.0, 0.0, 0.5);
            let nonzero = d.to_array().iter().filter(|c| **c != 0.0).count();
            assert_eq!(nonzero, 1);
            assert_eq!(d.norm(), 0.5);
        }
    }

    #[test]
    fn uv_sphere_counts() {
        // 16 x 16: frozen from a constructive enumeration of poles, latitude
        // loops and band quads.
        let s = make_primitive(&PrimitiveKind::Sphere {
            segments: 16,
            rings: 16,
        })
        .unwrap();
        assert_eq!(s.vertices.len(), 242);
        assert_eq!(s.triangles.len(), 480);
        let s = make_primitive(&PrimitiveKind::Sphere { segments: 8, rings: 6 }).unwrap();
        assert_eq!((s.vertices.len(), s.triangles.len()), (42, 80));
    }

    #[test]
    fn signed_volumes_match_closed_forms() {
        let cube = make_primitive(&PrimitiveKind::Cube).unwrap();
        assert!((signed_volume(&cube) - 1.0).abs() < 1e-12);
        let pyr = make_primitive(&PrimitiveKind::Pyramid).unwrap();
        assert!((signed_volume(&pyr) - 1.0 / 3.0).abs() < 1e-12);
        let oct = make_primitive(&PrimitiveKind::Octahedron).unwrap();
        assert!((signed_volume(&oct) - 4.0 / 3.0 * 0.125).abs() < 1e-12);
        let house = make_primitive(&"house".parse().unwrap()).unwrap();
        assert!((signed_volume(&house) - (0.6 + 0.5 * 0.4)).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters() {
        for k in [
            PrimitiveKind::Sphere { segments: 2, rings: 4 },
            PrimitiveKind::Cone {
                segments: 8,
                radius: 0.0,
            },
            PrimitiveKind::Torus {
                major_segments: 8,
                minor_segments: 8,
                tube_ratio: 1.5,
            },
            PrimitiveKind::House { roof_height: 1.0 },
        ] {
            assert!(matches!(make_primitive(&k), Err(GeometryError::InvalidParameter(_))));
        }
        assert!(matches!(
            "blob".parse::<PrimitiveKind>(),
            Err(GeometryError::UnknownFigure(_))
        ));
    }
}
