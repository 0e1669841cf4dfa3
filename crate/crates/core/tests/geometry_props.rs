mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use harp_core::geometry::{
    aabb, centroid, dedup_vertices, fit_to_volume, load_obj, make_primitive, resize_to_height, save_obj, Aabb,
    PrimitiveKind, DEFAULT_DEDUP_EPS,
};
use harp_core::model::{Mesh, Node, Quat, Transform, Vec3};
use harp_core::render::schedule;

use common::{check_fair, random_mesh, tagged_points};

fn primitive() -> impl Strategy<Value = PrimitiveKind> {
    prop_oneof![
        Just(PrimitiveKind::Cube),
        Just(PrimitiveKind::Pyramid),
        Just(PrimitiveKind::Octahedron),
        (3u32..24, 2u32..12).prop_map(|(segments, rings)| PrimitiveKind::Sphere { segments, rings }),
        (3u32..24, 0.1f64..1.0).prop_map(|(segments, radius)| PrimitiveKind::Cylinder { segments, radius }),
        (3u32..24, 0.1f64..1.0).prop_map(|(segments, radius)| PrimitiveKind::Cone { segments, radius }),
        (0.1f64..0.9).prop_map(|roof_height| PrimitiveKind::House { roof_height }),
    ]
}

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn transform() -> impl Strategy<Value = Transform> {
    (vec3(1.0), vec3(1.0), -3.0f64..3.0, 0.01f64..5.0).prop_map(|(position, axis, angle, s)| Transform {
        position,
        rotation: Quat::from_axis_angle(axis.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0)), angle),
        scale: Vec3::splat(s),
    })
}

fn volume() -> impl Strategy<Value = Aabb> {
    (vec3(1.0), 0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0)
        .prop_map(|(min, ex, ey, ez)| Aabb::new(min, min + Vec3::new(ex, ey, ez)))
}

proptest! {
    #[test]
    fn dedup_is_idempotent(seed in any::<u64>()) {
        let mesh = random_mesh(&mut ChaCha8Rng::seed_from_u64(seed), DEFAULT_DEDUP_EPS);
        let once = dedup_vertices(&mesh, DEFAULT_DEDUP_EPS);
        prop_assert_eq!(dedup_vertices(&once, DEFAULT_DEDUP_EPS), once.clone());
        prop_assert!(once.vertices.len() <= mesh.vertices.len());
        prop_assert!(once.triangles.iter().all(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2]));
    }

    #[test]
    fn centroid_follows_translation(kind in primitive(), shift in vec3(10.0)) {
        let mesh = make_primitive(&kind).unwrap();
        let c = centroid(&mesh).unwrap();
        let moved = Mesh { vertices: mesh.vertices.iter().map(|&v| v + shift).collect(), ..mesh.clone() };
        let d = centroid(&moved).unwrap() - (c + shift);
        prop_assert!(d.norm() < 1e-9, "off by {d:?}");
    }

    #[test]
    fn fit_to_volume_contains_and_never_enlarges(kind in primitive(), t in transform(), vol in volume()) {
        let mesh = make_primitive(&kind).unwrap();
        let fitted = fit_to_volume(&mesh, &t, &vol).unwrap();
        let b = aabb(&mesh, &fitted).unwrap();
        prop_assert!(vol.contains_box(&b, 0.0), "{b:?} not in {vol:?}");
        prop_assert!(fitted.scale.x <= t.scale.x * (1.0 + 1e-12));
        prop_assert!((b.min.z - vol.min.z).abs() < 1e-12);
    }

    #[test]
    fn resize_spans_ground_to_target(kind in primitive(), t in transform(), h in 0.001f64..0.5, ground in -1.0f64..1.0) {
        let node = Node::new("fig").with_mesh(make_primitive(&kind).unwrap()).with_transform(t);
        let out = resize_to_height(&node, h, ground).unwrap();
        let b = aabb(node.mesh.as_ref().unwrap(), &out).unwrap();
        prop_assert!((b.min.z - ground).abs() < 1e-12);
        prop_assert!((b.extent().z - h).abs() < 1e-12);
        let before = aabb(node.mesh.as_ref().unwrap(), &t).unwrap().center();
        prop_assert!((b.center().x - before.x).abs() < 1e-9 && (b.center().y - before.y).abs() < 1e-9);
    }

    #[test]
    fn obj_roundtrip_is_exact(kind in primitive(), t in transform()) {
        let base = make_primitive(&kind).unwrap();
        let mesh = Mesh { vertices: base.transformed_vertices(&t), ..base };
        let back = load_obj(&save_obj(&mesh)).unwrap();
        prop_assert_eq!(back, mesh);
    }

    #[test]
    fn scheduler_is_fair(n in 0usize..300, k in 1usize..12, extra in 0u64..20) {
        let pts = tagged_points(n);
        let g = n.div_ceil(k).max(1) as u64;
        let frames: Vec<Vec<usize>> = (0..2 * g + extra)
            .map(|f| {
                schedule(&pts, k, f)
                    .points
                    .iter()
                    .map(|p| pts.iter().position(|q| q == p).unwrap())
                    .collect()
            })
            .collect();
        if let Err(e) = check_fair(&frames, n, k) {
            prop_assert!(false, "{}", e);
        }
    }
}
