use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use harp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(harp_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn v(x: f64, y: f64, z: f64) -> HarpVec3 {
    HarpVec3 { x, y, z }
}

fn primitive(name: &str) -> *mut HarpMesh {
    let name = CString::new(name).unwrap();
    let mut mesh = ptr::null_mut();
    assert_eq!(unsafe { harp_mesh_primitive(name.as_ptr(), &mut mesh) }, HarpStatus::Ok);
    mesh
}

#[test]
fn obj_mesh_counts_and_centroid() {
    let obj = CString::new("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 1 4 3\nf 2 3 4\n").unwrap();
    let mut mesh = ptr::null_mut();
    unsafe {
        assert_eq!(harp_mesh_from_obj(obj.as_ptr(), &mut mesh), HarpStatus::Ok);
        let (mut nv, mut nt) = (0, 0);
        assert_eq!(harp_mesh_counts(mesh, &mut nv, &mut nt), HarpStatus::Ok);
        assert_eq!((nv, nt), (4, 4));
        let mut c = HarpVec3::default();
        assert_eq!(harp_mesh_centroid(mesh, &mut c), HarpStatus::Ok);
        assert_eq!(c, v(0.25, 0.25, 0.25));
        harp_mesh_free(mesh);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let bad = CString::new("v 0 0\n").unwrap();
    let mut mesh = ptr::null_mut();
    unsafe {
        assert_eq!(harp_mesh_from_obj(bad.as_ptr(), &mut mesh), HarpStatus::Parse);
        assert!(last_error().starts_with("parse-error"), "{}", last_error());
        assert!(mesh.is_null());

        let empty = CString::new("# nothing\n").unwrap();
        assert_eq!(harp_mesh_from_obj(empty.as_ptr(), &mut mesh), HarpStatus::Ok);
        let mut c = HarpVec3::default();
        assert_eq!(harp_mesh_centroid(mesh, &mut c), HarpStatus::EmptyMesh);
        harp_mesh_free(mesh);

        assert_eq!(harp_mesh_from_obj(ptr::null(), &mut mesh), HarpStatus::NullPointer);
        let unknown = CString::new("dodecahedron").unwrap();
        assert_eq!(
            harp_mesh_primitive(unknown.as_ptr(), &mut mesh),
            HarpStatus::InvalidArgument
        );

        let mut f = HarpFrame {
            origin: v(0.0, 0.0, 0.0),
            rotation: [0.0; 4],
        };
        let s = harp_frame_from_anchors(v(0.0, 0.0, 0.0), v(1.0, 1.0, 1.0), v(2.0, 2.0, 2.0), &mut f);
        assert_eq!(s, HarpStatus::CollinearAnchors);
        let mut p = HarpVec3::default();
        assert_eq!(
            harp_world_to_device(&f, v(1.0, 0.0, 0.0), &mut p),
            HarpStatus::InvalidArgument
        );
    }
    let cube = primitive("cube");
    unsafe {
        assert_eq!(last_error(), "");
        harp_mesh_free(cube);
        harp_mesh_free(ptr::null_mut());
        harp_grid_free(ptr::null_mut());
    }
}

#[test]
fn voxelize_slice_and_schedule() {
    let cube = primitive("cube");
    let t = HarpTransform {
        position: v(0.0, 0.0, 0.17),
        rotation: [0.0, 0.0, 0.0, 1.0],
        scale: v(0.1, 0.1, 0.1),
    };
    let mut grid = ptr::null_mut();
    unsafe {
        assert_eq!(
            harp_voxelize(cube, &t, 5, 5, 5, HarpVoxelMode::Edges, &mut grid),
            HarpStatus::Ok
        );
        let (mut dims, mut origin, mut cell) = ([0usize; 3], HarpVec3::default(), HarpVec3::default());
        assert_eq!(
            harp_grid_spec(grid, dims.as_mut_ptr(), &mut origin, &mut cell),
            HarpStatus::Ok
        );
        assert_eq!(dims, [5, 5, 5]);
        assert!((origin.z - 0.17).abs() < 1e-12 && (cell.z - 0.02).abs() < 1e-12);

        let mut hit = false;
        assert_eq!(harp_grid_get(grid, 0, 0, 2, &mut hit), HarpStatus::Ok);
        assert!(hit);
        assert_eq!(harp_grid_get(grid, 2, 2, 2, &mut hit), HarpStatus::Ok);
        assert!(!hit);
        assert_eq!(harp_grid_get(grid, 5, 0, 0, &mut hit), HarpStatus::OutOfGrid);

        let palm_z = origin.z + 2.5 * cell.z;
        let mut len = 0;
        let mut small = [HarpPoint::default(); 2];
        let s = harp_grid_slice(grid, palm_z, 0.8, small.as_mut_ptr(), small.len(), &mut len);
        assert_eq!(s, HarpStatus::BufferTooSmall);
        // Four vertical edges plus one diagonal per side face.
        assert_eq!(len, 8);
        let mut slice = vec![HarpPoint::default(); len];
        assert_eq!(
            harp_grid_slice(grid, palm_z, 0.8, slice.as_mut_ptr(), len, &mut len),
            HarpStatus::Ok
        );
        assert!(slice
            .iter()
            .all(|p| p.intensity == 0.8 && (p.position.z - palm_z).abs() < 1e-12));

        let mut seen = vec![0; len];
        for frame in 0..2 {
            let mut shown = [HarpPoint::default(); 4];
            let mut n = 0;
            assert_eq!(
                harp_schedule(slice.as_ptr(), len, 4, frame, shown.as_mut_ptr(), 4, &mut n),
                HarpStatus::Ok
            );
            assert_eq!(n, 4);
            for p in &shown[..n] {
                seen[slice.iter().position(|q| q == p).unwrap()] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        let mut n = 0;
        assert_eq!(
            harp_schedule(slice.as_ptr(), len, 0, 0, ptr::null_mut(), 0, &mut n),
            HarpStatus::InvalidArgument
        );
        harp_grid_free(grid);
        harp_mesh_free(cube);
    }
}

#[test]
fn frame_roundtrip() {
    let mut f = HarpFrame {
        origin: v(0.0, 0.0, 0.0),
        rotation: [0.0; 4],
    };
    unsafe {
        let s = harp_frame_from_anchors(v(1.0, 2.0, 0.5), v(1.0, 2.2, 0.5), v(0.8, 2.0, 0.5), &mut f);
        assert_eq!(s, HarpStatus::Ok);
        let (mut local, mut back) = (HarpVec3::default(), HarpVec3::default());
        assert_eq!(harp_world_to_device(&f, v(1.0, 2.2, 0.5), &mut local), HarpStatus::Ok);
        assert!((local.x - 0.2).abs() < 1e-12 && local.y.abs() < 1e-12 && local.z.abs() < 1e-12);
        assert_eq!(harp_device_to_world(&f, local, &mut back), HarpStatus::Ok);
        assert!((back.y - 2.2).abs() < 1e-12);
    }
}

/// Builds the static library into its own target directory so the build
/// does not contend with the running test harness.
fn static_lib() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = dir.join("../../target/c-smoke");
    let status = Command::new(env!("CARGO"))
        .args(["build", "--quiet", "-p", "harp-ffi", "--lib", "--target-dir"])
        .arg(&target)
        .current_dir(&dir)
        .status()
        .unwrap();
    assert!(status.success(), "building the static library failed");
    target.join("debug/libharp_ffi.a")
}

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = static_lib();
    assert!(lib.exists(), "{} missing", lib.display());
    let exe = lib.with_file_name("harp_ffi_smoke");
    let status = Command::new(&cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

fn which_cc() -> Result<String, ()> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().map(|_| cc).map_err(|_| ())
}
