//! C ABI over the haptic rendering core.
//!
//! Every function returns a [`HarpStatus`]. On failure a message is kept per
//! thread and can be read with [`harp_last_error`]. Meshes and voxel grids are
//! opaque handles owned by the caller and released with their `_free`
//! function. No function unwinds across the boundary: panics are caught and
//! reported as [`HarpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use harp_core::align::{self, AlignError, RigidFrame};
use harp_core::geometry::{self, GeometryError, PrimitiveKind};
use harp_core::model::{HandState, Mesh, Quat, Transform, Vec3};
use harp_core::render::{self, GridSpec, HapticPoint, RenderError, VoxelGrid, VoxelMode};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    EmptyMesh = 4,
    OutOfGrid = 5,
    CollinearAnchors = 6,
    BufferTooSmall = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarpVoxelMode {
    Vertices = 0,
    Edges = 1,
    Interior = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HarpVec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Rotation is a unit quaternion `[x, y, z, w]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarpTransform {
    pub position: HarpVec3,
    pub rotation: [f64; 4],
    pub scale: HarpVec3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HarpPoint {
    pub position: HarpVec3,
    pub intensity: f64,
}

/// Device frame in world coordinates.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarpFrame {
    pub origin: HarpVec3,
    pub rotation: [f64; 4],
}

/// Opaque triangle mesh.
pub struct HarpMesh(Mesh);

/// Opaque voxel occupancy grid.
pub struct HarpVoxelGrid(VoxelGrid);

impl From<HarpVec3> for Vec3 {
    fn from(v: HarpVec3) -> Self {
        Vec3::new(v.x, v.y, v.z)
    }
}

impl From<Vec3> for HarpVec3 {
    fn from(v: Vec3) -> Self {
        HarpVec3 { x: v.x, y: v.y, z: v.z }
    }
}

impl From<HarpPoint> for HapticPoint {
    fn from(p: HarpPoint) -> Self {
        HapticPoint {
            position: p.position.into(),
            intensity: p.intensity,
        }
    }
}

impl From<HapticPoint> for HarpPoint {
    fn from(p: HapticPoint) -> Self {
        HarpPoint {
            position: p.position.into(),
            intensity: p.intensity,
        }
    }
}

impl From<&HarpTransform> for Transform {
    fn from(t: &HarpTransform) -> Self {
        let [x, y, z, w] = t.rotation;
        Transform {
            position: t.position.into(),
            rotation: Quat::new(x, y, z, w),
            scale: t.scale.into(),
        }
    }
}

impl From<RigidFrame> for HarpFrame {
    fn from(f: RigidFrame) -> Self {
        let q = f.rotation;
        HarpFrame {
            origin: f.origin.into(),
            rotation: [q.x, q.y, q.z, q.w],
        }
    }
}

impl From<&HarpFrame> for RigidFrame {
    fn from(f: &HarpFrame) -> Self {
        let [x, y, z, w] = f.rotation;
        RigidFrame::new(f.origin.into(), Quat::new(x, y, z, w))
    }
}

impl From<HarpVoxelMode> for VoxelMode {
    fn from(m: HarpVoxelMode) -> Self {
        match m {
            HarpVoxelMode::Vertices => VoxelMode::Vertices,
            HarpVoxelMode::Edges => VoxelMode::Edges,
            HarpVoxelMode::Interior => VoxelMode::Interior,
        }
    }
}

struct Failure(HarpStatus, String);

impl From<GeometryError> for Failure {
    fn from(e: GeometryError) -> Self {
        let status = match e {
            GeometryError::EmptyMesh => HarpStatus::EmptyMesh,
            _ => HarpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<RenderError> for Failure {
    fn from(e: RenderError) -> Self {
        let status = match e {
            RenderError::EmptyMesh => HarpStatus::EmptyMesh,
            RenderError::OutOfGrid(_) => HarpStatus::OutOfGrid,
            _ => HarpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<AlignError> for Failure {
    fn from(e: AlignError) -> Self {
        let status = match e {
            AlignError::CollinearAnchors(_) => HarpStatus::CollinearAnchors,
            AlignError::InvalidFrame(_) => HarpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HarpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            HarpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            HarpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(HarpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(HarpStatus::InvalidArgument, format!("{what} is not UTF-8: {e}")))
}

/// Copies `items` into a caller buffer of `capacity` entries and reports the
/// full count in `len`.
unsafe fn fill<T: Copy>(items: &[T], buf: *mut T, capacity: usize, len: *mut usize) -> Result<(), Failure> {
    *out(len, "len")? = items.len();
    if items.len() > capacity {
        return Err(Failure(
            HarpStatus::BufferTooSmall,
            format!("need room for {} entries, have {capacity}", items.len()),
        ));
    }
    if !items.is_empty() {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(items.as_ptr(), buf, items.len());
    }
    Ok(())
}

/// Message for the most recent call on this thread, empty if it succeeded.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn harp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn harp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses Wavefront OBJ text into a new mesh.
///
/// # Safety
/// `obj` must be a NUL-terminated string and `out_mesh` writable.
#[no_mangle]
pub unsafe extern "C" fn harp_mesh_from_obj(obj: *const c_char, out_mesh: *mut *mut HarpMesh) -> HarpStatus {
    guard(|| {
        let slot = out(out_mesh, "out_mesh")?;
        let mesh = geometry::load_obj(text(obj, "obj")?).map_err(|e| Failure(HarpStatus::Parse, e.to_string()))?;
        *slot = Box::into_raw(Box::new(HarpMesh(mesh)));
        Ok(())
    })
}

/// Builds a catalog figure (`cube`, `sphere`, `pyramid`, ...) with default
/// proportions.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out_mesh` writable.
#[no_mangle]
pub unsafe extern "C" fn harp_mesh_primitive(name: *const c_char, out_mesh: *mut *mut HarpMesh) -> HarpStatus {
    guard(|| {
        let slot = out(out_mesh, "out_mesh")?;
        let kind: PrimitiveKind = text(name, "name")?.parse()?;
        *slot = Box::into_raw(Box::new(HarpMesh(geometry::make_primitive(&kind)?)));
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn harp_mesh_free(mesh: *mut HarpMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// # Safety
/// `mesh` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn harp_mesh_counts(
    mesh: *const HarpMesh,
    out_vertices: *mut usize,
    out_triangles: *mut usize,
) -> HarpStatus {
    guard(|| {
        let m = &borrow(mesh, "mesh")?.0;
        *out(out_vertices, "out_vertices")? = m.vertices.len();
        *out(out_triangles, "out_triangles")? = m.triangles.len();
        Ok(())
    })
}

/// Mean of the distinct vertex positions.
///
/// # Safety
/// `mesh` must be a live handle and `out_centroid` writable.
#[no_mangle]
pub unsafe extern "C" fn harp_mesh_centroid(mesh: *const HarpMesh, out_centroid: *mut HarpVec3) -> HarpStatus {
    guard(|| {
        let m = &borrow(mesh, "mesh")?.0;
        let slot = out(out_centroid, "out_centroid")?;
        *slot = geometry::centroid(m)?.into();
        Ok(())
    })
}

/// Voxelizes the posed mesh into an `nx` x `ny` x `nz` grid spanning its
/// bounding box. A null `transform` means identity.
///
/// # Safety
/// `mesh` must be a live handle, `transform` null or readable, `out_grid` writable.
#[no_mangle]
pub unsafe extern "C" fn harp_voxelize(
    mesh: *const HarpMesh,
    transform: *const HarpTransform,
    nx: usize,
    ny: usize,
    nz: usize,
    mode: HarpVoxelMode,
    out_grid: *mut *mut HarpVoxelGrid,
) -> HarpStatus {
    guard(|| {
        let m = &borrow(mesh, "mesh")?.0;
        let slot = out(out_grid, "out_grid")?;
        let t = transform.as_ref().map_or(Transform::IDENTITY, Transform::from);
        t.validate().map_err(|e| Failure(HarpStatus::InvalidArgument, e))?;
        let bounds = geometry::aabb(m, &t)?;
        let spec = GridSpec::covering(&bounds, [nx, ny, nz])?;
        let grid = render::voxelize(m, &t, &spec, mode.into())?;
        *slot = Box::into_raw(Box::new(HarpVoxelGrid(grid)));
        Ok(())
    })
}

/// # Safety
/// `grid` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn harp_grid_free(grid: *mut HarpVoxelGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Grid placement: dimensions, origin (min corner) and cell size.
///
/// # Safety
/// `grid` must be a live handle; `out_dims` must hold 3 entries; the other
/// outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn harp_grid_spec(
    grid: *const HarpVoxelGrid,
    out_dims: *mut usize,
    out_origin: *mut HarpVec3,
    out_cell_size: *mut HarpVec3,
) -> HarpStatus {
    guard(|| {
        let spec = borrow(grid, "grid")?.0.spec;
        if out_dims.is_null() {
            return Err(null("out_dims"));
        }
        ptr::copy_nonoverlapping(spec.dims.as_ptr(), out_dims, 3);
        *out(out_origin, "out_origin")? = spec.origin.into();
        *out(out_cell_size, "out_cell_size")? = spec.cell_size.into();
        Ok(())
    })
}

/// # Safety
/// `grid` must be a live handle and `out_count` writable.
#[no_mangle]
pub unsafe extern "C" fn harp_grid_occupied_count(grid: *const HarpVoxelGrid, out_count: *mut usize) -> HarpStatus {
    guard(|| {
        let g = &borrow(grid, "grid")?.0;
        *out(out_count, "out_count")? = g.occupied_count();
        Ok(())
    })
}

/// # Safety
/// `grid` must be a live handle and `out_occupied` writable.
#[no_mangle]
pub unsafe extern "C" fn harp_grid_get(
    grid: *const HarpVoxelGrid,
    i: usize,
    j: usize,
    k: usize,
    out_occupied: *mut bool,
) -> HarpStatus {
    guard(|| {
        let g = &borrow(grid, "grid")?.0;
        let [nx, ny, nz] = g.spec.dims;
        if i >= nx || j >= ny || k >= nz {
            return Err(Failure(
                HarpStatus::OutOfGrid,
                format!("cell ({i}, {j}, {k}) outside {nx}x{ny}x{nz}"),
            ));
        }
        *out(out_occupied, "out_occupied")? = g.get([i, j, k]);
        Ok(())
    })
}

/// Occupied cell centers in the layer under a palm at height `palm_z`.
/// `out_len` receives the full count; when it exceeds `capacity` nothing
/// is copied and [`HarpStatus::BufferTooSmall`] is returned.
///
/// # Safety
/// `grid` must be a live handle, `points` writable for `capacity` entries,
/// `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn harp_grid_slice(
    grid: *const HarpVoxelGrid,
    palm_z: f64,
    intensity: f64,
    points: *mut HarpPoint,
    capacity: usize,
    out_len: *mut usize,
) -> HarpStatus {
    guard(|| {
        let g = &borrow(grid, "grid")?.0;
        let hand = HandState::at(Vec3::new(0.0, 0.0, palm_z), 0.0);
        let slice: Vec<HarpPoint> = render::slice_for_hand(g, &hand, intensity)?
            .into_iter()
            .map(HarpPoint::from)
            .collect();
        fill(&slice, points, capacity, out_len)
    })
}

/// Points a device with `device_capacity` focal points shows in frame
/// `frame_index`. Output follows the same sizing rule as [`harp_grid_slice`].
///
/// # Safety
/// `points` must be readable for `count` entries (or null when `count` is
/// zero), `out_points` writable for `out_capacity` entries, `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn harp_schedule(
    points: *const HarpPoint,
    count: usize,
    device_capacity: usize,
    frame_index: u64,
    out_points: *mut HarpPoint,
    out_capacity: usize,
    out_len: *mut usize,
) -> HarpStatus {
    guard(|| {
        if device_capacity == 0 {
            return Err(Failure(
                HarpStatus::InvalidArgument,
                "device capacity must be at least 1".into(),
            ));
        }
        let input: Vec<HapticPoint> = if count == 0 {
            Vec::new()
        } else if points.is_null() {
            return Err(null("points"));
        } else {
            std::slice::from_raw_parts(points, count)
                .iter()
                .map(|&p| p.into())
                .collect()
        };
        let frame: Vec<HarpPoint> = render::schedule(&input, device_capacity, frame_index)
            .points
            .into_iter()
            .map(HarpPoint::from)
            .collect();
        fill(&frame, out_points, out_capacity, out_len)
    })
}

/// Device frame from anchors on its origin corner, its +x corner and its +y side.
///
/// # Safety
/// `out_frame` must be writable.
#[no_mangle]
pub unsafe extern "C" fn harp_frame_from_anchors(
    p0: HarpVec3,
    p1: HarpVec3,
    p2: HarpVec3,
    out_frame: *mut HarpFrame,
) -> HarpStatus {
    guard(|| {
        let slot = out(out_frame, "out_frame")?;
        *slot = align::frame_from_anchors(p0.into(), p1.into(), p2.into())?.into();
        Ok(())
    })
}

/// # Safety
/// `frame` must be readable and `out_point` writable.
#[no_mangle]
pub unsafe extern "C" fn harp_world_to_device(
    frame: *const HarpFrame,
    point: HarpVec3,
    out_point: *mut HarpVec3,
) -> HarpStatus {
    guard(|| {
        let f = RigidFrame::from(borrow(frame, "frame")?);
        f.validate()?;
        *out(out_point, "out_point")? = align::world_to_device(point.into(), &f).into();
        Ok(())
    })
}

/// # Safety
/// `frame` must be readable and `out_point` writable.
#[no_mangle]
pub unsafe extern "C" fn harp_device_to_world(
    frame: *const HarpFrame,
    point: HarpVec3,
    out_point: *mut HarpVec3,
) -> HarpStatus {
    guard(|| {
        let f = RigidFrame::from(borrow(frame, "frame")?);
        f.validate()?;
        *out(out_point, "out_point")? = align::device_to_world(point.into(), &f).into();
        Ok(())
    })
}
