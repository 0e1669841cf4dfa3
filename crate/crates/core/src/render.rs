//! Haptic rendering: turns a posed mesh into focal points.
//!
//! Two families of representation exist. Feature and vertex renderings emit
//! a fixed point list every frame. Edge and volume renderings go through a
//! boolean voxel grid over the working volume, and only the horizontal layer
//! containing the palm is emitted. Either way the point list is multiplexed
//! by [`schedule`] so a frame never exceeds the device capacity.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{centroid, dedup_vertices, Aabb, DEFAULT_DEDUP_EPS};
use crate::model::{HandState, Mesh, Transform, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("empty-mesh")]
    EmptyMesh,
    #[error("out-of-grid geometry at {0:?}")]
    OutOfGrid([f64; 3]),
    #[error("invalid-hand")]
    InvalidHand,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid representation: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FeatureBased,
    VertexBased,
    EdgeBased,
    VolumeBased,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "feature_based" | "feature" => Ok(Strategy::FeatureBased),
            "vertex_based" | "vertex" => Ok(Strategy::VertexBased),
            "edge_based" | "edge" => Ok(Strategy::EdgeBased),
            "volume_based" | "volume" => Ok(Strategy::VolumeBased),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoxelMode {
    Vertices,
    Edges,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationSpec {
    pub strategy: Strategy,
    pub resolution: [usize; 3],
    pub include_interior: bool,
    pub base_intensity: f64,
}

impl Default for RepresentationSpec {
    fn default() -> Self {
        Self {
            strategy: Strategy::VolumeBased,
            resolution: [16, 16, 16],
            include_interior: false,
            base_intensity: 1.0,
        }
    }
}

impl RepresentationSpec {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.resolution.iter().any(|&n| n < 2) {
            return Err(RenderError::InvalidSpec(format!(
                "resolution {:?} must be at least 2 per axis",
                self.resolution
            )));
        }
        if !(self.base_intensity > 0.0 && self.base_intensity <= 1.0) {
            return Err(RenderError::InvalidSpec(format!(
                "intensity {} outside (0, 1]",
                self.base_intensity
            )));
        }
        Ok(())
    }

    /// Grid mode for the voxel strategies, `None` for point strategies.
    pub fn voxel_mode(&self) -> Option<VoxelMode> {
        match self.strategy {
            Strategy::FeatureBased | Strategy::VertexBased => None,
            Strategy::EdgeBased if self.include_interior => Some(VoxelMode::Interior),
            Strategy::EdgeBased => Some(VoxelMode::Edges),
            Strategy::VolumeBased => Some(VoxelMode::Interior),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HapticPoint {
    pub position: Vec3,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HapticFrame {
    pub frame_index: u64,
    pub points: Vec<HapticPoint>,
}

/// Placement and resolution of a voxel grid, without occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec3,
    pub cell_size: Vec3,
    pub dims: [usize; 3],
}

impl GridSpec {
    /// Grid whose cells exactly tile `bounds`.
    pub fn covering(bounds: &Aabb, dims: [usize; 3]) -> Result<Self, RenderError> {
        if !bounds.is_non_degenerate() {
            return Err(RenderError::InvalidGrid("bounds are degenerate".into()));
        }
        let e = bounds.extent();
        let spec = GridSpec {
            origin: bounds.min,
            cell_size: Vec3::new(e.x / dims[0] as f64, e.y / dims[1] as f64, e.z / dims[2] as f64),
            dims,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let c = self.cell_size;
        if !(c.is_finite() && c.x > 0.0 && c.y > 0.0 && c.z > 0.0) {
            return Err(RenderError::InvalidGrid("cell size must be positive".into()));
        }
        if self.dims.contains(&0) {
            return Err(RenderError::InvalidGrid("dims must be non-zero".into()));
        }
        if !self.origin.is_finite() {
            return Err(RenderError::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lower boundary of cell `i` along `axis`.
    pub fn boundary(&self, axis: usize, i: i64) -> f64 {
        self.origin.get(axis) + i as f64 * self.cell_size.get(axis)
    }

    pub fn extent(&self) -> Aabb {
        Aabb::new(
            self.origin,
            Vec3::new(
                self.boundary(0, self.dims[0] as i64),
                self.boundary(1, self.dims[1] as i64),
                self.boundary(2, self.dims[2] as i64),
            ),
        )
    }

    /// Cell along one axis with `boundary(i) <= x < boundary(i + 1)`.
    /// Coordinates on the far face belong to the last cell; anything further
    /// out than a billionth of a cell is outside.
    pub fn axis_cell(&self, axis: usize, x: f64) -> Option<usize> {
        let n = self.dims[axis] as i64;
        let c = self.cell_size.get(axis);
        let tol = 1e-9 * c;
        if !(x >= self.boundary(axis, 0) - tol && x <= self.boundary(axis, n) + tol) {
            return None;
        }
        let o = self.origin.get(axis);
        let mut i = ((x - o) / c).floor() as i64;
        while i > 0 && self.boundary(axis, i) > x {
            i -= 1;
        }
        while i < n && self.boundary(axis, i + 1) <= x {
            i += 1;
        }
        Some(i.clamp(0, n - 1) as usize)
    }

    pub fn locate(&self, p: Vec3) -> Option<[usize; 3]> {
        Some([
            self.axis_cell(0, p.x)?,
            self.axis_cell(1, p.y)?,
            self.axis_cell(2, p.z)?,
        ])
    }

    pub fn index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn cell_center(&self, [i, j, k]: [usize; 3]) -> Vec3 {
        Vec3::new(
            self.origin.x + (i as f64 + 0.5) * self.cell_size.x,
            self.origin.y + (j as f64 + 0.5) * self.cell_size.y,
            self.origin.z + (k as f64 + 0.5) * self.cell_size.z,
        )
    }

    /// Height of the slice plane through the centers of layer `k`.
    pub fn slice_plane(&self, k: usize) -> f64 {
        self.origin.z + (k as f64 + 0.5) * self.cell_size.z
    }
}

/// Boolean occupancy over a [`GridSpec`], x fastest then y then z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    pub occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn empty(spec: GridSpec) -> Self {
        Self {
            occupancy: vec![false; spec.len()],
            spec,
        }
    }

    pub fn get(&self, cell: [usize; 3]) -> bool {
        self.occupancy[self.spec.index(cell)]
    }

    pub fn set(&mut self, cell: [usize; 3]) {
        let i = self.spec.index(cell);
        self.occupancy[i] = true;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&b| b).count()
    }

    /// Occupied cells in storage order.
    pub fn occupied(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, _] = self.spec.dims;
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(idx, _)| [idx % nx, (idx / nx) % ny, idx / (nx * ny)])
    }

    /// Lowest and highest occupied layers.
    pub fn occupied_layers(&self) -> Option<(usize, usize)> {
        let mut it = self.occupied().map(|c| c[2]);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), k| (lo.min(k), hi.max(k))))
    }

    /// Alternating run lengths starting with a run of empty cells.
    pub fn runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for &b in &self.occupancy {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }
}

#[derive(Serialize, Deserialize)]
struct VoxelGridWire {
    dims: [usize; 3],
    origin: Vec3,
    cell_size: Vec3,
    occupancy_rle: Vec<usize>,
}

impl Serialize for VoxelGrid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        VoxelGridWire {
            dims: self.spec.dims,
            origin: self.spec.origin,
            cell_size: self.spec.cell_size,
            occupancy_rle: self.runs(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for VoxelGrid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = VoxelGridWire::deserialize(d)?;
        let spec = GridSpec {
            origin: w.origin,
            cell_size: w.cell_size,
            dims: w.dims,
        };
        let mut occupancy = Vec::with_capacity(spec.len());
        let mut value = false;
        for run in w.occupancy_rle {
            occupancy.extend(std::iter::repeat_n(value, run));
            value = !value;
        }
        if occupancy.len() != spec.len() {
            return Err(D::Error::custom(format!(
                "run lengths cover {} cells, grid has {}",
                occupancy.len(),
                spec.len()
            )));
        }
        Ok(VoxelGrid { spec, occupancy })
    }
}

pub fn render_feature_based(
    mesh: &Mesh,
    transform: &Transform,
    intensity: f64,
) -> Result<Vec<HapticPoint>, RenderError> {
    let c = centroid(mesh).map_err(|_| RenderError::EmptyMesh)?;
    Ok(vec![HapticPoint {
        position: transform.apply(c),
        intensity,
    }])
}

pub fn render_vertex_based(
    mesh: &Mesh,
    transform: &Transform,
    intensity: f64,
) -> Result<Vec<HapticPoint>, RenderError> {
    let d = dedup_vertices(mesh, DEFAULT_DEDUP_EPS);
    if d.vertices.is_empty() {
        return Err(RenderError::EmptyMesh);
    }
    Ok(d.vertices
        .iter()
        .map(|&v| HapticPoint {
            position: transform.apply(v),
            intensity,
        })
        .collect())
}

/// Point where segment `a`-`b` crosses the horizontal plane `z`, if it does.
/// An endpoint on the plane is returned exactly. Segments lying in the plane
/// are not handled here.
fn segment_plane(a: Vec3, b: Vec3, z: f64) -> Option<Vec3> {
    if a.z == z {
        return Some(a);
    }
    if b.z == z {
        return Some(b);
    }
    if (a.z < z) == (b.z < z) {
        return None;
    }
    let t = (z - a.z) / (b.z - a.z);
    Some(Vec3::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, z))
}

/// Rasterizes the posed mesh into `grid`.
///
/// `Vertices` marks the cell of every vertex. `Edges` also marks, for every
/// mesh edge and every slice plane through layer centers, the cell holding
/// the crossing point. `Interior` also fills each cell whose center has odd
/// crossing parity along +x.
pub fn voxelize(
    mesh: &Mesh,
    transform: &Transform,
    grid: &GridSpec,
    mode: VoxelMode,
) -> Result<VoxelGrid, RenderError> {
    grid.validate()?;
    let mut out = VoxelGrid::empty(*grid);
    let pts = mesh.transformed_vertices(transform);

    for &p in &pts {
        let cell = grid.locate(p).ok_or(RenderError::OutOfGrid(p.to_array()))?;
        out.set(cell);
    }
    if mode == VoxelMode::Vertices {
        return Ok(out);
    }

    for (a, b) in mesh.edges() {
        let (pa, pb) = (pts[a as usize], pts[b as usize]);
        if pa.z == pb.z {
            // Horizontal edges touch a plane only at their endpoints.
            continue;
        }
        let (lo, hi) = (pa.z.min(pb.z), pa.z.max(pb.z));
        for k in 0..grid.dims[2] {
            let z = grid.slice_plane(k);
            if z < lo || z > hi {
                continue;
            }
            if let Some(p) = segment_plane(pa, pb, z) {
                let i = grid.axis_cell(0, p.x);
                let j = grid.axis_cell(1, p.y);
                match (i, j) {
                    (Some(i), Some(j)) => out.set([i, j, k]),
                    _ => return Err(RenderError::OutOfGrid(p.to_array())),
                }
            }
        }
    }
    if mode == VoxelMode::Edges {
        return Ok(out);
    }

    let tris: Vec<[Vec3; 3]> = mesh.triangles.iter().map(|t| t.map(|i| pts[i as usize])).collect();
    let [nx, ny, nz] = grid.dims;
    let mut hits: Vec<f64> = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            let c = grid.cell_center([0, j, k]);
            hits.clear();
            for tri in &tris {
                if let Some(x) = ray_x_hit(tri, c.y, c.z) {
                    hits.push(x);
                }
            }
            if hits.is_empty() {
                continue;
            }
            for i in 0..nx {
                let cx = grid.cell_center([i, j, k]).x;
                let crossings = hits.iter().filter(|&&x| x > cx).count();
                if crossings % 2 == 1 {
                    out.set([i, j, k]);
                }
            }
        }
    }
    Ok(out)
}

/// Orientation of `r` against the directed line `p`→`q` in the (y, z) plane.
/// Endpoints are put in a canonical order first so the two triangles sharing
/// an edge always see exactly negated values.
fn orient(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    let raw = |p: (f64, f64), q: (f64, f64)| (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0);
    if p > q {
        -raw(q, p)
    } else {
        raw(p, q)
    }
}

/// A point exactly on an edge belongs to the triangle for which the edge
/// direction is "top-left"; the opposite direction never is.
fn owns_edge(p: (f64, f64), q: (f64, f64)) -> bool {
    let d = (q.0 - p.0, q.1 - p.1);
    d.1 < 0.0 || (d.1 == 0.0 && d.0 > 0.0)
}

/// x of the crossing between `tri` and the line parallel to x through
/// (y, z), if the projection of `tri` onto the (y, z) plane covers it.
fn ray_x_hit(tri: &[Vec3; 3], y: f64, z: f64) -> Option<f64> {
    let [a, mut b, mut c] = *tri;
    let proj = |v: Vec3| (v.y, v.z);
    let q = (y, z);
    let mut area = orient(proj(a), proj(b), proj(c));
    if area == 0.0 {
        return None;
    }
    if area < 0.0 {
        std::mem::swap(&mut b, &mut c);
        area = -area;
    }
    let (pa, pb, pc) = (proj(a), proj(b), proj(c));
    let w_a = orient(pb, pc, q);
    let w_b = orient(pc, pa, q);
    let w_c = orient(pa, pb, q);
    let inside = |w: f64, p: (f64, f64), r: (f64, f64)| w > 0.0 || (w == 0.0 && owns_edge(p, r));
    if !(inside(w_a, pb, pc) && inside(w_b, pc, pa) && inside(w_c, pa, pb)) {
        return None;
    }
    Some((w_a * a.x + w_b * b.x + w_c * c.x) / area)
}

/// Crossings of all mesh edges with the plane `plane_z`, merged within 1e-6 m.
/// Edges lying in the plane contribute both endpoints.
pub fn edge_slice_intersections(mesh: &Mesh, transform: &Transform, plane_z: f64) -> Vec<Vec3> {
    let pts = mesh.transformed_vertices(transform);
    let mut found = Vec::new();
    for (a, b) in mesh.edges() {
        let (pa, pb) = (pts[a as usize], pts[b as usize]);
        if pa.z == plane_z && pb.z == plane_z {
            found.push(pa);
            found.push(pb);
        } else if let Some(p) = segment_plane(pa, pb, plane_z) {
            found.push(p);
        }
    }
    dedup_vertices(&Mesh::from_parts(found, Vec::new()), DEFAULT_DEDUP_EPS).vertices
}

/// Centers of the occupied cells in the layer holding the palm.
///
/// A palm on the boundary between two layers selects the lower one. Palms
/// within one layer of the grid's z-range clamp to the nearest layer; further
/// out the slice is empty.
pub fn slice_for_hand(grid: &VoxelGrid, hand: &HandState, intensity: f64) -> Result<Vec<HapticPoint>, RenderError> {
    if !hand.valid {
        return Err(RenderError::InvalidHand);
    }
    let Some(k) = palm_layer(&grid.spec, hand.palm_position.z) else {
        return Ok(Vec::new());
    };
    let [nx, ny, _] = grid.spec.dims;
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if grid.get([i, j, k]) {
                out.push(HapticPoint {
                    position: grid.spec.cell_center([i, j, k]),
                    intensity,
                });
            }
        }
    }
    Ok(out)
}

/// Layer index for a palm height, per the rules of [`slice_for_hand`].
pub fn palm_layer(spec: &GridSpec, z: f64) -> Option<usize> {
    let nz = spec.dims[2] as i64;
    let c = spec.cell_size.z;
    if !(z >= spec.boundary(2, 0) - c && z <= spec.boundary(2, nz) + c) {
        return None;
    }
    // Largest k with boundary(k) < z, so a boundary value maps below it.
    let mut k = ((z - spec.origin.z) / c).ceil() as i64 - 1;
    while k < nz && spec.boundary(2, k + 1) < z {
        k += 1;
    }
    while k >= 0 && spec.boundary(2, k) >= z {
        k -= 1;
    }
    Some(k.clamp(0, nz - 1) as usize)
}

/// Picks the points shown in frame `frame_index`.
///
/// With `G = ceil(N / capacity)` groups, point `i` belongs to group
/// `i mod G` and the frame shows group `frame_index mod G`. Every point is
/// shown exactly once in any `G` consecutive frames and no frame holds more
/// than `capacity` points.
///
/// # Panics
/// If `capacity` is zero.
pub fn schedule(points: &[HapticPoint], capacity: usize, frame_index: u64) -> HapticFrame {
    assert!(capacity >= 1, "device capacity must be at least 1");
    let n = points.len();
    if n == 0 {
        return HapticFrame {
            frame_index,
            points: Vec::new(),
        };
    }
    let groups = n.div_ceil(capacity);
    let g = (frame_index % groups as u64) as usize;
    HapticFrame {
        frame_index,
        points: points.iter().skip(g).step_by(groups).copied().collect(),
    }
}

/// A posed figure ready to be rendered against a hand.
#[derive(Debug, Clone, PartialEq)]
pub enum HapticShape {
    /// Fixed point list, shown regardless of the hand.
    Points(Vec<HapticPoint>),
    /// Voxel grid, sliced at the palm.
    Grid { grid: VoxelGrid, intensity: f64 },
}

impl HapticShape {
    pub fn build(
        mesh: &Mesh,
        transform: &Transform,
        spec: &RepresentationSpec,
        bounds: &Aabb,
    ) -> Result<Self, RenderError> {
        spec.validate()?;
        match spec.voxel_mode() {
            None if spec.strategy == Strategy::FeatureBased => Ok(HapticShape::Points(render_feature_based(
                mesh,
                transform,
                spec.base_intensity,
            )?)),
            None => Ok(HapticShape::Points(render_vertex_based(
                mesh,
                transform,
                spec.base_intensity,
            )?)),
            Some(mode) => {
                let grid_spec = GridSpec::covering(bounds, spec.resolution)?;
                Ok(HapticShape::Grid {
                    grid: voxelize(mesh, transform, &grid_spec, mode)?,
                    intensity: spec.base_intensity,
                })
            }
        }
    }

    /// Points to render for this hand; a lost hand sees no slice.
    pub fn points_for(&self, hand: &HandState) -> Vec<HapticPoint> {
        match self {
            HapticShape::Points(p) => p.clone(),
            HapticShape::Grid { grid, intensity } => slice_for_hand(grid, hand, *intensity).unwrap_or_default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64) -> HapticPoint {
        HapticPoint {
            position: Vec3::new(x, 0.0, 0.0),
            intensity: 1.0,
        }
    }

    fn unit_cube() -> Mesh {
        let v = (0..8)
            .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let t = vec![
            [0, 2, 3],
            [0, 3, 1],
            [4, 5, 7],
            [4, 7, 6],
            [0, 1, 5],
            [0, 5, 4],
            [2, 6, 7],
            [2, 7, 3],
            [0, 4, 6],
            [0, 6, 2],
            [1, 3, 7],
            [1, 7, 5],
        ];
        Mesh::from_parts(v, t)
    }

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::covering(&Aabb::new(Vec3::ZERO, Vec3::ONE), [n; 3]).unwrap()
    }

    #[test]
    fn feature_point_is_centroid() {
        let p = render_feature_based(&unit_cube(), &Transform::IDENTITY, 1.0).unwrap();
        assert_eq!(p[0].position, Vec3::splat(0.5));
        let t = Transform::from_position(Vec3::new(0.0, 0.0, 0.1));
        let p = render_feature_based(&unit_cube(), &t, 1.0).unwrap();
        assert!(p[0].position.distance(Vec3::new(0.5, 0.5, 0.6)) < 1e-15);
        assert_eq!(
            render_feature_based(&Mesh::default(), &t, 1.0),
            Err(RenderError::EmptyMesh)
        );
    }

    #[test]
    fn vertex_points_after_dedup() {
        let mut m = unit_cube();
        let extra: Vec<Vec3> = m.vertices.clone();
        m.vertices.extend(extra);
        m.normals.resize(16, Vec3::ZERO);
        assert_eq!(render_vertex_based(&m, &Transform::IDENTITY, 1.0).unwrap().len(), 8);
    }

    #[test]
    fn cube_vertices_fill_2x2x2() {
        let g = voxelize(&unit_cube(), &Transform::IDENTITY, &unit_grid(2), VoxelMode::Vertices).unwrap();
        assert_eq!(g.occupied_count(), 8);
    }

    #[test]
    fn interior_fills_cube() {
        let g = voxelize(&unit_cube(), &Transform::IDENTITY, &unit_grid(4), VoxelMode::Interior).unwrap();
        assert_eq!(g.occupied_count(), 64);
    }

    #[test]
    fn out_of_grid_is_error() {
        let t = Transform::from_position(Vec3::new(0.5, 0.0, 0.0));
        assert!(matches!(
            voxelize(&unit_cube(), &t, &unit_grid(4), VoxelMode::Vertices),
            Err(RenderError::OutOfGrid(_))
        ));
    }

    #[test]
    fn vertical_edges_at_mid_height() {
        let pts = edge_slice_intersections(&unit_cube(), &Transform::IDENTITY, 0.5);
        for corner in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            let want = Vec3::new(corner[0], corner[1], 0.5);
            assert!(pts.iter().any(|p| p.distance(want) < 1e-12), "missing {want:?}");
        }
        assert!(edge_slice_intersections(&unit_cube(), &Transform::IDENTITY, 1.5).is_empty());
    }

    #[test]
    fn in_plane_edges_give_endpoints() {
        let pts = edge_slice_intersections(&unit_cube(), &Transform::IDENTITY, 1.0);
        assert_eq!(pts.len(), 4);
    }

    #[test]
    fn slice_layers() {
        let g = voxelize(&unit_cube(), &Transform::IDENTITY, &unit_grid(4), VoxelMode::Interior).unwrap();
        let mid = slice_for_hand(&g, &HandState::at(Vec3::new(0.5, 0.5, 0.6), 0.0), 1.0).unwrap();
        assert_eq!(mid.len(), 16);
        assert!(mid.iter().all(|p| p.position.z == 0.625));
        let on_boundary = slice_for_hand(&g, &HandState::at(Vec3::new(0.5, 0.5, 0.5), 0.0), 1.0).unwrap();
        assert!(on_boundary.iter().all(|p| p.position.z == 0.375));
        let empty = VoxelGrid::empty(unit_grid(4));
        assert!(slice_for_hand(&empty, &HandState::at(Vec3::splat(0.5), 0.0), 1.0)
            .unwrap()
            .is_empty());
        assert_eq!(
            slice_for_hand(&g, &HandState::lost(0.0), 1.0),
            Err(RenderError::InvalidHand)
        );
    }

    #[test]
    fn slice_clamps_within_one_layer() {
        let spec = unit_grid(4);
        assert_eq!(palm_layer(&spec, 1.1), Some(3));
        assert_eq!(palm_layer(&spec, -0.2), Some(0));
        assert_eq!(palm_layer(&spec, 1.3), None);
        assert_eq!(palm_layer(&spec, -0.3), None);
        assert_eq!(palm_layer(&spec, 0.0), Some(0));
        assert_eq!(palm_layer(&spec, 0.25), Some(0));
        assert_eq!(palm_layer(&spec, 0.2500001), Some(1));
    }

    #[test]
    fn schedule_examples() {
        let three: Vec<_> = (0..3).map(|i| pt(i as f64)).collect();
        for f in 0..5 {
            assert_eq!(schedule(&three, 4, f).points, three);
        }
        let eight: Vec<_> = (0..8).map(|i| pt(i as f64)).collect();
        let xs = |f| {
            schedule(&eight, 4, f)
                .points
                .iter()
                .map(|p| p.position.x)
                .collect::<Vec<_>>()
        };
        assert_eq!(xs(0), vec![0.0, 2.0, 4.0, 6.0]);
        assert_eq!(xs(1), vec![1.0, 3.0, 5.0, 7.0]);
        let nine: Vec<_> = (0..9).map(|i| pt(i as f64)).collect();
        let xs = |f| {
            schedule(&nine, 4, f)
                .points
                .iter()
                .map(|p| p.position.x)
                .collect::<Vec<_>>()
        };
        assert_eq!(xs(0), vec![0.0, 3.0, 6.0]);
        assert_eq!(xs(1), vec![1.0, 4.0, 7.0]);
        assert_eq!(xs(2), vec![2.0, 5.0, 8.0]);
        assert_eq!(xs(3), vec![0.0, 3.0, 6.0]);
        assert!(schedule(&[], 4, 7).points.is_empty());
    }

    #[test]
    fn grid_json_round_trip() {
        let g = voxelize(&unit_cube(), &Transform::IDENTITY, &unit_grid(4), VoxelMode::Edges).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: VoxelGrid = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["dims"], serde_json::json!([4, 4, 4]));
        let runs: usize = g.runs().iter().sum();
        assert_eq!(runs, 64);
    }

    #[test]
    fn bad_rle_rejected() {
        let text = r#"{"dims":[2,2,2],"origin":[0,0,0],"cell_size":[1,1,1],"occupancy_rle":[3,1]}"#;
        assert!(serde_json::from_str::<VoxelGrid>(text).is_err());
    }
}
