#ifndef HARP_H
#define HARP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum HarpStatus {
  HARP_STATUS_OK = 0,
  HARP_STATUS_NULL_POINTER = 1,
  HARP_STATUS_INVALID_ARGUMENT = 2,
  HARP_STATUS_PARSE = 3,
  HARP_STATUS_EMPTY_MESH = 4,
  HARP_STATUS_OUT_OF_GRID = 5,
  HARP_STATUS_COLLINEAR_ANCHORS = 6,
  HARP_STATUS_BUFFER_TOO_SMALL = 7,
  HARP_STATUS_PANIC = 99,
} HarpStatus;

typedef enum HarpVoxelMode {
  HARP_VOXEL_MODE_VERTICES = 0,
  HARP_VOXEL_MODE_EDGES = 1,
  HARP_VOXEL_MODE_INTERIOR = 2,
} HarpVoxelMode;

// Opaque triangle mesh.
typedef struct HarpMesh HarpMesh;

// Opaque voxel occupancy grid.
typedef struct HarpVoxelGrid HarpVoxelGrid;

typedef struct HarpVec3 {
  double x;
  double y;
  double z;
} HarpVec3;

// Rotation is a unit quaternion `[x, y, z, w]`.
typedef struct HarpTransform {
  struct HarpVec3 position;
  double rotation[4];
  struct HarpVec3 scale;
} HarpTransform;

typedef struct HarpPoint {
  struct HarpVec3 position;
  double intensity;
} HarpPoint;

// Device frame in world coordinates.
typedef struct HarpFrame {
  struct HarpVec3 origin;
  double rotation[4];
} HarpFrame;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent call on this thread, empty if it succeeded.
// The pointer stays valid until the next call on the same thread.
const char *harp_last_error(void);

// Library version as a static NUL-terminated string.
const char *harp_version(void);

// Parses Wavefront OBJ text into a new mesh.
//
// # Safety
// `obj` must be a NUL-terminated string and `out_mesh` writable.
enum HarpStatus harp_mesh_from_obj(const char *obj, struct HarpMesh **out_mesh);

// Builds a catalog figure (`cube`, `sphere`, `pyramid`, ...) with default
// proportions.
//
// # Safety
// `name` must be a NUL-terminated string and `out_mesh` writable.
enum HarpStatus harp_mesh_primitive(const char *name, struct HarpMesh **out_mesh);

// # Safety
// `mesh` must come from this library and not be used afterwards. Null is a no-op.
void harp_mesh_free(struct HarpMesh *mesh);

// # Safety
// `mesh` must be a live handle; the outputs must be writable.
enum HarpStatus harp_mesh_counts(const struct HarpMesh *mesh,
                                 size_t *out_vertices,
                                 size_t *out_triangles);

// Mean of the distinct vertex positions.
//
// # Safety
// `mesh` must be a live handle and `out_centroid` writable.
enum HarpStatus harp_mesh_centroid(const struct HarpMesh *mesh, struct HarpVec3 *out_centroid);

// Voxelizes the posed mesh into an `nx` x `ny` x `nz` grid spanning its
// bounding box. A null `transform` means identity.
//
// # Safety
// `mesh` must be a live handle, `transform` null or readable, `out_grid` writable.
enum HarpStatus harp_voxelize(const struct HarpMesh *mesh,
                              const struct HarpTransform *transform,
                              size_t nx,
                              size_t ny,
                              size_t nz,
                              enum HarpVoxelMode mode,
                              struct HarpVoxelGrid **out_grid);

// # Safety
// `grid` must come from this library and not be used afterwards. Null is a no-op.
void harp_grid_free(struct HarpVoxelGrid *grid);

// Grid placement: dimensions, origin (min corner) and cell size.
//
// # Safety
// `grid` must be a live handle; `out_dims` must hold 3 entries; the other
// outputs must be writable.
enum HarpStatus harp_grid_spec(const struct HarpVoxelGrid *grid,
                               size_t *out_dims,
                               struct HarpVec3 *out_origin,
                               struct HarpVec3 *out_cell_size);

// # Safety
// `grid` must be a live handle and `out_count` writable.
enum HarpStatus harp_grid_occupied_count(const struct HarpVoxelGrid *grid, size_t *out_count);

// # Safety
// `grid` must be a live handle and `out_occupied` writable.
enum HarpStatus harp_grid_get(const struct HarpVoxelGrid *grid,
                              size_t i,
                              size_t j,
                              size_t k,
                              bool *out_occupied);

// Occupied cell centers in the layer under a palm at height `palm_z`.
// `out_len` receives the full count; when it exceeds `capacity` nothing
// is copied and [`HarpStatus::BufferTooSmall`] is returned.
//
// # Safety
// `grid` must be a live handle, `points` writable for `capacity` entries,
// `out_len` writable.
enum HarpStatus harp_grid_slice(const struct HarpVoxelGrid *grid,
                                double palm_z,
                                double intensity,
                                struct HarpPoint *points,
                                size_t capacity,
                                size_t *out_len);

// Points a device with `device_capacity` focal points shows in frame
// `frame_index`. Output follows the same sizing rule as [`harp_grid_slice`].
//
// # Safety
// `points` must be readable for `count` entries (or null when `count` is
// zero), `out_points` writable for `out_capacity` entries, `out_len` writable.
enum HarpStatus harp_schedule(const struct HarpPoint *points,
                              size_t count,
                              size_t device_capacity,
                              uint64_t frame_index,
                              struct HarpPoint *out_points,
                              size_t out_capacity,
                              size_t *out_len);

// Device frame from anchors on its origin corner, its +x corner and its +y side.
//
// # Safety
// `out_frame` must be writable.
enum HarpStatus harp_frame_from_anchors(struct HarpVec3 p0,
                                        struct HarpVec3 p1,
                                        struct HarpVec3 p2,
                                        struct HarpFrame *out_frame);

// # Safety
// `frame` must be readable and `out_point` writable.
enum HarpStatus harp_world_to_device(const struct HarpFrame *frame,
                                     struct HarpVec3 point,
                                     struct HarpVec3 *out_point);

// # Safety
// `frame` must be readable and `out_point` writable.
enum HarpStatus harp_device_to_world(const struct HarpFrame *frame,
                                     struct HarpVec3 point,
                                     struct HarpVec3 *out_point);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HARP_H */
