#include <math.h>
#include <stdio.h>
#include <string.h>

#include "harp.h"

#define CHECK(expr)                                                            \
  do {                                                                         \
    HarpStatus s_ = (expr);                                                    \
    if (s_ != HARP_STATUS_OK) {                                                \
      fprintf(stderr, "%s -> %d: %s\n", #expr, (int)s_, harp_last_error());    \
      return 1;                                                                \
    }                                                                          \
  } while (0)

int main(void) {
  HarpMesh *cube = NULL;
  CHECK(harp_mesh_primitive("cube", &cube));

  HarpVec3 c;
  CHECK(harp_mesh_centroid(cube, &c));
  if (fabs(c.x) > 1e-12 || fabs(c.y) > 1e-12 || fabs(c.z - 0.5) > 1e-12) {
    fprintf(stderr, "centroid %g %g %g\n", c.x, c.y, c.z);
    return 1;
  }

  HarpVoxelGrid *grid = NULL;
  CHECK(harp_voxelize(cube, NULL, 4, 4, 4, HARP_VOXEL_MODE_INTERIOR, &grid));
  size_t occupied = 0;
  CHECK(harp_grid_occupied_count(grid, &occupied));
  if (occupied != 64) {
    fprintf(stderr, "occupied %zu\n", occupied);
    return 1;
  }

  HarpPoint slice[16];
  size_t n = 0;
  CHECK(harp_grid_slice(grid, 0.3, 1.0, slice, 16, &n));
  HarpPoint frame[4];
  size_t shown = 0;
  CHECK(harp_schedule(slice, n, 4, 1, frame, 4, &shown));
  if (n != 16 || shown != 4) {
    fprintf(stderr, "slice %zu, frame %zu\n", n, shown);
    return 1;
  }

  HarpVec3 p0 = {0, 0, 0}, p1 = {1, 0, 0}, p2 = {2, 0, 0};
  HarpFrame f;
  if (harp_frame_from_anchors(p0, p1, p2, &f) != HARP_STATUS_COLLINEAR_ANCHORS ||
      strncmp(harp_last_error(), "collinear-anchors", 17) != 0) {
    fprintf(stderr, "collinear anchors accepted\n");
    return 1;
  }

  harp_grid_free(grid);
  harp_mesh_free(cube);
  printf("ok %s\n", harp_version());
  return 0;
}
