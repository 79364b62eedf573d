#ifndef DVF_H
#define DVF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DvfStatus {
  DVF_STATUS_OK = 0,
  DVF_STATUS_NULL_POINTER = 1,
  DVF_STATUS_INVALID_ARGUMENT = 2,
  DVF_STATUS_PARSE_ERROR = 3,
  DVF_STATUS_CONFIG_ERROR = 4,
  DVF_STATUS_BUFFER_TOO_SMALL = 5,
  DVF_STATUS_PANIC = 6,
} DvfStatus;

/**
 * Camera calibration handle.
 */
typedef struct DvfCalib DvfCalib;

/**
 * Foreground heatmap handle.
 */
typedef struct DvfHeatmap DvfHeatmap;

/**
 * Multi-scale voxel hierarchy handle.
 */
typedef struct DvfHierarchy DvfHierarchy;

/**
 * Voxel grid parameters.
 */
typedef struct DvfGridConfig {
  double range_min[3];
  double range_max[3];
  double resolution[3];
  uint32_t num_levels;
  uint32_t dilation_radius;
} DvfGridConfig;

/**
 * Oriented 3D box: center, `(length, width, height)`, yaw about +Z.
 */
typedef struct DvfBox {
  double center[3];
  double size[3];
  double yaw;
} DvfBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *dvf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dvf_version(void);

/**
 * Parse KITTI calibration text for an image of `width` x `height` pixels.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum DvfStatus dvf_calib_parse(const char *text,
                               uint32_t width,
                               uint32_t height,
                               struct DvfCalib **out);

/**
 * Calibration of KITTI frame 000000 with a 1242 x 375 image.
 *
 * # Safety
 * `out` must be writable.
 */
enum DvfStatus dvf_calib_kitti_reference(struct DvfCalib **out);

/**
 * # Safety
 * `calib` must come from this library or be null.
 */
void dvf_calib_free(struct DvfCalib *calib);

/**
 * # Safety
 * `calib` must be a live handle; `width` and `height` writable.
 */
enum DvfStatus dvf_calib_image_size(const struct DvfCalib *calib,
                                    uint32_t *width,
                                    uint32_t *height);

/**
 * Project `n` LiDAR points (`xyz`, 3n doubles) to `uvd` (3n doubles:
 * `u, v, depth`). `in_image` (n bytes) is optional and receives 1 for
 * points in front of the camera and inside the image.
 *
 * # Safety
 * Buffers must hold the stated number of elements.
 */
enum DvfStatus dvf_calib_project(const struct DvfCalib *calib,
                                 const double *xyz,
                                 size_t n,
                                 double *uvd,
                                 uint8_t *in_image);

/**
 * All-zero heatmap.
 *
 * # Safety
 * `out` must be writable.
 */
enum DvfStatus dvf_heatmap_new(uint32_t width, uint32_t height, struct DvfHeatmap **out);

/**
 * Heatmap from `width * height` row-major values in [0, 1].
 *
 * # Safety
 * `values` must hold `width * height` floats; `out` must be writable.
 */
enum DvfStatus dvf_heatmap_from_values(uint32_t width,
                                       uint32_t height,
                                       const float *values,
                                       struct DvfHeatmap **out);

/**
 * Heatmap from detector output text, one `u1 v1 u2 v2 confidence` per line.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be writable.
 */
enum DvfStatus dvf_heatmap_from_detections(const char *text,
                                           uint32_t width,
                                           uint32_t height,
                                           struct DvfHeatmap **out);

/**
 * Raise the pixels inside the box (inclusive integer bounds, clipped) to at
 * least `confidence`.
 *
 * # Safety
 * `map` must be a live handle.
 */
enum DvfStatus dvf_heatmap_add_box(struct DvfHeatmap *map,
                                   double u1,
                                   double v1,
                                   double u2,
                                   double v2,
                                   double confidence);

/**
 * Bilinear sample at `(u, v)`; 0 outside the image.
 *
 * # Safety
 * `map` must be a live handle; `out` writable.
 */
enum DvfStatus dvf_heatmap_sample(const struct DvfHeatmap *map, double u, double v, double *out);

/**
 * Borrow the row-major values; valid until the map is modified or freed.
 *
 * # Safety
 * `map` must be a live handle; `values` and `len` writable.
 */
enum DvfStatus dvf_heatmap_values(const struct DvfHeatmap *map, const float **values, size_t *len);

/**
 * # Safety
 * `map` must come from this library or be null.
 */
void dvf_heatmap_free(struct DvfHeatmap *map);

/**
 * KITTI default grid: x [0, 70], y [-40, 40], z [-1, 3], voxels 0.05 x 0.05 x
 * 0.1 m, four levels, dilation 1.
 */
struct DvfGridConfig dvf_grid_config_default(void);

/**
 * Voxelize `n` points (`xyzi`, 4n floats) and build the level hierarchy.
 *
 * # Safety
 * `xyzi` must hold `4 * n` floats; `config` readable; `out` writable.
 */
enum DvfStatus dvf_hierarchy_build(const float *xyzi,
                                   size_t n,
                                   const struct DvfGridConfig *config,
                                   struct DvfHierarchy **out);

/**
 * # Safety
 * `h` must come from this library or be null.
 */
void dvf_hierarchy_free(struct DvfHierarchy *h);

/**
 * # Safety
 * `h` must be a live handle; `out` writable.
 */
enum DvfStatus dvf_hierarchy_num_levels(const struct DvfHierarchy *h, size_t *out);

/**
 * Occupied voxel count and feature channels of one level.
 *
 * # Safety
 * `h` must be a live handle; `occupied` and `channels` writable.
 */
enum DvfStatus dvf_hierarchy_level_info(const struct DvfHierarchy *h,
                                        size_t level,
                                        size_t *occupied,
                                        size_t *channels);

/**
 * Copy voxel indices (`3 * occupied` values, sorted) and features
 * (`occupied * channels`) of one level. Either buffer may be null.
 *
 * # Safety
 * Non-null buffers must hold their stated capacities.
 */
enum DvfStatus dvf_hierarchy_level_data(const struct DvfHierarchy *h,
                                        size_t level,
                                        uint32_t *indices,
                                        size_t indices_cap,
                                        double *features,
                                        size_t features_cap);

/**
 * Fuse one level with `map`: `features` receives `(1 + rho) * v` for every
 * voxel (`occupied * channels`), `rho` the sampled weight per voxel. Either
 * output may be null.
 *
 * # Safety
 * Handles must be live; non-null buffers must hold their capacities.
 */
enum DvfStatus dvf_hierarchy_fuse_level(const struct DvfHierarchy *h,
                                        size_t level,
                                        const struct DvfCalib *calib,
                                        const struct DvfHeatmap *map,
                                        double *features,
                                        size_t features_cap,
                                        double *rho,
                                        size_t rho_cap);

/**
 * Bird's-eye-view IoU of two oriented boxes.
 *
 * # Safety
 * `a`, `b` readable; `out` writable.
 */
enum DvfStatus dvf_bev_iou(const struct DvfBox *a, const struct DvfBox *b, double *out);

/**
 * 3D IoU of two oriented boxes.
 *
 * # Safety
 * `a`, `b` readable; `out` writable.
 */
enum DvfStatus dvf_iou_3d(const struct DvfBox *a, const struct DvfBox *b, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DVF_H */
