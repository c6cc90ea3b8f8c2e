#ifndef DMSEG_H
#define DMSEG_H

/* Generated by cbindgen from crates/ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which distance-map transform to compute.
 */
typedef enum DmsegDmVariant {
  /**
   * Original map: distance to the class boundary, everywhere.
   */
  DMSEG_DM_VARIANT_ODM = 0,
  /**
   * Inverse map on the foreground.
   */
  DMSEG_DM_VARIANT_IDM = 1,
  /**
   * Normalized inverse map on the foreground.
   */
  DMSEG_DM_VARIANT_NIDM = 2,
  /**
   * Signed normalized inverse map (negative outside).
   */
  DMSEG_DM_VARIANT_SNIDM = 3,
} DmsegDmVariant;

/**
 * Result of every fallible call.
 */
typedef enum DmsegStatus {
  DMSEG_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DMSEG_STATUS_NULL_ARGUMENT = 1,
  /**
   * A path or string argument was not valid UTF-8.
   */
  DMSEG_STATUS_INVALID_UTF8 = 2,
  /**
   * The arguments were well-formed but invalid (shape mismatch, unknown
   * class, wrong checkpoint kind, ...).
   */
  DMSEG_STATUS_INVALID_ARGUMENT = 3,
  /**
   * File-system failure; the message names the path.
   */
  DMSEG_STATUS_IO = 4,
  /**
   * A file exists but its contents are malformed.
   */
  DMSEG_STATUS_FORMAT = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  DMSEG_STATUS_PANIC = 6,
} DmsegStatus;

/**
 * Opaque handle to a network checkpoint.
 */
typedef struct DmsegCheckpoint DmsegCheckpoint;

/**
 * Opaque handle to a distance map plus its interpretation metadata.
 */
typedef struct DmsegDistanceMap DmsegDistanceMap;

/**
 * Opaque handle to a label volume with a known class count.
 */
typedef struct DmsegMask DmsegMask;

/**
 * Opaque handle to a scalar f32 volume.
 */
typedef struct DmsegVolume DmsegVolume;

/**
 * Per-pair evaluation summary. `rvd` is meaningful only when `has_rvd` is
 * true (the reference had foreground); surface distances fall back to the
 * image-diagonal sentinel when `degenerate` is set.
 */
typedef struct DmsegPairMetrics {
  double dc;
  double voe;
  double rvd;
  bool has_rvd;
  double assd_mm;
  double msd_mm;
  double rmsd_mm;
  bool degenerate;
} DmsegPairMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the message of the most recent failure on this thread into `buf`
 * (NUL-terminated, truncated to `cap`). Returns the full length the message
 * needs including the NUL; call with a null `buf` or `cap == 0` to query.
 */
size_t dmseg_last_error(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dmseg_version(void);

/**
 * Build a volume from a dense z-major buffer of `shape[0]*shape[1]*shape[2]`
 * values.
 *
 * # Safety
 * `shape` and `spacing` point to 3 elements; `data` points to `len` floats.
 */
enum DmsegStatus dmseg_volume_create(const size_t *shape,
                                     const float *spacing,
                                     const float *data,
                                     size_t len,
                                     struct DmsegVolume **out);

/**
 * Read an RVOL file with an f32 payload.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is a valid destination.
 */
enum DmsegStatus dmseg_volume_read_rvol(const char *path, struct DmsegVolume **out);

/**
 * Write the volume as an RVOL file.
 *
 * # Safety
 * `vol` is a live handle; `path` is a NUL-terminated string.
 */
enum DmsegStatus dmseg_volume_write_rvol(const struct DmsegVolume *vol, const char *path);

/**
 * Number of voxels, or 0 for a null handle.
 *
 * # Safety
 * `vol` is a live handle or null.
 */
size_t dmseg_volume_len(const struct DmsegVolume *vol);

/**
 * Copy shape (3 elements) and spacing (3 elements) out of the handle.
 *
 * # Safety
 * `vol` is a live handle; `shape` and `spacing` point to 3 writable
 * elements each (either may be null to skip it).
 */
enum DmsegStatus dmseg_volume_geometry(const struct DmsegVolume *vol,
                                       size_t *shape,
                                       float *spacing);

/**
 * Copy the dense z-major payload into `buf`, which must hold exactly
 * `dmseg_volume_len` elements.
 *
 * # Safety
 * `vol` is a live handle; `buf` points to `cap` writable floats.
 */
enum DmsegStatus dmseg_volume_copy_data(const struct DmsegVolume *vol, float *buf, size_t cap);

/**
 * Release a volume handle; null is ignored.
 *
 * # Safety
 * `vol` came from this library and is not used afterwards.
 */
void dmseg_volume_free(struct DmsegVolume *vol);

/**
 * Build a mask from dense z-major labels, all `< num_classes`.
 *
 * # Safety
 * `shape`/`spacing` point to 3 elements; `labels` points to `len` bytes.
 */
enum DmsegStatus dmseg_mask_create(const size_t *shape,
                                   const float *spacing,
                                   const uint8_t *labels,
                                   size_t len,
                                   uint8_t num_classes,
                                   struct DmsegMask **out);

/**
 * Read a u8 RVOL as a mask (class count = max label + 1, at least 2).
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is a valid destination.
 */
enum DmsegStatus dmseg_mask_read_rvol(const char *path, struct DmsegMask **out);

/**
 * Write the mask labels as an RVOL file.
 *
 * # Safety
 * `mask` is a live handle; `path` is a NUL-terminated string.
 */
enum DmsegStatus dmseg_mask_write_rvol(const struct DmsegMask *mask, const char *path);

/**
 * Number of voxels, or 0 for a null handle.
 *
 * # Safety
 * `mask` is a live handle or null.
 */
size_t dmseg_mask_len(const struct DmsegMask *mask);

/**
 * Class count, or 0 for a null handle.
 *
 * # Safety
 * `mask` is a live handle or null.
 */
uint8_t dmseg_mask_num_classes(const struct DmsegMask *mask);

/**
 * Copy the dense z-major labels into `buf`, which must hold exactly
 * `dmseg_mask_len` elements.
 *
 * # Safety
 * `mask` is a live handle; `buf` points to `cap` writable bytes.
 */
enum DmsegStatus dmseg_mask_copy_labels(const struct DmsegMask *mask, uint8_t *buf, size_t cap);

/**
 * Release a mask handle; null is ignored.
 *
 * # Safety
 * `mask` came from this library and is not used afterwards.
 */
void dmseg_mask_free(struct DmsegMask *mask);

/**
 * Compute `variant` for `class_id` of the mask. Fails when the class has
 * no boundary (absent or image-filling).
 *
 * # Safety
 * `mask` is a live handle; `out` is a valid destination.
 */
enum DmsegStatus dmseg_compute_dm(const struct DmsegMask *mask,
                                  uint8_t class_id,
                                  enum DmsegDmVariant variant,
                                  struct DmsegDistanceMap **out);

/**
 * Clone the map's values into a standalone volume handle.
 *
 * # Safety
 * `dm` is a live handle; `out` is a valid destination.
 */
enum DmsegStatus dmseg_dm_values(const struct DmsegDistanceMap *dm, struct DmsegVolume **out);

/**
 * Recover a binary mask from an NI-DM (threshold applies) or SNI-DM
 * (sign decides). Other variants are not invertible.
 *
 * # Safety
 * `dm` is a live handle; `out` is a valid destination.
 */
enum DmsegStatus dmseg_dm_to_mask(const struct DmsegDistanceMap *dm,
                                  float threshold,
                                  struct DmsegMask **out);

/**
 * Write the map as RVOL plus its `.json` metadata sidecar.
 *
 * # Safety
 * `dm` is a live handle; `path` is a NUL-terminated string.
 */
enum DmsegStatus dmseg_dm_write_files(const struct DmsegDistanceMap *dm, const char *path);

/**
 * Read a map written by [`dmseg_dm_write_files`].
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is a valid destination.
 */
enum DmsegStatus dmseg_dm_read_files(const char *path, struct DmsegDistanceMap **out);

/**
 * Release a distance-map handle; null is ignored.
 *
 * # Safety
 * `dm` came from this library and is not used afterwards.
 */
void dmseg_dm_free(struct DmsegDistanceMap *dm);

/**
 * Load a checkpoint file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is a valid destination.
 */
enum DmsegStatus dmseg_checkpoint_load(const char *path, struct DmsegCheckpoint **out);

/**
 * Copy the checkpoint's 16-hex content id into `buf` (NUL-terminated).
 * Returns the length needed including the NUL (17).
 *
 * # Safety
 * `ck` is a live handle; `buf` points to `cap` writable chars or is null.
 */
size_t dmseg_checkpoint_id(const struct DmsegCheckpoint *ck, char *buf, size_t cap);

/**
 * Segment one image with a segmentation checkpoint; the result is the
 * per-voxel argmax mask.
 *
 * # Safety
 * `ck` and `image` are live handles; `out` is a valid destination.
 */
enum DmsegStatus dmseg_infer(const struct DmsegCheckpoint *ck,
                             const struct DmsegVolume *image,
                             struct DmsegMask **out);

/**
 * Release a checkpoint handle; null is ignored.
 *
 * # Safety
 * `ck` came from this library and is not used afterwards.
 */
void dmseg_checkpoint_free(struct DmsegCheckpoint *ck);

/**
 * Score a predicted binary mask against a reference binary mask.
 *
 * # Safety
 * `pred` and `reference` are live handles; `out` points to a writable
 * struct.
 */
enum DmsegStatus dmseg_evaluate_pair(const struct DmsegMask *pred,
                                     const struct DmsegMask *reference,
                                     struct DmsegPairMetrics *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DMSEG_H */
