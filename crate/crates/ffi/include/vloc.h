#ifndef VLOC_H
#define VLOC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum VlocStatus {
  VLOC_STATUS_OK = 0,
  VLOC_STATUS_NULL_POINTER = 1,
  VLOC_STATUS_INVALID_ARGUMENT = 2,
  VLOC_STATUS_GEO = 3,
  VLOC_STATUS_MODEL = 4,
  VLOC_STATUS_ROUTING = 5,
  VLOC_STATUS_ANALYSIS = 6,
  VLOC_STATUS_COVERAGE = 7,
  VLOC_STATUS_PANIC = 8,
} VlocStatus;

/**
 * Virtual locations behind a spatial index.
 */
typedef struct VlocLocations VlocLocations;

/**
 * Transition matrix over the five place categories.
 */
typedef struct VlocMatrix VlocMatrix;

/**
 * Visit parameters for `vloc_analyze_path`.
 */
typedef struct VlocVisitParams {
  /**
   * Vicinity radius, meters.
   */
  double r_v;
  /**
   * Minimum visiting time, seconds.
   */
  double t_v_min;
  /**
   * Walking speed, m/s.
   */
  double speed;
} VlocVisitParams;

/**
 * Per-path visit metrics.
 */
typedef struct VlocPathReport {
  double length_m;
  double duration_s;
  size_t distinct_visited;
  double parallel_median;
  uint32_t parallel_max;
  double accumulated_s;
} VlocPathReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *vloc_version(void);

/**
 * Length in bytes of the last error message, excluding the NUL; 0 if none.
 */
size_t vloc_last_error_length(void);

/**
 * Copies the last error message into `buf` (NUL-terminated, truncated to
 * `len`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` writable bytes.
 */
size_t vloc_last_error_message(char *buf, size_t len);

/**
 * Great-circle distance in meters.
 *
 * # Safety
 * `out_m` must be valid for one write.
 */
enum VlocStatus vloc_haversine_distance(double lat1,
                                        double lon1,
                                        double lat2,
                                        double lon2,
                                        double *out_m);

/**
 * Builds the category transition matrix from five place counts (Home,
 * Work, Food, Entertainment, Others) and self-transition mass `epsilon`.
 *
 * # Safety
 * `counts` must point to 5 values; `out` must be valid for one write.
 */
enum VlocStatus vloc_matrix_new(const uint64_t *counts, double epsilon, struct VlocMatrix **out);

/**
 * Writes the 25 entries row by row.
 *
 * # Safety
 * `m` must be a live handle; `out` must be valid for 25 writes.
 */
enum VlocStatus vloc_matrix_entries(const struct VlocMatrix *m, double *out);

/**
 * Stationary distribution by power iteration to tolerance `tol`.
 *
 * # Safety
 * `m` must be a live handle; `out` must be valid for 5 writes.
 */
enum VlocStatus vloc_matrix_stationary(const struct VlocMatrix *m, double tol, double *out);

/**
 * Releases a matrix handle; null is ignored.
 *
 * # Safety
 * `m` must be null or a handle from `vloc_matrix_new` not yet freed.
 */
void vloc_matrix_free(struct VlocMatrix *m);

/**
 * Indexes `n` virtual locations around `origin` with grid cell `cell_m`.
 *
 * # Safety
 * `lats`/`lons` must hold `n` values; `out` must be valid for one write.
 */
enum VlocStatus vloc_locations_new(const double *lats,
                                   const double *lons,
                                   size_t n,
                                   double origin_lat,
                                   double origin_lon,
                                   double cell_m,
                                   struct VlocLocations **out);

/**
 * Number of indexed locations; 0 for null.
 *
 * # Safety
 * `locs` must be null or a live handle.
 */
size_t vloc_locations_len(const struct VlocLocations *locs);

/**
 * Releases a locations handle; null is ignored.
 *
 * # Safety
 * `locs` must be null or a handle from `vloc_locations_new` not yet freed.
 */
void vloc_locations_free(struct VlocLocations *locs);

/**
 * Walks the polyline of `n` waypoints at constant speed and reports its
 * visits to the indexed locations.
 *
 * # Safety
 * `locs` must be a live handle; `lats`/`lons` must hold `n` values;
 * `params` and `out` must be valid.
 */
enum VlocStatus vloc_analyze_path(const struct VlocLocations *locs,
                                  const double *lats,
                                  const double *lons,
                                  size_t n,
                                  const struct VlocVisitParams *params,
                                  struct VlocPathReport *out);

/**
 * Percentage of a bounding box within `r_v` of any indexed location, on a
 * raster of `raster_m` cells.
 *
 * # Safety
 * `locs` must be a live handle; `out_percent` must be valid for one write.
 */
enum VlocStatus vloc_coverage_percent(const struct VlocLocations *locs,
                                      double min_lat,
                                      double max_lat,
                                      double min_lon,
                                      double max_lon,
                                      double r_v,
                                      double raster_m,
                                      double *out_percent);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VLOC_H */
