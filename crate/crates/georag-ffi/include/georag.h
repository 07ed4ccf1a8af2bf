/* C interface to the georag geolocalization engine. */

#ifndef GEORAG_H
#define GEORAG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Call outcome. Anything but `Ok` leaves a message in
// [`georag_last_error_message`] and leaves out parameters untouched.
typedef enum GeoragStatus {
  GEORAG_STATUS_OK = 0,
  // A required pointer argument was null.
  GEORAG_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  GEORAG_STATUS_INVALID_UTF8 = 2,
  // An argument was out of range or inconsistent with the call.
  GEORAG_STATUS_INVALID_ARGUMENT = 3,
  // A vector length disagreed with the index dimension.
  GEORAG_STATUS_DIMENSION_MISMATCH = 4,
  // The operating system reported an I/O failure.
  GEORAG_STATUS_IO = 5,
  // The file is not a readable index (bad magic, version, or checksum).
  GEORAG_STATUS_BAD_FORMAT = 6,
  // The text contained no in-range coordinate pair.
  GEORAG_STATUS_NO_COORDINATE = 7,
} GeoragStatus;

// Index layout selector for [`georag_index_build`].
typedef enum GeoragIndexMode {
  // Exact full-scan search.
  GEORAG_INDEX_MODE_FLAT = 0,
  // Inverted lists over k-means centroids; nearest search probes
  // `nprobe` lists, farthest search still scans everything.
  GEORAG_INDEX_MODE_IVF = 1,
} GeoragIndexMode;

// Opaque handle to a built or loaded index. Obtain from
// [`georag_index_build`] or [`georag_index_open`], release with
// [`georag_index_free`].
typedef struct GeoragIndex GeoragIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Crate version as a static NUL-terminated string. Never null; do not
// free.
const char *georag_version(void);

// Message describing the most recent failure on this thread, or null when
// the last call succeeded. The pointer stays valid until the next
// `georag_*` call on the same thread; do not free it.
const char *georag_last_error_message(void);

// Builds an index over `count` records.
//
// `ids`, `lats`, and `lons` each hold `count` entries; `vectors` holds
// `count * dimension` floats, row-major. Latitudes must lie in [-90, 90],
// longitudes in [-180, 180], vector components must be finite, and ids
// must be unique. `nlist`, `nprobe`, `kmeans_iterations`, and `rng_seed`
// are ignored in `Flat` mode. On `Ok`, `*out_index` owns the new handle.
//
// # Safety
// The array pointers must be readable for the lengths stated above, and
// `out_index` must be writable.
enum GeoragStatus georag_index_build(const uint64_t *ids,
                                     const double *lats,
                                     const double *lons,
                                     const float *vectors,
                                     size_t count,
                                     uint32_t dimension,
                                     enum GeoragIndexMode mode,
                                     uint32_t nlist,
                                     uint32_t nprobe,
                                     uint32_t kmeans_iterations,
                                     uint64_t rng_seed,
                                     struct GeoragIndex **out_index);

// Loads an index file previously written by [`georag_index_save`] or the
// CLI. On `Ok`, `*out_index` owns the new handle.
//
// # Safety
// `path` must be a NUL-terminated string and `out_index` writable.
enum GeoragStatus georag_index_open(const char *path, struct GeoragIndex **out_index);

// Writes the index to `path` in the engine's file format.
//
// # Safety
// `index` must be a live handle and `path` a NUL-terminated string.
enum GeoragStatus georag_index_save(const struct GeoragIndex *index, const char *path);

// Releases a handle. Null is a no-op; a handle must not be used after
// being freed.
//
// # Safety
// `index` must be null or a handle not yet freed.
void georag_index_free(struct GeoragIndex *index);

// Number of records in the index.
//
// # Safety
// `index` must be a live handle and `out_count` writable.
enum GeoragStatus georag_index_count(const struct GeoragIndex *index, uint64_t *out_count);

// Embedding dimension of the index.
//
// # Safety
// `index` must be a live handle and `out_dimension` writable.
enum GeoragStatus georag_index_dimension(const struct GeoragIndex *index, uint32_t *out_dimension);

// Index layout.
//
// # Safety
// `index` must be a live handle and `out_mode` writable.
enum GeoragStatus georag_index_mode(const struct GeoragIndex *index,
                                    enum GeoragIndexMode *out_mode);

// Sets how many inverted lists a nearest-neighbor query probes. Fails on
// flat indexes and on nprobe values of 0 or above nlist. Freshly loaded
// IVF indexes default to probing every list.
//
// # Safety
// `index` must be a live handle with no concurrent calls on it.
enum GeoragStatus georag_index_set_nprobe(struct GeoragIndex *index, uint32_t nprobe);

// Retrieves up to `k` neighbors of `query`. With `farthest` false they are
// the nearest records in ascending L2 order; with it true, the farthest in
// descending order. `query_len` must equal the index dimension. On `Ok`,
// the first `*out_count` slots of each output array are filled
// (`*out_count <= k`; it falls short only when the index holds fewer than
// `k` records).
//
// # Safety
// `query` must be readable for `query_len` floats, and each output array
// writable for `k` slots.
enum GeoragStatus georag_index_search(const struct GeoragIndex *index,
                                      const float *query,
                                      size_t query_len,
                                      size_t k,
                                      bool farthest,
                                      uint64_t *out_ids,
                                      double *out_lats,
                                      double *out_lons,
                                      double *out_distances,
                                      size_t *out_count);

// Geodesic distance between two points in kilometers.
// `*out_used_fallback` reports whether the great-circle fallback replaced
// the ellipsoidal solution (near-antipodal inputs).
//
// # Safety
// `out_km` and `out_used_fallback` must be writable.
enum GeoragStatus georag_geodesic_km(double lat_a,
                                     double lon_a,
                                     double lat_b,
                                     double lon_b,
                                     double *out_km,
                                     bool *out_used_fallback);

// Accuracy levels a prediction error satisfies, as a bitmask: street
// (1 km) in bit 0, city (25 km) in bit 1, region (200 km) in bit 2,
// country (750 km) in bit 3, continent (2500 km) in bit 4. Fails on
// negative or non-finite distances.
//
// # Safety
// `out_mask` must be writable.
enum GeoragStatus georag_bucket_mask(double error_km, uint8_t *out_mask);

// Extracts the predicted coordinate from free-form model text, applying
// the same selection rules as the evaluation pipeline. Returns
// `NoCoordinate` when the text has no in-range pair.
//
// # Safety
// `text` must be a NUL-terminated string; `out_lat` and `out_lon` must be
// writable.
enum GeoragStatus georag_parse_coordinates(const char *text, double *out_lat, double *out_lon);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEORAG_H */
