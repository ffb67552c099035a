#ifndef OSLO_H
#define OSLO_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OsloStatus {
  OSLO_STATUS_OK = 0,
  OSLO_STATUS_INVALID_ARGUMENT = 1,
  OSLO_STATUS_NULL_POINTER = 2,
  OSLO_STATUS_IO = 3,
  OSLO_STATUS_FORMAT = 4,
  OSLO_STATUS_SHAPE_MISMATCH = 5,
  OSLO_STATUS_MODEL_MISMATCH = 6,
  OSLO_STATUS_NUMERIC = 7,
  OSLO_STATUS_PANIC = 8,
} OsloStatus;

/**
 * A loaded codec checkpoint.
 */
typedef struct OsloModel OsloModel;

/**
 * A full-sphere HEALPix map, channel-major.
 */
typedef struct OsloSphereMap OsloSphereMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or an empty string.
 * The pointer stays valid until the next call into the library on the
 * same thread.
 */
const char *oslo_last_error(void);

enum OsloStatus oslo_npix(uint8_t order, uint64_t *npix);

/**
 * Colatitude and longitude of a pixel center, in radians.
 */
enum OsloStatus oslo_pix2ang(uint8_t order, uint64_t index, double *theta, double *phi);

enum OsloStatus oslo_ang2pix(uint8_t order, double theta, double phi, uint64_t *index);

/**
 * Writes the 8 neighbors in the order SW, W, NW, N, NE, E, SE, S, with -1
 * where a neighbor does not exist.
 */
enum OsloStatus oslo_neighbors(uint8_t order, uint64_t index, int64_t *result);

/**
 * Per-direction relative standard deviation of neighbor distances in
 * percent, in the same direction order as [`oslo_neighbors`], and their mean.
 */
enum OsloStatus oslo_rigidity(uint8_t order, double *rel_std_pct, double *mean_pct);

/**
 * A map of `channels * npix(order)` values. `data` may be null, giving zeros.
 */
enum OsloStatus oslo_map_new(uint8_t order,
                             size_t channels,
                             const double *data,
                             size_t len,
                             struct OsloSphereMap **map);

void oslo_map_free(struct OsloSphereMap *map);

enum OsloStatus oslo_map_shape(const struct OsloSphereMap *map,
                               uint8_t *order,
                               size_t *channels,
                               size_t *npix);

/**
 * Borrowed pointer to the `channels * npix` values, valid while the map lives.
 */
enum OsloStatus oslo_map_data(struct OsloSphereMap *map, double **data, size_t *len);

enum OsloStatus oslo_map_read(const char *path_, struct OsloSphereMap **map);

/**
 * `f32 != 0` stores single precision, otherwise double.
 */
enum OsloStatus oslo_map_write(const struct OsloSphereMap *map, const char *path_, int32_t f32);

/**
 * Resamples a channel-major equirectangular image with values in `[0, 1]`.
 */
enum OsloStatus oslo_erp_to_healpix(const double *data,
                                    size_t width,
                                    size_t height,
                                    size_t channels,
                                    uint8_t order,
                                    struct OsloSphereMap **map);

/**
 * Unweighted PSNR in dB over two buffers; identical inputs give infinity.
 */
enum OsloStatus oslo_psnr(const double *a, const double *b, size_t len, double peak, double *db);

enum OsloStatus oslo_wspsnr(const struct OsloSphereMap *a,
                            const struct OsloSphereMap *b,
                            double peak,
                            double *db);

/**
 * PSNR at the shared uniform point set, four-nearest lookup on both maps.
 */
enum OsloStatus oslo_spsnr(const struct OsloSphereMap *a,
                           const struct OsloSphereMap *b,
                           double peak,
                           double *db);

enum OsloStatus oslo_model_load(const char *path_, struct OsloModel **model);

void oslo_model_free(struct OsloModel *model);

/**
 * Encodes `map` to latent-file bytes. Release them with [`oslo_bytes_free`].
 * `rate_bits` may be null.
 */
enum OsloStatus oslo_model_compress(const struct OsloModel *model,
                                    const struct OsloSphereMap *map,
                                    uint8_t **bytes,
                                    size_t *len,
                                    double *rate_bits);

void oslo_bytes_free(uint8_t *bytes, size_t len);

enum OsloStatus oslo_model_decompress(const struct OsloModel *model,
                                      const uint8_t *bytes,
                                      size_t len,
                                      struct OsloSphereMap **map);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OSLO_H */
