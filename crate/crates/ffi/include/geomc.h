#ifndef GEOMC_H
#define GEOMC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GeomcSignConvention {
  GEOMC_SIGN_CONVENTION_AS_WRITTEN = 0,
  GEOMC_SIGN_CONVENTION_GRADIENT_CONSISTENT = 1,
} GeomcSignConvention;

typedef enum GeomcStatus {
  GEOMC_STATUS_OK = 0,
  GEOMC_STATUS_INVALID_INPUT = 1,
  GEOMC_STATUS_NUMERICAL_FAILURE = 2,
  GEOMC_STATUS_NOT_PSD = 3,
  GEOMC_STATUS_DRIFT_TOO_LARGE = 4,
  GEOMC_STATUS_NULL_POINTER = 5,
  GEOMC_STATUS_BUFFER_TOO_SMALL = 6,
  GEOMC_STATUS_PANIC = 7,
} GeomcStatus;

typedef enum GeomcVariant {
  GEOMC_VARIANT_MOMENTUM = 0,
  GEOMC_VARIANT_VELOCITY = 1,
  GEOMC_VARIANT_CLASSIC = 2,
} GeomcVariant;

typedef struct GeomcChain GeomcChain;

typedef struct GeomcManifold GeomcManifold;

typedef struct GeomcMass GeomcMass;

typedef struct GeomcTarget GeomcTarget;

// Log density callback: `x` has `len` entries.
typedef double (*GeomcLogDensityFn)(const double *x, size_t len, void *user_data);

// Ambient gradient callback: writes `len` entries to `grad`.
typedef void (*GeomcGradientFn)(const double *x, size_t len, double *grad, void *user_data);

// Chain settings; obtain defaults from [`geomc_chain_config_default`].
typedef struct GeomcChainConfig {
  enum GeomcVariant variant;
  double epsilon;
  size_t n_leapfrog;
  size_t n_samples;
  size_t n_burnin;
  size_t thin;
  uint64_t seed;
  enum GeomcSignConvention sign_convention;
  // Nonzero to reproject onto the manifold after every transition.
  uint8_t reproject;
  double max_drift;
} GeomcChainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *geomc_last_error(void);

// # Safety
// `out` must be a valid pointer.
enum GeomcStatus geomc_manifold_new_sphere(size_t d, struct GeomcManifold **out);

// # Safety
// `out` must be a valid pointer.
enum GeomcStatus geomc_manifold_new_stiefel(size_t d, size_t s, struct GeomcManifold **out);

// Length `d·s` of a point's coordinate vector, or 0 for a null handle.
//
// # Safety
// `m` must be null or a live handle.
size_t geomc_manifold_ambient_dim(const struct GeomcManifold *m);

// # Safety
// `m` must be null or a handle not yet freed.
void geomc_manifold_free(struct GeomcManifold *m);

// # Safety
// `m` must be a live handle and `out` a valid pointer.
enum GeomcStatus geomc_target_new_uniform(const struct GeomcManifold *m, struct GeomcTarget **out);

// von Mises-Fisher density `exp(κ μᵀx)` on a sphere; `mu` has `d` entries.
//
// # Safety
// `mu` must point to `mu_len` doubles.
enum GeomcStatus geomc_target_new_von_mises_fisher(const struct GeomcManifold *m,
                                                   double kappa,
                                                   const double *mu,
                                                   size_t mu_len,
                                                   struct GeomcTarget **out);

// Bingham-von Mises-Fisher density `exp(tr(CᵀX) + tr(diag(b) XᵀAX))`.
// `c` is `d×s`, `a` is `d×d`, both column-major; `b` has `s` entries.
//
// # Safety
// Each array must hold the stated number of doubles.
enum GeomcStatus geomc_target_new_bingham_von_mises_fisher(const struct GeomcManifold *m,
                                                           const double *c,
                                                           const double *a,
                                                           const double *b,
                                                           struct GeomcTarget **out);

// A density supplied by the caller. The callbacks may run on any thread and
// `user_data` must outlive the target.
//
// # Safety
// `m` must be a live handle and `out` valid.
enum GeomcStatus geomc_target_new_callbacks(const struct GeomcManifold *m,
                                            GeomcLogDensityFn log_density,
                                            GeomcGradientFn gradient,
                                            void *user_data,
                                            struct GeomcTarget **out);

// Log density at `x` (length `d·s`), up to the target's normalising constant.
//
// # Safety
// `x` must point to `x_len` doubles and `out` must be valid.
enum GeomcStatus geomc_target_log_density(const struct GeomcTarget *t,
                                          const double *x,
                                          size_t x_len,
                                          double *out);

// # Safety
// `t` must be null or a handle not yet freed.
void geomc_target_free(struct GeomcTarget *t);

// # Safety
// `out` must be a valid pointer.
enum GeomcStatus geomc_mass_new_identity(struct GeomcMass **out);

// # Safety
// `values` must point to `n` doubles.
enum GeomcStatus geomc_mass_new_diagonal(const double *values, size_t n, struct GeomcMass **out);

// Dense symmetric PSD mass; `values` is `n×n` column-major.
//
// # Safety
// `values` must point to `n·n` doubles.
enum GeomcStatus geomc_mass_new_dense(const double *values, size_t n, struct GeomcMass **out);

// # Safety
// `m` must be null or a handle not yet freed.
void geomc_mass_free(struct GeomcMass *m);

struct GeomcChainConfig geomc_chain_config_default(void);

// Runs one chain from `x0` on RNG stream `stream`. Chains with the same
// config, seed and stream produce identical output.
//
// # Safety
// Handles must be live, `x0` must point to `x0_len` doubles and `out` must
// be valid.
enum GeomcStatus geomc_chain_run(const struct GeomcChainConfig *config,
                                 const struct GeomcTarget *target,
                                 const struct GeomcMass *mass,
                                 const double *x0,
                                 size_t x0_len,
                                 uint64_t stream,
                                 struct GeomcChain **out);

// Number of retained samples, or 0 for a null handle.
//
// # Safety
// `c` must be null or a live handle.
size_t geomc_chain_len(const struct GeomcChain *c);

// Coordinates per sample, or 0 for a null handle.
//
// # Safety
// `c` must be null or a live handle.
size_t geomc_chain_dim(const struct GeomcChain *c);

// # Safety
// `c` must be a live handle and `out` valid.
enum GeomcStatus geomc_chain_acceptance_rate(const struct GeomcChain *c, double *out);

// Copies the samples into `buf`, one sample after another (`len × dim`).
//
// # Safety
// `buf` must have room for `capacity` doubles.
enum GeomcStatus geomc_chain_samples(const struct GeomcChain *c, double *buf, size_t capacity);

// Per-sample energy at the start of the transition, energy of the proposal
// and acceptance flag. Any output pointer may be null to skip it; the
// others need room for `geomc_chain_len` entries.
//
// # Safety
// Non-null buffers must have room for `capacity` entries.
enum GeomcStatus geomc_chain_records(const struct GeomcChain *c,
                                     double *energy,
                                     double *proposed_energy,
                                     uint8_t *accepted,
                                     size_t capacity);

// # Safety
// `c` must be null or a handle not yet freed.
void geomc_chain_free(struct GeomcChain *c);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOMC_H */
