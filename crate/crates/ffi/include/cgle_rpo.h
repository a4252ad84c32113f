#ifndef CGLE_RPO_H
#define CGLE_RPO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RpoStatus {
  RPO_STATUS_OK = 0,
  RPO_STATUS_NULL_POINTER = 1,
  RPO_STATUS_INVALID_ARGUMENT = 2,
  RPO_STATUS_PARSE = 3,
  RPO_STATUS_NO_CONVERGENCE = 4,
  RPO_STATUS_STALL = 5,
  RPO_STATUS_IO = 6,
  RPO_STATUS_INTERNAL = 7,
} RpoStatus;

// Opaque solution handle.
typedef struct RpoState RpoState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next call on the same thread.
const char *rpo_last_error(void);

// Exact plane-wave solution with wavenumber `k` on an `nx` x `nt` grid.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum RpoStatus rpo_plane_wave(size_t nx,
                              size_t nt,
                              int32_t k,
                              double r,
                              double nu,
                              double mu,
                              double period,
                              double shift,
                              struct RpoState **out);

// Load a solution file.
//
// # Safety
// `path` must be a nul-terminated string and `out` writable.
enum RpoStatus rpo_read(const char *path, struct RpoState **out);

// Write a solution file.
//
// # Safety
// `state` must come from this library and `path` must be nul-terminated.
enum RpoStatus rpo_write(const struct RpoState *state, const char *path);

// Release a handle. Null is ignored.
//
// # Safety
// `state` must be null or a handle not yet freed.
void rpo_free(struct RpoState *state);

// # Safety
// `state` must come from this library and `out` must be writable.
enum RpoStatus rpo_residual_norm(const struct RpoState *state, double *out);

// Newton-refine in place. Non-positive `newton_tol` or zero `max_iter`
// select the defaults. On `RPO_STATUS_NO_CONVERGENCE` the handle is left
// unchanged. `iterations` may be null.
//
// # Safety
// `state` must come from this library.
enum RpoStatus rpo_refine(struct RpoState *state,
                          double newton_tol,
                          size_t max_iter,
                          size_t *iterations);

// Group shift `(phi, S, T)` into `out[0..3]`.
//
// # Safety
// `out` must point to three writable doubles.
enum RpoStatus rpo_group_shift(const struct RpoState *state, double *out);

// Parameters `(R, nu, mu)` into `out[0..3]`.
//
// # Safety
// `out` must point to three writable doubles.
enum RpoStatus rpo_parameters(const struct RpoState *state, double *out);

// Number of real unknowns of the Newton system, or 0 for a null handle.
//
// # Safety
// `state` must be null or come from this library.
size_t rpo_unknown_count(const struct RpoState *state);

// Closure residual of direct integration over one period with `steps`
// steps (0 selects the default).
//
// # Safety
// `state` must come from this library and `out` must be writable.
enum RpoStatus rpo_closure_residual(const struct RpoState *state, size_t steps, double *out);

// Count of relative monodromy eigenvalues outside the unit circle.
//
// # Safety
// `state` must come from this library and `out` must be writable.
enum RpoStatus rpo_unstable_dimension(const struct RpoState *state, size_t steps, size_t *out);

// Arclength continuation of `param` (`"R"`, `"nu"` or `"mu"`) to `target`
// with default step control. The handle is replaced by the last accepted
// point, including when the path stalls (`RPO_STATUS_STALL`). `steps` may
// be null.
//
// # Safety
// `state` must come from this library and `param` must be nul-terminated.
enum RpoStatus rpo_continue(struct RpoState *state,
                            const char *param,
                            double target,
                            size_t *steps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGLE_RPO_H */
