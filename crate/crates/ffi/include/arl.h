#ifndef ARL_H
#define ARL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum ArlStatus {
  ARL_OK = 0,
  ARL_ERR_CONFIG = 1,
  ARL_ERR_SHAPE = 2,
  ARL_ERR_USAGE = 3,
  ARL_ERR_NUMERIC = 4,
  ARL_ERR_UNREACHABLE = 5,
  ARL_ERR_FORMAT = 6,
  ARL_ERR_IO = 7,
  ARL_ERR_UNSUPPORTED = 8,
  // A required pointer argument was null or a string was not UTF-8.
  ARL_ERR_ARGUMENT = 9,
  // The library panicked; the handle arguments may be inconsistent.
  ARL_ERR_PANIC = 10,
} ArlStatus;

// Opaque trained agent.
typedef struct ArlAgent ArlAgent;

// Opaque offline dataset.
typedef struct ArlDataset ArlDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread; empty when none. The
// pointer stays valid until the next failing call on the same thread.
const char *arl_last_error(void);

// Library version as a static NUL-terminated string.
const char *arl_version(void);

// Collects `n` trajectories of `h` steps on the built-in maze `env` with
// collection `style` ("stitch" or "navigate").
//
// # Safety
// `env` and `style` must be NUL-terminated strings; `out` must be a valid
// pointer to receive the handle.
enum ArlStatus arl_dataset_generate(const char *env,
                                    const char *style,
                                    size_t n,
                                    size_t h,
                                    double noise,
                                    uint64_t seed,
                                    struct ArlDataset **out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ArlStatus arl_dataset_load(const char *path, struct ArlDataset **out);

// # Safety
// `ds` must be a live dataset handle and `path` a NUL-terminated string.
enum ArlStatus arl_dataset_save(const struct ArlDataset *ds, const char *path);

// Number of transitions; 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t arl_dataset_num_transitions(const struct ArlDataset *ds);

// # Safety
// `ds` must be null or a handle not yet freed.
void arl_dataset_free(struct ArlDataset *ds);

// Trains a `variant` agent ("iql", "hiql1vr", "hiql2v", "hiql2vr",
// "arli", "arle") with the hyperparameters of `profile` ("desk",
// "pointmaze", "manipulation") for `steps` gradient steps.
//
// # Safety
// `ds` must be a live dataset handle, `variant` and `profile`
// NUL-terminated strings and `out` a valid pointer.
enum ArlStatus arl_agent_train(const struct ArlDataset *ds,
                               const char *variant,
                               const char *profile,
                               size_t steps,
                               uint64_t seed,
                               struct ArlAgent **out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ArlStatus arl_agent_load(const char *path, struct ArlAgent **out);

// # Safety
// `agent` must be a live agent handle and `path` a NUL-terminated string.
enum ArlStatus arl_agent_save(const struct ArlAgent *agent, const char *path);

// # Safety
// `agent` must be null or a handle not yet freed.
void arl_agent_free(struct ArlAgent *agent);

// State dimension; 0 for a null handle.
//
// # Safety
// `agent` must be null or a live agent handle.
size_t arl_agent_state_dim(const struct ArlAgent *agent);

// Action dimension; 0 for a null handle.
//
// # Safety
// `agent` must be null or a live agent handle.
size_t arl_agent_action_dim(const struct ArlAgent *agent);

// Writes the action for state `s` and goal `g` (both `state_dim` long)
// into `action` (`action_len` must equal the action dimension).
// Stochastic actions draw from a stream seeded by `seed`.
//
// # Safety
// Pointers must reference arrays of the stated lengths.
enum ArlStatus arl_agent_act(const struct ArlAgent *agent,
                             const double *s,
                             const double *g,
                             size_t state_dim,
                             bool deterministic,
                             uint64_t seed,
                             double *action,
                             size_t action_len);

// Low-level values `V_l(s_i, gs_i)` for `rows` row-major pairs.
//
// # Safety
// `s` and `gs` must hold `rows * state_dim` values and `out` `rows`.
enum ArlStatus arl_agent_low_value(const struct ArlAgent *agent,
                                   const double *s,
                                   const double *gs,
                                   size_t rows,
                                   double *out);

// Runs the finite-MDP sweep and returns one JSON record per line in a
// string released with [`arl_string_free`].
//
// # Safety
// `out` must be a valid pointer.
enum ArlStatus arl_tabular_sweep(size_t instances, size_t max_states, uint64_t seed, char **out);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void arl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARL_H */
