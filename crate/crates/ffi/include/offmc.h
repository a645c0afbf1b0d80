/* C interface to the off-policy Monte Carlo evaluation library. */

#ifndef OFFMC_H
#define OFFMC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call in this ABI.
typedef enum OffmcStatus {
  OFFMC_STATUS_OK = 0,
  // A required pointer argument was null.
  OFFMC_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  OFFMC_STATUS_INVALID_UTF8 = 2,
  // Arguments were structurally invalid (shapes, ranges, coverage).
  OFFMC_STATUS_INVALID_ARGUMENT = 3,
  // The computation itself failed; see the last error message.
  OFFMC_STATUS_COMPUTE_FAILED = 4,
  // Reading or writing a file failed.
  OFFMC_STATUS_IO_FAILED = 5,
} OffmcStatus;

// Opaque handle to a finite-horizon MDP.
typedef struct OffmcMdp OffmcMdp;

// Opaque handle to a time-indexed policy.
typedef struct OffmcPolicy OffmcPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *offmc_version(void);

// Copy the last error message of the current thread into `buf`
// (NUL-terminated, truncated to `len` bytes) and return the full message
// length excluding the terminator. `buf` may be null to query the length.
//
// # Safety
// `buf` must be null or point to at least `len` writable bytes.
size_t offmc_last_error_message(char *buf, size_t len);

// Create a random grid world: `n * n` cells, four actions, horizon `n`,
// slip dynamics, seeded rewards normalized to a maximum of 1.
//
// # Safety
// `out` must point to a writable handle slot.
enum OffmcStatus offmc_gridworld_new(size_t n, double slip, uint64_t seed, struct OffmcMdp **out);

// Load an MDP from its JSON file format.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be writable.
enum OffmcStatus offmc_mdp_load_json(const char *path, struct OffmcMdp **out);

// Write an MDP to its JSON file format.
//
// # Safety
// `mdp` must be a live handle; `path` a valid NUL-terminated string.
enum OffmcStatus offmc_mdp_save_json(const struct OffmcMdp *mdp, const char *path);

// Release an MDP handle (null is a no-op).
//
// # Safety
// `mdp` must be null or a handle obtained from this library, freed once.
void offmc_mdp_free(struct OffmcMdp *mdp);

// Fetch the state, action, and horizon counts of an MDP.
//
// # Safety
// All pointers must be valid.
enum OffmcStatus offmc_mdp_shape(const struct OffmcMdp *mdp,
                                 size_t *num_states,
                                 size_t *num_actions,
                                 size_t *horizon);

// Draw a random full-support policy for this MDP.
//
// # Safety
// `mdp` must be a live handle; `out` must be writable.
enum OffmcStatus offmc_random_policy(const struct OffmcMdp *mdp,
                                     uint64_t seed,
                                     struct OffmcPolicy **out);

// Load a policy from its JSON file format.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be writable.
enum OffmcStatus offmc_policy_load_json(const char *path, struct OffmcPolicy **out);

// Write a policy to its JSON file format.
//
// # Safety
// `policy` must be a live handle; `path` a valid NUL-terminated string.
enum OffmcStatus offmc_policy_save_json(const struct OffmcPolicy *policy, const char *path);

// Release a policy handle (null is a no-op).
//
// # Safety
// `policy` must be null or a handle obtained from this library, freed once.
void offmc_policy_free(struct OffmcPolicy *policy);

// Exact total-rewards value J(pi) by dynamic programming.
//
// # Safety
// All handles must be live; `out` must be writable.
enum OffmcStatus offmc_exact_value(const struct OffmcMdp *mdp,
                                   const struct OffmcPolicy *pi,
                                   double *out);

// Exact variance of the per-decision importance-sampling estimator that
// executes `mu` to evaluate `pi`, marginalized over the initial
// distribution.
//
// # Safety
// All handles must be live; `out` must be writable.
enum OffmcStatus offmc_pdis_variance(const struct OffmcMdp *mdp,
                                     const struct OffmcPolicy *pi,
                                     const struct OffmcPolicy *mu,
                                     double *out);

// The globally variance-optimal behavior policy for `pi`.
//
// # Safety
// All handles must be live; `out` must be writable.
enum OffmcStatus offmc_optimal_behavior(const struct OffmcMdp *mdp,
                                        const struct OffmcPolicy *pi,
                                        struct OffmcPolicy **out);

// The locally optimal behavior policy (proportional to `pi sqrt(q^)`),
// computed exactly from the MDP.
//
// # Safety
// All handles must be live; `out` must be writable.
enum OffmcStatus offmc_mu_hat_exact(const struct OffmcMdp *mdp,
                                    const struct OffmcPolicy *pi,
                                    struct OffmcPolicy **out);

// Learn a behavior policy from `num_tuples` freshly generated offline
// tuples using tabular features and default hyperparameters.
//
// # Safety
// All handles must be live; `out` must be writable.
enum OffmcStatus offmc_learn_behavior(const struct OffmcMdp *mdp,
                                      const struct OffmcPolicy *pi,
                                      size_t num_tuples,
                                      uint64_t seed,
                                      struct OffmcPolicy **out);

// Run the adaptive (UCB) evaluator for `episodes` episodes and return the
// pooled estimate of J(pi).
//
// # Safety
// All handles must be live; `out` must be writable.
enum OffmcStatus offmc_adaptive_estimate(const struct OffmcMdp *mdp,
                                         const struct OffmcPolicy *pi,
                                         const struct OffmcPolicy *mu_hat,
                                         size_t episodes,
                                         double ucb_c,
                                         uint64_t seed,
                                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OFFMC_H */
