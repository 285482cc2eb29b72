#ifndef RSMA_MC_H
#define RSMA_MC_H

#include <stdbool.h>
#include <stdint.h>

// Rate-splitting with multi-connectivity.
#define RSMA_SCHEME_MC_RSMA 0

// Time division, both APs decode.
#define RSMA_SCHEME_MC_TDM 1

// Time division, each UE served by its own AP.
#define RSMA_SCHEME_SC_TDM 2

typedef enum RsmaStatus {
  RSMA_STATUS_OK = 0,
  RSMA_STATUS_NULL_POINTER = 1,
  RSMA_STATUS_INVALID_ARGUMENT = 2,
  RSMA_STATUS_CONFIG = 3,
  RSMA_STATUS_INFEASIBLE = 4,
  RSMA_STATUS_SOLVER = 5,
  RSMA_STATUS_PANIC = 6,
} RsmaStatus;

// Power allocation and service rates for one operating point.
typedef struct RsmaAllocation RsmaAllocation;

// System configuration.
typedef struct RsmaConfig RsmaConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *rsma_last_error_message(void);

// Symmetric setup: unit direct gains and noise, `cross_gain` off the
// diagonal, transmit power `snr_db` above the noise.
//
// # Safety
// `out` must be a valid pointer to writable storage.
enum RsmaStatus rsma_config_symmetric(double snr_db, double cross_gain, struct RsmaConfig **out);

// Load a `key = value` configuration file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum RsmaStatus rsma_config_from_file(const char *path,
                                      bool allow_short_blocklength,
                                      struct RsmaConfig **out);

// # Safety
// `cfg` must come from an `rsma_config_*` constructor, or be NULL.
void rsma_config_free(struct RsmaConfig *cfg);

// Max-min LC allocation for per-UE arrivals `a_hc[2]` and `a_lc[2]` in
// packets/slot.
//
// # Safety
// `cfg` must be a live handle, `a_hc` and `a_lc` must point to two doubles
// each and `out` must be writable.
enum RsmaStatus rsma_solve(const struct RsmaConfig *cfg,
                           uint32_t scheme,
                           const double *a_hc,
                           const double *a_lc,
                           struct RsmaAllocation **out);

// # Safety
// `alloc` must come from [`rsma_solve`], or be NULL.
void rsma_allocation_free(struct RsmaAllocation *alloc);

// Common and private powers per UE. For the time-division schemes `pc`
// holds the HC-phase powers and `pp` the LC-phase powers.
//
// # Safety
// `alloc` must be live; `pc` and `pp` must each hold two doubles.
enum RsmaStatus rsma_allocation_powers(const struct RsmaAllocation *alloc, double *pc, double *pp);

// HC and LC service per UE in packets/slot.
//
// # Safety
// `alloc` must be live; `hc` and `lc` must each hold two doubles.
enum RsmaStatus rsma_allocation_service(const struct RsmaAllocation *alloc, double *hc, double *lc);

// Max-min LC rate in bits/s; NaN for a NULL handle.
//
// # Safety
// `alloc` must be live or NULL.
double rsma_allocation_objective(const struct RsmaAllocation *alloc);

// SCA iterations; 0 for the time-division schemes.
//
// # Safety
// `alloc` must be live or NULL.
uint32_t rsma_allocation_iterations(const struct RsmaAllocation *alloc);

// # Safety
// `alloc` must be live or NULL.
bool rsma_allocation_converged(const struct RsmaAllocation *alloc);

// HC time share of a time-division allocation; NaN for rate-splitting.
//
// # Safety
// `alloc` must be live or NULL.
double rsma_allocation_alpha(const struct RsmaAllocation *alloc);

// Largest symmetric HC load with any feasible allocation, packets/slot.
//
// # Safety
// `cfg` must be live and `out` writable.
enum RsmaStatus rsma_hc_intercept(const struct RsmaConfig *cfg,
                                  uint32_t scheme,
                                  double tol,
                                  double *out);

// Inverse Gaussian tail function.
//
// # Safety
// `out` must be writable.
enum RsmaStatus rsma_q_inverse(double p, double *out);

// Finite-blocklength rate in bits/s at SINR `gamma`. A `blocklength` of 0
// selects the Shannon rate.
//
// # Safety
// `out` must be writable.
enum RsmaStatus rsma_fbl_rate(double gamma,
                              double epsilon,
                              uint32_t blocklength,
                              double bandwidth_hz,
                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSMA_MC_H */
