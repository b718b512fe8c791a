#ifndef TROTTERQ_H
#define TROTTERQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum TqStatus {
  TQ_STATUS_OK = 0,
  TQ_STATUS_NULL_POINTER = 1,
  TQ_STATUS_DIMENSION = 2,
  TQ_STATUS_INVALID_SIZE = 3,
  TQ_STATUS_VALIDATION = 4,
  TQ_STATUS_DOMAIN = 5,
  TQ_STATUS_CONFIG = 6,
  TQ_STATUS_LINALG = 7,
  TQ_STATUS_REFUSED = 8,
  TQ_STATUS_IO = 9,
  TQ_STATUS_PANIC = 10,
  TQ_STATUS_OTHER = 11,
} TqStatus;

// Opaque system Hamiltonian.
typedef struct TqHamiltonian TqHamiltonian;

// Opaque propagator: a system Hamiltonian, a mode and a slice duration.
typedef struct TqPropagator TqPropagator;

// GRAPE settings. `order` follows `tq_propagator_new`.
typedef struct TqGrapeOptions {
  uint32_t order;
  size_t slices;
  double tau;
  // Scale of the random initial amplitudes, rad/s.
  double initial_amplitude;
  uint64_t seed;
  size_t max_iters;
  double stop_fidelity;
} TqGrapeOptions;

// Outcome of one optimization.
typedef struct TqGrapeResult {
  size_t iterations;
  // 0 converged, 1 iteration limit, 2 stalled.
  uint32_t status;
  // Fidelity under the optimization mode.
  double estimated_fidelity;
  // Fidelity under exact propagation.
  double true_fidelity;
  double wall_time_s;
} TqGrapeResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a success.
//
// The pointer stays valid until the next `tq_*` call on the same thread.
const char *tq_last_error(void);

// Library version as a static NUL-terminated string.
const char *tq_version(void);

// Seeded random Ising Hamiltonian on `n >= 2` qubits.
//
// # Safety
// `out` must point to writable storage for one handle.
enum TqStatus tq_hamiltonian_random_ising(size_t n, uint64_t seed, struct TqHamiltonian **out);

// NMR Hamiltonian from Larmor frequencies and J couplings, both in Hz.
//
// `couplings_hz` is a symmetric `n x n` row-major matrix with zero diagonal.
//
// # Safety
// `larmor_hz` must hold `n` values, `couplings_hz` `n * n`, and `out` must be writable.
enum TqStatus tq_hamiltonian_nmr(size_t n,
                                 const double *larmor_hz,
                                 const double *couplings_hz,
                                 struct TqHamiltonian **out);

// Four-qubit Heisenberg square with coupling `j` and field `bz`.
//
// # Safety
// `out` must point to writable storage for one handle.
enum TqStatus tq_hamiltonian_heisenberg_square(double j, double bz, struct TqHamiltonian **out);

// Number of qubits, or 0 for a null handle.
//
// # Safety
// `h` must be null or a live handle.
size_t tq_hamiltonian_qubits(const struct TqHamiltonian *h);

// # Safety
// `h` must be null or a handle not yet freed.
void tq_hamiltonian_free(struct TqHamiltonian *h);

// Builds a propagator. `order` 0 is exact propagation, 1 to 4 a Trotter order.
//
// The handle keeps its own copy of the Hamiltonian.
//
// # Safety
// `h` must be a live handle and `out` writable.
enum TqStatus tq_propagator_new(const struct TqHamiltonian *h,
                                uint32_t order,
                                double tau,
                                struct TqPropagator **out);

// # Safety
// `p` must be null or a handle not yet freed.
void tq_propagator_free(struct TqPropagator *p);

// Full propagator of a pulse with `slices` slices.
//
// `amplitudes` holds `slices * n * 2` values in rad/s; `out` receives
// `2 * 4^n` doubles.
//
// # Safety
// `p` must be a live handle and both buffers must have the stated lengths.
enum TqStatus tq_propagator_evolve(const struct TqPropagator *p,
                                   const double *amplitudes,
                                   size_t slices,
                                   double *out);

// Phase-insensitive infidelity `1 - |tr(A^dagger B)|^2 / d^2` of two `dim x dim` unitaries.
//
// # Safety
// `a` and `b` must hold `2 * dim * dim` doubles and `out` must be writable.
enum TqStatus tq_propagator_infidelity(const double *a, const double *b, size_t dim, double *out);

// State-to-state GRAPE from `initial` to `target` (each `2 * 2^n` doubles).
//
// The optimized amplitudes (`slices * n * 2` doubles) go to `amplitudes_out`
// when it is non-null.
//
// # Safety
// All non-null buffers must have the stated lengths; `h`, `options` and
// `result` must be valid.
enum TqStatus tq_grape_state_transfer(const struct TqHamiltonian *h,
                                      const double *initial,
                                      const double *target,
                                      const struct TqGrapeOptions *options,
                                      double *amplitudes_out,
                                      struct TqGrapeResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TROTTERQ_H */
