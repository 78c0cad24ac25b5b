#ifndef CIEST_H
#define CIEST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>

// Result code of every fallible call.
typedef enum CiestStatus {
  CIEST_STATUS_OK = 0,
  // A required pointer argument was NULL.
  CIEST_STATUS_NULL_POINTER = 1,
  // An argument is outside its admissible range or violates a model assumption.
  CIEST_STATUS_INVALID_PARAMETER = 2,
  // The linearized dynamics are not Hurwitz.
  CIEST_STATUS_UNSTABLE = 3,
  // A numerical routine failed.
  CIEST_STATUS_NUMERIC = 4,
  // A Rust panic was caught at the boundary.
  CIEST_STATUS_PANIC = 5,
} CiestStatus;

// Undirected communication graph.
typedef struct CiestGraph CiestGraph;

// Scalar noise density.
typedef struct CiestNoise CiestNoise;

// Odd, bounded, nondecreasing map applied to innovations and consensus terms.
typedef struct CiestNonlinearity CiestNonlinearity;

// Per-node asymptotic variance across the k-hop ring family.
typedef struct CiestSweep CiestSweep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version string of the library, static and NUL-terminated.
const char *ciest_version(void);

// Copies the calling thread's last error message into `buf` and returns the
// buffer size needed for the full message including its terminating NUL.
// The copy is truncated to `cap` bytes and always NUL-terminated when
// `cap > 0`. An empty message means the last call succeeded.
//
// # Safety
// `buf` must be NULL or point to at least `cap` writable bytes.
size_t ciest_last_error(char *buf, size_t cap);

// Ring on `n` agents where each agent links to the `k` nearest agents on each side.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum CiestStatus ciest_graph_new_ring_khop(size_t n, size_t k, struct CiestGraph **out);

// Complete graph on `n` agents.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum CiestStatus ciest_graph_new_complete(size_t n, struct CiestGraph **out);

// Graph on `n` agents from `edge_count` zero-based pairs stored flat in `edges`.
//
// # Safety
// `edges` must point to `2 * edge_count` readable values (or be NULL when
// `edge_count` is zero) and `out` must be valid for one handle.
enum CiestStatus ciest_graph_new_from_edges(size_t n,
                                            const size_t *edges,
                                            size_t edge_count,
                                            struct CiestGraph **out);

// # Safety
// `graph` must be NULL or a handle from a `ciest_graph_new_*` call not yet freed.
void ciest_graph_free(struct CiestGraph *graph);

// Number of agents, or 0 for a NULL handle.
//
// # Safety
// `graph` must be NULL or a live graph handle.
size_t ciest_graph_agent_count(const struct CiestGraph *graph);

// Writes the number of connected components to `components`.
//
// # Safety
// `graph` must be a live graph handle and `components` valid for one write.
enum CiestStatus ciest_graph_components(const struct CiestGraph *graph, size_t *components);

// Writes the `n x n` Laplacian into `out` in row-major order.
//
// # Safety
// `graph` must be a live graph handle and `out` must hold `len` writable doubles.
enum CiestStatus ciest_graph_laplacian(const struct CiestGraph *graph, double *out, size_t len);

// Heavy-tailed density `(beta - 1) / (2 (1 + |w|)^beta)`, `beta > 2`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum CiestStatus ciest_noise_new_heavy_tail(double beta, struct CiestNoise **out);

// Zero-mean Gaussian with standard deviation `sigma`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum CiestStatus ciest_noise_new_gaussian(double sigma, struct CiestNoise **out);

// # Safety
// `noise` must be NULL or a handle from a `ciest_noise_new_*` call not yet freed.
void ciest_noise_free(struct CiestNoise *noise);

// Density at `w`, or NaN for a NULL handle.
//
// # Safety
// `noise` must be NULL or a live noise handle.
double ciest_noise_pdf(const struct CiestNoise *noise, double w);

// Distribution function at `w`, or NaN for a NULL handle.
//
// # Safety
// `noise` must be NULL or a live noise handle.
double ciest_noise_cdf(const struct CiestNoise *noise, double w);

// `sign(w)` with `sign(0) = 0`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum CiestStatus ciest_nonlinearity_new_sign(struct CiestNonlinearity **out);

// `clamp(w, -tau, tau)`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum CiestStatus ciest_nonlinearity_new_clip(double tau, struct CiestNonlinearity **out);

// Symmetric quantizer with strictly increasing positive `thresholds`.
//
// # Safety
// `thresholds` must point to `len` readable doubles and `out` must be valid
// for one handle.
enum CiestStatus ciest_nonlinearity_new_quantizer(const double *thresholds,
                                                  size_t len,
                                                  struct CiestNonlinearity **out);

// # Safety
// `nl` must be NULL or a handle from a `ciest_nonlinearity_new_*` call not yet freed.
void ciest_nonlinearity_free(struct CiestNonlinearity *nl);

// Value of the map at `w`, or NaN for a NULL handle.
//
// # Safety
// `nl` must be NULL or a live nonlinearity handle.
double ciest_nonlinearity_apply(const struct CiestNonlinearity *nl, double w);

// Slope at zero of the noise-smoothed map and the effective variance
// `E[psi(W)^2]` under `noise`.
//
// # Safety
// `nl` and `noise` must be live handles; `slope` and `variance` must each be
// valid for one write.
enum CiestStatus ciest_nonlinearity_moments(const struct CiestNonlinearity *nl,
                                            const struct CiestNoise *noise,
                                            double *slope,
                                            double *variance);

// Solves `A X + X A' + Q = 0` for an `n x n` Hurwitz `A`. All buffers are
// row-major with `n * n` entries.
//
// # Safety
// `a` and `q` must each point to `n * n` readable doubles and `x` to `n * n`
// writable doubles.
enum CiestStatus ciest_lyapunov_solve(size_t n, const double *a, const double *q, double *x);

// Asymptotic covariance `S` of the scaled estimation error with independent
// observation and communication noise.
//
// `h` holds one observation row of length `m` per agent, row-major
// (`agent_count * m` entries). `trace_over_n` receives `Tr(S) / N`. When `s`
// is not NULL it receives the full `(N m) x (N m)` matrix row-major and
// `s_len` must equal its entry count.
//
// # Safety
// All handles must be live. `h` must point to `agent_count * m` readable
// doubles, `trace_over_n` must be valid for one write and `s` must be NULL or
// point to `s_len` writable doubles.
enum CiestStatus ciest_asymptotic_covariance(const struct CiestGraph *graph,
                                             const struct CiestNonlinearity *psi_c,
                                             const struct CiestNonlinearity *psi_o,
                                             const struct CiestNoise *noise_c,
                                             const struct CiestNoise *noise_o,
                                             double a,
                                             double b,
                                             const double *h,
                                             size_t m,
                                             double *trace_over_n,
                                             double *s,
                                             size_t s_len);

// Closed-form per-node variance over the k-hop rings on `n` agents (odd),
// with sign maps and heavy-tailed noise of exponent `beta` on both channels
// and common scalar observation gain `h`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum CiestStatus ciest_sweep_new(size_t n,
                                 double beta,
                                 double a,
                                 double b,
                                 double h,
                                 struct CiestSweep **out);

// # Safety
// `sweep` must be NULL or a handle from [`ciest_sweep_new`] not yet freed.
void ciest_sweep_free(struct CiestSweep *sweep);

// Number of rows (degrees `2, 4, ..., n - 1`), or 0 for a NULL handle.
//
// # Safety
// `sweep` must be NULL or a live sweep handle.
size_t ciest_sweep_len(const struct CiestSweep *sweep);

// Row `index`: degree, per-node variance (NaN when unstable) and stability flag.
//
// # Safety
// `sweep` must be a live sweep handle and each output pointer valid for one write.
enum CiestStatus ciest_sweep_row(const struct CiestSweep *sweep,
                                 size_t index,
                                 size_t *degree,
                                 double *variance,
                                 bool *stable);

// Degree minimizing the per-node variance over stable rows. Returns
// `Unstable` when no row is stable.
//
// # Safety
// `sweep` must be a live sweep handle and `degree` valid for one write.
enum CiestStatus ciest_sweep_argmin(const struct CiestSweep *sweep, size_t *degree);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CIEST_H */
