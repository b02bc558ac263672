#ifndef OTKIT_H
#define OTKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum OtkStatus {
  Ok = 0,
  InvalidInput = 1,
  NotConverged = 2,
  NullPointer = 3,
  Singular = 4,
  Infeasible = 5,
} OtkStatus;

/**
 * Opaque dense cost matrix.
 */
typedef struct OtkCost OtkCost;

/**
 * Opaque convex polygonal density.
 */
typedef struct OtkDensity OtkDensity;

/**
 * Opaque site set.
 */
typedef struct OtkSites OtkSites;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Never null; empty
 * string when no failure occurred yet.
 */
const char *otk_last_error_message(void);

/**
 * Build a cost matrix from a row-major `rows x cols` array.
 * Returns null on invalid input (see `otk_last_error_message`).
 */
struct OtkCost *otk_cost_new(const double *values, size_t rows, size_t cols);

void otk_cost_free(struct OtkCost *cost);

/**
 * Solve the assignment problem at a fixed eps > 0 from zero prices.
 * `out_sigma` and `out_psi` must hold N entries each.
 */
enum OtkStatus otk_assign(const struct OtkCost *cost,
                          double epsilon,
                          size_t *out_sigma,
                          double *out_psi);

/**
 * Solve the assignment problem to eta-optimality with eps-scaling.
 */
enum OtkStatus otk_assign_scaled(const struct OtkCost *cost,
                                 double eta,
                                 size_t *out_sigma,
                                 double *out_psi);

/**
 * Entropic discrete transport. `mu` has N entries, `nu` has M entries,
 * `out_plan` holds N*M row-major entries; `out_phi` (N) and `out_psi` (M)
 * may be null when not wanted. Returns `NotConverged` with the partial
 * plan written when the iteration cap is hit.
 */
enum OtkStatus otk_sinkhorn(const struct OtkCost *cost,
                            const double *mu,
                            const double *nu,
                            double eta,
                            double tol,
                            size_t max_iter,
                            double *out_plan,
                            double *out_phi,
                            double *out_psi);

/**
 * Build a polygonal density. `polygon` holds `n_vertices` interleaved x,y
 * pairs (counterclockwise convex), `triangles` holds `n_triangles` index
 * triples into the polygon, `densities` one value per triangle.
 */
struct OtkDensity *otk_density_new(const double *polygon,
                                   size_t n_vertices,
                                   const size_t *triangles,
                                   size_t n_triangles,
                                   const double *densities);

/**
 * Uniform density on the unit square.
 */
struct OtkDensity *otk_density_unit_square(void);

void otk_density_free(struct OtkDensity *density);

/**
 * Build a site set from `n` interleaved x,y pairs.
 */
struct OtkSites *otk_sites_new(const double *coords, size_t n);

void otk_sites_free(struct OtkSites *sites);

/**
 * Laguerre cell masses at prices `psi` (N entries); fills `out_masses` (N).
 */
enum OtkStatus otk_laguerre_masses(const struct OtkSites *sites,
                                   const struct OtkDensity *density,
                                   const double *psi,
                                   double *out_masses);

/**
 * Damped Newton for G(psi) = nu on the exact geometry; writes the
 * mean-zero prices into `out_psi` (N entries).
 */
enum OtkStatus otk_semidiscrete_newton(const struct OtkSites *sites,
                                       const struct OtkDensity *density,
                                       const double *nu,
                                       double eta_tol,
                                       double *out_psi);

/**
 * Oliker-Prussner coordinate decrements down to mass tolerance `delta`;
 * writes the anchored prices (psi[0] = 0) into `out_psi`.
 */
enum OtkStatus otk_semidiscrete_op(const struct OtkSites *sites,
                                   const struct OtkDensity *density,
                                   const double *nu,
                                   double delta,
                                   double *out_psi);

/**
 * Entropic semi-discrete solve at regularization `eta` with a degree-5
 * triangle rule refined `quad_level` times; writes mean-zero prices.
 */
enum OtkStatus otk_sd_entropic(const struct OtkSites *sites,
                               const struct OtkDensity *density,
                               const double *nu,
                               double eta,
                               double tol,
                               uint32_t quad_level,
                               double *out_psi);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTKIT_H */
