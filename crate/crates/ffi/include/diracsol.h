#ifndef DIRACSOL_H
#define DIRACSOL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID = 2,
  DS_STATUS_NUMERICAL = 3,
  DS_STATUS_ACCEPTANCE = 4,
  DS_STATUS_IO = 5,
  DS_STATUS_PANIC = 6,
} DsStatus;

/**
 * A phase-space state together with its charge density and integrator.
 */
typedef struct DsSimulation DsSimulation;

/**
 * Spectral matrices at fixed |v|.
 */
typedef struct DsSpectral DsSpectral;

/**
 * Charge density ρ = (ρ₁, 0, 0, 0), ρ₁ a Gaussian of width `sigma`.
 */
typedef struct DsCharge {
  double amplitude;
  double sigma;
  double mass;
} DsCharge;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length.
 */
size_t ds_last_error(char *buf, size_t len);

/**
 * Soliton state S(b, v) on an N³ grid of side L. `b` and `v` point at three
 * doubles each.
 */
enum DsStatus ds_simulation_new_soliton(double box_length,
                                        size_t n,
                                        struct DsCharge rho,
                                        const double *b,
                                        const double *v,
                                        struct DsSimulation **out);

void ds_simulation_free(struct DsSimulation *sim);

/**
 * Advances `steps` steps of size `dt`.
 */
enum DsStatus ds_simulation_step(struct DsSimulation *sim, double dt, size_t steps);

/**
 * Elapsed time, particle position and momentum (`q`, `p` hold three doubles).
 */
enum DsStatus ds_simulation_particle(const struct DsSimulation *sim,
                                     double *t,
                                     double *q,
                                     double *p);

enum DsStatus ds_simulation_hamiltonian(const struct DsSimulation *sim, double *out);

/**
 * Symplectic projection onto the solitary manifold. Writes σ = (b, v) into
 * `sigma` (six doubles) and ‖Z‖_{−ν} + |Q| + |P| into `z_norm`.
 */
enum DsStatus ds_simulation_project(const struct DsSimulation *sim,
                                    double nu,
                                    double *sigma,
                                    double *z_norm);

enum DsStatus ds_spectral_new(double speed, struct DsCharge rho, struct DsSpectral **out);

void ds_spectral_free(struct DsSpectral *s);

/**
 * det M(iω + 0), computed directly and from the factorized form. Each output
 * holds two doubles (re, im).
 */
enum DsStatus ds_spectral_det(const struct DsSpectral *s,
                              double omega,
                              double *direct,
                              double *factorized);

/**
 * Branch point μ = m√(1 − v²).
 */
enum DsStatus ds_spectral_mu(const struct DsSpectral *s, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIRACSOL_H */
