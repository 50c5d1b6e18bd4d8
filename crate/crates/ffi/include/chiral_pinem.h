#ifndef CHIRAL_PINEM_H
#define CHIRAL_PINEM_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen at build time. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_NULL_POINTER = 1,
  CP_STATUS_INVALID_ARGUMENT = 2,
  CP_STATUS_SHAPE_MISMATCH = 3,
  CP_STATUS_POLE = 4,
  CP_STATUS_NUMERICAL = 5,
  CP_STATUS_FORMAT = 6,
  CP_STATUS_IO = 7,
  CP_STATUS_BUFFER_TOO_SMALL = 8,
  CP_STATUS_PANIC = 9,
} CpStatus;

typedef enum CpInteriorProfile {
  CP_INTERIOR_PROFILE_RIM_MATCHED = 0,
  CP_INTERIOR_PROFILE_SPP_WAVENUMBER = 1,
} CpInteriorProfile;

typedef enum CpChannels {
  CP_CHANNELS_ALL = 0,
  CP_CHANNELS_INELASTIC = 1,
} CpChannels;

typedef enum CpDensityProfile {
  CP_DENSITY_PROFILE_EXPONENTIAL = 0,
  CP_DENSITY_PROFILE_GAUSSIAN = 1,
  CP_DENSITY_PROFILE_POINT = 2,
} CpDensityProfile;

/**
 * Opaque interaction field.
 */
typedef struct CpBeta CpBeta;

/**
 * Opaque far-field map.
 */
typedef struct CpFarField CpFarField;

/**
 * Opaque sideband set.
 */
typedef struct CpSidebands CpSidebands;

/**
 * Inputs of a single-pulse `β` synthesis. Fill with [`cp_beta_params_default`].
 */
typedef struct CpBetaParams {
  size_t nx;
  size_t ny;
  double half_width_x;
  double half_width_y;
  double hole_radius;
  double center_x;
  double center_y;
  double photon_ev;
  double eps_metal_re;
  double eps_metal_im;
  double eps_dielectric;
  /**
   * Intensity propagation length; 0 keeps the dispersion damping.
   */
  double spp_decay_length;
  /**
   * Circular amplitudes; normalised on use.
   */
  double a_plus_re;
  double a_plus_im;
  double a_minus_re;
  double a_minus_im;
  double a_re;
  double a_im;
  double b_re;
  double b_im;
  enum CpInteriorProfile interior_profile;
} CpBetaParams;

typedef struct CpDetector {
  /**
   * 1/m.
   */
  double broadening_sigma;
  double aperture_radius;
  double transmissivity;
  size_t padding;
  enum CpChannels channels;
} CpDetector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *cp_last_error(void);

/**
 * Library version, static string.
 */
const char *cp_version(void);

/**
 * Defaults: 256² grid of half-width 2 µm, 0.4 µm hole, 1.57 eV, Ag/Si₃N₄
 * stand-in permittivities, σ = +1, `A = 0`, `B = 0.5`.
 *
 * # Safety
 * `out` must point to writable memory for one `CpBetaParams`.
 */
enum CpStatus cp_beta_params_default(struct CpBetaParams *out);

/**
 * # Safety
 * `params` must be valid; `out` must be writable. On success `*out` owns a
 * handle to be released with [`cp_beta_free`].
 */
enum CpStatus cp_beta_synthesize(const struct CpBetaParams *params, struct CpBeta **out);

/**
 * Wraps caller data: `values` holds `2·nx·ny` interleaved doubles.
 *
 * # Safety
 * `values` must be readable for `2·nx·ny` doubles; `out` must be writable.
 */
enum CpStatus cp_beta_from_values(size_t nx,
                                  size_t ny,
                                  double half_width_x,
                                  double half_width_y,
                                  const double *values,
                                  struct CpBeta **out);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum CpStatus cp_beta_read(const char *path, struct CpBeta **out);

/**
 * # Safety
 * `beta` must be a live handle; `path` a NUL-terminated UTF-8 string.
 */
enum CpStatus cp_beta_write(const struct CpBeta *beta, const char *path);

/**
 * # Safety
 * `beta` must be a live handle; `nx` and `ny` writable.
 */
enum CpStatus cp_beta_dims(const struct CpBeta *beta, size_t *nx, size_t *ny);

/**
 * Copies `β` as `2·nx·ny` interleaved doubles.
 *
 * # Safety
 * `beta` must be a live handle; `out` writable for `len` doubles.
 */
enum CpStatus cp_beta_copy_values(const struct CpBeta *beta, double *out, size_t len);

/**
 * # Safety
 * `beta` must be a live handle; `charge` and `residual` writable.
 */
enum CpStatus cp_topological_charge(const struct CpBeta *beta,
                                    double loop_radius,
                                    int32_t *charge,
                                    double *residual);

/**
 * `(P₊₁ − P₋₁)/(P₊₁ + P₋₁)` of `β` over the annulus `[inner, outer]`.
 *
 * # Safety
 * `beta` must be a live handle; `out` writable.
 */
enum CpStatus cp_helicity(const struct CpBeta *beta, double inner, double outer, double *out);

/**
 * # Safety
 * `beta` must be null or a handle from this library; it is invalid afterwards.
 */
void cp_beta_free(struct CpBeta *beta);

/**
 * Builds `ψ_ℓ` for `|ℓ| ≤ l_max` (0 selects the truncation rule) from a
 * Gaussian incident wave of waist `coherence` centred on `(center_x,
 * center_y)`; `coherence ≤ 0` selects a uniform wave.
 *
 * # Safety
 * `beta` must be a live handle; `out` writable.
 */
enum CpStatus cp_sidebands_build(const struct CpBeta *beta,
                                 double coherence,
                                 double center_x,
                                 double center_y,
                                 size_t l_max,
                                 struct CpSidebands **out);

/**
 * # Safety
 * `s` must be a live handle.
 */
size_t cp_sidebands_l_max(const struct CpSidebands *s);

/**
 * `Σ |ψ_ℓ|²` over the selected channels, `nx·ny` doubles.
 *
 * # Safety
 * `s` must be a live handle; `out` writable for `len` doubles.
 */
enum CpStatus cp_energy_filtered_map(const struct CpSidebands *s,
                                     enum CpChannels channels,
                                     double *out,
                                     size_t len);

/**
 * # Safety
 * `s` must be null or a handle from this library; it is invalid afterwards.
 */
void cp_sidebands_free(struct CpSidebands *s);

/**
 * Detector defaults: σ = 0.35 µm⁻¹, 7.5 µm aperture, T = 0.013, padding 2,
 * inelastic channels.
 *
 * # Safety
 * `out` must be writable.
 */
enum CpStatus cp_detector_default(struct CpDetector *out);

/**
 * # Safety
 * `s` must be a live handle, `detector` valid, `out` writable.
 */
enum CpStatus cp_far_field(const struct CpSidebands *s,
                           const struct CpDetector *detector,
                           double hole_radius,
                           double center_x,
                           double center_y,
                           struct CpFarField **out);

/**
 * # Safety
 * `f` must be a live handle; `nkx` and `nky` writable.
 */
enum CpStatus cp_far_field_dims(const struct CpFarField *f, size_t *nkx, size_t *nky);

/**
 * Copies the broadened (`broadened != 0`) or raw intensity, `nkx·nky` doubles,
 * `k = 0` at `(nky/2, nkx/2)`.
 *
 * # Safety
 * `f` must be a live handle; `out` writable for `len` doubles.
 */
enum CpStatus cp_far_field_copy_intensity(const struct CpFarField *f,
                                          int32_t broadened,
                                          double *out,
                                          size_t len);

/**
 * Momentum axes in 1/m.
 *
 * # Safety
 * `f` must be a live handle; `kx` writable for `nkx`, `ky` for `nky` doubles.
 */
enum CpStatus cp_far_field_axes(const struct CpFarField *f,
                                double *kx,
                                size_t nkx,
                                double *ky,
                                size_t nky);

/**
 * Inelastic share of the intensity passed by the detector mask.
 *
 * # Safety
 * `f` must be a live handle.
 */
double cp_far_field_inelastic_fraction(const struct CpFarField *f);

/**
 * # Safety
 * `f` must be null or a handle from this library; it is invalid afterwards.
 */
void cp_far_field_free(struct CpFarField *f);

/**
 * Orbital magnetic moment of a proton in an OAM state, default quadrature.
 *
 * # Safety
 * `mu_over_mu_n` and `defect` must be writable (`defect` may be null).
 */
enum CpStatus cp_proton_moment(int32_t l,
                               double waist,
                               double rms_radius,
                               enum CpDensityProfile profile,
                               double *mu_over_mu_n,
                               double *defect);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHIRAL_PINEM_H */
