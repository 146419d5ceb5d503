#ifndef RANDSWITCH_H
#define RANDSWITCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RsStatus {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_INVALID_ARGUMENT = 2,
  RS_STATUS_INFEASIBLE_MOMENTS = 3,
  RS_STATUS_NUMERICAL = 4,
  RS_STATUS_BUFFER_TOO_SMALL = 5,
  RS_STATUS_PARSE = 6,
  RS_STATUS_PANIC = 7,
} RsStatus;

// Two-topology switched linear converter.
typedef struct RsConverter RsConverter;

// Pulse-length distribution.
typedef struct RsDist RsDist;

// Generated switching sequence.
typedef struct RsSequence RsSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static string.
const char *rs_version(void);

// Message of the last failed call on this thread, or NULL. The caller owns
// the string and releases it with [`rs_string_free`].
char *rs_last_error(void);

// # Safety
// `s` must be NULL or a string returned by this library.
void rs_string_free(char *s);

// Parses a distribution spec such as `huffman:32` or `uniform:1:5`.
//
// # Safety
// `spec` must be a NUL-terminated string; `out` must be writable.
enum RsStatus rs_dist_parse(const char *spec, struct RsDist **out);

// Maximum-entropy distribution on `[lmin, lmax]` with moments `l1`, `l2`.
//
// # Safety
// `out` must be writable.
enum RsStatus rs_dist_canonical(double l1,
                                double l2,
                                uint32_t lmin,
                                uint32_t lmax,
                                struct RsDist **out);

// # Safety
// `dist` must be a live handle; the output pointers must be writable.
enum RsStatus rs_dist_moments(const struct RsDist *dist,
                              double *mean,
                              double *second,
                              double *variance);

// JSON form of the distribution; release with [`rs_string_free`].
//
// # Safety
// `dist` must be a live handle; `out` must be writable.
enum RsStatus rs_dist_to_json(const struct RsDist *dist, char **out);

// # Safety
// `dist` must be NULL or a handle not yet freed.
void rs_dist_free(struct RsDist *dist);

// RS spectrum at `n` frequencies. `noise_out` receives `n` values; the DC
// weight goes to `dc_out` unless it is NULL.
//
// # Safety
// `freqs` and `noise_out` must hold `n` values.
enum RsStatus rs_psd_rs(double p,
                        uint32_t l,
                        double t_eps,
                        const double *freqs,
                        size_t n,
                        double *noise_out,
                        double *dc_out);

// FRS spectrum at `n` frequencies.
//
// # Safety
// `dist` must be a live handle; `freqs` and `noise_out` must hold `n` values.
enum RsStatus rs_psd_frs(double p,
                         const struct RsDist *dist,
                         double t_eps,
                         const double *freqs,
                         size_t n,
                         double *noise_out,
                         double *dc_out);

// Lorentzian envelope parameters `G` and `w` (rad/s).
//
// # Safety
// `dist` must be a live handle; `g` and `w` must be writable.
enum RsStatus rs_envelope_fit(double p,
                              const struct RsDist *dist,
                              double t_eps,
                              double *g,
                              double *w);

// Total power of a sampled spectrum: quadrature, tail estimate and DC weight.
//
// # Safety
// `freqs` and `noise` must hold `n` values; `out` must be writable.
enum RsStatus rs_total_psd(const double *freqs,
                           const double *noise,
                           size_t n,
                           double dc_weight,
                           double *out);

// Monte-Carlo periodogram estimate. Points with `|f|` below `*dc_cutoff_out`
// lie in the finite-record DC lobe.
//
// # Safety
// `dist` must be a live handle; `freqs` and `noise_out` must hold `n` values.
enum RsStatus rs_mc_psd(double p,
                        const struct RsDist *dist,
                        double t_eps,
                        size_t n_pulses,
                        size_t n_trials,
                        uint64_t seed,
                        const double *freqs,
                        size_t n,
                        double *noise_out,
                        double *dc_cutoff_out);

// # Safety
// `dist` must be a live handle; `out` must be writable.
enum RsStatus rs_sequence_generate(double p,
                                   const struct RsDist *dist,
                                   double t_eps,
                                   size_t n_pulses,
                                   uint64_t seed,
                                   struct RsSequence **out);

// # Safety
// `seq` must be a live handle.
size_t rs_sequence_len(const struct RsSequence *seq);

// Copies amplitudes and lengths into buffers of capacity `cap`.
//
// # Safety
// `seq` must be a live handle; `amps` and `lens` must hold `cap` values.
enum RsStatus rs_sequence_copy(const struct RsSequence *seq,
                               uint8_t *amps,
                               uint32_t *lens,
                               size_t cap);

// Turn-on and turn-off counts.
//
// # Safety
// `seq` must be a live handle; `on` and `off` must be writable.
enum RsStatus rs_sequence_transitions(const struct RsSequence *seq, uint64_t *on, uint64_t *off);

// # Safety
// `seq` must be NULL or a handle not yet freed.
void rs_sequence_free(struct RsSequence *seq);

// Model from JSON, either `{A1, A2, B1, B2, Vg, labels}` or the buck
// shorthand `{L, C, R, r, Vg}`.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum RsStatus rs_converter_from_json(const char *json, struct RsConverter **out);

// Buck converter with states `[i_L, v_C]`.
//
// # Safety
// `out` must be writable.
enum RsStatus rs_converter_buck(double l,
                                double c,
                                double r_load,
                                double r,
                                double vg,
                                struct RsConverter **out);

// Number of states; 0 for NULL.
//
// # Safety
// `conv` must be NULL or a live handle.
size_t rs_converter_dim(const struct RsConverter *conv);

// DC operating point at probability `p` into `x_out` (capacity `cap`).
//
// # Safety
// `conv` must be a live handle; `x_out` must hold `cap` values.
enum RsStatus rs_dc_solve(const struct RsConverter *conv, double p, double *x_out, size_t cap);

// Equilibrium pulse-boundary covariance, row-major `dim x dim` into
// `cov_out` (capacity `cap`); the stationary mean goes to `mean_out`
// (capacity `dim`) unless it is NULL.
//
// # Safety
// `conv` and `dist` must be live handles; buffers must hold the stated sizes.
enum RsStatus rs_covariance(const struct RsConverter *conv,
                            double p,
                            const struct RsDist *dist,
                            double t_eps,
                            double *cov_out,
                            size_t cap,
                            double *mean_out);

// # Safety
// `conv` must be NULL or a handle not yet freed.
void rs_converter_free(struct RsConverter *conv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANDSWITCH_H */
