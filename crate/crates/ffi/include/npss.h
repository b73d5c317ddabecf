#ifndef NPSS_FFI_H
#define NPSS_FFI_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Samples per 10 ms at 240 kHz.
 */
#define NPSS_SUBFRAME_LEN 2400

/**
 * Samples per 10 ms at 1.92 MHz.
 */
#define NPSS_FRAME_LEN 19200

typedef enum NpssChannelKind {
  NPSS_CHANNEL_KIND_AWGN_ONLY = 0,
  NPSS_CHANNEL_KIND_TU_FADING = 1,
} NpssChannelKind;

typedef enum NpssFiller {
  NPSS_FILLER_RANDOM_QPSK_OFDM = 0,
  NPSS_FILLER_SILENCE = 1,
} NpssFiller;

typedef enum NpssStatus {
  NPSS_STATUS_OK = 0,
  NPSS_STATUS_NULL_POINTER = 1,
  NPSS_STATUS_INVALID_ARGUMENT = 2,
  NPSS_STATUS_DIMENSION = 3,
  NPSS_STATUS_IO = 4,
  NPSS_STATUS_FORMAT = 5,
  NPSS_STATUS_STATISTICS = 6,
  NPSS_STATUS_BUFFER_TOO_SMALL = 7,
  NPSS_STATUS_PANIC = 8,
} NpssStatus;

typedef struct NpssAcDetector NpssAcDetector;

typedef struct NpssMlDetector NpssMlDetector;

typedef struct NpssSimulator NpssSimulator;

typedef struct NpssThresholdTable NpssThresholdTable;

/**
 * Result of one detector step. `detected` is 0 or 1; the remaining fields
 * are meaningful only when it is 1. `candidate` is -1 and `f_hat_hz` NaN for
 * the auto-correlation detector.
 */
typedef struct NpssDetection {
  uint32_t detected;
  uint32_t theta_hat;
  int32_t candidate;
  double f_hat_hz;
  double metric;
  uint32_t subframes_used;
} NpssDetection;

/**
 * Simulated downlink. `timing_offset_samples < 0` draws it at random.
 */
typedef struct NpssChannelParams {
  double snr_db;
  double cfo_hz;
  int64_t timing_offset_samples;
  enum NpssChannelKind channel_kind;
  enum NpssFiller filler;
  double doppler_hz;
  uint64_t seed;
} NpssChannelParams;

typedef struct NpssEnergyParams {
  double p_rf_w;
  double p_ml_w;
  double p_ac_w;
  double t_ml_s;
  double t_ac_s;
} NpssEnergyParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *npss_status_str(enum NpssStatus status);

/**
 * Copies the calling thread's most recent error message into `buf`
 * (NUL-terminated, truncated to `len`). Returns the full message length,
 * 0 when there is none.
 */
size_t npss_last_error(char *buf, size_t len);

/**
 * Table from explicit per-depth thresholds.
 */
enum NpssStatus npss_table_new(const double *thresholds,
                               size_t len,
                               double fa_target,
                               double distinctness,
                               struct NpssThresholdTable **out);

enum NpssStatus npss_table_all_pass(size_t max_subframes, struct NpssThresholdTable **out);

/**
 * Reads a table CSV written by `npss calibrate`.
 */
enum NpssStatus npss_table_load(const char *path, struct NpssThresholdTable **out);

/**
 * Calibrates an ML table on white noise.
 */
enum NpssStatus npss_table_calibrate(size_t noise_runs,
                                     size_t max_subframes,
                                     double fa_target,
                                     uint64_t seed,
                                     struct NpssThresholdTable **out);

/**
 * Threshold applied after `subframes` combined periods.
 */
enum NpssStatus npss_table_threshold(const struct NpssThresholdTable *table,
                                     size_t subframes,
                                     double *out);

void npss_table_free(struct NpssThresholdTable *table);

/**
 * ML detector using a copy of `table`.
 */
enum NpssStatus npss_ml_detector_new(const struct NpssThresholdTable *table,
                                     struct NpssMlDetector **out);

/**
 * Feeds one 10 ms subframe (`NPSS_SUBFRAME_LEN` samples at 240 kHz).
 */
enum NpssStatus npss_ml_detector_step(struct NpssMlDetector *det,
                                      const double *iq,
                                      size_t n_samples,
                                      struct NpssDetection *out);

void npss_ml_detector_free(struct NpssMlDetector *det);

enum NpssStatus npss_ac_detector_new(const struct NpssThresholdTable *table,
                                     struct NpssAcDetector **out);

/**
 * Feeds one 10 ms frame (`NPSS_FRAME_LEN` samples at 1.92 MHz).
 */
enum NpssStatus npss_ac_detector_step(struct NpssAcDetector *det,
                                      const double *iq,
                                      size_t n_samples,
                                      struct NpssDetection *out);

void npss_ac_detector_free(struct NpssAcDetector *det);

enum NpssStatus npss_simulator_new(const struct NpssChannelParams *params,
                                   struct NpssSimulator **out);

/**
 * Writes the next 10 ms at 240 kHz into `out` (room for `capacity`
 * samples); `written` receives the sample count.
 */
enum NpssStatus npss_simulator_next_subframe(struct NpssSimulator *sim,
                                             double *out,
                                             size_t capacity,
                                             size_t *written);

/**
 * Writes the next 10 ms at 1.92 MHz.
 */
enum NpssStatus npss_simulator_next_frame(struct NpssSimulator *sim,
                                          double *out,
                                          size_t capacity,
                                          size_t *written);

/**
 * NPSS start within each received 1.92 MHz frame and its timing cell.
 */
enum NpssStatus npss_simulator_truth(const struct NpssSimulator *sim,
                                     size_t *start_1920k,
                                     uint32_t *cell);

void npss_simulator_free(struct NpssSimulator *sim);

/**
 * Energy saved per acquisition, in percent.
 */
enum NpssStatus npss_energy_savings(const struct NpssEnergyParams *params, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NPSS_FFI_H */
