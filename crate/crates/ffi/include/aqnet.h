#ifndef AQNET_H
#define AQNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AqnetStatus {
  AQNET_STATUS_OK = 0,
  AQNET_STATUS_NULL_POINTER = 1,
  AQNET_STATUS_INVALID_ARGUMENT = 2,
  AQNET_STATUS_IO = 3,
  AQNET_STATUS_PARSE = 4,
  AQNET_STATUS_SAMPLING = 5,
  AQNET_STATUS_CALIBRATION = 6,
  AQNET_STATUS_NO_INSTRUMENTS = 7,
  AQNET_STATUS_SHAPE = 8,
  AQNET_STATUS_OUT_OF_RANGE = 9,
  AQNET_STATUS_PANIC = 10,
} AqnetStatus;

// Opaque loaded experiment: config plus validated inputs.
typedef struct AqnetExperiment AqnetExperiment;

// Opaque nearest-instrument index.
typedef struct AqnetIndex AqnetIndex;

// Opaque trial-averaged report.
typedef struct AqnetReport AqnetReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null. Valid until the
// next aqnet call on the same thread; do not free.
const char *aqnet_last_error_message(void);

// Static version string; do not free.
const char *aqnet_version(void);

// AQI class ordinal (0 = Green .. 5 = Maroon) of a 24-hour PM2.5 value.
// `edges` is null for the default table or points to five ascending upper edges.
//
// # Safety
// `edges` must be null or point to 5 readable doubles; `out` must be writable.
enum AqnetStatus aqnet_classify(double pm25, const double *edges, uint8_t *out);

// Corrected sensor PM2.5 with the default coefficients.
//
// # Safety
// `out` must be writable.
enum AqnetStatus aqnet_apply_correction(double pa_pm25, double rh, double *out);

// Corrected sensor PM2.5: `slope_pm * pa_pm25 + slope_rh * rh + intercept`.
//
// # Safety
// `out` must be writable.
enum AqnetStatus aqnet_apply_correction_with(double pa_pm25,
                                             double rh,
                                             double slope_pm,
                                             double slope_rh,
                                             double intercept,
                                             double *out);

// 1-based decile of `value` given 9 ascending boundaries (null for the
// built-in California table).
//
// # Safety
// `boundaries` must be null or point to 9 readable doubles; `out` must be writable.
enum AqnetStatus aqnet_decile_index(double value, const double *boundaries, uint32_t *out);

// Builds a nearest-instrument index over `n` points. With `haversine`, `x`
// is longitude and `y` latitude in degrees and distances are great-circle
// meters; otherwise planar meters.
//
// # Safety
// `ids`, `x`, `y` must each point to `n` readable values; `out` must be writable.
enum AqnetStatus aqnet_index_new(const uint64_t *ids,
                                 const double *x,
                                 const double *y,
                                 size_t n,
                                 bool haversine,
                                 struct AqnetIndex **out);

// Nearest point to `(x, y)`; ties go to the lowest id.
//
// # Safety
// `index` must come from [`aqnet_index_new`]; `out_id` and `out_distance`
// must be writable.
enum AqnetStatus aqnet_index_nearest(const struct AqnetIndex *index,
                                     double x,
                                     double y,
                                     uint64_t *out_id,
                                     double *out_distance);

// # Safety
// `index` must be null or come from [`aqnet_index_new`] and not be used afterwards.
void aqnet_index_free(struct AqnetIndex *index);

// Loads an experiment config (JSON) and its inputs. Relative input paths
// resolve against the config file's directory.
//
// # Safety
// `config_path` must be a NUL-terminated string; `out` must be writable.
enum AqnetStatus aqnet_experiment_load(const char *config_path, struct AqnetExperiment **out);

// Overrides the trial count and seed of a loaded experiment.
//
// # Safety
// `exp` must come from [`aqnet_experiment_load`].
enum AqnetStatus aqnet_experiment_set_trials(struct AqnetExperiment *exp,
                                             size_t trials,
                                             uint64_t base_seed);

// Runs all trials. `workers` of 0 uses the default thread pool; the result
// does not depend on it.
//
// # Safety
// `exp` must come from [`aqnet_experiment_load`]; `out` must be writable.
enum AqnetStatus aqnet_experiment_run(const struct AqnetExperiment *exp,
                                      size_t workers,
                                      struct AqnetReport **out);

// # Safety
// `exp` must be null or come from [`aqnet_experiment_load`] and not be used afterwards.
void aqnet_experiment_free(struct AqnetExperiment *exp);

// Number of metric columns per report row.
size_t aqnet_metric_count(void);

// Column name of metric `k`, or null when out of range; do not free.
const char *aqnet_metric_name(size_t k);

// Rows (subset x weighting) in the averaged report.
//
// # Safety
// `report` must be null or come from [`aqnet_experiment_run`].
size_t aqnet_report_rows(const struct AqnetReport *report);

// Averaged metric `k` of row `row`. `out_present` is false for a null metric.
//
// # Safety
// `report` must come from [`aqnet_experiment_run`]; outputs must be writable.
enum AqnetStatus aqnet_report_value(const struct AqnetReport *report,
                                    size_t row,
                                    size_t k,
                                    double *out_value,
                                    bool *out_present);

// Writes the averaged report as a results CSV.
//
// # Safety
// `report` must come from [`aqnet_experiment_run`]; `path` must be a
// NUL-terminated string.
enum AqnetStatus aqnet_report_write_csv(const struct AqnetReport *report, const char *path);

// # Safety
// `report` must be null or come from [`aqnet_experiment_run`] and not be used afterwards.
void aqnet_report_free(struct AqnetReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AQNET_H */
