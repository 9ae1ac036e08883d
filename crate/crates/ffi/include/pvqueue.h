#ifndef PVQUEUE_H
#define PVQUEUE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PvqStatus {
  PVQ_STATUS_OK = 0,
  PVQ_STATUS_NULL_POINTER = 1,
  PVQ_STATUS_INVALID_ARGUMENT = 2,
  PVQ_STATUS_HISTORY_REQUIRED = 3,
  PVQ_STATUS_NO_PROBES = 4,
  PVQ_STATUS_OVERSATURATED = 5,
  PVQ_STATUS_DIVISION_GUARD = 6,
  PVQ_STATUS_IO = 7,
  PVQ_STATUS_PARSE = 8,
  PVQ_STATUS_BUFFER_TOO_SMALL = 9,
  PVQ_STATUS_PANIC = 10,
} PvqStatus;

// Opaque per-lane probe history.
typedef struct PvqHistory PvqHistory;

// Opaque evaluation report.
typedef struct PvqReport PvqReport;

// Expected queue and, when `has_variance` is set, its variance.
typedef struct PvqEstimate {
  double mean;
  double variance;
  bool has_variance;
} PvqEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *pvq_last_error(void);

// Time-conditioned nonparametric estimate for `m <= l <= 2t`, `t <= red`.
enum PvqStatus pvq_np_est1(uint32_t l,
                           uint32_t m,
                           uint32_t t,
                           uint32_t red,
                           struct PvqEstimate *out);

// Nonparametric estimate conditioned on `(l, m)` with at most `cmax` arrivals.
enum PvqStatus pvq_np_est2(uint32_t l, uint32_t m, uint32_t cmax, struct PvqEstimate *out);

struct PvqHistory *pvq_history_new(void);

// # Safety
// `history` must be null or come from [`pvq_history_new`] and not be freed twice.
void pvq_history_free(struct PvqHistory *history);

// # Safety
// `history` must be a live handle from [`pvq_history_new`].
enum PvqStatus pvq_history_record(struct PvqHistory *history,
                                  uint32_t l,
                                  uint32_t m,
                                  uint32_t t,
                                  uint32_t red);

// # Safety
// `history` must be a live handle from [`pvq_history_new`].
enum PvqStatus pvq_param_est1(uint32_t l,
                              uint32_t m,
                              uint32_t t,
                              uint32_t red,
                              const struct PvqHistory *history,
                              struct PvqEstimate *out);

// # Safety
// `history` must be a live handle from [`pvq_history_new`].
enum PvqStatus pvq_param_est2(uint32_t l,
                              uint32_t m,
                              uint32_t t,
                              uint32_t red,
                              const struct PvqHistory *history,
                              struct PvqEstimate *out);

// Back-of-queue estimate; `saturation_flow` in vehicles per second.
enum PvqStatus pvq_q_back(double lambda,
                          double red,
                          double saturation_flow,
                          struct PvqEstimate *out);

// Delay-based queue with the default delay parameters.
enum PvqStatus pvq_hcm_delay_queue(double cycle,
                                   double red,
                                   double lambda,
                                   struct PvqEstimate *out);

// Writes `P(n)` for `n = *first, *first + 1, ...` into `probs`. `*len` always
// receives the support size; `PVQ_STATUS_BUFFER_TOO_SMALL` is returned when it
// exceeds `capacity` (nothing else is written).
//
// # Safety
// `probs` must be valid for `capacity` writes; `first` and `len` must be writable.
enum PvqStatus pvq_queue_pmf_time(uint32_t l,
                                  uint32_t m,
                                  uint32_t t,
                                  uint32_t red,
                                  double *probs,
                                  size_t capacity,
                                  uint64_t *first,
                                  size_t *len);

// Runs the default evaluation on a cycle CSV file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum PvqStatus pvq_evaluate_csv(const char *path,
                                uint32_t seeds,
                                uint64_t base_seed,
                                struct PvqReport **out);

// Number of (day, lane, estimator) cells, or 0 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
size_t pvq_report_cell_count(const struct PvqReport *report);

// Serializes the report as JSON; release the string with [`pvq_string_free`].
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum PvqStatus pvq_report_to_json(const struct PvqReport *report, char **out);

// # Safety
// `report` must be null or a live handle, freed at most once.
void pvq_report_free(struct PvqReport *report);

// # Safety
// `s` must be null or a string returned by this library, freed at most once.
void pvq_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PVQUEUE_H */
