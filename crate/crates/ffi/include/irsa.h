#ifndef IRSA_H
#define IRSA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum IrsaStatus {
  IRSA_STATUS_OK = 0,
  IRSA_STATUS_NULL_POINTER = 1,
  IRSA_STATUS_INVALID_ARGUMENT = 2,
  IRSA_STATUS_INVALID_UTF8 = 3,
  IRSA_STATUS_CONFIG = 4,
  IRSA_STATUS_SIMULATION = 5,
  IRSA_STATUS_ANALYSIS = 6,
  IRSA_STATUS_BUFFER_TOO_SMALL = 7,
  IRSA_STATUS_NO_DATA = 8,
  IRSA_STATUS_PANIC = 99,
} IrsaStatus;

typedef enum IrsaPolicy {
  IRSA_POLICY_RANDOM = 0,
  IRSA_POLICY_ROUND_ROBIN = 1,
} IrsaPolicy;

typedef struct IrsaDistribution IrsaDistribution;

typedef struct IrsaNetwork IrsaNetwork;

typedef struct IrsaRegion IrsaRegion;

typedef struct IrsaReport IrsaReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failing call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *irsa_last_error(void);

// Library version as a static NUL-terminated string.
const char *irsa_version(void);

// Degree distribution with `probs[i]` on `degrees[i]`.
//
// # Safety
// `degrees` and `probs` must point to `len` readable elements; `out_dist` must
// be writable.
enum IrsaStatus irsa_distribution_new(const uint32_t *degrees,
                                      const double *probs,
                                      size_t len,
                                      struct IrsaDistribution **out_dist);

// The optimized distribution 0.5x² + 0.28x³ + 0.22x⁸.
//
// # Safety
// `out_dist` must be writable.
enum IrsaStatus irsa_distribution_optimal(struct IrsaDistribution **out_dist);

// # Safety
// `dist` must be NULL or a handle from `irsa_distribution_*` not yet freed.
void irsa_distribution_free(struct IrsaDistribution *dist);

// # Safety
// `dist` must be a live handle and `out_mean` writable.
enum IrsaStatus irsa_distribution_mean_degree(const struct IrsaDistribution *dist,
                                              double *out_mean);

// Asymptotic load threshold by density evolution, bisected to `tol`.
//
// # Safety
// `dist` must be a live handle and `out_threshold` writable.
enum IrsaStatus irsa_de_threshold(const struct IrsaDistribution *dist,
                                  double tol,
                                  double *out_threshold);

// Network of `k` classes; class i has `populations[i]` users drawing from
// `dists[i]`. The distributions are copied.
//
// # Safety
// `populations` and `dists` must point to `k` readable elements, each
// distribution a live handle; `out_net` must be writable.
enum IrsaStatus irsa_network_new(size_t frame_size,
                                 const size_t *populations,
                                 const struct IrsaDistribution *const *dists,
                                 size_t k,
                                 struct IrsaNetwork **out_net);

// # Safety
// `net` must be NULL or a handle from `irsa_network_new` not yet freed.
void irsa_network_free(struct IrsaNetwork *net);

// Simulates `frames` frames at per-class loads `loads[0..k]`. `workers` = 0
// uses the default thread pool. Results do not depend on `workers`.
//
// # Safety
// `net` must be a live handle, `loads` must point to `k` readable values
// and `out_report` must be writable.
enum IrsaStatus irsa_simulate(const struct IrsaNetwork *net,
                              const double *loads,
                              size_t k,
                              enum IrsaPolicy policy,
                              uint64_t frames,
                              uint64_t seed,
                              size_t workers,
                              struct IrsaReport **out_report);

// # Safety
// `report` must be NULL or a handle from `irsa_simulate` not yet freed.
void irsa_report_free(struct IrsaReport *report);

// Number of classes in the report, or 0 for NULL.
//
// # Safety
// `report` must be NULL or a live handle.
size_t irsa_report_num_classes(const struct IrsaReport *report);

// # Safety
// `report` must be a live handle and `out_value` writable.
enum IrsaStatus irsa_report_throughput(const struct IrsaReport *report,
                                       size_t class_,
                                       double *out_value);

// # Safety
// `report` must be a live handle and `out_value` writable.
enum IrsaStatus irsa_report_ci95(const struct IrsaReport *report, size_t class_, double *out_value);

// # Safety
// `report` must be a live handle and `out_value` writable.
enum IrsaStatus irsa_report_loss_rate(const struct IrsaReport *report,
                                      size_t class_,
                                      double *out_value);

// Average delay in frames. `IRSA_STATUS_NO_DATA` if nothing was delivered.
//
// # Safety
// `report` must be a live handle and `out_value` writable.
enum IrsaStatus irsa_report_average_delay(const struct IrsaReport *report,
                                          size_t class_,
                                          double *out_value);

// Largest observed delay in frames.
//
// # Safety
// `report` must be a live handle and `out_value` writable.
enum IrsaStatus irsa_report_max_delay(const struct IrsaReport *report,
                                      size_t class_,
                                      uint64_t *out_value);

// # Safety
// `report` must be a live handle and `out_value` writable.
enum IrsaStatus irsa_report_total_throughput(const struct IrsaReport *report, double *out_value);

// Capacity region of `net` for single-class optimum `t_star` in (0, 1].
//
// # Safety
// `net` must be a live handle and `out_region` writable.
enum IrsaStatus irsa_region_new(const struct IrsaNetwork *net,
                                double t_star,
                                struct IrsaRegion **out_region);

// # Safety
// `region` must be NULL or a handle from `irsa_region_new` not yet freed.
void irsa_region_free(struct IrsaRegion *region);

// # Safety
// `region` must be a live handle, `t` must point to `k` readable values and
// `out_inside` must be writable.
enum IrsaStatus irsa_region_contains(const struct IrsaRegion *region,
                                     const double *t,
                                     size_t k,
                                     bool *out_inside);

// Boundary polygon of a two-class region as interleaved (t_1, t_2) pairs,
// counter-clockwise from the origin. Writes the vertex count to
// `out_count`; if `capacity` (in vertices) is too small nothing is copied
// and `IRSA_STATUS_BUFFER_TOO_SMALL` is returned, so a first call with
// `capacity` = 0 sizes the buffer.
//
// # Safety
// `region` must be a live handle, `xy` must have room for `2 * capacity`
// doubles and `out_count` must be writable.
enum IrsaStatus irsa_region_boundary(const struct IrsaRegion *region,
                                     size_t resolution,
                                     double *xy,
                                     size_t capacity,
                                     size_t *out_count);

// Runs a JSON experiment configuration (as accepted by `irsa-sim`) and
// returns the CSV document in `out_csv`, to be released with
// `irsa_string_free`. The config must name its experiment and seed.
//
// # Safety
// `config_json` must be a NUL-terminated string and `out_csv` writable.
enum IrsaStatus irsa_run_config(const char *config_json, size_t workers, char **out_csv);

// # Safety
// `s` must be NULL or a string returned by this library not yet freed.
void irsa_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRSA_H */
