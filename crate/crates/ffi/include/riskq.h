#ifndef RISKQ_H
#define RISKQ_H

#include <stddef.h>
#include <stdint.h>

typedef enum RiskqStatus {
  RISKQ_STATUS_OK = 0,
  RISKQ_STATUS_NULL_POINTER = 1,
  RISKQ_STATUS_INVALID_UTF8 = 2,
  RISKQ_STATUS_CONFIG = 3,
  RISKQ_STATUS_MODEL_VERSION = 4,
  RISKQ_STATUS_DIMENSION_MISMATCH = 5,
  RISKQ_STATUS_INFEASIBLE = 6,
  RISKQ_STATUS_OUT_OF_RANGE = 7,
  RISKQ_STATUS_BUFFER_TOO_SMALL = 8,
  RISKQ_STATUS_IO = 9,
  RISKQ_STATUS_NUMERICAL = 10,
  RISKQ_STATUS_PANIC = 11,
} RiskqStatus;

typedef enum RiskqObjective {
  // Least probability of reaching an error state, ties broken by value.
  RISKQ_OBJECTIVE_MIN_RISK = 0,
  // Greatest discounted value, ties broken by risk.
  RISKQ_OBJECTIVE_MAX_VALUE = 1,
} RiskqObjective;

// Experiment configuration.
typedef struct RiskqConfig RiskqConfig;

// Exact policy and its evaluation on a grid world.
typedef struct RiskqExact RiskqExact;

// Policy loaded from a saved model file.
typedef struct RiskqModel RiskqModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or an empty string. The
// pointer stays valid until the next failing call on the same thread.
const char *riskq_last_error(void);

// Library version as a static string.
const char *riskq_version(void);

// Built-in settings for `experiment` (`gridworld`, `tank-y-clc`,
// `tank-y-olc` or `tank-yc-clc`).
//
// # Safety
// `experiment` must be a NUL-terminated string and `out` a writable pointer.
enum RiskqStatus riskq_config_preset(const char *experiment, struct RiskqConfig **out);

// Parses a TOML configuration layered over the preset of its experiment.
// `experiment` may be null when the TOML names the experiment itself.
//
// # Safety
// `toml` must be a NUL-terminated string, `experiment` null or
// NUL-terminated, and `out` a writable pointer.
enum RiskqStatus riskq_config_from_toml(const char *toml,
                                        const char *experiment,
                                        struct RiskqConfig **out);

// Overrides the seed.
//
// # Safety
// `config` must come from a `riskq_config_*` constructor.
enum RiskqStatus riskq_config_set_seed(struct RiskqConfig *config, uint64_t seed);

// Writes the 16-digit configuration hash and a terminating NUL into `buf`,
// which must hold at least 17 bytes.
//
// # Safety
// `config` must be a live handle and `buf` writable for `len` bytes.
enum RiskqStatus riskq_config_hash(const struct RiskqConfig *config, char *buf, size_t len);

// # Safety
// `config` must be null or a handle not yet freed.
void riskq_config_free(struct RiskqConfig *config);

// Runs the configured experiment and writes its artifacts to `out_dir`.
// When no ξ meets the risk bound the status is `Infeasible` and
// `min_risk` (if not null) receives the smallest risk estimate.
//
// # Safety
// `config` must be a live handle, `out_dir` NUL-terminated and `min_risk`
// null or writable.
enum RiskqStatus riskq_run(const struct RiskqConfig *config, const char *out_dir, double *min_risk);

// Solves the grid world of `config` exactly for `objective`.
//
// # Safety
// `config` must be a live handle and `out` a writable pointer.
enum RiskqStatus riskq_exact_solve(const struct RiskqConfig *config,
                                   enum RiskqObjective objective,
                                   struct RiskqExact **out);

// Number of states including the absorbing state, which is the last one.
//
// # Safety
// `exact` must be null or a live handle.
size_t riskq_exact_num_states(const struct RiskqExact *exact);

// Cell, action, value and probability of reaching an error state for
// `state`. The absorbing state has no cell and reports `OutOfRange`.
//
// # Safety
// `exact` must be a live handle and all outputs writable.
enum RiskqStatus riskq_exact_state(const struct RiskqExact *exact,
                                   size_t state,
                                   size_t *x,
                                   size_t *y,
                                   size_t *action,
                                   double *value,
                                   double *risk);

// Value and risk averaged over the start distribution.
//
// # Safety
// `exact` must be a live handle and both outputs writable.
enum RiskqStatus riskq_exact_aggregate(const struct RiskqExact *exact, double *value, double *risk);

// # Safety
// `exact` must be null or a handle not yet freed.
void riskq_exact_free(struct RiskqExact *exact);

// Parses a saved model (the JSON written next to the experiment artifacts).
//
// # Safety
// `json` must be NUL-terminated and `out` a writable pointer.
enum RiskqStatus riskq_model_load(const char *json, struct RiskqModel **out);

// The ξ the model was selected at, or NaN for a null handle.
//
// # Safety
// `model` must be null or a live handle.
double riskq_model_xi(const struct RiskqModel *model);

// Monte Carlo value and risk of the greedy policy over the start
// distribution. `half_width` outputs may be null.
//
// # Safety
// `model` must be a live handle, `value` and `risk` writable, and the
// half-width pointers null or writable.
enum RiskqStatus riskq_model_evaluate(const struct RiskqModel *model,
                                      size_t episodes,
                                      uint64_t seed,
                                      double *value,
                                      double *value_half_width,
                                      double *risk,
                                      double *risk_half_width);

// # Safety
// `model` must be null or a handle not yet freed.
void riskq_model_free(struct RiskqModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RISKQ_H */
