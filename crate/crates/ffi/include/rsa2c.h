#ifndef RSA2C_H
#define RSA2C_H

/* Generated by cbindgen; edit src/lib.rs instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define RSA2C_OK 0

#define RSA2C_ERR_USAGE 2

#define RSA2C_ERR_DATA 3

#define RSA2C_ERR_NUMERIC 4

/**
 * A panic crossed the FFI boundary (library bug, not a user error).
 */
#define RSA2C_ERR_PANIC 70

/**
 * Opaque run configuration.
 */
typedef struct Rsa2cConfig Rsa2cConfig;

/**
 * Opaque training result: per-epoch records plus the final learner state.
 */
typedef struct Rsa2cRun Rsa2cRun;

/**
 * Per-epoch statistics exposed across the ABI.
 */
typedef struct {
  uint64_t epoch;
  double train_return;
  double eval_mean;
  double eval_std;
  uint64_t dict_value;
  uint64_t dict_actor;
  /**
   * NaN when the epoch carries no gap estimate.
   */
  double gap;
} Rsa2cEpochStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *rsa2c_last_error(void);

/**
 * Create a config with the built-in defaults for `env` ("pendulum" or
 * "lqr"). Returns null on error.
 */
Rsa2cConfig *rsa2c_config_new(const char *env);

/**
 * Apply one dotted-key override, e.g. `("shap.mode", "cme")` or
 * `("epochs", "500")`. Unknown keys are rejected by name.
 */
int32_t rsa2c_config_set(Rsa2cConfig *cfg, const char *key, const char *value);

/**
 * Validate all config invariants.
 */
int32_t rsa2c_config_validate(const Rsa2cConfig *cfg);

void rsa2c_config_free(Rsa2cConfig *cfg);

/**
 * Run a full training experiment. Returns null on error.
 */
Rsa2cRun *rsa2c_train(const Rsa2cConfig *cfg);

void rsa2c_run_free(Rsa2cRun *run);

/**
 * Number of recorded epochs.
 */
uint64_t rsa2c_run_epochs(const Rsa2cRun *run);

/**
 * Copy the statistics of one epoch into `out`.
 */
int32_t rsa2c_run_record(const Rsa2cRun *run, uint64_t epoch, Rsa2cEpochStats *out);

/**
 * Mean evaluation return over the final `window` epochs.
 */
double rsa2c_run_final_eval_mean(const Rsa2cRun *run, uint64_t window);

/**
 * Write the run artifacts (config, records, checkpoint) into a directory,
 * in the same layout the CLI uses.
 */
int32_t rsa2c_run_save(const Rsa2cRun *run, const char *dir);

/**
 * Evaluate the trained mean policy at an observation.
 */
int32_t rsa2c_policy_mean(const Rsa2cRun *run,
                          const double *obs,
                          uint64_t obs_len,
                          double *action_out,
                          uint64_t action_len);

/**
 * Deterministic evaluation of the trained policy: mean/std of undiscounted
 * returns over `episodes` episodes.
 */
int32_t rsa2c_evaluate(const Rsa2cRun *run,
                       uint64_t episodes,
                       uint64_t seed,
                       double *mean_out,
                       double *std_out);

/**
 * Shapley attribution of the trained value critic at an observation.
 * `phi_out` must hold `obs_len` doubles; `use_cme != 0` selects the
 * on-manifold (conditional) imputation.
 */
int32_t rsa2c_attribution(const Rsa2cRun *run,
                          const double *obs,
                          uint64_t obs_len,
                          int32_t use_cme,
                          double *phi_out);

/**
 * Train directly into a run directory (config + records + attribution
 * trace + checkpoint + summary), mirroring `rsa2c train` for one seed.
 */
int32_t rsa2c_train_to_dir(const Rsa2cConfig *cfg, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSA2C_H */
