//! C ABI for embedding the trainer and its policies in other languages.
//!
//! All functions are `extern "C"` with opaque handles and integer status
//! codes mirroring the CLI exit codes (0 ok, 2 usage, 3 data, 4 numeric).
//! `rsa2c_last_error` returns a thread-local message for the most recent
//! failure. Handles must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nalgebra::DVector;
use rsa2c::cli::run_to_dir;
use rsa2c::config::{apply_override, RunConfig};
use rsa2c::shap::{shapley_exact, shapley_sampled, ImputationMode, EXACT_SHAPLEY_MAX_DIM};
use rsa2c::trainer::{derive_rng, evaluate, EnvKind, EpochRecord, Trainer};
use rsa2c::Error;

pub const RSA2C_OK: i32 = 0;
pub const RSA2C_ERR_USAGE: i32 = 2;
pub const RSA2C_ERR_DATA: i32 = 3;
pub const RSA2C_ERR_NUMERIC: i32 = 4;
/// A panic crossed the FFI boundary (library bug, not a user error).
pub const RSA2C_ERR_PANIC: i32 = 70;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> i32 {
    err.exit_code()
}

/// Message for the most recent error on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rsa2c_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opaque run configuration.
pub struct Rsa2cConfig {
    inner: RunConfig,
}

/// Opaque training result: per-epoch records plus the final learner state.
pub struct Rsa2cRun {
    config: RunConfig,
    records: Vec<EpochRecord>,
    checkpoint: rsa2c::trainer::Checkpoint,
}

/// Per-epoch statistics exposed across the ABI.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct Rsa2cEpochStats {
    pub epoch: u64,
    pub train_return: f64,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub dict_value: u64,
    pub dict_actor: u64,
    /// NaN when the epoch carries no gap estimate.
    pub gap: f64,
}

unsafe fn cstr<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, i32> {
    if ptr.is_null() {
        set_error(&format!("{what} pointer is null"));
        return Err(RSA2C_ERR_USAGE);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        RSA2C_ERR_USAGE
    })
}

fn guard<T, F: FnOnce() -> Result<T, i32>>(f: F, fail: T) -> (T, i32) {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => (v, RSA2C_OK),
        Ok(Err(code)) => (fail, code),
        Err(_) => {
            set_error("internal panic");
            (fail, RSA2C_ERR_PANIC)
        }
    }
}

/// Create a config with the built-in defaults for `env` ("pendulum" or
/// "lqr"). Returns null on error.
#[no_mangle]
pub extern "C" fn rsa2c_config_new(env: *const c_char) -> *mut Rsa2cConfig {
    let (ptr, _) = guard(
        || {
            let name = unsafe { cstr(env, "env") }?;
            let inner = RunConfig::for_env(name).map_err(|e| {
                set_error(&e.to_string());
                status_of(&e)
            })?;
            Ok(Box::into_raw(Box::new(Rsa2cConfig { inner })))
        },
        ptr::null_mut(),
    );
    ptr
}

/// Apply one dotted-key override, e.g. `("shap.mode", "cme")` or
/// `("epochs", "500")`. Unknown keys are rejected by name.
#[no_mangle]
pub extern "C" fn rsa2c_config_set(
    cfg: *mut Rsa2cConfig,
    key: *const c_char,
    value: *const c_char,
) -> i32 {
    guard(
        || {
            if cfg.is_null() {
                set_error("config handle is null");
                return Err(RSA2C_ERR_USAGE);
            }
            let key = unsafe { cstr(key, "key") }?;
            let value = unsafe { cstr(value, "value") }?;
            let cfg = unsafe { &mut *cfg };
            apply_override(&mut cfg.inner, key, value).map_err(|e| {
                set_error(&e.to_string());
                status_of(&e)
            })
        },
        (),
    )
    .1
}

/// Validate all config invariants.
#[no_mangle]
pub extern "C" fn rsa2c_config_validate(cfg: *const Rsa2cConfig) -> i32 {
    guard(
        || {
            if cfg.is_null() {
                set_error("config handle is null");
                return Err(RSA2C_ERR_USAGE);
            }
            let cfg = unsafe { &*cfg };
            cfg.inner.validate().map(|_| ()).map_err(|e| {
                set_error(&e.to_string());
                status_of(&e)
            })
        },
        (),
    )
    .1
}

#[no_mangle]
pub extern "C" fn rsa2c_config_free(cfg: *mut Rsa2cConfig) {
    if !cfg.is_null() {
        drop(unsafe { Box::from_raw(cfg) });
    }
}

/// Run a full training experiment. Returns null on error.
#[no_mangle]
pub extern "C" fn rsa2c_train(cfg: *const Rsa2cConfig) -> *mut Rsa2cRun {
    let (ptr, _) = guard(
        || {
            if cfg.is_null() {
                set_error("config handle is null");
                return Err(RSA2C_ERR_USAGE);
            }
            let config = unsafe { &*cfg }.inner.clone();
            let mut trainer = Trainer::new(config.clone()).map_err(|e| {
                set_error(&e.to_string());
                status_of(&e)
            })?;
            let records = trainer.run_with(|_| {}).map_err(|e| {
                set_error(&e.to_string());
                status_of(&e)
            })?;
            let checkpoint = trainer.checkpoint(records.len());
            Ok(Box::into_raw(Box::new(Rsa2cRun {
                config,
                records,
                checkpoint,
            })))
        },
        ptr::null_mut(),
    );
    ptr
}

#[no_mangle]
pub extern "C" fn rsa2c_run_free(run: *mut Rsa2cRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Number of recorded epochs.
#[no_mangle]
pub extern "C" fn rsa2c_run_epochs(run: *const Rsa2cRun) -> u64 {
    if run.is_null() {
        return 0;
    }
    unsafe { &*run }.records.len() as u64
}

/// Copy the statistics of one epoch into `out`.
#[no_mangle]
pub extern "C" fn rsa2c_run_record(
    run: *const Rsa2cRun,
    epoch: u64,
    out: *mut Rsa2cEpochStats,
) -> i32 {
    guard(
        || {
            if run.is_null() || out.is_null() {
                set_error("null handle");
                return Err(RSA2C_ERR_USAGE);
            }
            let run = unsafe { &*run };
            let rec = run.records.get(epoch as usize).ok_or_else(|| {
                set_error(&format!("epoch {epoch} out of range"));
                RSA2C_ERR_USAGE
            })?;
            unsafe {
                *out = Rsa2cEpochStats {
                    epoch: rec.epoch as u64,
                    train_return: rec.train_return,
                    eval_mean: rec.eval_mean,
                    eval_std: rec.eval_std,
                    dict_value: rec.dict_value as u64,
                    dict_actor: rec.dict_actor as u64,
                    gap: rec.gap.unwrap_or(f64::NAN),
                };
            }
            Ok(())
        },
        (),
    )
    .1
}

/// Mean evaluation return over the final `window` epochs.
#[no_mangle]
pub extern "C" fn rsa2c_run_final_eval_mean(run: *const Rsa2cRun, window: u64) -> f64 {
    if run.is_null() {
        return f64::NAN;
    }
    rsa2c::cli::final_window_mean(&unsafe { &*run }.records, window as usize)
}

/// Write the run artifacts (config, records, checkpoint) into a directory,
/// in the same layout the CLI uses.
#[no_mangle]
pub extern "C" fn rsa2c_run_save(run: *const Rsa2cRun, dir: *const c_char) -> i32 {
    guard(
        || {
            if run.is_null() {
                set_error("run handle is null");
                return Err(RSA2C_ERR_USAGE);
            }
            let dir = unsafe { cstr(dir, "dir") }?;
            let run = unsafe { &*run };
            save_run(run, Path::new(dir)).map_err(|e| {
                set_error(&e.to_string());
                status_of(&e)
            })
        },
        (),
    )
    .1
}

fn save_run(run: &Rsa2cRun, dir: &Path) -> rsa2c::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&run.config)?,
    )?;
    let mut csv = String::from(rsa2c::trainer::RECORDS_CSV_HEADER);
    csv.push('\n');
    for r in &run.records {
        csv.push_str(&rsa2c::trainer::record_to_csv_row(r));
        csv.push('\n');
    }
    std::fs::write(dir.join("records.csv"), csv)?;
    std::fs::write(
        dir.join("checkpoint.json"),
        serde_json::to_string(&run.checkpoint)?,
    )?;
    Ok(())
}

/// Evaluate the trained mean policy at an observation.
#[no_mangle]
pub extern "C" fn rsa2c_policy_mean(
    run: *const Rsa2cRun,
    obs: *const f64,
    obs_len: u64,
    action_out: *mut f64,
    action_len: u64,
) -> i32 {
    guard(
        || {
            if run.is_null() || obs.is_null() || action_out.is_null() {
                set_error("null pointer");
                return Err(RSA2C_ERR_USAGE);
            }
            let run = unsafe { &*run };
            let policy = &run.checkpoint.policy;
            if obs_len as usize != policy.kernel.state_dim()
                || action_len as usize != policy.action_dim()
            {
                set_error(&format!(
                    "expected obs dim {} and action dim {}",
                    policy.kernel.state_dim(),
                    policy.action_dim()
                ));
                return Err(RSA2C_ERR_USAGE);
            }
            let s = DVector::from_column_slice(unsafe {
                std::slice::from_raw_parts(obs, obs_len as usize)
            });
            let a = policy.mean(&s);
            unsafe {
                std::slice::from_raw_parts_mut(action_out, action_len as usize)
                    .copy_from_slice(a.as_slice());
            }
            Ok(())
        },
        (),
    )
    .1
}

/// Deterministic evaluation of the trained policy: mean/std of undiscounted
/// returns over `episodes` episodes.
#[no_mangle]
pub extern "C" fn rsa2c_evaluate(
    run: *const Rsa2cRun,
    episodes: u64,
    seed: u64,
    mean_out: *mut f64,
    std_out: *mut f64,
) -> i32 {
    guard(
        || {
            if run.is_null() || mean_out.is_null() || std_out.is_null() {
                set_error("null pointer");
                return Err(RSA2C_ERR_USAGE);
            }
            let run = unsafe { &*run };
            let env = EnvKind::from_config(&run.config.env).map_err(|e| {
                set_error(&e.to_string());
                status_of(&e)
            })?;
            let mut rng = derive_rng(seed, 0, 2);
            let (mean, std) = evaluate(
                &run.checkpoint.policy,
                &env,
                episodes as usize,
                run.config.noise_var,
                &mut rng,
            )
            .map_err(|e| {
                set_error(&e.to_string());
                status_of(&e)
            })?;
            unsafe {
                *mean_out = mean;
                *std_out = std;
            }
            Ok(())
        },
        (),
    )
    .1
}

/// Shapley attribution of the trained value critic at an observation.
/// `phi_out` must hold `obs_len` doubles; `use_cme != 0` selects the
/// on-manifold (conditional) imputation.
#[no_mangle]
pub extern "C" fn rsa2c_attribution(
    run: *const Rsa2cRun,
    obs: *const f64,
    obs_len: u64,
    use_cme: i32,
    phi_out: *mut f64,
) -> i32 {
    guard(
        || {
            if run.is_null() || obs.is_null() || phi_out.is_null() {
                set_error("null pointer");
                return Err(RSA2C_ERR_USAGE);
            }
            let run = unsafe { &*run };
            if run.checkpoint.buffer.is_empty() {
                set_error("checkpoint has an empty embedding buffer");
                return Err(RSA2C_ERR_DATA);
            }
            let d = run.checkpoint.value.spec.state_dim();
            if obs_len as usize != d {
                set_error(&format!("expected obs dim {d}"));
                return Err(RSA2C_ERR_USAGE);
            }
            let s = DVector::from_column_slice(unsafe {
                std::slice::from_raw_parts(obs, obs_len as usize)
            });
            let mode = if use_cme != 0 {
                ImputationMode::Cme
            } else {
                ImputationMode::Kme
            };
            let att = if d <= EXACT_SHAPLEY_MAX_DIM {
                shapley_exact(
                    &run.checkpoint.value,
                    &run.checkpoint.buffer,
                    &s,
                    mode,
                    run.config.shap.lambda_cme,
                )
            } else {
                let mut rng = derive_rng(run.config.seed, 0, 6);
                shapley_sampled(
                    &run.checkpoint.value,
                    &run.checkpoint.buffer,
                    &s,
                    mode,
                    run.config.shap.lambda_cme,
                    run.config.shap.n_perms,
                    &mut rng,
                )
            }
            .map_err(|e| {
                set_error(&e.to_string());
                status_of(&e)
            })?;
            unsafe {
                std::slice::from_raw_parts_mut(phi_out, obs_len as usize)
                    .copy_from_slice(att.phi.as_slice());
            }
            Ok(())
        },
        (),
    )
    .1
}

/// Train directly into a run directory (config + records + attribution
/// trace + checkpoint + summary), mirroring `rsa2c train` for one seed.
#[no_mangle]
pub extern "C" fn rsa2c_train_to_dir(cfg: *const Rsa2cConfig, dir: *const c_char) -> i32 {
    guard(
        || {
            if cfg.is_null() {
                set_error("config handle is null");
                return Err(RSA2C_ERR_USAGE);
            }
            let dir = unsafe { cstr(dir, "dir") }?;
            let config = unsafe { &*cfg }.inner.clone();
            run_to_dir(&config, Path::new(dir)).map(|_| ()).map_err(|e| {
                set_error(&e.to_string());
                status_of(&e)
            })
        },
        (),
    )
    .1
}
