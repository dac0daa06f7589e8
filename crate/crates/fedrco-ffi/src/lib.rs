//! C ABI for the simulator: parse a JSON config, run experiments, read
//! per-round metrics, and invoke the audit suites from any language with a C
//! FFI.
//!
//! Conventions: handles are opaque pointers owned by this library and freed
//! with their matching `_free` function; every fallible call returns a
//! [`FedrcoStatus`]; the most recent error message is available per thread
//! via [`fedrco_last_error`].

use libc::{c_char, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;

use fedrco::diagnostics::{
    run_condition_suite, run_descent_suite, run_drift_suite, run_rank_suite, SuiteOutcome,
};
use fedrco::harness::{run_experiment, ExperimentConfig, MetricsRecord, RunArtifacts};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FedrcoStatus {
    Ok = 0,
    /// A pointer argument was null or otherwise unusable.
    InvalidArgument = 1,
    /// The configuration failed to parse or validate.
    ConfigError = 2,
    /// The run itself failed (I/O, numerics).
    RuntimeError = 3,
    /// The audit ran but its suite criterion failed.
    AuditFailed = 4,
}

/// Per-round metric selector for [`fedrco_run_metric`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FedrcoMetric {
    TestAccuracy = 0,
    TrainLoss = 1,
    TrainAccuracy = 2,
    AnomalyLow = 3,
    AnomalyHigh = 4,
    HardResets = 5,
    Inversions = 6,
    CommScalars = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl Into<Vec<u8>>) {
    let message = CString::new(message).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = message);
}

/// Opaque experiment configuration.
pub struct FedrcoConfig(ExperimentConfig);

/// Opaque finished run: per-round metrics plus the final model accuracy.
pub struct FedrcoRun {
    metrics: Vec<MetricsRecord>,
    final_test_accuracy: f64,
}

/// ABI version of this header/library pair.
#[no_mangle]
pub extern "C" fn fedrco_abi_version() -> u32 {
    1
}

/// Message for the most recent error on this thread. The pointer stays valid
/// until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn fedrco_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Default desk-scale configuration.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fedrco_config_default(out: *mut *mut FedrcoConfig) -> FedrcoStatus {
    if out.is_null() {
        return FedrcoStatus::InvalidArgument;
    }
    *out = Box::into_raw(Box::new(FedrcoConfig(ExperimentConfig::default())));
    FedrcoStatus::Ok
}

/// Parse a JSON configuration document.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fedrco_config_parse(
    json: *const c_char,
    out: *mut *mut FedrcoConfig,
) -> FedrcoStatus {
    if json.is_null() || out.is_null() {
        return FedrcoStatus::InvalidArgument;
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(text) => text,
        Err(_) => {
            set_last_error("config JSON is not valid UTF-8");
            return FedrcoStatus::InvalidArgument;
        }
    };
    match ExperimentConfig::from_json(text) {
        Ok(cfg) => {
            *out = Box::into_raw(Box::new(FedrcoConfig(cfg)));
            FedrcoStatus::Ok
        }
        Err(err) => {
            set_last_error(err.to_string());
            FedrcoStatus::ConfigError
        }
    }
}

/// Override the configuration's seed.
///
/// # Safety
/// `cfg` must be a live pointer from a `fedrco_config_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn fedrco_config_set_seed(cfg: *mut FedrcoConfig, seed: u64) -> FedrcoStatus {
    let Some(cfg) = cfg.as_mut() else {
        return FedrcoStatus::InvalidArgument;
    };
    cfg.0.seed = seed;
    FedrcoStatus::Ok
}

/// # Safety
/// `cfg` must be a pointer from a `fedrco_config_*` constructor, not yet
/// freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fedrco_config_free(cfg: *mut FedrcoConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run the configured experiment. `out_dir` may be null to skip writing
/// metrics files; when given, metrics.csv / events.csv / config.json are
/// written under it exactly as the CLI does.
///
/// # Safety
/// `cfg` must be a live config handle; `out_dir`, when non-null, a valid
/// NUL-terminated path; `out` valid storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fedrco_run_experiment(
    cfg: *const FedrcoConfig,
    out_dir: *const c_char,
    out: *mut *mut FedrcoRun,
) -> FedrcoStatus {
    let Some(cfg) = cfg.as_ref() else {
        return FedrcoStatus::InvalidArgument;
    };
    if out.is_null() {
        return FedrcoStatus::InvalidArgument;
    }
    let dir = if out_dir.is_null() {
        None
    } else {
        match CStr::from_ptr(out_dir).to_str() {
            Ok(path) => Some(path.to_string()),
            Err(_) => {
                set_last_error("out_dir is not valid UTF-8");
                return FedrcoStatus::InvalidArgument;
            }
        }
    };
    let result = run_experiment(&cfg.0, dir.as_deref().map(Path::new));
    match result {
        Ok(RunArtifacts {
            metrics,
            final_test_accuracy,
            ..
        }) => {
            *out = Box::into_raw(Box::new(FedrcoRun {
                metrics,
                final_test_accuracy,
            }));
            FedrcoStatus::Ok
        }
        Err(err) => {
            set_last_error(err.to_string());
            match err {
                fedrco::Error::ConfigInvalid { .. } => FedrcoStatus::ConfigError,
                _ => FedrcoStatus::RuntimeError,
            }
        }
    }
}

/// Number of completed rounds.
///
/// # Safety
/// `run` must be a live run handle.
#[no_mangle]
pub unsafe extern "C" fn fedrco_run_rounds(run: *const FedrcoRun) -> size_t {
    run.as_ref().map_or(0, |r| r.metrics.len())
}

/// Final global test accuracy (NaN for a null handle).
///
/// # Safety
/// `run` must be a live run handle or null.
#[no_mangle]
pub unsafe extern "C" fn fedrco_run_final_accuracy(run: *const FedrcoRun) -> f64 {
    run.as_ref().map_or(f64::NAN, |r| r.final_test_accuracy)
}

/// Read one metric of one round into `value`.
///
/// # Safety
/// `run` must be a live run handle and `value` valid storage for one f64.
#[no_mangle]
pub unsafe extern "C" fn fedrco_run_metric(
    run: *const FedrcoRun,
    round_index: size_t,
    metric: FedrcoMetric,
    value: *mut f64,
) -> FedrcoStatus {
    let Some(run) = run.as_ref() else {
        return FedrcoStatus::InvalidArgument;
    };
    if value.is_null() {
        return FedrcoStatus::InvalidArgument;
    }
    let Some(record) = run.metrics.get(round_index) else {
        set_last_error(format!(
            "round index {round_index} out of range ({} rounds)",
            run.metrics.len()
        ));
        return FedrcoStatus::InvalidArgument;
    };
    *value = match metric {
        FedrcoMetric::TestAccuracy => record.test_accuracy,
        FedrcoMetric::TrainLoss => record.train_loss,
        FedrcoMetric::TrainAccuracy => record.train_accuracy,
        FedrcoMetric::AnomalyLow => record.anomaly_low as f64,
        FedrcoMetric::AnomalyHigh => record.anomaly_high as f64,
        FedrcoMetric::HardResets => record.hard_resets as f64,
        FedrcoMetric::Inversions => record.inversions as f64,
        FedrcoMetric::CommScalars => record.comm_scalars as f64,
    };
    FedrcoStatus::Ok
}

/// # Safety
/// `run` must be a pointer from `fedrco_run_experiment`, not yet freed; null
/// is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fedrco_run_free(run: *mut FedrcoRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

fn suites_for(name: &str, seed: u64) -> fedrco::Result<Vec<SuiteOutcome>> {
    Ok(match name {
        "rank" => vec![run_rank_suite(seed)?],
        "condition" => vec![run_condition_suite(seed)?],
        "descent" => vec![run_descent_suite(seed)?],
        "drift" => vec![run_drift_suite(seed)?],
        "all" => vec![
            run_rank_suite(seed)?,
            run_condition_suite(seed)?,
            run_descent_suite(seed)?,
            run_drift_suite(seed)?,
        ],
        other => {
            return Err(fedrco::Error::ConfigInvalid {
                path: "suite".to_string(),
                reason: format!("unknown suite `{other}`"),
            })
        }
    })
}

/// Run an audit suite (`rank`, `condition`, `descent`, `drift`, or `all`).
/// On success or on `AuditFailed`, `json_out` (when non-null) receives a
/// newline-separated JSON report allocated by this library; free it with
/// [`fedrco_string_free`].
///
/// # Safety
/// `suite` must be a valid NUL-terminated string; `json_out` null or valid
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fedrco_audit(
    suite: *const c_char,
    seed: u64,
    json_out: *mut *mut c_char,
) -> FedrcoStatus {
    if suite.is_null() {
        return FedrcoStatus::InvalidArgument;
    }
    let name = match CStr::from_ptr(suite).to_str() {
        Ok(name) => name,
        Err(_) => {
            set_last_error("suite name is not valid UTF-8");
            return FedrcoStatus::InvalidArgument;
        }
    };
    let outcomes = match suites_for(name, seed) {
        Ok(outcomes) => outcomes,
        Err(err) => {
            set_last_error(err.to_string());
            return match err {
                fedrco::Error::ConfigInvalid { .. } => FedrcoStatus::ConfigError,
                _ => FedrcoStatus::RuntimeError,
            };
        }
    };
    let mut lines = Vec::new();
    let mut all_pass = true;
    for outcome in &outcomes {
        for report in &outcome.reports {
            lines.push(report.to_json_line());
        }
        lines.push(serde_json_line(&outcome.suite, outcome.pass));
        all_pass &= outcome.pass;
    }
    if !json_out.is_null() {
        let joined = CString::new(lines.join("\n")).unwrap_or_default();
        *json_out = joined.into_raw();
    }
    if all_pass {
        FedrcoStatus::Ok
    } else {
        set_last_error(format!("audit suite `{name}` failed"));
        FedrcoStatus::AuditFailed
    }
}

fn serde_json_line(suite: &str, pass: bool) -> String {
    format!("{{\"suite\":\"{suite}\",\"pass\":{pass}}}")
}

/// Free a string allocated by this library.
///
/// # Safety
/// `s` must be a pointer returned via `json_out` from [`fedrco_audit`], not
/// yet freed; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn fedrco_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn config_roundtrip_and_run_through_the_abi() {
        unsafe {
            let json = CString::new(
                r#"{"method":"fedavg","clients":4,"rounds":2,"local_epochs":3,
                    "dataset":{"kind":"synthetic","features":6,"classes":3,"samples":300,"separation":4.0},
                    "model":{"kind":"dense","hidden":[8]},"seed":5}"#,
            )
            .unwrap();
            let mut cfg: *mut FedrcoConfig = ptr::null_mut();
            assert_eq!(
                fedrco_config_parse(json.as_ptr(), &mut cfg),
                FedrcoStatus::Ok
            );
            assert_eq!(fedrco_config_set_seed(cfg, 6), FedrcoStatus::Ok);

            let mut run: *mut FedrcoRun = ptr::null_mut();
            assert_eq!(
                fedrco_run_experiment(cfg, ptr::null(), &mut run),
                FedrcoStatus::Ok
            );
            assert_eq!(fedrco_run_rounds(run), 2);
            let mut value = 0.0f64;
            assert_eq!(
                fedrco_run_metric(run, 1, FedrcoMetric::TestAccuracy, &mut value),
                FedrcoStatus::Ok
            );
            assert!((0.0..=1.0).contains(&value));
            assert!((fedrco_run_final_accuracy(run) - value).abs() < 1e-12);
            assert_eq!(
                fedrco_run_metric(run, 9, FedrcoMetric::TestAccuracy, &mut value),
                FedrcoStatus::InvalidArgument
            );
            fedrco_run_free(run);
            fedrco_config_free(cfg);
        }
    }

    #[test]
    fn bad_config_reports_config_error_with_message() {
        unsafe {
            let json = CString::new(r#"{"methd":"fedavg"}"#).unwrap();
            let mut cfg: *mut FedrcoConfig = ptr::null_mut();
            assert_eq!(
                fedrco_config_parse(json.as_ptr(), &mut cfg),
                FedrcoStatus::ConfigError
            );
            let message = CStr::from_ptr(fedrco_last_error()).to_string_lossy();
            assert!(!message.is_empty());
        }
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            assert_eq!(
                fedrco_config_parse(ptr::null(), ptr::null_mut()),
                FedrcoStatus::InvalidArgument
            );
            assert_eq!(fedrco_run_rounds(ptr::null()), 0);
            assert!(fedrco_run_final_accuracy(ptr::null()).is_nan());
            fedrco_run_free(ptr::null_mut());
            fedrco_config_free(ptr::null_mut());
            fedrco_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn audit_returns_json_and_status() {
        unsafe {
            let suite = CString::new("rank").unwrap();
            let mut json: *mut c_char = ptr::null_mut();
            let status = fedrco_audit(suite.as_ptr(), 3, &mut json);
            assert_eq!(status, FedrcoStatus::Ok);
            let text = CStr::from_ptr(json).to_string_lossy().to_string();
            assert!(text.contains("\"suite\":\"rank\""));
            fedrco_string_free(json);

            let bogus = CString::new("bogus").unwrap();
            assert_eq!(
                fedrco_audit(bogus.as_ptr(), 3, ptr::null_mut()),
                FedrcoStatus::ConfigError
            );
        }
    }
}
