//! C ABI for the aqnet simulator.
//!
//! Every fallible function returns an [`AqnetStatus`]; on failure the message
//! is available from [`aqnet_last_error_message`] on the same thread. Objects
//! are opaque handles created by `*_new`/`*_load`/`*_run` and released with the
//! matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use aqnet::aqi::AqiBreakpoints;
use aqnet::assignment::SpatialIndex;
use aqnet::calibration::{apply_correction, CorrectionCoefficients};
use aqnet::domain::{DistanceMetric, Point};
use aqnet::error_models::{decile_index, CA_DECILE_BOUNDARIES};
use aqnet::experiment::{
    run_experiment, with_workers, write_results_csv, ExperimentConfig, ExperimentInputs, ExperimentResult, Scenario,
    ScenarioLabel,
};
use aqnet::metrics::METRIC_NAMES;
use aqnet::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AqnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Sampling = 5,
    Calibration = 6,
    NoInstruments = 7,
    Shape = 8,
    OutOfRange = 9,
    Panic = 10,
}

/// Opaque nearest-instrument index.
pub struct AqnetIndex {
    inner: SpatialIndex,
}

/// Opaque loaded experiment: config plus validated inputs.
pub struct AqnetExperiment {
    config: ExperimentConfig,
    inputs: ExperimentInputs,
    scenario: Scenario,
}

/// Opaque trial-averaged report.
pub struct AqnetReport {
    label: ScenarioLabel,
    result: ExperimentResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> AqnetStatus {
    match e {
        Error::Config(_) => AqnetStatus::InvalidArgument,
        Error::Parse { .. } | Error::Format { .. } | Error::IncompleteField(_) | Error::Csv(_) | Error::Json(_) => {
            AqnetStatus::Parse
        }
        Error::Sampling(_) => AqnetStatus::Sampling,
        Error::Calibration(_) => AqnetStatus::Calibration,
        Error::NoInstruments => AqnetStatus::NoInstruments,
        Error::Shape(_) => AqnetStatus::Shape,
        Error::Io(_) => AqnetStatus::Io,
    }
}

fn fail(status: AqnetStatus, msg: impl Into<String>) -> AqnetStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), AqnetStatus>) -> AqnetStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AqnetStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(AqnetStatus::Panic, "internal panic"),
    }
}

fn lift(e: Error) -> AqnetStatus {
    fail(status_of(&e), e.to_string())
}

fn null(what: &str) -> AqnetStatus {
    fail(AqnetStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, AqnetStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(AqnetStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message for the last failure on this thread, or null. Valid until the
/// next aqnet call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn aqnet_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static version string; do not free.
#[no_mangle]
pub extern "C" fn aqnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// AQI class ordinal (0 = Green .. 5 = Maroon) of a 24-hour PM2.5 value.
/// `edges` is null for the default table or points to five ascending upper edges.
///
/// # Safety
/// `edges` must be null or point to 5 readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_classify(pm25: f64, edges: *const f64, out: *mut u8) -> AqnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let bp = if edges.is_null() {
            AqiBreakpoints::default()
        } else {
            let mut e = [0.0; 5];
            e.copy_from_slice(std::slice::from_raw_parts(edges, 5));
            AqiBreakpoints::new(e).map_err(lift)?
        };
        *out = bp.classify(pm25).ordinal();
        Ok(())
    })
}

/// Corrected sensor PM2.5 with the default coefficients.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_apply_correction(pa_pm25: f64, rh: f64, out: *mut f64) -> AqnetStatus {
    aqnet_apply_correction_with(pa_pm25, rh, 0.524, -0.0862, 5.75, out)
}

/// Corrected sensor PM2.5: `slope_pm * pa_pm25 + slope_rh * rh + intercept`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_apply_correction_with(
    pa_pm25: f64,
    rh: f64,
    slope_pm: f64,
    slope_rh: f64,
    intercept: f64,
    out: *mut f64,
) -> AqnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = CorrectionCoefficients { slope_pm, slope_rh, intercept };
        *out = apply_correction(pa_pm25, rh, &c);
        Ok(())
    })
}

/// 1-based decile of `value` given 9 ascending boundaries (null for the
/// built-in California table).
///
/// # Safety
/// `boundaries` must be null or point to 9 readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_decile_index(value: f64, boundaries: *const f64, out: *mut u32) -> AqnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if value.is_nan() {
            return Err(fail(AqnetStatus::InvalidArgument, "value is NaN"));
        }
        let b: &[f64] = if boundaries.is_null() {
            &CA_DECILE_BOUNDARIES
        } else {
            std::slice::from_raw_parts(boundaries, 9)
        };
        if b.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(fail(AqnetStatus::InvalidArgument, "boundaries must be strictly ascending"));
        }
        *out = decile_index(value, b) as u32;
        Ok(())
    })
}

/// Builds a nearest-instrument index over `n` points. With `haversine`, `x`
/// is longitude and `y` latitude in degrees and distances are great-circle
/// meters; otherwise planar meters.
///
/// # Safety
/// `ids`, `x`, `y` must each point to `n` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_index_new(
    ids: *const u64,
    x: *const f64,
    y: *const f64,
    n: usize,
    haversine: bool,
    out: *mut *mut AqnetIndex,
) -> AqnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if n > 0 && (ids.is_null() || x.is_null() || y.is_null()) {
            return Err(null("ids, x or y"));
        }
        let pts: Vec<(u64, Point)> = (0..n).map(|i| (*ids.add(i), Point::new(*x.add(i), *y.add(i)))).collect();
        let metric = if haversine { DistanceMetric::Haversine } else { DistanceMetric::Planar };
        let inner = SpatialIndex::build(&pts, metric).map_err(lift)?;
        *out = Box::into_raw(Box::new(AqnetIndex { inner }));
        Ok(())
    })
}

/// Nearest point to `(x, y)`; ties go to the lowest id.
///
/// # Safety
/// `index` must come from [`aqnet_index_new`]; `out_id` and `out_distance`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_index_nearest(
    index: *const AqnetIndex,
    x: f64,
    y: f64,
    out_id: *mut u64,
    out_distance: *mut f64,
) -> AqnetStatus {
    guard(|| {
        let Some(idx) = index.as_ref() else {
            return Err(null("index"));
        };
        if out_id.is_null() || out_distance.is_null() {
            return Err(null("out_id or out_distance"));
        }
        let q = Point::new(x, y);
        if !q.is_finite() {
            return Err(fail(AqnetStatus::InvalidArgument, "query is not finite"));
        }
        let hit = idx.inner.nearest(&q);
        *out_id = hit.id;
        *out_distance = hit.distance;
        Ok(())
    })
}

/// # Safety
/// `index` must be null or come from [`aqnet_index_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aqnet_index_free(index: *mut AqnetIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Loads an experiment config (JSON) and its inputs. Relative input paths
/// resolve against the config file's directory.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_experiment_load(
    config_path: *const c_char,
    out: *mut *mut AqnetExperiment,
) -> AqnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(config_path, "config_path")?;
        let config = ExperimentConfig::from_json_file(path).map_err(lift)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let inputs = ExperimentInputs::load(&config.inputs, dir).map_err(lift)?;
        let model = config.error_model.resolve(inputs.residual_table.as_ref()).map_err(lift)?;
        let scenario = Scenario::new(config.strategy, config.n_lcs, model);
        *out = Box::into_raw(Box::new(AqnetExperiment { config, inputs, scenario }));
        Ok(())
    })
}

/// Overrides the trial count and seed of a loaded experiment.
///
/// # Safety
/// `exp` must come from [`aqnet_experiment_load`].
#[no_mangle]
pub unsafe extern "C" fn aqnet_experiment_set_trials(exp: *mut AqnetExperiment, trials: usize, base_seed: u64) -> AqnetStatus {
    guard(|| {
        let Some(e) = exp.as_mut() else {
            return Err(null("exp"));
        };
        if trials == 0 {
            return Err(fail(AqnetStatus::InvalidArgument, "trials must be at least 1"));
        }
        e.config.trials = trials;
        e.config.base_seed = base_seed;
        Ok(())
    })
}

/// Runs all trials. `workers` of 0 uses the default thread pool; the result
/// does not depend on it.
///
/// # Safety
/// `exp` must come from [`aqnet_experiment_load`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_experiment_run(
    exp: *const AqnetExperiment,
    workers: usize,
    out: *mut *mut AqnetReport,
) -> AqnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let Some(e) = exp.as_ref() else {
            return Err(null("exp"));
        };
        let c = &e.config;
        let result = with_workers((workers > 0).then_some(workers), || {
            run_experiment(&e.inputs, &e.scenario, &c.weightings, c.trials, c.base_seed)
        })
        .and_then(|r| r)
        .map_err(lift)?;
        let label = ScenarioLabel::of(&e.scenario);
        *out = Box::into_raw(Box::new(AqnetReport { label, result }));
        Ok(())
    })
}

/// # Safety
/// `exp` must be null or come from [`aqnet_experiment_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aqnet_experiment_free(exp: *mut AqnetExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Number of metric columns per report row.
#[no_mangle]
pub extern "C" fn aqnet_metric_count() -> usize {
    METRIC_NAMES.len()
}

/// Column name of metric `k`, or null when out of range; do not free.
#[no_mangle]
pub extern "C" fn aqnet_metric_name(k: usize) -> *const c_char {
    const NAMES: [&str; 9] = [
        "mae\0",
        "p95_abs_err\0",
        "under_pct\0",
        "over_pct\0",
        "gap2plus_pct\0",
        "uhm_pct\0",
        "error_sd\0",
        "mean_dist_km\0",
        "mean_dist_gap2plus_km\0",
    ];
    NAMES.get(k).map_or(ptr::null(), |s| s.as_ptr().cast())
}

/// Rows (subset x weighting) in the averaged report.
///
/// # Safety
/// `report` must be null or come from [`aqnet_experiment_run`].
#[no_mangle]
pub unsafe extern "C" fn aqnet_report_rows(report: *const AqnetReport) -> usize {
    report.as_ref().map_or(0, |r| r.result.averaged.len())
}

/// Averaged metric `k` of row `row`. `out_present` is false for a null metric.
///
/// # Safety
/// `report` must come from [`aqnet_experiment_run`]; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn aqnet_report_value(
    report: *const AqnetReport,
    row: usize,
    k: usize,
    out_value: *mut f64,
    out_present: *mut bool,
) -> AqnetStatus {
    guard(|| {
        let Some(r) = report.as_ref() else {
            return Err(null("report"));
        };
        if out_value.is_null() || out_present.is_null() {
            return Err(null("out_value or out_present"));
        }
        let Some(v) = r.result.averaged.get(row).and_then(|a| a.values.get(k)) else {
            return Err(fail(AqnetStatus::OutOfRange, format!("row {row}, metric {k} out of range")));
        };
        *out_present = v.is_some();
        *out_value = v.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// Writes the averaged report as a results CSV.
///
/// # Safety
/// `report` must come from [`aqnet_experiment_run`]; `path` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn aqnet_report_write_csv(report: *const AqnetReport, path: *const c_char) -> AqnetStatus {
    guard(|| {
        let Some(r) = report.as_ref() else {
            return Err(null("report"));
        };
        let path = path_arg(path, "path")?;
        let file = std::fs::File::create(path).map_err(|e| lift(e.into()))?;
        write_results_csv(std::io::BufWriter::new(file), &[(r.label.clone(), r.result.averaged.as_slice())])
            .map_err(lift)
    })
}

/// # Safety
/// `report` must be null or come from [`aqnet_experiment_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aqnet_report_free(report: *mut AqnetReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names_match_core() {
        assert_eq!(aqnet_metric_count(), 9);
        for (k, name) in METRIC_NAMES.iter().enumerate() {
            let got = unsafe { CStr::from_ptr(aqnet_metric_name(k)) };
            assert_eq!(got.to_str().unwrap(), *name);
        }
        assert!(aqnet_metric_name(9).is_null());
    }
}
