//! Collocation QA, the PurpleAir correction equation, and construction of the
//! empirical residual table.

use serde::{Deserialize, Serialize};

use crate::domain::Site;
use crate::error::{Error, Result};
use crate::error_models::{decile_index, ResidualTable};
use crate::ingest::CollocatedDailyObs;
use crate::quantile::nearest_rank;

/// Linear correction `slope_pm * pa + slope_rh * rh + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionCoefficients {
    pub slope_pm: f64,
    pub slope_rh: f64,
    pub intercept: f64,
}

impl Default for CorrectionCoefficients {
    fn default() -> Self {
        CorrectionCoefficients {
            slope_pm: 0.524,
            slope_rh: -0.0862,
            intercept: 5.75,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QaThresholds {
    pub min_monitor_hours: f64,
    pub min_completeness: f64,
    /// Channels agree when |A - B| is below this (µg/m³) ...
    pub abs_channel_diff: f64,
    /// ... or when |A - B| / mean(A, B) is below this.
    pub rel_channel_diff: f64,
    pub monitor_cap: f64,
    pub pairing_radius: f64,
}

impl Default for QaThresholds {
    fn default() -> Self {
        QaThresholds {
            min_monitor_hours: 18.0,
            min_completeness: 0.90,
            abs_channel_diff: 5.0,
            rel_channel_diff: 0.61,
            monitor_cap: 112.0,
            pairing_radius: 50.0,
        }
    }
}

pub fn apply_correction(pa_pm25: f64, rh: f64, coeffs: &CorrectionCoefficients) -> f64 {
    coeffs.slope_pm * pa_pm25 + coeffs.slope_rh * rh + coeffs.intercept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QaRejection {
    MonitorHours,
    Completeness,
    ChannelDisagreement,
    MonitorCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QaVerdict {
    /// Passed every gate; carries the two-channel mean.
    Accepted { pa_pm25: f64 },
    /// First gate that failed.
    Rejected(QaRejection),
}

impl QaVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, QaVerdict::Accepted { .. })
    }
}

fn channels_agree(a: f64, b: f64, th: &QaThresholds) -> bool {
    let diff = (a - b).abs();
    if diff < th.abs_channel_diff {
        return true;
    }
    let mean = 0.5 * (a + b);
    // A zero mean leaves only the absolute test.
    mean > 0.0 && diff / mean < th.rel_channel_diff
}

pub fn qa_filter(obs: &CollocatedDailyObs, th: &QaThresholds) -> QaVerdict {
    if obs.monitor_hours < th.min_monitor_hours {
        QaVerdict::Rejected(QaRejection::MonitorHours)
    } else if obs.completeness_a < th.min_completeness || obs.completeness_b < th.min_completeness {
        QaVerdict::Rejected(QaRejection::Completeness)
    } else if !channels_agree(obs.pa_a_pm25, obs.pa_b_pm25, th) {
        QaVerdict::Rejected(QaRejection::ChannelDisagreement)
    } else if obs.monitor_pm25 > th.monitor_cap {
        QaVerdict::Rejected(QaRejection::MonitorCap)
    } else {
        QaVerdict::Accepted {
            pa_pm25: 0.5 * (obs.pa_a_pm25 + obs.pa_b_pm25),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollocatedPair {
    pub monitor_id: u64,
    pub sensor_id: u64,
    pub distance_m: f64,
}

/// Every monitor/sensor pair within `radius` meters (inclusive).
pub fn pair_collocated(monitors: &[Site], sensors: &[Site], radius: f64) -> Vec<CollocatedPair> {
    let r2 = radius * radius;
    monitors
        .iter()
        .flat_map(|m| {
            sensors.iter().filter_map(move |s| {
                let d2 = m.location.dist_sq(&s.location);
                (d2 <= r2).then(|| CollocatedPair {
                    monitor_id: m.id,
                    sensor_id: s.id,
                    distance_m: d2.sqrt(),
                })
            })
        })
        .collect()
}

/// A QA-accepted observation reduced to what the correction needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedObs {
    pub monitor_pm25: f64,
    pub pa_pm25: f64,
    pub rh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub n_accepted: usize,
    pub rmse: f64,
    /// Null when the monitor values have no spread.
    pub r2: Option<f64>,
}

/// RMSE of `residuals` and R² against `observed`, summed in input order.
pub fn fit_stats(observed: &[f64], residuals: &[f64]) -> FitStats {
    let n = residuals.len();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let rmse = if n == 0 { f64::NAN } else { (ss_res / n as f64).sqrt() };
    let mean = observed.iter().sum::<f64>() / n.max(1) as f64;
    let ss_tot: f64 = observed.iter().map(|y| (y - mean) * (y - mean)).sum();
    FitStats {
        n_accepted: n,
        rmse,
        r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
    }
}

/// Residual table keyed on nearest-rank deciles of the monitor values.
///
/// Residuals are `monitor - corrected PA`, so adding a drawn residual to a
/// true value reproduces the sensor's bias direction.
pub fn build_residual_table(
    accepted: &[AcceptedObs],
    coeffs: &CorrectionCoefficients,
) -> Result<(ResidualTable, FitStats)> {
    if accepted.len() < 10 {
        return Err(Error::Calibration(format!(
            "need at least 10 accepted observations, got {}",
            accepted.len()
        )));
    }
    let monitor: Vec<f64> = accepted.iter().map(|o| o.monitor_pm25).collect();
    let residuals: Vec<f64> = accepted
        .iter()
        .map(|o| o.monitor_pm25 - apply_correction(o.pa_pm25, o.rh, coeffs))
        .collect();
    let mut boundaries = [0.0; 9];
    for (k, b) in boundaries.iter_mut().enumerate() {
        *b = nearest_rank(&monitor, (k + 1) as f64 / 10.0).expect("nonempty");
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Calibration(format!(
            "monitor values have too few distinct levels for ten deciles (boundaries {boundaries:?}); \
             merge pools or supply more data"
        )));
    }
    let mut pools: [Vec<f64>; 10] = Default::default();
    for (m, r) in monitor.iter().zip(&residuals) {
        pools[decile_index(*m, &boundaries) - 1].push(*r);
    }
    let table = ResidualTable::new(boundaries, pools)?;
    Ok((table, fit_stats(&monitor, &residuals)))
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub n_total: usize,
    pub rejected: Vec<(QaRejection, usize)>,
    pub fit: FitStats,
}

/// QA-filters raw collocated days, then builds the residual table.
pub fn calibrate(
    obs: &[CollocatedDailyObs],
    thresholds: &QaThresholds,
    coeffs: &CorrectionCoefficients,
) -> Result<(ResidualTable, CalibrationReport)> {
    let mut accepted = Vec::new();
    let mut rejected: Vec<(QaRejection, usize)> = Vec::new();
    for o in obs {
        match qa_filter(o, thresholds) {
            QaVerdict::Accepted { pa_pm25 } => accepted.push(AcceptedObs {
                monitor_pm25: o.monitor_pm25,
                pa_pm25,
                rh: o.rh,
            }),
            QaVerdict::Rejected(why) => match rejected.iter_mut().find(|(r, _)| *r == why) {
                Some((_, n)) => *n += 1,
                None => rejected.push((why, 1)),
            },
        }
    }
    let (table, fit) = build_residual_table(&accepted, coeffs)?;
    Ok((
        table,
        CalibrationReport {
            n_total: obs.len(),
            rejected,
            fit,
        },
    ))
}
