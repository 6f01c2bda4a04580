//! Simulated low-cost sensor measurement error.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Statewide unweighted mean PM2.5 used to scale non-differential error.
pub const DEFAULT_REFERENCE_MEAN: f64 = 5.0;

/// Decile upper edges of true PM2.5 from the California 2016 collocation set.
pub const CA_DECILE_BOUNDARIES: [f64; 9] =
    [2.455, 3.750, 5.083, 6.458, 8.000, 9.796, 11.875, 15.08, 22.65];

/// Decile cut points over true PM2.5 with a residual pool per decile.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTable {
    boundaries: [f64; 9],
    pools: [Vec<f64>; 10],
}

impl ResidualTable {
    pub fn new(boundaries: [f64; 9], pools: [Vec<f64>; 10]) -> Result<Self> {
        if boundaries.iter().any(|b| !b.is_finite()) || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Calibration(format!(
                "decile boundaries must be finite and strictly ascending: {boundaries:?}"
            )));
        }
        if let Some(i) = pools.iter().position(Vec::is_empty) {
            return Err(Error::Calibration(format!(
                "residual pool for decile {} is empty; merge pools or supply more data",
                i + 1
            )));
        }
        if pools.iter().flatten().any(|r| !r.is_finite()) {
            return Err(Error::Calibration("residuals must be finite".into()));
        }
        Ok(ResidualTable { boundaries, pools })
    }

    pub fn boundaries(&self) -> &[f64; 9] {
        &self.boundaries
    }

    /// Pool for a 1-based decile.
    pub fn pool(&self, decile: usize) -> &[f64] {
        &self.pools[decile - 1]
    }

    pub fn total_residuals(&self) -> usize {
        self.pools.iter().map(Vec::len).sum()
    }

    /// Plain-text form: a `boundary` header, nine cut points, then a
    /// `decile,residual` header and one row per residual.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("boundary\n");
        for b in &self.boundaries {
            s.push_str(&format!("{b}\n"));
        }
        s.push_str("decile,residual\n");
        for (i, pool) in self.pools.iter().enumerate() {
            for r in pool {
                s.push_str(&format!("{},{r}\n", i + 1));
            }
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::ingest::write_text(path.as_ref(), &self.to_csv_string())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, m: String| Error::parse(path, line as u64, m);
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, "boundary")) => {}
            Some((n, other)) => return Err(err(n, format!("expected `boundary` header, found {other:?}"))),
            None => return Err(err(0, "empty residual table".into())),
        }
        let mut boundaries = [0.0; 9];
        for b in boundaries.iter_mut() {
            let (n, l) = lines
                .next()
                .ok_or_else(|| err(0, "fewer than 9 boundary rows".into()))?;
            *b = l.parse().map_err(|_| err(n, format!("bad boundary {l:?}")))?;
        }
        match lines.next() {
            Some((_, "decile,residual")) => {}
            Some((n, other)) => {
                return Err(err(n, format!("expected `decile,residual` header after 9 boundaries, found {other:?}")))
            }
            None => return Err(err(0, "missing residual rows".into())),
        }
        let mut pools: [Vec<f64>; 10] = Default::default();
        for (n, l) in lines {
            let (d, r) = l
                .split_once(',')
                .ok_or_else(|| err(n, format!("expected decile,residual, found {l:?}")))?;
            let d: usize = d.trim().parse().map_err(|_| err(n, format!("bad decile {d:?}")))?;
            if !(1..=10).contains(&d) {
                return Err(err(n, format!("decile {d} outside 1..=10")));
            }
            let r: f64 = r.trim().parse().map_err(|_| err(n, format!("bad residual {r:?}")))?;
            pools[d - 1].push(r);
        }
        ResidualTable::new(boundaries, pools)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }
}

/// 1-based decile of `value`: one plus the number of boundaries strictly
/// below it, so a value on a boundary stays in the lower decile.
pub fn decile_index(value: f64, boundaries: &[f64]) -> usize {
    1 + boundaries.partition_point(|&b| b < value)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ErrorKind {
    None,
    /// Normal(0, (accuracy * reference_mean)^2), independent of concentration.
    NonDifferential { accuracy: f64, reference_mean: f64 },
    /// Normal(0, (accuracy * true)^2).
    Differential { accuracy: f64 },
    /// A residual drawn uniformly from the pool of the true value's decile.
    EmpiricalDecile(Arc<ResidualTable>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    pub kind: ErrorKind,
    /// Floor simulated readings at zero.
    pub clamp_nonnegative: bool,
}

impl ErrorModel {
    pub fn none() -> Self {
        ErrorModel { kind: ErrorKind::None, clamp_nonnegative: false }
    }

    pub fn non_differential(accuracy: f64) -> Result<Self> {
        Self::non_differential_with_reference(accuracy, DEFAULT_REFERENCE_MEAN)
    }

    pub fn non_differential_with_reference(accuracy: f64, reference_mean: f64) -> Result<Self> {
        check_accuracy(accuracy)?;
        if !(reference_mean.is_finite() && reference_mean > 0.0) {
            return Err(Error::Config(format!("reference mean must be positive, got {reference_mean}")));
        }
        Ok(ErrorModel {
            kind: ErrorKind::NonDifferential { accuracy, reference_mean },
            clamp_nonnegative: false,
        })
    }

    pub fn differential(accuracy: f64) -> Result<Self> {
        check_accuracy(accuracy)?;
        Ok(ErrorModel { kind: ErrorKind::Differential { accuracy }, clamp_nonnegative: false })
    }

    pub fn empirical(table: Arc<ResidualTable>) -> Self {
        ErrorModel { kind: ErrorKind::EmpiricalDecile(table), clamp_nonnegative: false }
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp_nonnegative = clamp;
        self
    }

    /// True when every simulated reading equals the true value.
    pub fn is_exact(&self) -> bool {
        match &self.kind {
            ErrorKind::None => true,
            ErrorKind::NonDifferential { accuracy, .. } | ErrorKind::Differential { accuracy } => *accuracy == 0.0,
            ErrorKind::EmpiricalDecile(_) => false,
        }
    }

    /// Short stable name used in result tables, e.g. `nondiff_0.25`.
    pub fn label(&self) -> String {
        let base = match &self.kind {
            ErrorKind::None => "none".to_string(),
            ErrorKind::NonDifferential { accuracy, reference_mean } if *reference_mean == DEFAULT_REFERENCE_MEAN => {
                format!("nondiff_{accuracy}")
            }
            ErrorKind::NonDifferential { accuracy, reference_mean } => {
                format!("nondiff_{accuracy}_ref{reference_mean}")
            }
            ErrorKind::Differential { accuracy } => format!("diff_{accuracy}"),
            ErrorKind::EmpiricalDecile(_) => "empirical".to_string(),
        };
        if self.clamp_nonnegative {
            format!("{base}_clamped")
        } else {
            base
        }
    }
}

impl fmt::Display for ErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn check_accuracy(a: f64) -> Result<()> {
    if a.is_finite() && a >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("accuracy must be finite and nonnegative, got {a}")))
    }
}

/// One empirical draw, reporting where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalDraw {
    pub decile: usize,
    pub pool_index: usize,
    pub residual: f64,
}

pub fn empirical_draw<R: Rng + ?Sized>(table: &ResidualTable, true_pm25: f64, rng: &mut R) -> EmpiricalDraw {
    let decile = decile_index(true_pm25, table.boundaries());
    let pool = table.pool(decile);
    let pool_index = rng.random_range(0..pool.len());
    EmpiricalDraw { decile, pool_index, residual: pool[pool_index] }
}

/// Additive error for one sensor-day, before any clamping.
pub fn draw_error<R: Rng + ?Sized>(true_pm25: f64, model: &ErrorModel, rng: &mut R) -> f64 {
    match &model.kind {
        ErrorKind::None => 0.0,
        ErrorKind::NonDifferential { accuracy, reference_mean } => {
            let z: f64 = StandardNormal.sample(rng);
            z * accuracy * reference_mean
        }
        ErrorKind::Differential { accuracy } => {
            let z: f64 = StandardNormal.sample(rng);
            z * accuracy * true_pm25
        }
        ErrorKind::EmpiricalDecile(table) => empirical_draw(table, true_pm25, rng).residual,
    }
}

/// Simulated sensor reading for a true concentration.
pub fn simulate_measurement<R: Rng + ?Sized>(true_pm25: f64, model: &ErrorModel, rng: &mut R) -> f64 {
    let v = true_pm25 + draw_error(true_pm25, model, rng);
    if model.clamp_nonnegative {
        v.max(0.0)
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn sd(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v.sqrt())
    }

    fn table_with(pools: [Vec<f64>; 10]) -> ResidualTable {
        ResidualTable::new(CA_DECILE_BOUNDARIES, pools).unwrap()
    }

    #[test]
    fn ca_deciles() {
        assert_eq!(decile_index(0.0, &CA_DECILE_BOUNDARIES), 1);
        assert_eq!(decile_index(7.0, &CA_DECILE_BOUNDARIES), 5);
        assert_eq!(decile_index(30.0, &CA_DECILE_BOUNDARIES), 10);
        assert_eq!(decile_index(8.0, &CA_DECILE_BOUNDARIES), 5);
        assert_eq!(decile_index(8.000001, &CA_DECILE_BOUNDARIES), 6);
        assert_eq!(decile_index(112.18, &CA_DECILE_BOUNDARIES), 10);
    }

    #[test]
    fn no_error_is_identity() {
        let mut rng = stream(&[1]);
        for v in [0.0, 3.3, 57.0] {
            assert_eq!(simulate_measurement(v, &ErrorModel::none(), &mut rng), v);
        }
    }

    #[test]
    fn non_differential_sd() {
        for (a, target) in [(0.10, 0.5), (0.25, 1.25)] {
            let m = ErrorModel::non_differential(a).unwrap();
            let mut rng = stream(&[2, (a * 100.0) as u64]);
            let e: Vec<f64> = (0..1_000_000).map(|_| simulate_measurement(10.0, &m, &mut rng) - 10.0).collect();
            let (mean, s) = sd(&e);
            assert!((s / target - 1.0).abs() < 0.02, "a={a}: sd {s}");
            assert!(mean.abs() < 3.0 * s / 1000.0);
        }
    }

    #[test]
    fn differential_sd_at_ten() {
        let m = ErrorModel::differential(0.25).unwrap();
        let mut rng = stream(&[3]);
        let e: Vec<f64> = (0..1_000_000).map(|_| simulate_measurement(10.0, &m, &mut rng) - 10.0).collect();
        let (mean, s) = sd(&e);
        assert!((s / 2.5 - 1.0).abs() < 0.02, "sd {s}");
        assert!(mean.abs() < 3.0 * s / 1000.0);
    }

    #[test]
    fn differential_abs_error_slope() {
        // E|a * t * z| = a * t * sqrt(2 / pi): slope of |error| on t.
        let a = 0.25;
        let m = ErrorModel::differential(a).unwrap();
        let mut rng = stream(&[4]);
        let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..200_000 {
            let t = 1.0 + (i % 40) as f64;
            let e = (simulate_measurement(t, &m, &mut rng) - t).abs();
            sx += t;
            sy += e;
            sxx += t * t;
            sxy += t * e;
            n += 1.0;
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let expected = a * (2.0 / std::f64::consts::PI).sqrt();
        assert!((slope / expected - 1.0).abs() < 0.03, "slope {slope} vs {expected}");
    }

    #[test]
    fn singleton_pool() {
        let mut pools: [Vec<f64>; 10] = std::array::from_fn(|_| vec![0.0]);
        pools[2] = vec![1.0];
        let m = ErrorModel::empirical(Arc::new(table_with(pools)));
        let mut rng = stream(&[5]);
        for _ in 0..100 {
            assert_eq!(simulate_measurement(4.0, &m, &mut rng), 5.0);
        }
    }

    #[test]
    fn empirical_draws_come_from_matching_pool() {
        // Pool d holds values d*100 + k, so the source is recoverable.
        let pools: [Vec<f64>; 10] = std::array::from_fn(|d| (0..5).map(|k| ((d + 1) * 100 + k) as f64).collect());
        let t = table_with(pools);
        let mut rng = stream(&[6]);
        for i in 0..5000 {
            let v = i as f64 * 0.01;
            let d = empirical_draw(&t, v, &mut rng);
            assert_eq!(d.decile, decile_index(v, t.boundaries()));
            assert_eq!(d.residual, t.pool(d.decile)[d.pool_index]);
            assert_eq!((d.residual as usize) / 100, d.decile);
        }
    }

    #[test]
    fn clamp_floors_at_zero() {
        let m = ErrorModel::non_differential(10.0).unwrap().with_clamp(true);
        let mut rng = stream(&[7]);
        assert!((0..1000).all(|_| simulate_measurement(0.5, &m, &mut rng) >= 0.0));
        assert!(m.label().ends_with("_clamped"));
    }

    #[test]
    fn table_validation_and_text_round_trip() {
        let mut pools: [Vec<f64>; 10] = std::array::from_fn(|d| vec![d as f64 - 4.5, 0.25]);
        let t = table_with(pools.clone());
        let p = Path::new("mem");
        assert_eq!(ResidualTable::parse(&t.to_csv_string(), p).unwrap(), t);
        let mut b = CA_DECILE_BOUNDARIES;
        b[3] = b[2];
        assert!(ResidualTable::new(b, pools.clone()).is_err());
        pools[7].clear();
        assert!(ResidualTable::new(CA_DECILE_BOUNDARIES, pools).is_err());
        assert!(ResidualTable::parse("boundary\n1\n2\n", p).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(ErrorModel::none().label(), "none");
        assert_eq!(ErrorModel::non_differential(0.1).unwrap().label(), "nondiff_0.1");
        assert_eq!(ErrorModel::differential(0.25).unwrap().label(), "diff_0.25");
        assert!(ErrorModel::differential(-0.1).is_err());
    }

    proptest! {
        #[test]
        fn decile_index_is_monotone(a in 0.0f64..150.0, b in 0.0f64..150.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(decile_index(lo, &CA_DECILE_BOUNDARIES) <= decile_index(hi, &CA_DECILE_BOUNDARIES));
        }
    }
}
