//! Choosing which grid cells host a low-cost sensor.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::GridCell;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SiteAttribute {
    RoadLength,
    CesScore,
    PollutionScore,
}

impl SiteAttribute {
    pub fn value(self, cell: &GridCell) -> f64 {
        match self {
            SiteAttribute::RoadLength => cell.road_length_500m,
            SiteAttribute::CesScore => cell.ces_score,
            SiteAttribute::PollutionScore => cell.pollution_score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PlacementStrategy {
    /// Uniform draw among grids that already host a PurpleAir sensor.
    PurpleAirPool,
    /// Uniform draw among grids containing a school.
    SchoolPool,
    /// Draw over all grids with probability proportional to an attribute.
    WeightedBy(SiteAttribute),
}

impl PlacementStrategy {
    pub const ALL: [PlacementStrategy; 5] = [
        PlacementStrategy::PurpleAirPool,
        PlacementStrategy::SchoolPool,
        PlacementStrategy::WeightedBy(SiteAttribute::RoadLength),
        PlacementStrategy::WeightedBy(SiteAttribute::CesScore),
        PlacementStrategy::WeightedBy(SiteAttribute::PollutionScore),
    ];

    pub fn label(self) -> &'static str {
        match self {
            PlacementStrategy::PurpleAirPool => "purpleair",
            PlacementStrategy::SchoolPool => "schools",
            PlacementStrategy::WeightedBy(SiteAttribute::RoadLength) => "road_length",
            PlacementStrategy::WeightedBy(SiteAttribute::CesScore) => "ces_score",
            PlacementStrategy::WeightedBy(SiteAttribute::PollutionScore) => "pollution_score",
        }
    }

    /// Number of grids this strategy can ever select.
    pub fn eligible_count(self, cells: &[GridCell]) -> usize {
        match self {
            PlacementStrategy::PurpleAirPool => cells.iter().filter(|c| c.has_purpleair).count(),
            PlacementStrategy::SchoolPool => cells.iter().filter(|c| c.has_school).count(),
            PlacementStrategy::WeightedBy(a) => cells.iter().filter(|c| a.value(c) > 0.0).count(),
        }
    }

    pub fn is_eligible(self, cell: &GridCell) -> bool {
        match self {
            PlacementStrategy::PurpleAirPool => cell.has_purpleair,
            PlacementStrategy::SchoolPool => cell.has_school,
            PlacementStrategy::WeightedBy(a) => a.value(cell) > 0.0,
        }
    }
}

impl fmt::Display for PlacementStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PlacementStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlacementStrategy::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown placement strategy {s:?}; expected one of purpleair, schools, road_length, ces_score, pollution_score"
                ))
            })
    }
}

impl TryFrom<String> for PlacementStrategy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PlacementStrategy> for String {
    fn from(p: PlacementStrategy) -> String {
        p.label().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementResult {
    /// Selected grid ids, ascending.
    pub selected: Vec<usize>,
    pub strategy: PlacementStrategy,
    pub n_requested: usize,
}

/// Draws `n` distinct indices with probability proportional to weight,
/// equivalent in distribution to sequential weighted draws with removal.
///
/// Each index gets the key `-ln(u) / w` (exponential with rate `w`) and the
/// `n` smallest keys win. One uniform is consumed per index regardless of its
/// weight. The result is sorted ascending.
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::Sampling(format!("weight {w} is not finite and nonnegative")));
    }
    let positive = weights.iter().filter(|&&w| w > 0.0).count();
    if n > positive {
        return Err(Error::Sampling(format!(
            "cannot draw {n} items without replacement from {positive} positive weights"
        )));
    }
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(positive);
    for (i, &w) in weights.iter().enumerate() {
        // 1 - [0, 1) gives u in (0, 1], so the key is finite.
        let u = 1.0 - rng.random::<f64>();
        if w > 0.0 {
            keyed.push((-u.ln() / w, i));
        }
    }
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if n < keyed.len() && n > 0 {
        keyed.select_nth_unstable_by(n - 1, cmp);
    }
    let mut out: Vec<usize> = keyed.into_iter().take(n).map(|(_, i)| i).collect();
    out.sort_unstable();
    Ok(out)
}

pub fn select_sites<R: Rng + ?Sized>(
    strategy: PlacementStrategy,
    n: usize,
    cells: &[GridCell],
    rng: &mut R,
) -> Result<PlacementResult> {
    let selected = match strategy {
        PlacementStrategy::PurpleAirPool | PlacementStrategy::SchoolPool => {
            let pool: Vec<usize> = cells
                .iter()
                .filter(|c| strategy.is_eligible(c))
                .map(|c| c.id)
                .collect();
            if n > pool.len() {
                return Err(Error::Sampling(format!(
                    "{strategy}: requested {n} sites but the pool has {}",
                    pool.len()
                )));
            }
            // Unit weights keep draws uniform and nested across `n`.
            let weights: Vec<f64> = cells
                .iter()
                .map(|c| if strategy.is_eligible(c) { 1.0 } else { 0.0 })
                .collect();
            weighted_sample_without_replacement(&weights, n, rng)?
        }
        PlacementStrategy::WeightedBy(attr) => {
            let weights: Vec<f64> = cells.iter().map(|c| attr.value(c)).collect();
            weighted_sample_without_replacement(&weights, n, rng)
                .map_err(|e| match e {
                    Error::Sampling(m) => Error::Sampling(format!("{strategy}: {m}")),
                    e => e,
                })?
        }
    };
    Ok(PlacementResult {
        selected,
        strategy,
        n_requested: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use crate::rng::stream;

    fn cells(n: usize) -> Vec<GridCell> {
        (0..n)
            .map(|id| GridCell {
                id,
                centroid: Point::new(id as f64, 0.0),
                pop_density: 1.0,
                pct_poverty: 0.1,
                pct_nonwhite: 0.1,
                ces_score: id as f64,
                pollution_score: (id % 3) as f64,
                road_length_500m: if id % 2 == 0 { 100.0 } else { 0.0 },
                has_school: id % 4 == 0,
                has_purpleair: id % 5 == 0,
            })
            .collect()
    }

    #[test]
    fn all_equal_weights_full_draw() {
        let mut rng = stream(&[1]);
        let got = weighted_sample_without_replacement(&[2.0; 7], 7, &mut rng).unwrap();
        assert_eq!(got, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn zero_weight_never_drawn() {
        for s in 0..200 {
            let mut rng = stream(&[s]);
            assert_eq!(weighted_sample_without_replacement(&[0.0, 5.0], 1, &mut rng).unwrap(), vec![1]);
        }
        let mut rng = stream(&[0]);
        assert!(weighted_sample_without_replacement(&[0.0, 5.0], 2, &mut rng).is_err());
        assert!(weighted_sample_without_replacement(&[-1.0, 5.0], 1, &mut rng).is_err());
    }

    #[test]
    fn first_draw_frequencies() {
        // Analytic first-draw probabilities w_i / sum(w) = 1/6, 2/6, 3/6.
        let mut rng = stream(&[42]);
        let mut counts = [0u32; 3];
        let trials = 1_000_000;
        for _ in 0..trials {
            let s = weighted_sample_without_replacement(&[1.0, 2.0, 3.0], 1, &mut rng).unwrap();
            counts[s[0]] += 1;
        }
        for (i, c) in counts.iter().enumerate() {
            let f = *c as f64 / trials as f64;
            assert!((f - (i + 1) as f64 / 6.0).abs() < 0.01, "index {i}: {f}");
        }
    }

    #[test]
    fn two_draws_match_sequential_removal() {
        // P(first=a, second=b) = w_a/W * w_b/(W - w_a) for sequential removal.
        let w = [1.0, 2.0, 3.0];
        let total: f64 = w.iter().sum();
        let mut expected = [0.0; 3];
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    let p = w[a] / total * w[b] / (total - w[a]);
                    // Set {a, b}: missing index is 3 - a - b.
                    expected[3 - a - b] += p;
                }
            }
        }
        let mut rng = stream(&[9]);
        let mut missing = [0u32; 3];
        let trials = 300_000;
        for _ in 0..trials {
            let s = weighted_sample_without_replacement(&w, 2, &mut rng).unwrap();
            missing[3 - s[0] - s[1]] += 1;
        }
        for i in 0..3 {
            let f = missing[i] as f64 / trials as f64;
            assert!((f - expected[i]).abs() < 0.01, "{i}: {f} vs {}", expected[i]);
        }
    }

    #[test]
    fn pools_and_zero_requests() {
        let c = cells(40);
        let mut rng = stream(&[3]);
        for s in PlacementStrategy::ALL {
            let r = select_sites(s, 0, &c, &mut rng).unwrap();
            assert!(r.selected.is_empty());
        }
        let pool: Vec<usize> = c.iter().filter(|c| c.has_purpleair).map(|c| c.id).collect();
        let r = select_sites(PlacementStrategy::PurpleAirPool, pool.len(), &c, &mut rng).unwrap();
        assert_eq!(r.selected, pool);
        assert!(select_sites(PlacementStrategy::SchoolPool, 11, &c, &mut rng).is_err());
        let r = select_sites(PlacementStrategy::SchoolPool, 10, &c, &mut rng).unwrap();
        assert!(r.selected.iter().all(|&g| c[g].has_school));
    }

    #[test]
    fn cardinality_uniqueness_and_replay() {
        let c = cells(60);
        for s in PlacementStrategy::ALL {
            let eligible = s.eligible_count(&c);
            for n in [1, eligible / 2, eligible] {
                let a = select_sites(s, n, &c, &mut stream(&[5, n as u64])).unwrap();
                let b = select_sites(s, n, &c, &mut stream(&[5, n as u64])).unwrap();
                assert_eq!(a, b);
                assert_eq!(a.selected.len(), n);
                assert!(a.selected.windows(2).all(|w| w[0] < w[1]));
                assert!(a.selected.iter().all(|&g| s.is_eligible(&c[g])));
            }
        }
    }

    #[test]
    fn inclusion_probability_increases_with_weight() {
        // Weights 1..=10 in bins; 10^5 draws of 3 items.
        let w: Vec<f64> = (1..=10).map(f64::from).collect();
        let mut hits = [0u32; 10];
        let mut rng = stream(&[77]);
        for _ in 0..100_000 {
            for i in weighted_sample_without_replacement(&w, 3, &mut rng).unwrap() {
                hits[i] += 1;
            }
        }
        assert!(hits.windows(2).all(|p| p[0] <= p[1]), "{hits:?}");
    }

    #[test]
    fn strategy_labels_round_trip() {
        for s in PlacementStrategy::ALL {
            assert_eq!(s.label().parse::<PlacementStrategy>().unwrap(), s);
        }
        assert!("nowhere".parse::<PlacementStrategy>().is_err());
    }
}
