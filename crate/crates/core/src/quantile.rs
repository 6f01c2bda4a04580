//! Weighted nearest-rank quantiles and moments shared by several modules.

/// Smallest value whose cumulative weight reaches `q` of the total.
///
/// `sorted` must be ordered by value. Entries with non-positive weight never
/// qualify. Returns `None` when the total weight is zero.
pub fn weighted_nearest_rank(sorted: &[(f64, f64)], q: f64) -> Option<f64> {
    let total: f64 = sorted.iter().map(|&(_, w)| w.max(0.0)).sum();
    if total <= 0.0 {
        return None;
    }
    // Ties at the threshold count as reaching it. The slack absorbs rounding in
    // the running sum, so scaling every weight by a constant leaves the answer
    // unchanged.
    let target = q * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    let mut last = None;
    for &(v, w) in sorted {
        if w <= 0.0 {
            continue;
        }
        cum += w;
        last = Some(v);
        if cum >= target {
            return Some(v);
        }
    }
    // Rounding in the running sum can leave `cum` a hair under `target` for q = 1.
    last
}

/// Nearest-rank quantile over equally weighted values (rank = ceil(q * n)).
pub fn nearest_rank(values: &[f64], q: f64) -> Option<f64> {
    let mut sorted: Vec<(f64, f64)> = values.iter().map(|&v| (v, 1.0)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    weighted_nearest_rank(&sorted, q)
}

/// Weighted mean and population standard deviation.
pub fn weighted_mean_sd(values: &[f64], weights: &[f64]) -> Option<(f64, f64)> {
    debug_assert_eq!(values.len(), weights.len());
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean) * (v - mean))
        .sum::<f64>()
        / total;
    Some((mean, var.max(0.0).sqrt()))
}
