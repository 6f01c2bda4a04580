use super::{GridCell, Weighting};
use crate::error::{Error, Result};
use crate::quantile::weighted_nearest_rank;

/// Top-quintile membership for % nonwhite and % poverty.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupMasks {
    pub q5_nonwhite: Vec<bool>,
    pub q5_poverty: Vec<bool>,
    /// P80 of % nonwhite; members strictly exceed it.
    pub nonwhite_threshold: f64,
    pub poverty_threshold: f64,
}

impl SubgroupMasks {
    /// Masks with no members, for callers that only need the overall rows.
    pub fn none(n_grids: usize) -> Self {
        SubgroupMasks {
            q5_nonwhite: vec![false; n_grids],
            q5_poverty: vec![false; n_grids],
            nonwhite_threshold: f64::NAN,
            poverty_threshold: f64::NAN,
        }
    }

    pub fn nonwhite_is_empty(&self) -> bool {
        !self.q5_nonwhite.iter().any(|&m| m)
    }

    pub fn poverty_is_empty(&self) -> bool {
        !self.q5_poverty.iter().any(|&m| m)
    }
}

/// Nearest-rank (optionally weighted) P80 threshold and strict-exceedance mask.
pub fn quintile_mask(values: &[f64], weights: &[f64]) -> (f64, Vec<bool>) {
    let mut sorted: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let Some(threshold) = weighted_nearest_rank(&sorted, 0.8) else {
        return (f64::NAN, vec![false; values.len()]);
    };
    let mask = values.iter().map(|&v| v > threshold).collect();
    (threshold, mask)
}

pub fn compute_quintile_masks(cells: &[GridCell], weighting: Weighting) -> Result<SubgroupMasks> {
    if cells.len() < 5 {
        return Err(Error::Config(format!(
            "quintiles need at least 5 grids, got {}",
            cells.len()
        )));
    }
    let weights: Vec<f64> = cells.iter().map(|c| weighting.weight(c)).collect();
    let nonwhite: Vec<f64> = cells.iter().map(|c| c.pct_nonwhite).collect();
    let poverty: Vec<f64> = cells.iter().map(|c| c.pct_poverty).collect();
    let (nonwhite_threshold, q5_nonwhite) = quintile_mask(&nonwhite, &weights);
    let (poverty_threshold, q5_poverty) = quintile_mask(&poverty, &weights);
    let masks = SubgroupMasks {
        q5_nonwhite,
        q5_poverty,
        nonwhite_threshold,
        poverty_threshold,
    };
    if masks.nonwhite_is_empty() {
        log::warn!("Q5 % nonwhite mask is empty (no value exceeds {nonwhite_threshold})");
    }
    if masks.poverty_is_empty() {
        log::warn!("Q5 % poverty mask is empty (no value exceeds {poverty_threshold})");
    }
    Ok(masks)
}
