//! Descriptive statistics of grid attributes per location set and subgroup.

use serde::Serialize;

use super::{GridCell, SubgroupMasks, TruePm25Field, Weighting};
use crate::error::{Error, Result};
use crate::quantile::weighted_mean_sd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatColumn {
    AnnualPm25,
    PctPoverty,
    CesScore,
    PctNonwhite,
    PopDensity,
}

impl StatColumn {
    pub const ALL: [StatColumn; 5] = [
        StatColumn::AnnualPm25,
        StatColumn::PctPoverty,
        StatColumn::CesScore,
        StatColumn::PctNonwhite,
        StatColumn::PopDensity,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StatColumn::AnnualPm25 => "annual_pm25",
            StatColumn::PctPoverty => "pct_poverty",
            StatColumn::CesScore => "ces_score",
            StatColumn::PctNonwhite => "pct_nonwhite",
            StatColumn::PopDensity => "pop_density",
        }
    }
}

/// Named subset of grids.
#[derive(Debug, Clone)]
pub struct LocationSet {
    pub name: String,
    pub members: Vec<usize>,
}

impl LocationSet {
    pub fn from_mask(name: impl Into<String>, mask: &[bool]) -> Self {
        LocationSet {
            name: name.into(),
            members: mask
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(i, _)| i)
                .collect(),
        }
    }
}

/// Overall population, both Q5 subgroups, and the grids each site-pool
/// placement strategy can target.
pub fn standard_location_sets(cells: &[GridCell], masks: &SubgroupMasks) -> Vec<LocationSet> {
    let all: Vec<bool> = vec![true; cells.len()];
    let purpleair: Vec<bool> = cells.iter().map(|c| c.has_purpleair).collect();
    let schools: Vec<bool> = cells.iter().map(|c| c.has_school).collect();
    let roads: Vec<bool> = cells.iter().map(|c| c.road_length_500m > 0.0).collect();
    vec![
        LocationSet::from_mask("overall", &all),
        LocationSet::from_mask("q5_nonwhite", &masks.q5_nonwhite),
        LocationSet::from_mask("q5_poverty", &masks.q5_poverty),
        LocationSet::from_mask("purpleair_sites", &purpleair),
        LocationSet::from_mask("school_sites", &schools),
        LocationSet::from_mask("near_road", &roads),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnStat {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub set: String,
    pub weighting: Weighting,
    pub n_grids: usize,
    pub normalized: bool,
    pub columns: Vec<(StatColumn, ColumnStat)>,
}

#[derive(Debug, Clone, Default)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
    /// Sets that were skipped, with the reason.
    pub diagnostics: Vec<String>,
}

impl StatsTable {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![
            "set".to_string(),
            "weighting".into(),
            "n_grids".into(),
            "normalized".into(),
        ];
        for c in StatColumn::ALL {
            header.push(format!("{}_mean", c.label()));
            header.push(format!("{}_sd", c.label()));
        }
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.set.clone(),
                r.weighting.label().to_string(),
                r.n_grids.to_string(),
                r.normalized.to_string(),
            ];
            for (_, s) in &r.columns {
                rec.push(s.mean.to_string());
                rec.push(s.sd.to_string());
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn column_value(col: StatColumn, cell: &GridCell, annual: &[f64]) -> f64 {
    match col {
        StatColumn::AnnualPm25 => annual[cell.id],
        StatColumn::PctPoverty => cell.pct_poverty,
        StatColumn::CesScore => cell.ces_score,
        StatColumn::PctNonwhite => cell.pct_nonwhite,
        StatColumn::PopDensity => cell.pop_density,
    }
}

fn set_stats(
    cells: &[GridCell],
    annual: &[f64],
    members: &[usize],
    weighting: Weighting,
) -> Option<Vec<(StatColumn, ColumnStat)>> {
    let weights: Vec<f64> = members.iter().map(|&g| weighting.weight(&cells[g])).collect();
    StatColumn::ALL
        .iter()
        .map(|&col| {
            let values: Vec<f64> = members
                .iter()
                .map(|&g| column_value(col, &cells[g], annual))
                .collect();
            weighted_mean_sd(&values, &weights).map(|(mean, sd)| (col, ColumnStat { mean, sd }))
        })
        .collect()
}

/// Weighted and unweighted mean and SD of each attribute per location set.
///
/// With `normalize`, every value is expressed against the overall population
/// under the same weighting: means become z-scores `(m - m_all) / sd_all` and
/// SDs become ratios `sd / sd_all`, so the overall row reads (0, 1). A column
/// whose overall SD is zero normalizes to NaN.
pub fn descriptive_stats(
    cells: &[GridCell],
    field: &TruePm25Field,
    sets: &[LocationSet],
    weightings: &[Weighting],
    normalize: bool,
) -> Result<StatsTable> {
    if field.n_grids() != cells.len() {
        return Err(Error::Shape(format!(
            "field has {} grids, grid file has {}",
            field.n_grids(),
            cells.len()
        )));
    }
    let annual: Vec<f64> = (0..field.n_grids()).map(|g| field.annual_mean(g)).collect();
    let everyone: Vec<usize> = (0..cells.len()).collect();
    let mut table = StatsTable::default();
    for &weighting in weightings {
        let overall = if normalize {
            match set_stats(cells, &annual, &everyone, weighting) {
                Some(o) => Some(o),
                None => {
                    table.diagnostics.push(format!(
                        "{}: overall population has zero total weight; cannot normalize",
                        weighting.label()
                    ));
                    continue;
                }
            }
        } else {
            None
        };
        for set in sets {
            let Some(mut columns) = set_stats(cells, &annual, &set.members, weighting) else {
                table.diagnostics.push(format!(
                    "{} ({}): empty or zero-weight location set omitted",
                    set.name,
                    weighting.label()
                ));
                continue;
            };
            if let Some(base) = &overall {
                for ((_, s), (_, b)) in columns.iter_mut().zip(base) {
                    let (mean, sd) = if b.sd > 0.0 {
                        ((s.mean - b.mean) / b.sd, s.sd / b.sd)
                    } else {
                        (f64::NAN, f64::NAN)
                    };
                    *s = ColumnStat { mean, sd };
                }
            }
            table.rows.push(StatsRow {
                set: set.name.clone(),
                weighting,
                n_grids: set.members.len(),
                normalized: normalize,
                columns,
            });
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;

    fn cell(id: usize, pop: f64, poverty: f64) -> GridCell {
        GridCell {
            id,
            centroid: Point::new(id as f64 * 1000.0, 0.0),
            pop_density: pop,
            pct_poverty: poverty,
            pct_nonwhite: 0.5,
            ces_score: 10.0 + id as f64,
            pollution_score: 5.0,
            road_length_500m: 0.0,
            has_school: false,
            has_purpleair: false,
        }
    }

    fn stat(row: &StatsRow, col: StatColumn) -> ColumnStat {
        row.columns.iter().find(|(c, _)| *c == col).unwrap().1
    }

    #[test]
    fn single_grid_has_zero_sd() {
        let cells = vec![cell(0, 3.0, 0.2)];
        let field = TruePm25Field::new(1, 2, vec![6.0, 6.0]).unwrap();
        let sets = vec![LocationSet { name: "one".into(), members: vec![0] }];
        let t = descriptive_stats(&cells, &field, &sets, &Weighting::ALL, false).unwrap();
        for r in &t.rows {
            let s = stat(r, StatColumn::AnnualPm25);
            assert_eq!((s.mean, s.sd), (6.0, 0.0));
        }
    }

    #[test]
    fn weighted_mean_of_four_and_eight() {
        let cells = vec![cell(0, 1.0, 0.1), cell(1, 3.0, 0.1)];
        let field = TruePm25Field::new(2, 1, vec![4.0, 8.0]).unwrap();
        let sets = vec![LocationSet { name: "both".into(), members: vec![0, 1] }];
        let t = descriptive_stats(&cells, &field, &sets, &[Weighting::PopulationDensity], false)
            .unwrap();
        assert_eq!(stat(&t.rows[0], StatColumn::AnnualPm25).mean, 7.0);
    }

    #[test]
    fn normalized_overall_is_zero_one_and_empty_sets_are_reported() {
        let cells: Vec<GridCell> = (0..6).map(|i| cell(i, 1.0 + i as f64, 0.05 * i as f64)).collect();
        let field =
            TruePm25Field::new(6, 1, vec![3.0, 5.0, 4.0, 9.0, 1.0, 7.0]).unwrap();
        let sets = vec![
            LocationSet { name: "overall".into(), members: (0..6).collect() },
            LocationSet { name: "nobody".into(), members: vec![] },
        ];
        let t = descriptive_stats(&cells, &field, &sets, &Weighting::ALL, true).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.diagnostics.len(), 2);
        for r in &t.rows {
            for col in [StatColumn::AnnualPm25, StatColumn::PctPoverty, StatColumn::PopDensity] {
                let s = stat(r, col);
                assert_eq!(s.mean, 0.0);
                assert_eq!(s.sd, 1.0);
            }
        }
    }
}
