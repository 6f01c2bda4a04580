use proptest::prelude::*;

use aqnet::aqi::AqiBreakpoints;
use aqnet::domain::{generate_synthetic_field, synthetic_monitors, DistanceMetric, SynthFieldConfig, Weighting};
use aqnet::error_models::ErrorModel;
use aqnet::experiment::{place_sensors, run_trial, ExperimentInputs, LcsCount, Scenario};
use aqnet::metrics::Subset;
use aqnet::placement::{PlacementStrategy, SiteAttribute};

fn inputs(seed: u64) -> ExperimentInputs {
    let out = generate_synthetic_field(&SynthFieldConfig {
        n_grids_x: 14,
        n_grids_y: 11,
        n_days: 6,
        purpleair_fraction: 0.3,
        school_fraction: 0.3,
        seed,
        ..Default::default()
    })
    .unwrap();
    let monitors = synthetic_monitors(&out.cells, 3, seed).unwrap();
    ExperimentInputs::new(out.cells, out.field, monitors, AqiBreakpoints::default(), Weighting::Unweighted, DistanceMetric::Planar)
        .unwrap()
}

fn strategy() -> impl Strategy<Value = PlacementStrategy> {
    prop::sample::select(PlacementStrategy::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn report_invariants(seed in 0u64..1000, s in strategy(), n in 0usize..30, trial in 0u64..5, a in 0.0f64..0.5) {
        let inp = inputs(seed);
        let n = n.min(s.eligible_count(&inp.cells));
        let sc = Scenario::new(s, LcsCount::Count(n), ErrorModel::differential(a).unwrap());
        let r = run_trial(&inp, &sc, &Weighting::ALL, seed, trial).unwrap();
        prop_assert_eq!(r.rows.len(), 6);
        for row in &r.rows {
            let Some(mae) = row.mae else { continue };
            prop_assert!(mae >= 0.0);
            prop_assert!(row.p95_abs_err.unwrap() >= 0.0);
            let (u, o) = (row.under_pct.unwrap(), row.over_pct.unwrap());
            prop_assert!((0.0..=100.0).contains(&u) && (0.0..=100.0).contains(&o));
            prop_assert!(u + o <= 100.0 + 1e-9);
            prop_assert!(row.gap2plus_pct.unwrap() <= u + o + 1e-9);
            if let Some(uhm) = row.uhm_pct {
                prop_assert!((0.0..=100.0).contains(&uhm));
            }
            prop_assert_eq!(row.error_sd.is_some(), n > 0);
        }
    }

    #[test]
    fn zero_accuracy_collapses_to_no_error(seed in 0u64..1000, s in strategy(), n in 1usize..20) {
        let inp = inputs(seed);
        let n = n.min(s.eligible_count(&inp.cells));
        let run = |m: ErrorModel| run_trial(&inp, &Scenario::new(s, LcsCount::Count(n), m), &Weighting::ALL, 1, 0).unwrap();
        let exact = run(ErrorModel::none());
        prop_assert_eq!(&run(ErrorModel::non_differential(0.0).unwrap()), &exact);
        prop_assert_eq!(&run(ErrorModel::differential(0.0).unwrap()), &exact);
    }

    #[test]
    fn placements_are_nested(seed in 0u64..1000, s in strategy(), a in 0usize..25, b in 0usize..25, trial in 0u64..10) {
        let inp = inputs(seed);
        let cap = s.eligible_count(&inp.cells);
        let (lo, hi) = (a.min(b).min(cap), a.max(b).min(cap));
        let place = |n| place_sensors(&inp, &Scenario::new(s, LcsCount::Count(n), ErrorModel::none()), seed, trial).unwrap();
        let small = place(lo);
        let big = place(hi);
        prop_assert_eq!(small.len(), lo);
        prop_assert!(small.iter().all(|g| big.binary_search(g).is_ok()));
        prop_assert!(big.iter().all(|&g| s.is_eligible(&inp.cells[g])));
    }

    #[test]
    fn more_exact_sensors_never_increase_distance(seed in 0u64..1000, a in 0usize..40, b in 0usize..40) {
        let inp = inputs(seed);
        let s = PlacementStrategy::WeightedBy(SiteAttribute::RoadLength);
        let cap = s.eligible_count(&inp.cells);
        let (lo, hi) = (a.min(b).min(cap), a.max(b).min(cap));
        let dist = |n| {
            let r = run_trial(&inp, &Scenario::new(s, LcsCount::Count(n), ErrorModel::none()), &Weighting::ALL, 2, 0).unwrap();
            r.get(Subset::Overall, Weighting::Unweighted).unwrap().mean_dist_km.unwrap()
        };
        prop_assert!(dist(hi) <= dist(lo));
    }
}
