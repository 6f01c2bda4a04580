use std::ffi::{CStr, CString};
use std::ptr;

use aqnet::domain::{generate_synthetic_field, synthetic_monitors, SynthFieldConfig};
use aqnet::ingest;
use aqnet_ffi::*;

fn last_error() -> String {
    let p = aqnet_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn classify_and_correct() {
    let mut class = 0u8;
    unsafe {
        assert_eq!(aqnet_classify(35.4, ptr::null(), &mut class), AqnetStatus::Ok);
        assert_eq!(class, 1);
        assert_eq!(aqnet_classify(35.5, ptr::null(), &mut class), AqnetStatus::Ok);
        assert_eq!(class, 2);
        let edges = [10.0, 20.0, 30.0, 40.0, 50.0];
        assert_eq!(aqnet_classify(25.0, edges.as_ptr(), &mut class), AqnetStatus::Ok);
        assert_eq!(class, 2);
        let bad = [10.0, 10.0, 30.0, 40.0, 50.0];
        assert_eq!(aqnet_classify(25.0, bad.as_ptr(), &mut class), AqnetStatus::InvalidArgument);
        assert!(last_error().contains("ascending"));
        assert_eq!(aqnet_classify(1.0, ptr::null(), ptr::null_mut()), AqnetStatus::NullPointer);

        let mut v = 0.0;
        assert_eq!(aqnet_apply_correction(10.0, 50.0, &mut v), AqnetStatus::Ok);
        assert!((v - 6.68).abs() < 1e-9);
        assert_eq!(aqnet_apply_correction(0.0, 0.0, &mut v), AqnetStatus::Ok);
        assert!((v - 5.75).abs() < 1e-9);
    }
}

#[test]
fn deciles() {
    let mut d = 0u32;
    unsafe {
        for (v, want) in [(2.0, 1), (2.455, 1), (2.456, 2), (22.65, 9), (22.66, 10)] {
            assert_eq!(aqnet_decile_index(v, ptr::null(), &mut d), AqnetStatus::Ok);
            assert_eq!(d, want, "{v}");
        }
        assert_eq!(aqnet_decile_index(f64::NAN, ptr::null(), &mut d), AqnetStatus::InvalidArgument);
    }
}

#[test]
fn index_lifecycle() {
    let ids = [7u64, 3, 9];
    let xs = [0.0, 1000.0, 0.0];
    let ys = [0.0, 0.0, 1000.0];
    let mut idx = ptr::null_mut();
    unsafe {
        assert_eq!(aqnet_index_new(ids.as_ptr(), xs.as_ptr(), ys.as_ptr(), 3, false, &mut idx), AqnetStatus::Ok);
        let (mut id, mut dist) = (0u64, 0.0);
        assert_eq!(aqnet_index_nearest(idx, 900.0, 50.0, &mut id, &mut dist), AqnetStatus::Ok);
        assert_eq!(id, 3);
        assert!((dist - (100.0f64 * 100.0 + 50.0 * 50.0).sqrt()).abs() < 1e-9);
        // Equidistant from 3 and 9: lowest id wins.
        assert_eq!(aqnet_index_nearest(idx, 1000.0, 1000.0, &mut id, &mut dist), AqnetStatus::Ok);
        assert_eq!(id, 3);
        aqnet_index_free(idx);

        let mut empty = ptr::null_mut();
        assert_eq!(aqnet_index_new(ptr::null(), ptr::null(), ptr::null(), 0, false, &mut empty), AqnetStatus::NoInstruments);
        assert!(empty.is_null());
        assert_eq!(aqnet_index_nearest(ptr::null(), 0.0, 0.0, &mut id, &mut dist), AqnetStatus::NullPointer);
        aqnet_index_free(ptr::null_mut());
    }
}

#[test]
fn experiment_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate_synthetic_field(&SynthFieldConfig {
        n_grids_x: 12,
        n_grids_y: 10,
        n_days: 6,
        purpleair_fraction: 0.3,
        ..Default::default()
    })
    .unwrap();
    ingest::save_grid(dir.path().join("grid.csv"), &out.cells).unwrap();
    ingest::save_field_binary(dir.path().join("field.aqf"), &out.field).unwrap();
    ingest::save_instruments(dir.path().join("monitors.csv"), &synthetic_monitors(&out.cells, 3, 1).unwrap()).unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        r#"{"strategy":"road_length","n_lcs":10,"error_model":{"kind":"differential","accuracy":0.1},
            "trials":3,"grid_path":"grid.csv","field_path":"field.aqf","monitors_path":"monitors.csv"}"#,
    )
    .unwrap();
    let cfg = CString::new(cfg.to_str().unwrap()).unwrap();
    unsafe {
        let mut exp = ptr::null_mut();
        assert_eq!(aqnet_experiment_load(cfg.as_ptr(), &mut exp), AqnetStatus::Ok, "{}", last_error());
        assert_eq!(aqnet_experiment_set_trials(exp, 0, 1), AqnetStatus::InvalidArgument);
        assert_eq!(aqnet_experiment_set_trials(exp, 4, 11), AqnetStatus::Ok);

        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(aqnet_experiment_run(exp, 1, &mut a), AqnetStatus::Ok);
        assert_eq!(aqnet_experiment_run(exp, 3, &mut b), AqnetStatus::Ok);
        assert_eq!(aqnet_report_rows(a), 6);
        for row in 0..6 {
            for k in 0..aqnet_metric_count() {
                let (mut va, mut pa, mut vb, mut pb) = (0.0, false, 0.0, false);
                assert_eq!(aqnet_report_value(a, row, k, &mut va, &mut pa), AqnetStatus::Ok);
                assert_eq!(aqnet_report_value(b, row, k, &mut vb, &mut pb), AqnetStatus::Ok);
                assert_eq!(pa, pb);
                if pa {
                    assert_eq!(va.to_bits(), vb.to_bits());
                }
            }
        }
        let (mut v, mut p) = (0.0, false);
        assert_eq!(aqnet_report_value(a, 6, 0, &mut v, &mut p), AqnetStatus::OutOfRange);

        let csv_path = dir.path().join("res.csv");
        let c_csv = CString::new(csv_path.to_str().unwrap()).unwrap();
        assert_eq!(aqnet_report_write_csv(a, c_csv.as_ptr()), AqnetStatus::Ok);
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.lines().nth(1).unwrap().starts_with("road_length,10,diff_0.1,overall,pop_density,4,"));

        aqnet_report_free(a);
        aqnet_report_free(b);
        aqnet_experiment_free(exp);
    }
}

#[test]
fn load_errors_are_reported() {
    let missing = CString::new("/nonexistent/exp.json").unwrap();
    let mut exp = ptr::null_mut();
    unsafe {
        assert_eq!(aqnet_experiment_load(missing.as_ptr(), &mut exp), AqnetStatus::Io);
        assert!(exp.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(aqnet_experiment_load(ptr::null(), &mut exp), AqnetStatus::NullPointer);
    }
    let v = unsafe { CStr::from_ptr(aqnet_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
