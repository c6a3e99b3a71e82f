use std::fs;

use censored_gp::Split;
use censored_gp_cli::config::CurveSelection;
use censored_gp_cli::{emit_results, run_experiment_grid, summarize, ExperimentConfig, ExperimentOutput, Model};
use proptest::prelude::*;
use tempfile::TempDir;

fn quick(json: &str) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(json).unwrap();
    cfg.settings.exact.max_iters = 30;
    cfg.settings.cgp.max_iters = 30;
    cfg
}

#[test]
fn record_count_is_models_by_grid_by_splits() {
    let cfg = quick(
        r#"{"dataset": {"source": "synthetic_demand", "n_days": 30, "labelled_fraction": 0.3},
            "censoring": {"variant": "two_stage", "c": [0.0, 0.5, 1.0]},
            "models": ["ncgp", "cgp"]}"#,
    );
    let out = run_experiment_grid(&cfg).unwrap();
    assert_eq!(out.records.len(), 12);
    assert!(out.records.iter().all(|r| !r.failed()));
}

#[test]
fn thirty_repeats_per_cell() {
    let cfg = quick(
        r#"{"dataset": {"source": "pickups", "n": 24, "seed": 1},
            "censoring": {"variant": "rand_dropoff", "gamma": [0.1], "c": [0.3, 0.8]},
            "models": ["ncgp"], "repeats": 30, "seed": 100}"#,
    );
    let out = run_experiment_grid(&cfg).unwrap();
    for c in [0.3, 0.8] {
        for split in Split::BOTH {
            let cell: Vec<_> =
                out.records.iter().filter(|r| r.c == Some(c) && r.split == split.as_str()).collect();
            assert_eq!(cell.len(), 30);
            let seeds: Vec<u64> = cell.iter().map(|r| r.seed).collect();
            assert_eq!(seeds, (100..130).collect::<Vec<_>>());
        }
    }
}

#[test]
fn canonical_order_model_grid_repeat_split() {
    let cfg = quick(
        r#"{"dataset": {"source": "synthetic", "n": 20},
            "censoring": {"variant": "fixed_threshold", "threshold": [2.0, 2.5]},
            "models": ["cgp", "ncgp"], "repeats": 2}"#,
    );
    let out = run_experiment_grid(&cfg).unwrap();
    let keys: Vec<(Model, usize, usize, &str)> =
        out.records.iter().map(|r| (r.model, r.grid_index, r.repeat, r.split)).collect();
    let mut expect = Vec::new();
    for m in [Model::Ncgp, Model::Cgp] {
        for g in 0..2 {
            for r in 0..2 {
                for s in Split::BOTH {
                    expect.push((m, g, r, s.as_str()));
                }
            }
        }
    }
    assert_eq!(keys, expect);
}

#[test]
fn ncgp_a_flat_across_two_stage_intensity() {
    let cfg = quick(
        r#"{"dataset": {"source": "synthetic_demand", "n_days": 40, "labelled_fraction": 0.3},
            "censoring": {"variant": "two_stage", "c": [0.0, 0.4, 1.0]},
            "models": ["ncgp_a"], "repeats": 2}"#,
    );
    let out = run_experiment_grid(&cfg).unwrap();
    for split in Split::BOTH {
        for rep in 0..2 {
            let v: Vec<f64> = out
                .records
                .iter()
                .filter(|r| r.repeat == rep && r.split == split.as_str())
                .map(|r| r.rmse)
                .collect();
            assert_eq!(v.len(), 3);
            assert!(v.iter().all(|x| x.to_bits() == v[0].to_bits()), "{v:?}");
        }
    }
}

#[test]
fn output_independent_of_thread_count() {
    let json = r#"{"dataset": {"source": "motorcycle_like"},
                   "censoring": {"variant": "random_fraction", "p": [0.5], "ranges": [[0.0, 0.5], [0.5, 1.0]]},
                   "repeats": 2, "seed": 3}"#;
    let mut text = Vec::new();
    for threads in [1, 4] {
        let mut cfg = quick(json);
        cfg.threads = Some(threads);
        let dir = TempDir::new().unwrap();
        emit_results(&run_experiment_grid(&cfg).unwrap(), dir.path()).unwrap();
        text.push(fs::read_to_string(dir.path().join("results.csv")).unwrap());
    }
    assert_eq!(text[0], text[1]);
}

#[test]
fn cross_validated_predictions_score_every_row() {
    let cfg = quick(
        r#"{"dataset": {"source": "synthetic", "n": 30, "seed": 4},
            "censoring": {"variant": "fixed_threshold", "threshold": [2.3]},
            "models": ["ncgp"], "fold_size": 10}"#,
    );
    let out = run_experiment_grid(&cfg).unwrap();
    let entire = out.records.iter().find(|r| r.split == "entire").unwrap();
    assert_eq!(entire.n_points, 30);
    assert!(entire.rmse.is_finite());
}

#[test]
fn summary_is_mean_over_repeats() {
    let cfg = quick(
        r#"{"dataset": {"source": "synthetic", "n": 20},
            "censoring": {"variant": "fixed_threshold", "threshold": [2.3]},
            "models": ["ncgp"], "repeats": 5}"#,
    );
    let out = run_experiment_grid(&cfg).unwrap();
    let rows = summarize(&out.records);
    assert_eq!(rows.len(), 2);
    for row in rows {
        let vals: Vec<f64> = out.records.iter().filter(|r| r.split == row.split).map(|r| r.rmse).collect();
        assert_eq!(row.n_ok, 5);
        let mean = vals.iter().sum::<f64>() / 5.0;
        assert!((row.rmse_mean - mean).abs() <= 1e-15 * mean.abs());
    }
}

#[test]
fn failures_are_tagged_not_fatal() {
    // every day labelled: NCGP-A has no rows to train on
    let cfg = quick(
        r#"{"dataset": {"source": "synthetic_demand", "n_days": 20, "labelled_fraction": 1.0},
            "censoring": {"variant": "two_stage", "c": [0.5]},
            "models": ["ncgp", "ncgp_a"]}"#,
    );
    let out = run_experiment_grid(&cfg).unwrap();
    assert!(!out.all_failed());
    for r in &out.records {
        match r.model {
            Model::NcgpA => assert!(r.failed() && !r.converged && r.rmse.is_nan()),
            // the whole series is censored, so only the non-censored split is undefined
            _ => assert_eq!(r.failed(), r.split == "noncensored_only"),
        }
    }
}

fn curve_output() -> (ExperimentOutput, TempDir) {
    let mut cfg = quick(
        r#"{"dataset": {"source": "synthetic", "n": 25, "seed": 2},
            "censoring": {"variant": "fixed_threshold", "threshold": [2.3, 2.8]},
            "models": ["ncgp", "cgp"], "repeats": 2}"#,
    );
    cfg.curve = CurveSelection { grid_index: 1, repeat: 1 };
    let out = run_experiment_grid(&cfg).unwrap();
    let dir = TempDir::new().unwrap();
    emit_results(&out, dir.path()).unwrap();
    (out, dir)
}

#[test]
fn curve_files_carry_the_95_percent_band() {
    let (out, dir) = curve_output();
    assert_eq!(out.curves.len(), 2);
    for curve in &out.curves {
        let text = fs::read_to_string(dir.path().join(format!("posterior_curve_{}.csv", curve.model))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,mean,lower95,upper95,y_observed,y_latent,label");
        let mut n = 0;
        for (i, line) in lines.enumerate() {
            let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            let half = 1.96 * curve.var[i].sqrt();
            assert_eq!(f[1], curve.mean[i]);
            assert_eq!(f[2], curve.mean[i] - half);
            assert_eq!(f[3], curve.mean[i] + half);
            assert_eq!(f[6], curve.label[i] as u8 as f64);
            n += 1;
        }
        assert_eq!(n, 25);
        // threshold 2.8 is the second grid point
        assert!(curve.y_observed.iter().zip(&curve.label).all(|(y, &l)| !l || *y == 2.8));
    }
    assert!(dir.path().join("dataset.csv").exists());
}

#[test]
fn single_record_writes_header_and_row() {
    let (mut out, _) = curve_output();
    out.records.truncate(1);
    out.curves.clear();
    out.curve_data = None;
    let dir = TempDir::new().unwrap();
    let files = emit_results(&out, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "model,c,gamma,p,a,b,threshold,split,repeat,seed,rmse,r2,n_points,n_censored,converged,sweeps,runtime_ms,error"
    );
    assert!(lines[1].starts_with("ncgp,,,,,,2.3,entire,0,0,"));
}

#[test]
fn unwritable_output_dir_is_an_error() {
    let (out, dir) = curve_output();
    let blocker = dir.path().join("a_file");
    fs::write(&blocker, "x").unwrap();
    assert!(emit_results(&out, &blocker.join("sub")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn cardinality_matches_grid(n_models in 1usize..=3, n_grid in 1usize..=3, repeats in 1usize..=2) {
        let models: Vec<&str> = ["ncgp", "ncgp_a", "cgp"][..n_models].to_vec();
        let thresholds: Vec<f64> = (0..n_grid).map(|k| 2.0 + 0.3 * k as f64).collect();
        let json = serde_json::json!({
            "dataset": {"source": "synthetic", "n": 15},
            "censoring": {"variant": "fixed_threshold", "threshold": thresholds},
            "models": models,
            "repeats": repeats,
        });
        let out = run_experiment_grid(&quick(&json.to_string())).unwrap();
        let failed = out.records.iter().filter(|r| r.failed()).count();
        prop_assert_eq!(out.records.len(), n_models * n_grid * 2 * repeats);
        prop_assert!(failed < out.records.len());
    }
}
