//! End-to-end acceptance checks, one PASS/FAIL line each.
//!
//! Run a subset with `cargo test -p censored-gp-cli --test acceptance -- 3 5`.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::time::{Duration, Instant};

use censored_gp::exact::log_marginal_gradient;
use censored_gp::hyperopt::numeric_gradient;
use censored_gp::kernels::gram_symmetric;
use censored_gp::moments::{tilted_moments_censored, tilted_moments_noncensored, CavityParams};
use censored_gp::sim::{self, DropoffSeries};
use censored_gp::{
    ep_fit, ep_predict, fit_exact, log_marginal_gaussian, make_time_folds, predict_exact, r2, rmse,
    Dataset, EpConfig, KernelExpr, Subset,
};
use censored_gp_cli::{
    emit_results, fit_predict, run_experiment_grid, CensorGrid, DatasetSource, ExperimentConfig, Model,
    ModelSettings,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
    budget: Option<Duration>,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail, budget: None }
}

fn within(mut o: Outcome, secs: u64) -> Outcome {
    o.budget = Some(Duration::from_secs(secs));
    o
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One draw of a zero-mean GP with `kernel` at `x`, plus noise.
fn gp_draw(kernel: &KernelExpr, x: &[f64], noise_var: f64, seed: u64) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let mut k = gram_symmetric(kernel, &rows).unwrap();
    for i in 0..x.len() {
        k[(i, i)] += 1e-8;
    }
    let l = k.cholesky().unwrap().l();
    let mut r = rng(seed);
    let z = DVector::from_fn(x.len(), |_, _| r.sample::<f64, _>(StandardNormal));
    let f = l * z;
    f.iter().map(|v| v + noise_var.sqrt() * r.sample::<f64, _>(StandardNormal)).collect()
}

fn zero_censorship_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for s in 0..20u64 {
        let mut r = rng(100 + s);
        let mut x: Vec<f64> = (0..50).map(|_| uniform(&mut r, 0.0, 10.0)).collect();
        x.sort_by(f64::total_cmp);
        let kernel =
            KernelExpr::squared_exponential(uniform(&mut r, 0.5, 2.0), uniform(&mut r, 0.5, 2.0), vec![0]).unwrap();
        let noise = uniform(&mut r, 0.05, 0.5);
        let y = gp_draw(&kernel, &x, noise, 200 + s);
        let data = Dataset::from_1d(&x, y, vec![false; 50]).unwrap();
        let post = ep_fit(&data, &kernel, &EpConfig { noise_var: noise, ..EpConfig::default() }).unwrap();
        let exact = fit_exact(&data, &kernel, noise, Subset::All).unwrap();
        let rows = data.feature_rows();
        let (em, ev) = ep_predict(&post, &data, &kernel, &rows).unwrap();
        let (xm, xv) = predict_exact(&exact, &rows).unwrap();
        let ep_diag: Vec<f64> = post.covariance().diagonal().iter().copied().collect();
        worst = worst
            .max(max_abs_diff(&em, &xm))
            .max(max_abs_diff(&ev, &xv))
            .max(max_abs_diff(&post.mean(), &xm))
            .max(max_abs_diff(&ep_diag, &xv));
    }
    within(outcome(worst <= 1e-4, format!("max |EP − exact| = {worst:.2e} over 20 datasets")), 30)
}

fn tilted_moment_oracle() -> Outcome {
    let mut r = rng(7);
    let (mut worst_z, mut worst_m, mut worst_v) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let censored = r.random::<bool>();
        let mu = uniform(&mut r, -5.0, 5.0);
        let v = uniform(&mut r, 0.01, 4.0);
        let noise = uniform(&mut r, 0.01, 2.0);
        let zbar = uniform(&mut r, -8.0, 8.0);
        let y = mu + zbar * (v + noise).sqrt();
        let cav = CavityParams { mean: mu, var: v };
        let t = if censored {
            tilted_moments_censored(y, cav, noise)
        } else {
            tilted_moments_noncensored(y, cav, noise)
        };
        let o = support::tilted_oracle(censored, y, mu, v, noise);
        worst_z = worst_z.max((t.log_z.exp() - o.z).abs() / o.z);
        worst_m = worst_m.max((t.mean - o.mean).abs() / o.mean.abs().max(v.sqrt()));
        worst_v = worst_v.max((t.var - o.var).abs() / o.var);
    }
    let worst = worst_z.max(worst_m).max(worst_v);
    within(
        outcome(
            worst <= 1e-6,
            format!("10000 tuples: rel err Z {worst_z:.1e}, mean {worst_m:.1e}, var {worst_v:.1e}"),
        ),
        120,
    )
}

fn synthetic_recovery() -> Outcome {
    let data = sim::gen_synthetic(150, 1, 0.1, 2.3).unwrap();
    let x: Vec<f64> = data.features().column(0).iter().copied().collect();
    let rows = data.feature_rows();
    let cens: Vec<usize> = data.row_indices(Subset::All).into_iter().filter(|&i| data.censored()[i]).collect();
    let template = KernelExpr::squared_exponential(1.0, 1.0, vec![0]).unwrap();
    let settings = ModelSettings::default();
    let truth: Vec<f64> = cens.iter().map(|&i| sim::latent_function(x[i])).collect();
    let score = |m: Model| {
        let p = fit_predict(m, &data, &template, &settings, &rows).unwrap();
        let at: Vec<f64> = cens.iter().map(|&i| p.mean[i]).collect();
        rmse(&at, &truth).unwrap()
    };
    let (n, na, c) = (score(Model::Ncgp), score(Model::NcgpA), score(Model::Cgp));
    within(
        outcome(
            c < n && c < na,
            format!("RMSE vs f* on {} censored inputs: CGP {c:.3}, NCGP {n:.3}, NCGP-A {na:.3}", cens.len()),
        ),
        60,
    )
}

fn intensity_grid_ordering() -> Outcome {
    let ranges = [[0.0, 0.33], [0.33, 0.66], [0.66, 1.0]];
    let template = KernelExpr::squared_exponential(1.0, 1.0, vec![0]).unwrap();
    let settings = ModelSettings::default();
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let (x, y_star) = sim::motorcycle_like(seed);
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let mut ncgp = Vec::new();
        let mut cgp_top = f64::NAN;
        for (k, &[a, b]) in ranges.iter().enumerate() {
            let (y, l) = sim::censor_random_fraction(&y_star, 0.9, a, b, seed).unwrap();
            let data = Dataset::from_1d(&x, y, l).unwrap().with_latent(y_star.clone()).unwrap();
            let score = |m: Model| {
                let p = fit_predict(m, &data, &template, &settings, &rows).unwrap();
                rmse(&p.mean, &y_star).unwrap()
            };
            ncgp.push(score(Model::Ncgp));
            if k == 2 {
                cgp_top = score(Model::Cgp);
            }
        }
        let ok = cgp_top < ncgp[2] && ncgp[0] <= ncgp[1] && ncgp[1] <= ncgp[2];
        wins += ok as usize;
        lines.push(format!(
            "seed {seed}: NCGP {:.1}/{:.1}/{:.1}, CGP@[0.66,1] {cgp_top:.1}{}",
            ncgp[0],
            ncgp[1],
            ncgp[2],
            if ok { "" } else { " ✗" }
        ));
    }
    within(outcome(wins >= 3, format!("{wins}/5 seeds ordered ({})", lines.join("; "))), 300)
}

fn two_stage_grid_shape() -> Outcome {
    let cfg = ExperimentConfig {
        dataset: DatasetSource::SyntheticDemand { n_days: 200, labelled_fraction: 0.3, seed: Some(11) },
        kernel: None,
        censoring: CensorGrid::TwoStage { c: vec![0.0, 1.0] },
        models: vec![Model::Ncgp, Model::Cgp],
        repeats: 1,
        seed: 0,
        settings: ModelSettings::default(),
        fold_size: None,
        output_dir: "unused".into(),
        record_timing: false,
        threads: None,
        curve: Default::default(),
    };
    let out = run_experiment_grid(&cfg).unwrap();
    let get = |m: Model, c: f64| {
        out.records
            .iter()
            .find(|r| r.model == m && r.c == Some(c) && r.split == "entire")
            .map(|r| r.rmse)
            .unwrap()
    };
    let (n0, n1, c0, c1) = (get(Model::Ncgp, 0.0), get(Model::Ncgp, 1.0), get(Model::Cgp, 0.0), get(Model::Cgp, 1.0));
    let pass = n1 >= 1.25 * n0 && (c1 - c0) < (n1 - n0);
    within(
        outcome(pass, format!("NCGP {n0:.2} → {n1:.2} (×{:.2}); CGP {c0:.2} → {c1:.2}", n1 / n0)),
        600,
    )
}

fn rand_dropoff_calibration() -> Outcome {
    let mut r = rng(5);
    let y_star: Vec<f64> = (0..10_000).map(|_| uniform(&mut r, 1.0, 80.0)).collect();
    let d = DropoffSeries::new(y_star.clone()).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for gamma in [0.1, 0.2, 0.3, 0.4] {
        let (_, l) = sim::rand_dropoff(&y_star, &d, gamma, 0.5, 17).unwrap();
        let frac = l.iter().filter(|&&b| b).count() as f64 / l.len() as f64;
        worst = worst.max((frac - gamma).abs());
        parts.push(format!("γ={gamma}: {frac:.4}"));
    }
    within(outcome(worst <= 0.02, format!("{} (max dev {worst:.4})", parts.join(", "))), 5)
}

fn metric_identities() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.random_range(2..60);
        let y: Vec<f64> = (0..n).map(|_| uniform(&mut r, -10.0, 10.0)).collect();
        let pred: Vec<f64> = (0..n).map(|_| uniform(&mut r, -10.0, 10.0)).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        let e = rmse(&pred, &y).unwrap();
        let checks = [
            r2(&y, &y).unwrap() - 1.0,
            r2(&vec![mean; n], &y).unwrap(),
            rmse(&y, &y).unwrap(),
            r2(&pred, &y).unwrap() - (1.0 - n as f64 * e * e / sst),
        ];
        worst = checks.iter().fold(worst, |w, c| w.max(c.abs()));
    }
    outcome(worst <= 1e-12, format!("1000 vectors, max deviation {worst:.1e}"))
}

fn hyperparameter_recovery() -> Outcome {
    let truth = KernelExpr::squared_exponential(1.0, 1.5, vec![0]).unwrap();
    let template = KernelExpr::squared_exponential(1.0, 1.0, vec![0]).unwrap();
    let settings = ModelSettings::default();
    let mut hits = 0;
    let mut found = Vec::new();
    for seed in 0..10u64 {
        let mut r = rng(500 + seed);
        let mut x: Vec<f64> = (0..100).map(|_| uniform(&mut r, 0.0, 15.0)).collect();
        x.sort_by(f64::total_cmp);
        let y = gp_draw(&truth, &x, 0.1, 600 + seed);
        let data = Dataset::from_1d(&x, y, vec![false; 100]).unwrap();
        let p = fit_predict(Model::Ncgp, &data, &template, &settings, &[]).unwrap();
        let ls = p.kernel.leaves()[0].params().lengthscale();
        hits += (0.75..=3.0).contains(&ls) as usize;
        found.push(format!("{ls:.2}"));
    }
    within(outcome(hits >= 8, format!("{hits}/10 lengthscales within ×/÷2 of 1.5 [{}]", found.join(", "))), 300)
}

fn gradient_check() -> Outcome {
    let mut r = rng(9);
    let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.35).collect();
    let y: Vec<f64> = x.iter().map(|v| (0.8 * v).sin() + 0.2 * r.sample::<f64, _>(StandardNormal)).collect();
    let data = Dataset::from_1d(&x, y, vec![false; 40]).unwrap();
    let template = KernelExpr::sum(vec![
        KernelExpr::squared_exponential(1.0, 1.0, vec![0]).unwrap(),
        KernelExpr::periodic(1.0, 1.0, 5.0, vec![0]).unwrap(),
    ])
    .unwrap();
    let p = template.n_params();
    let evidence = |theta: &[f64]| {
        let k = template.with_log_params(&theta[..p])?;
        Ok(log_marginal_gaussian(&fit_exact(&data, &k, theta[p].exp(), Subset::All)?))
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let theta: Vec<f64> = (0..=p).map(|_| uniform(&mut r, -1.5, 1.5)).collect();
        let k = template.with_log_params(&theta[..p]).unwrap();
        let analytic = log_marginal_gradient(&fit_exact(&data, &k, theta[p].exp(), Subset::All).unwrap()).unwrap();
        let numeric = numeric_gradient(evidence, &theta, 1e-5).unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-3));
        }
    }
    outcome(worst <= 1e-4, format!("20 points, max relative error {worst:.1e}"))
}

fn fold_protocol_and_determinism() -> Outcome {
    let plan = make_time_folds(672, 32).unwrap();
    let folds_ok = plan.len() == 21
        && plan.folds.iter().all(|f| f.len() == 32)
        && plan.folds.windows(2).all(|w| w[0].end == w[1].start)
        && plan.folds[0].start == 0
        && plan.folds[20].end == 672;

    let cfg = ExperimentConfig::from_json(
        r#"{"dataset": {"source": "pickups", "n": 96},
            "censoring": {"variant": "rand_dropoff", "gamma": [0.2], "c": [0.0, 0.5]},
            "models": ["ncgp", "ncgp_a", "cgp"], "repeats": 2, "seed": 42, "fold_size": 32}"#,
    )
    .unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut files = Vec::new();
    for d in &dirs {
        let out = run_experiment_grid(&cfg).unwrap();
        files.push(emit_results(&out, d.path()).unwrap());
    }
    let names = |v: &[std::path::PathBuf]| v.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    let same_names = names(&files[0]) == names(&files[1]);
    let identical = same_names
        && files[0].iter().zip(&files[1]).all(|(a, b)| std::fs::read(a).unwrap() == std::fs::read(b).unwrap());
    outcome(
        folds_ok && identical,
        format!(
            "{} folds of {:?}; {} output files byte-identical on rerun: {identical}",
            plan.len(),
            plan.folds.iter().map(|f| f.len()).collect::<std::collections::BTreeSet<_>>(),
            files[0].len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("zero-censorship equivalence", zero_censorship_equivalence),
        ("tilted-moment oracle", tilted_moment_oracle),
        ("synthetic recovery", synthetic_recovery),
        ("intensity-grid ordering", intensity_grid_ordering),
        ("two-stage grid shape", two_stage_grid_shape),
        ("RandDropoff calibration", rand_dropoff_calibration),
        ("metric identities", metric_identities),
        ("hyperparameter recovery", hyperparameter_recovery),
        ("gradient check", gradient_check),
        ("fold protocol and determinism", fold_protocol_and_determinism),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut o = run();
        let took = start.elapsed();
        if let Some(b) = o.budget {
            if took > b {
                o.pass = false;
                o.detail.push_str(&format!("; over the {}s budget", b.as_secs()));
            }
        }
        failed += !o.pass as usize;
        println!(
            "{} {id:>2}. {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
