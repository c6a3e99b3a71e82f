//! Grid execution: censor, fit, predict and score every (model, grid point,
//! repeat) cell.

use std::sync::Arc;
use std::time::Instant;

use censored_gp::hyperopt::{heuristic_init, DEFAULT_PERIOD};
use censored_gp::sim::{self, DropoffSeries};
use censored_gp::{
    ep_fit_warm, ep_predict, evaluate_split, fit_exact, make_time_folds, optimize_type2_ml,
    predict_exact, Dataset, EpConfig, KernelExpr, ObjectiveKind, Smoothness, Split, Subset,
};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DatasetSource, ExperimentConfig, GridPoint, Model, ModelSettings};
use crate::error::CliError;
use crate::io::{load_demand_csv, load_weather_csv, DemandData, FeatureLayout};

/// Latent predictive moments at the query rows plus fit diagnostics.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    pub kernel: KernelExpr,
    pub noise_var: f64,
}

/// Selects hyperparameters for `model` on `train` starting from the
/// heuristic init, then predicts the latent function at `query`.
pub fn fit_predict(
    model: Model,
    train: &Dataset,
    template: &KernelExpr,
    settings: &ModelSettings,
    query: &[Vec<f64>],
) -> censored_gp::Result<Prediction> {
    match model {
        Model::Ncgp | Model::NcgpA => {
            let subset = if model == Model::Ncgp { Subset::All } else { Subset::NoncensoredOnly };
            let init = heuristic_init(train, template, subset);
            let t2 = optimize_type2_ml(
                ObjectiveKind::ExactGaussian { subset },
                train,
                template,
                &settings.exact,
                &init,
            )?;
            let fit = fit_exact(train, &t2.kernel, t2.noise_var, subset)?;
            let (mean, var) = predict_exact(&fit, query)?;
            Ok(Prediction { mean, var, converged: true, sweeps: 0, kernel: t2.kernel, noise_var: t2.noise_var })
        }
        Model::Cgp => {
            let init = heuristic_init(train, template, Subset::All);
            let kind = ObjectiveKind::EpCensored { ep: settings.ep, gradient: settings.ep_gradient };
            let t2 = optimize_type2_ml(kind, train, template, &settings.cgp, &init)?;
            let cfg = EpConfig { noise_var: t2.noise_var, ..settings.ep };
            let post = ep_fit_warm(train, &t2.kernel, &cfg, t2.sites.as_ref())?;
            let (mean, var) = ep_predict(&post, train, &t2.kernel, query)?;
            Ok(Prediction {
                mean,
                var,
                converged: post.converged(),
                sweeps: post.sweeps_used(),
                kernel: t2.kernel,
                noise_var: t2.noise_var,
            })
        }
    }
}

/// The uncensored series for one repeat.
#[derive(Debug, Clone)]
pub struct SeriesData {
    pub x: DMatrix<f64>,
    pub y_star: Vec<f64>,
    /// Availability labels for two-stage censoring.
    pub flags: Option<Vec<bool>>,
    pub dropoffs: Option<DropoffSeries>,
}

/// SE on time, a periodic leaf on time, SE on the calendar columns and a
/// Matérn-3/2 leaf on the weather columns, as far as the layout has them.
pub fn default_demand_kernel(layout: &FeatureLayout, period: f64) -> censored_gp::Result<KernelExpr> {
    let mut parts = vec![
        KernelExpr::squared_exponential(1.0, 1.0, vec![layout.time])?,
        KernelExpr::periodic(1.0, 1.0, period, vec![layout.time])?,
    ];
    if let Some(cal) = layout.calendar {
        parts.push(KernelExpr::squared_exponential(1.0, 1.0, cal.to_vec())?);
    }
    if !layout.weather.is_empty() {
        parts.push(KernelExpr::matern(1.0, 1.0, Smoothness::ThreeHalves, layout.weather.clone())?);
    }
    KernelExpr::sum(parts)
}

enum Source {
    Fixed(Arc<SeriesData>),
    PerRepeat(DatasetSource),
}

/// Resolved inputs shared by all cells.
struct Plan {
    source: Source,
    template: KernelExpr,
}

fn realize(source: &DatasetSource, seed: u64) -> censored_gp::Result<SeriesData> {
    match *source {
        DatasetSource::Synthetic { n, noise_var, seed: fixed } => {
            let ds = sim::gen_synthetic(n, fixed.unwrap_or(seed), noise_var, f64::INFINITY)?;
            Ok(SeriesData {
                x: ds.features().clone(),
                y_star: ds.scoring_targets().to_vec(),
                flags: None,
                dropoffs: None,
            })
        }
        DatasetSource::MotorcycleLike { seed: fixed } => {
            let (x, y) = sim::motorcycle_like(fixed.unwrap_or(seed));
            Ok(SeriesData { x: DMatrix::from_column_slice(x.len(), 1, &x), y_star: y, flags: None, dropoffs: None })
        }
        DatasetSource::SyntheticDemand { n_days, labelled_fraction, seed: fixed } => {
            let d = sim::synthetic_demand(n_days, labelled_fraction, fixed.unwrap_or(seed))?;
            Ok(SeriesData { x: d.features(), y_star: d.latent, flags: Some(d.labels), dropoffs: None })
        }
        DatasetSource::Pickups { n, seed: fixed } => {
            let (y, d) = sim::pickups_and_dropoffs(n, fixed.unwrap_or(seed));
            let t: Vec<f64> = (0..n).map(|i| i as f64 / 96.0).collect();
            Ok(SeriesData {
                x: DMatrix::from_column_slice(n, 1, &t),
                y_star: y,
                flags: None,
                dropoffs: Some(DropoffSeries::lagged(&d)?),
            })
        }
        DatasetSource::Csv { .. } => unreachable!("csv sources are loaded once"),
    }
}

fn load_csv_source(source: &DatasetSource) -> Result<(SeriesData, FeatureLayout, f64), CliError> {
    let DatasetSource::Csv { demand, weather, calendar_features } = source else {
        unreachable!()
    };
    let mut data: DemandData = load_demand_csv(demand)?;
    if let Some(w) = weather {
        let table = load_weather_csv(w)?;
        let (joined, report) = data.join_weather(&table)?;
        log::info!("weather join kept {} rows, dropped {}", report.kept, report.dropped);
        data = joined;
    }
    let (x, layout) = data.features(*calendar_features);
    let period = if data.median_spacing() < 1.0 { 1.0 } else { DEFAULT_PERIOD };
    let dropoffs = data.dropoff_series().transpose()?;
    let y_star = data.latent.clone().unwrap_or_else(|| data.demand.clone());
    Ok((SeriesData { x, y_star, flags: Some(data.labels()), dropoffs }, layout, period))
}

fn plan(cfg: &ExperimentConfig) -> Result<Plan, CliError> {
    let explicit = cfg.kernel.clone().map(KernelExpr::try_from).transpose()?;
    let one_d = || KernelExpr::squared_exponential(1.0, 1.0, vec![0]);
    let (source, default_kernel) = match &cfg.dataset {
        src @ DatasetSource::Csv { .. } => {
            let (series, layout, period) = load_csv_source(src)?;
            (Source::Fixed(Arc::new(series)), default_demand_kernel(&layout, period)?)
        }
        src => {
            let kernel = match src {
                DatasetSource::SyntheticDemand { .. } => {
                    let layout = FeatureLayout { time: 0, calendar: None, weather: vec![1, 2], dim: 3 };
                    default_demand_kernel(&layout, DEFAULT_PERIOD)?
                }
                DatasetSource::Pickups { .. } => KernelExpr::sum(vec![
                    one_d()?,
                    KernelExpr::periodic(1.0, 1.0, 1.0, vec![0])?,
                ])?,
                _ => one_d()?,
            };
            let pinned = matches!(
                src,
                DatasetSource::Synthetic { seed: Some(_), .. }
                    | DatasetSource::MotorcycleLike { seed: Some(_) }
                    | DatasetSource::SyntheticDemand { seed: Some(_), .. }
                    | DatasetSource::Pickups { seed: Some(_), .. }
            );
            let source = if pinned {
                Source::Fixed(Arc::new(realize(src, 0)?))
            } else {
                Source::PerRepeat(src.clone())
            };
            (source, kernel)
        }
    };
    Ok(Plan { source, template: explicit.unwrap_or(default_kernel) })
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub model: Model,
    #[serde(skip)]
    pub grid_index: usize,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub p: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub threshold: Option<f64>,
    pub split: &'static str,
    pub repeat: usize,
    pub seed: u64,
    pub rmse: f64,
    pub r2: f64,
    pub n_points: usize,
    pub n_censored: usize,
    pub converged: bool,
    pub sweeps: usize,
    pub runtime_ms: u64,
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn grid_point(&self) -> GridPoint {
        GridPoint { c: self.c, gamma: self.gamma, p: self.p, a: self.a, b: self.b, threshold: self.threshold }
    }
}

/// Per-row predictions of one model on the selected curve cell.
#[derive(Debug, Clone)]
pub struct PosteriorCurve {
    pub model: Model,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub y_observed: Vec<f64>,
    pub y_latent: Vec<f64>,
    pub label: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Canonical order: model, grid point, repeat, split.
    pub records: Vec<ResultRecord>,
    pub curves: Vec<PosteriorCurve>,
    /// The censored dataset behind the curves.
    pub curve_data: Option<Dataset>,
}

impl ExperimentOutput {
    pub fn all_failed(&self) -> bool {
        self.records.iter().all(ResultRecord::failed)
    }
}

struct CellOutcome {
    records: Vec<ResultRecord>,
    curve: Option<PosteriorCurve>,
    data: Option<Dataset>,
}

/// Out-of-fold predictions when `fold_size` is set, otherwise predictions
/// at the training inputs.
fn predict_cell(
    model: Model,
    data: &Dataset,
    template: &KernelExpr,
    settings: &ModelSettings,
    fold_size: Option<usize>,
) -> censored_gp::Result<(Vec<f64>, Vec<f64>, bool, usize)> {
    let rows = data.feature_rows();
    let Some(size) = fold_size else {
        let p = fit_predict(model, data, template, settings, &rows)?;
        return Ok((p.mean, p.var, p.converged, p.sweeps));
    };
    let plan = make_time_folds(data.n(), size)?;
    let mut mean = vec![0.0; data.n()];
    let mut var = vec![0.0; data.n()];
    let (mut converged, mut sweeps) = (true, 0);
    for k in 0..plan.len() {
        let train = data.select(&plan.train_indices(k))?;
        let test = plan.test_indices(k);
        let query: Vec<Vec<f64>> = test.iter().map(|&i| rows[i].clone()).collect();
        let p = fit_predict(model, &train, template, settings, &query)?;
        for (j, &i) in test.iter().enumerate() {
            mean[i] = p.mean[j];
            var[i] = p.var[j];
        }
        converged &= p.converged;
        sweeps = sweeps.max(p.sweeps);
    }
    Ok((mean, var, converged, sweeps))
}

fn censor(series: &SeriesData, point: &GridPoint, seed: u64) -> censored_gp::Result<Dataset> {
    let spec = point.spec(seed);
    let (y, flags) = spec.apply(&series.y_star, series.flags.as_deref(), series.dropoffs.as_ref())?;
    Dataset::new(series.x.clone(), y, flags)?.with_latent(series.y_star.clone())
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    cfg: &ExperimentConfig,
    plan: &Plan,
    series: &SeriesData,
    model: Model,
    grid_index: usize,
    point: &GridPoint,
    repeat: usize,
    seed: u64,
) -> CellOutcome {
    let started = Instant::now();
    let blank = |split: Split| ResultRecord {
        model,
        grid_index,
        c: point.c,
        gamma: point.gamma,
        p: point.p,
        a: point.a,
        b: point.b,
        threshold: point.threshold,
        split: split.as_str(),
        repeat,
        seed,
        rmse: f64::NAN,
        r2: f64::NAN,
        n_points: 0,
        n_censored: 0,
        converged: false,
        sweeps: 0,
        runtime_ms: 0,
        error: None,
    };
    let fitted = censor(series, point, seed).and_then(|data| {
        let out = predict_cell(model, &data, &plan.template, &cfg.settings, cfg.fold_size)?;
        Ok((data, out))
    });
    let elapsed = if cfg.record_timing { started.elapsed().as_millis() as u64 } else { 0 };
    match fitted {
        Err(e) => {
            log::warn!("{model} [{point}] repeat {repeat}: {e}");
            CellOutcome {
                records: Split::BOTH
                    .iter()
                    .map(|&s| ResultRecord { error: Some(e.to_string()), runtime_ms: elapsed, ..blank(s) })
                    .collect(),
                curve: None,
                data: None,
            }
        }
        Ok((data, (mean, var, converged, sweeps))) => {
            let records = Split::BOTH
                .iter()
                .map(|&s| {
                    let base = ResultRecord { converged, sweeps, runtime_ms: elapsed, n_censored: data.n_censored(), ..blank(s) };
                    match evaluate_split(&mean, &data, s) {
                        Ok(r) => ResultRecord { rmse: r.rmse, r2: r.r2, n_points: r.n_points, ..base },
                        Err(e) => ResultRecord { error: Some(e.to_string()), ..base },
                    }
                })
                .collect();
            log::debug!("{model} [{point}] repeat {repeat} done");
            let wanted = grid_index == cfg.curve.grid_index && repeat == cfg.curve.repeat;
            let curve = wanted.then(|| PosteriorCurve {
                model,
                x: data.features().column(0).iter().copied().collect(),
                mean,
                var,
                y_observed: data.observed().to_vec(),
                y_latent: data.scoring_targets().to_vec(),
                label: data.censored().to_vec(),
            });
            CellOutcome { records, curve, data: wanted.then_some(data) }
        }
    }
}

/// Runs every cell on a bounded worker pool. Cell failures are recorded in
/// the affected records; the result is independent of scheduling.
pub fn run_experiment_grid(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    cfg.validate()?;
    let plan = plan(cfg)?;
    let grid = cfg.grid();
    let mut models = cfg.models.clone();
    models.sort();
    models.dedup();
    let seeds: Vec<u64> = (0..cfg.repeats).map(|r| cfg.seed.wrapping_add(r as u64)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;

    pool.install(|| {
        let series: Vec<Arc<SeriesData>> = match &plan.source {
            Source::Fixed(s) => Ok(vec![Arc::clone(s); cfg.repeats]),
            Source::PerRepeat(src) => {
                seeds.par_iter().map(|&s| realize(src, s).map(Arc::new)).collect::<censored_gp::Result<_>>()
            }
        }?;
        if let Some(s) = series.first() {
            let need = plan.template.required_dim();
            if need > s.x.ncols() {
                return Err(CliError::Config(format!(
                    "kernel refers to feature column {} but the dataset has {}",
                    need - 1,
                    s.x.ncols()
                )));
            }
        }
        let jobs: Vec<(Model, usize, usize)> = models
            .iter()
            .flat_map(|&m| (0..grid.len()).flat_map(move |g| (0..cfg.repeats).map(move |r| (m, g, r))))
            .collect();
        let outcomes: Vec<CellOutcome> = jobs
            .par_iter()
            .map(|&(m, g, r)| run_cell(cfg, &plan, &series[r], m, g, &grid[g], r, seeds[r]))
            .collect();

        let mut out = ExperimentOutput { records: Vec::new(), curves: Vec::new(), curve_data: None };
        for o in outcomes {
            out.records.extend(o.records);
            out.curves.extend(o.curve);
            if out.curve_data.is_none() {
                out.curve_data = o.data;
            }
        }
        Ok(out)
    })
}
