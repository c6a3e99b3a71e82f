//! Type-II maximum likelihood over log-space hyperparameters.
//!
//! The parameter vector is the kernel's flat log-parameter vector followed by
//! log σ². Two ascent methods are offered: an Adam-style first-order method
//! and BFGS with a backtracking line search. Both return the best iterate
//! seen, so the reported objective never drops below its initial value.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Standardizer, Subset};
use crate::ep::{ep_fit_warm, ep_log_evidence_gradient, EpConfig, EpPosterior, SiteParams};
use crate::error::{Error, Result};
use crate::exact::{fit_exact, log_marginal_gaussian, log_marginal_gradient};
use crate::kernels::{KernelExpr, LeafKind};

/// Log parameters are kept inside this box.
const LOG_BOUND: f64 = 15.0;
const MAX_LOG_STEP: f64 = 2.0;
const MAX_BACKTRACKS: usize = 30;
/// Weekly, with time measured in days.
pub const DEFAULT_PERIOD: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AdamLikeFirstOrder,
    QuasiNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    pub step_size: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Relative step for finite differences.
    pub fd_step: f64,
}

impl OptimizerConfig {
    pub fn adam() -> Self {
        OptimizerConfig {
            method: Method::AdamLikeFirstOrder,
            step_size: 0.05,
            max_iters: 200,
            grad_tol: 1e-4,
            fd_step: 1e-4,
        }
    }

    pub fn quasi_newton() -> Self {
        OptimizerConfig {
            method: Method::QuasiNewton,
            step_size: 1.0,
            max_iters: 1000,
            grad_tol: 1e-5,
            fd_step: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidParameter("step_size must be positive".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidParameter("fd_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpGradient {
    /// Fixed-site analytic gradient of log Z_EP.
    #[default]
    Analytic,
    /// Central differences with sites re-converged at every probe.
    Numeric,
}

/// Which evidence to maximize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    ExactGaussian { subset: Subset },
    EpCensored { ep: EpConfig, gradient: EpGradient },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub best: f64,
    pub max_grad: f64,
}

/// Something to maximize over a parameter vector.
pub trait Objective {
    fn value(&mut self, theta: &[f64]) -> Result<f64>;
    fn value_grad(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Box applied to every coordinate, `None` for unconstrained problems.
    fn bound(&self) -> Option<f64> {
        Some(LOG_BOUND)
    }
}

#[derive(Debug, Clone)]
pub struct Maximum {
    pub theta: Vec<f64>,
    pub value: f64,
    pub trace: Vec<TraceRecord>,
}

/// Central-difference gradient with relative step `fd_step`. A coordinate
/// whose probe fails falls back to a one-sided difference.
pub fn numeric_gradient<F>(mut f: F, theta: &[f64], fd_step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let f0 = f(theta)?;
    let mut grad = vec![0.0; theta.len()];
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        let h = fd_step * theta[i].abs().max(1.0);
        probe[i] = theta[i] + h;
        let up = f(&probe);
        probe[i] = theta[i] - h;
        let down = f(&probe);
        probe[i] = theta[i];
        grad[i] = match (up, down) {
            (Ok(u), Ok(d)) => (u - d) / (2.0 * h),
            (Ok(u), Err(_)) => (u - f0) / h,
            (Err(_), Ok(d)) => (f0 - d) / h,
            (Err(e), Err(_)) => return Err(e),
        };
    }
    Ok(grad)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn project(theta: &mut [f64], bound: Option<f64>) {
    if let Some(b) = bound {
        theta.iter_mut().for_each(|t| *t = t.clamp(-b, b));
    }
}

/// Maximizes `obj` from `init`.
pub fn maximize(obj: &mut dyn Objective, init: &[f64], config: &OptimizerConfig) -> Result<Maximum> {
    config.validate()?;
    let mut x = init.to_vec();
    project(&mut x, obj.bound());
    let (fx, gx) = obj
        .value_grad(&x)
        .map_err(|e| Error::ObjectiveFailed(format!("at initial point: {e}")))?;
    if !fx.is_finite() {
        return Err(Error::ObjectiveFailed("non-finite objective at initial point".to_string()));
    }
    match config.method {
        Method::AdamLikeFirstOrder => adam(obj, x, fx, gx, config),
        Method::QuasiNewton => bfgs(obj, x, fx, gx, config),
    }
}

fn adam(
    obj: &mut dyn Objective,
    mut x: Vec<f64>,
    mut fx: f64,
    mut gx: Vec<f64>,
    config: &OptimizerConfig,
) -> Result<Maximum> {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let p = x.len();
    let (mut m, mut v) = (vec![0.0; p], vec![0.0; p]);
    let mut best = (x.clone(), fx);
    let mut trace = vec![TraceRecord { iter: 0, objective: fx, best: fx, max_grad: max_abs(&gx) }];
    for it in 1..=config.max_iters {
        if max_abs(&gx) < config.grad_tol {
            break;
        }
        for j in 0..p {
            m[j] = B1 * m[j] + (1.0 - B1) * gx[j];
            v[j] = B2 * v[j] + (1.0 - B2) * gx[j] * gx[j];
        }
        let c1 = 1.0 - B1.powi(it as i32);
        let c2 = 1.0 - B2.powi(it as i32);
        let step: Vec<f64> =
            (0..p).map(|j| config.step_size * (m[j] / c1) / ((v[j] / c2).sqrt() + EPS)).collect();
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + scale * s).collect();
            project(&mut trial, obj.bound());
            match obj.value_grad(&trial) {
                Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                    accepted = Some((trial, f, g));
                    break;
                }
                _ => scale *= 0.5,
            }
        }
        let Some((nx, nf, ng)) = accepted else { break };
        x = nx;
        fx = nf;
        gx = ng;
        if fx > best.1 {
            best = (x.clone(), fx);
        }
        trace.push(TraceRecord { iter: it, objective: fx, best: best.1, max_grad: max_abs(&gx) });
    }
    Ok(Maximum { theta: best.0, value: best.1, trace })
}

fn bfgs(
    obj: &mut dyn Objective,
    mut x: Vec<f64>,
    mut fx: f64,
    mut gx: Vec<f64>,
    config: &OptimizerConfig,
) -> Result<Maximum> {
    const ARMIJO: f64 = 1e-4;
    let p = x.len();
    let identity = |p: usize| {
        let mut h = vec![0.0; p * p];
        (0..p).for_each(|i| h[i * p + i] = 1.0);
        h
    };
    // Inverse Hessian of −f.
    let mut h = identity(p);
    let mut fresh = true;
    let mut trace = vec![TraceRecord { iter: 0, objective: fx, best: fx, max_grad: max_abs(&gx) }];
    for it in 1..=config.max_iters {
        if max_abs(&gx) < config.grad_tol {
            break;
        }
        let mut d: Vec<f64> = (0..p).map(|i| (0..p).map(|j| h[i * p + j] * gx[j]).sum()).collect();
        let mut slope: f64 = d.iter().zip(&gx).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) {
            h = identity(p);
            fresh = true;
            d = gx.clone();
            slope = d.iter().map(|v| v * v).sum();
        }
        let mut t = if fresh { config.step_size } else { 1.0 };
        let dmax = max_abs(&d);
        if t * dmax > MAX_LOG_STEP {
            t = MAX_LOG_STEP / dmax;
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, s)| a + t * s).collect();
            project(&mut trial, obj.bound());
            if let Ok((f, g)) = obj.value_grad(&trial) {
                if f.is_finite() && g.iter().all(|v| v.is_finite()) && f >= fx + ARMIJO * t * slope {
                    accepted = Some((trial, f, g));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((nx, nf, ng)) = accepted else {
            if fresh {
                break;
            }
            h = identity(p);
            fresh = true;
            continue;
        };
        let s: Vec<f64> = nx.iter().zip(&x).map(|(a, b)| a - b).collect();
        // gradient change of −f
        let y: Vec<f64> = gx.iter().zip(&ng).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..p).map(|i| (0..p).map(|j| h[i * p + j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..p {
                for j in 0..p {
                    h[i * p + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
        let improvement = nf - fx;
        x = nx;
        fx = nf;
        gx = ng;
        trace.push(TraceRecord { iter: it, objective: fx, best: fx, max_grad: max_abs(&gx) });
        if improvement.abs() < 1e-12 * (1.0 + fx.abs()) && max_abs(&s) < 1e-10 {
            break;
        }
    }
    Ok(Maximum { theta: x, value: fx, trace })
}

/// Fitted hyperparameters and the evidence reached.
#[derive(Debug, Clone)]
pub struct Type2Fit {
    pub kernel: KernelExpr,
    pub noise_var: f64,
    pub objective: f64,
    pub theta: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    /// Final EP sites, for the censored objective.
    pub sites: Option<SiteParams>,
}

struct ExactObjective<'a> {
    data: &'a Dataset,
    template: &'a KernelExpr,
    subset: Subset,
}

impl ExactObjective<'_> {
    fn split(&self, theta: &[f64]) -> Result<(KernelExpr, f64)> {
        let p = self.template.n_params();
        Ok((self.template.with_log_params(&theta[..p])?, theta[p].exp()))
    }
}

impl Objective for ExactObjective<'_> {
    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        let (k, noise) = self.split(theta)?;
        Ok(log_marginal_gaussian(&fit_exact(self.data, &k, noise, self.subset)?))
    }

    fn value_grad(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (k, noise) = self.split(theta)?;
        let fit = fit_exact(self.data, &k, noise, self.subset)?;
        Ok((log_marginal_gaussian(&fit), log_marginal_gradient(&fit)?))
    }
}

struct EpObjective<'a> {
    data: &'a Dataset,
    template: &'a KernelExpr,
    ep: EpConfig,
    gradient: EpGradient,
    fd_step: f64,
    warm: Option<SiteParams>,
}

impl EpObjective<'_> {
    fn fit(&self, theta: &[f64], warm: Option<&SiteParams>) -> Result<(KernelExpr, EpPosterior)> {
        let p = self.template.n_params();
        let k = self.template.with_log_params(&theta[..p])?;
        let cfg = EpConfig { noise_var: theta[p].exp(), ..self.ep };
        let post = ep_fit_warm(self.data, &k, &cfg, warm)?;
        if !post.log_z_ep().is_finite() {
            return Err(Error::ObjectiveFailed("EP evidence is not finite".into()));
        }
        Ok((k, post))
    }
}

impl Objective for EpObjective<'_> {
    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        let (_, post) = self.fit(theta, self.warm.as_ref())?;
        Ok(post.log_z_ep())
    }

    fn value_grad(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (k, post) = self.fit(theta, self.warm.as_ref())?;
        let value = post.log_z_ep();
        let grad = match self.gradient {
            EpGradient::Analytic => ep_log_evidence_gradient(&post, self.data, &k)?,
            EpGradient::Numeric => {
                let sites = post.sites().clone();
                numeric_gradient(
                    |t| self.fit(t, Some(&sites)).map(|(_, p)| p.log_z_ep()),
                    theta,
                    self.fd_step,
                )?
            }
        };
        self.warm = Some(post.sites().clone());
        Ok((value, grad))
    }
}

/// Selects hyperparameters by maximizing the chosen evidence from `init`
/// (kernel log parameters followed by log σ²).
pub fn optimize_type2_ml(
    kind: ObjectiveKind,
    data: &Dataset,
    template: &KernelExpr,
    config: &OptimizerConfig,
    init: &[f64],
) -> Result<Type2Fit> {
    let p = template.n_params();
    if init.len() != p + 1 {
        return Err(Error::LengthMismatch { left: init.len(), right: p + 1 });
    }
    let result = match kind {
        ObjectiveKind::ExactGaussian { subset } => {
            let mut obj = ExactObjective { data, template, subset };
            maximize(&mut obj, init, config)?
        }
        ObjectiveKind::EpCensored { ep, gradient } => {
            let mut obj = EpObjective {
                data,
                template,
                ep,
                gradient,
                fd_step: config.fd_step,
                warm: None,
            };
            maximize(&mut obj, init, config)?
        }
    };
    let kernel = template.with_log_params(&result.theta[..p])?;
    let noise_var = result.theta[p].exp();
    let sites = match kind {
        ObjectiveKind::EpCensored { ep, .. } => {
            let cfg = EpConfig { noise_var, ..ep };
            Some(ep_fit_warm(data, &kernel, &cfg, None)?.sites().clone())
        }
        ObjectiveKind::ExactGaussian { .. } => None,
    };
    Ok(Type2Fit {
        kernel,
        noise_var,
        objective: result.value,
        theta: result.theta,
        trace: result.trace,
        sites,
    })
}

/// Starting point: λ² = target variance, τ = median pairwise distance over
/// each leaf's dims (1 for periodic leaves), ρ from the template, σ² =
/// 0.1·target variance.
pub fn heuristic_init(data: &Dataset, template: &KernelExpr, subset: Subset) -> Vec<f64> {
    let rows = data.row_indices(subset);
    let y: Vec<f64> = rows.iter().map(|&i| data.observed()[i]).collect();
    let st = if y.is_empty() { Standardizer { shift: 0.0, scale: 1.0 } } else { Standardizer::fit(&y) };
    let var = st.scale * st.scale;
    let features = data.feature_rows();
    let pts: Vec<&Vec<f64>> = rows.iter().map(|&i| &features[i]).collect();
    let mut theta = Vec::with_capacity(template.n_params() + 1);
    for leaf in template.leaves() {
        theta.push(var.ln());
        match leaf.kind() {
            LeafKind::Periodic => {
                theta.push(0.0);
                theta.push(leaf.params().period().unwrap_or(DEFAULT_PERIOD).ln());
            }
            _ => theta.push(median_distance(&pts, leaf.dims()).ln()),
        }
    }
    theta.push((0.1 * var).ln());
    theta
}

fn median_distance(pts: &[&Vec<f64>], dims: &[usize]) -> f64 {
    const MAX_POINTS: usize = 400;
    let stride = (pts.len() / MAX_POINTS).max(1);
    let sample: Vec<&Vec<f64>> = pts.iter().step_by(stride).copied().collect();
    let mut d = Vec::new();
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            let s: f64 = dims.iter().map(|&k| (sample[i][k] - sample[j][k]).powi(2)).sum();
            d.push(s.sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let m = d[d.len() / 2];
    if m > 0.0 { m } else { 1.0 }
}
