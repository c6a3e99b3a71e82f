//! Expectation propagation for the censored GP likelihood.
//!
//! Sites are visited in index order. Within a sweep the posterior is kept
//! current with rank-one updates; after every sweep it is rebuilt from the
//! sites through a Cholesky factorization of `B = I + S½ K S½`, which also
//! yields the EP evidence.
//!
//! Everything runs on standardized targets. Hyperparameters, predictions and
//! the reported evidence are in the original target units.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::exact::clamp_variance;
use crate::kernels::{gram, gram_symmetric, gram_with_gradients, KernelExpr};
use crate::linalg::mean_diagonal;
use crate::moments::{
    cavity, d_log_z_d_noise_var, site_update, tilted_moments_censored,
    tilted_moments_noncensored, CavityParams, Site, TiltedMoments,
};

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EpConfig {
    pub max_sweeps: usize,
    /// Convergence threshold on the largest site change in a sweep.
    pub tol: f64,
    pub damping: f64,
    /// Observation noise σ² in target units.
    pub noise_var: f64,
}

impl Default for EpConfig {
    fn default() -> Self {
        EpConfig { max_sweeps: 100, tol: 1e-6, damping: 0.8, noise_var: 0.1 }
    }
}

impl EpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::InvalidParameter("max_sweeps must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "damping must lie in (0, 1] (got {})",
                self.damping
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::InvalidParameter("noise_var must be positive".into()));
        }
        Ok(())
    }
}

/// Per-observation sites in natural parameters (standardized units).
#[derive(Debug, Clone, PartialEq)]
pub struct SiteParams {
    pub tau: Vec<f64>,
    pub nu: Vec<f64>,
    /// log Z̃ of each site's un-normalized Gaussian; 0 for neutral sites.
    pub log_z: Vec<f64>,
}

impl SiteParams {
    pub fn neutral(n: usize) -> Self {
        SiteParams { tau: vec![0.0; n], nu: vec![0.0; n], log_z: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn site(&self, i: usize) -> Site {
        Site { tau: self.tau[i], nu: self.nu[i] }
    }

    /// Site mean μ̃, undefined for neutral sites.
    pub fn mean(&self, i: usize) -> Option<f64> {
        (self.tau[i] > 0.0).then(|| self.nu[i] / self.tau[i])
    }

    /// Site variance σ̃², undefined for neutral sites.
    pub fn variance(&self, i: usize) -> Option<f64> {
        (self.tau[i] > 0.0).then(|| 1.0 / self.tau[i])
    }
}

/// One line of the convergence report.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub max_delta: f64,
    pub log_z_ep: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct EpPosterior {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    log_z_ep: f64,
    sites: SiteParams,
    converged: bool,
    sweeps_used: usize,
    trace: Vec<SweepRecord>,
    standardizer: Standardizer,
    noise_var: f64,
    jitter: f64,
    chol_b: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    cavities: Vec<Option<CavityParams>>,
}

impl EpPosterior {
    /// Posterior mean of the latent values at the training inputs.
    pub fn mean(&self) -> Vec<f64> {
        self.mu.iter().map(|&m| self.standardizer.inverse(m)).collect()
    }

    /// Posterior covariance at the training inputs.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.sigma * (self.standardizer.scale * self.standardizer.scale)
    }

    /// Posterior mean in standardized units.
    pub fn mean_standardized(&self) -> &DVector<f64> {
        &self.mu
    }

    /// Posterior covariance in standardized units.
    pub fn covariance_standardized(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn log_z_ep(&self) -> f64 {
        self.log_z_ep
    }

    pub fn sites(&self) -> &SiteParams {
        &self.sites
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn sweeps_used(&self) -> usize {
        self.sweeps_used
    }

    pub fn trace(&self) -> &[SweepRecord] {
        &self.trace
    }

    pub fn standardizer(&self) -> Standardizer {
        self.standardizer
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// Cavity of site `i` under the current posterior, in standardized units.
    pub fn cavity(&self, i: usize) -> Option<CavityParams> {
        cavity(self.mu[i], self.sigma[(i, i)], self.sites.site(i))
    }
}

struct Problem {
    k: DMatrix<f64>,
    y: Vec<f64>,
    censored: Vec<bool>,
    noise: f64,
    jitter: f64,
}

impl Problem {
    fn tilted(&self, i: usize, cav: CavityParams) -> TiltedMoments {
        if self.censored[i] {
            tilted_moments_censored(self.y[i], cav, self.noise)
        } else {
            tilted_moments_noncensored(self.y[i], cav, self.noise)
        }
    }
}

struct Refresh {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    chol_b: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// Rebuilds (μ, Σ) from the sites, escalating the prior jitter if `B` cannot
/// be factorized.
fn refresh(p: &mut Problem, sites: &SiteParams) -> Result<Refresh> {
    let n = p.k.nrows();
    let sw: Vec<f64> = sites.tau.iter().map(|t| t.sqrt()).collect();
    let base = mean_diagonal(&p.k);
    loop {
        let mut kj = p.k.clone();
        for i in 0..n {
            kj[(i, i)] += p.jitter;
        }
        let b = DMatrix::from_fn(n, n, |i, j| {
            let v = sw[i] * kj[(i, j)] * sw[j];
            if i == j { 1.0 + v } else { v }
        });
        if let Some(chol_b) = b.cholesky() {
            let swk = DMatrix::from_fn(n, n, |i, j| sw[i] * kj[(i, j)]);
            let v = chol_b
                .l_dirty()
                .solve_lower_triangular(&swk)
                .ok_or(Error::CholeskyFailed { jitter: p.jitter })?;
            let mut sigma = &kj - v.transpose() * &v;
            sigma = (&sigma + sigma.transpose()) * 0.5;
            let nu = DVector::from_column_slice(&sites.nu);
            let mu = &sigma * &nu;
            // α = ν̃ − S½ B⁻¹ S½ K ν̃
            let kn = &kj * &nu;
            let swkn = DVector::from_iterator(n, (0..n).map(|i| sw[i] * kn[i]));
            let bs = chol_b.solve(&swkn);
            let alpha = DVector::from_iterator(n, (0..n).map(|i| nu[i] - sw[i] * bs[i]));
            return Ok(Refresh { mu, sigma, chol_b, alpha });
        }
        let next = if p.jitter == 0.0 { JITTER_START * base } else { p.jitter * 10.0 };
        if next > JITTER_MAX * base * (1.0 + 1e-12) {
            return Err(Error::CholeskyFailed { jitter: p.jitter });
        }
        p.jitter = next;
    }
}

/// Cavities, tilted moments and the EP evidence (standardized units) for the
/// posterior in `r`.
fn evidence(
    p: &Problem,
    sites: &SiteParams,
    r: &Refresh,
) -> (f64, Vec<Option<CavityParams>>, Vec<f64>) {
    let n = p.k.nrows();
    let half_log_det_b: f64 = r.chol_b.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let nu = DVector::from_column_slice(&sites.nu);
    let mut total = -half_log_det_b + 0.5 * nu.dot(&(&r.sigma * &nu));
    let mut cavs = Vec::with_capacity(n);
    let mut site_log_z = vec![0.0; n];
    for i in 0..n {
        let site = sites.site(i);
        let Some(cav) = cavity(r.mu[i], r.sigma[(i, i)], site) else {
            cavs.push(None);
            total = f64::NAN;
            continue;
        };
        let t = p.tilted(i, cav);
        let (tau, nu_i) = (site.tau, site.nu);
        let denom = 1.0 + tau * cav.var;
        total += t.log_z
            + 0.5 * denom.ln()
            + (tau * cav.mean * cav.mean - 2.0 * cav.mean * nu_i - nu_i * nu_i * cav.var)
                / (2.0 * denom);
        if tau > 0.0 {
            let sv = cav.var + 1.0 / tau;
            let d = cav.mean - nu_i / tau;
            site_log_z[i] = t.log_z
                + 0.5 * (2.0 * core::f64::consts::PI * sv).ln()
                + d * d / (2.0 * sv);
        }
        cavs.push(Some(cav));
    }
    (total, cavs, site_log_z)
}

/// Runs EP from neutral sites.
pub fn ep_fit(data: &Dataset, kernel: &KernelExpr, config: &EpConfig) -> Result<EpPosterior> {
    ep_fit_warm(data, kernel, config, None)
}

/// Runs EP starting from `init` sites (e.g. a previous fit with nearby
/// hyperparameters).
pub fn ep_fit_warm(
    data: &Dataset,
    kernel: &KernelExpr,
    config: &EpConfig,
    init: Option<&SiteParams>,
) -> Result<EpPosterior> {
    config.validate()?;
    kernel.check_dim(data.dim())?;
    let n = data.n();
    let standardizer = Standardizer::fit(data.observed());
    let s2 = standardizer.scale * standardizer.scale;
    let mut k = gram_symmetric(kernel, &data.feature_rows())?;
    k /= s2;
    let jitter = JITTER_START * mean_diagonal(&k);
    let mut p = Problem {
        k,
        y: data.observed().iter().map(|&v| standardizer.forward(v)).collect(),
        censored: data.censored().to_vec(),
        noise: config.noise_var / s2,
        jitter,
    };

    let mut sites = match init {
        Some(s) if s.len() == n => s.clone(),
        Some(s) => return Err(Error::LengthMismatch { left: s.len(), right: n }),
        None => SiteParams::neutral(n),
    };
    let mut state = refresh(&mut p, &sites)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps_used = 0;

    for sweep in 1..=config.max_sweeps {
        sweeps_used = sweep;
        let mut max_delta = 0.0f64;
        let mut skipped = 0;
        for i in 0..n {
            let old = sites.site(i);
            let Some(cav) = cavity(state.mu[i], state.sigma[(i, i)], old) else {
                skipped += 1;
                continue;
            };
            let tilted = p.tilted(i, cav);
            if !(tilted.var > 0.0) || !tilted.mean.is_finite() {
                skipped += 1;
                continue;
            }
            let new = site_update(tilted, cav, old, config.damping);
            let d_tau = new.tau - old.tau;
            max_delta = max_delta.max(d_tau.abs()).max((new.nu - old.nu).abs());
            sites.tau[i] = new.tau;
            sites.nu[i] = new.nu;
            if d_tau != 0.0 {
                let si: DVector<f64> = state.sigma.column(i).into_owned();
                let c = d_tau / (1.0 + d_tau * si[i]);
                state.sigma.ger(-c, &si, &si, 1.0);
            }
            state.mu = &state.sigma * DVector::from_column_slice(&sites.nu);
        }
        state = refresh(&mut p, &sites)?;
        let (log_z, _, _) = evidence(&p, &sites, &state);
        trace.push(SweepRecord {
            sweep,
            max_delta,
            log_z_ep: to_original_units(log_z, data, &standardizer),
            skipped,
        });
        if max_delta < config.tol {
            converged = true;
            break;
        }
    }

    let (log_z, cavities, site_log_z) = evidence(&p, &sites, &state);
    sites.log_z = site_log_z;
    Ok(EpPosterior {
        mu: state.mu,
        sigma: state.sigma,
        log_z_ep: to_original_units(log_z, data, &standardizer),
        sites,
        converged,
        sweeps_used,
        trace,
        standardizer,
        noise_var: config.noise_var,
        jitter: p.jitter,
        chol_b: state.chol_b,
        alpha: state.alpha,
        cavities,
    })
}

/// Density factors of non-censored rows pick up the target scale; survival
/// factors of censored rows are dimensionless.
fn to_original_units(log_z: f64, data: &Dataset, st: &Standardizer) -> f64 {
    let dense = (data.n() - data.n_censored()) as f64;
    log_z - dense * st.scale.ln()
}

/// Latent predictive mean and variance at `query` rows, in target units.
pub fn ep_predict(
    post: &EpPosterior,
    data: &Dataset,
    kernel: &KernelExpr,
    query: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if data.n() != post.n() {
        return Err(Error::LengthMismatch { left: data.n(), right: post.n() });
    }
    if let Some(q) = query.first() {
        if q.len() != data.dim() {
            return Err(Error::DimensionMismatch { expected: data.dim(), found: q.len() });
        }
    }
    let st = post.standardizer;
    let s2 = st.scale * st.scale;
    let kq = gram(kernel, query, &data.feature_rows())? / s2;
    let sw: Vec<f64> = post.sites.tau.iter().map(|t| t.sqrt()).collect();
    let mean_std = &kq * &post.alpha;
    let swkq = DMatrix::from_fn(post.n(), query.len(), |i, j| sw[i] * kq[(j, i)]);
    let v = post
        .chol_b
        .l_dirty()
        .solve_lower_triangular(&swkq)
        .ok_or(Error::CholeskyFailed { jitter: post.jitter })?;
    let prior = kernel.prior_variance() / s2;
    let mut mean = Vec::with_capacity(query.len());
    let mut var = Vec::with_capacity(query.len());
    for j in 0..query.len() {
        mean.push(st.inverse(mean_std[j]));
        let explained: f64 = v.column(j).iter().map(|x| x * x).sum();
        var.push(clamp_variance(prior - explained, prior)? * s2);
    }
    Ok((mean, var))
}

/// Gradient of log Z_EP with the sites held at their fixed point, with
/// respect to the kernel's log parameters followed by log σ².
///
/// At an EP fixed point the evidence is stationary in the site parameters,
/// so this is the total derivative.
pub fn ep_log_evidence_gradient(
    post: &EpPosterior,
    data: &Dataset,
    kernel: &KernelExpr,
) -> Result<Vec<f64>> {
    if data.n() != post.n() {
        return Err(Error::LengthMismatch { left: data.n(), right: post.n() });
    }
    let n = post.n();
    let st = post.standardizer;
    let s2 = st.scale * st.scale;
    let (_, dk) = gram_with_gradients(kernel, &data.feature_rows())?;
    let sw: Vec<f64> = post.sites.tau.iter().map(|t| t.sqrt()).collect();
    // R = S½ B⁻¹ S½ = (K + S̃⁻¹)⁻¹
    let binv = post.chol_b.inverse();
    let a = &post.alpha;
    let w = DMatrix::from_fn(n, n, |i, j| a[i] * a[j] - sw[i] * binv[(i, j)] * sw[j]);
    let mut grad = Vec::with_capacity(dk.len() + 1);
    for m in &dk {
        grad.push(0.5 * w.component_mul(m).sum() / s2);
    }
    let noise_std = post.noise_var / s2;
    let y: Vec<f64> = data.observed().iter().map(|&v| st.forward(v)).collect();
    let mut dnoise = 0.0;
    for i in 0..n {
        if let Some(cav) = post.cavities[i] {
            dnoise += d_log_z_d_noise_var(data.censored()[i], y[i], cav, noise_std);
        }
    }
    grad.push(dnoise * noise_std);
    Ok(grad)
}

/// Log of the censored likelihood at fixed latent values `f`: Gaussian
/// density terms on non-censored rows, survival terms on censored ones.
pub fn censored_log_likelihood(f: &[f64], data: &Dataset, sigma: f64) -> Result<f64> {
    if f.len() != data.n() {
        return Err(Error::LengthMismatch { left: f.len(), right: data.n() });
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive (got {sigma})")));
    }
    Ok(crate::tobit::censored_terms(f.iter().copied(), data, sigma))
}
