//! Exact GP regression with Gaussian observation noise.
//!
//! Targets are standardized before fitting and predictions are mapped back.
//! Hyperparameters stay in the original target units: the Gram matrix and
//! the noise variance are divided by the squared target scale internally.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::{Dataset, Standardizer, Subset};
use crate::error::{Error, Result};
use crate::kernels::{gram, gram_symmetric, gram_with_gradients, KernelExpr};
use crate::linalg::{jittered_cholesky, log_det, mean_diagonal};
use crate::normal::LN_SQRT_2PI;

/// Relative slack allowed for negative predictive variances before clamping.
const NEGATIVE_VARIANCE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ExactFit {
    kernel: KernelExpr,
    noise_var: f64,
    train: Vec<Vec<f64>>,
    targets: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    standardizer: Standardizer,
    jitter: f64,
}

impl ExactFit {
    pub fn kernel(&self) -> &KernelExpr {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn n(&self) -> usize {
        self.train.len()
    }

    pub fn standardizer(&self) -> Standardizer {
        self.standardizer
    }

    /// Jitter (in standardized units) added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower Cholesky factor of the standardized K + σ²I + jitter·I.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Fits an exact GP on `subset` of the rows (`All` for NCGP, `NoncensoredOnly`
/// for NCGP-A).
pub fn fit_exact(
    data: &Dataset,
    kernel: &KernelExpr,
    noise_var: f64,
    subset: Subset,
) -> Result<ExactFit> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!(
            "noise variance must be positive (got {noise_var})"
        )));
    }
    kernel.check_dim(data.dim())?;
    let rows = data.row_indices(subset);
    if rows.is_empty() {
        return Err(Error::EmptySubset);
    }
    let all_rows = data.feature_rows();
    let train: Vec<Vec<f64>> = rows.iter().map(|&i| all_rows[i].clone()).collect();
    let y: Vec<f64> = rows.iter().map(|&i| data.observed()[i]).collect();
    let standardizer = Standardizer::fit(&y);
    let s2 = standardizer.scale * standardizer.scale;

    let mut k = gram_symmetric(kernel, &train)?;
    k /= s2;
    let scale = mean_diagonal(&k);
    let noise_std = noise_var / s2;
    for i in 0..k.nrows() {
        k[(i, i)] += noise_std;
    }
    let (chol, jitter) = jittered_cholesky(&k, scale)?;
    let targets = DVector::from_iterator(y.len(), y.iter().map(|&v| standardizer.forward(v)));
    let alpha = chol.solve(&targets);
    Ok(ExactFit {
        kernel: kernel.clone(),
        noise_var,
        train,
        targets,
        chol,
        alpha,
        standardizer,
        jitter,
    })
}

/// Latent predictive mean and variance at `query` rows, in target units.
pub fn predict_exact(fit: &ExactFit, query: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if let (Some(q), Some(t)) = (query.first(), fit.train.first()) {
        if q.len() != t.len() {
            return Err(Error::DimensionMismatch { expected: t.len(), found: q.len() });
        }
    }
    let s = fit.standardizer.scale;
    let s2 = s * s;
    let kq = gram(&fit.kernel, query, &fit.train)? / s2;
    let mean_std = &kq * &fit.alpha;
    let v = fit
        .chol
        .l_dirty()
        .solve_lower_triangular(&kq.transpose())
        .ok_or(Error::CholeskyFailed { jitter: fit.jitter })?;
    let prior = fit.kernel.prior_variance() / s2;
    let mut mean = Vec::with_capacity(query.len());
    let mut var = Vec::with_capacity(query.len());
    for j in 0..query.len() {
        mean.push(fit.standardizer.inverse(mean_std[j]));
        let explained: f64 = v.column(j).iter().map(|x| x * x).sum();
        var.push(clamp_variance(prior - explained, prior)? * s2);
    }
    Ok((mean, var))
}

pub(crate) fn clamp_variance(v: f64, prior: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v > -NEGATIVE_VARIANCE_SLACK * prior {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance { value: v })
    }
}

/// Log evidence log p(y | θ) of the fitted rows, in original target units.
pub fn log_marginal_gaussian(fit: &ExactFit) -> f64 {
    let n = fit.n() as f64;
    let quad = fit.targets.dot(&fit.alpha);
    -0.5 * quad - 0.5 * log_det(&fit.chol) - n * LN_SQRT_2PI - n * fit.standardizer.scale.ln()
}

/// Gradient of [`log_marginal_gaussian`] with respect to the kernel's log
/// parameters followed by log σ².
pub fn log_marginal_gradient(fit: &ExactFit) -> Result<Vec<f64>> {
    let s2 = fit.standardizer.scale * fit.standardizer.scale;
    let (_, dk) = gram_with_gradients(&fit.kernel, &fit.train)?;
    let inv = fit.chol.inverse();
    let n = fit.n();
    let a = &fit.alpha;
    // W = ααᵀ − (K + σ²I)⁻¹
    let w = DMatrix::from_fn(n, n, |i, j| a[i] * a[j] - inv[(i, j)]);
    let mut grad = Vec::with_capacity(dk.len() + 1);
    for m in &dk {
        grad.push(0.5 * w.component_mul(m).sum() / s2);
    }
    grad.push(0.5 * (fit.noise_var / s2) * w.trace());
    Ok(grad)
}

/// Posterior mean at the training inputs, a convenience for scoring.
pub fn fitted_mean(fit: &ExactFit) -> Result<Vec<f64>> {
    let train = fit.train.clone();
    predict_exact(fit, &train).map(|(m, _)| m)
}
