//! Linear Tobit regression: a linear mean with Gaussian noise, density terms
//! on non-censored rows and survival terms `1 − Φ` on rows censored from above.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hyperopt::{maximize, Objective, OptimizerConfig, TraceRecord};
use crate::linalg::jittered_cholesky;
use crate::normal;

/// Sum of per-row log-likelihood terms for predictions `pred`.
pub(crate) fn censored_terms(pred: impl Iterator<Item = f64>, data: &Dataset, sigma: f64) -> f64 {
    let ln_sigma = sigma.ln();
    pred.zip(data.observed()).zip(data.censored()).fold(0.0, |acc, ((f, &y), &c)| {
        let r = (y - f) / sigma;
        acc + if c { normal::log_cdf(-r) } else { normal::log_pdf(r) - ln_sigma }
    })
}

fn check(beta: &[f64], sigma: f64, data: &Dataset) -> Result<()> {
    if beta.len() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim(), found: beta.len() });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!("sigma must be positive (got {sigma})")));
    }
    Ok(())
}

fn linear_predictor<'a>(beta: &'a [f64], data: &'a Dataset) -> impl Iterator<Item = f64> + 'a {
    let x = data.features();
    (0..data.n()).map(move |i| (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum())
}

/// Tobit log-likelihood of `beta` (one coefficient per feature column) and
/// noise standard deviation `sigma`.
pub fn tobit_log_likelihood(beta: &[f64], sigma: f64, data: &Dataset) -> Result<f64> {
    check(beta, sigma, data)?;
    Ok(censored_terms(linear_predictor(beta, data), data, sigma))
}

/// Gradient with respect to `beta` followed by `ln sigma`.
pub fn tobit_gradient(beta: &[f64], sigma: f64, data: &Dataset) -> Result<Vec<f64>> {
    check(beta, sigma, data)?;
    let d = beta.len();
    let x = data.features();
    let mut grad = vec![0.0; d + 1];
    for (i, eta) in linear_predictor(beta, data).enumerate() {
        let y = data.observed()[i];
        let (w, dls) = if data.censored()[i] {
            let z = (eta - y) / sigma;
            let m = normal::inv_mills(z);
            (m / sigma, -m * z)
        } else {
            let r = (y - eta) / sigma;
            (r / sigma, r * r - 1.0)
        };
        for j in 0..d {
            grad[j] += w * x[(i, j)];
        }
        grad[d] += dls;
    }
    Ok(grad)
}

#[derive(Debug, Clone)]
pub struct TobitFit {
    pub beta: Vec<f64>,
    pub sigma: f64,
    pub log_likelihood: f64,
    pub trace: Vec<TraceRecord>,
}

impl TobitFit {
    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.beta.len() {
            return Err(Error::DimensionMismatch { expected: self.beta.len(), found: features.ncols() });
        }
        Ok((0..features.nrows())
            .map(|i| (0..self.beta.len()).map(|j| features[(i, j)] * self.beta[j]).sum())
            .collect())
    }
}

struct TobitObjective<'a> {
    data: &'a Dataset,
}

impl Objective for TobitObjective<'_> {
    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        let d = theta.len() - 1;
        tobit_log_likelihood(&theta[..d], theta[d].exp(), self.data)
    }

    fn value_grad(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = theta.len() - 1;
        let sigma = theta[d].exp();
        Ok((
            tobit_log_likelihood(&theta[..d], sigma, self.data)?,
            tobit_gradient(&theta[..d], sigma, self.data)?,
        ))
    }

    fn bound(&self) -> Option<f64> {
        None
    }
}

fn ordinary_least_squares(data: &Dataset) -> Result<(Vec<f64>, f64)> {
    let x = data.features();
    let y = DVector::from_column_slice(data.observed());
    let xtx = x.transpose() * x;
    let scale = (0..xtx.nrows()).map(|i| xtx[(i, i)]).sum::<f64>() / xtx.nrows().max(1) as f64;
    let (chol, _) = jittered_cholesky(&xtx, scale.max(1e-300))?;
    let beta = chol.solve(&(x.transpose() * &y));
    let resid = &y - x * &beta;
    let sigma = (resid.norm_squared() / data.n() as f64).sqrt();
    Ok((beta.iter().copied().collect(), if sigma > 0.0 { sigma } else { 1.0 }))
}

/// Maximum-likelihood Tobit fit, started from the least-squares solution.
/// Include a constant feature column for an intercept.
pub fn fit_tobit(data: &Dataset, config: &OptimizerConfig) -> Result<TobitFit> {
    if data.n() == 0 {
        return Err(Error::EmptySubset);
    }
    let (beta0, sigma0) = ordinary_least_squares(data)?;
    let mut init = beta0;
    init.push(sigma0.ln());
    let m = maximize(&mut TobitObjective { data }, &init, config)?;
    let d = data.dim();
    Ok(TobitFit {
        beta: m.theta[..d].to_vec(),
        sigma: m.theta[d].exp(),
        log_likelihood: m.value,
        trace: m.trace,
    })
}
