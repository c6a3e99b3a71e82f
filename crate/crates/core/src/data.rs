//! Observation sets with censorship labels.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Which rows a model is trained or scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    NoncensoredOnly,
}

/// Feature rows, observed targets and per-row upper-censoring labels.
///
/// A censored row's observed value doubles as its censoring threshold. When
/// the dataset was simulated, the latent (uncensored) targets are kept for
/// scoring; non-censored rows then agree with their latent value exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    observed: Vec<f64>,
    latent: Option<Vec<f64>>,
    censored: Vec<bool>,
    thresholds: Vec<f64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, observed: Vec<f64>, censored: Vec<bool>) -> Result<Self> {
        let n = observed.len();
        if n == 0 {
            return Err(Error::EmptySubset);
        }
        if features.nrows() != n {
            return Err(Error::LengthMismatch { left: features.nrows(), right: n });
        }
        if censored.len() != n {
            return Err(Error::LengthMismatch { left: censored.len(), right: n });
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidData("dataset needs at least one feature column".into()));
        }
        if let Some(i) = observed.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("observed target {i} is not finite")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("features contain non-finite values".into()));
        }
        let thresholds = observed.clone();
        Ok(Dataset { features, observed, latent: None, censored, thresholds })
    }

    /// A dataset without any censored rows.
    pub fn uncensored(features: DMatrix<f64>, observed: Vec<f64>) -> Result<Self> {
        let n = observed.len();
        Self::new(features, observed, alloc::vec![false; n])
    }

    /// Single-feature dataset, handy for time series and 1-D toys.
    pub fn from_1d(x: &[f64], observed: Vec<f64>, censored: Vec<bool>) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(x.len(), 1, x), observed, censored)
    }

    pub fn with_latent(mut self, latent: Vec<f64>) -> Result<Self> {
        if latent.len() != self.n() {
            return Err(Error::LengthMismatch { left: latent.len(), right: self.n() });
        }
        for i in 0..self.n() {
            if !latent[i].is_finite() {
                return Err(Error::InvalidData(format!("latent target {i} is not finite")));
            }
            if !self.censored[i] && latent[i] != self.observed[i] {
                return Err(Error::InvalidData(format!(
                    "row {i} is not censored but observed {} differs from latent {}",
                    self.observed[i], latent[i]
                )));
            }
        }
        self.latent = Some(latent);
        Ok(self)
    }

    /// Replaces targets and labels, keeping features and latent values.
    pub fn recensored(&self, observed: Vec<f64>, censored: Vec<bool>) -> Result<Self> {
        let out = Dataset::new(self.features.clone(), observed, censored)?;
        match &self.latent {
            Some(l) => out.with_latent(l.clone()),
            None => Ok(out),
        }
    }

    pub fn n(&self) -> usize {
        self.observed.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn latent(&self) -> Option<&[f64]> {
        self.latent.as_deref()
    }

    pub fn censored(&self) -> &[bool] {
        &self.censored
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn n_censored(&self) -> usize {
        self.censored.iter().filter(|&&c| c).count()
    }

    /// Latent targets when known, observed ones otherwise.
    pub fn scoring_targets(&self) -> &[f64] {
        self.latent().unwrap_or(&self.observed)
    }

    pub fn row_indices(&self, subset: Subset) -> Vec<usize> {
        match subset {
            Subset::All => (0..self.n()).collect(),
            Subset::NoncensoredOnly => (0..self.n()).filter(|&i| !self.censored[i]).collect(),
        }
    }

    /// Feature rows as owned vectors, the layout kernels evaluate on.
    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.features)
    }

    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySubset);
        }
        let d = self.dim();
        let features = DMatrix::from_fn(rows.len(), d, |r, c| self.features[(rows[r], c)]);
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Dataset {
            features,
            observed: pick(&self.observed),
            latent: self.latent.as_deref().map(pick),
            censored: rows.iter().map(|&i| self.censored[i]).collect(),
            thresholds: pick(&self.thresholds),
        })
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

/// Affine map taking targets to zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub shift: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let shift = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - shift) * (v - shift)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 * (1.0 + shift.abs()) { sd } else { 1.0 };
        Standardizer { shift, scale }
    }

    #[inline]
    pub fn forward(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    #[inline]
    pub fn inverse(&self, v: f64) -> f64 {
        v * self.scale + self.shift
    }
}
