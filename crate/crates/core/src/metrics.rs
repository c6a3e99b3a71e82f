//! Point-prediction metrics against latent targets and time-ordered folds.

use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub fn rmse(pred: &[f64], y_star: &[f64]) -> Result<f64> {
    if pred.len() != y_star.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: y_star.len() });
    }
    if pred.is_empty() {
        return Err(Error::EmptySubset);
    }
    let sse: f64 = pred.iter().zip(y_star).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

/// Coefficient of determination `1 − SSE/SST`.
pub fn r2(pred: &[f64], y_star: &[f64]) -> Result<f64> {
    if pred.len() != y_star.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: y_star.len() });
    }
    if pred.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mean = y_star.iter().sum::<f64>() / y_star.len() as f64;
    let sst: f64 = y_star.iter().map(|y| (y - mean) * (y - mean)).sum();
    if !(sst > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let sse: f64 = pred.iter().zip(y_star).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(1.0 - sse / sst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Entire,
    NoncensoredOnly,
}

impl Split {
    pub const BOTH: [Split; 2] = [Split::Entire, Split::NoncensoredOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Entire => "entire",
            Split::NoncensoredOnly => "noncensored_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub rmse: f64,
    /// `NaN` when the split's targets have zero variance.
    pub r2: f64,
    pub n_points: usize,
}

/// Scores `pred` (one value per dataset row) on `split` against the latent
/// targets when the dataset carries them, otherwise against the observations.
pub fn evaluate_split(pred: &[f64], data: &Dataset, split: Split) -> Result<EvalReport> {
    if pred.len() != data.n() {
        return Err(Error::LengthMismatch { left: pred.len(), right: data.n() });
    }
    let targets = data.scoring_targets();
    let rows: Vec<usize> = match split {
        Split::Entire => (0..data.n()).collect(),
        Split::NoncensoredOnly => (0..data.n()).filter(|&i| !data.censored()[i]).collect(),
    };
    if rows.is_empty() {
        return Err(Error::EmptySubset);
    }
    let p: Vec<f64> = rows.iter().map(|&i| pred[i]).collect();
    let t: Vec<f64> = rows.iter().map(|&i| targets[i]).collect();
    let r2 = match r2(&p, &t) {
        Ok(v) => v,
        Err(Error::ZeroVariance) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(EvalReport { split, rmse: rmse(&p, &t)?, r2, n_points: rows.len() })
}

/// Contiguous, ordered, disjoint index ranges covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Range<usize>>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Training rows for held-out fold `k`: every other fold.
    pub fn train_indices(&self, k: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, r)| r.clone())
            .collect()
    }

    pub fn test_indices(&self, k: usize) -> Vec<usize> {
        self.folds[k].clone().collect()
    }
}

pub fn make_time_folds(n: usize, fold_size: usize) -> Result<FoldPlan> {
    if fold_size == 0 {
        return Err(Error::InvalidParameter("fold_size must be at least 1".into()));
    }
    let folds = (0..n).step_by(fold_size).map(|s| s..(s + fold_size).min(n)).collect();
    Ok(FoldPlan { folds })
}
