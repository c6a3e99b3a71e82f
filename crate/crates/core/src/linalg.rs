use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-2;

/// Cholesky factor of `a + jitter·I`, with jitter starting at 1e−8·`scale`
/// and growing tenfold up to 1e−2·`scale`. Returns the factor and the jitter
/// that succeeded.
pub(crate) fn jittered_cholesky(a: &DMatrix<f64>, scale: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
    let mut jitter = JITTER_START * scale;
    while jitter <= JITTER_MAX * scale * (1.0 + 1e-12) {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            return Ok((ch, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::CholeskyFailed { jitter: JITTER_MAX * scale })
}

pub(crate) fn mean_diagonal(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows().max(1);
    a.diagonal().iter().sum::<f64>() / n as f64
}

pub(crate) fn log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| num_traits::Float::ln(*d)).sum::<f64>()
}
