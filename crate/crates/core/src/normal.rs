//! Standard normal density, distribution and the stable ratios built from them.

#[allow(unused_imports)]
use num_traits::Float;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Below this point φ/Φ comes from the continued fraction instead of a
/// direct division.
const TAIL_SWITCH: f64 = -6.0;
const CF_DEPTH: usize = 120;

#[inline]
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Φ(x) via the complementary error function.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// 1 − Φ(x), accurate in the upper tail.
#[inline]
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Mills ratio (1 − Φ(x)) / φ(x) for x ≥ 6, by backward evaluation of the
/// Laplace continued fraction.
fn mills_ratio_tail(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut t = x;
    for k in (1..=CF_DEPTH).rev() {
        t = x + k as f64 / t;
    }
    1.0 / t
}

/// log Φ(x).
pub fn log_cdf(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        log_pdf(x) + mills_ratio_tail(-x).ln()
    } else if x > 0.0 {
        (-sf(x)).ln_1p()
    } else {
        cdf(x).ln()
    }
}

/// φ(x) / Φ(x), finite for every finite x.
pub fn inv_mills(x: f64) -> f64 {
    if x < TAIL_SWITCH {
        1.0 / mills_ratio_tail(-x)
    } else {
        pdf(x) / cdf(x)
    }
}
