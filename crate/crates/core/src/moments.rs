//! Cavity distributions, tilted moments and the site moment-matching update.
//!
//! For the censored likelihood both tilted distributions have closed-form
//! zeroth, first and second moments. The censored branch is evaluated through
//! `log Φ` and the ratio `φ/Φ` so it stays finite far into the lower tail.

#[allow(unused_imports)]
use num_traits::Float;

use crate::normal;

/// Marginal of one latent value with its own site removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    pub mean: f64,
    pub var: f64,
}

/// Normalizer and moments of cavity × exact likelihood factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedMoments {
    pub log_z: f64,
    pub mean: f64,
    pub var: f64,
}

/// A site in natural parameters: precision `tau` and precision × mean `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Site {
    pub tau: f64,
    pub nu: f64,
}

/// Removes a site from a Gaussian marginal `N(mean, var)`.
///
/// Returns `None` when the cavity precision is not positive; the caller skips
/// that site for the current sweep.
pub fn cavity(marginal_mean: f64, marginal_var: f64, site: Site) -> Option<CavityParams> {
    let prec = 1.0 / marginal_var - site.tau;
    if !(prec > 0.0) || !prec.is_finite() {
        return None;
    }
    let var = 1.0 / prec;
    Some(CavityParams { mean: var * (marginal_mean / marginal_var - site.nu), var })
}

/// Tilted moments for a fully observed row, `y ~ N(f, noise_var)`.
pub fn tilted_moments_noncensored(y: f64, cav: CavityParams, noise_var: f64) -> TiltedMoments {
    let s2 = noise_var + cav.var;
    let r = y - cav.mean;
    TiltedMoments {
        log_z: -0.5 * (2.0 * core::f64::consts::PI * s2).ln() - r * r / (2.0 * s2),
        mean: cav.mean + cav.var * r / s2,
        var: cav.var - cav.var * cav.var / s2,
    }
}

/// Tilted moments for a row censored from above at `threshold`: the factor is
/// `1 − Φ((threshold − f)/σ)`.
pub fn tilted_moments_censored(threshold: f64, cav: CavityParams, noise_var: f64) -> TiltedMoments {
    let s2 = noise_var + cav.var;
    let s = s2.sqrt();
    let z = (cav.mean - threshold) / s;
    let ratio = normal::inv_mills(z);
    let shrink = cav.var / s2 * ratio * (z + ratio);
    TiltedMoments {
        log_z: normal::log_cdf(z),
        mean: cav.mean + cav.var * ratio / s,
        var: cav.var * (1.0 - shrink),
    }
}

/// ∂ log Ẑ / ∂σ² with the cavity held fixed.
pub fn d_log_z_d_noise_var(censored: bool, y: f64, cav: CavityParams, noise_var: f64) -> f64 {
    let s2 = noise_var + cav.var;
    if censored {
        let z = (cav.mean - y) / s2.sqrt();
        -normal::inv_mills(z) * z / (2.0 * s2)
    } else {
        let r = y - cav.mean;
        -0.5 / s2 + r * r / (2.0 * s2 * s2)
    }
}

/// Moment-matching site update, blended with the previous site by `damping`.
///
/// A negative blended precision is clamped to the neutral site.
pub fn site_update(tilted: TiltedMoments, cav: CavityParams, old: Site, damping: f64) -> Site {
    let tau_target = 1.0 / tilted.var - 1.0 / cav.var;
    let nu_target = tilted.mean / tilted.var - cav.mean / cav.var;
    let tau = (1.0 - damping) * old.tau + damping * tau_target;
    let nu = (1.0 - damping) * old.nu + damping * nu_target;
    if tau < 0.0 || !tau.is_finite() || !nu.is_finite() {
        Site::default()
    } else {
        Site { tau, nu }
    }
}
