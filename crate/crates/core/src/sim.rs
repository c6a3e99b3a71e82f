//! Censoring processes and synthetic data generators.
//!
//! Every stochastic routine draws from ChaCha20 seeded with
//! `seed_from_u64(seed)` and a fixed stream number per routine, so outputs
//! are reproducible and independent across routines sharing a seed.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

const STREAM_SYNTHETIC: u64 = 1;
const STREAM_RANDOM_FRACTION: u64 = 2;
const STREAM_DROPOFF: u64 = 3;
const STREAM_MOTORCYCLE: u64 = 4;
const STREAM_DEMAND: u64 = 5;
const STREAM_PICKUPS: u64 = 6;

/// Generator for one routine; `stream` separates routines sharing a seed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gauss(rng: &mut ChaCha20Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn unit(rng: &mut ChaCha20Rng) -> f64 {
    rng.random::<f64>()
}

/// Dropoff counts per interval; entry `i` is the interval preceding pickup
/// observation `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoffSeries {
    d: Vec<f64>,
}

impl DropoffSeries {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if let Some(i) = d.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidData(format!("dropoff count {i} is negative or not finite")));
        }
        Ok(DropoffSeries { d })
    }

    /// Builds the preceding-interval series from same-interval counts: the
    /// first entry is reused for the first observation.
    pub fn lagged(same_interval: &[f64]) -> Result<Self> {
        let mut d = Vec::with_capacity(same_interval.len());
        if let Some(&first) = same_interval.first() {
            d.push(first);
            d.extend_from_slice(&same_interval[..same_interval.len() - 1]);
        }
        Self::new(d)
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

/// A censoring process and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum CensorSpec {
    FixedThreshold { threshold: f64 },
    RandomFraction { p: f64, a: f64, b: f64, seed: u64 },
    TwoStage { c: f64 },
    RandDropoff { gamma: f64, c: f64, seed: u64 },
}

impl CensorSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in [0, 1] (got {v})")))
            }
        };
        match *self {
            CensorSpec::FixedThreshold { threshold } => {
                if threshold.is_nan() {
                    return Err(Error::InvalidParameter("threshold is NaN".into()));
                }
                Ok(())
            }
            CensorSpec::RandomFraction { p, a, b, .. } => {
                unit("p", p)?;
                unit("a", a)?;
                unit("b", b)?;
                if a >= b {
                    return Err(Error::InvalidParameter(format!("need a < b (got a={a}, b={b})")));
                }
                Ok(())
            }
            CensorSpec::TwoStage { c } => unit("c", c),
            CensorSpec::RandDropoff { gamma, c, .. } => {
                if !(gamma > 0.0 && gamma < 1.0) {
                    return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1) (got {gamma})")));
                }
                unit("c", c)
            }
        }
    }

    /// Censors `y_star`. Two-stage censoring needs the availability labels
    /// and RandDropoff needs a dropoff series; other variants ignore them.
    pub fn apply(
        &self,
        y_star: &[f64],
        flags: Option<&[bool]>,
        dropoffs: Option<&DropoffSeries>,
    ) -> Result<(Vec<f64>, Vec<bool>)> {
        self.validate()?;
        match *self {
            CensorSpec::FixedThreshold { threshold } => Ok(censor_fixed_threshold(y_star, threshold)),
            CensorSpec::RandomFraction { p, a, b, seed } => censor_random_fraction(y_star, p, a, b, seed),
            CensorSpec::TwoStage { c } => {
                let flags = flags.ok_or_else(|| Error::InvalidData("two-stage censoring needs availability labels".into()))?;
                censor_two_stage(y_star, flags, c)
            }
            CensorSpec::RandDropoff { gamma, c, seed } => {
                let d = dropoffs.ok_or_else(|| Error::InvalidData("RandDropoff needs a dropoff series".into()))?;
                rand_dropoff(y_star, d, gamma, c, seed)
            }
        }
    }
}

/// The synthetic latent function `2 + sin(2x)/2 + x/10`.
pub fn latent_function(x: f64) -> f64 {
    2.0 + (2.0 * x).sin() / 2.0 + x / 10.0
}

pub fn censor_fixed_threshold(y_star: &[f64], threshold: f64) -> (Vec<f64>, Vec<bool>) {
    let y = y_star.iter().map(|&v| v.min(threshold)).collect();
    let l = y_star.iter().map(|&v| v >= threshold).collect();
    (y, l)
}

/// `n` equally spaced inputs on [0, 10], latent targets with Gaussian noise,
/// clipped from above at `threshold`. The latent targets are kept.
pub fn gen_synthetic(n: usize, seed: u64, noise_var: f64, threshold: f64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two points".into()));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance must be non-negative (got {noise_var})")));
    }
    if threshold.is_nan() {
        return Err(Error::InvalidParameter("threshold is NaN".into()));
    }
    let mut rng = rng_for(seed, STREAM_SYNTHETIC);
    let sd = noise_var.sqrt();
    let x: Vec<f64> = (0..n).map(|i| 10.0 * i as f64 / (n - 1) as f64).collect();
    let y_star: Vec<f64> = x.iter().map(|&xi| latent_function(xi) + sd * gauss(&mut rng)).collect();
    let (y, l) = censor_fixed_threshold(&y_star, threshold);
    Dataset::from_1d(&x, y, l)?.with_latent(y_star)
}

/// Censors exactly ⌈p·n⌉ rows chosen uniformly without replacement, each
/// shrunk to `(1 − u)·y*` with `u ~ U[a, b]`.
pub fn censor_random_fraction(y_star: &[f64], p: f64, a: f64, b: f64, seed: u64) -> Result<(Vec<f64>, Vec<bool>)> {
    CensorSpec::RandomFraction { p, a, b, seed }.validate()?;
    let n = y_star.len();
    let k = ((p * n as f64).ceil() as usize).min(n);
    let mut rng = rng_for(seed, STREAM_RANDOM_FRACTION);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    let mut y = y_star.to_vec();
    let mut l = alloc::vec![false; n];
    for i in picked {
        let u = a + (b - a) * unit(&mut rng);
        y[i] = (1.0 - u) * y_star[i];
        l[i] = true;
    }
    Ok((y, l))
}

/// Labels follow `flags`; labelled rows are shrunk to `(1 − c)·y*`.
pub fn censor_two_stage(y_star: &[f64], flags: &[bool], c: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    CensorSpec::TwoStage { c }.validate()?;
    if flags.len() != y_star.len() {
        return Err(Error::LengthMismatch { left: flags.len(), right: y_star.len() });
    }
    let y = y_star.iter().zip(flags).map(|(&v, &f)| if f { (1.0 - c) * v } else { v }).collect();
    Ok((y, flags.to_vec()))
}

/// Censoring probability for a pickup count `y_star` given the preceding
/// dropoff count: a logistic curve in the relative gap with value `gamma`
/// where the two are equal.
pub fn dropoff_censor_probability(y_star: f64, d_prev: f64, gamma: f64) -> f64 {
    let gap = (y_star - d_prev) / y_star;
    1.0 / (1.0 + (((1.0 - gamma) / gamma).ln() - gap).exp())
}

pub fn rand_dropoff(
    y_star: &[f64],
    dropoffs: &DropoffSeries,
    gamma: f64,
    c: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<bool>)> {
    CensorSpec::RandDropoff { gamma, c, seed }.validate()?;
    if dropoffs.len() != y_star.len() {
        return Err(Error::LengthMismatch { left: dropoffs.len(), right: y_star.len() });
    }
    if let Some(i) = y_star.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidData(format!("RandDropoff needs positive latent values (row {i} is {})", y_star[i])));
    }
    let mut rng = rng_for(seed, STREAM_DROPOFF);
    let mut y = Vec::with_capacity(y_star.len());
    let mut l = Vec::with_capacity(y_star.len());
    for (&v, &d) in y_star.iter().zip(dropoffs.values()) {
        let hit = unit(&mut rng) < dropoff_censor_probability(v, d, gamma);
        y.push(if hit { v * (1.0 - c) } else { v });
        l.push(hit);
    }
    Ok((y, l))
}

/// A motorcycle-crash-like acceleration curve on 133 time points in
/// [2.4, 57.6] ms, shifted to stay positive so multiplicative censoring
/// only lowers it.
pub fn motorcycle_like(seed: u64) -> (Vec<f64>, Vec<f64>) {
    const N: usize = 133;
    const OFFSET: f64 = 150.0;
    let mut rng = rng_for(seed, STREAM_MOTORCYCLE);
    let x: Vec<f64> = (0..N).map(|i| 2.4 + 55.2 * i as f64 / (N - 1) as f64).collect();
    let mean = |t: f64| {
        let dip = -120.0 * (-(t - 21.0).powi(2) / (2.0 * 3.5f64.powi(2))).exp();
        let rebound = 45.0 * (-(t - 31.0).powi(2) / (2.0 * 4.0f64.powi(2))).exp();
        let tail = -8.0 * (-(t - 42.0).powi(2) / (2.0 * 6.0f64.powi(2))).exp();
        OFFSET + dip + rebound + tail
    };
    let y = x.iter().map(|&t| mean(t) + 10.0 * gauss(&mut rng)).collect();
    (x, y)
}

/// A daily demand series with weekly seasonality, a slow trend and weather
/// dependence.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    /// Day index from 0.
    pub day: Vec<f64>,
    /// Standardized weather columns (temperature, precipitation).
    pub weather: Vec<[f64; 2]>,
    pub latent: Vec<f64>,
    /// Zero-availability days.
    pub labels: Vec<bool>,
}

impl DemandSeries {
    /// Day index in column 0 and weather in the remaining columns.
    pub fn features(&self) -> DMatrix<f64> {
        let n = self.day.len();
        DMatrix::from_fn(n, 3, |i, j| if j == 0 { self.day[i] } else { self.weather[i][j - 1] })
    }

    pub fn n(&self) -> usize {
        self.day.len()
    }
}

/// `n_days` of synthetic demand with ⌈labelled_fraction·n⌉ zero-availability
/// days chosen at random.
pub fn synthetic_demand(n_days: usize, labelled_fraction: f64, seed: u64) -> Result<DemandSeries> {
    if !(0.0..=1.0).contains(&labelled_fraction) {
        return Err(Error::InvalidParameter(format!("labelled fraction must lie in [0, 1] (got {labelled_fraction})")));
    }
    let mut rng = rng_for(seed, STREAM_DEMAND);
    let two_pi = 2.0 * core::f64::consts::PI;
    let weekly = [1.0, 1.05, 1.1, 1.08, 1.15, 0.8, 0.7];
    let mut day = Vec::with_capacity(n_days);
    let mut weather = Vec::with_capacity(n_days);
    let mut latent = Vec::with_capacity(n_days);
    let mut precip_state = 0.0;
    for i in 0..n_days {
        let t = i as f64;
        let temp = (two_pi * (t - 100.0) / 365.0).sin() + 0.3 * gauss(&mut rng);
        precip_state = 0.6 * precip_state + 0.8 * gauss(&mut rng);
        let precip = precip_state.max(-0.5);
        let level = 40.0 + 0.02 * t + 8.0 * temp - 6.0 * precip.max(0.0);
        let v = level * weekly[i % 7] + 2.5 * gauss(&mut rng);
        day.push(t);
        weather.push([temp, precip]);
        latent.push(v.max(1.0));
    }
    let k = ((labelled_fraction * n_days as f64).ceil() as usize).min(n_days);
    let mut labels = alloc::vec![false; n_days];
    for i in rand::seq::index::sample(&mut rng, n_days, k) {
        labels[i] = true;
    }
    Ok(DemandSeries { day, weather, latent, labels })
}

/// Pickups per 15-minute interval with a daily profile, and the dropoffs in
/// the same intervals.
pub fn pickups_and_dropoffs(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng_for(seed, STREAM_PICKUPS);
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut pickups = Vec::with_capacity(n);
    let mut dropoffs = Vec::with_capacity(n);
    for i in 0..n {
        let h = (i % 96) as f64 / 4.0;
        let profile = 30.0 + 12.0 * (two_pi * (h - 9.0) / 24.0).sin() + 6.0 * (two_pi * (h - 18.0) / 12.0).cos();
        let y = (profile + 3.0 * gauss(&mut rng)).max(1.0);
        let d = (y * (0.95 + 0.25 * gauss(&mut rng))).max(0.0);
        pickups.push(y);
        dropoffs.push(d);
    }
    (pickups, dropoffs)
}
