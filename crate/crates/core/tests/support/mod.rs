//! Numerical oracles shared by integration tests: adaptive Gauss–Kronrod
//! quadrature and tilted-moment integrals evaluated directly from densities.
#![allow(dead_code)]

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// ∫ f over [a, b], bisecting until each piece's Kronrod–Gauss difference is
/// below its share of `abs_tol` or at the rounding level of its value.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    let width = b - a;
    let mut total = 0.0;
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = kronrod(&mut f, lo, hi);
        if err <= abs_tol * (hi - lo) / width || err <= 1e-14 * val.abs() || depth > 40 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

/// [`integrate`] over [a, b] split at mode ± sd·2^k, so a peak of width
/// `sd` inside a much wider window is never stepped over.
pub fn integrate_around(mut f: impl FnMut(f64) -> f64, mode: f64, sd: f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    let mut cuts = vec![a, b];
    let mut step = sd;
    while mode - step > a || mode + step < b {
        cuts.extend([mode - step, mode + step].into_iter().filter(|c| *c > a && *c < b));
        step *= 2.0;
    }
    if mode > a && mode < b {
        cuts.push(mode);
    }
    cuts.sort_by(f64::total_cmp);
    let width = b - a;
    cuts.windows(2).map(|w| integrate(&mut f, w[0], w[1], abs_tol * (w[1] - w[0]) / width)).sum()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy)]
pub struct OracleMoments {
    pub z: f64,
    pub mean: f64,
    pub var: f64,
}

/// Normalizer, mean and variance of N(f; mu, v)·L(f) by quadrature, where
/// L is the Gaussian density N(y; f, noise) or, when `censored`, the
/// survival probability 1 − Φ((y − f)/√noise).
pub fn tilted_oracle(censored: bool, y: f64, mu: f64, v: f64, noise: f64) -> OracleMoments {
    let sigma = noise.sqrt();
    let log_g = |f: f64| {
        let prior = -0.5 * (f - mu) * (f - mu) / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln();
        let lik = if censored {
            (0.5 * libm::erfc((y - f) / (sigma * std::f64::consts::SQRT_2))).ln()
        } else {
            -0.5 * (y - f) * (y - f) / noise - 0.5 * (2.0 * std::f64::consts::PI * noise).ln()
        };
        prior + lik
    };
    // golden-section search for the mode of the concave log integrand
    let spread = 60.0 * (v + noise).sqrt();
    let (mut lo, mut hi) = (mu.min(y) - spread, mu.max(y) + spread);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut f1, mut f2) = (log_g(x1), log_g(x2));
    for _ in 0..300 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = log_g(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = log_g(x1);
        }
    }
    let mode = 0.5 * (lo + hi);
    let peak = log_g(mode);
    let h = 1e-3 * v.sqrt().min(sigma);
    let curv = (log_g(mode + h) - 2.0 * peak + log_g(mode - h)) / (h * h);
    let sd = if curv < 0.0 { (-1.0 / curv).sqrt() } else { v.sqrt() };
    let (a, b) = (mode - 60.0 * sd, mode + 60.0 * sd + 10.0 * v.sqrt());
    let g = |f: f64| (log_g(f) - peak).exp();
    let tol = 1e-13 * sd;
    let i0 = integrate_around(g, mode, sd, a, b, tol);
    let i1 = integrate_around(|f| (f - mode) * g(f), mode, sd, a, b, tol * sd);
    let mean = mode + i1 / i0;
    let i2 = integrate_around(|f| (f - mean) * (f - mean) * g(f), mode, sd, a, b, tol * sd * sd);
    OracleMoments { z: peak.exp() * i0, mean, var: i2 / i0 }
}
