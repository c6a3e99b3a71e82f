//! Stationary covariance functions and their sum/product compositions.
//!
//! Every leaf evaluates on the Euclidean distance between two feature rows
//! restricted to the leaf's `dims`. Hyperparameters are held in log space and
//! exposed as one flat vector per expression, leaves visited depth-first and
//! left to right; each leaf contributes `[log variance, log lengthscale]`
//! followed by `log period` for periodic leaves.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const SQRT_5: f64 = 2.236_067_977_499_79;

/// Matérn smoothness; only the half-integer orders with closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Smoothness {
    Half,
    #[default]
    ThreeHalves,
    FiveHalves,
}

impl Smoothness {
    pub fn from_nu(nu: f64) -> Result<Self> {
        match nu {
            0.5 => Ok(Smoothness::Half),
            1.5 => Ok(Smoothness::ThreeHalves),
            2.5 => Ok(Smoothness::FiveHalves),
            other => Err(Error::InvalidParameter(format!(
                "Matérn nu must be one of 0.5, 1.5, 2.5 (got {other})"
            ))),
        }
    }

    pub fn nu(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LeafKind {
    SquaredExponential,
    Periodic,
    Matern,
}

impl LeafKind {
    fn name(self) -> &'static str {
        match self {
            LeafKind::SquaredExponential => "se",
            LeafKind::Periodic => "periodic",
            LeafKind::Matern => "matern",
        }
    }
}

/// Log-space hyperparameters of a single kernel leaf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    log_variance: f64,
    log_lengthscale: f64,
    log_period: Option<f64>,
    smoothness: Smoothness,
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v.ln())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite (got {v})")))
    }
}

impl KernelParams {
    pub fn new(variance: f64, lengthscale: f64) -> Result<Self> {
        Ok(KernelParams {
            log_variance: positive("variance", variance)?,
            log_lengthscale: positive("lengthscale", lengthscale)?,
            log_period: None,
            smoothness: Smoothness::default(),
        })
    }

    pub fn with_period(mut self, period: f64) -> Result<Self> {
        self.log_period = Some(positive("period", period)?);
        Ok(self)
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn variance(&self) -> f64 {
        self.log_variance.exp()
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn period(&self) -> Option<f64> {
        self.log_period.map(f64::exp)
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }
}

/// λ²·exp(−d²/(2τ²)).
pub fn se_eval(params: &KernelParams, d: f64) -> f64 {
    let ls = params.lengthscale();
    params.variance() * (-0.5 * d * d / (ls * ls)).exp()
}

/// λ²·exp(−2 sin²(πd/ρ)/τ²).
///
/// Panics if `params` carries no period.
pub fn periodic_eval(params: &KernelParams, d: f64) -> f64 {
    let period = params.period().expect("periodic kernel needs a period");
    let ls = params.lengthscale();
    let s = (PI * d / period).sin();
    params.variance() * (-2.0 * s * s / (ls * ls)).exp()
}

pub fn matern_eval(params: &KernelParams, d: f64) -> f64 {
    let r = d / params.lengthscale();
    params.variance() * matern_shape(params.smoothness, r)
}

fn matern_shape(nu: Smoothness, r: f64) -> f64 {
    match nu {
        Smoothness::Half => (-r).exp(),
        Smoothness::ThreeHalves => {
            let a = SQRT_3 * r;
            (1.0 + a) * (-a).exp()
        }
        Smoothness::FiveHalves => {
            let a = SQRT_5 * r;
            (1.0 + a + a * a / 3.0) * (-a).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    kind: LeafKind,
    params: KernelParams,
    dims: Vec<usize>,
}

impl Leaf {
    pub fn kind(&self) -> LeafKind {
        self.kind
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn n_params(&self) -> usize {
        match self.kind {
            LeafKind::Periodic => 3,
            _ => 2,
        }
    }

    fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.dims
            .iter()
            .map(|&d| {
                let t = x[d] - y[d];
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    fn eval_distance(&self, d: f64) -> f64 {
        match self.kind {
            LeafKind::SquaredExponential => se_eval(&self.params, d),
            LeafKind::Periodic => periodic_eval(&self.params, d),
            LeafKind::Matern => matern_eval(&self.params, d),
        }
    }

    /// Value and derivatives with respect to this leaf's log parameters.
    fn eval_grad(&self, d: f64, grad: &mut [f64]) -> f64 {
        let var = self.params.variance();
        let ls = self.params.lengthscale();
        match self.kind {
            LeafKind::SquaredExponential => {
                let k = se_eval(&self.params, d);
                grad[0] = k;
                grad[1] = k * d * d / (ls * ls);
                k
            }
            LeafKind::Periodic => {
                let k = periodic_eval(&self.params, d);
                let period = self.params.period().unwrap_or(1.0);
                let u = PI * d / period;
                let s = u.sin();
                grad[0] = k;
                grad[1] = k * 4.0 * s * s / (ls * ls);
                grad[2] = k * 2.0 * (2.0 * u).sin() * u / (ls * ls);
                k
            }
            LeafKind::Matern => {
                let r = d / ls;
                let k = var * matern_shape(self.params.smoothness, r);
                grad[0] = k;
                grad[1] = var
                    * match self.params.smoothness {
                        Smoothness::Half => r * (-r).exp(),
                        Smoothness::ThreeHalves => 3.0 * r * r * (-SQRT_3 * r).exp(),
                        Smoothness::FiveHalves => {
                            5.0 / 3.0 * r * r * (1.0 + SQRT_5 * r) * (-SQRT_5 * r).exp()
                        }
                    };
                k
            }
        }
    }
}

/// A composition tree of kernel leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "KernelSpec", try_from = "KernelSpec")]
pub enum KernelExpr {
    Leaf(Leaf),
    Sum(Vec<KernelExpr>),
    Product(Vec<KernelExpr>),
}

impl KernelExpr {
    pub fn leaf(kind: LeafKind, params: KernelParams, dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidParameter("kernel leaf needs at least one active dim".into()));
        }
        if kind == LeafKind::Periodic && params.log_period.is_none() {
            return Err(Error::InvalidParameter("periodic kernel needs a period".into()));
        }
        let mut params = params;
        if kind != LeafKind::Periodic {
            params.log_period = None;
        }
        Ok(KernelExpr::Leaf(Leaf { kind, params, dims }))
    }

    pub fn squared_exponential(variance: f64, lengthscale: f64, dims: Vec<usize>) -> Result<Self> {
        Self::leaf(LeafKind::SquaredExponential, KernelParams::new(variance, lengthscale)?, dims)
    }

    pub fn periodic(variance: f64, lengthscale: f64, period: f64, dims: Vec<usize>) -> Result<Self> {
        let params = KernelParams::new(variance, lengthscale)?.with_period(period)?;
        Self::leaf(LeafKind::Periodic, params, dims)
    }

    pub fn matern(variance: f64, lengthscale: f64, nu: Smoothness, dims: Vec<usize>) -> Result<Self> {
        let params = KernelParams::new(variance, lengthscale)?.with_smoothness(nu);
        Self::leaf(LeafKind::Matern, params, dims)
    }

    pub fn sum(children: Vec<KernelExpr>) -> Result<Self> {
        if children.is_empty() {
            return Err(Error::InvalidParameter("sum needs at least one child".into()));
        }
        Ok(KernelExpr::Sum(children))
    }

    pub fn product(children: Vec<KernelExpr>) -> Result<Self> {
        if children.is_empty() {
            return Err(Error::InvalidParameter("product needs at least one child".into()));
        }
        Ok(KernelExpr::Product(children))
    }

    /// Leaves in parameter order.
    pub fn leaves(&self) -> Vec<&Leaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Leaf>) {
        match self {
            KernelExpr::Leaf(l) => out.push(l),
            KernelExpr::Sum(c) | KernelExpr::Product(c) => {
                c.iter().for_each(|e| e.collect_leaves(out))
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.leaves().iter().map(|l| l.n_params()).sum()
    }

    pub fn log_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in self.leaves() {
            out.push(l.params.log_variance);
            out.push(l.params.log_lengthscale);
            if let Some(p) = l.params.log_period {
                out.push(p);
            }
        }
        out
    }

    /// Copy of this expression with its parameters replaced by `theta`.
    pub fn with_log_params(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.n_params() {
            return Err(Error::LengthMismatch { left: theta.len(), right: self.n_params() });
        }
        if let Some(i) = theta.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter(format!("log parameter {i} is not finite")));
        }
        let mut out = self.clone();
        let mut k = 0;
        out.assign_params(theta, &mut k);
        Ok(out)
    }

    fn assign_params(&mut self, theta: &[f64], k: &mut usize) {
        match self {
            KernelExpr::Leaf(leaf) => {
                leaf.params.log_variance = theta[*k];
                leaf.params.log_lengthscale = theta[*k + 1];
                *k += 2;
                if leaf.kind == LeafKind::Periodic {
                    leaf.params.log_period = Some(theta[*k]);
                    *k += 1;
                }
            }
            KernelExpr::Sum(c) | KernelExpr::Product(c) => {
                c.iter_mut().for_each(|e| e.assign_params(theta, k))
            }
        }
    }

    /// Largest feature index any leaf reads, plus one.
    pub fn required_dim(&self) -> usize {
        self.leaves()
            .iter()
            .flat_map(|l| l.dims.iter().copied())
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        let need = self.required_dim();
        if need > dim {
            Err(Error::DimensionMismatch { expected: need, found: dim })
        } else {
            Ok(())
        }
    }

    /// k(x, x′) on full feature rows.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
        }
        self.check_dim(x.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelExpr::Leaf(l) => l.eval_distance(l.distance(x, y)),
            KernelExpr::Sum(c) => c.iter().map(|e| e.eval_unchecked(x, y)).sum(),
            KernelExpr::Product(c) => c.iter().map(|e| e.eval_unchecked(x, y)).product(),
        }
    }

    /// k(x, x′) together with ∂k/∂θ for every log parameter, written into
    /// `grad` (length [`n_params`](Self::n_params)).
    pub fn eval_grad(&self, x: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            KernelExpr::Leaf(l) => l.eval_grad(l.distance(x, y), grad),
            KernelExpr::Sum(c) => {
                let mut off = 0;
                let mut total = 0.0;
                for e in c {
                    let m = e.n_params();
                    total += e.eval_grad(x, y, &mut grad[off..off + m]);
                    off += m;
                }
                total
            }
            KernelExpr::Product(c) => {
                let mut values = Vec::with_capacity(c.len());
                let mut ranges = Vec::with_capacity(c.len());
                let mut off = 0;
                for e in c {
                    let m = e.n_params();
                    values.push(e.eval_grad(x, y, &mut grad[off..off + m]));
                    ranges.push(off..off + m);
                    off += m;
                }
                for (j, r) in ranges.into_iter().enumerate() {
                    let others: f64 =
                        values.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, v)| v).product();
                    grad[r].iter_mut().for_each(|g| *g *= others);
                }
                values.iter().product()
            }
        }
    }

    /// Prior variance k(x, x), the same for every x.
    pub fn prior_variance(&self) -> f64 {
        match self {
            KernelExpr::Leaf(l) => l.params.variance(),
            KernelExpr::Sum(c) => c.iter().map(|e| e.prior_variance()).sum(),
            KernelExpr::Product(c) => c.iter().map(|e| e.prior_variance()).product(),
        }
    }
}

/// Cross-covariance between two row sets.
pub fn gram(expr: &KernelExpr, xa: &[Vec<f64>], xb: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    check_rows(expr, xa)?;
    check_rows(expr, xb)?;
    if let (Some(a), Some(b)) = (xa.first(), xb.first()) {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
        }
    }
    Ok(DMatrix::from_fn(xa.len(), xb.len(), |i, j| expr.eval_unchecked(&xa[i], &xb[j])))
}

/// Symmetric Gram matrix of one row set; only the upper triangle is evaluated.
pub fn gram_symmetric(expr: &KernelExpr, x: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    check_rows(expr, x)?;
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = expr.eval_unchecked(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Gram matrix plus one derivative matrix per log parameter.
pub fn gram_with_gradients(
    expr: &KernelExpr,
    x: &[Vec<f64>],
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    check_rows(expr, x)?;
    let n = x.len();
    let p = expr.n_params();
    let mut k = DMatrix::zeros(n, n);
    let mut dk = vec![DMatrix::zeros(n, n); p];
    let mut g = vec![0.0; p];
    for i in 0..n {
        for j in i..n {
            let v = expr.eval_grad(&x[i], &x[j], &mut g);
            k[(i, j)] = v;
            k[(j, i)] = v;
            for (m, gv) in dk.iter_mut().zip(&g) {
                m[(i, j)] = *gv;
                m[(j, i)] = *gv;
            }
        }
    }
    Ok((k, dk))
}

fn check_rows(expr: &KernelExpr, rows: &[Vec<f64>]) -> Result<()> {
    let need = expr.required_dim();
    let Some(first) = rows.first() else { return Ok(()) };
    let d = first.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: bad.len() });
    }
    if need > d {
        return Err(Error::DimensionMismatch { expected: need, found: d });
    }
    Ok(())
}

impl fmt::Display for KernelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelExpr::Leaf(l) => {
                write!(
                    f,
                    "{}(dims={:?}, variance={:.4}, lengthscale={:.4}",
                    l.kind.name(),
                    l.dims,
                    l.params.variance(),
                    l.params.lengthscale()
                )?;
                if let Some(p) = l.params.period() {
                    write!(f, ", period={p:.4}")?;
                }
                if l.kind == LeafKind::Matern {
                    write!(f, ", nu={}", l.params.smoothness.nu())?;
                }
                write!(f, ")")
            }
            KernelExpr::Sum(c) | KernelExpr::Product(c) => {
                let op = if matches!(self, KernelExpr::Sum(_)) { " + " } else { " * " };
                write!(f, "(")?;
                for (i, e) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Structured text form: a leaf is an object with `kind`, `dims`,
/// `variance`, `lengthscale` and optionally `period` / `nu`; compositions
/// are `{"sum": [...]}` or `{"product": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelSpec {
    Sum {
        sum: Vec<KernelSpec>,
    },
    Product {
        product: Vec<KernelSpec>,
    },
    Leaf {
        kind: String,
        dims: Vec<usize>,
        variance: f64,
        lengthscale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<f64>,
    },
}

impl From<KernelExpr> for KernelSpec {
    fn from(e: KernelExpr) -> Self {
        match e {
            KernelExpr::Leaf(l) => KernelSpec::Leaf {
                kind: l.kind.name().into(),
                dims: l.dims,
                variance: l.params.variance(),
                lengthscale: l.params.lengthscale(),
                period: l.params.period(),
                nu: (l.kind == LeafKind::Matern).then(|| l.params.smoothness.nu()),
            },
            KernelExpr::Sum(c) => KernelSpec::Sum { sum: c.into_iter().map(Into::into).collect() },
            KernelExpr::Product(c) => {
                KernelSpec::Product { product: c.into_iter().map(Into::into).collect() }
            }
        }
    }
}

impl TryFrom<KernelSpec> for KernelExpr {
    type Error = Error;

    fn try_from(s: KernelSpec) -> Result<Self> {
        match s {
            KernelSpec::Sum { sum } => {
                KernelExpr::sum(sum.into_iter().map(TryInto::try_into).collect::<Result<_>>()?)
            }
            KernelSpec::Product { product } => KernelExpr::product(
                product.into_iter().map(TryInto::try_into).collect::<Result<_>>()?,
            ),
            KernelSpec::Leaf { kind, dims, variance, lengthscale, period, nu } => {
                let base = KernelParams::new(variance, lengthscale)?;
                match kind.as_str() {
                    "se" | "rbf" => KernelExpr::leaf(LeafKind::SquaredExponential, base, dims),
                    "periodic" => {
                        let p = period.ok_or_else(|| {
                            Error::InvalidParameter("periodic leaf needs \"period\"".into())
                        })?;
                        KernelExpr::leaf(LeafKind::Periodic, base.with_period(p)?, dims)
                    }
                    "matern" => {
                        let nu = match nu {
                            Some(v) => Smoothness::from_nu(v)?,
                            None => Smoothness::default(),
                        };
                        KernelExpr::leaf(LeafKind::Matern, base.with_smoothness(nu), dims)
                    }
                    other => Err(Error::InvalidParameter(format!("unknown kernel kind {other:?}"))),
                }
            }
        }
    }
}
