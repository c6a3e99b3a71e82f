//! Gaussian process regression with a censorship-aware likelihood.
//!
//! The crate covers the numerical side of censored demand modelling:
//!
//! * [`kernels`]: squared-exponential, periodic and Matérn covariances with
//!   sum/product composition over feature subsets.
//! * [`exact`]: exact Gaussian-likelihood GP regression (the `ncgp` and
//!   `ncgp_a` models) and the linear Tobit baseline in [`tobit`].
//! * [`ep`]: expectation propagation for the censored likelihood (the `cgp`
//!   model), built from the tilted moments in [`moments`].
//! * [`sim`]: seeded censoring processes and synthetic data generators.
//! * [`hyperopt`]: type-II maximum likelihood over log-space hyperparameters.
//! * [`metrics`]: RMSE, R² and time-consecutive fold plans.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! the experiment runner live in the companion `censored-gp-cli` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod ep;
pub mod error;
pub mod exact;
pub mod hyperopt;
pub mod kernels;
mod linalg;
pub mod metrics;
pub mod moments;
pub mod normal;
pub mod sim;
pub mod tobit;

pub use data::{Dataset, Subset};
pub use ep::{ep_fit, ep_fit_warm, ep_predict, EpConfig, EpPosterior, SiteParams, SweepRecord};
pub use error::{Error, Result};
pub use exact::{fit_exact, log_marginal_gaussian, predict_exact, ExactFit};
pub use hyperopt::{optimize_type2_ml, Method, ObjectiveKind, OptimizerConfig, Type2Fit};
pub use kernels::{KernelExpr, KernelParams, LeafKind, Smoothness};
pub use metrics::{evaluate_split, make_time_folds, r2, rmse, EvalReport, FoldPlan, Split};
