//! Conformal uncertainty sets for day-ahead renewable forecasts, and a
//! chance-constrained data-center scheduler robustified against them.
//!
//! The crate is organized around a day-ahead pipeline:
//!
//! 1. [`dataio`] generates (or ingests) paired covariate / 24-hour PV data,
//!    market series, and workload traces.
//! 2. [`quantile`] trains pinball-loss quantile regressors (linear or MLP)
//!    that map covariates to per-hour lower/upper quantile predictions.
//! 3. [`conformal`] calibrates those predictions into hyper-rectangular
//!    prediction intervals with finite-sample coverage guarantees, in both
//!    average-marginal and per-dimension (individual) multivariate variants.
//! 4. [`dcmodel`] encodes data-center physics (server power, flexible and
//!    inflexible workloads, QoS, battery storage, carbon accounting) as a
//!    linear program over a robust lower bound on PV generation.
//! 5. [`lp`] solves that program with a self-contained two-phase simplex.
//! 6. [`scheduler`] glues 2-5 together per method (CQR, point-CP, static
//!    box) and [`pipeline`] runs the full method-comparison benchmark.
//!
//! Monte-Carlo style loops (coverage trials, benchmark days) run on rayon
//! when the `parallel` feature is enabled (default) and fall back to
//! sequential iteration otherwise; results are identical either way.

pub mod conformal;
pub mod data;
pub mod dataio;
pub mod dcmodel;
pub mod exec;
pub mod lp;
pub mod pipeline;
pub mod quantile;
pub mod scheduler;

pub use exec::Execution;
