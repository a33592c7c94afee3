//! Kumaraswamy autoregressive moving average (KARMA) models for time series
//! on a bounded interval `(a, b)`.
//!
//! The conditional median of each observation follows an ARMA-type
//! recursion through a link function, and observations are Kumaraswamy
//! distributed around it. The crate covers the distribution itself,
//! conditional maximum likelihood with analytic score and Fisher
//! information, residual diagnostics, forecasting and a Monte Carlo study
//! harness.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod forecast;
pub mod inference;
pub mod kuma;
pub mod link;
pub mod mc;
pub mod model;
pub mod optim;
pub mod quadrature;
pub mod special;

pub use diagnostics::{ljung_box, DiagnosticsReport};
pub use error::{KarmaError, Result};
pub use estimation::{confidence_intervals, fit, wald_z, FitOptions, FitResult};
pub use forecast::{forecast, holdout_metrics, ForecastResult};
pub use kuma::{delta_from_mu, Bounds, KumaDist};
pub use link::LinkFunction;
pub use mc::{run_study, McConfig, McReport};
pub use model::{filter, simulate, FilterOutput, KarmaSpec, ParamVector, SeriesData};
