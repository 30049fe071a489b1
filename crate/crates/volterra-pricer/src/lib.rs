//! Pricing and calibration engine for a hybrid equity / interest-rate model in
//! which both the spot volatility and the short rate are Gaussian Volterra
//! processes,
//!
//! ```text
//! r_t  = r_0(t) + ∫_0^t G_r(t,s) κ_r r_s ds + ∫_0^t G_r(t,s) η_r dW_r(s),
//! ν_t  = g_0(t) + ∫_0^t G_ν(t,s) κ_ν ν_s ds + ∫_0^t G_ν(t,s) η_ν dW_ν(s),
//! ```
//!
//! with kernels `G` taken from the constant / exponential / fractional /
//! shifted-fractional / completely-monotone-mixture families.
//!
//! The crate provides:
//! * analytic bond, zero-coupon-option and cap/floor pricing (`rates`),
//! * the semi-explicit characteristic function of the log-forward index via
//!   operator discretization and Fredholm determinants (`charfn`),
//! * Lewis-formula vanilla pricing with Gauss-Laguerre quadrature (`fourier`),
//! * a multi-factor Riccati ODE route and a Stein-Stein closed form
//!   (`riccati`),
//! * Euler Monte Carlo under the T-forward measure (`montecarlo`),
//! * two-stage market calibration (`calibration`),
//! * strict CSV / TOML market-data and config ingestion (`market_io`).

pub mod calibration;
pub mod charfn;
pub mod error;
pub mod fourier;
pub mod kernels;
pub mod linalg;
pub mod market_io;
pub mod montecarlo;
pub mod rates;
pub mod riccati;
pub mod specialfn;

pub use error::{Error, Result};
