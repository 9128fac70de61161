#![no_std]
//! Conditional autoencoder factor model with Kolmogorov-Arnold beta networks.
//!
//! Asset excess returns are modelled as `r_t = beta(Z_{t-1}) f_t + eps_t`. The
//! exposures `beta(.)` come from a network over lagged characteristics (a KAN
//! with B-spline edges, a ReLU MLP baseline, or a purely linear map), and the
//! factor returns come from a bias-free linear layer applied to the ridge
//! regression of the cross-section on its characteristics. Both networks are
//! trained jointly on the per-month mean squared reconstruction error.
//!
//! The crate is `no_std` + `alloc`: everything here is pure computation. File
//! formats, the command-line interface and other IO live in the `kanfactor`
//! companion crate.

extern crate alloc;

pub mod backtest;
pub mod data;
mod error;
pub mod factor_model;
pub mod linalg;
mod math;
pub mod nets;
pub mod spline;

pub use error::{Error, Result};
pub use factor_model::{ConditionalAutoencoder, FactorNetwork, SlicePrediction};
pub use linalg::{Matrix, Vector};
pub use nets::{BetaNetwork, GradientSet, NetKind, Parameters};
pub use spline::{SplineFunction, SplineGrid};
