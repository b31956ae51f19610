//! Gaussian process regression for spatio-temporal damage curves with
//! shape constraints expressed through virtual observations.
//!
//! The model is a zero-mean GP with a squared-exponential ARD kernel over
//! colourimetric, spatial, and temporal inputs. Because differentiation is a
//! linear operator, the function and its time derivative are jointly
//! Gaussian, which lets three kinds of prior knowledge enter as data:
//!
//! * zero-start: near-noiseless virtual observations `f(x, 0) = 0`,
//! * monotonicity: probit observations of the sign of `df/dt` at chosen times,
//! * saturation: near-noiseless virtual observations `df/dt = 0` at the end.
//!
//! [`kernel`] builds joint covariance matrices for values and derivatives,
//! [`model`] evaluates the unnormalized posterior, [`inference`] samples it
//! with a Metropolis-within-Gibbs scheme and produces predictions,
//! [`data`] handles ingestion, standardization, and synthetic data, and
//! [`evaluation`] implements the three cross-validation schemes.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod kernel;
pub mod math;
pub mod model;

pub use error::{Error, Result};
