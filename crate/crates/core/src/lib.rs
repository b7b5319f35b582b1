//! CKLS short-rate model tools.
//!
//! ```text
//! d lambda = (a - b lambda) dt + sigma lambda^k dW,   1/2 <= k < 1
//! ```
//!
//! A power transform and a Girsanov measure change turn the model into a
//! square-root (CIR) diffusion, whose square root is an Ornstein-Uhlenbeck
//! process. The crate provides the transform, all closed-form laws under the
//! new measure, path simulation under both measures, the stochastic
//! exponential and its Monte-Carlo checks, and a Feller boundary engine that
//! decides whether the measure change is a true martingale.

pub mod analytic;
pub mod error;
pub mod feller;
pub mod girsanov;
pub mod params;
pub mod quad;
pub mod simulate;
pub mod special;
pub mod stats;
pub mod transform;

pub use error::{Error, Result};
pub use params::{CirParams, CklsParams, OuParams, RawParams};
pub use transform::TransformSpec;
