//! Black-box PAC robustness verification for stochastic trajectory predictors.
//!
//! The pipeline samples perturbed scenes uniformly from an L∞ ball around an
//! observed scene, evaluates the prediction-error random variable on each,
//! fits an affine surrogate of that error with a minimax (Chebyshev) linear
//! program, and reads robustness verdicts, adversaries and sensitivity maps
//! off the surrogate.
//!
//! Module map:
//!
//! - [`traj`]: trajectories, scenes, the flat input layout and ADE / ADE_K.
//! - [`dataset`]: ETH/UCY- and SDD-style text files and scene extraction.
//! - [`predictor`]: the black-box predictor contract, built-in synthetic
//!   predictors and the external process adapter.
//! - [`sampler`]: uniform ball sampling and Δ evaluation.
//! - [`learner`]: sample budgets, least squares, the Chebyshev LP and the
//!   two-phase surrogate learner.
//! - [`analyzer`]: box maximisation, verdicts, linear and PGD adversaries.
//! - [`interpret`]: sensitivity maps and their SVG/CSV rendering.

pub mod analyzer;
pub mod dataset;
pub mod error;
pub mod interpret;
pub mod learner;
pub mod par;
pub mod predictor;
pub mod rng;
pub mod sampler;
pub mod traj;

pub use error::{Error, Result};
