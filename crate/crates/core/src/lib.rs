//! Sharp minimax risk brackets for noisy random linear observation models
//! `y = T(θ*) + w` with an elliptical constraint `‖θ*‖_{K_c^{-1}} ≤ ρ` and
//! error measured in `‖·‖_{K_e}`.
//!
//! The central object is the trace functional
//!
//! ```text
//! Φ(ρ) = sup { E tr(K_e^{1/2} (Ω^{-1} + Tᵀ Σ_w^{-1} T)^{-1} K_e^{1/2}) : Ω ≻ 0, tr(K_c^{-1/2} Ω K_c^{-1/2}) ≤ ρ² }
//! ```
//!
//! which upper bounds the minimax risk, while `Φ(ρ/2) ≥ Φ(ρ)/4` lower
//! bounds it. [`functional`] maximizes a sample-average version of `Φ` by
//! projected gradient ascent, [`estimator`] builds the ridge estimator
//! attached to the maximizer, and [`closed_form`] collects exact solvers for
//! the worked examples (water-filling, Dicker, Mourtada, Markov covariates,
//! covariate shift). [`experiments`] drives the simulation studies and the
//! `minimax` command line tool.

pub mod closed_form;
pub mod ensembles;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod functional;
pub mod linalg;
pub mod problem;
pub mod rng;
pub mod stats;

pub use closed_form::{SequenceProblem, Spectrum, WaterfillSolution};
pub use ensembles::{DesignMatrix, DesignSampler, GramEnsemble, KernelSpec, MarkovChainPath, ScalingFunction};
pub use error::{Error, Result};
pub use estimator::RidgeEstimator;
pub use functional::{FunctionalResult, OptimizerOptions, RiskBracket};
pub use problem::{EllipticalProblem, NoiseModel, PriorCovariance};
pub use stats::Estimate;
