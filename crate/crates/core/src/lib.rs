//! Gaussian process surrogates for inputs that mix quantitative variables
//! with qualitative factors.
//!
//! Each factor level is mapped to a point in a low-dimensional latent space
//! and the correlation is a Gaussian kernel over the quantitative inputs and
//! those latent points. Unrestrictive, multiplicative and additive
//! unrestrictive covariances are provided as baselines, together with
//! benchmark functions, maximin Latin hypercube designs and a replicated
//! accuracy harness.

pub mod covariance;
pub mod doe;
pub mod domain;
pub mod error;
pub mod fit;
pub mod functions;
pub mod harness;
pub mod io;
pub mod predict;
pub mod seeds;

pub use covariance::{JitterPolicy, KernelConfig, KernelFamily, KernelParams, LatentDim, LatentMap, ParamBounds};
pub use doe::{maximin_lhd, training_design, uniform_test_set, Design, LhdOptions};
pub use domain::{Dataset, InputSchema, MixedPoint, QualFactor, QuantInput, Violation};
pub use error::{Error, Result};
pub use fit::{fit, fit_from_starts, FitDiagnostics, FitOptions, FittedModel};
pub use functions::BenchmarkProblem;
pub use harness::{rrmse, run_experiment, ExperimentConfig, ExperimentPlan, ModelKind, ResultRecord};
pub use predict::Prediction;
