//! Bayesian record linkage of two files, optionally using variables that
//! appear in only one of them.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

pub mod comparison;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod regression;
pub mod sampler;
pub mod scalar;
pub mod simulation;
pub mod special;

pub use comparison::{
    build_comparison_table, BlockIndex, ComparisonTable, FieldKind, FieldSpec, FieldValue,
    RecordFile, Ymd,
};
pub use error::{Error, PairClass, Result};
pub use model::LinkageState;
pub use regression::RegressionVariant;
pub use sampler::{ChainConfig, InitialState, Kernel, Method, MoveStats, DEFAULT_WARMUP};
pub use scalar::Scalar;

pub type MixtureParams = model::MixtureParams<f64>;
pub type PriorConfig = model::PriorConfig<f64>;
pub type RegressionParams = regression::RegressionParams<f64>;
pub type RegressionData = regression::RegressionData<f64>;
pub type PosteriorSample = sampler::PosteriorSample<f64>;
pub type ChainOutput = sampler::ChainOutput<f64>;
pub type ChainData<'a> = sampler::ChainData<'a, f64>;
pub type MiEstimate = inference::MiEstimate<f64>;
pub type CorrelationEstimate = inference::CorrelationEstimate<f64>;
pub type OlsEstimate = inference::OlsEstimate<f64>;
pub type TraceSeries = diagnostics::TraceSeries<f64>;
