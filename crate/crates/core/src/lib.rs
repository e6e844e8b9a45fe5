//! Learning-to-rank for recommendation explanations.
//!
//! Factorization rankers (BPER, BPER+, CD, PITF and their joint
//! item-and-explanation variants), neighborhood and random baselines,
//! top-N evaluation and an experiment harness.

pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod embfile;
pub mod eval;
pub mod harness;
pub mod matrix;
pub mod model;
pub mod params;
pub mod scalar;
pub mod synth;
pub mod training;

pub use scalar::Scalar;

pub type MatrixF64 = matrix::Matrix<f64>;
pub type MatrixF32 = matrix::Matrix<f32>;
pub type FactorParamsF64 = params::FactorParams<f64>;
pub type FactorParamsF32 = params::FactorParams<f32>;
pub type CdParamsF64 = params::CdParams<f64>;
pub type CdParamsF32 = params::CdParams<f32>;
pub type EmbeddingTableF64 = params::EmbeddingTable<f64>;
pub type EmbeddingTableF32 = params::EmbeddingTable<f32>;
