//! Measurement integrity verification for transformer current signals.
//!
//! A low-rate current measurement is tracked by an adaptive extended Kalman
//! filter built on a parametric model of the transformer current. Residuals
//! are normalized with windowed statistics and tested against a threshold
//! derived from a false-alarm probability. Samples that pass are used to
//! reconstruct the current at a higher rate for downstream solvers.

pub mod aekf;
pub mod app;
pub mod config;
pub mod io;
pub mod server;
pub mod error;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod validity;
pub mod interp;
pub mod pipeline;
pub mod synth;
pub mod verify;

pub use aekf::{Aekf, FilterConfig, FilterState, FilterTuning, StepOutput};
pub use error::{Error, Result};
pub use linalg::CovMatrix;
pub use model::{CoefficientVector, ModelConfig, Polynomial, StateVector, Variant};
pub use noise::ResidualWindow;
pub use validity::{Flag, ValidityConfig};
pub use pipeline::{FlagPolicy, OutputRecord, PipelineConfig, ProcessingUnit, Quality, SampleSummary, Verdict};
