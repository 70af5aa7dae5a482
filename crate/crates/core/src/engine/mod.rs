//! Noise generation and path integration for the state equation
//! `dx = b dt + sigma1 (dt)^a + sigma dB + int G Ñ(dt, dy)` coupled to a
//! pointwise VI for the control.

mod coeffs;
mod grid;
mod noise;
mod path;
mod sanity;

use thiserror::Error;

use crate::solver::SolveError;

pub use coeffs::{compensator_integral, CoefficientSet, JumpField, Moduli, StateField};
pub use grid::{frac_weights, TimeGrid};
pub use noise::{gen_noise, path_seed, JumpAtom, JumpEvent, JumpMeasure, NoiseBundle};
pub use path::{integrate_path, PathSolution};
pub use sanity::{
    doob_bound_check, ito_isometry_check, jump_martingale_check, DoobCheck, IsometryCheck,
    MartingaleCheck,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("invalid jump measure: {0}")]
    Measure(String),
    #[error("invalid coefficients: {0}")]
    Coefficients(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("VI solve failed at step {step}: {source}")]
    Vi { step: usize, source: SolveError },
    #[error("state became non-finite at step {step}")]
    NonFinite { step: usize },
}
