//! Simulation and solution of stochastic fractional differential variational
//! inequalities with Lévy jumps.
//!
//! A state process `x` follows a stochastic equation with drift, Brownian,
//! fractional `(dt)^a` and compensated jump terms, while the control `u(t)`
//! solves `VI(K, F(t, x(t), .))` at every instant.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod applications;
pub mod engine;
pub mod linalg;
pub mod models;
pub mod sets;
pub mod solver;
pub mod stability;

pub use engine::{
    gen_noise, integrate_path, path_seed, CoefficientSet, EngineError, JumpAtom, JumpMeasure,
    Moduli, NoiseBundle, PathSolution, TimeGrid,
};
pub use sets::{mosco_probe, ConvexSet, ParamSequence, SetDescriptor, SetError, SetFamily};
pub use solver::{
    optimal_rho, solve_vi, InitialGuess, SolveError, SolverConfig, VIField, VIProblem, VISolution,
};
