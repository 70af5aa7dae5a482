//! The spatial price equilibrium market and the fractional differential
//! game, each reduced to a coupled state/VI system, plus their verifiers.

mod complementarity;
mod game;
mod spep;

use std::fmt;

use thiserror::Error;

use crate::engine::{CoefficientSet, EngineError, JumpMeasure, TimeGrid};
use crate::sets::SetError;
use crate::solver::{SolveError, VIProblem};

pub use complementarity::{complementarity_check, cone_generators, Complementarity};
pub use game::{
    build_game, verify_nash, Agent, AgentDynamics, AgentGradient, GameSpec, NashReport,
    QuadraticGame,
};
pub use spep::{
    build_spep, check_spep_equilibrium, Branch, MarketDynamics, SpatialMarketSpec, SpepFormulation,
    SpepReport, SpepViolation,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AppError {
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("stacked mapping is not strongly monotone with modulus {c_bar}: ratio {ratio} at u1 = {u1:?}, u2 = {u2:?}")]
    NotMonotone {
        c_bar: f64,
        ratio: f64,
        u1: Vec<f64>,
        u2: Vec<f64>,
    },
    #[error("cost of agent {agent} is not convex in its own strategy near u = {u:?}")]
    NotConvex { agent: usize, u: Vec<f64> },
    #[error("the set is not a cone of the catalog")]
    NotACone,
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Everything `integrate_path` needs, with default grid settings.
#[derive(Clone)]
pub struct CoupledSystem {
    pub coeffs: CoefficientSet,
    pub vi: VIProblem,
    pub jumps: JumpMeasure,
    pub p0: Vec<f64>,
    pub grid: TimeGrid,
}

impl fmt::Debug for CoupledSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoupledSystem")
            .field("coeffs", &self.coeffs)
            .field("vi", &self.vi)
            .field("p0", &self.p0)
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

pub(crate) fn default_grid() -> TimeGrid {
    TimeGrid::new(1.0, 256, 0.75).expect("valid default grid")
}
