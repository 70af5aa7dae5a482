//! Projection fixed-point solver for the pointwise variational inequality
//! `find u in K with <F(t, x, u), v - u> >= 0 for all v in K`.
//!
//! For `F` strongly monotone in `u` with modulus `C` and Lipschitz with
//! modulus `L`, the map `u -> P_K(u - rho F(t, x, u))` is a contraction with
//! factor `sqrt(1 - 2 rho C + rho^2 L^2)` whenever `0 < rho < 2C / L^2`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{all_finite, axpy, dist, dot, norm, norm_sq, sub};
use crate::sets::{ConvexSet, SetError};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// `F(t, x, u)`.
pub type VIField = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("inconsistent constants: {0}")]
    Constants(String),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("no convergence after {iters} iterations, last step {residual:e}")]
    BudgetExhausted { iters: usize, residual: f64 },
    #[error("non-finite value of F at t = {t}")]
    NonFinite { t: f64 },
    #[error("F returned {found} components, expected {expected}")]
    FieldDimension { expected: usize, found: usize },
    #[error(transparent)]
    Set(#[from] SetError),
}

/// A strongly monotone, Lipschitz VI over a closed convex set.
#[derive(Clone)]
pub struct VIProblem {
    pub set: ConvexSet,
    pub field: VIField,
    /// Strong monotonicity modulus in `u` (squared form).
    pub c_bar: f64,
    /// Joint Lipschitz modulus in `(x, u)`.
    pub l_f: f64,
}

impl fmt::Debug for VIProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VIProblem")
            .field("set", &self.set)
            .field("c_bar", &self.c_bar)
            .field("l_f", &self.l_f)
            .finish_non_exhaustive()
    }
}

impl VIProblem {
    pub fn new(set: ConvexSet, field: VIField, c_bar: f64, l_f: f64) -> Result<Self, SolveError> {
        check_moduli(c_bar, l_f)?;
        Ok(VIProblem {
            set,
            field,
            c_bar,
            l_f,
        })
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    /// Same field and constants over another set.
    pub fn with_set(&self, set: ConvexSet) -> VIProblem {
        VIProblem {
            set,
            ..self.clone()
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>, SolveError> {
        let f = (self.field)(t, x, u);
        if f.len() != self.dim() {
            return Err(SolveError::FieldDimension {
                expected: self.dim(),
                found: f.len(),
            });
        }
        if !all_finite(&f) {
            return Err(SolveError::NonFinite { t });
        }
        Ok(f)
    }
}

fn check_moduli(c_bar: f64, l_f: f64) -> Result<(), SolveError> {
    if !(c_bar.is_finite() && l_f.is_finite() && c_bar > 0.0 && l_f > 0.0) {
        return Err(SolveError::Constants(format!(
            "need positive finite moduli, got C = {c_bar}, L = {l_f}"
        )));
    }
    if c_bar > l_f {
        return Err(SolveError::Constants(format!(
            "monotonicity modulus {c_bar} exceeds Lipschitz modulus {l_f}"
        )));
    }
    Ok(())
}

/// `sqrt(1 - 2 rho C + rho^2 L^2)`.
pub fn contraction_factor(rho: f64, c_bar: f64, l_f: f64) -> Result<f64, SolveError> {
    let radicand = 1.0 - 2.0 * rho * c_bar + rho * rho * l_f * l_f;
    if radicand < 0.0 {
        return Err(SolveError::Constants(format!(
            "negative radicand {radicand} for rho = {rho}, C = {c_bar}, L = {l_f}"
        )));
    }
    Ok(radicand.sqrt())
}

/// `C / L^2`, the minimizer of [`contraction_factor`] over `rho`.
pub fn optimal_rho(c_bar: f64, l_f: f64) -> Result<f64, SolveError> {
    check_moduli(c_bar, l_f)?;
    Ok(c_bar / (l_f * l_f))
}

/// Upper end of the open interval of admissible step sizes.
pub fn rho_upper(c_bar: f64, l_f: f64) -> f64 {
    2.0 * c_bar / (l_f * l_f)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// Projection of the origin onto the set.
    Origin,
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rho: f64,
    /// Threshold on the distance between successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitialGuess,
}

impl SolverConfig {
    /// Optimal step, default tolerance and budget.
    pub fn for_problem(problem: &VIProblem) -> Result<Self, SolveError> {
        Ok(SolverConfig {
            rho: optimal_rho(problem.c_bar, problem.l_f)?,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            init: InitialGuess::Origin,
        })
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_init(mut self, init: InitialGuess) -> Self {
        self.init = init;
        self
    }

    pub fn validate(&self, problem: &VIProblem) -> Result<(), SolveError> {
        let upper = rho_upper(problem.c_bar, problem.l_f);
        if !(self.rho > 0.0 && self.rho < upper) {
            return Err(SolveError::Config(format!(
                "rho = {} outside the open interval (0, {upper})",
                self.rho
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SolveError::Config("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(SolveError::Config("max_iter must be at least 1".into()));
        }
        if let InitialGuess::Point(p) = &self.init {
            if p.len() != problem.dim() {
                return Err(SolveError::Config(format!(
                    "initial point has dimension {}, set has {}",
                    p.len(),
                    problem.dim()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VISolution {
    pub u: Vec<f64>,
    /// Steps taken before the stopping test fired; the confirming step is
    /// not counted, so a solution found by the first update reports 1.
    pub iters: usize,
    /// Distance between the last two iterates.
    pub final_residual: f64,
}

/// Solves the VI at `(t, x)` from `cfg.init`.
pub fn solve_vi(
    problem: &VIProblem,
    cfg: &SolverConfig,
    t: f64,
    x: &[f64],
) -> Result<VISolution, SolveError> {
    cfg.validate(problem)?;
    let start = match &cfg.init {
        InitialGuess::Origin => vec![0.0; problem.dim()],
        InitialGuess::Point(p) => p.clone(),
    };
    iterate(problem, cfg, t, x, &start, None)
}

/// Solves the VI at `(t, x)` starting from `warm`, ignoring `cfg.init`.
pub fn solve_vi_from(
    problem: &VIProblem,
    cfg: &SolverConfig,
    t: f64,
    x: &[f64],
    warm: &[f64],
) -> Result<VISolution, SolveError> {
    cfg.validate(problem)?;
    if warm.len() != problem.dim() {
        return Err(SolveError::Config("warm start has wrong dimension".into()));
    }
    iterate(problem, cfg, t, x, warm, None)
}

/// Like [`solve_vi`] but also returns every successive-iterate distance.
pub fn solve_vi_traced(
    problem: &VIProblem,
    cfg: &SolverConfig,
    t: f64,
    x: &[f64],
) -> Result<(VISolution, Vec<f64>), SolveError> {
    cfg.validate(problem)?;
    let start = match &cfg.init {
        InitialGuess::Origin => vec![0.0; problem.dim()],
        InitialGuess::Point(p) => p.clone(),
    };
    let mut trace = Vec::new();
    let sol = iterate(problem, cfg, t, x, &start, Some(&mut trace))?;
    Ok((sol, trace))
}

fn iterate(
    problem: &VIProblem,
    cfg: &SolverConfig,
    t: f64,
    x: &[f64],
    start: &[f64],
    mut trace: Option<&mut Vec<f64>>,
) -> Result<VISolution, SolveError> {
    let mut u = problem.set.project(start)?;
    let mut step = f64::INFINITY;
    for k in 1..=cfg.max_iter {
        let mut trial = u.clone();
        axpy(-cfg.rho, &problem.eval(t, x, &u)?, &mut trial);
        let next = problem.set.project(&trial)?;
        step = dist(&next, &u);
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(step);
        }
        u = next;
        if step <= cfg.tol {
            return Ok(VISolution {
                u,
                iters: k - 1,
                final_residual: step,
            });
        }
    }
    Err(SolveError::BudgetExhausted {
        iters: cfg.max_iter,
        residual: step,
    })
}

/// Natural-map residual `|u - P_K(u - rho F(t, x, u))|`.
pub fn vi_residual(
    problem: &VIProblem,
    u: &[f64],
    rho: f64,
    t: f64,
    x: &[f64],
) -> Result<f64, SolveError> {
    let mut trial = u.to_vec();
    axpy(-rho, &problem.eval(t, x, u)?, &mut trial);
    Ok(dist(u, &problem.set.project(&trial)?))
}

/// Empirical moduli of `F` from random pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEstimate {
    /// Smallest observed `<F(x,u1) - F(x,u2), u1 - u2> / |u1 - u2|^2`.
    pub c_bar_hat: f64,
    /// Largest observed `|F(x1,u1) - F(x2,u2)| / (|x1 - x2| + |u1 - u2|)`.
    pub l_f_hat: f64,
}

/// Samples `n_pairs` control pairs from `domain` and states from `x_samples`.
///
/// Sampling can only overestimate the monotonicity modulus and underestimate
/// the Lipschitz modulus, so the results are diagnostics, not certificates.
pub fn estimate_constants(
    field: &VIField,
    domain: &ConvexSet,
    x_samples: &[Vec<f64>],
    n_pairs: usize,
    seed: u64,
) -> Result<ConstantEstimate, SolveError> {
    if n_pairs == 0 {
        return Err(SolveError::Config("n_pairs must be at least 1".into()));
    }
    if x_samples.is_empty() {
        return Err(SolveError::Config("need at least one state sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c_hat = f64::INFINITY;
    let mut l_hat: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < n_pairs {
        attempts += 1;
        if attempts > 100 * n_pairs + 1000 {
            return Err(SolveError::Config(
                "could not draw distinct control pairs from the domain".into(),
            ));
        }
        let u1 = domain.sample(&mut rng)?;
        let u2 = domain.sample(&mut rng)?;
        let du = sub(&u1, &u2);
        let du_sq = norm_sq(&du);
        if du_sq == 0.0 {
            continue;
        }
        let x1 = &x_samples[rng.random_range(0..x_samples.len())];
        let x2 = &x_samples[rng.random_range(0..x_samples.len())];
        let f11 = field(0.0, x1, &u1);
        let f12 = field(0.0, x1, &u2);
        let f22 = field(0.0, x2, &u2);
        c_hat = c_hat.min(dot(&sub(&f11, &f12), &du) / du_sq);
        let denom = dist(x1, x2) + du_sq.sqrt();
        l_hat = l_hat.max(norm(&sub(&f11, &f22)) / denom);
        done += 1;
    }
    Ok(ConstantEstimate {
        c_bar_hat: c_hat,
        l_f_hat: l_hat,
    })
}
