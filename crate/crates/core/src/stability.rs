//! Multi-parameter stability harness: perturbed systems against the limit
//! system on common noise, plus the closed-form constants of the stability
//! estimate.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    gen_noise, integrate_path, path_seed, CoefficientSet, EngineError, JumpMeasure, Moduli,
    PathSolution, TimeGrid,
};
use crate::linalg::dist;
use crate::sets::{mosco_probe, ParamSequence, SetError, SetFamily};
use crate::solver::{contraction_factor, rho_upper, SolveError, SolverConfig, VIField, VIProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("invalid family: {0}")]
    Family(String),
    #[error("invalid request: {0}")]
    Config(String),
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("path {path} of cell (m = {m}, n = {n}) failed: {source}")]
    Path {
        m: CellIndex,
        n: CellIndex,
        path: usize,
        source: EngineError,
    },
}

/// A term of a parameter sequence, or its limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellIndex {
    Finite(usize),
    Limit,
}

impl CellIndex {
    /// `k`, or `+inf` for the limit.
    pub fn as_f64(self) -> f64 {
        match self {
            CellIndex::Finite(k) => k as f64,
            CellIndex::Limit => f64::INFINITY,
        }
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellIndex::Finite(k) => write!(f, "{k}"),
            CellIndex::Limit => f.write_str("inf"),
        }
    }
}

/// Coefficients and VI mapping of one member of the family.
#[derive(Clone)]
pub struct SystemPart {
    pub coeffs: CoefficientSet,
    pub field: VIField,
    pub c_bar: f64,
    pub l_f: f64,
}

pub type CoeffMap = Arc<dyn Fn(&[f64]) -> Result<SystemPart, StabilityError> + Send + Sync>;

/// `(lambda, mu) -> MPS(lambda, mu)` with sequences `lambda_m -> lambda`,
/// `mu_n -> mu`. Noise law and initial state are shared by all members.
#[derive(Clone)]
pub struct PerturbationFamily {
    coeffs: CoeffMap,
    lambda: ParamSequence,
    sets: SetFamily,
    jumps: JumpMeasure,
    p0: Vec<f64>,
    limit: SystemPart,
}

impl fmt::Debug for PerturbationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerturbationFamily")
            .field("lambda", &self.lambda)
            .field("sets", &self.sets)
            .field("p0", &self.p0)
            .finish_non_exhaustive()
    }
}

impl PerturbationFamily {
    pub fn new(
        coeffs: CoeffMap,
        lambda: ParamSequence,
        sets: SetFamily,
        jumps: JumpMeasure,
        p0: Vec<f64>,
    ) -> Result<Self, StabilityError> {
        let limit = coeffs(lambda.limit())?;
        let q = sets.limit_set().dim();
        if limit.coeffs.control_dim != q {
            return Err(StabilityError::Family(format!(
                "coefficients expect controls of dimension {}, sets have {q}",
                limit.coeffs.control_dim
            )));
        }
        if p0.len() != limit.coeffs.state_dim {
            return Err(StabilityError::Family(format!(
                "initial state has dimension {}, coefficients expect {}",
                p0.len(),
                limit.coeffs.state_dim
            )));
        }
        Ok(PerturbationFamily {
            coeffs,
            lambda,
            sets,
            jumps,
            p0,
            limit,
        })
    }

    pub fn sets(&self) -> &SetFamily {
        &self.sets
    }

    pub fn lambda(&self) -> &ParamSequence {
        &self.lambda
    }

    pub fn jumps(&self) -> &JumpMeasure {
        &self.jumps
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    pub fn limit_part(&self) -> &SystemPart {
        &self.limit
    }

    fn part(&self, m: CellIndex) -> Result<SystemPart, StabilityError> {
        let part = match m {
            CellIndex::Limit => return Ok(self.limit.clone()),
            CellIndex::Finite(k) => (self.coeffs)(&self.lambda.term(k))?,
        };
        let (a, b) = (&part.coeffs, &self.limit.coeffs);
        if (a.state_dim, a.control_dim, a.noise_dim) != (b.state_dim, b.control_dim, b.noise_dim) {
            return Err(StabilityError::Family(format!(
                "member m = {m} has signature ({}, {}, {}), limit has ({}, {}, {})",
                a.state_dim, a.control_dim, a.noise_dim, b.state_dim, b.control_dim, b.noise_dim
            )));
        }
        Ok(part)
    }

    /// `MPS(lambda_m, mu_n)`.
    pub fn system(
        &self,
        m: CellIndex,
        n: CellIndex,
    ) -> Result<(CoefficientSet, VIProblem), StabilityError> {
        let part = self.part(m)?;
        let set = match n {
            CellIndex::Limit => self.sets.limit_set().clone(),
            CellIndex::Finite(k) => self.sets.set_at(k)?,
        };
        let vi = VIProblem::new(set, part.field, part.c_bar, part.l_f)?;
        Ok((part.coeffs, vi))
    }
}

/// Per-path values `sum_k |a(t_k) - b(t_k)|^2 dt` for the state and control.
pub fn h_norm_samples(
    a: &[PathSolution],
    b: &[PathSolution],
    grid: &TimeGrid,
) -> Result<(Vec<f64>, Vec<f64>), StabilityError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(StabilityError::Mismatch(format!(
            "path counts {} and {} (need equal and nonzero)",
            a.len(),
            b.len()
        )));
    }
    let n = grid.steps();
    let dt = grid.dt();
    let mut ex = Vec::with_capacity(a.len());
    let mut eu = Vec::with_capacity(a.len());
    for (pa, pb) in a.iter().zip(b) {
        if pa.x.len() != n + 1 || pb.x.len() != n + 1 || pa.u.len() != n + 1 || pb.u.len() != n + 1
        {
            return Err(StabilityError::Mismatch(
                "paths do not live on the grid".into(),
            ));
        }
        if pa.seed != pb.seed {
            return Err(StabilityError::Mismatch(format!(
                "paths with seeds {} and {} are not paired",
                pa.seed, pb.seed
            )));
        }
        let sq = |u: &[Vec<f64>], v: &[Vec<f64>]| -> f64 {
            (0..n).map(|k| dist(&u[k], &v[k]).powi(2) * dt).sum()
        };
        ex.push(sq(&pa.x, &pb.x));
        eu.push(sq(&pa.u, &pb.u));
    }
    Ok((ex, eu))
}

/// Discrete `H[0, T]` distance `((1/P) sum_paths sum_k |a - b|^2 dt)^{1/2}`
/// for the state and the control.
pub fn h_norm_diff(
    a: &[PathSolution],
    b: &[PathSolution],
    grid: &TimeGrid,
) -> Result<(f64, f64), StabilityError> {
    let (ex, eu) = h_norm_samples(a, b, grid)?;
    Ok((mean(&ex).sqrt(), mean(&eu).sqrt()))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Root of the mean of `samples` and its standard error by the delta
/// method.
fn root_mean_with_stderr(samples: &[f64]) -> (f64, f64) {
    let m = mean(samples);
    let err = m.sqrt();
    let n = samples.len() as f64;
    if samples.len() < 2 || err == 0.0 {
        return (err, 0.0);
    }
    let var = samples.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (n - 1.0);
    (err, (var / n).sqrt() / (2.0 * err))
}

/// Inputs of [`theory_constants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub c_bar: f64,
    pub l_f: f64,
    pub rho: f64,
    pub alpha: f64,
    pub horizon: f64,
    pub lipschitz: Moduli,
}

/// Constants of the stability estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub m_bar: f64,
    pub n_bar: f64,
    pub m_hat: f64,
    pub n_hat: f64,
    pub z_bar: f64,
    /// `(8T L_b + 32 L_sigma + 32 L_G + 8 a^2 T^{2a-1}/(2a-1) L_sigma1)(1 + M)`.
    pub b0: f64,
    /// `Z (1 + M)`, the exponent of the final Gronwall step.
    pub d0: f64,
}

pub fn theory_constants(inp: &TheoryInputs) -> Result<BoundConstants, StabilityError> {
    let TheoryInputs {
        c_bar,
        l_f,
        rho,
        alpha,
        horizon,
        lipschitz: l,
    } = *inp;
    if !(c_bar > 0.0 && l_f > 0.0 && c_bar.is_finite() && l_f.is_finite()) {
        return Err(StabilityError::Config(
            "moduli must be positive and finite".into(),
        ));
    }
    let upper = rho_upper(c_bar, l_f);
    if !(rho > 0.0 && rho < upper) {
        return Err(StabilityError::Config(format!(
            "rho = {rho} outside the open interval (0, {upper})"
        )));
    }
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(StabilityError::Config(format!(
            "alpha = {alpha} outside (0.5, 1)"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(StabilityError::Config("horizon must be positive".into()));
    }
    let gap = 1.0 - contraction_factor(rho, c_bar, l_f)?;
    let den = gap * gap;
    let m_bar = 2.0 * rho * rho * l_f * l_f / den;
    let n_bar = 2.0 * rho * rho / den;
    let m_hat = 2.0 * rho * rho * l_f * l_f / den;
    let n_hat = 2.0 / den;
    let frac = alpha * alpha * horizon.powf(2.0 * alpha - 1.0) / (2.0 * alpha - 1.0);
    let z_bar = 4.0 * horizon * l.b + 16.0 * l.sigma + 16.0 * l.g + 4.0 * frac * l.sigma1;
    let b0 =
        (8.0 * horizon * l.b + 32.0 * l.sigma + 32.0 * l.g + 8.0 * frac * l.sigma1) * (1.0 + m_bar);
    Ok(BoundConstants {
        m_bar,
        n_bar,
        m_hat,
        n_hat,
        z_bar,
        b0,
        d0: z_bar * (1.0 + m_bar),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCell {
    pub m: CellIndex,
    pub n: CellIndex,
    pub err_x: f64,
    pub err_u: f64,
    pub stderr_x: f64,
    pub stderr_u: f64,
    /// `max(stderr_x, stderr_u)`.
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Row-major over `m_list + [inf]` by `n_list + [inf]`.
    pub cells: Vec<StabilityCell>,
    pub m_list: Vec<usize>,
    pub n_list: Vec<usize>,
    pub paths: usize,
    pub seed: u64,
    pub grid: TimeGrid,
    pub rho: f64,
    pub tol: f64,
    pub constants: BoundConstants,
}

impl StabilityReport {
    pub fn get(&self, m: CellIndex, n: CellIndex) -> Option<&StabilityCell> {
        self.cells.iter().find(|c| c.m == m && c.n == n)
    }
}

fn check_list(name: &str, list: &[usize]) -> Result<(), StabilityError> {
    if list.is_empty() {
        return Err(StabilityError::Config(format!("{name} is empty")));
    }
    if list[0] == 0 || list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StabilityError::Config(format!(
            "{name} must be strictly ascending positive indices"
        )));
    }
    Ok(())
}

/// Integrates the limit system and every `(m, n)` member on the same noise
/// per path and tabulates the discrete `H[0, T]` errors.
pub fn run_stability(
    family: &PerturbationFamily,
    m_list: &[usize],
    n_list: &[usize],
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<StabilityReport, StabilityError> {
    check_list("m_list", m_list)?;
    check_list("n_list", n_list)?;
    if paths == 0 {
        return Err(StabilityError::Config("need at least one path".into()));
    }
    let idx = |list: &[usize]| -> Vec<CellIndex> {
        list.iter()
            .map(|&k| CellIndex::Finite(k))
            .chain(std::iter::once(CellIndex::Limit))
            .collect()
    };
    let (ms, ns) = (idx(m_list), idx(n_list));
    let mut keys = Vec::new();
    let mut systems = Vec::new();
    for &m in &ms {
        for &n in &ns {
            let sys = family.system(m, n)?;
            cfg.validate(&sys.1)?;
            keys.push((m, n));
            systems.push(sys);
        }
    }
    let (limit_coeffs, limit_vi) = family.system(CellIndex::Limit, CellIndex::Limit)?;
    let l = limit_coeffs.noise_dim;
    let jm = family.jumps();
    let p0 = family.p0();

    let per_path: Vec<Vec<(f64, f64)>> = (0..paths)
        .into_par_iter()
        .map(|path| {
            let noise = gen_noise(grid, l, jm, path_seed(seed, path as u64));
            let base = integrate_path(&limit_coeffs, jm, &limit_vi, cfg, grid, &noise, p0)
                .map_err(|source| StabilityError::Path {
                    m: CellIndex::Limit,
                    n: CellIndex::Limit,
                    path,
                    source,
                })?;
            let base = [base];
            keys.iter()
                .zip(&systems)
                .map(|(&(m, n), (coeffs, vi))| {
                    let other = integrate_path(coeffs, jm, vi, cfg, grid, &noise, p0)
                        .map_err(|source| StabilityError::Path { m, n, path, source })?;
                    let (ex, eu) = h_norm_samples(&[other], &base, grid)?;
                    Ok((ex[0], eu[0]))
                })
                .collect()
        })
        .collect::<Result<_, StabilityError>>()?;

    let cells = keys
        .iter()
        .enumerate()
        .map(|(c, &(m, n))| {
            let ex: Vec<f64> = per_path.iter().map(|r| r[c].0).collect();
            let eu: Vec<f64> = per_path.iter().map(|r| r[c].1).collect();
            let (err_x, stderr_x) = root_mean_with_stderr(&ex);
            let (err_u, stderr_u) = root_mean_with_stderr(&eu);
            StabilityCell {
                m,
                n,
                err_x,
                err_u,
                stderr_x,
                stderr_u,
                mc_stderr: stderr_x.max(stderr_u),
            }
        })
        .collect();

    let limit = family.limit_part();
    let constants = theory_constants(&TheoryInputs {
        c_bar: limit.c_bar,
        l_f: limit.l_f,
        rho: cfg.rho,
        alpha: grid.alpha(),
        horizon: grid.horizon(),
        lipschitz: limit.coeffs.lipschitz,
    })?;
    Ok(StabilityReport {
        cells,
        m_list: m_list.to_vec(),
        n_list: n_list.to_vec(),
        paths,
        seed,
        grid: *grid,
        rho: cfg.rho,
        tol: cfg.tol,
        constants,
    })
}

/// `n -> max_probe |P_{K_n}(v) - P_K(v)|`.
pub fn projection_convergence_report(
    family: &PerturbationFamily,
    n_list: &[usize],
    probes: &[Vec<f64>],
) -> Result<Vec<(usize, f64)>, StabilityError> {
    n_list
        .iter()
        .map(|&n| Ok((n, mosco_probe(family.sets(), n, probes)?)))
        .collect()
}
