use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    gen_noise, integrate_path, path_seed, CoefficientSet, EngineError, JumpMeasure, TimeGrid,
};
use crate::sets::ConvexSet;
use crate::solver::{SolverConfig, VIField, VIProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsometryCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    /// Standard error of `lhs`.
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoobCheck {
    /// Sample mean of `max_k |B(t_k)|^2`.
    pub empirical: f64,
    /// `4 E|B(T)|^2 = 4T`.
    pub bound: f64,
    /// `E|B(T)|^2 = T`.
    pub terminal: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleCheck {
    /// Sample mean of `x(T) - p0`.
    pub mean: f64,
    pub std: f64,
    pub paths: usize,
}

impl MartingaleCheck {
    /// `|mean| <= 3 std / sqrt(paths)`.
    pub fn passes(&self) -> bool {
        self.mean.abs() <= 3.0 * self.std / (self.paths as f64).sqrt()
    }
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_paths(paths: usize) -> Result<(), EngineError> {
    if paths < 100 {
        return Err(EngineError::Config(format!(
            "need at least 100 paths, got {paths}"
        )));
    }
    Ok(())
}

/// Monte-Carlo check of `E(int f dB)^2 = int f^2 dt` for deterministic `f`.
pub fn ito_isometry_check(
    f: &(dyn Fn(f64) -> f64 + Sync),
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
) -> Result<IsometryCheck, EngineError> {
    check_paths(paths)?;
    let none = JumpMeasure::empty();
    let fk: Vec<f64> = (0..grid.steps()).map(|k| f(grid.time(k))).collect();
    let rhs: f64 = fk.iter().map(|v| v * v * grid.dt()).sum();
    let samples: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let noise = gen_noise(grid, 1, &none, path_seed(seed, p as u64));
            let s: f64 = fk
                .iter()
                .enumerate()
                .map(|(k, v)| v * noise.increment(k)[0])
                .sum();
            s * s
        })
        .collect();
    let (lhs, stderr) = mean_and_stderr(&samples);
    let rel_err = if rhs == 0.0 {
        if lhs != 0.0 {
            return Err(EngineError::Config(format!(
                "integrand vanishes but the sample second moment is {lhs}"
            )));
        }
        0.0
    } else {
        (lhs - rhs).abs() / rhs
    };
    Ok(IsometryCheck {
        lhs,
        rhs,
        rel_err,
        stderr,
    })
}

/// Doob's `L^2` maximal inequality for a scalar Brownian path on the grid.
pub fn doob_bound_check(
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
) -> Result<DoobCheck, EngineError> {
    check_paths(paths)?;
    let none = JumpMeasure::empty();
    let samples: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let noise = gen_noise(grid, 1, &none, path_seed(seed, p as u64));
            let mut b = 0.0f64;
            let mut sup = 0.0f64;
            for k in 0..grid.steps() {
                b += noise.increment(k)[0];
                sup = sup.max(b * b);
            }
            sup
        })
        .collect();
    let (empirical, stderr) = mean_and_stderr(&samples);
    Ok(DoobCheck {
        empirical,
        bound: 4.0 * grid.horizon(),
        terminal: grid.horizon(),
        stderr,
    })
}

/// Integrates the scalar pure-jump system `dx = int y Ñ(dt, dy)` through the path
/// integrator and reports the sample mean of `x(T) - p0`.
pub fn jump_martingale_check(
    jm: &JumpMeasure,
    grid: &TimeGrid,
    p0: &[f64],
    paths: usize,
    seed: u64,
) -> Result<MartingaleCheck, EngineError> {
    check_paths(paths)?;
    let p = p0.len();
    if p != 1 || jm.mark_dim().is_some_and(|d| d != 1) {
        return Err(EngineError::Dimension(
            "the martingale check is scalar".into(),
        ));
    }
    let coeffs = CoefficientSet::zero(p, 1, 0).with_jump(Arc::new(|_, _, _, y: &[f64]| y.to_vec()));
    let field: VIField = Arc::new(|_, _, u: &[f64]| u.to_vec());
    let set = ConvexSet::interval(0.0, 0.0).map_err(|e| EngineError::Config(e.to_string()))?;
    let vi = VIProblem::new(set, field, 1.0, 1.0)
        .map_err(|source| EngineError::Vi { step: 0, source })?;
    let cfg =
        SolverConfig::for_problem(&vi).map_err(|source| EngineError::Vi { step: 0, source })?;
    let ends: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let noise = gen_noise(grid, 0, jm, path_seed(seed, i as u64));
            let path = integrate_path(&coeffs, jm, &vi, &cfg, grid, &noise, p0)?;
            Ok(path.x[grid.steps()][0] - p0[0])
        })
        .collect::<Result<_, EngineError>>()?;
    let (mean, se) = mean_and_stderr(&ends);
    Ok(MartingaleCheck {
        mean,
        std: se * (paths as f64).sqrt(),
        paths,
    })
}
