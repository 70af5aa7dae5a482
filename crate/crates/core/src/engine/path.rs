use serde::{Deserialize, Serialize};

use super::{
    compensator_integral, CoefficientSet, EngineError, JumpMeasure, NoiseBundle, TimeGrid,
};
use crate::linalg::all_finite;
use crate::solver::{solve_vi, solve_vi_from, SolverConfig, VIProblem};

/// One integrated path of the coupled state/control system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSolution {
    /// `x[k]` for `k = 0..=N`.
    pub x: Vec<Vec<f64>>,
    /// `u[k]` for `k = 0..=N`.
    pub u: Vec<Vec<f64>>,
    pub vi_iters: Vec<usize>,
    /// Last successive-iterate distance of each VI solve.
    pub vi_steps: Vec<f64>,
    pub seed: u64,
}

/// Left-point scheme for
/// `x(t) = p0 + int b ds + int sigma1 (ds)^a + int sigma dB + int G dÑ`
/// with the VI solved at every node.
///
/// The fractional sum is recomputed for every `n`, so a path costs `O(N^2)`.
pub fn integrate_path(
    coeffs: &CoefficientSet,
    jm: &JumpMeasure,
    vi: &VIProblem,
    cfg: &SolverConfig,
    grid: &TimeGrid,
    noise: &NoiseBundle,
    p0: &[f64],
) -> Result<PathSolution, EngineError> {
    let p = coeffs.state_dim;
    let l = coeffs.noise_dim;
    if vi.dim() != coeffs.control_dim {
        return Err(EngineError::Dimension(format!(
            "constraint set has dimension {}, coefficients expect {}",
            vi.dim(),
            coeffs.control_dim
        )));
    }
    if p0.len() != p {
        return Err(EngineError::Dimension(format!(
            "initial state has dimension {}, expected {p}",
            p0.len()
        )));
    }
    if noise.brownian_dim() != l || noise.steps() != grid.steps() {
        return Err(EngineError::Dimension(format!(
            "noise is {}x{}, grid and coefficients need {}x{l}",
            noise.steps(),
            noise.brownian_dim(),
            grid.steps()
        )));
    }
    if let Some(d) = jm.mark_dim() {
        if d != p {
            return Err(EngineError::Dimension(format!(
                "jump marks have dimension {d}, state has {p}"
            )));
        }
    }
    cfg.validate(vi)
        .map_err(|source| EngineError::Vi { step: 0, source })?;

    let n_steps = grid.steps();
    let dt = grid.dt();
    let kernel = grid.kernel();

    let first = solve_vi(vi, cfg, 0.0, p0).map_err(|source| EngineError::Vi { step: 0, source })?;
    let mut xs = Vec::with_capacity(n_steps + 1);
    let mut us = Vec::with_capacity(n_steps + 1);
    let mut iters = Vec::with_capacity(n_steps + 1);
    let mut steps = Vec::with_capacity(n_steps + 1);
    xs.push(p0.to_vec());
    us.push(first.u);
    iters.push(first.iters);
    steps.push(first.final_residual);

    // everything except the fractional term accumulates once
    let mut acc = p0.to_vec();
    let mut frac_hist: Vec<Vec<f64>> = Vec::with_capacity(n_steps);
    let events = noise.jump_events();
    let mut next_event = 0;

    for k in 0..n_steps {
        let t = grid.time(k);
        let (x, u) = (&xs[k], &us[k]);

        let b = (coeffs.drift)(t, x, u);
        let sigma = (coeffs.diffusion)(t, x, u);
        let db = noise.increment(k);
        let comp = compensator_integral(&coeffs.jump, jm, t, x, u);
        for i in 0..p {
            let mut diff = 0.0;
            for (j, dbj) in db.iter().enumerate() {
                diff += sigma[i * l + j] * dbj;
            }
            acc[i] += b[i] * dt + diff - comp[i] * dt;
        }
        while next_event < events.len() && events[next_event].step == k {
            let mark = &jm.atoms()[events[next_event].atom].mark;
            let g = (coeffs.jump)(t, x, u, mark);
            for (a, gi) in acc.iter_mut().zip(&g) {
                *a += gi;
            }
            next_event += 1;
        }
        frac_hist.push((coeffs.frac)(t, x, u));

        let n = k + 1;
        let mut x_next = acc.clone();
        for (j, s1) in frac_hist.iter().enumerate() {
            let w = kernel[n - j];
            for (xi, si) in x_next.iter_mut().zip(s1) {
                *xi += si * w;
            }
        }
        if !all_finite(&x_next) {
            return Err(EngineError::NonFinite { step: n });
        }
        let sol = solve_vi_from(vi, cfg, grid.time(n), &x_next, &us[k])
            .map_err(|source| EngineError::Vi { step: n, source })?;
        xs.push(x_next);
        us.push(sol.u);
        iters.push(sol.iters);
        steps.push(sol.final_residual);
    }

    Ok(PathSolution {
        x: xs,
        u: us,
        vi_iters: iters,
        vi_steps: steps,
        seed: noise.seed(),
    })
}
