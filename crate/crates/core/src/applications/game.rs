use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{default_grid, AppError, CoupledSystem};
use crate::engine::{CoefficientSet, JumpMeasure, Moduli, PathSolution};
use crate::linalg::{dot, norm_sq, sub};
use crate::sets::{ConvexSet, SetDescriptor};
use crate::solver::{VIField, VIProblem};

/// `(x, u) -> grad_{u^i} theta^i`, with `x` and `u` the stacked profiles.
pub type AgentGradient = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Scalar state of one agent:
/// `dx = (drift0 + drift_x x + drift_u mean(u^i)) dt + frac (dt)^a + vol dB + jump_gain y dÑ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentDynamics {
    pub drift0: f64,
    pub drift_x: f64,
    pub drift_u: f64,
    pub frac: f64,
    pub vol: f64,
    pub jump_gain: f64,
}

#[derive(Clone)]
pub struct Agent {
    pub set: ConvexSet,
    pub gradient: AgentGradient,
    pub dynamics: AgentDynamics,
    pub p0: f64,
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agent")
            .field("set", &self.set)
            .field("dynamics", &self.dynamics)
            .field("p0", &self.p0)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct GameSpec {
    pub agents: Vec<Agent>,
    /// Declared strong monotonicity modulus of the stacked gradients.
    pub c_bar: f64,
    pub l_f: f64,
    /// Marks live in `R^P`, one coordinate per agent.
    pub jumps: JumpMeasure,
}

impl GameSpec {
    /// Index range of agent `i` in the stacked control.
    pub fn control_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.agents
            .iter()
            .map(|a| {
                let r = start..start + a.set.dim();
                start = r.end;
                r
            })
            .collect()
    }

    pub fn strategy_set(&self) -> Result<ConvexSet, AppError> {
        Ok(ConvexSet::product(
            self.agents.iter().map(|a| a.set.clone()).collect(),
        )?)
    }

    /// Stacked `F = (grad_{u^1} theta^1, ..., grad_{u^P} theta^P)`.
    pub fn stacked_field(&self) -> VIField {
        let grads: Vec<AgentGradient> = self.agents.iter().map(|a| a.gradient.clone()).collect();
        Arc::new(move |_, x: &[f64], u: &[f64]| grads.iter().flat_map(|g| g(x, u)).collect())
    }
}

/// `theta^i = weight_i/2 (u^i - target_i)^2 + u^i (sum_{j != i} coupling_ij u^j + state_gain_i x^i)`
/// on `K^i = [lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticGame {
    pub target: Vec<f64>,
    pub weight: Vec<f64>,
    /// `P x P`; the diagonal is ignored.
    pub coupling: Vec<Vec<f64>>,
    pub state_gain: Vec<f64>,
    pub boxes: Vec<(f64, f64)>,
    pub dynamics: Vec<AgentDynamics>,
    pub p0: Vec<f64>,
}

impl QuadraticGame {
    /// Uncoupled agents with frozen dynamics.
    pub fn separable(target: Vec<f64>, weight: Vec<f64>, boxes: Vec<(f64, f64)>) -> Self {
        let p = target.len();
        QuadraticGame {
            target,
            weight,
            coupling: vec![vec![0.0; p]; p],
            state_gain: vec![0.0; p],
            boxes,
            dynamics: vec![AgentDynamics::default(); p],
            p0: vec![0.0; p],
        }
    }

    /// Jacobian of the stacked gradient in `u`.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let p = self.target.len();
        DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                self.weight[i]
            } else {
                self.coupling[i][j]
            }
        })
    }

    pub fn spec(&self, jumps: JumpMeasure) -> Result<GameSpec, AppError> {
        let p = self.target.len();
        if p == 0 {
            return Err(AppError::Spec("need at least one agent".into()));
        }
        let lens = [
            self.weight.len(),
            self.coupling.len(),
            self.state_gain.len(),
            self.boxes.len(),
            self.dynamics.len(),
            self.p0.len(),
        ];
        if lens.iter().any(|&l| l != p) || self.coupling.iter().any(|r| r.len() != p) {
            return Err(AppError::Spec(format!(
                "every per-agent table needs {p} entries"
            )));
        }
        let j = self.jacobian();
        if !j
            .iter()
            .chain(&self.target)
            .chain(&self.state_gain)
            .all(|v| v.is_finite())
        {
            return Err(AppError::Spec("game parameters must be finite".into()));
        }
        let sym = (&j + j.transpose()) * 0.5;
        let c_bar = sym.symmetric_eigen().eigenvalues.min();
        let gmax = self.state_gain.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let l_f = j.clone().svd(false, false).singular_values.max().max(gmax);
        if !(c_bar > 0.0) {
            return Err(AppError::Spec(format!(
                "cost Jacobian has symmetric part with smallest eigenvalue {c_bar}; need > 0"
            )));
        }
        let agents = (0..p)
            .map(|i| {
                let (lo, hi) = self.boxes[i];
                let (w, tgt, g) = (self.weight[i], self.target[i], self.state_gain[i]);
                let row = self.coupling[i].clone();
                let gradient: AgentGradient = Arc::new(move |x: &[f64], u: &[f64]| {
                    let cross: f64 = (0..u.len())
                        .filter(|&k| k != i)
                        .map(|k| row[k] * u[k])
                        .sum();
                    vec![w * (u[i] - tgt) + cross + g * x[i]]
                });
                Ok(Agent {
                    set: ConvexSet::interval(lo, hi)?,
                    gradient,
                    dynamics: self.dynamics[i],
                    p0: self.p0[i],
                })
            })
            .collect::<Result<Vec<_>, AppError>>()?;
        Ok(GameSpec {
            agents,
            c_bar,
            l_f,
            jumps,
        })
    }
}

const SCREEN_PAIRS: usize = 200;
const SCREEN_SEED: u64 = 0x5eed;

/// Product strategy set, stacked gradients, per-agent scalar states. Screens
/// the declared monotonicity modulus and own-strategy convexity on random
/// samples before returning.
pub fn build_game(spec: &GameSpec) -> Result<CoupledSystem, AppError> {
    let p = spec.agents.len();
    if p == 0 {
        return Err(AppError::Spec("need at least one agent".into()));
    }
    if spec.jumps.mark_dim().is_some_and(|d| d != p) {
        return Err(AppError::Spec(format!("jump marks must live in R^{p}")));
    }
    let set = spec.strategy_set()?;
    let q = set.dim();
    let ranges = spec.control_ranges();
    let field = spec.stacked_field();
    let vi = VIProblem::new(set.clone(), field.clone(), spec.c_bar, spec.l_f)?;

    let x0: Vec<f64> = spec.agents.iter().map(|a| a.p0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SCREEN_SEED);
    for _ in 0..SCREEN_PAIRS {
        let x: Vec<f64> = x0.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let u1 = set.sample(&mut rng)?;
        let u2 = set.sample(&mut rng)?;
        let f1 = vi.eval(0.0, &x, &u1)?;
        let f2 = vi.eval(0.0, &x, &u2)?;
        for (i, r) in ranges.iter().enumerate() {
            if f1[r.clone()].len() != r.len() {
                return Err(AppError::Spec(format!(
                    "gradient of agent {i} has the wrong length"
                )));
            }
        }
        let du = sub(&u1, &u2);
        let d2 = norm_sq(&du);
        if d2 == 0.0 {
            continue;
        }
        let ratio = dot(&sub(&f1, &f2), &du) / d2;
        if ratio < spec.c_bar * (1.0 - 1e-9) - 1e-12 {
            return Err(AppError::NotMonotone {
                c_bar: spec.c_bar,
                ratio,
                u1,
                u2,
            });
        }
        // own-strategy convexity: move only block i from u1 to u2
        for (i, r) in ranges.iter().enumerate() {
            let mut v = u1.clone();
            v[r.clone()].copy_from_slice(&u2[r.clone()]);
            let g1 = (spec.agents[i].gradient)(&x, &u1);
            let g2 = (spec.agents[i].gradient)(&x, &v);
            let d = sub(&u1[r.clone()], &u2[r.clone()]);
            if dot(&sub(&g1, &g2), &d) < -1e-12 * (1.0 + norm_sq(&d)) {
                return Err(AppError::NotConvex { agent: i, u: u1 });
            }
        }
    }

    let dynamics: Vec<AgentDynamics> = spec.agents.iter().map(|a| a.dynamics).collect();
    let dx = dynamics.iter().fold(0.0f64, |m, d| m.max(d.drift_x.abs()));
    let du = dynamics.iter().fold(0.0f64, |m, d| m.max(d.drift_u.abs()));
    let d0 = dynamics.iter().fold(0.0f64, |m, d| m.max(d.drift0.abs()));
    let fr = dynamics.iter().fold(0.0f64, |m, d| m.max(d.frac.abs()));
    let vo = dynamics.iter().fold(0.0f64, |m, d| m.max(d.vol.abs()));
    let jg = dynamics
        .iter()
        .fold(0.0f64, |m, d| m.max(d.jump_gain.abs()));
    let mark_mass: f64 = spec
        .jumps
        .atoms()
        .iter()
        .map(|a| a.weight * norm_sq(&a.mark))
        .sum();
    let pf = p as f64;
    let growth = Moduli {
        b: 3.0 * (pf * d0 * d0).max(dx * dx).max(du * du),
        sigma1: pf * fr * fr,
        sigma: pf * vo * vo,
        g: jg * jg * mark_mass,
    };
    let lipschitz = Moduli {
        b: 2.0 * (dx * dx).max(du * du),
        sigma1: 0.0,
        sigma: 0.0,
        g: 0.0,
    };
    let dyn_b = dynamics.clone();
    let blocks = ranges.clone();
    let coeffs = CoefficientSet::zero(p, q, p)
        .with_drift(Arc::new(move |_, x: &[f64], u: &[f64]| {
            dyn_b
                .iter()
                .zip(&blocks)
                .enumerate()
                .map(|(i, (d, r))| {
                    let ubar = u[r.clone()].iter().sum::<f64>() / r.len().max(1) as f64;
                    d.drift0 + d.drift_x * x[i] + d.drift_u * ubar
                })
                .collect()
        }))
        .with_frac({
            let d = dynamics.clone();
            Arc::new(move |_, _, _| d.iter().map(|a| a.frac).collect())
        })
        .with_diffusion({
            let d = dynamics.clone();
            Arc::new(move |_, _, _| {
                let mut s = vec![0.0; p * p];
                for (i, a) in d.iter().enumerate() {
                    s[i * p + i] = a.vol;
                }
                s
            })
        })
        .with_jump({
            let d = dynamics;
            Arc::new(move |_, _, _, y: &[f64]| {
                d.iter().zip(y).map(|(a, yi)| a.jump_gain * yi).collect()
            })
        })
        .with_constants(growth, lipschitz);

    Ok(CoupledSystem {
        coeffs,
        vi,
        jumps: spec.jumps.clone(),
        p0: x0,
        grid: default_grid(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    /// Per agent, the smallest `<grad_i theta^i, v^i - u^i>` seen.
    pub worst: Vec<f64>,
    /// Step at which each agent's worst value occurred.
    pub worst_step: Vec<usize>,
    pub certified: bool,
}

/// First-order Nash certificate along a path: every agent's gradient must
/// make every sampled unilateral deviation non-improving to within `tol`.
/// Finite box corners are always among the deviations.
pub fn verify_nash(sol: &PathSolution, spec: &GameSpec, deviations: usize, tol: f64) -> NashReport {
    let ranges = spec.control_ranges();
    let mut rng = ChaCha8Rng::seed_from_u64(sol.seed ^ SCREEN_SEED);
    let candidates: Vec<Vec<Vec<f64>>> = spec
        .agents
        .iter()
        .map(|a| {
            let mut pts = Vec::with_capacity(deviations + 2);
            if let SetDescriptor::Box { lo, hi } = a.set.descriptor() {
                for corner in [lo, hi] {
                    if corner.iter().all(|v| v.is_finite()) {
                        pts.push(corner.clone());
                    }
                }
            }
            for _ in 0..deviations {
                if let Ok(v) = a.set.sample(&mut rng) {
                    pts.push(v);
                }
            }
            pts
        })
        .collect();
    let mut worst = vec![0.0f64; spec.agents.len()];
    let mut worst_step = vec![0usize; spec.agents.len()];
    for (k, (x, u)) in sol.x.iter().zip(&sol.u).enumerate() {
        for (i, agent) in spec.agents.iter().enumerate() {
            let g = (agent.gradient)(x, u);
            let ui = &u[ranges[i].clone()];
            for v in &candidates[i] {
                let val = dot(&g, &sub(v, ui));
                if val < worst[i] {
                    worst[i] = val;
                    worst_step[i] = k;
                }
            }
        }
    }
    let certified = worst.iter().all(|w| *w >= -tol);
    NashReport {
        worst,
        worst_step,
        certified,
    }
}
