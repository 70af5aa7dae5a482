use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EngineError, TimeGrid};
use crate::linalg::norm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom {
    pub mark: Vec<f64>,
    pub weight: f64,
}

/// Finite discrete Lévy measure `v = sum_i w_i delta_{y_i}` supported on
/// `|y| < c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMeasure {
    atoms: Vec<JumpAtom>,
    max_jump: f64,
}

impl JumpMeasure {
    pub fn new(atoms: Vec<JumpAtom>, max_jump: f64) -> Result<Self, EngineError> {
        if !(max_jump >= 0.0 && max_jump.is_finite()) {
            return Err(EngineError::Measure(format!(
                "max jump size must be finite and nonnegative, got {max_jump}"
            )));
        }
        let dim = atoms.first().map(|a| a.mark.len());
        for (i, a) in atoms.iter().enumerate() {
            if Some(a.mark.len()) != dim {
                return Err(EngineError::Measure(format!(
                    "atom {i} has mark dimension {}, expected {}",
                    a.mark.len(),
                    dim.unwrap_or(0)
                )));
            }
            if !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(EngineError::Measure(format!(
                    "atom {i} weight must be positive and finite, got {}",
                    a.weight
                )));
            }
            let size = norm(&a.mark);
            if !(size < max_jump) {
                return Err(EngineError::Measure(format!(
                    "atom {i} has size {size}, not below the cutoff {max_jump}"
                )));
            }
        }
        Ok(JumpMeasure { atoms, max_jump })
    }

    pub fn empty() -> Self {
        JumpMeasure {
            atoms: Vec::new(),
            max_jump: 0.0,
        }
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }

    pub fn max_jump(&self) -> f64 {
        self.max_jump
    }

    /// `Lambda = sum_i w_i`.
    pub fn intensity(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn mark_dim(&self) -> Option<usize> {
        self.atoms.first().map(|a| a.mark.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub step: usize,
    pub atom: usize,
}

/// All driving randomness of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBundle {
    steps: usize,
    dim: usize,
    /// Row-major `[N][l]`.
    brownian: Vec<f64>,
    /// Sorted by step.
    jumps: Vec<JumpEvent>,
    seed: u64,
}

impl NoiseBundle {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn brownian_dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `Delta B_k`.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.brownian[k * self.dim..(k + 1) * self.dim]
    }

    pub fn jump_events(&self) -> &[JumpEvent] {
        &self.jumps
    }

    /// The noise with every entry after step `n` replaced by zero (no jumps,
    /// zero increments).
    pub fn truncated_after(&self, n: usize) -> NoiseBundle {
        let mut out = self.clone();
        let keep = ((n + 1) * self.dim).min(out.brownian.len());
        for v in &mut out.brownian[keep..] {
            *v = 0.0;
        }
        out.jumps.retain(|e| e.step <= n);
        out
    }
}

/// Draws a bundle: i.i.d. `N(0, dt)` increments, compound Poisson jump times
/// by exponential inter-arrival, marks categorical in the weights.
pub fn gen_noise(grid: &TimeGrid, l: usize, jm: &JumpMeasure, seed: u64) -> NoiseBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.steps();
    let sd = grid.dt().sqrt();
    let brownian: Vec<f64> = (0..n * l)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    let mut jumps = Vec::new();
    let rate = jm.intensity();
    if rate > 0.0 {
        let arrivals = Exp::new(rate).expect("positive rate");
        let marks =
            WeightedIndex::new(jm.atoms().iter().map(|a| a.weight)).expect("validated weights");
        let dt = grid.dt();
        let mut t = arrivals.sample(&mut rng);
        while t < grid.horizon() {
            let step = ((t / dt) as usize).min(n - 1);
            jumps.push(JumpEvent {
                step,
                atom: marks.sample(&mut rng),
            });
            t += arrivals.sample(&mut rng);
        }
    }
    NoiseBundle {
        steps: n,
        dim: l,
        brownian,
        jumps,
        seed,
    }
}

/// Per-path seed from a base seed and a path index (splitmix64 finalizer).
pub fn path_seed(base: u64, path: u64) -> u64 {
    let mut z = base.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(path.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
