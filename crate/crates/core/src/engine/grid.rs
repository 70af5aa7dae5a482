use serde::{Deserialize, Serialize};

use super::EngineError;

/// Uniform grid `t_k = k * T / N` on `[0, T]` with the fractional order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    alpha: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize, alpha: f64) -> Result<Self, EngineError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(EngineError::Grid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(EngineError::Grid("need at least one step".into()));
        }
        if !(alpha > 0.5 && alpha < 1.0) {
            return Err(EngineError::Grid(format!(
                "fractional order {alpha} outside (0.5, 1)"
            )));
        }
        Ok(TimeGrid {
            horizon,
            steps,
            alpha,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// `g[j] = dt^a (j^a - (j-1)^a)` for `j = 1..=N` (index 0 unused), so
    /// that `w_{n,k} = g[n - k]`.
    pub(crate) fn kernel(&self) -> Vec<f64> {
        let a = self.alpha;
        let scale = self.dt().powf(a);
        let mut g = vec![0.0; self.steps + 1];
        for (j, gj) in g.iter_mut().enumerate().skip(1) {
            *gj = scale * ((j as f64).powf(a) - ((j - 1) as f64).powf(a));
        }
        g
    }
}

/// Exact kernel integrals `w_{n,k} = (t_n - t_k)^a - (t_n - t_{k+1})^a`,
/// `k = 0..n`.
///
/// `sum_k f(t_k) w_{n,k}` is the left-point rule for
/// `a * int_0^{t_n} (t_n - s)^{a-1} f(s) ds` with the singular kernel
/// integrated exactly on each cell.
pub fn frac_weights(grid: &TimeGrid, n: usize) -> Result<Vec<f64>, EngineError> {
    if n == 0 || n > grid.steps() {
        return Err(EngineError::Grid(format!(
            "weight index {n} outside 1..={}",
            grid.steps()
        )));
    }
    let g = grid.kernel();
    Ok((0..n).map(|k| g[n - k]).collect())
}
