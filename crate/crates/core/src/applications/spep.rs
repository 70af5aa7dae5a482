use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{default_grid, AppError, CoupledSystem};
use crate::engine::{CoefficientSet, JumpMeasure, Moduli, PathSolution};
use crate::sets::ConvexSet;
use crate::solver::{VIField, VIProblem};

/// Price dynamics of one side of the market, shared by all its markets:
/// `b = reversion (level - price) + flow_impact * flow`, constant fractional
/// and diffusion coefficients, and jumps `jump_gain * y`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketDynamics {
    pub reversion: f64,
    pub level: f64,
    pub flow_impact: f64,
    pub frac: f64,
    pub vol: f64,
    pub jump_gain: f64,
}

impl MarketDynamics {
    /// Prices that never move.
    pub fn frozen() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpepFormulation {
    /// Control is the flow matrix `a` on the nonnegative orthant.
    #[default]
    Reduced,
    /// Control is `(S, D, a)` on the transport set.
    Full,
}

/// `m` supply and `n` demand markets with costs `c_ij(a) = gamma_ij a + c0_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMarketSpec {
    pub m: usize,
    pub n: usize,
    /// Row-major `m x n`.
    pub gamma: Vec<f64>,
    pub c0: Vec<f64>,
    pub supply: MarketDynamics,
    pub demand: MarketDynamics,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
    /// Marks live in `R^{m+n}`.
    pub jumps: JumpMeasure,
    pub formulation: SpepFormulation,
}

impl SpatialMarketSpec {
    pub fn validate(&self) -> Result<(), AppError> {
        let (m, n) = (self.m, self.n);
        if m == 0 || n == 0 {
            return Err(AppError::Spec(
                "need at least one supply and one demand market".into(),
            ));
        }
        if self.gamma.len() != m * n || self.c0.len() != m * n {
            return Err(AppError::Spec(format!(
                "cost tables must have {} entries",
                m * n
            )));
        }
        if self.p0.len() != m || self.q0.len() != n {
            return Err(AppError::Spec(
                "initial prices do not match the market counts".into(),
            ));
        }
        if !self.gamma.iter().all(|g| g.is_finite() && *g > 0.0) {
            return Err(AppError::Spec("cost slopes gamma must be positive".into()));
        }
        if !self.c0.iter().all(|c| c.is_finite() && *c >= 0.0) {
            return Err(AppError::Spec(
                "cost intercepts c0 must be nonnegative".into(),
            ));
        }
        if !self.p0.iter().chain(&self.q0).all(|v| v.is_finite()) {
            return Err(AppError::Spec("initial prices must be finite".into()));
        }
        for d in [&self.supply, &self.demand] {
            let all = [
                d.reversion,
                d.level,
                d.flow_impact,
                d.frac,
                d.vol,
                d.jump_gain,
            ];
            if !all.iter().all(|v| v.is_finite()) {
                return Err(AppError::Spec("dynamics parameters must be finite".into()));
            }
        }
        if self.jumps.mark_dim().is_some_and(|d| d != m + n) {
            return Err(AppError::Spec(format!(
                "jump marks must live in R^{}",
                m + n
            )));
        }
        Ok(())
    }

    pub fn cost(&self, i: usize, j: usize, a: f64) -> f64 {
        let k = i * self.n + j;
        self.gamma[k] * a + self.c0[k]
    }

    pub fn control_dim(&self) -> usize {
        match self.formulation {
            SpepFormulation::Reduced => self.m * self.n,
            SpepFormulation::Full => self.m + self.n + self.m * self.n,
        }
    }

    /// The flow block of a control vector.
    pub fn flows<'a>(&self, u: &'a [f64]) -> &'a [f64] {
        match self.formulation {
            SpepFormulation::Reduced => u,
            SpepFormulation::Full => &u[self.m + self.n..],
        }
    }

    /// `(C, L)` of the VI mapping in the chosen coordinates.
    pub fn moduli(&self) -> (f64, f64) {
        let gmin = self.gamma.iter().cloned().fold(f64::INFINITY, f64::min);
        let gmax = self.gamma.iter().cloned().fold(0.0, f64::max);
        let (m, n) = (self.m as f64, self.n as f64);
        match self.formulation {
            SpepFormulation::Reduced => (gmin, gmax.max((2.0 * m.max(n)).sqrt())),
            SpepFormulation::Full => (gmin / (1.0 + m + n), gmax.max(1.0)),
        }
    }
}

/// State `y = (p, q)`, control in the chosen formulation, and
/// `F = p_i - q_j + c_ij(a_ij)` (reduced) or `F = (p, -q, c(a))` (full).
pub fn build_spep(spec: &SpatialMarketSpec) -> Result<CoupledSystem, AppError> {
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);
    let dim = m + n;
    let q = spec.control_dim();
    let formulation = spec.formulation;
    let (gamma, c0) = (spec.gamma.clone(), spec.c0.clone());

    let field: VIField = match formulation {
        SpepFormulation::Reduced => Arc::new(move |_, y: &[f64], a: &[f64]| {
            let mut f = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    let k = i * n + j;
                    f[k] = y[i] - y[m + j] + gamma[k] * a[k] + c0[k];
                }
            }
            f
        }),
        SpepFormulation::Full => Arc::new(move |_, y: &[f64], u: &[f64]| {
            let mut f = Vec::with_capacity(m + n + m * n);
            f.extend_from_slice(&y[..m]);
            f.extend(y[m..].iter().map(|v| -v));
            for k in 0..m * n {
                f.push(gamma[k] * u[m + n + k] + c0[k]);
            }
            f
        }),
    };
    let set = match formulation {
        SpepFormulation::Reduced => ConvexSet::orthant(m * n),
        SpepFormulation::Full => ConvexSet::transport(m, n)?,
    };
    let (c_bar, l_f) = spec.moduli();
    let vi = VIProblem::new(set, field, c_bar, l_f)?;

    // shipments out of supply market i and into demand market j
    let totals = move |u: &[f64]| -> (Vec<f64>, Vec<f64>) {
        match formulation {
            SpepFormulation::Full => (u[..m].to_vec(), u[m..m + n].to_vec()),
            SpepFormulation::Reduced => {
                let mut s = vec![0.0; m];
                let mut d = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        s[i] += u[i * n + j];
                        d[j] += u[i * n + j];
                    }
                }
                (s, d)
            }
        }
    };
    let (sup, dem) = (spec.supply, spec.demand);
    let side = move |k: usize| if k < m { sup } else { dem };

    // |dS|^2 + |dD|^2 <= (m + n) |du|^2 in either formulation
    let mf = (m + n) as f64;
    let kappa = sup.reversion.abs().max(dem.reversion.abs());
    let impact = sup.flow_impact.abs().max(dem.flow_impact.abs());
    let anchor = (sup.reversion * sup.level)
        .abs()
        .max((dem.reversion * dem.level).abs());
    let frac = sup.frac.abs().max(dem.frac.abs());
    let vol = sup.vol.abs().max(dem.vol.abs());
    let jump = sup.jump_gain.abs().max(dem.jump_gain.abs());
    let mark_mass: f64 = spec
        .jumps
        .atoms()
        .iter()
        .map(|a| a.weight * a.mark.iter().map(|y| y * y).sum::<f64>())
        .sum();
    let growth = Moduli {
        b: 3.0
            * (dim as f64 * anchor * anchor)
                .max(kappa * kappa)
                .max(impact * impact * mf),
        sigma1: dim as f64 * frac * frac,
        sigma: dim as f64 * vol * vol,
        g: jump * jump * mark_mass,
    };
    let lipschitz = Moduli {
        b: 2.0 * (kappa * kappa).max(impact * impact * mf),
        sigma1: 0.0,
        sigma: 0.0,
        g: 0.0,
    };

    let coeffs = CoefficientSet::zero(dim, q, dim)
        .with_drift(Arc::new(move |_, y: &[f64], u: &[f64]| {
            let (s, d) = totals(u);
            (0..dim)
                .map(|k| {
                    let c = side(k);
                    let flow = if k < m { s[k] } else { d[k - m] };
                    c.reversion * (c.level - y[k]) + c.flow_impact * flow
                })
                .collect()
        }))
        .with_frac(Arc::new(move |_, _, _| {
            (0..dim).map(|k| side(k).frac).collect()
        }))
        .with_diffusion(Arc::new(move |_, _, _| {
            let mut s = vec![0.0; dim * dim];
            for k in 0..dim {
                s[k * dim + k] = side(k).vol;
            }
            s
        }))
        .with_jump(Arc::new(move |_, _, _, y: &[f64]| {
            (0..dim).map(|k| side(k).jump_gain * y[k]).collect()
        }))
        .with_constants(growth, lipschitz);

    let mut p0 = spec.p0.clone();
    p0.extend_from_slice(&spec.q0);
    Ok(CoupledSystem {
        coeffs,
        vi,
        jumps: spec.jumps.clone(),
        p0,
        grid: default_grid(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Positive flow with delivered price different from the demand price.
    Equality,
    /// Delivered price below the demand price.
    Inequality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpepViolation {
    pub step: usize,
    pub i: usize,
    pub j: usize,
    pub branch: Branch,
    /// Excess over the step budget.
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpepReport {
    pub violations: Vec<SpepViolation>,
    /// Largest excess per step (zero when the step is clean).
    pub step_worst: Vec<f64>,
    pub worst: Option<SpepViolation>,
    /// Largest tolerance budget used at any step.
    pub max_budget: f64,
}

impl SpepReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the two-branch equilibrium conditions at every step: flows above
/// `tol` need `|p_i + c_ij(a_ij) - q_j| <= eps_k`, and always
/// `p_i + c_ij(a_ij) >= q_j - eps_k`.
///
/// `eps_k = tol + (3 + rho L) s_k / rho` where `s_k` is the final iterate
/// step of the VI solve at step `k` and `rho = C / L^2`; this bounds the
/// natural-map residual of the returned iterate divided by `rho`.
pub fn check_spep_equilibrium(
    sol: &PathSolution,
    spec: &SpatialMarketSpec,
    tol: f64,
) -> SpepReport {
    let (m, n) = (spec.m, spec.n);
    let (c_bar, l_f) = spec.moduli();
    let rho = c_bar / (l_f * l_f);
    let mut violations = Vec::new();
    let mut step_worst = Vec::with_capacity(sol.x.len());
    let mut max_budget: f64 = 0.0;
    for (k, (y, u)) in sol.x.iter().zip(&sol.u).enumerate() {
        let s = sol.vi_steps.get(k).copied().unwrap_or(0.0);
        let eps = tol + (3.0 + rho * l_f) * s / rho;
        max_budget = max_budget.max(eps);
        let a = spec.flows(u);
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..n {
                let aij = a[i * n + j];
                let gap = y[i] + spec.cost(i, j, aij) - y[m + j];
                let mut flag = |branch, excess: f64| {
                    if excess > 0.0 {
                        worst = worst.max(excess);
                        violations.push(SpepViolation {
                            step: k,
                            i,
                            j,
                            branch,
                            amount: excess,
                        });
                    }
                };
                if aij > tol {
                    flag(Branch::Equality, gap.abs() - eps);
                }
                flag(Branch::Inequality, -gap - eps);
            }
        }
        step_worst.push(worst);
    }
    let worst =
        violations
            .iter()
            .copied()
            .fold(None, |best: Option<SpepViolation>, v| match best {
                Some(b) if b.amount >= v.amount => Some(b),
                _ => Some(v),
            });
    SpepReport {
        violations,
        step_worst,
        worst,
        max_budget,
    }
}
