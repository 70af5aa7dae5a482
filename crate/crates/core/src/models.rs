//! Builtin coefficient families referenced by name from scenario files.
//!
//! `affine` and `saturating` share one parametrization; the latter passes
//! every state and control argument through `tanh` first.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{CoefficientSet, EngineError, JumpMeasure, Moduli};
use crate::sets::ConvexSet;
use crate::solver::{SolveError, VIField, VIProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Tanh,
}

impl Link {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Link::Identity => v,
            Link::Tanh => v.tanh(),
        }
    }
}

/// With `phi` the link and `ubar` the mean control:
///
/// * `b_i = drift0 + drift_x phi(x_i) + drift_u phi(ubar)`
/// * `sigma1_i = frac0 + frac_x phi(x_i)`
/// * `sigma_{i, i mod l} = vol0 + vol_x phi(x_i)`, other entries zero
/// * `G_i(y) = (jump0 + jump_x phi(x_i)) y_i`
/// * `F_j = gain u_j - target - field_x phi(x_{j mod p})`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineModel {
    pub link: Link,
    pub state_dim: usize,
    pub noise_dim: usize,
    pub drift0: f64,
    pub drift_x: f64,
    pub drift_u: f64,
    pub frac0: f64,
    pub frac_x: f64,
    pub vol0: f64,
    pub vol_x: f64,
    pub jump0: f64,
    pub jump_x: f64,
    pub gain: f64,
    pub target: f64,
    pub field_x: f64,
}

/// Additive parameter shifts, scaled by `lambda` in [`AffineModel::shifted`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelShift {
    pub drift0: f64,
    pub frac0: f64,
    pub vol0: f64,
    pub target: f64,
}

impl AffineModel {
    pub fn new(link: Link, state_dim: usize, noise_dim: usize) -> Self {
        AffineModel {
            link,
            state_dim,
            noise_dim,
            drift0: 0.0,
            drift_x: 0.0,
            drift_u: 0.0,
            frac0: 0.0,
            frac_x: 0.0,
            vol0: 0.0,
            vol_x: 0.0,
            jump0: 0.0,
            jump_x: 0.0,
            gain: 1.0,
            target: 0.0,
            field_x: 0.0,
        }
    }

    pub fn shifted(&self, shift: &ModelShift, lambda: f64) -> AffineModel {
        AffineModel {
            drift0: self.drift0 + lambda * shift.drift0,
            frac0: self.frac0 + lambda * shift.frac0,
            vol0: self.vol0 + lambda * shift.vol0,
            target: self.target + lambda * shift.target,
            ..self.clone()
        }
    }

    fn check(&self) -> Result<(), EngineError> {
        if self.state_dim == 0 {
            return Err(EngineError::Coefficients(
                "state dimension must be positive".into(),
            ));
        }
        let all = [
            self.drift0,
            self.drift_x,
            self.drift_u,
            self.frac0,
            self.frac_x,
            self.vol0,
            self.vol_x,
            self.jump0,
            self.jump_x,
            self.gain,
            self.target,
            self.field_x,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(EngineError::Coefficients(
                "model parameters must be finite".into(),
            ));
        }
        if self.gain <= 0.0 {
            return Err(EngineError::Coefficients("gain must be positive".into()));
        }
        Ok(())
    }

    pub fn coefficients(
        &self,
        control_dim: usize,
        jm: &JumpMeasure,
    ) -> Result<CoefficientSet, EngineError> {
        self.check()?;
        let (p, q, l) = (self.state_dim, control_dim, self.noise_dim);
        if q == 0 {
            return Err(EngineError::Coefficients(
                "control dimension must be positive".into(),
            ));
        }
        if jm.mark_dim().is_some_and(|d| d != p) {
            return Err(EngineError::Dimension(format!(
                "jump marks must have the state dimension {p}"
            )));
        }
        let link = self.link;
        let (d0, dx, du) = (self.drift0, self.drift_x, self.drift_u);
        let (f0, fx) = (self.frac0, self.frac_x);
        let (v0, vx) = (self.vol0, self.vol_x);
        let (j0, jx) = (self.jump0, self.jump_x);

        let pf = p as f64;
        let ratio = pf / q as f64;
        // sum_a w_a |y_a|_inf^2
        let mark_mass: f64 = jm
            .atoms()
            .iter()
            .map(|a| a.weight * a.mark.iter().fold(0.0f64, |m, y| m.max(y * y)))
            .sum();
        let vol_on = if l > 0 { 1.0 } else { 0.0 };
        let growth = Moduli {
            b: 3.0 * (pf * d0 * d0).max(dx * dx).max(ratio * du * du),
            sigma1: 2.0 * (pf * f0 * f0).max(fx * fx),
            sigma: vol_on * 2.0 * (pf * v0 * v0).max(vx * vx),
            g: 2.0 * mark_mass * (pf * j0 * j0).max(jx * jx),
        };
        let lipschitz = Moduli {
            b: 2.0 * (dx * dx).max(ratio * du * du),
            sigma1: fx * fx,
            sigma: vol_on * vx * vx,
            g: mark_mass * jx * jx,
        };

        Ok(CoefficientSet::zero(p, q, l)
            .with_drift(Arc::new(move |_, x: &[f64], u: &[f64]| {
                let ubar = link.apply(u.iter().sum::<f64>() / u.len() as f64);
                x.iter()
                    .map(|&xi| d0 + dx * link.apply(xi) + du * ubar)
                    .collect()
            }))
            .with_frac(Arc::new(move |_, x: &[f64], _| {
                x.iter().map(|&xi| f0 + fx * link.apply(xi)).collect()
            }))
            .with_diffusion(Arc::new(move |_, x: &[f64], _| {
                let mut s = vec![0.0; p * l];
                if l > 0 {
                    for (i, &xi) in x.iter().enumerate() {
                        s[i * l + i % l] = v0 + vx * link.apply(xi);
                    }
                }
                s
            }))
            .with_jump(Arc::new(move |_, x: &[f64], _, y: &[f64]| {
                x.iter()
                    .zip(y)
                    .map(|(&xi, &yi)| (j0 + jx * link.apply(xi)) * yi)
                    .collect()
            }))
            .with_constants(growth, lipschitz))
    }

    pub fn field(&self) -> VIField {
        let (link, p) = (self.link, self.state_dim);
        let (gain, target, fx) = (self.gain, self.target, self.field_x);
        Arc::new(move |_, x: &[f64], u: &[f64]| {
            u.iter()
                .enumerate()
                .map(|(j, &uj)| gain * uj - target - fx * link.apply(x[j % p]))
                .collect()
        })
    }

    /// `(C, L)` for [`AffineModel::field`] on `R^q`.
    pub fn moduli(&self, control_dim: usize) -> (f64, f64) {
        let uses = control_dim.div_ceil(self.state_dim) as f64;
        (self.gain, self.gain.max(self.field_x.abs() * uses.sqrt()))
    }

    pub fn vi_problem(&self, set: ConvexSet) -> Result<VIProblem, SolveError> {
        let (c, l) = self.moduli(set.dim());
        VIProblem::new(set, self.field(), c, l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::JumpAtom;
    use crate::linalg::{dist, norm_sq, sub};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(link: Link) -> AffineModel {
        AffineModel {
            drift0: 0.2,
            drift_x: -0.5,
            drift_u: 0.3,
            frac0: 0.1,
            frac_x: 0.2,
            vol0: 0.3,
            vol_x: 0.1,
            jump0: 0.5,
            jump_x: -0.2,
            gain: 1.0,
            target: 0.4,
            field_x: 0.3,
            ..AffineModel::new(link, 3, 2)
        }
    }

    fn measure() -> JumpMeasure {
        JumpMeasure::new(
            vec![
                JumpAtom {
                    mark: vec![0.3, -0.2, 0.1],
                    weight: 1.0,
                },
                JumpAtom {
                    mark: vec![-0.4, 0.1, 0.2],
                    weight: 0.5,
                },
            ],
            1.0,
        )
        .unwrap()
    }

    fn frob_sq(c: &CoefficientSet, x: &[f64], u: &[f64]) -> f64 {
        norm_sq(&(c.diffusion)(0.0, x, u))
    }

    fn jump_sq(c: &CoefficientSet, jm: &JumpMeasure, x: &[f64], u: &[f64]) -> f64 {
        jm.atoms()
            .iter()
            .map(|a| a.weight * norm_sq(&(c.jump)(0.0, x, u, &a.mark)))
            .sum()
    }

    #[test]
    fn declared_constants_hold_on_samples() {
        let jm = measure();
        for link in [Link::Identity, Link::Tanh] {
            let m = model(link);
            let c = m.coefficients(5, &jm).unwrap();
            c.validate(1.0, &jm, 3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut pt =
                |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-3.0..3.0)).collect() };
            for _ in 0..2000 {
                let (x1, u1, x2, u2) = (pt(3), pt(5), pt(3), pt(5));
                let d2 = norm_sq(&sub(&x1, &x2)) + norm_sq(&sub(&u1, &u2));
                let s2 = 1.0 + norm_sq(&x1) + norm_sq(&u1);
                let tol = 1.0 + 1e-12;
                let db = norm_sq(&sub(&(c.drift)(0.0, &x1, &u1), &(c.drift)(0.0, &x2, &u2)));
                assert!(db <= c.lipschitz.b * d2 * tol);
                let df = norm_sq(&sub(&(c.frac)(0.0, &x1, &u1), &(c.frac)(0.0, &x2, &u2)));
                assert!(df <= c.lipschitz.sigma1 * d2 * tol);
                let ds = norm_sq(&sub(
                    &(c.diffusion)(0.0, &x1, &u1),
                    &(c.diffusion)(0.0, &x2, &u2),
                ));
                assert!(ds <= c.lipschitz.sigma * d2 * tol);
                let dg: f64 = jm
                    .atoms()
                    .iter()
                    .map(|a| {
                        a.weight
                            * norm_sq(&sub(
                                &(c.jump)(0.0, &x1, &u1, &a.mark),
                                &(c.jump)(0.0, &x2, &u2, &a.mark),
                            ))
                    })
                    .sum();
                assert!(dg <= c.lipschitz.g * d2 * tol);
                assert!(norm_sq(&(c.drift)(0.0, &x1, &u1)) <= c.growth.b * s2 * tol);
                assert!(norm_sq(&(c.frac)(0.0, &x1, &u1)) <= c.growth.sigma1 * s2 * tol);
                assert!(frob_sq(&c, &x1, &u1) <= c.growth.sigma * s2 * tol);
                assert!(jump_sq(&c, &jm, &x1, &u1) <= c.growth.g * s2 * tol);

                let f = m.field();
                let (cm, lm) = m.moduli(5);
                let f11 = f(0.0, &x1, &u1);
                let f12 = f(0.0, &x1, &u2);
                let f22 = f(0.0, &x2, &u2);
                let du = sub(&u1, &u2);
                let mono: f64 = sub(&f11, &f12).iter().zip(&du).map(|(a, b)| a * b).sum();
                assert!(mono >= cm * norm_sq(&du) * (1.0 - 1e-12));
                let lip = dist(&f11, &f22);
                assert!(lip <= lm * (dist(&x1, &x2) + dist(&u1, &u2)) * tol);
            }
        }
    }

    #[test]
    fn shift_moves_only_offsets() {
        let m = model(Link::Identity);
        let s = ModelShift {
            drift0: 1.0,
            target: -2.0,
            ..ModelShift::default()
        };
        let m2 = m.shifted(&s, 0.5);
        assert_eq!(m2.drift0, 0.7);
        assert_eq!(m2.target, -0.6);
        assert_eq!(m2.frac0, m.frac0);
        let jm = measure();
        assert_eq!(
            m.coefficients(4, &jm).unwrap().lipschitz,
            m2.coefficients(4, &jm).unwrap().lipschitz
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        let jm = JumpMeasure::empty();
        let mut m = model(Link::Identity);
        m.gain = 0.0;
        assert!(m.coefficients(2, &jm).is_err());
        let mut m = model(Link::Identity);
        m.drift0 = f64::NAN;
        assert!(m.coefficients(2, &jm).is_err());
        assert!(model(Link::Identity).coefficients(2, &measure()).is_ok());
        let flat = JumpMeasure::new(
            vec![JumpAtom {
                mark: vec![0.1],
                weight: 1.0,
            }],
            1.0,
        )
        .unwrap();
        assert!(model(Link::Identity).coefficients(2, &flat).is_err());
    }
}
