use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EngineError, JumpMeasure};

/// `(t, x, u) -> R^k`.
pub type StateField = Arc<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `(t, x, u, y) -> R^p`.
pub type JumpField = Arc<dyn Fn(f64, &[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// One modulus per coefficient, in the squared form
/// `|f(x1,u1) - f(x2,u2)|^2 <= L (|x1-x2|^2 + |u1-u2|^2)` (Lipschitz) or
/// `|f(x,u)|^2 <= K (1 + |x|^2 + |u|^2)` (growth). The jump entry bounds the
/// integral against the Lévy measure. Diffusion matrices use the Frobenius
/// norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moduli {
    pub b: f64,
    pub sigma: f64,
    pub sigma1: f64,
    pub g: f64,
}

impl Moduli {
    pub fn uniform(v: f64) -> Self {
        Moduli {
            b: v,
            sigma: v,
            sigma1: v,
            g: v,
        }
    }

    fn check(&self, what: &str) -> Result<(), EngineError> {
        for (name, v) in [
            ("b", self.b),
            ("sigma", self.sigma),
            ("sigma1", self.sigma1),
            ("G", self.g),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EngineError::Coefficients(format!(
                    "{what} constant for {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Drift `b`, fractional coefficient `sigma1`, diffusion `sigma` (row-major
/// `p x l`) and jump amplitude `G`, with declared constants.
#[derive(Clone)]
pub struct CoefficientSet {
    pub state_dim: usize,
    pub control_dim: usize,
    pub noise_dim: usize,
    pub drift: StateField,
    pub frac: StateField,
    pub diffusion: StateField,
    pub jump: JumpField,
    pub growth: Moduli,
    pub lipschitz: Moduli,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("noise_dim", &self.noise_dim)
            .field("growth", &self.growth)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// All four coefficients identically zero.
    pub fn zero(p: usize, q: usize, l: usize) -> Self {
        CoefficientSet {
            state_dim: p,
            control_dim: q,
            noise_dim: l,
            drift: Arc::new(move |_, _, _| vec![0.0; p]),
            frac: Arc::new(move |_, _, _| vec![0.0; p]),
            diffusion: Arc::new(move |_, _, _| vec![0.0; p * l]),
            jump: Arc::new(move |_, _, _, _| vec![0.0; p]),
            growth: Moduli::uniform(0.0),
            lipschitz: Moduli::uniform(0.0),
        }
    }

    pub fn with_drift(mut self, f: StateField) -> Self {
        self.drift = f;
        self
    }

    pub fn with_frac(mut self, f: StateField) -> Self {
        self.frac = f;
        self
    }

    pub fn with_diffusion(mut self, f: StateField) -> Self {
        self.diffusion = f;
        self
    }

    pub fn with_jump(mut self, f: JumpField) -> Self {
        self.jump = f;
        self
    }

    pub fn with_constants(mut self, growth: Moduli, lipschitz: Moduli) -> Self {
        self.growth = growth;
        self.lipschitz = lipschitz;
        self
    }

    /// Checks output shapes at random points, the declared constants, and
    /// continuity of `sigma1` in `t` by finite differences.
    pub fn validate(&self, horizon: f64, jm: &JumpMeasure, seed: u64) -> Result<(), EngineError> {
        self.growth.check("growth")?;
        self.lipschitz.check("Lipschitz")?;
        if let Some(d) = jm.mark_dim() {
            if d != self.state_dim {
                return Err(EngineError::Dimension(format!(
                    "jump marks have dimension {d}, state has {}",
                    self.state_dim
                )));
            }
        }
        let p = self.state_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut point =
            |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-1.0..1.0)).collect() };
        for _ in 0..8 {
            let x = point(p);
            let u = point(self.control_dim);
            let t = horizon * 0.5 * (1.0 + point(1)[0]);
            let shape = |name: &str, v: Vec<f64>, want: usize| {
                if v.len() != want {
                    return Err(EngineError::Dimension(format!(
                        "{name} returned {} entries, expected {want}",
                        v.len()
                    )));
                }
                if !v.iter().all(|z| z.is_finite()) {
                    return Err(EngineError::Coefficients(format!("{name} is not finite")));
                }
                Ok(v)
            };
            shape("b", (self.drift)(t, &x, &u), p)?;
            shape("sigma", (self.diffusion)(t, &x, &u), p * self.noise_dim)?;
            for a in jm.atoms() {
                shape("G", (self.jump)(t, &x, &u, &a.mark), p)?;
            }
            let s = shape("sigma1", (self.frac)(t, &x, &u), p)?;
            let scale = 1.0 + s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let h = 1e-8;
            let s2 = (self.frac)((t + h).min(horizon), &x, &u);
            let jump = s
                .iter()
                .zip(&s2)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if jump > 1e-4 * scale {
                return Err(EngineError::Coefficients(format!(
                    "sigma1 looks discontinuous in t near t = {t}"
                )));
            }
        }
        Ok(())
    }
}

/// `sum_i w_i G(t, x, u, y_i)`, the exact compensator of a discrete measure.
pub fn compensator_integral(
    jump: &JumpField,
    jm: &JumpMeasure,
    t: f64,
    x: &[f64],
    u: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for a in jm.atoms() {
        let g = jump(t, x, u, &a.mark);
        for (o, gi) in out.iter_mut().zip(&g) {
            *o += a.weight * gi;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::JumpAtom;

    fn identity_jump() -> JumpField {
        Arc::new(|_, _, _, y: &[f64]| y.to_vec())
    }

    fn atoms(list: &[(f64, f64)]) -> JumpMeasure {
        JumpMeasure::new(
            list.iter()
                .map(|&(y, w)| JumpAtom {
                    mark: vec![y],
                    weight: w,
                })
                .collect(),
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn compensator_examples() {
        let zero: JumpField = Arc::new(|_, _, _, _| vec![0.0]);
        let jm = atoms(&[(1.0, 2.0)]);
        assert_eq!(
            compensator_integral(&zero, &jm, 0.0, &[0.0], &[]),
            vec![0.0]
        );
        assert_eq!(
            compensator_integral(&identity_jump(), &jm, 0.0, &[0.0], &[]),
            vec![2.0]
        );
        let sym = atoms(&[(1.0, 1.0), (-1.0, 1.0)]);
        assert_eq!(
            compensator_integral(&identity_jump(), &sym, 0.0, &[0.0], &[]),
            vec![0.0]
        );
    }

    #[test]
    fn validate_catches_shape_and_discontinuity() {
        let jm = JumpMeasure::empty();
        let ok = CoefficientSet::zero(2, 1, 1);
        ok.validate(1.0, &jm, 0).unwrap();
        let bad = CoefficientSet::zero(2, 1, 1).with_drift(Arc::new(|_, _, _| vec![0.0]));
        assert!(matches!(
            bad.validate(1.0, &jm, 0),
            Err(EngineError::Dimension(_))
        ));
        let smooth = CoefficientSet::zero(1, 1, 1).with_frac(Arc::new(|t, _, _| vec![t.sin()]));
        smooth.validate(1.0, &jm, 0).unwrap();
        // square wave flipping every 1/3e8 time units
        let square = CoefficientSet::zero(1, 1, 1).with_frac(Arc::new(|t, _, _| {
            vec![if (t * 1.5e8).fract() < 0.5 { 0.0 } else { 1.0 }]
        }));
        assert!(square.validate(1.0, &jm, 1).is_err());
        let neg = CoefficientSet::zero(1, 1, 1)
            .with_constants(Moduli::uniform(-1.0), Moduli::uniform(1.0));
        assert!(neg.validate(1.0, &jm, 0).is_err());
    }
}
