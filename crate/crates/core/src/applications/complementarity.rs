use serde::{Deserialize, Serialize};

use super::AppError;
use crate::linalg::{dist, dot};
use crate::sets::{ConvexSet, SetDescriptor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complementarity {
    /// Distance from `u` to the cone.
    pub primal: f64,
    /// Largest `(-<g, F>)_+` over unit generators `g` of the cone.
    pub dual: f64,
    /// `|<u, F>|`.
    pub orth: f64,
}

impl Complementarity {
    pub fn certified(&self, tol: f64) -> bool {
        self.primal <= tol && self.dual <= tol && self.orth <= tol
    }
}

/// Unit generators (extreme rays) of a polyhedral cone of the catalog.
pub fn cone_generators(cone: &ConvexSet) -> Result<Vec<Vec<f64>>, AppError> {
    if !cone.is_cone() {
        return Err(AppError::NotACone);
    }
    let d = cone.dim();
    Ok(match cone.descriptor() {
        SetDescriptor::NonnegOrthant { .. } => (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect(),
        SetDescriptor::Transport { m, n, .. } => {
            let (m, n) = (*m, *n);
            let w = 1.0 / 3f64.sqrt();
            let mut out = Vec::with_capacity(m * n);
            for i in 0..m {
                for j in 0..n {
                    let mut g = vec![0.0; d];
                    g[i] = w;
                    g[m + j] = w;
                    g[m + n + i * n + j] = w;
                    out.push(g);
                }
            }
            out
        }
        SetDescriptor::Product { factors } => {
            let mut out = Vec::new();
            let mut offset = 0;
            for f in factors {
                for g in cone_generators(f)? {
                    let mut e = vec![0.0; d];
                    e[offset..offset + g.len()].copy_from_slice(&g);
                    out.push(e);
                }
                offset += f.dim();
            }
            out
        }
        _ => return Err(AppError::NotACone),
    })
}

/// Residuals of `K ∋ u ⊥ F ∈ K*`.
pub fn complementarity_check(
    u: &[f64],
    f: &[f64],
    cone: &ConvexSet,
) -> Result<Complementarity, AppError> {
    let gens = cone_generators(cone)?;
    if u.len() != cone.dim() || f.len() != cone.dim() {
        return Err(AppError::Spec(format!(
            "vectors of length {} and {} for a cone in dimension {}",
            u.len(),
            f.len(),
            cone.dim()
        )));
    }
    let primal = dist(u, &cone.project(u)?);
    let dual = gens.iter().fold(0.0f64, |m, g| m.max(-dot(g, f)));
    Ok(Complementarity {
        primal,
        dual,
        orth: dot(u, f).abs(),
    })
}
