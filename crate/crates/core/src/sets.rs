//! Closed convex subsets of `R^q` with exact Euclidean projections.
//!
//! Box, orthant and ball projections are closed forms. Polyhedral sets given
//! by half-space intersections, and the transportation set with its linear
//! balance equalities, are projected with Dykstra's alternating projections,
//! which converges to the exact projection rather than to an arbitrary
//! feasible point.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use thiserror::Error;

use crate::linalg::{add, axpy, dist, dot, norm, scale, sub};

/// Default stopping tolerance on successive Dykstra iterates.
pub const DYKSTRA_TOL: f64 = 1e-10;
/// Default Dykstra budget in full sweeps over the elementary constraints.
pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("dimension mismatch: set has dimension {expected}, vector has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid set: {0}")]
    Invalid(String),
    #[error("Dykstra budget of {sweeps} sweeps exhausted, last change {residual:e}")]
    DykstraBudget { sweeps: usize, residual: f64 },
    #[error("support function not certified, stationarity residual {residual:e}")]
    SupportNotCertified { residual: f64 },
    #[error("set does not contain the origin")]
    OriginNotContained,
    #[error("probe list is empty")]
    EmptyProbes,
}

/// Stopping rule for the Dykstra-backed projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DykstraConfig {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for DykstraConfig {
    fn default() -> Self {
        DykstraConfig {
            tol: DYKSTRA_TOL,
            max_sweeps: DYKSTRA_MAX_SWEEPS,
        }
    }
}

/// The shape of a [`ConvexSet`].
#[derive(Debug, Clone, PartialEq)]
pub enum SetDescriptor {
    /// `lo <= v <= hi` componentwise. Infinite bounds are allowed.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    NonnegOrthant {
        dim: usize,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `{ v : <a_i, v> <= b_i }` with a certified strictly interior point.
    Halfspaces {
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        interior: Vec<f64>,
    },
    /// Flows `(A, B, C)` in `R^m x R^n x R^{m x n}` (C row-major) with
    /// `C >= 0`, `A_i = sum_j C_ij`, `B_j = sum_i C_ij`, and optionally
    /// `C_ij <= capacity`.
    Transport {
        m: usize,
        n: usize,
        capacity: Option<f64>,
    },
    Product {
        factors: Vec<ConvexSet>,
    },
}

/// A validated nonempty closed convex set.
#[derive(Clone, PartialEq)]
pub struct ConvexSet {
    desc: SetDescriptor,
    dim: usize,
    dykstra: DykstraConfig,
}

impl fmt::Debug for ConvexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexSet")
            .field("dim", &self.dim)
            .field("desc", &self.desc)
            .finish()
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SetError> {
    Err(SetError::Invalid(msg.into()))
}

impl ConvexSet {
    pub fn new(desc: SetDescriptor) -> Result<Self, SetError> {
        let dim = match &desc {
            SetDescriptor::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return invalid("box bounds have different lengths");
                }
                if lo.iter().chain(hi).any(|x| x.is_nan()) {
                    return invalid("box bound is NaN");
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return invalid("box requires lo <= hi componentwise");
                }
                if lo.contains(&f64::INFINITY) || hi.contains(&f64::NEG_INFINITY) {
                    return invalid("box is empty");
                }
                lo.len()
            }
            SetDescriptor::NonnegOrthant { dim } => *dim,
            SetDescriptor::Ball { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return invalid("ball radius must be positive and finite");
                }
                if !crate::linalg::all_finite(center) {
                    return invalid("ball center must be finite");
                }
                center.len()
            }
            SetDescriptor::Halfspaces {
                normals,
                offsets,
                interior,
            } => {
                if normals.len() != offsets.len() {
                    return invalid("half-space normals and offsets differ in count");
                }
                let d = interior.len();
                for (a, b) in normals.iter().zip(offsets) {
                    if a.len() != d {
                        return invalid("half-space normal has wrong dimension");
                    }
                    if norm(a) == 0.0 {
                        return invalid("half-space normal is zero");
                    }
                    if !(dot(a, interior) < *b) {
                        return invalid("supplied interior point is not strictly interior");
                    }
                }
                d
            }
            SetDescriptor::Transport { m, n, capacity } => {
                if *m == 0 || *n == 0 {
                    return invalid("transport set needs m, n >= 1");
                }
                if let Some(c) = capacity {
                    if !(c.is_finite() && *c > 0.0) {
                        return invalid("transport capacity must be positive and finite");
                    }
                }
                m + n + m * n
            }
            SetDescriptor::Product { factors } => factors.iter().map(|f| f.dim).sum(),
        };
        Ok(ConvexSet {
            desc,
            dim,
            dykstra: DykstraConfig::default(),
        })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, SetError> {
        Self::new(SetDescriptor::Box { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, SetError> {
        Self::boxed(vec![lo], vec![hi])
    }

    pub fn orthant(dim: usize) -> Self {
        Self::new(SetDescriptor::NonnegOrthant { dim }).expect("orthant is always valid")
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self, SetError> {
        Self::new(SetDescriptor::Ball { center, radius })
    }

    pub fn halfspaces(
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        interior: Vec<f64>,
    ) -> Result<Self, SetError> {
        Self::new(SetDescriptor::Halfspaces {
            normals,
            offsets,
            interior,
        })
    }

    pub fn transport(m: usize, n: usize) -> Result<Self, SetError> {
        Self::new(SetDescriptor::Transport {
            m,
            n,
            capacity: None,
        })
    }

    pub fn transport_capped(m: usize, n: usize, capacity: f64) -> Result<Self, SetError> {
        Self::new(SetDescriptor::Transport {
            m,
            n,
            capacity: Some(capacity),
        })
    }

    pub fn product(factors: Vec<ConvexSet>) -> Result<Self, SetError> {
        Self::new(SetDescriptor::Product { factors })
    }

    pub fn with_dykstra(mut self, cfg: DykstraConfig) -> Self {
        if let SetDescriptor::Product { factors } = &mut self.desc {
            for f in factors.iter_mut() {
                *f = f.clone().with_dykstra(cfg);
            }
        }
        self.dykstra = cfg;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptor(&self) -> &SetDescriptor {
        &self.desc
    }

    pub fn dykstra(&self) -> DykstraConfig {
        self.dykstra
    }

    /// True for the closed convex cones of the catalog: orthants, uncapped
    /// transport sets, and products of those.
    pub fn is_cone(&self) -> bool {
        match &self.desc {
            SetDescriptor::NonnegOrthant { .. } => true,
            SetDescriptor::Transport { capacity, .. } => capacity.is_none(),
            SetDescriptor::Product { factors } => factors.iter().all(ConvexSet::is_cone),
            _ => false,
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<(), SetError> {
        if v.len() != self.dim {
            return Err(SetError::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Euclidean projection of `v` onto the set.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, SetError> {
        self.check_dim(v)?;
        match &self.desc {
            SetDescriptor::Box { lo, hi } => Ok(v
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (l, h))| x.max(*l).min(*h))
                .collect()),
            SetDescriptor::NonnegOrthant { .. } => Ok(v.iter().map(|x| x.max(0.0)).collect()),
            SetDescriptor::Ball { center, radius } => Ok(project_ball(center, *radius, v)),
            SetDescriptor::Halfspaces {
                normals, offsets, ..
            } => self.project_halfspaces(normals, offsets, v),
            SetDescriptor::Transport { m, n, capacity } => {
                self.project_transport(*m, *n, *capacity, v)
            }
            SetDescriptor::Product { factors } => {
                let mut out = Vec::with_capacity(self.dim);
                let mut off = 0;
                for f in factors {
                    out.extend(f.project(&v[off..off + f.dim])?);
                    off += f.dim;
                }
                Ok(out)
            }
        }
    }

    fn project_halfspaces(
        &self,
        normals: &[Vec<f64>],
        offsets: &[f64],
        v: &[f64],
    ) -> Result<Vec<f64>, SetError> {
        let sq: Vec<f64> = normals.iter().map(|a| dot(a, a)).collect();
        let k = normals.len();
        let mut x = v.to_vec();
        let mut incr = vec![vec![0.0; v.len()]; k];
        let tol = self.dykstra.tol * (1.0 + norm(v));
        let mut change = f64::INFINITY;
        for _ in 0..self.dykstra.max_sweeps {
            let start = x.clone();
            for i in 0..k {
                // y = x + p_i; x = P_i(y); p_i = y - x
                let mut y = x.clone();
                axpy(1.0, &incr[i], &mut y);
                let excess = dot(&normals[i], &y) - offsets[i];
                let mut proj = y.clone();
                if excess > 0.0 {
                    axpy(-excess / sq[i], &normals[i], &mut proj);
                }
                incr[i] = sub(&y, &proj);
                x = proj;
            }
            change = dist(&x, &start);
            if change <= tol {
                return Ok(x);
            }
        }
        Err(SetError::DykstraBudget {
            sweeps: self.dykstra.max_sweeps,
            residual: change,
        })
    }

    fn project_transport(
        &self,
        m: usize,
        n: usize,
        capacity: Option<f64>,
        v: &[f64],
    ) -> Result<Vec<f64>, SetError> {
        let cap = capacity.unwrap_or(f64::INFINITY);
        let mut x = v.to_vec();
        let mut p_box = vec![0.0; v.len()];
        let mut p_lin = vec![0.0; v.len()];
        let tol = self.dykstra.tol * (1.0 + norm(v));
        let mut change = f64::INFINITY;
        for _ in 0..self.dykstra.max_sweeps {
            let start = x.clone();
            // flow bounds on C; A and B are free here
            let y = add(&x, &p_box);
            let mut z = y.clone();
            for c in &mut z[m + n..] {
                *c = c.max(0.0).min(cap);
            }
            p_box = sub(&y, &z);
            // balance equalities
            let y = add(&z, &p_lin);
            let w = project_transport_balance(m, n, &y);
            p_lin = sub(&y, &w);
            x = w;
            change = dist(&x, &start);
            if change <= tol {
                return Ok(x);
            }
        }
        Err(SetError::DykstraBudget {
            sweeps: self.dykstra.max_sweeps,
            residual: change,
        })
    }

    /// True iff every defining constraint is violated by at most `tol`.
    pub fn contains(&self, v: &[f64], tol: f64) -> Result<bool, SetError> {
        self.check_dim(v)?;
        Ok(match &self.desc {
            SetDescriptor::Box { lo, hi } => v
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol),
            SetDescriptor::NonnegOrthant { .. } => v.iter().all(|x| *x >= -tol),
            SetDescriptor::Ball { center, radius } => dist(v, center) <= radius + tol,
            SetDescriptor::Halfspaces {
                normals, offsets, ..
            } => normals
                .iter()
                .zip(offsets)
                .all(|(a, b)| (dot(a, v) - b) / norm(a) <= tol),
            SetDescriptor::Transport { m, n, capacity } => {
                let (m, n) = (*m, *n);
                let cap = capacity.unwrap_or(f64::INFINITY);
                let c = &v[m + n..];
                let flows_ok = c.iter().all(|x| *x >= -tol && *x <= cap + tol);
                let rows_ok = (0..m).all(|i| {
                    let s: f64 = c[i * n..(i + 1) * n].iter().sum();
                    (v[i] - s).abs() <= tol
                });
                let cols_ok = (0..n).all(|j| {
                    let s: f64 = (0..m).map(|i| c[i * n + j]).sum();
                    (v[m + j] - s).abs() <= tol
                });
                flows_ok && rows_ok && cols_ok
            }
            SetDescriptor::Product { factors } => {
                let mut off = 0;
                for f in factors {
                    if !f.contains(&v[off..off + f.dim], tol)? {
                        return Ok(false);
                    }
                    off += f.dim;
                }
                true
            }
        })
    }

    /// The support function `sup_{x in set} <x, y>`, possibly `+inf`.
    pub fn support(&self, y: &[f64]) -> Result<f64, SetError> {
        self.check_dim(y)?;
        self.support_tol(y, 0.0)
    }

    // Cone sign tests treat values up to `tol` as nonpositive.
    fn support_tol(&self, y: &[f64], tol: f64) -> Result<f64, SetError> {
        Ok(match &self.desc {
            SetDescriptor::Box { lo, hi } => y
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(yi, (l, h))| {
                    if *yi > 0.0 {
                        yi * h
                    } else if *yi < 0.0 {
                        yi * l
                    } else {
                        0.0
                    }
                })
                .sum(),
            SetDescriptor::NonnegOrthant { .. } => {
                if y.iter().all(|yi| *yi <= tol) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            SetDescriptor::Ball { center, radius } => dot(center, y) + radius * norm(y),
            SetDescriptor::Transport { m, n, capacity } => {
                let (m, n) = (*m, *n);
                // extreme rays: C = E_ij with A = e_i, B = e_j
                let mut total = 0.0;
                for i in 0..m {
                    for j in 0..n {
                        let g = y[i] + y[m + j] + y[m + n + i * n + j];
                        match capacity {
                            None if g > tol => return Ok(f64::INFINITY),
                            None => {}
                            Some(cap) => total += cap * g.max(0.0),
                        }
                    }
                }
                total
            }
            SetDescriptor::Halfspaces { interior, .. } => self.support_by_ascent(interior, y)?,
            SetDescriptor::Product { factors } => {
                let mut off = 0;
                let mut total = 0.0;
                for f in factors {
                    total += f.support_tol(&y[off..off + f.dim], tol)?;
                    off += f.dim;
                }
                total
            }
        })
    }

    // Proximal-point ascent x <- P(x + s y) with doubling steps. On a
    // polyhedron this reaches a maximizer after finitely many steps; the
    // result is accepted only once P(x + y) = x holds to 1e-8.
    fn support_by_ascent(&self, start: &[f64], y: &[f64]) -> Result<f64, SetError> {
        let ny = norm(y);
        if ny == 0.0 {
            return Ok(0.0);
        }
        let dir = scale(1.0 / ny, y);
        let base = 1.0 + norm(start);
        let mut x = start.to_vec();
        let mut step = base;
        let mut residual = f64::INFINITY;
        for _ in 0..120 {
            let mut trial = x.clone();
            axpy(step, &dir, &mut trial);
            let next = self.project(&trial)?;
            if dist(&next, start) > 1e9 * base {
                return Ok(f64::INFINITY);
            }
            let mut probe = next.clone();
            axpy(base, &dir, &mut probe);
            residual = dist(&next, &self.project(&probe)?) / base;
            x = next;
            if residual <= 1e-8 {
                return Ok(dot(&x, y));
            }
            step *= 2.0;
        }
        Err(SetError::SupportNotCertified { residual })
    }

    /// Membership of `y` in the polar set `{ y : <x, y> <= 1 for all x }`.
    pub fn polar_contains(&self, y: &[f64], tol: f64) -> Result<bool, SetError> {
        self.check_dim(y)?;
        if !self.contains(&vec![0.0; self.dim], 1e-12)? {
            return Err(SetError::OriginNotContained);
        }
        Ok(self.support_tol(y, tol)? <= 1.0 + tol)
    }

    /// Draws a point of the set. Used by the constant estimators and the
    /// randomized certificates; not a uniform sampler.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>, SetError> {
        Ok(match &self.desc {
            SetDescriptor::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| match (l.is_finite(), h.is_finite()) {
                    (true, true) => l + (h - l) * rng.random::<f64>(),
                    (true, false) => l + sample_exp(rng),
                    (false, true) => h - sample_exp(rng),
                    (false, false) => rng.sample::<f64, _>(StandardNormal),
                })
                .collect(),
            SetDescriptor::NonnegOrthant { dim } => (0..*dim).map(|_| sample_flow(rng)).collect(),
            SetDescriptor::Ball { center, radius } => {
                let d = center.len();
                let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let gn = norm(&g).max(f64::MIN_POSITIVE);
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                center
                    .iter()
                    .zip(&g)
                    .map(|(c, gi)| c + r * gi / gn)
                    .collect()
            }
            SetDescriptor::Halfspaces { interior, .. } => {
                let spread = 1.0 + norm(interior);
                let v: Vec<f64> = interior
                    .iter()
                    .map(|c| c + spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                self.project(&v)?
            }
            SetDescriptor::Transport { m, n, capacity } => {
                let (m, n) = (*m, *n);
                let c: Vec<f64> = (0..m * n)
                    .map(|_| match capacity {
                        Some(cap) => {
                            if rng.random::<f64>() < 0.2 {
                                0.0
                            } else {
                                cap * rng.random::<f64>()
                            }
                        }
                        None => sample_flow(rng),
                    })
                    .collect();
                transport_point(m, n, &c)
            }
            SetDescriptor::Product { factors } => {
                let mut out = Vec::with_capacity(self.dim);
                for f in factors {
                    out.extend(f.sample(rng)?);
                }
                out
            }
        })
    }

    /// The same set scaled about the origin by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<ConvexSet, SetError> {
        if !(factor.is_finite() && factor > 0.0) {
            return invalid("scale factor must be positive");
        }
        let desc = match &self.desc {
            SetDescriptor::Box { lo, hi } => SetDescriptor::Box {
                lo: scale(factor, lo),
                hi: scale(factor, hi),
            },
            SetDescriptor::NonnegOrthant { dim } => SetDescriptor::NonnegOrthant { dim: *dim },
            SetDescriptor::Ball { center, radius } => SetDescriptor::Ball {
                center: scale(factor, center),
                radius: radius * factor,
            },
            SetDescriptor::Halfspaces {
                normals,
                offsets,
                interior,
            } => SetDescriptor::Halfspaces {
                normals: normals.clone(),
                offsets: scale(factor, offsets),
                interior: scale(factor, interior),
            },
            SetDescriptor::Transport { m, n, capacity } => SetDescriptor::Transport {
                m: *m,
                n: *n,
                capacity: capacity.map(|c| c * factor),
            },
            SetDescriptor::Product { factors } => SetDescriptor::Product {
                factors: factors
                    .iter()
                    .map(|f| f.scaled(factor))
                    .collect::<Result<_, _>>()?,
            },
        };
        Ok(ConvexSet::new(desc)?.with_dykstra(self.dykstra))
    }
}

fn sample_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

// Nonnegative coordinate with an atom at zero so boundary faces get hit.
fn sample_flow<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<f64>() < 0.2 {
        0.0
    } else {
        sample_exp(rng)
    }
}

fn project_ball(center: &[f64], radius: f64, v: &[f64]) -> Vec<f64> {
    let d = dist(v, center);
    if d <= radius {
        return v.to_vec();
    }
    let s = radius / d;
    center.iter().zip(v).map(|(c, x)| c + s * (x - c)).collect()
}

/// Stacks flows `c` (row-major `m x n`) into the point `(A, B, C)` of the
/// transportation set.
pub fn transport_point(m: usize, n: usize, c: &[f64]) -> Vec<f64> {
    assert_eq!(c.len(), m * n, "flow matrix has wrong size");
    let mut out = vec![0.0; m + n + m * n];
    for i in 0..m {
        for j in 0..n {
            let f = c[i * n + j];
            out[i] += f;
            out[m + j] += f;
            out[m + n + i * n + j] = f;
        }
    }
    out
}

/// Orthogonal projection onto the balance subspace
/// `{ A_i = sum_j C_ij, B_j = sum_i C_ij }`.
///
/// With `M` the constraint matrix, `M M^T = [[(1+n) I, J], [J^T, (1+m) I]]`
/// (`J` all ones) has an explicit inverse action, so the projection
/// `v - M^T (M M^T)^{-1} M v` costs `O(mn)`.
pub fn project_transport_balance(m: usize, n: usize, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(v.len(), m + n + m * n);
    let c = &v[m + n..];
    let r: Vec<f64> = (0..m)
        .map(|i| v[i] - c[i * n..(i + 1) * n].iter().sum::<f64>())
        .collect();
    let s: Vec<f64> = (0..n)
        .map(|j| v[m + j] - (0..m).map(|i| c[i * n + j]).sum::<f64>())
        .collect();
    let (mf, nf) = (m as f64, n as f64);
    let rs: f64 = r.iter().sum();
    let ss: f64 = s.iter().sum();
    let det = 1.0 + mf + nf;
    let ysum = (rs * (1.0 + mf) - mf * ss) / det;
    let zsum = ((1.0 + nf) * ss - nf * rs) / det;
    let y: Vec<f64> = r.iter().map(|ri| (ri - zsum) / (1.0 + nf)).collect();
    let z: Vec<f64> = s.iter().map(|sj| (sj - ysum) / (1.0 + mf)).collect();
    let mut out = v.to_vec();
    for i in 0..m {
        out[i] -= y[i];
    }
    for j in 0..n {
        out[m + j] -= z[j];
    }
    for i in 0..m {
        for j in 0..n {
            out[m + n + i * n + j] += y[i] + z[j];
        }
    }
    out
}

/// How a parameter sequence approaches its limit.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamSequence {
    /// `limit + offset / k`
    Harmonic { limit: Vec<f64>, offset: Vec<f64> },
    /// `limit + offset * 2^-k`
    Dyadic { limit: Vec<f64>, offset: Vec<f64> },
}

impl ParamSequence {
    pub fn harmonic(limit: Vec<f64>, offset: Vec<f64>) -> Self {
        ParamSequence::Harmonic { limit, offset }
    }

    pub fn dyadic(limit: Vec<f64>, offset: Vec<f64>) -> Self {
        ParamSequence::Dyadic { limit, offset }
    }

    pub fn limit(&self) -> &[f64] {
        match self {
            ParamSequence::Harmonic { limit, .. } | ParamSequence::Dyadic { limit, .. } => limit,
        }
    }

    /// The `k`-th term; `k >= 1`.
    pub fn term(&self, k: usize) -> Vec<f64> {
        let (limit, offset, w) = match self {
            ParamSequence::Harmonic { limit, offset } => (limit, offset, 1.0 / k as f64),
            ParamSequence::Dyadic { limit, offset } => (limit, offset, 0.5f64.powi(k as i32)),
        };
        limit.iter().zip(offset).map(|(l, o)| l + w * o).collect()
    }
}

pub type SetMap = Arc<dyn Fn(&[f64]) -> Result<ConvexSet, SetError> + Send + Sync>;

/// A parametrized family `mu -> K_mu` together with a sequence `mu_n -> mu`.
#[derive(Clone)]
pub struct SetFamily {
    map: SetMap,
    sequence: ParamSequence,
    limit_set: ConvexSet,
}

impl fmt::Debug for SetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SetFamily")
            .field("sequence", &self.sequence)
            .field("limit_set", &self.limit_set)
            .finish()
    }
}

impl SetFamily {
    pub fn new(map: SetMap, sequence: ParamSequence) -> Result<Self, SetError> {
        let limit_set = map(sequence.limit())?;
        if !limit_set.contains(&vec![0.0; limit_set.dim()], 1e-12)? {
            return Err(SetError::OriginNotContained);
        }
        Ok(SetFamily {
            map,
            sequence,
            limit_set,
        })
    }

    /// `K_mu = (1 + mu) * base` for scalar `mu`. Shrinks onto `base` as
    /// `mu -> 0` whenever `base` contains the origin.
    pub fn scaled(base: ConvexSet, sequence: ParamSequence) -> Result<Self, SetError> {
        if sequence.limit().len() != 1 {
            return invalid("scaled family takes a scalar parameter");
        }
        let map: SetMap = Arc::new(move |mu: &[f64]| base.scaled(1.0 + mu[0]));
        Self::new(map, sequence)
    }

    pub fn limit_set(&self) -> &ConvexSet {
        &self.limit_set
    }

    pub fn sequence(&self) -> &ParamSequence {
        &self.sequence
    }

    pub fn set_at_param(&self, mu: &[f64]) -> Result<ConvexSet, SetError> {
        let set = (self.map)(mu)?;
        if set.dim() != self.limit_set.dim() {
            return Err(SetError::DimensionMismatch {
                expected: self.limit_set.dim(),
                found: set.dim(),
            });
        }
        if !set.contains(&vec![0.0; set.dim()], 1e-12)? {
            return Err(SetError::OriginNotContained);
        }
        Ok(set)
    }

    /// `K_{mu_n}`.
    pub fn set_at(&self, n: usize) -> Result<ConvexSet, SetError> {
        self.set_at_param(&self.sequence.term(n))
    }
}

/// Largest projection gap `|P_{K_n}(v) - P_K(v)|` over the probe points.
pub fn mosco_probe(family: &SetFamily, n: usize, probes: &[Vec<f64>]) -> Result<f64, SetError> {
    if probes.is_empty() {
        return Err(SetError::EmptyProbes);
    }
    let set_n = family.set_at(n)?;
    let mut gap: f64 = 0.0;
    for v in probes {
        let a = set_n.project(v)?;
        let b = family.limit_set().project(v)?;
        gap = gap.max(dist(&a, &b));
    }
    Ok(gap)
}
