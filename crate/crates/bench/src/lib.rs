//! Fixtures shared by the benchmarks under `benches/`.

use sfdvi::engine::{CoefficientSet, JumpAtom, JumpMeasure, TimeGrid};
use sfdvi::models::{AffineModel, Link};
use sfdvi::sets::ConvexSet;
use sfdvi::solver::{SolverConfig, VIProblem};

pub struct PathFixture {
    pub coeffs: CoefficientSet,
    pub jumps: JumpMeasure,
    pub vi: VIProblem,
    pub cfg: SolverConfig,
    pub grid: TimeGrid,
    pub p0: Vec<f64>,
}

/// Affine four-state system on a capped 2x2 transport set.
pub fn transport_system(steps: usize) -> PathFixture {
    let model = AffineModel {
        drift0: 0.1,
        drift_x: -0.5,
        drift_u: 0.4,
        frac0: 0.2,
        frac_x: 0.1,
        vol0: 0.2,
        vol_x: 0.1,
        jump0: 0.5,
        jump_x: 0.1,
        target: 0.8,
        field_x: 0.5,
        ..AffineModel::new(Link::Identity, 4, 2)
    };
    let jumps = JumpMeasure::new(
        vec![
            JumpAtom {
                mark: vec![0.3, -0.2, 0.1, 0.2],
                weight: 2.0,
            },
            JumpAtom {
                mark: vec![-0.25, 0.15, -0.3, 0.1],
                weight: 1.0,
            },
        ],
        1.0,
    )
    .expect("valid measure");
    let set = ConvexSet::transport_capped(2, 2, 0.5).expect("valid set");
    let coeffs = model
        .coefficients(set.dim(), &jumps)
        .expect("valid coefficients");
    let vi = model.vi_problem(set).expect("valid problem");
    let cfg = SolverConfig::for_problem(&vi).expect("admissible step");
    PathFixture {
        coeffs,
        jumps,
        vi,
        cfg,
        grid: TimeGrid::new(1.0, steps, 0.75).expect("valid grid"),
        p0: vec![0.5, -0.2, 0.1, 0.3],
    }
}
