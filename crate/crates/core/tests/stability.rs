use std::sync::Arc;

use proptest::prelude::*;
use sfdvi::engine::{CoefficientSet, JumpMeasure, Moduli, PathSolution, TimeGrid};
use sfdvi::sets::{ConvexSet, ParamSequence, SetFamily};
use sfdvi::solver::{SolverConfig, VIField};
use sfdvi::stability::{
    h_norm_diff, projection_convergence_report, run_stability, theory_constants, CellIndex,
    CoeffMap, PerturbationFamily, SystemPart, TheoryInputs,
};

fn path(x: Vec<Vec<f64>>, u: Vec<Vec<f64>>, seed: u64) -> PathSolution {
    let n = x.len();
    PathSolution {
        x,
        u,
        vi_iters: vec![0; n],
        vi_steps: vec![0.0; n],
        seed,
    }
}

fn constant_path(n: usize, x: f64, u: f64, seed: u64) -> PathSolution {
    path(vec![vec![x, 0.0]; n + 1], vec![vec![u]; n + 1], seed)
}

#[test]
fn h_norm_examples() {
    let grid = TimeGrid::new(2.0, 10, 0.75).unwrap();
    let a = vec![constant_path(10, 1.0, 2.0, 0)];
    assert_eq!(h_norm_diff(&a, &a, &grid).unwrap(), (0.0, 0.0));
    let b = vec![constant_path(10, 4.0, 2.0, 0)];
    let (ex, eu) = h_norm_diff(&a, &b, &grid).unwrap();
    assert!((ex - 3.0 * 2f64.sqrt()).abs() < 1e-12 && eu == 0.0);
    let a2 = vec![
        constant_path(10, 1.0, 2.0, 0),
        constant_path(10, 0.0, 0.0, 1),
    ];
    let b2 = vec![
        constant_path(10, 4.0, 2.0, 0),
        constant_path(10, 0.0, 0.0, 1),
    ];
    let (ex, _) = h_norm_diff(&a2, &b2, &grid).unwrap();
    assert!((ex - 3.0 * (2.0f64 / 2.0).sqrt()).abs() < 1e-12);
    assert!(h_norm_diff(&a, &a2, &grid).is_err());
    assert!(h_norm_diff(&a, &[constant_path(10, 1.0, 2.0, 9)], &grid).is_err());
}

fn inputs(c_bar: f64, l_f: f64, rho: f64) -> TheoryInputs {
    TheoryInputs {
        c_bar,
        l_f,
        rho,
        alpha: 0.75,
        horizon: 1.0,
        lipschitz: Moduli::uniform(1.0),
    }
}

#[test]
fn theory_constant_examples() {
    let k = theory_constants(&inputs(1.0, 1.0, 1.0)).unwrap();
    assert!(
        (k.m_bar - 2.0).abs() < 1e-12
            && (k.n_bar - 2.0).abs() < 1e-12
            && (k.n_hat - 2.0).abs() < 1e-12
    );
    let k = theory_constants(&inputs(1.0, 2.0, 0.25)).unwrap();
    let oracle = 2.0 * 0.0625 * 4.0 / (1.0 - 0.75f64.sqrt()).powi(2);
    assert!((k.m_bar - oracle).abs() < 1e-9);
    assert!((k.m_bar - 27.85).abs() < 0.01);
    assert!((k.z_bar - 40.5).abs() < 1e-9);
    assert!((k.b0 - 81.0 * (1.0 + k.m_bar)).abs() < 1e-9);
    assert!((k.d0 - 40.5 * (1.0 + k.m_bar)).abs() < 1e-9);
    assert!(theory_constants(&inputs(1.0, 1.0, 2.0)).is_err());
    assert!(theory_constants(&inputs(1.0, 1.0, 0.0)).is_err());
    let mut bad = inputs(1.0, 1.0, 1.0);
    bad.alpha = 0.5;
    assert!(theory_constants(&bad).is_err());
}

proptest! {
    #[test]
    fn theory_constants_symmetry_and_monotonicity(
        c in 0.1f64..1.0, extra in 1.05f64..3.0, t in 0.05f64..0.95,
        ls in prop::array::uniform4(0.0f64..5.0),
    ) {
        let l_f = c * extra;
        let rho = t * c / (l_f * l_f);
        let mk = |lip: Moduli, c: f64| theory_constants(&TheoryInputs { c_bar: c, l_f, rho, alpha: 0.8, horizon: 1.5, lipschitz: lip }).unwrap();
        let base = mk(Moduli { b: ls[0], sigma: ls[1], sigma1: ls[2], g: ls[3] }, c);
        let swapped = mk(Moduli { b: ls[0], sigma: ls[3], sigma1: ls[2], g: ls[1] }, c);
        prop_assert!((base.z_bar - swapped.z_bar).abs() <= 1e-12 * base.z_bar.max(1.0));
        prop_assert!((base.b0 - swapped.b0).abs() <= 1e-12 * base.b0.max(1.0));
        let tighter = mk(Moduli::uniform(1.0), c * 1.01);
        let looser = mk(Moduli::uniform(1.0), c);
        prop_assert!(tighter.m_bar < looser.m_bar);
        prop_assert!(base.m_bar > 0.0 && base.n_bar > 0.0 && base.m_hat > 0.0 && base.n_hat > 0.0);
    }
}

/// `F(u) = u - 2`, drift `b = drift`, nothing else.
fn scalar_family(drift_shift: bool, set_shift: bool) -> PerturbationFamily {
    let coeffs: CoeffMap = Arc::new(move |lam: &[f64]| {
        let b = if drift_shift { lam[0] } else { 0.0 };
        let field: VIField = Arc::new(|_, _, u: &[f64]| vec![u[0] - 2.0]);
        Ok(SystemPart {
            coeffs: CoefficientSet::zero(1, 1, 1)
                .with_drift(Arc::new(move |_, _, _| vec![b]))
                .with_constants(Moduli::uniform(1.0), Moduli::uniform(1.0)),
            field,
            c_bar: 1.0,
            l_f: 1.0,
        })
    });
    let off = |on: bool| vec![if on { 1.0 } else { 0.0 }];
    let sets = SetFamily::scaled(
        ConvexSet::interval(0.0, 1.0).unwrap(),
        ParamSequence::harmonic(vec![0.0], off(set_shift)),
    )
    .unwrap();
    PerturbationFamily::new(
        coeffs,
        ParamSequence::harmonic(vec![0.0], off(drift_shift)),
        sets,
        JumpMeasure::empty(),
        vec![0.0],
    )
    .unwrap()
}

fn cfg(family: &PerturbationFamily) -> SolverConfig {
    let (_, vi) = family.system(CellIndex::Limit, CellIndex::Limit).unwrap();
    SolverConfig::for_problem(&vi).unwrap()
}

#[test]
fn identity_perturbation_has_zero_error() {
    let fam = scalar_family(false, false);
    let grid = TimeGrid::new(1.0, 32, 0.75).unwrap();
    let rep = run_stability(&fam, &[1, 2], &[1, 3], &grid, 8, 1, &cfg(&fam)).unwrap();
    assert_eq!(rep.cells.len(), 9);
    assert!(rep
        .cells
        .iter()
        .all(|c| c.err_x == 0.0 && c.err_u == 0.0 && c.mc_stderr == 0.0));
}

#[test]
fn set_perturbation_matches_closed_form() {
    let fam = scalar_family(false, true);
    let grid = TimeGrid::new(2.0, 40, 0.75).unwrap();
    let rep = run_stability(&fam, &[1], &[1, 2, 4, 8], &grid, 4, 3, &cfg(&fam)).unwrap();
    for n in [1usize, 2, 4, 8] {
        for m in [CellIndex::Finite(1), CellIndex::Limit] {
            let c = rep.get(m, CellIndex::Finite(n)).unwrap();
            assert!((c.err_u - 2f64.sqrt() / n as f64).abs() < 1e-12, "{c:?}");
            assert_eq!(c.err_x, 0.0);
        }
    }
    assert_eq!(
        rep.get(CellIndex::Limit, CellIndex::Limit).unwrap().err_u,
        0.0
    );
}

#[test]
fn drift_perturbation_is_monotone_and_explicit() {
    let fam = scalar_family(true, false);
    let grid = TimeGrid::new(1.0, 64, 0.75).unwrap();
    let ms = [1usize, 2, 4, 8];
    let rep = run_stability(&fam, &ms, &[1], &grid, 4, 3, &cfg(&fam)).unwrap();
    let mut prev = f64::INFINITY;
    for m in ms {
        let c = rep.get(CellIndex::Finite(m), CellIndex::Limit).unwrap();
        // x_m(t_k) - x(t_k) = t_k / m on every path
        let oracle =
            ((0..64).map(|k| (k as f64 / 64.0).powi(2)).sum::<f64>() / 64.0).sqrt() / m as f64;
        assert!((c.err_x - oracle).abs() < 1e-12);
        assert!(c.err_x <= 1.0 / m as f64);
        assert!(c.err_x < prev);
        prev = c.err_x;
    }
}

#[test]
fn run_rejects_bad_lists() {
    let fam = scalar_family(true, true);
    let grid = TimeGrid::new(1.0, 8, 0.75).unwrap();
    let c = cfg(&fam);
    assert!(run_stability(&fam, &[], &[1], &grid, 2, 0, &c).is_err());
    assert!(run_stability(&fam, &[2, 1], &[1], &grid, 2, 0, &c).is_err());
    assert!(run_stability(&fam, &[0, 1], &[1], &grid, 2, 0, &c).is_err());
    assert!(run_stability(&fam, &[1], &[1], &grid, 0, 0, &c).is_err());
}

#[test]
fn projection_report_examples() {
    let fam = scalar_family(false, true);
    let rep = projection_convergence_report(&fam, &[1, 2, 4, 8], &[vec![2.0]]).unwrap();
    let gaps: Vec<f64> = rep.iter().map(|r| r.1).collect();
    assert_eq!(gaps, vec![1.0, 0.5, 0.25, 0.125]);
    let fixed = scalar_family(false, false);
    let rep = projection_convergence_report(&fixed, &[1, 2, 4], &[vec![2.0], vec![-1.0]]).unwrap();
    assert!(rep.iter().all(|r| r.1 == 0.0));
    assert!(projection_convergence_report(&fam, &[1], &[]).is_err());
}
