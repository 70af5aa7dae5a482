//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::fs;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sfdvi::applications::{
    build_game, build_spep, complementarity_check, verify_nash, MarketDynamics, QuadraticGame,
    SpatialMarketSpec, SpepFormulation,
};
use sfdvi::engine::{
    doob_bound_check, gen_noise, integrate_path, ito_isometry_check, jump_martingale_check,
    CoefficientSet, JumpAtom, JumpMeasure, Moduli, PathSolution, TimeGrid,
};
use sfdvi::linalg::{dist, dot, sub};
use sfdvi::sets::{mosco_probe, ConvexSet, ParamSequence, SetFamily};
use sfdvi::solver::{
    contraction_factor, optimal_rho, solve_vi, solve_vi_traced, InitialGuess, SolverConfig,
    VIField, VIProblem,
};
use sfdvi::stability::{theory_constants, TheoryInputs};
use sfdvi_cli::{parse_csv, parse_scenario, run_scenario, ResultTable};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenario(name: &str) -> String {
    fs::read_to_string(format!(
        "{}/../../scenarios/{name}",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

fn catalog() -> Vec<(&'static str, ConvexSet)> {
    vec![
        (
            "box",
            ConvexSet::boxed(vec![-1.0, 0.0, -0.5], vec![1.0, 2.0, f64::INFINITY]).unwrap(),
        ),
        ("orthant", ConvexSet::orthant(4)),
        ("ball", ConvexSet::ball(vec![0.5, -0.5, 1.0], 1.5).unwrap()),
        (
            "halfspaces",
            ConvexSet::halfspaces(
                vec![
                    vec![1.0, 1.0, 0.0],
                    vec![-1.0, 0.5, 1.0],
                    vec![0.0, -1.0, 2.0],
                ],
                vec![1.0, 2.0, 1.5],
                vec![0.0; 3],
            )
            .unwrap(),
        ),
        ("transport", ConvexSet::transport(2, 3).unwrap()),
        (
            "transport_capped",
            ConvexSet::transport_capped(2, 2, 0.7).unwrap(),
        ),
        (
            "product",
            ConvexSet::product(vec![
                ConvexSet::orthant(2),
                ConvexSet::ball(vec![0.0; 2], 1.0).unwrap(),
                ConvexSet::transport(1, 2).unwrap(),
            ])
            .unwrap(),
        ),
    ]
}

fn random_point(rng: &mut StdRng, d: usize, r: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-r..r)).collect()
}

fn criterion_1() -> Outcome {
    let tol = 1e-8;
    let mut rng = StdRng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for (name, set) in catalog() {
        let d = set.dim();
        for _ in 0..1000 {
            let v = random_point(&mut rng, d, 4.0);
            let w = random_point(&mut rng, d, 4.0);
            let pv = set.project(&v).unwrap();
            let pw = set.project(&w).unwrap();
            let idem = dist(&set.project(&pv).unwrap(), &pv);
            let z = set.sample(&mut rng).unwrap();
            let vi = dot(&sub(&v, &pv), &sub(&z, &pv));
            let dp = sub(&pv, &pw);
            let firm = dot(&dp, &dp) - dot(&dp, &sub(&v, &w));
            worst = worst.max(idem).max(vi).max(firm);
            ensure(set.contains(&pv, tol).unwrap(), || {
                format!("{name}: projection left the set")
            })?;
            ensure(idem <= tol, || {
                format!("{name}: idempotence defect {idem:e}")
            })?;
            ensure(vi <= tol, || format!("{name}: variational defect {vi:e}"))?;
            ensure(firm <= tol, || {
                format!("{name}: firm nonexpansiveness defect {firm:e}")
            })?;
        }
    }
    Ok(format!(
        "7 set types x 1000 points, worst defect {worst:.2e}"
    ))
}

/// `F(u) = A u + b` with moduli from the eigen and singular value oracles.
fn affine_problem(set: ConvexSet, seed: u64) -> VIProblem {
    let d = set.dim();
    let mut rng = StdRng::seed_from_u64(seed);
    let a = DMatrix::from_fn(d, d, |i, j| {
        let r: f64 = rng.random_range(-0.4..0.4);
        if i == j {
            1.0 + r.abs()
        } else {
            r
        }
    });
    let b: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let c = ((&a + a.transpose()) * 0.5)
        .symmetric_eigen()
        .eigenvalues
        .min();
    let l = a.clone().svd(false, false).singular_values.max();
    let field: VIField = Arc::new(move |_, _, u: &[f64]| {
        let v = &a * DVector::from_column_slice(u);
        v.iter().zip(&b).map(|(x, y)| x + y).collect()
    });
    VIProblem::new(set, field, c, l).unwrap()
}

fn solver_sets() -> Vec<(&'static str, ConvexSet)> {
    vec![
        (
            "box",
            ConvexSet::boxed(vec![-1.0, 0.0, -0.5], vec![1.0, 2.0, 0.5]).unwrap(),
        ),
        ("transport", ConvexSet::transport(2, 2).unwrap()),
    ]
}

fn criterion_2() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut windows = 0usize;
    for (k, (name, set)) in solver_sets().into_iter().enumerate() {
        let p = affine_problem(set, 40 + k as u64);
        let rho_star = optimal_rho(p.c_bar, p.l_f).unwrap();
        for frac in [0.25, 0.5, 1.0] {
            let rho = frac * rho_star;
            let q = contraction_factor(rho, p.c_bar, p.l_f).unwrap();
            for _ in 0..100 {
                let start = random_point(&mut rng, p.dim(), 5.0);
                let cfg = SolverConfig::for_problem(&p)
                    .unwrap()
                    .with_rho(rho)
                    .with_tol(1e-12)
                    .with_init(InitialGuess::Point(start));
                let (_, trace) = solve_vi_traced(&p, &cfg, 0.0, &[]).map_err(|e| e.to_string())?;
                for w in trace.windows(2) {
                    // below this the ratio is dominated by rounding
                    if w[0] > 1e-9 {
                        windows += 1;
                        worst_gap = worst_gap.max(w[1] / w[0] - q);
                        ensure(w[1] / w[0] <= q + 1e-6, || {
                            format!(
                                "{name}, rho = {frac} rho*: ratio {} exceeds {q}",
                                w[1] / w[0]
                            )
                        })?;
                    }
                }
            }
        }
    }
    Ok(format!(
        "{windows} ratios checked, max(ratio - factor) = {worst_gap:.2e}"
    ))
}

fn criterion_3() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for (k, (name, set)) in solver_sets().into_iter().enumerate() {
        let p = affine_problem(set, 70 + k as u64);
        let base = SolverConfig::for_problem(&p).unwrap();
        let tol = base.tol;
        let a = solve_vi(&p, &base, 0.0, &[]).map_err(|e| e.to_string())?;
        let b = solve_vi(&p, &base.clone().with_rho(0.4 * base.rho), 0.0, &[])
            .map_err(|e| e.to_string())?;
        let dr = dist(&a.u, &b.u);
        worst = worst.max(dr);
        ensure(dr <= 10.0 * tol, || {
            format!("{name}: rho changed the solution by {dr:e}")
        })?;
        for _ in 0..10 {
            let start = random_point(&mut rng, p.dim(), 10.0);
            let c = solve_vi(
                &p,
                &base.clone().with_init(InitialGuess::Point(start)),
                0.0,
                &[],
            )
            .map_err(|e| e.to_string())?;
            let ds = dist(&a.u, &c.u);
            worst = worst.max(ds);
            ensure(ds <= 10.0 * tol, || {
                format!("{name}: start changed the solution by {ds:e}")
            })?;
        }
    }
    Ok(format!("max distance {worst:.2e} (limit 1e-9)"))
}

fn frac_path(alpha: f64, steps: usize, integrand: fn(f64) -> f64) -> (TimeGrid, PathSolution) {
    let grid = TimeGrid::new(1.0, steps, alpha).unwrap();
    let coeffs =
        CoefficientSet::zero(1, 1, 1).with_frac(Arc::new(move |t, _, _| vec![integrand(t)]));
    let field: VIField = Arc::new(|_, _, u: &[f64]| u.to_vec());
    let vi = VIProblem::new(
        ConvexSet::boxed(vec![-1.0], vec![1.0]).unwrap(),
        field,
        1.0,
        1.0,
    )
    .unwrap();
    let cfg = SolverConfig::for_problem(&vi).unwrap();
    let none = JumpMeasure::empty();
    let noise = gen_noise(&grid, 1, &none, 0);
    let path = integrate_path(&coeffs, &none, &vi, &cfg, &grid, &noise, &[0.0]).unwrap();
    (grid, path)
}

fn fitted_order(dts: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn criterion_4() -> Outcome {
    let mut orders = Vec::new();
    let mut worst_const: f64 = 0.0;
    for alpha in [0.6, 0.75, 0.9] {
        let (grid, path) = frac_path(alpha, 256, |_| 1.0);
        for (k, x) in path.x.iter().enumerate() {
            let e = (x[0] - grid.time(k).powf(alpha)).abs();
            worst_const = worst_const.max(e);
            ensure(e <= 1e-12, || {
                format!("alpha {alpha}: node {k} off by {e:e}")
            })?;
        }
        let (mut dts, mut errs) = (Vec::new(), Vec::new());
        for e in 4..=8 {
            let (grid, path) = frac_path(alpha, 1 << e, |t| t);
            dts.push(grid.dt());
            errs.push((path.x[grid.steps()][0] - 1.0 / (alpha + 1.0)).abs());
        }
        let order = fitted_order(&dts, &errs);
        ensure(order >= 0.9, || {
            format!("alpha {alpha}: fitted order {order}")
        })?;
        orders.push(order);
    }
    Ok(format!("t^a defect {worst_const:.1e}; orders {orders:.3?}"))
}

fn criterion_5() -> Outcome {
    let grid = TimeGrid::new(1.0, 64, 0.75).unwrap();
    let slack = 3.0 * 2f64.sqrt() / (1e5f64).sqrt();
    let mut parts = Vec::new();
    for (name, f) in [("f=1", (|_| 1.0) as fn(f64) -> f64), ("f=t", |t| t)] {
        let r = ito_isometry_check(&f, &grid, 100_000, 5).map_err(|e| e.to_string())?;
        ensure(r.rel_err <= slack, || {
            format!("{name}: rel_err {} > {slack}", r.rel_err)
        })?;
        parts.push(format!("{name} rel_err {:.4}", r.rel_err));
    }
    Ok(format!("{} (slack {slack:.4})", parts.join(", ")))
}

fn criterion_6() -> Outcome {
    let jm = JumpMeasure::new(
        vec![
            JumpAtom {
                mark: vec![0.5],
                weight: 2.0,
            },
            JumpAtom {
                mark: vec![-0.3],
                weight: 1.0,
            },
        ],
        1.0,
    )
    .unwrap();
    let grid = TimeGrid::new(1.0, 64, 0.75).unwrap();
    let r = jump_martingale_check(&jm, &grid, &[0.0], 10_000, 8).map_err(|e| e.to_string())?;
    let bound = 3.0 * r.std / 100.0;
    ensure(r.mean.abs() <= bound, || {
        format!("|mean| {} > {bound}", r.mean.abs())
    })?;
    Ok(format!("mean {:.5}, bound {bound:.5}", r.mean))
}

fn criterion_7() -> Outcome {
    let grid = TimeGrid::new(1.0, 256, 0.75).unwrap();
    let r = doob_bound_check(&grid, 10_000, 6).map_err(|e| e.to_string())?;
    let (lo, hi) = (r.terminal - 3.0 * r.stderr, r.bound + 3.0 * r.stderr);
    ensure(r.empirical >= lo && r.empirical <= hi, || {
        format!("{} outside [{lo}, {hi}]", r.empirical)
    })?;
    Ok(format!(
        "E sup|B|^2 = {:.4} in [{lo:.4}, {hi:.4}]",
        r.empirical
    ))
}

fn criterion_8() -> Outcome {
    let boxes = SetFamily::scaled(
        ConvexSet::boxed(vec![0.0], vec![1.0]).unwrap(),
        ParamSequence::harmonic(vec![0.0], vec![1.0]),
    )
    .unwrap();
    let balls = SetFamily::scaled(
        ConvexSet::ball(vec![0.0; 2], 1.0).unwrap(),
        ParamSequence::dyadic(vec![0.0], vec![1.0]),
    )
    .unwrap();
    let mut last = (f64::INFINITY, f64::INFINITY);
    for n in 1..=8usize {
        let gb = mosco_probe(&boxes, n, &[vec![2.0], vec![-1.0], vec![0.5]])
            .map_err(|e| e.to_string())?;
        let gs = mosco_probe(&balls, n, &[vec![3.0, 0.0], vec![0.0, -2.0]])
            .map_err(|e| e.to_string())?;
        let (eb, es) = (1.0 / n as f64, 0.5f64.powi(n as i32));
        ensure((gb - eb).abs() <= 1e-10, || {
            format!("box n = {n}: gap {gb}, expected {eb}")
        })?;
        ensure((gs - es).abs() <= 1e-10, || {
            format!("ball n = {n}: gap {gs}, expected {es}")
        })?;
        ensure(gb < last.0 && gs < last.1, || {
            format!("gaps not strictly decreasing at n = {n}")
        })?;
        last = (gb, gs);
    }
    Ok("box 1/n and ball 2^-n for n = 1..8".into())
}

fn cell(t: &ResultTable, m: f64, n: f64) -> &[f64] {
    t.rows
        .iter()
        .find(|r| r[0] == m && r[1] == n)
        .expect("cell present")
}

fn check_stability_table(t: &ResultTable) -> Outcome {
    let idx = [1.0, 2.0, 4.0, 8.0, 16.0, f64::INFINITY];
    ensure(
        t.columns == ["m", "n", "err_x", "err_u", "mc_stderr"],
        || format!("columns {:?}", t.columns),
    )?;
    ensure(t.rows.len() == 36, || format!("{} rows", t.rows.len()))?;
    let mut checks = 0;
    for (col, name) in [(2usize, "err_x"), (3, "err_u")] {
        let e = |m: f64, n: f64| cell(t, m, n)[col];
        let s = |m: f64, n: f64| cell(t, m, n)[4];
        for &m in &idx {
            for w in idx.windows(2) {
                // nonincreasing along n and along m
                let slack = 3.0 * s(m, w[0]).max(s(m, w[1]));
                ensure(e(m, w[1]) <= e(m, w[0]) + slack, || {
                    format!("{name} rises from n = {} to {} at m = {m}", w[0], w[1])
                })?;
                let slack = 3.0 * s(w[0], m).max(s(w[1], m));
                ensure(e(w[1], m) <= e(w[0], m) + slack, || {
                    format!("{name} rises from m = {} to {} at n = {m}", w[0], w[1])
                })?;
                checks += 2;
            }
        }
        let ratio = e(16.0, 16.0) / e(1.0, 1.0);
        ensure(ratio <= 0.1, || {
            format!("{name}: err(16,16)/err(1,1) = {ratio}")
        })?;
        for &m in &idx {
            for &n in &idx {
                let split = e(m, f64::INFINITY) + e(f64::INFINITY, n) + 3.0 * s(m, n);
                ensure(e(m, n) <= split, || {
                    format!("{name}: triangle split fails at ({m}, {n})")
                })?;
                checks += 1;
            }
        }
    }
    let r = e_ratio(t);
    Ok(format!("{checks} cell checks, err(16,16)/err(1,1) = {r}"))
}

fn e_ratio(t: &ResultTable) -> String {
    let (a, b) = (cell(t, 16.0, 16.0), cell(t, 1.0, 1.0));
    format!("{:.4} (x), {:.4} (u)", a[2] / b[2], a[3] / b[3])
}

fn criterion_9() -> Outcome {
    let cfg = parse_scenario(&scenario("stability.toml")).map_err(|e| e.to_string())?;
    ensure(
        cfg.mc.paths == 200
            && cfg.grid.steps == 256
            && cfg.grid.alpha == 0.75
            && cfg.grid.horizon == 1.0,
        || "shipped scenario drifted from the required settings".into(),
    )?;
    ensure(cfg.noise.atoms.len() == 2, || {
        "shipped scenario needs two jump atoms".into()
    })?;
    let t = run_scenario(&cfg).map_err(|e| e.to_string())?;
    check_stability_table(&t)
}

fn criterion_10() -> Outcome {
    let inputs = |c_bar, l_f, rho| TheoryInputs {
        c_bar,
        l_f,
        rho,
        alpha: 0.75,
        horizon: 1.0,
        lipschitz: Moduli::uniform(1.0),
    };
    let a = theory_constants(&inputs(1.0, 1.0, 1.0)).map_err(|e| e.to_string())?;
    for (name, v) in [("M", a.m_bar), ("N", a.n_bar), ("N hat", a.n_hat)] {
        ensure((v - 2.0).abs() <= 1e-9, || format!("{name} = {v}"))?;
    }
    let b = theory_constants(&inputs(1.0, 2.0, 0.25)).map_err(|e| e.to_string())?;
    // q = sqrt(1 - 0.5 + 0.25) = sqrt(0.75)
    let hand = 2.0 * 0.0625 * 4.0 / (1.0 - 0.75f64.sqrt()).powi(2);
    ensure((b.m_bar - hand).abs() <= 1e-9, || {
        format!("M = {}, hand value {hand}", b.m_bar)
    })?;
    // 27.85 is the same expression with sqrt(0.75) rounded to 0.8660
    ensure((b.m_bar - 27.85).abs() < 1e-2, || {
        format!("M = {} is not about 27.85", b.m_bar)
    })?;
    // 4 + 16 + 16 + 4 * 0.5625 / 0.5
    ensure((b.z_bar - 40.5).abs() <= 1e-9, || {
        format!("Z = {}", b.z_bar)
    })?;
    Ok(format!(
        "M = {}, M = {:.6}, Z = {}",
        a.m_bar, b.m_bar, b.z_bar
    ))
}

fn scalar_market(p: f64, q: f64, gamma: f64, c0: f64) -> SpatialMarketSpec {
    SpatialMarketSpec {
        m: 1,
        n: 1,
        gamma: vec![gamma],
        c0: vec![c0],
        supply: MarketDynamics::frozen(),
        demand: MarketDynamics::frozen(),
        p0: vec![p],
        q0: vec![q],
        jumps: JumpMeasure::empty(),
        formulation: SpepFormulation::Reduced,
    }
}

fn criterion_11() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut clamped = 0;
    for _ in 0..200 {
        let (p, q) = (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0));
        let (g, c0) = (rng.random_range(0.2..3.0), rng.random_range(0.0..1.0));
        let sys = build_spep(&scalar_market(p, q, g, c0)).map_err(|e| e.to_string())?;
        let cfg = SolverConfig::for_problem(&sys.vi).unwrap().with_tol(1e-12);
        let a = solve_vi(&sys.vi, &cfg, 0.0, &sys.p0)
            .map_err(|e| e.to_string())?
            .u[0];
        let oracle = ((q - p - c0) / g).max(0.0);
        clamped += usize::from(oracle == 0.0);
        worst = worst.max((a - oracle).abs());
        ensure((a - oracle).abs() <= 1e-6, || {
            format!("a = {a}, formula {oracle}")
        })?;
    }
    ensure(clamped > 0, || "no clamped instance drawn".into())?;
    let cfg = parse_scenario(&scenario("spep.toml")).map_err(|e| e.to_string())?;
    let t = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let v = t.column("violations").unwrap();
    let total: f64 = v.iter().sum();
    ensure(total == 0.0, || format!("{total} equilibrium violations"))?;
    let traded = t.column("vi_iters_max").unwrap().iter().all(|&k| k > 1.0);
    ensure(traded, || {
        "market scenario never exercised the solver".into()
    })?;
    Ok(format!(
        "scalar formula worst {worst:.1e} ({clamped} clamped); {} paths x {} steps clean",
        v.len(),
        cfg.grid.steps + 1
    ))
}

fn static_path(u: Vec<f64>) -> PathSolution {
    PathSolution {
        x: vec![vec![0.0; 2]; 2],
        u: vec![u; 2],
        vi_iters: vec![0; 2],
        vi_steps: vec![0.0; 2],
        seed: 12,
    }
}

fn criterion_12() -> Outcome {
    let mut g = QuadraticGame::separable(vec![1.0, -0.5], vec![2.0, 1.5], vec![(-2.0, 2.0); 2]);
    g.coupling = vec![vec![0.0, 0.4], vec![-0.3, 0.0]];
    // interior equilibrium: w_i (u_i - t_i) + k_ij u_j = 0, solved by Cramer's rule
    let (w, t, k) = (&g.weight, &g.target, &g.coupling);
    let det = w[0] * w[1] - k[0][1] * k[1][0];
    let r = [w[0] * t[0], w[1] * t[1]];
    let exact = [
        (r[0] * w[1] - k[0][1] * r[1]) / det,
        (w[0] * r[1] - k[1][0] * r[0]) / det,
    ];
    let spec = g.spec(JumpMeasure::empty()).map_err(|e| e.to_string())?;
    let sys = build_game(&spec).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::for_problem(&sys.vi).unwrap().with_tol(1e-12);
    let u = solve_vi(&sys.vi, &cfg, 0.0, &sys.p0)
        .map_err(|e| e.to_string())?
        .u;
    let err = dist(&u, &exact);
    ensure(err <= 1e-6, || {
        format!("equilibrium {u:?}, analytic {exact:?}")
    })?;
    let rep = verify_nash(&static_path(u.clone()), &spec, 100, 1e-8);
    ensure(rep.certified, || {
        format!("equilibrium not certified: {rep:?}")
    })?;
    for i in 0..2 {
        for s in [0.1, -0.1] {
            let mut bumped = u.clone();
            bumped[i] += s;
            let rep = verify_nash(&static_path(bumped), &spec, 100, 1e-8);
            ensure(!rep.certified, || {
                format!("perturbation {s} of agent {i} was certified")
            })?;
        }
    }
    Ok(format!(
        "analytic error {err:.1e}; certified; 4/4 perturbed points flagged"
    ))
}

fn criterion_13() -> Outcome {
    let mut rng = StdRng::seed_from_u64(13);
    let mut active = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..6);
        let p = affine_problem(ConvexSet::orthant(d), rng.random());
        let cfg = SolverConfig::for_problem(&p).unwrap();
        let u = solve_vi(&p, &cfg, 0.0, &[]).map_err(|e| e.to_string())?.u;
        let f = p.eval(0.0, &[], &u).map_err(|e| e.to_string())?;
        let res = complementarity_check(&u, &f, &p.set).map_err(|e| e.to_string())?;
        active += u.iter().filter(|&&v| v == 0.0).count();
        worst = worst.max(res.primal).max(res.dual).max(res.orth);
        ensure(res.certified(10.0 * cfg.tol), || {
            format!("residuals {res:?}")
        })?;
    }
    ensure(active > 0, || "no instance had an active constraint".into())?;
    Ok(format!(
        "100 instances, {active} active coordinates, worst residual {worst:.1e}"
    ))
}

fn criterion_14() -> Outcome {
    let dir = std::env::temp_dir().join(format!("sfdvi-acceptance-{}", std::process::id()));
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let config = format!(
        "{}/../../scenarios/stability.toml",
        env!("CARGO_MANIFEST_DIR")
    );
    let mut outputs = Vec::new();
    for threads in [1, 8] {
        let csv = dir.join(format!("stability-{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_sfdvi"))
            .args([
                "stability",
                "--config",
                &config,
                "--threads",
                &threads.to_string(),
                "--out-csv",
            ])
            .arg(&csv)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("threads {threads}: {status}"))?;
        outputs.push(fs::read(&csv).map_err(|e| e.to_string())?);
    }
    let _ = fs::remove_dir_all(&dir);
    ensure(outputs[0] == outputs[1], || {
        "CSV differs between 1 and 8 threads".into()
    })?;
    let table = parse_csv(std::str::from_utf8(&outputs[0]).unwrap()).map_err(|e| e.to_string())?;
    check_stability_table(&table)?;
    Ok(format!(
        "{} bytes identical across 1 and 8 threads",
        outputs[0].len()
    ))
}

fn main() {
    let criteria: [Criterion; 14] = [
        (1, "projection axioms", Duration::from_secs(5), criterion_1),
        (
            2,
            "contraction factor",
            Duration::from_secs(10),
            criterion_2,
        ),
        (
            3,
            "fixed point invariance",
            Duration::from_secs(10),
            criterion_3,
        ),
        (4, "fractional kernel", Duration::from_secs(5), criterion_4),
        (5, "Ito isometry", Duration::from_secs(30), criterion_5),
        (
            6,
            "compensated jump martingale",
            Duration::from_secs(30),
            criterion_6,
        ),
        (7, "Doob bound", Duration::from_secs(20), criterion_7),
        (
            8,
            "projection convergence",
            Duration::from_secs(1),
            criterion_8,
        ),
        (
            9,
            "empirical stability grid",
            Duration::from_secs(300),
            criterion_9,
        ),
        (10, "bound constants", Duration::from_secs(1), criterion_10),
        (
            11,
            "spatial price equilibrium",
            Duration::from_secs(60),
            criterion_11,
        ),
        (
            12,
            "Nash certificate",
            Duration::from_secs(10),
            criterion_12,
        ),
        (13, "complementarity", Duration::from_secs(10), criterion_13),
        (
            14,
            "thread-count determinism",
            Duration::from_secs(600),
            criterion_14,
        ),
    ];
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > budget => Err(format!("took {took:.1?}, budget {budget:?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {id:>2} {name} [{took:.2?}]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name} [{took:.2?}]: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
