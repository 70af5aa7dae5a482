//! Executes a validated scenario into a [`ResultTable`].

use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;
use sfdvi::applications::{
    build_game, build_spep, check_spep_equilibrium, verify_nash, AppError, CoupledSystem,
    SpatialMarketSpec,
};
use sfdvi::engine::{
    doob_bound_check, gen_noise, integrate_path, ito_isometry_check, jump_martingale_check,
    path_seed, EngineError, PathSolution,
};
use sfdvi::sets::{mosco_probe, SetError, SetFamily};
use sfdvi::solver::{InitialGuess, SolverConfig};
use sfdvi::stability::{run_stability, CoeffMap, PerturbationFamily, StabilityError, SystemPart};
use thiserror::Error;

use crate::config::{Kind, SanityCheck, ScenarioConfig};
use crate::table::ResultTable;

#[derive(Debug, Error)]
pub enum RunError {
    /// The scenario passed validation but a component rejected it.
    #[error("configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl From<StabilityError> for RunError {
    fn from(e: StabilityError) -> Self {
        match e {
            StabilityError::Config(_) | StabilityError::Family(_) | StabilityError::Mismatch(_) => {
                RunError::Config(e.to_string())
            }
            _ => RunError::Numeric(e.to_string()),
        }
    }
}

impl From<EngineError> for RunError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Vi { .. } | EngineError::NonFinite { .. } => {
                RunError::Numeric(e.to_string())
            }
            _ => RunError::Config(e.to_string()),
        }
    }
}

impl From<AppError> for RunError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Engine(inner) => inner.into(),
            AppError::Solve(_) => RunError::Numeric(e.to_string()),
            _ => RunError::Config(e.to_string()),
        }
    }
}

impl From<SetError> for RunError {
    fn from(e: SetError) -> Self {
        RunError::Config(e.to_string())
    }
}

fn solver_config(cfg: &ScenarioConfig) -> SolverConfig {
    SolverConfig {
        rho: cfg.vi.rho.expect("validated step"),
        tol: cfg.vi.tol,
        max_iter: cfg.vi.max_iter,
        init: InitialGuess::Origin,
    }
}

fn run_paths(
    sys: &CoupledSystem,
    cfg: &ScenarioConfig,
    noise_dim: usize,
) -> Result<Vec<PathSolution>, RunError> {
    let grid = cfg.time_grid();
    let solver = solver_config(cfg);
    (0..cfg.mc.paths)
        .into_par_iter()
        .map(|path| {
            let noise = gen_noise(
                &grid,
                noise_dim,
                &sys.jumps,
                path_seed(cfg.noise.seed, path as u64),
            );
            integrate_path(
                &sys.coeffs,
                &sys.jumps,
                &sys.vi,
                &solver,
                &grid,
                &noise,
                &sys.p0,
            )
            .map_err(|e| RunError::from(e).with_path(path))
        })
        .collect()
}

impl RunError {
    fn with_path(self, path: usize) -> Self {
        match self {
            RunError::Numeric(m) => RunError::Numeric(format!("path {path}: {m}")),
            RunError::Config(m) => RunError::Config(format!("path {path}: {m}")),
        }
    }
}

fn model_system(cfg: &ScenarioConfig) -> Result<(CoupledSystem, usize), RunError> {
    let mc = cfg.model.as_ref().expect("validated model");
    let model = mc.model(cfg.noise.dim).expect("validated model name");
    let set = cfg
        .set
        .as_ref()
        .expect("validated set")
        .build()
        .map_err(RunError::Config)?;
    let jumps = cfg.jump_measure();
    let coeffs = model.coefficients(set.dim(), &jumps)?;
    let vi = sfdvi::solver::VIProblem::new(
        set,
        model.field(),
        cfg.vi.c_bar.unwrap(),
        cfg.vi.l_f.unwrap(),
    )
    .map_err(|e| RunError::Config(e.to_string()))?;
    Ok((
        CoupledSystem {
            coeffs,
            vi,
            jumps,
            p0: mc.p0.clone(),
            grid: cfg.time_grid(),
        },
        cfg.noise.dim,
    ))
}

fn mean_over(paths: &[PathSolution], pick: impl Fn(&PathSolution) -> f64) -> f64 {
    paths.iter().map(pick).sum::<f64>() / paths.len() as f64
}

fn simulate(cfg: &ScenarioConfig) -> Result<ResultTable, RunError> {
    let (sys, l) = model_system(cfg)?;
    let sols = run_paths(&sys, cfg, l)?;
    let (p, q) = (sys.coeffs.state_dim, sys.coeffs.control_dim);
    let mut cols: Vec<String> = vec!["step".into(), "t".into()];
    cols.extend((0..p).map(|i| format!("x{i}")));
    cols.extend((0..q).map(|j| format!("u{j}")));
    cols.extend(["vi_iters_max".into(), "vi_iters_mean".into()]);
    let names: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = ResultTable::new(&names);
    let grid = cfg.time_grid();
    for k in 0..=grid.steps() {
        let mut row = vec![k as f64, grid.time(k)];
        row.extend((0..p).map(|i| mean_over(&sols, |s| s.x[k][i])));
        row.extend((0..q).map(|j| mean_over(&sols, |s| s.u[k][j])));
        row.push(sols.iter().map(|s| s.vi_iters[k]).max().unwrap_or(0) as f64);
        row.push(mean_over(&sols, |s| s.vi_iters[k] as f64));
        table.push(row);
    }
    Ok(table)
}

fn stability(cfg: &ScenarioConfig) -> Result<ResultTable, RunError> {
    let mc = cfg.model.as_ref().expect("validated model");
    let pert = cfg.perturbation.as_ref().expect("validated perturbation");
    let model = mc.model(cfg.noise.dim).expect("validated model name");
    let base = cfg
        .set
        .as_ref()
        .expect("validated set")
        .build()
        .map_err(RunError::Config)?;
    let q = base.dim();
    let jumps = cfg.jump_measure();
    let (c_bar, l_f) = (cfg.vi.c_bar.unwrap(), cfg.vi.l_f.unwrap());
    let shift = pert.lambda_shift;
    let jm = jumps.clone();
    let coeffs: CoeffMap = Arc::new(move |lambda: &[f64]| {
        let member = model.shifted(&shift, lambda[0]);
        Ok(SystemPart {
            coeffs: member.coefficients(q, &jm)?,
            field: member.field(),
            c_bar,
            l_f,
        })
    });
    let sets = SetFamily::scaled(base, pert.sequence.sequence(pert.mu_scale))?;
    let family = PerturbationFamily::new(
        coeffs,
        pert.sequence.sequence(1.0),
        sets,
        jumps,
        mc.p0.clone(),
    )?;
    let report = run_stability(
        &family,
        &pert.m_list,
        &pert.n_list,
        &cfg.time_grid(),
        cfg.mc.paths,
        cfg.noise.seed,
        &solver_config(cfg),
    )?;
    let mut table = ResultTable::new(&["m", "n", "err_x", "err_u", "mc_stderr"]);
    for c in &report.cells {
        table.push(vec![
            c.m.as_f64(),
            c.n.as_f64(),
            c.err_x,
            c.err_u,
            c.mc_stderr,
        ]);
    }
    table
        .metadata
        .insert("bound_constants".into(), json!(report.constants));
    table.metadata.insert("rho".into(), json!(report.rho));
    Ok(table)
}

fn projection(cfg: &ScenarioConfig) -> Result<ResultTable, RunError> {
    let pert = cfg.perturbation.as_ref().expect("validated perturbation");
    let base = cfg
        .set
        .as_ref()
        .expect("validated set")
        .build()
        .map_err(RunError::Config)?;
    let fam = SetFamily::scaled(base, pert.sequence.sequence(pert.mu_scale))?;
    let mut table = ResultTable::new(&["n", "gap"]);
    for &n in &pert.n_list {
        table.push(vec![n as f64, mosco_probe(&fam, n, &pert.probes)?]);
    }
    Ok(table)
}

fn market_spec(cfg: &ScenarioConfig) -> SpatialMarketSpec {
    let mk = cfg.markets.as_ref().expect("validated markets");
    let cost = cfg.cost.as_ref().expect("validated cost");
    SpatialMarketSpec {
        m: mk.m,
        n: mk.n,
        gamma: cost.gamma.clone(),
        c0: cost.c0.clone(),
        supply: mk.supply,
        demand: mk.demand,
        p0: mk.p0.clone(),
        q0: mk.q0.clone(),
        jumps: cfg.jump_measure(),
        formulation: mk.formulation,
    }
}

fn spep(cfg: &ScenarioConfig) -> Result<ResultTable, RunError> {
    let spec = market_spec(cfg);
    let sys = build_spep(&spec)?;
    let l = sys.coeffs.noise_dim;
    let sols = run_paths(&sys, cfg, l)?;
    let tol = cfg.markets.as_ref().unwrap().tol;
    let reports: Vec<_> = sols
        .par_iter()
        .map(|s| check_spep_equilibrium(s, &spec, tol))
        .collect();
    let mut table = ResultTable::new(&[
        "path",
        "violations",
        "worst_excess",
        "max_budget",
        "vi_iters_max",
    ]);
    let mut total = 0usize;
    for (k, (r, s)) in reports.iter().zip(&sols).enumerate() {
        total += r.violations.len();
        table.push(vec![
            k as f64,
            r.violations.len() as f64,
            r.worst.map_or(0.0, |v| v.amount),
            r.max_budget,
            s.vi_iters.iter().copied().max().unwrap_or(0) as f64,
        ]);
    }
    table
        .metadata
        .insert("violations_total".into(), json!(total));
    Ok(table)
}

fn game(cfg: &ScenarioConfig) -> Result<ResultTable, RunError> {
    let g = cfg.game.as_ref().expect("validated game");
    let spec = g.game().spec(cfg.jump_measure())?;
    let sys = build_game(&spec)?;
    let l = sys.coeffs.noise_dim;
    let sols = run_paths(&sys, cfg, l)?;
    let reports: Vec<_> = sols
        .par_iter()
        .map(|s| verify_nash(s, &spec, g.deviations, g.tol))
        .collect();
    let mut table = ResultTable::new(&["path", "agent", "worst", "worst_step", "certified"]);
    let mut certified = 0usize;
    for (k, r) in reports.iter().enumerate() {
        certified += usize::from(r.certified);
        for (i, (&w, &step)) in r.worst.iter().zip(&r.worst_step).enumerate() {
            table.push(vec![
                k as f64,
                i as f64,
                w,
                step as f64,
                f64::from(u8::from(r.certified)),
            ]);
        }
    }
    table
        .metadata
        .insert("certified_paths".into(), json!(certified));
    Ok(table)
}

fn sanity(cfg: &ScenarioConfig) -> Result<ResultTable, RunError> {
    let s = cfg.sanity.as_ref().expect("validated sanity");
    let grid = cfg.time_grid();
    let (paths, seed) = (cfg.mc.paths, cfg.noise.seed);
    let slack = 3.0 * 2f64.sqrt() / (paths as f64).sqrt();
    Ok(match s.check {
        SanityCheck::Ito => {
            let f = s.integrand;
            let r = ito_isometry_check(&move |t| f.eval(t), &grid, paths, seed)?;
            let mut t = ResultTable::new(&["lhs", "rhs", "rel_err", "slack"]);
            t.push(vec![r.lhs, r.rhs, r.rel_err, slack]);
            t
        }
        SanityCheck::Doob => {
            let r = doob_bound_check(&grid, paths, seed)?;
            let mut t = ResultTable::new(&["empirical", "bound", "terminal", "stderr"]);
            t.push(vec![r.empirical, r.bound, r.terminal, r.stderr]);
            t
        }
        SanityCheck::Jump => {
            let r = jump_martingale_check(&cfg.jump_measure(), &grid, &[s.p0], paths, seed)?;
            let mut t = ResultTable::new(&["mean", "std", "paths", "slack"]);
            t.push(vec![
                r.mean,
                r.std,
                r.paths as f64,
                3.0 * r.std / (r.paths as f64).sqrt(),
            ]);
            t
        }
    })
}

/// Runs the scenario. The table depends only on the config, never on the
/// number of worker threads.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ResultTable, RunError> {
    let mut table = match cfg.kind {
        Kind::Simulate => simulate(cfg)?,
        Kind::Stability => stability(cfg)?,
        Kind::Projection => projection(cfg)?,
        Kind::Spep => spep(cfg)?,
        Kind::Game => game(cfg)?,
        Kind::Sanity => sanity(cfg)?,
    };
    let md = &mut table.metadata;
    md.insert("kind".into(), json!(cfg.kind.name()));
    md.insert("config".into(), json!(cfg.to_toml()));
    md.insert("seed".into(), json!(cfg.noise.seed));
    md.insert("paths".into(), json!(cfg.mc.paths));
    md.insert("sfdvi_version".into(), json!(env!("CARGO_PKG_VERSION")));
    Ok(table)
}
