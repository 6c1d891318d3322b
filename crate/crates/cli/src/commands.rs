use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use geopref::degree::{
    cdf_bracket_excess, compare, stationarity_residual, DegreeLawParams, DegreeTable, Histogram,
};
use geopref::equilibrium::{
    borel_bracket, cell_fitness_bounds, solve_dustbin, solve_nu, solve_two_point, two_point_phi,
    DustbinEquilibrium, EquilibriumResult,
};
use geopref::fitness::{cross_check, detect_phase, nu_interval, FitnessDistribution, Phase};
use geopref::rng::sim_rng;
use geopref::simulate::{
    grow_coupled, run_continuous, run_finite, CoupledState, DensitySampler, SimConfig, Trajectory,
};
use geopref::{Check, DiscretizedSpace};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, Format, SimSection, Space, SpaceConfig};
use crate::error::CliError;

pub const TOOL_VERSION: &str = concat!("geopref v", env!("CARGO_PKG_VERSION"));
pub const TWO_POINT_TOL: f64 = 1e-9;
pub const STATIONARITY_TOL: f64 = 1e-12;
pub const ROOT_TOL: f64 = 1e-8;
pub const ADDITIVITY_TOL: f64 = 1e-9;

/// Settings shared by all commands.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seeds: Option<Vec<u64>>,
    pub jobs: Option<usize>,
    pub fault_inject: bool,
}

/// Sections of `report.json` plus the named checks.
pub struct Report {
    command: &'static str,
    config: Value,
    sections: Map<String, Value>,
    checks: Vec<Check>,
}

impl Report {
    fn new(command: &'static str, cfg: &ExperimentConfig) -> Self {
        Self {
            command,
            config: serde_json::to_value(cfg).unwrap_or(Value::Null),
            sections: Map::new(),
            checks: Vec::new(),
        }
    }

    fn section(&mut self, key: &str, value: Value) {
        self.sections.insert(key.to_string(), value);
    }

    fn prefixed(&mut self, prefix: &str, checks: impl IntoIterator<Item = Check>) {
        self.checks.extend(checks.into_iter().map(|mut c| {
            c.name = format!("{prefix}{}", c.name);
            c
        }));
    }

    pub fn checks(&self) -> &[Check] {
        &self.checks
    }

    pub fn to_json(&self) -> Value {
        let mut out = Map::new();
        out.insert("tool".into(), json!(TOOL_VERSION));
        out.insert("command".into(), json!(self.command));
        out.insert("config".into(), self.config.clone());
        for (k, v) in &self.sections {
            out.insert(k.clone(), v.clone());
        }
        out.insert("checks".into(), json!(self.checks));
        out.insert("passed".into(), json!(geopref::report::all_passed(&self.checks)));
        Value::Object(out)
    }

    /// Writes `report.json` (unless JSON output is disabled) and turns
    /// failed checks into an error.
    pub fn finish(self, cfg: &ExperimentConfig, out_dir: &Path) -> Result<Value, CliError> {
        let value = self.to_json();
        if cfg.output.wants(Format::Json) {
            let path = out_dir.join("report.json");
            let mut text = serde_json::to_string_pretty(&value).expect("report serialises");
            text.push('\n');
            std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
        }
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        if failed.is_empty() {
            Ok(value)
        } else {
            Err(CliError::ChecksFailed {
                failed: failed.len(),
                names: failed.join(", "),
            })
        }
    }
}

fn create(path: PathBuf) -> Result<BufWriter<File>, CliError> {
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io { path, source })
}

fn seeds(sim: &SimSection, opts: &RunOptions) -> Vec<u64> {
    opts.seeds.clone().unwrap_or_else(|| sim.seeds.clone())
}

/// Runs `f(index, seed)` over the seeds on a pool of `jobs` threads;
/// results keep the seed order.
fn per_seed<T, F>(seeds: &[u64], jobs: Option<usize>, f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T, CliError> + Sync,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    pool.install(|| seeds.par_iter().enumerate().map(|(i, &s)| f(i, s)).collect())
}

fn write_trajectory(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    seed: u64,
    traj: &Trajectory,
) -> Result<(), CliError> {
    if cfg.output.wants(Format::Csv) {
        traj.write_csv(create(opts.out_dir.join(format!("trajectory_{seed}.csv")))?)?;
    }
    Ok(())
}

fn write_degrees(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    seed: u64,
    loc: usize,
    table: &DegreeTable,
) -> Result<(), CliError> {
    if cfg.output.wants(Format::Csv) {
        table.write_csv(create(opts.out_dir.join(format!("degrees_{seed}_{loc}.csv")))?)?;
    }
    Ok(())
}

fn sup_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// equilibrium
// ---------------------------------------------------------------------------

fn finite_equilibrium(report: &mut Report, space: &SpaceConfig, eq: &EquilibriumResult) -> Result<(), CliError> {
    let mut section = eq.to_json();
    report.prefixed("", eq.checks());
    if let SpaceConfig::TwoPoint { p, a } = *space {
        let y0 = solve_two_point(p, a)?;
        let (phi0, phi1) = two_point_phi(p, a, eq.nu[0]);
        let checks = vec![
            Check::at_most("two_point_nu0_gap", (y0 - eq.nu[0]).abs(), TWO_POINT_TOL),
            Check::at_most("two_point_phi0_gap", (phi0 - eq.phi[0]).abs(), TWO_POINT_TOL),
            Check::at_most("two_point_phi1_gap", (phi1 - eq.phi[1]).abs(), TWO_POINT_TOL),
        ];
        section["two_point"] = json!({
            "nu0_closed_form": y0,
            "phi0_closed_form": phi0,
            "phi1_closed_form": phi1,
        });
        report.prefixed("", checks);
    }
    report.section("equilibrium", section);
    Ok(())
}

fn discretisation_json(d: &DiscretizedSpace) -> Value {
    json!({
        "n_cells": d.n_cells(),
        "mu": d.mu(),
        "gamma": d.gamma(),
        "gamma_lower_bound": d.gamma_lower_bound(),
        "h": d.h(),
        "t": d.t(),
        "epsilon": d.epsilon(),
        "grid": d.grid(),
    })
}

fn dustbin_section(
    cfg: &ExperimentConfig,
    dspace: &DiscretizedSpace,
    eq: &DustbinEquilibrium,
) -> Result<Value, CliError> {
    let mut brackets = Vec::new();
    for cells in &cfg.analysis.cell_subsets {
        let (lo, hi) = borel_bracket(eq, cells)?;
        brackets.push(json!({ "cells": cells, "lower": lo, "upper": hi }));
    }
    let phi_bounds: Vec<Value> = cell_fitness_bounds(eq, dspace)?
        .into_iter()
        .map(|(lo, hi)| json!([lo, hi]))
        .collect();
    Ok(json!({
        "discretisation": discretisation_json(dspace),
        "equilibrium": eq.to_json(cfg.analysis.tol),
        "brackets": brackets,
        "cell_phi_bounds": phi_bounds,
    }))
}

pub fn equilibrium(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Value, CliError> {
    let space_cfg = cfg.space()?;
    let mut report = Report::new("equilibrium", cfg);
    match space_cfg.build()? {
        Space::Finite(space) => {
            let eq = solve_nu(&space, cfg.analysis.tol)?;
            finite_equilibrium(&mut report, space_cfg, &eq)?;
        }
        Space::Continuous { dspace, .. } => {
            let eq = solve_dustbin(&dspace, cfg.analysis.tol)?;
            report.section("dustbin", dustbin_section(cfg, &dspace, &eq)?);
            report.prefixed("dustbin.", eq.checks(cfg.analysis.tol));
            let mid = solve_nu(&dspace.midpoint_space(), cfg.analysis.tol)?;
            report.section("midpoint_equilibrium", mid.to_json());
            report.prefixed("midpoint.", mid.checks());
        }
    }
    report.finish(cfg, &opts.out_dir)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Degree tables and comparisons for each location of one run.
fn degree_summaries(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    seed: u64,
    m: u32,
    phi: &[f64],
    hist: impl Fn(usize) -> Histogram,
) -> Result<Vec<Value>, CliError> {
    let mut out = Vec::new();
    for (loc, &phi_loc) in phi.iter().enumerate() {
        let h = hist(loc);
        let params = DegreeLawParams::normalized(m as u64, phi_loc)?;
        let table = DegreeTable::build((loc + 1).to_string(), &h, &params);
        write_degrees(cfg, opts, seed, loc + 1, &table)?;
        let tv = match compare(&h, &params, cfg.analysis.d_max) {
            Ok(c) => json!({
                "total_variation": c.total_variation,
                "tail_slope": c.tail_slope,
                "expected_tail_slope": c.expected_tail_slope,
            }),
            Err(geopref::Error::EmptyHistogram) => Value::Null,
            Err(e) => return Err(e.into()),
        };
        out.push(json!({
            "location": loc + 1,
            "phi": phi_loc,
            "vertices": table.vertices,
            "comparison": tv,
        }));
    }
    Ok(out)
}

fn stationarity_checks(m: u32, phi: &[f64], d_max: u64) -> Result<Vec<Check>, CliError> {
    let mut worst: f64 = 0.0;
    for &p in phi {
        let params = DegreeLawParams::normalized(m as u64, p)?;
        for d in (m as u64 + 1)..=d_max.max(m as u64 + 1) {
            worst = worst.max(stationarity_residual(&params, d)?);
        }
    }
    Ok(vec![Check::at_most("degree_law_stationarity", worst, STATIONARITY_TOL)])
}

fn seed_graph_json(sim: &SimConfig) -> Result<Value, CliError> {
    let (n0, edges) = sim.seed_edges()?;
    Ok(json!({ "n0": n0, "edges": edges }))
}

pub fn simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Value, CliError> {
    let space_cfg = cfg.space()?;
    let sim = cfg.sim()?;
    let space = space_cfg.build()?;
    if matches!(space, Space::Continuous { .. }) {
        sim.check_continuous_cap()?;
    }
    let seeds = seeds(sim, opts);
    let sims: Vec<SimConfig> = seeds.iter().map(|&s| sim.for_seed(s)).collect::<Result<_, _>>()?;
    let mut report = Report::new("simulate", cfg);
    let tol = cfg.analysis.tol;

    // equilibrium the runs are compared against
    let (nu, phi, label) = match &space {
        Space::Finite(space) => {
            let eq = solve_nu(space, tol)?;
            report.prefixed("equilibrium.", eq.checks());
            report.section("equilibrium", eq.to_json());
            (eq.nu, eq.phi, "location")
        }
        Space::Continuous { dspace, .. } => {
            let eq = solve_nu(&dspace.midpoint_space(), tol)?;
            report.prefixed("midpoint.", eq.checks());
            report.section("midpoint_equilibrium", eq.to_json());
            report.section("discretisation", discretisation_json(dspace));
            (eq.nu, eq.phi, "cell")
        }
    };
    report.prefixed("", stationarity_checks(sim.m, &phi, cfg.analysis.d_max)?);

    let runs = per_seed(&seeds, opts.jobs, |i, seed| {
        let scfg = &sims[i];
        let (traj, invariants, degrees, multi) = match &space {
            Space::Finite(fs) => {
                let run = run_finite(fs, scfg)?;
                let st = &run.state;
                let degrees = degree_summaries(cfg, opts, seed, sim.m, &phi, |l| st.degree_histogram(l))?;
                (run.trajectory.clone(), st.check_invariants(0), degrees, st.multi_edge_steps())
            }
            Space::Continuous { spec, dspace } => {
                let run = run_continuous(spec, dspace, scfg)?;
                let st = &run.state;
                let degrees =
                    degree_summaries(cfg, opts, seed, sim.m, &phi, |c| st.degree_histogram(dspace, c))?;
                (run.trajectory.clone(), st.check_invariants(), degrees, st.multi_edge_steps())
            }
        };
        write_trajectory(cfg, opts, seed, &traj)?;
        let y = traj.last().map(|r| r.1.clone()).unwrap_or_default();
        let summary = json!({
            "seed": seed,
            "steps": scfg.steps,
            "seed_graph": seed_graph_json(scfg)?,
            "final_y": y,
            "max_deviation": sup_norm(&y, &nu),
            "multi_edge_steps": multi,
            "degrees": degrees,
        });
        let check = Check::holds(format!("seed_{seed}.graph_invariants"), invariants.is_ok());
        Ok((summary, check))
    })?;

    let mut summaries = Vec::new();
    let mut worst_dev: f64 = 0.0;
    let mut tvs = Vec::new();
    for (summary, check) in runs {
        worst_dev = worst_dev.max(summary["max_deviation"].as_f64().unwrap_or(f64::NAN));
        for d in summary["degrees"].as_array().into_iter().flatten() {
            if let Some(tv) = d["comparison"]["total_variation"].as_f64() {
                tvs.push(tv);
            }
        }
        summaries.push(summary);
        report.checks.push(check);
    }
    report.section(
        "aggregate",
        json!({
            "seeds": seeds,
            "granularity": label,
            "max_deviation_over_seeds": worst_dev,
            "max_total_variation": tvs.iter().copied().fold(0.0, f64::max),
            "mean_total_variation": if tvs.is_empty() { 0.0 } else { tvs.iter().sum::<f64>() / tvs.len() as f64 },
        }),
    );
    report.section("simulations", Value::Array(summaries));
    report.finish(cfg, &opts.out_dir)
}

// ---------------------------------------------------------------------------
// coupled-check
// ---------------------------------------------------------------------------

/// Distance of `x` outside `[lo, hi]`.
fn excess(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(x - hi).max(0.0)
}

pub fn coupled_check(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Value, CliError> {
    let sim = cfg.sim()?;
    let (spec, dspace) = match cfg.space()?.build()? {
        Space::Continuous { spec, dspace } => (spec, dspace),
        Space::Finite(_) => {
            return Err(CliError::Config("coupled-check needs a continuous space".into()));
        }
    };
    sim.check_continuous_cap()?;
    let seeds = seeds(sim, opts);
    let sims: Vec<SimConfig> = seeds.iter().map(|&s| sim.for_seed(s)).collect::<Result<_, _>>()?;
    let tol = cfg.analysis.tol;
    let eq = solve_dustbin(&dspace, tol)?;
    let phi_bounds = cell_fitness_bounds(&eq, &dspace)?;
    let mut report = Report::new("coupled_check", cfg);
    report.section("dustbin", dustbin_section(cfg, &dspace, &eq)?);
    report.prefixed("dustbin.", eq.checks(tol));

    // the negative control runs the dustbin side with understated suprema
    let coupled_space = if opts.fault_inject {
        dspace.with_understated_sup()
    } else {
        dspace.clone()
    };
    let sampler = DensitySampler::new(spec.density())?;
    let a = &cfg.analysis;
    let m = sim.m as u64;

    let runs = per_seed(&seeds, opts.jobs, |i, seed| {
        let scfg = &sims[i];
        let mut rng = sim_rng(seed);
        let mut state = CoupledState::seed(scfg, &spec, &coupled_space, &sampler, &mut rng)?;
        let check = grow_coupled(&mut state, &spec, &coupled_space, &sampler, scfg.steps, &mut rng)?;
        let cont = &state.continuous;
        let delta = cont.empirical_measure(&dspace)?;
        let checks = vec![Check::holds(format!("seed_{seed}.domination"), check.min_margin >= 0)];
        let mut brackets = Vec::new();
        for cells in &a.cell_subsets {
            let (lo, hi) = borel_bracket(&eq, cells)?;
            let mass: f64 = cells.iter().map(|&c| delta[c - 1]).sum();
            brackets.push(json!({
                "cells": cells,
                "delta": mass,
                "lower": lo,
                "upper": hi,
                "contained": excess(mass, lo, hi) == 0.0,
            }));
        }
        let mut cdfs = Vec::new();
        for (c, &bounds) in phi_bounds.iter().enumerate() {
            let hist = cont.degree_histogram(&dspace, c);
            let vertices: u64 = hist.values().sum();
            if vertices < a.min_cell_vertices {
                continue;
            }
            let worst = cdf_bracket_excess(&hist, m, bounds, a.phi_widen, a.cdf_d_max)?;
            // an empirical CDF moves in steps of one vertex
            let resolution = 1.0 / vertices as f64;
            cdfs.push(json!({
                "cell": c + 1,
                "vertices": vertices,
                "phi_bounds": [bounds.0, bounds.1],
                "excess": worst.max(0.0),
                "resolution": resolution,
                "contained": worst <= resolution,
            }));
        }
        let summary = json!({
            "seed": seed,
            "coupling": check,
            "brackets": brackets,
            "degree_cdf": cdfs,
        });
        Ok((summary, checks))
    })?;

    let mut summaries = Vec::new();
    let (mut inside, mut total) = (0usize, 0usize);
    for (summary, checks) in runs {
        for key in ["brackets", "degree_cdf"] {
            for entry in summary[key].as_array().into_iter().flatten() {
                total += 1;
                inside += usize::from(entry["contained"] == true);
            }
        }
        summaries.push(summary);
        report.checks.extend(checks);
    }
    // finite-n comparisons with limits: reported, not pass/fail
    report.section("containment", json!({ "contained": inside, "compared": total }));
    report.section("coupled_runs", Value::Array(summaries));
    report.section("fault_injected", json!(opts.fault_inject));
    report.finish(cfg, &opts.out_dir)
}

// ---------------------------------------------------------------------------
// fitness
// ---------------------------------------------------------------------------

pub fn fitness(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Value, CliError> {
    let fcfg = cfg.fitness()?;
    let dist = FitnessDistribution::from_density(fcfg.density()?)?;
    let phase = detect_phase(&dist)?;
    let h = dist.h();
    let mut report = Report::new("fitness", cfg);
    let mut section = json!({ "phase": phase });

    if phase.phase == Phase::FitGetRicher {
        if let Some(gap) = phase.root_gap(&dist) {
            report.checks.push(Check::at_most("lambda0_root_gap", gap, ROOT_TOL));
        }
        // F strictly decreasing on a grid above h
        let lambdas: Vec<f64> = (0..12).map(|k| h * (1.0 + 2f64.powi(-k))).rev().collect();
        let values: Vec<f64> = lambdas.iter().map(|&l| dist.f(l)).collect::<Result<_, _>>()?;
        let decreasing = values.windows(2).all(|w| w[1] < w[0]);
        report.checks.push(Check::holds("f_strictly_decreasing", decreasing));
        let (x1, x2) = (h / 3.0, 2.0 * h / 3.0);
        let parts = nu_interval(&phase, &dist, 0.0, x1)? + nu_interval(&phase, &dist, x1, x2)?;
        let whole = nu_interval(&phase, &dist, 0.0, x2)?;
        report.checks.push(Check::at_most("nu_interval_additivity", (parts - whole).abs(), ADDITIVITY_TOL));
        section["f_grid"] = json!({ "lambda": lambdas, "f": values });
    }
    if let Some(c) = fcfg.truncate {
        let r = cross_check(&dist, fcfg.n_cells, c)?;
        report.checks.push(Check::at_most(
            "cross_check_max_discrepancy",
            r.max_discrepancy,
            fcfg.cross_check_tol,
        ));
        section["cross_check"] = serde_json::to_value(&r).unwrap_or(Value::Null);
    }
    report.section("fitness", section);
    report.finish(cfg, &opts.out_dir)
}
