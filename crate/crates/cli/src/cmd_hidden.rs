//! `hidden`: simulate an ensemble of camouflaged-drift paths, verify that
//! the observation-driven filter reproduces the closed-form posterior on
//! the grid, and run the full Brownianity battery on the observed paths.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use drift_camouflage::battery::{run_battery, BatteryConfig, BatteryReport, Ensemble};
use drift_camouflage::filtering::{bayes_filter, simulate_hidden_path, DriftScenario, HiddenDriftPath};
use drift_camouflage::paths::{PathSample, SeededRng, TimeGrid};

use crate::config::{check_alpha, grid_from, HiddenParams, RunContext};
use crate::output::{battery_csv, OutputDir};
use crate::CliError;

/// The filter recomputes the posterior from observations alone; on the
/// shared grid the two recursions are algebraically identical, so anything
/// beyond accumulated rounding is a defect.
const FILTER_TOLERANCE: f64 = 1e-9;

#[derive(Serialize)]
struct FilterConsistency {
    max_abs_error: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct HiddenReport<'a> {
    command: &'a str,
    name: &'a str,
    seed: u64,
    parameters: &'a HiddenParams,
    filter_consistency: FilterConsistency,
    battery: &'a BatteryReport,
}

struct PathOutcome {
    y: PathSample,
    filter_error: f64,
    full: Option<Box<HiddenDriftPath>>,
}

/// Path `i` draws its drift sign from stream `2i` and its Brownian
/// increments from stream `2i + 1`, so signs and noise never alias.
fn simulate_one(
    params: &HiddenParams,
    grid: TimeGrid,
    seed: u64,
    index: usize,
    keep_full: bool,
) -> Result<PathOutcome, drift_camouflage::Error> {
    let mut sign_rng = SeededRng::new(seed, 2 * index as u64).rng();
    let scenario = DriftScenario::with_fair_sign(params.mu, &mut sign_rng)?;
    let path = simulate_hidden_path(scenario, grid, SeededRng::new(seed, 2 * index as u64 + 1))?;
    let filter = bayes_filter(path.y(), path.mu_plus(), path.mu_minus())?;
    let filter_error = filter
        .p()
        .values()
        .iter()
        .zip(path.g().values())
        .fold(0.0f64, |acc, (&p, &g)| acc.max((p - g).abs()));
    Ok(PathOutcome {
        y: path.y().clone(),
        filter_error,
        full: keep_full.then(|| Box::new(path)),
    })
}

pub fn run(ctx: &RunContext, params: &HiddenParams) -> Result<u8, CliError> {
    let grid = grid_from(params.dt, params.horizon)?;
    check_alpha(params.alpha)?;
    if params.n_paths == 0 {
        return Err(CliError::Config("n_paths must be at least 1".into()));
    }
    let csv_cap = params.csv_paths.min(params.n_paths);

    let outcomes = (0..params.n_paths)
        .into_par_iter()
        .map(|i| simulate_one(params, grid, ctx.seed, i, i < csv_cap))
        .collect::<Result<Vec<_>, _>>()?;

    let max_filter_error =
        outcomes.iter().fold(0.0f64, |acc, o| acc.max(o.filter_error));
    let filter_consistency = FilterConsistency {
        max_abs_error: max_filter_error,
        tolerance: FILTER_TOLERANCE,
        pass: max_filter_error <= FILTER_TOLERANCE,
    };

    let ensemble = Ensemble::new(
        format!("hidden-Y[seed={}]", ctx.seed),
        outcomes.iter().map(|o| o.y.clone()).collect(),
    )?;
    let battery = run_battery(
        &ensemble,
        &BatteryConfig { alpha: params.alpha, n_subintervals: None },
    )?;

    let mut csv = String::from("path,t,b,mu,s,y,g\n");
    for (i, outcome) in outcomes.iter().take(csv_cap).enumerate() {
        let path = outcome.full.as_ref().expect("first csv_cap outcomes keep the full path");
        for (k, t) in grid.times().enumerate() {
            writeln!(
                csv,
                "{i},{t},{},{},{},{},{}",
                path.b().value(k),
                path.mu_t().value(k),
                path.s().value(k),
                path.y().value(k),
                path.g().value(k)
            )
            .expect("writing to a String cannot fail");
        }
    }

    let pass = filter_consistency.pass && battery.verdict;
    let report = HiddenReport {
        command: ctx.command,
        name: &ctx.name,
        seed: ctx.seed,
        parameters: params,
        filter_consistency,
        battery: &battery,
    };

    let mut out = OutputDir::create(&ctx.out_dir)?;
    out.write_json("report.json", &report)?;
    out.write("paths.csv", csv.as_bytes())?;
    out.write("battery.csv", battery_csv(&battery).as_bytes())?;
    out.finish(ctx.command, &ctx.name, &ctx.echo)?;

    Ok(if pass { 0 } else { 3 })
}
