//! `calibrate`: run the battery's p-valued tests on repeated pure-Brownian
//! ensembles and report the per-test rejection rates against the healthy
//! window `[alpha/2, 2 alpha]`.

use std::fmt::Write as _;

use serde::Serialize;

use drift_camouflage::battery::{calibration_rejection_rates, CalibrationReport};

use crate::config::{check_alpha, grid_from, CalibrateParams, RunContext};
use crate::output::OutputDir;
use crate::CliError;

#[derive(Serialize)]
struct CalibrateReportJson<'a> {
    command: &'a str,
    name: &'a str,
    seed: u64,
    parameters: &'a CalibrateParams,
    calibration: &'a CalibrationReport,
}

pub fn run(ctx: &RunContext, params: &CalibrateParams) -> Result<u8, CliError> {
    let grid = grid_from(params.dt, params.horizon)?;
    check_alpha(params.alpha)?;
    if params.n_paths == 0 {
        return Err(CliError::Config("n_paths must be at least 1".into()));
    }
    if params.n_runs == 0 {
        return Err(CliError::Config("n_runs must be at least 1".into()));
    }

    let calibration =
        calibration_rejection_rates(grid, params.n_paths, params.n_runs, params.alpha, ctx.seed)?;

    let mut csv = String::from("test,rejections,rate,in_window\n");
    for rate in &calibration.rates {
        writeln!(csv, "{},{},{},{}", rate.test, rate.rejections, rate.rate, rate.in_window)
            .expect("writing to a String cannot fail");
    }

    let report = CalibrateReportJson {
        command: ctx.command,
        name: &ctx.name,
        seed: ctx.seed,
        parameters: params,
        calibration: &calibration,
    };

    let mut out = OutputDir::create(&ctx.out_dir)?;
    out.write_json("report.json", &report)?;
    out.write("rates.csv", csv.as_bytes())?;
    out.finish(ctx.command, &ctx.name, &ctx.echo)?;

    Ok(if calibration.all_in_window || !params.enforce_window { 0 } else { 3 })
}
