//! `discrete`: enumerate the exact joint law of scrambled sign bits under a
//! biased-bit law, check the index family's disjointness properties, and
//! optionally cross-check the enumeration against Monte Carlo scrambling.
//!
//! All law probabilities and emitted masses are exact rationals rendered as
//! strings (`"7/10"`, `"79/200"`), never floats.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::One;
use serde::Serialize;

use drift_camouflage::paths::SeededRng;
use drift_camouflage::scramble::{
    check_diffuse, check_family, exact_joint_law, scramble_monte_carlo, BiasedBitLaw,
    ExactJointLaw, FamilyCheckReport, IndexFamily, MonteCarloScramble,
};

use crate::config::{DiscreteParams, LawSpec, RunContext};
use crate::output::OutputDir;
use crate::CliError;

#[derive(Serialize)]
struct MarginalJson {
    n: i64,
    plus: String,
    minus: String,
    undecided: String,
    /// Half the decided mass, `(1 - undecided)/2`: the value `plus` takes
    /// exactly when the scrambled bit is conditionally fair.
    half_of_decided: String,
    fair_given_decided: bool,
}

#[derive(Serialize)]
struct ExactLawJson {
    window: Vec<i64>,
    referenced: Vec<i64>,
    referenced_bits: usize,
    undecided: String,
    marginals: Vec<MarginalJson>,
    /// Joint probabilities keyed by the outcome tuple, e.g. `"+1,-1"`;
    /// `0` marks an undecided coordinate.
    table: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct DiffuseJson {
    horizon: usize,
    partial_sum: String,
    last_term: String,
    flagged_convergent: bool,
}

#[derive(Serialize)]
struct ExactSummary {
    referenced_bits: usize,
    undecided: String,
    all_marginals_fair_given_decided: bool,
}

#[derive(Serialize)]
struct DiscreteReport<'a> {
    command: &'a str,
    name: &'a str,
    seed: u64,
    parameters: &'a DiscreteParams,
    family_check: &'a FamilyCheckReport,
    diffuse: DiffuseJson,
    exact: ExactSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<&'a MonteCarloScramble>,
}

fn parse_rational(text: &str) -> Result<BigRational, CliError> {
    text.trim().parse::<BigRational>().map_err(|_| {
        CliError::Config(format!("\"{text}\" is not a rational probability like \"7/10\""))
    })
}

fn build_law(spec: &LawSpec) -> Result<BiasedBitLaw, CliError> {
    let law = match spec {
        LawSpec::Constant { p } => BiasedBitLaw::constant(parse_rational(p)?)?,
        LawSpec::Periodic { block } => BiasedBitLaw::periodic(
            block.iter().map(|p| parse_rational(p)).collect::<Result<Vec<_>, _>>()?,
        )?,
        LawSpec::Table { table } => BiasedBitLaw::table(
            table.iter().map(|p| parse_rational(p)).collect::<Result<Vec<_>, _>>()?,
        )?,
    };
    Ok(law)
}

fn build_family(params: &DiscreteParams) -> Result<IndexFamily, CliError> {
    match &params.sets {
        None => Ok(IndexFamily::greedy(params.window, params.bits_per_set)?),
        Some(sets) => {
            let mut map = BTreeMap::new();
            for (key, inputs) in sets {
                let n = key.parse::<i64>().map_err(|_| {
                    CliError::Config(format!("set key \"{key}\" is not an integer index"))
                })?;
                map.insert(n, inputs.clone());
            }
            Ok(IndexFamily::from_sets(map)?)
        }
    }
}

fn outcome_key(outcome: &[i8]) -> String {
    let parts: Vec<&str> = outcome
        .iter()
        .map(|&v| match v {
            1 => "+1",
            -1 => "-1",
            _ => "0",
        })
        .collect();
    parts.join(",")
}

fn exact_law_json(joint: &ExactJointLaw) -> ExactLawJson {
    let two = BigRational::one() + BigRational::one();
    let marginals = joint
        .marginals
        .iter()
        .map(|m| {
            let half = (BigRational::one() - &m.undecided) / &two;
            MarginalJson {
                n: m.n,
                plus: m.plus.to_string(),
                minus: m.minus.to_string(),
                undecided: m.undecided.to_string(),
                half_of_decided: half.to_string(),
                fair_given_decided: m.plus == m.minus,
            }
        })
        .collect();
    ExactLawJson {
        window: joint.window.clone(),
        referenced: joint.referenced.clone(),
        referenced_bits: joint.referenced.len(),
        undecided: joint.undecided_mass.to_string(),
        marginals,
        table: joint
            .table
            .iter()
            .map(|(outcome, mass)| (outcome_key(outcome), mass.to_string()))
            .collect(),
    }
}

pub fn run(ctx: &RunContext, params: &DiscreteParams) -> Result<u8, CliError> {
    let law = build_law(&params.law)?;
    let family = build_family(params)?;
    let family_check = check_family(&family, params.depth);
    let joint = exact_joint_law(&law, &family, params.window, params.bits_per_set)?;
    let threshold = parse_rational(&params.diffuse_threshold)?;
    // A table law only defines finitely many probabilities, so the diffuse
    // scan caps at the table's own horizon; the report records the horizon
    // actually scanned.
    let diffuse_horizon = match &params.law {
        LawSpec::Table { table } => params.diffuse_horizon.min(table.len().saturating_sub(1)),
        _ => params.diffuse_horizon,
    };
    let diffuse = check_diffuse(&law, diffuse_horizon, &threshold)?;
    let monte_carlo = if params.n_windows > 0 {
        Some(scramble_monte_carlo(
            &law,
            &family,
            params.window,
            params.n_windows,
            SeededRng::new(ctx.seed, 0),
        )?)
    } else {
        None
    };

    let law_json = exact_law_json(&joint);
    let exact = ExactSummary {
        referenced_bits: law_json.referenced_bits,
        undecided: law_json.undecided.clone(),
        all_marginals_fair_given_decided: law_json
            .marginals
            .iter()
            .all(|m| m.fair_given_decided),
    };
    let report = DiscreteReport {
        command: ctx.command,
        name: &ctx.name,
        seed: ctx.seed,
        parameters: params,
        family_check: &family_check,
        diffuse: DiffuseJson {
            horizon: diffuse.horizon,
            partial_sum: diffuse.partial_sum.to_string(),
            last_term: diffuse.last_term.to_string(),
            flagged_convergent: diffuse.flagged_convergent,
        },
        exact,
        monte_carlo: monte_carlo.as_ref(),
    };

    let mut out = OutputDir::create(&ctx.out_dir)?;
    out.write_json("report.json", &report)?;
    out.write_json("exact_law.json", &law_json)?;
    out.finish(ctx.command, &ctx.name, &ctx.echo)?;

    Ok(if family_check.pass { 0 } else { 3 })
}
