use std::fs::File;
use std::io::BufWriter;

use clap::Args;
use mixem::math::fmt17;
use mixem::{run_population_em, PopulationTrajectory, QuadratureSettings};
use serde::{Deserialize, Serialize};

use crate::config::{require, resolve, CommonArgs, Flags};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct PopulationArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Location of the true components, +/- mu_star.
    #[arg(long, allow_hyphen_values = true)]
    mu_star: Option<f64>,
    /// Starting estimate.
    #[arg(long, allow_hyphen_values = true)]
    lambda0: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop once |lambda - fixed point| falls below this.
    #[arg(long)]
    tol: Option<f64>,
    /// Accept lambda0 = 0 or mu_star = 0.
    #[arg(long)]
    allow_saddle: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSettings {
    pub mu_star: Option<f64>,
    pub lambda0: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub allow_saddle: bool,
    pub quadrature: QuadratureSettings,
}

impl Default for PopulationSettings {
    fn default() -> Self {
        PopulationSettings {
            mu_star: None,
            lambda0: None,
            max_iters: 1000,
            tol: 1e-8,
            allow_saddle: false,
            quadrature: QuadratureSettings::default(),
        }
    }
}

#[derive(Serialize)]
struct Summary {
    mu_star: f64,
    lambda0: f64,
    target: f64,
    final_lambda: f64,
    iterations: usize,
    converged: bool,
    kappa1: Option<f64>,
    kappa2: Option<f64>,
    kappa: Option<f64>,
    max_ratio: Option<f64>,
}

fn write_trajectory(t: &PopulationTrajectory, w: impl std::io::Write) -> mixem::Result<()> {
    let rows: Vec<Vec<String>> = t
        .iterates
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let ratio = match i {
                0 => String::new(),
                _ => t.ratios[i - 1].map(fmt17).unwrap_or_default(),
            };
            vec![i.to_string(), fmt17(*l), fmt17((l - t.target).abs()), ratio]
        })
        .collect();
    mixem::io::write_table(&["t", "lambda", "abs_err", "ratio"], &rows, w)
}

pub fn run(args: PopulationArgs) -> CliResult<()> {
    let mut flags = Flags::default();
    flags.put("mu_star", args.mu_star);
    flags.put("lambda0", args.lambda0);
    flags.put("max_iters", args.max_iters);
    flags.put("tol", args.tol);
    flags.put("allow_saddle", args.allow_saddle.then_some(true));
    let (settings, value): (PopulationSettings, _) = resolve(&args.common, flags)?;
    let mu_star = require(settings.mu_star, "--mu-star")?;
    let lambda0 = require(settings.lambda0, "--lambda0")?;
    if !settings.allow_saddle {
        if lambda0 == 0.0 {
            return Err(CliError::Validation(
                "lambda0 = 0 is itself a fixed point of the EM map (the symmetric saddle), \
                 so the iteration never moves; pass --allow-saddle to run it anyway"
                    .into(),
            ));
        }
        if mu_star == 0.0 {
            return Err(CliError::Validation(
                "mu_star = 0 collapses the mixture to one component, leaving lambda = 0 \
                 as the only fixed point; pass --allow-saddle to run it anyway"
                    .into(),
            ));
        }
    }
    let traj = run_population_em(
        lambda0,
        mu_star,
        settings.max_iters,
        settings.tol,
        &settings.quadrature,
    )?;

    let out = args.common.prepare_out()?;
    let file = File::create(out.join("trajectory.csv"))?;
    write_trajectory(&traj, BufWriter::new(file))?;
    let summary = Summary {
        mu_star,
        lambda0,
        target: traj.target,
        final_lambda: traj.final_lambda(),
        iterations: traj.ratios.len(),
        converged: traj.converged,
        kappa1: traj.kappa1,
        kappa2: traj.kappa2,
        kappa: traj.kappa,
        max_ratio: traj.max_ratio(),
    };
    mixem::io::save_json(&summary, &out.join("trajectory.json"))?;
    super::write_run_record(out, "population-k2", &value, ())?;
    println!(
        "converged={} iterations={} final_lambda={} kappa={}",
        summary.converged,
        summary.iterations,
        summary.final_lambda,
        summary.kappa.map_or("n/a".to_string(), |k| k.to_string())
    );
    Ok(())
}
