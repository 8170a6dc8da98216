use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use mixem::math::fmt17;
use mixem::{fit, generate_initialization, Algorithm, FitConfig, FitResult, LambdaSchedule, Means};
use serde::{Deserialize, Serialize};

use crate::config::{require, resolve, CommonArgs, Flags};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgorithmName {
    Naive,
    Regularized,
    Stochastic,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// CSV of samples with header x1..xd.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Initial means, rows separated by `;`. Drawn from N(0, 5 I) when omitted.
    #[arg(long, allow_hyphen_values = true)]
    init: Option<String>,
    /// Number of components for a random initialization.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmName>,
    /// Penalty weight of the regularized variant.
    #[arg(long = "M", value_name = "M")]
    m: Option<f64>,
    /// Penalty-weight distribution of the stochastic variant:
    /// loguniform:LO,HI, uniform:LO,HI or constant:V.
    #[arg(long)]
    lambda_dist: Option<LambdaSchedule>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    param_tol: Option<f64>,
    /// Seeds the random initialization and the penalty-weight stream.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    pub samples: Option<PathBuf>,
    pub init: Option<Means>,
    pub k: Option<usize>,
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub param_tol: f64,
    pub seed: u64,
}

impl Default for FitSettings {
    fn default() -> Self {
        let base = FitConfig::default();
        FitSettings {
            samples: None,
            init: None,
            k: None,
            algorithm: base.algorithm,
            max_iters: base.max_iters,
            param_tol: base.param_tol,
            seed: base.seed,
        }
    }
}

fn algorithm_flag(args: &FitArgs) -> CliResult<Option<Algorithm>> {
    let Some(name) = args.algorithm else {
        if args.m.is_some() || args.lambda_dist.is_some() {
            return Err(CliError::Usage(
                "--M and --lambda-dist need --algorithm regularized / stochastic".into(),
            ));
        }
        return Ok(None);
    };
    let algo = match name {
        AlgorithmName::Naive => Algorithm::Naive,
        AlgorithmName::Regularized => Algorithm::Regularized {
            m: require(args.m, "--M")?,
        },
        AlgorithmName::Stochastic => Algorithm::Stochastic {
            schedule: args.lambda_dist.unwrap_or_default(),
        },
    };
    let stray = match name {
        AlgorithmName::Naive => args.m.is_some() || args.lambda_dist.is_some(),
        AlgorithmName::Regularized => args.lambda_dist.is_some(),
        AlgorithmName::Stochastic => args.m.is_some(),
    };
    if stray {
        return Err(CliError::Usage(format!(
            "flag not used by --algorithm {}",
            name.to_possible_value().unwrap().get_name()
        )));
    }
    Ok(Some(algo))
}

#[derive(Serialize)]
struct MeansOutput<'a> {
    means: &'a Means,
    converged: bool,
    iterations_used: usize,
    seed: u64,
}

fn write_trace(result: &FitResult, w: impl std::io::Write) -> mixem::Result<()> {
    let rows: Vec<Vec<String>> = result
        .trace
        .iter()
        .map(|r| {
            vec![
                r.iter.to_string(),
                fmt17(r.loglik),
                fmt17(r.objective),
                fmt17(r.moment_residual),
                fmt17(r.max_step),
                fmt17(r.lambda),
            ]
        })
        .collect();
    let header = [
        "iter",
        "loglik",
        "objective",
        "moment_residual",
        "max_step",
        "lambda",
    ];
    mixem::io::write_table(&header, &rows, w)
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let mut flags = Flags::default();
    flags.put("samples", args.samples.clone());
    if let Some(raw) = &args.init {
        flags.put("init", Some(Means::parse(raw)?));
    }
    flags.put("k", args.k);
    flags.put("algorithm", algorithm_flag(&args)?);
    flags.put("max_iters", args.max_iters);
    flags.put("param_tol", args.param_tol);
    flags.put("seed", args.seed);
    let (settings, value): (FitSettings, _) = resolve(&args.common, flags)?;

    let path = settings
        .samples
        .as_ref()
        .ok_or_else(|| CliError::Usage("missing required setting --samples".into()))?;
    let samples = mixem::io::load_samples_csv(path, 0)?;
    let init = match &settings.init {
        Some(m) => m.clone(),
        None => generate_initialization(
            require(settings.k, "--k (or --init)")?,
            samples.d(),
            settings.seed,
        )?,
    };
    let config = FitConfig {
        algorithm: settings.algorithm,
        max_iters: settings.max_iters,
        param_tol: settings.param_tol,
        seed: settings.seed,
    };
    let result = fit(&init, &samples, &config)?;

    let out = args.common.prepare_out()?;
    write_trace(
        &result,
        BufWriter::new(File::create(out.join("trace.csv"))?),
    )?;
    let means = MeansOutput {
        means: &result.means,
        converged: result.converged,
        iterations_used: result.iterations_used,
        seed: settings.seed,
    };
    mixem::io::save_json(&means, &out.join("means.json"))?;
    super::write_run_record(out, "fit", &value, ())?;
    if !result.degenerate_components.is_empty() {
        eprintln!(
            "warning: components {:?} lost all responsibility mass and were held fixed",
            result.degenerate_components
        );
    }
    println!(
        "converged={} iterations={} loglik={}",
        result.converged,
        result.iterations_used,
        result.final_loglik()
    );
    Ok(())
}
