use clap::Args;
use mixem::rng::{derive_seed, tag};
use mixem::{generate_instance, sample, Family, Means, MixtureModel};
use serde::{Deserialize, Serialize};

use crate::config::{require, resolve, CommonArgs, Flags};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    family: Option<Family>,
    /// Number of components.
    #[arg(long)]
    k: Option<usize>,
    /// Dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Component means, rows separated by `;` and coordinates by `,`.
    /// Drawn from N(0, 5 I) when omitted.
    #[arg(long, allow_hyphen_values = true)]
    means: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    scale: Option<f64>,
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSettings {
    pub family: Family,
    pub k: Option<usize>,
    pub d: Option<usize>,
    pub means: Option<Means>,
    pub scale: f64,
    pub n: Option<usize>,
    pub seed: u64,
}

impl Default for SampleSettings {
    fn default() -> Self {
        SampleSettings {
            family: Family::Gaussian,
            k: None,
            d: None,
            means: None,
            scale: 1.0,
            n: None,
            seed: 0,
        }
    }
}

fn model_means(s: &SampleSettings) -> CliResult<Means> {
    match &s.means {
        Some(m) => {
            for (given, actual, name) in [(s.k, m.k(), "k"), (s.d, m.d(), "d")] {
                if given.is_some_and(|g| g != actual) {
                    return Err(CliError::Validation(format!(
                        "--{name} = {} does not match the shape of --means ({actual})",
                        given.unwrap()
                    )));
                }
            }
            Ok(m.clone())
        }
        None => {
            let k = require(s.k, "--k (or --means)")?;
            let d = require(s.d, "--d (or --means)")?;
            let drawn = generate_instance(k, d, derive_seed(s.seed, &[tag::INSTANCE]))?;
            Ok(drawn.means().clone())
        }
    }
}

pub fn run(args: SampleArgs) -> CliResult<()> {
    let mut flags = Flags::default();
    flags.put("family", args.family);
    flags.put("k", args.k);
    flags.put("d", args.d);
    if let Some(raw) = &args.means {
        flags.put("means", Some(Means::parse(raw)?));
    }
    flags.put("scale", args.scale);
    flags.put("n", args.n);
    flags.put("seed", args.seed);
    let (settings, value): (SampleSettings, _) = resolve(&args.common, flags)?;
    let n = require(settings.n, "--n")?;
    if n == 0 {
        return Err(CliError::Validation("--n must be at least 1".into()));
    }
    let model = MixtureModel::new(settings.family, model_means(&settings)?, settings.scale)?;
    if model.family() == Family::Laplacian && model.d() > 1 {
        eprintln!(
            "warning: the multivariate Laplacian is the product of independent \
             coordinate-wise Laplacians, an extension of the univariate model"
        );
    }
    let samples = sample(&model, n, settings.seed);

    let out = args.common.prepare_out()?;
    mixem::io::save_json(&model, &out.join("model.json"))?;
    mixem::io::save_samples_csv(&samples, &out.join("samples.csv"))?;
    super::write_run_record(out, "sample", &value, ())?;
    Ok(())
}
