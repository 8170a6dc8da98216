use std::fs::File;
use std::io::BufWriter;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::Args;
use mixem::{run_experiment, ExperimentSpec, RunOptions};
use serde::Serialize;

use crate::config::{resolve, CommonArgs, Flags};
use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Worker threads; the output does not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write one row per trial to trials.csv.
    #[arg(long)]
    trials: bool,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_inits: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Serialize)]
struct Extra {
    truncated: bool,
}

pub fn run(args: ExperimentArgs) -> CliResult<()> {
    let mut flags = Flags::default();
    flags.put("master_seed", args.master_seed);
    flags.put("n_samples", args.n_samples);
    flags.put("n_inits", args.n_inits);
    flags.put("max_iters", args.max_iters);
    let (spec, value): (ExperimentSpec, _) = resolve(&args.common, flags)?;
    spec.validate()?;
    if args.threads == Some(0) {
        return Err(CliError::Validation("--threads must be at least 1".into()));
    }
    let out = args.common.prepare_out()?.to_path_buf();

    let cancel = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&cancel);
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    let options = RunOptions {
        threads: args.threads,
        cancel: Some(cancel),
    };
    let result = run_experiment(&spec, &options)?;

    result
        .table
        .write_csv(BufWriter::new(File::create(out.join("success_table.csv"))?))?;
    if args.trials {
        let file = BufWriter::new(File::create(out.join("trials.csv"))?);
        mixem::harness::write_trials_csv(&result.trials, file)?;
    }
    super::write_run_record(
        &out,
        "experiment",
        &value,
        Extra {
            truncated: result.truncated,
        },
    )?;
    if result.truncated {
        eprintln!("warning: interrupted; the table covers only the trials that finished");
    }
    print!("{}", result.table.to_csv_string());
    Ok(())
}
