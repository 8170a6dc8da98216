use clap::{Args, ValueEnum};
use mixem::verify::{self, ClosedForms, Level};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "fast")]
    level: LevelArg,
    /// Swap in a deliberately wrong closed-form map, to check that the
    /// suites notice.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn broken_map(lambda: f64, eta: f64) -> mixem::Result<f64> {
    Ok(mixem::em_map_closed(lambda, eta)? * (1.0 + 1e-4))
}

pub fn run(args: VerifyArgs) -> CliResult<()> {
    let level = match args.level {
        LevelArg::Fast => Level::Fast,
        LevelArg::Full => Level::Full,
    };
    let mut forms = ClosedForms::default();
    if args.inject_fault {
        forms.em_map = broken_map;
    }
    let reports = verify::run_with(level, &forms);
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed.join(", ")))
    }
}
