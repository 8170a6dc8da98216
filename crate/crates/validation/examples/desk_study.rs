//! Runs the desk-scale naive-vs-stochastic comparison and prints the table.
//!
//! cargo run --release -p mixem-validation --example desk_study -- [master_seed] [threads]

use std::time::Instant;

use mixem::{run_experiment, RunOptions};
use mixem_validation::{compare_cells, desk_spec, DESK_MASTER_SEED};

fn main() -> mixem::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args
        .next()
        .map_or(DESK_MASTER_SEED, |v| v.parse().expect("master seed"));
    let threads = args.next().map(|v| v.parse().expect("thread count"));
    let spec = desk_spec(seed);
    let started = Instant::now();
    let out = run_experiment(
        &spec,
        &RunOptions {
            threads,
            cancel: None,
        },
    )?;
    print!("{}", out.table.to_csv_string());
    for c in compare_cells(&spec, &out.table) {
        println!(
            "K={} d={}: naive {:.2} stochastic {:.2}",
            c.k, c.d, c.naive, c.stochastic
        );
    }
    eprintln!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
