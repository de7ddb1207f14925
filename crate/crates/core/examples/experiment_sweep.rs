//! A seeded sweep through the experiment runner, written as CSV plus a JSON
//! summary.
//!
//! cargo run --release --example experiment_sweep -- /tmp/sweep

use std::path::PathBuf;

use pomdp_ope::harness::{run_experiment, ExperimentConfig, ExperimentKind};

fn main() -> pomdp_ope::Result<()> {
    let mut config = ExperimentConfig::new(ExperimentKind::IsContrast, vec![4, 8], vec![100, 1000], (0..10).collect());
    config.output = std::env::args().nth(1).map(PathBuf::from);
    let result = run_experiment(&config)?;
    println!("{} rows, {} errors", result.rows.len(), result.error_rows);
    println!("{}", result.summary_json());
    Ok(())
}
