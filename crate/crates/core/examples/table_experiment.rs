//! Run a table experiment from a TOML spec (default: configs/table1.toml).

use mitarget::eval::{run_experiment, ExperimentSpec};

fn main() -> mitarget::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/table1.toml").to_string());
    let spec = ExperimentSpec::from_toml(&std::fs::read_to_string(&path)?)?;
    let report = run_experiment(&spec)?;
    println!("{} ({} runs per cell)", spec.name, spec.runs);
    for row in &report.rows {
        println!(
            "{:<12} {:<10} {:.3} ± {:.3}   {:.4} s",
            row.cell,
            row.algorithm.name(),
            row.mean,
            row.std,
            row.mean_runtime_s
        );
    }
    Ok(())
}
