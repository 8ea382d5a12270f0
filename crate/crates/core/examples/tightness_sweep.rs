//! Tightness of the stationary bounds over random chains, printed as CSV.

use dobrushin::harness::{tightness_experiment, ExperimentConfig};
use dobrushin::SpaceDescriptor;

fn main() -> dobrushin::Result<()> {
    let config = ExperimentConfig {
        perturbation_magnitudes: vec![0.01, 0.05, 0.1],
        ..ExperimentConfig::new(SpaceDescriptor::classical(4)?, 20, 42)
    };
    let table = tightness_experiment(&config)?;
    print!("{}", table.csv()?);
    eprintln!("\nmagnitude  median eq6  median eq12_inf  median per62  skipped");
    for s in &table.summary {
        eprintln!(
            "{:>9}  {:>10.4}  {:>15.4}  {:>12.4}  {:>7}",
            s.magnitude,
            s.median_ratio_eq6.unwrap_or(f64::NAN),
            s.median_ratio_eq12_inf.unwrap_or(f64::NAN),
            s.median_ratio_per62.unwrap_or(f64::NAN),
            s.skipped
        );
    }
    Ok(())
}
