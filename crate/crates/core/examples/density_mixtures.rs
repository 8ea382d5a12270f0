//! Mixing any operator with its fixed point gives a nearby stable operator.

use dobrushin::harness::{density_experiment, ExperimentConfig};
use dobrushin::SpaceDescriptor;

fn main() -> dobrushin::Result<()> {
    let config = ExperimentConfig { openness_samples: 25, ..ExperimentConfig::new(SpaceDescriptor::classical(4)?, 3, 5) };
    let table = density_experiment(&config, &[0.1, 0.5, 1.9])?;
    println!("family       eps   delta   bound   |T - T_eps|  class  radius");
    for r in &table.rows {
        println!(
            "{:<11} {:>4}  {:.4}  {:.4}  {:>11.4}  {:<5}  {:.4}",
            r.family,
            r.epsilon,
            r.delta,
            r.delta_bound,
            r.distance,
            if r.classification == "UniformlyAsymptoticallyStable" { "UAS" } else { "other" },
            r.openness_radius.unwrap_or(f64::NAN)
        );
    }
    println!("failures: {}", table.failures);
    Ok(())
}
