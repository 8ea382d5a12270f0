//! Run the randomized invariant suite and list the worst slack per invariant.

use dobrushin::harness::{run_property_suite, ExperimentConfig};
use dobrushin::SpaceDescriptor;

fn main() -> dobrushin::Result<()> {
    let config = ExperimentConfig { inject_fault: true, openness_samples: 20, ..ExperimentConfig::new(SpaceDescriptor::classical(4)?, 64, 42) };
    let result = run_property_suite(&config, &[])?;
    for r in &result.records {
        println!(
            "{:<12} {:<30} trials {:>4}  failures {} (expected {})  worst slack {:+.3e}",
            r.group,
            r.name,
            r.trials,
            r.failures,
            r.expected_failures,
            r.worst_slack.unwrap_or(0.0)
        );
    }
    println!("passed: {}", result.passed);
    Ok(())
}
