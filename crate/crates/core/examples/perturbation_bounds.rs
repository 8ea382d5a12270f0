//! Every perturbation bound for a two-state chain and a nearby perturbation.

use dobrushin::operators::validate_markov;
use dobrushin::perturbation::{tightness_report, PerturbationOptions};
use dobrushin::SpaceDescriptor;
use nalgebra::DMatrix;

fn main() -> dobrushin::Result<()> {
    let space = SpaceDescriptor::classical(2)?;
    let t = validate_markov(DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.8]), space, 0, 0)?;
    let s = validate_markov(DMatrix::from_row_slice(2, 2, &[0.88, 0.215, 0.12, 0.785]), space, 0, 0)?;

    let report = tightness_report(&t, &s, &PerturbationOptions::default().with_m(1).with_horizon(8))?;
    let b = &report.bounds;
    println!("||T - S|| = {:.4}, delta(T^m) = {:.4}", report.norm_ts, report.delta_tm);
    println!("stationary: actual {:.6}", report.actual_stationary_distance.unwrap());
    println!("  eq6  {:.6}", b.eq6.unwrap());
    println!("  eq9  {:.6}", b.eq9.unwrap());
    println!("  per62 {:.6}", b.per62.unwrap());
    if let Some(e) = b.eq14 {
        println!("  eq14 {:.6} (trivial headroom: {})", e.value, e.trivial_headroom);
    }
    println!("\n  n   actual     eq1        eq8        eq12");
    for row in report.per_n_rows() {
        println!(
            "{:>3}  {:.6}  {:.6}  {:.6}  {:.6}",
            row.n,
            row.actual,
            row.eq1.unwrap_or(f64::NAN),
            row.eq8.unwrap_or(f64::NAN),
            row.eq12.unwrap_or(f64::NAN)
        );
    }
    println!("\nsoundness violations: {}", report.violations());
    Ok(())
}
