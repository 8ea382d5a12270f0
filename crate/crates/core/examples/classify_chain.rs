//! Classify a chain, print its geometric envelope and stationary state.

use dobrushin::ergodicity::{classify, ClassifyOptions};
use dobrushin::operators::validate_markov;
use dobrushin::SpaceDescriptor;
use nalgebra::DMatrix;

fn main() -> dobrushin::Result<()> {
    // a slow chain: the first power has delta = 1
    let m = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5]);
    let t = validate_markov(m, SpaceDescriptor::classical(3)?, 0, 0)?;
    let report = classify(&t, &ClassifyOptions::default())?;

    println!("classification: {:?}", report.classification);
    println!("n0 = {:?}, rho = {:?}", report.n0, report.rho);
    println!("envelope C = {:?}, alpha = {:?}, n_tilde = {:?}", report.c, report.alpha, report.n_tilde);
    if let Some(x0) = &report.fixed_point {
        println!("fixed point = {:?} (residual {:e})", x0.coords().as_slice(), report.fixed_point_residual.unwrap_or(0.0));
    }
    for p in report.trace.iter().take(6) {
        println!("  n = {:>3}  delta(T^n) = {:.6}  delta(A_n) = {:.6}", p.n, p.delta_tn, p.delta_an);
    }
    Ok(())
}
