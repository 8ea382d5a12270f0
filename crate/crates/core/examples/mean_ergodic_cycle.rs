//! A cycle is mean ergodic but never contracts; the openness radius says how far
//! it can be pushed while staying mean ergodic.

use dobrushin::ergodicity::{classify, find_contractive_power, openness_radius, ClassifyOptions};
use dobrushin::harness::random_cycle;

fn main() -> dobrushin::Result<()> {
    let c = random_cycle(5, 1)?;
    let report = classify(&c, &ClassifyOptions::default())?;
    println!("{:?}", report.classification);
    println!("contracting power within 64 steps: {:?}", find_contractive_power(&c, 64, 1.0 - 1e-6));
    println!("mean_n0 = {:?}, delta(A_n0) = {:?}", report.mean_n0, report.mean_rho);
    println!("fixed point = {:?}", report.fixed_point.map(|x| x.coords().as_slice().to_vec()));

    let n = report.mean_n0.unwrap();
    for k in [n, 2 * n, 5] {
        println!("openness radius at n = {k}: {:.6}", openness_radius(&c, k)?);
    }
    Ok(())
}
