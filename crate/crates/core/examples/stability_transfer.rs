//! Stability transfer: certify S from T, then rebuild z0 with the Neumann series.

use dobrushin::harness::{perturb_toward, random_markov};
use dobrushin::perturbation::{neumann_inverse_on_n, stability_transfer, PerturbationOptions, Verdict};
use dobrushin::SpaceDescriptor;

fn main() -> dobrushin::Result<()> {
    let space = SpaceDescriptor::classical(5)?;
    let t = random_markov(space, 11, 0.2);
    for magnitude in [0.05, 0.3, 1.2] {
        let s = perturb_toward(&t, magnitude, 3)?;
        let tr = stability_transfer(&t, &s, 1, &PerturbationOptions::default())?;
        println!("magnitude {magnitude}: {:?}, margin {:+.4}", tr.verdict, tr.margin);
        if tr.verdict != Verdict::Applies {
            continue;
        }
        let (x0, z0, rho) = (tr.x0.unwrap(), tr.z0.unwrap(), tr.rho.unwrap());
        println!("  |x0 - z0| = {:.6} <= {:.6}", x0.distance(&z0), tr.bound_per62.unwrap());

        let sm = s.power(1);
        let x = &x0 - &sm.apply(&x0);
        let y = neumann_inverse_on_n(&s, 1, &x, rho, 1e-12)?;
        let resid = (&(&y - &sm.apply(&y)) - &x).base_norm();
        println!("  Neumann inverse on N: residual {resid:e}");
    }
    Ok(())
}
