//! Amplitude damping: a qubit channel, certified through an attested bound.

use dobrushin::ergodicity::{classify, ClassifyOptions};
use dobrushin::operators::dobrushin_delta;
use dobrushin::spaces::hermitian::{CMatrix, C64};
use dobrushin::{Element, MarkovOperator, SpaceDescriptor};

fn main() -> dobrushin::Result<()> {
    let gamma: f64 = 0.5;
    let z = C64::new(0.0, 0.0);
    let k1 = CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), z, z, C64::new((1.0 - gamma).sqrt(), 0.0)]);
    let k2 = CMatrix::from_row_slice(2, 2, &[z, C64::new(gamma.sqrt(), 0.0), z, z]);
    let t = MarkovOperator::from_kraus(SpaceDescriptor::quantum(2)?, &[k1, k2])?;
    println!("validated = {}, cp_certified = {}", t.validated(), t.cp_certified());

    let sampled = dobrushin_delta(&t, 64, 1)?;
    let attested = (1.0 - gamma).sqrt();
    println!("sampled delta {:.6} (certified: {}), attested bound {attested:.6}", sampled.value, sampled.certified);

    // without the attestation there is nothing to certify with
    let opts = ClassifyOptions::default();
    println!("unattested: {:?}", classify(&t, &opts).map(|r| r.classification));

    let report = classify(&t, &opts.with_delta_upper(Some(attested)))?;
    let x0 = report.fixed_point.expect("stable");
    let ground = Element::quantum_diag(&[1.0, 0.0])?;
    println!("{:?}, distance of fixed point to |0><0|: {:e}", report.classification, x0.distance(&ground));
    Ok(())
}
