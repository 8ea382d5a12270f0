//! Dobrushin coefficient on each kind of space.

use dobrushin::operators::{dobrushin_delta, validate_markov};
use dobrushin::SpaceDescriptor;
use nalgebra::DMatrix;

fn main() -> dobrushin::Result<()> {
    let space = SpaceDescriptor::classical(3)?;
    let t = validate_markov(
        DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, 0.3, 0.6, 0.5, 0.2, 0.2, 0.5]),
        space,
        0,
        0,
    )?;
    let est = dobrushin_delta(&t, 0, 0)?;
    println!("classical: delta = {:.6} certified = {}", est.value, est.certified);
    println!("  attained between columns {:?} and {:?}", est.witness.0.coords().as_slice(), est.witness.1.coords().as_slice());

    for k in [2, 4, 8] {
        let d = dobrushin_delta(&t.power(k), 0, 0)?.value;
        println!("  delta(T^{k}) = {d:.6}");
    }

    // c0 scales the tail: delta is exactly 0.6
    let pc = SpaceDescriptor::pcone(2, 3.0)?;
    let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.6, 0.0, -0.6, 0.0]);
    let rot = validate_markov(m, pc, 64, 1)?;
    let est = dobrushin_delta(&rot, 32, 7)?;
    println!("p-cone: sampled delta = {:.6} (lower bound, exact value 0.6)", est.value);
    Ok(())
}
