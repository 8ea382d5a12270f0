//! Base norms, Jordan splits and base-pair decompositions on the three spaces.

use dobrushin::spaces::{jordan_decompose, lemma32_decompose};
use dobrushin::{Element, SpaceDescriptor};

fn show(x: &Element) -> dobrushin::Result<()> {
    let (y, z) = jordan_decompose(x);
    println!("{}: x = {:?}", x.space(), x.coords().as_slice());
    println!("  |x| = {:.6}, f(x) = {:.6}", x.base_norm(), x.functional());
    println!("  x = y - z with f(y) + f(z) = {:.6}", y.functional() + z.functional());
    if x.functional().abs() < 1e-12 {
        let (u, v, s) = lemma32_decompose(x)?;
        let err = (x - &(&u - &v).scaled(s)).base_norm();
        println!("  x = {s:.4} (u - v) with u, v in the base, error {err:e}");
    }
    Ok(())
}

fn main() -> dobrushin::Result<()> {
    show(&Element::from_slice(SpaceDescriptor::classical(3)?, &[0.5, -0.2, -0.3])?)?;
    show(&Element::from_slice(SpaceDescriptor::pcone(2, 3.0)?, &[0.4, 1.0, -0.5])?)?;
    show(&Element::from_slice(SpaceDescriptor::pcone(2, 3.0)?, &[0.0, 1.0, -0.5])?)?;
    show(&Element::quantum_diag(&[0.7, -0.2])?)?;
    show(&Element::quantum_diag(&[0.5, -0.5])?)?;
    Ok(())
}
