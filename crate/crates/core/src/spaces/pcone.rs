//! Kernels for the p-cone `{(x_0, x̂) : x_0 ≥ ‖x̂‖_p}` with functional `x ↦ x_0`.
//!
//! The base is `{1} × B_p`, a centrally symmetric unit ball, so the base
//! norm has the closed form `max(|x_0|, ‖x̂‖_p)`: the decomposition
//! `x = y − z` with `f(y) + f(z)` minimal exists exactly when the p-balls
//! `B(0, y_0)` and `B(x̂, y_0 − x_0)` meet, i.e. when
//! `2 y_0 − x_0 ≥ ‖x̂‖_p`, and the optimal split puts `ŷ` on the segment
//! `[0, x̂]`.

use nalgebra::DVector;

/// `‖v‖_p` computed with max-abs scaling so that extreme exponents neither
/// overflow nor underflow.
pub fn p_norm<'a, I>(v: I, p: f64) -> f64
where
    I: IntoIterator<Item = &'a f64>,
    I::IntoIter: Clone,
{
    let it = v.into_iter();
    let scale = it.clone().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let sum: f64 = it.map(|x| (x.abs() / scale).powf(p)).sum();
    scale * sum.powf(1.0 / p)
}

pub fn dual_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

fn tail(v: &DVector<f64>) -> &[f64] {
    &v.as_slice()[1..]
}

pub fn base_norm(v: &DVector<f64>, p: f64) -> f64 {
    v[0].abs().max(p_norm(tail(v), p))
}

pub fn in_cone(v: &DVector<f64>, p: f64, tol: f64) -> bool {
    v[0] >= p_norm(tail(v), p) - tol
}

/// Vector `w` with `‖w‖_q = 1` and `⟨w, v⟩ = ‖v‖_p` (zero when `v = 0`).
fn p_dual_direction(v: &[f64], p: f64) -> Vec<f64> {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return vec![0.0; v.len()];
    }
    let norm = p_norm(v, p) / scale;
    v.iter()
        .map(|&x| {
            let r = x.abs() / scale;
            x.signum() * (r / norm).powf(p - 1.0)
        })
        .collect()
}

/// A norming functional: `⟨g, v⟩ = ‖v‖` and `g` has dual norm at most one.
pub fn norming_functional(v: &DVector<f64>, p: f64) -> DVector<f64> {
    let mut g = DVector::zeros(v.len());
    let t = p_norm(tail(v), p);
    if v[0].abs() >= t {
        g[0] = if v[0] == 0.0 { 0.0 } else { v[0].signum() };
    } else {
        for (gi, wi) in g.iter_mut().skip(1).zip(p_dual_direction(tail(v), p)) {
            *gi = wi;
        }
    }
    g
}

/// Maximizer of `u ↦ ⟨g, u⟩` over the base; always an extreme point.
pub fn maximize_linear(g: &DVector<f64>, p: f64) -> DVector<f64> {
    let q = dual_exponent(p);
    let mut u = DVector::zeros(g.len());
    u[0] = 1.0;
    let gt = tail(g);
    if gt.iter().all(|x| *x == 0.0) {
        u[1] = 1.0;
        return u;
    }
    for (ui, wi) in u.iter_mut().skip(1).zip(p_dual_direction(gt, q)) {
        *ui = wi;
    }
    // renormalize against rounding so the point sits on the unit sphere
    let n = p_norm(&u.as_slice()[1..], p);
    for ui in u.iter_mut().skip(1) {
        *ui /= n;
    }
    u
}

/// Optimal split `v = y − z` of the base-norm decomposition.
pub fn jordan(v: &DVector<f64>, p: f64) -> (DVector<f64>, DVector<f64>) {
    let nu = base_norm(v, p);
    let dim = v.len();
    if nu == 0.0 {
        return (DVector::zeros(dim), DVector::zeros(dim));
    }
    let y0 = 0.5 * (nu + v[0]);
    let z0 = 0.5 * (nu - v[0]);
    let lambda = y0 / nu;
    let mut y = DVector::zeros(dim);
    let mut z = DVector::zeros(dim);
    y[0] = y0;
    z[0] = z0;
    for i in 1..dim {
        y[i] = lambda * v[i];
        z[i] = y[i] - v[i];
    }
    (y, z)
}
