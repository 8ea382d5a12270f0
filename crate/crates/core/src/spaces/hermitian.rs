//! Real coordinates for Hermitian `d × d` matrices.
//!
//! The coordinate basis is orthonormal under the trace inner product
//! `⟨A, B⟩ = tr(A B)`, so coordinates are `c_i = tr(B_i H)` and the
//! Euclidean pairing of two coordinate vectors equals the trace pairing of
//! the matrices they encode. The order is fixed:
//!
//! 1. index `0`: `I / √d`;
//! 2. for every pair `j < k` in lexicographic order, the symmetric element
//!    `(E_jk + E_kj) / √2`;
//! 3. for every pair `j < k` in lexicographic order, the antisymmetric
//!    element `(−i E_jk + i E_kj) / √2`;
//! 4. for `l = 1, …, d − 1`, the diagonal element
//!    `(E_00 + … + E_{l−1,l−1} − l E_ll) / √(l (l + 1))`.
//!
//! For `d = 2` this is `(I, σ_x, σ_y, σ_z) / √2`.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

fn pair_count(d: usize) -> usize {
    d * (d - 1) / 2
}

fn pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |j| (j + 1..d).map(move |k| (j, k)))
}

/// Coordinates of a Hermitian matrix. Only the Hermitian part is read.
pub fn encode(h: &CMatrix) -> DVector<f64> {
    let d = h.nrows();
    let np = pair_count(d);
    let mut c = DVector::zeros(d * d);
    let trace: f64 = (0..d).map(|j| h[(j, j)].re).sum();
    c[0] = trace / (d as f64).sqrt();
    for (p, (j, k)) in pairs(d).enumerate() {
        let re = 0.5 * (h[(j, k)].re + h[(k, j)].re);
        let im = 0.5 * (h[(j, k)].im - h[(k, j)].im);
        c[1 + p] = std::f64::consts::SQRT_2 * re;
        c[1 + np + p] = -std::f64::consts::SQRT_2 * im;
    }
    for l in 1..d {
        let head: f64 = (0..l).map(|j| h[(j, j)].re).sum();
        let norm = ((l * (l + 1)) as f64).sqrt();
        c[1 + 2 * np + (l - 1)] = (head - l as f64 * h[(l, l)].re) / norm;
    }
    c
}

/// Hermitian matrix with the given coordinates.
pub fn decode(c: &DVector<f64>, d: usize) -> CMatrix {
    debug_assert_eq!(c.len(), d * d);
    let np = pair_count(d);
    let mut h = CMatrix::zeros(d, d);
    let id = c[0] / (d as f64).sqrt();
    for j in 0..d {
        h[(j, j)] = C64::new(id, 0.0);
    }
    for (p, (j, k)) in pairs(d).enumerate() {
        let s = c[1 + p] / std::f64::consts::SQRT_2;
        let a = c[1 + np + p] / std::f64::consts::SQRT_2;
        h[(j, k)] = C64::new(s, -a);
        h[(k, j)] = C64::new(s, a);
    }
    for l in 1..d {
        let w = c[1 + 2 * np + (l - 1)] / ((l * (l + 1)) as f64).sqrt();
        for j in 0..l {
            h[(j, j)].re += w;
        }
        h[(l, l)].re -= l as f64 * w;
    }
    h
}

/// Eigenvalues (ascending) and matching eigenvectors as columns.
pub fn eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

pub fn eigenvalues(h: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `|ψ⟩⟨ψ|` for a (not necessarily normalized) vector.
pub fn projector(psi: &CVector) -> CMatrix {
    psi * psi.adjoint()
}

/// Spectral split `h = pos − neg` with both parts positive semidefinite.
pub fn spectral_parts(h: &CMatrix) -> (CMatrix, CMatrix) {
    let d = h.nrows();
    let (values, vectors) = eigh(h);
    let mut pos = CMatrix::zeros(d, d);
    let mut neg = CMatrix::zeros(d, d);
    for (i, &lambda) in values.iter().enumerate() {
        let v = vectors.column(i);
        let p = &v * v.adjoint();
        if lambda > 0.0 {
            pos += p * C64::new(lambda, 0.0);
        } else if lambda < 0.0 {
            neg += p * C64::new(-lambda, 0.0);
        }
    }
    (pos, neg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(d: usize) -> Vec<CMatrix> {
        (0..d * d)
            .map(|i| {
                let mut e = DVector::zeros(d * d);
                e[i] = 1.0;
                decode(&e, d)
            })
            .collect()
    }

    #[test]
    fn basis_is_trace_orthonormal() {
        for d in 1..=4 {
            let b = basis(d);
            for (i, bi) in b.iter().enumerate() {
                assert!((bi - bi.adjoint()).norm() < 1e-14);
                for (j, bj) in b.iter().enumerate() {
                    let ip = (bi * bj).trace();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ip.re - want).abs() < 1e-12, "d={d} i={i} j={j}");
                    assert!(ip.im.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn qubit_basis_is_scaled_pauli() {
        let b = basis(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let i = C64::new(0.0, 1.0);
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let sx = CMatrix::from_row_slice(2, 2, &[z, o, o, z]) * C64::new(s, 0.0);
        let sy = CMatrix::from_row_slice(2, 2, &[z, -i, i, z]) * C64::new(s, 0.0);
        let sz = CMatrix::from_row_slice(2, 2, &[o, z, z, -o]) * C64::new(s, 0.0);
        assert!((&b[1] - sx).norm() < 1e-15);
        assert!((&b[2] - sy).norm() < 1e-15);
        assert!((&b[3] - sz).norm() < 1e-15);
    }

    #[test]
    fn encode_decode_roundtrip() {
        let d = 3;
        let mut h = CMatrix::zeros(d, d);
        h[(0, 0)] = C64::new(0.3, 0.0);
        h[(1, 1)] = C64::new(-0.2, 0.0);
        h[(2, 2)] = C64::new(0.9, 0.0);
        h[(0, 2)] = C64::new(0.1, -0.4);
        h[(2, 0)] = C64::new(0.1, 0.4);
        h[(1, 2)] = C64::new(-0.7, 0.2);
        h[(2, 1)] = C64::new(-0.7, -0.2);
        let back = decode(&encode(&h), d);
        assert!((back - h).norm() < 1e-14);
    }
}
