//! Markov operators as dense matrices in canonical coordinates.
//!
//! A matrix `M` acts on coordinate vectors, `x ↦ M x`. On the classical space
//! this makes `M` column-stochastic: column `j` is the image of vertex `e_j`.
//!
//! Suprema of convex functions over the base (the operator norm and the
//! Dobrushin coefficient) are exact on the classical space, where the base
//! has finitely many extreme points. On the p-cone and quantum spaces they are
//! approximated from below by a multistart ascent: from a pair `(u, v)` of
//! extreme points, take a norming functional `g` of `A (u − v)`, pull it back
//! with `Aᵀ`, and jump to the extreme points maximizing and minimizing the
//! pulled-back functional. Convexity makes every step non-decreasing, and
//! every reported value comes with the extreme points that attain it.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::sub_seed;
use crate::spaces::hermitian::{self, CMatrix};
use crate::spaces::{extreme_points, Element, SpaceDescriptor, CONE_TOL};

/// Tolerance on `f ∘ T = f`.
pub const FUNCTIONAL_TOL: f64 = 1e-9;
/// Classical entries below `-NEGATIVE_TOL` count as negative.
pub const NEGATIVE_TOL: f64 = 1e-12;
pub const DEFAULT_VALIDATION_SAMPLES: usize = 64;
/// Restarts for the multistart ascent.
pub const DEFAULT_DELTA_BUDGET: usize = 64;
/// Iteration cap per restart.
pub const ASCENT_ITERATIONS: usize = 500;
/// Fixed-point tolerance required by the mixture construction.
pub const FIXED_POINT_CHECK_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    FunctionalNotPreserved,
    NegativeEntry,
    ConeNotPreserved,
}

/// Where a validation failure was observed. Indices are zero-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Witness {
    Entry { row: usize, col: usize },
    Column { index: usize },
    State { coords: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub magnitude: f64,
    pub witness: Witness,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovOperator {
    space: SpaceDescriptor,
    matrix: DMatrix<f64>,
    validated: bool,
    report: Vec<Violation>,
    cp_certified: bool,
}

fn check_shape(matrix: &DMatrix<f64>, space: SpaceDescriptor) -> Result<()> {
    space.validate()?;
    let n = space.dim();
    if matrix.nrows() != n || matrix.ncols() != n {
        return Err(Error::Malformed(format!(
            "operator matrix is {}x{}, space needs {n}x{n}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::Malformed("operator matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Checks that `matrix` is a Markov operator on `space`.
///
/// `f ∘ T = f` is checked exactly through `fᵀ M`. Positivity is checked
/// entrywise on the classical space and on `samples` extreme points (plus the
/// deterministic axis or basis points) elsewhere. Violations are recorded,
/// not raised; only a wrong shape is an error.
pub fn validate_markov(
    matrix: DMatrix<f64>,
    space: SpaceDescriptor,
    samples: usize,
    seed: u64,
) -> Result<MarkovOperator> {
    check_shape(&matrix, space)?;
    let report = violations(&matrix, space, samples, seed);
    Ok(MarkovOperator { space, validated: report.is_empty(), report, matrix, cp_certified: false })
}

fn violations(matrix: &DMatrix<f64>, space: SpaceDescriptor, samples: usize, seed: u64) -> Vec<Violation> {
    let mut out = Vec::new();
    let f = space.functional_row();
    let drift = matrix.transpose() * &f - &f;
    for (j, r) in drift.iter().enumerate() {
        if r.abs() > FUNCTIONAL_TOL {
            out.push(Violation {
                kind: ViolationKind::FunctionalNotPreserved,
                magnitude: r.abs(),
                witness: Witness::Column { index: j },
            });
        }
    }
    if space.is_classical() {
        for col in 0..matrix.ncols() {
            for row in 0..matrix.nrows() {
                let v = matrix[(row, col)];
                if v < -NEGATIVE_TOL {
                    out.push(Violation {
                        kind: ViolationKind::NegativeEntry,
                        magnitude: -v,
                        witness: Witness::Entry { row, col },
                    });
                }
            }
        }
    } else {
        for e in extreme_points(space, samples, seed) {
            let image = matrix * e.coords();
            let deficit = space.cone_deficit(&image);
            if deficit > CONE_TOL {
                out.push(Violation {
                    kind: ViolationKind::ConeNotPreserved,
                    magnitude: deficit,
                    witness: Witness::State { coords: e.coords().iter().copied().collect() },
                });
            }
        }
    }
    out
}

impl MarkovOperator {
    /// Wraps a matrix obtained by algebra on validated operators.
    pub(crate) fn derived(space: SpaceDescriptor, matrix: DMatrix<f64>, validated: bool, cp: bool) -> Self {
        MarkovOperator { space, matrix, validated, report: Vec::new(), cp_certified: cp }
    }

    pub fn identity(space: SpaceDescriptor) -> Self {
        let n = space.dim();
        MarkovOperator::derived(space, DMatrix::identity(n, n), true, true)
    }

    /// Channel `X ↦ Σ K X K†` on a quantum space.
    ///
    /// The result is validated like any other matrix and additionally tagged
    /// `cp_certified` when `Σ K†K = I` holds to `1e-9`.
    pub fn from_kraus(space: SpaceDescriptor, kraus: &[CMatrix]) -> Result<Self> {
        let d = match space {
            SpaceDescriptor::Quantum { d } => d,
            _ => return Err(Error::Malformed("Kraus operators need a quantum space".into())),
        };
        if kraus.is_empty() {
            return Err(Error::Malformed("empty Kraus set".into()));
        }
        if kraus.iter().any(|k| k.nrows() != d || k.ncols() != d) {
            return Err(Error::Malformed(format!("Kraus operators must be {d}x{d}")));
        }
        let n = d * d;
        let mut matrix = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            let b = hermitian::decode(&e, d);
            let mut image = CMatrix::zeros(d, d);
            for k in kraus {
                image += k * &b * k.adjoint();
            }
            matrix.set_column(j, &hermitian::encode(&image));
        }
        let mut completeness = CMatrix::zeros(d, d);
        for k in kraus {
            completeness += k.adjoint() * k;
        }
        let complete = (completeness - CMatrix::identity(d, d)).iter().all(|c| c.norm() <= 1e-9);
        let mut op = validate_markov(matrix, space, DEFAULT_VALIDATION_SAMPLES, 0)?;
        op.cp_certified = complete && op.validated;
        Ok(op)
    }

    pub fn space(&self) -> SpaceDescriptor {
        self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn validated(&self) -> bool {
        self.validated
    }

    pub fn validation_report(&self) -> &[Violation] {
        &self.report
    }

    pub fn cp_certified(&self) -> bool {
        self.cp_certified
    }

    pub fn apply(&self, x: &Element) -> Element {
        assert_eq!(x.space(), self.space, "element and operator live in different spaces");
        Element::from_raw(self.space, &self.matrix * x.coords())
    }

    pub(crate) fn require_validated(&self, what: &str) -> Result<()> {
        if self.validated {
            Ok(())
        } else {
            Err(Error::Precondition(format!("{what} needs a validated Markov operator")))
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &MarkovOperator) -> MarkovOperator {
        assert_eq!(self.space, other.space);
        MarkovOperator::derived(
            self.space,
            &self.matrix * &other.matrix,
            self.validated && other.validated,
            self.cp_certified && other.cp_certified,
        )
    }

    /// Convex combination `(1 − t) self + t other`.
    pub fn blend(&self, other: &MarkovOperator, t: f64) -> MarkovOperator {
        assert_eq!(self.space, other.space);
        MarkovOperator::derived(
            self.space,
            &self.matrix * (1.0 - t) + &other.matrix * t,
            self.validated && other.validated && (0.0..=1.0).contains(&t),
            self.cp_certified && other.cp_certified,
        )
    }

    /// `T^n` by repeated squaring, without re-validation.
    pub fn power(&self, n: usize) -> MarkovOperator {
        MarkovOperator::derived(self.space, matrix_power(&self.matrix, n), self.validated, self.cp_certified)
    }

    /// `A_n(T) = (1/n) Σ_{k<n} T^k`, without re-validation. `A_1 = I`.
    pub fn cesaro(&self, n: usize) -> MarkovOperator {
        MarkovOperator::derived(self.space, cesaro_average(&self.matrix, n), self.validated, self.cp_certified)
    }

    pub fn revalidated(&self) -> MarkovOperator {
        let report = violations(&self.matrix, self.space, DEFAULT_VALIDATION_SAMPLES, 0);
        MarkovOperator {
            space: self.space,
            matrix: self.matrix.clone(),
            validated: report.is_empty(),
            report,
            cp_certified: self.cp_certified,
        }
    }
}

pub fn matrix_power(m: &DMatrix<f64>, mut n: usize) -> DMatrix<f64> {
    let mut result = DMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = &result * &base;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

pub fn cesaro_average(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    assert!(n >= 1);
    let mut term = DMatrix::identity(m.nrows(), m.ncols());
    let mut sum = term.clone();
    for _ in 1..n {
        term = m * &term;
        sum += &term;
    }
    sum / n as f64
}

/// `(T^n, A_n(T))`, both re-validated once at the end.
pub fn power_and_cesaro(t: &MarkovOperator, n: usize) -> Result<(MarkovOperator, MarkovOperator)> {
    t.require_validated("power_and_cesaro")?;
    if n == 0 {
        return Err(Error::Precondition("power_and_cesaro needs n >= 1".into()));
    }
    Ok((t.power(n).revalidated(), t.cesaro(n).revalidated()))
}

/// A norm value with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    /// True when the value is the exact supremum.
    pub certified: bool,
}

/// `sup_{‖x‖ ≤ 1} ‖A x‖`, which equals `sup_{u ∈ K} ‖A u‖`.
///
/// Exact on the classical space (largest column `ℓ1` norm); a witnessed lower
/// bound elsewhere.
pub fn operator_norm(a: &DMatrix<f64>, space: SpaceDescriptor, budget: usize, seed: u64) -> NormEstimate {
    if space.is_classical() {
        let value = a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        return NormEstimate { value, certified: true };
    }
    if a.iter().all(|x| *x == 0.0) {
        return NormEstimate { value: 0.0, certified: true };
    }
    let starts = extreme_points(space, budget, seed);
    let at = a.transpose();
    let value = starts
        .par_iter()
        .map(|u0| {
            let mut u = u0.coords().clone();
            let mut best = space.base_norm(&(a * &u));
            for _ in 0..ASCENT_ITERATIONS {
                let g = &at * space.norming_functional(&(a * &u));
                let next = space.maximize_linear(&g);
                let val = space.base_norm(&(a * &next));
                if val <= best * (1.0 + 1e-15) {
                    break;
                }
                best = val;
                u = next;
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    NormEstimate { value, certified: false }
}

/// A certified upper bound on `operator_norm(a)`.
///
/// Exact on the classical space. Elsewhere the base norm is compared with the
/// Euclidean norm of the coordinates, `‖x‖ ≤ a ‖x‖₂` and `‖x‖₂ ≤ b ‖x‖`, which
/// gives `‖A‖ ≤ a b σ_max(A)`; sound but possibly loose.
pub fn operator_norm_upper(a: &DMatrix<f64>, space: SpaceDescriptor) -> f64 {
    let (ka, kb) = match space {
        SpaceDescriptor::Classical { .. } => return operator_norm(a, space, 0, 0).value,
        SpaceDescriptor::PCone { d, p } => {
            let d = d as f64;
            let up = d.powf((1.0 / p - 0.5).max(0.0)).max(1.0);
            let down = (1.0 + d.powf(2.0 * (0.5 - 1.0 / p).max(0.0))).sqrt();
            (up, down)
        }
        // ‖X‖₁ ≤ √d ‖X‖₂ and ‖X‖₂ ≤ ‖X‖₁
        SpaceDescriptor::Quantum { d } => ((d as f64).sqrt(), 1.0),
    };
    if a.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    let sigma = a.singular_values().max();
    ka * kb * sigma * (1.0 + 1e-12)
}

/// A certified upper bound on `δ(A) = sup_{x ∈ N} ‖A x‖ / ‖x‖`.
///
/// Exact on the classical space. Elsewhere `N` is a coordinate subspace
/// (`c_0 = 0`) and the same norm comparison as in [`operator_norm_upper`] is
/// applied to the columns acting on `N`.
pub fn delta_upper(a: &DMatrix<f64>, space: SpaceDescriptor) -> f64 {
    let (ka, kb) = match space {
        SpaceDescriptor::Classical { .. } => return delta_of_matrix(a, space, 0, 0).value,
        SpaceDescriptor::PCone { d, p } => {
            let d = d as f64;
            // on N the base norm is ‖x̂‖_p
            (d.powf((1.0 / p - 0.5).max(0.0)).max(1.0), d.powf((0.5 - 1.0 / p).max(0.0)))
        }
        SpaceDescriptor::Quantum { d } => ((d as f64).sqrt(), 1.0),
    };
    let n = a.ncols();
    let on_n = a.columns(1, n - 1);
    if on_n.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    let sigma = on_n.into_owned().singular_values().max();
    ka * kb * sigma * (1.0 + 1e-12)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMethod {
    VertexEnumeration,
    MultistartOptimization,
}

/// Value of `½ sup_{u, v ∈ K} ‖A (u − v)‖` together with the pair attaining it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaEstimate {
    pub value: f64,
    /// True when computed by exact enumeration.
    pub certified: bool,
    pub witness: (Element, Element),
    pub method: DeltaMethod,
    /// Best `‖A x‖ / ‖x‖` over sampled `x` with `f(x) = 0`.
    pub null_space_estimate: f64,
}

impl DeltaEstimate {
    /// Recomputes `½ ‖A (u − v)‖` at the witness pair.
    pub fn witness_value(&self, a: &DMatrix<f64>) -> f64 {
        let (u, v) = &self.witness;
        0.5 * u.space().base_norm(&(a * (u.coords() - v.coords())))
    }
}

fn half_pair_value(space: SpaceDescriptor, a: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    0.5 * space.base_norm(&(a * (u - v)))
}

fn ascend_pair(
    space: SpaceDescriptor,
    a: &DMatrix<f64>,
    at: &DMatrix<f64>,
    mut u: DVector<f64>,
    mut v: DVector<f64>,
) -> (f64, DVector<f64>, DVector<f64>) {
    let mut best = half_pair_value(space, a, &u, &v);
    for _ in 0..ASCENT_ITERATIONS {
        let g = at * space.norming_functional(&(a * (&u - &v)));
        if g.iter().all(|x| *x == 0.0) {
            break;
        }
        let nu = space.maximize_linear(&g);
        let nv = space.maximize_linear(&(-&g));
        let val = half_pair_value(space, a, &nu, &nv);
        if val <= best * (1.0 + 1e-15) {
            break;
        }
        best = val;
        u = nu;
        v = nv;
    }
    (best, u, v)
}

/// Dobrushin-type coefficient `½ sup_{u, v ∈ K} ‖A (u − v)‖` of any matrix.
///
/// For a Markov operator this is `δ(T)`; for a difference `T − S` it is the
/// coefficient of the difference. Exact on the classical space (all column
/// pairs, lowest index pair wins ties); a witnessed lower bound elsewhere.
pub fn delta_of_matrix(a: &DMatrix<f64>, space: SpaceDescriptor, budget: usize, seed: u64) -> DeltaEstimate {
    let dim = space.dim();
    let at = a.transpose();
    let (value, u, v, certified, method) = if let SpaceDescriptor::Classical { n } = space {
        let (mut best, mut bi, mut bj) = (0.0, 0, 0);
        for i in 0..n {
            for j in i + 1..n {
                let d: f64 = (0..n).map(|k| (a[(k, i)] - a[(k, j)]).abs()).sum::<f64>() * 0.5;
                if d > best {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        let mut u = DVector::zeros(dim);
        let mut v = DVector::zeros(dim);
        u[bi] = 1.0;
        v[bj] = 1.0;
        (best, u, v, true, DeltaMethod::VertexEnumeration)
    } else {
        let restarts = budget.max(1);
        let fixed = extreme_points(space, 0, 0);
        let (best, u, v) = (0..restarts)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, r as u64, 0x5e1a));
                let (u0, v0) = if r < fixed.len() * (fixed.len() - 1) / 2 {
                    let (i, j) = nth_pair(fixed.len(), r);
                    (fixed[i].coords().clone(), fixed[j].coords().clone())
                } else {
                    (space.random_extreme_point(&mut rng), space.random_extreme_point(&mut rng))
                };
                ascend_pair(space, a, &at, u0, v0)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((f64::NEG_INFINITY, DVector::zeros(dim), DVector::zeros(dim)), |acc, x| {
                if x.0 > acc.0 { x } else { acc }
            });
        (best, u, v, false, DeltaMethod::MultistartOptimization)
    };

    let mut est = DeltaEstimate {
        value,
        certified,
        witness: (Element::from_raw(space, u), Element::from_raw(space, v)),
        method,
        null_space_estimate: 0.0,
    };
    let (ns, ns_pair) = null_space_sampling(space, a, budget.max(8), seed);
    est.null_space_estimate = ns;
    if !certified && ns > est.value {
        // a sampled direction beat the ascent: restart from its decomposition
        let (u0, v0) = ns_pair.expect("positive estimate has a witness");
        let (val, u, v) = ascend_pair(space, a, &at, u0, v0);
        est.value = val;
        est.witness = (Element::from_raw(space, u), Element::from_raw(space, v));
    }
    est
}

fn nth_pair(n: usize, mut r: usize) -> (usize, usize) {
    for i in 0..n {
        let row = n - 1 - i;
        if r < row {
            return (i, i + 1 + r);
        }
        r -= row;
    }
    unreachable!("pair index out of range")
}

/// `sup ‖A x‖ / ‖x‖` over random `x` with `f(x) = 0`; the maximizing `x`
/// is returned through its base decomposition `(u, v)`.
fn null_space_sampling(
    space: SpaceDescriptor,
    a: &DMatrix<f64>,
    samples: usize,
    seed: u64,
) -> (f64, Option<(DVector<f64>, DVector<f64>)>) {
    use rand::Rng;
    use rand_distr::StandardNormal;

    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 0, 0xdb));
    let bary = space.barycenter();
    let mut best = 0.0;
    let mut arg = None;
    for s in 0..samples {
        let x = if s % 2 == 0 {
            space.random_extreme_point(&mut rng) - space.random_extreme_point(&mut rng)
        } else {
            let g = DVector::from_fn(space.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let fg = space.functional(&g);
            g - bary.coords() * fg
        };
        let nx = space.base_norm(&x);
        if nx <= 1e-12 {
            continue;
        }
        let ratio = space.base_norm(&(a * &x)) / nx;
        if ratio > best {
            if let Ok((u, v, _)) = crate::spaces::lemma32_decompose(&Element::from_raw(space, x)) {
                best = ratio;
                arg = Some((u.into_coords(), v.into_coords()));
            }
        }
    }
    (best, arg)
}

/// Dobrushin ergodicity coefficient of a validated Markov operator.
pub fn dobrushin_delta(t: &MarkovOperator, budget: usize, seed: u64) -> Result<DeltaEstimate> {
    t.require_validated("dobrushin_delta")?;
    let mut est = delta_of_matrix(&t.matrix, t.space, budget, seed);
    est.value = est.value.clamp(0.0, 1.0);
    Ok(est)
}

/// `T_y(x) = f(x) y`.
pub fn rank_one(y: &Element) -> Result<MarkovOperator> {
    let space = y.space();
    if !y.in_base(CONE_TOL) {
        return Err(Error::Precondition("rank_one needs y in the base".into()));
    }
    let matrix = y.coords() * space.functional_row().transpose();
    Ok(MarkovOperator::derived(space, matrix, true, true))
}

/// `T^(ε) = (1 − ε/2) T + (ε/2) T_φ` for a fixed point `φ` of `T`.
///
/// The result fixes `φ`, has `δ ≤ 1 − ε/2` and lies within `ε` of `T`.
pub fn mixture_with_fixed_point(t: &MarkovOperator, phi: &Element, eps: f64) -> Result<MarkovOperator> {
    if !(eps > 0.0 && eps < 2.0) {
        return Err(Error::Precondition(format!("mixture needs 0 < eps < 2, got {eps}")));
    }
    if phi.space() != t.space {
        return Err(Error::Malformed("fixed point and operator live in different spaces".into()));
    }
    let t_phi = rank_one(phi)?;
    let residual = t.apply(phi).distance(phi);
    if residual > FIXED_POINT_CHECK_TOL {
        return Err(Error::Precondition(format!("phi is not a fixed point of T (residual {residual:e})")));
    }
    Ok(t.blend(&t_phi, 0.5 * eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::hermitian::C64;

    fn classical(rows: &[&[f64]]) -> MarkovOperator {
        let n = rows.len();
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        validate_markov(m, SpaceDescriptor::classical(n).unwrap(), 0, 0).unwrap()
    }

    fn worked_t() -> MarkovOperator {
        classical(&[&[0.9, 0.2], &[0.1, 0.8]])
    }

    fn swap() -> MarkovOperator {
        classical(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    fn amplitude_damping(gamma: f64) -> MarkovOperator {
        let z = C64::new(0.0, 0.0);
        let k1 = CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), z, z, C64::new((1.0 - gamma).sqrt(), 0.0)]);
        let k2 = CMatrix::from_row_slice(2, 2, &[z, C64::new(gamma.sqrt(), 0.0), z, z]);
        MarkovOperator::from_kraus(SpaceDescriptor::quantum(2).unwrap(), &[k1, k2]).unwrap()
    }

    #[test]
    fn validate_examples() {
        assert!(worked_t().validated());
        let bad = classical(&[&[1.1, 0.2], &[-0.1, 0.8]]);
        assert!(!bad.validated());
        let neg: Vec<_> = bad
            .validation_report()
            .iter()
            .filter(|v| v.kind == ViolationKind::NegativeEntry)
            .collect();
        assert_eq!(neg.len(), 1);
        assert_eq!(neg[0].witness, Witness::Entry { row: 1, col: 0 });
        assert!((neg[0].magnitude - 0.1).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_wrong_shape() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(
            validate_markov(m, SpaceDescriptor::classical(2).unwrap(), 0, 0),
            Err(Error::Malformed(_))
        ));
    }

    #[test]
    fn functional_drift_is_reported() {
        let t = classical(&[&[0.9, 0.2], &[0.2, 0.8]]);
        assert!(!t.validated());
        assert_eq!(t.validation_report()[0].kind, ViolationKind::FunctionalNotPreserved);
        assert_eq!(t.validation_report()[0].witness, Witness::Column { index: 0 });
    }

    #[test]
    fn amplitude_damping_is_a_certified_channel() {
        let t = amplitude_damping(0.5);
        assert!(t.validated());
        assert!(t.cp_certified());
        // oracle: Kraus completeness computed by hand, K1†K1 + K2†K2 = diag(1, 0.5) + diag(0, 0.5)
        let rho = Element::quantum_diag(&[0.0, 1.0]).unwrap();
        let img = t.apply(&rho);
        assert!(img.max_coord_diff(&Element::quantum_diag(&[0.5, 0.5]).unwrap()) < 1e-12);
    }

    #[test]
    fn positive_but_not_markov_quantum_map_is_flagged() {
        // scaling breaks trace preservation
        let space = SpaceDescriptor::quantum(2).unwrap();
        let m = DMatrix::identity(4, 4) * 1.2;
        let t = validate_markov(m, space, 16, 3).unwrap();
        assert!(!t.validated());
        // reflection of the Bloch ball through its centre is not positive
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0, -2.0, -2.0]));
        let t = validate_markov(m, space, 16, 3).unwrap();
        assert!(t.validation_report().iter().any(|v| v.kind == ViolationKind::ConeNotPreserved));
    }

    #[test]
    fn power_and_cesaro_examples() {
        let t = worked_t();
        let (p1, a1) = power_and_cesaro(&t, 1).unwrap();
        assert_eq!(p1.matrix(), t.matrix());
        assert_eq!(a1.matrix(), &DMatrix::identity(2, 2));

        let (s2, a2) = power_and_cesaro(&swap(), 2).unwrap();
        assert!((s2.matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        assert!((a2.matrix() - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-15);
        assert!(s2.validated() && a2.validated());

        let (m2, _) = power_and_cesaro(&t, 2).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.83, 0.34, 0.17, 0.66]);
        assert!((m2.matrix() - want).amax() < 1e-15);

        assert!(matches!(power_and_cesaro(&t, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn repeated_squaring_matches_naive_product() {
        let t = worked_t();
        let mut naive = DMatrix::identity(2, 2);
        for n in 0..20 {
            assert!((matrix_power(t.matrix(), n) - &naive).amax() < 1e-14);
            naive = t.matrix() * naive;
        }
    }

    #[test]
    fn operator_norm_examples() {
        let space = SpaceDescriptor::classical(2).unwrap();
        let s = classical(&[&[0.88, 0.215], &[0.12, 0.785]]);
        let diff = worked_t().matrix() - s.matrix();
        let n = operator_norm(&diff, space, 0, 0);
        assert!(n.certified);
        assert!((n.value - 0.04).abs() < 1e-12);
        assert_eq!(operator_norm(&DMatrix::zeros(2, 2), space, 0, 0).value, 0.0);
        assert_eq!(operator_norm(&DMatrix::identity(2, 2), space, 0, 0).value, 1.0);
    }

    #[test]
    fn quantum_operator_norm_of_identity_is_one() {
        let space = SpaceDescriptor::quantum(3).unwrap();
        let n = operator_norm(&DMatrix::identity(9, 9), space, 8, 1);
        assert!((n.value - 1.0).abs() < 1e-12);
        assert!(!n.certified);
    }

    #[test]
    fn norm_upper_bound_dominates_estimate() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for space in [
            SpaceDescriptor::quantum(2).unwrap(),
            SpaceDescriptor::pcone(3, 1.5).unwrap(),
            SpaceDescriptor::pcone(2, 4.0).unwrap(),
        ] {
            let n = space.dim();
            for _ in 0..5 {
                let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let lower = operator_norm(&a, space, 16, 3).value;
                assert!(operator_norm_upper(&a, space) >= lower * (1.0 - 1e-12));
                let lower = delta_of_matrix(&a, space, 16, 3).value;
                assert!(delta_upper(&a, space) >= lower * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn delta_examples() {
        let d = dobrushin_delta(&worked_t(), 0, 0).unwrap();
        assert!((d.value - 0.7).abs() < 1e-12);
        assert!(d.certified);
        assert_eq!(d.method, DeltaMethod::VertexEnumeration);
        assert!((d.witness_value(worked_t().matrix()) - d.value).abs() < 1e-12);

        let id = MarkovOperator::identity(SpaceDescriptor::classical(3).unwrap());
        assert_eq!(dobrushin_delta(&id, 0, 0).unwrap().value, 1.0);
    }

    #[test]
    fn delta_vanishes_on_rank_one_maps() {
        let y = Element::from_slice(SpaceDescriptor::classical(2).unwrap(), &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let t = rank_one(&y).unwrap();
        assert_eq!(t.matrix().column(0), t.matrix().column(1));
        assert_eq!(dobrushin_delta(&t, 0, 0).unwrap().value, 0.0);

        let q = SpaceDescriptor::quantum(2).unwrap();
        let t = rank_one(&q.barycenter()).unwrap();
        assert!(dobrushin_delta(&t, 16, 1).unwrap().value < 1e-12);
        // completely depolarizing: everything goes to I/2
        let rho = Element::quantum_diag(&[1.0, 0.0]).unwrap();
        assert!(t.apply(&rho).max_coord_diff(&q.barycenter()) < 1e-15);

        let p = SpaceDescriptor::pcone(1, 2.0).unwrap();
        let y = Element::from_slice(p, &[1.0, 0.0]).unwrap();
        let t = rank_one(&y).unwrap();
        let x = Element::from_slice(p, &[0.7, -0.3]).unwrap();
        assert_eq!(t.apply(&x).coords().as_slice(), &[0.7, 0.0]);
        assert!(dobrushin_delta(&t, 16, 1).unwrap().value < 1e-12);
    }

    #[test]
    fn rank_one_requires_base_point() {
        let y = Element::from_slice(SpaceDescriptor::classical(2).unwrap(), &[0.5, 0.6]).unwrap();
        assert!(matches!(rank_one(&y), Err(Error::Precondition(_))));
    }

    #[test]
    fn quantum_delta_matches_bloch_singular_value() {
        // for qubit channels the trace distance is the Bloch distance, so δ is
        // the largest singular value of the Bloch block; √0.5 for damping 0.5
        let t = amplitude_damping(0.5);
        let d = dobrushin_delta(&t, 32, 7).unwrap();
        assert!(!d.certified);
        assert!(d.value <= 0.5_f64.sqrt() + 1e-12);
        assert!(d.value >= 0.5_f64.sqrt() - 1e-9);
        assert!((d.witness_value(t.matrix()) - d.value).abs() < 1e-9);
        assert!(d.null_space_estimate <= d.value + 1e-8);
    }

    #[test]
    fn pcone_delta_of_signed_permutation_is_one() {
        let space = SpaceDescriptor::pcone(3, 3.0).unwrap();
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = 1.0;
        m[(1, 2)] = -1.0;
        m[(2, 3)] = 1.0;
        m[(3, 1)] = 1.0;
        let t = validate_markov(m, space, 64, 2).unwrap();
        assert!(t.validated());
        let d = dobrushin_delta(&t, 16, 1).unwrap();
        assert!((d.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_examples() {
        let space = SpaceDescriptor::classical(2).unwrap();
        let phi = Element::from_slice(space, &[0.5, 0.5]).unwrap();
        let id = MarkovOperator::identity(space);
        let m = mixture_with_fixed_point(&id, &phi, 1.0).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.75]);
        assert!((m.matrix() - want).amax() < 1e-15);
        assert!((dobrushin_delta(&m, 0, 0).unwrap().value - 0.5).abs() < 1e-15);

        let m = mixture_with_fixed_point(&swap(), &phi, 0.5).unwrap();
        assert!((dobrushin_delta(&m, 0, 0).unwrap().value - 0.75).abs() < 1e-15);
        assert!(m.apply(&phi).max_coord_diff(&phi) < 1e-15);

        let to_phi = operator_norm(&(swap().matrix() - rank_one(&phi).unwrap().matrix()), space, 0, 0).value;
        for eps in [1e-3, 0.1, 0.5] {
            let m = mixture_with_fixed_point(&swap(), &phi, eps).unwrap();
            let gap = operator_norm(&(swap().matrix() - m.matrix()), space, 0, 0).value;
            assert!(gap <= 0.5 * eps * to_phi + 1e-15);
            assert!(gap < eps);
        }
    }

    #[test]
    fn mixture_rejects_bad_inputs() {
        let space = SpaceDescriptor::classical(2).unwrap();
        let phi = Element::from_slice(space, &[0.5, 0.5]).unwrap();
        assert!(matches!(mixture_with_fixed_point(&worked_t(), &phi, 0.5), Err(Error::Precondition(_))));
        assert!(matches!(mixture_with_fixed_point(&swap(), &phi, 2.0), Err(Error::Precondition(_))));
        assert!(matches!(mixture_with_fixed_point(&swap(), &phi, 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn unvalidated_operator_has_no_delta() {
        let bad = classical(&[&[1.1, 0.2], &[-0.1, 0.8]]);
        assert!(matches!(dobrushin_delta(&bad, 0, 0), Err(Error::Precondition(_))));
    }

    #[test]
    fn pair_indexing_covers_all_pairs() {
        let n = 5;
        let got: Vec<_> = (0..n * (n - 1) / 2).map(|r| nth_pair(n, r)).collect();
        let want: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        assert_eq!(got, want);
    }
}
