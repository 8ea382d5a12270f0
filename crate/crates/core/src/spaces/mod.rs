//! Concrete ordered Banach spaces with a base.
//!
//! Three spaces are built in, each identified by a [`SpaceDescriptor`]:
//!
//! * `Classical { n }`: `ℝ^n` with the positive orthant, `f(x) = Σ x_i`, base
//!   the probability simplex and base norm `ℓ1`;
//! * `PCone { d, p }`: `ℝ^{d+1}` with the cone `x_0 ≥ ‖x̂‖_p`, `f(x) = x_0`;
//! * `Quantum { d }`: Hermitian `d × d` matrices in real coordinates (see
//!   [`hermitian`]), positive semidefinite cone, `f = tr`, base the density
//!   matrices and base norm the trace norm.
//!
//! Every space also provides a norming functional and a linear maximizer over
//! the base. Together they drive the ascent used to evaluate suprema of convex
//! functions over the base (operator norms, the Dobrushin coefficient).

pub mod hermitian;
pub mod pcone;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use hermitian::{CMatrix, CVector, C64};

/// Default tolerance for cone membership.
pub const CONE_TOL: f64 = 1e-9;
/// Tolerance on `f(x) = 1` when checking base membership.
pub const BASE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpaceDescriptor {
    Classical { n: usize },
    PCone { d: usize, p: f64 },
    Quantum { d: usize },
}

impl SpaceDescriptor {
    pub fn classical(n: usize) -> Result<Self> {
        let s = SpaceDescriptor::Classical { n };
        s.validate()?;
        Ok(s)
    }

    pub fn pcone(d: usize, p: f64) -> Result<Self> {
        let s = SpaceDescriptor::PCone { d, p };
        s.validate()?;
        Ok(s)
    }

    pub fn quantum(d: usize) -> Result<Self> {
        let s = SpaceDescriptor::Quantum { d };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SpaceDescriptor::Classical { n } if n == 0 => {
                Err(Error::Malformed("classical space needs n >= 1".into()))
            }
            SpaceDescriptor::PCone { d, .. } if d == 0 => {
                Err(Error::Malformed("p-cone needs d >= 1".into()))
            }
            SpaceDescriptor::PCone { p, .. } if !(p > 1.0 && p.is_finite()) => {
                Err(Error::Malformed(format!("p-cone exponent must lie in (1, inf), got {p}")))
            }
            SpaceDescriptor::Quantum { d } if d == 0 => {
                Err(Error::Malformed("quantum space needs d >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Number of real coordinates.
    pub fn dim(&self) -> usize {
        match *self {
            SpaceDescriptor::Classical { n } => n,
            SpaceDescriptor::PCone { d, .. } => d + 1,
            SpaceDescriptor::Quantum { d } => d * d,
        }
    }

    pub fn is_classical(&self) -> bool {
        matches!(self, SpaceDescriptor::Classical { .. })
    }
}

impl std::fmt::Display for SpaceDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            SpaceDescriptor::Classical { n } => write!(f, "classical(n={n})"),
            SpaceDescriptor::PCone { d, p } => write!(f, "pcone(d={d},p={p})"),
            SpaceDescriptor::Quantum { d } => write!(f, "quantum(d={d})"),
        }
    }
}

impl SpaceDescriptor {

    /// Coefficients of the functional `f` in canonical coordinates.
    pub fn functional_row(&self) -> DVector<f64> {
        match *self {
            SpaceDescriptor::Classical { n } => DVector::from_element(n, 1.0),
            SpaceDescriptor::PCone { d, .. } => {
                let mut r = DVector::zeros(d + 1);
                r[0] = 1.0;
                r
            }
            SpaceDescriptor::Quantum { d } => {
                let mut r = DVector::zeros(d * d);
                r[0] = (d as f64).sqrt();
                r
            }
        }
    }

    pub fn functional(&self, v: &DVector<f64>) -> f64 {
        match *self {
            SpaceDescriptor::Classical { .. } => v.sum(),
            SpaceDescriptor::PCone { .. } => v[0],
            SpaceDescriptor::Quantum { d } => (d as f64).sqrt() * v[0],
        }
    }

    pub fn in_cone(&self, v: &DVector<f64>, tol: f64) -> bool {
        match *self {
            SpaceDescriptor::Classical { .. } => v.iter().all(|&x| x >= -tol),
            SpaceDescriptor::PCone { p, .. } => pcone::in_cone(v, p, tol),
            SpaceDescriptor::Quantum { d } => {
                hermitian::eigenvalues(&hermitian::decode(v, d))[0] >= -tol
            }
        }
    }

    /// How far `v` sits outside the cone (zero when inside).
    pub fn cone_deficit(&self, v: &DVector<f64>) -> f64 {
        let gap = match *self {
            SpaceDescriptor::Classical { .. } => -v.min(),
            SpaceDescriptor::PCone { p, .. } => pcone::p_norm(&v.as_slice()[1..], p) - v[0],
            SpaceDescriptor::Quantum { d } => {
                -hermitian::eigenvalues(&hermitian::decode(v, d))[0]
            }
        };
        gap.max(0.0)
    }

    pub fn in_base(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.in_cone(v, tol) && (self.functional(v) - 1.0).abs() <= tol.max(BASE_TOL)
    }

    pub fn base_norm(&self, v: &DVector<f64>) -> f64 {
        match *self {
            SpaceDescriptor::Classical { .. } => v.iter().map(|x| x.abs()).sum(),
            SpaceDescriptor::PCone { p, .. } => pcone::base_norm(v, p),
            SpaceDescriptor::Quantum { d } => hermitian::eigenvalues(&hermitian::decode(v, d))
                .iter()
                .map(|l| l.abs())
                .sum(),
        }
    }

    /// Coordinates `g` with `⟨g, v⟩ = ‖v‖` and `|⟨g, w⟩| ≤ ‖w‖` for all `w`.
    pub fn norming_functional(&self, v: &DVector<f64>) -> DVector<f64> {
        match *self {
            SpaceDescriptor::Classical { .. } => v.map(|x| if x == 0.0 { 0.0 } else { x.signum() }),
            SpaceDescriptor::PCone { p, .. } => pcone::norming_functional(v, p),
            SpaceDescriptor::Quantum { d } => {
                let (values, vectors) = hermitian::eigh(&hermitian::decode(v, d));
                let mut sign = CMatrix::zeros(d, d);
                for (i, &l) in values.iter().enumerate() {
                    if l != 0.0 {
                        let col = vectors.column(i);
                        sign += (&col * col.adjoint()) * C64::new(l.signum(), 0.0);
                    }
                }
                hermitian::encode(&sign)
            }
        }
    }

    /// An extreme point of the base maximizing `u ↦ ⟨g, u⟩`.
    ///
    /// Ties between simplex vertices go to the lowest index.
    pub fn maximize_linear(&self, g: &DVector<f64>) -> DVector<f64> {
        match *self {
            SpaceDescriptor::Classical { n } => {
                let mut best = 0;
                for i in 1..n {
                    if g[i] > g[best] {
                        best = i;
                    }
                }
                let mut u = DVector::zeros(n);
                u[best] = 1.0;
                u
            }
            SpaceDescriptor::PCone { p, .. } => pcone::maximize_linear(g, p),
            SpaceDescriptor::Quantum { d } => {
                let (_, vectors) = hermitian::eigh(&hermitian::decode(g, d));
                let top: CVector = vectors.column(d - 1).into_owned();
                hermitian::encode(&hermitian::projector(&top))
            }
        }
    }

    /// Centre of the base: uniform vector, `(1, 0)`, or the maximally mixed state.
    pub fn barycenter(&self) -> Element {
        let coords = match *self {
            SpaceDescriptor::Classical { n } => DVector::from_element(n, 1.0 / n as f64),
            SpaceDescriptor::PCone { d, .. } => {
                let mut c = DVector::zeros(d + 1);
                c[0] = 1.0;
                c
            }
            SpaceDescriptor::Quantum { d } => {
                let mut c = DVector::zeros(d * d);
                c[0] = 1.0 / (d as f64).sqrt();
                c
            }
        };
        Element { space: *self, coords }
    }

    /// A uniformly random extreme point of the base.
    pub fn random_extreme_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match *self {
            SpaceDescriptor::Classical { n } => {
                let mut u = DVector::zeros(n);
                u[rng.random_range(0..n)] = 1.0;
                u
            }
            SpaceDescriptor::PCone { d, p } => loop {
                let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let n = pcone::p_norm(&y, p);
                if n > 1e-12 {
                    let mut u = DVector::zeros(d + 1);
                    u[0] = 1.0;
                    for i in 0..d {
                        u[i + 1] = y[i] / n;
                    }
                    break u;
                }
            },
            SpaceDescriptor::Quantum { d } => hermitian::encode(&hermitian::projector(
                &random_unit_vector(d, rng),
            )),
        }
    }
}

/// Haar-random unit vector in `ℂ^d`.
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVector {
    loop {
        let v = CVector::from_fn(d, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let n = v.norm();
        if n > 1e-12 {
            break v / C64::new(n, 0.0);
        }
    }
}

/// A point of a space in canonical coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    space: SpaceDescriptor,
    coords: DVector<f64>,
}

impl Element {
    pub fn new(space: SpaceDescriptor, coords: DVector<f64>) -> Result<Self> {
        space.validate()?;
        if coords.len() != space.dim() {
            return Err(Error::Malformed(format!(
                "element has {} coordinates, space needs {}",
                coords.len(),
                space.dim()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::Malformed("element has non-finite coordinates".into()));
        }
        Ok(Element { space, coords })
    }

    pub fn from_slice(space: SpaceDescriptor, coords: &[f64]) -> Result<Self> {
        Element::new(space, DVector::from_column_slice(coords))
    }

    pub fn zeros(space: SpaceDescriptor) -> Self {
        Element { space, coords: DVector::zeros(space.dim()) }
    }

    /// Encodes a Hermitian matrix; only valid on quantum spaces.
    pub fn from_hermitian(space: SpaceDescriptor, h: &CMatrix) -> Result<Self> {
        match space {
            SpaceDescriptor::Quantum { d } if h.nrows() == d && h.ncols() == d => {
                if (h - h.adjoint()).norm() > 1e-9 * (1.0 + h.norm()) {
                    return Err(Error::Malformed("matrix is not Hermitian".into()));
                }
                Element::new(space, hermitian::encode(h))
            }
            SpaceDescriptor::Quantum { d } => Err(Error::Malformed(format!(
                "expected a {d}x{d} matrix, got {}x{}",
                h.nrows(),
                h.ncols()
            ))),
            _ => Err(Error::Malformed("matrix encoding needs a quantum space".into())),
        }
    }

    /// Diagonal density-style matrix `diag(values)` on a quantum space.
    pub fn quantum_diag(values: &[f64]) -> Result<Self> {
        let d = values.len();
        let h = CMatrix::from_fn(d, d, |i, j| {
            if i == j { C64::new(values[i], 0.0) } else { C64::new(0.0, 0.0) }
        });
        Element::from_hermitian(SpaceDescriptor::quantum(d)?, &h)
    }

    pub(crate) fn from_raw(space: SpaceDescriptor, coords: DVector<f64>) -> Self {
        debug_assert_eq!(coords.len(), space.dim());
        Element { space, coords }
    }

    pub fn space(&self) -> SpaceDescriptor {
        self.space
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    /// The encoded Hermitian matrix, for quantum elements.
    pub fn to_hermitian(&self) -> Option<CMatrix> {
        match self.space {
            SpaceDescriptor::Quantum { d } => Some(hermitian::decode(&self.coords, d)),
            _ => None,
        }
    }

    pub fn functional(&self) -> f64 {
        self.space.functional(&self.coords)
    }

    pub fn base_norm(&self) -> f64 {
        self.space.base_norm(&self.coords)
    }

    pub fn in_cone(&self, tol: f64) -> bool {
        self.space.in_cone(&self.coords, tol)
    }

    pub fn in_base(&self, tol: f64) -> bool {
        self.space.in_base(&self.coords, tol)
    }

    pub fn scaled(&self, a: f64) -> Element {
        Element { space: self.space, coords: &self.coords * a }
    }

    /// Largest absolute coordinate difference.
    pub fn max_coord_diff(&self, other: &Element) -> f64 {
        (&self.coords - &other.coords).amax()
    }

    /// Base-norm distance.
    pub fn distance(&self, other: &Element) -> f64 {
        self.space.base_norm(&(&self.coords - &other.coords))
    }

    fn check_same_space(&self, other: &Element) {
        assert_eq!(self.space, other.space, "elements live in different spaces");
    }
}

impl std::ops::Sub for &Element {
    type Output = Element;

    /// Panics when the operands live in different spaces.
    fn sub(self, rhs: &Element) -> Element {
        self.check_same_space(rhs);
        Element { space: self.space, coords: &self.coords - &rhs.coords }
    }
}

impl std::ops::Add for &Element {
    type Output = Element;

    /// Panics when the operands live in different spaces.
    fn add(self, rhs: &Element) -> Element {
        self.check_same_space(rhs);
        Element { space: self.space, coords: &self.coords + &rhs.coords }
    }
}

/// `f(x)`: sum of coordinates, `x_0`, or the trace.
pub fn functional_f(x: &Element) -> f64 {
    x.functional()
}

pub fn cone_contains(x: &Element, tol: f64) -> bool {
    x.in_cone(tol)
}

/// `‖x‖_K`, the gauge of the convex hull of the base and its negative.
pub fn base_norm(x: &Element) -> f64 {
    x.base_norm()
}

/// Splits `x = y − z` with `y, z` in the cone and `f(y) + f(z) = ‖x‖`.
pub fn jordan_decompose(x: &Element) -> (Element, Element) {
    let space = x.space;
    let (y, z) = match space {
        SpaceDescriptor::Classical { .. } => {
            (x.coords.map(|v| v.max(0.0)), x.coords.map(|v| (-v).max(0.0)))
        }
        SpaceDescriptor::PCone { p, .. } => pcone::jordan(&x.coords, p),
        SpaceDescriptor::Quantum { d } => {
            let (pos, neg) = hermitian::spectral_parts(&hermitian::decode(&x.coords, d));
            (hermitian::encode(&pos), hermitian::encode(&neg))
        }
    };
    (Element::from_raw(space, y), Element::from_raw(space, z))
}

/// Writes a zero-functional `x` as `s (u − v)` with `u, v` in the base and `s = ‖x‖ / 2`.
pub fn lemma32_decompose(x: &Element) -> Result<(Element, Element, f64)> {
    let norm = x.base_norm();
    let fx = x.functional();
    if fx.abs() > 1e-9 * (1.0 + norm) {
        return Err(Error::Precondition(format!("f(x) = {fx} is not zero")));
    }
    if norm == 0.0 {
        return Err(Error::Degenerate("x = 0 has no base decomposition".into()));
    }
    let (y, z) = jordan_decompose(x);
    let (fy, fz) = (y.functional(), z.functional());
    if fy <= 0.0 || fz <= 0.0 {
        return Err(Error::Numerical("positive or negative part vanished".into()));
    }
    Ok((y.scaled(1.0 / fy), z.scaled(1.0 / fz), 0.5 * norm))
}

/// Extreme points of the base used to evaluate suprema.
///
/// Classical spaces return the `n` vertices and ignore `budget`. The p-cone
/// returns the `2d` axis points `(1, ±e_i)` followed by `budget` random points
/// of the unit p-sphere; the quantum space returns the computational basis
/// states followed by `budget` Haar-random pure states. Sampling is
/// deterministic in `seed`.
pub fn extreme_points(space: SpaceDescriptor, budget: usize, seed: u64) -> Vec<Element> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    match space {
        SpaceDescriptor::Classical { n } => {
            for i in 0..n {
                let mut u = DVector::zeros(n);
                u[i] = 1.0;
                out.push(Element::from_raw(space, u));
            }
            return out;
        }
        SpaceDescriptor::PCone { d, .. } => {
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut u = DVector::zeros(d + 1);
                    u[0] = 1.0;
                    u[i + 1] = sign;
                    out.push(Element::from_raw(space, u));
                }
            }
        }
        SpaceDescriptor::Quantum { d } => {
            for i in 0..d {
                let mut v = CVector::zeros(d);
                v[i] = C64::new(1.0, 0.0);
                out.push(Element::from_raw(space, hermitian::encode(&hermitian::projector(&v))));
            }
        }
    }
    for _ in 0..budget {
        out.push(Element::from_raw(space, space.random_extreme_point(&mut rng)));
    }
    out
}
