//! Random operator generators, perturbers and experiment drivers.
//!
//! Every routine is deterministic in its seed. Independent streams come from
//! [`sub_seed`] with a role tag, so trials can run in any order on any number
//! of threads and still produce identical tables.

mod experiments;
mod suite;

pub use experiments::{
    density_experiment, tightness_experiment, DensityRow, DensityTable, TightnessRow, TightnessSummary, TightnessTable,
};
pub use suite::{run_property_suite, InvariantRecord, SuiteResult};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{delta_of_matrix, delta_upper, operator_norm, rank_one, validate_markov, MarkovOperator};
use crate::seeds::sub_seed;
use crate::spaces::hermitian::{eigh, CMatrix, C64};
use crate::spaces::{Element, SpaceDescriptor};

/// Symmetric Dirichlet concentration for classical columns.
pub const DIRICHLET_CONCENTRATION: f64 = 1.0;
/// Draws per trial slot before a non-stable slot is recorded as skipped.
pub const REJECTION_CAP: usize = 50;
/// Fresh targets tried by [`perturb_toward`].
pub const PERTURB_RETRIES: u64 = 8;
/// Rank-one terms in a random p-cone operator.
const PCONE_RANK_ONE_TERMS: usize = 2;

pub(crate) mod role {
    pub const OPERATOR: u64 = 1;
    pub const PERTURBATION: u64 = 2;
    pub const TARGET: u64 = 3;
    pub const SAMPLING: u64 = 4;
    pub const OPENNESS: u64 = 5;
    pub const AUX: u64 = 6;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub space: SpaceDescriptor,
    pub trials: usize,
    pub seed: u64,
    pub perturbation_magnitudes: Vec<f64>,
    pub n_max: usize,
    pub horizon: usize,
    pub output_path: Option<String>,
    pub delta_budget: usize,
    /// Blend of random operators toward the barycenter map.
    pub mixing: f64,
    /// Mixture weights for the density experiment.
    pub epsilons: Vec<f64>,
    /// Random perturbations checked against each openness radius.
    pub openness_samples: usize,
    /// Adds one operator with a negative entry to the validation invariant.
    pub inject_fault: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            space: SpaceDescriptor::Classical { n: 4 },
            trials: 100,
            seed: 0,
            perturbation_magnitudes: vec![0.01, 0.05, 0.1],
            n_max: 512,
            horizon: 16,
            output_path: None,
            delta_budget: 16,
            mixing: 0.0,
            epsilons: vec![0.1, 0.5, 1.0, 1.9],
            openness_samples: 100,
            inject_fault: false,
        }
    }
}

impl ExperimentConfig {
    pub fn new(space: SpaceDescriptor, trials: usize, seed: u64) -> Self {
        ExperimentConfig { space, trials, seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.trials == 0 {
            return Err(Error::Malformed("trials must be at least 1".into()));
        }
        if let Some(m) = self.perturbation_magnitudes.iter().find(|m| !(**m > 0.0 && **m <= 2.0)) {
            return Err(Error::Malformed(format!("perturbation magnitude {m} is outside (0, 2]")));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 2.0)) {
            return Err(Error::Malformed(format!("epsilon {e} is outside (0, 2)")));
        }
        if !(0.0..=1.0).contains(&self.mixing) {
            return Err(Error::Malformed(format!("mixing {} is outside [0, 1]", self.mixing)));
        }
        if self.horizon == 0 || self.n_max == 0 {
            return Err(Error::Malformed("horizon and n_max must be at least 1".into()));
        }
        Ok(())
    }
}

fn probability_vector<R: Rng + ?Sized>(len: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let draw: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draw.iter().sum();
    if total > 0.0 {
        draw.into_iter().map(|g| g / total).collect()
    } else {
        vec![1.0 / len as f64; len]
    }
}

fn random_base_point<R: Rng + ?Sized>(space: SpaceDescriptor, rng: &mut R) -> Element {
    let lambda: f64 = rng.random();
    let extreme = space.random_extreme_point(rng);
    let coords = space.barycenter().coords() * (1.0 - lambda) + extreme * lambda;
    Element::from_raw(space, coords)
}

/// A random element of the base.
pub fn random_state(space: SpaceDescriptor, seed: u64) -> Element {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match space {
        SpaceDescriptor::Classical { n } => {
            Element::from_raw(space, nalgebra::DVector::from_vec(probability_vector(n, 1.0, &mut rng)))
        }
        _ => random_base_point(space, &mut rng),
    }
}

fn signed_permutation<R: Rng + ?Sized>(space: SpaceDescriptor, rng: &mut R) -> DMatrix<f64> {
    let n = space.dim();
    let mut perm: Vec<usize> = (1..n).collect();
    perm.shuffle(rng);
    let mut r = DMatrix::zeros(n, n);
    r[(0, 0)] = 1.0;
    for (j, &i) in perm.iter().enumerate() {
        r[(i, j + 1)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    r
}

fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // fix column phases so the distribution is Haar
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |i, _| {
        let v = r[(i, i)];
        if v.norm() > 0.0 { v / C64::new(v.norm(), 0.0) } else { C64::new(1.0, 0.0) }
    }));
    q * phases
}

fn random_kraus_channel<R: Rng + ?Sized>(space: SpaceDescriptor, d: usize, rng: &mut R) -> MarkovOperator {
    let gs: Vec<CMatrix> = (0..d)
        .map(|_| CMatrix::from_fn(d, d, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))))
        .collect();
    let mut p = CMatrix::zeros(d, d);
    for g in &gs {
        p += g.adjoint() * g;
    }
    let (vals, vecs) = eigh(&p);
    let inv_sqrt = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        d,
        vals.iter().map(|v| C64::new(1.0 / v.max(1e-300).sqrt(), 0.0)),
    ));
    let p_inv_sqrt = &vecs * inv_sqrt * vecs.adjoint();
    let kraus: Vec<CMatrix> = gs.iter().map(|g| g * &p_inv_sqrt).collect();
    MarkovOperator::from_kraus(space, &kraus).expect("Kraus set has the space's shape")
}

/// A random Markov operator on `space`, blended toward the barycenter map by
/// `mixing`, together with a certified upper bound on its `δ`.
///
/// The bound is exact on the classical space and for p-cone operators, which
/// are `c_0 R + Σ c_k T_{y_k}` with `R` a signed permutation of the tail and
/// hence `δ = c_0`. Quantum channels get the generic [`delta_upper`] bound.
pub fn random_markov_certified(space: SpaceDescriptor, seed: u64, mixing: f64) -> (MarkovOperator, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mixing = mixing.clamp(0.0, 1.0);
    match space {
        SpaceDescriptor::Classical { n } => {
            let mut m = DMatrix::zeros(n, n);
            for j in 0..n {
                let col = probability_vector(n, DIRICHLET_CONCENTRATION, &mut rng);
                for i in 0..n {
                    m[(i, j)] = (1.0 - mixing) * col[i] + mixing / n as f64;
                }
            }
            let op = validate_markov(m, space, 0, 0).expect("shape matches the space");
            let delta = delta_of_matrix(op.matrix(), space, 0, 0).value.min(1.0);
            (op, delta)
        }
        SpaceDescriptor::PCone { .. } => {
            let w = probability_vector(PCONE_RANK_ONE_TERMS + 1, 1.0, &mut rng);
            let c0 = w[0] * (1.0 - mixing);
            let mut m = signed_permutation(space, &mut rng) * c0;
            for wk in &w[1..] {
                let y = random_base_point(space, &mut rng);
                let ck = wk * (1.0 - mixing) + mixing / PCONE_RANK_ONE_TERMS as f64;
                m += rank_one(&y).expect("base point").matrix() * ck;
            }
            let op = validate_markov(m, space, 0, 0).expect("shape matches the space");
            (op, c0)
        }
        SpaceDescriptor::Quantum { d } => {
            let channel = random_kraus_channel(space, d, &mut rng);
            let op = if mixing > 0.0 {
                channel.blend(&rank_one(&space.barycenter()).expect("barycenter"), mixing)
            } else {
                channel
            };
            let delta = delta_upper(op.matrix(), space).min(1.0);
            (op, delta)
        }
    }
}

/// A random Markov operator on `space`; see [`random_markov_certified`].
pub fn random_markov(space: SpaceDescriptor, seed: u64, mixing: f64) -> MarkovOperator {
    random_markov_certified(space, seed, mixing).0
}

/// A random isometry-like Markov operator: a permutation matrix, a signed
/// permutation of the p-cone tail, or a unitary conjugation channel. Each fixes
/// the barycenter and has `δ = 1` (unless the space is one-dimensional).
pub fn random_permutation_like(space: SpaceDescriptor, seed: u64) -> MarkovOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match space {
        SpaceDescriptor::Classical { n } => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut m = DMatrix::zeros(n, n);
            for (j, &i) in perm.iter().enumerate() {
                m[(i, j)] = 1.0;
            }
            validate_markov(m, space, 0, 0).expect("shape matches the space")
        }
        SpaceDescriptor::PCone { .. } => {
            validate_markov(signed_permutation(space, &mut rng), space, 0, 0).expect("shape matches the space")
        }
        SpaceDescriptor::Quantum { d } => {
            MarkovOperator::from_kraus(space, &[random_unitary(d, &mut rng)]).expect("unitary has the space's shape")
        }
    }
}

/// A random cyclic permutation: mean ergodic with a unique fixed point but no
/// contracting power.
pub fn random_cycle(n: usize, seed: u64) -> Result<MarkovOperator> {
    let space = SpaceDescriptor::classical(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        m[(order[(k + 1) % n], order[k])] = 1.0;
    }
    validate_markov(m, space, 0, 0)
}

/// `S = (1 − t) T + t R` for a random Markov `R`, with `t` chosen so that
/// `‖T − S‖ = t ‖T − R‖` lands in `[0.9, 1] · magnitude`.
///
/// The gap is linear in `t`, so `t` is solved for directly; a target `R` too
/// close to `T` to reach the band is replaced, up to 8 times.
pub fn perturb_toward(t: &MarkovOperator, magnitude: f64, seed: u64) -> Result<MarkovOperator> {
    perturb_toward_with(t, magnitude, seed, 0.0).map(|(s, _)| s)
}

/// As [`perturb_toward`], also returning the blend weight `t`. The target is
/// drawn with the given `mixing`.
pub fn perturb_toward_with(t: &MarkovOperator, magnitude: f64, seed: u64, mixing: f64) -> Result<(MarkovOperator, f64)> {
    t.require_validated("perturb_toward")?;
    if !(magnitude > 0.0 && magnitude <= 2.0) {
        return Err(Error::Precondition(format!("magnitude {magnitude} is outside (0, 2]")));
    }
    let space = t.space();
    let norm = |a: &DMatrix<f64>, k: u64| operator_norm(a, space, 16, sub_seed(seed, k, role::SAMPLING)).value;
    for attempt in 0..PERTURB_RETRIES {
        let r = random_markov(space, sub_seed(seed, attempt, role::TARGET), mixing);
        let full = norm(&(t.matrix() - r.matrix()), attempt);
        if full <= 0.0 {
            continue;
        }
        let weight = 0.95 * magnitude / full;
        if weight > 1.0 {
            continue;
        }
        let s = t.blend(&r, weight);
        let gap = norm(&(t.matrix() - s.matrix()), attempt);
        if (0.9 * magnitude..=magnitude).contains(&gap) {
            return Ok((s, weight));
        }
    }
    Err(Error::Degenerate(format!(
        "no target within {PERTURB_RETRIES} draws reaches a gap of {magnitude}"
    )))
}

/// Empirical `q`-quantile (linear interpolation) of a sample; `None` if empty.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}
