//! Perturbation bounds for a pair `(T, S)` of Markov operators.
//!
//! Each bound controls either the trajectory gap `‖T^n x − S^n z‖` or the
//! stationary gap `‖x0 − z0‖` through `‖T − S‖`, `δ(T^m)` or a geometric
//! envelope `(C, α)`. `δ` inputs must be certified upper bounds, and off the
//! classical space norm inputs use [`operator_norm_upper`].

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::ergodicity::{
    certified_delta_power, find_contractive_power_with, fixed_point, geometric_envelope, Envelope,
    DEFAULT_FIXED_POINT_ITERS, DEFAULT_N_MAX, DEFAULT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::operators::{matrix_power, operator_norm_upper, MarkovOperator};
use crate::spaces::{extreme_points, Element, SpaceDescriptor};

/// Absolute slack allowed when comparing an actual distance with a bound.
pub const SOUNDNESS_TOL: f64 = 1e-8;

fn check_envelope(env: &Envelope) -> Result<()> {
    if !(env.alpha > 0.0) {
        return Err(Error::Precondition(format!("rate bounds need alpha > 0, got {}", env.alpha)));
    }
    if !(env.c > 0.0) {
        return Err(Error::Precondition(format!("rate bounds need C > 0, got {}", env.c)));
    }
    Ok(())
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{name} must be a finite non-negative number, got {v}")))
    }
}

/// `e^{−α k}`, with `α = ∞` read as a rank-one power.
fn decay(alpha: f64, k: usize) -> f64 {
    if alpha.is_infinite() {
        if k == 0 { 1.0 } else { 0.0 }
    } else {
        (-alpha * k as f64).exp()
    }
}

/// `ñ + C e^{−α ñ} / (1 − e^{−α})`, the bound on `Σ_i δ(T^i)`.
fn rate_sum(env: &Envelope) -> f64 {
    env.n_tilde as f64 + env.c * decay(env.alpha, env.n_tilde) / (1.0 - decay(env.alpha, 1))
}

/// Trajectory bound from a geometric envelope.
pub fn bound_rate_based(env: &Envelope, norm_ts: f64, dist_xz: f64, n: usize) -> Result<f64> {
    check_envelope(env)?;
    check_nonneg("norm_TS", norm_ts)?;
    check_nonneg("dist_xz", dist_xz)?;
    if n == 0 {
        return Err(Error::Precondition("trajectory bounds need n >= 1".into()));
    }
    if n <= env.n_tilde {
        return Ok(dist_xz + n as f64 * norm_ts);
    }
    let tail = env.c * (decay(env.alpha, env.n_tilde) - decay(env.alpha, n)) / (1.0 - decay(env.alpha, 1));
    Ok(env.c * decay(env.alpha, n) * dist_xz + (env.n_tilde as f64 + tail) * norm_ts)
}

/// Supremum over `n` of [`bound_rate_based`].
pub fn bound_eq5(env: &Envelope, norm_ts: f64, dist_xz: f64) -> Result<f64> {
    check_envelope(env)?;
    check_nonneg("norm_TS", norm_ts)?;
    check_nonneg("dist_xz", dist_xz)?;
    Ok(dist_xz + rate_sum(env) * norm_ts)
}

/// Stationary bound from a geometric envelope.
pub fn bound_eq6(env: &Envelope, norm_ts: f64) -> Result<f64> {
    check_envelope(env)?;
    check_nonneg("norm_TS", norm_ts)?;
    Ok(rate_sum(env) * norm_ts)
}

fn check_delta(m: usize, delta_tm: f64) -> Result<()> {
    if m == 0 {
        return Err(Error::Precondition("m must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&delta_tm) {
        return Err(Error::Precondition(format!("delta(T^m) must lie in [0, 1), got {delta_tm}")));
    }
    Ok(())
}

/// Two-case trajectory bound: `dist + max_power_gap` for `n < m`, and
/// `δ (dist + max_power_gap) + ‖T^m − S^m‖ / (1 − δ)` for `n ≥ m`.
pub fn bound_delta_based(
    m: usize,
    delta_tm: f64,
    dist_xz: f64,
    max_power_gap: f64,
    norm_tmsm: f64,
    n: usize,
) -> Result<f64> {
    check_delta(m, delta_tm)?;
    check_nonneg("dist_xz", dist_xz)?;
    check_nonneg("max_power_gap", max_power_gap)?;
    check_nonneg("norm_TmSm", norm_tmsm)?;
    if n == 0 {
        return Err(Error::Precondition("trajectory bounds need n >= 1".into()));
    }
    if n < m {
        Ok(dist_xz + max_power_gap)
    } else {
        Ok(delta_tm * (dist_xz + max_power_gap) + norm_tmsm / (1.0 - delta_tm))
    }
}

/// Bound on `sup_{k ≥ 1} ‖T^{km} x − S^{km} z‖`.
pub fn bound_eq7(m: usize, delta_tm: f64, dist_xz: f64, norm_tmsm: f64) -> Result<f64> {
    check_delta(m, delta_tm)?;
    check_nonneg("dist_xz", dist_xz)?;
    check_nonneg("norm_TmSm", norm_tmsm)?;
    Ok(delta_tm * dist_xz + norm_tmsm / (1.0 - delta_tm))
}

/// Stationary bound `‖T^m − S^m‖ / (1 − δ(T^m))`.
pub fn bound_eq9(m: usize, delta_tm: f64, norm_tmsm: f64) -> Result<f64> {
    check_delta(m, delta_tm)?;
    check_nonneg("norm_TmSm", norm_tmsm)?;
    Ok(norm_tmsm / (1.0 - delta_tm))
}

/// Floor-based trajectory bound with `k = ⌊n/m⌋`:
/// `δ^k (dist + max_power_gap) + (1 − δ^k)/(1 − δ) ‖T^m − S^m‖`.
pub fn bound_floor_based(
    m: usize,
    delta_tm: f64,
    dist_xz: f64,
    max_power_gap: f64,
    norm_tmsm: f64,
    norm_ts: f64,
    n: usize,
) -> Result<f64> {
    check_delta(m, delta_tm)?;
    check_nonneg("dist_xz", dist_xz)?;
    check_nonneg("max_power_gap", max_power_gap)?;
    check_nonneg("norm_TmSm", norm_tmsm)?;
    check_nonneg("norm_TS", norm_ts)?;
    if n == 0 {
        return Err(Error::Precondition("trajectory bounds need n >= 1".into()));
    }
    if n < m {
        return Ok(dist_xz + max_power_gap);
    }
    let dk = delta_tm.powi((n / m) as i32);
    Ok(dk * (dist_xz + max_power_gap) + (1.0 - dk) / (1.0 - delta_tm) * norm_tmsm)
}

/// Limit of [`bound_floor_based`] as `n → ∞`.
pub fn bound_floor_limit(m: usize, delta_tm: f64, norm_tmsm: f64) -> Result<f64> {
    bound_eq9(m, delta_tm, norm_tmsm)
}

/// `sup_{n ≥ 1} δ^{⌊n/m⌋} + m ‖T − S‖ / (1 − δ)`, valid for starts with
/// `‖x − z‖ ≤ 1`. The first term is `1` when `m > 1` and `δ` when `m = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Eq14 {
    pub value: f64,
    pub first_term: f64,
    /// The first term is 1, so the bound never drops below 1.
    pub trivial_headroom: bool,
}

pub fn bound_eq14(m: usize, delta_tm: f64, norm_ts: f64) -> Result<Eq14> {
    check_delta(m, delta_tm)?;
    check_nonneg("norm_TS", norm_ts)?;
    let first_term = if m > 1 { 1.0 } else { delta_tm };
    Ok(Eq14 {
        value: first_term + m as f64 * norm_ts / (1.0 - delta_tm),
        first_term,
        trivial_headroom: first_term >= 1.0,
    })
}

/// `‖x0 − z0‖ ≤ ‖S^m − T^m‖ / (1 − δ(T^m) − ‖S^m − T^m‖)`.
pub fn bound_per62(delta_tm: f64, norm_tmsm: f64) -> Result<f64> {
    check_nonneg("norm_TmSm", norm_tmsm)?;
    let margin = 1.0 - delta_tm - norm_tmsm;
    if margin <= 0.0 {
        return Err(Error::Precondition(format!("transfer margin {margin} is not positive")));
    }
    Ok(norm_tmsm / margin)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Applies,
    DoesNotApply,
}

#[derive(Clone, Debug, Serialize)]
pub struct Transfer {
    pub verdict: Verdict,
    /// `1 − δ(T^m) − ‖S^m − T^m‖`; positive exactly when the transfer applies.
    pub margin: f64,
    pub m: usize,
    pub delta_tm: f64,
    pub norm_tmsm: f64,
    /// Certified contraction factor of `S^m` on the null space.
    pub rho: Option<f64>,
    pub x0: Option<Element>,
    pub z0: Option<Element>,
    pub z0_residual: Option<f64>,
    pub iterations: Option<usize>,
    pub bound_per62: Option<f64>,
    pub actual: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationOptions {
    pub m: Option<usize>,
    pub horizon: usize,
    pub tol: f64,
    pub n_max: usize,
    /// User-attested upper bound on `δ(T)` off the classical space.
    pub delta_upper: Option<f64>,
    /// Extreme points used as trajectory starts off the classical space.
    pub start_budget: usize,
    pub seed: u64,
}

impl Default for PerturbationOptions {
    fn default() -> Self {
        PerturbationOptions {
            m: None,
            horizon: 16,
            tol: 1e-12,
            n_max: DEFAULT_N_MAX,
            delta_upper: None,
            start_budget: 8,
            seed: 0,
        }
    }
}

impl PerturbationOptions {
    pub fn with_m(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_delta_upper(mut self, b: Option<f64>) -> Self {
        self.delta_upper = b;
        self
    }
}

fn same_space(t: &MarkovOperator, s: &MarkovOperator) -> Result<SpaceDescriptor> {
    t.require_validated("perturbation analysis")?;
    s.require_validated("perturbation analysis")?;
    if t.space() != s.space() {
        return Err(Error::Precondition("T and S live on different spaces".into()));
    }
    Ok(t.space())
}

/// Runs the stability transfer: if `‖S^m − T^m‖ < 1 − δ(T^m)` then `S` is
/// uniformly asymptotically stable, and its fixed point `z0` is the limit of
/// `S^{mN} x0`, reached within `tol` after an a-priori number of steps.
pub fn stability_transfer(t: &MarkovOperator, s: &MarkovOperator, m: usize, opts: &PerturbationOptions) -> Result<Transfer> {
    let space = same_space(t, s)?;
    if m == 0 {
        return Err(Error::Precondition("m must be at least 1".into()));
    }
    let delta_tm = certified_delta_power(t, m, opts.delta_upper)?;
    if delta_tm >= 1.0 {
        return Err(Error::Certification(format!("delta(T^{m}) is not certified below 1")));
    }
    let x0 = fixed_point(t, opts.tol, DEFAULT_FIXED_POINT_ITERS)?;
    let tm = t.power(m);
    let sm = s.power(m);
    let norm_tmsm = operator_norm_upper(&(sm.matrix() - tm.matrix()), space);
    let margin = 1.0 - delta_tm - norm_tmsm;
    let mut out = Transfer {
        verdict: Verdict::DoesNotApply,
        margin,
        m,
        delta_tm,
        norm_tmsm,
        rho: None,
        x0: Some(x0.clone()),
        z0: None,
        z0_residual: None,
        iterations: None,
        bound_per62: None,
        actual: None,
    };
    if margin <= 0.0 {
        return Ok(out);
    }
    let rho = delta_tm + norm_tmsm;
    let p = sm.matrix();
    let f = space.functional_row();
    let step0 = space.base_norm(&(p * x0.coords() - x0.coords()));
    // ‖z0 − S^{mN} x0‖ ≤ ρ^N ‖S^m x0 − x0‖ / (1 − ρ)
    let iterations = if step0 == 0.0 {
        0
    } else if rho == 0.0 {
        1
    } else {
        ((opts.tol * (1.0 - rho) / step0).ln() / rho.ln()).ceil().max(1.0) as usize
    };
    let mut w = x0.coords().clone();
    if iterations <= 100_000 {
        for _ in 0..iterations {
            w = p * w;
        }
    } else {
        w = matrix_power(p, iterations) * w;
    }
    w /= f.dot(&w);
    let z0 = Element::from_raw(space, w);
    out.verdict = Verdict::Applies;
    out.rho = Some(rho);
    out.iterations = Some(iterations);
    out.z0_residual = Some(s.apply(&z0).distance(&z0));
    out.bound_per62 = Some(bound_per62(delta_tm, norm_tmsm)?);
    out.actual = Some(x0.distance(&z0));
    out.z0 = Some(z0);
    Ok(out)
}

/// `(I − S^m)^{−1} x = Σ_n S^{mn} x` on the null space, truncated once the tail
/// bound `ρ^{N+1} ‖x‖ / (1 − ρ)` drops below `tol`.
pub fn neumann_inverse_on_n(s: &MarkovOperator, m: usize, x: &Element, rho: f64, tol: f64) -> Result<Element> {
    s.require_validated("neumann_inverse_on_n")?;
    if m == 0 {
        return Err(Error::Precondition("m must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Precondition(format!("Neumann series needs 0 <= rho < 1, got {rho}")));
    }
    let norm_x = x.base_norm();
    if x.functional().abs() > 1e-9 * (1.0 + norm_x) {
        return Err(Error::Precondition(format!("x is not in the null space: f(x) = {}", x.functional())));
    }
    let space = s.space();
    if norm_x == 0.0 {
        return Ok(Element::zeros(space));
    }
    let p = s.power(m).matrix().clone();
    let mut term = x.coords().clone();
    let mut sum = term.clone();
    let mut tail = rho * norm_x / (1.0 - rho);
    while tail > tol {
        term = &p * term;
        sum += &term;
        tail *= rho;
    }
    let y = Element::from_raw(space, sum);
    let residual = space.base_norm(&(y.coords() - &p * y.coords() - x.coords()));
    if residual > tol * (1.0 + rho) {
        return Err(Error::Numerical(format!(
            "Neumann residual {residual:e} exceeds {:e}; the supplied rho does not contract S^m on N",
            tol * (1.0 + rho)
        )));
    }
    if y.base_norm() > norm_x / (1.0 - rho) + tol {
        return Err(Error::Numerical("Neumann sum exceeds ‖x‖/(1 − rho); rho is not a valid contraction factor".into()));
    }
    Ok(y)
}

/// Bound values, keyed by equation label. Per-`n` bounds are listed for
/// `n = 1..=horizon` at the largest starting distance.
#[derive(Clone, Debug, Default, Serialize)]
pub struct BoundSet {
    pub eq1: Option<Vec<f64>>,
    pub eq5: Option<f64>,
    pub eq6: Option<f64>,
    pub eq7: Option<f64>,
    pub eq8: Option<Vec<f64>>,
    pub eq9: Option<f64>,
    pub eq12: Option<Vec<f64>>,
    pub eq12_inf: Option<f64>,
    pub eq14: Option<Eq14>,
    pub per62: Option<f64>,
}

/// Pairwise soundness record for one bound.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Soundness {
    pub checked: usize,
    pub violations: usize,
    /// Smallest `bound − actual`.
    pub worst_slack: Option<f64>,
}

impl Soundness {
    fn record(&mut self, bound: f64, actual: f64) {
        let slack = bound - actual;
        self.checked += 1;
        if slack < -SOUNDNESS_TOL {
            self.violations += 1;
        }
        self.worst_slack = Some(self.worst_slack.map_or(slack, |w| w.min(slack)));
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PerNRow {
    pub n: usize,
    pub actual: f64,
    pub eq1: Option<f64>,
    pub eq8: Option<f64>,
    pub eq12: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerturbationReport {
    pub space: SpaceDescriptor,
    pub m: usize,
    #[serde(rename = "delta_Tm")]
    pub delta_tm: f64,
    pub delta_certified: bool,
    pub attested_delta_upper: Option<f64>,
    /// Norms are exact on the classical space and certified upper bounds elsewhere.
    #[serde(rename = "norm_TS")]
    pub norm_ts: f64,
    #[serde(rename = "norm_TmSm")]
    pub norm_tmsm: f64,
    pub max_power_gap: f64,
    /// `max_{0<i≤m} ‖T^i − S^i‖`, compared against `m ‖T − S‖`.
    pub eq15_lhs: f64,
    pub eq15_holds: bool,
    pub envelope: Option<Envelope>,
    pub bounds: BoundSet,
    /// Why some bounds are absent.
    pub unavailable: Vec<String>,
    pub horizon: usize,
    pub max_start_distance: f64,
    pub actual_trajectory_distance: Vec<f64>,
    pub actual_stationary_distance: Option<f64>,
    /// Reported instead of a point value when a fixed-point residual exceeds tol.
    pub actual_stationary_interval: Option<(f64, f64)>,
    pub x0: Option<Element>,
    pub z0: Option<Element>,
    pub soundness: BTreeMap<String, Soundness>,
    /// `actual / bound` with `0/0 → 1`; trajectory bounds use the largest ratio seen.
    pub tightness: BTreeMap<String, f64>,
    pub transfer: Option<Transfer>,
}

impl PerturbationReport {
    pub fn per_n_rows(&self) -> Vec<PerNRow> {
        let at = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|b| b[i]);
        self.actual_trajectory_distance
            .iter()
            .enumerate()
            .map(|(i, &actual)| PerNRow {
                n: i + 1,
                actual,
                eq1: at(&self.bounds.eq1, i),
                eq8: at(&self.bounds.eq8, i),
                eq12: at(&self.bounds.eq12, i),
            })
            .collect()
    }

    /// Total bound violations over all checked pairs and the stationary distance.
    pub fn violations(&self) -> usize {
        self.soundness.values().map(|s| s.violations).sum()
    }
}

pub fn ratio(actual: f64, bound: f64) -> f64 {
    if bound == 0.0 {
        if actual == 0.0 { 1.0 } else { f64::INFINITY }
    } else {
        actual / bound
    }
}

fn starts(space: SpaceDescriptor, opts: &PerturbationOptions) -> Vec<Element> {
    if space.is_classical() {
        extreme_points(space, 0, 0)
    } else {
        extreme_points(space, opts.start_budget, opts.seed)
    }
}

/// Evaluates every bound for `(T, S)`, the actual trajectory and stationary
/// distances, and the pairwise soundness of each bound.
pub fn tightness_report(t: &MarkovOperator, s: &MarkovOperator, opts: &PerturbationOptions) -> Result<PerturbationReport> {
    let space = same_space(t, s)?;
    if opts.horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    let certified = space.is_classical() || opts.delta_upper.is_some();
    if !certified {
        return Err(Error::Certification(
            "bounds need a certified delta; supply an attested upper bound on this space".into(),
        ));
    }
    let m = match opts.m {
        Some(0) => return Err(Error::Precondition("m must be at least 1".into())),
        Some(m) => m,
        None => find_contractive_power_with(t, opts.n_max, DEFAULT_THRESHOLD, opts.delta_upper)?.map_or(1, |(n0, _)| n0),
    };
    let delta_tm = certified_delta_power(t, m, opts.delta_upper)?;
    let norm = |a: &DMatrix<f64>| operator_norm_upper(a, space);
    let norm_ts = norm(&(t.matrix() - s.matrix()));

    let mut tp = t.matrix().clone();
    let mut sp = s.matrix().clone();
    let mut max_power_gap: f64 = 0.0;
    let mut eq15_lhs: f64 = 0.0;
    for i in 1..=m {
        let gap = norm(&(&tp - &sp));
        eq15_lhs = eq15_lhs.max(gap);
        if i < m {
            max_power_gap = max_power_gap.max(gap);
            tp = t.matrix() * tp;
            sp = s.matrix() * sp;
        }
    }
    let norm_tmsm = norm(&(&tp - &sp));

    let contracting = delta_tm < 1.0;
    let mut unavailable = Vec::new();
    let envelope = if contracting {
        Some(geometric_envelope(m, delta_tm)?)
    } else {
        unavailable.push(format!("delta(T^{m}) = {delta_tm} is not below 1; delta- and rate-based bounds are unavailable"));
        None
    };

    let starts = starts(space, opts);
    let pairs: Vec<(&Element, &Element)> = starts.iter().flat_map(|x| starts.iter().map(move |z| (x, z))).collect();
    let max_dist = pairs.iter().map(|(x, z)| x.distance(z)).fold(0.0, f64::max);

    let mut soundness: BTreeMap<String, Soundness> = BTreeMap::new();
    let mut trajectory_ratio: BTreeMap<String, f64> = BTreeMap::new();
    let mut actual_traj = vec![0.0; opts.horizon];
    let eq14 = if contracting { Some(bound_eq14(m, delta_tm, norm_ts)?) } else { None };
    let eq5_max = match &envelope {
        Some(env) => Some(bound_eq5(env, norm_ts, max_dist)?),
        None => None,
    };
    let mut eq7_max: Option<f64> = None;

    for (x, z) in &pairs {
        let dist = x.distance(z);
        let mut tx = x.coords().clone();
        let mut sz = z.coords().clone();
        let mut track = |key: &str, bound: f64, actual: f64| {
            soundness.entry(key.to_string()).or_default().record(bound, actual);
            let r = trajectory_ratio.entry(key.to_string()).or_insert(0.0);
            *r = r.max(ratio(actual, bound));
        };
        for n in 1..=opts.horizon {
            tx = t.matrix() * tx;
            sz = s.matrix() * sz;
            let actual = space.base_norm(&(&tx - &sz));
            actual_traj[n - 1] = f64::max(actual_traj[n - 1], actual);
            if let Some(env) = &envelope {
                track("eq1", bound_rate_based(env, norm_ts, dist, n)?, actual);
                track("eq5", bound_eq5(env, norm_ts, dist)?, actual);
                track("eq8", bound_delta_based(m, delta_tm, dist, max_power_gap, norm_tmsm, n)?, actual);
                track("eq12", bound_floor_based(m, delta_tm, dist, max_power_gap, norm_tmsm, norm_ts, n)?, actual);
                if n % m == 0 {
                    let b = bound_eq7(m, delta_tm, dist, norm_tmsm)?;
                    eq7_max = Some(eq7_max.map_or(b, |v| v.max(b)));
                    track("eq7", b, actual);
                }
                if let Some(e14) = &eq14 {
                    if dist <= 1.0 {
                        track("eq14", e14.value, actual);
                    }
                }
            }
        }
    }

    let mut bounds = BoundSet::default();
    if let Some(env) = &envelope {
        let per_n = |f: &dyn Fn(usize) -> Result<f64>| (1..=opts.horizon).map(f).collect::<Result<Vec<f64>>>();
        bounds.eq1 = Some(per_n(&|n| bound_rate_based(env, norm_ts, max_dist, n))?);
        bounds.eq5 = eq5_max;
        bounds.eq6 = Some(bound_eq6(env, norm_ts)?);
        bounds.eq7 = eq7_max;
        bounds.eq8 = Some(per_n(&|n| bound_delta_based(m, delta_tm, max_dist, max_power_gap, norm_tmsm, n))?);
        bounds.eq9 = Some(bound_eq9(m, delta_tm, norm_tmsm)?);
        bounds.eq12 = Some(per_n(&|n| {
            bound_floor_based(m, delta_tm, max_dist, max_power_gap, norm_tmsm, norm_ts, n)
        })?);
        bounds.eq12_inf = Some(bound_floor_limit(m, delta_tm, norm_tmsm)?);
        bounds.eq14 = eq14;
        if eq14.is_some_and(|e| e.trivial_headroom) {
            unavailable.push("eq14 has trivial headroom: its first term is 1".into());
        }
        if eq7_max.is_none() {
            unavailable.push(format!("eq7 needs n multiple of m = {m} within the horizon"));
        }
    }

    let transfer = if contracting {
        stability_transfer(t, s, m, opts)?
    } else {
        Transfer {
            verdict: Verdict::DoesNotApply,
            margin: 1.0 - delta_tm - norm_tmsm,
            m,
            delta_tm,
            norm_tmsm,
            rho: None,
            x0: None,
            z0: None,
            z0_residual: None,
            iterations: None,
            bound_per62: None,
            actual: None,
        }
    };
    let transfer = Some(transfer);
    if let Some(tr) = &transfer {
        bounds.per62 = tr.bound_per62;
        if tr.verdict == Verdict::DoesNotApply {
            unavailable.push(format!("per62 needs a positive transfer margin, got {}", tr.margin));
        }
    }

    // both chains stable: compare independently computed fixed points
    let s_stable = transfer.as_ref().is_some_and(|tr| tr.verdict == Verdict::Applies)
        || (space.is_classical() && find_contractive_power_with(s, opts.n_max, DEFAULT_THRESHOLD, None)?.is_some());
    let mut x0 = None;
    let mut z0 = None;
    let mut stationary = None;
    let mut interval = None;
    if contracting && s_stable {
        let xt = fixed_point(t, opts.tol, DEFAULT_FIXED_POINT_ITERS)?;
        let zs = fixed_point(s, opts.tol, DEFAULT_FIXED_POINT_ITERS)?;
        let d = xt.distance(&zs);
        let resid = t.apply(&xt).distance(&xt).max(s.apply(&zs).distance(&zs));
        if resid > opts.tol {
            interval = Some(((d - 2.0 * opts.tol).max(0.0), d + 2.0 * opts.tol));
        }
        for (key, b) in [("eq6", bounds.eq6), ("eq9", bounds.eq9), ("eq12_inf", bounds.eq12_inf), ("per62", bounds.per62)] {
            if let Some(b) = b {
                soundness.entry(key.to_string()).or_default().record(b, d);
            }
        }
        stationary = Some(d);
        x0 = Some(xt);
        z0 = Some(zs);
    }

    let mut tightness = trajectory_ratio;
    if let Some(d) = stationary {
        for (key, b) in [("eq6", bounds.eq6), ("eq9", bounds.eq9), ("eq12_inf", bounds.eq12_inf), ("per62", bounds.per62)] {
            if let Some(b) = b {
                tightness.insert(key.to_string(), ratio(d, b));
            }
        }
    }

    Ok(PerturbationReport {
        space,
        m,
        delta_tm,
        delta_certified: certified,
        attested_delta_upper: if space.is_classical() { None } else { opts.delta_upper },
        norm_ts,
        norm_tmsm,
        max_power_gap,
        eq15_lhs,
        eq15_holds: eq15_lhs <= m as f64 * norm_ts + 1e-9,
        envelope,
        bounds,
        unavailable,
        horizon: opts.horizon,
        max_start_distance: max_dist,
        actual_trajectory_distance: actual_traj,
        actual_stationary_distance: stationary,
        actual_stationary_interval: interval,
        x0,
        z0,
        soundness,
        tightness,
        transfer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::validate_markov;

    fn classical(rows: &[&[f64]]) -> MarkovOperator {
        let n = rows.len();
        validate_markov(DMatrix::from_fn(n, n, |i, j| rows[i][j]), SpaceDescriptor::classical(n).unwrap(), 0, 0)
            .unwrap()
    }

    fn worked_t() -> MarkovOperator {
        classical(&[&[0.9, 0.2], &[0.1, 0.8]])
    }

    fn worked_s() -> MarkovOperator {
        classical(&[&[0.88, 0.215], &[0.12, 0.785]])
    }

    #[test]
    fn rate_based_examples() {
        let env = Envelope { c: 1.0 / 0.7, alpha: (1.0f64 / 0.7).ln(), n_tilde: 1 };
        assert!((bound_eq6(&env, 0.04).unwrap() - (1.0 + 10.0 / 3.0) * 0.04).abs() < 1e-12);
        for n in 1..10 {
            assert_eq!(bound_rate_based(&env, 0.0, 0.0, n).unwrap(), 0.0);
        }
        assert_eq!(bound_rate_based(&env, 0.0, 2.0, 1).unwrap(), 2.0);
        let flat = Envelope { alpha: 0.0, ..env };
        assert!(matches!(bound_eq6(&flat, 0.04), Err(Error::Precondition(_))));
    }

    #[test]
    fn rate_based_is_continuous_at_n_tilde() {
        let env = geometric_envelope(1, 0.7).unwrap();
        let (norm, dist) = (0.03, 0.5);
        let at = bound_rate_based(&env, norm, dist, env.n_tilde).unwrap();
        let after = bound_rate_based(&env, norm, dist, env.n_tilde + 1).unwrap();
        // one more step adds at most one C e^{−α n} ‖T − S‖ ≤ ‖T − S‖
        assert!(after <= at + norm + 1e-12);
        assert!(bound_eq5(&env, norm, dist).unwrap() >= after);
    }

    #[test]
    fn delta_based_examples() {
        assert!((bound_eq9(1, 0.7, 0.04).unwrap() - 0.04 / 0.3).abs() < 1e-12);
        assert_eq!(bound_eq9(1, 0.7, 0.0).unwrap(), 0.0);
        assert_eq!(bound_eq9(3, 0.0, 0.25).unwrap(), 0.25);
        assert!(matches!(bound_eq9(1, 1.0, 0.04), Err(Error::Precondition(_))));
        // n = m uses the contracted case
        let b = bound_delta_based(1, 0.7, 0.0, 0.0, 0.04, 1).unwrap();
        assert!((b - 0.04 / 0.3).abs() < 1e-12);
        assert_eq!(bound_delta_based(3, 0.5, 0.2, 0.1, 0.3, 2).unwrap(), 0.2 + 0.1);
        assert!((bound_eq7(2, 0.5, 1.0, 0.1).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn floor_based_examples() {
        let b = bound_floor_based(1, 0.7, 0.0, 0.0, 0.04, 0.04, 3).unwrap();
        assert!((b - 0.657 / 0.3 * 0.04).abs() < 1e-12);
        assert_eq!(bound_floor_based(4, 0.5, 0.3, 0.0, 0.0, 0.0, 2).unwrap(), 0.3);
        assert_eq!(bound_floor_based(2, 0.0, 0.3, 0.1, 0.25, 0.2, 5).unwrap(), 0.25);
        let e = bound_eq14(2, 0.5, 0.01).unwrap();
        assert!(e.trivial_headroom);
        assert!((e.value - 1.04).abs() < 1e-12);
        let e = bound_eq14(1, 0.7, 0.04).unwrap();
        assert!(!e.trivial_headroom);
        assert!((e.value - (0.7 + 0.04 / 0.3)).abs() < 1e-12);
    }

    #[test]
    fn transfer_on_worked_pair() {
        let tr = stability_transfer(&worked_t(), &worked_s(), 1, &PerturbationOptions::default()).unwrap();
        assert_eq!(tr.verdict, Verdict::Applies);
        assert!((tr.bound_per62.unwrap() - 0.04 / 0.26).abs() < 1e-12);
        let z0 = tr.z0.unwrap();
        assert!((z0.coords()[0] - 43.0 / 67.0).abs() < 1e-10);
        assert!((tr.actual.unwrap() - 10.0 / 201.0).abs() < 1e-10);
        assert!(tr.z0_residual.unwrap() < 1e-11);
    }

    #[test]
    fn transfer_edge_cases() {
        let tr = stability_transfer(&worked_t(), &worked_t(), 1, &PerturbationOptions::default()).unwrap();
        assert_eq!(tr.bound_per62, Some(0.0));
        assert!(tr.actual.unwrap() < 1e-12);

        let id = MarkovOperator::identity(SpaceDescriptor::classical(2).unwrap());
        assert!(matches!(
            stability_transfer(&id, &worked_s(), 1, &PerturbationOptions::default()),
            Err(Error::Certification(_))
        ));

        let far = classical(&[&[0.1, 0.9], &[0.9, 0.1]]);
        let tr = stability_transfer(&worked_t(), &far, 1, &PerturbationOptions::default()).unwrap();
        assert_eq!(tr.verdict, Verdict::DoesNotApply);
        assert!(tr.margin <= 0.0);
        assert!(tr.z0.is_none());
    }

    #[test]
    fn neumann_examples() {
        let s = worked_s();
        let space = s.space();
        let x = Element::from_slice(space, &[0.3, -0.3]).unwrap();
        let y = neumann_inverse_on_n(&s, 1, &x, 0.665, 1e-13).unwrap();
        assert!((y.coords()[0] - 0.3 / 0.335).abs() < 1e-12);
        assert!((y.coords()[1] + 0.3 / 0.335).abs() < 1e-12);

        let zero = Element::zeros(space);
        assert_eq!(neumann_inverse_on_n(&s, 1, &zero, 0.5, 1e-12).unwrap(), zero);

        let target = Element::from_slice(space, &[0.4, 0.6]).unwrap();
        let r = crate::operators::rank_one(&target).unwrap();
        assert_eq!(neumann_inverse_on_n(&r, 2, &x, 0.0, 1e-12).unwrap(), x);

        let base = Element::from_slice(space, &[0.3, 0.7]).unwrap();
        assert!(matches!(neumann_inverse_on_n(&s, 1, &base, 0.7, 1e-12), Err(Error::Precondition(_))));
        assert!(matches!(neumann_inverse_on_n(&s, 1, &x, 1.0, 1e-12), Err(Error::Precondition(_))));
        // an understated rho is caught by the residual check
        assert!(matches!(neumann_inverse_on_n(&s, 1, &x, 0.1, 1e-12), Err(Error::Numerical(_))));
    }

    #[test]
    fn worked_pair_report() {
        let r = tightness_report(&worked_t(), &worked_s(), &PerturbationOptions::default().with_m(1)).unwrap();
        assert!((r.delta_tm - 0.7).abs() < 1e-12);
        assert!((r.norm_ts - 0.04).abs() < 1e-12);
        let actual = r.actual_stationary_distance.unwrap();
        assert!((actual - 10.0 / 201.0).abs() < 1e-10);
        assert!((r.bounds.eq9.unwrap() - 0.133_333_333_333).abs() < 1e-9);
        assert!((r.bounds.per62.unwrap() - 0.153_846_153_846).abs() < 1e-9);
        assert!(actual <= r.bounds.eq9.unwrap() && r.bounds.eq9.unwrap() <= r.bounds.eq6.unwrap());
        assert!(r.eq15_holds);
        assert_eq!(r.violations(), 0);
        assert_eq!(r.per_n_rows().len(), 16);
    }

    #[test]
    fn identical_pair_has_zero_actuals_and_unit_ratios() {
        let r = tightness_report(&worked_t(), &worked_t(), &PerturbationOptions::default()).unwrap();
        assert_eq!(r.m, 1);
        assert_eq!(r.actual_stationary_distance, Some(0.0));
        assert_eq!(r.bounds.eq9, Some(0.0));
        assert_eq!(r.tightness["eq9"], 1.0);
        assert_eq!(r.violations(), 0);
    }

    #[test]
    fn swap_pair_has_no_delta_bounds() {
        let swap = classical(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let hold = classical(&[&[0.02, 0.98], &[0.98, 0.02]]);
        let r = tightness_report(&swap, &hold, &PerturbationOptions::default().with_m(2)).unwrap();
        assert_eq!(r.delta_tm, 1.0);
        assert!(r.bounds.eq9.is_none() && r.bounds.per62.is_none());
        assert_eq!(r.transfer.unwrap().verdict, Verdict::DoesNotApply);
        assert!(!r.unavailable.is_empty());
    }

    #[test]
    fn space_mismatch_is_rejected() {
        let three = MarkovOperator::identity(SpaceDescriptor::classical(3).unwrap());
        assert!(tightness_report(&worked_t(), &three, &PerturbationOptions::default()).is_err());
    }
}
