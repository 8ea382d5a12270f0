//! Ergodicity classification of Markov operators.
//!
//! An operator is uniformly asymptotically stable exactly when some power
//! contracts, `δ(T^{n0}) ≤ ρ < 1`, and uniformly mean ergodic exactly when some
//! Cesàro average does. Contraction can only be *certified* from an upper
//! bound on `δ`: exact enumeration on the classical space, or a user-attested
//! bound `δ(T) ≤ b` elsewhere (then `δ(T^n) ≤ b^n` by submultiplicativity and
//! `δ(A_n(T)) ≤ (1/n) Σ_{k<n} b^k`). Sampled lower bounds are reported in the
//! traces but never used to certify.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::{delta_of_matrix, operator_norm, rank_one, MarkovOperator, DEFAULT_DELTA_BUDGET};
use crate::spaces::{Element, SpaceDescriptor, CONE_TOL};

pub const DEFAULT_N_MAX: usize = 512;
/// `δ < 1` is decided as `δ ≤ 1 − 1e-6`.
pub const DEFAULT_THRESHOLD: f64 = 1.0 - 1e-6;
pub const DEFAULT_N_CHECK: usize = 256;
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-12;
/// Cesàro doublings before falling back to a linear solve.
pub const DEFAULT_FIXED_POINT_ITERS: usize = 64;

/// Upper bound on `δ(T^k)`, certified by enumeration or by attestation.
pub fn certified_delta_power(t: &MarkovOperator, k: usize, attested: Option<f64>) -> Result<f64> {
    if t.space().is_classical() {
        Ok(delta_of_matrix(t.power(k).matrix(), t.space(), 0, 0).value.min(1.0))
    } else if let Some(b) = attested {
        Ok(b.powi(k as i32).min(1.0))
    } else {
        Err(Error::Certification(
            "delta on this space is a sampled lower bound; supply an attested upper bound".into(),
        ))
    }
}

/// Upper bound on `δ(A_n(T))`, certified by enumeration or by attestation.
pub fn certified_delta_cesaro(t: &MarkovOperator, n: usize, attested: Option<f64>) -> Result<f64> {
    if t.space().is_classical() {
        Ok(delta_of_matrix(t.cesaro(n).matrix(), t.space(), 0, 0).value.min(1.0))
    } else if let Some(b) = attested {
        Ok(((0..n).map(|k| b.powi(k as i32)).sum::<f64>() / n as f64).min(1.0))
    } else {
        Err(Error::Certification(
            "delta on this space is a sampled lower bound; supply an attested upper bound".into(),
        ))
    }
}

fn check_attestation(attested: Option<f64>) -> Result<()> {
    match attested {
        Some(b) if !(0.0..=1.0).contains(&b) => {
            Err(Error::Precondition(format!("attested delta bound must lie in [0, 1], got {b}")))
        }
        _ => Ok(()),
    }
}

/// Smallest `n0 ≤ n_max` with certified `δ(T^{n0}) ≤ threshold`.
pub fn find_contractive_power(t: &MarkovOperator, n_max: usize, threshold: f64) -> Option<(usize, f64)> {
    find_contractive_power_with(t, n_max, threshold, None).ok().flatten()
}

pub fn find_contractive_power_with(
    t: &MarkovOperator,
    n_max: usize,
    threshold: f64,
    attested: Option<f64>,
) -> Result<Option<(usize, f64)>> {
    t.require_validated("find_contractive_power")?;
    check_attestation(attested)?;
    let space = t.space();
    if space.is_classical() {
        let mut power = t.matrix().clone();
        for n in 1..=n_max {
            let d = delta_of_matrix(&power, space, 0, 0).value.min(1.0);
            if d <= threshold {
                return Ok(Some((n, d)));
            }
            power = t.matrix() * power;
        }
        Ok(None)
    } else if let Some(b) = attested {
        Ok((1..=n_max).map(|n| (n, b.powi(n as i32))).find(|&(_, d)| d <= threshold))
    } else {
        Ok(None)
    }
}

/// Smallest `n0 ≤ n_max` with certified `δ(A_{n0}(T)) ≤ threshold`.
pub fn find_mean_contractive(t: &MarkovOperator, n_max: usize, threshold: f64) -> Option<(usize, f64)> {
    find_mean_contractive_with(t, n_max, threshold, None).ok().flatten()
}

pub fn find_mean_contractive_with(
    t: &MarkovOperator,
    n_max: usize,
    threshold: f64,
    attested: Option<f64>,
) -> Result<Option<(usize, f64)>> {
    t.require_validated("find_mean_contractive")?;
    check_attestation(attested)?;
    let space = t.space();
    if space.is_classical() {
        let dim = space.dim();
        let mut term = DMatrix::identity(dim, dim);
        let mut sum = term.clone();
        for n in 1..=n_max {
            let d = delta_of_matrix(&(&sum / n as f64), space, 0, 0).value.min(1.0);
            if d <= threshold {
                return Ok(Some((n, d)));
            }
            term = t.matrix() * term;
            sum += &term;
        }
        Ok(None)
    } else if let Some(b) = attested {
        let mut acc = 0.0;
        for n in 1..=n_max {
            acc += b.powi(n as i32 - 1);
            let d = (acc / n as f64).min(1.0);
            if d <= threshold {
                return Ok(Some((n, d)));
            }
        }
        Ok(None)
    } else {
        Ok(None)
    }
}

/// Geometric envelope `‖T^n − T_{x0}‖ ≤ C e^{−α n}` derived from `δ(T^{n0}) ≤ ρ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Envelope {
    pub c: f64,
    /// `+∞` when `ρ = 0` (the power is rank-one).
    pub alpha: f64,
    pub n_tilde: usize,
}

impl Envelope {
    pub fn at(&self, n: usize) -> f64 {
        if self.alpha.is_infinite() {
            if n == 0 { self.c } else { 0.0 }
        } else {
            self.c * (-self.alpha * n as f64).exp()
        }
    }
}

/// `C = 2/ρ`, `α = ln(1/ρ)/n0`, `ñ` = smallest `n` with `C e^{−α n} ≤ 1`.
///
/// Submultiplicativity gives `δ(T^n) ≤ ρ^{⌊n/n0⌋} ≤ ρ^{-1} e^{−α n}`, and
/// `‖T^n − T_{x0}‖ = sup_{u ∈ K} ‖T^n (u − x0)‖ ≤ 2 δ(T^n)`, hence the factor 2.
pub fn geometric_envelope(n0: usize, rho: f64) -> Result<Envelope> {
    if n0 == 0 {
        return Err(Error::Precondition("envelope needs n0 >= 1".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Precondition(format!("envelope needs 0 <= rho < 1, got {rho}")));
    }
    if rho == 0.0 {
        return Ok(Envelope { c: 1.0, alpha: f64::INFINITY, n_tilde: n0 });
    }
    let c = 2.0 / rho;
    let alpha = (1.0 / rho).ln() / n0 as f64;
    let mut env = Envelope { c, alpha, n_tilde: (c.ln() / alpha).ceil().max(0.0) as usize };
    while env.n_tilde > 0 && env.at(env.n_tilde - 1) <= 1.0 + 1e-12 {
        env.n_tilde -= 1;
    }
    while env.at(env.n_tilde) > 1.0 + 1e-12 {
        env.n_tilde += 1;
    }
    Ok(env)
}

/// Fixed point of `T` in the base, starting from the barycenter.
pub fn fixed_point(t: &MarkovOperator, tol: f64, iter_max: usize) -> Result<Element> {
    fixed_point_from(t, &t.space().barycenter(), tol, iter_max)
}

/// Fixed point by Cesàro doubling `y ← ½ (y + T^{2^k} y)` from `start`, with a
/// constrained linear solve of `(T − I) x = 0, f(x) = 1` as fallback.
pub fn fixed_point_from(t: &MarkovOperator, start: &Element, tol: f64, iter_max: usize) -> Result<Element> {
    t.require_validated("fixed_point")?;
    let space = t.space();
    if !start.in_base(CONE_TOL) {
        return Err(Error::Precondition("fixed-point iteration must start in the base".into()));
    }
    let m = t.matrix();
    let residual = |y: &DVector<f64>| space.base_norm(&(m * y - y));
    let f = space.functional_row();
    let ff = f.dot(&f);
    let mut y = start.coords().clone();
    let mut power = m.clone();
    let mut best = (residual(&y), y.clone());
    for _ in 0..iter_max {
        if best.0 == 0.0 {
            break;
        }
        y = (&y + &power * &y) * 0.5;
        y /= f.dot(&y);
        power = &power * &power;
        // squaring amplifies drift in f ∘ P = f; project it back out
        let drift = power.tr_mul(&f) - &f;
        power -= &f * drift.transpose() / ff;
        // T^{2^k} A_{2^k} x converges geometrically when some power contracts
        let mut pushed = &power * &y;
        pushed /= f.dot(&pushed);
        let before = best.0;
        for cand in [&y, &pushed] {
            let r = residual(cand);
            if r < best.0 {
                best = (r, cand.clone());
            }
        }
        // past the tolerance, keep polishing only while it still helps
        if before <= tol && best.0 >= 0.5 * before {
            break;
        }
    }
    if best.0 <= tol {
        return Ok(Element::from_raw(space, best.1));
    }
    let solved = solve_stationary(m, space);
    if let Some(x) = solved {
        if residual(&x) <= tol && space.in_cone(&x, CONE_TOL) {
            return Ok(Element::from_raw(space, x));
        }
    }
    Err(Error::NoFixedPoint(format!(
        "Cesàro iteration stalled at residual {:e} and the linear solve gave no cone point",
        best.0
    )))
}

fn solve_stationary(m: &DMatrix<f64>, space: SpaceDescriptor) -> Option<DVector<f64>> {
    let n = space.dim();
    let f = space.functional_row();
    let mut a = DMatrix::zeros(n + 1, n);
    a.view_mut((0, 0), (n, n)).copy_from(&(m - DMatrix::identity(n, n)));
    a.row_mut(n).copy_from(&f.transpose());
    let mut b = DVector::zeros(n + 1);
    b[n] = 1.0;
    a.svd(true, true).solve(&b, 1e-14).ok()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    UniformlyAsymptoticallyStable,
    UniformlyMeanErgodicOnly,
    Undetermined,
}

#[derive(Clone, Debug, Serialize)]
pub struct TracePoint {
    pub n: usize,
    #[serde(rename = "delta_Tn")]
    pub delta_tn: f64,
    #[serde(rename = "delta_An")]
    pub delta_an: f64,
    /// `‖T^n − T_{x0}‖`, absent without a fixed point.
    pub norm_gap: Option<f64>,
}

/// Empirical check of a decay envelope over a window of `n`.
#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeCheck {
    pub from: usize,
    pub to: usize,
    /// Smallest `bound(n) − actual(n)` seen; negative means a violation.
    pub min_slack: f64,
    /// Violations beyond `1e-8`.
    pub violations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicityReport {
    pub classification: Classification,
    pub n0: Option<usize>,
    pub rho: Option<f64>,
    pub mean_n0: Option<usize>,
    pub mean_rho: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub alpha: Option<f64>,
    pub n_tilde: Option<usize>,
    pub fixed_point: Option<Element>,
    pub fixed_point_residual: Option<f64>,
    pub n_max_searched: usize,
    /// `‖T^n − T_{x0}‖ ≤ C e^{−α n}` for `ñ ≤ n ≤ n_check` (stable operators).
    pub envelope_check: Option<EnvelopeCheck>,
    /// `‖A_n(T) − T_{x0}‖ ≤ 2 δ(A_n(T))` over the tail window (mean ergodic operators).
    pub mean_tail_check: Option<EnvelopeCheck>,
    /// Least-squares fit `(C, α)` of the observed gaps; reporting only.
    pub fitted_envelope: Option<(f64, f64)>,
    pub delta_certified: bool,
    pub attested_delta_upper: Option<f64>,
    pub trace: Vec<TracePoint>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassifyOptions {
    pub n_max: usize,
    pub threshold: f64,
    pub n_check: usize,
    pub tol: f64,
    pub iter_max: usize,
    pub delta_budget: usize,
    pub seed: u64,
    /// User-attested upper bound on `δ(T)` for spaces without exact enumeration.
    pub delta_upper: Option<f64>,
    /// Number of `n` values recorded in the trace.
    pub trace_len: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            n_max: DEFAULT_N_MAX,
            threshold: DEFAULT_THRESHOLD,
            n_check: DEFAULT_N_CHECK,
            tol: DEFAULT_FIXED_POINT_TOL,
            iter_max: DEFAULT_FIXED_POINT_ITERS,
            delta_budget: DEFAULT_DELTA_BUDGET,
            seed: 0,
            delta_upper: None,
            trace_len: 32,
        }
    }
}

impl ClassifyOptions {
    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn with_delta_upper(mut self, b: Option<f64>) -> Self {
        self.delta_upper = b;
        self
    }

    pub fn without_trace(mut self) -> Self {
        self.trace_len = 0;
        self
    }
}

fn gap_norm(a: &DMatrix<f64>, space: SpaceDescriptor, opts: &ClassifyOptions, n: usize) -> f64 {
    operator_norm(a, space, opts.delta_budget, opts.seed ^ n as u64).value
}

fn fit_envelope(points: &[(usize, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, g)| *g > 1e-300)
        .map(|&(n, g)| (n as f64, g.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    Some(((my - slope * mx).exp(), -slope))
}

/// Classifies `T` as uniformly asymptotically stable, uniformly mean ergodic
/// only, or undetermined within the searched horizon.
pub fn classify(t: &MarkovOperator, opts: &ClassifyOptions) -> Result<ErgodicityReport> {
    t.require_validated("classify")?;
    check_attestation(opts.delta_upper)?;
    let space = t.space();
    let certified = space.is_classical() || opts.delta_upper.is_some();
    let mut report = ErgodicityReport {
        classification: Classification::Undetermined,
        n0: None,
        rho: None,
        mean_n0: None,
        mean_rho: None,
        c: None,
        alpha: None,
        n_tilde: None,
        fixed_point: None,
        fixed_point_residual: None,
        n_max_searched: opts.n_max,
        envelope_check: None,
        mean_tail_check: None,
        fitted_envelope: None,
        delta_certified: certified,
        attested_delta_upper: if space.is_classical() { None } else { opts.delta_upper },
        trace: Vec::new(),
    };

    if let Some((n0, rho)) = find_contractive_power_with(t, opts.n_max, opts.threshold, opts.delta_upper)? {
        let env = geometric_envelope(n0, rho)?;
        let x0 = fixed_point(t, opts.tol, opts.iter_max)?;
        let t_x0 = rank_one(&x0)?;
        let mut check = EnvelopeCheck { from: env.n_tilde.max(1), to: opts.n_check, min_slack: f64::INFINITY, violations: 0 };
        let mut gaps = Vec::new();
        let mut power = t.power(check.from).matrix().clone();
        for n in check.from..=opts.n_check {
            let gap = gap_norm(&(&power - t_x0.matrix()), space, opts, n);
            let slack = env.at(n) - gap;
            check.min_slack = check.min_slack.min(slack);
            if slack < -1e-8 {
                check.violations += 1;
            }
            gaps.push((n, gap));
            power = t.matrix() * power;
        }
        report.classification = Classification::UniformlyAsymptoticallyStable;
        report.n0 = Some(n0);
        report.rho = Some(rho);
        report.c = Some(env.c);
        report.alpha = Some(env.alpha);
        report.n_tilde = Some(env.n_tilde);
        report.fixed_point_residual = Some(t.apply(&x0).distance(&x0));
        report.fixed_point = Some(x0);
        report.envelope_check = Some(check);
        report.fitted_envelope = fit_envelope(&gaps);
    } else if let Some((n0, rho)) = find_mean_contractive_with(t, opts.n_max, opts.threshold, opts.delta_upper)? {
        let x0 = fixed_point(t, opts.tol, opts.iter_max)?;
        let t_x0 = rank_one(&x0)?;
        let window_from = opts.n_check.saturating_sub(32).max(n0);
        let mut check = EnvelopeCheck { from: window_from, to: opts.n_check, min_slack: f64::INFINITY, violations: 0 };
        for n in window_from..=opts.n_check {
            let avg = t.cesaro(n);
            let gap = gap_norm(&(avg.matrix() - t_x0.matrix()), space, opts, n);
            let bound = 2.0 * certified_delta_cesaro(t, n, opts.delta_upper)?;
            let slack = bound - gap;
            check.min_slack = check.min_slack.min(slack);
            if slack < -1e-9 {
                check.violations += 1;
            }
        }
        report.classification = Classification::UniformlyMeanErgodicOnly;
        report.mean_n0 = Some(n0);
        report.mean_rho = Some(rho);
        report.fixed_point_residual = Some(t.apply(&x0).distance(&x0));
        report.fixed_point = Some(x0);
        report.mean_tail_check = Some(check);
    } else if let Ok(x0) = fixed_point(t, opts.tol, opts.iter_max) {
        report.fixed_point_residual = Some(t.apply(&x0).distance(&x0));
        report.fixed_point = Some(x0);
    }

    report.trace = trace(t, opts, report.fixed_point.as_ref())?;
    Ok(report)
}

fn trace(t: &MarkovOperator, opts: &ClassifyOptions, x0: Option<&Element>) -> Result<Vec<TracePoint>> {
    let space = t.space();
    let t_x0 = x0.map(rank_one).transpose()?;
    let dim = space.dim();
    let mut out = Vec::with_capacity(opts.trace_len);
    let mut power = DMatrix::identity(dim, dim);
    let mut sum = DMatrix::zeros(dim, dim);
    for n in 1..=opts.trace_len {
        sum += &power;
        power = t.matrix() * power;
        let delta_tn = delta_of_matrix(&power, space, opts.delta_budget, opts.seed ^ n as u64).value.min(1.0);
        let delta_an = delta_of_matrix(&(&sum / n as f64), space, opts.delta_budget, opts.seed ^ n as u64).value.min(1.0);
        let norm_gap = t_x0.as_ref().map(|r| gap_norm(&(&power - r.matrix()), space, opts, n));
        out.push(TracePoint { n, delta_tn, delta_an, norm_gap });
    }
    Ok(out)
}

/// `r = 2 (1 − δ(A_n(T))) / (n + 1)`: every Markov `H` with `‖H − T‖ < r`
/// still has `δ(A_n(H)) < 1`.
pub fn openness_radius(t: &MarkovOperator, n: usize) -> Result<f64> {
    openness_radius_with(t, n, None)
}

pub fn openness_radius_with(t: &MarkovOperator, n: usize, attested: Option<f64>) -> Result<f64> {
    t.require_validated("openness_radius")?;
    if n == 0 {
        return Err(Error::Precondition("openness radius needs n >= 1".into()));
    }
    check_attestation(attested)?;
    let d = certified_delta_cesaro(t, n, attested)?;
    if d >= 1.0 - 1e-12 {
        return Err(Error::Precondition(format!("delta(A_{n}(T)) = {d} is not below 1")));
    }
    Ok(2.0 * (1.0 - d) / (n + 1) as f64)
}
