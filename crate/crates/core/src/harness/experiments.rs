use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{perturb_toward, quantile, random_markov, random_markov_certified, random_permutation_like, role};
use super::{ExperimentConfig, REJECTION_CAP};
use crate::ergodicity::{
    classify, find_contractive_power_with, find_mean_contractive_with, fixed_point, openness_radius_with, Classification, ClassifyOptions,
    DEFAULT_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::operators::{
    delta_of_matrix, mixture_with_fixed_point, operator_norm, validate_markov, MarkovOperator,
};
use crate::perturbation::{neumann_inverse_on_n, ratio, tightness_report, PerturbationOptions, Verdict, SOUNDNESS_TOL};
use crate::seeds::sub_seed;
use crate::spaces::{Element, SpaceDescriptor};

/// One tightness trial. Bound and ratio columns are empty when a slot was
/// skipped or a bound does not apply.
#[derive(Clone, Debug, Serialize)]
pub struct TightnessRow {
    pub space: String,
    pub magnitude: f64,
    pub trial: usize,
    pub rejected_draws: usize,
    pub skipped: Option<String>,
    pub m: Option<usize>,
    #[serde(rename = "delta_Tm")]
    pub delta_tm: Option<f64>,
    #[serde(rename = "norm_TS")]
    pub norm_ts: Option<f64>,
    pub bound_eq6: Option<f64>,
    pub bound_eq9: Option<f64>,
    pub bound_eq12_inf: Option<f64>,
    pub bound_per62: Option<f64>,
    pub actual: Option<f64>,
    pub ratio_eq6: Option<f64>,
    pub ratio_eq9: Option<f64>,
    pub ratio_eq12_inf: Option<f64>,
    pub ratio_per62: Option<f64>,
    pub verdict: Option<String>,
    pub margin: Option<f64>,
    /// Pairwise soundness violations over every bound in the report.
    pub violations: usize,
    pub min_slack: Option<f64>,
    /// Classification of `S`; only computed on the classical space.
    pub s_uas: Option<bool>,
    /// Distance between the transferred `z0` and an independent fixed-point solve.
    pub z0_agreement: Option<f64>,
    pub neumann_residual: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TightnessSummary {
    pub magnitude: f64,
    pub rows: usize,
    pub skipped: usize,
    pub rejected_draws: usize,
    pub applies: usize,
    pub violations: usize,
    pub max_ratio: Option<f64>,
    pub median_ratio_eq6: Option<f64>,
    pub median_ratio_eq9: Option<f64>,
    pub median_ratio_eq12_inf: Option<f64>,
    pub median_ratio_per62: Option<f64>,
    pub q10_ratio_eq12_inf: Option<f64>,
    pub q90_ratio_eq12_inf: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TightnessTable {
    pub config: ExperimentConfig,
    pub rows: Vec<TightnessRow>,
    pub summary: Vec<TightnessSummary>,
}

impl TightnessTable {
    pub fn violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }

    pub fn csv(&self) -> Result<String> {
        crate::io::to_csv(&self.rows)
    }
}

/// Draws a stable `T` (at most [`REJECTION_CAP`] draws), perturbs it to the
/// slot's magnitude and records bound values, actual distance and transfer
/// diagnostics. Rows come out in `(magnitude, trial)` order.
pub fn tightness_experiment(config: &ExperimentConfig) -> Result<TightnessTable> {
    config.validate()?;
    let slots: Vec<(usize, usize)> = (0..config.perturbation_magnitudes.len())
        .flat_map(|k| (0..config.trials).map(move |i| (k, i)))
        .collect();
    let rows = slots
        .par_iter()
        .map(|&(k, i)| tightness_slot(config, k, i))
        .collect::<Result<Vec<_>>>()?;
    let summary = config.perturbation_magnitudes.iter().map(|&mag| summarize(mag, &rows)).collect();
    Ok(TightnessTable { config: config.clone(), rows, summary })
}

fn stable_draw(config: &ExperimentConfig, slot: u64) -> Result<(Option<(MarkovOperator, Option<f64>)>, usize)> {
    let space = config.space;
    for draw in 0..REJECTION_CAP {
        let seed = sub_seed(config.seed, slot * REJECTION_CAP as u64 + draw as u64, role::OPERATOR);
        let (t, bound) = random_markov_certified(space, seed, config.mixing);
        let attested = if space.is_classical() { None } else { Some(bound) };
        if find_contractive_power_with(&t, config.n_max, DEFAULT_THRESHOLD, attested)?.is_some() {
            return Ok((Some((t, attested)), draw));
        }
    }
    Ok((None, REJECTION_CAP))
}

fn tightness_slot(config: &ExperimentConfig, k: usize, trial: usize) -> Result<TightnessRow> {
    let magnitude = config.perturbation_magnitudes[k];
    let slot = (k * config.trials + trial) as u64;
    let mut row = TightnessRow {
        space: config.space.to_string(),
        magnitude,
        trial,
        rejected_draws: 0,
        skipped: None,
        m: None,
        delta_tm: None,
        norm_ts: None,
        bound_eq6: None,
        bound_eq9: None,
        bound_eq12_inf: None,
        bound_per62: None,
        actual: None,
        ratio_eq6: None,
        ratio_eq9: None,
        ratio_eq12_inf: None,
        ratio_per62: None,
        verdict: None,
        margin: None,
        violations: 0,
        min_slack: None,
        s_uas: None,
        z0_agreement: None,
        neumann_residual: None,
    };
    let (drawn, rejected) = stable_draw(config, slot)?;
    row.rejected_draws = rejected;
    let Some((t, attested)) = drawn else {
        row.skipped = Some("rejection cap reached".into());
        return Ok(row);
    };
    let s = match perturb_toward(&t, magnitude, sub_seed(config.seed, slot, role::PERTURBATION)) {
        Ok(s) => s,
        Err(Error::Degenerate(msg)) => {
            row.skipped = Some(msg);
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    let opts = PerturbationOptions {
        horizon: config.horizon,
        n_max: config.n_max,
        delta_upper: attested,
        seed: sub_seed(config.seed, slot, role::SAMPLING),
        ..Default::default()
    };
    let report = tightness_report(&t, &s, &opts)?;
    let b = &report.bounds;
    let actual = report.actual_stationary_distance;
    let r = |bound: Option<f64>| actual.zip(bound).map(|(a, b)| ratio(a, b));
    row.m = Some(report.m);
    row.delta_tm = Some(report.delta_tm);
    row.norm_ts = Some(report.norm_ts);
    row.bound_eq6 = b.eq6;
    row.bound_eq9 = b.eq9;
    row.bound_eq12_inf = b.eq12_inf;
    row.bound_per62 = b.per62;
    row.actual = actual;
    row.ratio_eq6 = r(b.eq6);
    row.ratio_eq9 = r(b.eq9);
    row.ratio_eq12_inf = r(b.eq12_inf);
    row.ratio_per62 = r(b.per62);
    row.violations = report.violations();
    row.min_slack = report.soundness.values().filter_map(|s| s.worst_slack).reduce(f64::min);

    if let Some(tr) = &report.transfer {
        row.verdict = Some(format!("{:?}", tr.verdict));
        row.margin = Some(tr.margin);
        if tr.verdict == Verdict::Applies {
            let (rho, x0, z0) = (tr.rho.expect("rho"), tr.x0.as_ref().expect("x0"), tr.z0.as_ref().expect("z0"));
            if config.space.is_classical() {
                let cls = classify(&s, &ClassifyOptions { n_max: config.n_max, trace_len: 0, ..Default::default() })?;
                row.s_uas = Some(cls.classification == Classification::UniformlyAsymptoticallyStable);
            }
            if let Ok(direct) = fixed_point(&s, 1e-12, 64) {
                row.z0_agreement = Some(direct.distance(z0));
            }
            let sm = s.power(tr.m);
            let x = x0 - &sm.apply(x0);
            let y = neumann_inverse_on_n(&s, tr.m, &x, rho, 1e-10)?;
            row.neumann_residual = Some((&(&y - &sm.apply(&y)) - &x).base_norm());
        }
    }
    Ok(row)
}

fn summarize(magnitude: f64, rows: &[TightnessRow]) -> TightnessSummary {
    let mine: Vec<&TightnessRow> = rows.iter().filter(|r| r.magnitude == magnitude).collect();
    let col = |f: fn(&TightnessRow) -> Option<f64>| mine.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
    let eq6 = col(|r| r.ratio_eq6);
    let eq9 = col(|r| r.ratio_eq9);
    let eq12 = col(|r| r.ratio_eq12_inf);
    let per62 = col(|r| r.ratio_per62);
    let max_ratio = [&eq6, &eq9, &eq12, &per62].iter().flat_map(|v| v.iter().copied()).reduce(f64::max);
    TightnessSummary {
        magnitude,
        rows: mine.len(),
        skipped: mine.iter().filter(|r| r.skipped.is_some()).count(),
        rejected_draws: mine.iter().map(|r| r.rejected_draws).sum(),
        applies: mine.iter().filter(|r| r.verdict.as_deref() == Some("Applies")).count(),
        violations: mine.iter().map(|r| r.violations).sum(),
        max_ratio,
        median_ratio_eq6: quantile(&eq6, 0.5),
        median_ratio_eq9: quantile(&eq9, 0.5),
        median_ratio_eq12_inf: quantile(&eq12, 0.5),
        median_ratio_per62: quantile(&per62, 0.5),
        q10_ratio_eq12_inf: quantile(&eq12, 0.1),
        q90_ratio_eq12_inf: quantile(&eq12, 0.9),
    }
}

/// One `(family, trial, ε)` cell of the density experiment.
#[derive(Clone, Debug, Serialize)]
pub struct DensityRow {
    pub space: String,
    pub family: String,
    pub trial: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub delta_bound: f64,
    /// True when `delta` is exact; otherwise it is a sampled lower estimate.
    pub delta_certified: bool,
    pub delta_ok: bool,
    pub distance: f64,
    pub distance_ok: bool,
    pub classification: String,
    pub n0: Option<usize>,
    pub openness_n: Option<usize>,
    pub openness_radius: Option<f64>,
    pub openness_checked: usize,
    pub openness_failures: usize,
    pub openness_max_delta: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityTable {
    pub config: ExperimentConfig,
    pub epsilons: Vec<f64>,
    pub rows: Vec<DensityRow>,
    pub failures: usize,
}

impl DensityTable {
    pub fn csv(&self) -> Result<String> {
        crate::io::to_csv(&self.rows)
    }
}

/// A random operator with `δ = 1` and a known fixed point: block diagonal on
/// the classical space, a partial coordinate damping of the p-cone tail, and
/// a unitary conjugation channel on quantum spaces.
fn non_contracting_draw(space: SpaceDescriptor, seed: u64) -> Result<(MarkovOperator, Element)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match space {
        SpaceDescriptor::Classical { n } if n >= 2 => {
            let k = rng.random_range(1..n);
            let a = random_markov(SpaceDescriptor::classical(k)?, rng.random(), 0.0);
            let b = random_markov(SpaceDescriptor::classical(n - k)?, rng.random(), 0.0);
            let mut m = DMatrix::zeros(n, n);
            m.view_mut((0, 0), (k, k)).copy_from(a.matrix());
            m.view_mut((k, k), (n - k, n - k)).copy_from(b.matrix());
            // an interior fixed point keeps ‖T − T_φ‖ below 2
            let lambda = rng.random_range(0.25..0.75);
            let mut coords = nalgebra::DVector::zeros(n);
            coords.rows_mut(0, k).copy_from(&(fixed_point(&a, 1e-13, 64)?.coords() * lambda));
            coords.rows_mut(k, n - k).copy_from(&(fixed_point(&b, 1e-13, 64)?.coords() * (1.0 - lambda)));
            Ok((validate_markov(m, space, 0, 0)?, Element::new(space, coords)?))
        }
        SpaceDescriptor::PCone { d, .. } => {
            let mut m = DMatrix::identity(d + 1, d + 1);
            for i in 2..=d {
                m[(i, i)] = rng.random_range(-1.0..1.0);
            }
            Ok((validate_markov(m, space, 0, 0)?, space.barycenter()))
        }
        _ => Ok((random_permutation_like(space, seed), space.barycenter())),
    }
}

fn permutation_fixed_point(space: SpaceDescriptor) -> Element {
    space.barycenter()
}

/// Builds `T^(ε)` for identity, permutation-like and non-contracting draws
/// and checks the contraction and distance certificates, classification and
/// the openness radius against random nearby operators.
pub fn density_experiment(config: &ExperimentConfig, epsilons: &[f64]) -> Result<DensityTable> {
    config.validate()?;
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0 && **e < 2.0)) {
        return Err(Error::Malformed(format!("epsilon {e} is outside (0, 2)")));
    }
    let space = config.space;
    let mut cells: Vec<(&'static str, usize)> = vec![("identity", 0)];
    for family in ["permutation", "random"] {
        cells.extend((0..config.trials).map(|i| (family, i)));
    }
    let jobs: Vec<(&'static str, usize, f64)> =
        cells.iter().flat_map(|&(f, i)| epsilons.iter().map(move |&e| (f, i, e))).collect();
    let rows = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(family, trial, eps))| {
            let seed = sub_seed(config.seed, trial as u64, role::OPERATOR) ^ family.len() as u64;
            let (t, phi) = match family {
                "identity" => (MarkovOperator::identity(space), space.barycenter()),
                "permutation" => (random_permutation_like(space, seed), permutation_fixed_point(space)),
                _ => non_contracting_draw(space, seed)?,
            };
            density_cell(config, family, trial, eps, &t, &phi, sub_seed(config.seed, j as u64, role::OPENNESS))
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = rows
        .iter()
        .map(|r| {
            usize::from(!r.delta_ok) + usize::from(!r.distance_ok) + usize::from(r.classification != "UniformlyAsymptoticallyStable")
                + r.openness_failures
        })
        .sum();
    Ok(DensityTable { config: config.clone(), epsilons: epsilons.to_vec(), rows, failures })
}

fn density_cell(
    config: &ExperimentConfig,
    family: &str,
    trial: usize,
    eps: f64,
    t: &MarkovOperator,
    phi: &Element,
    seed: u64,
) -> Result<DensityRow> {
    let space = t.space();
    let classical = space.is_classical();
    let mix = mixture_with_fixed_point(t, phi, eps)?;
    let delta_bound = 1.0 - eps / 2.0;
    let est = delta_of_matrix(mix.matrix(), space, config.delta_budget, seed);
    // δ(T^(ε)) ≤ (1 − ε/2) δ(T) holds by construction off the classical space
    let attested = if classical { None } else { Some(delta_bound) };
    let distance = operator_norm(&(t.matrix() - mix.matrix()), space, config.delta_budget, seed).value;
    let report = classify(
        &mix,
        &ClassifyOptions { n_max: config.n_max, delta_upper: attested, trace_len: 0, seed, ..Default::default() },
    )?;
    let mut row = DensityRow {
        space: space.to_string(),
        family: family.into(),
        trial,
        epsilon: eps,
        delta: est.value,
        delta_bound,
        delta_certified: est.certified,
        delta_ok: est.value <= delta_bound + 1e-10,
        distance,
        distance_ok: distance < eps,
        classification: format!("{:?}", report.classification),
        n0: report.n0,
        openness_n: None,
        openness_radius: None,
        openness_checked: 0,
        openness_failures: 0,
        openness_max_delta: None,
    };
    let found = match report.mean_n0 {
        Some(n) => Some(n),
        None => find_mean_contractive_with(&mix, config.n_max, DEFAULT_THRESHOLD, attested)?.map(|r| r.0),
    };
    let Some(n) = found else {
        return Ok(row);
    };
    let radius = openness_radius_with(&mix, n, attested)?;
    row.openness_n = Some(n);
    row.openness_radius = Some(radius);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_delta: f64 = 0.0;
    for k in 0..config.openness_samples {
        let target = random_markov(space, sub_seed(seed, k as u64, role::TARGET), 0.0);
        let full = operator_norm(&(mix.matrix() - target.matrix()), space, config.delta_budget, seed).value;
        if full <= 0.0 {
            continue;
        }
        let w = (rng.random::<f64>() * radius / full).min(1.0);
        let h = mix.blend(&target, w);
        let d = delta_of_matrix(h.cesaro(n).matrix(), space, config.delta_budget, seed).value;
        row.openness_checked += 1;
        if d >= 1.0 - SOUNDNESS_TOL.min(1e-12) {
            row.openness_failures += 1;
        }
        max_delta = max_delta.max(d);
    }
    row.openness_max_delta = (row.openness_checked > 0).then_some(max_delta);
    Ok(row)
}
