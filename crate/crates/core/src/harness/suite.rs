use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::{random_cycle, random_markov_certified, random_state, perturb_toward, role, ExperimentConfig};
use crate::ergodicity::{
    classify, find_mean_contractive_with, fixed_point, fixed_point_from, openness_radius_with, Classification,
    ClassifyOptions, DEFAULT_THRESHOLD,
};
use crate::error::Result;
use crate::operators::{
    delta_of_matrix, delta_upper, mixture_with_fixed_point, operator_norm, operator_norm_upper, rank_one,
    validate_markov, MarkovOperator, DEFAULT_VALIDATION_SAMPLES,
};
use crate::perturbation::{
    bound_delta_based, bound_eq9, bound_floor_based, neumann_inverse_on_n, tightness_report, PerturbationOptions,
    Verdict,
};
use crate::seeds::sub_seed;
use crate::spaces::{extreme_points, jordan_decompose, lemma32_decompose, Element, SpaceDescriptor};

pub const GROUPS: [&str; 4] = ["spaces", "operators", "ergodicity", "perturbation"];
const MAX_WITNESSES: usize = 5;
const MIXTURE_EPSILONS: [f64; 5] = [0.1, 0.5, 1.0, 1.5, 1.9];
const FIXED_POINT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct InvariantRecord {
    pub name: String,
    pub group: String,
    pub trials: usize,
    pub failures: usize,
    /// Failures planted by fault injection.
    pub expected_failures: usize,
    /// Smallest `rhs − lhs` over all trials; negative beyond the tolerance is a failure.
    pub worst_slack: Option<f64>,
    pub witnesses: Vec<Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub space: SpaceDescriptor,
    pub trials: usize,
    pub seed: u64,
    pub groups: Vec<String>,
    pub records: Vec<InvariantRecord>,
    pub unexpected_failures: usize,
    pub passed: bool,
}

impl SuiteResult {
    pub fn record(&self, name: &str) -> Option<&InvariantRecord> {
        self.records.iter().find(|r| r.name == name)
    }
}

struct Obs {
    group: &'static str,
    name: &'static str,
    slack: f64,
    failed: bool,
    witness: Option<Value>,
}

#[derive(Default)]
struct Log {
    obs: Vec<Obs>,
}

impl Log {
    /// Records `lhs ≤ rhs + tol`.
    fn le(&mut self, group: &'static str, name: &'static str, lhs: f64, rhs: f64, tol: f64, witness: impl FnOnce() -> Value) {
        let slack = rhs - lhs;
        let failed = !(slack >= -tol);
        self.obs.push(Obs { group, name, slack, failed, witness: failed.then(witness) });
    }

    fn holds(&mut self, group: &'static str, name: &'static str, ok: bool, witness: impl FnOnce() -> Value) {
        self.obs.push(Obs { group, name, slack: if ok { 0.0 } else { -1.0 }, failed: !ok, witness: (!ok).then(witness) });
    }
}

fn op_json(t: &MarkovOperator) -> Value {
    serde_json::to_value(t).unwrap_or(Value::Null)
}

/// Runs every invariant of the selected groups over `config.trials` random
/// draws. Failures are data: they are counted, the worst slack is kept and
/// the first few failing inputs are serialized as witnesses.
pub fn run_property_suite(config: &ExperimentConfig, groups: &[&str]) -> Result<SuiteResult> {
    config.validate()?;
    let groups: Vec<&str> = if groups.is_empty() { GROUPS.to_vec() } else { groups.to_vec() };
    if let Some(g) = groups.iter().find(|g| !GROUPS.contains(g)) {
        return Err(crate::Error::Malformed(format!("unknown suite group {g:?}; expected one of {GROUPS:?}")));
    }
    let logs: Vec<Log> = (0..config.trials)
        .into_par_iter()
        .map(|trial| run_trial(config, &groups, trial as u64))
        .collect::<Result<Vec<_>>>()?;

    let mut records: Vec<InvariantRecord> = Vec::new();
    for log in logs {
        for o in log.obs {
            let idx = match records.iter().position(|r| r.name == o.name) {
                Some(i) => i,
                None => {
                    records.push(InvariantRecord {
                        name: o.name.into(),
                        group: o.group.into(),
                        trials: 0,
                        failures: 0,
                        expected_failures: 0,
                        worst_slack: None,
                        witnesses: Vec::new(),
                    });
                    records.len() - 1
                }
            };
            let r = &mut records[idx];
            r.trials += 1;
            r.worst_slack = Some(r.worst_slack.map_or(o.slack, |w| w.min(o.slack)));
            if o.failed {
                r.failures += 1;
                if let Some(w) = o.witness {
                    if r.witnesses.len() < MAX_WITNESSES {
                        r.witnesses.push(w);
                    }
                }
            }
        }
    }

    if config.inject_fault && groups.contains(&"operators") {
        let space = config.space;
        let mut m = super::random_markov(space, sub_seed(config.seed, u64::MAX, role::AUX), 0.0).matrix().clone();
        // move mass so one entry turns negative while f ∘ T = f still holds
        let shift = m[(0, 0)] + 0.5;
        m[(0, 0)] -= shift;
        m[(space.dim() - 1, 0)] += shift;
        let bad = validate_markov(m, space, DEFAULT_VALIDATION_SAMPLES, config.seed)?;
        let r = records.iter_mut().find(|r| r.name == "generator_validity").expect("operators group ran");
        r.trials += 1;
        r.expected_failures += 1;
        if !bad.validated() {
            r.failures += 1;
            r.witnesses.push(json!({"injected": true, "operator": op_json(&bad)}));
        }
    }

    let unexpected_failures = records.iter().map(|r| r.failures.abs_diff(r.expected_failures)).sum();
    Ok(SuiteResult {
        space: config.space,
        trials: config.trials,
        seed: config.seed,
        groups: groups.iter().map(|g| g.to_string()).collect(),
        records,
        unexpected_failures,
        passed: unexpected_failures == 0,
    })
}

/// Operator drawn for a trial: mostly random draws, with rank-one operators
/// and (on the classical space) cycles mixed in.
fn trial_operator(config: &ExperimentConfig, trial: u64) -> Result<(MarkovOperator, f64)> {
    let space = config.space;
    let seed = sub_seed(config.seed, trial, role::OPERATOR);
    Ok(match (trial % 8, space) {
        (7, _) => (rank_one(&random_state(space, seed))?, 0.0),
        (6, SpaceDescriptor::Classical { n }) if n >= 2 => (random_cycle(n, seed)?, 1.0),
        _ => random_markov_certified(space, seed, config.mixing),
    })
}

fn run_trial(config: &ExperimentConfig, groups: &[&str], trial: u64) -> Result<Log> {
    let mut log = Log::default();
    let space = config.space;
    let exact = !matches!(space, SpaceDescriptor::Quantum { .. });
    let seed = |r: u64| sub_seed(config.seed, trial, r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed(role::SAMPLING));
    let (t, dt_up) = trial_operator(config, trial)?;
    let (s, ds_up) = random_markov_certified(space, seed(role::PERTURBATION), config.mixing);

    if groups.contains(&"spaces") {
        spaces_checks(&mut log, space, &mut rng)?;
    }
    if groups.contains(&"operators") {
        operator_checks(&mut log, config, trial, (&t, dt_up), (&s, ds_up), exact, &mut rng)?;
    }
    if groups.contains(&"ergodicity") {
        ergodicity_checks(&mut log, config, trial, &t, dt_up)?;
    }
    if groups.contains(&"perturbation") {
        perturbation_checks(&mut log, config, trial, &t, dt_up)?;
    }
    Ok(log)
}

fn gaussian_element(space: SpaceDescriptor, rng: &mut ChaCha8Rng) -> Element {
    let n = space.dim();
    Element::from_raw(space, nalgebra::DVector::from_fn(n, |_, _| rng.sample(StandardNormal)))
}

fn spaces_checks(log: &mut Log, space: SpaceDescriptor, rng: &mut ChaCha8Rng) -> Result<()> {
    const G: &str = "spaces";
    let pts = extreme_points(space, 4, rng.random());
    let mut cone = Element::zeros(space);
    for u in &pts {
        cone = &cone + &u.scaled(rng.random::<f64>());
    }
    log.le(G, "cone_norm_equals_functional", (cone.base_norm() - cone.functional()).abs(), 0.0, 1e-9 * (1.0 + cone.functional()), || json!({"x": cone}));

    let x = gaussian_element(space, rng);
    let y = gaussian_element(space, rng);
    let lambda: f64 = rng.random_range(-3.0..3.0);
    let nx = x.base_norm();
    log.le(G, "norm_homogeneity", (x.scaled(lambda).base_norm() - lambda.abs() * nx).abs(), 0.0, 1e-8 * (1.0 + nx), || json!({"x": x, "lambda": lambda}));
    log.le(G, "norm_triangle", (&x + &y).base_norm(), nx + y.base_norm(), 1e-8, || json!({"x": x, "y": y}));

    let (py, pz) = jordan_decompose(&x);
    let err = (&py - &pz).max_coord_diff(&x);
    log.le(G, "jordan_reconstruction", err, 0.0, 1e-8, || json!({"x": x}));
    log.le(G, "jordan_minimality", py.functional() + pz.functional(), nx, 1e-6, || json!({"x": x}));
    log.holds(G, "jordan_parts_in_cone", py.in_cone(1e-9) && pz.in_cone(1e-9), || json!({"x": x}));

    let b = space.barycenter();
    let null = &x - &b.scaled(x.functional() / b.functional());
    if null.base_norm() > 0.0 {
        let (u, v, s) = lemma32_decompose(&null)?;
        let err = (&null - &(&u - &v).scaled(s)).base_norm();
        log.le(G, "lemma32_reconstruction", err, 0.0, 1e-8, || json!({"x": null}));
        let f_err = (u.functional() - 1.0).abs().max((v.functional() - 1.0).abs());
        log.le(G, "lemma32_base_points", f_err, 0.0, 1e-9, || json!({"x": null}));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn operator_checks(
    log: &mut Log,
    config: &ExperimentConfig,
    trial: u64,
    (t, dt_up): (&MarkovOperator, f64),
    (s, ds_up): (&MarkovOperator, f64),
    exact: bool,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    const G: &str = "operators";
    let space = t.space();
    let budget = config.delta_budget;
    let sd = |r: u64| sub_seed(config.seed, trial, 100 + r);
    let delta = |a: &DMatrix<f64>, r: u64| delta_of_matrix(a, space, budget, sd(r));
    let norm_lo = |a: &DMatrix<f64>, r: u64| operator_norm(a, space, budget, sd(r)).value;
    let classical = space.is_classical();
    let pair = || json!({"T": op_json(t), "S": op_json(s)});

    for op in [t, s] {
        let again = validate_markov(op.matrix().clone(), space, DEFAULT_VALIDATION_SAMPLES, sd(0))?;
        log.holds(G, "generator_validity", again.validated(), || json!({"operator": op_json(op), "report": again.validation_report()}));
    }

    let est_t = delta(t.matrix(), 1);
    log.le(G, "dob_i_upper", est_t.value, 1.0, 1e-9, pair);
    log.le(G, "dob_i_lower", 0.0, est_t.value, 0.0, pair);
    if !classical {
        log.le(G, "delta_estimate_below_certified", est_t.value, dt_up, 1e-9, pair);
    }

    let diff = t.matrix() - s.matrix();
    let d_diff = delta(&diff, 2).value;
    let (dt, ds) = if classical { (est_t.value, delta(s.matrix(), 3).value) } else { (dt_up, ds_up) };
    if classical {
        let n_diff = norm_lo(&diff, 4);
        log.le(G, "dob_ii_lipschitz", (dt - ds).abs(), d_diff, 1e-9, pair);
        log.le(G, "dob_ii_norm", d_diff, n_diff, 1e-9, pair);
    } else {
        if exact {
            log.le(G, "dob_ii_lipschitz", (dt - ds).abs(), delta_upper(&diff, space), 1e-9, pair);
        }
        log.le(G, "dob_ii_norm", d_diff, operator_norm_upper(&diff, space), 1e-9, pair);
    }

    let ts = t.compose(s);
    log.le(G, "dob_iii_submultiplicative", delta(ts.matrix(), 5).value, dt * ds, 1e-9, pair);

    let y = random_state(space, sd(6));
    let n = space.dim();
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let h = (DMatrix::identity(n, n) - rank_one(&y)?.matrix()) * g;
    let th = t.matrix() * &h;
    if classical {
        log.le(G, "dob_iv_null_contraction", norm_lo(&th, 7), dt * norm_lo(&h, 8), 1e-9, || json!({"T": op_json(t), "H": h.as_slice()}));
    } else {
        log.le(G, "dob_iv_null_contraction", norm_lo(&th, 7), dt * operator_norm_upper(&h, space), 1e-9, || json!({"T": op_json(t), "H": h.as_slice()}));
    }

    log.le(G, "dob_v_null_sampling", est_t.null_space_estimate, est_t.value, 1e-8, pair);
    if classical {
        let at_witness = est_t.witness_value(t.matrix());
        log.le(G, "dob_v_witness_value", (at_witness - est_t.value).abs(), 0.0, 1e-9, pair);
    }

    if dt <= 1e-10 {
        let pts = extreme_points(space, 4, sd(9));
        let mut spread: f64 = 0.0;
        for u in &pts {
            for v in &pts {
                spread = spread.max(t.apply(u).distance(&t.apply(v)));
            }
        }
        log.le(G, "dob_vi_rank_one", spread, 0.0, 1e-8, || json!({"T": op_json(t)}));
    }

    let k = 1 + (trial % 16) as usize;
    let mut lhs = s.power(k).matrix() - t.power(k).matrix();
    for i in 0..k {
        lhs -= t.power(k - i - 1).matrix() * (s.matrix() - t.matrix()) * s.power(i).matrix();
    }
    log.le(G, "eq2_telescoping", lhs.amax(), 0.0, 1e-8, pair);

    let avg = t.cesaro(k);
    let lhs = avg.matrix() * (DMatrix::identity(n, n) - t.matrix());
    let t_norm = if classical { norm_lo(t.matrix(), 10) } else { operator_norm_upper(t.matrix(), space) };
    log.le(G, "cesaro_contraction", norm_lo(&lhs, 11), (1.0 + t_norm) / k as f64, 1e-9, || json!({"T": op_json(t), "n": k}));
    Ok(())
}

fn certified_input(space: SpaceDescriptor, dt_up: f64) -> Option<f64> {
    if space.is_classical() { None } else { Some(dt_up) }
}

fn ergodicity_checks(log: &mut Log, config: &ExperimentConfig, trial: u64, t: &MarkovOperator, dt_up: f64) -> Result<()> {
    const G: &str = "ergodicity";
    let space = t.space();
    let classical = space.is_classical();
    let attested = certified_input(space, dt_up);
    let opts = ClassifyOptions {
        n_max: config.n_max,
        delta_budget: config.delta_budget,
        seed: sub_seed(config.seed, trial, role::SAMPLING),
        delta_upper: attested,
        trace_len: 0,
        ..Default::default()
    };
    let report = classify(t, &opts)?;
    let tj = || json!({"T": op_json(t)});
    let checked_to = if classical { opts.n_check } else { 16 };

    match report.classification {
        Classification::UniformlyAsymptoticallyStable => {
            let (n0, rho) = (report.n0.unwrap(), report.rho.unwrap());
            let x0 = report.fixed_point.clone().expect("stable operators carry a fixed point");
            let t_x0 = rank_one(&x0)?;
            let mut power = t.matrix().clone();
            let mut worst_sub = f64::INFINITY;
            let mut worst_two = f64::INFINITY;
            for n in 1..=checked_to {
                let d = delta_of_matrix(&power, space, config.delta_budget, sub_seed(opts.seed, n as u64, 0)).value;
                worst_sub = worst_sub.min(rho.powi((n / n0) as i32) - d);
                let gap = operator_norm(&(&power - t_x0.matrix()), space, config.delta_budget, sub_seed(opts.seed, n as u64, 1)).value;
                let d_up = if classical { d } else { dt_up.powi(n as i32) };
                worst_two = worst_two.min(2.0 * d_up - gap);
                power = t.matrix() * power;
            }
            log.le(G, "submultiplicative_envelope", 0.0, worst_sub, 1e-9, tj);
            log.le(G, "gap_within_twice_delta", 0.0, worst_two, 1e-9, tj);
            if let Some(check) = &report.envelope_check {
                log.le(G, "geometric_envelope", 0.0, check.min_slack, 1e-8, tj);
            }
            uniqueness(log, config, trial, t, &x0)?;
            for eps in MIXTURE_EPSILONS {
                let mix = mixture_with_fixed_point(t, &x0, eps)?;
                let d = delta_of_matrix(mix.matrix(), space, config.delta_budget, opts.seed).value;
                log.le(G, "mixture_certificate", d, 1.0 - eps / 2.0, 1e-9, || json!({"T": op_json(t), "epsilon": eps}));
            }
            if classical {
                openness(log, config, trial, t, attested)?;
            }
        }
        Classification::UniformlyMeanErgodicOnly => {
            let x0 = report.fixed_point.clone().expect("mean ergodic operators carry a fixed point");
            if let Some(check) = &report.mean_tail_check {
                log.le(G, "mean_ergodic_convergence", 0.0, check.min_slack, 1e-9, tj);
            }
            if classical {
                let d_first = report.mean_rho.unwrap();
                let d_last = delta_of_matrix(t.cesaro(config.n_max).matrix(), space, 0, 0).value;
                log.le(G, "mean_tail_decrease", d_last, d_first, 1e-12, tj);
            }
            uniqueness(log, config, trial, t, &x0)?;
            if classical {
                openness(log, config, trial, t, attested)?;
            }
        }
        Classification::Undetermined => {}
    }
    Ok(())
}

fn uniqueness(log: &mut Log, config: &ExperimentConfig, trial: u64, t: &MarkovOperator, x0: &Element) -> Result<()> {
    let start = extreme_points(t.space(), 1, sub_seed(config.seed, trial, role::AUX)).pop().expect("nonempty");
    let other = fixed_point_from(t, &start, FIXED_POINT_TOL, 64)?;
    log.le("ergodicity", "fixed_point_uniqueness", other.distance(x0), 2.0 * FIXED_POINT_TOL, 0.0, || {
        json!({"T": op_json(t), "start": start})
    });
    Ok(())
}

fn openness(log: &mut Log, config: &ExperimentConfig, trial: u64, t: &MarkovOperator, attested: Option<f64>) -> Result<()> {
    let space = t.space();
    let Some((n, _)) = find_mean_contractive_with(t, config.n_max, DEFAULT_THRESHOLD, attested)? else {
        return Ok(());
    };
    let r = openness_radius_with(t, n, attested)?;
    let mut worst = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, trial, role::OPENNESS));
    for k in 0..config.openness_samples {
        let target = super::random_markov(space, sub_seed(config.seed, trial, 1000 + k as u64), 0.0);
        let full = operator_norm(&(t.matrix() - target.matrix()), space, 0, 0).value;
        if full == 0.0 {
            continue;
        }
        let w = (rng.random::<f64>() * r / full).min(1.0);
        let h = t.blend(&target, w);
        worst = worst.min(1.0 - delta_of_matrix(h.cesaro(n).matrix(), space, 0, 0).value);
    }
    if worst.is_finite() {
        log.holds("ergodicity", "openness_radius", worst > 0.0, || json!({"T": op_json(t), "n": n, "radius": r}));
    }
    Ok(())
}

fn perturbation_checks(log: &mut Log, config: &ExperimentConfig, trial: u64, t: &MarkovOperator, dt_up: f64) -> Result<()> {
    const G: &str = "perturbation";
    let space = t.space();
    let attested = certified_input(space, dt_up);
    if attested.is_some_and(|b| b >= 1.0) || config.perturbation_magnitudes.is_empty() {
        return Ok(());
    }
    let mags = &config.perturbation_magnitudes;
    let magnitude = mags[trial as usize % mags.len()];
    let Ok(s) = perturb_toward(t, magnitude, sub_seed(config.seed, trial, role::PERTURBATION)) else {
        return Ok(());
    };
    let Some((n0, _)) = crate::ergodicity::find_contractive_power_with(t, config.n_max, DEFAULT_THRESHOLD, attested)? else {
        return Ok(());
    };
    let opts = PerturbationOptions {
        m: Some(n0),
        horizon: config.horizon,
        n_max: config.n_max,
        delta_upper: attested,
        start_budget: 4,
        seed: sub_seed(config.seed, trial, role::SAMPLING),
        ..Default::default()
    };
    let report = tightness_report(t, &s, &opts)?;
    let pair = || json!({"T": op_json(t), "S": op_json(&s), "m": n0});

    for (key, sound) in &report.soundness {
        let name: &'static str = match key.as_str() {
            "eq1" => "bound_eq1",
            "eq5" => "bound_eq5",
            "eq6" => "bound_eq6",
            "eq7" => "bound_eq7",
            "eq8" => "bound_eq8",
            "eq9" => "bound_eq9",
            "eq12" => "bound_eq12",
            "eq12_inf" => "bound_eq12_inf",
            "eq14" => "bound_eq14",
            "per62" => "bound_per62",
            _ => "bound_other",
        };
        if let Some(w) = sound.worst_slack {
            log.le(G, name, 0.0, w, 1e-8, pair);
        }
    }
    log.le(G, "eq15_power_gaps", report.eq15_lhs, report.m as f64 * report.norm_ts, 1e-9, pair);

    let (m, dtm) = (report.m, report.delta_tm);
    if dtm < 1.0 {
        let eq9 = bound_eq9(m, dtm, report.norm_tmsm)?;
        let k = if dtm == 0.0 { 1 } else { ((1e-13f64).ln() / dtm.ln()).ceil().max(1.0) as usize };
        let far = bound_floor_based(m, dtm, 2.0, report.max_power_gap, report.norm_tmsm, report.norm_ts, k * m)?;
        log.le(G, "eq12_limit_is_eq9", (far - eq9).abs(), 0.0, 1e-9 * (1.0 + eq9), pair);
        let eq8 = bound_delta_based(m, dtm, 0.0, report.max_power_gap, report.norm_tmsm, m)?;
        log.le(G, "eq8_above_eq9", eq9, eq8, 1e-12, pair);
    }

    if let Some(tr) = report.transfer.as_ref().filter(|tr| tr.verdict == Verdict::Applies) {
        let rho = tr.rho.expect("applies carries rho");
        let z0 = tr.z0.as_ref().expect("applies carries z0");
        let x0 = tr.x0.as_ref().expect("applies carries x0");
        if space.is_classical() {
            let cls = classify(&s, &ClassifyOptions { n_max: config.n_max, trace_len: 0, n_check: 0, ..Default::default() })?;
            log.holds(G, "transfer_implies_stable", cls.classification == Classification::UniformlyAsymptoticallyStable, pair);
        }
        let sm = s.power(m);
        let d_sm = delta_of_matrix(sm.matrix(), space, config.delta_budget, opts.seed).value;
        log.le(G, "transfer_contraction_factor", d_sm, rho, 1e-9, pair);
        let direct = fixed_point(&s, FIXED_POINT_TOL, 64)?;
        log.le(G, "transfer_fixed_points_agree", direct.distance(z0), 2.0 * FIXED_POINT_TOL, 0.0, pair);

        let x = x0 - &sm.apply(x0);
        let tol = 1e-10;
        let y = neumann_inverse_on_n(&s, m, &x, rho, tol)?;
        let resid = (&(&y - &sm.apply(&y)) - &x).base_norm();
        log.le(G, "neumann_residual", resid, tol * (1.0 + rho), 0.0, pair);
        let big_n = 1 + (trial % 64) as usize;
        let mut acc = Element::zeros(space);
        let mut term = x.clone();
        for _ in 0..big_n {
            acc = &acc + &term;
            term = sm.apply(&term);
        }
        let rhs = x0 - &s.power(m * big_n).apply(x0);
        log.le(G, "neumann_telescoping", acc.max_coord_diff(&rhs), 0.0, 1e-8, pair);
    }
    Ok(())
}
