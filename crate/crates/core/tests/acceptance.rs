//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line; run
//! with `cargo test --test acceptance -- --nocapture --test-threads 1` to see
//! them in order.

use std::time::Instant;

use dobrushin::ergodicity::{
    classify, find_contractive_power, geometric_envelope, Classification, ClassifyOptions,
};
use dobrushin::harness::{
    density_experiment, quantile, random_markov, run_property_suite, tightness_experiment, ExperimentConfig,
};
use dobrushin::operators::{delta_of_matrix, dobrushin_delta, operator_norm, rank_one, validate_markov};
use dobrushin::perturbation::{tightness_report, PerturbationOptions, Verdict};
use dobrushin::spaces::hermitian::{CMatrix, C64};
use dobrushin::spaces::lemma32_decompose;
use dobrushin::{Element, MarkovOperator, SpaceDescriptor};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(label: &str, pass: bool, detail: String) {
    println!("{label}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn classical(rows: &[&[f64]]) -> MarkovOperator {
    let n = rows.len();
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    validate_markov(m, SpaceDescriptor::classical(n).unwrap(), 0, 0).unwrap()
}

#[test]
fn worked_two_state_pair() {
    let start = Instant::now();
    let t = classical(&[&[0.9, 0.2], &[0.1, 0.8]]);
    let s = classical(&[&[0.88, 0.215], &[0.12, 0.785]]);
    let report = tightness_report(&t, &s, &PerturbationOptions::default().with_m(1)).unwrap();
    let delta = dobrushin_delta(&t, 0, 0).unwrap().value;
    let x0 = report.x0.clone().unwrap();
    let z0 = report.z0.clone().unwrap();
    let eq9 = report.bounds.eq9.unwrap();
    let per62 = report.bounds.per62.unwrap();
    let actual = report.actual_stationary_distance.unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let checks = [
        (delta - 0.7).abs() <= 1e-12,
        (x0.coords()[0] - 2.0 / 3.0).abs() <= 1e-10 && (x0.coords()[1] - 1.0 / 3.0).abs() <= 1e-10,
        (z0.coords()[0] - 43.0 / 67.0).abs() <= 1e-10 && (z0.coords()[1] - 24.0 / 67.0).abs() <= 1e-10,
        (report.norm_ts - 0.04).abs() <= 1e-12,
        (eq9 - 0.13333).abs() <= 1e-5,
        (per62 - 0.15385).abs() <= 1e-5,
        (actual - 0.049751).abs() <= 1e-5,
        actual <= eq9 && actual <= per62,
        elapsed < 1.0,
    ];
    let pass = checks.iter().all(|c| *c);
    verdict(
        "criterion 1 worked 2x2 pair",
        pass,
        format!("delta={delta} eq9={eq9:.6} per62={per62:.6} actual={actual:.6} time={elapsed:.3}s"),
    );
    assert!(pass, "{checks:?}");
}

#[test]
fn dobrushin_properties_suite() {
    let start = Instant::now();
    let mut failures = 0;
    let mut worst: f64 = f64::INFINITY;
    for n in [2, 4, 8, 16] {
        let config = ExperimentConfig::new(SpaceDescriptor::classical(n).unwrap(), 1000, 42);
        let result = run_property_suite(&config, &["operators"]).unwrap();
        for r in result.records.iter().filter(|r| r.name.starts_with("dob_")) {
            assert!(r.trials > 0);
            failures += r.failures;
            if let Some(w) = r.worst_slack {
                worst = worst.min(w);
            }
            if r.failures > 0 {
                println!("  n={n} {}: {} failures, witnesses {:?}", r.name, r.failures, r.witnesses);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = failures == 0 && worst >= -1e-8 && elapsed < 120.0;
    verdict("criterion 2 dobrushin properties", pass, format!("failures={failures} worst_slack={worst:e} time={elapsed:.1}s"));
    assert!(pass);
}

#[test]
fn geometric_envelope_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut stable, mut violations, mut worst) = (0, 0, f64::INFINITY);
    let mut draws = 0;
    while stable < 500 {
        draws += 1;
        let n = rng.random_range(2..=8);
        let space = SpaceDescriptor::classical(n).unwrap();
        let t = random_markov(space, rng.random(), rng.random_range(0.0..0.5));
        let report = classify(&t, &ClassifyOptions { trace_len: 0, n_check: 0, ..Default::default() }).unwrap();
        if report.classification != Classification::UniformlyAsymptoticallyStable {
            continue;
        }
        stable += 1;
        let env = geometric_envelope(report.n0.unwrap(), report.rho.unwrap()).unwrap();
        let limit = rank_one(report.fixed_point.as_ref().unwrap()).unwrap();
        let mut power = t.matrix().clone();
        for k in 1..=256 {
            if k >= env.n_tilde {
                let gap = operator_norm(&(&power - limit.matrix()), space, 0, 0).value;
                let slack = env.at(k) - gap;
                worst = worst.min(slack);
                if slack < -1e-8 {
                    violations += 1;
                }
            }
            power = t.matrix() * power;
        }
    }
    let pass = violations == 0;
    verdict("criterion 3 geometric envelope", pass, format!("stable={stable} draws={draws} violations={violations} min_slack={worst:e}"));
    assert!(pass);
}

#[test]
fn swap_separates_mean_ergodicity() {
    let swap = classical(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let report = classify(&swap, &ClassifyOptions::default()).unwrap();
    let id = classify(&MarkovOperator::identity(SpaceDescriptor::classical(2).unwrap()), &ClassifyOptions::default()).unwrap();
    let checks = [
        report.classification == Classification::UniformlyMeanErgodicOnly,
        report.mean_n0 == Some(2),
        report.mean_rho.is_some_and(|d| d.abs() <= 1e-12),
        find_contractive_power(&swap, 64, 1.0 - 1e-6).is_none(),
        id.classification == Classification::Undetermined,
    ];
    let pass = checks.iter().all(|c| *c);
    verdict(
        "criterion 4 mean ergodic separation",
        pass,
        format!("swap={:?} mean_n0={:?} mean_rho={:?} identity={:?}", report.classification, report.mean_n0, report.mean_rho, id.classification),
    );
    assert!(pass, "{checks:?}");
}

fn sweep() -> Vec<dobrushin::harness::TightnessTable> {
    (2..=8)
        .map(|n| {
            let config = ExperimentConfig {
                perturbation_magnitudes: vec![0.01, 0.05, 0.1, 0.2],
                ..ExperimentConfig::new(SpaceDescriptor::classical(n).unwrap(), 200, 7 + n as u64)
            };
            tightness_experiment(&config).unwrap()
        })
        .collect()
}

#[test]
fn perturbation_soundness_sweep_and_transfer() {
    let start = Instant::now();
    let tables = sweep();
    let elapsed = start.elapsed().as_secs_f64();
    let rows: Vec<_> = tables.iter().flat_map(|t| t.rows.iter()).collect();
    let evaluated = rows.iter().filter(|r| r.skipped.is_none()).count();
    let violations: usize = rows.iter().map(|r| r.violations).sum();
    let max_ratio = rows
        .iter()
        .flat_map(|r| [r.ratio_eq6, r.ratio_eq9, r.ratio_eq12_inf, r.ratio_per62])
        .flatten()
        .fold(0.0, f64::max);
    let eq6: Vec<f64> = rows.iter().filter_map(|r| r.ratio_eq6).collect();
    let eq12: Vec<f64> = rows.iter().filter_map(|r| r.ratio_eq12_inf).collect();
    let (med6, med12) = (quantile(&eq6, 0.5).unwrap(), quantile(&eq12, 0.5).unwrap());
    let sound = violations == 0 && max_ratio <= 1.0 + 1e-8;
    // a sharper bound has the larger actual/bound ratio
    let sharper = med12 >= med6;
    let pass = sound && sharper && elapsed < 300.0;
    verdict(
        "criterion 5 soundness sweep",
        pass,
        format!(
            "rows={} evaluated={evaluated} violations={violations} max_ratio={max_ratio:.6} median_ratio_eq12_inf={med12:.4} median_ratio_eq6={med6:.4} eq12_inf_ratio_at_most_eq6_ratio={} time={elapsed:.1}s",
            rows.len(),
            med12 <= med6
        ),
    );

    let applies: Vec<_> = rows.iter().filter(|r| r.verdict.as_deref() == Some(&format!("{:?}", Verdict::Applies))).collect();
    let bad_uas = applies.iter().filter(|r| r.s_uas != Some(true)).count();
    let bad_per62 = applies.iter().filter(|r| !(r.actual.unwrap() <= r.bound_per62.unwrap() + 1e-8)).count();
    let worst_resid = applies.iter().filter_map(|r| r.neumann_residual).fold(0.0, f64::max);
    let transfer_pass = !applies.is_empty() && bad_uas == 0 && bad_per62 == 0 && worst_resid <= 1e-8;
    verdict(
        "criterion 6 stability transfer",
        transfer_pass,
        format!("applies={} not_uas={bad_uas} per62_violations={bad_per62} max_neumann_residual={worst_resid:e}", applies.len()),
    );
    assert!(pass && transfer_pass);
}

#[test]
fn mixture_density_and_openness() {
    let epsilons = [0.1, 0.5, 1.0, 1.9];
    let (mut rows, mut failures, mut openness_checked) = (0, 0, 0);
    for n in [2, 3, 5, 8] {
        let config = ExperimentConfig::new(SpaceDescriptor::classical(n).unwrap(), 10, 100 + n as u64);
        let table = density_experiment(&config, &epsilons).unwrap();
        rows += table.rows.len();
        failures += table.failures;
        openness_checked += table.rows.iter().map(|r| r.openness_checked).sum::<usize>();
        for r in table.rows.iter().filter(|r| !r.delta_ok || !r.distance_ok || r.openness_failures > 0) {
            println!("  failing row {r:?}");
        }
    }
    let identity = density_experiment(&ExperimentConfig::new(SpaceDescriptor::classical(3).unwrap(), 1, 0), &[0.5]).unwrap();
    let id_row = identity.rows.iter().find(|r| r.family == "identity").unwrap();
    let pass = failures == 0 && (id_row.delta - 0.75).abs() <= 1e-12 && openness_checked > 0;
    verdict(
        "criterion 7 density and openness",
        pass,
        format!("rows={rows} failures={failures} openness_samples={openness_checked} identity_eps_0.5_delta={}", id_row.delta),
    );
    assert!(pass);
}

/// Gauge of `conv(K ∪ −K)` on the p-cone, computed from the dual side:
/// `sup g·x` over functionals with `|g·y| ≤ 1` on the base, using
/// `max_{y ∈ K} |g·y| = |g_0| + ‖ĝ‖_q`. Maximized by a direction grid followed
/// by compass search.
fn pcone_dual_oracle(x: &[f64], p: f64, rng: &mut ChaCha8Rng) -> f64 {
    let q = p / (p - 1.0);
    let value = |g: &[f64]| {
        let h = g[0].abs() + g[1..].iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q);
        if h == 0.0 { f64::NEG_INFINITY } else { g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / h }
    };
    let dim = x.len();
    let mut starts: Vec<Vec<f64>> = (0..dim)
        .flat_map(|i| [1.0, -1.0].map(|s| (0..dim).map(|j| if i == j { s } else { 0.0 }).collect()))
        .collect();
    starts.push(x.to_vec());
    starts.extend((0..60).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()));
    let mut best = f64::NEG_INFINITY;
    for mut g in starts {
        let mut f = value(&g);
        let mut step = 0.5;
        let mut sweeps = 0;
        while step > 1e-12 && sweeps < 20_000 {
            sweeps += 1;
            let mut improved = false;
            for i in 0..dim {
                for s in [step, -step] {
                    let mut cand = g.clone();
                    cand[i] += s;
                    let fc = value(&cand);
                    if fc > f + 1e-15 * f.abs() {
                        g = cand;
                        f = fc;
                        improved = true;
                    }
                }
            }
            // the ratio is scale-free; keep g on a fixed scale so steps stay meaningful
            let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale > 0.0 {
                g.iter_mut().for_each(|v| *v /= scale);
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.max(f);
    }
    best
}

/// Trace norm from the eigenvalues of the real symmetric embedding
/// `[[Re, −Im], [Im, Re]]`, which lists every eigenvalue twice.
fn trace_norm_oracle(h: &CMatrix) -> f64 {
    let d = h.nrows();
    let big = DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let (a, b) = (i % d, j % d);
        let z = h[(a, b)];
        match (i < d, j < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    big.symmetric_eigen().eigenvalues.iter().map(|v| v.abs()).sum::<f64>() / 2.0
}

fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&g + g.adjoint()) * C64::new(0.5, 0.0)
}

#[test]
fn space_kernels_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_d1: f64 = 0.0;
    for _ in 0..1000 {
        let p = rng.random_range(1.1..6.0);
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let e = Element::from_slice(SpaceDescriptor::pcone(1, p).unwrap(), &x).unwrap();
        worst_d1 = worst_d1.max((e.base_norm() - x[0].abs().max(x[1].abs())).abs());
    }
    let mut worst_grid: f64 = 0.0;
    for d in [2, 3] {
        for k in 0..50 {
            let p = [1.5, 2.0, 3.0, 4.5][k % 4];
            let x: Vec<f64> = (0..=d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let e = Element::from_slice(SpaceDescriptor::pcone(d, p).unwrap(), &x).unwrap();
            worst_grid = worst_grid.max((e.base_norm() - pcone_dual_oracle(&x, p, &mut rng)).abs());
        }
    }
    let mut worst_q: f64 = 0.0;
    for d in [2, 3, 4] {
        let space = SpaceDescriptor::quantum(d).unwrap();
        for _ in 0..100 {
            let h = random_hermitian(d, &mut rng);
            let e = Element::from_hermitian(space, &h).unwrap();
            worst_q = worst_q.max((e.base_norm() - trace_norm_oracle(&h)).abs());
        }
    }
    let mut worst_lemma: f64 = 0.0;
    let spaces = [
        SpaceDescriptor::classical(5).unwrap(),
        SpaceDescriptor::pcone(1, 2.5).unwrap(),
        SpaceDescriptor::pcone(3, 1.7).unwrap(),
        SpaceDescriptor::quantum(2).unwrap(),
        SpaceDescriptor::quantum(3).unwrap(),
    ];
    for space in spaces {
        let b = space.barycenter();
        for _ in 0..200 {
            let v = Element::new(space, DVector::from_fn(space.dim(), |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let x = &v - &b.scaled(v.functional() / b.functional());
            let (u, w, s) = lemma32_decompose(&x).unwrap();
            worst_lemma = worst_lemma.max((&x - &(&u - &w).scaled(s)).base_norm());
        }
    }
    let pass = worst_d1 <= 1e-8 && worst_grid <= 1e-5 && worst_q <= 1e-9 && worst_lemma <= 1e-8;
    verdict(
        "criterion 8 space kernels",
        pass,
        format!("pcone_d1={worst_d1:e} pcone_d23={worst_grid:e} quantum={worst_q:e} lemma={worst_lemma:e}"),
    );
    assert!(pass);
}

fn amplitude_damping(gamma: f64) -> MarkovOperator {
    let z = C64::new(0.0, 0.0);
    let k1 = CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), z, z, C64::new((1.0 - gamma).sqrt(), 0.0)]);
    let k2 = CMatrix::from_row_slice(2, 2, &[z, C64::new(gamma.sqrt(), 0.0), z, z]);
    MarkovOperator::from_kraus(SpaceDescriptor::quantum(2).unwrap(), &[k1, k2]).unwrap()
}

#[test]
fn amplitude_damping_end_to_end() {
    let gamma = 0.5;
    let t = amplitude_damping(gamma);
    // Bloch-ball action is diag(√(1−γ), √(1−γ), 1−γ) plus a shift; trace distance is Bloch distance
    let attested = (1.0 - gamma).sqrt();
    let report = classify(&t, &ClassifyOptions::default().with_delta_upper(Some(attested))).unwrap();
    let ground = Element::quantum_diag(&[1.0, 0.0]).unwrap();
    let x0 = report.fixed_point.clone().unwrap();
    let residual = t.apply(&x0).distance(&x0);
    let sampled = delta_of_matrix(t.matrix(), t.space(), 64, 3).value;

    let target = random_markov(t.space(), 17, 0.0);
    let s = t.blend(&target, 0.05);
    let opts = PerturbationOptions { delta_upper: Some(attested), horizon: 24, ..Default::default() };
    let per = tightness_report(&t, &s, &opts).unwrap();
    let rows = per.per_n_rows();
    let eq12_violations = rows.iter().filter(|r| !(r.actual <= r.eq12.unwrap() + 1e-8)).count();
    let checks = [
        report.classification == Classification::UniformlyAsymptoticallyStable,
        x0.distance(&ground) <= 1e-8,
        residual <= 1e-8,
        sampled <= attested + 1e-12,
        per.bounds.eq12.is_some() && eq12_violations == 0,
    ];
    let pass = checks.iter().all(|c| *c);
    verdict(
        "criterion 9 amplitude damping",
        pass,
        format!(
            "class={:?} dist_to_ground={:e} residual={residual:e} sampled_delta={sampled:.6} attested={attested:.6} eq12_violations={eq12_violations}/{}",
            report.classification,
            x0.distance(&ground),
            rows.len()
        ),
    );
    assert!(pass, "{checks:?}");
}
