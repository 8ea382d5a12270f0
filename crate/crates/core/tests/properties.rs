use dobrushin::ergodicity::geometric_envelope;
use dobrushin::io::{parse_operator, to_json};
use dobrushin::operators::{delta_of_matrix, mixture_with_fixed_point, operator_norm, validate_markov};
use dobrushin::perturbation::{bound_delta_based, bound_eq7, bound_eq9, bound_floor_based, bound_per62};
use dobrushin::seeds::sub_seed;
use dobrushin::spaces::{jordan_decompose, lemma32_decompose};
use dobrushin::{Element, MarkovOperator, SpaceDescriptor};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn stochastic(n: usize) -> impl Strategy<Value = MarkovOperator> {
    prop::collection::vec(0.0f64..1.0, n * n).prop_map(move |raw| {
        let mut m = DMatrix::from_vec(n, n, raw);
        for mut c in m.column_iter_mut() {
            let s: f64 = c.sum();
            if s == 0.0 {
                c.fill(1.0 / n as f64);
            } else {
                c /= s;
            }
        }
        validate_markov(m, SpaceDescriptor::classical(n).unwrap(), 0, 0).unwrap()
    })
}

fn pair() -> impl Strategy<Value = (MarkovOperator, MarkovOperator)> {
    (2usize..7).prop_flat_map(|n| (stochastic(n), stochastic(n)))
}

fn space() -> impl Strategy<Value = SpaceDescriptor> {
    prop_oneof![
        (1usize..7).prop_map(|n| SpaceDescriptor::classical(n).unwrap()),
        (1usize..4, 1.2f64..5.0).prop_map(|(d, p)| SpaceDescriptor::pcone(d, p).unwrap()),
        (1usize..4).prop_map(|d| SpaceDescriptor::quantum(d).unwrap()),
    ]
}

fn element() -> impl Strategy<Value = Element> {
    space().prop_flat_map(|s| {
        prop::collection::vec(-2.0f64..2.0, s.dim()).prop_map(move |c| Element::new(s, DVector::from_vec(c)).unwrap())
    })
}

fn delta(t: &MarkovOperator) -> f64 {
    delta_of_matrix(t.matrix(), t.space(), 0, 0).value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn base_norm_is_a_norm(x in element(), lambda in -3.0f64..3.0) {
        let n = x.base_norm();
        prop_assert!(n >= 0.0);
        prop_assert!((x.scaled(lambda).base_norm() - lambda.abs() * n).abs() <= 1e-9 * (1.0 + n));
        prop_assert!((&x + &x).base_norm() <= 2.0 * n + 1e-9);
        prop_assert!(n + 1e-9 >= x.functional().abs());
    }

    #[test]
    fn jordan_split_is_minimal(x in element()) {
        let (y, z) = jordan_decompose(&x);
        prop_assert!(y.in_cone(1e-9) && z.in_cone(1e-9));
        prop_assert!((&y - &z).max_coord_diff(&x) <= 1e-9);
        prop_assert!((y.functional() + z.functional() - x.base_norm()).abs() <= 1e-7 * (1.0 + x.base_norm()));
    }

    #[test]
    fn null_vectors_split_into_base_pairs(x in element()) {
        let b = x.space().barycenter();
        let null = &x - &b.scaled(x.functional() / b.functional());
        prop_assume!(null.base_norm() > 1e-9);
        let (u, v, s) = lemma32_decompose(&null).unwrap();
        prop_assert!((s - null.base_norm() / 2.0).abs() <= 1e-12 * (1.0 + s));
        prop_assert!((&null - &(&u - &v).scaled(s)).base_norm() <= 1e-8);
        prop_assert!(u.in_base(1e-9) && v.in_base(1e-9));
    }

    #[test]
    fn dobrushin_coefficient_properties((t, s) in pair()) {
        let (dt, ds) = (delta(&t), delta(&s));
        prop_assert!((0.0..=1.0 + 1e-12).contains(&dt));
        prop_assert!(delta(&t.compose(&s)) <= dt * ds + 1e-12);
        let diff = t.matrix() - s.matrix();
        let d_diff = delta_of_matrix(&diff, t.space(), 0, 0).value;
        prop_assert!((dt - ds).abs() <= d_diff + 1e-12);
        prop_assert!(d_diff <= operator_norm(&diff, t.space(), 0, 0).value + 1e-12);
    }

    #[test]
    fn mixtures_contract(t in (2usize..6).prop_flat_map(stochastic), eps in 0.01f64..1.99) {
        let x0 = dobrushin::ergodicity::fixed_point(&t.blend(&MarkovOperator::identity(t.space()), 0.0), 1e-12, 64);
        prop_assume!(x0.is_ok());
        let x0 = x0.unwrap();
        let mix = mixture_with_fixed_point(&t, &x0, eps).unwrap();
        prop_assert!(delta(&mix) <= 1.0 - eps / 2.0 + 1e-10);
        prop_assert!(operator_norm(&(t.matrix() - mix.matrix()), t.space(), 0, 0).value <= eps + 1e-12);
    }

    #[test]
    fn telescoping_identity((t, s) in pair(), n in 1usize..10) {
        let mut lhs = s.power(n).matrix() - t.power(n).matrix();
        for i in 0..n {
            lhs -= t.power(n - 1 - i).matrix() * (s.matrix() - t.matrix()) * s.power(i).matrix();
        }
        prop_assert!(lhs.amax() <= 1e-12);
    }

    #[test]
    fn envelope_dominates_twice_the_power_decay(n0 in 1usize..6, rho in 0.01f64..0.99, n in 0usize..200) {
        let env = geometric_envelope(n0, rho).unwrap();
        let decay = 2.0 * rho.powi((n / n0) as i32);
        prop_assert!(env.at(n) + 1e-12 >= decay.min(2.0));
        prop_assert!(env.at(env.n_tilde) <= 1.0 + 1e-12);
    }

    #[test]
    fn bound_ordering(m in 1usize..5, d in 0.0f64..0.99, dist in 0.0f64..2.0, gap in 0.0f64..1.0, nm in 0.0f64..0.5, n in 1usize..60) {
        let eq9 = bound_eq9(m, d, nm).unwrap();
        prop_assert!(bound_eq7(m, d, dist, nm).unwrap() >= eq9 - 1e-15);
        let eq12 = bound_floor_based(m, d, dist, gap, nm, 0.0, n).unwrap();
        let eq8 = bound_delta_based(m, d, dist, gap, nm, n).unwrap();
        prop_assert!(eq12 <= eq8 + 1e-12);
        if d + nm < 1.0 {
            prop_assert!(bound_per62(d, nm).unwrap() >= eq9 - 1e-15);
        }
    }

    #[test]
    fn operator_json_round_trips(t in (1usize..6).prop_flat_map(stochastic)) {
        let back = parse_operator(&to_json(&t).unwrap()).unwrap();
        prop_assert_eq!(back.matrix(), t.matrix());
    }

    #[test]
    fn sub_seeds_are_deterministic_and_spread(seed in any::<u64>(), i in 0u64..1000, role in 0u64..8) {
        prop_assert_eq!(sub_seed(seed, i, role), sub_seed(seed, i, role));
        prop_assert_ne!(sub_seed(seed, i, role), sub_seed(seed, i + 1, role));
        prop_assert_ne!(sub_seed(seed, i, role), sub_seed(seed, i, role + 1));
    }
}
