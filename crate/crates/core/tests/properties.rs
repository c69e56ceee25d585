use hadsgd::cli::config::{ExperimentConfig, KNOWN_KEYS};
use hadsgd::gme::{
    center_columns, gme_objective, gram, project_feasible, sketch, solve_gme, GmeSolverParams, SketchConfig,
};
use hadsgd::linalg;
use hadsgd::mixing::{compose, consensus_factor, metropolis_hastings, validate, validate_doubly_stochastic, MixingMatrix};
use hadsgd::objectives::{make_random_quadratics, relative_zeta_sq_at, zeta_sq_at};
use hadsgd::simulator::{check_update_identity, simulate, Algorithm, RunConfig, Strategy as MixStrategy};
use hadsgd::topology::{build_random_connected, Topology};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn topology() -> impl Strategy<Value = Topology> {
    (3usize..9, 0.2f64..1.0, any::<u64>()).prop_map(|(n, keep, seed)| build_random_connected(n, keep, seed).unwrap())
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn topology_and_matrix() -> impl Strategy<Value = (Topology, DMatrix<f64>)> {
    topology().prop_flat_map(|t| {
        let n = t.n();
        (Just(t), matrix(n, n))
    })
}

fn topology_and_gradients() -> impl Strategy<Value = (Topology, DMatrix<f64>)> {
    (topology(), 1usize..6).prop_flat_map(|(t, d)| {
        let n = t.n();
        (Just(t), matrix(d, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn config_text_round_trips(
        picks in prop::collection::btree_set(0..KNOWN_KEYS.len(), 0..10),
        values in prop::collection::vec("[a-z0-9_./-]{1,8}( [a-z0-9]{1,4})?", 10),
        pad in prop::collection::vec("[ \t]{0,3}", 10),
    ) {
        let text: String = picks
            .iter()
            .zip(&values)
            .zip(&pad)
            .map(|((&k, v), p)| format!("{p}{}{p}={p}{v}{p}# note\n\n", KNOWN_KEYS[k]))
            .collect();
        let parsed = ExperimentConfig::parse(&text).unwrap();
        prop_assert_eq!(parsed.entries().len(), picks.len());
        let again = ExperimentConfig::parse(&parsed.to_text()).unwrap();
        prop_assert_eq!(again, parsed);
    }

    #[test]
    fn edge_list_round_trips(t in topology()) {
        prop_assert_eq!(Topology::parse_edge_list(&t.to_edge_list()).unwrap(), t);
    }

    #[test]
    fn metropolis_hastings_is_feasible_symmetric_and_contracting(t in topology()) {
        let w = metropolis_hastings(&t);
        prop_assert!(validate(w.matrix(), &t).is_ok());
        prop_assert!(w.is_symmetric());
        let p = consensus_factor(&w).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0 + 1e-12, "p = {}", p);
    }

    #[test]
    fn mixing_text_round_trips_exactly((t, m) in topology_and_matrix()) {
        let w = project_feasible(&m, &t, &GmeSolverParams::default()).unwrap();
        let back = MixingMatrix::parse_text(&w.to_text()).unwrap();
        prop_assert_eq!(back.matrix(), w.matrix());
    }

    #[test]
    fn projection_is_feasible_and_idempotent((t, m) in topology_and_matrix()) {
        let params = GmeSolverParams::default();
        let w = project_feasible(&m, &t, &params).unwrap();
        prop_assert!(validate(w.matrix(), &t).is_ok());
        let again = project_feasible(w.matrix(), &t, &params).unwrap();
        prop_assert!((again.matrix() - w.matrix()).amax() < 1e-8);
        prop_assert!(linalg::spectral_norm(w.matrix()).unwrap() <= 1.0 + 1e-10);
    }

    #[test]
    fn composition_stays_doubly_stochastic_and_contracting(
        (t, a) in topology_and_matrix(),
        b_seed in any::<u64>(),
    ) {
        let params = GmeSolverParams::default();
        let wa = project_feasible(&a, &t, &params).unwrap();
        let n = t.n();
        let b = DMatrix::from_fn(n, n, |i, j| ((i * 31 + j * 17) as u64 ^ b_seed) as f64 % 7.0);
        let wb = project_feasible(&b, &t, &params).unwrap();
        let c = compose(&wa, &wb).unwrap();
        prop_assert!(validate_doubly_stochastic(c.matrix()).is_ok());
        prop_assert!(linalg::spectral_norm(c.matrix()).unwrap() <= 1.0 + 1e-10);
    }

    #[test]
    fn objective_equals_mixed_gradient_norm((t, g) in topology_and_gradients()) {
        let gc = center_columns(&g);
        let w = metropolis_hastings(&t);
        let direct = (&gc * w.matrix()).norm_squared();
        let via_gram = gme_objective(&gram(&gc), w.matrix()).unwrap();
        prop_assert!((direct - via_gram).abs() <= 1e-10 * (1.0 + direct));
    }

    #[test]
    fn solver_never_worse_than_its_start((t, g) in topology_and_gradients()) {
        let gamma = gram(&center_columns(&g));
        let mh = metropolis_hastings(&t);
        let w = solve_gme(&gamma, &t, &GmeSolverParams::default(), &mh).unwrap();
        prop_assert!(validate(w.matrix(), &t).is_ok());
        let ours = gme_objective(&gamma, w.matrix()).unwrap();
        let start = gme_objective(&gamma, mh.matrix()).unwrap();
        prop_assert!(ours <= start + 1e-12 * (1.0 + start), "{} > {}", ours, start);
    }

    #[test]
    fn sketch_is_linear_for_a_shared_seed(
        g1 in matrix(5, 4),
        g2 in matrix(5, 4),
        k in 1usize..12,
        seed in any::<u64>(),
    ) {
        let cfg = SketchConfig::new(k, seed).unwrap();
        let lhs = sketch(&(&g1 + &g2), &cfg);
        let rhs = sketch(&g1, &cfg) + sketch(&g2, &cfg);
        prop_assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn relative_heterogeneity_bounded_by_consensus_factor(
        (t, m) in topology_and_matrix(),
        d in 1usize..5,
        seed in any::<u64>(),
        x in prop::collection::vec(-3.0f64..3.0, 5),
    ) {
        let p = make_random_quadratics(t.n(), d, d, seed).unwrap();
        let x = DVector::from_column_slice(&x[..d]);
        let w = project_feasible(&m, &t, &GmeSolverParams::default()).unwrap();
        let lhs = relative_zeta_sq_at(&p, &x, w.matrix()).unwrap();
        let rhs = (1.0 - consensus_factor(&w).unwrap()) * zeta_sq_at(&p, &x).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs), "{} > {}", lhs, rhs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn update_identity_holds_on_random_runs(
        t in topology(),
        seed in any::<u64>(),
        momentum in prop::bool::ANY,
        alternate in prop::bool::ANY,
    ) {
        let p = make_random_quadratics(t.n(), 3, 3, seed).unwrap().with_noise_std(0.2).unwrap();
        let alg = if momentum { Algorithm::HaDsgdMomentum } else { Algorithm::HaDsgd };
        let mut cfg = RunConfig::new(alg, 40, 0.1 / p.smoothness());
        cfg.period = 7;
        cfg.alternate = alternate;
        cfg.noise_seed = seed;
        cfg.sketch_seed = seed.wrapping_add(1);
        let trace = simulate(&p, &t, MixStrategy::HeterogeneityAware, &cfg, true).unwrap().trace.unwrap();
        let report = check_update_identity(&trace);
        prop_assert!(report.holds(1e-10), "{:?}", report);
    }
}

#[test]
fn sketched_inner_products_concentrate() {
    let (d, n, k, eps) = (1000, 8, 200, 0.3);
    let mut state = 0x1234_5678_u64;
    let g = DMatrix::from_fn(d, n, |_, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    });
    let exact = g.transpose() * &g;
    let scale = exact.diagonal().max();
    let successes = (0..20)
        .filter(|&seed| {
            let s = sketch(&g, &SketchConfig::new(k, seed).unwrap());
            let approx = s.transpose() * &s / k as f64;
            (approx - &exact).amax() <= eps * scale
        })
        .count();
    assert!(successes >= 19, "{successes}/20");
}
