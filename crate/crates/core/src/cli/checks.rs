//! Numeric property checks over randomly generated instances.
//!
//! Each check is parameterized by instance counts and tolerances and returns a
//! [`CheckOutcome`] instead of panicking, so the same code drives the `check`
//! subcommand and the acceptance tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::Result;
use crate::gme::{
    ce_gme_from, center_columns, gme_objective, gram, project_feasible, sketch, solve_gme, GmeSolverParams,
    SketchConfig,
};
use crate::linalg;
use crate::mixing::{
    compose, consensus_factor, deviation_operator_norm, metropolis_hastings, optimal_spectral_gap_weights,
    uniform_clique_averaging, MixingMatrix, SPECTRAL_GAP_ITERS, SPECTRAL_GAP_STEP0,
};
use crate::objectives::{
    full_gradients, make_random_quadratics, make_replicated, make_two_class_ring_arranged, relative_zeta_sq_at,
    zeta_sq_at, Arrangement, Problem,
};
use crate::oracle;
use crate::simulator::{
    check_update_identity, run_dsgd, run_hadsgd, simulate, Algorithm, GmeSource, RunConfig, Strategy,
};
use crate::topology::{
    build_complete, build_from_cliques, build_random_connected, build_ring, CliquePartition, Topology,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name,
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }

    pub fn line(&self) -> String {
        format!("[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut *rng))
}

fn random_topology(rng: &mut ChaCha8Rng, n_lo: usize, n_hi: usize) -> Result<Topology> {
    let n = rng.random_range(n_lo..=n_hi);
    let keep = rng.random_range(0.2..0.9);
    build_random_connected(n, keep, rng.random())
}

/// Projection of a random nonnegative matrix: generally asymmetric.
fn random_feasible(rng: &mut ChaCha8Rng, t: &Topology) -> Result<MixingMatrix> {
    let n = t.n();
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..1.5));
    project_feasible(&m, t, &GmeSolverParams::default())
}

fn random_gram_solution(rng: &mut ChaCha8Rng, t: &Topology) -> Result<(DMatrix<f64>, MixingMatrix)> {
    let d = rng.random_range(1..=6);
    let gc = center_columns(&gaussian_matrix(rng, d, t.n()));
    let w = solve_gme(&gram(&gc), t, &GmeSolverParams::default(), &metropolis_hastings(t))?;
    Ok((gc, w))
}

fn broadcast(x: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), n, |r, _| x[r])
}

/// `‖W‖₂ ≤ 1 + tol` for projected random matrices, optimized (asymmetric) matrices,
/// Metropolis-Hastings and products thereof. Norms by power iteration and by SVD.
pub fn spectral_norm_bound(instances: usize, tol: f64, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let mut r = rng(seed);
        let mut worst: f64 = 0.0;
        let mut asymmetric = 0;
        for k in 0..instances {
            let t = random_topology(&mut r, 3, 10)?;
            let w = match k % 4 {
                0 | 1 => random_feasible(&mut r, &t)?,
                2 => random_gram_solution(&mut r, &t)?.1,
                _ => compose(&random_feasible(&mut r, &t)?, &metropolis_hastings(&t))?,
            };
            asymmetric += usize::from(!w.is_symmetric());
            let power = linalg::spectral_norm(w.matrix())?;
            let svd = w.matrix().singular_values().max();
            worst = worst.max(power).max(svd);
        }
        Ok((
            worst <= 1.0 + tol,
            format!("max ‖W‖₂ = {worst:.15} over {instances} matrices ({asymmetric} asymmetric)"),
        ))
    };
    CheckOutcome::from_result("spectral_norm_bound", run())
}

/// `(1/n)‖∂f(x𝟙ᵀ)W − ∂f̄‖² ≤ (1 − p)·ζ²(x) + slack` with `p = 1 − ‖W − J‖₂²`.
pub fn relative_heterogeneity_bound(instances: usize, slack: f64, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let mut r = rng(seed);
        let mut worst = f64::NEG_INFINITY;
        for k in 0..instances {
            let t = random_topology(&mut r, 3, 10)?;
            let d = r.random_range(2..=6);
            let p = make_random_quadratics(t.n(), d, d, r.random())?;
            let x = DVector::from_fn(d, |_, _| r.random_range(-3.0..3.0));
            let w = match k % 3 {
                0 => metropolis_hastings(&t),
                1 => random_feasible(&mut r, &t)?,
                _ => random_gram_solution(&mut r, &t)?.1,
            };
            let lhs = relative_zeta_sq_at(&p, &x, w.matrix())?;
            let rhs = (1.0 - consensus_factor(&w)?) * zeta_sq_at(&p, &x)?;
            worst = worst.max(lhs - rhs);
        }
        Ok((
            worst <= slack,
            format!("max(ζ′² − (1−p)ζ²) = {worst:.3e} over {instances} triples"),
        ))
    };
    CheckOutcome::from_result("relative_heterogeneity_bound", run())
}

/// Period-3 replicated data on a ring with uniform 1/3 weights: zero relative
/// heterogeneity everywhere, nonzero heterogeneity at the optimum.
pub fn periodic_ring_zero_error(points: usize, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let p = make_replicated(6, 10, 10, 3, seed)?;
        let t = build_ring(6)?;
        let w = metropolis_hastings(&t);
        let mut r = rng(seed ^ 0x5eed);
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            let x = DVector::from_fn(p.d(), |_, _| r.random_range(-3.0..3.0));
            worst = worst.max(relative_zeta_sq_at(&p, &x, w.matrix())?);
        }
        let grad_norm = p.global_gradient(p.x_star()).norm();
        let zeta = zeta_sq_at(&p, p.x_star())?;
        let passed = worst <= 1e-9 && zeta >= 1e-3 && grad_norm <= 1e-8;
        Ok((
            passed,
            format!("max ζ′² = {worst:.3e} at {points} points; ζ²(x*) = {zeta:.3e}, ‖∇f(x*)‖ = {grad_norm:.1e}"),
        ))
    };
    CheckOutcome::from_result("periodic_ring_zero_error", run())
}

/// Uniform averaging inside class-balanced cliques removes the mixing error.
pub fn clique_averaging_zero_error(points: usize, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let classes = 3;
        let cliques = 4;
        let n = classes * cliques;
        let p = make_replicated(n, 5, 5, classes, seed)?;
        let partition = CliquePartition::new(
            (0..cliques)
                .map(|c| (0..classes).map(|k| c * classes + k).collect())
                .collect(),
        )?;
        let inter: Vec<(usize, usize)> = (0..cliques - 1)
            .map(|c| (c * classes + classes - 1, (c + 1) * classes))
            .collect();
        let t = build_from_cliques(&partition, &inter)?;
        let w = uniform_clique_averaging(&partition, &t)?;
        let mut r = rng(seed ^ 0xc119e);
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            let x = DVector::from_fn(p.d(), |_, _| r.random_range(-3.0..3.0));
            worst = worst.max(relative_zeta_sq_at(&p, &x, w.matrix())?);
        }
        let zeta = zeta_sq_at(&p, p.x_star())?;
        Ok((
            worst <= 1e-9 && zeta > 1e-3,
            format!("max ζ′² = {worst:.3e} over {points} points ({cliques} cliques of {classes}); ζ²(x*) = {zeta:.3e}"),
        ))
    };
    CheckOutcome::from_result("clique_averaging_zero_error", run())
}

/// Composing a heterogeneity-reducing matrix with a well-mixing one keeps both
/// properties: `‖W_ζW_p − J‖₂ ≤ ‖W_p − J‖₂` and `‖G_cW_ζW_p‖_F ≤ ‖G_cW_ζ‖_F`.
pub fn composition_bounds(instances: usize, slack: f64, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let mut r = rng(seed);
        let mut worst_dev = f64::NEG_INFINITY;
        let mut worst_err = f64::NEG_INFINITY;
        for k in 0..instances {
            let t = random_topology(&mut r, 3, 8)?;
            let (gc, w_zeta) = random_gram_solution(&mut r, &t)?;
            let w_p = if k % 10 == 0 {
                optimal_spectral_gap_weights(&t, SPECTRAL_GAP_ITERS, SPECTRAL_GAP_STEP0)?
            } else if k % 2 == 0 {
                metropolis_hastings(&t)
            } else {
                random_feasible(&mut r, &t)?
            };
            let product = compose(&w_zeta, &w_p)?;
            worst_dev = worst_dev.max(deviation_operator_norm(&product)? - deviation_operator_norm(&w_p)?);
            let lhs = (&gc * product.matrix()).norm();
            let rhs = (&gc * w_zeta.matrix()).norm();
            worst_err = worst_err.max(lhs - rhs);
        }
        Ok((
            worst_dev <= slack && worst_err <= slack,
            format!("max deviation gain {worst_dev:.3e}, max mixing-error gain {worst_err:.3e} over {instances} instances"),
        ))
    };
    CheckOutcome::from_result("composition_bounds", run())
}

/// Projected-gradient QP solutions on 3-node graphs against exact active-set enumeration.
pub fn qp_matches_brute_force(instances: usize, tol: f64, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let mut r = rng(seed);
        let params = GmeSolverParams::default();
        let mut worst: f64 = 0.0;
        for k in 0..instances {
            let t = if k % 2 == 0 { build_ring(3)? } else { build_complete(3)? };
            let d = r.random_range(1..=4);
            let gamma = gram(&center_columns(&gaussian_matrix(&mut r, d, 3)));
            let w = solve_gme(&gamma, &t, &params, &metropolis_hastings(&t))?;
            let ours = gme_objective(&gamma, w.matrix())?;
            let (exact, _) = oracle::exact_gme_minimum(gamma.matrix(), &t)?;
            let grid = oracle::grid_gme_minimum_n3(gamma.matrix(), 50);
            if grid < exact - 1e-9 {
                return Ok((false, format!("oracle inconsistency: grid {grid} below enumeration {exact}")));
            }
            worst = worst.max((ours - exact).abs());
        }
        Ok((worst <= tol, format!("max |solver − oracle| = {worst:.3e} over {instances} instances")))
    };
    CheckOutcome::from_result("qp_matches_brute_force", run())
}

fn full_gradient_trajectory(
    seed: u64,
    period: usize,
    steps: usize,
) -> Result<(Problem, crate::simulator::Trace)> {
    let mut r = rng(seed);
    let t = random_topology(&mut r, 5, 10)?;
    let d = r.random_range(3..=6);
    let p = make_random_quadratics(t.n(), d, d, r.random())?;
    let mut cfg = RunConfig::new(Algorithm::HaDsgd, steps, 0.2 / p.smoothness());
    cfg.period = period;
    cfg.alternate = false;
    cfg.gme_source = GmeSource::MeanExact;
    // both inequalities hold for any feasible matrix, so a loose solve suffices
    cfg.solver.max_iters = 100;
    cfg.solver.tol = 1e-6;
    let out = simulate(&p, &t, Strategy::HeterogeneityAware, &cfg, true)?;
    Ok((p, out.trace.expect("trace requested")))
}

fn mixing_error(p: &Problem, x: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<f64> {
    let g = full_gradients(p, x)?;
    Ok((&g * w - linalg::mean_matrix(&g)).norm_squared())
}

fn trajectory_steps(period: usize) -> usize {
    (3 * period).max(10)
}

/// Full-gradient heterogeneity-aware trajectories, `trajectories` per period,
/// with the exact mixing-error matrix refreshed every `H` steps.
fn trajectories_for(
    trajectories: usize,
    periods: &[usize],
    seed: u64,
) -> Result<Vec<(usize, Problem, crate::simulator::Trace)>> {
    let jobs: Vec<(usize, u64)> = periods
        .iter()
        .flat_map(|&h| (0..trajectories as u64).map(move |k| (h, seed + 1000 * h as u64 + k)))
        .collect();
    jobs.into_par_iter()
        .map(|(h, s)| {
            let (p, trace) = full_gradient_trajectory(s, h, trajectory_steps(h))?;
            Ok((h, p, trace))
        })
        .collect()
}

/// Drift of the mixing error while a matrix is held for `H` steps:
/// `E(X̄^{t+H}, W^t) ≤ 2E(X̄^t, W^t) + 2H Σ η²L²‖∂f(X^{t+i})‖_F²`.
fn period_drift_on(runs: &[(usize, Problem, crate::simulator::Trace)], slack: f64) -> Result<(bool, String)> {
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for (h, p, trace) in runs {
        let h = *h;
        let steps = trace.steps.len();
        let lr_l = trace.lr * p.smoothness();
        for start in (0..steps).step_by(h) {
            if start + h > steps {
                break;
            }
            let w = &trace.steps[start].w_grads;
            let now = linalg::mean_matrix(&trace.steps[start].x);
            let later = linalg::mean_matrix(trace.x_after(start + h - 1));
            let drift: f64 = (start..start + h)
                .map(|i| full_gradients(p, &trace.steps[i].x).map(|g| g.norm_squared()))
                .sum::<Result<f64>>()?;
            let lhs = mixing_error(p, &later, w)?;
            let rhs = 2.0 * mixing_error(p, &now, w)? + 2.0 * h as f64 * lr_l * lr_l * drift;
            worst = worst.max(lhs - rhs);
            checked += 1;
        }
    }
    Ok((worst <= slack, format!("max(lhs − rhs) = {worst:.3e} over {checked} windows")))
}

fn local_point_gap(p: &Problem, x: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<f64> {
    let mean = linalg::mean_matrix(x);
    let lhs = mixing_error(p, &mean, w)?;
    let l = p.smoothness();
    let rhs = 2.0 * mixing_error(p, x, w)? + 2.0 * l * l * (x - &mean).norm_squared();
    Ok(lhs - rhs)
}

/// Evaluating gradients at local parameters instead of their mean:
/// `E(X̄, W) ≤ 2E(X, W) + 2L²‖X − X̄‖_F²`, along trajectories and at random points.
fn local_point_on(
    runs: &[(usize, Problem, crate::simulator::Trace)],
    random_points: usize,
    slack: f64,
    seed: u64,
) -> Result<(bool, String)> {
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for (_, p, trace) in runs {
        for s in &trace.steps {
            worst = worst.max(local_point_gap(p, &s.x, &s.w_grads)?);
            checked += 1;
        }
    }
    let mut r = rng(seed);
    for _ in 0..random_points {
        let t = random_topology(&mut r, 3, 10)?;
        let d = r.random_range(2..=6);
        let p = make_random_quadratics(t.n(), d, d, r.random())?;
        let x = gaussian_matrix(&mut r, d, t.n());
        let w = random_feasible(&mut r, &t)?;
        worst = worst.max(local_point_gap(&p, &x, w.matrix())?);
        checked += 1;
    }
    Ok((worst <= slack, format!("max(lhs − rhs) = {worst:.3e} over {checked} points")))
}

/// Both trajectory inequalities on shared trajectories: `[period_drift_bound, local_point_bound]`.
pub fn trajectory_bounds(trajectories: usize, periods: &[usize], slack: f64, seed: u64) -> [CheckOutcome; 2] {
    match trajectories_for(trajectories, periods, seed) {
        Ok(runs) => [
            CheckOutcome::from_result("period_drift_bound", period_drift_on(&runs, slack)),
            CheckOutcome::from_result(
                "local_point_bound",
                local_point_on(&runs, 10 * trajectories, slack, seed ^ 0x10ca1),
            ),
        ],
        Err(e) => [
            CheckOutcome::new("period_drift_bound", false, format!("error: {e}")),
            CheckOutcome::new("local_point_bound", false, format!("error: {e}")),
        ],
    }
}

/// Mixing matrices chosen from noisy gradients:
/// `E‖(∂f − ∂f̄)W*(ξ)‖² ≤ 2E‖(∂F − ∂F̄)W*(ξ)‖² + 2nσ²`, Monte-Carlo with 3-SE slack.
pub fn stochastic_selection_bound(draws: usize, seed: u64) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let t = build_random_connected(6, 0.5, seed)?;
        let d = 5;
        let noise_std = 0.5;
        let p = make_random_quadratics(6, d, d, seed)?.with_noise_std(noise_std)?;
        let mut r = rng(seed ^ 0x570c);
        let x_bar = broadcast(&DVector::from_fn(d, |_, _| r.random_range(-1.0..1.0)), 6);
        let exact = center_columns(&full_gradients(&p, &x_bar)?);
        let sigma_sq = d as f64 * noise_std * noise_std;
        let params = GmeSolverParams::default();
        let diffs: Vec<f64> = (0..draws)
            .map(|k| {
                let mut noise_rng = rng(seed.wrapping_add(k as u64 + 1));
                let noisy = crate::objectives::stochastic_gradients(&p, &x_bar, &mut noise_rng)?;
                let noisy_c = center_columns(&noisy);
                let w = solve_gme(&gram(&noisy_c), &t, &params, &metropolis_hastings(&t))?;
                let lhs = (&exact * w.matrix()).norm_squared();
                let rhs = 2.0 * (&noisy_c * w.matrix()).norm_squared() + 2.0 * 6.0 * sigma_sq;
                Ok(lhs - rhs)
            })
            .collect::<Result<_>>()?;
        let mean = diffs.iter().sum::<f64>() / draws as f64;
        let var = diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0).max(1.0);
        let se = (var / draws as f64).sqrt();
        Ok((
            mean <= 3.0 * se,
            format!("mean(lhs − rhs) = {mean:.3e}, 3·SE = {:.3e} over {draws} draws", 3.0 * se),
        ))
    };
    CheckOutcome::from_result("stochastic_selection_bound", run())
}

/// Sketch dimension from the concentration bound `k ≥ 100·ln(m/δ)/ε²`.
pub fn jl_sketch_dim(m: usize, delta: f64, eps: f64) -> usize {
    (100.0 * (m as f64 / delta).ln() / (eps * eps)).ceil() as usize
}

/// Normalized sketched inner products stay within `ε·max‖u‖²` of the true ones in
/// all but `max_failures` of `trials` independent sketches.
pub fn jl_inner_products(
    m: usize,
    d: usize,
    delta: f64,
    eps: f64,
    trials: usize,
    max_failures: usize,
    seed: u64,
) -> CheckOutcome {
    let k = jl_sketch_dim(m, delta, eps);
    let mut r = rng(seed);
    // vectors of unequal lengths so the max-norm normalization matters
    let mut u = gaussian_matrix(&mut r, d, m);
    for (j, mut col) in u.column_iter_mut().enumerate() {
        col *= 0.5 + j as f64 / m as f64;
    }
    let exact = u.transpose() * &u;
    let max_sq = exact.diagonal().max();
    let errors: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let approx = if k >= d {
                // the sketch cannot compress; compare against the exact Gram matrix
                exact.clone()
            } else {
                let cfg = SketchConfig::new(k, seed.wrapping_add(1 + trial as u64)).expect("k >= 1");
                let s = sketch(&u, &cfg);
                s.transpose() * &s / k as f64
            };
            (approx - &exact).amax() / max_sq
        })
        .collect();
    let failures = errors.iter().filter(|&&e| e > eps).count();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    CheckOutcome::new(
        "jl_inner_products",
        failures <= max_failures,
        format!("k = {k}, d = {d}: {failures}/{trials} trials above ε = {eps} (worst relative error {worst:.4})"),
    )
}

/// Example instance for the sketch-dimension study: period-3 data on a 6-ring
/// evaluated at the optimum, whose only zero-error mixing matrix is uniform 1/3.
pub fn periodic_ring_gradients(seed: u64) -> Result<(Topology, DMatrix<f64>)> {
    let p = make_replicated(6, 10, 10, 3, seed)?;
    let t = build_ring(6)?;
    let g = full_gradients(&p, &broadcast(p.x_star(), 6))?;
    Ok((t, g))
}

/// Exact-Γ objective of the sketched solver for a very small and a comfortable sketch
/// dimension, both started from the identity matrix.
pub fn sketch_dimension_effect(
    seeds: usize,
    small_k: usize,
    large_k: usize,
    min_small_worse: usize,
    min_large_exact: usize,
    exact_rel_tol: f64,
) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let (t, g) = periodic_ring_gradients(3)?;
        let gamma = gram(&center_columns(&g));
        let gamma_norm = linalg::psd_max_eigenvalue(gamma.matrix())?;
        let params = GmeSolverParams::default();
        let init = MixingMatrix::identity(6);
        let results: Vec<(f64, f64)> = (0..seeds as u64)
            .into_par_iter()
            .map(|s| {
                let small = ce_gme_from(&g, &t, &SketchConfig::new(small_k, s)?, &params, &init)?;
                let large = ce_gme_from(&g, &t, &SketchConfig::new(large_k, s)?, &params, &init)?;
                Ok((gme_objective(&gamma, small.matrix())?, gme_objective(&gamma, large.matrix())?))
            })
            .collect::<Result<_>>()?;
        let worse = results.iter().filter(|(s, l)| s > l).count();
        let exact = results.iter().filter(|(_, l)| *l <= exact_rel_tol * gamma_norm).count();
        Ok((
            worse >= min_small_worse && exact >= min_large_exact,
            format!(
                "k={small_k} worse than k={large_k} in {worse}/{seeds}; k={large_k} within {exact_rel_tol:e}·‖Γ‖₂ in {exact}/{seeds}"
            ),
        ))
    };
    CheckOutcome::from_result("sketch_dimension_effect", run())
}

/// Replays recorded trajectories of every algorithm through the disagreement
/// recursion. With `inject_fault` one matrix gets a row summing to 1.01.
pub fn update_identity(tol: f64, seed: u64, inject_fault: bool) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let mut r = rng(seed);
        let t = random_topology(&mut r, 6, 10)?;
        let p = make_random_quadratics(t.n(), 4, 4, r.random())?.with_noise_std(0.3)?;
        let lr = 0.1 / p.smoothness();
        let mh = metropolis_hastings(&t);
        let mut worst: f64 = 0.0;
        let mut steps = 0;
        let mut bad = mh.clone().into_matrix();
        if inject_fault {
            bad[(0, 0)] += 0.01;
        }
        let fixed = MixingMatrix::from_matrix_unchecked(bad);
        let pairs = MixingMatrix::uniform(t.n());
        let runs: Vec<(Algorithm, Strategy<'_>)> = vec![
            (Algorithm::Dsgd, Strategy::Fixed(&fixed)),
            (Algorithm::Decoupled, Strategy::Decoupled { params: &mh, grads: &pairs }),
            (Algorithm::HaDsgd, Strategy::HeterogeneityAware),
            (Algorithm::HaDsgdMomentum, Strategy::HeterogeneityAware),
        ];
        for (alg, strategy) in runs {
            let mut cfg = RunConfig::new(alg, 200, lr);
            cfg.period = 50;
            cfg.noise_seed = r.random();
            let trace = simulate(&p, &t, strategy, &cfg, true)?.trace.expect("trace requested");
            let report = check_update_identity(&trace);
            worst = worst.max(report.max_residual).max(report.max_mean_residual);
            steps += trace.steps.len();
        }
        Ok((worst <= tol, format!("max relative residual {worst:.3e} over {steps} steps")))
    };
    CheckOutcome::from_result("update_identity", run())
}

/// Pairwise-cancelling arrangement of two data classes on a 16-ring versus a random
/// arrangement with Metropolis-Hastings weights.
pub fn two_class_arrangement(seeds: usize, steps: usize, min_wins: usize) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let t = build_ring(16)?;
        let pairs = CliquePartition::new((0..8).map(|k| vec![2 * k, 2 * k + 1]).collect())?;
        let w_pair = uniform_clique_averaging(&pairs, &t)?;
        let mh = metropolis_hastings(&t);
        let mut max_gme: f64 = 0.0;
        let mut wins = 0;
        let mut summary = Vec::new();
        for s in 0..seeds as u64 {
            let paired = make_two_class_ring_arranged(10, s, &Arrangement::Alternating)?;
            let shuffled = make_two_class_ring_arranged(10, s, &Arrangement::Shuffled { seed: 1000 + s })?;
            let mut cfg = RunConfig::new(Algorithm::Decoupled, steps, 0.1 / paired.smoothness());
            cfg.noise_seed = s;
            let exact = paired.clone().with_noise_std(0.0)?;
            let log = crate::simulator::run_decoupled(&exact, &t, &mh, &w_pair, &cfg)?;
            max_gme = max_gme.max(log.raw().iter().map(|m| m.gme).fold(0.0, f64::max));

            cfg.algorithm = Algorithm::Dsgd;
            let a = run_dsgd(&paired, &t, &w_pair, &cfg)?.tail_mean(0.1).dist_to_opt;
            let b = run_dsgd(&shuffled, &t, &mh, &cfg)?.tail_mean(0.1).dist_to_opt;
            wins += usize::from(a < b);
            summary.push(format!("{a:.2e} vs {b:.2e}"));
        }
        Ok((
            max_gme <= 1e-9 && wins >= min_wins,
            format!(
                "exact-gradient max gme {max_gme:.1e}; paired beats shuffled in {wins}/{seeds} [{}]",
                summary.join(", ")
            ),
        ))
    };
    CheckOutcome::from_result("two_class_arrangement", run())
}

/// Tail means (last 10 %) of the window-averaged metrics for heterogeneity-aware
/// D-SGD and Metropolis-Hastings D-SGD on one repetition of the random-graph setup.
pub fn quadratic_comparison_rep(rep: u64, steps: usize) -> Result<[(f64, f64); 3]> {
    let p = make_random_quadratics(16, 10, 10, 100 + rep)?.with_noise_std(0.1f64.sqrt())?;
    let t = build_random_connected(16, 0.5, 200 + rep)?;
    let mut cfg = RunConfig::new(Algorithm::Dsgd, steps, 0.1 / p.smoothness());
    cfg.period = 100;
    cfg.window = 5;
    cfg.noise_seed = 300 + rep;
    cfg.sketch_seed = 400 + rep;
    let base = run_dsgd(&p, &t, &metropolis_hastings(&t), &cfg)?.tail_mean(0.1);
    let ours = run_hadsgd(&p, &t, &cfg)?.tail_mean(0.1);
    Ok([
        (ours.dist_to_opt, base.dist_to_opt),
        (ours.consensus, base.consensus),
        (ours.gme, base.gme),
    ])
}

/// Heterogeneity-aware mixing beats Metropolis-Hastings on distance to optimum,
/// consensus distance and mixing error in at least `min_wins` repetitions each.
pub fn heterogeneity_aware_beats_baseline(reps: usize, steps: usize, min_wins: usize) -> CheckOutcome {
    let run = || -> Result<(bool, String)> {
        let results: Vec<[(f64, f64); 3]> = (0..reps as u64)
            .into_par_iter()
            .map(|rep| quadratic_comparison_rep(rep, steps))
            .collect::<Result<_>>()?;
        let names = ["dist_to_opt", "consensus", "gme"];
        let mut passed = true;
        let mut parts = Vec::new();
        for (m, name) in names.iter().enumerate() {
            let wins = results.iter().filter(|r| r[m].0 < r[m].1).count();
            passed &= wins >= min_wins;
            parts.push(format!("{name} {wins}/{reps}"));
        }
        Ok((passed, format!("wins: {}", parts.join(", "))))
    };
    CheckOutcome::from_result("heterogeneity_aware_beats_baseline", run())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Fast,
    All,
}

/// Runs the suite; Monte-Carlo and long-running checks only with [`Suite::All`].
pub fn run_suite(suite: Suite, inject_fault: bool) -> Vec<CheckOutcome> {
    let mut out = vec![
        spectral_norm_bound(100, 1e-10, 1),
        relative_heterogeneity_bound(100, 1e-9, 2),
        periodic_ring_zero_error(10, 3),
        clique_averaging_zero_error(10, 4),
        composition_bounds(100, 1e-9, 5),
        qp_matches_brute_force(20, 1e-6, 6),
        update_identity(1e-10, 7, inject_fault),
    ];
    out.extend(trajectory_bounds(if suite == Suite::All { 10 } else { 2 }, &[1, 10, 100], 1e-8, 8));
    if suite == Suite::All {
        out.push(stochastic_selection_bound(200, 10));
        out.push(jl_inner_products(16, 10_000, 0.05, 0.3, 20, 1, 11));
        out.push(sketch_dimension_effect(20, 1, 64, 15, 18, 1e-6));
        out.push(two_class_arrangement(3, 3000, 2));
        out.push(heterogeneity_aware_beats_baseline(3, 5000, 2));
    }
    out
}
