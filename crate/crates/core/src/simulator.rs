//! Synchronous simulation of decentralized SGD variants on quadratic problems.
//!
//! Parameters live in a `d×n` matrix with one column per node. Every step draws
//! stochastic gradients, records the metrics for the current iterate, then applies
//! `X ← X·W_p − η·U·W_g` where `U` is the update direction (gradients, or momentum
//! updates) and `W_p = W_g` except for decoupled mixing.

use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gme::{self, ce_gme, center_columns, gram, GmeSolverParams, SketchConfig};
use crate::linalg;
use crate::mixing::{self, metropolis_hastings, validate, MixingMatrix};
use crate::objectives::{full_gradients, stochastic_gradients, Problem};
use crate::topology::Topology;

/// Iterates whose largest entry exceeds this are treated as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Dsgd,
    HaDsgd,
    Decoupled,
    HaDsgdMomentum,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dsgd => "dsgd",
            Algorithm::HaDsgd => "hadsgd",
            Algorithm::Decoupled => "decoupled",
            Algorithm::HaDsgdMomentum => "hadsgd_momentum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dsgd" => Some(Algorithm::Dsgd),
            "hadsgd" => Some(Algorithm::HaDsgd),
            "decoupled" => Some(Algorithm::Decoupled),
            "hadsgd_momentum" => Some(Algorithm::HaDsgdMomentum),
            _ => None,
        }
    }
}

/// Gradients fed to the mixing-matrix optimization of the heterogeneity-aware runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GmeSource {
    /// The step's stochastic update direction at the local parameters, sketched.
    #[default]
    LocalStochastic,
    /// Full gradients at the local parameters, sketched.
    LocalExact,
    /// Full gradients at the mean parameters, exact Gram matrix (no sketch).
    MeanExact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub steps: usize,
    pub lr: f64,
    /// Mixing matrix refresh period `H`.
    pub period: usize,
    pub sketch_dim: usize,
    pub sketch_seed: u64,
    pub data_seed: u64,
    pub noise_seed: u64,
    /// Interleave the optimized matrix (even steps) with Metropolis-Hastings (odd steps).
    pub alternate: bool,
    pub momentum: f64,
    pub window: usize,
    pub gme_source: GmeSource,
    pub solver: GmeSolverParams,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, steps: usize, lr: f64) -> Self {
        RunConfig {
            algorithm,
            steps,
            lr,
            period: 100,
            sketch_dim: 100,
            sketch_seed: 0,
            data_seed: 0,
            noise_seed: 0,
            alternate: true,
            momentum: 0.9,
            window: 5,
            gme_source: GmeSource::LocalStochastic,
            solver: GmeSolverParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.period == 0 {
            return Err(Error::InvalidParameter("period must be >= 1".into()));
        }
        if self.sketch_dim == 0 {
            return Err(Error::InvalidParameter("sketch_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.window == 0 {
            return Err(Error::InvalidParameter("window must be >= 1".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepMetrics {
    /// Mean over nodes of `‖x_i − x*‖`.
    pub dist_to_opt: f64,
    /// `‖x̄ − x*‖`.
    pub dist_to_opt_mean: f64,
    /// `(1/n)‖X − X̄‖_F²`.
    pub consensus: f64,
    /// `‖G·W − Ḡ‖_F²` with the step's stochastic gradients and applied gradient mixing.
    pub gme: f64,
    /// `f(x̄)`.
    pub loss: f64,
}

impl StepMetrics {
    fn fields(&self) -> [f64; 5] {
        [self.dist_to_opt, self.dist_to_opt_mean, self.consensus, self.gme, self.loss]
    }

    fn from_fields(f: [f64; 5]) -> Self {
        StepMetrics {
            dist_to_opt: f[0],
            dist_to_opt_mean: f[1],
            consensus: f[2],
            gme: f[3],
            loss: f[4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    window: usize,
    raw: Vec<StepMetrics>,
    smoothed: Vec<StepMetrics>,
}

impl MetricsLog {
    pub fn from_raw(raw: Vec<StepMetrics>, window: usize) -> Self {
        let window = window.max(1);
        let smoothed = (0..raw.len())
            .map(|t| {
                let lo = (t + 1).saturating_sub(window);
                let slice = &raw[lo..=t];
                let mut acc = [0.0; 5];
                for m in slice {
                    for (a, v) in acc.iter_mut().zip(m.fields()) {
                        *a += v;
                    }
                }
                StepMetrics::from_fields(acc.map(|a| a / slice.len() as f64))
            })
            .collect();
        MetricsLog { window, raw, smoothed }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn raw(&self) -> &[StepMetrics] {
        &self.raw
    }

    /// Trailing means over `min(window, t + 1)` raw values.
    pub fn windowed(&self) -> &[StepMetrics] {
        &self.smoothed
    }

    pub fn is_finite(&self) -> bool {
        self.raw.iter().all(|m| m.fields().iter().all(|v| v.is_finite()))
    }

    /// Mean of the window-averaged series over the last `fraction` of the steps
    /// (at least one step).
    pub fn tail_mean(&self, fraction: f64) -> StepMetrics {
        let count = ((self.len() as f64 * fraction).ceil() as usize).clamp(1, self.len().max(1));
        let tail = &self.smoothed[self.len() - count..];
        let mut acc = [0.0; 5];
        for m in tail {
            for (a, v) in acc.iter_mut().zip(m.fields()) {
                *a += v;
            }
        }
        StepMetrics::from_fields(acc.map(|a| a / count as f64))
    }

    pub const CSV_HEADER: &'static str =
        "step,dist_to_opt,dist_to_opt_mean,consensus,gme,loss,dist_to_opt_w,consensus_w,gme_w";

    /// CSV with 10 significant digits per float and LF line endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(128 * (self.len() + 1));
        s.push_str(Self::CSV_HEADER);
        s.push('\n');
        for (t, (r, w)) in self.raw.iter().zip(&self.smoothed).enumerate() {
            let _ = writeln!(
                s,
                "{t},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                r.dist_to_opt,
                r.dist_to_opt_mean,
                r.consensus,
                r.gme,
                r.loss,
                w.dist_to_opt,
                w.consensus,
                w.gme
            );
        }
        s
    }
}

/// Everything needed to replay one step of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// Parameters before the update.
    pub x: DMatrix<f64>,
    /// Stochastic gradients of the step.
    pub gradients: DMatrix<f64>,
    /// Update direction actually applied (gradients, or momentum update).
    pub direction: DMatrix<f64>,
    pub w_params: DMatrix<f64>,
    pub w_grads: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub lr: f64,
    pub steps: Vec<TraceStep>,
    /// Parameters after the last update.
    pub final_x: DMatrix<f64>,
}

impl Trace {
    /// Parameters after step `t` (i.e. before step `t + 1`).
    pub fn x_after(&self, t: usize) -> &DMatrix<f64> {
        self.steps.get(t + 1).map_or(&self.final_x, |s| &s.x)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub trace: Option<Trace>,
}

/// How the mixing matrices of each step are chosen.
#[derive(Debug, Clone, Copy)]
pub enum Strategy<'a> {
    Fixed(&'a MixingMatrix),
    Decoupled {
        params: &'a MixingMatrix,
        grads: &'a MixingMatrix,
    },
    /// Periodically re-optimized against the gradient mixing error.
    HeterogeneityAware,
}

/// Runs `cfg.steps` iterations from `X = 0`. No validation of the supplied matrices.
pub fn simulate(
    p: &Problem,
    t: &Topology,
    strategy: Strategy<'_>,
    cfg: &RunConfig,
    record_trace: bool,
) -> Result<RunOutput> {
    cfg.validate()?;
    let (d, n) = (p.d(), p.n());
    if t.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "problem has {n} nodes, topology has {}",
            t.n()
        )));
    }
    if cfg.lr > 2.0 / p.smoothness() {
        warn!(
            "learning rate {} exceeds 2/L = {}; the run may diverge",
            cfg.lr,
            2.0 / p.smoothness()
        );
    }
    let use_momentum = cfg.algorithm == Algorithm::HaDsgdMomentum;
    let mh = metropolis_hastings(t);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed);
    let mut x = DMatrix::<f64>::zeros(d, n);
    let mut buffer = DMatrix::<f64>::zeros(d, n);
    let mut w_opt: Option<MixingMatrix> = None;
    let mut raw = Vec::with_capacity(cfg.steps);
    let mut trace_steps = Vec::new();

    for step in 0..cfg.steps {
        let g = stochastic_gradients(p, &x, &mut rng)?;
        let direction = if use_momentum {
            buffer = &buffer * cfg.momentum + &g;
            &buffer * cfg.momentum + &g
        } else {
            g.clone()
        };

        let (w_params, w_grads) = match strategy {
            Strategy::Fixed(w) => (w, w),
            Strategy::Decoupled { params, grads } => (params, grads),
            Strategy::HeterogeneityAware => {
                if step % cfg.period == 0 {
                    w_opt = Some(refresh_matrix(p, t, cfg, step, &x, &direction, &mh)?);
                }
                let w = if cfg.alternate && step % 2 == 1 {
                    &mh
                } else {
                    w_opt.as_ref().expect("refreshed at step 0")
                };
                (w, w)
            }
        };

        raw.push(step_metrics(p, &x, &g, w_grads.matrix()));

        let next = if std::ptr::eq(w_params, w_grads) {
            (&x - &direction * cfg.lr) * w_params.matrix()
        } else {
            &x * w_params.matrix() - &direction * cfg.lr * w_grads.matrix()
        };
        if record_trace {
            trace_steps.push(TraceStep {
                x: x.clone(),
                gradients: g,
                direction,
                w_params: w_params.matrix().clone(),
                w_grads: w_grads.matrix().clone(),
            });
        }
        if next.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { step });
        }
        x = next;
    }

    let log = MetricsLog::from_raw(raw, cfg.window);
    if !log.is_finite() {
        return Err(Error::Divergence { step: cfg.steps });
    }
    let trace = record_trace.then_some(Trace {
        lr: cfg.lr,
        steps: trace_steps,
        final_x: x,
    });
    Ok(RunOutput { log, trace })
}

fn refresh_matrix(
    p: &Problem,
    t: &Topology,
    cfg: &RunConfig,
    step: usize,
    x: &DMatrix<f64>,
    direction: &DMatrix<f64>,
    mh: &MixingMatrix,
) -> Result<MixingMatrix> {
    let sketch = SketchConfig::new(cfg.sketch_dim, cfg.sketch_seed.wrapping_add((step / cfg.period) as u64))?;
    match cfg.gme_source {
        GmeSource::LocalStochastic => ce_gme(direction, t, &sketch, &cfg.solver),
        GmeSource::LocalExact => ce_gme(&full_gradients(p, x)?, t, &sketch, &cfg.solver),
        GmeSource::MeanExact => {
            let mean = linalg::mean_matrix(x);
            let gamma = gram(&center_columns(&full_gradients(p, &mean)?));
            gme::solve_gme(&gamma, t, &cfg.solver, mh)
        }
    }
}

fn step_metrics(p: &Problem, x: &DMatrix<f64>, g: &DMatrix<f64>, w_grads: &DMatrix<f64>) -> StepMetrics {
    let n = p.n() as f64;
    let x_star = p.x_star();
    let dist_to_opt = x.column_iter().map(|c| (c - x_star).norm()).sum::<f64>() / n;
    let x_bar: DVector<f64> = linalg::column_mean(x);
    let consensus = linalg::center_columns(x).norm_squared() / n;
    let gme = (g * w_grads - linalg::mean_matrix(g)).norm_squared();
    StepMetrics {
        dist_to_opt,
        dist_to_opt_mean: (&x_bar - x_star).norm(),
        consensus,
        gme,
        loss: p.loss(&x_bar),
    }
}

fn check_against(w: &MixingMatrix, t: &Topology) -> Result<()> {
    validate(w.matrix(), t).map_err(|v| Error::InvalidParameter(format!("mixing matrix: {v}")))
}

/// D-SGD with a fixed mixing matrix: `X ← (X − ηG)W`.
pub fn run_dsgd(p: &Problem, t: &Topology, w: &MixingMatrix, cfg: &RunConfig) -> Result<MetricsLog> {
    check_against(w, t)?;
    simulate(p, t, Strategy::Fixed(w), cfg, false).map(|o| o.log)
}

/// Heterogeneity-aware D-SGD: re-optimizes the mixing matrix every `cfg.period` steps.
pub fn run_hadsgd(p: &Problem, t: &Topology, cfg: &RunConfig) -> Result<MetricsLog> {
    let cfg = RunConfig {
        algorithm: Algorithm::HaDsgd,
        ..cfg.clone()
    };
    simulate(p, t, Strategy::HeterogeneityAware, &cfg, false).map(|o| o.log)
}

/// Separate parameter and gradient mixing: `X ← X·W_p − η·G·W_g`.
///
/// `w_params` must respect the topology; `w_grads` only needs to be doubly stochastic.
pub fn run_decoupled(
    p: &Problem,
    t: &Topology,
    w_params: &MixingMatrix,
    w_grads: &MixingMatrix,
    cfg: &RunConfig,
) -> Result<MetricsLog> {
    check_against(w_params, t)?;
    mixing::validate_doubly_stochastic(w_grads.matrix())
        .map_err(|v| Error::InvalidParameter(format!("gradient mixing matrix: {v}")))?;
    let strategy = Strategy::Decoupled {
        params: w_params,
        grads: w_grads,
    };
    simulate(p, t, strategy, cfg, false).map(|o| o.log)
}

/// Heterogeneity-aware D-SGD mixing Nesterov momentum updates
/// `m ← βm + G`, `U = βm + G`, in place of raw gradients.
pub fn run_hadsgd_momentum(p: &Problem, t: &Topology, cfg: &RunConfig) -> Result<MetricsLog> {
    let cfg = RunConfig {
        algorithm: Algorithm::HaDsgdMomentum,
        ..cfg.clone()
    };
    simulate(p, t, Strategy::HeterogeneityAware, &cfg, false).map(|o| o.log)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    /// Largest relative residual of the disagreement recursion over all steps.
    pub max_residual: f64,
    /// Largest relative residual of `x̄⁺ = x̄ − η·mean(U)`.
    pub max_mean_residual: f64,
    pub worst_step: usize,
}

impl IdentityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_residual <= tol && self.max_mean_residual <= tol
    }
}

/// Verifies, step by step,
/// `X⁺ − X̄⁺ = (X − X̄)·W_p − η(U − Ū)·W_g` and `x̄⁺ = x̄ − η·ū`.
///
/// Both identities hold for any doubly-stochastic pair of matrices, so a residual
/// above rounding level means the recorded trajectory is not the claimed one.
/// Residuals are relative to `1 + ‖X‖_F + η‖U‖_F`.
pub fn check_update_identity(trace: &Trace) -> IdentityReport {
    let mut report = IdentityReport {
        max_residual: 0.0,
        max_mean_residual: 0.0,
        worst_step: 0,
    };
    for (t, s) in trace.steps.iter().enumerate() {
        let next = trace.x_after(t);
        let scale = 1.0 + s.x.norm() + trace.lr * s.direction.norm();
        let lhs = center_columns(next);
        let rhs = center_columns(&s.x) * &s.w_params - center_columns(&s.direction) * trace.lr * &s.w_grads;
        let residual = (lhs - rhs).norm() / scale;
        let mean_rhs = linalg::column_mean(&s.x) - linalg::column_mean(&s.direction) * trace.lr;
        let mean_residual = (linalg::column_mean(next) - mean_rhs).norm() / scale;
        if residual.max(mean_residual) > report.max_residual.max(report.max_mean_residual) {
            report.worst_step = t;
        }
        report.max_residual = report.max_residual.max(residual);
        report.max_mean_residual = report.max_mean_residual.max(mean_residual);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_random_quadratics, make_replicated};
    use crate::topology::{build_complete, build_random_connected, build_ring};

    fn cfg(algorithm: Algorithm, steps: usize, lr: f64) -> RunConfig {
        RunConfig::new(algorithm, steps, lr)
    }

    #[test]
    fn exact_averaging_descends_monotonically() {
        let p = make_random_quadratics(4, 3, 3, 1).unwrap();
        let t = build_complete(4).unwrap();
        let log = run_dsgd(&p, &t, &MixingMatrix::uniform(4), &cfg(Algorithm::Dsgd, 200, 1.0 / p.smoothness())).unwrap();
        let loss: Vec<f64> = log.raw().iter().map(|m| m.loss).collect();
        assert!(loss.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let dist: Vec<f64> = log.raw().iter().map(|m| m.dist_to_opt).collect();
        assert!(dist.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn windowed_series_is_trailing_mean() {
        let raw: Vec<StepMetrics> = (0..7)
            .map(|i| StepMetrics {
                gme: i as f64,
                ..Default::default()
            })
            .collect();
        let log = MetricsLog::from_raw(raw, 3);
        let w: Vec<f64> = log.windowed().iter().map(|m| m.gme).collect();
        assert_eq!(w, vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(log.tail_mean(0.3).gme, 4.0);
    }

    #[test]
    fn csv_layout() {
        let p = make_random_quadratics(3, 2, 2, 1).unwrap();
        let t = build_complete(3).unwrap();
        let log = run_dsgd(&p, &t, &metropolis_hastings(&t), &cfg(Algorithm::Dsgd, 4, 0.01)).unwrap();
        let csv = log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], MetricsLog::CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,"));
        assert_eq!(lines[1].split(',').count(), 9);
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn rejects_matrix_off_topology() {
        let p = make_random_quadratics(4, 2, 2, 1).unwrap();
        let t = build_ring(4).unwrap();
        assert!(run_dsgd(&p, &t, &MixingMatrix::uniform(4), &cfg(Algorithm::Dsgd, 3, 0.01)).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let p = make_random_quadratics(4, 3, 3, 2).unwrap();
        let t = build_ring(4).unwrap();
        let err = run_dsgd(&p, &t, &metropolis_hastings(&t), &cfg(Algorithm::Dsgd, 5000, 10.0 / p.smoothness())).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn decoupled_with_equal_matrices_matches_dsgd() {
        let p = make_random_quadratics(6, 3, 3, 4).unwrap().with_noise_std(0.3).unwrap();
        let t = build_ring(6).unwrap();
        let w = metropolis_hastings(&t);
        let c = cfg(Algorithm::Dsgd, 300, 0.05 / p.smoothness());
        let a = simulate(&p, &t, Strategy::Fixed(&w), &c, true).unwrap();
        let w2 = w.clone();
        let b = simulate(&p, &t, Strategy::Decoupled { params: &w, grads: &w2 }, &c, true).unwrap();
        let (ta, tb) = (a.trace.unwrap(), b.trace.unwrap());
        let diff = (&ta.final_x - &tb.final_x).amax();
        assert!(diff <= 1e-12 * (1.0 + ta.final_x.amax()), "{diff}");
    }

    #[test]
    fn decoupled_with_exact_gradient_averaging_has_zero_gme() {
        let p = make_random_quadratics(5, 3, 3, 7).unwrap().with_noise_std(0.2).unwrap();
        let t = build_ring(5).unwrap();
        let log = run_decoupled(&p, &t, &metropolis_hastings(&t), &MixingMatrix::uniform(5), &cfg(Algorithm::Decoupled, 50, 0.01)).unwrap();
        assert!(log.raw().iter().all(|m| m.gme < 1e-20));
    }

    #[test]
    fn momentum_zero_matches_hadsgd() {
        let p = make_random_quadratics(6, 3, 3, 5).unwrap().with_noise_std(0.2).unwrap();
        let t = build_ring(6).unwrap();
        let mut c = cfg(Algorithm::HaDsgd, 120, 0.05 / p.smoothness());
        c.period = 25;
        c.momentum = 0.0;
        let a = run_hadsgd(&p, &t, &c).unwrap();
        let b = run_hadsgd_momentum(&p, &t, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn momentum_first_direction_is_scaled_gradient() {
        let p = make_random_quadratics(4, 2, 2, 5).unwrap();
        let t = build_ring(4).unwrap();
        let mut c = cfg(Algorithm::HaDsgdMomentum, 2, 0.01);
        c.momentum = 0.9;
        let out = simulate(&p, &t, Strategy::HeterogeneityAware, &c, true).unwrap();
        let s0 = &out.trace.unwrap().steps[0];
        assert!((&s0.direction - &s0.gradients * 1.9).amax() < 1e-12);
    }

    #[test]
    fn alternation_changes_odd_step_matrices() {
        let p = make_random_quadratics(8, 4, 4, 3).unwrap().with_noise_std(0.1).unwrap();
        let t = build_random_connected(8, 0.5, 1).unwrap();
        let mut c = cfg(Algorithm::HaDsgd, 40, 0.05 / p.smoothness());
        c.period = 10;
        let on = simulate(&p, &t, Strategy::HeterogeneityAware, &c, true).unwrap();
        c.alternate = false;
        let off = simulate(&p, &t, Strategy::HeterogeneityAware, &c, true).unwrap();
        let (on, off) = (on.trace.unwrap(), off.trace.unwrap());
        assert_eq!(on.steps[0].w_params, off.steps[0].w_params);
        assert_ne!(on.steps[1].w_params, off.steps[1].w_params);
        assert_eq!(on.steps[1].w_params, metropolis_hastings(&t).into_matrix());
    }

    #[test]
    fn runs_are_deterministic() {
        let p = make_random_quadratics(8, 4, 4, 3).unwrap().with_noise_std(0.3).unwrap();
        let t = build_random_connected(8, 0.5, 1).unwrap();
        let mut c = cfg(Algorithm::HaDsgd, 60, 0.05 / p.smoothness());
        c.period = 20;
        c.noise_seed = 42;
        assert_eq!(run_hadsgd(&p, &t, &c).unwrap(), run_hadsgd(&p, &t, &c).unwrap());
    }

    #[test]
    fn update_identity_holds_and_detects_corruption() {
        let p = make_random_quadratics(6, 3, 3, 9).unwrap().with_noise_std(0.3).unwrap();
        let t = build_ring(6).unwrap();
        let w = metropolis_hastings(&t);
        let c = cfg(Algorithm::Dsgd, 100, 0.05 / p.smoothness());
        let trace = simulate(&p, &t, Strategy::Fixed(&w), &c, true).unwrap().trace.unwrap();
        assert!(check_update_identity(&trace).holds(1e-10));

        let mut bad = w.clone().into_matrix();
        bad[(0, 0)] += 0.01;
        let bad = MixingMatrix::from_matrix_unchecked(bad);
        let trace = simulate(&p, &t, Strategy::Fixed(&bad), &c, true).unwrap().trace.unwrap();
        assert!(!check_update_identity(&trace).holds(1e-10));
    }

    #[test]
    fn replicated_ring_converges() {
        let p = make_replicated(6, 4, 4, 3, 11).unwrap();
        let t = build_ring(6).unwrap();
        let log = run_dsgd(&p, &t, &metropolis_hastings(&t), &cfg(Algorithm::Dsgd, 10_000, 0.1 / p.smoothness())).unwrap();
        let last = log.raw().last().unwrap();
        assert!(last.consensus < 1e-6 && last.dist_to_opt < 1e-6, "{last:?}");
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Algorithm::Dsgd, 0, 0.1);
        assert!(c.validate().is_err());
        c.steps = 1;
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        c.momentum = 0.5;
        c.lr = -1.0;
        assert!(c.validate().is_err());
    }
}
