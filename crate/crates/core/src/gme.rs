//! Gradient mixing error minimization.
//!
//! The mixing matrix minimizing `‖G_c W‖_F²` over the edge-constrained
//! doubly-stochastic polytope depends on the gradients only through the Gram
//! matrix `Γ = G_cᵀG_c`. Gradients may first be compressed with a shared-seed
//! Gaussian sketch, which preserves inner products in expectation.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mixing::{metropolis_hastings, MixingMatrix};
use crate::topology::Topology;

pub use crate::linalg::center_columns;

/// Symmetric PSD Gram matrix of column-centered (possibly sketched) gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    gamma: DMatrix<f64>,
}

impl GramMatrix {
    /// Wraps an explicit matrix after checking symmetry, PSD-ness and zero row sums.
    pub fn new(gamma: DMatrix<f64>) -> Result<Self> {
        let g = GramMatrix { gamma };
        g.check()?;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn scaled(&self, c: f64) -> Self {
        GramMatrix {
            gamma: &self.gamma * c,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.gamma.iter().all(|&v| v == 0.0)
    }

    pub fn check(&self) -> Result<()> {
        let g = &self.gamma;
        let n = g.nrows();
        if g.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "Gram matrix must be square, got {}x{}",
                n,
                g.ncols()
            )));
        }
        let fro = g.norm();
        let asym = (g - g.transpose()).amax();
        if asym > 1e-12 * (1.0 + fro) {
            return Err(Error::InvalidParameter(format!("Gram matrix asymmetric by {asym:e}")));
        }
        for i in 0..n {
            let s = g.row(i).sum();
            if s.abs() > 1e-8 * fro.max(f64::MIN_POSITIVE) && s.abs() > 1e-300 {
                return Err(Error::InvalidParameter(format!("Gram row {i} sums to {s:e}")));
            }
        }
        if n > 0 {
            let min_eig = g.clone().symmetric_eigen().eigenvalues.min();
            if min_eig < -1e-9 * g.trace().abs().max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidParameter(format!(
                    "Gram matrix not PSD (eigenvalue {min_eig:e})"
                )));
            }
        }
        Ok(())
    }
}

/// `Γ = G_cᵀG_c`, symmetrized to remove rounding asymmetry.
pub fn gram(gc: &DMatrix<f64>) -> GramMatrix {
    let raw = gc.transpose() * gc;
    GramMatrix {
        gamma: (&raw + raw.transpose()) * 0.5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchConfig {
    k: usize,
    seed: u64,
}

impl SketchConfig {
    pub fn new(k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("sketch dimension must be >= 1".into()));
        }
        Ok(SketchConfig { k, seed })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// `S = A·G` with `A ∈ ℝ^{k×d}` of i.i.d. standard normals drawn row-major from a
/// generator seeded with `cfg.seed`. No `1/√k` scaling.
///
/// Rows of `A` are generated and consumed one at a time, so memory stays `O(d)`
/// even when `k·d` is large.
pub fn sketch(g: &DMatrix<f64>, cfg: &SketchConfig) -> DMatrix<f64> {
    let (d, n) = g.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut row = DVector::<f64>::zeros(d);
    let mut out = DMatrix::zeros(cfg.k, n);
    for r in 0..cfg.k {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for j in 0..n {
            out[(r, j)] = row.dot(&g.column(j));
        }
    }
    out
}

/// The sketch matrix `A` itself, materialized row-major. Mainly for tests.
pub fn sketch_matrix(d: usize, cfg: &SketchConfig) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut a = DMatrix::zeros(cfg.k, d);
    for r in 0..cfg.k {
        for c in 0..d {
            a[(r, c)] = StandardNormal.sample(&mut rng);
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmeSolverParams {
    pub max_iters: usize,
    /// Stop once the relative objective decrease of one step falls below this.
    pub tol: f64,
    pub projection_tol: f64,
    pub projection_max_iters: usize,
}

impl Default for GmeSolverParams {
    fn default() -> Self {
        GmeSolverParams {
            max_iters: 2000,
            tol: 1e-10,
            projection_tol: 1e-10,
            projection_max_iters: 5000,
        }
    }
}

impl GmeSolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0
            || self.projection_max_iters == 0
            || self.tol.is_nan()
            || self.tol <= 0.0
            || self.projection_tol.is_nan()
            || self.projection_tol <= 0.0
        {
            return Err(Error::InvalidParameter("solver parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Euclidean projection onto `{W ≥ 0, W𝟙 = 𝟙, 𝟙ᵀW = 𝟙ᵀ, supp(W) ⊆ E ∪ diag}`.
///
/// Dykstra's algorithm cycles over the row-sum affine set, the column-sum affine set
/// and the clamp set (nonnegative, zero off the support). The sums of the returned
/// matrix are then rescaled to 1 to machine precision; the rescaling moves entries
/// by at most the final Dykstra residual.
pub fn project_feasible(m: &DMatrix<f64>, t: &Topology, params: &GmeSolverParams) -> Result<MixingMatrix> {
    let n = t.n();
    if m.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, topology has n={n}",
            m.nrows(),
            m.ncols()
        )));
    }
    let support = DMatrix::from_fn(n, n, |i, j| t.in_support(i, j));
    let inv_n = 1.0 / n as f64;

    let mut x = m.clone();
    let mut inc_row = DMatrix::<f64>::zeros(n, n);
    let mut inc_col = DMatrix::<f64>::zeros(n, n);
    let mut inc_clamp = DMatrix::<f64>::zeros(n, n);
    let mut prev = x.clone();
    let mut change = f64::INFINITY;

    for _ in 0..params.projection_max_iters {
        prev.copy_from(&x);

        // row sums
        let mut y = &x + &inc_row;
        for i in 0..n {
            let shift = (y.row(i).sum() - 1.0) * inv_n;
            for j in 0..n {
                x[(i, j)] = y[(i, j)] - shift;
            }
        }
        inc_row = &y - &x;

        // column sums
        y = &x + &inc_col;
        for j in 0..n {
            let shift = (y.column(j).sum() - 1.0) * inv_n;
            for i in 0..n {
                x[(i, j)] = y[(i, j)] - shift;
            }
        }
        inc_col = &y - &x;

        // nonnegativity and support
        y = &x + &inc_clamp;
        for j in 0..n {
            for i in 0..n {
                x[(i, j)] = if support[(i, j)] { y[(i, j)].max(0.0) } else { 0.0 };
            }
        }
        inc_clamp = &y - &x;

        change = (&x - &prev).norm();
        if change <= params.projection_tol && max_sum_residual(&x) <= params.projection_tol {
            polish_sums(&mut x);
            return MixingMatrix::new(x, t);
        }
    }
    Err(Error::NonConvergence {
        what: "Dykstra projection",
        iters: params.projection_max_iters,
        residual: change,
    })
}

fn max_sum_residual(x: &DMatrix<f64>) -> f64 {
    let rows = x.row_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = x.column_iter().map(|c| (c.sum() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Alternating row/column rescaling until every sum is 1 to rounding.
fn polish_sums(x: &mut DMatrix<f64>) {
    let n = x.nrows();
    for _ in 0..1000 {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let s = x.row(i).sum();
            worst = worst.max((s - 1.0).abs());
            if s > 0.0 {
                x.row_mut(i).scale_mut(1.0 / s);
            }
        }
        for j in 0..n {
            let s = x.column(j).sum();
            worst = worst.max((s - 1.0).abs());
            if s > 0.0 {
                x.column_mut(j).scale_mut(1.0 / s);
            }
        }
        if worst <= 4.0 * f64::EPSILON {
            break;
        }
    }
}

/// `Tr[WᵀΓW]`.
pub fn gme_objective(gamma: &GramMatrix, w: &DMatrix<f64>) -> Result<f64> {
    let g = gamma.matrix();
    if g.ncols() != w.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Gram is {}x{}, W is {}x{}",
            g.nrows(),
            g.ncols(),
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(w.component_mul(&(g * w)).sum())
}

/// Output of [`solve_gme_with_history`].
#[derive(Debug, Clone)]
pub struct GmeSolution {
    pub w: MixingMatrix,
    /// Objective after each accepted step, starting with the initial value.
    pub objective_history: Vec<f64>,
}

/// Minimizes `Tr[WᵀΓW]` over the feasible mixing matrices of `t`.
pub fn solve_gme(
    gamma: &GramMatrix,
    t: &Topology,
    params: &GmeSolverParams,
    init: &MixingMatrix,
) -> Result<MixingMatrix> {
    solve_gme_with_history(gamma, t, params, init).map(|s| s.w)
}

/// Projected gradient descent with step `1/(2‖Γ‖₂)`, halved whenever a step would
/// increase the objective.
pub fn solve_gme_with_history(
    gamma: &GramMatrix,
    t: &Topology,
    params: &GmeSolverParams,
    init: &MixingMatrix,
) -> Result<GmeSolution> {
    params.validate()?;
    let n = t.n();
    if gamma.n() != n || init.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "Gram n={}, init n={}, topology n={n}",
            gamma.n(),
            init.n()
        )));
    }
    let mut w = init.clone();
    let mut f = gme_objective(gamma, w.matrix())?;
    let mut history = vec![f];
    if gamma.is_zero() || f == 0.0 {
        return Ok(GmeSolution {
            w,
            objective_history: history,
        });
    }
    let lipschitz = 2.0 * linalg::psd_max_eigenvalue(gamma.matrix())?;
    let mut step = 1.0 / (lipschitz + 1e-12);

    'outer: for _ in 0..params.max_iters {
        let grad = gamma.matrix() * w.matrix() * 2.0;
        let (candidate, fc) = loop {
            let c = project_feasible(&(w.matrix() - &grad * step), t, params)?;
            let fc = gme_objective(gamma, c.matrix())?;
            if fc <= f {
                break (c, fc);
            }
            step *= 0.5;
            if step * lipschitz < 1e-15 {
                break 'outer;
            }
        };
        let rel = (f - fc) / f.abs().max(f64::MIN_POSITIVE);
        w = candidate;
        f = fc;
        history.push(f);
        if rel < params.tol || f == 0.0 {
            break;
        }
    }
    Ok(GmeSolution {
        w,
        objective_history: history,
    })
}

/// Sketch, center, form the sketched Gram matrix and solve, starting from
/// Metropolis-Hastings weights.
pub fn ce_gme(
    g: &DMatrix<f64>,
    t: &Topology,
    cfg: &SketchConfig,
    params: &GmeSolverParams,
) -> Result<MixingMatrix> {
    ce_gme_from(g, t, cfg, params, &metropolis_hastings(t))
}

/// [`ce_gme`] with an explicit feasible starting point.
pub fn ce_gme_from(
    g: &DMatrix<f64>,
    t: &Topology,
    cfg: &SketchConfig,
    params: &GmeSolverParams,
    init: &MixingMatrix,
) -> Result<MixingMatrix> {
    if g.ncols() != t.n() {
        return Err(Error::DimensionMismatch(format!(
            "gradient matrix has {} columns, topology has n={}",
            g.ncols(),
            t.n()
        )));
    }
    let s = sketch(g, cfg);
    let gamma = gram(&center_columns(&s));
    solve_gme(&gamma, t, params, init)
}
