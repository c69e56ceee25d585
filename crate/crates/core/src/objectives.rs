//! Quadratic test objectives `f_i(x) = ‖A_i x + b_i‖²` with exact and noisy gradients,
//! plus the heterogeneity metrics evaluated at a single point.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

/// Default per-coordinate noise standard deviation of the two-class ring.
pub const TWO_CLASS_NOISE_STD: f64 = 0.031_622_776_601_683_79; // √0.001
pub const TWO_CLASS_N: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadNode {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl QuadNode {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidSize("A must be at least 1x1".into()));
        }
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A has {} rows, b has {} entries",
                a.nrows(),
                b.len()
            )));
        }
        Ok(QuadNode { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x + &self.b).norm_squared()
    }

    /// `2Aᵀ(Ax + b)`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(&(&self.a * x + &self.b)) * 2.0
    }

    fn hessian_half(&self) -> DMatrix<f64> {
        self.a.tr_mul(&self.a)
    }
}

/// The distributed problem `f = (1/n) Σ f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    nodes: Vec<QuadNode>,
    noise_std: f64,
    x_star: DVector<f64>,
    smoothness: f64,
}

impl Problem {
    pub fn new(nodes: Vec<QuadNode>, noise_std: f64) -> Result<Self> {
        let d = nodes
            .first()
            .map(QuadNode::dim)
            .ok_or_else(|| Error::InvalidSize("problem needs at least one node".into()))?;
        if nodes.iter().any(|q| q.dim() != d) {
            return Err(Error::DimensionMismatch("nodes disagree on d".into()));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise_std must be >= 0, got {noise_std}")));
        }
        let x_star = solve_optimum(&nodes)?;
        let mut smoothness: f64 = 0.0;
        for q in &nodes {
            let top = linalg::psd_max_eigenvalue(&q.hessian_half())?;
            smoothness = smoothness.max(2.0 * top);
        }
        Ok(Problem {
            nodes,
            noise_std,
            x_star,
            smoothness,
        })
    }

    pub fn with_noise_std(mut self, noise_std: f64) -> Result<Self> {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise_std must be >= 0, got {noise_std}")));
        }
        self.noise_std = noise_std;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn d(&self) -> usize {
        self.nodes[0].dim()
    }

    pub fn nodes(&self) -> &[QuadNode] {
        &self.nodes
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Gradient Lipschitz constant `L = 2·max_i λ_max(A_iᵀA_i)`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    /// `f(x) = (1/n) Σ f_i(x)`.
    pub fn loss(&self, x: &DVector<f64>) -> f64 {
        self.nodes.iter().map(|q| q.value(x)).sum::<f64>() / self.n() as f64
    }

    pub fn global_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.d());
        for q in &self.nodes {
            g += q.gradient(x);
        }
        g / self.n() as f64
    }

    fn check_shape(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.shape() != (self.d(), self.n()) {
            return Err(Error::DimensionMismatch(format!(
                "X is {}x{}, problem expects {}x{}",
                x.nrows(),
                x.ncols(),
                self.d(),
                self.n()
            )));
        }
        Ok(())
    }
}

fn solve_optimum(nodes: &[QuadNode]) -> Result<DVector<f64>> {
    let d = nodes[0].dim();
    let mut h = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    for q in nodes {
        h += q.hessian_half();
        rhs += q.a.tr_mul(&q.b);
    }
    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("aggregate Hessian Σ A_iᵀA_i is not positive definite".into()))?;
    // Cholesky can succeed on numerically rank-deficient matrices; reject tiny pivots
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = (diag.min(), diag.max());
    if lo <= 1e-7 * hi {
        return Err(Error::Singular("aggregate Hessian Σ A_iᵀA_i is rank deficient".into()));
    }
    Ok(-chol.solve(&rhs))
}

/// Global optimum `x* = −(Σ A_iᵀA_i)⁻¹ Σ A_iᵀb_i`.
pub fn global_optimum(p: &Problem) -> Result<DVector<f64>> {
    solve_optimum(p.nodes())
}

fn random_node(rng: &mut ChaCha8Rng, d: usize, m: usize) -> QuadNode {
    let a = DMatrix::from_fn(m, d, |_, _| StandardNormal.sample(&mut *rng));
    let b = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut *rng));
    QuadNode { a, b }
}

/// `n` nodes with `A_i ∈ ℝ^{m×d}`, `b_i ∈ ℝ^m` filled with standard normals. Noise-free.
pub fn make_random_quadratics(n: usize, d: usize, m: usize, seed: u64) -> Result<Problem> {
    make_replicated(n, d, m, n, seed)
}

/// Node `i` gets the data of node `i mod period`, drawn exactly as
/// [`make_random_quadratics`] would draw its first `period` nodes.
pub fn make_replicated(n: usize, d: usize, m: usize, period: usize, seed: u64) -> Result<Problem> {
    if n == 0 || d == 0 || m == 0 {
        return Err(Error::InvalidSize(format!("need n, d, m >= 1, got {n}, {d}, {m}")));
    }
    if period == 0 || !n.is_multiple_of(period) {
        return Err(Error::InvalidParameter(format!("period {period} does not divide n={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<QuadNode> = (0..period).map(|_| random_node(&mut rng, d, m)).collect();
    let nodes = (0..n).map(|i| base[i % period].clone()).collect();
    Problem::new(nodes, 0.0)
}

/// Class of each node in a two-class ring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arrangement {
    /// Classes alternate around the ring: node `i` has class `i mod 2`.
    Alternating,
    /// Eight nodes of each class in a seeded random order.
    Shuffled { seed: u64 },
}

impl Arrangement {
    pub fn classes(&self) -> Vec<usize> {
        let mut classes: Vec<usize> = (0..TWO_CLASS_N).map(|i| i % 2).collect();
        if let Arrangement::Shuffled { seed } = self {
            use rand::seq::SliceRandom;
            classes.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
        }
        classes
    }
}

/// Sixteen nodes sharing one Gaussian `A ∈ ℝ^{d×d}`: class 0 holds `‖A(x − 𝟙)‖²`,
/// class 1 holds `‖A(x + 𝟙)‖²`, in alternating order. Noise std defaults to `√0.001`.
pub fn make_two_class_ring(d: usize, seed: u64) -> Result<Problem> {
    make_two_class_ring_arranged(d, seed, &Arrangement::Alternating)
}

pub fn make_two_class_ring_arranged(d: usize, seed: u64, arrangement: &Arrangement) -> Result<Problem> {
    if d == 0 {
        return Err(Error::InvalidSize("d must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let a_ones: DVector<f64> = &a * DVector::from_element(d, 1.0);
    let nodes = arrangement
        .classes()
        .into_iter()
        .map(|c| {
            let b = if c == 0 { -&a_ones } else { a_ones.clone() };
            QuadNode { a: a.clone(), b }
        })
        .collect();
    Problem::new(nodes, TWO_CLASS_NOISE_STD)
}

/// `∂f(X)`: column `i` is `∇f_i(x_i)`.
pub fn full_gradients(p: &Problem, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    p.check_shape(x)?;
    let mut g = DMatrix::zeros(p.d(), p.n());
    for (i, q) in p.nodes().iter().enumerate() {
        let xi = x.column(i).into_owned();
        g.set_column(i, &q.gradient(&xi));
    }
    Ok(g)
}

/// Full gradients plus i.i.d. `N(0, σ²)` noise per entry, drawn column by column.
pub fn stochastic_gradients<R: Rng + ?Sized>(p: &Problem, x: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let mut g = full_gradients(p, x)?;
    let sigma = p.noise_std();
    if sigma > 0.0 {
        for v in g.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
    }
    Ok(g)
}

fn broadcast(x: &DVector<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), n, |r, _| x[r])
}

/// `(1/n)‖∂f(x𝟙ᵀ) − ∂f̄(x𝟙ᵀ)‖_F²`.
pub fn zeta_sq_at(p: &Problem, x: &DVector<f64>) -> Result<f64> {
    let g = full_gradients(p, &broadcast(x, p.n()))?;
    Ok(linalg::center_columns(&g).norm_squared() / p.n() as f64)
}

/// `(1/n)‖∂f(x𝟙ᵀ)W − ∂f̄(x𝟙ᵀ)‖_F²`.
pub fn relative_zeta_sq_at(p: &Problem, x: &DVector<f64>, w: &DMatrix<f64>) -> Result<f64> {
    if w.shape() != (p.n(), p.n()) {
        return Err(Error::DimensionMismatch(format!(
            "W is {}x{}, problem has n={}",
            w.nrows(),
            w.ncols(),
            p.n()
        )));
    }
    let g = full_gradients(p, &broadcast(x, p.n()))?;
    let mixed = &g * w - linalg::mean_matrix(&g);
    Ok(mixed.norm_squared() / p.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::metropolis_hastings;
    use crate::topology::build_ring;

    fn random_point(d: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0))
    }

    fn finite_difference(q: &QuadNode, x: &DVector<f64>, h: f64) -> DVector<f64> {
        DVector::from_fn(x.len(), |k, _| {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus[k] += h;
            minus[k] -= h;
            (q.value(&plus) - q.value(&minus)) / (2.0 * h)
        })
    }

    #[test]
    fn sixteen_node_problem_is_valid() {
        let p = make_random_quadratics(16, 10, 10, 1).unwrap();
        assert_eq!((p.n(), p.d()), (16, 10));
        let g = p.global_gradient(p.x_star());
        assert!(g.norm() <= 1e-8 * (1.0 + p.x_star().norm()));
        assert!(p.smoothness() > 0.0);
    }

    #[test]
    fn scalar_problem() {
        let p = make_random_quadratics(1, 1, 1, 5).unwrap();
        let q = &p.nodes()[0];
        let expect = -q.b()[0] / q.a()[(0, 0)];
        assert!((p.x_star()[0] - expect).abs() < 1e-12 * (1.0 + expect.abs()));
    }

    #[test]
    fn rank_deficient_problem_is_rejected() {
        // two rows stacked cannot span d=3
        assert!(matches!(make_random_quadratics(2, 3, 1, 1), Err(Error::Singular(_))));
    }

    #[test]
    fn replicated_structure() {
        let p = make_replicated(6, 4, 4, 3, 2).unwrap();
        for i in 0..3 {
            assert_eq!(p.nodes()[i], p.nodes()[i + 3]);
        }
        assert_ne!(p.nodes()[0], p.nodes()[1]);
        assert_eq!(make_replicated(5, 3, 3, 5, 9).unwrap(), make_random_quadratics(5, 3, 3, 9).unwrap());
        assert!(make_replicated(4, 3, 3, 3, 1).is_err());
    }

    #[test]
    fn global_optimum_cases() {
        let p = make_two_class_ring(5, 3).unwrap();
        assert!(global_optimum(&p).unwrap().norm() < 1e-10);

        let v = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let node = QuadNode::new(DMatrix::identity(3, 3), -&v).unwrap();
        let p = Problem::new(vec![node], 0.0).unwrap();
        assert!((global_optimum(&p).unwrap() - v).norm() < 1e-12);

        let p = make_random_quadratics(8, 6, 4, 21).unwrap();
        let x = global_optimum(&p).unwrap();
        let residual = p.global_gradient(&x).norm() * p.n() as f64;
        assert!(residual <= 1e-8 * p.n() as f64 * (1.0 + x.norm()));
    }

    #[test]
    fn full_gradients_at_optimum_sum_to_zero() {
        let p = make_random_quadratics(6, 4, 4, 8).unwrap();
        let x = broadcast(p.x_star(), 6);
        let g = full_gradients(&p, &x).unwrap();
        assert!(g.column_sum().norm() < 1e-9 * (1.0 + g.norm()));
        assert!(full_gradients(&p, &DMatrix::zeros(3, 6)).is_err());
    }

    #[test]
    fn local_minimizer_has_zero_column() {
        let p = make_random_quadratics(3, 4, 4, 13).unwrap();
        let mut x = DMatrix::zeros(4, 3);
        let q = &p.nodes()[1];
        let local = -q.a().clone().lu().solve(q.b()).unwrap();
        x.set_column(1, &local);
        let g = full_gradients(&p, &x).unwrap();
        assert!(g.column(1).norm() < 1e-8);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = make_random_quadratics(4, 5, 3, 2).unwrap();
        let x = DMatrix::from_fn(5, 4, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.3 - 0.6);
        let g = full_gradients(&p, &x).unwrap();
        for (i, q) in p.nodes().iter().enumerate() {
            let xi = x.column(i).into_owned();
            let fd = finite_difference(q, &xi, 1e-6);
            assert!((g.column(i) - &fd).norm() <= 1e-5 * (1.0 + fd.norm()));
        }
    }

    #[test]
    fn noise_free_stochastic_equals_full() {
        let p = make_random_quadratics(3, 2, 2, 4).unwrap();
        let x = DMatrix::from_element(2, 3, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(stochastic_gradients(&p, &x, &mut rng).unwrap(), full_gradients(&p, &x).unwrap());
    }

    #[test]
    fn stochastic_gradient_variance() {
        let p = make_random_quadratics(2, 2, 2, 4).unwrap().with_noise_std(0.1f64.sqrt()).unwrap();
        let x = DMatrix::zeros(2, 2);
        let exact = full_gradients(&p, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let draws = 10_000;
        let mut sum = DMatrix::zeros(2, 2);
        let mut sum_sq = DMatrix::zeros(2, 2);
        for _ in 0..draws {
            let e = stochastic_gradients(&p, &x, &mut rng).unwrap() - &exact;
            sum += &e;
            sum_sq += e.component_mul(&e);
        }
        let mean = &sum / draws as f64;
        let var = &sum_sq / draws as f64 - mean.component_mul(&mean);
        for v in var.iter() {
            assert!((0.095..=0.105).contains(v), "variance {v}");
        }
        let a = stochastic_gradients(&p, &x, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = stochastic_gradients(&p, &x, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zeta_examples() {
        let p = make_replicated(4, 3, 3, 1, 6).unwrap();
        assert!(zeta_sq_at(&p, &random_point(3, 1)).unwrap() < 1e-20);

        // n=2 with opposite gradients g, -g: ζ² = ‖g‖²
        let a = DMatrix::identity(2, 2);
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let p = Problem::new(
            vec![QuadNode::new(a.clone(), v.clone()).unwrap(), QuadNode::new(a, -&v).unwrap()],
            0.0,
        )
        .unwrap();
        let x = DVector::zeros(2);
        let g = 2.0 * &v;
        assert!((zeta_sq_at(&p, &x).unwrap() - g.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn relative_zeta_examples() {
        let p = make_replicated(6, 4, 4, 3, 3).unwrap();
        let x = random_point(4, 2);
        let n = p.n();
        assert!(relative_zeta_sq_at(&p, &x, &linalg::averaging(n)).unwrap() < 1e-18);
        let id = DMatrix::identity(n, n);
        let z = zeta_sq_at(&p, &x).unwrap();
        assert!((relative_zeta_sq_at(&p, &x, &id).unwrap() - z).abs() <= 1e-12 * z);
        let ring = metropolis_hastings(&build_ring(6).unwrap());
        assert!(relative_zeta_sq_at(&p, &x, ring.matrix()).unwrap() < 1e-9);
        assert!(relative_zeta_sq_at(&p, &x, &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn two_class_pairs_cancel() {
        let p = make_two_class_ring(4, 9).unwrap();
        let x = random_point(4, 5);
        let a = p.nodes()[0].a();
        let pair = (p.nodes()[0].gradient(&x) + p.nodes()[1].gradient(&x)) / 2.0;
        let expect = a.tr_mul(&(a * &x)) * 2.0;
        assert!((&pair - &expect).norm() < 1e-9 * (1.0 + expect.norm()));
        assert!((p.global_gradient(&x) - expect).norm() < 1e-9 * (1.0 + pair.norm()));
        assert!((p.noise_std() - 0.001f64.sqrt()).abs() < 1e-15);
        let shuffled = Arrangement::Shuffled { seed: 4 }.classes();
        assert_eq!(shuffled.iter().filter(|&&c| c == 0).count(), 8);
    }
}
