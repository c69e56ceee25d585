//! Brute-force reference solvers used to cross-check the production solvers.
//!
//! These are exponential in the number of support entries and only meant for tiny
//! graphs (n ≤ 4).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::topology::Topology;

/// Support entries above which enumeration is refused (2^16 active sets).
pub const MAX_ENUMERATED_ENTRIES: usize = 16;

/// Exact minimum of `Tr[WᵀΓW]` over the feasible mixing matrices of `t`, by
/// enumerating every set of support entries forced to zero.
///
/// The optimum of a convex quadratic over a polytope is attained at a point that is
/// the unique minimizer of the quadratic over the affine hull of some face; each
/// face is visited once via its KKT system.
pub fn exact_gme_minimum(gamma: &DMatrix<f64>, t: &Topology) -> Result<(f64, DMatrix<f64>)> {
    let n = t.n();
    if gamma.shape() != (n, n) {
        return Err(Error::DimensionMismatch("Gram and topology disagree".into()));
    }
    let idx = |i: usize, j: usize| i + n * j;
    let support: Vec<usize> = (0..n)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .filter(|&(i, j)| t.in_support(i, j))
        .map(|(i, j)| idx(i, j))
        .collect();
    if support.len() > MAX_ENUMERATED_ENTRIES {
        return Err(Error::InvalidSize(format!(
            "{} support entries is too many to enumerate",
            support.len()
        )));
    }
    let vars = n * n;
    let mut hess = DMatrix::zeros(vars, vars);
    for j in 0..n {
        hess.view_mut((j * n, j * n), (n, n)).copy_from(&(gamma * 2.0));
    }
    let off_support: Vec<usize> = (0..vars).filter(|v| !support.contains(v)).collect();

    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for mask in 0u32..(1u32 << support.len()) {
        let zeros: Vec<usize> = off_support
            .iter()
            .copied()
            .chain(
                support
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, &v)| v),
            )
            .collect();
        let rows = 2 * n + zeros.len();
        let mut c = DMatrix::zeros(rows, vars);
        let mut rhs = DVector::zeros(rows);
        for i in 0..n {
            for j in 0..n {
                c[(i, idx(i, j))] = 1.0;
                c[(n + j, idx(i, j))] = 1.0;
            }
            rhs[i] = 1.0;
            rhs[n + i] = 1.0;
        }
        for (r, &v) in zeros.iter().enumerate() {
            c[(2 * n + r, v)] = 1.0;
        }
        let size = vars + rows;
        let mut kkt = DMatrix::zeros(size, size);
        kkt.view_mut((0, 0), (vars, vars)).copy_from(&hess);
        kkt.view_mut((0, vars), (vars, rows)).copy_from(&c.transpose());
        kkt.view_mut((vars, 0), (rows, vars)).copy_from(&c);
        let mut b = DVector::zeros(size);
        b.rows_mut(vars, rows).copy_from(&rhs);

        let svd = kkt.clone().svd(true, true);
        let Ok(z) = svd.solve(&b, 1e-10 * svd.singular_values.max()) else {
            continue;
        };
        if (&kkt * &z - &b).norm() > 1e-8 * (1.0 + b.norm()) {
            continue;
        }
        let w = DMatrix::from_column_slice(n, n, z.rows(0, vars).as_slice());
        if w.iter().any(|&v| v < -1e-10) {
            continue;
        }
        let value = w.component_mul(&(gamma * &w)).sum();
        if best.as_ref().is_none_or(|(f, _)| value < *f) {
            best = Some((value, w));
        }
    }
    best.ok_or_else(|| Error::Singular("no feasible face found".into()))
}

/// Grid search over the four free entries of a full-support 3×3 doubly-stochastic
/// matrix at spacing `1/steps`.
pub fn grid_gme_minimum_n3(gamma: &DMatrix<f64>, steps: usize) -> f64 {
    let h = 1.0 / steps as f64;
    let mut best = f64::INFINITY;
    let mut w = DMatrix::zeros(3, 3);
    for ia in 0..=steps {
        let a = ia as f64 * h;
        for ib in 0..=(steps - ia) {
            let b = ib as f64 * h;
            for ic in 0..=(steps - ia) {
                let c = ic as f64 * h;
                for id in 0..=(steps - ic) {
                    let d = id as f64 * h;
                    let corner = a + b + c + d - 1.0;
                    if b + d > 1.0 + 1e-12 || corner < -1e-12 {
                        continue;
                    }
                    w.copy_from_slice(&[a, c, 1.0 - a - c, b, d, 1.0 - b - d, 1.0 - a - b, 1.0 - c - d, corner]);
                    let value = w.component_mul(&(gamma * &w)).sum();
                    best = best.min(value);
                }
            }
        }
    }
    best
}
