//! Small dense helpers shared by the mixing, gme and objectives modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
///
/// Dense symmetric eigendecomposition: exact to rounding, and unlike power iteration
/// from a fixed start it cannot miss the top eigenvector on structured matrices.
pub fn psd_max_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", m.nrows(), m.ncols())));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let top = sym.symmetric_eigen().eigenvalues.max();
    if !top.is_finite() {
        return Err(Error::NonConvergence {
            what: "symmetric eigendecomposition",
            iters: 0,
            residual: top,
        });
    }
    Ok(top.max(0.0))
}

/// Spectral norm of an arbitrary real matrix, via the top eigenvalue of `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    let gram = m.transpose() * m;
    Ok(psd_max_eigenvalue(&gram)?.sqrt())
}

/// `(1/n)𝟙𝟙ᵀ`.
pub fn averaging(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// Subtracts the column mean from every column: `G − G·(𝟙𝟙ᵀ/n)`.
pub fn center_columns(g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = g.ncols();
    if n == 0 {
        return g.clone();
    }
    let mean = column_mean(g);
    let mut out = g.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}

pub fn column_mean(g: &DMatrix<f64>) -> DVector<f64> {
    let n = g.ncols().max(1);
    g.column_sum() / n as f64
}

/// Matrix whose every column equals the column mean of `g`.
pub fn mean_matrix(g: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = column_mean(g);
    DMatrix::from_fn(g.nrows(), g.ncols(), |r, _| mean[r])
}
