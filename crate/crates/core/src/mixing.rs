//! Mixing matrices: construction, validation, composition and consensus metrics.
//!
//! Parameters are stored column-per-node (`X ∈ ℝ^{d×n}`) and mixed by
//! right-multiplication, so `w[i][j]` is the weight node `j` puts on node `i`'s
//! message.

use std::fmt;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gme::{project_feasible, GmeSolverParams};
use crate::linalg;
use crate::topology::{CliquePartition, Topology};

/// Entries within this distance outside `[0, 1]` are clamped rather than rejected.
pub const RANGE_TOL: f64 = 1e-12;
/// Row and column sums must be within this distance of 1.
pub const SUM_TOL: f64 = 1e-9;

/// A doubly-stochastic weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
}

/// First constraint a candidate mixing matrix fails.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape { rows: usize, cols: usize, n: usize },
    Range { i: usize, j: usize, value: f64 },
    Support { i: usize, j: usize, value: f64 },
    RowSum { i: usize, sum: f64 },
    ColumnSum { j: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { rows, cols, n } => {
                write!(f, "shape {rows}x{cols} does not match n={n}")
            }
            Violation::Range { i, j, value } => {
                write!(f, "entry ({i}, {j}) = {value} outside [0, 1]")
            }
            Violation::Support { i, j, value } => {
                write!(f, "entry ({i}, {j}) = {value} on a non-edge")
            }
            Violation::RowSum { i, sum } => write!(f, "row {i} sums to {sum}"),
            Violation::ColumnSum { j, sum } => write!(f, "column {j} sums to {sum}"),
        }
    }
}

/// Checks range, support against `t`, and double stochasticity, in that order.
pub fn validate(w: &DMatrix<f64>, t: &Topology) -> std::result::Result<(), Violation> {
    validate_with(w, Some(t), SUM_TOL)
}

/// Like [`validate`] but without a support pattern.
pub fn validate_doubly_stochastic(w: &DMatrix<f64>) -> std::result::Result<(), Violation> {
    validate_with(w, None, SUM_TOL)
}

pub(crate) fn validate_with(
    w: &DMatrix<f64>,
    t: Option<&Topology>,
    sum_tol: f64,
) -> std::result::Result<(), Violation> {
    let n = t.map_or(w.nrows(), Topology::n);
    if w.nrows() != n || w.ncols() != n {
        return Err(Violation::Shape {
            rows: w.nrows(),
            cols: w.ncols(),
            n,
        });
    }
    for i in 0..n {
        for j in 0..n {
            let v = w[(i, j)];
            if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v) {
                return Err(Violation::Range { i, j, value: v });
            }
        }
    }
    if let Some(t) = t {
        for i in 0..n {
            for j in 0..n {
                if !t.in_support(i, j) && w[(i, j)].abs() > RANGE_TOL {
                    return Err(Violation::Support {
                        i,
                        j,
                        value: w[(i, j)],
                    });
                }
            }
        }
    }
    for i in 0..n {
        let sum = w.row(i).sum();
        if (sum - 1.0).abs() > sum_tol {
            return Err(Violation::RowSum { i, sum });
        }
    }
    for j in 0..n {
        let sum = w.column(j).sum();
        if (sum - 1.0).abs() > sum_tol {
            return Err(Violation::ColumnSum { j, sum });
        }
    }
    Ok(())
}

fn clamp_entries(w: &mut DMatrix<f64>, t: Option<&Topology>) {
    let n = w.nrows();
    for j in 0..w.ncols() {
        for i in 0..n {
            let v = &mut w[(i, j)];
            if t.is_some_and(|t| !t.in_support(i, j)) {
                *v = 0.0;
            } else {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
}

fn violation_error(v: Violation) -> Error {
    match v {
        Violation::Support { i, j, value } => Error::SupportViolation { i, j, value },
        Violation::Shape { .. } => Error::DimensionMismatch(v.to_string()),
        other => Error::InvalidParameter(other.to_string()),
    }
}

impl MixingMatrix {
    /// Validates `w` against `t`, clamping entries within [`RANGE_TOL`] of the bounds.
    pub fn new(mut w: DMatrix<f64>, t: &Topology) -> Result<Self> {
        validate(&w, t).map_err(violation_error)?;
        clamp_entries(&mut w, Some(t));
        Ok(MixingMatrix { w })
    }

    /// Validates only range and double stochasticity (no support pattern).
    pub fn doubly_stochastic(mut w: DMatrix<f64>) -> Result<Self> {
        validate_doubly_stochastic(&w).map_err(violation_error)?;
        clamp_entries(&mut w, None);
        Ok(MixingMatrix { w })
    }

    /// Wraps `w` without any checks. Intended for negative controls in tests.
    pub fn from_matrix_unchecked(w: DMatrix<f64>) -> Self {
        MixingMatrix { w }
    }

    pub fn identity(n: usize) -> Self {
        MixingMatrix {
            w: DMatrix::identity(n, n),
        }
    }

    /// Exact averaging `(1/n)𝟙𝟙ᵀ`.
    pub fn uniform(n: usize) -> Self {
        MixingMatrix {
            w: linalg::averaging(n),
        }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.w
    }

    pub fn is_symmetric(&self) -> bool {
        self.w == self.w.transpose()
    }

    /// Plain-text dump: `n` on the first line then `n` rows of 17-significant-digit floats.
    pub fn to_text(&self) -> String {
        let n = self.n();
        let mut s = format!("{n}\n");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.16e}", self.w[(i, j)])).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    /// Parses [`MixingMatrix::to_text`] output and checks double stochasticity.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix dump".into()))?
            .parse()
            .map_err(|_| Error::Parse("bad dimension line".into()))?;
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing row {i}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad float `{s}`"))))
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(Error::Parse(format!("row {i} has {} entries, expected {n}", vals.len())));
            }
            for (j, v) in vals.into_iter().enumerate() {
                w[(i, j)] = v;
            }
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing rows after matrix".into()));
        }
        Self::doubly_stochastic(w)
    }
}

/// Metropolis-Hastings weights `1/(1 + max(deg_i, deg_j))` on edges, remainder on the diagonal.
pub fn metropolis_hastings(t: &Topology) -> MixingMatrix {
    let n = t.n();
    let mut w = DMatrix::zeros(n, n);
    for &(i, j) in t.edges() {
        let v = 1.0 / (1.0 + t.degree(i).max(t.degree(j)) as f64);
        w[(i, j)] = v;
        w[(j, i)] = v;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix { w }
}

/// Block matrix performing uniform averaging inside each clique.
pub fn uniform_clique_averaging(p: &CliquePartition, t: &Topology) -> Result<MixingMatrix> {
    let n = p.n();
    if t.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {n} nodes, topology has {}",
            t.n()
        )));
    }
    let mut w = DMatrix::zeros(n, n);
    for clique in p.cliques() {
        let v = 1.0 / clique.len() as f64;
        for &a in clique {
            for &b in clique {
                if !t.in_support(a, b) {
                    return Err(Error::SupportViolation { i: a, j: b, value: v });
                }
                w[(a, b)] = v;
            }
        }
    }
    Ok(MixingMatrix { w })
}

/// `‖W − (1/n)𝟙𝟙ᵀ‖₂`, the per-step contraction of disagreement.
pub fn deviation_operator_norm(w: &MixingMatrix) -> Result<f64> {
    let m = w.matrix() - linalg::averaging(w.n());
    linalg::spectral_norm(&m)
}

/// `p = 1 − ‖W − J‖₂²`.
pub fn consensus_factor(w: &MixingMatrix) -> Result<f64> {
    let dev = deviation_operator_norm(w)?;
    Ok(1.0 - dev * dev)
}

/// `δ = 1 − ‖W − J‖₂` (unsquared gap, reported next to [`consensus_factor`]).
pub fn spectral_gap(w: &MixingMatrix) -> Result<f64> {
    Ok(1.0 - deviation_operator_norm(w)?)
}

/// Matrix product `first · second`. Support is not checked on the product.
pub fn compose(first: &MixingMatrix, second: &MixingMatrix) -> Result<MixingMatrix> {
    if first.n() != second.n() {
        return Err(Error::DimensionMismatch(format!(
            "cannot compose {}x{} with {}x{}",
            first.n(),
            first.n(),
            second.n(),
            second.n()
        )));
    }
    MixingMatrix::doubly_stochastic(first.matrix() * second.matrix())
}

pub const SPECTRAL_GAP_ITERS: usize = 300;
pub const SPECTRAL_GAP_STEP0: f64 = 0.5;

/// Symmetric weights minimizing `‖W − J‖₂` by projected subgradient descent.
///
/// Starts from Metropolis-Hastings weights and keeps the best iterate, so the result
/// is never worse than that baseline.
pub fn optimal_spectral_gap_weights(t: &Topology, iters: usize, step0: f64) -> Result<MixingMatrix> {
    let n = t.n();
    let j = linalg::averaging(n);
    let params = GmeSolverParams::default();
    let mut w = metropolis_hastings(t).into_matrix();
    let (mut value, mut sub) = top_eigenpair(&(&w - &j));
    let mut best = (value, w.clone());
    for k in 0..iters {
        if value <= 1e-14 {
            break;
        }
        let step = step0 / ((k + 1) as f64).sqrt();
        let candidate = project_feasible(&(&w - sub * step), t, &params)?.into_matrix();
        w = (&candidate + candidate.transpose()) * 0.5;
        (value, sub) = top_eigenpair(&(&w - &j));
        if value < best.0 {
            best = (value, w.clone());
        }
    }
    MixingMatrix::new(best.1, t)
}

/// Largest |eigenvalue| of a symmetric matrix and its subgradient `sign(λ)·uuᵀ`.
fn top_eigenpair(m: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let (idx, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, &l)| (i, l))
        .unwrap_or((0, 0.0));
    let u = eig.eigenvectors.column(idx);
    (lambda.abs(), (u * u.transpose()) * lambda.signum())
}
