//! Algebraic relations between reception times of a common emission.
//!
//! For reception times `t_i` of one event at sensors `a_i`, the matrix
//! `D_ij = (t_i − t_j)² − ‖a_i − a_j‖²` has rank at most `n + 1`: embed the
//! event and the receptions as points `(t, x)` and `(t_i, a_i)` of Minkowski
//! space, where the event is light-like separated from every reception, and
//! the Cayley–Menger matrix of those points contains `D` as a block.

use crate::error::{Error, Result};
use crate::lateration::{combinations, SensorArray};
use crate::numkernel::{determinant, Matrix};

/// Default acceptance threshold for [`relation_residual`].
pub const DEFAULT_RESIDUAL_THRESHOLD: f64 = 1e-6;

/// The matrix `D` for one choice of reception times.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMatrix {
    matrix: Matrix,
    dim: usize,
}

impl RelationMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Spatial dimension `n` of the sensors.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }
}

/// Builds `D_ij = (t_i − t_j)² − d_ij²`.
pub fn build_d(sensors: &SensorArray, times: &[f64]) -> Result<RelationMatrix> {
    let m = sensors.len();
    if times.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: times.len(),
        });
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("reception times"));
    }
    let mut d = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i + 1..m {
            let dt = (times[i] - times[j]).abs();
            let dx = sensors.distance(i, j);
            // factored form keeps relative accuracy near the light cone
            let v = (dt - dx) * (dt + dx);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(RelationMatrix {
        matrix: d,
        dim: sensors.dim(),
    })
}

/// `|det S| / Π‖row_i(S)‖`, with `0/0 = 0`. Always in `[0, 1]`.
pub fn hadamard_ratio(s: &Matrix) -> f64 {
    let denom: f64 = (0..s.rows())
        .map(|i| s.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .product();
    if denom == 0.0 {
        return 0.0;
    }
    (determinant(s).abs() / denom).min(1.0)
}

/// Scale-free surrogate for `det D = 0`.
///
/// With `k = n + 2`: for `m = k` this is the Hadamard ratio of `D`; for
/// `m > k` the maximum Hadamard ratio over all `k × k` minors; for `m < k`
/// the relation is vacuous and the residual is 0.
pub fn relation_residual(d: &RelationMatrix) -> f64 {
    let k = d.dim + 2;
    let m = d.size();
    if m < k {
        return 0.0;
    }
    if m == k {
        return hadamard_ratio(&d.matrix);
    }
    let subsets = combinations(m, k);
    let mut worst: f64 = 0.0;
    for rows in &subsets {
        for cols in &subsets {
            worst = worst.max(hadamard_ratio(&d.matrix.select(rows, cols)));
        }
    }
    worst
}

/// A real quadratic form used for Cayley–Menger matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadraticForm {
    /// `‖v‖²` on `R^n`.
    Euclidean(usize),
    /// `t² − ‖u‖²` on vectors `(t, u)` with `u ∈ R^n`; vectors have length `n + 1`.
    Minkowski(usize),
}

impl QuadraticForm {
    /// Length of the vectors the form acts on.
    pub fn vector_len(&self) -> usize {
        match *self {
            QuadraticForm::Euclidean(n) => n,
            QuadraticForm::Minkowski(n) => n + 1,
        }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            QuadraticForm::Euclidean(_) => v.iter().map(|x| x * x).sum(),
            QuadraticForm::Minkowski(_) => v[0] * v[0] - v[1..].iter().map(|x| x * x).sum::<f64>(),
        }
    }
}

/// Bordered Cayley–Menger matrix of `points` under `form`.
///
/// For points `v_0..v_m` this is the `(m+2) × (m+2)` matrix with a zero
/// corner, a border of ones and `δ_ij = q(v_i − v_j)` inside. Its rank is
/// `r + 2`, where `r` is the rank of `q` on the span of the `v_i − v_0`.
pub fn cayley_menger(points: &[Vec<f64>], form: QuadraticForm) -> Result<Matrix> {
    let len = form.vector_len();
    for p in points {
        if p.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: p.len(),
            });
        }
    }
    let k = points.len() + 1;
    let mut c = Matrix::zeros(k, k);
    for i in 1..k {
        c[(0, i)] = 1.0;
        c[(i, 0)] = 1.0;
    }
    let mut diff = vec![0.0; len];
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            for (d, (a, b)) in diff.iter_mut().zip(points[i].iter().zip(&points[j])) {
                *d = a - b;
            }
            let q = form.eval(&diff);
            c[(i + 1, j + 1)] = q;
            c[(j + 1, i + 1)] = q;
        }
    }
    Ok(c)
}
