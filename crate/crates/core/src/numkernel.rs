//! Small dense linear algebra: a row-major [`Matrix`], least squares, numeric
//! rank, determinants and a cancellation-free quadratic solver.
//!
//! Singular values and least squares are delegated to `nalgebra`'s SVD. The
//! determinant is a plain partially pivoted elimination so that it can be
//! cross-checked against exact rational arithmetic in tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative threshold for [`numeric_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Dense real matrix stored in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::LengthMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length must equal column count");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// Submatrix picking the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                data.push(self[(i, j)]);
            }
        }
        Self {
            rows: rows.len(),
            cols: cols.len(),
            data,
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Singular values in descending order.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    if a.rows == 0 || a.cols == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = a.to_nalgebra().singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numeric_rank(a: &Matrix, rel_tol: f64) -> usize {
    let sv = singular_values(a);
    let Some(&max) = sv.first() else {
        return 0;
    };
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Minimiser of `‖A·x − b‖₂` for a matrix with full column rank.
///
/// Fails with [`Error::RankDeficient`] when the column rank at `rel_tol` is
/// below the number of columns.
pub fn least_squares_solve(a: &Matrix, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    if b.len() != a.rows {
        return Err(Error::LengthMismatch {
            expected: a.rows,
            actual: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    let k = a.cols;
    if k == 0 {
        return Ok(Vec::new());
    }
    let svd = a.to_nalgebra().svd(true, true);
    let max = svd.singular_values.max();
    let rank = if max > 0.0 {
        svd.singular_values.iter().filter(|&&s| s > rel_tol * max).count()
    } else {
        0
    };
    if rank < k {
        return Err(Error::RankDeficient { rank, expected: k });
    }
    let x = svd
        .solve(&DVector::from_column_slice(b), 0.0)
        .map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

/// Determinant by Gaussian elimination with partial pivoting.
///
/// Intended for the small matrices used here (at most 8×8).
pub fn determinant(a: &Matrix) -> f64 {
    assert!(a.is_square(), "determinant of a non-square matrix");
    let n = a.rows;
    let mut m = a.data.clone();
    let mut det = 1.0;
    for col in 0..n {
        let (pivot, pmax) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..n {
                m.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        let p = m[col * n + col];
        det *= p;
        for r in col + 1..n {
            let f = m[r * n + col] / p;
            if f != 0.0 {
                for j in col + 1..n {
                    m[r * n + j] -= f * m[col * n + j];
                }
            }
        }
    }
    det
}

/// Solution set of `a·x² + b·x + c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadraticRoots {
    /// Two distinct real roots, ascending.
    TwoReal([f64; 2]),
    /// A (numerically) double root.
    OneReal(f64),
    NoReal,
    /// `|a| ≤ tol`: the equation is linear with this root.
    DegenerateLinear(f64),
    /// `|a| ≤ tol` and `|b| ≤ tol`.
    DegenerateAll,
}

impl QuadraticRoots {
    pub fn roots(&self) -> Vec<f64> {
        match *self {
            QuadraticRoots::TwoReal([r1, r2]) => vec![r1, r2],
            QuadraticRoots::OneReal(r) | QuadraticRoots::DegenerateLinear(r) => vec![r],
            QuadraticRoots::NoReal | QuadraticRoots::DegenerateAll => Vec::new(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            QuadraticRoots::TwoReal(_) => "two-real",
            QuadraticRoots::OneReal(_) => "one-real",
            QuadraticRoots::NoReal => "no-real",
            QuadraticRoots::DegenerateLinear(_) => "degenerate-linear",
            QuadraticRoots::DegenerateAll => "degenerate-all",
        }
    }
}

/// Real roots of `a·x² + b·x + c`, treating coefficients with magnitude at
/// most `tol` as zero for the leading two.
///
/// Uses `q = −(b + sign(b)·√disc)/2` with roots `q/a` and `c/q`. A
/// discriminant within a few ulps of zero is reported as a double root.
pub fn solve_quadratic(a: f64, b: f64, c: f64, tol: f64) -> QuadraticRoots {
    if a.abs() <= tol {
        return if b.abs() <= tol {
            QuadraticRoots::DegenerateAll
        } else {
            QuadraticRoots::DegenerateLinear(-c / b)
        };
    }
    let disc = b * b - 4.0 * a * c;
    let disc_scale = b * b + 4.0 * (a * c).abs();
    if disc.abs() <= 8.0 * f64::EPSILON * disc_scale {
        return QuadraticRoots::OneReal(-b / (2.0 * a));
    }
    if disc < 0.0 {
        return QuadraticRoots::NoReal;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    // q == 0 only when b == 0 and disc == 0, handled above
    let (r1, r2) = (q / a, c / q);
    if r1 <= r2 {
        QuadraticRoots::TwoReal([r1, r2])
    } else {
        QuadraticRoots::TwoReal([r2, r1])
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_rank_and_det() {
        let id = Matrix::identity(5);
        assert_eq!(numeric_rank(&id, 1e-10), 5);
        assert_eq!(determinant(&id), 1.0);
        assert_eq!(determinant(&Matrix::zeros(5, 5)), 0.0);
        assert_eq!(numeric_rank(&Matrix::zeros(5, 5), 1e-10), 0);
        assert_eq!(numeric_rank(&Matrix::zeros(0, 3), 1e-10), 0);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            Matrix::new(2, 2, vec![1.0; 3]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn least_squares_trivial() {
        let x = least_squares_solve(&Matrix::identity(3), &[1.0, 2.0, 3.0], 1e-8).unwrap();
        for (xi, e) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((xi - e).abs() < 1e-14);
        }
        let a = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let x = least_squares_solve(&a, &[0.0, 2.0], 1e-8).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn least_squares_rank_deficient() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]).unwrap();
        assert_eq!(
            least_squares_solve(&a, &[1.0, 2.0, 3.0], 1e-8),
            Err(Error::RankDeficient { rank: 1, expected: 2 })
        );
        let wide = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(least_squares_solve(&wide, &[1.0], 1e-8).is_err());
    }

    #[test]
    fn quadratic_examples() {
        assert_eq!(
            solve_quadratic(1.0, 0.0, -4.0, 1e-12),
            QuadraticRoots::TwoReal([-2.0, 2.0])
        );
        assert_eq!(
            solve_quadratic(0.0, 2.0, 0.0, 1e-12),
            QuadraticRoots::DegenerateLinear(0.0)
        );
        assert_eq!(solve_quadratic(0.0, 0.0, 1.0, 1e-12), QuadraticRoots::DegenerateAll);
        assert_eq!(solve_quadratic(1.0, 0.0, 1.0, 1e-12), QuadraticRoots::NoReal);
        assert_eq!(solve_quadratic(1.0, -2.0, 1.0, 1e-12), QuadraticRoots::OneReal(1.0));

        // 38173/3025 t² + 152/55 t = 0
        let r = solve_quadratic(38173.0 / 3025.0, 152.0 / 55.0, 0.0, 1e-12);
        let QuadraticRoots::TwoReal([lo, hi]) = r else {
            panic!("expected two roots, got {r:?}");
        };
        let expect = -8360.0 / 38173.0;
        assert!(((lo - expect) / expect).abs() < 1e-14);
        assert_eq!(hi, 0.0);
    }

    #[test]
    fn quadratic_no_cancellation() {
        // roots 1e-9 and 1e9; the naive formula loses the small one
        let r = solve_quadratic(1.0, -(1e9 + 1e-9), 1.0, 0.0);
        let QuadraticRoots::TwoReal([lo, hi]) = r else { panic!() };
        assert!((lo - 1e-9).abs() < 1e-22);
        assert!((hi - 1e9).abs() < 1e-6);
    }

    #[test]
    fn rank_of_constructed_rank4() {
        // rows 0..4 generic, row 4 = 2·row0 − row1 + 3·row3
        let mut rows = vec![
            vec![2.0, -1.0, 3.0, 0.5, 7.0],
            vec![1.0, 4.0, -2.0, 6.0, 0.0],
            vec![0.0, 3.0, 1.0, -1.0, 2.0],
            vec![5.0, 0.0, 2.0, 1.0, -3.0],
        ];
        let last: Vec<f64> = (0..5)
            .map(|j| 2.0 * rows[0][j] - rows[1][j] + 3.0 * rows[3][j])
            .collect();
        rows.push(last);
        let a = Matrix::from_rows(&rows).unwrap();
        assert_eq!(numeric_rank(&a, 1e-8), 4);
        assert!(determinant(&a).abs() < 1e-10);
    }

    fn mat_strategy(max_r: usize, max_c: usize) -> impl Strategy<Value = Matrix> {
        (1..=max_c)
            .prop_flat_map(move |c| (c..=max_r.max(c), Just(c)))
            .prop_flat_map(|(r, c)| {
                prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
            })
    }

    proptest! {
        #[test]
        fn residual_is_orthogonal_to_columns(
            a in mat_strategy(10, 6),
            seed in prop::collection::vec(-10.0f64..10.0, 10),
        ) {
            let b = &seed[..a.rows()];
            if let Ok(x) = least_squares_solve(&a, b, 1e-8) {
                let ax = a.mul_vec(&x);
                let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
                let g = a.transpose().mul_vec(&r);
                let scale = a.frobenius_norm() * norm(b);
                for gi in g {
                    prop_assert!(gi.abs() <= 1e-9 * scale.max(1e-300));
                }
            }
        }

        #[test]
        fn rank_is_permutation_and_scale_invariant(
            a in mat_strategy(6, 6),
            s in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
            shift in 0usize..6,
        ) {
            let r = numeric_rank(&a, 1e-8);
            let rows: Vec<usize> = (0..a.rows()).map(|i| (i + shift) % a.rows()).collect();
            let cols: Vec<usize> = (0..a.cols()).rev().collect();
            prop_assert_eq!(numeric_rank(&a.select(&rows, &cols), 1e-8), r);
            let scaled = Matrix::new(a.rows(), a.cols(), a.as_slice().iter().map(|v| v * s).collect()).unwrap();
            prop_assert_eq!(numeric_rank(&scaled, 1e-8), r);
        }

        #[test]
        fn quadratic_roots_have_small_residual(
            a in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
            b in -1e3f64..1e3,
            c in -1e3f64..1e3,
        ) {
            let scale = a.abs().max(b.abs()).max(c.abs());
            for r in solve_quadratic(a, b, c, 1e-12).roots() {
                let res = (a * r * r + b * r + c).abs();
                prop_assert!(res <= 1e-9 * scale * r.abs().powi(2).max(1.0), "root {} residual {}", r, res);
            }
        }

        #[test]
        fn det_2x2_closed_form(a in -1e3f64..1e3, b in -1e3f64..1e3, c in -1e3f64..1e3, d in -1e3f64..1e3) {
            let m = Matrix::from_rows(&[[a, b], [c, d]]).unwrap();
            let expect = a * d - b * c;
            let scale = (a * d).abs() + (b * c).abs();
            prop_assert!((determinant(&m) - expect).abs() <= 1e-12 * scale.max(1.0));
        }
    }
}
