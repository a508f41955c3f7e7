//! Small dense linear algebra: row-major matrices, products, inversion,
//! PSD Cholesky factors and a spectral-radius estimator.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Pivots at or below this magnitude mark a matrix as singular.
pub const PIVOT_EPS: f64 = 1e-12;

/// Maximum number of squarings in [`spectral_radius`].
pub const MAX_SQUARINGS: u32 = 64;

/// Dense row-major matrix of finite `f64` entries.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "Matrix::new",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        check_finite("Matrix::new", &data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::Dimension {
                    context: "Matrix::from_rows",
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
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
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Result<Self> {
        check_finite("Matrix::diag", entries)?;
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &e) in entries.iter().enumerate() {
            m.data[i * n + i] = e;
        }
        Ok(m)
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

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_square() && *self == self.transpose()
    }

    pub fn mat_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension {
                context: "Matrix::mat_vec",
                expected: self.cols,
                actual: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Self> {
        self.zip_with(other, "Matrix::add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Self> {
        self.zip_with(other, "Matrix::sub", |a, b| a - b)
    }

    /// Largest entrywise absolute difference; `inf` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    fn zip_with(
        &self,
        other: &Matrix,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Dimension {
                context,
                expected: self.rows * self.cols,
                actual: other.rows * other.cols,
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "matrix index out of range");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(i < self.rows && j < self.cols, "matrix index out of range");
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Standard matrix product.
pub fn mat_mul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension {
            context: "mat_mul",
            expected: a.cols,
            actual: b.rows,
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Result of the repeated-squaring spectral radius estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRadius {
    pub value: f64,
    /// False when the squaring cap was reached before two successive
    /// estimates agreed to the requested tolerance.
    pub converged: bool,
    pub squarings: u32,
}

/// Estimates `max |eigenvalue|` as `‖m^(2^k)‖^(1/2^k)`.
///
/// Each squaring is renormalised by its Frobenius norm and the logarithm of
/// the discarded scale is folded into a running log-rate, so the estimate
/// neither overflows for radii above one nor underflows below.
pub fn spectral_radius(m: &Matrix, tol: f64) -> Result<SpectralRadius> {
    if !m.is_square() {
        return Err(Error::Dimension {
            context: "spectral_radius",
            expected: m.rows,
            actual: m.cols,
        });
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let zero = SpectralRadius {
        value: 0.0,
        converged: true,
        squarings: 0,
    };
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Ok(zero);
    }
    let mut cur = m.scaled(1.0 / norm);
    let mut log_rate = norm.ln();
    let mut estimate = norm;
    let mut weight = 1.0_f64;
    for k in 1..=MAX_SQUARINGS {
        cur = mat_mul(&cur, &cur)?;
        weight *= 0.5;
        let norm = cur.frobenius_norm();
        if norm == 0.0 {
            // Nilpotent part exhausted: every eigenvalue is zero.
            return Ok(SpectralRadius { squarings: k, ..zero });
        }
        cur = cur.scaled(1.0 / norm);
        log_rate += weight * norm.ln();
        let next = log_rate.exp();
        if (next - estimate).abs() <= tol * next {
            return Ok(SpectralRadius {
                value: next,
                converged: true,
                squarings: k,
            });
        }
        estimate = next;
    }
    Ok(SpectralRadius {
        value: estimate,
        converged: false,
        squarings: MAX_SQUARINGS,
    })
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn mat_inverse(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension {
            context: "mat_inverse",
            expected: m.rows,
            actual: m.cols,
        });
    }
    let n = m.rows;
    let mut work = m.clone();
    let mut inv = Matrix::identity(n);
    for col in 0..n {
        let (pivot_row, magnitude) = (col..n)
            .map(|r| (r, work[(r, col)].abs()))
            .fold((col, -1.0), |best, cand| if cand.1 > best.1 { cand } else { best });
        if magnitude <= PIVOT_EPS {
            return Err(Error::Singular {
                pivot: col,
                magnitude,
            });
        }
        if pivot_row != col {
            swap_rows(&mut work, pivot_row, col);
            swap_rows(&mut inv, pivot_row, col);
        }
        let scale = 1.0 / work[(col, col)];
        work.row_mut(col).iter_mut().for_each(|v| *v *= scale);
        inv.row_mut(col).iter_mut().for_each(|v| *v *= scale);
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = work[(r, col)];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                work.data[r * n + j] -= factor * work.data[col * n + j];
                inv.data[r * n + j] -= factor * inv.data[col * n + j];
            }
        }
    }
    Ok(inv)
}

/// Solves `m x = rhs` through [`mat_inverse`]; adequate for the tiny
/// systems handled here.
pub fn solve(m: &Matrix, rhs: &[f64]) -> Result<Vec<f64>> {
    mat_inverse(m)?.mat_vec(rhs)
}

/// Lower-triangular `l` with `l lᵀ = m` for a symmetric positive
/// semidefinite `m`. Columns whose pivot vanishes (relative to the
/// diagonal scale) are left zero, so rank-deficient covariances work.
pub fn cholesky_psd(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension {
            context: "cholesky_psd",
            expected: m.rows,
            actual: m.cols,
        });
    }
    let n = m.rows;
    let scale = (0..n).fold(0.0_f64, |s, i| s.max(m[(i, i)].abs()));
    let eps = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag < -eps {
            return Err(Error::NotPsd { column: j });
        }
        if diag <= eps {
            for i in j + 1..n {
                let mut off = m[(i, j)];
                for k in 0..j {
                    off -= l[(i, k)] * l[(j, k)];
                }
                if off.abs() > eps.sqrt() * (1.0 + scale.sqrt()) {
                    return Err(Error::NotPsd { column: j });
                }
            }
            continue;
        }
        let pivot = diag.sqrt();
        l[(j, j)] = pivot;
        for i in j + 1..n {
            let mut off = m[(i, j)];
            for k in 0..j {
                off -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = off / pivot;
        }
    }
    Ok(l)
}

fn swap_rows(m: &mut Matrix, a: usize, b: usize) {
    let cols = m.cols;
    for j in 0..cols {
        m.data.swap(a * cols + j, b * cols + j);
    }
}

pub fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { context, index }),
        None => Ok(()),
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            Matrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn identity_product_is_noop() {
        let x = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 10.0]]);
        assert_eq!(mat_mul(&Matrix::identity(3), &x).unwrap(), x);
        assert_eq!(mat_mul(&x, &Matrix::identity(3)).unwrap(), x);
    }

    #[test]
    fn hand_product() {
        let a = m(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let b = m(&[&[1.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(mat_mul(&a, &b).unwrap(), m(&[&[2.0, 1.0], &[1.0, 1.0]]));
    }

    #[test]
    fn product_dimension_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(mat_mul(&a, &a), Err(Error::Dimension { .. })));
    }

    #[test]
    fn radius_of_diagonal() {
        let d = Matrix::diag(&[0.5, -0.9]).unwrap();
        let r = spectral_radius(&d, 1e-13).unwrap();
        assert!(r.converged);
        assert!((r.value - 0.9).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn radius_of_elastic_block_matches_quadratic_roots() {
        let (eta, alpha) = (0.1, 0.2);
        let block = m(&[&[1.0 - eta - alpha, alpha], &[alpha, 1.0 - alpha]]);
        // (1-eta-alpha-l)(1-alpha-l) = alpha^2
        let tr = 2.0 - eta - 2.0 * alpha;
        let det = (1.0 - eta - alpha) * (1.0 - alpha) - alpha * alpha;
        let disc = (tr * tr - 4.0 * det).sqrt();
        let oracle = ((tr + disc) / 2.0).abs().max(((tr - disc) / 2.0).abs());
        let r = spectral_radius(&block, 1e-13).unwrap();
        assert!((r.value - oracle).abs() < 1e-12);
        assert!((r.value - 0.95616).abs() < 1e-5);
    }

    #[test]
    fn radius_of_triangular_and_rotation() {
        let t = m(&[&[0.3, 5.0, -2.0], &[0.0, -0.7, 1.0], &[0.0, 0.0, 0.6]]);
        assert!((spectral_radius(&t, 1e-13).unwrap().value - 0.7).abs() < 1e-9);
        let (c, s) = (0.8 * 0.6_f64.cos(), 0.8 * 0.6_f64.sin());
        let rot = m(&[&[c, -s], &[s, c]]);
        assert!((spectral_radius(&rot, 1e-13).unwrap().value - 0.8).abs() < 1e-12);
    }

    #[test]
    fn radius_above_one_does_not_overflow() {
        let d = Matrix::diag(&[3.0, 1.5]).unwrap();
        let r = spectral_radius(&d, 1e-13).unwrap();
        assert!((r.value - 3.0).abs() < 1e-11);
    }

    #[test]
    fn radius_of_zero_and_nilpotent() {
        assert_eq!(spectral_radius(&Matrix::zeros(3, 3), 1e-12).unwrap().value, 0.0);
        let nil = m(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(spectral_radius(&nil, 1e-12).unwrap().value, 0.0);
    }

    #[test]
    fn radius_rejects_non_square() {
        assert!(spectral_radius(&Matrix::zeros(2, 3), 1e-9).is_err());
    }

    #[test]
    fn jordan_block_converges_slowly_but_correctly() {
        let j = m(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let r = spectral_radius(&j, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn inverse_of_identity_and_diagonal() {
        assert_eq!(mat_inverse(&Matrix::identity(4)).unwrap(), Matrix::identity(4));
        let inv = mat_inverse(&Matrix::diag(&[2.0, 4.0]).unwrap()).unwrap();
        assert_eq!(inv, Matrix::diag(&[0.5, 0.25]).unwrap());
    }

    #[test]
    fn inverse_needs_pivoting() {
        let a = m(&[&[0.0, 2.0], &[3.0, 1.0]]);
        let inv = mat_inverse(&a).unwrap();
        let prod = mat_mul(&a, &inv).unwrap();
        assert!(prod.max_abs_diff(&Matrix::identity(2)) < 1e-14);
    }

    #[test]
    fn inverse_reports_singular_pivot() {
        let a = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(mat_inverse(&a), Err(Error::Singular { pivot: 1, .. })));
    }

    #[test]
    fn cholesky_full_rank_and_deficient() {
        let s = m(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let l = cholesky_psd(&s).unwrap();
        assert!(mat_mul(&l, &l.transpose()).unwrap().max_abs_diff(&s) < 1e-14);

        let rank_one = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let l = cholesky_psd(&rank_one).unwrap();
        assert!(mat_mul(&l, &l.transpose()).unwrap().max_abs_diff(&rank_one) < 1e-14);

        assert_eq!(cholesky_psd(&Matrix::zeros(2, 2)).unwrap(), Matrix::zeros(2, 2));
        assert!(cholesky_psd(&m(&[&[1.0, 0.0], &[0.0, -1.0]])).is_err());
        assert!(cholesky_psd(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).is_err());
    }

    #[test]
    fn transpose_and_matvec() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        assert_eq!(a.transpose().transpose(), a);
        assert_eq!(a.mat_vec(&[1.0, 0.0, -1.0]).unwrap(), vec![-2.0, -2.0]);
        assert!(a.mat_vec(&[1.0]).is_err());
    }
}
