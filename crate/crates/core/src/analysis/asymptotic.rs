//! Asymptotic covariance of the double-averaged center and the reduced
//! (spatial average, center) system behind it.

use crate::error::{Error, Result};
use crate::linalg::{mat_inverse, mat_mul, Matrix};
use crate::problems::QuadraticProblem;

/// `V = A⁻¹ Σ A⁻ᵀ`: limiting covariance of `√(tp) (z_t − x*)`.
pub fn asymptotic_da_variance(problem: &QuadraticProblem) -> Result<Matrix> {
    let inv = mat_inverse(problem.a())?;
    mat_mul(&mat_mul(&inv, problem.noise_cov())?, &inv.transpose())
}

fn check_rates(eta: f64, beta: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::param("eta", "must be positive"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", "must be positive"));
    }
    Ok(())
}

fn blocks(d: usize, parts: [[&Matrix; 2]; 2]) -> Matrix {
    let mut out = Matrix::zeros(2 * d, 2 * d);
    for (bi, row) in parts.iter().enumerate() {
        for (bj, block) in row.iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    out[(bi * d + i, bj * d + j)] = block[(i, j)];
                }
            }
        }
    }
    out
}

/// `L = [[A + (α/η)I, −(α/η)I], [−(β/η)I, (β/η)I]]`, so that the reduced
/// system reads `U ← (I − ηL) U + Ξ`.
pub fn reduced_block(a: &Matrix, eta: f64, alpha: f64, beta: f64) -> Result<Matrix> {
    check_rates(eta, beta)?;
    if !a.is_square() {
        return Err(Error::Dimension {
            context: "reduced_block",
            expected: a.rows(),
            actual: a.cols(),
        });
    }
    let d = a.rows();
    let id = Matrix::identity(d);
    let top_left = a.add(&id.scaled(alpha / eta))?;
    let top_right = id.scaled(-alpha / eta);
    let bottom_left = id.scaled(-beta / eta);
    let bottom_right = id.scaled(beta / eta);
    Ok(blocks(d, [[&top_left, &top_right], [&bottom_left, &bottom_right]]))
}

/// `L⁻¹ = [[A⁻¹, (α/β)A⁻¹], [A⁻¹, (η/β)I + (α/β)A⁻¹]]`.
pub fn reduced_block_inverse(a: &Matrix, eta: f64, alpha: f64, beta: f64) -> Result<Matrix> {
    check_rates(eta, beta)?;
    let inv = mat_inverse(a)?;
    let d = a.rows();
    let scaled = inv.scaled(alpha / beta);
    let corner = Matrix::identity(d).scaled(eta / beta).add(&scaled)?;
    Ok(blocks(d, [[&inv, &scaled], [&inv, &corner]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::NoiseDist;

    #[test]
    fn identity_problem_gives_identity() {
        let q = QuadraticProblem::new(Matrix::identity(3), vec![0.0; 3], Matrix::identity(3), NoiseDist::Gaussian)
            .unwrap();
        assert!(asymptotic_da_variance(&q).unwrap().max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn scalar_case() {
        let q = QuadraticProblem::scalar(2.0, 0.0, 9.0).unwrap();
        assert!((asymptotic_da_variance(&q).unwrap()[(0, 0)] - 2.25).abs() < 1e-15);
    }

    #[test]
    fn closed_form_inverse_matches_numeric() {
        let a = Matrix::diag(&[1.0, 2.0]).unwrap();
        let (eta, alpha, beta) = (0.1, 0.05, 0.2);
        let l = reduced_block(&a, eta, alpha, beta).unwrap();
        let numeric = mat_inverse(&l).unwrap();
        let closed = reduced_block_inverse(&a, eta, alpha, beta).unwrap();
        assert!(numeric.max_abs_diff(&closed) < 1e-10);
        assert!(mat_mul(&l, &closed).unwrap().max_abs_diff(&Matrix::identity(4)) < 1e-12);
    }

    #[test]
    fn closed_form_inverse_dense_curvature() {
        let a = Matrix::from_rows(&[vec![2.0, 0.5, 0.0], vec![0.5, 1.5, 0.3], vec![0.0, 0.3, 1.0]]).unwrap();
        let closed = reduced_block_inverse(&a, 0.05, 0.02, 0.16).unwrap();
        let l = reduced_block(&a, 0.05, 0.02, 0.16).unwrap();
        assert!(mat_mul(&closed, &l).unwrap().max_abs_diff(&Matrix::identity(6)) < 1e-10);
    }
}
