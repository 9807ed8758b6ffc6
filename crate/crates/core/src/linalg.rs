//! Dense solves for the capacity system with residual and conditioning
//! diagnostics.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    Singular,
    #[error("condition estimate {0:.3e} exceeds the limit {1:.1e}")]
    IllConditioned(f64, f64),
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    /// ‖A x − b‖∞
    pub residual: f64,
    /// Estimate of κ₁(A) = ‖A‖₁ ‖A⁻¹‖₁.
    pub condition: f64,
    /// Estimate of ‖A⁻¹‖₁.
    pub inverse_norm: f64,
}

/// Hager's estimator of ‖A⁻¹‖₁ from solves with A and Aᵀ.
fn inverse_norm_1(
    n: usize,
    solve: impl Fn(&DVector<f64>) -> DVector<f64>,
    solve_t: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> f64 {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = solve(&x);
        est = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = solve_t(&xi);
        let (j, zmax) =
            z.iter().enumerate().fold(
                (0, 0.0),
                |acc, (i, v)| {
                    if v.abs() > acc.1 {
                        (i, v.abs())
                    } else {
                        acc
                    }
                },
            );
        if zmax <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    est
}

fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn finish(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: DVector<f64>,
    inverse_norm: f64,
    limit: f64,
) -> Result<Solution, SolveError> {
    let condition = norm_1(a) * inverse_norm;
    if !condition.is_finite() || condition > limit {
        return Err(SolveError::IllConditioned(condition, limit));
    }
    let residual = (a * &x - b).amax();
    Ok(Solution {
        x,
        residual,
        condition,
        inverse_norm,
    })
}

/// Cholesky solve for symmetric positive definite A.
pub fn solve_spd(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    cond_limit: f64,
) -> Result<Solution, SolveError> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or(SolveError::NotPositiveDefinite)?;
    let x = chol.solve(b);
    let inv = inverse_norm_1(a.nrows(), |v| chol.solve(v), |v| chol.solve(v));
    finish(a, b, x, inv, cond_limit)
}

/// LU with partial pivoting for general A.
pub fn solve_general(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    cond_limit: f64,
) -> Result<Solution, SolveError> {
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or(SolveError::Singular)?;
    let lu_t = a.transpose().lu();
    let n = a.nrows();
    let inv = inverse_norm_1(
        n,
        |v| {
            lu.solve(v)
                .unwrap_or_else(|| DVector::from_element(n, f64::INFINITY))
        },
        |v| {
            lu_t.solve(v)
                .unwrap_or_else(|| DVector::from_element(n, f64::INFINITY))
        },
    );
    finish(a, b, x, inv, cond_limit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let s = solve_spd(&a, &b, 1e12).unwrap();
        assert!((s.x[0] - 1.0 / 11.0).abs() < 1e-15);
        assert!((s.x[1] - 7.0 / 11.0).abs() < 1e-15);
        assert!(s.residual < 1e-15);
        // ‖A‖₁ = 5, ‖A⁻¹‖₁ = 5/11.
        assert!((s.condition - 25.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn general_matches_spd_on_symmetric_input() {
        let a = DMatrix::from_fn(6, 6, |i, j| {
            1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { 2.0 } else { 0.0 }
        });
        let b = DVector::from_element(6, 1.0);
        let s = solve_spd(&a, &b, 1e12).unwrap();
        let g = solve_general(&a, &b, 1e12).unwrap();
        assert!((s.x - g.x).amax() < 1e-13);
        assert!((s.condition - g.condition).abs() < 1e-9 * s.condition);
    }

    #[test]
    fn failures_are_diagnosed() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let b = DVector::from_element(2, 1.0);
        assert_eq!(
            solve_spd(&a, &b, 1e12).unwrap_err(),
            SolveError::NotPositiveDefinite
        );
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(solve_general(&sing, &b, 1e12).is_err());
        let near = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-14]);
        assert!(matches!(
            solve_spd(&near, &b, 1e12),
            Err(SolveError::IllConditioned(..)) | Err(SolveError::NotPositiveDefinite)
        ));
    }
}
