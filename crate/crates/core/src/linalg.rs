//! Complex least squares used by the greedy solvers and the gain projection.

use nalgebra::DMatrix;

use crate::C64;

/// Relative singular-value cutoff for rank-deficient systems.
pub const PINV_RTOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: DMatrix<C64>,
    /// True when the thin-QR diagonal revealed (near) rank deficiency and the
    /// solution came from a thresholded pseudo-inverse.
    pub rank_deficient: bool,
}

/// Minimizes `||A X - B||_F` through a thin QR of `A` (no normal equations).
/// Falls back to an SVD pseudo-inverse with relative cutoff [`PINV_RTOL`]
/// when `A` is numerically rank deficient.
pub fn least_squares(a: &DMatrix<C64>, b: &DMatrix<C64>) -> LeastSquares {
    assert_eq!(a.nrows(), b.nrows(), "least_squares: row mismatch");
    let n = a.ncols();
    if n == 0 {
        return LeastSquares { x: DMatrix::zeros(0, b.ncols()), rank_deficient: false };
    }
    if a.nrows() >= n {
        let qr = a.clone().qr();
        let r = qr.r();
        let diag_max = (0..n).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
        let diag_min = (0..n).map(|i| r[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        if diag_max > 0.0 && diag_min > PINV_RTOL * diag_max {
            let qhb = qr.q().adjoint() * b;
            if let Some(x) = r.solve_upper_triangular(&qhb) {
                return LeastSquares { x, rank_deficient: false };
            }
        }
    }
    LeastSquares { x: pinv_solve(a, b), rank_deficient: true }
}

fn pinv_solve(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(a.ncols(), b.ncols());
    }
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut uhb = u.adjoint() * b;
    for (i, s) in svd.singular_values.iter().enumerate() {
        let inv = if *s > PINV_RTOL * smax { 1.0 / s } else { 0.0 };
        uhb.row_mut(i).scale_mut(inv);
    }
    v_t.adjoint() * uhb
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        DMatrix::from_fn(rows, cols, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn normal_equations_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(20, 4, &mut rng);
        let b = random(20, 3, &mut rng);
        let sol = least_squares(&a, &b);
        assert!(!sol.rank_deficient);
        let resid = &b - &a * &sol.x;
        assert!((a.adjoint() * resid).norm() < 1e-12);
    }

    #[test]
    fn single_column_is_scalar_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(10, 1, &mut rng);
        let b = random(10, 5, &mut rng);
        let sol = least_squares(&a, &b);
        let expect = a.adjoint() * &b / C64::new(a.norm_squared(), 0.0);
        assert!((sol.x - expect).norm() < 1e-12);
    }

    #[test]
    fn duplicate_columns_use_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let col = random(8, 1, &mut rng);
        let a = DMatrix::from_columns(&[col.column(0), col.column(0)]);
        let b = &col * C64::new(2.0, 0.0);
        let sol = least_squares(&a, &b);
        assert!(sol.rank_deficient);
        // Minimum-norm split of the coefficient 2 over the duplicate pair.
        assert!((sol.x[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-9);
        assert!((sol.x[(1, 0)] - C64::new(1.0, 0.0)).norm() < 1e-9);
    }
}
