//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Solves `A·X = B` by partial-pivot LU and checks the residual against
/// `tol` (relative to the size of `B`).
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::SingularSystem("LU factorization hit a zero pivot".into()))?;
    let residual = (a * &x - b).amax();
    let scale = b.amax().max(1.0);
    if !(residual <= tol * scale) {
        return Err(Error::SingularSystem(format!("residual {residual:e} exceeds {tol:e}")));
    }
    Ok(x)
}

/// Row-major dense matrix from a closure.
pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, f)
}

/// Largest deviation of any row sum from one.
pub fn row_sum_error(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Unique stationary distribution of an irreducible stochastic matrix.
pub fn stationary(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // π(P − I) = 0 with the last equation replaced by Σπ = 1
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;
    let x = solve(&a, &b, 1e-9)?;
    Ok(x.iter().map(|v| v.max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_of_swap_is_uniform() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let pi = stationary(&p).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(matches!(solve(&a, &b, 1e-10), Err(Error::SingularSystem(_))));
    }
}
