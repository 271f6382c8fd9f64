//! Small dense least-squares helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of the smallest admissible pivot of `R` in the QR solve.
const RANK_TOL: f64 = 1e-10;
/// Ridge penalty, relative to the mean diagonal of `X'X`, used when the
/// design is rank deficient.
const RIDGE_SCALE: f64 = 1e-8;

/// Least-squares solver for a fixed design, reusable across responses.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    kind: Solver,
}

#[derive(Debug, Clone)]
enum Solver {
    Qr {
        q_t: DMatrix<f64>,
        r: DMatrix<f64>,
    },
    Ridge {
        x_t: DMatrix<f64>,
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    },
}

impl LeastSquares {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n == 0 || p == 0 {
            return Err(Error::DegenerateDesign(format!("empty design {n}x{p}")));
        }
        if n >= p {
            let qr = x.clone().qr();
            let r = qr.r();
            let diag: Vec<f64> = (0..p).map(|j| r[(j, j)].abs()).collect();
            let max = diag.iter().cloned().fold(0.0, f64::max);
            if max > 0.0 && diag.iter().all(|d| *d > RANK_TOL * max) {
                return Ok(LeastSquares {
                    kind: Solver::Qr {
                        q_t: qr.q().transpose(),
                        r,
                    },
                });
            }
        }
        let x_t = x.transpose();
        let gram = &x_t * x;
        let chol = ridge_cholesky(gram)
            .ok_or_else(|| Error::DegenerateDesign("design has no usable columns".into()))?;
        Ok(LeastSquares {
            kind: Solver::Ridge { x_t, chol },
        })
    }

    /// Whether the ridge fallback was needed.
    pub fn used_ridge(&self) -> bool {
        matches!(self.kind, Solver::Ridge { .. })
    }

    pub fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            Solver::Qr { q_t, r } => {
                let rhs = q_t * y;
                r.solve_upper_triangular(&rhs).expect("non-singular R")
            }
            Solver::Ridge { x_t, chol } => chol.solve(&(x_t * y)),
        }
    }
}

fn ridge_cholesky(mut gram: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let p = gram.nrows();
    let trace: f64 = (0..p).map(|j| gram[(j, j)]).sum();
    let penalty = RIDGE_SCALE * (trace / p as f64).max(f64::MIN_POSITIVE);
    for j in 0..p {
        gram[(j, j)] += penalty;
    }
    gram.cholesky()
}

/// Inverse of a symmetric positive semi-definite matrix, falling back to a
/// ridge-regularised inverse when it is singular.
pub fn sym_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = a.clone().cholesky() {
        let inv = ch.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return inv;
        }
    }
    match ridge_cholesky(a.clone()) {
        Some(ch) => ch.inverse(),
        None => DMatrix::zeros(a.nrows(), a.ncols()),
    }
}

/// Ordinary least squares with an intercept and one regressor.
pub fn simple_ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::DegenerateDesign(format!("need >= 2 paired observations, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if sxx <= 1e-24 * scale * scale * n as f64 {
        return Err(Error::Collinear("regressor has zero variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation with `n - 1` denominator.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn qr_solves_exact_system() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let ls = LeastSquares::new(&x).unwrap();
        assert!(!ls.used_ridge());
        let b = ls.solve(&y);
        assert_relative_eq!(b[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(b[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_column_falls_back_to_ridge() {
        let x = DMatrix::from_row_slice(4, 3, &[
            1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 3.0, 3.0,
        ]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let ls = LeastSquares::new(&x).unwrap();
        assert!(ls.used_ridge());
        let fitted = &x * ls.solve(&y);
        for (f, o) in fitted.iter().zip(y.iter()) {
            assert_relative_eq!(f, o, epsilon = 1e-5);
        }
    }

    #[test]
    fn simple_ols_rejects_constant_regressor() {
        assert!(matches!(simple_ols(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), Err(Error::Collinear(_))));
        let (a, b) = simple_ols(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert_relative_eq!(a, 1.0, epsilon = 1e-12);
        assert_relative_eq!(b, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn quantile_matches_type7() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_relative_eq!(quantile(&v, 0.5), 2.5);
        assert_relative_eq!(quantile(&v, 0.25), 1.75);
        assert_relative_eq!(quantile(&v, 1.0), 4.0);
    }
}
