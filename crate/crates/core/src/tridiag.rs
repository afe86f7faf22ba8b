//! Tridiagonal matrices: Thomas factorization and Sturm counts.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rows `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`; `lower[0]` and
/// `upper[n-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> Tridiagonal<T> {
    pub fn new(lower: Vec<T>, diag: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != diag.len() || upper.len() != diag.len() {
            return Err(Error::InvalidParameter("tridiagonal bands of unequal length".into()));
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.upper[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    /// `a * I + b * self`.
    pub fn shifted(&self, a: T, b: T) -> Self {
        Self {
            lower: self.lower.iter().map(|&v| b * v).collect(),
            diag: self.diag.iter().map(|&v| a + b * v).collect(),
            upper: self.upper.iter().map(|&v| b * v).collect(),
        }
    }

    /// LU factorization without pivoting (Thomas algorithm).
    pub fn factor(&self) -> Result<TridiagonalLu<T>> {
        let n = self.len();
        let mut multipliers = vec![T::zero(); n];
        let mut pivots = vec![T::zero(); n];
        for i in 0..n {
            let mut p = self.diag[i];
            if i > 0 {
                let m = self.lower[i] / pivots[i - 1];
                multipliers[i] = m;
                p -= m * self.upper[i - 1];
            }
            if p == T::zero() || !p.is_finite() {
                return Err(Error::LinearSolve(format!("zero or non-finite pivot in row {i}")));
            }
            pivots[i] = p;
        }
        Ok(TridiagonalLu {
            multipliers,
            pivots,
            upper: self.upper.clone(),
        })
    }

    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let mut x = rhs.to_vec();
        self.factor()?.solve_in_place(&mut x)?;
        Ok(x)
    }
}

#[derive(Debug, Clone)]
pub struct TridiagonalLu<T> {
    multipliers: Vec<T>,
    pivots: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> TridiagonalLu<T> {
    pub fn solve_in_place(&self, x: &mut [T]) -> Result<()> {
        let n = self.pivots.len();
        if x.len() != n {
            return Err(Error::LinearSolve(format!(
                "rhs of length {} for {n} unknowns",
                x.len()
            )));
        }
        for i in 1..n {
            let prev = x[i - 1];
            x[i] -= self.multipliers[i] * prev;
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            if i + 1 < n {
                v -= self.upper[i] * x[i + 1];
            }
            x[i] = v / self.pivots[i];
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::LinearSolve("non-finite solution".into()))
        }
    }
}

/// Number of eigenvalues strictly below `shift` of the symmetric tridiagonal
/// matrix with diagonal `diag` and off-diagonal `off` (`off[i]` couples `i`
/// and `i+1`).
pub fn sturm_count<T: Scalar>(diag: &[T], off: &[T], shift: T) -> usize {
    let tiny = T::min_positive_value().sqrt();
    let mut count = 0;
    let mut q = T::one();
    for i in 0..diag.len() {
        q = if i == 0 {
            diag[0] - shift
        } else {
            diag[i] - shift - off[i - 1] * off[i - 1] / q
        };
        if q.abs() < tiny {
            q = -tiny;
        }
        if q < T::zero() {
            count += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_solves_random_dominant_system() {
        let n = 9;
        let lower: Vec<f64> = (0..n).map(|i| -1.0 - 0.1 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.5 + 0.05 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 4.0 + (i as f64).sin()).collect();
        let a = Tridiagonal::new(lower, diag, upper).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let b = a.mul_vec(&x);
        let y = a.solve(&b).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_an_error() {
        let a = Tridiagonal::new(vec![0.0; 2], vec![0.0, 1.0], vec![0.0; 2]).unwrap();
        assert!(matches!(a.factor(), Err(Error::LinearSolve(_))));
    }

    #[test]
    fn sturm_count_of_laplacian() {
        // eigenvalues of tridiag(-1, 2, -1) of size n: 2 - 2 cos(k pi / (n+1))
        let n = 10;
        let diag = vec![2.0f64; n];
        let off = vec![-1.0f64; n - 1];
        let ev = |k: usize| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
        assert_eq!(sturm_count(&diag, &off, 0.0), 0);
        assert_eq!(sturm_count(&diag, &off, 0.5 * (ev(3) + ev(4))), 3);
        assert_eq!(sturm_count(&diag, &off, 5.0), n);
    }
}
