//! Dense complex LU factorization with partial pivoting.
//!
//! Circuit matrices at desk scale stay well under ~100 unknowns, so a dense
//! factorization is both the simplest and the fastest option. One
//! factorization serves any number of right-hand sides, which the noise
//! analysis leans on heavily.

use num_complex::Complex64;

use super::MnaError;

/// LU factors of a square complex matrix.
#[derive(Debug)]
pub struct LuFactors {
    n: usize,
    lu: Vec<Complex64>,
    pivots: Vec<usize>,
}

#[allow(clippy::needless_range_loop)] // indexing tracks the packed LU layout
impl LuFactors {
    /// Factor a row-major `n × n` matrix. `freq` only labels the error.
    pub fn factor(mut a: Vec<Complex64>, n: usize, freq: f64) -> Result<Self, MnaError> {
        assert_eq!(a.len(), n * n);
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let mut max_val = a[k * n + k].norm_sqr();
            let mut max_row = k;
            for i in (k + 1)..n {
                let v = a[i * n + k].norm_sqr();
                if v > max_val {
                    max_val = v;
                    max_row = i;
                }
            }
            if max_val == 0.0 {
                return Err(MnaError::SingularMatrix { freq, pivot: k });
            }
            pivots[k] = max_row;
            if max_row != k {
                for j in 0..n {
                    a.swap(k * n + j, max_row * n + j);
                }
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let factor = a[i * n + k] / pivot;
                a[i * n + k] = factor;
                for j in (k + 1)..n {
                    let akj = a[k * n + j];
                    a[i * n + j] -= factor * akj;
                }
            }
        }
        Ok(Self { n, lu: a, pivots })
    }

    /// Solve `A·x = b` for one right-hand side.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x = b.to_vec();
        // Rows were fully interchanged during factorization, so the stored
        // L follows the final row order: permute the right-hand side first,
        // then run the triangular solves.
        for k in 0..n {
            x.swap(k, self.pivots[k]);
        }
        for k in 0..n {
            let xk = x[k];
            for i in (k + 1)..n {
                x[i] -= self.lu[i * n + k] * xk;
            }
        }
        for k in (0..n).rev() {
            for j in (k + 1)..n {
                let xj = x[j];
                x[k] -= self.lu[k * n + j] * xj;
            }
            x[k] /= self.lu[k * n + k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_small_complex_system() {
        // [2 1; 1 3j] x = [3; 1+3j] has solution close to hand algebra.
        let a = vec![c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 3.0)];
        let b = vec![c(3.0, 0.0), c(1.0, 3.0)];
        let lu = LuFactors::factor(a.clone(), 2, 0.0).unwrap();
        let x = lu.solve(&b);
        // Check the residual instead of hand-derived values.
        let r0 = a[0] * x[0] + a[1] * x[1] - b[0];
        let r1 = a[2] * x[0] + a[3] * x[1] - b[1];
        assert!(r0.norm() < 1e-14 && r1.norm() < 1e-14);
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let a = vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let lu = LuFactors::factor(a, 2, 0.0).unwrap();
        let x = lu.solve(&[c(5.0, 0.0), c(7.0, 0.0)]);
        assert_relative_eq!(x[0].re, 7.0, max_relative = 1e-14);
        assert_relative_eq!(x[1].re, 5.0, max_relative = 1e-14);
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let a = vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)];
        match LuFactors::factor(a, 2, 42.0) {
            Err(MnaError::SingularMatrix { freq, pivot }) => {
                assert_eq!(freq, 42.0);
                assert_eq!(pivot, 1);
            }
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn manufactured_solution_with_heavy_pivoting() {
        // Random dense systems large enough to exercise long swap chains.
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut rng = move || {
            seed = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((seed >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for n in [3usize, 17, 40] {
            let a: Vec<Complex64> = (0..n * n).map(|_| c(rng(), rng())).collect();
            let x_true: Vec<Complex64> = (0..n).map(|i| c(i as f64 + 1.0, -0.5)).collect();
            let mut b = vec![c(0.0, 0.0); n];
            for i in 0..n {
                for j in 0..n {
                    b[i] += a[i * n + j] * x_true[j];
                }
            }
            let lu = LuFactors::factor(a, n, 0.0).unwrap();
            let x = lu.solve(&b);
            for (got, want) in x.iter().zip(&x_true) {
                assert!((got - want).norm() < 1e-10, "n={n}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn multiple_rhs_reuse_factorization() {
        let a = vec![c(4.0, 1.0), c(1.0, 0.0), c(2.0, 0.0), c(3.0, -1.0)];
        let lu = LuFactors::factor(a.clone(), 2, 0.0).unwrap();
        for rhs in [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]] {
            let x = lu.solve(&rhs);
            let r0 = a[0] * x[0] + a[1] * x[1] - rhs[0];
            let r1 = a[2] * x[0] + a[3] * x[1] - rhs[1];
            assert!(r0.norm() < 1e-14 && r1.norm() < 1e-14);
        }
    }
}
