//! Minimal dense symmetric-positive-definite machinery used by the weighted
//! posterior: a packed lower-triangular Cholesky factor that supports growing
//! by one row/column (kernel-matrix backing), rank-one updates (feature-space
//! backing), triangular solves, log-determinants and a cheap condition
//! estimate. Owning this code keeps the incremental-update and
//! refactorization policy in one place.

use crate::{Error, Result};

/// Packed lower-triangular Cholesky factor `L` of an SPD matrix `A = L L^T`.
///
/// Storage is row-major packed: row `i` occupies `i*(i+1)/2 .. i*(i+1)/2+i+1`.
#[derive(Debug, Clone)]
pub(crate) struct SpdFactor {
    n: usize,
    l: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl SpdFactor {
    pub fn empty() -> Self {
        SpdFactor { n: 0, l: Vec::new() }
    }

    /// Factors a dense symmetric matrix given in row-major order.
    pub fn from_dense(a: &[f64], n: usize) -> Result<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; row_start(n)];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                for k in 0..j {
                    sum -= l[row_start(i) + k] * l[row_start(j) + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::Conditioning(format!(
                            "pivot {sum:.3e} at index {i} during factorization"
                        )));
                    }
                    l[row_start(i) + i] = sum.sqrt();
                } else {
                    l[row_start(i) + j] = sum / l[row_start(j) + j];
                }
            }
        }
        Ok(SpdFactor { n, l })
    }

    /// Grows the factored matrix by one symmetric row/column.
    ///
    /// `col` holds the off-diagonal entries `A[new, 0..n]`, `diag` the new
    /// diagonal entry. Fails when the Schur complement is not positive, which
    /// signals the caller to refactorize or give up.
    pub fn append(&mut self, col: &[f64], diag: f64) -> Result<()> {
        debug_assert_eq!(col.len(), self.n);
        let mut row = col.to_vec();
        // Forward substitution: L row' = col.
        for i in 0..self.n {
            let mut sum = row[i];
            for k in 0..i {
                sum -= self.l[row_start(i) + k] * row[k];
            }
            row[i] = sum / self.l[row_start(i) + i];
        }
        let pivot = diag - row.iter().map(|v| v * v).sum::<f64>();
        if pivot <= diag * 1e-14 || !pivot.is_finite() {
            return Err(Error::Conditioning(format!(
                "append pivot {pivot:.3e} against diagonal {diag:.3e}"
            )));
        }
        self.l.extend_from_slice(&row);
        self.l.push(pivot.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Rank-one update: refactors in place so the factor represents
    /// `A + v v^T`. Standard hyperbolic-rotation-free algorithm; `v` is
    /// consumed as scratch.
    pub fn rank_one_update(&mut self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        for k in 0..self.n {
            let lkk = self.l[row_start(k) + k];
            let r = (lkk * lkk + v[k] * v[k]).sqrt();
            let c = r / lkk;
            let s = v[k] / lkk;
            self.l[row_start(k) + k] = r;
            for i in k + 1..self.n {
                let idx = row_start(i) + k;
                self.l[idx] = (self.l[idx] + s * v[i]) / c;
                v[i] = c * v[i] - s * self.l[idx];
            }
        }
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.l[row_start(i) + k] * b[k];
            }
            b[i] = sum / self.l[row_start(i) + i];
        }
    }

    /// Solves `L^T y = b` in place.
    pub fn solve_lower_transpose(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let mut sum = b[i];
            for k in i + 1..self.n {
                sum -= self.l[row_start(k) + i] * b[k];
            }
            b[i] = sum / self.l[row_start(i) + i];
        }
    }

    /// Solves `A y = b` in place (forward then backward substitution).
    pub fn solve(&self, b: &mut [f64]) {
        self.solve_lower(b);
        self.solve_lower_transpose(b);
    }

    /// Computes `L z`, which turns iid standard normals into a sample of
    /// `N(0, A)`.
    pub fn multiply_lower(&self, z: &[f64]) -> Vec<f64> {
        debug_assert_eq!(z.len(), self.n);
        (0..self.n)
            .map(|i| (0..=i).map(|k| self.l[row_start(i) + k] * z[k]).sum())
            .collect()
    }

    /// Quadratic form `b^T A^{-1} b = ||L^{-1} b||^2`; nonnegative by
    /// construction, which is what makes the posterior-variance path stable.
    #[cfg(test)]
    pub fn quad_inv(&self, b: &[f64]) -> f64 {
        let mut y = b.to_vec();
        self.solve_lower(&mut y);
        y.iter().map(|v| v * v).sum()
    }

    /// `log det A = 2 sum_i log L_ii`.
    pub fn logdet(&self) -> f64 {
        (0..self.n)
            .map(|i| self.l[row_start(i) + i].ln())
            .sum::<f64>()
            * 2.0
    }

    /// Cheap condition-number proxy: `(max_i L_ii / min_i L_ii)^2`. An upper
    /// bound on the true spectral condition number is not needed; this tracks
    /// the same growth and is what the refactorization policy monitors.
    pub fn condition_proxy(&self) -> f64 {
        if self.n == 0 {
            return 1.0;
        }
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..self.n {
            let d = self.l[row_start(i) + i];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let r = hi / lo;
        r * r
    }
}
