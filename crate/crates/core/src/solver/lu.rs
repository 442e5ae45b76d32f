//! Sparse LU factorization for the implicit system matrix.
//!
//! The matrix `A = diag(|K| + dt * out_K) - dt * T` has nonpositive
//! off-diagonal entries and known positive column sums `c_L = |L| + dt *
//! leak_L`. Eliminating in natural order keeps both properties in every Schur
//! complement, so the factorization can be carried on magnitudes only: pivots
//! are rebuilt as `column sum + sum of the remaining off-diagonal magnitudes`
//! rather than by subtraction. Forward and back substitution then only add
//! nonnegative terms for a nonnegative right-hand side, which keeps the
//! solution nonnegative and mass-exact up to rounding even for very large
//! time steps.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use sprs::CsMat;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SignedLu {
    /// `|l_rk|` for `r > k`, by column `k`.
    lower: Vec<Vec<(usize, f64)>>,
    /// `|u_kj|` for `k < j`, by column `j`.
    upper: Vec<Vec<(usize, f64)>>,
    pivots: Vec<f64>,
}

impl SignedLu {
    /// Factorizes the matrix whose off-diagonal column `j` has magnitudes
    /// `columns` row `j` (CSR of the transposed off-diagonal part, i.e.
    /// `columns[j][r] = |a_rj|`) and whose column sums are `column_sums`.
    /// Diagonal entries of `columns` are ignored.
    pub fn factor(columns: &CsMat<f64>, column_sums: &[f64]) -> Result<Self> {
        let n = column_sums.len();
        if columns.shape() != (n, n) || !columns.is_csr() {
            return Err(Error::DimensionMismatch(format!(
                "system matrix of shape {:?} for {n} column sums",
                columns.shape()
            )));
        }
        let mut lower: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut upper: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut pivots = Vec::with_capacity(n);
        // c_k^{(k)} / u_kk: how much of column k's surplus each unit of
        // |u_kj| transfers to column j.
        let mut surplus_ratio = vec![0.0; n];

        let mut work = vec![0.0; n];
        let mut active = vec![false; n];
        let mut below: Vec<usize> = Vec::new();
        let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();

        for j in 0..n {
            let col = columns.outer_view(j).expect("column in range");
            for (r, &val) in col.iter() {
                if r == j || val == 0.0 {
                    continue;
                }
                if val < 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "transfers",
                        reason: format!("negative transfer {val} from {j} to {r}"),
                    });
                }
                work[r] += val;
                if !active[r] {
                    active[r] = true;
                    if r < j {
                        heap.push(Reverse(r));
                    } else {
                        below.push(r);
                    }
                }
            }

            let mut u_col = Vec::new();
            let mut surplus = column_sums[j];
            while let Some(Reverse(k)) = heap.pop() {
                let ukj = work[k];
                work[k] = 0.0;
                active[k] = false;
                if ukj == 0.0 {
                    continue;
                }
                u_col.push((k, ukj));
                surplus += surplus_ratio[k] * ukj;
                for &(r, lrk) in &lower[k] {
                    work[r] += lrk * ukj;
                    if !active[r] {
                        active[r] = true;
                        if r < j {
                            heap.push(Reverse(r));
                        } else if r > j {
                            below.push(r);
                        }
                    }
                }
            }
            // fill into the diagonal position is implied by the column sum
            work[j] = 0.0;
            active[j] = false;

            let off: f64 = below.iter().map(|&r| work[r]).sum();
            let pivot = surplus + off;
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::SingularFactorization { column: j, pivot });
            }
            below.sort_unstable();
            let l_col = below
                .iter()
                .filter(|&&r| work[r] != 0.0)
                .map(|&r| (r, work[r] / pivot))
                .collect();
            for &r in &below {
                work[r] = 0.0;
                active[r] = false;
            }
            below.clear();

            lower.push(l_col);
            upper.push(u_col);
            pivots.push(pivot);
            surplus_ratio[j] = surplus / pivot;
        }
        Ok(SignedLu {
            lower,
            upper,
            pivots,
        })
    }

    pub fn dim(&self) -> usize {
        self.pivots.len()
    }

    /// Number of stored off-diagonal factor entries.
    pub fn fill(&self) -> usize {
        self.lower.iter().chain(&self.upper).map(Vec::len).sum()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = rhs.to_vec();
        for k in 0..n {
            let yk = y[k];
            if yk != 0.0 {
                for &(r, l) in &self.lower[k] {
                    y[r] += l * yk;
                }
            }
        }
        let mut x = vec![0.0; n];
        for j in (0..n).rev() {
            let xj = y[j] / self.pivots[j];
            x[j] = xj;
            if xj != 0.0 {
                for &(k, u) in &self.upper[j] {
                    y[k] += u * xj;
                }
            }
        }
        x
    }
}
