//! Sparse LU factorization of a simplex basis.
//!
//! Left-looking (Gilbert–Peierls style) column factorization with row
//! partial pivoting. Columns are processed in ascending-fill order (sorted
//! by nonzero count), which keeps the near-triangular bases produced by the
//! dispatch LPs essentially fill-free.

use crate::error::{Error, Result};

/// LU factors of a basis matrix B, stored in (original row, elimination
/// step) coordinates. `B[:, col_order] = L * U` up to the row permutation
/// recorded in `pivot_row`.
pub(crate) struct LuFactors {
    m: usize,
    /// Elimination step -> original row used as pivot.
    pivot_row: Vec<usize>,
    /// Elimination step -> basis slot whose column was eliminated.
    col_order: Vec<usize>,
    /// Per step: unit-lower multipliers (original row, value).
    l_cols: Vec<Vec<(usize, f64)>>,
    /// Per step k: U entries (earlier step j < k, value).
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    /// Original row -> elimination step.
    row_to_step: Vec<usize>,
}

const NOT_PIVOTAL: usize = usize::MAX;

impl LuFactors {
    /// Factorize the basis given by `slots`, where `column(slot)` yields the
    /// sparse column for that basis slot.
    pub(crate) fn factorize<'a, F>(m: usize, columns: F) -> Result<LuFactors>
    where
        F: Fn(usize) -> &'a [(usize, f64)],
    {
        // Cheap fill-reducing heuristic: eliminate sparse columns first.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&s| (columns(s).len(), s));

        let mut lu = LuFactors {
            m,
            pivot_row: Vec::with_capacity(m),
            col_order: Vec::with_capacity(m),
            l_cols: Vec::with_capacity(m),
            u_cols: Vec::with_capacity(m),
            u_diag: Vec::with_capacity(m),
            row_to_step: vec![NOT_PIVOTAL; m],
        };

        let mut work = vec![0.0f64; m];
        let mut touched: Vec<usize> = Vec::with_capacity(64);
        let mut in_pattern = vec![false; m];
        let mut reach: Vec<usize> = Vec::with_capacity(64);
        let mut reach_seen = vec![false; m];
        let mut stack: Vec<usize> = Vec::with_capacity(64);

        for (k, &slot) in order.iter().enumerate() {
            let col = columns(slot);
            if col.is_empty() {
                return Err(Error::Solver(format!("empty basis column in slot {slot}")));
            }

            // Scatter the column and find the reachable earlier steps.
            reach.clear();
            for &(r, v) in col {
                if !in_pattern[r] {
                    in_pattern[r] = true;
                    touched.push(r);
                }
                work[r] += v;
                let step = lu.row_to_step[r];
                if step != NOT_PIVOTAL && !reach_seen[step] {
                    reach_seen[step] = true;
                    stack.push(step);
                    while let Some(j) = stack.pop() {
                        reach.push(j);
                        for &(rr, _) in &lu.l_cols[j] {
                            let sj = lu.row_to_step[rr];
                            if sj != NOT_PIVOTAL && !reach_seen[sj] {
                                reach_seen[sj] = true;
                                stack.push(sj);
                            }
                        }
                    }
                }
            }
            // Lower-triangular dependencies resolve in ascending step order.
            reach.sort_unstable();

            let mut u_col = Vec::with_capacity(reach.len());
            for &j in &reach {
                reach_seen[j] = false;
                let alpha = work[lu.pivot_row[j]];
                if alpha == 0.0 {
                    continue;
                }
                u_col.push((j, alpha));
                for &(r, l) in &lu.l_cols[j] {
                    if !in_pattern[r] {
                        in_pattern[r] = true;
                        touched.push(r);
                    }
                    work[r] -= alpha * l;
                }
            }

            // Partial pivot: largest magnitude among not-yet-pivotal rows.
            let mut pivot = NOT_PIVOTAL;
            let mut best = 0.0f64;
            for &r in &touched {
                if lu.row_to_step[r] == NOT_PIVOTAL {
                    let a = work[r].abs();
                    if a > best || (a == best && pivot != NOT_PIVOTAL && r < pivot && a > 0.0) {
                        best = a;
                        pivot = r;
                    }
                }
            }
            if pivot == NOT_PIVOTAL || best < 1e-12 {
                // Clean up scratch state before bailing.
                for &r in &touched {
                    in_pattern[r] = false;
                    work[r] = 0.0;
                }
                touched.clear();
                return Err(Error::Solver(format!(
                    "singular basis at elimination step {k} (pivot {best:.3e})"
                )));
            }

            let diag = work[pivot];
            let mut l_col = Vec::new();
            for &r in &touched {
                if lu.row_to_step[r] == NOT_PIVOTAL && r != pivot {
                    let v = work[r];
                    if v != 0.0 {
                        l_col.push((r, v / diag));
                    }
                }
                in_pattern[r] = false;
                work[r] = 0.0;
            }
            touched.clear();
            l_col.sort_unstable_by_key(|&(r, _)| r);

            lu.row_to_step[pivot] = k;
            lu.pivot_row.push(pivot);
            lu.col_order.push(slot);
            lu.l_cols.push(l_col);
            lu.u_cols.push(u_col);
            lu.u_diag.push(diag);
        }

        Ok(lu)
    }

    /// Solve `B x = b`. `b` is indexed by original row; the result is
    /// written into `out` indexed by basis slot. `scratch` must have length
    /// `m` and is clobbered.
    pub(crate) fn ftran(&self, b: &mut [f64], out: &mut [f64], scratch: &mut [f64]) {
        // Forward: apply L^-1 in elimination order (b stays row-indexed).
        for k in 0..self.m {
            let alpha = b[self.pivot_row[k]];
            if alpha != 0.0 {
                for &(r, l) in &self.l_cols[k] {
                    b[r] -= alpha * l;
                }
            }
        }
        // Gather into step space, then back-substitute through U.
        for k in 0..self.m {
            scratch[k] = b[self.pivot_row[k]];
        }
        for k in (0..self.m).rev() {
            let v = scratch[k] / self.u_diag[k];
            scratch[k] = v;
            if v != 0.0 {
                for &(j, u) in &self.u_cols[k] {
                    scratch[j] -= u * v;
                }
            }
        }
        for k in 0..self.m {
            out[self.col_order[k]] = scratch[k];
        }
    }

    /// Solve `B^T y = c`. `c` is indexed by basis slot; the result is
    /// written into `out` indexed by original row.
    pub(crate) fn btran(&self, c: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        // U^T z = c-hat (forward over steps).
        for k in 0..self.m {
            let mut v = c[self.col_order[k]];
            for &(j, u) in &self.u_cols[k] {
                v -= u * scratch[j];
            }
            scratch[k] = v / self.u_diag[k];
        }
        // L^T w = z (backward over steps); w lives in row space.
        for k in (0..self.m).rev() {
            let mut v = scratch[k];
            for &(r, l) in &self.l_cols[k] {
                v -= l * out[r];
            }
            out[self.pivot_row[k]] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
        let mut x = b.to_vec();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
            m.swap(k, piv);
            x.swap(k, piv);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            for j in k + 1..n {
                x[k] -= m[k][j] * x[j];
            }
            x[k] /= m[k][k];
        }
        x
    }

    #[test]
    fn ftran_btran_match_dense_solves() {
        let mut rng = StdRng::seed_from_u64(8);
        for trial in 0..200 {
            let m = rng.gen_range(1..=12);
            // Random sparse-ish nonsingular matrix: identity plus noise.
            let mut dense = vec![vec![0.0; m]; m];
            let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
            for j in 0..m {
                for i in 0..m {
                    let v = if i == j {
                        rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }
                    } else if rng.gen_bool(0.3) {
                        rng.gen_range(-1.0..1.0)
                    } else {
                        0.0
                    };
                    if v != 0.0 {
                        dense[i][j] = v;
                        cols[j].push((i, v));
                    }
                }
            }
            let lu = match LuFactors::factorize(m, |s| cols[s].as_slice()) {
                Ok(lu) => lu,
                Err(_) => continue, // singular draw
            };
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();

            let mut rowbuf = b.clone();
            let mut out = vec![0.0; m];
            let mut scratch = vec![0.0; m];
            lu.ftran(&mut rowbuf, &mut out, &mut scratch);
            let expect = dense_solve(&dense, &b);
            for i in 0..m {
                assert!(
                    (out[i] - expect[i]).abs() < 1e-8 * (1.0 + expect[i].abs()),
                    "trial {trial} ftran mismatch at {i}: {} vs {}",
                    out[i],
                    expect[i]
                );
            }

            // Transposed system.
            let dense_t: Vec<Vec<f64>> =
                (0..m).map(|i| (0..m).map(|j| dense[j][i]).collect()).collect();
            let mut yout = vec![0.0; m];
            lu.btran(&b, &mut yout, &mut scratch);
            let expect_t = dense_solve(&dense_t, &b);
            for i in 0..m {
                assert!(
                    (yout[i] - expect_t[i]).abs() < 1e-8 * (1.0 + expect_t[i].abs()),
                    "trial {trial} btran mismatch at {i}: {} vs {}",
                    yout[i],
                    expect_t[i]
                );
            }
        }
    }
}
