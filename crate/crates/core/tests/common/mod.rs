//! Shared test oracles.
//!
//! The vertex enumerator is the independent check of the simplex: for an LP
//! whose variables are all box-bounded, some optimum (when one exists) sits
//! at a point where `n` linearly independent constraints are active. It
//! shares no code with the solver.

use peakreg_core::lp::{LinearProgram, LpStatus, Relation, VarId};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub struct DenseLp {
    pub n: usize,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Relation, f64)>,
}

impl DenseLp {
    pub fn random(rng: &mut StdRng) -> DenseLp {
        let n = rng.gen_range(2..=8);
        let m = rng.gen_range(1..=if n <= 5 { 6 } else { 4 });
        let cost: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..0.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|lo| lo + rng.gen_range(0.5..4.0)).collect();
        let mut rows = Vec::new();
        for _ in 0..m {
            let coefs: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.8) {
                        rng.gen_range(-1.5..1.5)
                    } else {
                        0.0
                    }
                })
                .collect();
            if coefs.iter().all(|c| *c == 0.0) {
                continue;
            }
            let relation = match rng.gen_range(0..6) {
                0 => Relation::Eq,
                1 | 2 => Relation::Ge,
                _ => Relation::Le,
            };
            let rhs = rng.gen_range(-2.0..2.0);
            rows.push((coefs, relation, rhs));
        }
        DenseLp {
            n,
            cost,
            lower,
            upper,
            rows,
        }
    }

    pub fn build(&self) -> LinearProgram {
        let mut lp = LinearProgram::new();
        let vars: Vec<VarId> = (0..self.n)
            .map(|i| lp.add_var(self.lower[i], self.upper[i], self.cost[i]))
            .collect();
        for (coefs, rel, rhs) in &self.rows {
            let terms: Vec<(VarId, f64)> = vars
                .iter()
                .zip(coefs)
                .filter(|(_, c)| **c != 0.0)
                .map(|(v, c)| (*v, *c))
                .collect();
            lp.add_row(*rel, *rhs, &terms);
        }
        lp
    }

    pub fn feasible(&self, x: &[f64], tol: f64) -> bool {
        for i in 0..self.n {
            if x[i] < self.lower[i] - tol || x[i] > self.upper[i] + tol {
                return false;
            }
        }
        for (coefs, rel, rhs) in &self.rows {
            let lhs: f64 = coefs.iter().zip(x).map(|(c, v)| c * v).sum();
            let ok = match rel {
                Relation::Le => lhs <= rhs + tol,
                Relation::Ge => lhs >= rhs - tol,
                Relation::Eq => (lhs - rhs).abs() <= tol,
            };
            if !ok {
                return false;
            }
        }
        true
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Best feasible vertex objective, or None when no candidate is
    /// feasible (infeasible LP; the box keeps everything bounded).
    pub fn vertex_enumerate(&self) -> Option<f64> {
        let mut active: Vec<(Vec<f64>, f64)> = Vec::new();
        for (coefs, _, rhs) in &self.rows {
            active.push((coefs.clone(), *rhs));
        }
        for i in 0..self.n {
            let mut e = vec![0.0; self.n];
            e[i] = 1.0;
            active.push((e.clone(), self.lower[i]));
            active.push((e, self.upper[i]));
        }

        let mut best: Option<f64> = None;
        let mut combo: Vec<usize> = (0..self.n).collect();
        loop {
            if let Some(x) = solve_square(&active, &combo, self.n) {
                if self.feasible(&x, 1e-6) {
                    let obj = self.objective(&x);
                    if best.map_or(true, |b| obj < b) {
                        best = Some(obj);
                    }
                }
            }
            if !next_combination(&mut combo, active.len(), self.n) {
                break;
            }
        }
        best
    }
}

fn solve_square(active: &[(Vec<f64>, f64)], combo: &[usize], n: usize) -> Option<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = combo.iter().map(|&k| active[k].0.clone()).collect();
    let mut b: Vec<f64> = combo.iter().map(|&k| active[k].1).collect();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[piv][k].abs() < 1e-9 {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        for j in k + 1..n {
            b[k] -= a[k][j] * b[j];
        }
        b[k] /= a[k][k];
    }
    Some(b)
}

fn next_combination(combo: &mut [usize], total: usize, k: usize) -> bool {
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < total - (k - i) {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Run `trials` random LPs against the enumerator, asserting agreement.
/// Returns (optimal count, infeasible count).
pub fn vertex_comparison(trials: usize, seed: u64) -> (usize, usize) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut solved = 0usize;
    let mut infeasible = 0usize;
    for trial in 0..trials {
        let dense = DenseLp::random(&mut rng);
        let lp = dense.build();
        let sol = lp.solve().unwrap();
        match dense.vertex_enumerate() {
            Some(best) => {
                assert_eq!(
                    sol.status,
                    LpStatus::Optimal,
                    "trial {trial}: oracle found vertex {best} but solver says {:?}",
                    sol.status
                );
                let tol = 1e-6 * best.abs().max(1.0);
                assert!(
                    (sol.objective_value - best).abs() <= tol,
                    "trial {trial}: solver {} vs oracle {best}",
                    sol.objective_value
                );
                assert!(
                    dense.feasible(&sol.values, 1e-6),
                    "trial {trial}: solver point infeasible"
                );
                solved += 1;
            }
            None => {
                assert_eq!(
                    sol.status,
                    LpStatus::Infeasible,
                    "trial {trial}: oracle found no vertex but solver says {:?}",
                    sol.status
                );
                infeasible += 1;
            }
        }
    }
    (solved, infeasible)
}
