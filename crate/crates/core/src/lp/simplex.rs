//! Bounded-variable revised primal simplex.
//!
//! Two phases with per-row artificials; Dantzig pricing with a switch to
//! Bland's rule after a degenerate streak (anti-cycling); product-form
//! basis updates with periodic sparse-LU refactorization. Deterministic:
//! the pivot sequence is a pure function of the input.

use super::factor::LuFactors;
use super::{LinearProgram, LpSolution, LpStatus, Relation};
use crate::error::{Error, Result};

/// Absolute primal feasibility tolerance on rows and bounds.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Relative reduced-cost (optimality) tolerance.
pub const REDUCED_COST_TOL: f64 = 1e-9;
/// Pivot magnitude below which a basis change is rejected.
const PIVOT_TOL: f64 = 1e-10;
/// Iteration cap across both phases.
pub const ITERATION_CAP: usize = 1_000_000;
/// Refactorize after this many product-form updates.
const REFACTOR_EVERY: usize = 64;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 40;
/// Slack added to the ratio-test room so marginal infeasibility degenerates
/// into a zero-length step instead of a negative one.
const RATIO_EPS: f64 = 1e-9;

const INF: f64 = f64::INFINITY;

#[derive(Clone, Copy, PartialEq, Debug)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free variable resting at zero.
    FreeZero,
}

struct Eta {
    slot: usize,
    /// FTRAN image of the entering column at pivot time (slot space, pivot
    /// position excluded).
    col: Vec<(usize, f64)>,
    pivot: f64,
}

enum RunOutcome {
    Optimal,
    Unbounded,
}

pub(super) struct Simplex {
    nrows: usize,
    /// All columns: structurals, then one logical per row, then artificials.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    obj: Vec<f64>,
    rhs: Vec<f64>,
    n_struct: usize,
    n_logical_end: usize,

    state: Vec<VarState>,
    x: Vec<f64>,
    basis: Vec<usize>,

    lu: Option<LuFactors>,
    etas: Vec<Eta>,

    // Scratch buffers reused across iterations.
    row_buf: Vec<f64>,
    slot_buf: Vec<f64>,
    scratch: Vec<f64>,
    y: Vec<f64>,

    iterations: usize,
}

impl Simplex {
    pub(super) fn new(lp: &LinearProgram) -> Result<Simplex> {
        lp.validate()?;
        let n = lp.num_vars();
        let m = lp.rows.len();

        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut obj = lp.objective.clone();
        let mut rhs = Vec::with_capacity(m);

        for (i, row) in lp.rows.iter().enumerate() {
            for &(var, coef) in &row.terms {
                cols[var].push((i, coef));
            }
            // One logical per row turns every relation into an equality.
            let logical = n + i;
            cols[logical].push((i, 1.0));
            let (lo, hi) = match row.relation {
                Relation::Le => (0.0, INF),
                Relation::Ge => (-INF, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
            obj.push(0.0);
            rhs.push(row.rhs);
        }

        Ok(Simplex {
            nrows: m,
            cols,
            lower,
            upper,
            obj,
            rhs,
            n_struct: n,
            n_logical_end: n + m,
            state: Vec::new(),
            x: Vec::new(),
            basis: Vec::new(),
            lu: None,
            etas: Vec::new(),
            row_buf: vec![0.0; m],
            slot_buf: vec![0.0; m],
            scratch: vec![0.0; m],
            y: vec![0.0; m],
            iterations: 0,
        })
    }

    pub(super) fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let needs_phase1 = self.initialize();

        if needs_phase1 {
            let mut phase1_cost = vec![0.0; self.cols.len()];
            for c in self.n_logical_end..self.cols.len() {
                phase1_cost[c] = 1.0;
            }
            match self.run(&phase1_cost)? {
                RunOutcome::Optimal => {}
                RunOutcome::Unbounded => {
                    return Err(Error::Solver("phase 1 reported unbounded".into()));
                }
            }
            let infeas: f64 = (self.n_logical_end..self.cols.len()).map(|c| self.x[c]).sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeas > FEASIBILITY_TOL * scale {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    values: vec![0.0; self.n_struct],
                    objective_value: f64::NAN,
                });
            }
            // Pin artificials at zero for phase 2.
            for c in self.n_logical_end..self.cols.len() {
                self.lower[c] = 0.0;
                self.upper[c] = 0.0;
                if matches!(self.state[c], VarState::Basic(_)) {
                    self.x[c] = 0.0;
                } else {
                    self.state[c] = VarState::AtLower;
                    self.x[c] = 0.0;
                }
            }
        }

        let mut cost = vec![0.0; self.cols.len()];
        cost[..self.obj.len()].copy_from_slice(&self.obj);
        match self.run(&cost)? {
            RunOutcome::Optimal => {}
            RunOutcome::Unbounded => {
                return Ok(LpSolution {
                    status: LpStatus::Unbounded,
                    values: vec![0.0; self.n_struct],
                    objective_value: f64::NEG_INFINITY,
                });
            }
        }

        self.refactorize()?;
        self.verify_feasibility()?;

        let values: Vec<f64> = self.x[..self.n_struct].to_vec();
        let objective_value = values
            .iter()
            .zip(&lp.objective)
            .map(|(x, c)| x * c)
            .sum::<f64>()
            + lp.objective_offset;
        Ok(LpSolution {
            status: LpStatus::Optimal,
            values,
            objective_value,
        })
    }

    /// Choose an initial point: structurals at a finite bound (or zero when
    /// free), logicals absorbing the row residual, artificials for rows
    /// whose logical cannot. Returns whether phase 1 is required.
    fn initialize(&mut self) -> bool {
        let total = self.cols.len();
        self.state = Vec::with_capacity(total);
        self.x = Vec::with_capacity(total);
        for c in 0..total {
            let (lo, hi) = (self.lower[c], self.upper[c]);
            let (st, v) = if lo.is_finite() {
                (VarState::AtLower, lo)
            } else if hi.is_finite() {
                (VarState::AtUpper, hi)
            } else {
                (VarState::FreeZero, 0.0)
            };
            self.state.push(st);
            self.x.push(v);
        }

        // Row residuals with all columns at their initial values.
        let mut resid = self.rhs.clone();
        for c in 0..self.n_struct {
            let v = self.x[c];
            if v != 0.0 {
                for &(r, a) in &self.cols[c] {
                    resid[r] -= a * v;
                }
            }
        }

        self.basis = Vec::with_capacity(self.nrows);
        let mut needs_phase1 = false;
        for i in 0..self.nrows {
            let logical = self.n_struct + i;
            let (lo, hi) = (self.lower[logical], self.upper[logical]);
            if resid[i] >= lo - 1e-12 && resid[i] <= hi + 1e-12 {
                self.state[logical] = VarState::Basic(i);
                self.x[logical] = resid[i].clamp(lo, hi);
                self.basis.push(logical);
            } else {
                // Logical rests at the bound nearest the residual; an
                // artificial column with matching sign covers the rest.
                let at = resid[i].clamp(lo, hi);
                self.state[logical] = if at == lo {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                };
                self.x[logical] = at;
                let gap = resid[i] - at;
                let art = self.cols.len();
                self.cols.push(vec![(i, gap.signum())]);
                self.lower.push(0.0);
                self.upper.push(INF);
                self.state.push(VarState::Basic(i));
                self.x.push(gap.abs());
                self.basis.push(art);
                needs_phase1 = true;
            }
        }
        needs_phase1
    }

    fn refactorize(&mut self) -> Result<()> {
        let basis = &self.basis;
        let cols = &self.cols;
        self.lu = Some(LuFactors::factorize(self.nrows, |slot| {
            cols[basis[slot]].as_slice()
        })?);
        self.etas.clear();
        self.recompute_basic_values();
        Ok(())
    }

    /// Fresh x_B = B^-1 (rhs - N x_N); removes accumulated drift.
    fn recompute_basic_values(&mut self) {
        self.row_buf.copy_from_slice(&self.rhs);
        for c in 0..self.cols.len() {
            if matches!(self.state[c], VarState::Basic(_)) {
                continue;
            }
            let v = self.x[c];
            if v != 0.0 {
                for &(r, a) in &self.cols[c] {
                    self.row_buf[r] -= a * v;
                }
            }
        }
        let lu = self.lu.as_ref().expect("refactorize sets lu");
        lu.ftran(&mut self.row_buf, &mut self.slot_buf, &mut self.scratch);
        for slot in 0..self.nrows {
            self.x[self.basis[slot]] = self.slot_buf[slot];
        }
    }

    fn ftran_column(&mut self, col: usize, out: &mut Vec<f64>) {
        self.row_buf.iter_mut().for_each(|v| *v = 0.0);
        for &(r, a) in &self.cols[col] {
            self.row_buf[r] += a;
        }
        let lu = self.lu.as_ref().expect("lu present");
        out.resize(self.nrows, 0.0);
        lu.ftran(&mut self.row_buf, out, &mut self.scratch);
        for eta in &self.etas {
            let theta = out[eta.slot] / eta.pivot;
            if theta != 0.0 {
                for &(s, w) in &eta.col {
                    out[s] -= theta * w;
                }
            }
            out[eta.slot] = theta;
        }
    }

    fn btran_costs(&mut self, cost: &[f64]) {
        for slot in 0..self.nrows {
            self.slot_buf[slot] = cost[self.basis[slot]];
        }
        for eta in self.etas.iter().rev() {
            let mut v = self.slot_buf[eta.slot];
            for &(s, w) in &eta.col {
                v -= w * self.slot_buf[s];
            }
            self.slot_buf[eta.slot] = v / eta.pivot;
        }
        let lu = self.lu.as_ref().expect("lu present");
        lu.btran(&self.slot_buf, &mut self.y, &mut self.scratch);
    }

    fn reduced_cost(&self, col: usize, cost: &[f64]) -> f64 {
        let mut d = cost[col];
        for &(r, a) in &self.cols[col] {
            d -= a * self.y[r];
        }
        d
    }

    /// Run the simplex loop for one phase.
    fn run(&mut self, cost: &[f64]) -> Result<RunOutcome> {
        self.refactorize()?;
        // Scale chosen so that scaling the objective by a power of two
        // rescales the tolerance exactly and leaves the pivot path intact.
        let max_cost = cost.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let dj_tol = REDUCED_COST_TOL * if max_cost > 0.0 { max_cost } else { 1.0 };
        let mut degenerate_streak = 0usize;
        let mut bland = false;
        let mut entering_col: Vec<f64> = Vec::new();

        loop {
            self.iterations += 1;
            if self.iterations > ITERATION_CAP {
                return Err(Error::Solver(format!(
                    "iteration cap {ITERATION_CAP} exceeded"
                )));
            }
            if self.etas.len() >= REFACTOR_EVERY {
                self.refactorize()?;
            }

            self.btran_costs(cost);

            // Pricing: Dantzig by default, Bland while stalled.
            let mut enter: Option<(usize, f64, bool)> = None; // (col, |d|, increase)
            for c in 0..self.cols.len() {
                if matches!(self.state[c], VarState::Basic(_)) || self.lower[c] == self.upper[c] {
                    continue;
                }
                let d = self.reduced_cost(c, cost);
                let candidate = match self.state[c] {
                    VarState::AtLower if d < -dj_tol => Some((d.abs(), true)),
                    VarState::AtUpper if d > dj_tol => Some((d.abs(), false)),
                    VarState::FreeZero if d.abs() > dj_tol => Some((d.abs(), d < 0.0)),
                    _ => None,
                };
                if let Some((mag, increase)) = candidate {
                    if bland {
                        enter = Some((c, mag, increase));
                        break;
                    }
                    if enter.map_or(true, |(_, best, _)| mag > best) {
                        enter = Some((c, mag, increase));
                    }
                }
            }
            let Some((q, _, increase)) = enter else {
                return Ok(RunOutcome::Optimal);
            };
            let dir = if increase { 1.0 } else { -1.0 };

            let mut w = std::mem::take(&mut entering_col);
            self.ftran_column(q, &mut w);

            // Ratio test: smallest step at which a basic variable hits one
            // of its bounds, versus the entering variable's own range.
            let own_range = self.upper[q] - self.lower[q]; // may be INF
            let mut best_ratio = INF;
            let mut leave: Option<(usize, f64, bool)> = None; // (slot, |w|, to_upper)
            for slot in 0..self.nrows {
                let wi = w[slot];
                if wi.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[slot];
                let delta = -dir * wi; // basic value change per unit of x_q
                let (room, to_upper) = if delta > 0.0 {
                    (self.upper[b] - self.x[b], true)
                } else {
                    (self.x[b] - self.lower[b], false)
                };
                if !room.is_finite() {
                    continue;
                }
                let ratio = (room.max(0.0) + RATIO_EPS) / delta.abs();
                let replace = if ratio < best_ratio - 1e-12 {
                    true
                } else if ratio <= best_ratio + 1e-12 {
                    match leave {
                        None => true,
                        Some((ls, lw, _)) => {
                            if bland {
                                self.basis[slot] < self.basis[ls]
                            } else {
                                wi.abs() > lw
                            }
                        }
                    }
                } else {
                    false
                };
                if replace {
                    best_ratio = best_ratio.min(ratio);
                    leave = Some((slot, wi.abs(), to_upper));
                }
            }

            if !own_range.is_finite() && leave.is_none() {
                return Ok(RunOutcome::Unbounded);
            }
            let (step, flip) = if own_range <= best_ratio {
                (own_range, true)
            } else {
                (best_ratio, false)
            };
            let step = step.max(0.0);

            if step <= 1e-12 {
                degenerate_streak += 1;
                if degenerate_streak > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
                bland = false;
            }

            // Apply the move to the basic values.
            for slot in 0..self.nrows {
                let wi = w[slot];
                if wi != 0.0 {
                    self.x[self.basis[slot]] -= dir * step * wi;
                }
            }

            if flip {
                self.state[q] = if increase {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                self.x[q] = if increase { self.upper[q] } else { self.lower[q] };
                entering_col = w;
                continue;
            }

            let (slot, _, to_upper) = leave.expect("non-flip step has a leaving variable");
            let pivot_val = w[slot];
            if pivot_val.abs() <= PIVOT_TOL {
                return Err(Error::Solver("numerically zero pivot".into()));
            }

            let leaving = self.basis[slot];
            self.x[q] += dir * step;
            self.state[q] = VarState::Basic(slot);
            self.state[leaving] = if to_upper {
                self.x[leaving] = self.upper[leaving];
                VarState::AtUpper
            } else {
                self.x[leaving] = self.lower[leaving];
                VarState::AtLower
            };
            self.basis[slot] = q;

            let sparse: Vec<(usize, f64)> = w
                .iter()
                .enumerate()
                .filter(|&(s, &v)| s != slot && v != 0.0)
                .map(|(s, &v)| (s, v))
                .collect();
            self.etas.push(Eta {
                slot,
                col: sparse,
                pivot: pivot_val,
            });
            entering_col = w;
        }
    }

    /// Direct residual check of the final point (<= 1e-7 per row and
    /// bound). Runs on a freshly refactorized basis.
    fn verify_feasibility(&self) -> Result<()> {
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut resid = self.rhs.clone();
        for c in 0..self.cols.len() {
            let v = self.x[c];
            if v != 0.0 {
                for &(r, a) in &self.cols[c] {
                    resid[r] -= a * v;
                }
            }
        }
        for (i, r) in resid.iter().enumerate() {
            if r.abs() > FEASIBILITY_TOL * scale {
                return Err(Error::Solver(format!(
                    "row {i} residual {r:.3e} exceeds tolerance"
                )));
            }
        }
        for c in 0..self.cols.len() {
            let v = self.x[c];
            if v < self.lower[c] - FEASIBILITY_TOL * scale
                || v > self.upper[c] + FEASIBILITY_TOL * scale
            {
                return Err(Error::Solver(format!(
                    "column {c} value {v} violates bounds [{}, {}]",
                    self.lower[c], self.upper[c]
                )));
            }
        }
        Ok(())
    }
}
