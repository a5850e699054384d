//! Linear programming: model container, reformulation helpers, and an
//! embedded bounded-variable revised simplex solver.
//!
//! The solver is deterministic (identical inputs produce bit-identical
//! outputs) and verifies primal feasibility of every optimal solution to
//! 1e-7 absolute before returning it.

mod factor;
mod simplex;

use crate::error::{Error, Result};
use std::fmt::Write as _;

pub use simplex::{FEASIBILITY_TOL, ITERATION_CAP, REDUCED_COST_TOL};

const INF: f64 = f64::INFINITY;

/// Handle to a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub relation: Relation,
    pub rhs: f64,
    /// Sorted by variable index with duplicates merged.
    pub terms: Vec<(usize, f64)>,
}

/// A minimization LP over bounded variables.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub(crate) objective: Vec<f64>,
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) rows: Vec<Row>,
    /// Constant added to the reported objective value.
    pub(crate) objective_offset: f64,
}

/// Solver verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solution of a [`LinearProgram`].
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// One value per variable, in creation order. Meaningful only when
    /// `status == Optimal`.
    pub values: Vec<f64>,
    pub objective_value: f64,
}

impl LpSolution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        LinearProgram::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Add a variable with bounds `[lower, upper]` (infinities allowed) and
    /// the given objective coefficient.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> VarId {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        VarId(self.objective.len() - 1)
    }

    /// Add `sum(terms) relation rhs`. Duplicate variables are merged.
    pub fn add_row(&mut self, relation: Relation, rhs: f64, terms: &[(VarId, f64)]) {
        let mut merged: Vec<(usize, f64)> = terms.iter().map(|&(v, c)| (v.0, c)).collect();
        merged.sort_unstable_by_key(|&(v, _)| v);
        merged.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        merged.retain(|&(_, c)| c != 0.0);
        self.rows.push(Row {
            relation,
            rhs,
            terms: merged,
        });
    }

    /// Add a constant to the reported objective value.
    pub fn add_objective_offset(&mut self, offset: f64) {
        self.objective_offset += offset;
    }

    /// Linearize `|expr + constant|`: adds an auxiliary variable `a >= 0`
    /// with objective weight `weight` and the two rows `a >= expr + c`,
    /// `a >= -(expr + c)`. With positive weight, `a` equals the absolute
    /// value at any optimum.
    pub fn abs_split(&mut self, expr: &[(VarId, f64)], constant: f64, weight: f64) -> VarId {
        let aux = self.add_var(0.0, INF, weight);
        // expr - aux <= -c
        let mut row: Vec<(VarId, f64)> = expr.to_vec();
        row.push((aux, -1.0));
        self.add_row(Relation::Le, -constant, &row);
        // -expr - aux <= c
        let mut row: Vec<(VarId, f64)> = expr.iter().map(|&(v, c)| (v, -c)).collect();
        row.push((aux, -1.0));
        self.add_row(Relation::Le, constant, &row);
        aux
    }

    /// Linearize `max(expr_k + c_k)`: adds a free auxiliary variable with
    /// objective weight `weight` and one row `aux >= expr_k + c_k` per
    /// expression. With positive weight, `aux` attains the maximum at any
    /// optimum. Errors on an empty expression list.
    pub fn epigraph_max(
        &mut self,
        exprs: &[(&[(VarId, f64)], f64)],
        weight: f64,
    ) -> Result<VarId> {
        if exprs.is_empty() {
            return Err(Error::Domain("epigraph over an empty set".into()));
        }
        let aux = self.add_var(-INF, INF, weight);
        for (terms, constant) in exprs {
            // expr - aux <= -c
            let mut row: Vec<(VarId, f64)> = terms.to_vec();
            row.push((aux, -1.0));
            self.add_row(Relation::Le, -constant, &row);
        }
        Ok(aux)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for (i, c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::Validation(format!(
                    "objective coefficient {i} is not finite"
                )));
            }
        }
        for i in 0..self.num_vars() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Validation(format!(
                    "variable {i} has invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::Validation(format!("row {i} rhs is not finite")));
            }
            for &(v, c) in &row.terms {
                if v >= self.num_vars() {
                    return Err(Error::Validation(format!(
                        "row {i} references unknown variable {v}"
                    )));
                }
                if !c.is_finite() {
                    return Err(Error::Validation(format!(
                        "row {i} has a non-finite coefficient on variable {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Solve to optimality; infeasible and unbounded are statuses, not
    /// errors. Numerical breakdown surfaces as [`Error::Solver`].
    pub fn solve(&self) -> Result<LpSolution> {
        simplex::Simplex::new(self)?.solve(self)
    }

    /// Evaluate the objective at a candidate point (including the offset).
    pub fn objective_at(&self, values: &[f64]) -> f64 {
        self.objective
            .iter()
            .zip(values)
            .map(|(c, x)| c * x)
            .sum::<f64>()
            + self.objective_offset
    }

    /// Serialize in CPLEX LP text format for external cross-checking.
    /// Variables are named `x<i>` in creation order, rows `c<i>`.
    pub fn dump_lp_format(&self) -> String {
        let mut out = String::new();
        out.push_str("\\ bounded-variable LP dump\n");
        if self.objective_offset != 0.0 {
            let _ = writeln!(out, "\\ objective offset: {}", self.objective_offset);
        }
        out.push_str("Minimize\n obj:");
        let mut first = true;
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = write!(out, " {} {} x{}", sign_word(*c, first), c.abs(), i);
                first = false;
            }
        }
        if first {
            out.push_str(" 0 x0");
        }
        out.push_str("\nSubject To\n");
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " c{i}:");
            let mut first = true;
            for &(v, c) in &row.terms {
                let _ = write!(out, " {} {} x{}", sign_word(c, first), c.abs(), v);
                first = false;
            }
            if first {
                out.push_str(" 0 x0");
            }
            let rel = match row.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {rel} {}", row.rhs);
        }
        out.push_str("Bounds\n");
        for i in 0..self.num_vars() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if lo == f64::NEG_INFINITY && hi == INF {
                let _ = writeln!(out, " x{i} free");
            } else if lo == f64::NEG_INFINITY {
                let _ = writeln!(out, " -inf <= x{i} <= {hi}");
            } else if hi == INF {
                let _ = writeln!(out, " {lo} <= x{i}");
            } else {
                let _ = writeln!(out, " {lo} <= x{i} <= {hi}");
            }
        }
        out.push_str("End\n");
        out
    }
}

fn sign_word(c: f64, first: bool) -> &'static str {
    match (c < 0.0, first) {
        (true, _) => "-",
        (false, true) => "",
        (false, false) => "+",
    }
}
