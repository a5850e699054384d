//! Day-ahead two-stage stochastic planning.
//!
//! First stage: the regulation capacity bid C (one variable shared across
//! scenarios) and, in [`BaselineMode::Optimized`], the reported baseline.
//! Second stage: per-scenario battery dispatch. Load uncertainty collapses
//! to the point forecast; only the regulation signal is scenario-based.
//! The peak term applies the epigraph to the scenario-weighted expected
//! smoothed net load, and the optimal epigraph value is the peak-shaving
//! threshold U* handed to the real-time controller.

use crate::battery::BatterySpec;
use crate::benchmarks::{add_battery_block, extract_dispatch};
use crate::billing::Tariff;
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus, VarId};
use crate::series::TimeSeries;
use serde::{Deserialize, Serialize};

/// Weighted set of regulation-signal realizations.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    scenarios: Vec<TimeSeries>,
    weights: Vec<f64>,
}

impl ScenarioSet {
    /// Validate alignment and that the weights are a probability vector.
    pub fn new(scenarios: Vec<TimeSeries>, weights: Vec<f64>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::Validation("scenario set must be nonempty".into()));
        }
        if scenarios.len() != weights.len() {
            return Err(Error::Validation(format!(
                "{} scenarios but {} weights",
                scenarios.len(),
                weights.len()
            )));
        }
        for w in &weights {
            if !(*w >= 0.0) {
                return Err(Error::Validation(format!("negative weight {w}")));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        for s in &scenarios[1..] {
            scenarios[0].check_aligned(s)?;
        }
        Ok(ScenarioSet { scenarios, weights })
    }

    /// Equal weights over the given realizations.
    pub fn uniform(scenarios: Vec<TimeSeries>) -> Result<Self> {
        let n = scenarios.len();
        if n == 0 {
            return Err(Error::Validation("scenario set must be nonempty".into()));
        }
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        // Absorb rounding in the last weight so the sum is exactly one.
        let partial: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - partial;
        ScenarioSet::new(scenarios, weights)
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn scenarios(&self) -> &[TimeSeries] {
        &self.scenarios
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// How the baseline y(t) reported to the grid operator is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Report the raw load forecast: mismatch reduces to |b - C r|, so any
    /// planned deviation from pure tracking is penalized.
    Forecast,
    /// Co-optimize a day-ahead baseline offset with the dispatch plan, so
    /// deterministic planned deviations (e.g. peak shaving) are reported in
    /// the baseline instead of billed as mismatch.
    Optimized,
}

/// First-stage decisions plus the per-scenario planned recourse.
#[derive(Debug, Clone)]
pub struct DayAheadPlan {
    /// Regulation capacity bid C*, MW.
    pub capacity_mw: f64,
    /// Peak-shaving threshold U*, MW in smoothed-window units.
    pub threshold_mw: f64,
    /// Baseline y(t) reported to the operator, at the forecast resolution.
    pub baseline: TimeSeries,
    /// Planned dispatch per scenario, at the planning resolution.
    pub scenario_dispatch: Vec<TimeSeries>,
    /// Planned objective value J of the two-stage LP, $.
    pub planned_objective: f64,
}

/// Solve the day-ahead problem.
///
/// `forecast` and every scenario must be aligned at the real-time step;
/// `downsample` block-averages both onto the planning grid (it must divide
/// the horizon and the peak window). `horizon_days` prorates the demand
/// charge as in [`crate::billing::total_bill`].
#[allow(clippy::too_many_arguments)]
pub fn solve_day_ahead(
    forecast: &TimeSeries,
    scenarios: &ScenarioSet,
    tariff: &Tariff,
    spec: &BatterySpec,
    soc_ini: f64,
    downsample: usize,
    horizon_days: f64,
    baseline_mode: BaselineMode,
) -> Result<DayAheadPlan> {
    tariff.validate()?;
    spec.validate()?;
    for s in scenarios.scenarios() {
        forecast.check_aligned(s)?;
        if let Some(bad) = s.values().iter().find(|r| r.abs() > 1.0 + 1e-9) {
            return Err(Error::Domain(format!(
                "scenario value {bad} outside [-1, 1]"
            )));
        }
    }

    let plan_load = forecast.downsample_mean(downsample)?;
    let plan_scenarios: Vec<TimeSeries> = scenarios
        .scenarios()
        .iter()
        .map(|s| s.downsample_mean(downsample))
        .collect::<Result<_>>()?;
    let window = tariff.peak_window_steps(&plan_load)?;
    if plan_load.len() % window != 0 {
        return Err(Error::Alignment(format!(
            "peak window of {window} planning steps does not divide horizon {}",
            plan_load.len()
        )));
    }

    let steps = plan_load.len();
    let h = plan_load.step_hours();
    let horizon_hours = plan_load.span_hours();
    let weights = scenarios.weights();

    let mut lp = LinearProgram::new();
    let capacity = lp.add_var(0.0, spec.p_max_mw, -tariff.lambda_c * horizon_hours);
    let offset_vars: Option<Vec<VarId>> = match baseline_mode {
        BaselineMode::Forecast => None,
        BaselineMode::Optimized => Some(
            (0..steps)
                .map(|_| lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0))
                .collect(),
        ),
    };

    let mut blocks = Vec::with_capacity(scenarios.len());
    for (i, scenario) in plan_scenarios.iter().enumerate() {
        let w = weights[i];
        let block = add_battery_block(
            &mut lp,
            steps,
            h,
            spec,
            soc_ini,
            w * (spec.lambda_b + tariff.lambda_elec) * h,
            w * (spec.lambda_b - tariff.lambda_elec) * h,
        );
        for (t, r) in scenario.values().iter().enumerate() {
            let mut expr = vec![
                (block.b_dc[t], 1.0),
                (block.b_ch[t], -1.0),
                (capacity, -r),
            ];
            if let Some(z) = &offset_vars {
                expr.push((z[t], 1.0));
            }
            lp.abs_split(&expr, 0.0, w * tariff.lambda_mis * h);
        }
        blocks.push(block);
    }
    lp.add_objective_offset(tariff.lambda_elec * plan_load.energy_mwh());

    // Expected smoothed net load per window, shared epigraph across
    // scenarios; the demand charge floors at zero.
    let n_windows = steps / window;
    let mut exprs: Vec<(Vec<(VarId, f64)>, f64)> = Vec::with_capacity(n_windows + 1);
    for win in 0..n_windows {
        let range = win * window..(win + 1) * window;
        let mut terms = Vec::with_capacity(2 * window * blocks.len());
        for (i, block) in blocks.iter().enumerate() {
            for t in range.clone() {
                terms.push((block.b_dc[t], -weights[i] / window as f64));
                terms.push((block.b_ch[t], weights[i] / window as f64));
            }
        }
        let smoothed: f64 =
            plan_load.values()[range].iter().sum::<f64>() / window as f64;
        exprs.push((terms, smoothed));
    }
    exprs.push((Vec::new(), 0.0));
    let borrowed: Vec<(&[(VarId, f64)], f64)> =
        exprs.iter().map(|(t, c)| (t.as_slice(), *c)).collect();
    let threshold_var =
        lp.epigraph_max(&borrowed, tariff.peak_rate_per_mw_day() * horizon_days)?;

    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("day-ahead LP status {:?}", sol.status)));
    }

    let scenario_dispatch: Vec<TimeSeries> = blocks
        .iter()
        .map(|b| extract_dispatch(&sol, b, plan_load.step_seconds(), spec.lambda_b))
        .collect::<Result<_>>()?;

    let baseline = match &offset_vars {
        None => forecast.clone(),
        Some(z) => {
            let offsets: Vec<f64> = z.iter().map(|v| sol.value(*v)).collect();
            let offset_series =
                TimeSeries::new(plan_load.step_seconds(), offsets)?.upsample_hold(downsample)?;
            TimeSeries::new(
                forecast.step_seconds(),
                forecast
                    .values()
                    .iter()
                    .zip(offset_series.values())
                    .map(|(f, z)| f + z)
                    .collect(),
            )?
        }
    };

    let plan = DayAheadPlan {
        capacity_mw: sol.value(capacity),
        threshold_mw: sol.value(threshold_var),
        baseline,
        scenario_dispatch,
        planned_objective: sol.objective_value,
    };

    // The epigraph value must equal the threshold recomputed from the
    // planned dispatch.
    let recomputed = threshold_from_dispatch(&plan, &plan_load, scenarios, window)?;
    if (recomputed - plan.threshold_mw).abs() > 1e-9 {
        return Err(Error::Solver(format!(
            "threshold {} disagrees with dispatch recomputation {}",
            plan.threshold_mw, recomputed
        )));
    }
    Ok(plan)
}

/// Extract the peak-shaving threshold from a solved plan by recomputing the
/// scenario-weighted expected smoothed net load from the planned dispatch.
/// Must equal the plan's stored epigraph value to 1e-9.
pub fn extract_threshold(
    plan: &DayAheadPlan,
    forecast: &TimeSeries,
    scenarios: &ScenarioSet,
    tariff: &Tariff,
    downsample: usize,
) -> Result<f64> {
    let plan_load = forecast.downsample_mean(downsample)?;
    let window = tariff.peak_window_steps(&plan_load)?;
    let recomputed = threshold_from_dispatch(plan, &plan_load, scenarios, window)?;
    if (recomputed - plan.threshold_mw).abs() > 1e-9 {
        return Err(Error::Solver(format!(
            "stored threshold {} disagrees with recomputation {}",
            plan.threshold_mw, recomputed
        )));
    }
    Ok(recomputed)
}

fn threshold_from_dispatch(
    plan: &DayAheadPlan,
    plan_load: &TimeSeries,
    scenarios: &ScenarioSet,
    window: usize,
) -> Result<f64> {
    if plan.scenario_dispatch.len() != scenarios.len() {
        return Err(Error::Validation(
            "plan and scenario set disagree on scenario count".into(),
        ));
    }
    let weights = scenarios.weights();
    let n_windows = plan_load.len() / window;
    let mut best: f64 = 0.0;
    for win in 0..n_windows {
        let range = win * window..(win + 1) * window;
        let smoothed_load: f64 =
            plan_load.values()[range.clone()].iter().sum::<f64>() / window as f64;
        let mut expected = smoothed_load;
        for (i, dispatch) in plan.scenario_dispatch.iter().enumerate() {
            let b_bar: f64 =
                dispatch.values()[range.clone()].iter().sum::<f64>() / window as f64;
            expected -= weights[i] * b_bar;
        }
        best = best.max(expected);
    }
    Ok(best)
}
