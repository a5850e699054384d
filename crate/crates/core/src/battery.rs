//! Battery electrical model and the linearized degradation cost.
//!
//! SoC evolves as `soc' = soc + [b_ch*eta_c - b_dc/eta_d] * h / E` with `h`
//! the step in hours and `E` the usable energy capacity in MWh. Degradation
//! is priced at a constant `lambda_b` $/MWh of metered throughput, obtained
//! by prorating the cell cost over the energy the cell can process within
//! its DoD window before end of life.

use crate::error::{Error, Result};
use crate::SECONDS_PER_HOUR;
use serde::{Deserialize, Serialize};

/// Ratings and prices of the grid-service portion of the battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    /// Power rating, MW (same limit for charge and discharge).
    pub p_max_mw: f64,
    /// Usable energy capacity E, MWh.
    pub energy_capacity_mwh: f64,
    /// Lower SoC bound, fraction of E.
    pub soc_min: f64,
    /// Upper SoC bound, fraction of E.
    pub soc_max: f64,
    /// Charge efficiency in (0, 1].
    pub eta_c: f64,
    /// Discharge efficiency in (0, 1].
    pub eta_d: f64,
    /// Degradation price, $/MWh of throughput.
    pub lambda_b: f64,
}

impl BatterySpec {
    pub fn validate(&self) -> Result<()> {
        // Zero is allowed as the degenerate "no battery" spec; the planner
        // reduction checks rely on it.
        if !(self.p_max_mw >= 0.0) {
            return Err(Error::Validation("p_max_mw must be >= 0".into()));
        }
        if !(self.energy_capacity_mwh > 0.0) {
            return Err(Error::Validation("energy_capacity_mwh must be > 0".into()));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::Validation(format!(
                "need 0 <= soc_min < soc_max <= 1, got [{}, {}]",
                self.soc_min, self.soc_max
            )));
        }
        for (name, eta) in [("eta_c", self.eta_c), ("eta_d", self.eta_d)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Validation(format!("{name} must be in (0, 1], got {eta}")));
            }
        }
        if !(self.lambda_b >= 0.0) {
            return Err(Error::Validation("lambda_b must be >= 0".into()));
        }
        Ok(())
    }
}

/// Mutable battery state: the SoC fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
}

impl BatteryState {
    pub fn new(soc: f64, spec: &BatterySpec) -> Result<Self> {
        if soc < spec.soc_min - 1e-12 || soc > spec.soc_max + 1e-12 {
            return Err(Error::SocViolation {
                soc,
                soc_min: spec.soc_min,
                soc_max: spec.soc_max,
            });
        }
        Ok(BatteryState { soc })
    }
}

/// Cell-level degradation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    /// Cell price, $/Wh.
    pub lambda_cell: f64,
    /// Cycle life N within the DoD window.
    pub cycles_n: u64,
    /// DoD window, `soc_max - soc_min`.
    pub dod_window: f64,
}

/// Prorate the cell cost into a throughput price:
/// `lambda_cell * 1e6 / (2 N (SoC_max - SoC_min))`, in $/MWh.
pub fn lambda_b_from_cell(cell: &CellParams) -> Result<f64> {
    if cell.cycles_n == 0 || !(cell.dod_window > 0.0) {
        return Err(Error::Domain(format!(
            "cycle life and DoD window must be positive, got N={} window={}",
            cell.cycles_n, cell.dod_window
        )));
    }
    if !(cell.lambda_cell >= 0.0) {
        return Err(Error::Domain("cell price must be >= 0".into()));
    }
    Ok(cell.lambda_cell * 1e6 / (2.0 * cell.cycles_n as f64 * cell.dod_window))
}

/// Degradation cost of running at `b_mw` (signed) for one step.
pub fn degradation_cost(b_mw: f64, step_seconds: f64, spec: &BatterySpec) -> Result<f64> {
    if b_mw.abs() > spec.p_max_mw + 1e-12 {
        return Err(Error::PowerLimit {
            requested_mw: b_mw,
            p_max_mw: spec.p_max_mw,
        });
    }
    Ok(spec.lambda_b * b_mw.abs() * step_seconds / SECONDS_PER_HOUR)
}

/// Advance the SoC one step with split charge/discharge powers (both >= 0,
/// at most one nonzero). Errors if the result leaves the SoC window; route
/// requests through [`feasible_power`] to avoid that.
pub fn step(
    state: BatteryState,
    b_ch_mw: f64,
    b_dc_mw: f64,
    step_seconds: f64,
    spec: &BatterySpec,
) -> Result<BatteryState> {
    if b_ch_mw < 0.0 || b_dc_mw < 0.0 {
        return Err(Error::Domain("charge/discharge powers must be >= 0".into()));
    }
    if b_ch_mw > spec.p_max_mw + 1e-12 || b_dc_mw > spec.p_max_mw + 1e-12 {
        return Err(Error::PowerLimit {
            requested_mw: b_ch_mw.max(b_dc_mw),
            p_max_mw: spec.p_max_mw,
        });
    }
    if b_ch_mw > 0.0 && b_dc_mw > 0.0 {
        return Err(Error::Domain(
            "simultaneous charge and discharge is not allowed".into(),
        ));
    }
    let h = step_seconds / SECONDS_PER_HOUR;
    let soc = state.soc + (b_ch_mw * spec.eta_c - b_dc_mw / spec.eta_d) * h / spec.energy_capacity_mwh;
    if soc < spec.soc_min - 1e-9 || soc > spec.soc_max + 1e-9 {
        return Err(Error::SocViolation {
            soc,
            soc_min: spec.soc_min,
            soc_max: spec.soc_max,
        });
    }
    Ok(BatteryState {
        soc: soc.clamp(spec.soc_min, spec.soc_max),
    })
}

/// Clip a signed power request (positive = discharge) to what the rating and
/// the SoC window allow for one step. Stepping with the returned value never
/// violates the SoC bounds.
pub fn feasible_power(
    state: BatteryState,
    requested_mw: f64,
    step_seconds: f64,
    spec: &BatterySpec,
) -> f64 {
    let h = step_seconds / SECONDS_PER_HOUR;
    if requested_mw >= 0.0 {
        let soc_limit = spec.eta_d * (state.soc - spec.soc_min).max(0.0) * spec.energy_capacity_mwh / h;
        requested_mw.min(spec.p_max_mw).min(soc_limit)
    } else {
        let soc_limit = (state.soc - spec.soc_max).min(0.0) * spec.energy_capacity_mwh / (spec.eta_c * h);
        requested_mw.max(-spec.p_max_mw).max(soc_limit)
    }
}

/// Apply a signed power through the SoC update, clipping first.
/// Returns the realized power and the new state.
pub fn apply_power(
    state: BatteryState,
    requested_mw: f64,
    step_seconds: f64,
    spec: &BatterySpec,
) -> (f64, BatteryState) {
    let b = feasible_power(state, requested_mw, step_seconds, spec);
    let (ch, dc) = if b >= 0.0 { (0.0, b) } else { (-b, 0.0) };
    let next = step(state, ch, dc, step_seconds, spec)
        .expect("feasible_power guarantees the step stays in bounds");
    (b, next)
}
