//! Co-optimization of a behind-the-meter battery for demand-charge peak
//! shaving and fast frequency regulation.
//!
//! The crate is organized around the workflow of a commercial site that owns
//! a battery and wants to lower its electricity bill:
//!
//! * [`billing`] — time-series container and the tariff engine (energy
//!   charge, smoothed peak demand charge, bill assembly).
//! * [`battery`] — SoC dynamics with charge/discharge efficiencies and the
//!   linearized degradation cost model.
//! * [`lp`] — a self-contained bounded-variable revised simplex solver plus
//!   the reformulation helpers (absolute-value split, epigraph max).
//! * [`benchmarks`] — offline, perfect-foresight peak shaving and frequency
//!   regulation optima used as baselines.
//! * [`planner`] — day-ahead two-stage stochastic program over regulation
//!   scenarios; produces the capacity bid C* and peak threshold U*.
//! * [`controller`] — closed-form real-time regulation policy and the joint
//!   threshold controller, plus the day simulator.
//! * [`forecast`] — multiple-linear-regression day-ahead load forecasting.
//! * [`scenarios`] — scenario ingestion, forward reduction, and synthetic
//!   signal/load generators.
//! * [`analysis`] — superlinear-gain metrics, peak-duration statistics,
//!   battery life expectancy, and the price sensitivity sweep.

pub mod analysis;
pub mod battery;
pub mod benchmarks;
pub mod billing;
pub mod controller;
pub mod error;
pub mod forecast;
pub mod io;
pub mod lp;
pub mod planner;
pub mod scenarios;
pub mod series;

pub use battery::{BatterySpec, BatteryState, CellParams};
pub use billing::{BillBreakdown, RegulationOutcome, Tariff};
pub use error::Error;
pub use series::TimeSeries;

/// Seconds in one hour; all power/energy conversions go through this.
pub const SECONDS_PER_HOUR: f64 = 3600.0;
/// Seconds in one day.
pub const SECONDS_PER_DAY: f64 = 86_400.0;
