//! Run configuration: a TOML file with unit-suffixed keys. Unknown keys are
//! rejected; every block mirrors the corresponding core type.

use anyhow::{bail, Context, Result};
use peakreg_core::battery::{lambda_b_from_cell, CellParams};
use peakreg_core::planner::BaselineMode;
use peakreg_core::{BatterySpec, Tariff};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffConfig {
    pub lambda_elec_usd_per_mwh: f64,
    pub lambda_peak_usd_per_kw_month: f64,
    pub lambda_c_usd_per_mw_hour: f64,
    pub lambda_mis_usd_per_mwh: f64,
    pub peak_window_seconds: f64,
    #[serde(default = "default_days_per_month")]
    pub days_per_month: f64,
}

fn default_days_per_month() -> f64 {
    30.0
}

impl TariffConfig {
    pub fn to_tariff(&self) -> Tariff {
        Tariff {
            lambda_elec: self.lambda_elec_usd_per_mwh,
            lambda_peak_month: self.lambda_peak_usd_per_kw_month,
            lambda_c: self.lambda_c_usd_per_mw_hour,
            lambda_mis: self.lambda_mis_usd_per_mwh,
            peak_window_seconds: self.peak_window_seconds,
            days_per_month: self.days_per_month,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub lambda_cell_usd_per_wh: f64,
    pub cycles: u64,
    pub dod_window: f64,
}

impl CellConfig {
    pub fn to_cell(&self) -> CellParams {
        CellParams {
            lambda_cell: self.lambda_cell_usd_per_wh,
            cycles_n: self.cycles,
            dod_window: self.dod_window,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    pub p_max_mw: f64,
    pub energy_capacity_mwh: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    #[serde(default = "default_eta")]
    pub eta_c: f64,
    #[serde(default = "default_eta")]
    pub eta_d: f64,
    pub lambda_b_usd_per_mwh: f64,
    #[serde(default = "default_soc_ini")]
    pub soc_ini: f64,
    pub cell: Option<CellConfig>,
}

fn default_eta() -> f64 {
    0.95
}

fn default_soc_ini() -> f64 {
    0.5
}

impl BatteryConfig {
    pub fn to_spec(&self) -> BatterySpec {
        BatterySpec {
            p_max_mw: self.p_max_mw,
            energy_capacity_mwh: self.energy_capacity_mwh,
            soc_min: self.soc_min,
            soc_max: self.soc_max,
            eta_c: self.eta_c,
            eta_d: self.eta_d,
            lambda_b: self.lambda_b_usd_per_mwh,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    pub step_seconds: f64,
    pub steps: usize,
    #[serde(default = "default_downsample")]
    pub downsample: usize,
    /// Demand-charge proration in days; omitted means the series span.
    pub peak_days: Option<f64>,
    #[serde(default = "default_baseline")]
    pub baseline: BaselineMode,
}

fn default_downsample() -> usize {
    15
}

fn default_baseline() -> BaselineMode {
    BaselineMode::Forecast
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_scenario_count")]
    pub scenario_count: usize,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_lo")]
    pub signal_lo: f64,
    #[serde(default = "default_hi")]
    pub signal_hi: f64,
    #[serde(default = "default_block")]
    pub signal_block_steps: usize,
    #[serde(default = "default_base_mw")]
    pub base_mw: f64,
    #[serde(default = "default_peak_mw")]
    pub peak_mw: f64,
    #[serde(default = "default_peak_minutes")]
    pub peak_minutes: f64,
    #[serde(default = "default_peak_start")]
    pub peak_start_minutes: f64,
    #[serde(default)]
    pub lambda_cell_grid: Vec<f64>,
    #[serde(default)]
    pub peak_price_grid: Vec<f64>,
    #[serde(default)]
    pub capacity_payment_grid: Vec<f64>,
}

fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}
fn default_scenario_count() -> usize {
    10
}
fn default_sigma2() -> f64 {
    0.12
}
fn default_lo() -> f64 {
    -1.0
}
fn default_hi() -> f64 {
    1.0
}
fn default_block() -> usize {
    1
}
fn default_base_mw() -> f64 {
    0.5
}
fn default_peak_mw() -> f64 {
    1.0
}
fn default_peak_minutes() -> f64 {
    15.0
}
fn default_peak_start() -> f64 {
    30.0
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("all experiment keys have defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tariff: TariffConfig,
    pub battery: BatteryConfig,
    pub horizon: HorizonConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(RunConfig, Vec<u8>)> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let text = std::str::from_utf8(&bytes)
            .with_context(|| format!("config {} is not UTF-8", path.display()))?;
        let cfg: RunConfig = toml::from_str(text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        self.tariff
            .to_tariff()
            .validate()
            .context("tariff block")?;
        self.battery
            .to_spec()
            .validate()
            .context("battery block")?;
        let spec = self.battery.to_spec();
        if self.battery.soc_ini < spec.soc_min || self.battery.soc_ini > spec.soc_max {
            bail!(
                "battery.soc_ini {} outside [{}, {}]",
                self.battery.soc_ini,
                spec.soc_min,
                spec.soc_max
            );
        }
        if self.horizon.step_seconds <= 0.0 || self.horizon.steps == 0 {
            bail!("horizon.step_seconds and horizon.steps must be positive");
        }
        if self.horizon.downsample == 0 {
            bail!("horizon.downsample must be >= 1");
        }
        Ok(())
    }

    /// Demand-charge proration for a series spanning `span_days`.
    pub fn peak_days_for(&self, span_days: f64) -> f64 {
        self.horizon.peak_days.unwrap_or(span_days)
    }

    /// Cross-check the configured degradation price against the cell-cost
    /// formula; returns a printable note when they disagree by more than 1%.
    pub fn lambda_b_consistency_note(&self) -> Option<String> {
        let cell = self.battery.cell.as_ref()?;
        let formula = lambda_b_from_cell(&cell.to_cell()).ok()?;
        let configured = self.battery.lambda_b_usd_per_mwh;
        let rel = if formula == 0.0 {
            if configured == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (configured - formula).abs() / formula
        };
        if rel > 0.01 {
            Some(format!(
                "note: configured lambda_b = {configured} $/MWh differs from the \
                 cell-prorated formula value {formula:.6} $/MWh by {:.1}% \
                 (formula: lambda_cell * 1e6 / (2 N dod_window))",
                rel * 100.0
            ))
        } else {
            None
        }
    }
}
