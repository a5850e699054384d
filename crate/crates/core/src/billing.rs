//! Commercial-tariff billing: energy charge, smoothed peak demand charge,
//! and total-bill assembly.
//!
//! The peak demand charge is billed on the maximum of non-overlapping
//! (tumbling) window averages of net load; the monthly rate is prorated to
//! the billed horizon at `lambda_peak_month * 1000 / days_per_month` dollars
//! per MW and day.

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use serde::{Deserialize, Serialize};

/// Price coefficients of the tariff and the regulation market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    /// Energy price, $/MWh.
    pub lambda_elec: f64,
    /// Demand charge, $/kW-month.
    pub lambda_peak_month: f64,
    /// Regulation capacity payment, $/MW-hour.
    pub lambda_c: f64,
    /// Regulation mismatch penalty, $/MWh of absolute tracking error.
    pub lambda_mis: f64,
    /// Smoothing window for the demand charge, seconds.
    pub peak_window_seconds: f64,
    /// Proration divisor: days per billing month.
    pub days_per_month: f64,
}

impl Tariff {
    /// Validate the invariants (non-negative prices, positive window).
    pub fn validate(&self) -> Result<()> {
        let prices = [
            ("lambda_elec", self.lambda_elec),
            ("lambda_peak_month", self.lambda_peak_month),
            ("lambda_c", self.lambda_c),
            ("lambda_mis", self.lambda_mis),
        ];
        for (name, v) in prices {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.peak_window_seconds > 0.0) {
            return Err(Error::Validation("peak_window_seconds must be > 0".into()));
        }
        if !(self.days_per_month > 0.0) {
            return Err(Error::Validation("days_per_month must be > 0".into()));
        }
        Ok(())
    }

    /// Demand-charge rate prorated to one day, $/MW-day.
    /// `lambda_peak_month` is quoted per kW, hence the factor 1000.
    pub fn peak_rate_per_mw_day(&self) -> f64 {
        self.lambda_peak_month * 1000.0 / self.days_per_month
    }

    /// Number of steps of `series` forming one peak window.
    pub fn peak_window_steps(&self, series: &TimeSeries) -> Result<usize> {
        series.steps_for_window(self.peak_window_seconds)
    }
}

/// Outcome of providing regulation service over the billed horizon, used by
/// the bill assembler: capacity payment minus mismatch penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulationOutcome {
    /// Committed stand-by capacity, MW.
    pub capacity_mw: f64,
    /// Accumulated |response - instruction| energy, MWh.
    pub mismatch_mwh: f64,
}

/// Itemized bill. `total` always satisfies
/// `energy + peak + battery - regulation_revenue`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillBreakdown {
    pub energy_charge: f64,
    pub peak_charge: f64,
    pub battery_cost: f64,
    pub regulation_revenue: f64,
    pub total: f64,
}

impl BillBreakdown {
    pub fn new(
        energy_charge: f64,
        peak_charge: f64,
        battery_cost: f64,
        regulation_revenue: f64,
    ) -> Self {
        BillBreakdown {
            energy_charge,
            peak_charge,
            battery_cost,
            regulation_revenue,
            total: energy_charge + peak_charge + battery_cost - regulation_revenue,
        }
    }

    /// An all-zero bill.
    pub fn zero() -> Self {
        BillBreakdown::new(0.0, 0.0, 0.0, 0.0)
    }
}

/// Non-overlapping window averages. Each output value is the arithmetic mean
/// of one window of `window_steps` input values; the output step grows by
/// the same factor. The window must divide the series length.
pub fn smooth(series: &TimeSeries, window_steps: usize) -> Result<TimeSeries> {
    series.downsample_mean(window_steps)
}

/// Energy charge: `lambda_elec * sum s(t) * t_s` with `t_s` in hours.
/// Negative load (export) is priced symmetrically.
pub fn energy_charge(load: &TimeSeries, tariff: &Tariff) -> f64 {
    tariff.lambda_elec * load.energy_mwh()
}

/// Peak demand charge over `horizon_days`: prorated monthly rate times the
/// maximum smoothed window average of the load, floored at zero.
pub fn peak_charge(load: &TimeSeries, tariff: &Tariff, horizon_days: f64) -> Result<f64> {
    let window = tariff.peak_window_steps(load)?;
    let smoothed = smooth(load, window)?;
    let peak = smoothed
        .values()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    Ok(tariff.peak_rate_per_mw_day() * horizon_days * peak)
}

/// Assemble the total bill for a horizon.
///
/// * `battery_power` is the signed battery injection b(t): positive
///   discharges, so the grid draw is `load - battery_power`.
/// * `lambda_b` is the degradation price in $/MWh of battery throughput.
/// * `horizon_days` scales the demand-charge proration; pass
///   `load.span_days()` to bill exactly the covered span.
/// * When `regulation` is present, the capacity payment accrues at
///   `lambda_c` per MW-hour over the covered span and the mismatch penalty
///   at `lambda_mis` per MWh.
pub fn total_bill(
    load: &TimeSeries,
    battery_power: &TimeSeries,
    regulation: Option<&RegulationOutcome>,
    tariff: &Tariff,
    lambda_b: f64,
    horizon_days: f64,
) -> Result<BillBreakdown> {
    load.check_aligned(battery_power)?;
    let net = load.sub(battery_power)?;
    let energy = energy_charge(&net, tariff);
    let peak = peak_charge(&net, tariff, horizon_days)?;
    let battery_cost = lambda_b * battery_power.throughput_mwh();
    let revenue = match regulation {
        Some(reg) => {
            tariff.lambda_c * reg.capacity_mw * load.span_hours()
                - tariff.lambda_mis * reg.mismatch_mwh
        }
        None => 0.0,
    };
    Ok(BillBreakdown::new(energy, peak, battery_cost, revenue))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn tariff() -> Tariff {
        Tariff {
            lambda_elec: 47.0,
            lambda_peak_month: 12.0,
            lambda_c: 50.0,
            lambda_mis: 166.0,
            peak_window_seconds: 900.0,
            days_per_month: 30.0,
        }
    }

    #[test]
    fn smooth_constant_series() {
        let ts = TimeSeries::new(4.0, vec![1.0; 4]).unwrap();
        let out = smooth(&ts, 2).unwrap();
        assert_eq!(out.values(), &[1.0, 1.0]);
        assert_relative_eq!(out.step_seconds(), 8.0);
    }

    #[test]
    fn smooth_whole_series_mean() {
        let ts = TimeSeries::new(4.0, vec![0.0, 0.0, 4.0, 4.0]).unwrap();
        let out = smooth(&ts, 4).unwrap();
        assert_eq!(out.values(), &[2.0]);
    }

    #[test]
    fn smooth_matches_explicit_per_window_summation() {
        // Oracle: explicit per-window sum / count.
        let mut rng = StdRng::seed_from_u64(42);
        let values: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ts = TimeSeries::new(4.0, values.clone()).unwrap();
        let out = smooth(&ts, 2).unwrap();
        for (w, got) in out.values().iter().enumerate() {
            let expect = (values[2 * w] + values[2 * w + 1]) / 2.0;
            assert_relative_eq!(*got, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn smooth_rejects_nondividing_window() {
        let ts = TimeSeries::new(4.0, vec![1.0; 5]).unwrap();
        assert!(matches!(smooth(&ts, 2), Err(Error::Alignment(_))));
    }

    #[test]
    fn smooth_is_linear() {
        let mut rng = StdRng::seed_from_u64(7);
        let x = TimeSeries::new(4.0, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = TimeSeries::new(4.0, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (a, b) = (2.5, -0.75);
        let combo = TimeSeries::new(
            4.0,
            x.values()
                .iter()
                .zip(y.values())
                .map(|(xv, yv)| a * xv + b * yv)
                .collect(),
        )
        .unwrap();
        let lhs = smooth(&combo, 3).unwrap();
        let sx = smooth(&x, 3).unwrap();
        let sy = smooth(&y, 3).unwrap();
        for i in 0..lhs.len() {
            let rhs = a * sx.values()[i] + b * sy.values()[i];
            assert_relative_eq!(lhs.values()[i], rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn energy_charge_zero_load() {
        let ts = TimeSeries::constant(4.0, 0.0, 10).unwrap();
        assert_eq!(energy_charge(&ts, &tariff()), 0.0);
    }

    #[test]
    fn energy_charge_one_mw_day() {
        // 47 $/MWh * 24 MWh
        let ts = TimeSeries::constant(3600.0, 1.0, 24).unwrap();
        assert_relative_eq!(energy_charge(&ts, &tariff()), 1128.0, max_relative = 1e-12);
    }

    #[test]
    fn energy_charge_fractional_steps() {
        // 47 * 0.5 MW * 8 s / 3600
        let ts = TimeSeries::constant(4.0, 0.5, 2).unwrap();
        assert_relative_eq!(
            energy_charge(&ts, &tariff()),
            47.0 * 0.5 * 8.0 / 3600.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn energy_charge_additive_over_concatenation() {
        let mut rng = StdRng::seed_from_u64(3);
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let b: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let mut joined = a.clone();
        joined.extend_from_slice(&b);
        let t = tariff();
        let ea = energy_charge(&TimeSeries::new(4.0, a).unwrap(), &t);
        let eb = energy_charge(&TimeSeries::new(4.0, b).unwrap(), &t);
        let ej = energy_charge(&TimeSeries::new(4.0, joined).unwrap(), &t);
        assert_relative_eq!(ea + eb, ej, max_relative = 1e-12);
    }

    #[test]
    fn peak_charge_constant_one_mw_day() {
        // 12 $/kW-month * 1000 / 30 = 400 $/MW-day.
        let ts = TimeSeries::constant(900.0, 1.0, 96).unwrap();
        assert_relative_eq!(peak_charge(&ts, &tariff(), 1.0).unwrap(), 400.0);
    }

    #[test]
    fn peak_charge_zero_load_and_floor() {
        let ts = TimeSeries::constant(900.0, 0.0, 96).unwrap();
        assert_eq!(peak_charge(&ts, &tariff(), 1.0).unwrap(), 0.0);
        let exporting = TimeSeries::constant(900.0, -3.0, 96).unwrap();
        assert_eq!(peak_charge(&exporting, &tariff(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn peak_charge_single_window_peak() {
        let mut values = vec![0.5; 96];
        values[39] = 1.2;
        let ts = TimeSeries::new(900.0, values).unwrap();
        assert_relative_eq!(peak_charge(&ts, &tariff(), 1.0).unwrap(), 480.0);
    }

    #[test]
    fn peak_charge_monotone_in_load() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let base: Vec<f64> = (0..24).map(|_| rng.gen_range(0.0..2.0)).collect();
            let bigger: Vec<f64> = base.iter().map(|v| v + rng.gen_range(0.0..0.5)).collect();
            let t = tariff();
            let lo = peak_charge(&TimeSeries::new(225.0, base).unwrap(), &t, 1.0).unwrap();
            let hi = peak_charge(&TimeSeries::new(225.0, bigger).unwrap(), &t, 1.0).unwrap();
            assert!(hi >= lo - 1e-12);
        }
    }

    #[test]
    fn total_bill_reproduces_component_arithmetic() {
        // Original-day fixture: energy 884.2 + peak 461.5 = 1345.7.
        let bill = BillBreakdown::new(884.2, 461.5, 0.0, 0.0);
        assert_relative_eq!(bill.total, 1345.7, max_relative = 1e-9);
    }

    #[test]
    fn total_bill_zero_everything() {
        let load = TimeSeries::constant(900.0, 1.0, 96).unwrap();
        let batt = TimeSeries::zeros_like(&load);
        let free = Tariff {
            lambda_elec: 0.0,
            lambda_peak_month: 0.0,
            lambda_c: 0.0,
            lambda_mis: 0.0,
            peak_window_seconds: 900.0,
            days_per_month: 30.0,
        };
        let bill = total_bill(&load, &batt, None, &free, 0.0, 1.0).unwrap();
        assert_eq!(bill.total, 0.0);
    }

    #[test]
    fn total_bill_matches_componentwise_oracle() {
        let mut rng = StdRng::seed_from_u64(99);
        let load =
            TimeSeries::new(900.0, (0..96).map(|_| rng.gen_range(0.3..1.5)).collect()).unwrap();
        let batt =
            TimeSeries::new(900.0, (0..96).map(|_| rng.gen_range(-0.2..0.2)).collect()).unwrap();
        let t = tariff();
        let lambda_b = 83.0;
        let reg = RegulationOutcome {
            capacity_mw: 0.8,
            mismatch_mwh: 0.05,
        };
        let bill = total_bill(&load, &batt, Some(&reg), &t, lambda_b, 1.0).unwrap();

        // Recompute each term independently.
        let net = load.sub(&batt).unwrap();
        let energy = t.lambda_elec * net.values().iter().sum::<f64>() * 0.25;
        let window = t.peak_window_steps(&net).unwrap();
        let peak_mw = net
            .values()
            .chunks_exact(window)
            .map(|c| c.iter().sum::<f64>() / window as f64)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        let peak = 400.0 * peak_mw;
        let batt_cost = lambda_b * batt.values().iter().map(|v| v.abs()).sum::<f64>() * 0.25;
        let revenue = t.lambda_c * 0.8 * 24.0 - t.lambda_mis * 0.05;

        assert_relative_eq!(bill.energy_charge, energy, max_relative = 1e-9);
        assert_relative_eq!(bill.peak_charge, peak, max_relative = 1e-9);
        assert_relative_eq!(bill.battery_cost, batt_cost, max_relative = 1e-9);
        assert_relative_eq!(bill.regulation_revenue, revenue, max_relative = 1e-9);
        assert_relative_eq!(
            bill.total,
            energy + peak + batt_cost - revenue,
            max_relative = 1e-9
        );
    }

    #[test]
    fn misaligned_series_rejected() {
        let load = TimeSeries::constant(900.0, 1.0, 96).unwrap();
        let batt = TimeSeries::constant(450.0, 0.0, 96).unwrap();
        assert!(matches!(
            total_bill(&load, &batt, None, &tariff(), 0.0, 1.0),
            Err(Error::Alignment(_))
        ));
    }

    proptest! {
        // Bill as a function of the battery profile is convex.
        #[test]
        fn bill_convex_in_battery(seed in 0u64..100, theta in 0.0f64..1.0) {
            let mut rng = StdRng::seed_from_u64(seed);
            let t = tariff();
            let lambda_b = 83.0;
            let load = TimeSeries::new(
                225.0,
                (0..16).map(|_| rng.gen_range(0.0..2.0)).collect(),
            ).unwrap();
            let b1: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b2: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
            let as_ts = |v: Vec<f64>| TimeSeries::new(225.0, v).unwrap();
            let f = |b: &TimeSeries| total_bill(&load, b, None, &t, lambda_b, 1.0).unwrap().total;
            let lhs = f(&as_ts(mix));
            let rhs = theta * f(&as_ts(b1)) + (1.0 - theta) * f(&as_ts(b2));
            prop_assert!(lhs <= rhs + 1e-9);
        }
    }
}
