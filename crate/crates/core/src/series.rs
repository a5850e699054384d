//! Uniformly sampled time series.

use crate::error::{Error, Result};
use crate::{SECONDS_PER_DAY, SECONDS_PER_HOUR};
use serde::{Deserialize, Serialize};

/// A uniformly sampled real-valued sequence.
///
/// Carries load `s(t)` and battery power `b(t)` in MW, and normalized
/// regulation signals `r(t)` in [-1, 1]. The step size is in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    step_seconds: f64,
    values: Vec<f64>,
}

impl TimeSeries {
    /// Build a series, validating the invariants: positive step, finite
    /// values, length at least one.
    pub fn new(step_seconds: f64, values: Vec<f64>) -> Result<Self> {
        if !(step_seconds > 0.0) || !step_seconds.is_finite() {
            return Err(Error::Validation(format!(
                "step_seconds must be positive and finite, got {step_seconds}"
            )));
        }
        if values.is_empty() {
            return Err(Error::Validation("series must have at least one value".into()));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {} at index {idx}",
                values[idx]
            )));
        }
        Ok(TimeSeries { step_seconds, values })
    }

    /// A series of `len` equal values.
    pub fn constant(step_seconds: f64, value: f64, len: usize) -> Result<Self> {
        TimeSeries::new(step_seconds, vec![value; len])
    }

    /// All-zero series aligned with `other`.
    pub fn zeros_like(other: &TimeSeries) -> Self {
        TimeSeries {
            step_seconds: other.step_seconds,
            values: vec![0.0; other.values.len()],
        }
    }

    pub fn step_seconds(&self) -> f64 {
        self.step_seconds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Hours covered by one step.
    pub fn step_hours(&self) -> f64 {
        self.step_seconds / SECONDS_PER_HOUR
    }

    /// Total span of the series in hours.
    pub fn span_hours(&self) -> f64 {
        self.len() as f64 * self.step_hours()
    }

    /// Total span of the series in days.
    pub fn span_days(&self) -> f64 {
        self.len() as f64 * self.step_seconds / SECONDS_PER_DAY
    }

    /// Sum of `value * step` in MWh (values interpreted as MW).
    pub fn energy_mwh(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.step_hours()
    }

    /// Sum of `|value| * step` in MWh.
    pub fn throughput_mwh(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.step_hours()
    }

    /// Check that `other` has the same step and length.
    pub fn check_aligned(&self, other: &TimeSeries) -> Result<()> {
        if !steps_equal(self.step_seconds, other.step_seconds) {
            return Err(Error::Alignment(format!(
                "step mismatch: {} s vs {} s",
                self.step_seconds, other.step_seconds
            )));
        }
        if self.len() != other.len() {
            return Err(Error::Alignment(format!(
                "length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Pointwise difference `self - other`.
    pub fn sub(&self, other: &TimeSeries) -> Result<TimeSeries> {
        self.check_aligned(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        TimeSeries::new(self.step_seconds, values)
    }

    /// Block-average by an integer factor. The factor must divide the length.
    /// The output step grows by the same factor.
    pub fn downsample_mean(&self, factor: usize) -> Result<TimeSeries> {
        if factor == 0 {
            return Err(Error::Domain("downsample factor must be >= 1".into()));
        }
        if self.len() % factor != 0 {
            return Err(Error::Alignment(format!(
                "factor {factor} does not divide length {}",
                self.len()
            )));
        }
        let values = self
            .values
            .chunks_exact(factor)
            .map(|c| c.iter().sum::<f64>() / factor as f64)
            .collect();
        TimeSeries::new(self.step_seconds * factor as f64, values)
    }

    /// Repeat each value `factor` times, shrinking the step accordingly.
    pub fn upsample_hold(&self, factor: usize) -> Result<TimeSeries> {
        if factor == 0 {
            return Err(Error::Domain("upsample factor must be >= 1".into()));
        }
        let mut values = Vec::with_capacity(self.len() * factor);
        for v in &self.values {
            values.extend(std::iter::repeat(*v).take(factor));
        }
        TimeSeries::new(self.step_seconds / factor as f64, values)
    }

    /// Number of steps that make up `window_seconds`, requiring an integer
    /// multiple of the step size.
    pub fn steps_for_window(&self, window_seconds: f64) -> Result<usize> {
        let ratio = window_seconds / self.step_seconds;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Alignment(format!(
                "window of {window_seconds} s is not an integer multiple of the {} s step",
                self.step_seconds
            )));
        }
        Ok(rounded as usize)
    }
}

/// Step sizes are considered equal within a tight relative tolerance; they
/// normally come from the same config so this only absorbs parse round-trips.
pub(crate) fn steps_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}
