//! Day-ahead load forecasting with a multiple linear regression model over
//! calendar, temperature, and recent-load features.
//!
//! The expanded design matrix has a fixed, documented column order (the
//! compatibility contract for persisted models):
//!
//! | columns   | content                                         |
//! |-----------|-------------------------------------------------|
//! | 0         | intercept                                       |
//! | 1         | trend                                           |
//! | 2         | temperature (°C)                                |
//! | 3..14     | month one-hot, months 2..=12                    |
//! | 14..37    | hour one-hot (1..=23) × temperature             |
//! | 37..48    | month one-hot (2..=12) × temperature            |
//! | 48..186   | day-of-week (1..=6) × hour (1..=23) one-hot     |
//! | 186       | previous-day load at the same hour (MW)         |
//! | 187       | weekend indicator                               |
//! | 188       | holiday indicator                               |
//! | 189       | average load of recent similar days (MW)        |
//!
//! Categorical encodings drop the first level to limit collinearity. The
//! fit is least squares via SVD; rank-deficient designs fall back to the
//! minimum-norm solution and set a warning flag.

use crate::error::{Error, Result};
use chrono::{DateTime, Datelike, Timelike, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Number of columns of the expanded design.
pub const DESIGN_WIDTH: usize = 190;

const MONTH_BLOCK: usize = 3;
const HOUR_TMP_BLOCK: usize = 14;
const MONTH_TMP_BLOCK: usize = 37;
const DAY_HOUR_BLOCK: usize = 48;
const PREV_LOAD_COL: usize = 186;
const WEEKEND_COL: usize = 187;
const HOLIDAY_COL: usize = 188;
const SIMILAR_COL: usize = 189;

/// One observation's raw features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    /// Monotone time index (e.g. hours since the start of the dataset).
    pub trend: f64,
    /// Temperature forecast, °C.
    pub tmp_c: f64,
    /// Calendar month, 1..=12.
    pub month: u8,
    /// Hour of day, 0..=23.
    pub hour: u8,
    /// Day of week, 0 = Monday .. 6 = Sunday.
    pub day_of_week: u8,
    /// Load at the same hour on the previous day, MW.
    pub load_prev_day: f64,
    pub is_weekend: bool,
    pub is_holiday: bool,
    /// Mean load of the most recent similar days at this hour, MW.
    pub similar_days_avg: f64,
}

impl FeatureRow {
    fn validate(&self, idx: usize) -> Result<()> {
        if !(1..=12).contains(&self.month) {
            return Err(Error::Validation(format!(
                "row {idx}: month {} outside 1..=12",
                self.month
            )));
        }
        if self.hour > 23 {
            return Err(Error::Validation(format!(
                "row {idx}: hour {} outside 0..=23",
                self.hour
            )));
        }
        if self.day_of_week > 6 {
            return Err(Error::Validation(format!(
                "row {idx}: day_of_week {} outside 0..=6",
                self.day_of_week
            )));
        }
        for (name, v) in [
            ("trend", self.trend),
            ("tmp_c", self.tmp_c),
            ("load_prev_day", self.load_prev_day),
            ("similar_days_avg", self.similar_days_avg),
        ] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("row {idx}: {name} not finite")));
            }
        }
        Ok(())
    }

    fn fill(&self, out: &mut [f64]) {
        out.fill(0.0);
        out[0] = 1.0;
        out[1] = self.trend;
        out[2] = self.tmp_c;
        if self.month >= 2 {
            out[MONTH_BLOCK + self.month as usize - 2] = 1.0;
            out[MONTH_TMP_BLOCK + self.month as usize - 2] = self.tmp_c;
        }
        if self.hour >= 1 {
            out[HOUR_TMP_BLOCK + self.hour as usize - 1] = self.tmp_c;
        }
        if self.day_of_week >= 1 && self.hour >= 1 {
            out[DAY_HOUR_BLOCK + (self.day_of_week as usize - 1) * 23 + self.hour as usize - 1] =
                1.0;
        }
        out[PREV_LOAD_COL] = self.load_prev_day;
        out[WEEKEND_COL] = if self.is_weekend { 1.0 } else { 0.0 };
        out[HOLIDAY_COL] = if self.is_holiday { 1.0 } else { 0.0 };
        out[SIMILAR_COL] = self.similar_days_avg;
    }
}

/// Expand raw feature rows into the design matrix.
pub fn design_matrix(rows: &[FeatureRow]) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Domain("design matrix needs at least one row".into()));
    }
    let mut m = DMatrix::zeros(rows.len(), DESIGN_WIDTH);
    let mut buf = vec![0.0; DESIGN_WIDTH];
    for (i, row) in rows.iter().enumerate() {
        row.validate(i)?;
        row.fill(&mut buf);
        for (j, v) in buf.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// Fitted regression coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlrModel {
    pub coefficients: Vec<f64>,
    /// Set when the design was rank-deficient and the minimum-norm
    /// solution was taken.
    pub rank_deficient: bool,
}

impl MlrModel {
    pub fn predict_rows(&self, rows: &[FeatureRow]) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; DESIGN_WIDTH];
        rows.iter()
            .enumerate()
            .map(|(i, r)| {
                r.validate(i)?;
                r.fill(&mut buf);
                Ok(buf.iter().zip(&self.coefficients).map(|(x, c)| x * c).sum())
            })
            .collect()
    }
}

/// Minimum-norm least squares via SVD with a singular-value cutoff at
/// `eps * max(m, n) * sigma_max`.
pub(crate) fn least_squares_min_norm(a: &DMatrix<f64>, y: &[f64]) -> (Vec<f64>, bool) {
    let (m, n) = (a.nrows(), a.ncols());
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = f64::EPSILON * m.max(n) as f64 * sigma_max;
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > cutoff)
        .count();
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    // beta = V Sigma^+ U^T y restricted to the retained spectrum.
    let pseudo_apply = |rhs: &nalgebra::DVector<f64>| {
        let utr = u.transpose() * rhs;
        let mut scaled = nalgebra::DVector::zeros(svd.singular_values.len());
        for i in 0..svd.singular_values.len() {
            if svd.singular_values[i] > cutoff {
                scaled[i] = utr[i] / svd.singular_values[i];
            }
        }
        vt.transpose() * scaled
    };
    let yv = nalgebra::DVector::from_column_slice(y);
    let mut beta = pseudo_apply(&yv);
    // One step of iterative refinement sharpens ill-conditioned solves.
    let residual = &yv - a * &beta;
    beta += pseudo_apply(&residual);
    (beta.iter().cloned().collect(), rank < n.min(m))
}

/// Fit the regression by least squares. Rank-deficient designs yield the
/// minimum-norm coefficient vector with `rank_deficient` set.
pub fn fit(rows: &[FeatureRow], targets: &[f64]) -> Result<MlrModel> {
    if rows.len() != targets.len() {
        return Err(Error::Validation(format!(
            "{} rows but {} targets",
            rows.len(),
            targets.len()
        )));
    }
    let a = design_matrix(rows)?;
    let (coefficients, rank_deficient) = least_squares_min_norm(&a, targets);
    Ok(MlrModel {
        coefficients,
        rank_deficient,
    })
}

/// Mean absolute percentage error. Errors on the first zero actual value
/// (the ratio is undefined there).
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::Validation(format!(
            "length mismatch: {} vs {}",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Domain("MAPE of an empty sequence".into()));
    }
    let mut sum = 0.0;
    for (i, (a, p)) in actual.iter().zip(predicted).enumerate() {
        if *a == 0.0 {
            return Err(Error::Domain(format!(
                "actual value at index {i} is zero; MAPE undefined"
            )));
        }
        sum += ((a - p) / a).abs();
    }
    Ok(sum / actual.len() as f64)
}

/// Per-fold MAPE scores and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_mape: Vec<f64>,
    pub mean_mape: f64,
}

/// K-fold cross validation over deterministic contiguous time blocks:
/// fold `i` is held out, the model trains on the remainder.
pub fn kfold_cv(rows: &[FeatureRow], targets: &[f64], k: usize) -> Result<CvReport> {
    let n = rows.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k = {k} invalid for {n} samples")));
    }
    let mut fold_mape = Vec::with_capacity(k);
    for fold in 0..k {
        let lo = fold * n / k;
        let hi = (fold + 1) * n / k;
        let mut train_rows = Vec::with_capacity(n - (hi - lo));
        let mut train_y = Vec::with_capacity(n - (hi - lo));
        for i in (0..lo).chain(hi..n) {
            train_rows.push(rows[i].clone());
            train_y.push(targets[i]);
        }
        let model = fit(&train_rows, &train_y)?;
        let pred = model.predict_rows(&rows[lo..hi])?;
        fold_mape.push(mape(&targets[lo..hi], &pred)?);
    }
    let mean_mape = fold_mape.iter().sum::<f64>() / k as f64;
    Ok(CvReport {
        fold_mape,
        mean_mape,
    })
}

/// One row of the training CSV (`timestamp,mw,tmp_c,is_holiday`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub epoch: i64,
    pub mw: f64,
    pub tmp_c: f64,
    pub is_holiday: bool,
}

/// Read a training CSV with header `timestamp,mw,tmp_c,is_holiday`.
pub fn read_training_csv(path: &std::path::Path) -> Result<Vec<TrainingSample>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "timestamp,mw,tmp_c,is_holiday" {
                return Err(Error::Validation(format!(
                    "{}: header must be 'timestamp,mw,tmp_c,is_holiday'",
                    path.display()
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err(Error::Validation(format!(
                "{}: row {}: expected four cells",
                path.display(),
                idx + 1
            )));
        }
        let epoch = if let Ok(secs) = cells[0].trim().parse::<i64>() {
            secs
        } else {
            DateTime::parse_from_rfc3339(cells[0].trim())
                .map_err(|_| {
                    Error::Validation(format!(
                        "{}: row {}: bad timestamp {:?}",
                        path.display(),
                        idx + 1,
                        cells[0]
                    ))
                })?
                .timestamp()
        };
        let parse_f = |cell: &str, name: &str| -> Result<f64> {
            cell.trim().parse().map_err(|_| {
                Error::Validation(format!(
                    "{}: row {}: bad {name} {cell:?}",
                    path.display(),
                    idx + 1
                ))
            })
        };
        out.push(TrainingSample {
            epoch,
            mw: parse_f(cells[1], "mw")?,
            tmp_c: parse_f(cells[2], "tmp_c")?,
            is_holiday: matches!(cells[3].trim(), "1" | "true"),
        });
    }
    Ok(out)
}

fn calendar(epoch: i64) -> (u8, u8, u8) {
    let dt = DateTime::<Utc>::from_timestamp(epoch, 0).expect("valid epoch");
    (
        dt.month() as u8,
        dt.hour() as u8,
        dt.weekday().num_days_from_monday() as u8,
    )
}

/// Assemble feature rows from hourly history. Rows lacking a previous-day
/// sample or any similar-day history are skipped (their indices cannot be
/// constructed); returns the kept (row, target, epoch) triples.
///
/// "Similar days" are the most recent `similar_days` occurrences of the
/// same weekday at the same hour.
pub fn build_dataset(
    samples: &[TrainingSample],
    similar_days: usize,
) -> Result<(Vec<FeatureRow>, Vec<f64>, Vec<i64>)> {
    if similar_days == 0 {
        return Err(Error::Domain("similar_days must be >= 1".into()));
    }
    let by_epoch: std::collections::HashMap<i64, f64> =
        samples.iter().map(|s| (s.epoch, s.mw)).collect();
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut epochs = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let Some(prev) = by_epoch.get(&(s.epoch - 86_400)) else {
            continue;
        };
        // Most recent same-weekday loads at this hour (7-day strides back).
        let mut similar = Vec::with_capacity(similar_days);
        let mut back = s.epoch - 7 * 86_400;
        while similar.len() < similar_days {
            match by_epoch.get(&back) {
                Some(mw) => {
                    similar.push(*mw);
                    back -= 7 * 86_400;
                }
                None => break,
            }
        }
        if similar.is_empty() {
            continue;
        }
        let (month, hour, dow) = calendar(s.epoch);
        rows.push(FeatureRow {
            trend: i as f64,
            tmp_c: s.tmp_c,
            month,
            hour,
            day_of_week: dow,
            load_prev_day: *prev,
            is_weekend: dow >= 5,
            is_holiday: s.is_holiday,
            similar_days_avg: similar.iter().sum::<f64>() / similar.len() as f64,
        });
        targets.push(s.mw);
        epochs.push(s.epoch);
    }
    if rows.is_empty() {
        return Err(Error::Validation(
            "no trainable rows: history too short for previous-day and similar-day features"
                .into(),
        ));
    }
    Ok((rows, targets, epochs))
}

/// Feature rows for future timestamps, using the training history for the
/// previous-day and similar-day lookbacks. `future` holds
/// `(epoch, tmp_c, is_holiday)` per target hour.
pub fn features_for_future(
    samples: &[TrainingSample],
    future: &[(i64, f64, bool)],
    similar_days: usize,
) -> Result<Vec<FeatureRow>> {
    let by_epoch: std::collections::HashMap<i64, f64> =
        samples.iter().map(|s| (s.epoch, s.mw)).collect();
    let base_trend = samples.len() as f64;
    future
        .iter()
        .enumerate()
        .map(|(i, &(epoch, tmp_c, is_holiday))| {
            let prev = by_epoch.get(&(epoch - 86_400)).copied().ok_or_else(|| {
                Error::Validation(format!(
                    "no history at {} for the previous-day feature of {epoch}",
                    epoch - 86_400
                ))
            })?;
            let mut similar = Vec::with_capacity(similar_days);
            let mut back = epoch - 7 * 86_400;
            while similar.len() < similar_days {
                match by_epoch.get(&back) {
                    Some(mw) => {
                        similar.push(*mw);
                        back -= 7 * 86_400;
                    }
                    None => break,
                }
            }
            if similar.is_empty() {
                return Err(Error::Validation(format!(
                    "no similar-day history for target {epoch}"
                )));
            }
            let (month, hour, dow) = calendar(epoch);
            Ok(FeatureRow {
                trend: base_trend + i as f64,
                tmp_c,
                month,
                hour,
                day_of_week: dow,
                load_prev_day: prev,
                is_weekend: dow >= 5,
                is_holiday,
                similar_days_avg: similar.iter().sum::<f64>() / similar.len() as f64,
            })
        })
        .collect()
}
