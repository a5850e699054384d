//! Regulation-signal scenario management: forward reduction of historical
//! scenario sets and the synthetic generators used by the sensitivity
//! studies (truncated-Gaussian signal, rectangle-peak load).

use crate::error::{Error, Result};
use crate::planner::ScenarioSet;
use crate::series::TimeSeries;
use crate::SECONDS_PER_HOUR;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Outcome of forward scenario reduction.
#[derive(Debug, Clone)]
pub struct ReductionResult {
    /// Indices of the kept scenarios, in selection order.
    pub kept_indices: Vec<usize>,
    /// Redistributed probabilities, one per kept scenario (same order as
    /// `kept_indices`), summing to one.
    pub new_weights: Vec<f64>,
    /// Probability-weighted distance from each dropped scenario to its
    /// nearest kept scenario.
    pub kantorovich_distance: f64,
}

impl ReductionResult {
    /// Materialize the reduced scenario set.
    pub fn apply(&self, original: &ScenarioSet) -> Result<ScenarioSet> {
        let scenarios: Vec<TimeSeries> = self
            .kept_indices
            .iter()
            .map(|&i| original.scenarios()[i].clone())
            .collect();
        ScenarioSet::new(scenarios, self.new_weights.clone())
    }
}

/// Distance between two aligned signal realizations: the Euclidean norm of
/// the pointwise difference scaled by sqrt(step/3600), which makes the
/// metric stable under resampling.
pub fn scenario_distance(a: &TimeSeries, b: &TimeSeries) -> Result<f64> {
    a.check_aligned(b)?;
    let sum_sq: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum_sq * a.step_seconds() / SECONDS_PER_HOUR).sqrt())
}

/// Greedy forward selection of `k` scenarios minimizing the probability-
/// weighted distance of the dropped scenarios to their nearest kept one.
/// Dropped probability mass moves to the nearest kept scenario; ties break
/// to the lowest index.
pub fn forward_reduce(scenarios: &ScenarioSet, k: usize) -> Result<ReductionResult> {
    let n = scenarios.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!(
            "cannot keep {k} of {n} scenarios"
        )));
    }
    let weights = scenarios.weights();

    // Pairwise distances; symmetric, computed in parallel by row.
    let series = scenarios.scenarios();
    let dist: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| scenario_distance(&series[i], &series[j]).expect("aligned by invariant"))
                .collect()
        })
        .collect();

    let mut kept: Vec<usize> = Vec::with_capacity(k);
    let mut is_kept = vec![false; n];
    // Distance from each scenario to its nearest kept scenario.
    let mut nearest = vec![f64::INFINITY; n];

    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for cand in 0..n {
            if is_kept[cand] {
                continue;
            }
            let mut cost = 0.0;
            for j in 0..n {
                if is_kept[j] || j == cand {
                    continue;
                }
                cost += weights[j] * nearest[j].min(dist[j][cand]);
            }
            let better = match best {
                None => true,
                Some((_, b)) => cost < b - 0.0, // strict; ties keep lower index
            };
            if better {
                best = Some((cand, cost));
            }
        }
        let (chosen, _) = best.expect("k <= n guarantees a candidate");
        is_kept[chosen] = true;
        kept.push(chosen);
        for j in 0..n {
            nearest[j] = nearest[j].min(dist[j][chosen]);
        }
    }

    // Redistribute dropped probability to the nearest kept scenario.
    let mut new_weights: Vec<f64> = kept.iter().map(|&i| weights[i]).collect();
    let mut kantorovich = 0.0;
    for j in 0..n {
        if is_kept[j] {
            continue;
        }
        let mut best_pos = 0;
        let mut best_d = f64::INFINITY;
        for (pos, &i) in kept.iter().enumerate() {
            let d = dist[j][i];
            if d < best_d || (d == best_d && i < kept[best_pos]) {
                best_d = d;
                best_pos = pos;
            }
        }
        new_weights[best_pos] += weights[j];
        kantorovich += weights[j] * best_d;
    }

    Ok(ReductionResult {
        kept_indices: kept,
        new_weights,
        kantorovich_distance: kantorovich,
    })
}

/// I.i.d. draws from a zero-mean Gaussian with variance `sigma2`, truncated
/// to `[lo, hi]` by rejection. Deterministic for a given seed.
pub fn gen_trunc_gauss(
    length: usize,
    step_seconds: f64,
    sigma2: f64,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<TimeSeries> {
    if !(lo < hi) {
        return Err(Error::Domain(format!("degenerate range [{lo}, {hi}]")));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {sigma2}")));
    }
    if length == 0 {
        return Err(Error::Domain("length must be >= 1".into()));
    }
    let normal = Normal::new(0.0, sigma2.sqrt())
        .map_err(|e| Error::Domain(format!("bad normal parameters: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(length);
    while values.len() < length {
        let draw = normal.sample(&mut rng);
        if (lo..=hi).contains(&draw) {
            values.push(draw);
        }
    }
    TimeSeries::new(step_seconds, values)
}

/// Generate a scenario set of i.i.d. truncated-Gaussian realizations, one
/// per sub-seed derived from `seed`, with uniform weights.
pub fn gen_trunc_gauss_scenarios(
    count: usize,
    length: usize,
    step_seconds: f64,
    sigma2: f64,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<ScenarioSet> {
    let scenarios: Vec<TimeSeries> = (0..count)
        .map(|i| gen_trunc_gauss(length, step_seconds, sigma2, lo, hi, derive_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    ScenarioSet::uniform(scenarios)
}

/// Stable sub-seed derivation (splitmix64 over seed and stream index).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(stream)
        .wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Flat load with one rectangular peak.
pub fn gen_rect_peak(
    base_mw: f64,
    peak_mw: f64,
    peak_minutes: f64,
    day_seconds: f64,
    step_seconds: f64,
    peak_start_minutes: f64,
) -> Result<TimeSeries> {
    let steps = (day_seconds / step_seconds).round();
    if steps < 1.0 || (day_seconds / step_seconds - steps).abs() > 1e-9 {
        return Err(Error::Alignment(format!(
            "day of {day_seconds} s is not an integer number of {step_seconds} s steps"
        )));
    }
    let steps = steps as usize;
    let start = (peak_start_minutes * 60.0 / step_seconds).round() as usize;
    let peak_steps = (peak_minutes * 60.0 / step_seconds).round() as usize;
    if start + peak_steps > steps {
        return Err(Error::Domain(format!(
            "peak [{start}, {}) overflows the {steps}-step day",
            start + peak_steps
        )));
    }
    let mut values = vec![base_mw; steps];
    for v in values.iter_mut().skip(start).take(peak_steps) {
        *v = peak_mw;
    }
    TimeSeries::new(step_seconds, values)
}

/// Uniform random signal in [-1, 1]; handy for fuzz tests.
pub fn gen_uniform_signal(length: usize, step_seconds: f64, seed: u64) -> Result<TimeSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..length).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    TimeSeries::new(step_seconds, values)
}
