//! Subcommand implementations.

use crate::config::RunConfig;
use crate::manifest::ArtifactWriter;
use anyhow::{anyhow, bail, Context, Result};
use peakreg_core::analysis::{
    peak_duration_cdf, sensitivity_sweep, superlinear_ratio, LifeExpectancy, SweepAxis,
    SyntheticDayConfig,
};
use peakreg_core::battery::CellParams;
use peakreg_core::billing::BillBreakdown;
use peakreg_core::controller::simulate_day;
use peakreg_core::forecast;
use peakreg_core::io::{read_scenario_dir, read_timeseries_csv, write_scenario_dir};
use peakreg_core::planner::{solve_day_ahead, DayAheadPlan, ScenarioSet};
use peakreg_core::scenarios::{forward_reduce, gen_rect_peak, gen_trunc_gauss};
use peakreg_core::{benchmarks, TimeSeries};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn timeseries_csv_bytes(series: &TimeSeries, value_header: &str) -> Vec<u8> {
    let mut out = String::with_capacity(series.len() * 24);
    out.push_str("timestamp,");
    out.push_str(value_header);
    out.push('\n');
    for (i, v) in series.values().iter().enumerate() {
        let ts = (i as f64 * series.step_seconds()).round() as i64;
        out.push_str(&format!("{ts},{v}\n"));
    }
    out.into_bytes()
}

fn bill_row(label: &str, bill: &BillBreakdown) -> String {
    format!(
        "{label},{},{},{},{},{}\n",
        bill.energy_charge, bill.peak_charge, bill.battery_cost, bill.regulation_revenue, bill.total
    )
}

const BILL_HEADER: &str = "case,energy_usd,peak_usd,battery_usd,regulation_usd,total_usd\n";

/// `gen signal`: seeded truncated-Gaussian regulation signal.
#[allow(clippy::too_many_arguments)]
pub fn gen_signal(
    cfg: &RunConfig,
    cfg_bytes: &[u8],
    length: Option<usize>,
    sigma2: Option<f64>,
    block_steps: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let exp = &cfg.experiment;
    let length = length.unwrap_or(cfg.horizon.steps);
    let block = block_steps.unwrap_or(exp.signal_block_steps);
    if block == 0 || length % block != 0 {
        bail!("signal block of {block} steps must divide the length {length}");
    }
    let coarse = gen_trunc_gauss(
        length / block,
        cfg.horizon.step_seconds * block as f64,
        sigma2.unwrap_or(exp.sigma2),
        exp.signal_lo,
        exp.signal_hi,
        seed,
    )?;
    let signal = coarse.upsample_hold(block)?;
    write_with_manifest(out, cfg_bytes, vec![seed], &timeseries_csv_bytes(&signal, "r"))
}

/// `gen load`: flat load with one rectangular peak.
pub fn gen_load(
    cfg: &RunConfig,
    cfg_bytes: &[u8],
    base_mw: Option<f64>,
    peak_mw: Option<f64>,
    peak_minutes: Option<f64>,
    peak_start_minutes: Option<f64>,
    out: &Path,
) -> Result<()> {
    let exp = &cfg.experiment;
    let load = gen_rect_peak(
        base_mw.unwrap_or(exp.base_mw),
        peak_mw.unwrap_or(exp.peak_mw),
        peak_minutes.unwrap_or(exp.peak_minutes),
        cfg.horizon.steps as f64 * cfg.horizon.step_seconds,
        cfg.horizon.step_seconds,
        peak_start_minutes.unwrap_or(exp.peak_start_minutes),
    )?;
    write_with_manifest(out, cfg_bytes, Vec::new(), &timeseries_csv_bytes(&load, "mw"))
}

/// `gen scenarios`: a directory of seeded signal realizations with uniform
/// weights.
pub fn gen_scenarios(
    cfg: &RunConfig,
    cfg_bytes: &[u8],
    count: Option<usize>,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let exp = &cfg.experiment;
    let count = count.unwrap_or(exp.scenario_count);
    if count == 0 {
        bail!("scenario count must be >= 1");
    }
    let length = cfg.horizon.steps;
    if length % exp.signal_block_steps != 0 {
        bail!(
            "signal block of {} steps must divide the horizon of {length} steps",
            exp.signal_block_steps
        );
    }
    let scenarios: Vec<TimeSeries> = (0..count)
        .map(|i| {
            let coarse = gen_trunc_gauss(
                length / exp.signal_block_steps,
                cfg.horizon.step_seconds * exp.signal_block_steps as f64,
                exp.sigma2,
                exp.signal_lo,
                exp.signal_hi,
                peakreg_core::scenarios::derive_seed(seed, i as u64),
            )?;
            coarse.upsample_hold(exp.signal_block_steps)
        })
        .collect::<peakreg_core::error::Result<_>>()?;
    let set = ScenarioSet::uniform(scenarios)?;
    write_scenario_dir(out_dir, &set)?;
    let mut writer = ArtifactWriter::new(out_dir, cfg_bytes, vec![seed])?;
    for i in 0..set.len() {
        let name = format!("scenario_{i}.csv");
        let bytes = std::fs::read(out_dir.join(&name))?;
        writer.write(&name, &bytes)?;
    }
    let weights = std::fs::read(out_dir.join("weights.csv"))?;
    writer.write("weights.csv", &weights)?;
    writer.finish()?;
    println!("wrote {count} scenarios to {}", out_dir.display());
    Ok(())
}

/// `forecast`: fit the regression on history, optionally cross-validate,
/// and predict the future hours.
pub fn forecast_cmd(
    cfg_bytes: &[u8],
    train: &Path,
    future: &Path,
    out: &Path,
    similar_days: usize,
    cv_folds: Option<usize>,
) -> Result<()> {
    let samples = forecast::read_training_csv(train)?;
    let (rows, targets, _) = forecast::build_dataset(&samples, similar_days)?;
    if let Some(k) = cv_folds {
        let report = forecast::kfold_cv(&rows, &targets, k)?;
        for (i, fold) in report.fold_mape.iter().enumerate() {
            println!("fold {i}: MAPE {:.4}%", 100.0 * fold);
        }
        println!("mean MAPE over {k} folds: {:.4}%", 100.0 * report.mean_mape);
    }
    let model = forecast::fit(&rows, &targets)?;
    if model.rank_deficient {
        eprintln!("warning: rank-deficient design; minimum-norm coefficients");
    }

    let text = std::fs::read_to_string(future)
        .with_context(|| format!("reading {}", future.display()))?;
    let mut future_rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "timestamp,tmp_c,is_holiday" {
                bail!(
                    "{}: header must be 'timestamp,tmp_c,is_holiday'",
                    future.display()
                );
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            bail!("{}: row {}: expected three cells", future.display(), idx + 1);
        }
        let epoch: i64 = cells[0]
            .trim()
            .parse()
            .or_else(|_| {
                chrono::DateTime::parse_from_rfc3339(cells[0].trim()).map(|d| d.timestamp())
            })
            .map_err(|_| anyhow!("{}: row {}: bad timestamp", future.display(), idx + 1))?;
        let tmp: f64 = cells[1]
            .trim()
            .parse()
            .map_err(|_| anyhow!("{}: row {}: bad tmp_c", future.display(), idx + 1))?;
        let holiday = matches!(cells[2].trim(), "1" | "true");
        future_rows.push((epoch, tmp, holiday));
    }
    let feats = forecast::features_for_future(&samples, &future_rows, similar_days)?;
    let pred = model.predict_rows(&feats)?;

    let mut csv = String::from("timestamp,mw\n");
    for ((epoch, _, _), mw) in future_rows.iter().zip(&pred) {
        csv.push_str(&format!("{epoch},{mw}\n"));
    }
    write_with_manifest(out, cfg_bytes, Vec::new(), csv.as_bytes())?;
    println!("wrote {} predictions to {}", pred.len(), out.display());
    Ok(())
}

/// `reduce`: forward scenario reduction to `keep` scenarios.
pub fn reduce_cmd(
    cfg: &RunConfig,
    cfg_bytes: &[u8],
    scenarios_dir: &Path,
    keep: Option<usize>,
    out_dir: &Path,
) -> Result<()> {
    let set = read_scenario_dir(scenarios_dir)?;
    let keep = keep.unwrap_or(cfg.experiment.scenario_count);
    let reduction = forward_reduce(&set, keep)?;
    let reduced = reduction.apply(&set)?;
    write_scenario_dir(out_dir, &reduced)?;

    let mut writer = ArtifactWriter::new(out_dir, cfg_bytes, Vec::new())?;
    for i in 0..reduced.len() {
        let name = format!("scenario_{i}.csv");
        let bytes = std::fs::read(out_dir.join(&name))?;
        writer.write(&name, &bytes)?;
    }
    writer.write("weights.csv", &std::fs::read(out_dir.join("weights.csv"))?)?;
    let mut report = String::from("kept_original_index,new_weight\n");
    for (idx, w) in reduction.kept_indices.iter().zip(&reduction.new_weights) {
        report.push_str(&format!("{idx},{w}\n"));
    }
    writer.write("reduction.csv", report.as_bytes())?;
    writer.finish()?;
    println!(
        "kept {keep} of {} scenarios; transport distance {:.6}",
        set.len(),
        reduction.kantorovich_distance
    );
    Ok(())
}

/// Serialized day-ahead plan header (`plan.toml`).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub capacity_mw: f64,
    pub threshold_mw: f64,
    pub planned_objective_usd: f64,
    pub plan_step_seconds: f64,
    pub downsample: usize,
    pub baseline_csv: String,
}

/// `plan`: solve the day-ahead problem and write the plan directory.
pub fn plan_cmd(
    cfg: &RunConfig,
    cfg_bytes: &[u8],
    forecast_path: &Path,
    scenarios_dir: &Path,
    out_dir: &Path,
    dump_dispatch: bool,
) -> Result<()> {
    let forecast = align_to_horizon(cfg, read_timeseries_csv(forecast_path)?)?;
    let set = read_scenario_dir(scenarios_dir)?;
    let plan = solve_day_ahead(
        &forecast,
        &set,
        &cfg.tariff.to_tariff(),
        &cfg.battery.to_spec(),
        cfg.battery.soc_ini,
        cfg.horizon.downsample,
        cfg.peak_days_for(forecast.span_days()),
        cfg.horizon.baseline,
    )?;

    let mut writer = ArtifactWriter::new(out_dir, cfg_bytes, Vec::new())?;
    let header = PlanFile {
        capacity_mw: plan.capacity_mw,
        threshold_mw: plan.threshold_mw,
        planned_objective_usd: plan.planned_objective,
        plan_step_seconds: forecast.step_seconds() * cfg.horizon.downsample as f64,
        downsample: cfg.horizon.downsample,
        baseline_csv: "baseline.csv".to_string(),
    };
    writer.write("plan.toml", toml::to_string_pretty(&header)?.as_bytes())?;
    writer.write("baseline.csv", &timeseries_csv_bytes(&plan.baseline, "mw"))?;
    if dump_dispatch {
        for (i, d) in plan.scenario_dispatch.iter().enumerate() {
            writer.write(
                &format!("dispatch_scenario_{i}.csv"),
                &timeseries_csv_bytes(d, "b_mw"),
            )?;
        }
    }
    writer.finish()?;
    println!(
        "plan: C* = {:.6} MW, U* = {:.6} MW, planned objective {:.4} $",
        plan.capacity_mw, plan.threshold_mw, plan.planned_objective
    );
    Ok(())
}

/// Load a plan directory back into a [`DayAheadPlan`] for simulation.
pub fn read_plan_dir(dir: &Path) -> Result<DayAheadPlan> {
    let text = std::fs::read_to_string(dir.join("plan.toml"))
        .with_context(|| format!("reading {}/plan.toml", dir.display()))?;
    let header: PlanFile = toml::from_str(&text)?;
    let baseline = read_timeseries_csv(&dir.join(&header.baseline_csv))?;
    Ok(DayAheadPlan {
        capacity_mw: header.capacity_mw,
        threshold_mw: header.threshold_mw,
        baseline,
        scenario_dispatch: Vec::new(),
        planned_objective: header.planned_objective_usd,
    })
}

/// `simulate`: run the joint controller for one day under a plan.
pub fn simulate_cmd(
    cfg: &RunConfig,
    cfg_bytes: &[u8],
    plan_dir: &Path,
    load_path: &Path,
    signal_path: &Path,
    out_dir: &Path,
) -> Result<()> {
    let load = align_to_horizon(cfg, read_timeseries_csv(load_path)?)?;
    let signal = align_to_horizon(cfg, read_timeseries_csv(signal_path)?)?;
    let plan = read_plan_dir(plan_dir)?;
    let trace = simulate_day(
        &load,
        &signal,
        &plan,
        &cfg.battery.to_spec(),
        &cfg.tariff.to_tariff(),
        cfg.battery.soc_ini,
        cfg.peak_days_for(load.span_days()),
    )?;

    let mut writer = ArtifactWriter::new(out_dir, cfg_bytes, Vec::new())?;
    let mut csv = String::from("t,s_mw,r,b_mw,soc\n");
    for i in 0..load.len() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            (i as f64 * load.step_seconds()).round() as i64,
            load.values()[i],
            signal.values()[i],
            trace.dispatch.values()[i],
            trace.soc_path[i]
        ));
    }
    writer.write("trace.csv", csv.as_bytes())?;
    let bill = &trace.realized_bill;
    let summary = format!(
        "energy_usd,peak_usd,battery_usd,regulation_usd,total_usd,mismatch_mwh\n{},{},{},{},{},{}\n",
        bill.energy_charge,
        bill.peak_charge,
        bill.battery_cost,
        bill.regulation_revenue,
        bill.total,
        trace.mismatch_energy_mwh
    );
    writer.write("summary.csv", summary.as_bytes())?;
    writer.finish()?;
    println!(
        "simulated day: total bill {:.4} $ (mismatch {:.6} MWh)",
        bill.total, trace.mismatch_energy_mwh
    );
    Ok(())
}

/// `benchmark`: original bill plus the two offline optima.
pub fn benchmark_cmd(
    cfg: &RunConfig,
    cfg_bytes: &[u8],
    load_path: &Path,
    signal_path: &Path,
    out_dir: &Path,
) -> Result<()> {
    let load = align_to_horizon(cfg, read_timeseries_csv(load_path)?)?;
    let signal = align_to_horizon(cfg, read_timeseries_csv(signal_path)?)?;
    let tariff = cfg.tariff.to_tariff();
    let spec = cfg.battery.to_spec();
    let peak_days = cfg.peak_days_for(load.span_days());

    let idle = peakreg_core::billing::total_bill(
        &load,
        &TimeSeries::zeros_like(&load),
        None,
        &tariff,
        spec.lambda_b,
        peak_days,
    )?;
    let ps = benchmarks::solve_peak_shaving(&load, &tariff, &spec, cfg.battery.soc_ini, peak_days)?;
    let reg = benchmarks::solve_regulation(&signal, &tariff, &spec, cfg.battery.soc_ini)?;
    let reg_bill = benchmarks::bill_with_regulation(&load, &reg, &tariff, spec.lambda_b, peak_days)?;

    let mut writer = ArtifactWriter::new(out_dir, cfg_bytes, Vec::new())?;
    let mut bills = String::from(BILL_HEADER);
    bills.push_str(&bill_row("original", &idle));
    bills.push_str(&bill_row("peak_shaving", &ps.bill));
    bills.push_str(&bill_row("regulation", &reg_bill));
    writer.write("bills.csv", bills.as_bytes())?;
    writer.write("dispatch_peak.csv", &timeseries_csv_bytes(&ps.dispatch, "b_mw"))?;
    writer.write(
        "dispatch_regulation.csv",
        &timeseries_csv_bytes(&reg.dispatch, "b_mw"),
    )?;
    let reg_summary = format!(
        "capacity_mw,revenue_usd,mismatch_mwh\n{},{},{}\n",
        reg.capacity_mw, reg.revenue, reg.mismatch_mwh
    );
    writer.write("regulation.csv", reg_summary.as_bytes())?;
    writer.finish()?;
    println!(
        "J = {:.4}, J^p = {:.4}, J^r = {:.4} (C* = {:.6} MW, R* = {:.4} $)",
        idle.total, ps.bill.total, reg_bill.total, reg.capacity_mw, reg.revenue
    );
    Ok(())
}

/// `analyze q`: per-day superlinear comparison from a four-bill CSV.
pub fn analyze_q_cmd(cfg_bytes: &[u8], bills: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(bills)
        .with_context(|| format!("reading {}", bills.display()))?;
    let mut out_csv = String::from("day,j,j_p,j_r,j_joint,superlinear,q\n");
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "day,j,j_p,j_r,j_joint" {
                bail!("{}: header must be 'day,j,j_p,j_r,j_joint'", bills.display());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            bail!("{}: row {}: expected five cells", bills.display(), idx + 1);
        }
        let f = |i: usize| -> Result<f64> {
            cells[i]
                .trim()
                .parse()
                .map_err(|_| anyhow!("{}: row {}: bad number {:?}", bills.display(), idx + 1, cells[i]))
        };
        let cmp = superlinear_ratio(f(1)?, f(2)?, f(3)?, f(4)?)?;
        out_csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cells[0].trim(),
            cmp.j_original,
            cmp.j_peak_only,
            cmp.j_reg_only,
            cmp.j_joint,
            cmp.superlinear,
            cmp.q
        ));
    }
    write_with_manifest(out, cfg_bytes, Vec::new(), out_csv.as_bytes())
}

/// `analyze cdf`: peak-duration distribution of a load.
pub fn analyze_cdf_cmd(
    cfg_bytes: &[u8],
    load_path: &Path,
    threshold_fraction: f64,
    out: &Path,
) -> Result<()> {
    let load = read_timeseries_csv(load_path)?;
    let cdf = peak_duration_cdf(&load, threshold_fraction)?;
    let mut csv = String::from("duration_seconds,cdf\n");
    for (d, p) in &cdf.cdf {
        csv.push_str(&format!("{d},{p}\n"));
    }
    write_with_manifest(out, cfg_bytes, Vec::new(), csv.as_bytes())?;
    println!(
        "{} peak runs above {:.4} MW",
        cdf.durations_seconds.len(),
        cdf.threshold_mw
    );
    Ok(())
}

/// `analyze life`: battery life expectancy from the configured cell.
pub fn analyze_life_cmd(cfg: &RunConfig, annual_throughput_mwh: f64) -> Result<()> {
    let cell = cfg
        .battery
        .cell
        .as_ref()
        .ok_or_else(|| anyhow!("config has no [battery.cell] block"))?
        .to_cell();
    match peakreg_core::analysis::life_expectancy(
        annual_throughput_mwh,
        &cell,
        cfg.battery.energy_capacity_mwh,
    )? {
        LifeExpectancy::Infinite => println!("life expectancy: unlimited (no throughput)"),
        LifeExpectancy::Years(y) => println!("life expectancy: {y:.2} years"),
    }
    Ok(())
}

/// `sweep`: probability-of-superlinear-gain surface.
pub fn sweep_cmd(cfg: &RunConfig, cfg_bytes: &[u8], axis: SweepAxis, out_dir: &Path) -> Result<()> {
    let exp = &cfg.experiment;
    if exp.lambda_cell_grid.is_empty() {
        bail!("experiment.lambda_cell_grid is empty");
    }
    let axis_values = match axis {
        SweepAxis::PeakPrice => &exp.peak_price_grid,
        SweepAxis::CapacityPayment => &exp.capacity_payment_grid,
    };
    if axis_values.is_empty() {
        bail!("the grid for the selected sweep axis is empty");
    }
    let cell = cfg
        .battery
        .cell
        .as_ref()
        .ok_or_else(|| anyhow!("sweep needs a [battery.cell] block to map cell prices"))?
        .to_cell();
    let base = synthetic_day_from_config(cfg);
    let cells = sensitivity_sweep(
        &base,
        &CellParams {
            lambda_cell: 0.0,
            ..cell
        },
        &exp.lambda_cell_grid,
        axis,
        axis_values,
        &exp.seeds,
    )?;

    let mut writer = ArtifactWriter::new(out_dir, cfg_bytes, exp.seeds.clone())?;
    let axis_name = match axis {
        SweepAxis::PeakPrice => "lambda_peak_usd_per_kw_month",
        SweepAxis::CapacityPayment => "lambda_c_usd_per_mw_hour",
    };
    let mut csv = format!(
        "lambda_cell_usd_per_wh,{axis_name},lambda_b_usd_per_mwh,superlinear_fraction,mean_q,seeds,failures\n"
    );
    for c in &cells {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.lambda_cell,
            c.axis_value,
            c.lambda_b,
            c.superlinear_fraction,
            c.mean_q,
            c.seeds,
            c.failures
        ));
    }
    writer.write("surface.csv", csv.as_bytes())?;
    writer.finish()?;
    println!("wrote {} sweep cells to {}", cells.len(), out_dir.display());
    Ok(())
}

/// Build the synthetic-day template from the config blocks.
pub fn synthetic_day_from_config(cfg: &RunConfig) -> SyntheticDayConfig {
    let exp = &cfg.experiment;
    let day_seconds = cfg.horizon.steps as f64 * cfg.horizon.step_seconds;
    SyntheticDayConfig {
        base_mw: exp.base_mw,
        peak_mw: exp.peak_mw,
        peak_minutes: exp.peak_minutes,
        peak_start_minutes: exp.peak_start_minutes,
        day_seconds,
        step_seconds: cfg.horizon.step_seconds,
        sigma2: exp.sigma2,
        signal_lo: exp.signal_lo,
        signal_hi: exp.signal_hi,
        signal_block_steps: exp.signal_block_steps,
        tariff: cfg.tariff.to_tariff(),
        battery: cfg.battery.to_spec(),
        soc_ini: cfg.battery.soc_ini,
        planner_scenarios: exp.scenario_count,
        downsample: cfg.horizon.downsample,
        horizon_days: cfg.peak_days_for(day_seconds / 86_400.0),
        baseline_mode: cfg.horizon.baseline,
    }
}

/// Resample an ingested series onto the configured real-time grid when its
/// step is an integer multiple (hold) of the horizon step.
fn align_to_horizon(cfg: &RunConfig, series: TimeSeries) -> Result<TimeSeries> {
    let target = cfg.horizon.step_seconds;
    let ratio = series.step_seconds() / target;
    if (ratio - 1.0).abs() < 1e-9 {
        return Ok(series);
    }
    let rounded = ratio.round();
    if rounded >= 1.0 && (ratio - rounded).abs() <= 1e-9 * ratio {
        return Ok(series.upsample_hold(rounded as usize)?);
    }
    bail!(
        "series step {} s is not an integer multiple of the horizon step {target} s",
        series.step_seconds()
    )
}

fn write_with_manifest(out: &Path, cfg_bytes: &[u8], seeds: Vec<u64>, bytes: &[u8]) -> Result<()> {
    crate::manifest::write_atomic(out, bytes)?;
    let name = out
        .file_name()
        .ok_or_else(|| anyhow!("output path {} has no file name", out.display()))?
        .to_string_lossy()
        .to_string();
    let manifest = crate::manifest::Manifest {
        config_sha256: crate::manifest::sha256_hex(cfg_bytes),
        seeds,
        artifacts: [(name, crate::manifest::sha256_hex(bytes))].into(),
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    crate::manifest::write_atomic(
        &out.with_file_name(format!(
            "{}.manifest.json",
            out.file_name().unwrap().to_string_lossy()
        )),
        &json,
    )?;
    Ok(())
}
