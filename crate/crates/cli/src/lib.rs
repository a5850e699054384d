//! Command-line pipeline: generate inputs, forecast, reduce scenarios,
//! plan, simulate, benchmark, and analyze.

pub mod commands;
pub mod config;
pub mod manifest;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use peakreg_core::analysis::SweepAxis;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "peakreg",
    version,
    about = "Battery co-optimization for peak shaving and frequency regulation"
)]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "peakreg.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic inputs.
    Gen {
        #[command(subcommand)]
        what: GenCommand,
    },
    /// Fit the load model on history and predict future hours.
    Forecast(ForecastArgs),
    /// Forward-reduce a scenario directory.
    Reduce {
        /// Input scenario directory.
        #[arg(long)]
        scenarios: PathBuf,
        /// Number of scenarios to keep (default: experiment.scenario_count).
        #[arg(long)]
        keep: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Solve the day-ahead plan (capacity bid and peak threshold).
    Plan {
        /// Forecast CSV (timestamp,mw).
        #[arg(long)]
        forecast: PathBuf,
        /// Scenario directory.
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write the per-scenario planned dispatch.
        #[arg(long)]
        dump_dispatch: bool,
    },
    /// Simulate one day under a plan with the real-time controller.
    Simulate {
        /// Plan directory produced by `plan`.
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        load: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Offline perfect-foresight benchmarks and bills.
    Benchmark {
        #[arg(long)]
        load: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Metrics over existing results.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Superlinear-gain probability surface over price grids.
    Sweep {
        /// Second axis: "peak" (demand charge) or "capacity" (payment).
        #[arg(long)]
        axis: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum GenCommand {
    /// Truncated-Gaussian regulation signal.
    Signal {
        #[arg(long)]
        seed: u64,
        /// Number of steps (default: horizon.steps).
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        sigma2: Option<f64>,
        /// Steps per independent draw (default: experiment setting).
        #[arg(long)]
        block_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rectangle-peak load profile.
    Load {
        #[arg(long)]
        base: Option<f64>,
        #[arg(long)]
        peak: Option<f64>,
        #[arg(long)]
        minutes: Option<f64>,
        #[arg(long)]
        start_minutes: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Directory of seeded signal scenarios with uniform weights.
    Scenarios {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    /// Training CSV: timestamp,mw,tmp_c,is_holiday.
    #[arg(long)]
    pub train: PathBuf,
    /// Future hours CSV: timestamp,tmp_c,is_holiday.
    #[arg(long)]
    pub future: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Same-weekday lookbacks averaged into the similar-days feature.
    #[arg(long, default_value_t = 3)]
    pub similar_days: usize,
    /// Run k-fold cross validation on the training set and print scores.
    #[arg(long)]
    pub cv: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCommand {
    /// Superlinear comparison of per-day bills (day,j,j_p,j_r,j_joint).
    Q {
        #[arg(long)]
        bills: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Peak-duration CDF of a load profile.
    Cdf {
        #[arg(long)]
        load: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        threshold_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Battery life expectancy for an annual throughput.
    Life {
        #[arg(long)]
        annual_throughput_mwh: f64,
    },
}

/// Size the worker pool from the environment (the only environment knob).
pub fn init_worker_pool() {
    if let Ok(v) = std::env::var("PEAKREG_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Run a parsed command line. Artifacts land atomically with manifests.
pub fn run(cli: Cli) -> Result<()> {
    let (cfg, cfg_bytes) = config::RunConfig::load(&cli.config)?;
    if let Some(note) = cfg.lambda_b_consistency_note() {
        println!("{note}");
    }
    match cli.command {
        Command::Gen { what } => match what {
            GenCommand::Signal {
                seed,
                length,
                sigma2,
                block_steps,
                out,
            } => commands::gen_signal(&cfg, &cfg_bytes, length, sigma2, block_steps, seed, &out),
            GenCommand::Load {
                base,
                peak,
                minutes,
                start_minutes,
                out,
            } => commands::gen_load(&cfg, &cfg_bytes, base, peak, minutes, start_minutes, &out),
            GenCommand::Scenarios { seed, count, out_dir } => {
                commands::gen_scenarios(&cfg, &cfg_bytes, count, seed, &out_dir)
            }
        },
        Command::Forecast(args) => commands::forecast_cmd(
            &cfg_bytes,
            &args.train,
            &args.future,
            &args.out,
            args.similar_days,
            args.cv,
        ),
        Command::Reduce {
            scenarios,
            keep,
            out_dir,
        } => commands::reduce_cmd(&cfg, &cfg_bytes, &scenarios, keep, &out_dir),
        Command::Plan {
            forecast,
            scenarios,
            out_dir,
            dump_dispatch,
        } => commands::plan_cmd(&cfg, &cfg_bytes, &forecast, &scenarios, &out_dir, dump_dispatch),
        Command::Simulate {
            plan,
            load,
            signal,
            out_dir,
        } => commands::simulate_cmd(&cfg, &cfg_bytes, &plan, &load, &signal, &out_dir),
        Command::Benchmark {
            load,
            signal,
            out_dir,
        } => commands::benchmark_cmd(&cfg, &cfg_bytes, &load, &signal, &out_dir),
        Command::Analyze { what } => match what {
            AnalyzeCommand::Q { bills, out } => commands::analyze_q_cmd(&cfg_bytes, &bills, &out),
            AnalyzeCommand::Cdf {
                load,
                threshold_fraction,
                out,
            } => commands::analyze_cdf_cmd(&cfg_bytes, &load, threshold_fraction, &out),
            AnalyzeCommand::Life {
                annual_throughput_mwh,
            } => commands::analyze_life_cmd(&cfg, annual_throughput_mwh),
        },
        Command::Sweep { axis, out_dir } => {
            let axis = match axis.as_str() {
                "peak" => SweepAxis::PeakPrice,
                "capacity" => SweepAxis::CapacityPayment,
                other => anyhow::bail!("unknown sweep axis {other:?}; use 'peak' or 'capacity'"),
            };
            commands::sweep_cmd(&cfg, &cfg_bytes, axis, &out_dir)
        }
    }
}

/// Map an error chain to a process exit code: 2 config/validation,
/// 3 ingest/io, 4 solver, 1 otherwise.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(core_err) = cause.downcast_ref::<peakreg_core::Error>() {
            return match core_err {
                peakreg_core::Error::Validation(_)
                | peakreg_core::Error::Domain(_)
                | peakreg_core::Error::Alignment(_) => 2,
                peakreg_core::Error::Io { .. } => 3,
                peakreg_core::Error::Solver(_) => 4,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return 2;
        }
    }
    let text = err.to_string();
    if text.contains("config") || text.contains("header") || text.contains("must") {
        2
    } else {
        1
    }
}
