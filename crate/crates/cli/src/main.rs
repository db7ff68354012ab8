use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rmcam_tmr::config::{apply, parse_config};
use rmcam_tmr::experiment::{
    generate_map, repair_map, sweep_cluster, sweep_uniform, SweepTable, SEED_ENV,
};
use rmcam_tmr::{DefectMap, RepairPlan, TrialConfig};

mod plot;

/// RM-CAM + TMR defect-repair simulator for nanoscale RAM arrays.
#[derive(Parser)]
#[command(name = "rmcam-tmr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inject defects and write the map as text.
    Generate {
        #[command(flatten)]
        trial: TrialArgs,
        /// Output file (stdout if omitted).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the three repair phases and write the report and plan as JSON.
    Repair {
        #[command(flatten)]
        trial: TrialArgs,
        /// Repair this defect map instead of generating one.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Report output (stdout if omitted).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Repair-plan output.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Sweep the uniform defect rate with the cluster rate held fixed.
    SweepUniform(SweepArgs),
    /// Sweep the cluster defect rate with the uniform rate held fixed.
    SweepCluster(SweepArgs),
    /// Resolve one logical address through a saved repair plan.
    Resolve {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        row: usize,
        #[arg(long)]
        col: usize,
    },
    /// Draw a sweep CSV as an SVG line chart.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
        /// Label for the x axis.
        #[arg(long, default_value = "swept defect rate")]
        x_label: String,
    },
}

#[derive(Args, Clone, Debug)]
struct TrialArgs {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set density_threshold=120`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    uniform_rate: Option<f64>,
    #[arg(long)]
    cluster_rate: Option<f64>,
    #[arg(long)]
    rmcam_capacity: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Debug)]
struct SweepArgs {
    #[command(flatten)]
    trial: TrialArgs,
    /// Comma-separated rates for the swept axis.
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    /// Trials per sweep point; seeds run from the base seed upward.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// CSV output (stdout if omitted).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl TrialArgs {
    fn resolve(&self) -> Result<TrialConfig> {
        let mut config = TrialConfig::default();
        if let Some(path) = &self.config {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            config =
                parse_config(&text, config).with_context(|| format!("in {}", path.display()))?;
        }
        for item in &self.overrides {
            let Some((k, v)) = item.split_once('=') else {
                bail!("--set expects KEY=VALUE, got {item:?}");
            };
            apply(&mut config, k.trim(), v)?;
        }
        let flags = [
            ("rows", self.rows.map(|v| v.to_string())),
            ("cols", self.cols.map(|v| v.to_string())),
            ("uniform_rate", self.uniform_rate.map(|v| v.to_string())),
            ("cluster_rate", self.cluster_rate.map(|v| v.to_string())),
            ("rmcam_capacity", self.rmcam_capacity.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                apply(&mut config, key, &v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn run_sweep(args: &SweepArgs, uniform_axis: bool) -> Result<()> {
    let base = args.trial.resolve()?;
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let table: SweepTable = if uniform_axis {
        sweep_uniform(&base, &args.rates, args.seeds)?
    } else {
        sweep_cluster(&base, &args.rates, args.seeds)?
    };
    emit(args.out.as_deref(), &table.to_csv())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { trial, out } => {
            let config = trial.resolve()?;
            let (map, _) = generate_map(&config)?;
            emit(out.as_deref(), &map.to_text())
        }
        Command::Repair {
            trial,
            map,
            report,
            plan,
        } => {
            let mut config = trial.resolve()?;
            let map = match map {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let m: DefectMap = text
                        .parse()
                        .with_context(|| format!("parsing {}", path.display()))?;
                    config.rows = m.rows();
                    config.cols = m.cols();
                    m
                }
                None => generate_map(&config)?.0,
            };
            let outcome = repair_map(&map, &config)?;
            if let Some(p) = plan {
                emit(Some(&p), &(outcome.plan.to_json()? + "\n"))?;
            }
            emit(report.as_deref(), &pretty(&outcome.report)?)
        }
        Command::SweepUniform(args) => run_sweep(&args, true),
        Command::SweepCluster(args) => run_sweep(&args, false),
        Command::Resolve { plan, row, col } => {
            let text =
                fs::read_to_string(&plan).with_context(|| format!("reading {}", plan.display()))?;
            let pipeline = RepairPlan::from_json(&text)?.pipeline()?;
            emit(None, &pretty(&pipeline.resolve(row, col)?)?)
        }
        Command::Plot {
            input,
            out,
            title,
            x_label,
        } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let rows = plot::read_sweep_csv(&text)?;
            let title = title.unwrap_or_else(|| "Recovery rate".to_string());
            emit(Some(&out), &plot::render_svg(&rows, &title, &x_label))
        }
    }
}
