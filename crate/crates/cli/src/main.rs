use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use himos::mission::{export_run, report_dir, run_sweep_configs, MapSource, MissionConfig, PlannerKind, SweepReport};
use himos::world::{generate_map, save_map, Difficulty, MapGenConfig};
use himos::{run_mission, Error};
use serde_json::json;

#[derive(Parser)]
#[command(name = "himos", version, about = "Search-and-sample mission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benthic map and write it to a file.
    GenerateMap {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "medium")]
        difficulty: Difficulty,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one mission and export its log.
    Run {
        /// TOML mission config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        planner: Option<PlannerKind>,
        /// Output directory for the run files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (config, seed, planner) combination and aggregate.
    Sweep {
        /// One config per map. Without configs, two generated maps per difficulty are used.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        configs: Vec<PathBuf>,
        /// Comma separated seeds or a half-open range such as `0..4`.
        #[arg(long, default_value = "0..4", value_parser = parse_seeds)]
        seeds: Seeds,
        #[arg(long, value_delimiter = ',', default_value = "himos,boustrophedon,mcts")]
        planners: Vec<PlannerKind>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Width in seconds of the ratio-vs-time bins.
        #[arg(long, default_value_t = 50.0)]
        bin_width: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate the run files in a directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, default_value_t = 50.0)]
        bin_width: f64,
        /// Also write the aggregated tables to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        if a >= b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok(Seeds((a..b).collect()));
    }
    let seeds = s
        .split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|e| format!("bad seed '{p}': {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Seeds(seeds))
}

fn fail(kind: &str, message: impl std::fmt::Display) -> ExitCode {
    let body = json!({ "error": kind, "message": message.to_string() });
    let _ = writeln!(std::io::stderr(), "{body}");
    ExitCode::FAILURE
}

// Write errors such as a closed pipe are ignored.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_json(value: &serde_json::Value) {
    emit(&format!("{}\n", serde_json::to_string_pretty(value).expect("json value serializes")));
}

fn default_maps() -> Vec<MapSource> {
    Difficulty::ALL.iter().flat_map(|&d| [1, 2].map(|s| MapSource::generated(d, s))).collect()
}

fn load_config(path: Option<&Path>) -> himos::Result<MissionConfig> {
    match path {
        Some(p) => MissionConfig::load(p),
        None => Ok(MissionConfig::default()),
    }
}

fn report_csv(report: &SweepReport) -> String {
    let mut out = String::from("difficulty,planner,runs,mean_ratio,std_ratio,min_ratio,max_ratio\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.difficulty, r.planner, r.runs, r.mean_ratio, r.std_ratio, r.min_ratio, r.max_ratio
        ));
    }
    out
}

fn execute(command: Command) -> himos::Result<()> {
    match command {
        Command::GenerateMap { seed, difficulty, out } => {
            let gt = generate_map(&MapGenConfig::preset(difficulty, seed))?;
            save_map(&gt, &out)?;
            print_json(&json!({
                "path": out,
                "difficulty": difficulty,
                "seed": seed,
                "coral": gt.coral_count(),
                "hard_cells": gt.hard_count(),
                "fill": gt.fill_fraction(),
            }));
        }
        Command::Run { config, seed, planner, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = planner {
                cfg.planner = p;
            }
            let output = run_mission(&cfg)?;
            let summary_path = export_run(&output, &out)?;
            print_json(&json!({ "summary": output.log.summary, "path": summary_path }));
        }
        Command::Sweep { configs, seeds, planners, jobs, bin_width, out } => {
            let bases = if configs.is_empty() {
                let base = MissionConfig::default();
                default_maps().into_iter().map(|map| MissionConfig { map, ..base.clone() }).collect()
            } else {
                configs.iter().map(MissionConfig::load).collect::<himos::Result<Vec<_>>>()?
            };
            let outcome = run_sweep_configs(&bases, &seeds.0, &planners, jobs, bin_width)?;
            outcome.write(&out)?;
            print_json(&json!({
                "runs": outcome.report.runs,
                "failures": outcome.report.failures.len(),
                "rows": outcome.report.rows,
                "out": out,
            }));
        }
        Command::Report { input, format, bin_width, out } => {
            let report = report_dir(&input, bin_width)?;
            if let Some(dir) = out {
                report.write(dir)?;
            }
            match format {
                Format::Csv => emit(&report_csv(&report)),
                Format::Json => print_json(&serde_json::to_value(&report).map_err(|e| Error::Config(e.to_string()))?),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end()),
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e),
    }
}
