use std::path::PathBuf;
use std::process::ExitCode;

use airground_core::world::Scenario;
use airground_sim::bench::{bench_scenario, cell_label, run_bench, summaries, summary_csv, BenchRun, BenchSpec, CellSummary};
use airground_sim::{run_scenario, EngineError, Mode, SimConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "airground", version, about = "Air-ground collaborative navigation simulator")]
struct Cli {
    /// TOML config; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CellArgs {
    /// Environment name from the standard matrix.
    #[arg(long, default_value = "dense")]
    env: String,
    #[arg(long, default_value_t = 5)]
    ugvs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        /// Scenario JSON; generated from --env/--ugvs/--seed when absent.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "proposed")]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the environment × UGV count × seed matrix.
    Bench {
        #[arg(long, value_enum, default_value = "proposed")]
        mode: Mode,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, value_delimiter = ',')]
        ugvs: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        envs: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run ablation modes on one cell over several seeds.
    Ablate {
        /// Modes to run; all four when omitted.
        #[arg(long, value_enum, value_delimiter = ',')]
        mode: Option<Vec<Mode>>,
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the self-perception baseline on one cell over several seeds.
    Baseline {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a generated scenario as JSON.
    Scenario {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective config as TOML.
    Config,
}

fn print_summaries(cells: &[CellSummary]) {
    println!("{:<8} {:<15} {:>4} {:>5} {:>9} {:>9} {:>9} {:>9} {:>9}", "env", "mode", "ugvs", "fail", "reach", "wait", "wait_max", "traj", "uav_traj");
    for s in cells {
        println!(
            "{:<8} {:<15} {:>4} {:>5} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
            s.environment,
            s.mode.name(),
            s.ugvs,
            s.failures,
            s.reach_time.0,
            s.waiting_time.0,
            s.max_waiting_time,
            s.trajectory_length.0,
            s.uav_trajectory_length.0
        );
    }
}

fn one_cell(config: &SimConfig, cell: &CellArgs, seeds: u64) -> Result<BenchSpec, EngineError> {
    let standard = BenchSpec::standard(config);
    let env = standard
        .environment(&cell.env)
        .cloned()
        .ok_or_else(|| airground_sim::config::ConfigError::Invalid(format!("unknown environment {}", cell.env)))?;
    Ok(BenchSpec { environments: vec![env], ugv_counts: vec![cell.ugvs], seeds: (1..=seeds).collect() })
}

fn execute(cli: Cli) -> Result<(), EngineError> {
    let config = match &cli.config {
        Some(path) => SimConfig::load(path)?,
        None => SimConfig::default(),
    };
    match cli.command {
        Command::Run { scenario, cell, seed, mode, out } => {
            let (scenario, label) = match scenario {
                Some(path) => (Scenario::from_json(&std::fs::read_to_string(&path)?)?, "custom".to_string()),
                None => {
                    let spec = one_cell(&config, &cell, 1)?;
                    let env = &spec.environments[0];
                    (bench_scenario(&config, env, cell.ugvs, seed)?, cell_label(env, cell.ugvs))
                }
            };
            let output = run_scenario(&config, &scenario, mode, &label, out.as_deref())?;
            print!("{}", airground_sim::metrics::metrics_csv([&output.report]));
            println!("trace sha256 {}", output.trace_digest);
        }
        Command::Bench { mode, seeds, ugvs, envs, out } => {
            let mut spec = BenchSpec::standard(&config);
            spec.seeds = (1..=seeds).collect();
            if let Some(ugvs) = ugvs {
                spec.ugv_counts = ugvs;
            }
            if let Some(names) = envs {
                spec.environments.retain(|e| names.contains(&e.name));
            }
            let runs = run_bench(&config, &spec, mode, out.as_deref())?;
            print_summaries(&summaries(&runs));
        }
        Command::Ablate { mode, cell, seeds, out } => {
            let spec = one_cell(&config, &cell, seeds)?;
            let mut all: Vec<BenchRun> = run_bench(&config, &spec, Mode::Proposed, None)?;
            for m in mode.unwrap_or(Mode::ABLATIONS.to_vec()) {
                all.extend(run_bench(&config, &spec, m, None)?);
            }
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("ablation_summary.csv"), summary_by_mode(&all))?;
            }
            print_summaries(&summaries_by_mode(&all));
        }
        Command::Baseline { cell, seeds, out } => {
            let spec = one_cell(&config, &cell, seeds)?;
            let runs = run_bench(&config, &spec, Mode::SelfPerception, out.as_deref())?;
            print_summaries(&summaries(&runs));
        }
        Command::Scenario { cell, seed, out } => {
            let spec = one_cell(&config, &cell, 1)?;
            let json = bench_scenario(&config, &spec.environments[0], cell.ugvs, seed)?.to_json();
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
        }
        Command::Config => print!("{}", config.to_toml()),
    }
    Ok(())
}

fn summaries_by_mode(runs: &[BenchRun]) -> Vec<CellSummary> {
    let mut modes: Vec<Mode> = Vec::new();
    for r in runs {
        if !modes.contains(&r.output.report.mode) {
            modes.push(r.output.report.mode);
        }
    }
    modes
        .iter()
        .flat_map(|m| {
            let subset: Vec<BenchRun> = runs.iter().filter(|r| r.output.report.mode == *m).cloned().collect();
            summaries(&subset)
        })
        .collect()
}

fn summary_by_mode(runs: &[BenchRun]) -> String {
    let mut modes: Vec<Mode> = Vec::new();
    for r in runs {
        if !modes.contains(&r.output.report.mode) {
            modes.push(r.output.report.mode);
        }
    }
    let mut out = String::new();
    for (k, m) in modes.iter().enumerate() {
        let subset: Vec<BenchRun> = runs.iter().filter(|r| r.output.report.mode == *m).cloned().collect();
        let text = summary_csv(&subset);
        out.push_str(if k == 0 { &text } else { text.split_once('\n').map_or("", |(_, rest)| rest) });
    }
    out
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
