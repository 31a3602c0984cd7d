use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use windpath::curriculum::Strategy;
use windpath::environment::Environment;
use windpath::experiment::{export_traces, format_table, run_table, train_strategy, ExperimentSpec, WindName};
use windpath::oracle::{dijkstra, CostGraph, Metric};
use windpath::ppo::TrainerConfig;
use windpath::scenario::Scenario;
use windpath::trace::{replay, TraceTag};
use windpath::windfield::{Direction, WindField};
use windpath::{Cell, Error, Result};

#[derive(Parser)]
#[command(name = "windpath", version, about = "Energy- and time-aware path planning through urban wind fields")]
struct Cli {
    /// Seed for every random stream; overrides seeds in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a wind field for a scenario and write it to a field file.
    Windgen {
        #[arg(long)]
        scenario: PathBuf,
        /// Inflow direction in degrees (0, 90, 180 or 270).
        #[arg(long)]
        direction: u32,
        /// Inflow speed in m/s.
        #[arg(long)]
        speed: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy for one strategy.
    Train {
        #[arg(long)]
        scenario: PathBuf,
        /// Trainer config (JSON); defaults to the scenario's `training` block.
        #[arg(long)]
        config: Option<PathBuf>,
        /// energy, time or all.
        #[arg(long)]
        strategy: Strategy,
        #[command(flatten)]
        wind: WindArgs,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Per-episode log as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Exact minimum-cost path for one OD pair.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        wind: WindArgs,
        /// energy or time.
        #[arg(long)]
        metric: Metric,
        /// Origin cell as x,y,z.
        #[arg(long, value_parser = parse_cell)]
        origin: Cell,
        /// Destination cell as x,y,z.
        #[arg(long, value_parser = parse_cell)]
        destination: Cell,
        /// Write the path as trace records.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run an experiment and print the comparison table and t-tests.
    Eval {
        #[arg(long)]
        spec: PathBuf,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Run an experiment and write only its path traces.
    ExportTraces {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
#[group(required = true, multiple = false)]
struct WindArgs {
    /// Wind field file written by `windgen`.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Wind condition name, e.g. D0-4, generated from the scenario.
    #[arg(long = "wind")]
    name: Option<String>,
}

impl WindArgs {
    fn load(&self, scenario: &Scenario, map: &windpath::environment::CityMap) -> Result<WindField> {
        match (&self.field, &self.name) {
            (Some(p), _) => {
                let field = WindField::load(p)?;
                if field.spec() != map.spec() {
                    return Err(Error::DimensionMismatch(format!("{} does not match the scenario grid", p.display())));
                }
                Ok(field)
            }
            (None, Some(n)) => {
                let w: WindName = n.parse()?;
                scenario.wind_field(map, w.direction, w.speed as f64)
            }
            (None, None) => unreachable!("clap enforces one wind source"),
        }
    }
}

fn parse_cell(s: &str) -> std::result::Result<Cell, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got {s:?}"));
    }
    let mut c = [0usize; 3];
    for (v, p) in c.iter_mut().zip(parts) {
        *v = p.trim().parse().map_err(|_| format!("bad coordinate {p:?}"))?;
    }
    Ok(Cell(c))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Unreachable { .. } | Error::SamplingExhausted(_) | Error::Occupied(_) => 2,
        Error::Io { .. }
        | Error::Json { .. }
        | Error::Malformed(_)
        | Error::Version { .. }
        | Error::PayloadLength { .. }
        | Error::MissingPolicy(_) => 3,
        _ => 1,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Windgen {
            scenario,
            direction,
            speed,
            out,
        } => {
            let scenario = Scenario::load(scenario)?;
            let map = scenario.map()?;
            let field = scenario.wind_field(&map, Direction::from_degrees(direction)?, speed)?;
            field.save(out)
        }
        Command::Train {
            scenario,
            config,
            strategy,
            wind,
            episodes,
            out,
            log,
        } => {
            let scenario = Scenario::load(scenario)?;
            let map = scenario.map()?;
            let field = wind.load(&scenario, &map)?;
            let mut config = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    serde_json::from_str::<TrainerConfig>(&text).map_err(|e| Error::Json { path: p, source: e })?
                }
                None => scenario.training.clone(),
            };
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            if let Some(n) = episodes {
                config.total_episodes = n;
            }
            let outcome = train_strategy(&scenario, &map, &field, strategy, config, &scenario.od_pairs)?;
            outcome.policy.save(&out)?;
            if let Some(p) = log {
                let mut text = String::new();
                for e in &outcome.episodes {
                    text.push_str(&serde_json::to_string(e).expect("episode log serializes"));
                    text.push('\n');
                }
                for s in &outcome.stage_events {
                    text.push_str(&serde_json::to_string(&serde_json::json!({ "stage_event": s })).expect("serializes"));
                    text.push('\n');
                }
                write_file(&p, &text)?;
            }
            eprintln!(
                "trained {} episodes, success rate over last 100: {:.2}",
                outcome.episodes.len(),
                outcome.recent_success_rate(100)
            );
            Ok(())
        }
        Command::Oracle {
            scenario,
            wind,
            metric,
            origin,
            destination,
            trace,
        } => {
            let scenario = Scenario::load(scenario)?;
            let map = scenario.map()?;
            let field = wind.load(&scenario, &map)?;
            let graph = CostGraph::build(&map, &field, &scenario.aircraft, metric)?;
            let path = dijkstra(&graph, origin, destination)?;
            if let Some(p) = trace {
                let mut env = Environment::new(
                    &map,
                    &field,
                    scenario.aircraft.clone(),
                    scenario.rewards.clone(),
                    scenario.limits.clone(),
                )?;
                let run = replay(&mut env, origin, destination, &path.actions(), &mut None)?;
                let tag = TraceTag {
                    source: format!("dijkstra_{metric}"),
                    wind: String::new(),
                    od_index: 0,
                };
                export_traces(&run.trace_lines(&tag), p)?;
            }
            let report = serde_json::json!({
                "metric": metric.to_string(),
                "total": path.total,
                "energy_kj": path.energy / 1000.0,
                "time_s": path.time,
                "cells": path.cells.iter().map(|c| c.0).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Command::Eval { spec, out, traces } => {
            let mut spec = ExperimentSpec::load(spec)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let scenario = Scenario::load(&spec.scenario)?;
            let result = run_table(&spec, &scenario)?;
            let table = format_table(&result);
            if let Some(p) = out {
                write_file(&p, &table)?;
            }
            if let Some(p) = traces {
                export_traces(&result.traces, p)?;
            }
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(table.as_bytes());
            Ok(())
        }
        Command::ExportTraces { spec, out } => {
            let mut spec = ExperimentSpec::load(spec)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let scenario = Scenario::load(&spec.scenario)?;
            let result = run_table(&spec, &scenario)?;
            export_traces(&result.traces, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
