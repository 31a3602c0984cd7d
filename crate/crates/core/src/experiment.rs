//! Wind × OD × strategy sweeps, Table-I-style rows, t-tests and traces.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::ops::ControlFlow;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::curriculum::Strategy;
use crate::environment::{CityMap, Environment};
use crate::error::{Error, Result};
use crate::grid::Cell;
use crate::oracle::{dijkstra, CostGraph, Metric};
use crate::ppo::trainer::{EpisodeLog, UpdateStats};
use crate::ppo::{Policy, Trainer, TrainerConfig, TrainingOutcome, TrainingWorld};
use crate::scenario::Scenario;
use crate::stats::{percent_diff, ttest_unpaired, TTestReport, TTestVariant};
use crate::trace::{replay, write_trace, EpisodeRun, TraceLine, TraceTag};
use crate::windfield::{Direction, WindField};

pub const WIND_SPEEDS: [u32; 5] = [4, 8, 12, 16, 20];

/// A wind condition named `D<deg>-<speed>`, e.g. `D90-4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WindName {
    pub direction: Direction,
    pub speed: u32,
}

impl FromStr for WindName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("wind name {s:?} is not D<deg>-<speed>"));
        let rest = s.strip_prefix('D').ok_or_else(bad)?;
        let (deg, speed) = rest.split_once('-').ok_or_else(bad)?;
        let deg: u32 = deg.parse().map_err(|_| bad())?;
        let speed: u32 = speed.parse().map_err(|_| bad())?;
        let direction = Direction::from_degrees(deg)?;
        if !WIND_SPEEDS.contains(&speed) {
            return Err(Error::InvalidConfig(format!(
                "wind speed {speed} in {s:?} not one of {WIND_SPEEDS:?}"
            )));
        }
        Ok(WindName { direction, speed })
    }
}

impl fmt::Display for WindName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}-{}", self.direction.degrees(), self.speed)
    }
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Energy, Strategy::Time, Strategy::All]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Scenario file, relative to the spec file.
    pub scenario: PathBuf,
    pub winds: Vec<String>,
    /// Overrides the scenario's evaluation pairs.
    #[serde(default)]
    pub od_pairs: Option<Vec<(Cell, Cell)>>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    /// Policy files keyed by `<strategy>` or `<wind>/<strategy>`; the
    /// wind-specific key wins.
    #[serde(default)]
    pub policies: BTreeMap<String, PathBuf>,
    /// Train missing policies instead of failing.
    #[serde(default)]
    pub train: bool,
    /// Overrides the scenario's training episode budget.
    #[serde(default)]
    pub training_episodes: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub variant: TTestVariant,
}

impl ExperimentSpec {
    /// Loads a spec and resolves its relative paths against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: ExperimentSpec = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.scenario = base.join(&spec.scenario);
        for p in spec.policies.values_mut() {
            *p = base.join(&*p);
        }
        spec.wind_names()?;
        Ok(spec)
    }

    /// Parsed wind names, sorted by direction then speed, duplicates removed.
    pub fn wind_names(&self) -> Result<Vec<WindName>> {
        let mut winds = self.winds.iter().map(|w| w.parse()).collect::<Result<Vec<WindName>>>()?;
        if winds.is_empty() {
            return Err(Error::InvalidConfig("experiment lists no winds".into()));
        }
        winds.sort();
        winds.dedup();
        Ok(winds)
    }

    fn policy_path(&self, wind: WindName, strategy: Strategy) -> Option<&PathBuf> {
        self.policies
            .get(&format!("{wind}/{}", strategy.name()))
            .or_else(|| self.policies.get(strategy.name()))
    }
}

/// One OD pair under one wind. Costs are kJ and s; `None` where a strategy
/// was not run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub wind: String,
    /// 1-based.
    pub od_index: usize,
    pub dijkstra_energy: f64,
    pub ours_energy: Option<f64>,
    pub ours_all_energy: Option<f64>,
    pub energy_diff: Option<f64>,
    pub dijkstra_time: f64,
    pub ours_time: Option<f64>,
    pub ours_all_time: Option<f64>,
    pub time_diff: Option<f64>,
    /// Strategies whose greedy rollout did not reach the destination.
    pub failed: Vec<Strategy>,
}

/// Builds a row from raw costs; diffs use [`percent_diff`] with the balanced
/// strategy as the reference.
#[allow(clippy::too_many_arguments)]
pub fn assemble_row(
    wind: &str,
    od_index: usize,
    dijkstra_energy: f64,
    ours_energy: Option<f64>,
    ours_all_energy: Option<f64>,
    dijkstra_time: f64,
    ours_time: Option<f64>,
    ours_all_time: Option<f64>,
) -> Result<ResultRow> {
    let diff = |single: Option<f64>, all: Option<f64>| match (single, all) {
        (Some(s), Some(a)) => percent_diff(s, a).map(Some),
        _ => Ok(None),
    };
    Ok(ResultRow {
        wind: wind.to_string(),
        od_index,
        dijkstra_energy,
        ours_energy,
        ours_all_energy,
        energy_diff: diff(ours_energy, ours_all_energy)?,
        dijkstra_time,
        ours_time,
        ours_all_time,
        time_diff: diff(ours_time, ours_all_time)?,
        failed: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub a: String,
    pub b: String,
    pub report: Option<TTestReport>,
    /// Why the test could not be run.
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TableResult {
    pub rows: Vec<ResultRow>,
    pub tests: Vec<NamedTest>,
    pub variant: TTestVariant,
    pub traces: Vec<TraceLine>,
}

/// Column values over rows where the strategy succeeded.
fn column(rows: &[ResultRow], get: impl Fn(&ResultRow) -> Option<f64>, needs: &[Strategy]) -> Vec<f64> {
    rows.iter()
        .filter(|r| needs.iter().all(|s| !r.failed.contains(s)))
        .filter_map(get)
        .collect()
}

/// The four comparisons: Dijkstra-energy vs Ours-energy, Ours-energy vs
/// Ours-all, Dijkstra-time vs Ours-time, Ours-time vs Ours-all.
pub fn table_tests(rows: &[ResultRow], variant: TTestVariant) -> Vec<NamedTest> {
    use Strategy::*;
    let specs: [(&str, &str, Vec<f64>, Vec<f64>); 4] = [
        (
            "dijkstra_energy",
            "ours_energy",
            column(rows, |r| Some(r.dijkstra_energy), &[]),
            column(rows, |r| r.ours_energy, &[Energy]),
        ),
        (
            "ours_energy",
            "ours_all_energy",
            column(rows, |r| r.ours_energy, &[Energy]),
            column(rows, |r| r.ours_all_energy, &[All]),
        ),
        (
            "dijkstra_time",
            "ours_time",
            column(rows, |r| Some(r.dijkstra_time), &[]),
            column(rows, |r| r.ours_time, &[Time]),
        ),
        (
            "ours_time",
            "ours_all_time",
            column(rows, |r| r.ours_time, &[Time]),
            column(rows, |r| r.ours_all_time, &[All]),
        ),
    ];
    specs
        .into_iter()
        .map(|(a, b, xa, xb)| {
            let (report, note) = match ttest_unpaired(&xa, &xb, variant) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            NamedTest {
                a: a.into(),
                b: b.into(),
                report,
                note,
            }
        })
        .collect()
}

/// Deterministic per-run seed from the experiment seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Trains one strategy on one wind field with the scenario's trainer
/// settings. `held_out` pairs are never sampled for training.
pub fn train_strategy(
    scenario: &Scenario,
    map: &CityMap,
    field: &WindField,
    strategy: Strategy,
    config: TrainerConfig,
    held_out: &[(Cell, Cell)],
) -> Result<TrainingOutcome> {
    train_strategy_with(scenario, map, field, strategy, config, held_out, |_, _, _| ControlFlow::Continue(()))
}

/// [`train_strategy`] with a per-update progress callback.
pub fn train_strategy_with(
    scenario: &Scenario,
    map: &CityMap,
    field: &WindField,
    strategy: Strategy,
    config: TrainerConfig,
    held_out: &[(Cell, Cell)],
    on_update: impl FnMut(&UpdateStats, &[EpisodeLog], &Policy) -> ControlFlow<()>,
) -> Result<TrainingOutcome> {
    let world = TrainingWorld {
        map,
        field,
        params: scenario.aircraft.clone(),
        weights: strategy.weights(&scenario.rewards),
        limits: scenario.limits.clone(),
        held_out: held_out.to_vec(),
    };
    Trainer::new(config, world)?.train_with(on_update)
}

pub fn run_table(spec: &ExperimentSpec, scenario: &Scenario) -> Result<TableResult> {
    let winds = spec.wind_names()?;
    let ods = spec.od_pairs.clone().unwrap_or_else(|| scenario.od_pairs.clone());
    if ods.is_empty() {
        return Err(Error::InvalidConfig("experiment has no OD pairs".into()));
    }
    let map = scenario.map()?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();

    for wind in winds {
        let field = scenario.wind_field(&map, wind.direction, wind.speed as f64)?;
        let mut policies: Vec<(Strategy, Policy)> = Vec::new();
        for &strategy in &spec.strategies {
            let policy = match spec.policy_path(wind, strategy) {
                Some(p) => Policy::load(p)?,
                None if spec.train => {
                    let mut config = scenario.training.clone();
                    config.seed = derive_seed(spec.seed, &format!("{wind}/{}", strategy.name()));
                    if let Some(n) = spec.training_episodes {
                        config.total_episodes = n;
                    }
                    train_strategy(scenario, &map, &field, strategy, config, &ods)?.policy
                }
                None => return Err(Error::MissingPolicy(format!("{wind}/{}", strategy.name()))),
            };
            policies.push((strategy, policy));
        }

        let energy_graph = CostGraph::build(&map, &field, &scenario.aircraft, Metric::Energy)?;
        let time_graph = CostGraph::build(&map, &field, &scenario.aircraft, Metric::Time)?;
        let wind_str = wind.to_string();

        for (i, &(o, d)) in ods.iter().enumerate() {
            let od_index = i + 1;
            let tag = |source: &str| TraceTag {
                source: source.to_string(),
                wind: wind_str.clone(),
                od_index,
            };
            let mut oracle = |graph: &CostGraph, source: &str| -> Result<(f64, f64)> {
                let path = dijkstra(graph, o, d)?;
                let mut env = Environment::new(
                    &map,
                    &field,
                    scenario.aircraft.clone(),
                    scenario.rewards.clone(),
                    scenario.limits.clone(),
                )?;
                let run = replay(&mut env, o, d, &path.actions(), &mut None)?;
                traces.extend(run.trace_lines(&tag(source)));
                Ok((path.energy / 1000.0, path.time))
            };
            let (dijkstra_energy, _) = oracle(&energy_graph, "dijkstra_energy")?;
            let (_, dijkstra_time) = oracle(&time_graph, "dijkstra_time")?;

            let mut results: BTreeMap<Strategy, EpisodeRun> = BTreeMap::new();
            for (strategy, policy) in &policies {
                let mut env = Environment::new(
                    &map,
                    &field,
                    scenario.aircraft.clone(),
                    strategy.weights(&scenario.rewards),
                    scenario.limits.clone(),
                )?;
                let run = policy.rollout_greedy(&mut env, o, d)?;
                traces.extend(run.trace_lines(&tag(&format!("ours_{}", strategy.name()))));
                results.insert(*strategy, run);
            }
            // Failed rollouts report no cost; they are listed in `failed`.
            let succeeded = |s: Strategy| results.get(&s).filter(|r| r.success());
            let energy = |s: Strategy| succeeded(s).map(|r| r.energy_j / 1000.0);
            let time = |s: Strategy| succeeded(s).map(|r| r.time_s);
            let mut row = assemble_row(
                &wind_str,
                od_index,
                dijkstra_energy,
                energy(Strategy::Energy),
                energy(Strategy::All),
                dijkstra_time,
                time(Strategy::Time),
                time(Strategy::All),
            )?;
            row.failed = results.iter().filter(|(_, r)| !r.success()).map(|(s, _)| *s).collect();
            rows.push(row);
        }
    }

    let tests = table_tests(&rows, spec.variant);
    Ok(TableResult {
        rows,
        tests,
        variant: spec.variant,
        traces,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

/// Comma-separated table followed by the t-test report. Lines starting with
/// `#` state the conventions.
pub fn format_table(result: &TableResult) -> String {
    let mut out = String::new();
    out.push_str("# energy in kJ, time in s\n");
    out.push_str("# diff = 100*(all - single)/all, single = ours_energy or ours_time, all = ours_all\n");
    out.push_str(
        "wind,od,dijkstra_energy,ours_energy,ours_all_energy,energy_diff,dijkstra_time,ours_time,ours_all_time,time_diff,failed\n",
    );
    for r in &result.rows {
        let failed: Vec<&str> = r.failed.iter().map(|s| s.name()).collect();
        let _ = writeln!(
            out,
            "{},{},{:.2},{},{},{},{:.2},{},{},{},{}",
            r.wind,
            r.od_index,
            r.dijkstra_energy,
            opt(r.ours_energy),
            opt(r.ours_all_energy),
            opt(r.energy_diff),
            r.dijkstra_time,
            opt(r.ours_time),
            opt(r.ours_all_time),
            opt(r.time_diff),
            failed.join(";"),
        );
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "# unpaired t-tests, {} variance; mean_difference = mean(a) - mean(b)",
        result.variant.name()
    );
    out.push_str("a,b,n_a,n_b,mean_difference,t,df,p_two_tailed,ci95_low,ci95_high,note\n");
    for t in &result.tests {
        match &t.report {
            Some(r) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{:.4},{:.4},{:.2},{:.4},{:.4},{:.4},",
                    t.a, t.b, r.n_a, r.n_b, r.mean_difference, r.t, r.df, r.p_two_tailed, r.ci95.0, r.ci95.1
                );
            }
            None => {
                let note = t.note.as_deref().unwrap_or("").replace(',', ";");
                let _ = writeln!(out, "{},{},,,,,,,,,{}", t.a, t.b, note);
            }
        }
    }
    out
}

/// Writes newline-delimited trace records.
pub fn export_traces(lines: &[TraceLine], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_trace(&mut w, lines).map_err(|e| Error::io(path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}
