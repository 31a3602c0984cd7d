//! Per-step episode records and the newline-delimited trace format shared by
//! policy rollouts and oracle paths.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::environment::{Action, Cause, Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::grid::Cell;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Cell after the step.
    pub cell: [usize; 3],
    pub action: [i32; 3],
    pub energy_j: f64,
    pub time_s: f64,
    pub reward: f64,
    pub cause: Cause,
}

/// A finished (or in-progress) episode as a sequence of step records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRun {
    pub origin: Cell,
    pub destination: Cell,
    pub steps: Vec<StepRecord>,
    pub cause: Cause,
    pub energy_j: f64,
    pub time_s: f64,
    pub total_reward: f64,
}

impl EpisodeRun {
    pub fn new(origin: Cell, destination: Cell) -> Self {
        EpisodeRun {
            origin,
            destination,
            steps: Vec::new(),
            cause: Cause::Running,
            energy_j: 0.0,
            time_s: 0.0,
            total_reward: 0.0,
        }
    }

    pub fn push(&mut self, action: Action, outcome: &StepOutcome) {
        let (energy_j, time_s) = outcome.move_cost.map_or((0.0, 0.0), |c| (c.energy, c.time));
        self.steps.push(StepRecord {
            step: self.steps.len() + 1,
            cell: outcome.cell.0,
            action: action.delta(),
            energy_j,
            time_s,
            reward: outcome.reward,
            cause: outcome.cause,
        });
        self.cause = outcome.cause;
        (self.energy_j, self.time_s) = outcome.cost_so_far;
        self.total_reward += outcome.reward;
    }

    pub fn success(&self) -> bool {
        self.cause == Cause::Success
    }

    /// Visited cells including the origin.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = vec![self.origin];
        let mut last = self.origin;
        for s in &self.steps {
            let c = Cell(s.cell);
            if c != last {
                cells.push(c);
                last = c;
            }
        }
        cells
    }
}

/// Run a fixed action sequence through `env`, stopping early if the episode
/// terminates.
pub fn replay(
    env: &mut Environment<'_>,
    origin: Cell,
    destination: Cell,
    actions: &[Action],
    best_cost: &mut Option<f64>,
) -> Result<EpisodeRun> {
    env.reset(origin, destination)?;
    let mut run = EpisodeRun::new(origin, destination);
    for &a in actions {
        let (outcome, _) = env.step(a, best_cost)?;
        run.push(a, &outcome);
        if outcome.done {
            break;
        }
    }
    Ok(run)
}

/// Identifies which path a trace line belongs to.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceTag {
    /// `ours_energy`, `ours_time`, `ours_all`, `dijkstra_energy` or `dijkstra_time`.
    pub source: String,
    pub wind: String,
    pub od_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceLine {
    Step {
        #[serde(flatten)]
        tag: TraceTag,
        #[serde(flatten)]
        step: StepRecord,
    },
    Summary {
        #[serde(flatten)]
        tag: TraceTag,
        origin: [usize; 3],
        destination: [usize; 3],
        steps: usize,
        cause: Cause,
        total_energy_kj: f64,
        total_time_s: f64,
    },
}

impl EpisodeRun {
    pub fn trace_lines(&self, tag: &TraceTag) -> Vec<TraceLine> {
        let mut lines: Vec<TraceLine> = self
            .steps
            .iter()
            .map(|s| TraceLine::Step {
                tag: tag.clone(),
                step: s.clone(),
            })
            .collect();
        lines.push(TraceLine::Summary {
            tag: tag.clone(),
            origin: self.origin.0,
            destination: self.destination.0,
            steps: self.steps.len(),
            cause: self.cause,
            total_energy_kj: self.energy_j / 1000.0,
            total_time_s: self.time_s,
        });
        lines
    }
}

pub fn write_trace<W: Write>(mut w: W, lines: &[TraceLine]) -> std::io::Result<()> {
    for line in lines {
        serde_json::to_writer(&mut w, line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceLine>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::Malformed(format!("trace line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}
