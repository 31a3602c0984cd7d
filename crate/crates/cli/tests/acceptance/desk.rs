use std::collections::VecDeque;
use std::ops::ControlFlow;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use windpath::curriculum::{DistanceClass, Strategy};
use windpath::environment::{Cause, CityMap, Environment};
use windpath::experiment::{derive_seed, train_strategy_with};
use windpath::oracle::{dijkstra, CostGraph, Metric};
use windpath::ppo::trainer::EpisodeLog;
use windpath::ppo::{OdSchedule, Policy, TrainerConfig};
use windpath::scenario::Scenario;
use windpath::windfield::{Direction, WindField};
use windpath::Cell;

use super::Verdict;

const BUDGET: usize = 20_000;
const MAX_SECS: f64 = 1800.0;
const TOLERANCE: f64 = 0.15;
const SEEDS: u64 = 5;
/// Corner-to-corner probe for the curriculum comparison; far class on the
/// desk grid and never sampled for training.
const FAR_PROBE: (Cell, Cell) = (Cell([0, 0, 0]), Cell([11, 11, 3]));

struct Desk {
    scenario: Scenario,
    map: CityMap,
    field: WindField,
}

impl Desk {
    fn new() -> Desk {
        let scenario = Scenario::desk();
        let map = scenario.map().unwrap();
        let field = scenario.wind_field(&map, Direction::D0, 4.0).unwrap();
        Desk { scenario, map, field }
    }

    fn config(&self, seed: u64) -> TrainerConfig {
        TrainerConfig {
            seed,
            total_episodes: BUDGET,
            ..self.scenario.training.clone()
        }
    }

    fn greedy(&self, policy: &Policy, strategy: Strategy, od: (Cell, Cell)) -> windpath::trace::EpisodeRun {
        let mut env = Environment::new(
            &self.map,
            &self.field,
            self.scenario.aircraft.clone(),
            strategy.weights(&self.scenario.rewards),
            self.scenario.limits.clone(),
        )
        .unwrap();
        policy.rollout_greedy(&mut env, od.0, od.1).unwrap()
    }

    fn optimum(&self, metric: Metric, od: (Cell, Cell)) -> f64 {
        let graph = CostGraph::build(&self.map, &self.field, &self.scenario.aircraft, metric).unwrap();
        dijkstra(&graph, od.0, od.1).unwrap().total
    }
}

/// Best success rate over any 100 consecutive episodes trained in the far
/// stage, with the episode count at which 90% was first reached.
fn far_window(episodes: &[EpisodeLog]) -> (f64, Option<usize>) {
    let mut window = VecDeque::new();
    let (mut best, mut reached) = (0.0f64, None);
    for e in episodes {
        if e.stage != DistanceClass::Far {
            window.clear();
            continue;
        }
        window.push_back(e.cause == Cause::Success);
        if window.len() > 100 {
            window.pop_front();
        }
        if window.len() == 100 {
            let rate = window.iter().filter(|s| **s).count() as f64 / 100.0;
            best = best.max(rate);
            if rate >= 0.9 && reached.is_none() {
                reached = Some(e.episode + 1);
            }
        }
    }
    (best, reached)
}

fn ratio_text(r: Option<f64>) -> String {
    r.map(|r| format!("{:+.1}%", 100.0 * (r - 1.0))).unwrap_or_else(|| "failed".into())
}

pub fn desk_training() -> Verdict {
    let desk = Desk::new();
    let held_out = desk.scenario.od_pairs.clone();
    let mut detail = Vec::new();

    let start = Instant::now();
    let balanced = train_strategy_with(
        &desk.scenario,
        &desk.map,
        &desk.field,
        Strategy::All,
        desk.config(derive_seed(0, "desk/all")),
        &held_out,
        |_, _, _| ControlFlow::Continue(()),
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    eprintln!("  desk: balanced trained in {secs:.0} s");
    let (best, reached) = far_window(&balanced.episodes);
    let rate_ok = reached.is_some() && secs < MAX_SECS;
    detail.push(format!(
        "balanced: best far-stage rolling success {best:.2}, 90% at episode {}, {secs:.0} s",
        reached.map(|n| n.to_string()).unwrap_or_else(|| "never".into())
    ));

    let energy = train_strategy_with(
        &desk.scenario,
        &desk.map,
        &desk.field,
        Strategy::Energy,
        desk.config(derive_seed(0, "desk/energy")),
        &held_out,
        |_, _, _| ControlFlow::Continue(()),
    )
    .unwrap();

    let (mut energy_ok, mut balanced_ok) = (true, true);
    let mut energy_text = Vec::new();
    let mut balanced_text = Vec::new();
    for &od in &held_out {
        let best_e = desk.optimum(Metric::Energy, od);
        let best_t = desk.optimum(Metric::Time, od);
        let run = desk.greedy(&energy.policy, Strategy::Energy, od);
        let re = run.success().then(|| run.energy_j / best_e);
        energy_ok &= re.is_some_and(|r| r <= 1.0 + TOLERANCE);
        energy_text.push(ratio_text(re));

        let run = desk.greedy(&balanced.policy, Strategy::All, od);
        let be = run.success().then(|| run.energy_j / best_e);
        let bt = run.success().then(|| run.time_s / best_t);
        balanced_ok &= be.is_some_and(|r| r <= 1.0 + TOLERANCE) && bt.is_some_and(|r| r <= 1.0 + TOLERANCE);
        balanced_text.push(format!("{}/{}", ratio_text(be), ratio_text(bt)));
    }
    detail.push(format!("energy vs optimum [{}]", energy_text.join(", ")));
    detail.push(format!("balanced energy/time vs optima [{}]", balanced_text.join(", ")));

    Verdict {
        name: "desk-training",
        pass: rate_ok && energy_ok && balanced_ok,
        detail: detail.join("; "),
    }
}

/// Episodes until the greedy balanced policy first reaches the far probe,
/// checked after every update; `None` if it has not by episode `cut`.
/// Stopping early leaves the learning-rate schedule of the full budget intact.
fn episodes_to_probe(desk: &Desk, schedule: OdSchedule, seed: u64, cut: usize) -> Option<usize> {
    let mut held_out = desk.scenario.od_pairs.clone();
    held_out.push(FAR_PROBE);
    let config = TrainerConfig {
        schedule,
        ..desk.config(seed)
    };
    let mut hit = None;
    train_strategy_with(
        &desk.scenario,
        &desk.map,
        &desk.field,
        Strategy::All,
        config,
        &held_out,
        |stats, _, policy| {
            if desk.greedy(policy, Strategy::All, FAR_PROBE).success() {
                hit = Some(stats.episodes);
                ControlFlow::Break(())
            } else if stats.episodes >= cut {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )
    .unwrap();
    hit.filter(|&n| n <= cut)
}

/// Median with misses ranked above every hit.
fn median(mut v: Vec<Option<usize>>) -> Option<usize> {
    v.sort_by_key(|x| x.unwrap_or(usize::MAX));
    v[v.len() / 2]
}

/// Staged runs go first. Far-only runs then only need to reach the staged
/// median: a run still missing the probe there counts as slower, which
/// decides the median comparison exactly.
pub fn curriculum_effect() -> Verdict {
    let desk = Desk::new();
    let seeds: Vec<u64> = (0..SEEDS).map(|s| derive_seed(s, "curriculum")).collect();
    let staged: Vec<Option<usize>> = seeds
        .iter()
        .map(|&seed| {
            let r = episodes_to_probe(&desk, OdSchedule::Staged, seed, BUDGET);
            eprintln!("  curriculum staged: {r:?}");
            r
        })
        .collect();
    let Some(cut) = median(staged.clone()) else {
        return Verdict {
            name: "curriculum-effect",
            pass: false,
            detail: format!("staged median exceeds {BUDGET} episodes: {staged:?}"),
        };
    };
    // Stop once a majority is on one side; the median is then fixed.
    let majority = seeds.len() / 2 + 1;
    let mut flat = Vec::new();
    for &seed in &seeds {
        let slower = flat.iter().filter(|x: &&Option<usize>| x.is_none()).count();
        if slower >= majority || flat.len() - slower >= majority {
            break;
        }
        let r = episodes_to_probe(&desk, OdSchedule::Class(DistanceClass::Far), seed, cut);
        eprintln!("  curriculum far-only: {r:?}");
        flat.push(r);
    }
    let slower = flat.iter().filter(|x| x.is_none()).count();
    let show = |v: &[Option<usize>], cap: usize| {
        v.iter()
            .map(|x| x.map(|n| n.to_string()).unwrap_or_else(|| format!(">{cap}")))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Verdict {
        name: "curriculum-effect",
        pass: slower >= majority,
        detail: format!(
            "episodes to first greedy far success, staged [{}] (median {cut}) vs far-only [{}] ({} of {} far-only seeds run, the rest cannot change the median)",
            show(&staged, BUDGET),
            show(&flat, cut),
            flat.len(),
            seeds.len()
        ),
    }
}

fn windpath(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_windpath")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn determinism() -> Verdict {
    let dir = tempfile::TempDir::new().unwrap();
    let mut scenario = Scenario::desk();
    scenario.training.total_episodes = 300;
    let sc = dir.path().join("scenario.json");
    scenario.save(&sc).unwrap();

    let train = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        windpath(&["--seed", seed, "train", "--scenario", p(&sc), "--strategy", "all", "--wind", "D0-4", "--out", p(&out)]);
        std::fs::read(out).unwrap()
    };
    let a = train("a.pol", "11");
    let b = train("b.pol", "11");
    let c = train("c.pol", "12");

    let spec = dir.path().join("exp.json");
    std::fs::write(
        &spec,
        r#"{"scenario": "scenario.json", "winds": ["D0-4", "D90-8"], "strategies": ["all"], "policies": {"all": "a.pol"}}"#,
    )
    .unwrap();
    let e1 = windpath(&["--seed", "11", "eval", "--spec", p(&spec)]);
    let e2 = windpath(&["--seed", "11", "eval", "--spec", p(&spec)]);

    let policies_equal = a == b;
    let eval_equal = e1 == e2;
    let seed_matters = a != c;
    Verdict {
        name: "determinism",
        pass: policies_equal && eval_equal && seed_matters,
        detail: format!(
            "policy bytes identical {policies_equal} ({} bytes), eval output identical {eval_equal} ({} bytes), other seed differs {seed_matters}",
            a.len(),
            e1.len()
        ),
    }
}
