//! Exact baselines over the shared move-cost model.
//!
//! Edge weights come from [`move_cost`], the same function the environment
//! uses for every executed move, so oracle optima and policy rollouts are
//! measured on one objective.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::environment::{move_cost, Action, AircraftParams, CityMap, MoveCost};
use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec};
use crate::windfield::WindField;

pub const DEFAULT_NODE_LIMIT: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Energy,
    Time,
}

impl Metric {
    pub fn weight(self, cost: &MoveCost) -> f64 {
        match self {
            Metric::Energy => cost.energy,
            Metric::Time => cost.time,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(Metric::Energy),
            "time" => Ok(Metric::Time),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Energy => "energy",
            Metric::Time => "time",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub target: u32,
    pub weight: f64,
    pub cost: MoveCost,
}

/// Directed graph over free cells, 26-connected, weighted by one metric.
#[derive(Debug, Clone)]
pub struct CostGraph {
    spec: GridSpec,
    metric: Metric,
    cells: Vec<Cell>,
    node_of: Vec<Option<u32>>,
    offsets: Vec<usize>,
    edges: Vec<Edge>,
}

impl CostGraph {
    pub fn build(map: &CityMap, field: &WindField, params: &AircraftParams, metric: Metric) -> Result<Self> {
        params.validate()?;
        let spec = map.spec();
        if spec != field.spec() {
            return Err(Error::DimensionMismatch(format!(
                "map grid {:?} vs field grid {:?}",
                spec,
                field.spec()
            )));
        }
        let mut node_of = vec![None; spec.cell_count()];
        let mut cells = Vec::new();
        for (i, c) in spec.cells().enumerate() {
            if !map.is_occupied(c) {
                node_of[i] = Some(cells.len() as u32);
                cells.push(c);
            }
        }
        let mut offsets = Vec::with_capacity(cells.len() + 1);
        let mut edges = Vec::new();
        offsets.push(0);
        for &from in &cells {
            for a in Action::all() {
                let Some(to) = from.offset(a.delta()).filter(|&c| map.is_free(c)) else {
                    continue;
                };
                let cost = move_cost(from, to, field, params)?;
                let weight = metric.weight(&cost);
                if !(weight > 0.0) || !weight.is_finite() {
                    return Err(Error::NonFinite(format!("edge weight {weight} for {from:?} -> {to:?}")));
                }
                edges.push(Edge {
                    target: node_of[spec.index(to)].unwrap(),
                    weight,
                    cost,
                });
            }
            offsets.push(edges.len());
        }
        Ok(CostGraph {
            spec: spec.clone(),
            metric,
            cells,
            node_of,
            offsets,
            edges,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn node_count(&self) -> usize {
        self.cells.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, cell: Cell) -> Option<u32> {
        if !self.spec.contains(cell) {
            return None;
        }
        self.node_of[self.spec.index(cell)]
    }

    pub fn cell(&self, node: u32) -> Cell {
        self.cells[node as usize]
    }

    pub fn neighbors(&self, node: u32) -> &[Edge] {
        &self.edges[self.offsets[node as usize]..self.offsets[node as usize + 1]]
    }

    pub fn degree(&self, cell: Cell) -> Option<usize> {
        self.node(cell).map(|n| self.neighbors(n).len())
    }

    fn edge(&self, from: u32, to: u32) -> Option<&Edge> {
        self.neighbors(from).iter().find(|e| e.target == to)
    }

    /// Totals of a node path, accumulated in path order.
    fn totals(&self, nodes: &[u32]) -> (f64, f64) {
        let mut energy = 0.0;
        let mut time = 0.0;
        for w in nodes.windows(2) {
            let e = self.edge(w[0], w[1]).expect("path follows graph edges");
            energy += e.cost.energy;
            time += e.cost.time;
        }
        (energy, time)
    }

    fn result(&self, nodes: &[u32], total: f64) -> PathResult {
        let (energy, time) = self.totals(nodes);
        PathResult {
            cells: nodes.iter().map(|&n| self.cell(n)).collect(),
            metric: self.metric,
            total,
            energy,
            time,
            optimal: true,
        }
    }

    fn endpoints(&self, origin: Cell, destination: Cell) -> Result<(u32, u32)> {
        let lookup = |c: Cell| {
            if !self.spec.contains(c) {
                Err(Error::CellOutOfRange(c))
            } else {
                self.node(c).ok_or(Error::Occupied(c))
            }
        };
        Ok((lookup(origin)?, lookup(destination)?))
    }
}

/// An optimal cell path with its accumulated costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub cells: Vec<Cell>,
    pub metric: Metric,
    /// Sum of the metric's edge weights.
    pub total: f64,
    /// Total energy (J).
    pub energy: f64,
    /// Total time (s).
    pub time: f64,
    pub optimal: bool,
}

impl PathResult {
    pub fn actions(&self) -> Vec<Action> {
        self.cells
            .windows(2)
            .map(|w| Action::between(w[0], w[1]).expect("consecutive cells are adjacent"))
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    node: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Node sequence from the origin to `node` following predecessor links.
fn trace_back(pred: &[u32], node: u32) -> Vec<u32> {
    let mut path = vec![node];
    let mut cur = node;
    while pred[cur as usize] != u32::MAX {
        cur = pred[cur as usize];
        path.push(cur);
    }
    path.reverse();
    path
}

/// Lexicographic comparison of two node paths by linear cell index.
fn compare_paths(graph: &CostGraph, a: &[u32], b: &[u32]) -> Ordering {
    let key = |n: &u32| graph.spec.index(graph.cell(*n));
    a.iter().map(key).cmp(b.iter().map(key))
}

/// Minimum-weight path; among equal totals the lexicographically smallest
/// sequence of linear cell indices wins.
pub fn dijkstra(graph: &CostGraph, origin: Cell, destination: Cell) -> Result<PathResult> {
    let (src, dst) = graph.endpoints(origin, destination)?;
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![u32::MAX; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src as usize] = 0.0;
    heap.push(Entry { cost: 0.0, node: src });

    while let Some(Entry { cost, node }) = heap.pop() {
        if settled[node as usize] || cost > dist[node as usize] {
            continue;
        }
        settled[node as usize] = true;
        if node == dst {
            let path = trace_back(&pred, dst);
            return Ok(graph.result(&path, cost));
        }
        for e in graph.neighbors(node) {
            let t = e.target as usize;
            if settled[t] {
                continue;
            }
            let candidate = cost + e.weight;
            let better = match candidate.total_cmp(&dist[t]) {
                Ordering::Less => true,
                Ordering::Equal => {
                    let mut via_new = trace_back(&pred, node);
                    via_new.push(e.target);
                    let mut via_old = trace_back(&pred, pred[t]);
                    via_old.push(e.target);
                    compare_paths(graph, &via_new, &via_old) == Ordering::Less
                }
                Ordering::Greater => false,
            };
            if better {
                dist[t] = candidate;
                pred[t] = node;
                heap.push(Entry {
                    cost: candidate,
                    node: e.target,
                });
            }
        }
    }
    Err(Error::Unreachable { origin, destination })
}

/// Exhaustive search over simple paths with cost-bound pruning. Intended as
/// an independent check of [`dijkstra`] on tiny maps.
pub fn brute_force(graph: &CostGraph, origin: Cell, destination: Cell, node_limit: usize) -> Result<PathResult> {
    if graph.node_count() > node_limit {
        return Err(Error::NodeLimitExceeded {
            count: graph.node_count(),
            limit: node_limit,
        });
    }
    let (src, dst) = graph.endpoints(origin, destination)?;

    struct Search<'g> {
        graph: &'g CostGraph,
        dst: u32,
        on_path: Vec<bool>,
        path: Vec<u32>,
        best: Option<(f64, Vec<u32>)>,
    }

    impl Search<'_> {
        fn visit(&mut self, node: u32, cost: f64) {
            if let Some((best, _)) = &self.best {
                if cost > *best {
                    return;
                }
            }
            if node == self.dst {
                let replace = match &self.best {
                    None => true,
                    Some((best, best_path)) => {
                        cost < *best
                            || (cost == *best && compare_paths(self.graph, &self.path, best_path) == Ordering::Less)
                    }
                };
                if replace {
                    self.best = Some((cost, self.path.clone()));
                }
                return;
            }
            for e in self.graph.neighbors(node) {
                if self.on_path[e.target as usize] {
                    continue;
                }
                self.on_path[e.target as usize] = true;
                self.path.push(e.target);
                self.visit(e.target, cost + e.weight);
                self.path.pop();
                self.on_path[e.target as usize] = false;
            }
        }
    }

    let mut search = Search {
        graph,
        dst,
        on_path: vec![false; graph.node_count()],
        path: vec![src],
        best: None,
    };
    search.on_path[src as usize] = true;
    search.visit(src, 0.0);
    let (total, path) = search.best.ok_or(Error::Unreachable { origin, destination })?;
    Ok(graph.result(&path, total))
}
