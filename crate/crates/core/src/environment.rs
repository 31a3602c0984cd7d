//! City geometry, the flight cost model and the episodic planning POMDP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec};
use crate::windfield::WindField;

/// Occupancy grid of buildings.
#[derive(Debug, Clone, PartialEq)]
pub struct CityMap {
    spec: GridSpec,
    occupied: Vec<bool>,
}

/// Inclusive box of cells `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl CellBox {
    pub fn contains(&self, cell: Cell) -> bool {
        (0..3).all(|a| self.min[a] <= cell.0[a] && cell.0[a] <= self.max[a])
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let [x0, y0, z0] = self.min;
        let [x1, y1, z1] = self.max;
        (z0..=z1).flat_map(move |z| (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| Cell([x, y, z]))))
    }

    pub fn volume(&self) -> usize {
        (0..3).map(|a| self.max[a] + 1 - self.min[a]).product()
    }
}

impl CityMap {
    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.cell_count();
        CityMap {
            spec,
            occupied: vec![false; n],
        }
    }

    pub fn new(spec: GridSpec, occupied: Vec<bool>) -> Result<Self> {
        spec.validate()?;
        if occupied.len() != spec.cell_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} occupancy flags for {} cells",
                occupied.len(),
                spec.cell_count()
            )));
        }
        Ok(CityMap { spec, occupied })
    }

    pub fn with_buildings(spec: GridSpec, buildings: &[CellBox]) -> Result<Self> {
        let mut map = CityMap::empty(spec);
        for b in buildings {
            if (0..3).any(|a| b.min[a] > b.max[a] || b.max[a] >= map.spec.dims[a]) {
                return Err(Error::InvalidConfig(format!("building {b:?} outside grid")));
            }
            for c in b.cells() {
                map.set_occupied(c, true);
            }
        }
        Ok(map)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.occupied[self.spec.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.spec.contains(cell) && !self.is_occupied(cell)
    }

    pub fn set_occupied(&mut self, cell: Cell, occupied: bool) {
        let i = self.spec.index(cell);
        self.occupied[i] = occupied;
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.spec.cells().filter(|&c| !self.is_occupied(c))
    }

    pub fn free_count(&self) -> usize {
        self.occupied.iter().filter(|o| !**o).count()
    }

    /// Distances from the centre of `cell` to the nearest building face or
    /// domain boundary, ordered front (+X), back (−X), left (−Y), right (+Y),
    /// up (+Z), down (−Z).
    pub fn ray_distances(&self, cell: Cell) -> Result<[f64; 6]> {
        if !self.spec.contains(cell) {
            return Err(Error::CellOutOfRange(cell));
        }
        if self.is_occupied(cell) {
            return Err(Error::Occupied(cell));
        }
        const DIRS: [(usize, i32); 6] = [(0, 1), (0, -1), (1, -1), (1, 1), (2, 1), (2, -1)];
        Ok(DIRS.map(|(axis, sign)| {
            let mut delta = [0i32; 3];
            delta[axis] = sign;
            let mut cur = cell;
            let mut free = 0usize;
            while let Some(next) = cur.offset(delta).filter(|&n| self.is_free(n)) {
                free += 1;
                cur = next;
            }
            (free as f64 + 0.5) * self.spec.cell[axis]
        }))
    }
}

/// Physical constants of the flight energy model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AircraftParams {
    /// Takeoff mass (kg).
    pub mass: f64,
    /// Windward area (m²).
    pub area: f64,
    /// Zero-lift drag coefficient.
    pub cd0: f64,
    /// Induced drag factor.
    pub k: f64,
    /// Air density (kg/m³).
    pub rho: f64,
    pub g: f64,
    pub eta_p: f64,
    pub eta_m: f64,
    pub eta_esc: f64,
    /// Commanded ground speed (m/s).
    pub s_cmd: f64,
    /// Airspeed floor (m/s).
    pub v_min: f64,
    /// Battery capacity (J).
    pub e_max: f64,
}

impl Default for AircraftParams {
    fn default() -> Self {
        AircraftParams {
            mass: 10.0,
            area: 0.5,
            cd0: 0.02,
            k: 0.1,
            rho: 1.225,
            g: 9.8,
            eta_p: 0.8,
            eta_m: 0.85,
            eta_esc: 0.95,
            s_cmd: 10.0,
            v_min: 0.5,
            e_max: 500_000.0,
        }
    }
}

impl AircraftParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("mass", self.mass),
            ("area", self.area),
            ("cd0", self.cd0),
            ("k", self.k),
            ("rho", self.rho),
            ("g", self.g),
            ("eta_p", self.eta_p),
            ("eta_m", self.eta_m),
            ("eta_esc", self.eta_esc),
            ("s_cmd", self.s_cmd),
            ("v_min", self.v_min),
            ("e_max", self.e_max),
        ];
        for (name, v) in all {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be finite and > 0")));
            }
        }
        for (name, v) in [("eta_p", self.eta_p), ("eta_m", self.eta_m), ("eta_esc", self.eta_esc)] {
            if v > 1.0 {
                return Err(Error::InvalidConfig(format!("efficiency {name} = {v} exceeds 1")));
            }
        }
        Ok(())
    }

    pub fn efficiency(&self) -> f64 {
        self.eta_p * self.eta_m * self.eta_esc
    }

    /// Energy per metre of flight at airspeed `v` (J/m).
    pub fn energy_rate(&self, v: f64) -> f64 {
        let parasitic = 0.5 * self.rho * v * v * self.area * self.cd0;
        let induced = 2.0 * self.k * self.mass * self.mass * self.g * self.g / (self.rho * self.area * v * v);
        (parasitic + induced) / self.efficiency()
    }

    /// `E = L / (V η) · [½ρV³SC_D0 + 2kM²g²/(ρSV)]`.
    pub fn segment_energy(&self, length: f64, v: f64) -> f64 {
        length / (v * self.efficiency())
            * (0.5 * self.rho * v.powi(3) * self.area * self.cd0
                + 2.0 * self.k * self.mass * self.mass * self.g * self.g / (self.rho * self.area * v))
    }

    /// Airspeed minimising energy per metre.
    pub fn optimal_airspeed(&self) -> f64 {
        let m2g2 = (self.mass * self.g).powi(2);
        (4.0 * self.k * m2g2 / (self.rho * self.rho * self.area * self.area * self.cd0)).powf(0.25)
    }
}

/// Length, time, energy and airspeed of one cell-to-cell move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveCost {
    pub length: f64,
    pub time: f64,
    pub energy: f64,
    pub airspeed: f64,
}

/// Cost of flying from the centre of `from` to the centre of the adjacent
/// cell `to`, with wind sampled at the segment midpoint.
pub fn move_cost(from: Cell, to: Cell, field: &WindField, params: &AircraftParams) -> Result<MoveCost> {
    let spec = field.spec();
    for c in [from, to] {
        if !spec.contains(c) {
            return Err(Error::CellOutOfRange(c));
        }
    }
    if from == to || (0..3).any(|a| from.0[a].abs_diff(to.0[a]) > 1) {
        return Err(Error::NotAdjacent(from, to));
    }
    let p0 = spec.center_unchecked(from);
    let p1 = spec.center_unchecked(to);
    let delta: [f64; 3] = std::array::from_fn(|a| p1[a] - p0[a]);
    let length = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
    let time = length / params.s_cmd;
    let mid: [f64; 3] = std::array::from_fn(|a| 0.5 * (p0[a] + p1[a]));
    let wind = field.sample(mid)?;
    let air: f64 = (0..3).map(|a| (delta[a] / time - wind[a]).powi(2)).sum::<f64>().sqrt();
    let airspeed = air.max(params.v_min);
    Ok(MoveCost {
        length,
        time,
        energy: params.segment_energy(length, airspeed),
        airspeed,
    })
}

pub const ACTION_COUNT: usize = 26;

/// One of the 26 composite moves `(a_x, a_y, a_z) ∈ {−1,0,1}³ \ {0}`,
/// enumerated lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action(u8);

const ACTION_TABLE: [[i32; 3]; ACTION_COUNT] = {
    let mut table = [[0i32; 3]; ACTION_COUNT];
    let mut n = 0;
    let mut i = 0;
    while i < 27 {
        let t = [(i / 9) - 1, ((i / 3) % 3) - 1, (i % 3) - 1];
        if !(t[0] == 0 && t[1] == 0 && t[2] == 0) {
            table[n] = t;
            n += 1;
        }
        i += 1;
    }
    table
};

impl Action {
    pub fn new(index: usize) -> Result<Self> {
        if index < ACTION_COUNT {
            Ok(Action(index as u8))
        } else {
            Err(Error::InvalidConfig(format!("action index {index} >= {ACTION_COUNT}")))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn delta(self) -> [i32; 3] {
        ACTION_TABLE[self.0 as usize]
    }

    pub fn from_delta(delta: [i32; 3]) -> Option<Self> {
        ACTION_TABLE.iter().position(|t| *t == delta).map(|i| Action(i as u8))
    }

    /// Action moving from `from` to the adjacent cell `to`.
    pub fn between(from: Cell, to: Cell) -> Option<Self> {
        let d: [i32; 3] = std::array::from_fn(|a| to.0[a] as i32 - from.0[a] as i32);
        Action::from_delta(d)
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..ACTION_COUNT as u8).map(Action)
    }
}

pub const OBS_LEN: usize = 37;
/// Wind normalisation scale (m/s).
pub const WIND_SCALE: f64 = 20.0;

/// Fixed-length observation: cell (3), destination (3), obstacle distances
/// (6), wind at the current cell and its six face neighbours (21), remaining
/// energy fraction and the last three move energies (4).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f32; OBS_LEN]);

impl Observation {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn cell(&self) -> &[f32] {
        &self.0[0..3]
    }

    pub fn destination(&self) -> &[f32] {
        &self.0[3..6]
    }

    pub fn obstacle_distances(&self) -> &[f32] {
        &self.0[6..12]
    }

    pub fn wind(&self) -> &[f32] {
        &self.0[12..33]
    }

    pub fn energy(&self) -> &[f32] {
        &self.0[33..37]
    }
}

/// Cost used to compare successful episodes for reward shaping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapingMetric {
    /// Episode energy in kJ.
    Energy,
    /// Episode time in s.
    Time,
    /// `−α1·E[kJ] − α2·T[s]`.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    /// Per kJ of move energy.
    pub alpha1: f64,
    /// Per second of move time.
    pub alpha2: f64,
    /// Per metre of change in distance to the destination.
    pub alpha3: f64,
    pub r_success: f64,
    pub r_fail: f64,
    pub shaping_gain: f64,
    pub shaping_metric: ShapingMetric,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            alpha1: -3.5,
            alpha2: -1.25,
            alpha3: -0.04,
            r_success: 1000.0,
            r_fail: -100.0,
            shaping_gain: 10.0,
            shaping_metric: ShapingMetric::Weighted,
        }
    }
}

impl RewardWeights {
    /// Reward for an intermediate step. `d_diff` is `d_next − d_current` (m).
    pub fn non_terminating(&self, energy_j: f64, time_s: f64, d_diff: f64) -> f64 {
        self.alpha1 * energy_j / 1000.0 + self.alpha2 * time_s + self.alpha3 * d_diff
    }

    pub fn episode_cost(&self, energy_j: f64, time_s: f64) -> f64 {
        match self.shaping_metric {
            ShapingMetric::Energy => energy_j / 1000.0,
            ShapingMetric::Time => time_s,
            ShapingMetric::Weighted => -self.alpha1 * energy_j / 1000.0 - self.alpha2 * time_s,
        }
    }
}

/// Shaping bonus relative to the historical best cost, updating the best.
///
/// Returns `None` when there is no prior success to compare against; the
/// best is then initialised with `cost`.
pub fn shaping_adjustment(cost: f64, best_so_far: &mut Option<f64>, gain: f64) -> Option<f64> {
    match best_so_far {
        Some(best) => {
            let delta = gain * (*best - cost);
            *best = best.min(cost);
            Some(delta)
        }
        None => {
            *best_so_far = Some(cost);
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Running,
    OutOfBounds,
    Collision,
    EnergyDepleted,
    TimeExceeded,
    Success,
}

impl Cause {
    pub fn is_terminal(self) -> bool {
        self != Cause::Running
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub cause: Cause,
    /// Accumulated (energy J, time s) after this step.
    pub cost_so_far: (f64, f64),
    /// Cell occupied after this step.
    pub cell: Cell,
    /// Cost of the executed move; `None` when the move was rejected.
    pub move_cost: Option<MoveCost>,
    /// Shaping delta included in `reward`, if any.
    pub shaping: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeLimits {
    /// Step limit; defaults to `max(200, 4 × Manhattan(origin, destination))`.
    pub max_steps: Option<usize>,
}

impl EpisodeLimits {
    pub fn max_steps_for(&self, origin: Cell, destination: Cell) -> usize {
        self.max_steps
            .unwrap_or_else(|| 200usize.max(4 * origin.manhattan(destination)))
    }
}

#[derive(Debug, Clone)]
struct EpisodeState {
    destination: Cell,
    current: Cell,
    energy_left: f64,
    steps: usize,
    max_steps: usize,
    history: [f64; 3],
    energy_used: f64,
    time_used: f64,
    done: bool,
}

/// Episodic flight environment over a fixed map and wind field.
#[derive(Debug, Clone)]
pub struct Environment<'a> {
    map: &'a CityMap,
    field: &'a WindField,
    params: AircraftParams,
    weights: RewardWeights,
    limits: EpisodeLimits,
    energy_ref: f64,
    state: Option<EpisodeState>,
}

impl<'a> Environment<'a> {
    pub fn new(
        map: &'a CityMap,
        field: &'a WindField,
        params: AircraftParams,
        weights: RewardWeights,
        limits: EpisodeLimits,
    ) -> Result<Self> {
        params.validate()?;
        if map.spec() != field.spec() {
            return Err(Error::DimensionMismatch(format!(
                "map grid {:?} vs field grid {:?}",
                map.spec(),
                field.spec()
            )));
        }
        let energy_ref = params.segment_energy(map.spec().cell[0], params.s_cmd.max(params.v_min));
        Ok(Environment {
            map,
            field,
            params,
            weights,
            limits,
            energy_ref,
            state: None,
        })
    }

    pub fn map(&self) -> &'a CityMap {
        self.map
    }

    pub fn field(&self) -> &'a WindField {
        self.field
    }

    pub fn params(&self) -> &AircraftParams {
        &self.params
    }

    pub fn weights(&self) -> &RewardWeights {
        &self.weights
    }

    /// Energy of one X-axis move at the commanded speed in still air.
    pub fn energy_reference(&self) -> f64 {
        self.energy_ref
    }

    pub fn current_cell(&self) -> Option<Cell> {
        self.state.as_ref().map(|s| s.current)
    }

    pub fn destination(&self) -> Option<Cell> {
        self.state.as_ref().map(|s| s.destination)
    }

    pub fn steps(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.steps)
    }

    pub fn max_steps(&self) -> Option<usize> {
        self.state.as_ref().map(|s| s.max_steps)
    }

    pub fn is_done(&self) -> bool {
        self.state.as_ref().is_none_or(|s| s.done)
    }

    pub fn reset(&mut self, origin: Cell, destination: Cell) -> Result<Observation> {
        for c in [origin, destination] {
            if !self.map.spec().contains(c) {
                return Err(Error::CellOutOfRange(c));
            }
            if self.map.is_occupied(c) {
                return Err(Error::Occupied(c));
            }
        }
        if origin == destination {
            return Err(Error::InvalidConfig("origin equals destination".into()));
        }
        self.state = Some(EpisodeState {
            destination,
            current: origin,
            energy_left: self.params.e_max,
            steps: 0,
            max_steps: self.limits.max_steps_for(origin, destination),
            history: [0.0; 3],
            energy_used: 0.0,
            time_used: 0.0,
            done: false,
        });
        Ok(self.observe())
    }

    /// Advance by one action. `best_cost` holds the historical best episode
    /// cost used for shaping; it is read and updated on success only.
    pub fn step(&mut self, action: Action, best_cost: &mut Option<f64>) -> Result<(StepOutcome, Observation)> {
        let state = self.state.as_ref().ok_or(Error::NoEpisode)?;
        if state.done {
            return Err(Error::EpisodeFinished);
        }
        let from = state.current;
        let destination = state.destination;
        let target = from
            .offset(action.delta())
            .filter(|&c| self.map.spec().contains(c));

        let (cause, move_cost) = match target {
            None => (Cause::OutOfBounds, None),
            Some(t) if self.map.is_occupied(t) => (Cause::Collision, None),
            Some(t) => {
                let cost = move_cost(from, t, self.field, &self.params)?;
                let state = self.state.as_mut().unwrap();
                state.current = t;
                state.energy_left -= cost.energy;
                state.energy_used += cost.energy;
                state.time_used += cost.time;
                state.history = [cost.energy, state.history[0], state.history[1]];
                state.steps += 1;
                let cause = if state.energy_left < 0.0 {
                    Cause::EnergyDepleted
                } else if state.steps >= state.max_steps {
                    Cause::TimeExceeded
                } else if t == destination {
                    Cause::Success
                } else {
                    Cause::Running
                };
                (cause, Some(cost))
            }
        };

        let state = self.state.as_mut().unwrap();
        if move_cost.is_none() {
            state.steps += 1;
        }
        let mut shaping = None;
        let reward = match cause {
            Cause::Running => {
                let cost = move_cost.expect("running implies an executed move");
                let spec = self.map.spec();
                let d_current = spec.center_distance(from, destination);
                let d_next = spec.center_distance(state.current, destination);
                self.weights.non_terminating(cost.energy, cost.time, d_next - d_current)
            }
            Cause::Success => {
                let cost = self.weights.episode_cost(state.energy_used, state.time_used);
                shaping = shaping_adjustment(cost, best_cost, self.weights.shaping_gain);
                self.weights.r_success + shaping.unwrap_or(0.0)
            }
            _ => self.weights.r_fail,
        };
        state.done = cause.is_terminal();
        let outcome = StepOutcome {
            reward,
            done: state.done,
            cause,
            cost_so_far: (state.energy_used, state.time_used),
            cell: state.current,
            move_cost,
            shaping,
        };
        Ok((outcome, self.observe()))
    }

    /// Observation of the current episode state.
    pub fn observe(&self) -> Observation {
        let state = self.state.as_ref().expect("observe requires reset");
        let spec = self.map.spec();
        let mut o = [0f32; OBS_LEN];
        for a in 0..3 {
            o[a] = (state.current.0[a] as f64 / spec.dims[a] as f64) as f32;
            o[3 + a] = (state.destination.0[a] as f64 / spec.dims[a] as f64) as f32;
        }
        let det = self
            .map
            .ray_distances(state.current)
            .expect("current cell is free and in range");
        let extent = spec.max_extent();
        for (i, d) in det.iter().enumerate() {
            o[6 + i] = (d / extent) as f32;
        }
        const STENCIL: [[i32; 3]; 7] = [
            [0, 0, 0],
            [1, 0, 0],
            [-1, 0, 0],
            [0, 1, 0],
            [0, -1, 0],
            [0, 0, 1],
            [0, 0, -1],
        ];
        for (k, d) in STENCIL.iter().enumerate() {
            let cell = state
                .current
                .offset(*d)
                .filter(|&c| spec.contains(c))
                .unwrap_or(state.current);
            let w = self.field.at(cell);
            for c in 0..3 {
                o[12 + 3 * k + c] = (w[c] as f64 / WIND_SCALE) as f32;
            }
        }
        o[33] = (state.energy_left / self.params.e_max).clamp(0.0, 1.0) as f32;
        for i in 0..3 {
            o[34 + i] = (state.history[i] / self.energy_ref) as f32;
        }
        Observation(o)
    }
}
