//! Stage training support: area partitioning, origin-destination sampling by
//! distance class, near → mid → far progression and strategy profiles.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{CellBox, CityMap, RewardWeights, ShapingMetric};
use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec};

pub const AREA_SPLITS: [usize; 3] = [3, 3, 2];
pub const AREA_COUNT: usize = 18;
pub const OD_RETRIES: usize = 10_000;

/// The 18 boxes of a 3 × 3 × 2 split, indexed x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaPartition {
    boxes: Vec<CellBox>,
}

impl AreaPartition {
    pub fn boxes(&self) -> &[CellBox] {
        &self.boxes
    }

    pub fn area_of(&self, cell: Cell) -> Option<usize> {
        self.boxes.iter().position(|b| b.contains(cell))
    }
}

/// Near-equal integer splits along each axis, remainder going to the last box.
pub fn partition(spec: &GridSpec) -> Result<AreaPartition> {
    if (0..3).any(|a| spec.dims[a] < AREA_SPLITS[a]) {
        return Err(Error::InvalidGrid(format!(
            "grid {:?} too small for a {:?} split",
            spec.dims, AREA_SPLITS
        )));
    }
    let ranges: [Vec<(usize, usize)>; 3] = std::array::from_fn(|a| {
        let k = AREA_SPLITS[a];
        let base = spec.dims[a] / k;
        (0..k)
            .map(|i| {
                let lo = i * base;
                let hi = if i + 1 == k { spec.dims[a] - 1 } else { lo + base - 1 };
                (lo, hi)
            })
            .collect()
    });
    let mut boxes = Vec::with_capacity(AREA_COUNT);
    for z in &ranges[2] {
        for y in &ranges[1] {
            for x in &ranges[0] {
                boxes.push(CellBox {
                    min: [x.0, y.0, z.0],
                    max: [x.1, y.1, z.1],
                });
            }
        }
    }
    Ok(AreaPartition { boxes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceClass {
    Near,
    Mid,
    Far,
}

impl DistanceClass {
    pub const ALL: [DistanceClass; 3] = [DistanceClass::Near, DistanceClass::Mid, DistanceClass::Far];

    /// Distance band `[lo, hi)` in metres for a domain of diagonal `diagonal`;
    /// the far band is closed at the diagonal.
    pub fn band(self, diagonal: f64) -> (f64, f64) {
        match self {
            DistanceClass::Near => (0.0, diagonal / 3.0),
            DistanceClass::Mid => (diagonal / 3.0, 2.0 * diagonal / 3.0),
            DistanceClass::Far => (2.0 * diagonal / 3.0, f64::INFINITY),
        }
    }

    pub fn classify(distance: f64, diagonal: f64) -> DistanceClass {
        if distance < diagonal / 3.0 {
            DistanceClass::Near
        } else if distance < 2.0 * diagonal / 3.0 {
            DistanceClass::Mid
        } else {
            DistanceClass::Far
        }
    }

    pub fn next(self) -> DistanceClass {
        match self {
            DistanceClass::Near => DistanceClass::Mid,
            _ => DistanceClass::Far,
        }
    }
}

/// Free cells grouped by area, reused across samples.
#[derive(Debug, Clone)]
pub struct OdSampler {
    spec: GridSpec,
    areas: Vec<Vec<Cell>>,
    exclude: Vec<(Cell, Cell)>,
}

impl OdSampler {
    pub fn new(partition: &AreaPartition, map: &CityMap) -> Self {
        let areas = partition
            .boxes()
            .iter()
            .map(|b| b.cells().filter(|&c| !map.is_occupied(c)).collect::<Vec<_>>())
            .filter(|cells: &Vec<Cell>| !cells.is_empty())
            .collect();
        OdSampler {
            spec: map.spec().clone(),
            areas,
            exclude: Vec::new(),
        }
    }

    /// Pairs never returned by [`OdSampler::sample`] (held-out evaluation ODs).
    pub fn with_excluded(mut self, pairs: impl IntoIterator<Item = (Cell, Cell)>) -> Self {
        self.exclude.extend(pairs);
        self
    }

    pub fn sample<R: Rng + ?Sized>(&self, class: DistanceClass, rng: &mut R) -> Result<(Cell, Cell)> {
        if self.areas.is_empty() {
            return Err(Error::SamplingExhausted(0));
        }
        let (lo, hi) = class.band(self.spec.diagonal());
        for _ in 0..OD_RETRIES {
            let a = &self.areas[rng.gen_range(0..self.areas.len())];
            let b = &self.areas[rng.gen_range(0..self.areas.len())];
            let origin = a[rng.gen_range(0..a.len())];
            let destination = b[rng.gen_range(0..b.len())];
            let d = self.spec.center_distance(origin, destination);
            if d > 0.0 && d >= lo && d < hi && !self.exclude.contains(&(origin, destination)) {
                return Ok((origin, destination));
            }
        }
        Err(Error::SamplingExhausted(OD_RETRIES))
    }
}

/// Rejection-sample one origin-destination pair of the given class.
pub fn sample_od<R: Rng + ?Sized>(
    partition: &AreaPartition,
    class: DistanceClass,
    map: &CityMap,
    rng: &mut R,
) -> Result<(Cell, Cell)> {
    OdSampler::new(partition, map).sample(class, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageConfig {
    pub window: usize,
    pub threshold: f64,
}

impl Default for StageConfig {
    fn default() -> Self {
        StageConfig {
            window: 100,
            threshold: 0.8,
        }
    }
}

/// Current curriculum stage and its rolling success history.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    class: DistanceClass,
    history: VecDeque<bool>,
    config: StageConfig,
}

impl StageState {
    pub fn new(config: StageConfig) -> Self {
        StageState {
            class: DistanceClass::Near,
            history: VecDeque::with_capacity(config.window),
            config,
        }
    }

    pub fn class(&self) -> DistanceClass {
        self.class
    }

    pub fn success_rate(&self) -> f64 {
        if self.history.is_empty() {
            return 0.0;
        }
        self.history.iter().filter(|s| **s).count() as f64 / self.history.len() as f64
    }

    /// Record an episode outcome; returns `true` when the stage advanced.
    pub fn record_and_advance(&mut self, success: bool) -> bool {
        if self.history.len() == self.config.window {
            self.history.pop_front();
        }
        self.history.push_back(success);
        if self.class != DistanceClass::Far
            && self.history.len() == self.config.window
            && self.success_rate() >= self.config.threshold
        {
            self.class = self.class.next();
            self.history.clear();
            return true;
        }
        false
    }
}

impl Default for StageState {
    fn default() -> Self {
        StageState::new(StageConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Energy,
    Time,
    All,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Energy, Strategy::Time, Strategy::All];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Energy => "energy",
            Strategy::Time => "time",
            Strategy::All => "all",
        }
    }

    /// Reward weights of the profile, derived from `base`.
    pub fn weights(self, base: &RewardWeights) -> RewardWeights {
        let mut w = base.clone();
        match self {
            Strategy::Energy => {
                w.alpha2 = 0.0;
                w.shaping_metric = ShapingMetric::Energy;
            }
            Strategy::Time => {
                w.alpha1 = 0.0;
                w.shaping_metric = ShapingMetric::Time;
            }
            Strategy::All => w.shaping_metric = ShapingMetric::Weighted,
        }
        w
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy" => Ok(Strategy::Energy),
            "time" => Ok(Strategy::Time),
            "all" | "balanced" => Ok(Strategy::All),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
