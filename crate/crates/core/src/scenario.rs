//! Scenario files: grid, buildings, aircraft constants, reward weights,
//! episode limits, wind-generation parameters and evaluation OD pairs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::{AircraftParams, CellBox, CityMap, EpisodeLimits, RewardWeights};
use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec};
use crate::ppo::TrainerConfig;
use crate::windfield::{generate, Direction, WindConfig, WindField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: GridSpec,
    #[serde(default)]
    pub buildings: Vec<CellBox>,
    #[serde(default)]
    pub aircraft: AircraftParams,
    #[serde(default)]
    pub rewards: RewardWeights,
    #[serde(default)]
    pub limits: EpisodeLimits,
    /// Shear and wake settings; direction and speed are set per run.
    #[serde(default)]
    pub wind: WindConfig,
    /// Evaluation pairs, indexed from 1 in reports.
    #[serde(default)]
    pub od_pairs: Vec<(Cell, Cell)>,
    #[serde(default)]
    pub training: TrainerConfig,
}

impl Scenario {
    /// 12×12×4 cubic cells of 2 m with four box buildings, three evaluation
    /// pairs that must route around them, and trainer settings tuned for
    /// this grid.
    pub fn desk() -> Self {
        let b = |min: [usize; 3], max: [usize; 3]| CellBox {
            min,
            max,
        };
        Scenario {
            grid: GridSpec {
                dims: [12, 12, 4],
                mins: [0.0; 3],
                cell: [2.0, 2.0, 2.0],
            },
            buildings: vec![
                b([3, 2, 0], [4, 4, 2]),
                b([7, 1, 0], [8, 3, 3]),
                b([6, 7, 0], [7, 9, 1]),
                b([2, 8, 0], [3, 9, 3]),
            ],
            aircraft: AircraftParams::default(),
            rewards: RewardWeights::default(),
            limits: EpisodeLimits::default(),
            wind: WindConfig::default(),
            od_pairs: vec![
                (Cell([0, 3, 0]), Cell([11, 2, 1])),
                (Cell([1, 11, 1]), Cell([10, 5, 0])),
                (Cell([5, 0, 2]), Cell([4, 11, 0])),
            ],
            training: TrainerConfig {
                gamma: 0.98,
                rollout_len: 1024,
                minibatch: 128,
                epochs: 8,
                actor_lr: 3e-4,
                critic_lr: 1e-3,
                ..TrainerConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.aircraft.validate()?;
        self.wind.validate()?;
        self.training.validate()?;
        let map = self.map()?;
        for &(o, d) in &self.od_pairs {
            for c in [o, d] {
                if !self.grid.contains(c) {
                    return Err(Error::CellOutOfRange(c));
                }
                if map.is_occupied(c) {
                    return Err(Error::Occupied(c));
                }
            }
            if o == d {
                return Err(Error::InvalidConfig(format!("OD pair with origin = destination {:?}", o.0)));
            }
        }
        Ok(())
    }

    pub fn map(&self) -> Result<CityMap> {
        CityMap::with_buildings(self.grid.clone(), &self.buildings)
    }

    /// Wind field for one inflow direction and speed, buildings masked.
    pub fn wind_field(&self, map: &CityMap, direction: Direction, speed: f64) -> Result<WindField> {
        let config = WindConfig {
            direction_deg: direction,
            speed,
            ..self.wind.clone()
        };
        generate(&config, &self.grid, map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
