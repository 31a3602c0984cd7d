//! Energy- and time-aware eVTOL path planning through urban wind fields.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: grid geometry and world/cell coordinate conversion.
//! - [`windfield`]: procedural wind generation, trilinear sampling and the
//!   binary field file format.
//! - [`environment`]: city occupancy, the energy/time cost model and the
//!   episodic POMDP with reward shaping.
//! - [`ppo`]: a from-scratch actor-critic PPO trainer.
//! - [`curriculum`]: area partitioning, origin-destination sampling, stage
//!   progression and strategy profiles.
//! - [`oracle`]: Dijkstra and brute-force baselines over the shared cost model.
//! - [`stats`], [`experiment`]: percent differences, unpaired t-tests and the
//!   comparison table harness.

pub mod curriculum;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod oracle;
pub mod ppo;
pub mod scenario;
pub mod stats;
pub mod trace;
pub mod windfield;

pub use error::{Error, Result};
pub use grid::{Cell, GridSpec};
