//! Procedural 3D wind fields, trilinear sampling and the `AWND` field file.
//!
//! The generator stands in for a CFD solver: a uniform inflow rotated to one
//! of the four compass directions, an optional log-law vertical profile and an
//! exponential wake deficit in the lee of buildings. Externally computed
//! fields enter through [`WindField::load`].

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::CityMap;
use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec};

pub const FIELD_MAGIC: [u8; 4] = *b"AWND";
pub const FIELD_VERSION: u32 = 1;
/// magic + version + 3 × u32 dims + 3 × f64 mins + 3 × f64 cell sides.
pub const FIELD_HEADER_LEN: usize = 4 + 4 + 3 * 4 + 3 * 8 + 3 * 8;
const RECORD_LEN: usize = 12;

/// Inflow direction, measured counter-clockwise from the positive X axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Direction {
    D0,
    D90,
    D180,
    D270,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::D0, Direction::D90, Direction::D180, Direction::D270];

    pub fn degrees(self) -> u32 {
        match self {
            Direction::D0 => 0,
            Direction::D90 => 90,
            Direction::D180 => 180,
            Direction::D270 => 270,
        }
    }

    pub fn from_degrees(deg: u32) -> Result<Self> {
        match deg {
            0 => Ok(Direction::D0),
            90 => Ok(Direction::D90),
            180 => Ok(Direction::D180),
            270 => Ok(Direction::D270),
            other => Err(Error::InvalidConfig(format!(
                "wind direction {other} must be one of 0, 90, 180, 270"
            ))),
        }
    }

    /// Unit vector in the XY plane, exact for all four directions.
    pub fn unit(self) -> [i32; 2] {
        match self {
            Direction::D0 => [1, 0],
            Direction::D90 => [0, 1],
            Direction::D180 => [-1, 0],
            Direction::D270 => [0, -1],
        }
    }

    pub fn rotated_90(self) -> Self {
        match self {
            Direction::D0 => Direction::D90,
            Direction::D90 => Direction::D180,
            Direction::D180 => Direction::D270,
            Direction::D270 => Direction::D0,
        }
    }
}

impl TryFrom<u32> for Direction {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        Direction::from_degrees(v)
    }
}

impl From<Direction> for u32 {
    fn from(d: Direction) -> u32 {
        d.degrees()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindConfig {
    pub direction_deg: Direction,
    /// Inflow magnitude (m/s).
    pub speed: f64,
    /// Log-law roughness length z0 (m); 0 disables the vertical profile.
    pub shear_roughness: f64,
    /// Fractional velocity reduction immediately behind a building.
    pub wake_deficit: f64,
    /// E-folding length of wake recovery, in cells.
    pub wake_decay: f64,
}

impl Default for WindConfig {
    fn default() -> Self {
        WindConfig {
            direction_deg: Direction::D0,
            speed: 4.0,
            shear_roughness: 0.0,
            wake_deficit: 0.0,
            wake_decay: 2.0,
        }
    }
}

impl WindConfig {
    pub fn uniform(direction: Direction, speed: f64) -> Self {
        WindConfig {
            direction_deg: direction,
            speed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed >= 0.0) || !self.speed.is_finite() {
            return Err(Error::InvalidConfig(format!("wind speed {} must be >= 0", self.speed)));
        }
        if !(0.0..=1.0).contains(&self.wake_deficit) {
            return Err(Error::InvalidConfig(format!(
                "wake_deficit {} must lie in [0, 1]",
                self.wake_deficit
            )));
        }
        if !(self.wake_decay > 0.0) || !self.wake_decay.is_finite() {
            return Err(Error::InvalidConfig(format!("wake_decay {} must be > 0", self.wake_decay)));
        }
        if !(self.shear_roughness >= 0.0) || !self.shear_roughness.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "shear_roughness {} must be >= 0",
                self.shear_roughness
            )));
        }
        Ok(())
    }
}

/// Regular grid of per-cell wind vectors `(u, v, w)` in m/s, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct WindField {
    spec: GridSpec,
    vectors: Vec<[f32; 3]>,
}

impl WindField {
    pub fn new(spec: GridSpec, vectors: Vec<[f32; 3]>) -> Result<Self> {
        spec.validate()?;
        if vectors.len() != spec.cell_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} vectors for {} cells",
                vectors.len(),
                spec.cell_count()
            )));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("wind vector component".into()));
        }
        Ok(WindField { spec, vectors })
    }

    /// Same vector in every cell.
    pub fn uniform(spec: GridSpec, wind: [f32; 3]) -> Result<Self> {
        let n = spec.cell_count();
        WindField::new(spec, vec![wind; n])
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn vectors(&self) -> &[[f32; 3]] {
        &self.vectors
    }

    pub fn at(&self, cell: Cell) -> [f32; 3] {
        self.vectors[self.spec.index(cell)]
    }

    /// Zero the wind inside every occupied cell of `map`.
    pub fn mask_buildings(&mut self, map: &CityMap) -> Result<()> {
        if map.spec().dims != self.spec.dims {
            return Err(Error::DimensionMismatch(format!(
                "field dims {:?} vs map dims {:?}",
                self.spec.dims,
                map.spec().dims
            )));
        }
        for (v, &occ) in self.vectors.iter_mut().zip(map.occupancy()) {
            if occ {
                *v = [0.0; 3];
            }
        }
        Ok(())
    }

    /// Trilinear interpolation between cell centres. Points in the outer
    /// half-cell margin clamp to the boundary cell plane.
    pub fn sample(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        if !self.spec.in_domain(p) {
            return Err(Error::OutOfDomain(p));
        }
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut t = [0.0f64; 3];
        for a in 0..3 {
            let n = self.spec.dims[a];
            let f = ((p[a] - self.spec.mins[a]) / self.spec.cell[a] - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (f.floor() as usize).min(n.saturating_sub(2));
            lo[a] = i0;
            hi[a] = (i0 + 1).min(n - 1);
            t[a] = if hi[a] == i0 { 0.0 } else { f - i0 as f64 };
        }
        let mut out = [0.0f64; 3];
        for corner in 0..8 {
            let mut w = 1.0;
            let mut c = [0usize; 3];
            for a in 0..3 {
                if corner >> a & 1 == 1 {
                    w *= t[a];
                    c[a] = hi[a];
                } else {
                    w *= 1.0 - t[a];
                    c[a] = lo[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let v = self.at(Cell(c));
            for k in 0..3 {
                out[k] += w * v[k] as f64;
            }
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(FIELD_HEADER_LEN + RECORD_LEN * self.vectors.len());
        buf.extend_from_slice(&FIELD_MAGIC);
        buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
        for d in self.spec.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in self.spec.mins.iter().chain(&self.spec.cell) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.vectors.iter().flatten() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FIELD_HEADER_LEN {
            return Err(Error::Malformed(format!(
                "field header needs {FIELD_HEADER_LEN} bytes, found {}",
                bytes.len()
            )));
        }
        if bytes[0..4] != FIELD_MAGIC {
            return Err(Error::Malformed("bad field magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != FIELD_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FIELD_VERSION,
            });
        }
        let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
        let mins = [f64_at(20), f64_at(28), f64_at(36)];
        let cell = [f64_at(44), f64_at(52), f64_at(60)];
        let spec = GridSpec::new(dims, mins, cell).map_err(|e| Error::Malformed(e.to_string()))?;
        let payload = &bytes[FIELD_HEADER_LEN..];
        let expected = spec.cell_count() * RECORD_LEN;
        if payload.len() != expected {
            return Err(Error::PayloadLength {
                expected,
                found: payload.len(),
            });
        }
        let vectors = payload
            .chunks_exact(RECORD_LEN)
            .map(|r| std::array::from_fn(|k| f32::from_le_bytes(r[4 * k..4 * k + 4].try_into().unwrap())))
            .collect();
        WindField::new(spec, vectors)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Malformed(e.to_string()))?;
        WindField::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        WindField::from_bytes(&bytes)
    }
}

/// Build a field for `map` from `config`.
pub fn generate(config: &WindConfig, spec: &GridSpec, map: &CityMap) -> Result<WindField> {
    config.validate()?;
    spec.validate()?;
    if map.spec() != spec {
        return Err(Error::DimensionMismatch(format!(
            "wind grid {:?} does not match map grid {:?}",
            spec,
            map.spec()
        )));
    }
    let [dx, dy] = config.direction_deg.unit();
    let height = spec.extent()[2];
    let z0 = config.shear_roughness;
    let mut vectors = Vec::with_capacity(spec.cell_count());
    for cell in spec.cells() {
        if map.is_occupied(cell) {
            vectors.push([0.0f32; 3]);
            continue;
        }
        let mut magnitude = config.speed;
        if z0 > 0.0 {
            let z = (cell.0[2] as f64 + 0.5) * spec.cell[2];
            magnitude *= if z <= z0 || height <= z0 {
                0.0
            } else {
                (z / z0).ln() / (height / z0).ln()
            };
        }
        if config.wake_deficit > 0.0 {
            if let Some(d) = upstream_building_distance(map, cell, [-dx, -dy]) {
                magnitude *= 1.0 - config.wake_deficit * (-(d as f64) / config.wake_decay).exp();
            }
        }
        vectors.push([(magnitude * dx as f64) as f32, (magnitude * dy as f64) as f32, 0.0]);
    }
    WindField::new(spec.clone(), vectors)
}

/// Number of cells from `cell` to the nearest occupied cell walking along
/// `step` in the XY plane.
fn upstream_building_distance(map: &CityMap, cell: Cell, step: [i32; 2]) -> Option<usize> {
    let mut cur = cell;
    let mut d = 0;
    loop {
        cur = cur.offset([step[0], step[1], 0])?;
        if !map.spec().contains(cur) {
            return None;
        }
        d += 1;
        if map.is_occupied(cur) {
            return Some(d);
        }
    }
}
