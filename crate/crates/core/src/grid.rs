//! Regular grid geometry shared by the wind field, the city map and the
//! environment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer cell coordinates `(x, y, z)`.
///
/// Ordering is lexicographic on `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell(pub [usize; 3]);

impl Cell {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Cell([x, y, z])
    }

    /// Cell displaced by `delta`, or `None` when a coordinate would go negative.
    pub fn offset(self, delta: [i32; 3]) -> Option<Cell> {
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let v = self.0[axis] as i64 + delta[axis] as i64;
            if v < 0 {
                return None;
            }
            out[axis] = v as usize;
        }
        Some(Cell(out))
    }

    pub fn manhattan(self, other: Cell) -> usize {
        (0..3).map(|a| self.0[a].abs_diff(other.0[a])).sum()
    }
}

impl From<[usize; 3]> for Cell {
    fn from(v: [usize; 3]) -> Self {
        Cell(v)
    }
}

/// Cell counts, domain minimum corner and cell side lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub mins: [f64; 3],
    pub cell: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], mins: [f64; 3], cell: [f64; 3]) -> Result<Self> {
        let spec = GridSpec { dims, mins, cell };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidGrid(format!("dims {:?} must all be >= 1", self.dims)));
        }
        if self.cell.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "cell sides {:?} must be finite and positive",
                self.cell
            )));
        }
        if self.mins.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidGrid(format!("mins {:?} must be finite", self.mins)));
        }
        if self.dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(Error::InvalidGrid("cell count overflows".into()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn contains(&self, cell: Cell) -> bool {
        (0..3).all(|a| cell.0[a] < self.dims[a])
    }

    /// Linear index in x-fastest row-major order.
    pub fn index(&self, cell: Cell) -> usize {
        let [x, y, z] = cell.0;
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        Cell([x, rest % self.dims[1], rest / self.dims[1]])
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).map(move |i| self.cell_at(i))
    }

    /// Domain maximum corner.
    pub fn maxs(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.mins[a] + self.dims[a] as f64 * self.cell[a])
    }

    /// Side lengths of the whole domain.
    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| self.dims[a] as f64 * self.cell[a])
    }

    pub fn max_extent(&self) -> f64 {
        self.extent().into_iter().fold(0.0, f64::max)
    }

    /// Euclidean length of the domain diagonal.
    pub fn diagonal(&self) -> f64 {
        self.extent().iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn in_domain(&self, p: [f64; 3]) -> bool {
        let maxs = self.maxs();
        (0..3).all(|a| p[a] >= self.mins[a] && p[a] <= maxs[a])
    }

    /// Cell containing world position `p`.
    ///
    /// Each axis maps to `floor((p - min) / side)`; the upper domain face
    /// belongs to the last cell.
    pub fn cell_of(&self, p: [f64; 3]) -> Result<Cell> {
        if !self.in_domain(p) {
            return Err(Error::OutOfDomain(p));
        }
        Ok(Cell(std::array::from_fn(|a| {
            let i = ((p[a] - self.mins[a]) / self.cell[a]).floor() as usize;
            i.min(self.dims[a] - 1)
        })))
    }

    /// World coordinates of the centre of `cell`: `(c + 0.5) * side + min`.
    pub fn center_of(&self, cell: Cell) -> Result<[f64; 3]> {
        if !self.contains(cell) {
            return Err(Error::CellOutOfRange(cell));
        }
        Ok(self.center_unchecked(cell))
    }

    pub(crate) fn center_unchecked(&self, cell: Cell) -> [f64; 3] {
        std::array::from_fn(|a| (cell.0[a] as f64 + 0.5) * self.cell[a] + self.mins[a])
    }

    /// Distance between two cell centres.
    pub fn center_distance(&self, a: Cell, b: Cell) -> f64 {
        let pa = self.center_unchecked(a);
        let pb = self.center_unchecked(b);
        (0..3).map(|i| (pa[i] - pb[i]).powi(2)).sum::<f64>().sqrt()
    }
}
