//! The square observation grid and accumulation of pings into rasters.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geo::ProjectionRef;
use crate::raster::{ActivityRaster, CountMode};

/// Number of 30-minute slots in a day.
pub const SLOTS_PER_DAY: u8 = 48;

/// A grid cell. Ordered by row first (`y`, then `x`), which is the tie-break
/// used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One observation of one user, already on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PingRecord {
    pub uid: u32,
    pub day: u32,
    /// 30-minute slot of the day, `0..48`.
    pub slot: u8,
    pub x: u32,
    pub y: u32,
}

impl PingRecord {
    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }
}

/// Geographic placement of a grid. Cell `(0, 0)` is the northwest corner;
/// `x` grows east and `y` grows south.
///
/// A cell spans `cell_size_m / scale_x` meters east and
/// `cell_size_m / scale_y` meters south in the local projection. Scales
/// other than 1 describe a grid drawn in a projection that is stretched
/// against this one.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    /// Latitude of the outer (northwest) corner of cell `(0, 0)`.
    pub anchor_lat: f64,
    pub anchor_lon: f64,
    pub cell_size_m: f64,
    pub width_cells: u32,
    pub height_cells: u32,
    /// Latitude for the projection's cosine scale.
    pub ref_lat: f64,
    #[cfg_attr(feature = "serde", serde(default = "unit"))]
    pub scale_x: f64,
    #[cfg_attr(feature = "serde", serde(default = "unit"))]
    pub scale_y: f64,
}

#[cfg(feature = "serde")]
fn unit() -> f64 {
    1.0
}

impl GridSpec {
    /// Unstretched grid.
    pub fn new(anchor_lat: f64, anchor_lon: f64, cell_size_m: f64, width_cells: u32, height_cells: u32, ref_lat: f64) -> Self {
        Self {
            anchor_lat,
            anchor_lon,
            cell_size_m,
            width_cells,
            height_cells,
            ref_lat,
            scale_x: 1.0,
            scale_y: 1.0,
        }
    }

    pub fn with_scales(mut self, scale_x: f64, scale_y: f64) -> Self {
        self.scale_x = scale_x;
        self.scale_y = scale_y;
        self
    }

    /// Cell extent `(east, south)` in local meters.
    pub fn cell_extent_m(&self) -> (f64, f64) {
        (self.cell_size_m / self.scale_x, self.cell_size_m / self.scale_y)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size_m > 0.0) || !self.cell_size_m.is_finite() {
            return Err(Error::InvalidParameter("cell size must be positive"));
        }
        let finite_positive = |v: f64| v > 0.0 && v.is_finite();
        if !finite_positive(self.scale_x) || !finite_positive(self.scale_y) {
            return Err(Error::InvalidParameter("grid scales must be positive"));
        }
        if self.width_cells == 0 || self.height_cells == 0 {
            return Err(Error::InvalidParameter("grid dimensions must be positive"));
        }
        self.projection().map(|_| ())
    }

    /// Projection with its origin at the anchor.
    pub fn projection(&self) -> Result<ProjectionRef> {
        ProjectionRef::new(self.anchor_lat, self.anchor_lon, self.ref_lat)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.width_cells && cell.y < self.height_cells
    }

    /// Cell containing `(lat, lon)`, or `None` outside the grid.
    pub fn discretize(&self, lat: f64, lon: f64) -> Option<Cell> {
        let projection = self.projection().ok()?;
        self.discretize_projected(projection.project(lat, lon))
    }

    /// Same as [`discretize`](Self::discretize) for a point already projected
    /// relative to the anchor.
    pub fn discretize_projected(&self, (east_m, south_m): (f64, f64)) -> Option<Cell> {
        let (cw, ch) = self.cell_extent_m();
        let x = libm::floor(east_m / cw);
        let y = libm::floor(south_m / ch);
        if x < 0.0 || y < 0.0 || x >= self.width_cells as f64 || y >= self.height_cells as f64 {
            return None;
        }
        Some(Cell::new(x as u32, y as u32))
    }

    /// Centroid `(lat, lon)` of a cell.
    pub fn cell_to_geo(&self, x: u32, y: u32) -> Result<(f64, f64)> {
        self.check_cell(x, y)?;
        let projection = self.projection()?;
        let (cw, ch) = self.cell_extent_m();
        Ok(projection.unproject((x as f64 + 0.5) * cw, (y as f64 + 0.5) * ch))
    }

    /// Corner ring `[lon, lat]` of a cell, counterclockwise on the map and closed.
    pub fn cell_corners(&self, x: u32, y: u32) -> Result<[[f64; 2]; 5]> {
        self.check_cell(x, y)?;
        let projection = self.projection()?;
        let (cw, ch) = self.cell_extent_m();
        let (e0, s0) = (x as f64 * cw, y as f64 * ch);
        let (e1, s1) = (e0 + cw, s0 + ch);
        let ll = |e: f64, so: f64| {
            let (lat, lon) = projection.unproject(e, so);
            [lon, lat]
        };
        // southwest, southeast, northeast, northwest
        let sw = ll(e0, s1);
        Ok([sw, ll(e1, s1), ll(e1, s0), ll(e0, s0), sw])
    }

    fn check_cell(&self, x: u32, y: u32) -> Result<()> {
        if self.contains(Cell::new(x, y)) {
            Ok(())
        } else {
            Err(Error::CellOutOfRange {
                x,
                y,
                width: self.width_cells,
                height: self.height_cells,
            })
        }
    }
}

/// Counts pings per cell of a `width`x`height` grid. Pings outside the grid
/// are skipped.
pub fn accumulate(pings: &[PingRecord], width: usize, height: usize, mode: CountMode) -> ActivityRaster {
    let mut raster = ActivityRaster::zeros(width, height, mode);
    let in_bounds = |p: &&PingRecord| (p.x as usize) < width && (p.y as usize) < height;
    match mode {
        CountMode::Records => {
            let values = raster.values_mut();
            for p in pings.iter().filter(in_bounds) {
                values[p.y as usize * width + p.x as usize] += 1;
            }
        }
        CountMode::UniqueUsers => {
            let mut pairs: Vec<u64> = pings
                .iter()
                .filter(in_bounds)
                .map(|p| ((p.y as u64 * width as u64 + p.x as u64) << 32) | p.uid as u64)
                .collect();
            pairs.sort_unstable();
            pairs.dedup();
            let values = raster.values_mut();
            for pair in pairs {
                values[(pair >> 32) as usize] += 1;
            }
        }
    }
    raster
}
