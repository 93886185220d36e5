//! Turning a match back into a geographic grid.

use alloc::vec::Vec;

use crate::dihedral::Dihedral;
use crate::error::{Error, Result};
use crate::geo::BackgroundFrame;
use crate::grid::{Cell, GridSpec};
use crate::matching::TransformedMatch;
use crate::raster::ActivityRaster;

/// Undoes the background scaling of `matched`, converts the offset to meters
/// and unprojects it to the grid's northwest corner.
///
/// `template_dims` are the dimensions of the template before the dihedral
/// element was applied (the data grid as published). One template pixel
/// covers `pixel_size_m / scale` meters of the background, so a grid with
/// nominal cells of `cell_size_m` gets scales `cell_size_m * scale /
/// pixel_size_m`.
pub fn anchor_from_match(
    matched: &TransformedMatch,
    frame: &BackgroundFrame,
    template_dims: (usize, usize),
    cell_size_m: f64,
) -> Result<GridSpec> {
    if !(matched.scale_x > 0.0 && matched.scale_y > 0.0) {
        return Err(Error::Provenance("match scales must be positive"));
    }
    let (tw, th) = matched
        .dihedral
        .output_dims(template_dims.0, template_dims.1);
    let scaled_w = libm::round(frame.width as f64 * matched.scale_x) as usize;
    let scaled_h = libm::round(frame.height as f64 * matched.scale_y) as usize;
    if matched.offset_x + tw > scaled_w || matched.offset_y + th > scaled_h {
        return Err(Error::Provenance(
            "template footprint exceeds the scaled background",
        ));
    }
    let (e0, s0) = frame.origin();
    let east = e0 + matched.offset_x as f64 / matched.scale_x * frame.pixel_size_m;
    let south = s0 + matched.offset_y as f64 / matched.scale_y * frame.pixel_size_m;
    let (anchor_lat, anchor_lon) = frame.projection.unproject(east, south);
    let spec = GridSpec {
        anchor_lat,
        anchor_lon,
        cell_size_m,
        width_cells: tw as u32,
        height_cells: th as u32,
        ref_lat: frame.projection.ref_lat,
        scale_x: cell_size_m * matched.scale_x / frame.pixel_size_m,
        scale_y: cell_size_m * matched.scale_y / frame.pixel_size_m,
    };
    spec.validate()?;
    Ok(spec)
}

/// Centroid `(lat, lon)` of cell `(x, y)`.
pub fn cell_to_geo(spec: &GridSpec, x: u32, y: u32) -> Result<(f64, f64)> {
    spec.cell_to_geo(x, y)
}

/// Where a reconstructed grid came from.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub matched: TransformedMatch,
    pub background: BackgroundFrame,
}

/// A located grid with its per-cell attributes.
///
/// Attributes stay in the data's own cell convention; `dihedral` maps a data
/// cell onto the geographic cell of `spec` that it covers.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoreferencedGrid {
    spec: GridSpec,
    dihedral: Dihedral,
    activity: ActivityRaster,
    users: Option<ActivityRaster>,
    homes: Option<ActivityRaster>,
    provenance: Option<Provenance>,
}

/// One geographic cell with its data-convention attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub geo: Cell,
    pub data: Cell,
    pub activity: u64,
    pub users: Option<u64>,
    pub homes: Option<u64>,
}

impl GeoreferencedGrid {
    pub fn new(spec: GridSpec, dihedral: Dihedral, activity: ActivityRaster) -> Result<Self> {
        spec.validate()?;
        let dims = dihedral.output_dims(activity.width(), activity.height());
        if dims != (spec.width_cells as usize, spec.height_cells as usize) {
            return Err(Error::Provenance("attribute dims do not match the grid"));
        }
        Ok(Self {
            spec,
            dihedral,
            activity,
            users: None,
            homes: None,
            provenance: None,
        })
    }

    fn check_same_dims(&self, other: &ActivityRaster) -> Result<()> {
        if other.width() != self.activity.width() || other.height() != self.activity.height() {
            return Err(Error::Provenance("attribute dims do not match the grid"));
        }
        Ok(())
    }

    pub fn with_users(mut self, users: ActivityRaster) -> Result<Self> {
        self.check_same_dims(&users)?;
        self.users = Some(users);
        Ok(self)
    }

    pub fn with_homes(mut self, homes: ActivityRaster) -> Result<Self> {
        self.check_same_dims(&homes)?;
        self.homes = Some(homes);
        Ok(self)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dihedral(&self) -> Dihedral {
        self.dihedral
    }

    pub fn activity(&self) -> &ActivityRaster {
        &self.activity
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn data_dims(&self) -> (usize, usize) {
        (self.activity.width(), self.activity.height())
    }

    /// Geographic cell covered by data cell `(x, y)`.
    pub fn data_to_geo(&self, data: Cell) -> Result<Cell> {
        let (w, h) = self.data_dims();
        if data.x as usize >= w || data.y as usize >= h {
            return Err(Error::CellOutOfRange {
                x: data.x,
                y: data.y,
                width: w as u32,
                height: h as u32,
            });
        }
        let (gx, gy) = self.dihedral.map_coords(data.x as usize, data.y as usize, w, h);
        Ok(Cell::new(gx as u32, gy as u32))
    }

    /// Data cell that lands on geographic cell `geo`.
    pub fn geo_to_data(&self, geo: Cell) -> Result<Cell> {
        if !self.spec.contains(geo) {
            return Err(Error::CellOutOfRange {
                x: geo.x,
                y: geo.y,
                width: self.spec.width_cells,
                height: self.spec.height_cells,
            });
        }
        let (x, y) = self.dihedral.inverse().map_coords(
            geo.x as usize,
            geo.y as usize,
            self.spec.width_cells as usize,
            self.spec.height_cells as usize,
        );
        Ok(Cell::new(x as u32, y as u32))
    }

    /// Centroid `(lat, lon)` of the geographic cell holding data cell `data`.
    pub fn data_cell_centroid(&self, data: Cell) -> Result<(f64, f64)> {
        let geo = self.data_to_geo(data)?;
        self.spec.cell_to_geo(geo.x, geo.y)
    }

    /// Geographic cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = GridCell> + '_ {
        let (w, h) = (self.spec.width_cells, self.spec.height_cells);
        (0..h).flat_map(move |gy| {
            (0..w).map(move |gx| {
                let geo = Cell::new(gx, gy);
                let data = self.geo_to_data(geo).expect("geo cell is in range");
                let (dx, dy) = (data.x as usize, data.y as usize);
                GridCell {
                    geo,
                    data,
                    activity: self.activity.get(dx, dy),
                    users: self.users.as_ref().map(|u| u.get(dx, dy)),
                    homes: self.homes.as_ref().map(|u| u.get(dx, dy)),
                }
            })
        })
    }

    pub fn cell_count(&self) -> usize {
        self.spec.width_cells as usize * self.spec.height_cells as usize
    }

    /// Corner rings for every cell, row-major.
    pub fn cell_rings(&self) -> Vec<[[f64; 2]; 5]> {
        self.cells()
            .map(|c| {
                self.spec
                    .cell_corners(c.geo.x, c.geo.y)
                    .expect("geo cell is in range")
            })
            .collect()
    }
}
