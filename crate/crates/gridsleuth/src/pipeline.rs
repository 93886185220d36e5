//! Stages shared by the subcommands and the end-to-end tests.

use gridsleuth_core::analysis::{detect_homes, estimate_population, pearson, HomeAssignment, NamedPolygon, NightWindow};
use gridsleuth_core::geo::{rasterize_polygons, BackgroundFrame};
use gridsleuth_core::georef::{anchor_from_match, Provenance};
use gridsleuth_core::grid::accumulate;
use gridsleuth_core::matching::search_transforms;
use gridsleuth_core::{
    ActivityRaster, BinaryImage, CountMode, GeoBBox, GeoreferencedGrid, GridSpec, LandMask, PingRecord, Polygon,
    ProjectionRef, SearchConfig, TransformedMatch,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{region_key, CensusRow};

/// Activity raster, optionally block-summed, and its thresholded template.
pub fn template(
    pings: &[PingRecord],
    dims: (u32, u32),
    mode: CountMode,
    aggregate: usize,
    threshold: Option<u64>,
) -> Result<(ActivityRaster, BinaryImage)> {
    let raster = accumulate(pings, dims.0 as usize, dims.1 as usize, mode);
    let raster = if aggregate > 1 {
        raster.block_aggregate(aggregate)?
    } else {
        raster
    };
    let image = match threshold {
        Some(t) => raster.threshold(t),
        None => raster.threshold_nonzero(),
    };
    Ok((raster, image))
}

pub fn land_mask(land: &[Polygon], bbox: &GeoBBox, pixel_size_m: f64, projection: Option<ProjectionRef>) -> Result<LandMask> {
    let projection = match projection {
        Some(p) => p,
        None => bbox.default_projection()?,
    };
    Ok(rasterize_polygons(land, bbox, pixel_size_m, &projection)?)
}

/// Outcome of locating a template on a background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Located {
    pub matched: TransformedMatch,
    pub frame: BackgroundFrame,
    pub spec: GridSpec,
    /// Template dimensions as published (before any dihedral element).
    pub template_dims: (usize, usize),
}

impl Located {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            matched: self.matched,
            background: self.frame,
        }
    }

    /// The located grid carrying `activity` (data convention).
    pub fn grid(&self, activity: ActivityRaster) -> Result<GeoreferencedGrid> {
        Ok(GeoreferencedGrid::new(self.spec, self.matched.dihedral, activity)?.with_provenance(self.provenance()))
    }
}

pub fn locate(template: &BinaryImage, mask: &LandMask, search: &SearchConfig, cell_size_m: f64) -> Result<Located> {
    let matched = search_transforms(&mask.image, template, search)?;
    let frame = mask.frame();
    let spec = anchor_from_match(&matched, &frame, template.dims(), cell_size_m)?;
    Ok(Located {
        matched,
        frame,
        spec,
        template_dims: template.dims(),
    })
}

/// Distance in meters, east and south, from the located anchor to `truth`.
pub fn anchor_error_m(located: &GridSpec, truth: &GridSpec) -> (f64, f64) {
    let p = truth.projection().expect("valid spec");
    let (e, s) = p.project(located.anchor_lat, located.anchor_lon);
    (e.abs(), s.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub region: String,
    pub estimated: u64,
    pub census: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: String,
    pub rows: Vec<RegionRow>,
    pub pearson: Option<f64>,
    /// Covered regions without a census row.
    pub missing_census: Vec<String>,
    /// Census rows without a covered region.
    pub missing_regions: Vec<String>,
    pub overlapping_homes: u64,
    pub unassigned_homes: u64,
}

pub fn homes(pings: &[PingRecord], window: &NightWindow) -> Vec<HomeAssignment> {
    detect_homes(pings, window)
}

/// Compares home counts per region with the census, joining on normalized
/// region names.
pub fn validate_level(
    level: &str,
    homes: &[HomeAssignment],
    grid: &GeoreferencedGrid,
    regions: &[NamedPolygon],
    census: &[CensusRow],
    coverage_min: f64,
) -> Result<LevelReport> {
    let estimate = estimate_population(homes, grid, regions, coverage_min)?;
    if estimate.overlapping_homes > 0 {
        log::warn!(
            "{level}: {} homes fall in more than one region; the first region wins",
            estimate.overlapping_homes
        );
    }
    let mut rows = Vec::new();
    let mut missing_census = Vec::new();
    for r in &estimate.regions {
        let key = region_key(&r.name);
        match census.iter().find(|c| c.region_name == key) {
            Some(c) => rows.push(RegionRow {
                region: key,
                estimated: r.homes,
                census: c.population,
            }),
            None => missing_census.push(key),
        }
    }
    let missing_regions = census
        .iter()
        .filter(|c| !estimate.regions.iter().any(|r| region_key(&r.name) == c.region_name))
        .map(|c| c.region_name.clone())
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.estimated as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.census as f64).collect();
    let pearson = match pearson(&xs, &ys) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("{level}: no correlation: {e}");
            None
        }
    };
    Ok(LevelReport {
        level: level.to_string(),
        rows,
        pearson,
        missing_census,
        missing_regions,
        overlapping_homes: estimate.overlapping_homes,
        unassigned_homes: estimate.unassigned_homes,
    })
}

/// Homes per data cell, for the grid's attribute table.
pub fn home_raster(homes: &[HomeAssignment], dims: (usize, usize)) -> Result<ActivityRaster> {
    let mut values = vec![0u64; dims.0 * dims.1];
    for h in homes {
        let (x, y) = (h.cell.x as usize, h.cell.y as usize);
        if x >= dims.0 || y >= dims.1 {
            return Err(Error::Data(format!("home cell ({x}, {y}) outside the grid")));
        }
        values[y * dims.0 + x] += 1;
    }
    Ok(ActivityRaster::from_values(dims.0, dims.1, values, CountMode::UniqueUsers)?)
}
