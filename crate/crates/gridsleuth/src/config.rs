//! Run configuration: one JSON document, with command-line flags on top.

use std::fs;
use std::path::{Path, PathBuf};

use gridsleuth_core::analysis::{NightWindow, DEFAULT_FACTORS};
use gridsleuth_core::matching::SearchConfig;
use gridsleuth_core::{CountMode, Dihedral, GeoBBox, Method};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};
use crate::ingest::{GeoLayout, GridLayout, ParseMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PingFormat {
    /// Cell indices with day and slot columns.
    #[default]
    Grid,
    /// Timestamped latitude/longitude check-ins.
    Geo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionLevel {
    pub level: String,
    pub polygons: PathBuf,
    pub census: PathBuf,
    pub name_property: String,
}

impl Default for RegionLevel {
    fn default() -> Self {
        Self {
            level: "region".into(),
            polygons: PathBuf::new(),
            census: PathBuf::new(),
            name_property: "name".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub pings: Option<PathBuf>,
    pub ping_format: PingFormat,
    pub grid_layout: GridLayout,
    pub geo_layout: GeoLayout,
    pub parse_mode: ParseMode,
    /// `x,y,value` raster used instead of pings (counts or shares).
    pub raster: Option<PathBuf>,
    /// Land or land-use polygons for the background.
    pub land: Option<PathBuf>,
    pub regions: Vec<RegionLevel>,
    /// Result of `locate`, read by `georef` and `validate`.
    pub located: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub width_cells: u32,
    pub height_cells: u32,
    pub cell_size_m: f64,
    pub one_based: bool,
    /// Inclusive day range to keep.
    pub days: Option<[u32; 2]>,
    /// Northwest corner `(lat, lon)` for discretizing check-ins.
    pub anchor: Option<[f64; 2]>,
    pub ref_lat: Option<f64>,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            width_cells: 200,
            height_cells: 200,
            cell_size_m: 500.0,
            one_based: false,
            days: None,
            anchor: None,
            ref_lat: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdParams {
    /// Minimum count for an active cell; absent means any activity.
    pub value: Option<u64>,
    /// Minimum value for real-valued share rasters.
    pub share: Option<f64>,
    /// Block size summed before thresholding.
    pub aggregate: usize,
    pub count_mode: CountMode,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            value: None,
            share: None,
            aggregate: 1,
            count_mode: CountMode::Records,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundParams {
    /// `[min_lon, min_lat, max_lon, max_lat]`.
    pub bbox: Option<[f64; 4]>,
    /// Defaults to the (aggregated) cell size.
    pub pixel_size_m: Option<f64>,
    pub ref_lat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    pub scale_min: f64,
    pub scale_max: f64,
    pub scale_step: f64,
    pub refine_step: Option<f64>,
    pub refine_radius: f64,
    /// Absent means all eight.
    pub dihedrals: Option<Vec<Dihedral>>,
    pub method: Method,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            scale_min: 0.85,
            scale_max: 1.15,
            scale_step: 0.05,
            refine_step: None,
            refine_radius: 0.05,
            dihedrals: None,
            method: Method::Hamming,
        }
    }
}

impl SearchParams {
    pub fn search_config(&self) -> Result<SearchConfig> {
        let scales = SearchConfig::scale_grid(self.scale_min, self.scale_max, self.scale_step);
        if scales.is_empty() {
            return Err(Error::Usage("search scale grid is empty".into()));
        }
        let config = SearchConfig {
            scales,
            dihedrals: self.dihedrals.clone().unwrap_or_else(|| Dihedral::ALL.to_vec()),
            method: self.method,
            refine: None,
        };
        Ok(match self.refine_step {
            Some(step) => config.with_refinement(step, self.refine_radius),
            None => config,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisParams {
    /// First and last night slot; the window wraps past midnight.
    pub night: [u8; 2],
    pub coverage_min: f64,
    pub factors: Vec<u32>,
    pub top_k: usize,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            night: [42, 15],
            coverage_min: 0.3,
            factors: DEFAULT_FACTORS.to_vec(),
            top_k: 4,
        }
    }
}

impl AnalysisParams {
    pub fn night_window(&self) -> NightWindow {
        NightWindow::wrapping(self.night[0], self.night[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HexParams {
    pub area_km2: f64,
    pub min_count: u64,
    pub pixel_size_m: f64,
}

impl Default for HexParams {
    fn default() -> Self {
        Self {
            area_km2: 0.1053,
            min_count: 1,
            pixel_size_m: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub grid: GridParams,
    pub threshold: ThresholdParams,
    pub background: BackgroundParams,
    pub search: SearchParams,
    pub analysis: AnalysisParams,
    pub hex: HexParams,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() && !p.as_os_str().is_empty() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Reads a config file as written; relative paths are left for
    /// [`resolve_paths`](Self::resolve_paths) so the digest does not depend
    /// on where the file lives.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }

    /// Makes relative paths relative to `base` (the config's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let i = &mut self.inputs;
        for p in [&mut i.pings, &mut i.raster, &mut i.land, &mut i.located, &mut self.out]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        for r in &mut i.regions {
            resolve(base, &mut r.polygons);
            resolve(base, &mut r.census);
        }
    }

    /// Fails on referenced input files that do not exist. `located` is
    /// produced by the pipeline itself and checked when read.
    pub fn check_inputs(&self) -> Result<()> {
        let i = &self.inputs;
        let mut paths: Vec<&PathBuf> = [&i.pings, &i.raster, &i.land].into_iter().flatten().collect();
        for r in &i.regions {
            paths.push(&r.polygons);
            paths.push(&r.census);
        }
        for p in paths {
            if !p.exists() {
                return Err(Error::Usage(format!("input {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 over everything that determines the artifacts, which leaves
    /// out the output directory and the worker count.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        canonical.threads = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn bbox(&self) -> Result<GeoBBox> {
        let [a, b, c, d] = self
            .background
            .bbox
            .ok_or_else(|| Error::Usage("background.bbox is required".into()))?;
        Ok(GeoBBox::new(a, b, c, d)?)
    }

    /// Background pixel size: explicit, or one (aggregated) cell.
    pub fn pixel_size_m(&self) -> f64 {
        self.background
            .pixel_size_m
            .unwrap_or(self.grid.cell_size_m * self.threshold.aggregate as f64)
    }
}
