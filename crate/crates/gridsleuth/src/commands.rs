//! Subcommands. Each reads the run configuration, writes its artifacts into
//! the output directory and returns a JSON summary that is also saved.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Timelike;
use gridsleuth_core::grid::accumulate;
use gridsleuth_core::hex::{hex_aggregate, hex_edge_for_area, hex_rasterize, HexSpec, PlanarPing, PlanarRect};
use gridsleuth_core::analysis::identifiability_table;
use gridsleuth_core::{ActivityRaster, BinaryImage, CountMode, GridSpec, LandMask, PingRecord, Polygon, ProjectionRef};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{PingFormat, RunConfig};
use crate::error::{io_err, Error, Result};
use crate::formats::{read_raster_csv, read_real_raster_csv, write_grid_geojson, write_pgm, write_pgm_real, write_raster_csv};
use crate::ingest::{
    parse_census, parse_geo_pings, parse_grid_pings, parse_polygons, write_grid_pings, GeoPing, GridLayout,
    GridParseOptions, ParseReport,
};
use crate::pipeline::{self, Located};
use crate::synth::{self, SynthParams};

/// A loaded configuration and where its artifacts go.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub digest: String,
    pub out: PathBuf,
}

impl Context {
    /// `config` must already carry flag overrides; `base` is the directory
    /// relative input paths are resolved against.
    pub fn new(mut config: RunConfig, base: &Path) -> Result<Self> {
        let digest = config.digest();
        config.resolve_paths(base);
        config.check_inputs()?;
        let out = config.out_dir();
        fs::create_dir_all(&out).map_err(io_err(&out))?;
        Ok(Self { config, digest, out })
    }

    fn comment(&self) -> String {
        format!("config_digest={}", self.digest)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let file = File::create(&path).map_err(io_err(&path))?;
        Ok(BufWriter::new(file))
    }

    fn finish(&self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.path(name);
        let mut out = self.create(name)?;
        write(&mut out).map_err(|e| e.in_file(&path))?;
        out.flush().map_err(io_err(&path))
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<()> {
        self.finish(name, |out| {
            serde_json::to_writer_pretty(&mut *out, value)?;
            out.write_all(b"\n").map_err(io_err(name))
        })
    }

    fn write_pgm(&self, name: &str, image: &BinaryImage) -> Result<()> {
        let comment = self.comment();
        self.finish(name, |out| write_pgm(out, image, Some(&comment)))
    }

    fn write_raster(&self, stem: &str, raster: &ActivityRaster) -> Result<()> {
        self.finish(&format!("{stem}.csv"), |out| write_raster_csv(out, raster, Some(&self.digest)))?;
        let comment = self.comment();
        self.finish(&format!("{stem}.pgm"), |out| write_pgm_real(out, &raster.log_view(), Some(&comment)))
    }

    /// Saves `summary` (with the digest added) as `name` and returns it.
    fn summary(&self, name: &str, mut summary: Value) -> Result<Value> {
        summary["config_digest"] = json!(self.digest);
        self.write_json(name, &summary)?;
        Ok(summary)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    path.as_ref().ok_or_else(|| Error::Usage(format!("{key} is required")))
}

/// Pings on the configured grid, with ingest statistics.
#[derive(Debug, Clone, Default)]
pub struct LoadedPings {
    pub records: Vec<PingRecord>,
    pub rejected: u64,
    pub filtered: u64,
    /// Check-ins that fall outside the grid.
    pub outside: u64,
}

impl LoadedPings {
    pub fn users(&self) -> usize {
        let mut uids: Vec<u32> = self.records.iter().map(|p| p.uid).collect();
        uids.sort_unstable();
        uids.dedup();
        uids.len()
    }
}

/// The grid check-ins are discretized on.
pub fn checkin_grid(config: &RunConfig) -> Result<GridSpec> {
    let g = &config.grid;
    let [lat, lon] = g
        .anchor
        .ok_or_else(|| Error::Usage("grid.anchor is required for geo pings".into()))?;
    let spec = GridSpec::new(lat, lon, g.cell_size_m, g.width_cells, g.height_cells, g.ref_lat.unwrap_or(lat));
    spec.validate()?;
    Ok(spec)
}

/// Puts check-ins on `spec`. Users are numbered in sorted id order, days
/// count from the earliest check-in date and slots are half hours (UTC).
pub fn discretize_checkins(pings: &[GeoPing], spec: &GridSpec) -> (Vec<PingRecord>, u64) {
    let mut ids: Vec<&str> = pings.iter().map(|p| p.uid.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let Some(first) = pings.iter().map(|p| p.timestamp.date_naive()).min() else {
        return (Vec::new(), 0);
    };
    let mut outside = 0;
    let mut records = Vec::with_capacity(pings.len());
    for p in pings {
        let Some(cell) = spec.discretize(p.lat, p.lon) else {
            outside += 1;
            continue;
        };
        let t = p.timestamp;
        records.push(PingRecord {
            uid: ids.binary_search(&p.uid.as_str()).expect("id collected") as u32,
            day: (t.date_naive() - first).num_days() as u32,
            slot: (t.hour() * 2 + t.minute() / 30) as u8,
            x: cell.x,
            y: cell.y,
        });
    }
    (records, outside)
}

pub fn load_pings(config: &RunConfig) -> Result<LoadedPings> {
    let path = required(&config.inputs.pings, "inputs.pings")?;
    let input = open(path)?;
    let i = &config.inputs;
    let g = &config.grid;
    let loaded = match i.ping_format {
        PingFormat::Grid => {
            let opts = GridParseOptions {
                mode: i.parse_mode,
                width_cells: g.width_cells,
                height_cells: g.height_cells,
                one_based: g.one_based,
                days: g.days.map(|[a, b]| a..=b),
            };
            let r = parse_grid_pings(input, &i.grid_layout, &opts).map_err(|e| e.in_file(path))?;
            LoadedPings {
                records: r.records,
                rejected: r.rejected,
                filtered: r.filtered,
                outside: 0,
            }
        }
        PingFormat::Geo => {
            let spec = checkin_grid(config)?;
            let ParseReport {
                records, rejected, filtered,
            } = parse_geo_pings(input, &i.geo_layout, i.parse_mode).map_err(|e| e.in_file(path))?;
            let (records, outside) = discretize_checkins(&records, &spec);
            LoadedPings {
                records,
                rejected,
                filtered,
                outside,
            }
        }
    };
    if loaded.rejected > 0 {
        log::warn!("{}: skipped {} malformed rows", path.display(), loaded.rejected);
    }
    if loaded.records.is_empty() {
        log::warn!("{}: no pings on the grid", path.display());
    }
    Ok(loaded)
}

fn grid_dims(config: &RunConfig) -> (u32, u32) {
    (config.grid.width_cells, config.grid.height_cells)
}

/// The binary template: from `inputs.raster` when given (count or share
/// values), otherwise from the pings. Returns the (aggregated) count raster
/// when one exists.
fn build_template(config: &RunConfig) -> Result<(Option<ActivityRaster>, BinaryImage)> {
    let t = &config.threshold;
    let dims = (config.grid.width_cells as usize, config.grid.height_cells as usize);
    if let Some(path) = &config.inputs.raster {
        if let Some(share) = t.share {
            if t.aggregate > 1 {
                return Err(Error::Usage("threshold.aggregate applies to count rasters only".into()));
            }
            let raster = read_real_raster_csv(open(path)?, Some(dims)).map_err(|e| e.in_file(path))?;
            return Ok((None, raster.threshold(share)));
        }
        let raster = read_raster_csv(open(path)?, Some(dims)).map_err(|e| e.in_file(path))?;
        let raster = if t.aggregate > 1 { raster.block_aggregate(t.aggregate)? } else { raster };
        let image = match t.value {
            Some(v) => raster.threshold(v),
            None => raster.threshold_nonzero(),
        };
        return Ok((Some(raster), image));
    }
    if t.share.is_some() {
        return Err(Error::Usage("threshold.share needs inputs.raster".into()));
    }
    let pings = load_pings(config)?;
    let (raster, image) = pipeline::template(&pings.records, grid_dims(config), t.count_mode, t.aggregate, t.value)?;
    Ok((Some(raster), image))
}

fn load_land(config: &RunConfig) -> Result<Vec<Polygon>> {
    let path = required(&config.inputs.land, "inputs.land")?;
    let named = parse_polygons(open(path)?, None).map_err(|e| e.in_file(path))?;
    Ok(named.into_iter().map(|n| n.polygon).collect())
}

fn build_mask(config: &RunConfig) -> Result<LandMask> {
    let bbox = config.bbox()?;
    let projection = match config.background.ref_lat {
        Some(r) => Some(ProjectionRef::new(bbox.max_lat, bbox.min_lon, r)?),
        None => None,
    };
    pipeline::land_mask(&load_land(config)?, &bbox, config.pixel_size_m(), projection)
}

/// Contents of `located.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatedFile {
    pub config_digest: String,
    /// Block size the template was built with.
    pub aggregate: usize,
    #[serde(flatten)]
    pub located: Located,
}

fn load_located(config: &RunConfig) -> Result<LocatedFile> {
    let path = required(&config.inputs.located, "inputs.located")?;
    let file: LocatedFile = serde_json::from_reader(open(path)?).map_err(|e| Error::from(e).in_file(path))?;
    file.located.spec.validate()?;
    Ok(file)
}

fn provenance(ctx: &Context, located: &Located) -> Result<Value> {
    Ok(json!({
        "config_digest": ctx.digest,
        "match": serde_json::to_value(located.matched)?,
        "background": serde_json::to_value(located.frame)?,
    }))
}

fn aggregated(raster: ActivityRaster, k: usize) -> Result<ActivityRaster> {
    if k > 1 {
        Ok(raster.block_aggregate(k)?)
    } else {
        Ok(raster)
    }
}

pub fn rasterize(ctx: &Context) -> Result<Value> {
    let pings = load_pings(&ctx.config)?;
    let (w, h) = grid_dims(&ctx.config);
    let records = accumulate(&pings.records, w as usize, h as usize, CountMode::Records);
    let users = accumulate(&pings.records, w as usize, h as usize, CountMode::UniqueUsers);
    ctx.write_raster("activity_records", &records)?;
    ctx.write_raster("activity_users", &users)?;
    ctx.summary(
        "rasterize.json",
        json!({
            "width": w,
            "height": h,
            "records": records.total(),
            "users": pings.users(),
            "rejected_rows": pings.rejected,
            "filtered_rows": pings.filtered,
            "outside_grid": pings.outside,
        }),
    )
}

pub fn threshold(ctx: &Context) -> Result<Value> {
    let (raster, image) = build_template(&ctx.config)?;
    if let Some(r) = &raster {
        ctx.write_raster("template_source", r)?;
    }
    ctx.write_pgm("template.pgm", &image)?;
    let t = &ctx.config.threshold;
    ctx.summary(
        "threshold.json",
        json!({
            "width": image.width(),
            "height": image.height(),
            "active": image.count_ones(),
            "value": t.value,
            "share": t.share,
            "aggregate": t.aggregate,
        }),
    )
}

pub fn rescale(ctx: &Context, factor: usize) -> Result<Value> {
    let pings = load_pings(&ctx.config)?;
    let (w, h) = grid_dims(&ctx.config);
    let mut totals = json!({ "factor": factor });
    for (stem, mode) in [("records", CountMode::Records), ("users", CountMode::UniqueUsers)] {
        let raster = accumulate(&pings.records, w as usize, h as usize, mode).block_aggregate(factor)?;
        ctx.write_raster(&format!("rescaled_{stem}"), &raster)?;
        totals["width"] = json!(raster.width());
        totals["height"] = json!(raster.height());
        totals[stem] = json!(raster.total());
    }
    ctx.summary("rescale.json", totals)
}

pub fn landmask(ctx: &Context) -> Result<Value> {
    let mask = build_mask(&ctx.config)?;
    ctx.write_pgm("background.pgm", &mask.image)?;
    ctx.summary(
        "landmask.json",
        json!({
            "frame": serde_json::to_value(mask.frame())?,
            "land_pixels": mask.image.count_ones(),
        }),
    )
}

pub fn locate(ctx: &Context) -> Result<Value> {
    let c = &ctx.config;
    let (raster, template) = build_template(c)?;
    let mask = build_mask(c)?;
    let search = c.search.search_config()?;
    let cell = c.grid.cell_size_m * c.threshold.aggregate as f64;
    let located = pipeline::locate(&template, &mask, &search, cell)?;
    let file = LocatedFile {
        config_digest: ctx.digest.clone(),
        aggregate: c.threshold.aggregate,
        located: located.clone(),
    };
    ctx.write_json("located.json", &serde_json::to_value(&file)?)?;
    let (tw, th) = located.template_dims;
    let activity = raster.unwrap_or_else(|| {
        let bits = template.bits().iter().map(|&b| b as u64).collect();
        ActivityRaster::from_values(tw, th, bits, CountMode::Records).expect("template dims")
    });
    let grid = located.grid(activity)?;
    let prov = provenance(ctx, &located)?;
    ctx.finish("grid.geojson", |out| write_grid_geojson(out, &grid, &prov))?;
    ctx.summary(
        "locate.json",
        json!({
            "match": serde_json::to_value(located.matched)?,
            "spec": serde_json::to_value(located.spec)?,
            "dihedral": located.matched.dihedral.name(),
        }),
    )
}

pub fn georef(ctx: &Context) -> Result<Value> {
    let c = &ctx.config;
    let file = load_located(c)?;
    let pings = load_pings(c)?;
    let (w, h) = grid_dims(c);
    let k = file.aggregate;
    let records = aggregated(accumulate(&pings.records, w as usize, h as usize, CountMode::Records), k)?;
    let users = aggregated(accumulate(&pings.records, w as usize, h as usize, CountMode::UniqueUsers), k)?;
    let grid = file.located.grid(records)?.with_users(users)?;
    let prov = provenance(ctx, &file.located)?;
    ctx.finish("grid.geojson", |out| write_grid_geojson(out, &grid, &prov))?;
    ctx.summary(
        "georef.json",
        json!({
            "cells": grid.cell_count(),
            "spec": serde_json::to_value(grid.spec())?,
            "dihedral": grid.dihedral().name(),
        }),
    )
}

pub fn validate(ctx: &Context) -> Result<Value> {
    let c = &ctx.config;
    if c.inputs.regions.is_empty() {
        return Err(Error::Usage("inputs.regions is empty".into()));
    }
    let file = load_located(c)?;
    let pings = load_pings(c)?;
    let k = file.aggregate.max(1) as u32;
    let mut homes = pipeline::homes(&pings.records, &c.analysis.night_window());
    ctx.finish("homes.csv", |out| {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["uid", "x", "y", "night_pings"])?;
        for h in &homes {
            w.serialize((h.uid, h.cell.x, h.cell.y, h.night_pings))?;
        }
        writeln!(out, "# {}", ctx.comment()).map_err(io_err("homes.csv"))?;
        out.write_all(&w.into_inner().map_err(|e| Error::Internal(e.to_string()))?)
            .map_err(io_err("homes.csv"))
    })?;
    for h in &mut homes {
        h.cell.x /= k;
        h.cell.y /= k;
    }
    let (w, h) = grid_dims(c);
    let records = aggregated(accumulate(&pings.records, w as usize, h as usize, CountMode::Records), k as usize)?;
    let home_counts = pipeline::home_raster(&homes, (records.width(), records.height()))?;
    let grid = file.located.grid(records)?.with_homes(home_counts)?;
    let mut levels = Vec::new();
    for level in &c.inputs.regions {
        let regions =
            parse_polygons(open(&level.polygons)?, Some(&level.name_property)).map_err(|e| e.in_file(&level.polygons))?;
        let census = parse_census(open(&level.census)?).map_err(|e| e.in_file(&level.census))?;
        let report = pipeline::validate_level(&level.level, &homes, &grid, &regions, &census, c.analysis.coverage_min)?;
        for name in report.missing_census.iter().chain(&report.missing_regions) {
            log::warn!("{}: region '{name}' has no counterpart", level.level);
        }
        ctx.finish(&format!("population_{}.csv", level.level), |out| {
            writeln!(out, "# {}", ctx.comment()).map_err(io_err("population"))?;
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["region", "estimated", "census"])?;
            for r in &report.rows {
                w.serialize((&r.region, r.estimated, r.census))?;
            }
            w.flush().map_err(io_err("population"))
        })?;
        levels.push(report);
    }
    ctx.summary(
        "validate.json",
        json!({
            "homes": homes.len(),
            "levels": serde_json::to_value(&levels)?,
        }),
    )
}

pub fn identifiability(ctx: &Context) -> Result<Value> {
    let c = &ctx.config;
    let pings = load_pings(c)?;
    let table = identifiability_table(&pings.records, &c.analysis.factors, c.analysis.top_k)?;
    ctx.finish("identifiability.csv", |out| {
        writeln!(out, "# {}", ctx.comment()).map_err(io_err("identifiability.csv"))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["factor", "distinguishable", "users"])?;
        for (j, f) in table.factors.iter().enumerate() {
            for d in 1..=table.k {
                w.serialize((f, d, table.get(d, j)))?;
            }
        }
        w.flush().map_err(io_err("identifiability.csv"))
    })?;
    ctx.summary(
        "identifiability.json",
        json!({
            "top_k": table.k,
            "factors": table.factors,
            "counts": table.counts,
            "included_users": table.included_users(),
            "excluded_users": table.excluded_users,
        }),
    )
}

/// Ping positions in meters east and south of the grid anchor: projected
/// check-ins, or cell centers for gridded pings.
fn planar_pings(config: &RunConfig) -> Result<(Vec<PlanarPing>, PlanarRect)> {
    let g = &config.grid;
    let rect = PlanarRect {
        min_x: 0.0,
        min_y: 0.0,
        max_x: g.width_cells as f64 * g.cell_size_m,
        max_y: g.height_cells as f64 * g.cell_size_m,
    };
    let planar = match config.inputs.ping_format {
        PingFormat::Grid => load_pings(config)?
            .records
            .iter()
            .map(|p| PlanarPing {
                uid: p.uid,
                x: (p.x as f64 + 0.5) * g.cell_size_m,
                y: (p.y as f64 + 0.5) * g.cell_size_m,
            })
            .collect(),
        PingFormat::Geo => {
            let spec = checkin_grid(config)?;
            let projection = spec.projection()?;
            let path = required(&config.inputs.pings, "inputs.pings")?;
            let report = parse_geo_pings(open(path)?, &config.inputs.geo_layout, config.inputs.parse_mode)
                .map_err(|e| e.in_file(path))?;
            let mut ids: Vec<&str> = report.records.iter().map(|p| p.uid.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            report
                .records
                .iter()
                .map(|p| {
                    let (x, y) = projection.project(p.lat, p.lon);
                    PlanarPing {
                        uid: ids.binary_search(&p.uid.as_str()).expect("id collected") as u32,
                        x,
                        y,
                    }
                })
                .filter(|p| p.x >= rect.min_x && p.x < rect.max_x && p.y >= rect.min_y && p.y < rect.max_y)
                .collect()
        }
    };
    Ok((planar, rect))
}

pub fn hex(ctx: &Context) -> Result<Value> {
    let c = &ctx.config;
    let (pings, rect) = planar_pings(c)?;
    let spec = HexSpec::new(hex_edge_for_area(c.hex.area_km2)?)?;
    let counts = hex_aggregate(&pings, &spec, c.threshold.count_mode);
    ctx.finish("hex_counts.csv", |out| {
        writeln!(out, "# {}", ctx.comment()).map_err(io_err("hex_counts.csv"))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["q", "r", "count"])?;
        for (h, n) in &counts {
            w.serialize((h.q, h.r, n))?;
        }
        w.flush().map_err(io_err("hex_counts.csv"))
    })?;
    let image = hex_rasterize(&counts, &spec, &rect, c.hex.pixel_size_m, c.hex.min_count)?;
    ctx.write_pgm("hex.pgm", &image)?;
    ctx.summary(
        "hex.json",
        json!({
            "edge_m": spec.edge_m,
            "hexagons": counts.len(),
            "pings": pings.len(),
            "active_pixels": image.count_ones(),
            "width": image.width(),
            "height": image.height(),
        }),
    )
}

fn polygon_features<'a>(polys: impl Iterator<Item = (&'a Polygon, Option<&'a str>)>) -> Value {
    let features: Vec<Value> = polys
        .map(|(p, name)| {
            let coords: Vec<Vec<&Vec<[f64; 2]>>> = p
                .parts
                .iter()
                .map(|part| std::iter::once(&part.exterior).chain(&part.holes).collect())
                .collect();
            json!({
                "type": "Feature",
                "geometry": {"type": "MultiPolygon", "coordinates": coords},
                "properties": match name { Some(n) => json!({"name": n}), None => json!({}) },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

/// Writes a synthetic fixture and a configuration that runs on it.
pub fn synth(ctx: &Context, params: &SynthParams) -> Result<Value> {
    let f = synth::generate(params)?;
    let layout = GridLayout::default();
    ctx.finish("pings.csv", |out| write_grid_pings(out, &f.pings, &layout))?;
    ctx.write_json("land.geojson", &polygon_features(f.land.iter().map(|p| (p, None))))?;
    ctx.write_json(
        "regions.geojson",
        &polygon_features(f.regions.iter().map(|r| (&r.polygon, Some(r.name.as_str())))),
    )?;
    ctx.finish("census.csv", |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["region", "population"])?;
        for r in &f.census {
            w.serialize((&r.region_name, r.population))?;
        }
        w.flush().map_err(io_err("census.csv"))
    })?;
    let b = f.bbox;
    let run: Value = json!({
        "inputs": {
            "pings": "pings.csv",
            "land": "land.geojson",
            "located": "run/located.json",
            "regions": [{"level": "region", "polygons": "regions.geojson", "census": "census.csv"}],
        },
        "grid": {"width_cells": params.grid_cells, "height_cells": params.grid_cells, "cell_size_m": params.cell_size_m},
        "threshold": {"value": 2},
        "background": {
            "bbox": [b.min_lon, b.min_lat, b.max_lon, b.max_lat],
            "ref_lat": f.projection.ref_lat,
        },
        "out": "run",
        "seed": params.seed,
    });
    ctx.write_json("config.json", &run)?;
    let mut truth: BTreeMap<&str, Value> = BTreeMap::new();
    truth.insert("spec", serde_json::to_value(f.truth)?);
    truth.insert("published_as", json!(f.published_as.name()));
    truth.insert("expected_dihedral", json!(f.expected_dihedral().name()));
    truth.insert("params", serde_json::to_value(params)?);
    ctx.summary("truth.json", serde_json::to_value(truth)?)
}
