//! File formats: PGM images, raster CSV, grid GeoJSON.

use std::io::{BufRead, Read, Write};

use gridsleuth_core::geo::EARTH_RADIUS_M;
use gridsleuth_core::{ActivityRaster, BinaryImage, GeoreferencedGrid, GridSpec, RealRaster};
use serde_json::{json, Value};

use crate::error::{Error, Result};

fn io(e: std::io::Error) -> Error {
    Error::Data(e.to_string())
}

fn pgm_header<W: Write>(out: &mut W, width: usize, height: usize, comment: Option<&str>) -> Result<()> {
    writeln!(out, "P5").map_err(io)?;
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(out, "# {line}").map_err(io)?;
        }
    }
    write!(out, "{width} {height}\n255\n").map_err(io)
}

/// Binary P5 with active pixels black (0) and the rest white (255).
pub fn write_pgm<W: Write>(mut out: W, image: &BinaryImage, comment: Option<&str>) -> Result<()> {
    pgm_header(&mut out, image.width(), image.height(), comment)?;
    let bytes: Vec<u8> = image.bits().iter().map(|&b| if b { 0 } else { 255 }).collect();
    out.write_all(&bytes).map_err(io)
}

/// Min-max stretch to 0..=255 with the largest value black. A constant
/// raster comes out white.
pub fn write_pgm_real<W: Write>(mut out: W, raster: &RealRaster, comment: Option<&str>) -> Result<()> {
    pgm_header(&mut out, raster.width(), raster.height(), comment)?;
    let (lo, hi) = raster
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    let bytes: Vec<u8> = raster
        .values()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                255 - ((v - lo) / span * 255.0).round() as u8
            } else {
                255
            }
        })
        .collect();
    out.write_all(&bytes).map_err(io)
}

/// Reads a P5 (or P2) image; pixels darker than mid-gray are active.
pub fn read_pgm<R: Read>(mut input: R) -> Result<BinaryImage> {
    let mut data = Vec::new();
    input.read_to_end(&mut data).map_err(io)?;
    let bad = |m: &str| Error::Data(format!("invalid PGM: {m}"));
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < data.len() && data[pos] == b'#' {
            while pos < data.len() && data[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&data[start..pos]).map_err(|_| bad("header"))?.to_string());
    }
    let number = |s: &str| s.parse::<usize>().map_err(|_| bad("header field"));
    let (w, h, max) = (number(&tokens[1])?, number(&tokens[2])?, number(&tokens[3])?);
    if max == 0 || max > 255 {
        return Err(bad("maxval must be in 1..=255"));
    }
    let mid = (max as f64) / 2.0;
    let pixels: Vec<u8> = match tokens[0].as_str() {
        "P5" => {
            let body = data.get(pos + 1..).ok_or_else(|| bad("missing pixels"))?;
            if body.len() < w * h {
                return Err(bad("missing pixels"));
            }
            body[..w * h].to_vec()
        }
        "P2" => std::str::from_utf8(&data[pos..])
            .map_err(|_| bad("pixels"))?
            .split_ascii_whitespace()
            .take(w * h)
            .map(|t| t.parse::<u8>().map_err(|_| bad("pixel")))
            .collect::<Result<_>>()?,
        other => return Err(bad(&format!("unsupported magic {other}"))),
    };
    if pixels.len() != w * h {
        return Err(bad("missing pixels"));
    }
    Ok(BinaryImage::from_bits(w, h, pixels.iter().map(|&p| (p as f64) < mid).collect())?)
}

fn digest_line<W: Write>(out: &mut W, digest: Option<&str>) -> Result<()> {
    if let Some(d) = digest {
        writeln!(out, "# config_digest={d}").map_err(io)?;
    }
    Ok(())
}

/// `x,y,value` rows for every cell, row-major.
pub fn write_raster_csv<W: Write>(mut out: W, raster: &ActivityRaster, digest: Option<&str>) -> Result<()> {
    digest_line(&mut out, digest)?;
    writeln!(out, "x,y,value").map_err(io)?;
    for y in 0..raster.height() {
        for x in 0..raster.width() {
            writeln!(out, "{x},{y},{}", raster.get(x, y)).map_err(io)?;
        }
    }
    Ok(())
}

/// Reads `x,y,value` rows; cells not listed are zero. The raster spans the
/// largest listed index unless `dims` is given.
pub fn read_real_raster_csv<R: BufRead>(input: R, dims: Option<(usize, usize)>) -> Result<RealRaster> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut cells = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(Error::parse(line, format!("expected 3 fields, found {}", row.len())));
        }
        let x: usize = row[0].parse().map_err(|_| Error::parse(line, "invalid x"))?;
        let y: usize = row[1].parse().map_err(|_| Error::parse(line, "invalid y"))?;
        let v: f64 = row[2].parse().map_err(|_| Error::parse(line, "invalid value"))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::parse(line, format!("negative or non-finite value {v}")));
        }
        cells.push((x, y, v, line));
    }
    let (w, h) = dims.unwrap_or_else(|| {
        cells
            .iter()
            .fold((0, 0), |(w, h), &(x, y, _, _)| (w.max(x + 1), h.max(y + 1)))
    });
    let mut values = vec![0.0; w * h];
    for (x, y, v, line) in cells {
        if x >= w || y >= h {
            return Err(Error::parse(line, format!("cell ({x}, {y}) outside {w}x{h}")));
        }
        values[y * w + x] = v;
    }
    Ok(RealRaster::from_values(w.max(1), h.max(1), if w * h == 0 { vec![0.0] } else { values })?)
}

/// Reads `x,y,value` rows as integer counts.
pub fn read_raster_csv<R: BufRead>(input: R, dims: Option<(usize, usize)>) -> Result<ActivityRaster> {
    let real = read_real_raster_csv(input, dims)?;
    let values = real
        .values()
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(Error::Data(format!("non-integer count {v}")))
            }
        })
        .collect::<Result<_>>()?;
    Ok(ActivityRaster::from_values(
        real.width(),
        real.height(),
        values,
        gridsleuth_core::CountMode::Records,
    )?)
}

/// Streams the grid as a FeatureCollection: one Polygon per geographic
/// cell in row-major order. `x`/`y` are the data's own cell indices and
/// `geo_x`/`geo_y` the located ones. `provenance` (an object) is written as
/// a foreign member of the collection, with the grid specification added
/// under `grid`.
pub fn write_grid_geojson<W: Write>(mut out: W, grid: &GeoreferencedGrid, provenance: &Value) -> Result<()> {
    let mut provenance = provenance.clone();
    if !provenance.is_object() {
        provenance = json!({});
    }
    provenance["grid"] = serde_json::to_value(grid.spec())?;
    provenance["dihedral"] = json!(grid.dihedral().name());
    write!(out, "{{\"type\":\"FeatureCollection\",\"provenance\":").map_err(io)?;
    serde_json::to_writer(&mut out, &provenance)?;
    write!(out, ",\"features\":[").map_err(io)?;
    let spec = grid.spec();
    for (i, cell) in grid.cells().enumerate() {
        if i > 0 {
            out.write_all(b",\n").map_err(io)?;
        }
        let ring = spec.cell_corners(cell.geo.x, cell.geo.y)?;
        let mut props = json!({
            "x": cell.data.x,
            "y": cell.data.y,
            "geo_x": cell.geo.x,
            "geo_y": cell.geo.y,
            "activity": cell.activity,
        });
        if let Some(u) = cell.users {
            props["users"] = json!(u);
        }
        if let Some(h) = cell.homes {
            props["homes"] = json!(h);
        }
        let feature = json!({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": props,
        });
        serde_json::to_writer(&mut out, &feature)?;
    }
    writeln!(out, "]}}").map_err(io)
}

/// Recomputes the grid specification from an emitted grid. The anchor
/// comes from the northwest corner of geographic cell (0, 0), the
/// dimensions from the largest cell indices and the axis scales from that
/// cell's extents; the nominal cell size and the reference latitude, which
/// the geometry alone cannot separate from the scales, come from the
/// provenance block.
pub fn spec_from_geojson(doc: &Value) -> Result<GridSpec> {
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Data("not a FeatureCollection".into()))?;
    let stored = &doc["provenance"]["grid"];
    let number = |key: &str| {
        stored[key]
            .as_f64()
            .ok_or_else(|| Error::Data(format!("provenance.grid.{key} missing")))
    };
    let (cell_size_m, ref_lat) = (number("cell_size_m")?, number("ref_lat")?);
    let index = |f: &Value, key: &str| f["properties"][key].as_u64();
    let mut origin = None;
    let (mut w, mut h) = (0u64, 0u64);
    for f in features {
        let (Some(gx), Some(gy)) = (index(f, "geo_x"), index(f, "geo_y")) else {
            return Err(Error::Data("feature without geo_x/geo_y".into()));
        };
        w = w.max(gx + 1);
        h = h.max(gy + 1);
        if gx == 0 && gy == 0 {
            origin = Some(f);
        }
    }
    let origin = origin.ok_or_else(|| Error::Data("no cell (0, 0)".into()))?;
    let ring: Vec<[f64; 2]> = serde_json::from_value(origin["geometry"]["coordinates"][0].clone())?;
    if ring.len() != 5 {
        return Err(Error::Data("cell ring must have 5 points".into()));
    }
    let (sw, se, nw) = (ring[0], ring[1], ring[3]);
    let meters_per_degree = std::f64::consts::PI / 180.0 * EARTH_RADIUS_M;
    let south_m = (nw[1] - sw[1]) * meters_per_degree;
    let east_m = (se[0] - sw[0]) * meters_per_degree * ref_lat.to_radians().cos();
    let spec = GridSpec::new(nw[1], nw[0], cell_size_m, w as u32, h as u32, ref_lat)
        .with_scales(cell_size_m / east_m, cell_size_m / south_m);
    spec.validate()?;
    Ok(spec)
}
