//! Readers for ping tables, census tables and region polygons.

use std::io::{Read, Write};
use std::ops::RangeInclusive;

use chrono::{DateTime, NaiveDateTime, Utc};
use csv::{ReaderBuilder, StringRecord};
use gridsleuth_core::analysis::NamedPolygon;
use gridsleuth_core::geo::Ring;
use gridsleuth_core::grid::SLOTS_PER_DAY;
use gridsleuth_core::{PingRecord, Polygon, PolygonPart};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Column names of a grid-cell ping table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridLayout {
    pub uid: String,
    pub day: String,
    pub slot: String,
    pub x: String,
    pub y: String,
}

impl Default for GridLayout {
    fn default() -> Self {
        Self {
            uid: "uid".into(),
            day: "d".into(),
            slot: "t".into(),
            x: "x".into(),
            y: "y".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// Fail on the first bad row.
    #[default]
    Strict,
    /// Skip bad rows with a warning.
    Permissive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridParseOptions {
    pub mode: ParseMode,
    pub width_cells: u32,
    pub height_cells: u32,
    /// Source cells count from 1 (shifted to 0 on read).
    pub one_based: bool,
    /// Keep only these days; rows outside are dropped, not rejected.
    pub days: Option<RangeInclusive<u32>>,
}

impl GridParseOptions {
    pub fn new(width_cells: u32, height_cells: u32) -> Self {
        Self {
            mode: ParseMode::Strict,
            width_cells,
            height_cells,
            one_based: false,
            days: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseReport<T> {
    pub records: Vec<T>,
    pub rejected: u64,
    pub filtered: u64,
}

impl<T> ParseReport<T> {
    pub fn accepted(&self) -> u64 {
        self.records.len() as u64
    }
}

fn column(headers: &StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Data(format!("column '{name}' not found in header")))
}

fn line_of(record: &StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn field(record: &StringRecord, index: usize, line: u64) -> Result<&str> {
    record
        .get(index)
        .map(str::trim)
        .ok_or_else(|| Error::parse(line, format!("missing field {}", index + 1)))
}

fn integer<T: std::str::FromStr>(record: &StringRecord, index: usize, name: &str, line: u64) -> Result<T> {
    let raw = field(record, index, line)?;
    raw.parse()
        .map_err(|_| Error::parse(line, format!("invalid integer '{raw}' in column {name}")))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(input)
}

fn check_arity(record: &StringRecord, expected: usize, line: u64) -> Result<()> {
    if record.len() != expected {
        return Err(Error::parse(
            line,
            format!("expected {expected} fields, found {}", record.len()),
        ));
    }
    Ok(())
}

// Runs `row` over every record; permissive mode counts and logs failures.
fn collect_rows<R: Read, T>(
    input: R,
    mode: ParseMode,
    mut row: impl FnMut(&StringRecord, &StringRecord, u64) -> Result<Option<T>>,
) -> Result<ParseReport<T>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let mut report = ParseReport {
        records: Vec::new(),
        rejected: 0,
        filtered: 0,
    };
    let mut record = StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = line_of(&record);
                match row(&headers, &record, line) {
                    Ok(Some(v)) => report.records.push(v),
                    Ok(None) => report.filtered += 1,
                    Err(e) if mode == ParseMode::Permissive => {
                        log::warn!("skipping row: {e}");
                        report.rejected += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(e) if mode == ParseMode::Permissive && !matches!(e.kind(), csv::ErrorKind::Io(_)) => {
                log::warn!("skipping row: {e}");
                report.rejected += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(report)
}

/// Reads grid-cell pings with a header row.
pub fn parse_grid_pings<R: Read>(
    input: R,
    layout: &GridLayout,
    options: &GridParseOptions,
) -> Result<ParseReport<PingRecord>> {
    let mut cols: Option<[usize; 5]> = None;
    let shift = options.one_based as u32;
    collect_rows(input, options.mode, |headers, record, line| {
        let [cu, cd, ct, cx, cy] = match cols {
            Some(c) => c,
            None => {
                let c = [
                    column(headers, &layout.uid)?,
                    column(headers, &layout.day)?,
                    column(headers, &layout.slot)?,
                    column(headers, &layout.x)?,
                    column(headers, &layout.y)?,
                ];
                cols = Some(c);
                c
            }
        };
        check_arity(record, headers.len(), line)?;
        let uid: u32 = integer(record, cu, &layout.uid, line)?;
        let day: u32 = integer(record, cd, &layout.day, line)?;
        let slot: u32 = integer(record, ct, &layout.slot, line)?;
        if slot >= SLOTS_PER_DAY as u32 {
            return Err(Error::parse(
                line,
                format!("slot out of range [0,{}]", SLOTS_PER_DAY - 1),
            ));
        }
        let x: u32 = integer(record, cx, &layout.x, line)?;
        let y: u32 = integer(record, cy, &layout.y, line)?;
        let (lo, w, h) = (shift, options.width_cells + shift, options.height_cells + shift);
        if x < lo || x >= w {
            return Err(Error::parse(line, format!("{} out of range [{lo},{w})", layout.x)));
        }
        if y < lo || y >= h {
            return Err(Error::parse(line, format!("{} out of range [{lo},{h})", layout.y)));
        }
        if options.days.as_ref().is_some_and(|d| !d.contains(&day)) {
            return Ok(None);
        }
        Ok(Some(PingRecord {
            uid,
            day,
            slot: slot as u8,
            x: x - shift,
            y: y - shift,
        }))
    })
}

/// Writes pings under `layout`'s column names; the inverse of
/// [`parse_grid_pings`] for zero-based cells.
pub fn write_grid_pings<W: Write>(output: W, pings: &[PingRecord], layout: &GridLayout) -> Result<()> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record([&layout.uid, &layout.day, &layout.slot, &layout.x, &layout.y])?;
    for p in pings {
        w.write_record([
            p.uid.to_string(),
            p.day.to_string(),
            p.slot.to_string(),
            p.x.to_string(),
            p.y.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))?;
    Ok(())
}

/// One raw check-in.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoPing {
    pub uid: String,
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeoLayout {
    pub uid: String,
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
    /// Read timestamps without an offset as UTC instead of rejecting them.
    pub naive_is_utc: bool,
}

impl Default for GeoLayout {
    fn default() -> Self {
        Self {
            uid: "uid".into(),
            timestamp: "timestamp".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            naive_is_utc: false,
        }
    }
}

fn timestamp(raw: &str, naive_is_utc: bool) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc));
    }
    if naive_is_utc {
        for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
            if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
                return Some(t.and_utc());
            }
        }
    }
    None
}

fn degrees(record: &StringRecord, index: usize, name: &str, limit: f64, line: u64) -> Result<f64> {
    let raw = field(record, index, line)?;
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid number '{raw}' in column {name}")))?;
    if !(v.abs() <= limit) {
        return Err(Error::parse(line, format!("{name} {raw} out of bounds [-{limit},{limit}]")));
    }
    Ok(v)
}

/// Reads check-ins with RFC 3339 timestamps.
pub fn parse_geo_pings<R: Read>(input: R, layout: &GeoLayout, mode: ParseMode) -> Result<ParseReport<GeoPing>> {
    let mut cols: Option<[usize; 4]> = None;
    collect_rows(input, mode, |headers, record, line| {
        let [cu, ct, clat, clon] = match cols {
            Some(c) => c,
            None => {
                let c = [
                    column(headers, &layout.uid)?,
                    column(headers, &layout.timestamp)?,
                    column(headers, &layout.lat)?,
                    column(headers, &layout.lon)?,
                ];
                cols = Some(c);
                c
            }
        };
        check_arity(record, headers.len(), line)?;
        let raw_time = field(record, ct, line)?;
        let timestamp = timestamp(raw_time, layout.naive_is_utc)
            .ok_or_else(|| Error::parse(line, format!("unparseable timestamp '{raw_time}'")))?;
        Ok(Some(GeoPing {
            uid: field(record, cu, line)?.to_string(),
            timestamp,
            lat: degrees(record, clat, &layout.lat, 90.0, line)?,
            lon: degrees(record, clon, &layout.lon, 180.0, line)?,
        }))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusRow {
    pub region_name: String,
    pub population: u64,
}

/// NFC form with surrounding whitespace removed; the key used to join
/// census rows with region polygons.
pub fn region_key(name: &str) -> String {
    name.trim().nfc().collect()
}

/// Reads a two-column (region, population) table with a header row.
pub fn parse_census<R: Read>(input: R) -> Result<Vec<CensusRow>> {
    let report = collect_rows(input, ParseMode::Strict, |_, record, line| {
        check_arity(record, 2, line)?;
        let name = region_key(field(record, 0, line)?);
        if name.is_empty() {
            return Err(Error::parse(line, "empty region name"));
        }
        let raw = field(record, 1, line)?;
        let population = raw
            .parse()
            .map_err(|_| Error::parse(line, format!("invalid population '{raw}'")))?;
        Ok(Some(CensusRow {
            region_name: name,
            population,
        }))
    })?;
    Ok(report.records)
}

fn ring(value: &Value, feature: usize) -> Result<Ring> {
    let bad = || Error::Data(format!("malformed coordinates in feature {feature}"));
    let points = value.as_array().ok_or_else(bad)?;
    let ring: Ring = points
        .iter()
        .map(|p| {
            let lon = p.get(0).and_then(Value::as_f64).ok_or_else(bad)?;
            let lat = p.get(1).and_then(Value::as_f64).ok_or_else(bad)?;
            if lon.abs() > 180.0 || lat.abs() > 90.0 {
                return Err(Error::Data(format!(
                    "coordinate ({lon}, {lat}) out of bounds in feature {feature}"
                )));
            }
            Ok([lon, lat])
        })
        .collect::<Result<_>>()?;
    if ring.len() < 4 {
        return Err(Error::Data(format!(
            "ring with {} points in feature {feature}; at least 4 required",
            ring.len()
        )));
    }
    if ring.first() != ring.last() {
        return Err(Error::Data(format!("unclosed ring in feature {feature}")));
    }
    Ok(ring)
}

fn part(rings: &Value, feature: usize) -> Result<PolygonPart> {
    let rings = rings
        .as_array()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::Data(format!("polygon without rings in feature {feature}")))?;
    Ok(PolygonPart {
        exterior: ring(&rings[0], feature)?,
        holes: rings[1..].iter().map(|r| ring(r, feature)).collect::<Result<_>>()?,
    })
}

/// Reads Polygon and MultiPolygon features of a FeatureCollection, named
/// by the string (or number) property `name_property`. Without a name
/// property, features are named by their index.
pub fn parse_polygons<R: Read>(input: R, name_property: Option<&str>) -> Result<Vec<NamedPolygon>> {
    let doc: Value = serde_json::from_reader(input)?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Data("expected a GeoJSON FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Data("FeatureCollection without features".into()))?;
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let geometry = f
                .get("geometry")
                .ok_or_else(|| Error::Data(format!("feature {i} has no geometry")))?;
            let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("null");
            let coords = geometry.get("coordinates").unwrap_or(&Value::Null);
            let parts = match kind {
                "Polygon" => vec![part(coords, i)?],
                "MultiPolygon" => coords
                    .as_array()
                    .ok_or_else(|| Error::Data(format!("malformed coordinates in feature {i}")))?
                    .iter()
                    .map(|p| part(p, i))
                    .collect::<Result<_>>()?,
                other => {
                    return Err(Error::Data(format!(
                        "unsupported geometry type {other} in feature {i}"
                    )))
                }
            };
            let name = match name_property {
                None => i.to_string(),
                Some(key) => match f.get("properties").and_then(|p| p.get(key)) {
                    Some(Value::String(s)) => region_key(s),
                    Some(Value::Number(n)) => n.to_string(),
                    _ => return Err(Error::Data(format!("feature {i} has no '{key}' property"))),
                },
            };
            let mut polygon = Polygon { parts };
            polygon.normalize_orientation();
            Ok(NamedPolygon { name, polygon })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> GridParseOptions {
        GridParseOptions::new(200, 200)
    }

    #[test]
    fn grid_row_maps_fields() {
        let r = parse_grid_pings("uid,d,t,x,y\n0,0,42,5,7\n".as_bytes(), &GridLayout::default(), &opts()).unwrap();
        assert_eq!(
            r.records,
            vec![PingRecord {
                uid: 0,
                day: 0,
                slot: 42,
                x: 5,
                y: 7
            }]
        );
    }

    #[test]
    fn header_only_is_empty() {
        let r = parse_grid_pings("uid,d,t,x,y\n".as_bytes(), &GridLayout::default(), &opts()).unwrap();
        assert_eq!(r.accepted(), 0);
    }

    #[test]
    fn slot_48_is_rejected_with_line() {
        let e = parse_grid_pings("uid,d,t,x,y\n0,0,48,5,7\n".as_bytes(), &GridLayout::default(), &opts()).unwrap_err();
        assert_eq!(e.to_string(), "slot out of range [0,47] at line 2");
    }

    #[test]
    fn cell_range_names_the_field() {
        let e = parse_grid_pings("uid,d,t,x,y\n0,0,4,5,7\n0,0,4,200,7\n".as_bytes(), &GridLayout::default(), &opts())
            .unwrap_err();
        assert_eq!(e.to_string(), "x out of range [0,200) at line 3");
    }

    #[test]
    fn malformed_rows() {
        let e = parse_grid_pings("uid,d,t,x,y\n0,0,4,5\n".as_bytes(), &GridLayout::default(), &opts()).unwrap_err();
        assert_eq!(e.to_string(), "expected 5 fields, found 4 at line 2");
        let e = parse_grid_pings("uid,d,t,x,y\nq,0,4,5,1\n".as_bytes(), &GridLayout::default(), &opts()).unwrap_err();
        assert_eq!(e.to_string(), "invalid integer 'q' in column uid at line 2");
    }

    #[test]
    fn one_based_and_day_filter() {
        let mut o = opts();
        o.one_based = true;
        o.days = Some(0..=74);
        let r = parse_grid_pings(
            "uid,d,t,x,y\n1,3,0,1,200\n1,80,0,5,5\n".as_bytes(),
            &GridLayout::default(),
            &o,
        )
        .unwrap();
        assert_eq!((r.records[0].x, r.records[0].y), (0, 199));
        assert_eq!((r.accepted(), r.filtered), (1, 1));
        let e = parse_grid_pings("uid,d,t,x,y\n1,3,0,0,1\n".as_bytes(), &GridLayout::default(), &o).unwrap_err();
        assert_eq!(e.to_string(), "x out of range [1,201) at line 2");
    }

    #[test]
    fn custom_layout_and_column_order() {
        let layout = GridLayout {
            uid: "user".into(),
            day: "day".into(),
            slot: "slot".into(),
            x: "cx".into(),
            y: "cy".into(),
        };
        let r = parse_grid_pings("cy,cx,slot,day,user\n3,4,5,6,7\n".as_bytes(), &layout, &opts()).unwrap();
        assert_eq!(
            r.records[0],
            PingRecord {
                uid: 7,
                day: 6,
                slot: 5,
                x: 4,
                y: 3
            }
        );
    }

    #[test]
    fn geo_ping_example() {
        let r = parse_geo_pings(
            "uid,timestamp,lat,lon\nalice,2010-10-20T19:20:00Z,43.65,-79.38\n".as_bytes(),
            &GeoLayout::default(),
            ParseMode::Strict,
        )
        .unwrap();
        let p = &r.records[0];
        assert_eq!(p.uid, "alice");
        assert_eq!(p.timestamp.to_rfc3339(), "2010-10-20T19:20:00+00:00");
        assert_eq!((p.lat, p.lon), (43.65, -79.38));
    }

    #[test]
    fn geo_errors() {
        let layout = GeoLayout::default();
        let e = parse_geo_pings(
            "uid,timestamp,lat,lon\na,2010-10-20T19:20:00Z,91.0,0\n".as_bytes(),
            &layout,
            ParseMode::Strict,
        )
        .unwrap_err();
        assert!(e.to_string().contains("lat 91.0 out of bounds"), "{e}");
        let e = parse_geo_pings("uid,timestamp,lat,lon\na,yesterday,1,1\n".as_bytes(), &layout, ParseMode::Strict)
            .unwrap_err();
        assert_eq!(e.to_string(), "unparseable timestamp 'yesterday' at line 2");
        // Offsetless times need an explicit opt-in.
        let naive = "uid,timestamp,lat,lon\na,2010-10-22T23:44:29,1,1\n";
        assert!(parse_geo_pings(naive.as_bytes(), &layout, ParseMode::Strict).is_err());
        let utc = GeoLayout {
            naive_is_utc: true,
            ..GeoLayout::default()
        };
        assert_eq!(parse_geo_pings(naive.as_bytes(), &utc, ParseMode::Strict).unwrap().accepted(), 1);
    }

    #[test]
    fn three_geo_rows_in_order() {
        let body = "uid,timestamp,lat,lon\na,2010-10-20T19:20:00Z,1,1\nb,2010-10-20T19:20:00+02:00,2,2\nc,2011-01-01T00:00:00Z,3,3\n";
        let r = parse_geo_pings(body.as_bytes(), &GeoLayout::default(), ParseMode::Strict).unwrap();
        let ids: Vec<&str> = r.records.iter().map(|p| p.uid.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(r.records[1].timestamp.to_rfc3339(), "2010-10-20T17:20:00+00:00");
    }

    #[test]
    fn census_rows() {
        let rows = parse_census("region,population\nNagoya,2332176\n".as_bytes()).unwrap();
        assert_eq!(
            rows,
            vec![CensusRow {
                region_name: "Nagoya".into(),
                population: 2332176
            }]
        );
        assert!(parse_census("region,population\nX,-5\n".as_bytes()).is_err());
        assert!(parse_census("region,population\nX,1.5\n".as_bytes()).is_err());
        assert!(parse_census("region,population\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn region_names_are_normalized() {
        // "e" + combining acute vs precomposed, with padding.
        assert_eq!(region_key(" Cafe\u{301} "), region_key("Caf\u{e9}"));
    }

    const SQUARE: &str = "[[0,0],[1,0],[1,1],[0,1],[0,0]]";

    fn collection(geometry: &str) -> String {
        format!(
            r#"{{"type":"FeatureCollection","features":[{{"type":"Feature","properties":{{"name":"A"}},"geometry":{geometry}}}]}}"#
        )
    }

    #[test]
    fn polygon_feature() {
        let polys = parse_polygons(
            collection(&format!(r#"{{"type":"Polygon","coordinates":[{SQUARE}]}}"#)).as_bytes(),
            Some("name"),
        )
        .unwrap();
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].name, "A");
        assert_eq!(polys[0].polygon.parts.len(), 1);
        assert_eq!(polys[0].polygon.parts[0].exterior.len(), 5);
    }

    #[test]
    fn multipolygon_feature() {
        let shifted = "[[2,0],[3,0],[3,1],[2,1],[2,0]]";
        let polys = parse_polygons(
            collection(&format!(r#"{{"type":"MultiPolygon","coordinates":[[{SQUARE}],[{shifted}]]}}"#)).as_bytes(),
            Some("name"),
        )
        .unwrap();
        assert_eq!(polys[0].polygon.parts.len(), 2);
    }

    #[test]
    fn unsupported_and_unclosed() {
        let e = parse_polygons(
            collection(r#"{"type":"LineString","coordinates":[[0,0],[1,1]]}"#).as_bytes(),
            Some("name"),
        )
        .unwrap_err();
        assert!(e.to_string().contains("LineString"), "{e}");
        let e = parse_polygons(
            collection(r#"{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}"#).as_bytes(),
            Some("name"),
        )
        .unwrap_err();
        assert!(e.to_string().contains("unclosed"), "{e}");
    }

    #[test]
    fn orientation_is_normalized() {
        let clockwise = "[[0,0],[0,1],[1,1],[1,0],[0,0]]";
        let polys = parse_polygons(
            collection(&format!(r#"{{"type":"Polygon","coordinates":[{clockwise}]}}"#)).as_bytes(),
            Some("name"),
        )
        .unwrap();
        assert!(gridsleuth_core::geo::signed_area(&polys[0].polygon.parts[0].exterior) > 0.0);
    }
}
