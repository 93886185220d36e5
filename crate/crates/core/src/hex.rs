//! Pointy-top hexagonal binning in axial coordinates.
//!
//! Points are planar `(x, y)` meters with `y` growing downward, the same frame
//! as projected `(east, south)` coordinates. Hexagon `(0, 0)` is centered on
//! the origin.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{BinaryImage, CountMode};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HexSpec {
    /// Edge length (= circumradius) in meters.
    pub edge_m: f64,
}

impl HexSpec {
    pub fn new(edge_m: f64) -> Result<Self> {
        if !(edge_m > 0.0) || !edge_m.is_finite() {
            return Err(Error::InvalidParameter("hexagon edge must be positive"));
        }
        Ok(Self { edge_m })
    }

    /// Hexagon containing `(x, y)`.
    pub fn hex_at(&self, x: f64, y: f64) -> Hex {
        let q = (SQRT3 / 3.0 * x - y / 3.0) / self.edge_m;
        let r = (2.0 / 3.0 * y) / self.edge_m;
        cube_round(q, r)
    }

    pub fn center(&self, hex: Hex) -> (f64, f64) {
        let (q, r) = (hex.q as f64, hex.r as f64);
        (
            self.edge_m * (SQRT3 * q + SQRT3 / 2.0 * r),
            self.edge_m * 1.5 * r,
        )
    }

    /// The six corners starting at the top vertex, then clockwise as displayed.
    pub fn corners(&self, hex: Hex) -> [(f64, f64); 6] {
        let (cx, cy) = self.center(hex);
        let mut out = [(0.0, 0.0); 6];
        for (i, c) in out.iter_mut().enumerate() {
            let angle = core::f64::consts::PI / 180.0 * (60.0 * i as f64 - 90.0);
            *c = (
                cx + self.edge_m * libm::cos(angle),
                cy + self.edge_m * libm::sin(angle),
            );
        }
        out
    }

    pub fn area_m2(&self) -> f64 {
        1.5 * SQRT3 * self.edge_m * self.edge_m
    }
}

/// Axial hexagon coordinates; the implied cube coordinate is `s = -q - r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Hex {
    pub q: i64,
    pub r: i64,
}

impl Hex {
    pub const fn new(q: i64, r: i64) -> Self {
        Self { q, r }
    }

    pub fn s(&self) -> i64 {
        -self.q - self.r
    }
}

/// Rounds fractional axial coordinates to the nearest hexagon.
pub fn cube_round(q: f64, r: f64) -> Hex {
    let s = -q - r;
    let (mut rq, mut rr, rs) = (libm::round(q), libm::round(r), libm::round(s));
    let (dq, dr, ds) = ((rq - q).abs(), (rr - r).abs(), (rs - s).abs());
    if dq > dr && dq > ds {
        rq = -rr - rs;
    } else if dr > ds {
        rr = -rq - rs;
    }
    Hex::new(rq as i64, rr as i64)
}

/// Edge length in meters of a regular hexagon with the given area.
pub fn hex_edge_for_area(area_km2: f64) -> Result<f64> {
    if !(area_km2 > 0.0) || !area_km2.is_finite() {
        return Err(Error::InvalidParameter("hexagon area must be positive"));
    }
    let area_m2 = area_km2 * 1e6;
    Ok(libm::sqrt(2.0 * area_m2 / (3.0 * SQRT3)))
}

/// A projected ping for hex binning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPing {
    pub uid: u32,
    pub x: f64,
    pub y: f64,
}

/// Counts per hexagon, by records or by distinct users.
pub fn hex_aggregate(pings: &[PlanarPing], spec: &HexSpec, mode: CountMode) -> BTreeMap<Hex, u64> {
    let mut counts = BTreeMap::new();
    match mode {
        CountMode::Records => {
            for p in pings {
                *counts.entry(spec.hex_at(p.x, p.y)).or_insert(0) += 1;
            }
        }
        CountMode::UniqueUsers => {
            let mut pairs: Vec<(Hex, u32)> =
                pings.iter().map(|p| (spec.hex_at(p.x, p.y), p.uid)).collect();
            pairs.sort_unstable();
            pairs.dedup();
            for (hex, _) in pairs {
                *counts.entry(hex).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Axis-aligned rectangle in the planar frame.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlanarRect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

/// Marks pixels whose center falls in a hexagon with `count >= min_count`.
pub fn hex_rasterize(
    counts: &BTreeMap<Hex, u64>,
    spec: &HexSpec,
    rect: &PlanarRect,
    pixel_size_m: f64,
    min_count: u64,
) -> Result<BinaryImage> {
    if !(pixel_size_m > 0.0) || !(rect.max_x > rect.min_x) || !(rect.max_y > rect.min_y) {
        return Err(Error::InvalidParameter("degenerate rectangle or pixel size"));
    }
    let w = libm::ceil((rect.max_x - rect.min_x) / pixel_size_m - 1e-9).max(1.0) as usize;
    let h = libm::ceil((rect.max_y - rect.min_y) / pixel_size_m - 1e-9).max(1.0) as usize;
    let min_count = min_count.max(1);
    Ok(BinaryImage::from_fn(w, h, |i, j| {
        let x = rect.min_x + (i as f64 + 0.5) * pixel_size_m;
        let y = rect.min_y + (j as f64 + 0.5) * pixel_size_m;
        counts
            .get(&spec.hex_at(x, y))
            .is_some_and(|&c| c >= min_count)
    }))
}
