//! Local equirectangular projection and polygon rasterization.
//!
//! Projected coordinates are `(east_m, south_m)`: meters east of and south of
//! the projection origin, so that they share orientation with image pixels.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::raster::BinaryImage;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

const DEG: f64 = PI / 180.0;

/// A `[lon, lat]` pair in degrees, GeoJSON order.
pub type LonLat = [f64; 2];

/// A closed ring: first point equals last.
pub type Ring = Vec<LonLat>;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProjectionRef {
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Latitude whose cosine scales the east axis.
    pub ref_lat: f64,
    pub earth_radius_m: f64,
}

impl ProjectionRef {
    pub fn new(origin_lat: f64, origin_lon: f64, ref_lat: f64) -> Result<Self> {
        if !(origin_lat.abs() < 90.0) || !(ref_lat.abs() < 90.0) || !origin_lon.is_finite() {
            return Err(Error::InvalidParameter("projection latitudes must lie in (-90, 90)"));
        }
        Ok(Self {
            origin_lat,
            origin_lon,
            ref_lat,
            earth_radius_m: EARTH_RADIUS_M,
        })
    }

    fn meters_per_degree_lat(&self) -> f64 {
        DEG * self.earth_radius_m
    }

    fn meters_per_degree_lon(&self) -> f64 {
        DEG * self.earth_radius_m * libm::cos(self.ref_lat * DEG)
    }

    /// Degrees to `(east_m, south_m)`.
    pub fn project(&self, lat: f64, lon: f64) -> (f64, f64) {
        (
            (lon - self.origin_lon) * self.meters_per_degree_lon(),
            (self.origin_lat - lat) * self.meters_per_degree_lat(),
        )
    }

    /// `(east_m, south_m)` back to `(lat, lon)`.
    pub fn unproject(&self, east_m: f64, south_m: f64) -> (f64, f64) {
        (
            self.origin_lat - south_m / self.meters_per_degree_lat(),
            self.origin_lon + east_m / self.meters_per_degree_lon(),
        )
    }

    /// Same scale, different origin.
    pub fn with_origin(&self, origin_lat: f64, origin_lon: f64) -> Self {
        Self {
            origin_lat,
            origin_lon,
            ..*self
        }
    }
}

/// Geographic bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeoBBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl GeoBBox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Result<Self> {
        let b = Self {
            min_lon,
            min_lat,
            max_lon,
            max_lat,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.min_lon < self.max_lon
            && self.min_lat < self.max_lat
            && self.min_lat >= -90.0
            && self.max_lat <= 90.0
            && self.min_lon >= -180.0
            && self.max_lon <= 180.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("degenerate or out-of-range bounding box"))
        }
    }

    pub fn center_lat(&self) -> f64 {
        0.5 * (self.min_lat + self.max_lat)
    }

    /// Projection anchored at the northwest corner, scaled at the center latitude.
    pub fn default_projection(&self) -> Result<ProjectionRef> {
        ProjectionRef::new(self.max_lat, self.min_lon, self.center_lat())
    }

    /// The box in `ref`'s plane: `(min_east, min_south, max_east, max_south)`.
    pub fn projected(&self, projection: &ProjectionRef) -> [f64; 4] {
        let (e0, s0) = projection.project(self.max_lat, self.min_lon);
        let (e1, s1) = projection.project(self.min_lat, self.max_lon);
        [e0, s0, e1, s1]
    }
}

/// One outer ring with its holes.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolygonPart {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

/// A polygon or multipolygon in lon/lat degrees.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Polygon {
    pub parts: Vec<PolygonPart>,
}

impl Polygon {
    pub fn simple(exterior: Ring) -> Self {
        Self {
            parts: vec![PolygonPart {
                exterior,
                holes: Vec::new(),
            }],
        }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        self.parts
            .iter()
            .flat_map(|p| core::iter::once(&p.exterior).chain(p.holes.iter()))
    }

    /// Exteriors counterclockwise, holes clockwise (lon as x, lat as y).
    pub fn normalize_orientation(&mut self) {
        for part in &mut self.parts {
            if signed_area(&part.exterior) < 0.0 {
                part.exterior.reverse();
            }
            for hole in &mut part.holes {
                if signed_area(hole) > 0.0 {
                    hole.reverse();
                }
            }
        }
    }

    fn projected_rings(&self, projection: &ProjectionRef) -> Vec<Vec<[f64; 2]>> {
        self.rings()
            .map(|ring| {
                ring.iter()
                    .map(|p| {
                        let (e, s) = projection.project(p[1], p[0]);
                        [e, s]
                    })
                    .collect()
            })
            .collect()
    }
}

/// Shoelace area, positive for counterclockwise rings in a y-up plane.
pub fn signed_area(ring: &[[f64; 2]]) -> f64 {
    let mut acc = 0.0;
    for w in ring.windows(2) {
        acc += w[0][0] * w[1][1] - w[1][0] * w[0][1];
    }
    if let (Some(first), Some(last)) = (ring.first(), ring.last()) {
        if first != last {
            acc += last[0] * first[1] - first[0] * last[1];
        }
    }
    0.5 * acc
}

// Even-odd crossing count against rings in any planar coordinates. Edges are
// half-open in y (lower endpoint included, upper excluded) and a crossing
// counts only strictly to the right of the point, so points on left and
// lower edges are inside and points on right and upper edges are outside.
fn crossings_contain<'a>(rings: impl Iterator<Item = &'a [[f64; 2]]>, p: [f64; 2]) -> bool {
    let mut inside = false;
    for ring in rings {
        let n = ring.len();
        if n < 2 {
            continue;
        }
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (ring[j], ring[i]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
            j = i;
        }
    }
    inside
}

/// Even-odd containment of a `[lon, lat]` point; holes subtract.
pub fn point_in_polygon(point: LonLat, polygon: &Polygon) -> bool {
    crossings_contain(polygon.rings().map(|r| r.as_slice()), point)
}

/// A binary raster of land (or land use) with its geographic frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LandMask {
    pub image: BinaryImage,
    pub bbox: GeoBBox,
    pub pixel_size_m: f64,
    pub projection: ProjectionRef,
}

impl LandMask {
    pub fn frame(&self) -> BackgroundFrame {
        BackgroundFrame {
            bbox: self.bbox,
            pixel_size_m: self.pixel_size_m,
            projection: self.projection,
            width: self.image.width(),
            height: self.image.height(),
        }
    }
}

/// Geographic frame of a background image, without the pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BackgroundFrame {
    pub bbox: GeoBBox,
    pub pixel_size_m: f64,
    pub projection: ProjectionRef,
    pub width: usize,
    pub height: usize,
}

impl BackgroundFrame {
    /// Pixel dimensions covering `bbox` at `pixel_size_m` under `projection`.
    pub fn new(bbox: GeoBBox, pixel_size_m: f64, projection: ProjectionRef) -> Result<Self> {
        bbox.validate()?;
        if !(pixel_size_m > 0.0) || !pixel_size_m.is_finite() {
            return Err(Error::InvalidParameter("pixel size must be positive"));
        }
        let [e0, s0, e1, s1] = bbox.projected(&projection);
        let width = libm::ceil((e1 - e0) / pixel_size_m - 1e-9).max(1.0) as usize;
        let height = libm::ceil((s1 - s0) / pixel_size_m - 1e-9).max(1.0) as usize;
        Ok(Self {
            bbox,
            pixel_size_m,
            projection,
            width,
            height,
        })
    }

    /// Projected `(east, south)` of the northwest pixel corner.
    pub fn origin(&self) -> (f64, f64) {
        self.projection.project(self.bbox.max_lat, self.bbox.min_lon)
    }

    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        let (e0, s0) = self.origin();
        (
            e0 + (i as f64 + 0.5) * self.pixel_size_m,
            s0 + (j as f64 + 0.5) * self.pixel_size_m,
        )
    }
}

/// Fills pixels whose centers lie inside any polygon (even-odd within each
/// polygon, union across polygons).
pub fn rasterize_polygons(
    polygons: &[Polygon],
    bbox: &GeoBBox,
    pixel_size_m: f64,
    projection: &ProjectionRef,
) -> Result<LandMask> {
    let frame = BackgroundFrame::new(*bbox, pixel_size_m, *projection)?;
    let (w, h) = (frame.width, frame.height);
    let (e0, _) = frame.origin();
    let mut image = BinaryImage::new(w, h);
    let mut xs: Vec<f64> = Vec::new();
    for polygon in polygons {
        let rings = polygon.projected_rings(projection);
        for j in 0..h {
            let (_, yc) = frame.pixel_center(0, j);
            xs.clear();
            for ring in &rings {
                let n = ring.len();
                if n < 2 {
                    continue;
                }
                let mut k = n - 1;
                for i in 0..n {
                    let (a, b) = (ring[k], ring[i]);
                    if (a[1] > yc) != (b[1] > yc) {
                        xs.push(a[0] + (yc - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
                    }
                    k = i;
                }
            }
            if xs.is_empty() {
                continue;
            }
            xs.sort_by(f64::total_cmp);
            let center = |i: usize| e0 + (i as f64 + 0.5) * pixel_size_m;
            // First pixel whose center is at or right of `x`.
            let first_at_or_after = |x: f64| -> usize {
                let guess = libm::ceil((x - e0) / pixel_size_m - 0.5).clamp(0.0, w as f64) as usize;
                let mut i = guess.saturating_sub(1);
                while i < w && center(i) < x {
                    i += 1;
                }
                i
            };
            let row = image.row_mut(j);
            for pair in xs.chunks_exact(2) {
                let start = first_at_or_after(pair[0]);
                let end = first_at_or_after(pair[1]);
                for bit in &mut row[start..end] {
                    *bit = true;
                }
            }
        }
    }
    Ok(LandMask {
        image,
        bbox: *bbox,
        pixel_size_m,
        projection: *projection,
    })
}

// Sutherland-Hodgman against an axis-aligned rectangle. For a simple ring the
// clipped output may contain degenerate edges along the rectangle boundary,
// which contribute nothing to the shoelace area.
fn clip_ring(ring: &[[f64; 2]], rect: [f64; 4]) -> Vec<[f64; 2]> {
    let mut points: Vec<[f64; 2]> = ring.to_vec();
    if points.len() > 1 && points.first() == points.last() {
        points.pop();
    }
    // (axis, bound, keep_greater)
    let planes = [
        (0usize, rect[0], true),
        (0, rect[2], false),
        (1, rect[1], true),
        (1, rect[3], false),
    ];
    for (axis, bound, keep_greater) in planes {
        if points.is_empty() {
            break;
        }
        let inside = |p: &[f64; 2]| {
            if keep_greater {
                p[axis] >= bound
            } else {
                p[axis] <= bound
            }
        };
        let input = core::mem::take(&mut points);
        let mut prev = *input.last().unwrap();
        for &cur in &input {
            let (cin, pin) = (inside(&cur), inside(&prev));
            if cin != pin {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                let mut q = [
                    prev[0] + t * (cur[0] - prev[0]),
                    prev[1] + t * (cur[1] - prev[1]),
                ];
                q[axis] = bound;
                points.push(q);
            }
            if cin {
                points.push(cur);
            }
            prev = cur;
        }
    }
    points
}

type ClippedPart = (Vec<[f64; 2]>, Vec<Vec<[f64; 2]>>);

fn polygon_area(rings_by_part: &[ClippedPart]) -> f64 {
    rings_by_part
        .iter()
        .map(|(ext, holes)| {
            signed_area(ext).abs() - holes.iter().map(|h| signed_area(h).abs()).sum::<f64>()
        })
        .sum()
}

/// Fraction of the polygon's projected area that lies inside `bbox`,
/// computed exactly by clipping each ring to the projected box.
pub fn coverage_fraction(polygon: &Polygon, bbox: &GeoBBox, projection: &ProjectionRef) -> Result<f64> {
    let project = |ring: &Ring| -> Vec<[f64; 2]> {
        ring.iter()
            .map(|p| {
                let (e, s) = projection.project(p[1], p[0]);
                [e, s]
            })
            .collect()
    };
    let parts: Vec<_> = polygon
        .parts
        .iter()
        .map(|p| (project(&p.exterior), p.holes.iter().map(project).collect::<Vec<_>>()))
        .collect();
    let total = polygon_area(&parts);
    if !(total > 0.0) {
        return Err(Error::ZeroArea);
    }
    let rect = bbox.projected(projection);
    let clipped: Vec<_> = parts
        .iter()
        .map(|(ext, holes)| {
            (
                clip_ring(ext, rect),
                holes.iter().map(|h| clip_ring(h, rect)).collect::<Vec<_>>(),
            )
        })
        .collect();
    Ok((polygon_area(&clipped) / total).clamp(0.0, 1.0))
}
