//! Seeded synthetic landscapes and mobility traces with a known grid.
//!
//! The data producer draws its grid in a projection stretched by `scale`
//! against the local projection of the map, then publishes the raster in an
//! orientation changed by `dihedral`. Locating the grid therefore means
//! finding `dihedral.inverse()` and `scale`.

use std::f64::consts::TAU;

use gridsleuth_core::analysis::NamedPolygon;
use gridsleuth_core::geo::{point_in_polygon, BackgroundFrame, Ring, EARTH_RADIUS_M};
use gridsleuth_core::{Dihedral, GeoBBox, GridSpec, PingRecord, Polygon, PolygonPart, ProjectionRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::CensusRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub seed: u64,
    pub grid_cells: u32,
    pub cell_size_m: f64,
    pub pings: usize,
    pub users: u32,
    /// Sampling density on land relative to water.
    pub land_weight: f64,
    /// Share of pings placed at the user's home at night.
    pub night_share: f64,
    pub days: u32,
    pub scale_x: f64,
    pub scale_y: f64,
    /// Orientation of the published raster; drawn from the seed when absent.
    pub dihedral: Option<Dihedral>,
    /// Map margin around the grid footprint, in meters.
    pub margin_m: f64,
    /// Northwest corner of the map, `(lat, lon)`.
    pub corner: (f64, f64),
    /// Census regions per axis.
    pub regions: (u32, u32),
    pub persons_per_home: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            grid_cells: 200,
            cell_size_m: 500.0,
            pings: 100_000,
            users: 2_000,
            land_weight: 50.0,
            night_share: 0.25,
            days: 75,
            scale_x: 1.1,
            scale_y: 0.9,
            dihedral: None,
            margin_m: 12_000.0,
            corner: (35.6, 136.3),
            regions: (3, 3),
            persons_per_home: 250,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub params: SynthParams,
    pub land: Vec<Polygon>,
    pub bbox: GeoBBox,
    pub projection: ProjectionRef,
    /// Where the grid really is.
    pub truth: GridSpec,
    /// Applied by the producer to the geographic raster before publishing.
    pub published_as: Dihedral,
    /// Pings in the published cell convention.
    pub pings: Vec<PingRecord>,
    pub regions: Vec<NamedPolygon>,
    pub census: Vec<CensusRow>,
}

impl Fixture {
    /// The element a search should report: it maps the published raster
    /// back onto the map.
    pub fn expected_dihedral(&self) -> Dihedral {
        self.published_as.inverse()
    }

    pub fn frame(&self, pixel_size_m: f64) -> Result<BackgroundFrame> {
        Ok(BackgroundFrame::new(self.bbox, pixel_size_m, self.projection)?)
    }
}

// Closed ring in local meters `[east, south]`.
fn star(rng: &mut ChaCha8Rng, cx: f64, cy: f64, radius: f64) -> Ring {
    let lobes = rng.random_range(2..6) as f64;
    let phase = rng.random_range(0.0..TAU);
    let wobble = rng.random_range(0.1..0.35);
    let mut ring: Ring = (0..32)
        .map(|k| {
            let a = k as f64 / 32.0 * TAU;
            let r = radius * (1.0 + wobble * (lobes * a + phase).sin());
            [cx + r * a.cos(), cy + r * a.sin()]
        })
        .collect();
    ring.push(ring[0]);
    ring
}

fn land_weighted_point(
    rng: &mut ChaCha8Rng,
    land: &[Polygon],
    origin: (f64, f64),
    extent: (f64, f64),
    land_weight: f64,
) -> [f64; 2] {
    loop {
        let p = [
            origin.0 + rng.random_range(0.0..extent.0),
            origin.1 + rng.random_range(0.0..extent.1),
        ];
        if land.iter().any(|poly| point_in_polygon(p, poly)) || rng.random_bool(1.0 / land_weight) {
            return p;
        }
    }
}

/// Builds a fixture deterministically from `params`.
pub fn generate(params: &SynthParams) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.grid_cells;
    let foot = (
        n as f64 * params.cell_size_m / params.scale_x,
        n as f64 * params.cell_size_m / params.scale_y,
    );
    let margin = params.margin_m;
    let map = (foot.0 + 2.0 * margin, foot.1 + 2.0 * margin);
    let anchor = (
        rng.random_range(0.3 * margin..1.7 * margin),
        rng.random_range(0.3 * margin..1.7 * margin),
    );
    let published_as = params
        .dihedral
        .unwrap_or_else(|| Dihedral::ALL[rng.random_range(0..8)]);

    // Coastline: land on one side of a wavy line across the map.
    let waves: Vec<(f64, f64, f64)> = (1..=4)
        .map(|k| {
            (
                k as f64,
                rng.random_range(0.0..TAU),
                rng.random_range(0.02..0.07) / k as f64,
            )
        })
        .collect();
    let land_west = rng.random_bool(0.5);
    let coast_at = |t: f64| -> f64 {
        let wiggle: f64 = waves.iter().map(|(k, p, a)| a * (k * TAU * t + p).sin()).sum();
        map.0 * (0.5 + wiggle)
    };
    let outer = if land_west { -1000.0 } else { map.0 + 1000.0 };
    let mut coast: Ring = vec![[outer, -1000.0]];
    coast.extend((0..=80).map(|i| {
        let t = i as f64 / 80.0;
        [coast_at(t), -1000.0 + t * (map.1 + 2000.0)]
    }));
    coast.push([outer, map.1 + 1000.0]);
    coast.push(coast[0]);
    let distance_to_land = |e: f64, s: f64| -> f64 {
        let c = coast_at((s + 1000.0) / (map.1 + 2000.0));
        if land_west {
            e - c
        } else {
            c - e
        }
    };
    let mut land_part = PolygonPart {
        exterior: coast,
        holes: Vec::new(),
    };
    let mut land = Vec::new();
    for _ in 0..24 {
        let (cx, cy) = (rng.random_range(0.0..map.0), rng.random_range(0.0..map.1));
        let radius = rng.random_range(2000.0..7000.0);
        // Positive distance means water.
        let d = distance_to_land(cx, cy);
        if d > 1.6 * radius {
            land.push(Polygon::simple(star(&mut rng, cx, cy, radius)));
        } else if d < -1.6 * radius && land_part.holes.len() < 8 {
            land_part.holes.push(star(&mut rng, cx, cy, 0.7 * radius));
        }
    }
    land.insert(0, Polygon { parts: vec![land_part] });

    let meters_per_degree = TAU / 360.0 * EARTH_RADIUS_M;
    let (max_lat, min_lon) = params.corner;
    let min_lat = max_lat - map.1 / meters_per_degree;
    let ref_lat = 0.5 * (min_lat + max_lat);
    let max_lon = min_lon + map.0 / (meters_per_degree * ref_lat.to_radians().cos());
    let bbox = GeoBBox::new(min_lon, min_lat, max_lon, max_lat)?;
    let projection = bbox.default_projection()?;
    let (anchor_lat, anchor_lon) = projection.unproject(anchor.0, anchor.1);
    let truth = GridSpec::new(anchor_lat, anchor_lon, params.cell_size_m, n, n, projection.ref_lat)
        .with_scales(params.scale_x, params.scale_y);

    let homes: Vec<[f64; 2]> = (0..params.users)
        .map(|_| land_weighted_point(&mut rng, &land, anchor, foot, params.land_weight))
        .collect();
    let cell_of = |p: [f64; 2]| {
        let (cw, ch) = truth.cell_extent_m();
        let gx = (((p[0] - anchor.0) / cw).floor() as u32).min(n - 1);
        let gy = (((p[1] - anchor.1) / ch).floor() as u32).min(n - 1);
        let (x, y) = published_as.map_coords(gx as usize, gy as usize, n as usize, n as usize);
        (x as u32, y as u32)
    };
    let mut pings = Vec::with_capacity(params.pings);
    for i in 0..params.pings {
        let uid = i as u32 % params.users;
        let day = rng.random_range(0..params.days);
        let (slot, point) = if rng.random_bool(params.night_share) {
            let slot = rng.random_range(0..22u8);
            ((slot + 42) % 48, homes[uid as usize])
        } else {
            let p = land_weighted_point(&mut rng, &land, anchor, foot, params.land_weight);
            (rng.random_range(16..42u8), p)
        };
        let (x, y) = cell_of(point);
        pings.push(PingRecord { uid, day, slot, x, y });
    }

    let (rx, ry) = params.regions;
    let mut regions = Vec::new();
    let mut census = Vec::new();
    for j in 0..ry {
        for i in 0..rx {
            let e0 = anchor.0 + foot.0 * i as f64 / rx as f64;
            let e1 = anchor.0 + foot.0 * (i + 1) as f64 / rx as f64;
            let s0 = anchor.1 + foot.1 * j as f64 / ry as f64;
            let s1 = anchor.1 + foot.1 * (j + 1) as f64 / ry as f64;
            let homes_inside = homes
                .iter()
                .filter(|h| h[0] >= e0 && h[0] < e1 && h[1] >= s0 && h[1] < s1)
                .count() as u64;
            let name = format!("region-{j}-{i}");
            let ring: Ring = [[e0, s1], [e1, s1], [e1, s0], [e0, s0], [e0, s1]]
                .iter()
                .map(|&[e, s]| {
                    let (lat, lon) = projection.unproject(e, s);
                    [lon, lat]
                })
                .collect();
            regions.push(NamedPolygon {
                name: name.clone(),
                polygon: Polygon::simple(ring),
            });
            census.push(CensusRow {
                region_name: name,
                population: homes_inside * params.persons_per_home,
            });
        }
    }

    let land = land
        .into_iter()
        .map(|poly| {
            let to_geo = |ring: &Ring| -> Ring {
                ring.iter()
                    .map(|&[e, s]| {
                        let (lat, lon) = projection.unproject(e, s);
                        [lon, lat]
                    })
                    .collect()
            };
            let mut p = Polygon {
                parts: poly
                    .parts
                    .iter()
                    .map(|part| PolygonPart {
                        exterior: to_geo(&part.exterior),
                        holes: part.holes.iter().map(to_geo).collect(),
                    })
                    .collect(),
            };
            p.normalize_orientation();
            p
        })
        .collect();

    Ok(Fixture {
        params: params.clone(),
        land,
        bbox,
        projection,
        truth,
        published_as,
        pings,
        regions,
        census,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthParams {
        SynthParams {
            grid_cells: 40,
            pings: 5_000,
            users: 100,
            margin_m: 4_000.0,
            ..SynthParams::default()
        }
    }

    #[test]
    fn same_seed_same_fixture() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.pings, b.pings);
        assert_eq!(a.land, b.land);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn pings_stay_on_the_grid() {
        let f = generate(&small()).unwrap();
        assert_eq!(f.pings.len(), 5_000);
        assert!(f.pings.iter().all(|p| p.x < 40 && p.y < 40 && p.slot < 48 && p.day < 75));
    }

    #[test]
    fn grid_lies_inside_the_map() {
        let f = generate(&small()).unwrap();
        let (lat, lon) = f.truth.cell_to_geo(39, 39).unwrap();
        assert!(lat > f.bbox.min_lat && lon < f.bbox.max_lon);
        assert!(f.truth.anchor_lat < f.bbox.max_lat && f.truth.anchor_lon > f.bbox.min_lon);
    }

    #[test]
    fn census_counts_every_home() {
        let p = small();
        let f = generate(&p).unwrap();
        let total: u64 = f.census.iter().map(|c| c.population).sum();
        assert_eq!(total, p.users as u64 * p.persons_per_home);
        assert_eq!(f.regions.len(), 9);
    }
}
