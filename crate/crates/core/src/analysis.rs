//! Home detection, population validation and top-k identifiability.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geo::{coverage_fraction, point_in_polygon, GeoBBox, Polygon};
use crate::georef::GeoreferencedGrid;
use crate::grid::{Cell, PingRecord, SLOTS_PER_DAY};

/// Set of 30-minute slots counted as night.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NightWindow {
    slots: [bool; SLOTS_PER_DAY as usize],
}

impl Default for NightWindow {
    /// 21:00 to 08:00: slots 42..=47 and 0..=15.
    fn default() -> Self {
        Self::wrapping(42, 15)
    }
}

impl NightWindow {
    /// Slots `first..=last`, wrapping past midnight when `last < first`.
    pub fn wrapping(first: u8, last: u8) -> Self {
        let mut slots = [false; SLOTS_PER_DAY as usize];
        let mut s = first % SLOTS_PER_DAY;
        loop {
            slots[s as usize] = true;
            if s == last % SLOTS_PER_DAY {
                break;
            }
            s = (s + 1) % SLOTS_PER_DAY;
        }
        Self { slots }
    }

    pub fn contains(&self, slot: u8) -> bool {
        self.slots.get(slot as usize).copied().unwrap_or(false)
    }
}

/// Per-(user, cell) ping count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserCellCount {
    pub uid: u32,
    pub cell: Cell,
    pub count: u64,
}

/// Counts pings per (user, cell), sorted by uid and then by cell (row first).
pub fn user_cell_counts<'a>(pings: impl IntoIterator<Item = &'a PingRecord>) -> Vec<UserCellCount> {
    let mut keys: Vec<u64> = pings
        .into_iter()
        .map(|p| {
            debug_assert!(p.x < 1 << 16 && p.y < 1 << 16);
            ((p.uid as u64) << 32) | ((p.y as u64) << 16) | p.x as u64
        })
        .collect();
    keys.sort_unstable();
    let mut out: Vec<UserCellCount> = Vec::new();
    for key in keys {
        let uid = (key >> 32) as u32;
        let cell = Cell::new((key & 0xFFFF) as u32, ((key >> 16) & 0xFFFF) as u32);
        match out.last_mut() {
            Some(last) if last.uid == uid && last.cell == cell => last.count += 1,
            _ => out.push(UserCellCount { uid, cell, count: 1 }),
        }
    }
    out
}

// Consecutive runs of the same uid.
fn per_user(counts: &[UserCellCount]) -> impl Iterator<Item = &[UserCellCount]> {
    counts.chunk_by(|a, b| a.uid == b.uid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HomeAssignment {
    pub uid: u32,
    pub cell: Cell,
    pub night_pings: u64,
}

// Highest count wins; ties go to the smaller cell (row first).
fn max_cell(counts: &[UserCellCount]) -> Option<&UserCellCount> {
    counts
        .iter()
        .fold(None::<&UserCellCount>, |best, c| match best {
            Some(b) if (b.count, core::cmp::Reverse(b.cell)) >= (c.count, core::cmp::Reverse(c.cell)) => Some(b),
            _ => Some(c),
        })
}

/// Cell with the most night pings of one user, or `None` without night pings.
/// The uid of the first ping labels the result.
pub fn detect_home(pings: &[PingRecord], window: &NightWindow) -> Option<HomeAssignment> {
    let uid = pings.first()?.uid;
    let counts = user_cell_counts(pings.iter().filter(|p| window.contains(p.slot)));
    max_cell(&counts).map(|c| HomeAssignment {
        uid,
        cell: c.cell,
        night_pings: c.count,
    })
}

/// [`detect_home`] for every user, sorted by uid.
pub fn detect_homes(pings: &[PingRecord], window: &NightWindow) -> Vec<HomeAssignment> {
    let counts = user_cell_counts(pings.iter().filter(|p| window.contains(p.slot)));
    per_user(&counts)
        .filter_map(|run| {
            max_cell(run).map(|c| HomeAssignment {
                uid: c.uid,
                cell: c.cell,
                night_pings: c.count,
            })
        })
        .collect()
}

fn ranked(counts: &[UserCellCount], k: usize) -> Vec<Cell> {
    let mut order: Vec<&UserCellCount> = counts.iter().collect();
    order.sort_by(|a, b| b.count.cmp(&a.count).then(a.cell.cmp(&b.cell)));
    order.into_iter().take(k).map(|c| c.cell).collect()
}

/// The `k` most visited cells of one user, most visited first; ties go to
/// the smaller cell (row first).
pub fn top_locations(pings: &[PingRecord], k: usize) -> Vec<Cell> {
    ranked(&user_cell_counts(pings), k)
}

/// Number of distinct cells left after coarsening by `factor`.
pub fn distinguishable(cells: &[Cell], factor: u32) -> usize {
    let mut coarse: Vec<Cell> = cells
        .iter()
        .map(|c| Cell::new(c.x / factor, c.y / factor))
        .collect();
    coarse.sort_unstable();
    coarse.dedup();
    coarse.len()
}

/// Users bucketed by how many of their top locations stay distinguishable.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdentifiabilityTable {
    pub k: usize,
    pub factors: Vec<u32>,
    /// `counts[d - 1][j]`: users with `d` distinguishable cells at `factors[j]`.
    pub counts: Vec<Vec<u64>>,
    /// Users with fewer than `k` distinct cells.
    pub excluded_users: u64,
}

impl IdentifiabilityTable {
    pub fn get(&self, distinguishable: usize, factor_index: usize) -> u64 {
        self.counts[distinguishable - 1][factor_index]
    }

    pub fn column_sum(&self, factor_index: usize) -> u64 {
        self.counts.iter().map(|row| row[factor_index]).sum()
    }

    pub fn included_users(&self) -> u64 {
        if self.factors.is_empty() {
            0
        } else {
            self.column_sum(0)
        }
    }
}

/// Default coarsening factors: 1, 2, 4, 8 and 16 km for a 500 m base grid.
pub const DEFAULT_FACTORS: [u32; 5] = [2, 4, 8, 16, 32];

/// Tabulates, for each user with at least `k` visited cells, how many of the
/// top `k` remain distinct after integer division of cell indices by each
/// factor.
pub fn identifiability_table(pings: &[PingRecord], factors: &[u32], k: usize) -> Result<IdentifiabilityTable> {
    if k == 0 || factors.contains(&0) {
        return Err(Error::InvalidParameter("k and factors must be positive"));
    }
    let counts = user_cell_counts(pings);
    let mut table = IdentifiabilityTable {
        k,
        factors: factors.to_vec(),
        counts: vec![vec![0; factors.len()]; k],
        excluded_users: 0,
    };
    for run in per_user(&counts) {
        if run.len() < k {
            table.excluded_users += 1;
            continue;
        }
        let top = ranked(run, k);
        for (j, &f) in factors.iter().enumerate() {
            table.counts[distinguishable(&top, f) - 1][j] += 1;
        }
    }
    Ok(table)
}

/// Product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidParameter("need at least two samples"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (libm::sqrt(sxx) * libm::sqrt(syy))).clamp(-1.0, 1.0))
}

/// A polygon with its region name.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NamedPolygon {
    pub name: String,
    pub polygon: Polygon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionCount {
    pub name: String,
    pub homes: u64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PopulationEstimate {
    /// Regions that pass the coverage filter, in input order.
    pub regions: Vec<RegionCount>,
    /// Homes whose centroid lies in more than one region.
    pub overlapping_homes: u64,
    /// Homes whose centroid lies in no region.
    pub unassigned_homes: u64,
}

fn ring_bbox(polygon: &Polygon) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in polygon.rings().flatten() {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].min(p[1]);
        b[2] = b[2].max(p[0]);
        b[3] = b[3].max(p[1]);
    }
    b
}

/// Geographic box covered by the grid.
pub fn grid_footprint(grid: &GeoreferencedGrid) -> Result<GeoBBox> {
    let spec = grid.spec();
    let projection = spec.projection()?;
    let (cw, ch) = spec.cell_extent_m();
    let (south_lat, east_lon) = projection.unproject(spec.width_cells as f64 * cw, spec.height_cells as f64 * ch);
    GeoBBox::new(spec.anchor_lon, south_lat, east_lon, spec.anchor_lat)
}

/// Assigns each home to the first region (input order) containing its cell
/// centroid and drops regions covered less than `coverage_min` by the grid.
pub fn estimate_population(
    homes: &[HomeAssignment],
    grid: &GeoreferencedGrid,
    regions: &[NamedPolygon],
    coverage_min: f64,
) -> Result<PopulationEstimate> {
    let footprint = grid_footprint(grid)?;
    let projection = grid.spec().projection()?;
    let coverage: Vec<f64> = regions
        .iter()
        .map(|r| coverage_fraction(&r.polygon, &footprint, &projection))
        .collect::<Result<_>>()?;
    let boxes: Vec<[f64; 4]> = regions.iter().map(|r| ring_bbox(&r.polygon)).collect();

    // Resolve each distinct home cell once.
    let mut cells: Vec<(Cell, u64)> = Vec::new();
    {
        let mut sorted: Vec<Cell> = homes.iter().map(|h| h.cell).collect();
        sorted.sort_unstable();
        for c in sorted {
            match cells.last_mut() {
                Some((last, n)) if *last == c => *n += 1,
                _ => cells.push((c, 1)),
            }
        }
    }
    let mut counts = vec![0u64; regions.len()];
    let mut estimate = PopulationEstimate::default();
    for (cell, n) in cells {
        let (lat, lon) = grid.data_cell_centroid(cell)?;
        let mut containing = regions.iter().enumerate().filter(|(i, r)| {
            let b = boxes[*i];
            lon >= b[0] && lon <= b[2] && lat >= b[1] && lat <= b[3] && point_in_polygon([lon, lat], &r.polygon)
        });
        match containing.next() {
            Some((i, _)) => {
                counts[i] += n;
                if containing.next().is_some() {
                    estimate.overlapping_homes += n;
                }
            }
            None => estimate.unassigned_homes += n,
        }
    }
    estimate.regions = regions
        .iter()
        .zip(counts)
        .zip(coverage)
        .filter(|(_, c)| *c >= coverage_min)
        .map(|((r, homes), coverage)| RegionCount {
            name: r.name.clone(),
            homes,
            coverage,
        })
        .collect();
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ping(uid: u32, slot: u8, x: u32, y: u32) -> PingRecord {
        PingRecord {
            uid,
            day: 0,
            slot,
            x,
            y,
        }
    }

    #[test]
    fn default_night_window() {
        let w = NightWindow::default();
        for s in 0..48 {
            assert_eq!(w.contains(s), s >= 42 || s <= 15, "slot {s}");
        }
        assert!(!w.contains(48));
    }

    #[test]
    fn home_is_night_cell() {
        let mut pings: Vec<_> = (0..10).map(|_| ping(7, 44, 5, 5)).collect();
        pings.extend((0..3).map(|_| ping(7, 24, 2, 2)));
        let home = detect_home(&pings, &NightWindow::default()).unwrap();
        assert_eq!((home.uid, home.cell, home.night_pings), (7, Cell::new(5, 5), 10));
    }

    #[test]
    fn no_night_pings_no_home() {
        let pings = [ping(1, 20, 0, 0), ping(1, 30, 1, 1)];
        assert_eq!(detect_home(&pings, &NightWindow::default()), None);
        assert_eq!(detect_home(&[], &NightWindow::default()), None);
    }

    #[test]
    fn home_tie_prefers_smaller_row() {
        let mut pings: Vec<_> = (0..4).map(|_| ping(1, 2, 3, 7)).collect();
        pings.extend((0..4).map(|_| ping(1, 3, 3, 2)));
        let home = detect_home(&pings, &NightWindow::default()).unwrap();
        assert_eq!(home.cell, Cell::new(3, 2));
        pings.reverse();
        assert_eq!(detect_home(&pings, &NightWindow::default()).unwrap().cell, Cell::new(3, 2));
    }

    #[test]
    fn homes_for_many_users() {
        let pings = [ping(2, 0, 1, 1), ping(1, 47, 4, 4), ping(1, 47, 4, 4), ping(3, 20, 0, 0)];
        let homes = detect_homes(&pings, &NightWindow::default());
        assert_eq!(homes.len(), 2);
        assert_eq!((homes[0].uid, homes[0].cell, homes[0].night_pings), (1, Cell::new(4, 4), 2));
        assert_eq!(homes[1].uid, 2);
    }

    #[test]
    fn top_locations_rank_and_tie() {
        let mut pings = Vec::new();
        for (c, n) in [((0, 0), 5), ((1, 1), 3), ((2, 2), 2), ((4, 4), 1), ((3, 3), 1)] {
            pings.extend((0..n).map(|_| ping(1, 0, c.0, c.1)));
        }
        assert_eq!(
            top_locations(&pings, 4),
            vec![Cell::new(0, 0), Cell::new(1, 1), Cell::new(2, 2), Cell::new(3, 3)]
        );
        assert_eq!(top_locations(&pings[..5], 4), vec![Cell::new(0, 0)]);
        assert!(top_locations(&[], 4).is_empty());
    }

    #[test]
    fn distinguishable_cases() {
        let square = [Cell::new(0, 0), Cell::new(0, 1), Cell::new(1, 0), Cell::new(1, 1)];
        assert_eq!(distinguishable(&square, 2), 1);
        let spread = [Cell::new(0, 0), Cell::new(2, 0), Cell::new(0, 2), Cell::new(2, 2)];
        assert_eq!(distinguishable(&spread, 2), 4);
        assert_eq!(distinguishable(&spread, 4), 1);
    }

    #[test]
    fn table_excludes_sparse_users() {
        let mut pings = Vec::new();
        for (i, c) in [(0, 0), (2, 0), (0, 2), (2, 2)].iter().enumerate() {
            pings.extend((0..=i).map(|_| ping(1, 0, c.0, c.1)));
        }
        pings.push(ping(2, 0, 9, 9));
        let t = identifiability_table(&pings, &DEFAULT_FACTORS, 4).unwrap();
        assert_eq!(t.excluded_users, 1);
        assert_eq!(t.get(4, 0), 1);
        assert_eq!(t.get(1, 1), 1);
        for j in 0..5 {
            assert_eq!(t.column_sum(j), 1);
        }
    }

    #[test]
    fn pearson_closed_forms() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() <= 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() + 1.0).abs() <= 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() <= 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }
}
