use gridsleuth_core::analysis::{
    detect_home, detect_homes, estimate_population, identifiability_table, pearson, top_locations, HomeAssignment,
    NamedPolygon, NightWindow, DEFAULT_FACTORS,
};
use gridsleuth_core::geo::point_in_polygon;
use gridsleuth_core::{ActivityRaster, Cell, CountMode, Dihedral, GeoreferencedGrid, GridSpec, PingRecord, Polygon};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ping(uid: u32, slot: u8, x: u32, y: u32) -> PingRecord {
    PingRecord { uid, day: 0, slot, x, y }
}

fn population_strategy() -> impl Strategy<Value = Vec<PingRecord>> {
    vec((0u32..30, 0u8..48, 0u32..200, 0u32..200), 0..600)
        .prop_map(|v| v.into_iter().map(|(u, s, x, y)| ping(u, s, x, y)).collect())
}

proptest! {
    #[test]
    fn identifiability_columns_share_one_total(pings in population_strategy()) {
        let table = identifiability_table(&pings, &DEFAULT_FACTORS, 4).unwrap();
        let total = table.column_sum(0);
        for j in 0..DEFAULT_FACTORS.len() {
            prop_assert_eq!(table.column_sum(j), total);
        }
        let mut users: Vec<u32> = pings.iter().map(|p| p.uid).collect();
        users.sort_unstable();
        users.dedup();
        prop_assert_eq!(total + table.excluded_users, users.len() as u64);
    }

    #[test]
    fn distinguishable_count_never_grows_along_the_factor_chain(pings in population_strategy()) {
        // One user at a time, so each table has a single non-zero row per column.
        let mut uids: Vec<u32> = pings.iter().map(|p| p.uid).collect();
        uids.sort_unstable();
        uids.dedup();
        for uid in uids {
            let mine: Vec<PingRecord> = pings.iter().copied().filter(|p| p.uid == uid).collect();
            let t = identifiability_table(&mine, &DEFAULT_FACTORS, 4).unwrap();
            if t.excluded_users == 1 {
                continue;
            }
            let d: Vec<usize> = (0..DEFAULT_FACTORS.len())
                .map(|j| (1..=4).find(|&d| t.get(d, j) == 1).unwrap())
                .collect();
            for w in d.windows(2) {
                prop_assert!(w[1] <= w[0], "{:?}", d);
            }
        }
    }

    #[test]
    fn pearson_affine_invariance(
        xs in vec(-100.0f64..100.0, 3..40), seed in any::<u64>(), a in 0.1f64..10.0, b in -50.0f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + rng.random_range(-40.0..40.0)).collect();
        let Ok(r) = pearson(&xs, &ys) else { return Ok(()) };
        let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
        prop_assert!((pearson(&scaled, &ys).unwrap() - r).abs() <= 1e-9);
        prop_assert!((pearson(&flipped, &ys).unwrap() + r).abs() <= 1e-9);
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn home_is_order_independent(mut pings in vec((0u8..48, 0u32..5, 0u32..5), 1..80), seed in any::<u64>()) {
        let records: Vec<PingRecord> = pings.iter().map(|&(s, x, y)| ping(3, s, x, y)).collect();
        let home = detect_home(&records, &NightWindow::default());
        pings.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<PingRecord> = pings.iter().map(|&(s, x, y)| ping(3, s, x, y)).collect();
        prop_assert_eq!(detect_home(&shuffled, &NightWindow::default()), home);
    }
}

#[test]
fn pearson_closed_forms() {
    let cases: [(&[f64], &[f64], f64); 3] = [
        (&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], 1.0),
        (&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0], -1.0),
        (&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0], 0.8),
    ];
    for (xs, ys, r) in cases {
        assert!((pearson(xs, ys).unwrap() - r).abs() <= 1e-12);
    }
}

#[test]
fn single_user_identifiability_cases() {
    let square = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let spread = [(0, 0), (2, 0), (0, 2), (2, 2)];
    for (cells, d_at_2) in [(square, 1), (spread, 4)] {
        let pings: Vec<PingRecord> = cells.iter().map(|&(x, y)| ping(9, 10, x, y)).collect();
        let t = identifiability_table(&pings, &[2], 4).unwrap();
        assert_eq!(t.get(d_at_2, 0), 1);
        assert_eq!(t.column_sum(0), 1);
        assert_eq!(t.excluded_users, 0);
    }
    let few = [ping(1, 0, 0, 0), ping(1, 0, 5, 5)];
    let t = identifiability_table(&few, &[2], 4).unwrap();
    assert_eq!((t.column_sum(0), t.excluded_users), (0, 1));
}

#[test]
fn detect_homes_agrees_with_per_user_detection() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let pings: Vec<PingRecord> = (0..2000)
        .map(|_| ping(rng.random_range(0..40), rng.random_range(0..48), rng.random_range(0..6), rng.random_range(0..6)))
        .collect();
    let all = detect_homes(&pings, &NightWindow::default());
    for h in &all {
        let mine: Vec<PingRecord> = pings.iter().copied().filter(|p| p.uid == h.uid).collect();
        assert_eq!(detect_home(&mine, &NightWindow::default()), Some(*h));
    }
    assert!(all.windows(2).all(|w| w[0].uid < w[1].uid));
    assert_eq!(top_locations(&[], 4), Vec::<Cell>::new());
}

fn rect(name: &str, lon0: f64, lat0: f64, lon1: f64, lat1: f64) -> NamedPolygon {
    NamedPolygon {
        name: name.to_string(),
        polygon: Polygon::simple(vec![[lon0, lat0], [lon1, lat0], [lon1, lat1], [lon0, lat1], [lon0, lat0]]),
    }
}

fn small_grid() -> GeoreferencedGrid {
    let spec = GridSpec::new(35.2, 136.8, 500.0, 20, 20, 35.2);
    GeoreferencedGrid::new(spec, Dihedral::Identity, ActivityRaster::zeros(20, 20, CountMode::Records)).unwrap()
}

#[test]
fn population_split_matches_brute_force_assignment() {
    let grid = small_grid();
    let mid_lon = 136.855;
    let regions = [
        rect("west", 136.79, 35.10, mid_lon, 35.21),
        rect("east", mid_lon, 35.10, 136.92, 35.21),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let homes: Vec<HomeAssignment> = (0..500)
        .map(|uid| HomeAssignment {
            uid,
            cell: Cell::new(rng.random_range(0..20), rng.random_range(0..20)),
            night_pings: 1,
        })
        .collect();
    let est = estimate_population(&homes, &grid, &regions, 0.3).unwrap();
    let mut expected = [0u64; 2];
    for h in &homes {
        let (lat, lon) = grid.spec().cell_to_geo(h.cell.x, h.cell.y).unwrap();
        if point_in_polygon([lon, lat], &regions[0].polygon) {
            expected[0] += 1;
        } else if point_in_polygon([lon, lat], &regions[1].polygon) {
            expected[1] += 1;
        }
    }
    assert_eq!(est.regions.len(), 2);
    assert_eq!([est.regions[0].homes, est.regions[1].homes], expected);
    assert_eq!(expected.iter().sum::<u64>() + est.unassigned_homes, 500);
    assert!(expected[0] > 100 && expected[1] > 100);
}

#[test]
fn poorly_covered_region_is_dropped() {
    let grid = small_grid();
    // The grid spans roughly 136.8..136.91 in longitude; this region has a
    // fifth of its width inside.
    let east = grid.spec().cell_to_geo(19, 0).unwrap().1 + 0.0027;
    let width = 0.1;
    let regions = [
        rect("inside", 136.82, 35.15, 136.85, 35.18),
        rect("mostly_out", east - 0.2 * width, 35.15, east + 0.8 * width, 35.18),
    ];
    let est = estimate_population(&[], &grid, &regions, 0.3).unwrap();
    assert_eq!(est.regions.len(), 1);
    assert_eq!(est.regions[0].name, "inside");
    assert!((est.regions[0].coverage - 1.0).abs() < 1e-12);
}
