use gridsleuth::config::RunConfig;
use gridsleuth::formats::{read_pgm, read_raster_csv, spec_from_geojson, write_grid_geojson, write_pgm, write_raster_csv};
use gridsleuth::ingest::{parse_grid_pings, write_grid_pings, GridLayout, GridParseOptions, ParseMode};
use gridsleuth_core::{ActivityRaster, BinaryImage, CountMode, Dihedral, GeoreferencedGrid, GridSpec, PingRecord};
use proptest::prelude::*;

fn ping() -> impl Strategy<Value = PingRecord> {
    (0u32..500, 0u32..90, 0u8..48, 0u32..50, 0u32..40).prop_map(|(uid, day, slot, x, y)| PingRecord {
        uid,
        day,
        slot,
        x,
        y,
    })
}

/// A data row, either well formed or broken in one of several ways.
fn row() -> impl Strategy<Value = (String, bool)> {
    prop_oneof![
        ping().prop_map(|p| (format!("{},{},{},{},{}", p.uid, p.day, p.slot, p.x, p.y), true)),
        (0u32..10).prop_map(|u| (format!("{u},0,48,1,1"), false)),
        (0u32..10).prop_map(|u| (format!("{u},0,3,50,1"), false)),
        (0u32..10).prop_map(|u| (format!("{u},0,3,1"), false)),
        (0u32..10).prop_map(|u| (format!("{u},zero,3,1,1"), false)),
    ]
}

fn options(mode: ParseMode) -> GridParseOptions {
    GridParseOptions {
        mode,
        ..GridParseOptions::new(50, 40)
    }
}

proptest! {
    #[test]
    fn written_pings_read_back(pings in prop::collection::vec(ping(), 0..200)) {
        let layout = GridLayout::default();
        let mut buf = Vec::new();
        write_grid_pings(&mut buf, &pings, &layout).unwrap();
        let report = parse_grid_pings(buf.as_slice(), &layout, &options(ParseMode::Strict)).unwrap();
        prop_assert_eq!(report.records, pings);
        prop_assert_eq!(report.rejected, 0);
    }

    #[test]
    fn permissive_accounts_for_every_row(rows in prop::collection::vec(row(), 0..100), days in 0u32..90) {
        let text: String = std::iter::once("uid,d,t,x,y".to_string())
            .chain(rows.iter().map(|(r, _)| r.clone()))
            .collect::<Vec<_>>()
            .join("\n");
        let opts = GridParseOptions { days: Some(0..=days), ..options(ParseMode::Permissive) };
        let report = parse_grid_pings(text.as_bytes(), &GridLayout::default(), &opts).unwrap();
        let good = rows.iter().filter(|(_, ok)| *ok).count() as u64;
        prop_assert_eq!(report.accepted() + report.filtered + report.rejected, rows.len() as u64);
        prop_assert_eq!(report.accepted() + report.filtered, good);
        prop_assert!(report.records.iter().all(|p| p.day <= days));

        let strict = parse_grid_pings(text.as_bytes(), &GridLayout::default(), &options(ParseMode::Strict));
        prop_assert_eq!(strict.is_ok(), good == rows.len() as u64);
    }

    #[test]
    fn raster_csv_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        let values: Vec<u64> = (0..w * h).map(|i| (seed.rotate_left(i as u32 % 64) ^ i as u64) % 1000).collect();
        let raster = ActivityRaster::from_values(w, h, values, CountMode::Records).unwrap();
        let mut buf = Vec::new();
        write_raster_csv(&mut buf, &raster, Some("abc")).unwrap();
        prop_assert_eq!(read_raster_csv(buf.as_slice(), Some((w, h))).unwrap(), raster);
    }

    #[test]
    fn pgm_round_trip(w in 1usize..40, h in 1usize..40, seed in any::<u64>()) {
        let img = BinaryImage::from_fn(w, h, |x, y| (seed >> ((x * 7 + y * 13) % 64)) & 1 == 1);
        let mut buf = Vec::new();
        write_pgm(&mut buf, &img, Some("config_digest=0")).unwrap();
        prop_assert_eq!(read_pgm(buf.as_slice()).unwrap(), img);
    }

    #[test]
    fn grid_geojson_recovers_the_spec(
        lat in -60.0f64..60.0,
        lon in -170.0f64..170.0,
        sx in 0.8f64..1.25,
        sy in 0.8f64..1.25,
        w in 1u32..6,
        h in 1u32..6,
        d in 0usize..8,
    ) {
        let element = Dihedral::ALL[d];
        let spec = GridSpec::new(lat, lon, 500.0, w, h, lat + 0.3).with_scales(sx, sy);
        let (dw, dh) = if element.swaps_axes() { (h, w) } else { (w, h) };
        let activity = ActivityRaster::zeros(dw as usize, dh as usize, CountMode::Records);
        let grid = GeoreferencedGrid::new(spec, element, activity).unwrap();
        let mut buf = Vec::new();
        write_grid_geojson(&mut buf, &grid, &serde_json::json!({})).unwrap();
        let back = spec_from_geojson(&serde_json::from_slice(&buf).unwrap()).unwrap();
        prop_assert!((back.anchor_lat - lat).abs() < 1e-9);
        prop_assert!((back.anchor_lon - lon).abs() < 1e-9);
        prop_assert!((back.scale_x - sx).abs() < 1e-7 && (back.scale_y - sy).abs() < 1e-7);
        prop_assert_eq!((back.width_cells, back.height_cells), (w, h));
    }

    #[test]
    fn digest_ignores_output_and_threads(out in "[a-z/]{0,12}", threads in 1usize..64, seed in any::<u64>()) {
        let mut a = RunConfig { seed, ..RunConfig::default() };
        let digest = a.digest();
        a.out = Some(out.into());
        a.threads = Some(threads);
        prop_assert_eq!(a.digest(), digest);
    }
}
