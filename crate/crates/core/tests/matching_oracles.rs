use gridsleuth_core::matching::{
    match_accelerated, match_template, resample, score, search_transforms, Method, SearchConfig,
};
use gridsleuth_core::{BinaryImage, Dihedral};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const METHODS: [Method; 3] = [Method::Hamming, Method::Jaccard, Method::Zncc];

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> BinaryImage {
    BinaryImage::from_fn(w, h, |_, _| rng.random_bool(density))
}

/// Score straight from the definitions, one pixel at a time, in floating point.
fn reference_score(bg: &BinaryImage, t: &BinaryImage, ox: usize, oy: usize, method: Method) -> f64 {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for y in 0..t.height() {
        for x in 0..t.width() {
            a.push(t.get(x, y));
            b.push(bg.get(ox + x, oy + y));
        }
    }
    let n = a.len() as f64;
    match method {
        Method::Hamming => a.iter().zip(&b).filter(|(p, q)| p == q).count() as f64 / n,
        Method::Jaccard => {
            let inter = a.iter().zip(&b).filter(|(p, q)| **p && **q).count();
            let union = a.iter().zip(&b).filter(|(p, q)| **p || **q).count();
            if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            }
        }
        Method::Zncc => {
            let fa: Vec<f64> = a.iter().map(|&v| v as u8 as f64).collect();
            let fb: Vec<f64> = b.iter().map(|&v| v as u8 as f64).collect();
            let ma = fa.iter().sum::<f64>() / n;
            let mb = fb.iter().sum::<f64>() / n;
            let va: f64 = fa.iter().map(|v| (v - ma).powi(2)).sum();
            let vb: f64 = fb.iter().map(|v| (v - mb).powi(2)).sum();
            if va == 0.0 || vb == 0.0 {
                return 0.5;
            }
            let cov: f64 = fa.iter().zip(&fb).map(|(x, y)| (x - ma) * (y - mb)).sum();
            0.5 * (cov / (va * vb).sqrt() + 1.0)
        }
    }
}

/// Exhaustive argmax on the reference score, same tie-break (top row, then left).
fn brute_force(bg: &BinaryImage, t: &BinaryImage, method: Method) -> (usize, usize) {
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for oy in 0..=bg.height() - t.height() {
        for ox in 0..=bg.width() - t.width() {
            let s = reference_score(bg, t, ox, oy, method);
            // Reference scores may differ from the production ones in the last
            // ulp; compare with a tolerance far below any real score gap.
            if s > best.0 + 1e-12 {
                best = (s, ox, oy);
            }
        }
    }
    (best.1, best.2)
}

#[test]
fn score_matches_per_pixel_reference_on_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let bg = random_image(&mut rng, 8, 8, 0.5);
        let t = random_image(&mut rng, 8, 8, 0.5);
        for m in METHODS {
            let fast = score(&bg, &t, (0, 0), m).unwrap();
            let slow = reference_score(&bg, &t, 0, 0, m);
            assert!((fast - slow).abs() <= 1e-12, "{m:?}: {fast} vs {slow}");
        }
    }
}

#[test]
fn match_template_equals_brute_force_on_100_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..100 {
        let bg = random_image(&mut rng, 32, 32, 0.45);
        let t = random_image(&mut rng, 8, 8, 0.45);
        let method = METHODS[i % 3];
        let m = match_template(&bg, &t, method).unwrap();
        assert_eq!((m.offset_x, m.offset_y), brute_force(&bg, &t, method), "instance {i} {method:?}");
    }
}

#[test]
fn accelerated_equals_naive_on_50_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..50 {
        let bw = rng.random_range(1..200);
        let bh = rng.random_range(1..40);
        let tw = rng.random_range(1..=bw.min(130));
        let th = rng.random_range(1..=bh);
        let density = rng.random_range(0.05..0.95);
        let bg = random_image(&mut rng, bw, bh, density);
        let t = if i % 4 == 0 {
            let x = rng.random_range(0..=bw - tw);
            let y = rng.random_range(0..=bh - th);
            bg.crop(x, y, tw, th).unwrap()
        } else {
            random_image(&mut rng, tw, th, 0.5)
        };
        let method = METHODS[i % 3];
        let fast = match_accelerated(&bg, &t, method).unwrap();
        let slow = match_template(&bg, &t, method).unwrap();
        assert_eq!(fast, slow, "instance {i}: bg {bw}x{bh}, t {tw}x{th}, {method:?}");
        assert_eq!(fast.score.to_bits(), slow.score.to_bits());
    }
}

#[test]
fn dihedral_group_axioms_on_random_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10 {
        let w = rng.random_range(1..12);
        let h = rng.random_range(1..12);
        let img = random_image(&mut rng, w, h, 0.5);
        assert_eq!(
            img.transformed(Dihedral::Rot90).transformed(Dihedral::Rot90),
            img.transformed(Dihedral::Rot180)
        );
        for a in Dihedral::ALL {
            assert_eq!(img.transformed(Dihedral::Identity.then(a)), img.transformed(a));
            assert_eq!(img.transformed(a).transformed(a.inverse()), img);
            for b in Dihedral::ALL {
                // closure and agreement of the composed element with sequential application
                assert_eq!(img.transformed(a).transformed(b), img.transformed(a.then(b)));
                for c in Dihedral::ALL {
                    assert_eq!(a.then(b).then(c), a.then(b.then(c)));
                }
            }
        }
    }
    // eight distinct actions
    let probe = BinaryImage::from_fn(3, 2, |x, y| x == 0 && y == 0 || x == 1 && y == 0);
    let mut seen: Vec<BinaryImage> = Dihedral::ALL.iter().map(|&d| probe.transformed(d)).collect();
    seen.sort_by_key(|i| format!("{i:?}"));
    seen.dedup();
    assert_eq!(seen.len(), 8);
}

fn blobby(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryImage {
    let blobs: Vec<(f64, f64, f64)> = (0..8)
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(3.0..(w.min(h) as f64 / 4.0)),
            )
        })
        .collect();
    BinaryImage::from_fn(w, h, |x, y| {
        blobs
            .iter()
            .any(|(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) < r * r)
    })
}

#[test]
fn search_recovers_dihedral_and_stretch() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let truth = blobby(&mut rng, 90, 80);
    let (ox, oy) = (20, 15);
    let grid_view = truth.crop(ox, oy, 48, 40).unwrap();
    // The published grid is rotated; the map we hold is squeezed.
    let template = grid_view.transformed(Dihedral::Rot180);
    let background = resample(&truth, 1.0 / 1.1, 1.0 / 0.9).unwrap();
    let found = search_transforms(&background, &template, &SearchConfig::default()).unwrap();
    assert_eq!(found.dihedral, Dihedral::Rot180);
    assert!((found.scale_x - 1.1).abs() <= 0.05 + 1e-9, "{found:?}");
    assert!((found.scale_y - 0.9).abs() <= 0.05 + 1e-9, "{found:?}");
    assert!((found.offset_x as f64 - ox as f64).abs() <= 2.0, "{found:?}");
    assert!((found.offset_y as f64 - oy as f64).abs() <= 2.0, "{found:?}");
}

#[test]
fn identity_case_yields_unit_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let bg = blobby(&mut rng, 70, 60);
    let t = bg.crop(12, 9, 40, 30).unwrap();
    let found = search_transforms(&bg, &t, &SearchConfig::default()).unwrap();
    assert_eq!((found.scale_x, found.scale_y), (1.0, 1.0));
    assert_eq!(found.dihedral, Dihedral::Identity);
    assert_eq!((found.offset_x, found.offset_y, found.score), (12, 9, 1.0));
}

#[test]
fn refinement_never_loses_to_coarse() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let truth = blobby(&mut rng, 80, 80);
    let t = truth.crop(10, 10, 40, 40).unwrap();
    let bg = resample(&truth, 1.0 / 1.07, 1.0 / 0.93).unwrap();
    let coarse = search_transforms(&bg, &t, &SearchConfig::default()).unwrap();
    let fine = search_transforms(&bg, &t, &SearchConfig::default().with_refinement(0.01, 0.05)).unwrap();
    assert!(fine.score >= coarse.score);
    assert!((fine.scale_x - 1.07).abs() <= 0.03, "{fine:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_stay_in_unit_interval(seed in any::<u64>(), w in 1usize..10, h in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bg = random_image(&mut rng, w + 3, h + 2, 0.5);
        let t = random_image(&mut rng, w, h, 0.5);
        for m in METHODS {
            let s = score(&bg, &t, (1, 1), m).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
        }
        prop_assert_eq!(score(&t, &t, (0, 0), Method::Hamming).unwrap(), 1.0);
    }

    #[test]
    fn accelerated_is_bit_exact(seed in any::<u64>(), bw in 1usize..150, bh in 1usize..12, tw in 1usize..100, th in 1usize..12) {
        let (tw, th) = (tw.min(bw), th.min(bh));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bg = random_image(&mut rng, bw, bh, 0.5);
        let t = random_image(&mut rng, tw, th, 0.5);
        for m in METHODS {
            prop_assert_eq!(match_accelerated(&bg, &t, m).unwrap(), match_template(&bg, &t, m).unwrap());
        }
    }
}
