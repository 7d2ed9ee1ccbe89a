use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use samm2d::imaging::*;
use samm2d::synthgen::{gen_study, GenParams};
use samm2d::{Error, FormatError};
use samm2d_oracles as oracle;

fn random_volume(dims: [usize; 3], seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    Volume::new(
        dims,
        [1.0, 1.0, 1.0],
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .unwrap()
}

fn random_image(h: usize, w: usize, seed: u64) -> Image2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image2D::new(
        h,
        w,
        (0..h * w).map(|_| rng.random_range(-3.0..5.0)).collect(),
    )
    .unwrap()
}

fn as_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

#[test]
fn volume_file_roundtrip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.mvol");
    let vol = random_volume([5, 6, 7], 1);
    write_volume(&path, &vol).unwrap();
    assert_eq!(read_volume(&path).unwrap(), vol);

    let good = encode_volume(&vol);

    let mut corrupt = good.clone();
    corrupt[40] ^= 0x01;
    assert!(matches!(
        decode_volume(&corrupt),
        Err(Error::Format(FormatError::Crc { .. }))
    ));

    assert!(matches!(
        decode_volume(&good[..10]),
        Err(Error::Format(FormatError::Truncated { .. }))
    ));
    assert!(matches!(
        decode_volume(&good[..good.len() - 9]),
        Err(Error::Format(FormatError::Truncated { .. }))
    ));

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(
        decode_volume(&magic),
        Err(Error::Format(FormatError::BadMagic { .. }))
    ));

    assert!(matches!(
        read_volume(dir.path().join("missing.mvol")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn sample_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.mip2");
    let image = random_image(6, 4, 2);
    let mask = Mask2D::from_fn(6, 4, |r, c| r == c);
    let s = Sample {
        image,
        label: Some(Label::Positive),
        view: View::Sagittal,
        mask: Some(mask),
    };
    write_sample(&path, &s).unwrap();
    assert_eq!(read_sample(&path).unwrap(), s);

    let mut bytes = encode_sample(&s);
    let n = bytes.len();
    bytes[n - 6] ^= 0x01;
    assert!(matches!(
        decode_sample(&bytes),
        Err(Error::Format(FormatError::Crc { .. }))
    ));
    assert!(matches!(
        decode_volume(&encode_sample(&s)),
        Err(Error::Format(FormatError::BadMagic { .. }))
    ));
}

#[test]
fn mip_constant_volume() {
    let vol = Volume::filled([4, 5, 6], 0.7);
    for (view, h, w) in [
        (View::Axial, 5, 4),
        (View::Coronal, 6, 4),
        (View::Sagittal, 6, 5),
    ] {
        let img = mip_project(&vol, view);
        assert_eq!((img.height(), img.width()), (h, w));
        assert!(img.pixels().iter().all(|&v| v == 0.7));
    }
}

#[test]
fn mip_single_bright_voxel() {
    let mut vol = Volume::filled([6, 7, 8], 0.0);
    vol.set(2, 3, 5, 9.0);
    for (view, at) in [
        (View::Axial, (3, 2)),
        (View::Coronal, (5, 2)),
        (View::Sagittal, (5, 3)),
    ] {
        let img = mip_project(&vol, view);
        let bright: Vec<usize> = (0..img.pixels().len())
            .filter(|&i| img.pixels()[i] > 0.0)
            .collect();
        assert_eq!(bright, vec![at.0 * img.width() + at.1], "{view}");
    }
}

#[test]
fn mip_matches_max_oracle() {
    for seed in 0..20 {
        let dims = [8 + seed as usize % 3, 8, 8 + seed as usize % 4];
        let vol = random_volume(dims, seed);
        let v = as_f64(vol.voxels());
        for (view, axis) in [(View::Axial, 2), (View::Coronal, 1), (View::Sagittal, 0)] {
            let got = as_f64(mip_project(&vol, view).pixels());
            assert_eq!(
                got,
                oracle::axis_max(&v, dims[0], dims[1], dims[2], axis),
                "{view}"
            );
        }
    }
}

#[test]
fn oblique_view_keeps_centre_column() {
    let mut vol = Volume::filled([9, 9, 4], 0.0);
    vol.set(4, 4, 2, 3.0);
    let img = mip_project(&vol, View::Oblique45);
    assert_eq!((img.height(), img.width()), (4, 9));
    assert!((img.get(2, 4) - 3.0).abs() < 1e-5);
}

#[test]
fn salience_examples() {
    assert_eq!(salience_score(&Image2D::filled(4, 4, 2.5), 2.0), 0.0);
    let mut px = vec![0.0f32; 100];
    px[17] = 1000.0;
    let img = Image2D::new(10, 10, px).unwrap();
    assert!((salience_score(&img, 2.0) - 0.01).abs() < 1e-12);
    for seed in 0..10 {
        let img = random_image(9, 11, seed);
        assert_eq!(
            salience_score(&img, 1.5),
            oracle::tail_fraction(&as_f64(img.pixels()), 1.5)
        );
    }
}

#[test]
fn best_view_is_argmax_of_all_scores() {
    let mut tube = Volume::filled([20, 20, 20], 0.0);
    for z in 0..20 {
        tube.set(10, 6, z, 1.0);
    }
    for vol in [tube, random_volume([12, 12, 12], 4)] {
        let best = select_best_mip(&vol, &View::ALL, 2.0).unwrap();
        let scores: Vec<f64> = View::ALL
            .iter()
            .map(|&v| salience_score(&mip_project(&vol, v), 2.0))
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best.score, max);
        let first = View::ALL[scores.iter().position(|&s| s == max).unwrap()];
        assert_eq!(best.view, first);
    }
    let flat = select_best_mip(
        &Volume::filled([4, 4, 4], 1.0),
        &[View::Sagittal, View::Axial],
        2.0,
    )
    .unwrap();
    assert_eq!(flat.view, View::Axial);
}

#[test]
fn percentile_clip_examples() {
    let img = Image2D::new(10, 10, (1..=100).map(|v| v as f32).collect()).unwrap();
    let out = percentile_clip(&img, 0.0, 50.0).unwrap();
    assert!(out.pixels().iter().all(|&v| v <= 50.5));
    assert_eq!(out.get(9, 9), 50.5);
    assert_eq!(out.get(0, 0), 1.0);
    let flat = Image2D::filled(3, 3, 4.0);
    assert_eq!(percentile_clip(&flat, 0.5, 99.5).unwrap(), flat);
}

#[test]
fn percentiles_match_sort_oracle() {
    for seed in 0..50 {
        let img = random_image(3 + seed as usize % 5, 7, seed);
        let v = as_f64(img.pixels());
        let lo = (seed % 10) as f64 * 1.7;
        let hi = 100.0 - (seed % 7) as f64 * 3.1;
        let (a, b) = percentiles(img.pixels(), lo, hi).unwrap();
        assert!((a - oracle::percentile(&v, lo)).abs() < 1e-9);
        assert!((b - oracle::percentile(&v, hi)).abs() < 1e-9);
    }
}

#[test]
fn zscore_examples() {
    let flat = zscore(&Image2D::filled(2, 3, 5.0));
    assert!(flat.pixels().iter().all(|&v| v == 0.0));
    let pair = zscore(&Image2D::new(1, 2, vec![0.0, 2.0]).unwrap());
    assert_eq!(pair.pixels(), &[-1.0, 1.0]);
    for seed in 0..10 {
        let z = zscore(&random_image(16, 16, seed));
        let (m, s) = oracle::moments(&as_f64(z.pixels()));
        assert!(m.abs() < 1e-5 && (s - 1.0).abs() < 1e-4);
    }
}

#[test]
fn crop_examples() {
    let img = Image2D::from_fn(4, 4, |r, c| (r * 4 + c) as f32);
    assert_eq!(center_crop(&img, 4).unwrap(), img);
    assert_eq!(
        center_crop(&img, 2).unwrap().pixels(),
        &[5.0, 6.0, 9.0, 10.0]
    );
    let c = center_crop(&random_image(9, 12, 0), 5).unwrap();
    assert_eq!(center_crop(&c, 5).unwrap(), c);
}

#[test]
fn augmentation_regimes() {
    let img = random_image(16, 16, 9);
    let cfg = AugmentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(
        augment(
            &img,
            &AugmentRegime::new(RegimeId::None, &cfg).unwrap(),
            &mut rng
        ),
        img
    );

    for id in [RegimeId::Geometric, RegimeId::Intensity, RegimeId::Combined] {
        let regime = AugmentRegime::new(id, &cfg).unwrap();
        let a = augment(&img, &regime, &mut ChaCha8Rng::seed_from_u64(5));
        let b = augment(&img, &regime, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b, "{id} must be deterministic in the rng");
        assert_ne!(a, img, "{id} should change the image");
        assert_eq!((a.height(), a.width()), (16, 16));
    }

    let a4 = AugmentRegime::new(RegimeId::Combined, &cfg).unwrap();
    for id in [RegimeId::HighGamma, RegimeId::HighLr] {
        let r = AugmentRegime::new(id, &cfg).unwrap();
        assert_eq!((r.geometric, r.intensity), (a4.geometric, a4.intensity));
    }

    let flip_only = AugmentConfig {
        geometric: GeometricParams {
            hflip_p: 1.0,
            ..GeometricParams::identity()
        },
        intensity: IntensityParams::identity(),
    };
    let r = AugmentRegime::new(RegimeId::Geometric, &flip_only).unwrap();
    let once = augment(&img, &r, &mut rng);
    assert_eq!(once.get(3, 0), img.get(3, 15));
    assert_eq!(augment(&once, &r, &mut rng), img);
}

#[test]
fn augmenter_counts_only_real_transforms() {
    let img = random_image(8, 8, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut none = Augmenter::new(AugmentRegime::none());
    let mut combined =
        Augmenter::new(AugmentRegime::new(RegimeId::Combined, &AugmentConfig::default()).unwrap());
    for _ in 0..5 {
        none.apply(&img, &mut rng);
        combined.apply(&img, &mut rng);
    }
    assert_eq!((none.calls(), combined.calls()), (0, 5));
}

#[test]
fn preprocess_study_shapes_and_masks() {
    let params = GenParams {
        dims: [32, 32, 32],
        ..GenParams::default()
    };
    let cfg = PreprocConfig {
        crop: 28,
        ..PreprocConfig::default()
    };
    let none = AugmentRegime::none();
    for seed in 0..100 {
        let study = gen_study(seed, &params, Some(Label::Positive)).unwrap();
        let a =
            preprocess_study(&study, &cfg, &none, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert_eq!((a.image.height(), a.image.width()), (28, 28));
        assert_eq!(a.label, Some(Label::Positive));
        let mask = a.mask.as_ref().expect("positive study keeps its mask");
        assert!(mask.count() > 0, "seed {seed}: mask cropped away");
        if seed < 3 {
            let b =
                preprocess_study(&study, &cfg, &none, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
            assert_eq!(a, b);
        }
    }
    let neg = gen_study(1, &params, Some(Label::Negative)).unwrap();
    let s = preprocess_study(&neg, &cfg, &none, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(s.mask.is_none());
}

#[test]
fn default_params_positive_masks_survive_crop() {
    let params = GenParams::default();
    let cfg = PreprocConfig {
        crop: 56,
        ..PreprocConfig::default()
    };
    for seed in 0..20 {
        let study = gen_study(1000 + seed, &params, Some(Label::Positive)).unwrap();
        let s = preprocess_study(
            &study,
            &cfg,
            &AugmentRegime::none(),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!(s.mask.unwrap().count() > 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clip_is_idempotent_at_rank_percentiles(seed in 0u64..10_000, h in 2usize..12, w in 1usize..12, a in 0usize..1000, b in 0usize..1000) {
        let img = random_image(h, w, seed);
        let last = h * w - 1;
        let (ka, kb) = (a % (last + 1), b % (last + 1));
        let (ka, kb) = (ka.min(kb).min(last - 1), ka.max(kb));
        let kb = kb.max(ka + 1);
        prop_assert!(ka < kb);
        let (lo, hi) = (100.0 * ka as f64 / last as f64, 100.0 * kb as f64 / last as f64);
        let once = percentile_clip(&img, lo, hi).unwrap();
        prop_assert_eq!(percentile_clip(&once, lo, hi).unwrap(), once);
    }

    #[test]
    fn second_clip_never_widens(seed in 0u64..10_000, h in 1usize..12, w in 1usize..12, lo in 0.0f64..40.0, span in 1.0f64..60.0) {
        let img = random_image(h, w, seed);
        let hi = (lo + span).min(100.0);
        let (a, b) = percentiles(img.pixels(), lo, hi).unwrap();
        let once = percentile_clip(&img, lo, hi).unwrap();
        let twice = percentile_clip(&once, lo, hi).unwrap();
        for (x, y) in once.pixels().iter().zip(twice.pixels()) {
            prop_assert!(*y as f64 >= a - 1e-6 && *y as f64 <= b + 1e-6);
            prop_assert!((x - y).abs() <= (x - a as f32).abs().max((x - b as f32).abs()) + 1e-6);
        }
    }

    #[test]
    fn zscore_is_affine_invariant(seed in 0u64..10_000, a in 0.1f32..10.0, b in -5.0f32..5.0) {
        let img = random_image(7, 9, seed);
        let scaled = Image2D::new(7, 9, img.pixels().iter().map(|&v| a * v + b).collect()).unwrap();
        let (z1, z2) = (zscore(&img), zscore(&scaled));
        for (x, y) in z1.pixels().iter().zip(z2.pixels()) {
            prop_assert!((x - y).abs() < 1e-4, "{} vs {}", x, y);
        }
    }

    #[test]
    fn salience_is_affine_invariant(seed in 0u64..10_000, a in 0.5f32..4.0, b in -2.0f32..2.0) {
        let mut img = random_image(10, 10, seed);
        img.pixels_mut()[seed as usize % 100] = 40.0;
        let scaled = Image2D::new(10, 10, img.pixels().iter().map(|&v| a * v + b).collect()).unwrap();
        prop_assert_eq!(salience_score(&img, 2.0), salience_score(&scaled, 2.0));
    }

    #[test]
    fn axis_views_equal_max_oracle(seed in 0u64..10_000, nx in 2usize..7, ny in 2usize..7, nz in 2usize..7) {
        let vol = random_volume([nx, ny, nz], seed);
        let v = as_f64(vol.voxels());
        for (view, axis) in [(View::Axial, 2), (View::Coronal, 1), (View::Sagittal, 0)] {
            prop_assert_eq!(as_f64(mip_project(&vol, view).pixels()), oracle::axis_max(&v, nx, ny, nz, axis));
        }
    }

    #[test]
    fn identity_augmentation_is_exact(seed in 0u64..10_000, regime in 0usize..6) {
        let cfg = AugmentConfig {
            geometric: GeometricParams::identity(),
            intensity: IntensityParams::identity(),
        };
        let img = random_image(5, 6, seed);
        let r = AugmentRegime::new(RegimeId::ALL[regime], &cfg).unwrap();
        prop_assert_eq!(augment(&img, &r, &mut ChaCha8Rng::seed_from_u64(seed)), img);
    }
}
