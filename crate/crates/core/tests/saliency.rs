use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use samm2d::autodiff::{Graph, Tensor};
use samm2d::imaging::{preprocess_study, AugmentRegime, Image2D, Mask2D, PreprocConfig};
use samm2d::model::{EncoderConfig, ModelConfig, Samm2dModel};
use samm2d::saliency::*;
use samm2d::synthgen::{gen_study, GenParams};
use samm2d::Error;

fn noise_image(seed: u64, side: usize) -> Image2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image2D::from_fn(side, side, |_, _| rng.random_range(-1.0..2.0))
}

fn small_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            stage_channels: vec![4, 8, 16],
            ..EncoderConfig::default()
        },
        pyramid_grids: vec![1, 2],
        ..ModelConfig::default()
    }
}

/// Independent half-pixel bilinear upsampling.
fn upsample(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            let y = ((r as f64 + 0.5) * h as f64 / oh as f64 - 0.5)
                .max(0.0)
                .min((h - 1) as f64);
            let x = ((c as f64 + 0.5) * w as f64 / ow as f64 - 0.5)
                .max(0.0)
                .min((w - 1) as f64);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (y - y0 as f64, x - x0 as f64);
            out[r * ow + c] = src[y0 * w + x0] * (1.0 - fy) * (1.0 - fx)
                + src[y0 * w + x1] * (1.0 - fy) * fx
                + src[y1 * w + x0] * fy * (1.0 - fx)
                + src[y1 * w + x1] * fy * fx;
        }
    }
    out
}

#[test]
fn zero_model_gives_zero_heatmap() {
    let model = Samm2dModel::<f32>::zeroed(small_config()).unwrap();
    let h = gradcam(&model, &noise_image(1, 32), &SaliencyConfig::default()).unwrap();
    assert!(h.values.pixels().iter().all(|&v| v == 0.0));
    assert_eq!(h.stage, 3);
}

#[test]
fn heatmaps_are_normalised_and_non_negative() {
    let model = Samm2dModel::<f32>::new(small_config(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    for seed in 0..6 {
        for stage in 1..=3 {
            let cfg = SaliencyConfig {
                stage: Some(stage),
                ..SaliencyConfig::default()
            };
            let h = gradcam(&model, &noise_image(seed, 32), &cfg).unwrap();
            let px = h.values.pixels();
            assert!(px.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let max = px.iter().cloned().fold(0.0, f32::max);
            assert!(max == 0.0 || max == 1.0, "{max}");
            assert_eq!((h.values.height(), h.values.width()), (32, 32));
        }
    }
}

#[test]
fn single_channel_closed_form() {
    let cfg = ModelConfig {
        encoder: EncoderConfig {
            stage_channels: vec![1, 2],
            ..EncoderConfig::default()
        },
        pyramid_grids: vec![1],
        pyramid_stages: Some(vec![1]),
        head_dims: Some(vec![2, 1]),
        ..ModelConfig::default()
    };
    let mut model = Samm2dModel::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let w1 = 0.7f32;
    model.head_mut().layers[0]
        .weight
        .data_mut()
        .copy_from_slice(&[w1, -0.3]);
    let image = noise_image(3, 16);

    let mut g = Graph::<f32>::new();
    let bound = model.bind_frozen(&mut g);
    let x = g.constant(Tensor::new(&[1, 1, 16, 16], image.pixels().to_vec()).unwrap());
    let maps = bound.encode(&mut g, 1, x).unwrap();
    let a: Vec<f64> = g.value(maps[0]).data().iter().map(|&v| v as f64).collect();
    assert_eq!(g.shape(maps[0]), &[1, 1, 8, 8]);

    let cam: Vec<f64> = a.iter().map(|&v| (w1 as f64 * v / 64.0).max(0.0)).collect();
    let up = upsample(&cam, 8, 8, 16, 16);
    let max = up.iter().cloned().fold(0.0, f64::max);
    assert!(max > 0.0);

    let cfg = SaliencyConfig {
        stage: Some(1),
        ..SaliencyConfig::default()
    };
    let h = gradcam(&model, &image, &cfg).unwrap();
    for (got, want) in h.values.pixels().iter().zip(&up) {
        assert!(
            (*got as f64 - want / max).abs() < 1e-5,
            "{got} vs {}",
            want / max
        );
    }
}

#[test]
fn invariant_to_positive_rescale_of_last_layer() {
    let model = Samm2dModel::<f32>::new(small_config(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let mut scaled = model.clone();
    let last = scaled.head().layers.len() - 1;
    scaled.head_mut().layers[last]
        .weight
        .data_mut()
        .iter_mut()
        .for_each(|w| *w *= 3.5);
    for seed in 0..4 {
        let img = noise_image(seed + 10, 32);
        let a = gradcam(&model, &img, &SaliencyConfig::default()).unwrap();
        let b = gradcam(&scaled, &img, &SaliencyConfig::default()).unwrap();
        for (x, y) in a.values.pixels().iter().zip(b.values.pixels()) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}

#[test]
fn rejects_nan_parameters_and_bad_stage() {
    let mut model =
        Samm2dModel::<f32>::new(small_config(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let img = noise_image(0, 32);
    let cfg = SaliencyConfig {
        stage: Some(4),
        ..SaliencyConfig::default()
    };
    assert!(matches!(
        gradcam(&model, &img, &cfg),
        Err(Error::InvalidArgument(_))
    ));
    model.head_mut().layers[0].bias.data_mut()[0] = f32::NAN;
    assert!(matches!(
        gradcam(&model, &img, &SaliencyConfig::default()),
        Err(Error::NonFinite(_))
    ));
}

#[test]
fn iou_examples() {
    let mask = Mask2D::from_fn(4, 4, |r, c| r == 0 && c < 2);
    let map = Image2D::from_fn(4, 4, |r, c| {
        if r == 0 && (c == 1 || c == 2) {
            0.9
        } else {
            0.1
        }
    });
    assert!((iou(&map, &mask, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(iou(&mask.to_image(), &mask, 0.5).unwrap(), 1.0);
    let far = Image2D::from_fn(4, 4, |r, _| if r == 3 { 1.0 } else { 0.0 });
    assert_eq!(iou(&far, &mask, 0.5).unwrap(), 0.0);
    assert!(iou(&Image2D::filled(3, 4, 0.0), &mask, 0.5).is_err());
}

fn positive_samples(n: u64) -> Vec<samm2d::imaging::Sample> {
    let params = GenParams {
        dims: [32, 32, 32],
        ..GenParams::default()
    };
    let pre = PreprocConfig {
        crop: 32,
        ..PreprocConfig::default()
    };
    (0..n)
        .map(|s| {
            let study = gen_study(s, &params, Some(samm2d::imaging::Label::Positive)).unwrap();
            preprocess_study(
                &study,
                &pre,
                &AugmentRegime::none(),
                &mut ChaCha8Rng::seed_from_u64(s),
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn random_baseline_iou_is_low() {
    let samples = positive_samples(40);
    let stats = random_baseline(&samples, &SaliencyConfig::default()).unwrap();
    assert_eq!(stats.n_cases, 40);
    assert!(stats.mean_iou < 0.1, "{stats:?}");
}

#[test]
fn attention_report_schema() {
    let samples = positive_samples(6);
    let model = Samm2dModel::<f32>::zeroed(small_config()).unwrap();
    // a zero model predicts exactly 0.5, so every positive is a true positive at tau 0.5
    let cfg = SaliencyConfig {
        n_cases: 4,
        ..SaliencyConfig::default()
    };
    let r = attention_report(&model, &samples, &cfg).unwrap();
    assert_eq!((r.stats.n_cases, r.available_tp, r.requested), (4, 6, 4));
    let json = serde_json::to_value(&r.stats).unwrap();
    let mut keys: Vec<&str> = json
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        ["binarize_theta", "frac_tp_on_target", "mean_iou", "n_cases"]
    );
    let again = attention_report(&model, &samples, &cfg).unwrap();
    assert_eq!(r.cases, again.cases);
}

proptest! {
    #[test]
    fn iou_is_symmetric(a in prop::collection::vec(any::<bool>(), 20), b in prop::collection::vec(any::<bool>(), 20)) {
        let ma = Mask2D::new(4, 5, a).unwrap();
        let mb = Mask2D::new(4, 5, b).unwrap();
        let x = mask_iou(&ma, &mb).unwrap();
        prop_assert_eq!(x, mask_iou(&mb, &ma).unwrap());
        prop_assert!((0.0..=1.0).contains(&x));
    }
}
