use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use samm2d::imaging::{Image2D, Label, RegimeId, Sample, View};
use samm2d::model::{EncoderConfig, ModelConfig, ParamGroup};
use samm2d::training::*;
use samm2d::Error;

/// Positives carry a bright 4×4 square at a random position.
fn toy_samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let (r0, c0) = (rng.random_range(2..10), rng.random_range(2..10));
            let mut noise = ChaCha8Rng::seed_from_u64(seed * 1000 + i as u64);
            let image = Image2D::from_fn(16, 16, |r, c| {
                let blob = positive && (r0..r0 + 4).contains(&r) && (c0..c0 + 4).contains(&c);
                noise.random_range(-0.5..0.5) + if blob { 2.5 } else { 0.0 }
            });
            Sample {
                image,
                label: Some(if positive {
                    Label::Positive
                } else {
                    Label::Negative
                }),
                view: View::Axial,
                mask: None,
            }
        })
        .collect()
}

fn toy_setup(epochs: usize) -> TrainSetup {
    let model = ModelConfig {
        encoder: EncoderConfig {
            stage_channels: vec![4, 8],
            ..EncoderConfig::default()
        },
        pyramid_grids: vec![1],
        head_dims: Some(vec![24, 8, 1]),
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut s = TrainSetup {
        model,
        ..TrainSetup::default()
    };
    s.train.epochs_max = epochs;
    s.train.batch_size = 8;
    s.train.early_stop_patience = epochs;
    s.optim.encoder_lr = 3e-3;
    s.optim.head_lr = 3e-3;
    s.optim.warmup_epochs = 1.0;
    s.train.folds = 3;
    s
}

fn split(samples: &[Sample]) -> (LabeledImages<'_>, LabeledImages<'_>) {
    let n = samples.len();
    let tr: Vec<usize> = (0..n * 3 / 4).collect();
    let va: Vec<usize> = (n * 3 / 4..n).collect();
    (
        LabeledImages::select(samples, &tr).unwrap(),
        LabeledImages::select(samples, &va).unwrap(),
    )
}

#[test]
fn kfold_example_sizes() {
    let labels: Vec<u8> = (0..13).map(|i| u8::from(i < 5)).collect();
    let s = stratified_kfold(&labels, 5, 1).unwrap();
    let mut sizes = s.fold_sizes();
    sizes.sort_unstable();
    assert_eq!(sizes, [2, 2, 3, 3, 3]);
    for f in 0..5 {
        let (_, held) = s.fold(f);
        assert_eq!(held.iter().filter(|&&i| labels[i] == 1).count(), 1);
    }
    assert!(stratified_kfold(&labels, 6, 1).is_err());
    assert!(stratified_kfold(&labels, 1, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kfold_partitions_and_stratifies(pos in 3usize..40, neg in 3usize..60, k in 2usize..4, seed in any::<u64>()) {
        let mut labels = vec![1u8; pos];
        labels.extend(vec![0u8; neg]);
        let s = stratified_kfold(&labels, k, seed).unwrap();
        let mut seen = vec![0usize; labels.len()];
        for f in 0..k {
            let (train, held) = s.fold(f);
            prop_assert_eq!(train.len() + held.len(), labels.len());
            for &i in &held { seen[i] += 1; }
            let p = held.iter().filter(|&&i| labels[i] == 1).count();
            prop_assert!(p == pos / k || p == pos.div_ceil(k));
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = s.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(s, stratified_kfold(&labels, k, seed).unwrap());
    }

    #[test]
    fn early_stop_invariants(losses in prop::collection::vec(0.0f64..1.0, 1..40), patience in 1usize..6) {
        let mut es = EarlyStopping::new(patience, 0.0);
        let mut stopped_at = None;
        for (i, &l) in losses.iter().enumerate() {
            if es.update(i + 1, l).stop {
                stopped_at = Some(i + 1);
                break;
            }
        }
        let run = stopped_at.unwrap_or(losses.len());
        let seen = &losses[..run];
        let min = seen.iter().cloned().fold(f64::INFINITY, f64::min);
        let first_min = seen.iter().position(|&l| l == min).unwrap() + 1;
        prop_assert_eq!(es.best_epoch(), Some(first_min));
        prop_assert_eq!(es.best_loss(), min);
        if let Some(s) = stopped_at {
            prop_assert_eq!(s - first_min, patience);
        } else {
            prop_assert!(losses.len() - first_min < patience);
        }
    }
}

#[test]
fn early_stop_min_delta() {
    let mut es = EarlyStopping::new(2, 0.1);
    assert!(es.update(1, 1.0).new_best);
    assert!(!es.update(2, 0.95).stop);
    assert!(es.update(3, 0.93).stop);
    assert_eq!(es.best_epoch(), Some(3));
}

#[test]
fn training_descends_on_separable_toy() {
    let samples = toy_samples(48, 3);
    let (train, val) = split(&samples);
    let setup = toy_setup(20);
    let mut model = init_model(&setup).unwrap();
    let out = train_one(&mut model, &train, &val, &setup).unwrap();
    let r = &out.history.records;
    assert_eq!(r.len(), 20);
    assert!(
        r[19].train_loss < r[0].train_loss,
        "{} vs {}",
        r[19].train_loss,
        r[0].train_loss
    );
    assert_eq!(out.augment_calls, 0);
    assert_eq!(out.optimizer_steps, 20 * 36usize.div_ceil(8) as u64);

    let (min_epoch, min_loss) = r
        .iter()
        .map(|e| (e.epoch, e.val_loss.unwrap()))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    assert_eq!(out.best_epoch, min_epoch);
    assert_eq!(out.best_val_loss, min_loss);
    let again = evaluate(&out.best, &val, &setup).unwrap();
    assert!((again.loss - min_loss).abs() < 1e-12);
}

#[test]
fn training_is_deterministic() {
    let samples = toy_samples(24, 5);
    let (train, val) = split(&samples);
    let mut setup = toy_setup(3).for_regime(RegimeId::Combined);
    setup.model.dropout = 0.3;
    let run = || {
        let mut model = init_model(&setup).unwrap();
        let out = train_one(&mut model, &train, &val, &setup).unwrap();
        (out.history, model)
    };
    let (h1, m1) = run();
    let (h2, m2) = run();
    assert_eq!(h1, h2);
    assert_eq!(m1, m2);
    assert_eq!(h1.to_csv(&[]).unwrap(), h2.to_csv(&[]).unwrap());
}

#[test]
fn history_csv_columns() {
    let samples = toy_samples(16, 7);
    let (train, val) = split(&samples);
    let mut setup = toy_setup(2);
    setup.train.eval_every = 2;
    let mut model = init_model(&setup).unwrap();
    let out = train_one(&mut model, &train, &val, &setup).unwrap();
    let csv = out.history.to_csv(&["# x".into()]).unwrap();
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), HISTORY_COLUMNS.join(","));
    assert_eq!(lines.count(), 2);
    assert_eq!(out.history.records[0].val_loss, None);
    assert!(out.history.records[1].val_loss.is_some());
}

#[test]
fn single_class_validation_is_rejected() {
    let samples = toy_samples(16, 7);
    let train = LabeledImages::all(&samples).unwrap();
    let val = LabeledImages::select(&samples, &[0, 2, 4]).unwrap();
    let setup = toy_setup(1);
    let mut model = init_model(&setup).unwrap();
    assert!(matches!(
        train_one(&mut model, &train, &val, &setup),
        Err(Error::SingleClass(_))
    ));
}

#[test]
fn permuted_labels_keep_class_counts() {
    let samples = toy_samples(30, 1);
    let all = LabeledImages::all(&samples).unwrap();
    let p = all.with_permuted_labels(9);
    assert_ne!(p.labels, all.labels);
    let count = |l: &[u8]| l.iter().filter(|&&x| x == 1).count();
    assert_eq!(count(&p.labels), count(&all.labels));
}

#[test]
fn sample_sd_examples() {
    let m = MeanSd::of(&[0.9, 0.8, 0.7]);
    assert!((m.mean - 0.8).abs() < 1e-12);
    assert!((m.sd - 0.1).abs() < 1e-12);
    assert_eq!(MeanSd::of(&[0.75]).sd, 0.0);
}

#[test]
fn regime_overrides() {
    let base = toy_setup(1);
    let a5 = base.for_regime(RegimeId::HighGamma);
    assert_eq!(a5.effective_focal().gamma, 5.0);
    assert_eq!(a5.effective_optim(), base.optim);
    let a6 = base.for_regime(RegimeId::HighLr);
    for g in [ParamGroup::Encoder1, ParamGroup::Encoder2, ParamGroup::Head] {
        let want = base.optim.group_lr(g) * 10.0;
        assert!((a6.effective_optim().group_lr(g) - want).abs() <= 1e-15 * want);
    }
    assert_eq!(a6.effective_focal(), base.focal);
}

#[test]
fn cv_and_ablation_reports() {
    let samples = toy_samples(18, 2);
    let setup = toy_setup(1);
    let cv = run_cv(&samples, &setup).unwrap();
    assert_eq!(cv.folds.len(), 3);
    let csv = cv.to_csv(&[]).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], CV_COLUMNS.join(","));
    assert_eq!(rows.len(), 1 + 3 + 1);
    assert!(rows[4].starts_with("mean,"));
    let aucs: Vec<f64> = cv.folds.iter().map(|f| f.auc).collect();
    assert_eq!(cv.summary.auc, MeanSd::of(&aucs));
    assert_eq!(cv.folds.iter().map(|f| f.n_val).sum::<usize>(), 18);

    let ab = run_ablation(&samples, &setup, &RegimeId::ALL).unwrap();
    assert_eq!(ab.rows.len(), 6);
    let csv = ab.to_csv(&[]).unwrap();
    assert_eq!(csv.lines().next().unwrap(), ABLATION_COLUMNS.join(","));
    assert_eq!(ab.rows[0].augment_calls, 0);
    assert!(ab.rows[1..].iter().all(|r| r.augment_calls > 0));
    assert_eq!(ab.rows[4].focal_gamma, 5.0);
    assert!((ab.rows[5].head_lr / ab.rows[0].head_lr - 10.0).abs() < 1e-12);
    assert!((ab.rows[5].encoder_lr / ab.rows[0].encoder_lr - 10.0).abs() < 1e-12);
    // same folds, same seed: A1 through the ablation equals a plain CV run
    assert_eq!(ab.cv[0], cv);
}

#[test]
fn stages_outside_the_pyramid_stay_put() {
    let samples = toy_samples(16, 4);
    let (train, val) = split(&samples);
    let mut setup = toy_setup(2);
    setup.model.pyramid_stages = Some(vec![1]);
    setup.model.head_dims = Some(vec![8, 8, 1]);
    setup.optim.weight_decay = 0.0;
    let mut model = init_model(&setup).unwrap();
    let before = model.clone();
    train_one(&mut model, &train, &val, &setup).unwrap();
    assert_eq!(model.encoder(1).stages[1], before.encoder(1).stages[1]);
    assert_ne!(model.encoder(1).stages[0], before.encoder(1).stages[0]);
}
