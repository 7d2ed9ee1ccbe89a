use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use samm2d::autodiff::{Graph, Tensor};
use samm2d::optim::*;
use samm2d::Error;
use samm2d_oracles as oracle;

fn fp(alpha: f64, gamma: f64, epsilon: f64) -> FocalParams {
    FocalParams {
        alpha,
        gamma,
        epsilon,
    }
}

#[test]
fn focal_reduces_to_half_bce() {
    let params = fp(0.5, 0.0, 0.0);
    for i in 1..100 {
        let p = i as f64 / 100.0;
        for y in [0u8, 1] {
            let bce = if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
            let (loss, _) = focal_term(p, y as f64, &params);
            assert!((loss - 0.5 * bce).abs() < 1e-7, "p={p} y={y}");
        }
    }
}

#[test]
fn focal_known_values() {
    let (l, _) = focal_term(0.5, 1.0, &fp(0.25, 3.0, 0.0));
    // 0.25 * 0.5^3 * ln 2, evaluated to 30 digits
    assert!((l - 0.021_660_849_392_498_29).abs() < 1e-6);
    assert!((l - oracle::focal_scalar(0.5, 1.0, 0.25, 3.0, 0.0)).abs() < 1e-12);

    let (l, _) = focal_term(0.95, 1.0, &FocalParams::default());
    assert!((l - 0.096_318_996_196_115_37).abs() < 1e-9);
}

#[test]
fn focal_matches_scalar_oracle_and_is_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..500 {
        let p = rng.random_range(1e-4..1.0 - 1e-4);
        let y = rng.random_range(0..2) as f64;
        let (a, g, e) = (
            rng.random_range(0.05..0.95),
            rng.random_range(0.0..5.0),
            rng.random_range(0.0..0.5),
        );
        let (l, _) = focal_term(p, y, &fp(a, g, e));
        assert!(l >= 0.0);
        assert!((l - oracle::focal_scalar(p, y, a, g, e)).abs() < 1e-12);
    }
}

#[test]
fn focal_derivative_matches_finite_differences() {
    for &p in &[0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.98] {
        for y in [0.0, 1.0] {
            for &eps in &[0.0, 0.1, 0.3] {
                for &gamma in &[0.0, 0.5, 1.0, 2.0, 3.0, 5.0] {
                    let prm = fp(0.25, gamma, eps);
                    let (_, d) = focal_term(p, y, &prm);
                    let h = 1e-6;
                    let num =
                        (focal_term(p + h, y, &prm).0 - focal_term(p - h, y, &prm).0) / (2.0 * h);
                    let rel = (d - num).abs() / d.abs().max(num.abs()).max(1e-8);
                    assert!(
                        rel < 1e-4,
                        "p={p} y={y} eps={eps} gamma={gamma}: {d} vs {num}"
                    );
                }
            }
        }
    }
}

#[test]
fn focal_is_decreasing_for_positive_targets() {
    // Without smoothing the loss falls on all of (0, 1).
    for &gamma in &[0.0, 1.0, 3.0] {
        let prm = fp(0.25, gamma, 0.0);
        let grid: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        for w in grid.windows(2) {
            assert!(
                focal_term(w[1], 1.0, &prm).0 < focal_term(w[0], 1.0, &prm).0,
                "gamma={gamma} p={}",
                w[1]
            );
        }
    }
    // With smoothing the (1 - t) p^γ ln(1 - p) term diverges as p -> 1, so
    // the loss only falls up to its interior minimum.
    let prm = FocalParams::default();
    let grid: Vec<f64> = (1..=500).map(|i| i as f64 / 1000.0).collect();
    for w in grid.windows(2) {
        assert!(focal_term(w[1], 1.0, &prm).0 < focal_term(w[0], 1.0, &prm).0);
    }
    assert!(focal_term(0.999_99, 1.0, &prm).0 > focal_term(0.95, 1.0, &prm).0);
}

#[test]
fn focal_rejects_bad_labels_and_shapes() {
    assert!(matches!(
        smooth_focal_loss(&[0.5], &[2], &FocalParams::default()),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        smooth_focal_loss(&[0.5, 0.2], &[1], &FocalParams::default()),
        Err(Error::Shape { .. })
    ));
    assert!(fp(0.0, 1.0, 0.0).validate().is_err());
    assert!(fp(0.5, -1.0, 0.0).validate().is_err());
    assert!(fp(0.5, 1.0, 1.0).validate().is_err());
    assert!(FocalParams::default().validate().is_ok());
}

#[test]
fn focal_batch_mean() {
    let p = [0.2, 0.7, 0.9];
    let y = [0u8, 1, 0];
    let prm = FocalParams::default();
    let expect = p
        .iter()
        .zip(y)
        .map(|(&p, y)| oracle::focal_scalar(p, y as f64, 0.25, 3.0, 0.1))
        .sum::<f64>()
        / 3.0;
    assert!((smooth_focal_loss(&p, &y, &prm).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn focal_node_backpropagates_through_sigmoid() {
    let prm = FocalParams::default();
    let logits = [-1.3, 0.2, 2.5, 0.9];
    let labels = [0u8, 1, 1, 0];
    let eval = |z: &[f64]| {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(&[4, 1], z.to_vec()).unwrap().tracked());
        let p = g.sigmoid(x).unwrap();
        let loss = focal_loss_node(&mut g, p, &labels, &prm).unwrap();
        g.backward(loss).unwrap();
        (g.value(loss).data()[0], g.grad(x).unwrap().to_vec())
    };
    let (value, grad) = eval(&logits);
    let probs: Vec<f64> = logits.iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect();
    assert!((value - smooth_focal_loss(&probs, &labels, &prm).unwrap()).abs() < 1e-12);
    for i in 0..4 {
        let h = 1e-6;
        let mut up = logits;
        up[i] += h;
        let mut dn = logits;
        dn[i] -= h;
        let num = (eval(&up).0 - eval(&dn).0) / (2.0 * h);
        assert!((grad[i] - num).abs() < 1e-7, "{i}: {} vs {num}", grad[i]);
    }
}

fn one_param(v: f32) -> Tensor<f32> {
    Tensor::new(&[1], vec![v]).unwrap()
}

#[test]
fn adamw_zero_gradient_cases() {
    let names = vec!["w".to_string()];
    let mut p = one_param(0.7);
    let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.0, &[1]);
    opt.step(&mut [&mut p], &names, &[vec![0.0]], &[0.1])
        .unwrap();
    assert_eq!(p.data(), &[0.7]);

    let mut p = Tensor::<f64>::new(&[1], vec![0.7]).unwrap();
    let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.01, &[1]);
    opt.step(&mut [&mut p], &names, &[vec![0.0]], &[1.0])
        .unwrap();
    assert!((p.data()[0] - 0.7 * 0.99).abs() < 1e-15);
}

#[test]
fn adamw_matches_scalar_recurrence() {
    let names = vec!["w".to_string()];
    let mut p = Tensor::<f64>::new(&[1], vec![0.3]).unwrap();
    let mut opt = AdamW::new(0.9, 0.999, 1e-8, 1e-2, &[1]);
    let expect = oracle::adamw_scalar(0.3, &[1.0, 1.0, 1.0], 0.05, 0.9, 0.999, 1e-8, 1e-2);
    for e in expect {
        opt.step(&mut [&mut p], &names, &[vec![1.0]], &[0.05])
            .unwrap();
        assert!((p.data()[0] - e).abs() < 1e-7);
    }
    assert_eq!(opt.steps_taken(), 3);
}

#[test]
fn adamw_rejects_non_finite_and_leaves_params() {
    let names = vec![
        "encoder1.stage1.entry.weight".to_string(),
        "head.fc1.bias".to_string(),
    ];
    let (mut a, mut b) = (one_param(1.0), one_param(2.0));
    let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.0, &[1, 1]);
    let err = opt
        .step(
            &mut [&mut a, &mut b],
            &names,
            &[vec![0.5], vec![f32::NAN]],
            &[0.1, 0.1],
        )
        .unwrap_err();
    assert!(err.to_string().contains("head.fc1.bias"), "{err}");
    assert_eq!((a.data()[0], b.data()[0]), (1.0, 2.0));
    assert_eq!(opt.steps_taken(), 0);
}

#[test]
fn schedule_examples() {
    let c = OptimConfig::default();
    assert!((c.factor(0.0) - 0.0).abs() < 1e-9);
    assert!((c.factor(5.0) - 1.0).abs() < 1e-9);
    assert!((c.factor(10.0) - 0.5).abs() < 1e-9);
    assert!((c.factor(15.0) - 1.0).abs() < 1e-9);
    assert!(c.factor(15.0 - 1e-9) < 1e-9);
    assert!((c.factor(2.5) - 0.5).abs() < 1e-12);
}

#[test]
fn schedule_is_continuous_within_cycles_and_periodic() {
    let c = OptimConfig::default();
    let step = 1e-3;
    let mut t = 0.0;
    while t < 5.0 + 10.0 - step {
        let jump = (c.factor(t + step) - c.factor(t)).abs();
        assert!(jump < 1e-2, "t={t}");
        t += step;
    }
    for i in 0..200 {
        let t = 5.0 + i as f64 * 0.05;
        assert!((c.factor(t) - c.factor(t + 10.0)).abs() < 1e-9);
        assert!((c.factor(t) - c.factor(t + 30.0)).abs() < 1e-9);
    }
}

#[test]
fn schedule_with_growing_cycles() {
    // cycles of 10, 20, 40 epochs starting at 5, 15, 35
    let f = |t| lr_factor(t, 5.0, 10.0, 2.0, 0.1);
    assert!((f(15.0) - 1.0).abs() < 1e-12);
    assert!((f(25.0) - 0.55).abs() < 1e-12);
    assert!((f(35.0) - 1.0).abs() < 1e-12);
    assert!((f(55.0) - 0.55).abs() < 1e-12);
}

#[test]
fn clip_examples() {
    let mut g = vec![vec![0.3f32], vec![0.4]];
    assert_eq!(clip_global_norm(&mut g, 1.0).1, 1.0);
    assert_eq!(g, vec![vec![0.3], vec![0.4]]);

    let mut g = vec![vec![2.0f64, 2.0], vec![2.0, 2.0]];
    let (before, scale) = clip_global_norm(&mut g, 1.0);
    assert_eq!((before, scale), (4.0, 0.25));
    assert!(g.iter().flatten().all(|&v| v == 0.5));
    assert!((global_norm(&g) - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn clip_caps_norm_and_is_idempotent(seed in 0u64..100_000, max in 0.1f64..5.0, spread in 0.01f32..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g: Vec<Vec<f32>> = (0..4).map(|i| (0..(i * 7 + 1)).map(|_| rng.random_range(-spread..spread)).collect()).collect();
        let pre = global_norm(&g);
        clip_global_norm(&mut g, max);
        let post = global_norm(&g);
        prop_assert!((post - pre.min(max)).abs() < 1e-5);
        prop_assert!(post <= max + 1e-6);
        let once = g.clone();
        clip_global_norm(&mut g, max);
        for (a, b) in once.iter().flatten().zip(g.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-30));
        }
    }

    #[test]
    fn schedule_factor_in_unit_interval(t in 0.0f64..500.0, warm in 0.0f64..10.0, t0 in 1.0f64..30.0, mult in 1.0f64..3.0, eta in 0.0f64..1.0) {
        let f = lr_factor(t, warm, t0, mult, eta);
        prop_assert!((0.0..=1.0).contains(&f));
    }
}
