use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use samm2d::evaluation::*;
use samm2d::Error;
use samm2d_oracles::{f1_at, grid_scan_f1, pairwise_auc};

/// Random set with scores quantised to a coarse grid so ties are common.
fn random_set(rng: &mut ChaCha8Rng, n: usize, levels: u32) -> ScoredSet {
    loop {
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if labels.contains(&0) && labels.contains(&1) {
            let scores = (0..n)
                .map(|_| rng.random_range(0..=levels) as f64 / levels as f64)
                .collect();
            return ScoredSet::new(scores, labels).unwrap();
        }
    }
}

#[test]
fn closed_auc_cases() {
    let sep = ScoredSet::new(vec![0.1, 0.2, 0.8, 0.9], vec![0, 0, 1, 1]).unwrap();
    assert_eq!(roc_auc(&sep).unwrap(), 1.0);
    let flat = ScoredSet::new(vec![0.3; 6], vec![0, 1, 0, 1, 1, 0]).unwrap();
    assert_eq!(roc_auc(&flat).unwrap(), 0.5);
}

#[test]
fn auc_matches_pairwise_oracle_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..300 {
        let n = rng.random_range(2..=500);
        let levels = if i % 3 == 0 {
            1_000_000
        } else {
            rng.random_range(1..20)
        };
        let set = random_set(&mut rng, n, levels);
        let got = roc_auc(&set).unwrap();
        let want = pairwise_auc(set.scores(), set.labels());
        assert!((got - want).abs() <= 1e-9, "n={n}: {got} vs {want}");
    }
}

#[test]
fn auc_complement_and_monotone_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let set = random_set(&mut rng, 120, 1 << 30);
        let a = roc_auc(&set).unwrap();
        let flipped = ScoredSet::new(
            set.scores().iter().map(|s| 1.0 - s).collect(),
            set.labels().to_vec(),
        )
        .unwrap();
        assert!((a + roc_auc(&flipped).unwrap() - 1.0).abs() < 1e-12);
        let cubed = ScoredSet::new(
            set.scores().iter().map(|s| s.powi(3)).collect(),
            set.labels().to_vec(),
        )
        .unwrap();
        assert_eq!(roc_auc(&cubed).unwrap(), a);
        let logistic = ScoredSet::new(
            set.scores()
                .iter()
                .map(|s| 1.0 / (1.0 + (-(3.0 * s - 1.0)).exp()))
                .collect(),
            set.labels().to_vec(),
        )
        .unwrap();
        assert_eq!(roc_auc(&logistic).unwrap(), a);
    }
}

#[test]
fn roc_curve_area_equals_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let set = random_set(&mut rng, 200, 15);
        let c = roc_curve(&set).unwrap();
        let area: f64 = c
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum();
        assert!((area - roc_auc(&set).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn confusion_edges() {
    let set = ScoredSet::new(vec![0.0, 0.2, 0.6, 0.9], vec![0, 1, 0, 1]).unwrap();
    let all = confusion_at(&set, 0.0);
    assert_eq!(all.sensitivity, 1.0);
    assert_eq!(all.total(), 4);
    let none = confusion_at(&set, 0.95);
    assert_eq!((none.sensitivity, none.specificity), (0.0, 1.0));
}

#[test]
fn sweep_matches_grid_scan_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = SweepConfig::default();
    for _ in 0..100 {
        let n = rng.random_range(2..=300);
        let levels = rng.random_range(5..2000);
        let set = random_set(&mut rng, n, levels);
        let s = sweep_threshold(&set, &cfg).unwrap();
        let (tau, f1) = grid_scan_f1(set.scores(), set.labels(), cfg.lo, cfg.hi, cfg.step);
        assert_eq!((s.tau_star, s.f1_star), (tau, f1));
        for p in &s.curve {
            assert_eq!(p.f1, f1_at(set.scores(), set.labels(), p.tau));
        }
    }
}

#[test]
fn separable_sweep_hits_gap() {
    let set = ScoredSet::new(vec![0.2, 0.3, 0.31, 0.7, 0.75], vec![0, 0, 0, 1, 1]).unwrap();
    let s = sweep_threshold(&set, &SweepConfig::default()).unwrap();
    assert_eq!(s.f1_star, 1.0);
    assert!(s.tau_star > 0.31 && s.tau_star <= 0.7);
}

#[test]
fn flat_sweep_returns_lo() {
    let set = ScoredSet::new(vec![0.95, 0.97, 0.99], vec![0, 1, 1]).unwrap();
    let s = sweep_threshold(&set, &SweepConfig::default()).unwrap();
    assert!(s.curve.iter().all(|p| p.f1 == s.f1_star));
    assert_eq!(s.tau_star, 0.1);
}

#[test]
fn sweep_is_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let coarse = SweepConfig::default();
    for _ in 0..30 {
        let set = random_set(&mut rng, 150, 1000);
        let s = sweep_threshold(&set, &coarse).unwrap();
        let fine = SweepConfig {
            lo: (s.tau_star - 0.01).max(0.0),
            hi: (s.tau_star + 0.01).min(1.0),
            step: 0.0001,
        };
        let grid = coarse.grid();
        for p in sweep_threshold(&set, &fine).unwrap().curve {
            let on_grid = grid.iter().any(|&g| (g - p.tau).abs() < 1e-12);
            if on_grid {
                assert!(p.f1 <= s.f1_star);
            }
        }
        let first_best = s.curve.iter().position(|p| p.f1 == s.f1_star).unwrap();
        assert_eq!(s.curve[first_best].tau, s.tau_star);
    }
}

#[test]
fn calibrate_report_schema() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let set = random_set(&mut rng, 80, 100);
    let r = calibrate(
        &set,
        &SweepConfig::default(),
        &ModeThresholds::default(),
        &CostParams::default(),
    )
    .unwrap();
    assert_eq!(r.modes.len(), 3);
    assert_eq!(r.modes[1].tau, r.tau_star);
    let json = serde_json::to_value(&r).unwrap();
    for key in [
        "auc",
        "tau_star",
        "f1_star",
        "modes",
        "cost",
        "cost_formula",
    ] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["modes"][0]["name"], "screening");
    assert!(json["modes"][2]["metrics"].get("fn").is_some());
}

#[test]
fn calibrate_rejects_single_class() {
    let set = ScoredSet::new(vec![0.1, 0.2], vec![0, 0]).unwrap();
    let r = calibrate(
        &set,
        &SweepConfig::default(),
        &ModeThresholds::default(),
        &CostParams::default(),
    );
    assert!(matches!(r, Err(Error::SingleClass(_))));
}

proptest! {
    #[test]
    fn rates_monotone_in_tau(
        data in prop::collection::vec((0.0f64..=1.0, 0u8..2), 1..60),
        taus in prop::collection::vec(0.0f64..=1.0, 2..10),
    ) {
        let (scores, labels): (Vec<_>, Vec<_>) = data.into_iter().unzip();
        let set = ScoredSet::new(scores, labels).unwrap();
        let mut taus = taus;
        taus.sort_by(f64::total_cmp);
        let ms: Vec<_> = taus.iter().map(|&t| confusion_at(&set, t)).collect();
        for w in ms.windows(2) {
            prop_assert!(w[1].sensitivity <= w[0].sensitivity);
            prop_assert!(w[1].specificity >= w[0].specificity);
        }
        for m in &ms {
            prop_assert_eq!(m.total(), set.len());
            for r in [m.sensitivity, m.specificity, m.precision, m.f1, m.accuracy] {
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }
    }
}
