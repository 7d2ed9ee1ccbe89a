//! WebAssembly bindings for a single static demo page. Every export takes
//! plain numbers or strings and returns a JSON document; failures come
//! back as `{"error": "..."}` so the page never has to catch exceptions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

use samm2d::evaluation::{
    calibrate, confusion_at, cost_savings, CostParams, ModeThresholds, ScoredSet, SweepConfig,
};
use samm2d::imaging::{mip_project, project_mask, salience_score, Image2D, Label, View};
use samm2d::optim::{focal_term, lr_factor, FocalParams};
use samm2d::synthgen::{gen_study, GenParams};
use samm2d::Result;

const DEMO_SIDE: usize = 48;
const TAIL_K: f64 = 2.0;

fn respond(r: Result<Value>) -> String {
    r.unwrap_or_else(|e| json!({ "error": e.to_string() }))
        .to_string()
}

fn to_bytes(image: &Image2D) -> Vec<u8> {
    let px = image.pixels();
    let (lo, hi) = px
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    px.iter()
        .map(|&v| ((v - lo) / span * 255.0).round() as u8)
        .collect()
}

/// Projects one synthetic study along every view. `view` is a view name
/// or `"best"` for the highest enhancement score.
pub fn mip_explorer_value(seed: u64, positive: bool, view: &str) -> Result<Value> {
    let params = GenParams {
        dims: [DEMO_SIDE; 3],
        ..GenParams::default()
    };
    let label = if positive {
        Label::Positive
    } else {
        Label::Negative
    };
    let study = gen_study(seed, &params, Some(label))?;
    let images: Vec<(View, Image2D)> = View::ALL
        .iter()
        .map(|&v| (v, mip_project(&study.volume, v)))
        .collect();
    let scores: Vec<f64> = images
        .iter()
        .map(|(_, im)| salience_score(im, TAIL_K))
        .collect();
    let best = (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
    let chosen = match view {
        "best" => best,
        name => View::ALL
            .iter()
            .position(|v| v.name() == name)
            .ok_or_else(|| samm2d::Error::InvalidArgument(format!("unknown view {name:?}")))?,
    };
    let (v, image) = &images[chosen];
    let mask = study.aneurysm_mask.as_ref().map(|m| {
        project_mask(m, *v)
            .bits()
            .iter()
            .map(|&b| u8::from(b))
            .collect::<Vec<u8>>()
    });
    Ok(json!({
        "views": View::ALL.iter().zip(&scores).map(|(v, s)| json!({ "name": v.name(), "score": s })).collect::<Vec<_>>(),
        "best": View::ALL[best].name(),
        "selected": v.name(),
        "width": image.width(),
        "height": image.height(),
        "pixels": to_bytes(image),
        "mask": mask,
    }))
}

#[wasm_bindgen]
pub fn mip_explorer(seed: u32, positive: bool, view: &str) -> String {
    respond(mip_explorer_value(u64::from(seed), positive, view))
}

/// Learning-rate factor over `epochs` (ten samples per epoch) and the
/// per-sample focal loss against p for both labels.
#[allow(clippy::too_many_arguments)]
pub fn curves_value(
    warmup: f64,
    t0: f64,
    mult: f64,
    eta_min_frac: f64,
    epochs: f64,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
) -> Result<Value> {
    let focal = FocalParams {
        alpha,
        gamma,
        epsilon,
    };
    focal.validate()?;
    if !(t0 > 0.0
        && mult >= 1.0
        && warmup >= 0.0
        && epochs > 0.0
        && (0.0..=1.0).contains(&eta_min_frac))
    {
        return Err(samm2d::Error::InvalidArgument(
            "schedule parameters out of range".into(),
        ));
    }
    let steps = (epochs * 10.0).round() as usize;
    let lr: Vec<[f64; 2]> = (0..=steps)
        .map(|i| {
            let t = i as f64 / 10.0;
            [t, lr_factor(t, warmup, t0, mult, eta_min_frac)]
        })
        .collect();
    let ps: Vec<f64> = (1..200).map(|i| i as f64 / 200.0).collect();
    let loss = |y: f64| -> Vec<[f64; 2]> {
        ps.iter()
            .map(|&p| [p, focal_term(p, y, &focal).0])
            .collect()
    };
    Ok(json!({ "lr": lr, "focal_pos": loss(1.0), "focal_neg": loss(0.0) }))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn curves(
    warmup: f64,
    t0: f64,
    mult: f64,
    eta_min_frac: f64,
    epochs: f64,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
) -> String {
    respond(curves_value(
        warmup,
        t0,
        mult,
        eta_min_frac,
        epochs,
        alpha,
        gamma,
        epsilon,
    ))
}

/// Scores from two unit-variance logit Gaussians `separation` apart, then
/// the full calibration report plus the confusion counts and projected
/// savings at the chosen `tau`.
pub fn calibration_value(
    n: usize,
    separation: f64,
    seed: u64,
    tau: f64,
    prevalence: f64,
) -> Result<Value> {
    if n < 2 || !(0.0..=1.0).contains(&tau) || !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(samm2d::Error::InvalidArgument(
            "need n >= 2, tau in [0, 1], prevalence in (0, 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let positives = ((n as f64) * 0.4).round().clamp(1.0, (n - 1) as f64) as usize;
    let (mut scores, mut labels) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let y = u8::from(i < positives);
        let z: f64 = unit.sample(&mut rng) + if y == 1 { separation } else { 0.0 };
        scores.push(1.0 / (1.0 + (-z).exp()));
        labels.push(y);
    }
    let set = ScoredSet::new(scores, labels)?;
    let cost = CostParams {
        prevalence,
        ..CostParams::default()
    };
    let report = calibrate(
        &set,
        &SweepConfig::default(),
        &ModeThresholds::default(),
        &cost,
    )?;
    let at = confusion_at(&set, tau);
    let curve: Vec<Value> = report
        .curve
        .iter()
        .step_by(10)
        .map(|p| json!([p.tau, p.f1, p.sensitivity, p.specificity]))
        .collect();
    Ok(json!({
        "auc": report.auc,
        "tau_star": report.tau_star,
        "f1_star": report.f1_star,
        "roc": report.roc,
        "curve": curve,
        "modes": report.modes,
        "at_tau": at,
        "savings_at_tau": cost_savings(at.sensitivity, at.specificity, &cost),
        "cost_formula": report.cost_formula,
    }))
}

#[wasm_bindgen]
pub fn calibration(n: u32, separation: f64, seed: u32, tau: f64, prevalence: f64) -> String {
    respond(calibration_value(
        n as usize,
        separation,
        u64::from(seed),
        tau,
        prevalence,
    ))
}
