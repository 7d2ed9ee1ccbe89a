//! Grad-CAM heatmaps over encoder stage maps and their agreement with
//! aneurysm masks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mode, Tensor};
use crate::error::{Error, Result};
use crate::imaging::{Image2D, Mask2D, Sample};
use crate::model::Samm2dModel;
use crate::par::map_indices;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaliencyConfig {
    /// 1-based encoder stage; unset means the deepest stage feeding the pyramid.
    pub stage: Option<usize>,
    /// Encoder whose maps are explained (1 or 2).
    pub encoder: usize,
    pub theta: f64,
    pub dilation_radius: usize,
    pub n_cases: usize,
    /// Probability threshold that makes a positive a true positive.
    pub tau: f64,
    pub seed: u64,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            stage: None,
            encoder: 1,
            theta: 0.5,
            dilation_radius: 2,
            n_cases: 200,
            tau: 0.5,
            seed: 0,
        }
    }
}

impl SaliencyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.encoder == 1 || self.encoder == 2) {
            return Err(Error::Config(format!(
                "saliency: encoder must be 1 or 2, got {}",
                self.encoder
            )));
        }
        if self.stage == Some(0) {
            return Err(Error::Config("saliency: stage is 1-based".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) || !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(
                "saliency: theta and tau must lie in [0, 1]".into(),
            ));
        }
        if self.n_cases == 0 {
            return Err(Error::Config("saliency: n_cases must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    /// Input resolution, values in [0, 1].
    pub values: Image2D,
    pub stage: usize,
    pub encoder: usize,
}

/// Grad-CAM of the pre-sigmoid logit for one image, in eval mode.
pub fn gradcam(model: &Samm2dModel<f32>, image: &Image2D, cfg: &SaliencyConfig) -> Result<Heatmap> {
    cfg.validate()?;
    if let Some(p) = model
        .named_params()
        .iter()
        .find(|p| p.tensor.data().iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite(format!("parameter {}", p.name)));
    }
    let depth = model.config().encoder.stage_channels.len();
    let deepest_pooled = model
        .config()
        .pyramid_stages
        .as_ref()
        .and_then(|s| s.iter().copied().max());
    let stage = cfg.stage.or(deepest_pooled).unwrap_or(depth);
    if stage > depth {
        return Err(Error::InvalidArgument(format!(
            "stage {stage} exceeds encoder depth {depth}"
        )));
    }

    let mut g = Graph::<f32>::new();
    let bound = model.bind_frozen(&mut g);
    // A tracked input makes every downstream map differentiable.
    let mut x = Tensor::new(
        &[1, 1, image.height(), image.width()],
        image.pixels().to_vec(),
    )?;
    x.requires_grad = true;
    let x = g.leaf(x);
    let out = bound.forward(&mut g, x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))?;
    let root = g.sum(out.logits)?;
    g.backward(root)?;

    let maps = if cfg.encoder == 2 {
        &out.maps2
    } else {
        &out.maps1
    };
    let map = maps[stage - 1];
    let (c, h, w) = match *g.shape(map) {
        [1, c, h, w] => (c, h, w),
        ref s => {
            return Err(Error::shape(
                "gradcam",
                format!("unexpected stage map shape {s:?}"),
            ))
        }
    };
    let acts = g.value(map).data();
    let grads = g
        .grad(map)
        .ok_or_else(|| Error::Numeric("stage map received no gradient".into()))?;
    let plane = h * w;
    let mut cam = vec![0.0f64; plane];
    for k in 0..c {
        let wk = grads[k * plane..(k + 1) * plane]
            .iter()
            .map(|&v| v as f64)
            .sum::<f64>()
            / plane as f64;
        for (o, &a) in cam.iter_mut().zip(&acts[k * plane..(k + 1) * plane]) {
            *o += wk * a as f64;
        }
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    let up = bilinear_resize(&cam, h, w, image.height(), image.width());
    let max = up.iter().cloned().fold(0.0, f64::max);
    let values = up
        .iter()
        .map(|&v| if max > 0.0 { (v / max) as f32 } else { 0.0 })
        .collect();
    Ok(Heatmap {
        values: Image2D::new(image.height(), image.width(), values)?,
        stage,
        encoder: cfg.encoder,
    })
}

/// Half-pixel-centred bilinear resampling with edge clamping.
pub fn bilinear_resize(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let coord = |dst: usize, n_src: usize, n_dst: usize| {
        let s =
            ((dst as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5).clamp(0.0, (n_src - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_src - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        let (r0, r1, fr) = coord(r, h, oh);
        for c in 0..ow {
            let (c0, c1, fc) = coord(c, w, ow);
            let top = src[r0 * w + c0] * (1.0 - fc) + src[r0 * w + c1] * fc;
            let bot = src[r1 * w + c0] * (1.0 - fc) + src[r1 * w + c1] * fc;
            out.push(top * (1.0 - fr) + bot * fr);
        }
    }
    out
}

/// Intersection over union of two masks; two empty masks score 1.
pub fn mask_iou(a: &Mask2D, b: &Mask2D) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::shape(
            "iou",
            format!(
                "{}x{} vs {}x{}",
                a.height(),
                a.width(),
                b.height(),
                b.width()
            ),
        ));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Pixels with value `>= theta` become set.
pub fn binarize(map: &Image2D, theta: f64) -> Mask2D {
    Mask2D::from_fn(map.height(), map.width(), |r, c| {
        map.get(r, c) as f64 >= theta
    })
}

pub fn iou(heatmap: &Image2D, mask: &Mask2D, theta: f64) -> Result<f64> {
    mask_iou(&binarize(heatmap, theta), mask)
}

fn argmax(map: &Image2D) -> (usize, usize) {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, &v) in map.pixels().iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    (best.0 / map.width(), best.0 % map.width())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionStats {
    pub n_cases: usize,
    pub frac_tp_on_target: f64,
    pub mean_iou: f64,
    pub binarize_theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    /// Index into the evaluated sample list.
    pub index: usize,
    pub prob: f64,
    pub hit: bool,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionReport {
    pub stats: AttentionStats,
    pub requested: usize,
    pub available_tp: usize,
    pub cases: Vec<CaseResult>,
    pub heatmaps: Vec<Heatmap>,
}

/// Hit fraction and IoU for one heatmap per case.
pub fn score_cases(
    maps: &[&Image2D],
    masks: &[&Mask2D],
    cfg: &SaliencyConfig,
) -> Result<Vec<(bool, f64)>> {
    maps.iter()
        .zip(masks)
        .map(|(map, mask)| {
            let (r, c) = argmax(map);
            let hit = mask.dilate(cfg.dilation_radius).get(r, c);
            Ok((hit, iou(map, mask, cfg.theta)?))
        })
        .collect()
}

fn stats_of(scored: &[(bool, f64)], theta: f64) -> AttentionStats {
    let n = scored.len();
    let (hits, iou_sum) = scored.iter().fold((0usize, 0.0), |(h, s), &(hit, v)| {
        (h + usize::from(hit), s + v)
    });
    AttentionStats {
        n_cases: n,
        frac_tp_on_target: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        mean_iou: if n == 0 { 0.0 } else { iou_sum / n as f64 },
        binarize_theta: theta,
    }
}

/// True positives among masked positives, a seeded subset of at most
/// `cfg.n_cases`, their Grad-CAM maps and the aggregate statistics.
pub fn attention_report(
    model: &Samm2dModel<f32>,
    samples: &[Sample],
    cfg: &SaliencyConfig,
) -> Result<AttentionReport> {
    cfg.validate()?;
    let candidates: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].label.is_some_and(|l| l.is_positive()) && samples[i].mask.is_some())
        .collect();
    let images: Vec<&Image2D> = candidates.iter().map(|&i| &samples[i].image).collect();
    let probs = if images.is_empty() {
        Vec::new()
    } else {
        model.predict(&images, 32)?
    };
    let mut tps: Vec<(usize, f64)> = candidates
        .iter()
        .zip(&probs)
        .filter(|&(_, &p)| p >= cfg.tau)
        .map(|(&i, &p)| (i, p))
        .collect();
    let available_tp = tps.len();
    tps.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    tps.truncate(cfg.n_cases);
    tps.sort_by_key(|&(i, _)| i);

    let heatmaps = map_indices(tps.len(), |k| gradcam(model, &samples[tps[k].0].image, cfg))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let maps: Vec<&Image2D> = heatmaps.iter().map(|h| &h.values).collect();
    let masks: Vec<&Mask2D> = tps
        .iter()
        .map(|&(i, _)| samples[i].mask.as_ref().expect("filtered"))
        .collect();
    let scored = score_cases(&maps, &masks, cfg)?;
    let cases = tps
        .iter()
        .zip(&scored)
        .map(|(&(index, prob), &(hit, iou))| CaseResult {
            index,
            prob,
            hit,
            iou,
        })
        .collect();
    Ok(AttentionReport {
        stats: stats_of(&scored, cfg.theta),
        requested: cfg.n_cases,
        available_tp,
        cases,
        heatmaps,
    })
}

/// Uniform-noise heatmap, max-normalised.
pub fn random_heatmap<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Image2D {
    let raw: Vec<f32> = (0..height * width).map(|_| rng.random::<f32>()).collect();
    let max = raw.iter().cloned().fold(0.0, f32::max);
    Image2D::from_fn(height, width, |r, c| {
        if max > 0.0 {
            raw[r * width + c] / max
        } else {
            0.0
        }
    })
}

/// Statistics of random heatmaps against every masked positive sample.
pub fn random_baseline(samples: &[Sample], cfg: &SaliencyConfig) -> Result<AttentionStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let masks: Vec<&Mask2D> = samples
        .iter()
        .filter_map(|s| s.mask.as_ref())
        .take(cfg.n_cases)
        .collect();
    let maps: Vec<Image2D> = masks
        .iter()
        .map(|m| random_heatmap(m.height(), m.width(), &mut rng))
        .collect();
    let refs: Vec<&Image2D> = maps.iter().collect();
    Ok(stats_of(&score_cases(&refs, &masks, cfg)?, cfg.theta))
}

/// Binary greyscale PGM (P5), values in [0, 1] mapped to 0..=255. Each
/// `comments` line becomes a `# ` header line.
pub fn to_pgm(map: &Image2D, comments: &[String]) -> Vec<u8> {
    let mut header = String::from("P5\n");
    for c in comments {
        header.push_str("# ");
        header.push_str(c);
        header.push('\n');
    }
    header.push_str(&format!("{} {}\n255\n", map.width(), map.height()));
    let mut out = header.into_bytes();
    out.extend(
        map.pixels()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}
