use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Image2D, Mask2D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegimeId {
    #[serde(rename = "A1")]
    None,
    #[serde(rename = "A2")]
    Geometric,
    #[serde(rename = "A3")]
    Intensity,
    #[serde(rename = "A4")]
    Combined,
    #[serde(rename = "A5")]
    HighGamma,
    #[serde(rename = "A6")]
    HighLr,
}

impl RegimeId {
    pub const ALL: [RegimeId; 6] = [
        RegimeId::None,
        RegimeId::Geometric,
        RegimeId::Intensity,
        RegimeId::Combined,
        RegimeId::HighGamma,
        RegimeId::HighLr,
    ];

    pub fn code(self) -> &'static str {
        match self {
            RegimeId::None => "A1",
            RegimeId::Geometric => "A2",
            RegimeId::Intensity => "A3",
            RegimeId::Combined => "A4",
            RegimeId::HighGamma => "A5",
            RegimeId::HighLr => "A6",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            RegimeId::None => "none",
            RegimeId::Geometric => "geometric",
            RegimeId::Intensity => "intensity",
            RegimeId::Combined => "combined",
            RegimeId::HighGamma => "high_gamma",
            RegimeId::HighLr => "high_lr",
        }
    }

    fn uses_geometric(self) -> bool {
        matches!(
            self,
            RegimeId::Geometric | RegimeId::Combined | RegimeId::HighGamma | RegimeId::HighLr
        )
    }

    fn uses_intensity(self) -> bool {
        matches!(
            self,
            RegimeId::Intensity | RegimeId::Combined | RegimeId::HighGamma | RegimeId::HighLr
        )
    }
}

impl fmt::Display for RegimeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for RegimeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.code().eq_ignore_ascii_case(s) || r.description() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown regime {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometricParams {
    pub hflip_p: f32,
    pub rot_deg_max: f32,
    pub scale_range: (f32, f32),
}

impl Default for GeometricParams {
    fn default() -> Self {
        Self {
            hflip_p: 0.5,
            rot_deg_max: 15.0,
            scale_range: (0.9, 1.1),
        }
    }
}

impl GeometricParams {
    pub fn identity() -> Self {
        Self {
            hflip_p: 0.0,
            rot_deg_max: 0.0,
            scale_range: (1.0, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntensityParams {
    pub brightness_range: (f32, f32),
    pub contrast_range: (f32, f32),
    pub gamma_range: (f32, f32),
    pub noise_sigma: f32,
}

impl Default for IntensityParams {
    fn default() -> Self {
        Self {
            brightness_range: (-0.1, 0.1),
            contrast_range: (0.9, 1.1),
            gamma_range: (0.8, 1.2),
            noise_sigma: 0.05,
        }
    }
}

impl IntensityParams {
    pub fn identity() -> Self {
        Self {
            brightness_range: (0.0, 0.0),
            contrast_range: (1.0, 1.0),
            gamma_range: (1.0, 1.0),
            noise_sigma: 0.0,
        }
    }
}

/// Transform parameters shared by every regime that uses them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub geometric: GeometricParams,
    pub intensity: IntensityParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentRegime {
    pub id: RegimeId,
    pub geometric: Option<GeometricParams>,
    pub intensity: Option<IntensityParams>,
}

impl AugmentRegime {
    pub fn new(id: RegimeId, config: &AugmentConfig) -> Result<Self> {
        let regime = Self {
            id,
            geometric: id.uses_geometric().then_some(config.geometric),
            intensity: id.uses_intensity().then_some(config.intensity),
        };
        regime.validate()?;
        Ok(regime)
    }

    pub fn none() -> Self {
        Self {
            id: RegimeId::None,
            geometric: None,
            intensity: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("augment: {msg}")));
        let ordered = |(lo, hi): (f32, f32)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if let Some(g) = &self.geometric {
            if !(0.0..=1.0).contains(&g.hflip_p) {
                return bad(format!("hflip_p {} outside [0, 1]", g.hflip_p));
            }
            if !(g.rot_deg_max >= 0.0 && g.rot_deg_max <= 180.0) {
                return bad(format!("rot_deg_max {} outside [0, 180]", g.rot_deg_max));
            }
            if !ordered(g.scale_range) || g.scale_range.0 <= 0.0 {
                return bad(format!(
                    "scale_range {:?} must be positive and ordered",
                    g.scale_range
                ));
            }
        }
        if let Some(i) = &self.intensity {
            if !ordered(i.brightness_range) || !ordered(i.contrast_range) {
                return bad("brightness/contrast ranges must be ordered".into());
            }
            if !ordered(i.gamma_range) || i.gamma_range.0 <= 0.0 {
                return bad(format!(
                    "gamma_range {:?} must be positive and ordered",
                    i.gamma_range
                ));
            }
            if !(i.noise_sigma >= 0.0 && i.noise_sigma.is_finite()) {
                return bad(format!("noise_sigma {} must be >= 0", i.noise_sigma));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.geometric.is_none() && self.intensity.is_none()
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f32, f32)) -> f32 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// One draw of the geometric transform.
#[derive(Clone, Copy, Debug, PartialEq)]
struct GeomDraw {
    flip: bool,
    degrees: f32,
    scale: f32,
}

impl GeomDraw {
    fn sample<R: Rng + ?Sized>(p: &GeometricParams, rng: &mut R) -> Self {
        let flip = p.hflip_p > 0.0 && rng.random::<f32>() < p.hflip_p;
        let degrees = uniform(rng, (-p.rot_deg_max, p.rot_deg_max));
        let scale = uniform(rng, p.scale_range);
        Self {
            flip,
            degrees,
            scale,
        }
    }

    /// Bilinear resampling with zero fill. Rotation and scale are about the
    /// image centre, so output size equals input size.
    fn apply(&self, image: &Image2D) -> Image2D {
        let (h, w) = (image.height(), image.width());
        let flipped = if self.flip {
            Image2D::from_fn(h, w, |r, c| image.get(r, w - 1 - c))
        } else {
            image.clone()
        };
        if self.degrees == 0.0 && self.scale == 1.0 {
            return flipped;
        }
        let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
        let (s, c) = self.degrees.to_radians().sin_cos();
        let inv = 1.0 / self.scale;
        let fetch = |r: isize, col: isize| -> f32 {
            if r < 0 || col < 0 || r as usize >= h || col as usize >= w {
                0.0
            } else {
                flipped.get(r as usize, col as usize)
            }
        };
        Image2D::from_fn(h, w, |r, col| {
            let (dy, dx) = (r as f32 - cy, col as f32 - cx);
            let sx = (c * dx + s * dy) * inv + cx;
            let sy = (-s * dx + c * dy) * inv + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (tx, ty) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            (1.0 - ty) * ((1.0 - tx) * fetch(y0, x0) + tx * fetch(y0, x0 + 1))
                + ty * ((1.0 - tx) * fetch(y0 + 1, x0) + tx * fetch(y0 + 1, x0 + 1))
        })
    }
}

fn apply_intensity<R: Rng + ?Sized>(image: &Image2D, p: &IntensityParams, rng: &mut R) -> Image2D {
    let brightness = uniform(rng, p.brightness_range);
    let contrast = uniform(rng, p.contrast_range);
    let gamma = uniform(rng, p.gamma_range);
    let mut out = image.clone();
    let px = out.pixels_mut();
    if brightness != 0.0 {
        px.iter_mut().for_each(|v| *v += brightness);
    }
    if contrast != 1.0 {
        let mean = (px.iter().map(|&v| v as f64).sum::<f64>() / px.len() as f64) as f32;
        px.iter_mut()
            .for_each(|v| *v = mean + contrast * (*v - mean));
    }
    if gamma != 1.0 {
        let lo = px.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = px.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        if hi > lo {
            let span = hi - lo;
            px.iter_mut()
                .for_each(|v| *v = lo + ((*v - lo) / span).powf(gamma) * span);
        }
    }
    if p.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, p.noise_sigma).expect("validated sigma");
        px.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    out
}

/// Applies the regime's transforms: geometric first, then intensity.
pub fn augment<R: Rng + ?Sized>(image: &Image2D, regime: &AugmentRegime, rng: &mut R) -> Image2D {
    augment_with_mask(image, None, regime, rng).0
}

/// As [`augment`], also moving `mask` through the geometric part only.
pub fn augment_with_mask<R: Rng + ?Sized>(
    image: &Image2D,
    mask: Option<&Mask2D>,
    regime: &AugmentRegime,
    rng: &mut R,
) -> (Image2D, Option<Mask2D>) {
    if regime.is_identity() {
        return (image.clone(), mask.cloned());
    }
    let (mut image, mut mask) = (image.clone(), mask.cloned());
    if let Some(g) = &regime.geometric {
        let draw = GeomDraw::sample(g, rng);
        image = draw.apply(&image);
        mask = mask.map(|m| Mask2D::from_image(&draw.apply(&m.to_image())));
    }
    if let Some(i) = &regime.intensity {
        image = apply_intensity(&image, i, rng);
    }
    (image, mask)
}

/// A regime plus a count of the transforms it actually applied.
#[derive(Clone, Debug)]
pub struct Augmenter {
    regime: AugmentRegime,
    calls: u64,
}

impl Augmenter {
    pub fn new(regime: AugmentRegime) -> Self {
        Self { regime, calls: 0 }
    }

    pub fn regime(&self) -> &AugmentRegime {
        &self.regime
    }

    /// Number of images that went through a non-identity transform.
    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn apply<R: Rng + ?Sized>(&mut self, image: &Image2D, rng: &mut R) -> Image2D {
        if self.regime.is_identity() {
            return image.clone();
        }
        self.calls += 1;
        augment(image, &self.regime, rng)
    }
}
