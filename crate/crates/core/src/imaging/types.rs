use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(Error::Data(format!("label must be 0 or 1, got {other}"))),
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// 3-D voxel grid, stored with x fastest and z slowest:
/// `index = (z * Y + y) * X + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    pub spacing_mm: [f32; 3],
    voxels: Vec<f32>,
    pub meta: BTreeMap<String, String>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing_mm: [f32; 3], voxels: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "volume dims must be positive, got {dims:?}"
            )));
        }
        if voxels.len() != dims.iter().product::<usize>() {
            return Err(Error::shape(
                "volume",
                format!("{} voxels for dims {dims:?}", voxels.len()),
            ));
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume voxels".into()));
        }
        Ok(Self {
            dims,
            spacing_mm,
            voxels,
            meta: BTreeMap::new(),
        })
    }

    pub fn filled(dims: [usize; 3], value: f32) -> Self {
        Self {
            dims,
            spacing_mm: [1.0; 3],
            voxels: vec![value; dims.iter().product()],
            meta: BTreeMap::new(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [f32] {
        &mut self.voxels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.index(x, y, z);
        self.voxels[i] = v;
    }
}

/// Boolean grid sharing a [`Volume`]'s indexing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VolumeMask {
    dims: [usize; 3],
    bits: Vec<bool>,
}

impl VolumeMask {
    pub fn empty(dims: [usize; 3]) -> Self {
        Self {
            dims,
            bits: vec![false; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[(z * self.dims[1] + y) * self.dims[0] + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        self.bits[(z * self.dims[1] + y) * self.dims[0] + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_volume(&self) -> Volume {
        let voxels = self
            .bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        Volume {
            dims: self.dims,
            spacing_mm: [1.0; 3],
            voxels,
            meta: BTreeMap::new(),
        }
    }

    /// Voxels strictly above one half become set.
    pub fn from_volume(volume: &Volume) -> Self {
        Self {
            dims: volume.dims,
            bits: volume.voxels.iter().map(|&v| v > 0.5).collect(),
        }
    }
}

/// Row-major 2-D image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image2D {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Image2D {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dims must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::shape(
                "image",
                format!("{} pixels for {height}x{width}", pixels.len()),
            ));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image pixels".into()));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.pixels[r * self.width + c]
    }

    pub(crate) fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Binary 2-D mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask2D {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask2D {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::shape(
                "mask",
                format!("{} bits for {height}x{width}", bits.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.width + c]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_image(&self) -> Image2D {
        Image2D {
            height: self.height,
            width: self.width,
            pixels: self
                .bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Pixels strictly above one half become set.
    pub fn from_image(image: &Image2D) -> Self {
        Self {
            height: image.height,
            width: image.width,
            bits: image.pixels.iter().map(|&v| v > 0.5).collect(),
        }
    }

    /// Disc dilation: a pixel is set if any set pixel lies within
    /// Euclidean distance `radius`.
    pub fn dilate(&self, radius: usize) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as isize;
        let mut out = vec![false; self.bits.len()];
        for y in 0..self.height as isize {
            for x in 0..self.width as isize {
                if !self.bits[y as usize * self.width + x as usize] {
                    continue;
                }
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dy * dy + dx * dx > r * r {
                            continue;
                        }
                        let (yy, xx) = (y + dy, x + dx);
                        if yy >= 0
                            && xx >= 0
                            && (yy as usize) < self.height
                            && (xx as usize) < self.width
                        {
                            out[yy as usize * self.width + xx as usize] = true;
                        }
                    }
                }
            }
        }
        Self {
            height: self.height,
            width: self.width,
            bits: out,
        }
    }
}
