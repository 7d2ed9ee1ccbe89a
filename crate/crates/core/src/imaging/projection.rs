use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Image2D, Mask2D, Volume, VolumeMask};

/// Projection direction for a maximum-intensity projection.
///
/// Declaration order is the tie-break order used by [`select_best_mip`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    /// Max over z; image rows are y, columns are x.
    Axial,
    /// Max over y; rows are z, columns are x.
    Coronal,
    /// Max over x; rows are z, columns are y.
    Sagittal,
    /// Volume rotated 45 degrees about z, then projected like coronal.
    Oblique45,
}

impl View {
    pub const ALL: [View; 4] = [View::Axial, View::Coronal, View::Sagittal, View::Oblique45];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            View::Axial => "axial",
            View::Coronal => "coronal",
            View::Sagittal => "sagittal",
            View::Oblique45 => "oblique45",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown view {s:?}")))
    }
}

/// Trilinear sample with zero contribution from neighbours outside the grid.
fn sample_trilinear(vol: &Volume, fx: f32, fy: f32, fz: f32) -> f32 {
    let [nx, ny, nz] = vol.dims();
    let (x0, y0, z0) = (fx.floor(), fy.floor(), fz.floor());
    let (tx, ty, tz) = (fx - x0, fy - y0, fz - z0);
    let (x0, y0, z0) = (x0 as isize, y0 as isize, z0 as isize);
    let fetch = |x: isize, y: isize, z: isize| -> f32 {
        if x < 0 || y < 0 || z < 0 || x as usize >= nx || y as usize >= ny || z as usize >= nz {
            0.0
        } else {
            vol.get(x as usize, y as usize, z as usize)
        }
    };
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - tz), (1, tz)] {
        if wz == 0.0 {
            continue;
        }
        for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
            if wy == 0.0 {
                continue;
            }
            for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
                if wx == 0.0 {
                    continue;
                }
                acc += wx * wy * wz * fetch(x0 + dx, y0 + dy, z0 + dz);
            }
        }
    }
    acc
}

/// Rotates the volume about the z axis through its centre. Output voxels
/// whose source falls outside the grid are zero.
pub fn rotate_about_z(volume: &Volume, degrees: f32) -> Volume {
    let [nx, ny, nz] = volume.dims();
    let (cx, cy) = ((nx as f32 - 1.0) / 2.0, (ny as f32 - 1.0) / 2.0);
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = Volume::filled(volume.dims(), 0.0);
    out.spacing_mm = volume.spacing_mm;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                // inverse rotation maps output coordinates back to the source
                let sx = c * dx + s * dy + cx;
                let sy = -s * dx + c * dy + cy;
                out.set(x, y, z, sample_trilinear(volume, sx, sy, z as f32));
            }
        }
    }
    out
}

fn project_axis(volume: &Volume, view: View) -> Image2D {
    let [nx, ny, nz] = volume.dims();
    match view {
        View::Axial => Image2D::from_fn(ny, nx, |y, x| {
            (0..nz)
                .map(|z| volume.get(x, y, z))
                .fold(f32::NEG_INFINITY, f32::max)
        }),
        View::Coronal => Image2D::from_fn(nz, nx, |z, x| {
            (0..ny)
                .map(|y| volume.get(x, y, z))
                .fold(f32::NEG_INFINITY, f32::max)
        }),
        View::Sagittal => Image2D::from_fn(nz, ny, |z, y| {
            (0..nx)
                .map(|x| volume.get(x, y, z))
                .fold(f32::NEG_INFINITY, f32::max)
        }),
        View::Oblique45 => unreachable!("oblique is projected after rotation"),
    }
}

pub fn mip_project(volume: &Volume, view: View) -> Image2D {
    match view {
        View::Oblique45 => project_axis(&rotate_about_z(volume, 45.0), View::Coronal),
        axis => project_axis(volume, axis),
    }
}

/// Projects a 3-D mask with the same geometry as [`mip_project`].
/// A pixel is set when any voxel along its ray is set.
pub fn project_mask(mask: &VolumeMask, view: View) -> Mask2D {
    Mask2D::from_image(&mip_project(&mask.to_volume(), view))
}

/// Fraction of pixels strictly brighter than `mean + tail_k * std`.
/// A constant image scores zero.
pub fn salience_score(image: &Image2D, tail_k: f64) -> f64 {
    let px = image.pixels();
    let n = px.len() as f64;
    let mean = px.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = px.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return 0.0;
    }
    let cut = mean + tail_k * std;
    px.iter().filter(|&&v| v as f64 > cut).count() as f64 / n
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestMip {
    pub view: View,
    pub image: Image2D,
    pub score: f64,
}

/// Projects along every candidate view and keeps the highest-scoring one.
/// Ties go to the earlier view in [`View`] order regardless of the order
/// in `views`.
pub fn select_best_mip(volume: &Volume, views: &[View], tail_k: f64) -> Result<BestMip> {
    let mut candidates: Vec<View> = views.to_vec();
    candidates.sort();
    candidates.dedup();
    let mut best: Option<BestMip> = None;
    for view in candidates {
        let image = mip_project(volume, view);
        let score = salience_score(&image, tail_k);
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(BestMip { view, image, score });
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no candidate views".into()))
}
