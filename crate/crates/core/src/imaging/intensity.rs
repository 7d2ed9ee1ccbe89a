use crate::error::{Error, Result};

use super::{Image2D, Mask2D};

/// Linear-interpolated percentile of an already sorted slice.
fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

/// Percentiles at `lo_pct` and `hi_pct` of `values`, using linear
/// interpolation between order statistics.
pub fn percentiles(values: &[f32], lo_pct: f64, hi_pct: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("percentile of empty input".into()));
    }
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct > hi_pct {
        return Err(Error::InvalidArgument(format!(
            "percentiles must satisfy 0 <= lo <= hi <= 100, got ({lo_pct}, {hi_pct})"
        )));
    }
    let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    sorted.sort_by(f64::total_cmp);
    Ok((
        percentile_sorted(&sorted, lo_pct),
        percentile_sorted(&sorted, hi_pct),
    ))
}

/// Clamps every pixel to the image's own `[lo_pct, hi_pct]` percentile range.
pub fn percentile_clip(image: &Image2D, lo_pct: f64, hi_pct: f64) -> Result<Image2D> {
    let (lo, hi) = percentiles(image.pixels(), lo_pct, hi_pct)?;
    let (lo, hi) = (lo as f32, hi as f32);
    Ok(image.map(|v| v.clamp(lo, hi)))
}

/// Standard deviations below this are treated as this value.
pub const ZSCORE_STD_FLOOR: f64 = 1e-8;

/// Subtracts the mean and divides by the population standard deviation.
pub fn zscore(image: &Image2D) -> Image2D {
    let px = image.pixels();
    let n = px.len() as f64;
    let mean = px.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = px.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(ZSCORE_STD_FLOOR);
    image.map(|v| ((v as f64 - mean) / std) as f32)
}

fn crop_offsets(height: usize, width: usize, size: usize) -> Result<(usize, usize)> {
    if size == 0 || size > height || size > width {
        return Err(Error::shape(
            "center_crop",
            format!("cannot crop {size}x{size} from {height}x{width}"),
        ));
    }
    Ok(((height - size) / 2, (width - size) / 2))
}

/// Square crop of side `size` starting at `floor((dim - size) / 2)`.
pub fn center_crop(image: &Image2D, size: usize) -> Result<Image2D> {
    let (r0, c0) = crop_offsets(image.height(), image.width(), size)?;
    Ok(Image2D::from_fn(size, size, |r, c| {
        image.get(r0 + r, c0 + c)
    }))
}

pub fn center_crop_mask(mask: &Mask2D, size: usize) -> Result<Mask2D> {
    let (r0, c0) = crop_offsets(mask.height(), mask.width(), size)?;
    Ok(Mask2D::from_fn(size, size, |r, c| mask.get(r0 + r, c0 + c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let (lo, hi) = percentiles(&[4.0, 1.0, 3.0, 2.0], 50.0, 100.0).unwrap();
        assert!((lo - 2.5).abs() < 1e-12);
        assert_eq!(hi, 4.0);
    }

    #[test]
    fn crop_offset_rounds_down() {
        let img = Image2D::from_fn(5, 5, |r, c| (r * 5 + c) as f32);
        let out = center_crop(&img, 2).unwrap();
        assert_eq!(out.pixels(), &[6.0, 7.0, 11.0, 12.0]);
    }

    #[test]
    fn crop_larger_than_image_fails() {
        let img = Image2D::filled(4, 6, 0.0);
        assert!(matches!(center_crop(&img, 5), Err(Error::Shape { .. })));
    }
}
