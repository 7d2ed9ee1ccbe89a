//! `MVOL` volumes and `MIP2` preprocessed samples.
//!
//! Both are little-endian: a 4-byte magic, a `u16` version, a fixed header,
//! an `f32` payload and a trailing CRC32 over everything after the header.

use std::fs;
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::error::{Error, FormatError, Result};

use super::{Image2D, Label, Mask2D, Sample, View, Volume};

pub const MVOL_MAGIC: &[u8; 4] = b"MVOL";
pub const MIP2_MAGIC: &[u8; 4] = b"MIP2";
pub const FORMAT_VERSION: u16 = 1;

const NO_LABEL: u8 = 0xFF;

pub fn encode_volume(volume: &Volume) -> Vec<u8> {
    let mut w = Writer::new(MVOL_MAGIC, FORMAT_VERSION);
    for d in volume.dims() {
        w.u32(d as u32);
    }
    for s in volume.spacing_mm {
        w.f32(s);
    }
    let payload_start = w.len();
    w.f32s(volume.voxels());
    w.finish_with_crc(payload_start)
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    let (mut r, version) = Reader::open(bytes, MVOL_MAGIC)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let mut spacing = [0f32; 3];
    for s in &mut spacing {
        *s = r.f32()?;
    }
    if dims.contains(&0) {
        return Err(FormatError::Malformed(format!("zero dimension in {dims:?}")).into());
    }
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| FormatError::Malformed("dimension overflow".into()))?;
    let payload_start = r.pos();
    let voxels = r.f32s(n)?;
    r.verify_crc(payload_start)?;
    Volume::new(dims, spacing, voxels)
}

pub fn write_volume(path: impl AsRef<Path>, volume: &Volume) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(volume)).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_volume(&bytes)
}

pub fn encode_sample(sample: &Sample) -> Vec<u8> {
    let mut w = Writer::new(MIP2_MAGIC, FORMAT_VERSION);
    w.u32(sample.image.height() as u32);
    w.u32(sample.image.width() as u32);
    w.u8(sample.label.map_or(NO_LABEL, Label::bit));
    w.u8(sample.view.code());
    w.u8(u8::from(sample.mask.is_some()));
    let payload_start = w.len();
    w.f32s(sample.image.pixels());
    if let Some(mask) = &sample.mask {
        let bytes: Vec<u8> = mask.bits().iter().map(|&b| u8::from(b)).collect();
        w.bytes(&bytes);
    }
    w.finish_with_crc(payload_start)
}

pub fn decode_sample(bytes: &[u8]) -> Result<Sample> {
    let (mut r, version) = Reader::open(bytes, MIP2_MAGIC)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let label = match r.u8()? {
        NO_LABEL => None,
        bit => Some(
            Label::from_bit(bit)
                .map_err(|_| FormatError::Malformed(format!("label byte {bit}")))?,
        ),
    };
    let view = View::from_code(r.u8()?)
        .ok_or_else(|| FormatError::Malformed("unknown view code".into()))?;
    let has_mask = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(FormatError::Malformed(format!("mask flag {other}")).into()),
    };
    let n = height
        .checked_mul(width)
        .ok_or_else(|| FormatError::Malformed("dimension overflow".into()))?;
    let payload_start = r.pos();
    let pixels = r.f32s(n)?;
    let mask_bytes = if has_mask { Some(r.take(n)?) } else { None };
    r.verify_crc(payload_start)?;
    let image = Image2D::new(height, width, pixels)?;
    let mask = match mask_bytes {
        Some(bytes) => {
            if bytes.iter().any(|&b| b > 1) {
                return Err(FormatError::Malformed("mask bytes must be 0 or 1".into()).into());
            }
            Some(Mask2D::new(
                height,
                width,
                bytes.iter().map(|&b| b == 1).collect(),
            )?)
        }
        None => None,
    };
    Ok(Sample {
        image,
        label,
        view,
        mask,
    })
}

pub fn write_sample(path: impl AsRef<Path>, sample: &Sample) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_sample(sample)).map_err(|e| Error::io(path, e))
}

pub fn read_sample(path: impl AsRef<Path>) -> Result<Sample> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sample(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_volume() -> Volume {
        let voxels = (0..2 * 3 * 4).map(|i| i as f32 * 0.5 - 3.0).collect();
        Volume::new([2, 3, 4], [0.5, 0.5, 0.8], voxels).unwrap()
    }

    #[test]
    fn volume_roundtrip_is_exact() {
        let v = small_volume();
        let back = decode_volume(&encode_volume(&v)).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn header_layout() {
        let bytes = encode_volume(&small_volume());
        assert_eq!(&bytes[..4], b"MVOL");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 6 + 12 + 12 + 24 * 4 + 4);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = encode_volume(&small_volume());
        bytes[4] = 9;
        assert!(matches!(
            decode_volume(&bytes),
            Err(Error::Format(FormatError::UnsupportedVersion(9)))
        ));
    }

    #[test]
    fn sample_without_label_or_mask() {
        let s = Sample {
            image: Image2D::from_fn(3, 5, |r, c| (r * 5 + c) as f32),
            label: None,
            view: View::Oblique45,
            mask: None,
        };
        assert_eq!(decode_sample(&encode_sample(&s)).unwrap(), s);
    }
}
