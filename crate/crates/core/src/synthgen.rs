//! Procedural synthetic angiography volumes.
//!
//! Vessels are smoothed random walks rendered as Gaussian tubes. Positive
//! studies carry a solid sphere of vessel intensity attached to one vessel.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{read_volume, write_volume, Label, Volume, VolumeMask};

pub const MIN_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenParams {
    pub dims: [usize; 3],
    pub vessel_count: usize,
    pub vessel_intensity: f32,
    pub vessel_radius_vox: f32,
    pub aneurysm_radius_range_vox: (f32, f32),
    pub noise_sigma: f32,
    pub background_level: f32,
    pub prevalence: f32,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            dims: [64, 64, 64],
            vessel_count: 3,
            vessel_intensity: 1.0,
            vessel_radius_vox: 1.5,
            aneurysm_radius_range_vox: (3.0, 5.0),
            noise_sigma: 0.05,
            background_level: 0.1,
            prevalence: 0.43,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < MIN_DIM) {
            return Err(Error::InvalidArgument(format!(
                "volume dims {:?} too small to hold a vessel (minimum {MIN_DIM} per axis)",
                self.dims
            )));
        }
        if !(0.0..=1.0).contains(&self.prevalence) {
            return Err(Error::InvalidArgument(format!(
                "prevalence {} outside [0, 1]",
                self.prevalence
            )));
        }
        let (lo, hi) = self.aneurysm_radius_range_vox;
        if !(self.vessel_radius_vox > 0.0 && lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidArgument(
                "radii must be positive with lo <= hi".into(),
            ));
        }
        let max_r = self.dims.iter().min().copied().unwrap_or(0) as f32 / 2.0 - 2.0;
        if hi > max_r {
            return Err(Error::InvalidArgument(format!(
                "aneurysm radius {hi} does not fit in dims {:?}",
                self.dims
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(
                "noise_sigma must be finite and >= 0".into(),
            ));
        }
        if !self.vessel_intensity.is_finite() || !self.background_level.is_finite() {
            return Err(Error::InvalidArgument("intensities must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledStudy {
    pub volume: Volume,
    pub label: Label,
    /// Present exactly when the label is positive.
    pub aneurysm_mask: Option<VolumeMask>,
    pub seed: u64,
}

/// The `index + 1`-th output of a SplitMix64 stream started at `seed`.
pub fn study_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

type P3 = [f32; 3];

fn sub(a: P3, b: P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: P3) -> f32 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> P3 {
    let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    loop {
        let v = [normal.sample(rng), normal.sample(rng), normal.sample(rng)];
        let n = norm(v);
        if n > 1e-3 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn catmull_rom(p0: P3, p1: P3, p2: P3, p3: P3, t: f32) -> P3 {
    let (t2, t3) = (t * t, t * t * t);
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = 0.5
            * (2.0 * p1[k]
                + (p2[k] - p0[k]) * t
                + (2.0 * p0[k] - 5.0 * p1[k] + 4.0 * p2[k] - p3[k]) * t2
                + (3.0 * p1[k] - p0[k] - 3.0 * p2[k] + p3[k]) * t3);
    }
    out
}

/// Dense centreline samples (about half a voxel apart) of one vessel.
fn vessel_centerline<R: Rng + ?Sized>(dims: [usize; 3], rng: &mut R) -> Vec<P3> {
    const CONTROL_POINTS: usize = 8;
    const TURN: f32 = 0.6;
    let lo: P3 = dims.map(|d| d as f32 * 0.15);
    let hi: P3 = dims.map(|d| d as f32 * 0.85);
    let step = dims.iter().copied().min().unwrap_or(MIN_DIM) as f32 / 7.0;

    let mut pos: P3 = [0, 1, 2].map(|k| rng.random_range(lo[k]..hi[k]));
    let mut dir = unit_vector(rng);
    let mut ctrl = vec![pos];
    for _ in 1..CONTROL_POINTS {
        let kick = unit_vector(rng);
        let mut d = [0, 1, 2].map(|k| dir[k] + TURN * kick[k]);
        let n = norm(d);
        d = d.map(|v| v / n);
        for k in 0..3 {
            let next = pos[k] + d[k] * step;
            if next < lo[k] || next > hi[k] {
                d[k] = -d[k];
            }
            pos[k] = (pos[k] + d[k] * step).clamp(lo[k], hi[k]);
        }
        dir = d;
        ctrl.push(pos);
    }

    let mut padded = Vec::with_capacity(ctrl.len() + 2);
    padded.push(ctrl[0]);
    padded.extend_from_slice(&ctrl);
    padded.push(ctrl[ctrl.len() - 1]);
    let mut dense = Vec::new();
    for seg in padded.windows(4) {
        let length = norm(sub(seg[2], seg[1]));
        let n = (length * 2.0).ceil().max(1.0) as usize;
        for i in 0..n {
            dense.push(catmull_rom(
                seg[0],
                seg[1],
                seg[2],
                seg[3],
                i as f32 / n as f32,
            ));
        }
    }
    dense.push(ctrl[ctrl.len() - 1]);
    dense
}

fn render_tube(signal: &mut [f32], dims: [usize; 3], line: &[P3], radius: f32, intensity: f32) {
    let reach = (3.0 * radius).ceil() as isize;
    let inv = 1.0 / (2.0 * radius * radius);
    for p in line {
        let c = p.map(|v| v.round() as isize);
        for z in (c[2] - reach).max(0)..=(c[2] + reach).min(dims[2] as isize - 1) {
            for y in (c[1] - reach).max(0)..=(c[1] + reach).min(dims[1] as isize - 1) {
                for x in (c[0] - reach).max(0)..=(c[0] + reach).min(dims[0] as isize - 1) {
                    let d2 = (x as f32 - p[0]).powi(2)
                        + (y as f32 - p[1]).powi(2)
                        + (z as f32 - p[2]).powi(2);
                    let v = intensity * (-d2 * inv).exp();
                    let i = (z as usize * dims[1] + y as usize) * dims[0] + x as usize;
                    if v > signal[i] {
                        signal[i] = v;
                    }
                }
            }
        }
    }
}

/// Places a ball beside a random vessel point, overlapping the vessel wall.
/// The centre is snapped to a voxel so the mask is never empty.
fn render_aneurysm<R: Rng + ?Sized>(
    signal: &mut [f32],
    mask: &mut VolumeMask,
    params: &GenParams,
    vessels: &[Vec<P3>],
    rng: &mut R,
) {
    let dims = params.dims;
    let (lo, hi) = params.aneurysm_radius_range_vox;
    let radius = if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    };
    let anchor = if vessels.is_empty() {
        dims.map(|d| d as f32 / 2.0)
    } else {
        let line = &vessels[rng.random_range(0..vessels.len())];
        let a = line.len() / 5;
        let b = (line.len() - a).max(a + 1);
        line[rng.random_range(a..b)]
    };
    let offset = unit_vector(rng);
    let shift = radius * 0.8 + params.vessel_radius_vox * 0.5;
    let center: [isize; 3] = [0, 1, 2].map(|k| {
        let margin = radius + 1.0;
        (anchor[k] + offset[k] * shift)
            .clamp(margin, dims[k] as f32 - 1.0 - margin)
            .round() as isize
    });
    let reach = radius.ceil() as isize;
    for dz in -reach..=reach {
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if ((dx * dx + dy * dy + dz * dz) as f32).sqrt() > radius {
                    continue;
                }
                let (x, y, z) = (center[0] + dx, center[1] + dy, center[2] + dz);
                if x < 0
                    || y < 0
                    || z < 0
                    || x as usize >= dims[0]
                    || y as usize >= dims[1]
                    || z as usize >= dims[2]
                {
                    continue;
                }
                let (x, y, z) = (x as usize, y as usize, z as usize);
                mask.set(x, y, z, true);
                let i = (z * dims[1] + y) * dims[0] + x;
                signal[i] = signal[i].max(params.vessel_intensity);
            }
        }
    }
}

/// Generates one study. The output is a pure function of `(seed, params,
/// force_label)`.
pub fn gen_study(
    seed: u64,
    params: &GenParams,
    force_label: Option<Label>,
) -> Result<LabeledStudy> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drawn = if rng.random::<f32>() < params.prevalence {
        Label::Positive
    } else {
        Label::Negative
    };
    let label = force_label.unwrap_or(drawn);
    let dims = params.dims;
    let n: usize = dims.iter().product();

    let vessels: Vec<Vec<P3>> = (0..params.vessel_count)
        .map(|_| vessel_centerline(dims, &mut rng))
        .collect();
    let mut signal = vec![0.0f32; n];
    for line in &vessels {
        render_tube(
            &mut signal,
            dims,
            line,
            params.vessel_radius_vox,
            params.vessel_intensity,
        );
    }
    let aneurysm_mask = if label.is_positive() {
        let mut mask = VolumeMask::empty(dims);
        render_aneurysm(&mut signal, &mut mask, params, &vessels, &mut rng);
        Some(mask)
    } else {
        None
    };

    let mut voxels: Vec<f32> = signal.iter().map(|s| params.background_level + s).collect();
    if params.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, params.noise_sigma).expect("validated sigma");
        voxels
            .iter_mut()
            .for_each(|v| *v += normal.sample(&mut rng));
    }
    let mut volume = Volume::new(dims, [1.0; 3], voxels)?;
    volume.meta.insert("seed".into(), seed.to_string());
    volume.meta.insert("label".into(), label.bit().to_string());
    Ok(LabeledStudy {
        volume,
        label,
        aneurysm_mask,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRow {
    /// Volume path relative to the manifest's directory.
    pub file: String,
    pub label: Label,
    pub seed: u64,
}

impl ManifestRow {
    pub fn mask_file(&self) -> Option<String> {
        self.label
            .is_positive()
            .then(|| self.file.trim_end_matches(".mvol").to_string() + ".mask.mvol")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    /// Directory holding the listed files.
    pub root: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.csv";

impl Manifest {
    /// Writes `manifest.csv` with each `comments` line prefixed by `# `.
    pub fn write(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut out = String::new();
        for c in comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Data(format!("manifest: {e}"));
        w.write_record(["file", "label", "seed"]).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.file.clone(),
                r.label.bit().to_string(),
                r.seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let body = w
            .into_inner()
            .map_err(|e| Error::Data(format!("manifest: {e}")))?;
        out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["file", "label", "seed"] {
            return Err(Error::Data(format!(
                "{}: expected columns file,label,seed, found {:?}",
                path.display(),
                headers
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let bad =
                |what: &str| Error::Data(format!("{}: row {}: bad {what}", path.display(), i + 1));
            let bit: u8 = rec[1].parse().map_err(|_| bad("label"))?;
            rows.push(ManifestRow {
                file: rec[0].to_string(),
                label: Label::from_bit(bit).map_err(|_| bad("label"))?,
                seed: rec[2].parse().map_err(|_| bad("seed"))?,
            });
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { rows, root })
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.label.is_positive()).count()
    }

    /// Loads the volume (and mask, for positives) behind one row.
    pub fn load_study(&self, row: &ManifestRow) -> Result<LabeledStudy> {
        let volume = read_volume(self.root.join(&row.file))?;
        let aneurysm_mask = match row.mask_file() {
            Some(f) => Some(VolumeMask::from_volume(&read_volume(self.root.join(f))?)),
            None => None,
        };
        Ok(LabeledStudy {
            volume,
            label: row.label,
            aneurysm_mask,
            seed: row.seed,
        })
    }
}

/// Writes `n` studies and their manifest into `out_dir`.
pub fn gen_dataset(
    n: usize,
    params: &GenParams,
    seed: u64,
    out_dir: &Path,
    comments: &[String],
) -> Result<Manifest> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "dataset size must be at least 1".into(),
        ));
    }
    params.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let s = study_seed(seed, i as u64);
        let study = gen_study(s, params, None)?;
        let row = ManifestRow {
            file: format!("study_{i:05}.mvol"),
            label: study.label,
            seed: s,
        };
        write_volume(out_dir.join(&row.file), &study.volume)?;
        if let (Some(mask), Some(f)) = (&study.aneurysm_mask, row.mask_file()) {
            write_volume(out_dir.join(f), &mask.to_volume())?;
        }
        rows.push(row);
    }
    let manifest = Manifest {
        rows,
        root: out_dir.to_path_buf(),
    };
    manifest.write(&out_dir.join(MANIFEST_FILE), comments)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_seeds_differ_by_index() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|i| study_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(study_seed(1, 0), study_seed(2, 0));
    }

    #[test]
    fn small_dims_rejected() {
        let p = GenParams {
            dims: [15, 32, 32],
            ..GenParams::default()
        };
        assert!(matches!(
            gen_study(0, &p, None),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn mask_file_name() {
        let row = ManifestRow {
            file: "study_00003.mvol".into(),
            label: Label::Positive,
            seed: 1,
        };
        assert_eq!(row.mask_file().as_deref(), Some("study_00003.mask.mvol"));
    }
}
