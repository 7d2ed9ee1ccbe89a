use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::map_indices;
use crate::synthgen::{study_seed, LabeledStudy, Manifest, ManifestRow, MANIFEST_FILE};

use super::augment::{augment_with_mask, AugmentRegime};
use super::formats::{read_sample, write_sample};
use super::intensity::{center_crop, center_crop_mask, percentile_clip, zscore};
use super::projection::{project_mask, select_best_mip, View};
use super::{Image2D, Label, Mask2D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocConfig {
    pub clip_lo_pct: f32,
    pub clip_hi_pct: f32,
    pub crop: usize,
    pub salience_tail_k: f32,
    /// Candidate projections for view selection.
    pub views: Vec<View>,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        Self {
            clip_lo_pct: 0.5,
            clip_hi_pct: 99.5,
            crop: 64,
            salience_tail_k: 2.0,
            views: View::ALL.to_vec(),
        }
    }
}

impl PreprocConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.clip_lo_pct, self.clip_hi_pct);
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return Err(Error::Config(format!(
                "preprocess: need 0 <= clip_lo_pct < clip_hi_pct <= 100, got {lo} and {hi}"
            )));
        }
        if self.crop == 0 {
            return Err(Error::Config("preprocess: crop must be positive".into()));
        }
        if !self.salience_tail_k.is_finite() {
            return Err(Error::Config(
                "preprocess: salience_tail_k must be finite".into(),
            ));
        }
        if self.views.is_empty() {
            return Err(Error::Config(
                "preprocess: at least one view is required".into(),
            ));
        }
        Ok(())
    }
}

/// A preprocessed 2-D training or evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Image2D,
    pub label: Option<Label>,
    pub view: View,
    /// Projected aneurysm mask, only for positive studies.
    pub mask: Option<Mask2D>,
}

/// View selection, percentile clip, z-score, centre crop, then augmentation.
/// The mask follows the projection, crop and geometric augmentation only.
pub fn preprocess_study<R: Rng + ?Sized>(
    study: &LabeledStudy,
    config: &PreprocConfig,
    regime: &AugmentRegime,
    rng: &mut R,
) -> Result<Sample> {
    config.validate()?;
    let best = select_best_mip(&study.volume, &config.views, config.salience_tail_k as f64)?;
    let clipped = percentile_clip(
        &best.image,
        config.clip_lo_pct as f64,
        config.clip_hi_pct as f64,
    )?;
    let cropped = center_crop(&zscore(&clipped), config.crop)?;
    let mask = study
        .aneurysm_mask
        .as_ref()
        .map(|m| center_crop_mask(&project_mask(m, best.view), config.crop))
        .transpose()?;
    let (image, mask) = augment_with_mask(&cropped, mask.as_ref(), regime, rng);
    Ok(Sample {
        image,
        label: Some(study.label),
        view: best.view,
        mask,
    })
}

/// Preprocesses every study in `manifest` into `out_dir` as MIP2 files
/// and writes a manifest of the same shape listing them. Study `i` draws
/// augmentation randomness from `study_seed(seed, i)`.
pub fn preprocess_dataset(
    manifest: &Manifest,
    config: &PreprocConfig,
    regime: &AugmentRegime,
    seed: u64,
    out_dir: &Path,
    comments: &[String],
) -> Result<Manifest> {
    config.validate()?;
    regime.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let rows = map_indices(manifest.rows.len(), |i| -> Result<ManifestRow> {
        let row = &manifest.rows[i];
        let study = manifest.load_study(row)?;
        let mut rng = ChaCha8Rng::seed_from_u64(study_seed(seed, i as u64));
        let sample = preprocess_study(&study, config, regime, &mut rng)?;
        let file = format!("sample_{i:05}.mip2");
        write_sample(out_dir.join(&file), &sample)?;
        Ok(ManifestRow {
            file,
            label: row.label,
            seed: row.seed,
        })
    });
    let out = Manifest {
        rows: rows.into_iter().collect::<Result<_>>()?,
        root: out_dir.to_path_buf(),
    };
    out.write(&out_dir.join(MANIFEST_FILE), comments)?;
    Ok(out)
}

/// Reads the MIP2 samples listed in a preprocessed manifest. The label
/// stored in each file must agree with the manifest.
pub fn load_samples(manifest: &Manifest) -> Result<Vec<Sample>> {
    let loaded = map_indices(manifest.rows.len(), |i| -> Result<Sample> {
        let row = &manifest.rows[i];
        let path = manifest.root.join(&row.file);
        let sample = read_sample(&path)?;
        match sample.label {
            Some(l) if l == row.label => Ok(sample),
            other => Err(Error::Data(format!(
                "{}: label {:?} disagrees with manifest label {:?}",
                path.display(),
                other,
                row.label
            ))),
        }
    });
    loaded.into_iter().collect()
}
