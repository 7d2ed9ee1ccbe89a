//! Volume and image handling: file formats, projections, intensity
//! normalisation, cropping and augmentation.

pub mod augment;
pub mod formats;
pub mod intensity;
pub mod pipeline;
pub mod projection;
mod types;

pub use augment::{
    augment, augment_with_mask, AugmentConfig, AugmentRegime, Augmenter, GeometricParams,
    IntensityParams, RegimeId,
};
pub use formats::{
    decode_sample, decode_volume, encode_sample, encode_volume, read_sample, read_volume,
    write_sample, write_volume,
};
pub use intensity::{center_crop, center_crop_mask, percentile_clip, percentiles, zscore};
pub use pipeline::{load_samples, preprocess_dataset, preprocess_study, PreprocConfig, Sample};
pub use projection::{
    mip_project, project_mask, rotate_about_z, salience_score, select_best_mip, BestMip, View,
};
pub use types::{Image2D, Label, Mask2D, Volume, VolumeMask};
