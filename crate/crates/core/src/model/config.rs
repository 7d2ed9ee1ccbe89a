use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{conv_params, linear_params, ParamTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// The first convolution takes one channel.
    SingleChannel,
    /// The grey image is tiled to three identical channels first.
    Replicate3,
}

impl InputMode {
    pub fn channels(self) -> usize {
        match self {
            InputMode::SingleChannel => 1,
            InputMode::Replicate3 => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub input_mode: InputMode,
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    pub use_residual: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_mode: InputMode::SingleChannel,
            stage_channels: vec![8, 16, 32, 64],
            blocks_per_stage: 1,
            use_residual: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.len() < 2 {
            return Err(Error::Config(
                "model: encoder needs at least 2 stages".into(),
            ));
        }
        if self.stage_channels[0] == 0 || self.stage_channels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "model: stage channels must be positive and strictly increasing, got {:?}",
                self.stage_channels
            )));
        }
        Ok(())
    }

    /// Smallest square input whose last stage map is at least `min_side`.
    pub fn min_input_side(&self, min_side: usize) -> usize {
        // stage 1 halves via max-pool, later stages via stride-2 ceil halving
        let mut side = min_side.max(1);
        for _ in 1..self.stage_channels.len() {
            side = 2 * side - 1;
        }
        2 * side
    }

    /// Spatial side of every stage map for a square input of side `input`.
    pub fn stage_sides(&self, input: usize) -> Vec<usize> {
        let mut sides = Vec::with_capacity(self.stage_channels.len());
        let mut s = input / 2;
        sides.push(s);
        for _ in 1..self.stage_channels.len() {
            s = s.div_ceil(2);
            sides.push(s);
        }
        sides
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub pyramid_grids: Vec<usize>,
    /// 1-based stage indices feeding the pyramid; `None` uses every stage.
    pub pyramid_stages: Option<Vec<usize>>,
    /// Layer widths including the input width; `None` means
    /// `[2 * descriptor_dim, 64, 1]`.
    pub head_dims: Option<Vec<usize>>,
    pub dropout: f32,
    pub share_encoders: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            pyramid_grids: vec![1, 2, 4],
            pyramid_stages: None,
            head_dims: None,
            dropout: 0.5,
            share_encoders: false,
        }
    }
}

pub const DEFAULT_HIDDEN: usize = 64;

impl ModelConfig {
    /// ResNet-18 widths with global average pooling of the last stage and
    /// a `1024 → 256 → 1` head.
    pub fn gap_baseline() -> Self {
        Self {
            encoder: EncoderConfig {
                input_mode: InputMode::Replicate3,
                stage_channels: vec![64, 128, 256, 512],
                blocks_per_stage: 2,
                use_residual: true,
            },
            pyramid_grids: vec![1],
            pyramid_stages: Some(vec![4]),
            head_dims: Some(vec![1024, 256, 1]),
            dropout: 0.5,
            share_encoders: false,
        }
    }

    /// ResNet-18 widths with the full `{1, 2, 4}` pyramid over all four
    /// stages and a `2D → 2048 → 512 → 1` head.
    pub fn pyramid_full_scale() -> Self {
        let mut cfg = Self {
            encoder: EncoderConfig {
                input_mode: InputMode::Replicate3,
                stage_channels: vec![64, 128, 256, 512],
                blocks_per_stage: 2,
                use_residual: true,
            },
            ..Self::default()
        };
        cfg.head_dims = Some(vec![2 * cfg.descriptor_dim(), 2048, 512, 1]);
        cfg
    }

    pub fn selected_stages(&self) -> Vec<usize> {
        match &self.pyramid_stages {
            Some(s) => s.clone(),
            None => (1..=self.encoder.stage_channels.len()).collect(),
        }
    }

    /// Per-encoder descriptor width `Σ C_s · Σ g²`.
    pub fn descriptor_dim(&self) -> usize {
        let channels: usize = self
            .selected_stages()
            .iter()
            .filter_map(|&s| self.encoder.stage_channels.get(s.wrapping_sub(1)))
            .sum();
        let cells: usize = self.pyramid_grids.iter().map(|g| g * g).sum();
        channels * cells
    }

    pub fn resolved_head_dims(&self) -> Vec<usize> {
        self.head_dims
            .clone()
            .unwrap_or_else(|| vec![2 * self.descriptor_dim(), DEFAULT_HIDDEN, 1])
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        let n_stages = self.encoder.stage_channels.len();
        let stages = self.selected_stages();
        if stages.is_empty() || stages.iter().any(|&s| s == 0 || s > n_stages) {
            return Err(Error::Config(format!(
                "model: pyramid_stages {stages:?} must name stages in 1..={n_stages}"
            )));
        }
        if stages.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "model: pyramid_stages must be strictly increasing".into(),
            ));
        }
        if self.pyramid_grids.is_empty() || self.pyramid_grids.contains(&0) {
            return Err(Error::Config(
                "model: pyramid_grids must be non-empty and positive".into(),
            ));
        }
        let head = self.resolved_head_dims();
        if head.len() < 2 || head.contains(&0) {
            return Err(Error::Config(format!(
                "model: head_dims {head:?} needs at least two positive widths"
            )));
        }
        if head[0] != 2 * self.descriptor_dim() {
            return Err(Error::Config(format!(
                "model: head input width {} must equal 2 x descriptor width {}",
                head[0],
                self.descriptor_dim()
            )));
        }
        if *head.last().expect("non-empty") != 1 {
            return Err(Error::Config("model: last head width must be 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "model: dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Smallest square input side the pyramid accepts.
    pub fn min_input_side(&self) -> usize {
        let max_grid = self.pyramid_grids.iter().copied().max().unwrap_or(1);
        self.encoder.min_input_side(max_grid)
    }

    /// Closed-form per-layer parameter counts; needs no allocation, so it
    /// also covers configurations too large to build.
    pub fn param_table(&self) -> ParamTable {
        let enc = &self.encoder;
        let mut encoder_rows = Vec::new();
        let mut cin = enc.input_mode.channels();
        for (s, &c) in enc.stage_channels.iter().enumerate() {
            encoder_rows.push((format!("stage{}.entry", s + 1), conv_params(cin, c, 3)));
            for b in 0..enc.blocks_per_stage {
                for k in 1..=2 {
                    encoder_rows.push((
                        format!("stage{}.block{}.conv{k}", s + 1, b + 1),
                        conv_params(c, c, 3),
                    ));
                }
            }
            cin = c;
        }
        let mut table = ParamTable::default();
        let encoders: &[&str] = if self.share_encoders {
            &["encoder1"]
        } else {
            &["encoder1", "encoder2"]
        };
        for e in encoders {
            for (name, n) in &encoder_rows {
                table.push(format!("{e}.{name}"), *n);
            }
        }
        for (i, w) in self.resolved_head_dims().windows(2).enumerate() {
            table.push(format!("head.fc{}", i + 1), linear_params(w[0], w[1]));
        }
        table
    }
}
