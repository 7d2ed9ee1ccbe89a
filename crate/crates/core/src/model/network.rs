use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{Float, Graph, Mode, Tensor, Var};
use crate::error::{Error, Result};
use crate::imaging::Image2D;

use super::config::{InputMode, ModelConfig};
use super::layers::{Conv, Dense, Encoder, Head, ResBlock, Stage};
use super::params::ParamTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder1,
    Encoder2,
    Head,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Encoder1 => "encoder1",
            ParamGroup::Encoder2 => "encoder2",
            ParamGroup::Head => "head",
        }
    }

    pub fn is_encoder(self) -> bool {
        self != ParamGroup::Head
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug)]
pub struct NamedParam<'a, T> {
    pub name: String,
    pub group: ParamGroup,
    pub tensor: &'a Tensor<T>,
}

/// Two convolutional encoders, per-encoder pyramid descriptors, and an MLP
/// head over their concatenation.
#[derive(Clone, Debug, PartialEq)]
pub struct Samm2dModel<T: Float = f32> {
    config: ModelConfig,
    encoder1: Encoder<Tensor<T>>,
    /// `None` when both branches share `encoder1`.
    encoder2: Option<Encoder<Tensor<T>>>,
    head: Head<Tensor<T>>,
}

fn zero_encoder<T: Float>(config: &ModelConfig) -> Encoder<Tensor<T>> {
    let enc = &config.encoder;
    let mut cin = enc.input_mode.channels();
    let conv = |cin: usize, cout: usize, stride: usize| Conv {
        weight: Tensor::zeros(&[cout, cin, 3, 3]),
        bias: Tensor::zeros(&[cout]),
        stride,
    };
    let stages = enc
        .stage_channels
        .iter()
        .enumerate()
        .map(|(s, &c)| {
            let entry = conv(cin, c, if s == 0 { 1 } else { 2 });
            cin = c;
            Stage {
                entry,
                blocks: (0..enc.blocks_per_stage)
                    .map(|_| ResBlock {
                        conv1: conv(c, c, 1),
                        conv2: conv(c, c, 1),
                    })
                    .collect(),
            }
        })
        .collect();
    Encoder { stages }
}

fn zero_head<T: Float>(config: &ModelConfig) -> Head<Tensor<T>> {
    Head {
        layers: config
            .resolved_head_dims()
            .windows(2)
            .map(|w| Dense {
                weight: Tensor::zeros(&[w[0], w[1]]),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect(),
    }
}

/// Fan-in of a weight tensor: everything but the output axis.
fn fan_in(shape: &[usize]) -> usize {
    match shape {
        [d, _] => *d,
        [_, rest @ ..] => rest.iter().product(),
        [] => 1,
    }
}

impl<T: Float> Samm2dModel<T> {
    /// Model with every parameter zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let encoder1 = zero_encoder(&config);
        let encoder2 = (!config.share_encoders).then(|| zero_encoder(&config));
        let head = zero_head(&config);
        Ok(Self {
            config,
            encoder1,
            encoder2,
            head,
        })
    }

    /// Every weight and bias uniform in `±1/sqrt(fan_in)` of its layer.
    /// Deterministic in the rng state.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        // parameters come in (weight, bias) pairs; a bias takes its weight's fan-in
        let mut fan = 1;
        for p in model.params_mut() {
            if p.shape().len() > 1 {
                fan = fan_in(p.shape());
            }
            let bound = 1.0 / (fan as f64).sqrt();
            for v in p.data_mut() {
                *v = T::of(rng.random_range(-bound..bound));
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Encoder 1 or 2. With shared encoders both return the same storage.
    pub fn encoder(&self, which: usize) -> &Encoder<Tensor<T>> {
        match (which, &self.encoder2) {
            (2, Some(e)) => e,
            _ => &self.encoder1,
        }
    }

    pub fn head(&self) -> &Head<Tensor<T>> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Head<Tensor<T>> {
        &mut self.head
    }

    /// Every parameter tensor in canonical order: encoder1, encoder2 (unless
    /// shared), head; within a layer weight before bias.
    pub fn named_params(&self) -> Vec<NamedParam<'_, T>> {
        let mut out = Vec::new();
        let mut collect = |group: ParamGroup, name: String, tensor| {
            out.push(NamedParam {
                name,
                group,
                tensor,
            })
        };
        self.encoder1
            .visit("encoder1", &mut |n, t| collect(ParamGroup::Encoder1, n, t));
        if let Some(e2) = &self.encoder2 {
            e2.visit("encoder2", &mut |n, t| collect(ParamGroup::Encoder2, n, t));
        }
        self.head
            .visit("head", &mut |n, t| collect(ParamGroup::Head, n, t));
        out
    }

    /// Mutable parameters in the order of [`Self::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        let Self {
            encoder1,
            encoder2,
            head,
            ..
        } = self;
        encoder1.visit_mut(&mut |t| out.push(t));
        if let Some(e2) = encoder2 {
            e2.visit_mut(&mut |t| out.push(t));
        }
        head.visit_mut(&mut |t| out.push(t));
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_params().iter().map(|p| p.tensor.numel()).sum()
    }

    /// Per-layer counts read off the allocated tensors.
    pub fn param_table(&self) -> ParamTable {
        let mut table = ParamTable::default();
        for p in self.named_params() {
            let layer = p
                .name
                .rsplit_once('.')
                .map_or(p.name.as_str(), |(l, _)| l)
                .to_string();
            match table.rows.last_mut() {
                Some((last, n)) if *last == layer => *n += p.tensor.numel(),
                _ => table.push(layer, p.tensor.numel()),
            }
        }
        table
    }

    pub fn cast<U: Float>(&self) -> Samm2dModel<U> {
        let c = |t: &Tensor<T>| t.cast::<U>();
        Samm2dModel {
            config: self.config.clone(),
            encoder1: self.encoder1.map(&mut |t| c(t)),
            encoder2: self.encoder2.as_ref().map(|e| e.map(&mut |t| c(t))),
            head: self.head.map(&mut |t| c(t)),
        }
    }

    /// Rebuilds a model from named tensors such as a checkpoint's.
    pub fn from_named(config: ModelConfig, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        let names: Vec<String> = model.named_params().into_iter().map(|p| p.name).collect();
        if names.len() != tensors.len() {
            return Err(Error::Data(format!(
                "expected {} parameter tensors, found {}",
                names.len(),
                tensors.len()
            )));
        }
        for ((expected, slot), (name, t)) in names.iter().zip(model.params_mut()).zip(tensors) {
            if *expected != name || slot.shape() != t.shape() {
                return Err(Error::Data(format!(
                    "parameter {name} {:?} does not match expected {expected} {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(model)
    }

    /// Inserts the parameters as graph leaves, tracked for gradients.
    pub fn bind(&self, g: &mut Graph<T>) -> BoundModel {
        self.bind_with(g, true)
    }

    /// Inserts the parameters as constants, for inference.
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> BoundModel {
        self.bind_with(g, false)
    }

    fn bind_with(&self, g: &mut Graph<T>, track: bool) -> BoundModel {
        let mut vars = Vec::new();
        let mut leaf = |t: &Tensor<T>| {
            let mut t = t.clone();
            t.requires_grad = track;
            let v = g.leaf(t);
            vars.push(v);
            v
        };
        let encoder1 = self.encoder1.map(&mut leaf);
        let encoder2 = match &self.encoder2 {
            Some(e) => e.map(&mut leaf),
            None => encoder1.clone(),
        };
        let head = self.head.map(&mut leaf);
        BoundModel {
            config: self.config.clone(),
            encoder1,
            encoder2,
            head,
            vars,
        }
    }

    /// Eval-mode probabilities for `images`, processed `batch_size` at a time.
    pub fn predict(&self, images: &[&Image2D], batch_size: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(images.len());
        // eval-mode dropout never draws from the rng
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for chunk in images.chunks(batch_size.max(1)) {
            let mut g = Graph::<T>::new();
            let bound = self.bind_frozen(&mut g);
            let x = g.constant(images_to_tensor(chunk)?);
            let fwd = bound.forward(&mut g, x, Mode::Eval, &mut rng)?;
            out.extend(g.value(fwd.probs).data().iter().map(|p| p.as_f64()));
        }
        Ok(out)
    }
}

/// Stacks equally sized images into an `N × 1 × H × W` tensor.
pub fn images_to_tensor<T: Float>(images: &[&Image2D]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty image batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::shape(
                "batch",
                format!(
                    "mixed image sizes {h}x{w} and {}x{}",
                    img.height(),
                    img.width()
                ),
            ));
        }
        data.extend(img.pixels().iter().map(|&v| T::of(v as f64)));
    }
    Tensor::new(&[images.len(), 1, h, w], data)
}

/// Graph handles for one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `N × 1` pre-sigmoid scores.
    pub logits: Var,
    /// `N × 1` probabilities.
    pub probs: Var,
    pub maps1: Vec<Var>,
    pub maps2: Vec<Var>,
}

/// A model's parameters inserted into a [`Graph`].
#[derive(Clone, Debug)]
pub struct BoundModel {
    config: ModelConfig,
    encoder1: Encoder<Var>,
    encoder2: Encoder<Var>,
    head: Head<Var>,
    vars: Vec<Var>,
}

impl BoundModel {
    /// Parameter handles in the order of [`Samm2dModel::named_params`].
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn conv<T: Float>(g: &mut Graph<T>, c: &Conv<Var>, x: Var) -> Result<Var> {
        g.conv2d(x, c.weight, c.bias, c.stride, 1)
    }

    /// One `N × C × H × W` map per stage.
    pub fn encode<T: Float>(&self, g: &mut Graph<T>, which: usize, image: Var) -> Result<Vec<Var>> {
        let enc = if which == 2 {
            &self.encoder2
        } else {
            &self.encoder1
        };
        let (h, w) = match g.shape(image) {
            &[_, 1, h, w] => (h, w),
            s => {
                return Err(Error::shape(
                    "encode",
                    format!("expected N x 1 x H x W input, got {s:?}"),
                ))
            }
        };
        let min = self.config.min_input_side();
        if h < min || w < min {
            return Err(Error::shape(
                "encode",
                format!(
                    "{h}x{w} input is too small for {} stages with grid {:?}; need at least {min}x{min}",
                    enc.stages.len(),
                    self.config.pyramid_grids
                ),
            ));
        }
        let mut x = match self.config.encoder.input_mode {
            InputMode::SingleChannel => image,
            InputMode::Replicate3 => g.repeat_channels(image, 3)?,
        };
        let mut maps = Vec::with_capacity(enc.stages.len());
        for (s, stage) in enc.stages.iter().enumerate() {
            x = Self::conv(g, &stage.entry, x)?;
            x = g.relu(x)?;
            if s == 0 {
                x = g.maxpool2d(x, 2, 2)?;
            }
            for block in &stage.blocks {
                let mut y = Self::conv(g, &block.conv1, x)?;
                y = g.relu(y)?;
                y = Self::conv(g, &block.conv2, y)?;
                if self.config.encoder.use_residual {
                    y = g.add(y, x)?;
                }
                x = g.relu(y)?;
            }
            maps.push(x);
        }
        Ok(maps)
    }

    /// Concatenated pyramid pools of the selected stage maps, `N × D`.
    pub fn descriptor<T: Float>(&self, g: &mut Graph<T>, maps: &[Var]) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for s in self.config.selected_stages() {
            let map = *maps
                .get(s - 1)
                .ok_or_else(|| Error::shape("descriptor", format!("no map for stage {s}")))?;
            for &grid in &self.config.pyramid_grids {
                let pooled = g.adaptive_avg_pool(map, grid)?;
                let flat = g.flatten(pooled)?;
                acc = Some(match acc {
                    Some(a) => g.concat(a, flat)?,
                    None => flat,
                });
            }
        }
        acc.ok_or_else(|| Error::shape("descriptor", "no pyramid cells"))
    }

    /// Both branches see the same image.
    pub fn forward<T: Float, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        image: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        self.forward_pair(g, image, image, mode, rng)
    }

    /// Branch 1 sees `image1`, branch 2 sees `image2`.
    pub fn forward_pair<T: Float, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        image1: Var,
        image2: Var,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let maps1 = self.encode(g, 1, image1)?;
        let maps2 = self.encode(g, 2, image2)?;
        let d1 = self.descriptor(g, &maps1)?;
        let d2 = self.descriptor(g, &maps2)?;
        let mut h = g.concat(d1, d2)?;
        let last = self.head.layers.len() - 1;
        for (i, layer) in self.head.layers.iter().enumerate() {
            h = g.linear(h, layer.weight, layer.bias)?;
            if i < last {
                h = g.relu(h)?;
                h = g.dropout(h, self.config.dropout, mode, rng)?;
            }
        }
        let probs = g.sigmoid(h)?;
        Ok(ForwardOutput {
            logits: h,
            probs,
            maps1,
            maps2,
        })
    }
}
