use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainSetup;
use super::early_stop::EarlyStopping;
use super::history::{EpochRecord, History};
use crate::autodiff::{Float, Graph, Mode};
use crate::error::{Error, Result};
use crate::evaluation::{roc_auc, ScoredSet};
use crate::imaging::{Augmenter, Image2D, Sample};
use crate::model::{images_to_tensor, ParamGroup, Samm2dModel};
use crate::optim::{clip_global_norm, focal_loss_node, smooth_focal_loss, AdamW};

/// Independent random streams derived from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Augment = 3,
    Dropout = 4,
    Permute = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Borrowed images with 0/1 labels.
#[derive(Clone, Debug)]
pub struct LabeledImages<'a> {
    pub images: Vec<&'a Image2D>,
    pub labels: Vec<u8>,
}

impl<'a> LabeledImages<'a> {
    /// Selects `indices` from `samples`; every selected sample must be labelled.
    pub fn select(samples: &'a [Sample], indices: &[usize]) -> Result<Self> {
        let mut images = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = samples
                .get(i)
                .ok_or_else(|| Error::InvalidArgument(format!("sample index {i} out of range")))?;
            let label = s
                .label
                .ok_or_else(|| Error::Data(format!("sample {i} has no label")))?;
            images.push(&s.image);
            labels.push(label.bit());
        }
        Ok(Self { images, labels })
    }

    pub fn all(samples: &'a [Sample]) -> Result<Self> {
        Self::select(samples, &(0..samples.len()).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Same images, labels shuffled with `seed`.
    pub fn with_permuted_labels(&self, seed: u64) -> Self {
        let mut labels = self.labels.clone();
        labels.shuffle(&mut stream_rng(seed, Stream::Permute));
        Self {
            images: self.images.clone(),
            labels,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the lowest validation loss.
    pub best: Samm2dModel<f32>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: History,
    pub stopped_early: bool,
    pub augment_calls: u64,
    pub optimizer_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValScores {
    pub loss: f64,
    pub auc: f64,
    pub probs: Vec<f64>,
}

/// Eval-mode probabilities, focal loss and AUC on a labelled set.
pub fn evaluate(
    model: &Samm2dModel<f32>,
    set: &LabeledImages,
    setup: &TrainSetup,
) -> Result<ValScores> {
    let probs = model.predict(&set.images, setup.train.batch_size)?;
    let loss = smooth_focal_loss(&probs, &set.labels, &setup.effective_focal())?;
    let clamped: Vec<f64> = probs.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let auc = roc_auc(&ScoredSet::new(clamped, set.labels.clone())?)?;
    Ok(ValScores { loss, auc, probs })
}

/// Trains `model` in place and returns the best checkpoint by validation loss.
///
/// Each epoch shuffles the training set, augments every batch under the
/// configured regime, minimises the focal loss with clipped AdamW steps at
/// `group_lr * factor(epoch + batch / batches)`, then evaluates in eval
/// mode every `eval_every` epochs.
pub fn train_one(
    model: &mut Samm2dModel<f32>,
    train: &LabeledImages,
    val: &LabeledImages,
    setup: &TrainSetup,
) -> Result<TrainOutcome> {
    setup.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let val_pos = val.labels.iter().filter(|&&l| l == 1).count();
    if val_pos == 0 || val_pos == val.len() {
        return Err(Error::SingleClass(
            "validation set needs both classes".into(),
        ));
    }
    let cfg = &setup.train;
    let optim = setup.effective_optim();
    let focal = setup.effective_focal();
    let mut augmenter = Augmenter::new(setup.regime()?);

    let (names, groups): (Vec<String>, Vec<ParamGroup>) = model
        .named_params()
        .into_iter()
        .map(|p| (p.name, p.group))
        .unzip();
    let sizes: Vec<usize> = model
        .named_params()
        .iter()
        .map(|p| p.tensor.numel())
        .collect();
    let mut adamw = AdamW::new(
        optim.betas.0,
        optim.betas.1,
        optim.adam_eps,
        optim.weight_decay,
        &sizes,
    );

    let mut shuffle_rng = stream_rng(cfg.seed, Stream::Shuffle);
    let mut aug_rng = stream_rng(cfg.seed, Stream::Augment);
    let mut drop_rng = stream_rng(cfg.seed, Stream::Dropout);

    let mut stopper = EarlyStopping::new(cfg.early_stop_patience, cfg.min_delta);
    let mut best = model.clone();
    let mut history = History::default();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batches = train.len().div_ceil(cfg.batch_size);

    for epoch in 0..cfg.epochs_max {
        order.shuffle(&mut shuffle_rng);
        let lr_at = |t: f64, g: ParamGroup| optim.group_lr(g) * optim.factor(t);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;

        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let augmented: Vec<Image2D> = idx
                .iter()
                .map(|&i| augmenter.apply(train.images[i], &mut aug_rng))
                .collect();
            let refs: Vec<&Image2D> = augmented.iter().collect();
            let labels: Vec<u8> = idx.iter().map(|&i| train.labels[i]).collect();

            let mut g = Graph::<f32>::new();
            let bound = model.bind(&mut g);
            let x = g.constant(images_to_tensor(&refs)?);
            let context = |e: Error| match e {
                Error::NonFinite(what) => {
                    Error::NonFinite(format!("{what} at epoch {}, batch {}", epoch + 1, b + 1))
                }
                other => other,
            };
            let out = bound
                .forward(&mut g, x, Mode::Train, &mut drop_rng)
                .map_err(context)?;
            let loss = focal_loss_node(&mut g, out.probs, &labels, &focal).map_err(context)?;
            let loss_value = g.value(loss).data()[0].as_f64();
            if !loss_value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {}, batch {}",
                    epoch + 1,
                    b + 1
                )));
            }
            g.backward(loss)?;

            // parameters outside the loss's support (e.g. stages the pyramid skips) get zeros
            let mut grads: Vec<Vec<f32>> = bound
                .vars()
                .iter()
                .zip(&sizes)
                .map(|(&v, &n)| g.grad(v).map_or_else(|| vec![0.0; n], <[f32]>::to_vec))
                .collect();
            clip_global_norm(&mut grads, optim.clip_norm);
            let t = epoch as f64 + b as f64 / batches as f64;
            let lrs: Vec<f64> = groups.iter().map(|&grp| lr_at(t, grp)).collect();
            adamw
                .step(&mut model.params_mut(), &names, &grads, &lrs)
                .map_err(context)?;

            loss_sum += loss_value * idx.len() as f64;
            let probs = g.value(out.probs).data();
            correct += probs
                .iter()
                .zip(&labels)
                .filter(|&(&p, &y)| (p >= 0.5) == (y == 1))
                .count();
        }

        let evaluate_now = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs_max;
        let scores = if evaluate_now {
            Some(evaluate(model, val, setup)?)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_loss: scores.as_ref().map(|s| s.loss),
            val_auc: scores.as_ref().map(|s| s.auc),
            lr_encoder: lr_at(epoch as f64, ParamGroup::Encoder1),
            lr_head: lr_at(epoch as f64, ParamGroup::Head),
        });
        if let Some(s) = scores {
            let upd = stopper.update(epoch + 1, s.loss);
            if upd.new_best {
                best = model.clone();
            }
            if upd.stop {
                stopped_early = epoch + 1 < cfg.epochs_max;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        best,
        best_epoch: stopper.best_epoch().unwrap_or(0),
        best_val_loss: stopper.best_loss(),
        history,
        stopped_early,
        augment_calls: augmenter.calls(),
        optimizer_steps: adamw.steps_taken(),
    })
}
