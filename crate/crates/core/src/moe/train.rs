//! Labelled feature sets and the soft-gated training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{load_balance_loss, GateOutput};
use super::model::{argmax, CostTable, GateMode, HardOutput, MoeModel, N_EXPERTS};
use crate::error::{bail, Result};
use crate::nn::{early_stopper, lr_at, AdamW, Graph, Tensor, TrainConfig};
use crate::rng::{derive_seed, rng_from_seed};

/// One labelled record: log-magnitude spectrogram and standardized PSD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub image: Vec<f32>,
    pub psd: Vec<f32>,
    pub label: usize,
    /// Number of superposed primitives.
    pub tier: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub image_h: usize,
    pub image_w: usize,
    pub psd_len: usize,
    pub samples: Vec<Sample>,
}

/// Spectrogram scaled to zero mean and unit variance; constant images map
/// to zeros.
pub fn standardize_image(image: &[f32]) -> Vec<f32> {
    let n = image.len().max(1) as f64;
    let mean = image.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = image.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-12 {
        return vec![0.0; image.len()];
    }
    image.iter().map(|&v| ((v as f64 - mean) / sd) as f32).collect()
}

/// Network inputs of a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub image: Tensor<f32>,
    pub psd: Tensor<f32>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(image_h: usize, image_w: usize, psd_len: usize, samples: Vec<Sample>) -> Result<Self> {
        for s in &samples {
            if s.image.len() != image_h * image_w || s.psd.len() != psd_len {
                bail!(Input, "sample {} does not match {image_h}x{image_w} / {psd_len}", s.id);
            }
        }
        Ok(Self { image_h, image_w, psd_len, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            image_h: self.image_h,
            image_w: self.image_w,
            psd_len: self.psd_len,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Seeded random partition into `(train, held_out)`.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            bail!(Parameter, "train fraction {train_fraction} outside [0, 1]");
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng_from_seed(seed));
        let n_train = (train_fraction * self.len() as f64).round() as usize;
        Ok((self.subset(&idx[..n_train]), self.subset(&idx[n_train..])))
    }

    pub fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let b = idx.len();
        let mut image = Vec::with_capacity(b * self.image_h * self.image_w);
        let mut psd = Vec::with_capacity(b * self.psd_len);
        let mut labels = Vec::with_capacity(b);
        for &i in idx {
            let s = self.samples.get(i).ok_or_else(|| crate::Error::Input(format!("no sample {i}")))?;
            image.extend(standardize_image(&s.image));
            psd.extend_from_slice(&s.psd);
            labels.push(s.label);
        }
        Ok(Batch {
            image: Tensor::new(vec![b, 1, self.image_h, self.image_w], image)?,
            psd: Tensor::new(vec![b, self.psd_len], psd)?,
            labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub gate: GateMode,
    /// Samples per inference batch during validation.
    pub eval_batch: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { gate: GateMode::Learned, eval_batch: 64 }
    }
}

/// Training and validation statistics of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Batch means over the epoch.
    pub loss: f64,
    pub ce: f64,
    pub aux: f64,
    pub train_accuracy: f64,
    /// Hard-gated held-out accuracy in percent.
    pub val_oa: f64,
    /// Share of held-out samples routed to each expert.
    pub val_usage: [f64; N_EXPERTS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Parameters of the best validation epoch.
    pub model: MoeModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Hard-gated predictions for every sample of `data`.
pub fn predict_dataset(model: &MoeModel, data: &Dataset, batch: usize) -> Result<Vec<HardOutput>> {
    let costs: CostTable = model.costs()?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(batch.max(1)) {
        let b = data.batch(chunk)?;
        out.extend(model.predict_hard_with(&b.image, &b.psd, &costs)?);
    }
    Ok(out)
}

/// Mini-batch AdamW on cross-entropy plus `λ·aux` with soft gating.
pub fn fit(model: MoeModel, train: &Dataset, val: &Dataset, cfg: &TrainConfig, opts: &FitOptions) -> Result<FitResult> {
    cfg.validate()?;
    if train.is_empty() {
        bail!(Input, "training set is empty");
    }
    if let GateMode::Forced(e) = opts.gate {
        if e >= N_EXPERTS {
            bail!(Parameter, "no expert {e}");
        }
    }
    if matches!(opts.gate, GateMode::Fixed(_)) {
        bail!(Parameter, "fixed gate weights cannot be used for training");
    }
    let mut model = model;
    let mut opt = AdamW::new(&model.params, cfg.weight_decay);
    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best = model.clone();
    let mut best_oa = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let lr = lr_at(epoch, cfg);
        order.sort_unstable();
        order.shuffle(&mut rng_from_seed(derive_seed(cfg.seed, &[epoch as u64])));
        let (mut loss_sum, mut ce_sum, mut aux_sum, mut correct) = (0.0, 0.0, 0.0, 0usize);
        let mut n_batches = 0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train.batch(chunk)?;
            let grads = {
                let mut g = Graph::new(&model.params);
                let image = g.input(batch.image.clone());
                let psd = g.input(batch.psd.clone());
                let out = model.arch.forward_soft(&mut g, image, psd, &opts.gate)?;
                let lv = model.arch.loss(&mut g, &out, &batch.labels, cfg.aux_weight)?;
                let (loss, ce, aux) =
                    (g.value(lv.total).item().into(), g.value(lv.ce).item().into(), g.value(lv.aux).item().into());
                let (loss, ce, aux): (f64, f64, f64) = (loss, ce, aux);
                if !loss.is_finite() {
                    bail!(Numeric, "non-finite loss at epoch {epoch}, batch {bi}: ce {ce}, aux {aux}, lr {lr}");
                }
                loss_sum += loss;
                ce_sum += ce;
                aux_sum += aux;
                n_batches += 1;
                let probs = g.value(out.probs).to_f64_vec();
                let c = model.arch.spec.classes;
                correct += probs.chunks(c).zip(&batch.labels).filter(|(row, &y)| argmax(row) == y).count();
                g.backward(lv.total)?
            };
            if !grads.is_finite() {
                bail!(Numeric, "non-finite gradient at epoch {epoch}, batch {bi}");
            }
            opt.step(&mut model.params, &grads, lr);
        }
        let (val_oa, val_usage) = if val.is_empty() {
            (0.0, [0.0; N_EXPERTS])
        } else {
            let preds = predict_dataset(&model, val, opts.eval_batch)?;
            let hits = preds.iter().zip(&val.samples).filter(|(p, s)| p.predicted == s.label).count();
            let mut usage = [0.0; N_EXPERTS];
            for p in &preds {
                usage[p.expert] += 1.0 / preds.len() as f64;
            }
            (100.0 * hits as f64 / val.len() as f64, usage)
        };
        let nb = n_batches as f64;
        history.push(EpochRecord {
            epoch,
            lr,
            loss: loss_sum / nb,
            ce: ce_sum / nb,
            aux: aux_sum / nb,
            train_accuracy: correct as f64 / train.len() as f64,
            val_oa,
            val_usage,
        });
        if val_oa > best_oa {
            best_oa = val_oa;
            best_epoch = epoch;
            best = model.clone();
        }
        let curve: Vec<f64> = history.iter().map(|h| h.val_oa).collect();
        if early_stopper(&curve, cfg.patience).stop {
            stopped_early = true;
            break;
        }
    }
    Ok(FitResult { model: best, history, best_epoch, stopped_early })
}

/// Router statistics and load-balancing term over a whole dataset.
pub fn gate_statistics(model: &MoeModel, data: &Dataset, batch: usize) -> Result<(GateOutput, f64)> {
    let mut probs = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let b = data.batch(chunk)?;
        probs.extend(model.route(&b.psd)?);
    }
    let gate = GateOutput::from_probs(probs)?;
    let aux = load_balance_loss(&gate);
    Ok((gate, aux))
}
