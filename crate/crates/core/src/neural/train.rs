//! Batched gradient evaluation and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::{chamfer_loss, chamfer_loss_grad, cross_entropy_logit_grad, LossConfig, LossKind, PrefetchTarget};
use super::model::{decode_indices, forward_caching, normalize_id, record_caching, record_prefetch};
use super::optim::Adam;
use super::params::{Gradients, ModelKind, ModelParameters};
use crate::error::{Error, Result};
use crate::labeler::LabeledDataset;
use crate::scalar::Scalar;
use crate::trace::{EmbeddingIndex, SequenceSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    /// Compare analytic and numeric gradients on the first batch.
    pub gradient_check: bool,
    /// Trailing fraction of eligible samples held out for validation.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_steps: 500,
            seed: 0,
            gradient_check: false,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_steps == 0 {
            return Err(Error::InvalidConfig("batch size and max steps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

fn loss_target<T: Scalar>(p: &ModelParameters<T>, s: &SequenceSample, cfg: &LossConfig) -> Result<Vec<T>> {
    let ids = match cfg.target {
        PrefetchTarget::Window => s.window.as_ref(),
        PrefetchTarget::Misses => s.prefetch_targets.as_ref(),
    }
    .ok_or_else(|| Error::validation(None, format!("sample at {} has no {} to train against", s.origin, cfg.target)))?;
    Ok(ids.iter().map(|ix| T::of(normalize_id(ix.global_id, &p.vocabulary))).collect())
}

fn labels(s: &SequenceSample) -> Result<&[bool]> {
    s.cache_labels
        .as_deref()
        .ok_or_else(|| Error::validation(None, format!("sample at {} has no caching labels", s.origin)))
}

fn check_loss_kind(kind: ModelKind, cfg: &LossConfig) -> Result<()> {
    match (kind, cfg.kind) {
        (ModelKind::Caching, LossKind::CrossEntropy) | (ModelKind::Prefetch, LossKind::Chamfer1 | LossKind::Chamfer2) => Ok(()),
        (k, l) => Err(Error::InvalidConfig(format!("loss {l} does not apply to a {k} model"))),
    }
}

/// Loss of one sample, forward only.
pub fn sample_loss<T: Scalar>(p: &ModelParameters<T>, s: &SequenceSample, cfg: &LossConfig) -> Result<T> {
    check_loss_kind(p.kind, cfg)?;
    match p.kind {
        ModelKind::Caching => {
            let f = record_caching(p, &s.input)?;
            let z: Vec<T> = f.logits.iter().map(|&l| f.tape.value(l)[0]).collect();
            Ok(cross_entropy_logit_grad(&z, labels(s)?)?.0)
        }
        ModelKind::Prefetch => {
            let w = loss_target(p, s, cfg)?;
            let f = record_prefetch(p, &s.input)?;
            chamfer_loss(&f.values(), &w, cfg.effective_alpha())
        }
    }
}

/// Loss and parameter gradients of one sample.
pub fn sample_loss_grad<T: Scalar>(p: &ModelParameters<T>, s: &SequenceSample, cfg: &LossConfig) -> Result<(T, Gradients<T>)> {
    check_loss_kind(p.kind, cfg)?;
    match p.kind {
        ModelKind::Caching => {
            let f = record_caching(p, &s.input)?;
            let z: Vec<T> = f.logits.iter().map(|&l| f.tape.value(l)[0]).collect();
            let (loss, g) = cross_entropy_logit_grad(&z, labels(s)?)?;
            let seeds: Vec<_> = f.logits.iter().zip(g).map(|(&v, gi)| (v, vec![gi])).collect();
            Ok((loss, f.tape.backward(&seeds)?))
        }
        ModelKind::Prefetch => {
            let w = loss_target(p, s, cfg)?;
            let f = record_prefetch(p, &s.input)?;
            let (loss, g) = chamfer_loss_grad(&f.values(), &w, cfg.effective_alpha())?;
            let seeds: Vec<_> = f.outputs.iter().zip(g).map(|(&v, gi)| (v, vec![gi])).collect();
            Ok((loss, f.tape.backward(&seeds)?))
        }
    }
}

/// Mean loss and mean gradient over a batch. Samples are evaluated in
/// parallel and reduced in batch order, so the result is deterministic.
pub fn backward<T: Scalar>(p: &ModelParameters<T>, batch: &[&SequenceSample], cfg: &LossConfig) -> Result<(T, Gradients<T>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let parts: Vec<Result<(T, Gradients<T>)>> = batch.par_iter().map(|s| sample_loss_grad(p, s, cfg)).collect();
    let mut total = Gradients::zeros_like(p);
    let mut loss = T::zero();
    for r in parts {
        let (l, g) = r?;
        loss += l;
        total.add_assign(&g);
    }
    let n = T::of(batch.len() as f64);
    total.scale(T::one() / n);
    total.check_finite(p)?;
    Ok((loss / n, total))
}

/// Samples a model of `kind` can be trained on.
pub fn eligible(ds: &LabeledDataset, kind: ModelKind) -> Vec<&SequenceSample> {
    ds.samples
        .iter()
        .filter(|s| match kind {
            ModelKind::Caching => s.cache_labels.is_some(),
            ModelKind::Prefetch => s.prefetch_targets.is_some() && s.window.is_some(),
        })
        .collect()
}

/// Fraction of positions whose thresholded probability equals the label.
pub fn caching_accuracy<T: Scalar>(p: &ModelParameters<T>, samples: &[&SequenceSample]) -> Result<f64> {
    let per: Vec<Result<(usize, usize)>> = samples
        .par_iter()
        .map(|s| {
            let probs = forward_caching(p, &s.input)?;
            let y = labels(s)?;
            let ok = probs.iter().zip(y).filter(|(q, &l)| (q.to_f64_lossless() >= 0.5) == l).count();
            Ok((ok, y.len()))
        })
        .collect();
    let (mut ok, mut n) = (0, 0);
    for r in per {
        let (a, b) = r?;
        ok += a;
        n += b;
    }
    Ok(if n == 0 { 0.0 } else { ok as f64 / n as f64 })
}

/// Decoded prefetch ids for one input.
pub fn predict_prefetch_ids<T: Scalar>(p: &ModelParameters<T>, input: &[EmbeddingIndex]) -> Result<Vec<EmbeddingIndex>> {
    let f = record_prefetch(p, input)?;
    Ok(decode_indices(&f.values(), &p.vocabulary))
}

/// Fraction of decoded outputs referenced inside their sample's window.
pub fn prefetch_correctness<T: Scalar>(p: &ModelParameters<T>, samples: &[&SequenceSample]) -> Result<f64> {
    let per: Vec<Result<(usize, usize)>> = samples
        .par_iter()
        .map(|s| {
            let ids = predict_prefetch_ids(p, &s.input)?;
            let w = s.window.as_deref().unwrap_or(&[]);
            let useful = ids.iter().filter(|i| w.iter().any(|x| x.global_id == i.global_id)).count();
            Ok((useful, ids.len()))
        })
        .collect();
    let (mut ok, mut n) = (0, 0);
    for r in per {
        let (a, b) = r?;
        ok += a;
        n += b;
    }
    Ok(if n == 0 { 0.0 } else { ok as f64 / n as f64 })
}

/// Mean over samples of the population standard deviation across output
/// slots. Near zero means the outputs have collapsed onto one value.
pub fn output_spread<T: Scalar>(p: &ModelParameters<T>, samples: &[&SequenceSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let per: Vec<Result<f64>> = samples
        .par_iter()
        .map(|s| {
            let po: Vec<f64> = record_prefetch(p, &s.input)?.values().iter().map(|x| x.to_f64_lossless()).collect();
            let m = po.iter().sum::<f64>() / po.len() as f64;
            Ok((po.iter().map(|x| (x - m).powi(2)).sum::<f64>() / po.len() as f64).sqrt())
        })
        .collect();
    let mut acc = 0.0;
    for r in per {
        acc += r?;
    }
    Ok(acc / samples.len() as f64)
}

fn mean_loss<T: Scalar>(p: &ModelParameters<T>, samples: &[&SequenceSample], cfg: &LossConfig) -> Result<f64> {
    let per: Vec<Result<T>> = samples.par_iter().map(|s| sample_loss(p, s, cfg)).collect();
    let mut acc = 0.0;
    for r in per {
        acc += r?.to_f64_lossless();
    }
    Ok(if samples.is_empty() { f64::NAN } else { acc / samples.len() as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Steps completed when the report was taken.
    pub step: usize,
    pub val_loss: f64,
    /// Label accuracy for caching models, correctness for prefetch models.
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun<T> {
    pub params: ModelParameters<T>,
    /// Mean training loss of every step's batch.
    pub losses: Vec<f64>,
    pub epochs: Vec<EpochReport>,
    pub train_samples: usize,
    pub validation_samples: usize,
}

impl<T> TrainRun<T> {
    pub fn loss_curve_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{},{l}\n", i + 1));
        }
        s
    }
}

fn validate_metric<T: Scalar>(p: &ModelParameters<T>, val: &[&SequenceSample]) -> Result<f64> {
    if val.is_empty() {
        return Ok(f64::NAN);
    }
    match p.kind {
        ModelKind::Caching => caching_accuracy(p, val),
        ModelKind::Prefetch => prefetch_correctness(p, val),
    }
}

/// Mini-batch Adam. On a non-finite loss or gradient the run stops with a
/// [`Error::Diverged`] that reports the step; use [`train_until_diverged`]
/// to get the last finite parameters back as well.
pub fn train<T: Scalar>(ds: &LabeledDataset, init: ModelParameters<T>, tc: &TrainConfig, lc: &LossConfig) -> Result<TrainRun<T>> {
    let (run, err) = train_until_diverged(ds, init, tc, lc)?;
    match err {
        Some(e) => Err(e),
        None => Ok(run),
    }
}

/// Like [`train`], but a divergence returns the run so far, whose parameters
/// are the last finite ones, together with the error.
pub fn train_until_diverged<T: Scalar>(
    ds: &LabeledDataset,
    init: ModelParameters<T>,
    tc: &TrainConfig,
    lc: &LossConfig,
) -> Result<(TrainRun<T>, Option<Error>)> {
    tc.validate()?;
    if lc.kind != LossKind::Chamfer1 {
        lc.validate()?;
    }
    check_loss_kind(init.kind, lc)?;
    init.check_vocabulary(&ds.vocabulary)?;
    let all = eligible(ds, init.kind);
    let n_val = (all.len() as f64 * tc.validation_fraction).floor() as usize;
    let (train_set, val_set) = all.split_at(all.len() - n_val);
    if train_set.is_empty() {
        return Err(Error::Empty("training samples"));
    }
    if tc.gradient_check {
        let rep = super::gradcheck::check_random_entries(&init.cast::<f64>(), train_set[0], lc, 16, tc.seed)?;
        if rep.max_rel_error > super::gradcheck::REL_TOLERANCE {
            return Err(Error::validation(
                None,
                format!("gradient check failed: relative error {:.3e} at {}", rep.max_rel_error, rep.worst),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut opt = Adam::new(&init, tc.learning_rate);
    let mut run = TrainRun {
        params: init,
        losses: Vec::with_capacity(tc.max_steps),
        epochs: Vec::new(),
        train_samples: train_set.len(),
        validation_samples: val_set.len(),
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epoch = 0;
    'outer: loop {
        order.shuffle(&mut rng);
        for b in order.chunks(tc.batch_size) {
            let step = run.losses.len() + 1;
            let batch: Vec<&SequenceSample> = b.iter().map(|&i| train_set[i]).collect();
            let (loss, grads) = match backward(&run.params, &batch, lc) {
                Ok(x) => x,
                Err(Error::NonFinite(msg)) => return Ok((run, Some(Error::Diverged { step, msg }))),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Ok((run, Some(Error::Diverged { step, msg: "loss".into() })));
            }
            let before = run.params.clone();
            opt.update(&mut run.params, &grads);
            if !run.params.is_finite() {
                run.params = before;
                return Ok((run, Some(Error::Diverged { step, msg: "parameters after update".into() })));
            }
            run.losses.push(loss.to_f64_lossless());
            if run.losses.len() >= tc.max_steps {
                break 'outer;
            }
        }
        epoch += 1;
        run.epochs.push(EpochReport {
            epoch,
            step: run.losses.len(),
            val_loss: mean_loss(&run.params, val_set, lc)?,
            val_metric: validate_metric(&run.params, val_set)?,
        });
    }
    // partial final epoch
    if run.epochs.last().map(|e| e.step) != Some(run.losses.len()) {
        run.epochs.push(EpochReport {
            epoch: epoch + 1,
            step: run.losses.len(),
            val_loss: mean_loss(&run.params, val_set, lc)?,
            val_metric: validate_metric(&run.params, val_set)?,
        });
    }
    Ok((run, None))
}
