//! Training and evaluation primitives: loss, masked SGD, local epochs,
//! and accuracy.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::backprop::{self, Gradients};
use super::{Batch, FlatModel};
use crate::data::LabeledSet;
use crate::error::{Result, SimError};
use crate::pruning::BinaryMask;

fn check_batch(model: &FlatModel, batch: &Batch) -> Result<()> {
    if batch.input_dim() != model.spec.input_dim() {
        return Err(SimError::Config(format!(
            "batch dim {} does not match model input dim {}",
            batch.input_dim(),
            model.spec.input_dim()
        )));
    }
    if let Some(&bad) = batch.labels().iter().find(|&&l| l >= model.spec.num_classes()) {
        return Err(SimError::Config(format!(
            "label {bad} out of range for {} classes",
            model.spec.num_classes()
        )));
    }
    Ok(())
}

/// Mean softmax cross-entropy of the model on the batch, plus the raw
/// logits (batch x classes, row-major).
pub fn forward_loss(model: &FlatModel, batch: &Batch) -> Result<(f64, Vec<f64>)> {
    check_batch(model, batch)?;
    let trace = backprop::forward(model, batch.inputs(), batch.len());
    let (loss, _) =
        backprop::softmax_cross_entropy(trace.logits(), batch.labels(), model.spec.num_classes());
    Ok((loss, trace.outputs.into_iter().next_back().unwrap()))
}

fn gradients(model: &FlatModel, batch: &Batch) -> Result<Gradients> {
    let trace = backprop::forward(model, batch.inputs(), batch.len());
    let (_, dlogits) =
        backprop::softmax_cross_entropy(trace.logits(), batch.labels(), model.spec.num_classes());
    let grads = backprop::backward(model, &trace, dlogits, batch.len());
    if !grads.is_finite() {
        return Err(SimError::Numeric("non-finite gradient during SGD step".into()));
    }
    Ok(grads)
}

/// Flat (weight, bias) gradients of the mean cross-entropy on the batch.
pub fn loss_gradients(model: &FlatModel, batch: &Batch) -> Result<(Vec<f64>, Vec<f64>)> {
    check_batch(model, batch)?;
    let grads = gradients(model, batch)?;
    Ok((grads.weights, grads.biases))
}

/// One minibatch SGD step under a binary weight mask.
///
/// Weights update as (w - lr * g) ∘ m, so every pruned coordinate is exactly
/// zero afterwards; biases are unmasked and update as b - lr * g.
pub fn sgd_step(model: &mut FlatModel, mask: &BinaryMask, batch: &Batch, lr: f64) -> Result<()> {
    check_batch(model, batch)?;
    if mask.len() != model.spec.weight_count() {
        return Err(SimError::Config(format!(
            "mask length {} does not match weight count {}",
            mask.len(),
            model.spec.weight_count()
        )));
    }
    let grads = gradients(model, batch)?;
    for (i, w) in model.weights.iter_mut().enumerate() {
        if mask.is_kept(i) {
            *w -= lr * grads.weights[i];
        } else {
            *w = 0.0;
        }
    }
    for (b, g) in model.biases.iter_mut().zip(&grads.biases) {
        *b -= lr * g;
    }
    Ok(())
}

/// `epochs` full passes of shuffled minibatch SGD over `data`. The shuffle
/// order comes entirely from `rng`, so a fixed stream reproduces the exact
/// parameter trajectory. A short final batch is allowed.
pub fn train_local(
    model: &mut FlatModel,
    mask: &BinaryMask,
    data: &LabeledSet,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if data.is_empty() {
        return Err(SimError::Usage("training set is empty".into()));
    }
    if batch_size == 0 {
        return Err(SimError::Usage("batch_size must be >= 1".into()));
    }
    let num_classes = model.spec.num_classes();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let batch = data.batch(chunk, num_classes)?;
            sgd_step(model, mask, &batch, lr)?;
        }
    }
    Ok(())
}

/// Fraction of samples whose argmax logit equals the label. Ties resolve
/// to the lowest class index.
pub fn evaluate_accuracy(model: &FlatModel, data: &LabeledSet) -> Result<f64> {
    if data.is_empty() {
        return Err(SimError::Usage("evaluation set is empty".into()));
    }
    let num_classes = model.spec.num_classes();
    let mut correct = 0usize;
    // Chunked evaluation keeps trace buffers small.
    let chunk_size = 256;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(chunk_size) {
        let batch = data.batch(chunk, num_classes)?;
        let (_, logits) = forward_loss(model, &batch)?;
        for (s, &label) in batch.labels().iter().enumerate() {
            let row = &logits[s * num_classes..(s + 1) * num_classes];
            let mut best = 0usize;
            for c in 1..num_classes {
                if row[c] > row[best] {
                    best = c;
                }
            }
            if best == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
