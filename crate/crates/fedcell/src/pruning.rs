//! Binary-mask algebra and one-shot magnitude pruning.
//!
//! Masks index the flat weight vector only; biases are never pruned.
//! Pruning ranks weights by |w| globally across all layers by default
//! (a per-layer variant exists behind a config switch) and zeroes exactly
//! floor(rate * d) of the smallest, breaking magnitude ties by pruning
//! the lower flat index first.

use crate::error::{Result, SimError};
use crate::nn::FlatModel;

/// Per-weight keep (1) / prune (0) bits over a flat weight vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    bits: Vec<bool>,
    kept: usize,
}

impl BinaryMask {
    pub fn all_ones(len: usize) -> Self {
        Self { bits: vec![true; len], kept: len }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        let kept = bits.iter().filter(|&&b| b).count();
        Self { bits, kept }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn kept_count(&self) -> usize {
        self.kept
    }

    pub fn pruned_count(&self) -> usize {
        self.bits.len() - self.kept
    }

    pub fn sparsity(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        1.0 - self.kept as f64 / self.bits.len() as f64
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// True when every index pruned by `prior` is also pruned here.
    pub fn refines(&self, prior: &BinaryMask) -> bool {
        self.bits.len() == prior.bits.len()
            && self.bits.iter().zip(&prior.bits).all(|(&new, &old)| old || !new)
    }

    /// Element-wise product with a weight vector, in place.
    pub fn apply(&self, weights: &mut [f64]) {
        for (w, &keep) in weights.iter_mut().zip(&self.bits) {
            if !keep {
                *w = 0.0;
            }
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(SimError::Usage(format!("pruning rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

/// Indices of `model.weights` sorted by (|w| ascending, index ascending).
fn magnitude_order(weights: &[f64], candidates: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut order: Vec<usize> = candidates.collect();
    order.sort_unstable_by(|&a, &b| {
        weights[a].abs().total_cmp(&weights[b].abs()).then(a.cmp(&b))
    });
    order
}

/// One-shot unstructured pruning: zero exactly floor(rate * d) weights of
/// smallest magnitude, ranked globally across all layers.
pub fn magnitude_prune(model: &FlatModel, cumulative_rate: f64) -> Result<BinaryMask> {
    check_rate(cumulative_rate)?;
    let d = model.weights.len();
    let zeros = (cumulative_rate * d as f64).floor() as usize;
    let order = magnitude_order(&model.weights, 0..d);
    let mut bits = vec![true; d];
    for &i in &order[..zeros] {
        bits[i] = false;
    }
    Ok(BinaryMask::from_bits(bits))
}

/// Pruning restricted to the survivors of `prior`: grows the zero set to
/// floor(rate * d) by removing the smallest-magnitude kept weights. The
/// result always refines `prior`; if the target is already met the prior
/// mask is returned unchanged.
pub fn magnitude_prune_within(
    model: &FlatModel,
    prior: &BinaryMask,
    cumulative_rate: f64,
) -> Result<BinaryMask> {
    check_rate(cumulative_rate)?;
    if prior.len() != model.weights.len() {
        return Err(SimError::Config(format!(
            "mask length {} does not match weight count {}",
            prior.len(),
            model.weights.len()
        )));
    }
    let d = model.weights.len();
    let target_zeros = (cumulative_rate * d as f64).floor() as usize;
    let existing = prior.pruned_count();
    if target_zeros <= existing {
        return Ok(prior.clone());
    }
    let extra = target_zeros - existing;
    let order = magnitude_order(&model.weights, (0..d).filter(|&i| prior.is_kept(i)));
    let mut bits = prior.bits.clone();
    for &i in &order[..extra] {
        bits[i] = false;
    }
    Ok(BinaryMask::from_bits(bits))
}

/// Per-layer variant: each layer independently prunes floor(rate * d_layer)
/// of its smallest weights.
pub fn magnitude_prune_per_layer(model: &FlatModel, cumulative_rate: f64) -> Result<BinaryMask> {
    check_rate(cumulative_rate)?;
    let mut bits = vec![true; model.weights.len()];
    for layout in model.spec.layouts() {
        let lo = layout.weight_offset;
        let hi = lo + layout.weight_len;
        let zeros = (cumulative_rate * layout.weight_len as f64).floor() as usize;
        let order = magnitude_order(&model.weights, lo..hi);
        for &i in &order[..zeros] {
            bits[i] = false;
        }
    }
    Ok(BinaryMask::from_bits(bits))
}

/// Winning-ticket reset: weights return to `w0` under the mask, biases to
/// `w0`'s biases.
pub fn reinitialize(mask: &BinaryMask, w0: &FlatModel) -> Result<FlatModel> {
    if mask.len() != w0.weights.len() {
        return Err(SimError::Config(format!(
            "mask length {} does not match weight count {}",
            mask.len(),
            w0.weights.len()
        )));
    }
    let mut out = w0.clone();
    mask.apply(&mut out.weights);
    Ok(out)
}

/// Cumulative pruning-rate ramp: current rises by `step` per advance and
/// clamps at `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneSchedule {
    step: f64,
    target: f64,
    current: f64,
}

impl PruneSchedule {
    pub fn new(step: f64, target: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&step) || step == 0.0 {
            return Err(SimError::Usage(format!("prune step must be in (0, 1), got {step}")));
        }
        if !(0.0..1.0).contains(&target) || target == 0.0 {
            return Err(SimError::Usage(format!("prune target must be in (0, 1), got {target}")));
        }
        Ok(Self { step, target, current: 0.0 })
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn at_target(&self) -> bool {
        self.current >= self.target
    }

    /// min(current + step, target); idempotent once the target is reached.
    pub fn advance(&mut self) -> f64 {
        self.current = (self.current + self.step).min(self.target);
        self.current
    }
}
