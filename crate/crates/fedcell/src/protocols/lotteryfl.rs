//! The LotteryFL client procedure.
//!
//! The server unicasts averaged parameters restricted to the client's
//! current mask; the client merges them into its local subnetwork, and —
//! under a fixed validation threshold shared by all users at all rounds —
//! prunes cumulatively inside the surviving subnetwork, resets to the
//! stored init, and retrains. Uploads are always masked.

use rand_chacha::ChaCha8Rng;

use super::{RoundUpdate, UpdatePayload, UserState};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::nn::{evaluate_accuracy, train_local, FlatModel};
use crate::pruning::{magnitude_prune_within, reinitialize};

/// `downlink` must carry values only at the client's current mask
/// positions; [`super::run_round`] builds it that way.
pub fn lotteryfl_local_step(
    state: &mut UserState,
    downlink: &FlatModel,
    initial: &FlatModel,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RoundUpdate> {
    // Merge the averaged parameters into the local subnetwork.
    for i in 0..state.model.weights.len() {
        if state.mask.is_kept(i) {
            state.model.weights[i] = downlink.weights[i];
        }
    }
    state.model.biases.copy_from_slice(&downlink.biases);

    let zeta = evaluate_accuracy(&state.model, &state.split.validation)?;
    let passed = zeta > state.threshold_default;
    let mut pruned_this_round = false;

    if passed && !state.schedule.at_target() {
        let rate = state.schedule.advance();
        state.mask = magnitude_prune_within(&state.model, &state.mask, rate)?;
        state.model = reinitialize(&state.mask, initial)?;
        pruned_this_round = true;
    }

    train_local(
        &mut state.model,
        &state.mask,
        &state.split.train,
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate,
        rng,
    )?;

    Ok(RoundUpdate {
        user: state.id,
        payload: UpdatePayload::Sparse {
            model: state.model.clone(),
            mask: state.mask.clone(),
        },
        samples: state.split.train.len(),
        pruned_this_round,
        passed_validation: passed,
    })
}
