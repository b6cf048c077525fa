//! The CELL client procedure.
//!
//! Each round the client validates the dense broadcast against its own
//! adaptive threshold. While its cumulative pruning rate is below target,
//! the rate advances first and the validation outcome then decides between
//! winning-ticket search (prune the broadcast fresh at the new rate, reset
//! to the stored init, restore the threshold) and the straggler path
//! (train the broadcast densely, decay the threshold). Once the rate sits
//! at target the threshold test is bypassed and the client always prunes
//! at target.

use rand_chacha::ChaCha8Rng;

use super::{RoundUpdate, UpdatePayload, UserState};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::nn::{evaluate_accuracy, train_local, FlatModel};
use crate::pruning::{magnitude_prune, reinitialize, BinaryMask};

pub fn cell_local_step(
    state: &mut UserState,
    global: &FlatModel,
    initial: &FlatModel,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RoundUpdate> {
    let zeta = evaluate_accuracy(global, &state.split.validation)?;
    let passed = zeta > state.threshold;
    let mut pruned_this_round = false;

    if !state.schedule.at_target() {
        // The rate advances before the threshold test, so a straggler's
        // rate still ramps on a failed round. `defer_rate_advance` moves
        // the advance inside the pass branch instead.
        if !cfg.defer_rate_advance {
            state.schedule.advance();
        }
        if passed {
            if cfg.defer_rate_advance {
                state.schedule.advance();
            }
            state.mask = magnitude_prune_for(cfg, global, state.schedule.current())?;
            state.model = reinitialize(&state.mask, initial)?;
            state.threshold = state.threshold_default;
            pruned_this_round = true;
        } else {
            state.threshold *= cfg.threshold_decay;
            state.mask = BinaryMask::all_ones(global.spec.weight_count());
            state.model = global.clone();
        }
    } else {
        // At target: always a fresh ticket from the current broadcast.
        state.mask = magnitude_prune_for(cfg, global, state.schedule.target())?;
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

    let payload = if pruned_this_round {
        UpdatePayload::Sparse { model: state.model.clone(), mask: state.mask.clone() }
    } else {
        UpdatePayload::Dense(state.model.clone())
    };
    Ok(RoundUpdate {
        user: state.id,
        payload,
        samples: state.split.train.len(),
        pruned_this_round,
        passed_validation: passed,
    })
}

pub(crate) fn magnitude_prune_for(
    cfg: &ExperimentConfig,
    model: &FlatModel,
    rate: f64,
) -> Result<BinaryMask> {
    if cfg.per_layer_pruning {
        crate::pruning::magnitude_prune_per_layer(model, rate)
    } else {
        magnitude_prune(model, rate)
    }
}
