//! FedAvg and Standalone client procedures.

use rand_chacha::ChaCha8Rng;

use super::{RoundUpdate, UpdatePayload, UserState};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::nn::{train_local, FlatModel};
use crate::pruning::BinaryMask;

/// Vanilla FL: adopt the broadcast, train densely, upload densely.
pub fn fedavg_local_step(
    state: &mut UserState,
    global: &FlatModel,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RoundUpdate> {
    state.model = global.clone();
    state.mask = BinaryMask::all_ones(global.spec.weight_count());
    if cfg.epochs > 0 {
        train_local(
            &mut state.model,
            &state.mask,
            &state.split.train,
            cfg.epochs,
            cfg.batch_size,
            cfg.learning_rate,
            rng,
        )?;
    }
    Ok(RoundUpdate {
        user: state.id,
        payload: UpdatePayload::Dense(state.model.clone()),
        samples: state.split.train.len(),
        pruned_this_round: false,
        passed_validation: false,
    })
}

/// Local training only: the client keeps refining its own model and never
/// communicates.
pub fn standalone_local_step(
    state: &mut UserState,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RoundUpdate> {
    if cfg.epochs > 0 {
        train_local(
            &mut state.model,
            &state.mask,
            &state.split.train,
            cfg.epochs,
            cfg.batch_size,
            cfg.learning_rate,
            rng,
        )?;
    }
    Ok(RoundUpdate {
        user: state.id,
        payload: UpdatePayload::Dense(state.model.clone()),
        samples: state.split.train.len(),
        pruned_this_round: false,
        passed_validation: false,
    })
}
