//! Server round loop, client sampling, local procedures for the four
//! protocols, and weighted aggregation.
//!
//! CELL broadcasts the dense global model, validates it per user against
//! an adaptive threshold, and alternates each client between winning-ticket
//! search (prune fresh from the broadcast, reset to the stored init,
//! retrain) and plain dense training with threshold decay. LotteryFL
//! unicasts masked parameters and prunes cumulatively inside each client's
//! surviving subnetwork under a fixed threshold. FedAvg and Standalone are
//! the dense baselines.

mod baselines;
mod cell;
mod lotteryfl;

pub use baselines::{fedavg_local_step, standalone_local_step};
pub use cell::cell_local_step;
pub use lotteryfl::lotteryfl_local_step;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comms::{CommLedger, PayloadDescriptor};
use crate::config::{Aggregation, ExperimentConfig, MetricsRow, MetricsTable};
use crate::data::UserSplit;
use crate::error::{Result, SimError};
use crate::exec::{map_clients, ExecMode};
use crate::nn::{evaluate_accuracy, FlatModel};
use crate::pruning::{BinaryMask, PruneSchedule};
use crate::seeds::{SeedPlan, StreamDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Cell,
    #[serde(rename = "lotteryfl")]
    LotteryFl,
    #[serde(rename = "fedavg")]
    FedAvg,
    Standalone,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Protocol::Cell => "cell",
            Protocol::LotteryFl => "lotteryfl",
            Protocol::FedAvg => "fedavg",
            Protocol::Standalone => "standalone",
        };
        f.write_str(name)
    }
}

/// One client's full standing: data, pruning ramp, adaptive threshold,
/// current mask and personal model.
#[derive(Debug, Clone)]
pub struct UserState {
    pub id: usize,
    pub split: UserSplit,
    pub schedule: PruneSchedule,
    /// Adaptive validation threshold (decays on failure, restores on pass).
    pub threshold: f64,
    pub threshold_default: f64,
    pub mask: BinaryMask,
    pub model: FlatModel,
}

impl UserState {
    pub fn new(
        id: usize,
        split: UserSplit,
        schedule: PruneSchedule,
        threshold_default: f64,
        initial: &FlatModel,
    ) -> Self {
        Self {
            id,
            split,
            schedule,
            threshold: threshold_default,
            threshold_default,
            mask: BinaryMask::all_ones(initial.spec.weight_count()),
            model: initial.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum UpdatePayload {
    Dense(FlatModel),
    /// Model with zeros at pruned coordinates, plus the mask itself.
    Sparse { model: FlatModel, mask: BinaryMask },
}

impl UpdatePayload {
    pub fn model(&self) -> &FlatModel {
        match self {
            UpdatePayload::Dense(m) => m,
            UpdatePayload::Sparse { model, .. } => model,
        }
    }

    /// Mask under which the payload was produced; dense payloads keep
    /// every coordinate.
    pub fn mask_bit(&self, i: usize) -> bool {
        match self {
            UpdatePayload::Dense(_) => true,
            UpdatePayload::Sparse { mask, .. } => mask.is_kept(i),
        }
    }
}

/// One client's upload for a round.
#[derive(Debug, Clone)]
pub struct RoundUpdate {
    pub user: usize,
    pub payload: UpdatePayload,
    /// Aggregation weight n_k (the client's training sample count).
    pub samples: usize,
    pub pruned_this_round: bool,
    pub passed_validation: bool,
}

impl RoundUpdate {
    pub fn descriptor(&self) -> PayloadDescriptor {
        let model = self.payload.model();
        let d = model.spec.weight_count();
        let biases = model.spec.bias_count();
        match &self.payload {
            UpdatePayload::Dense(_) => PayloadDescriptor::dense(d, biases),
            UpdatePayload::Sparse { mask, .. } => {
                PayloadDescriptor::sparse(d, mask.kept_count(), biases)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlobalState {
    pub protocol: Protocol,
    pub round: usize,
    pub global: FlatModel,
    /// The stored initialization w0; never mutated after round 0.
    pub initial: FlatModel,
}

impl GlobalState {
    pub fn new(protocol: Protocol, initial: FlatModel) -> Self {
        Self { protocol, round: 0, global: initial.clone(), initial }
    }
}

/// Draws max(floor(C * K), 1) distinct participant ids uniformly without
/// replacement; C = 0 selects exactly one.
pub fn sample_participants(ratio: f64, num_users: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let p = ((ratio * num_users as f64).floor() as usize).max(1).min(num_users);
    let mut ids = index::sample(rng, num_users, p).into_vec();
    ids.sort_unstable();
    ids
}

/// Sample-count-weighted coordinate-wise mean of the uploads.
///
/// With [`Aggregation::ZerosInMean`], sparse uploads contribute explicit
/// zeros at pruned coordinates, so denser models exert more influence.
/// With [`Aggregation::MaskNormalized`], each coordinate averages only
/// over the clients whose mask keeps it, falling back to the previous
/// global value when nobody does. Biases are averaged identically (they
/// are always dense).
pub fn federated_average(
    updates: &[RoundUpdate],
    prev_global: &FlatModel,
    mode: Aggregation,
) -> Result<FlatModel> {
    if updates.is_empty() {
        return Err(SimError::Usage("federated_average needs at least one update".into()));
    }
    for u in updates {
        if !u.payload.model().same_spec(prev_global) {
            return Err(SimError::Config(format!(
                "update from user {} has a different model spec",
                u.user
            )));
        }
        if u.samples == 0 {
            return Err(SimError::Usage(format!("user {} uploaded n_k = 0", u.user)));
        }
    }

    let total: f64 = updates.iter().map(|u| u.samples as f64).sum();
    let mut out = FlatModel::zeros(&prev_global.spec);

    match mode {
        Aggregation::ZerosInMean => {
            for u in updates {
                let share = u.samples as f64 / total;
                let model = u.payload.model();
                for (acc, &w) in out.weights.iter_mut().zip(&model.weights) {
                    *acc += share * w;
                }
                for (acc, &b) in out.biases.iter_mut().zip(&model.biases) {
                    *acc += share * b;
                }
            }
        }
        Aggregation::MaskNormalized => {
            let d = prev_global.spec.weight_count();
            let mut weight_mass = vec![0.0f64; d];
            for u in updates {
                let share = u.samples as f64;
                let model = u.payload.model();
                for i in 0..d {
                    if u.payload.mask_bit(i) {
                        out.weights[i] += share * model.weights[i];
                        weight_mass[i] += share;
                    }
                }
                for (acc, &b) in out.biases.iter_mut().zip(&model.biases) {
                    *acc += share / total * b;
                }
            }
            for i in 0..d {
                out.weights[i] = if weight_mass[i] > 0.0 {
                    out.weights[i] / weight_mass[i]
                } else {
                    prev_global.weights[i]
                };
            }
        }
    }
    Ok(out)
}

/// Per-round observables the driver folds into the metrics table.
#[derive(Debug, Clone)]
pub struct RoundReport {
    pub round: usize,
    pub participants: Vec<usize>,
    pub ul_bytes: u64,
    pub dl_bytes: u64,
    /// Mean personalized test accuracy over all users after the round.
    pub mean_accuracy: f64,
    /// Mean mask sparsity over all users.
    pub mean_sparsity: f64,
    /// Participants that pruned this round.
    pub pruned_count: usize,
}

/// Runs one communication round: sample participants, run the protocol's
/// local step on each (in parallel under `mode`), aggregate, ledger the
/// traffic, and evaluate every user's personalized test accuracy.
pub fn run_round(
    global: &mut GlobalState,
    users: &mut [UserState],
    cfg: &ExperimentConfig,
    seeds: &SeedPlan,
    ledger: &mut CommLedger,
    mode: ExecMode,
) -> Result<RoundReport> {
    let round = global.round + 1;
    let protocol = global.protocol;

    let mut sampling_rng = seeds.stream(StreamDomain::Sampling, round, 0);
    let participants = sample_participants(cfg.participation, users.len(), &mut sampling_rng);

    // Downlink happens before local work: one dense broadcast for CELL and
    // FedAvg, one masked unicast per participant for LotteryFL, nothing for
    // Standalone.
    let spec = &global.global.spec;
    let downlinks: Vec<PayloadDescriptor> = match protocol {
        Protocol::Cell | Protocol::FedAvg => {
            vec![PayloadDescriptor::dense(spec.weight_count(), spec.bias_count())]
        }
        Protocol::LotteryFl => participants
            .iter()
            .map(|&id| {
                PayloadDescriptor::sparse(
                    spec.weight_count(),
                    users[id].mask.kept_count(),
                    spec.bias_count(),
                )
            })
            .collect(),
        Protocol::Standalone => Vec::new(),
    };

    let selected: Vec<&mut UserState> = users
        .iter_mut()
        .filter(|u| participants.binary_search(&u.id).is_ok())
        .collect();

    let global_model = &global.global;
    let initial = &global.initial;
    let results: Vec<Result<RoundUpdate>> = map_clients(mode, selected, |state| {
        let mut rng = seeds.stream(StreamDomain::LocalTraining, round, state.id);
        match protocol {
            Protocol::Cell => cell_local_step(state, global_model, initial, cfg, &mut rng),
            Protocol::LotteryFl => {
                // Unicast: the participant receives global values only at
                // its current mask positions.
                let mut downlink = global_model.clone();
                state.mask.apply(&mut downlink.weights);
                lotteryfl_local_step(state, &downlink, initial, cfg, &mut rng)
            }
            Protocol::FedAvg => fedavg_local_step(state, global_model, cfg, &mut rng),
            Protocol::Standalone => standalone_local_step(state, cfg, &mut rng),
        }
    });
    let updates: Vec<RoundUpdate> = results.into_iter().collect::<Result<_>>()?;

    if protocol == Protocol::Standalone {
        ledger.record_idle_round(round)?;
    } else {
        let uplinks: Vec<PayloadDescriptor> = updates.iter().map(RoundUpdate::descriptor).collect();
        ledger.record_round(round, &uplinks, &downlinks)?;
        global.global = federated_average(&updates, &global.global, cfg.aggregation)?;
    }

    let row = ledger.rows().last().unwrap();
    let (ul_bytes, dl_bytes) = (row.ul_bytes, row.dl_bytes);

    // Personalized test accuracy: each user's own (masked) model on the test
    // pool restricted to its labels. Vanilla FedAvg deploys the single
    // global model, so that is what its users are scored on.
    let eval_users: Vec<&UserState> = users.iter().collect();
    let global_ref = &global.global;
    let accuracies: Vec<Result<f64>> = map_clients(mode, eval_users, |user| {
        let model = match protocol {
            Protocol::FedAvg => global_ref,
            _ => &user.model,
        };
        evaluate_accuracy(model, &user.split.test)
    });
    let mut acc_sum = 0.0;
    for acc in accuracies {
        acc_sum += acc?;
    }
    let mean_accuracy = acc_sum / users.len() as f64;
    let mean_sparsity =
        users.iter().map(|u| u.mask.sparsity()).sum::<f64>() / users.len() as f64;
    let pruned_count = updates.iter().filter(|u| u.pruned_this_round).count();

    global.round = round;
    Ok(RoundReport {
        round,
        participants,
        ul_bytes,
        dl_bytes,
        mean_accuracy,
        mean_sparsity,
        pruned_count,
    })
}

/// Everything a finished run produces: the spec'd metrics table and ledger
/// plus in-memory state for tests and tooling.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub metrics: MetricsTable,
    pub ledger: CommLedger,
    pub rounds: Vec<RoundReport>,
    pub final_global: FlatModel,
    pub final_users: Vec<UserState>,
}

/// Runs a full experiment: build the dataset, partition it, initialize the
/// global model, and execute `cfg.rounds` communication rounds.
pub fn run_experiment(cfg: &ExperimentConfig, mode: ExecMode) -> Result<RunReport> {
    cfg.validate()?;
    let seeds = SeedPlan::new(cfg.seed);

    let source = cfg.dataset.load(&seeds)?;
    if cfg.labels_per_user > source.num_classes {
        return Err(SimError::Usage(format!(
            "labels_per_user {} exceeds the dataset's {} classes",
            cfg.labels_per_user, source.num_classes
        )));
    }
    let spec = cfg.model.to_spec(source.sample_dim(), source.num_classes)?;

    let mut partition_rng = seeds.stream(StreamDomain::Partition, 0, 0);
    let splits = crate::data::partition(
        &source,
        cfg.users,
        cfg.labels_per_user,
        cfg.samples_per_user,
        cfg.val_fraction,
        &mut partition_rng,
    )?;

    let mut init_rng = seeds.stream(StreamDomain::WeightInit, 0, 0);
    let initial = FlatModel::init_random(&spec, &mut init_rng);

    let mut global = GlobalState::new(cfg.protocol, initial);
    let mut users: Vec<UserState> = splits
        .into_iter()
        .enumerate()
        .map(|(id, split)| {
            Ok(UserState::new(
                id,
                split,
                PruneSchedule::new(cfg.prune_step, cfg.prune_target)?,
                cfg.threshold_default,
                &global.initial,
            ))
        })
        .collect::<Result<_>>()?;

    let mut ledger = CommLedger::new(cfg.protocol);
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut metrics = MetricsTable::default();
    for _ in 0..cfg.rounds {
        let report = run_round(&mut global, &mut users, cfg, &seeds, &mut ledger, mode)?;
        let ledger_row = *ledger.rows().last().unwrap();
        metrics.rows.push(MetricsRow {
            round: report.round,
            acc_mean: report.mean_accuracy,
            ul_bytes: report.ul_bytes,
            dl_bytes: report.dl_bytes,
            cum_bytes: ledger_row.cum_ul_bytes + ledger_row.cum_dl_bytes,
            sparsity_mean: report.mean_sparsity,
            pruners: report.pruned_count,
        });
        rounds.push(report);
    }

    Ok(RunReport {
        metrics,
        ledger,
        rounds,
        final_global: global.global,
        final_users: users,
    })
}

#[cfg(test)]
mod tests;
