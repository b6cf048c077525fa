//! Non-IID label-shard partitioner.
//!
//! The train pool is sorted by label and carved into exclusive per-user
//! shards: each user draws `labels_per_user` distinct labels (labels may
//! repeat across users, samples never do), takes `n_k` training samples
//! split as evenly as possible across its labels, and additionally holds
//! out `max(1, floor(val_fraction * n_k))` validation samples from the
//! same pools so the training shard stays exactly `n_k`. The user's test
//! set is the entire test pool restricted to its labels.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;

use super::{DatasetSource, UserSplit};
use crate::error::{Result, SimError};

pub fn partition(
    source: &DatasetSource,
    num_users: usize,
    labels_per_user: usize,
    samples_per_user: usize,
    val_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<UserSplit>> {
    if num_users == 0 {
        return Err(SimError::Usage("num_users must be >= 1".into()));
    }
    if labels_per_user == 0 || labels_per_user > source.num_classes {
        return Err(SimError::Usage(format!(
            "labels_per_user must be in [1, {}], got {labels_per_user}",
            source.num_classes
        )));
    }
    if samples_per_user == 0 {
        return Err(SimError::Usage("samples_per_user must be >= 1".into()));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(SimError::Usage(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    if num_users * samples_per_user > source.train.len() {
        return Err(SimError::Partition(format!(
            "{num_users} users x {samples_per_user} samples exceed the {} train samples",
            source.train.len()
        )));
    }

    // Label-sorted pools of unused train indices; ties keep original order.
    let mut pools: Vec<VecDeque<usize>> = vec![VecDeque::new(); source.num_classes];
    let mut order: Vec<usize> = (0..source.train.len()).collect();
    order.sort_by_key(|&i| (source.train.label(i), i));
    for i in order {
        pools[source.train.label(i)].push_back(i);
    }

    let val_per_user = (val_fraction * samples_per_user as f64).floor().max(1.0) as usize;

    let mut splits = Vec::with_capacity(num_users);
    for user in 0..num_users {
        let mut labels = rand::seq::index::sample(rng, source.num_classes, labels_per_user)
            .into_vec();
        labels.sort_unstable();

        let train_counts = even_split(samples_per_user, labels_per_user);
        let val_counts = even_split(val_per_user, labels_per_user);

        let mut train_idx = Vec::with_capacity(samples_per_user);
        let mut val_idx = Vec::with_capacity(val_per_user);
        for (slot, &label) in labels.iter().enumerate() {
            let need = train_counts[slot] + val_counts[slot];
            if pools[label].len() < need {
                return Err(SimError::Partition(format!(
                    "user {user}: label {label} has {} unused samples, needs {need}",
                    pools[label].len()
                )));
            }
            for _ in 0..train_counts[slot] {
                train_idx.push(pools[label].pop_front().unwrap());
            }
            for _ in 0..val_counts[slot] {
                val_idx.push(pools[label].pop_front().unwrap());
            }
        }

        let test_idx: Vec<usize> = (0..source.test.len())
            .filter(|&i| labels.contains(&source.test.label(i)))
            .collect();

        splits.push(UserSplit {
            labels,
            train: source.train.select(&train_idx),
            validation: source.train.select(&val_idx),
            test: source.test.select(&test_idx),
        });
    }
    Ok(splits)
}

/// Splits `total` into `parts` counts differing by at most one, larger
/// counts first.
fn even_split(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}
