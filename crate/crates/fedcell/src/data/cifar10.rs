//! CIFAR-10 binary batch loader.
//!
//! Record layout: 1 label byte followed by 3072 pixel bytes (channel-major
//! 3x32x32). Pixels are scaled to [0,1] and standardized per channel with
//! statistics computed from the train split.

use std::fs;
use std::path::Path;

use super::{DatasetSource, LabeledSet, SourceKind};
use crate::error::{Result, SimError};

const RECORD_BYTES: usize = 1 + CHANNELS * CHANNEL_PIXELS;
const CHANNELS: usize = 3;
const CHANNEL_PIXELS: usize = 32 * 32;
const NUM_CLASSES: usize = 10;

const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILE: &str = "test_batch.bin";

pub fn load_cifar10(dir: &Path) -> Result<DatasetSource> {
    let mut train_features = Vec::new();
    let mut train_labels = Vec::new();
    for name in TRAIN_FILES {
        read_batch(&dir.join(name), &mut train_features, &mut train_labels)?;
    }
    let mut test_features = Vec::new();
    let mut test_labels = Vec::new();
    read_batch(&dir.join(TEST_FILE), &mut test_features, &mut test_labels)?;

    let (means, stds) = channel_stats(&train_features);
    normalize(&mut train_features, &means, &stds);
    normalize(&mut test_features, &means, &stds);

    Ok(DatasetSource {
        kind: SourceKind::Cifar10Binary,
        num_classes: NUM_CLASSES,
        train: LabeledSet::new(train_features, train_labels, CHANNELS * CHANNEL_PIXELS)?,
        test: LabeledSet::new(test_features, test_labels, CHANNELS * CHANNEL_PIXELS)?,
    })
}

fn read_batch(path: &Path, features: &mut Vec<f64>, labels: &mut Vec<usize>) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| SimError::io(path, e))?;
    if bytes.is_empty() || bytes.len() % RECORD_BYTES != 0 {
        return Err(SimError::Format {
            path: path.to_path_buf(),
            reason: format!(
                "{} bytes is not a whole number of {RECORD_BYTES}-byte records",
                bytes.len()
            ),
        });
    }
    for record in bytes.chunks_exact(RECORD_BYTES) {
        let label = record[0] as usize;
        if label >= NUM_CLASSES {
            return Err(SimError::Format {
                path: path.to_path_buf(),
                reason: format!("label byte {label} out of range 0..{NUM_CLASSES}"),
            });
        }
        labels.push(label);
        features.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
    }
    Ok(())
}

fn channel_stats(features: &[f64]) -> ([f64; CHANNELS], [f64; CHANNELS]) {
    let mut means = [0.0; CHANNELS];
    let mut stds = [0.0; CHANNELS];
    let samples = features.len() / (CHANNELS * CHANNEL_PIXELS);
    let count = (samples * CHANNEL_PIXELS) as f64;
    for sample in features.chunks_exact(CHANNELS * CHANNEL_PIXELS) {
        for c in 0..CHANNELS {
            for &v in &sample[c * CHANNEL_PIXELS..(c + 1) * CHANNEL_PIXELS] {
                means[c] += v;
            }
        }
    }
    for m in &mut means {
        *m /= count;
    }
    for sample in features.chunks_exact(CHANNELS * CHANNEL_PIXELS) {
        for c in 0..CHANNELS {
            for &v in &sample[c * CHANNEL_PIXELS..(c + 1) * CHANNEL_PIXELS] {
                stds[c] += (v - means[c]) * (v - means[c]);
            }
        }
    }
    for s in &mut stds {
        *s = (*s / count).sqrt();
        // constant channels would otherwise divide by zero
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    (means, stds)
}

fn normalize(features: &mut [f64], means: &[f64; CHANNELS], stds: &[f64; CHANNELS]) {
    for sample in features.chunks_exact_mut(CHANNELS * CHANNEL_PIXELS) {
        for c in 0..CHANNELS {
            for v in &mut sample[c * CHANNEL_PIXELS..(c + 1) * CHANNEL_PIXELS] {
                *v = (*v - means[c]) / stds[c];
            }
        }
    }
}
