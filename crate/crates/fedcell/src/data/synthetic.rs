//! Seeded Gaussian-cluster generator for desk-scale runs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetSource, LabeledSet, SourceKind};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy)]
pub struct SyntheticParams {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class_train: usize,
    pub per_class_test: usize,
    /// Distance scale between class means; unit-variance noise per axis.
    pub cluster_sep: f64,
}

/// Each class c gets a mean at `cluster_sep * (1 + c / dim)` along axis
/// `c % dim`; samples add standard normal noise per coordinate. The draw
/// order is fixed (class-major, then sample, then coordinate), so output
/// is a pure function of the rng stream.
pub fn make_synthetic(params: SyntheticParams, rng: &mut ChaCha8Rng) -> Result<DatasetSource> {
    let SyntheticParams { num_classes, dim, per_class_train, per_class_test, cluster_sep } = params;
    if num_classes < 2 {
        return Err(SimError::Usage("synthetic data needs at least 2 classes".into()));
    }
    if dim == 0 || per_class_train == 0 || per_class_test == 0 {
        return Err(SimError::Usage("synthetic counts and dim must be >= 1".into()));
    }
    if !cluster_sep.is_finite() || cluster_sep <= 0.0 {
        return Err(SimError::Usage("cluster_sep must be > 0".into()));
    }

    let mean_of = |class: usize| -> (usize, f64) {
        let axis = class % dim;
        let radius = cluster_sep * (1.0 + (class / dim) as f64);
        (axis, radius)
    };

    let mut gen_split = |per_class: usize| -> LabeledSet {
        let mut features = Vec::with_capacity(num_classes * per_class * dim);
        let mut labels = Vec::with_capacity(num_classes * per_class);
        for class in 0..num_classes {
            let (axis, radius) = mean_of(class);
            for _ in 0..per_class {
                for d in 0..dim {
                    let mean = if d == axis { radius } else { 0.0 };
                    features.push(mean + standard_normal(rng));
                }
                labels.push(class);
            }
        }
        LabeledSet::new(features, labels, dim).expect("generator writes consistent shapes")
    };

    let train = gen_split(per_class_train);
    let test = gen_split(per_class_test);
    Ok(DatasetSource { kind: SourceKind::Synthetic, num_classes, train, test })
}

/// Box-Muller transform over the rng's uniform output.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
