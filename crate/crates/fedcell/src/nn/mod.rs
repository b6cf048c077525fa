//! Minimal feed-forward network over a flat parameter vector.
//!
//! A model is a `ModelSpec` (layer shapes) plus two flat `f64` vectors:
//! all weight tensors concatenated in layer order, and all biases likewise.
//! The flat layout is what the rest of the simulator operates on — binary
//! masks index it directly, magnitude pruning ranks it globally, and
//! federated averaging is a coordinate-wise reduction over it. Biases are
//! never masked.

mod backprop;
mod train;

pub use train::{evaluate_accuracy, forward_loss, loss_gradients, sgd_step, train_local};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// 2-D convolution over channel-major input (c, h, w), stride >= 1,
    /// symmetric zero padding. Output spatial dims use floor division.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        in_height: usize,
        in_width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
}

impl LayerKind {
    pub fn input_len(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv2d { in_channels, in_height, in_width, .. } => {
                in_channels * in_height * in_width
            }
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv2d { out_channels, .. } => {
                let (oh, ow) = self.conv_output_hw();
                out_channels * oh * ow
            }
        }
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, outputs } => inputs * outputs,
            LayerKind::Conv2d { in_channels, out_channels, kernel, .. } => {
                out_channels * in_channels * kernel * kernel
            }
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Dense { outputs, .. } => outputs,
            LayerKind::Conv2d { out_channels, .. } => out_channels,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Dense { inputs, .. } => inputs,
            LayerKind::Conv2d { in_channels, kernel, .. } => in_channels * kernel * kernel,
        }
    }

    /// (out_height, out_width); only meaningful for Conv2d.
    pub(crate) fn conv_output_hw(&self) -> (usize, usize) {
        match *self {
            LayerKind::Conv2d { in_height, in_width, kernel, stride, padding, .. } => {
                let oh = (in_height + 2 * padding - kernel) / stride + 1;
                let ow = (in_width + 2 * padding - kernel) / stride + 1;
                (oh, ow)
            }
            LayerKind::Dense { .. } => unreachable!("dense layer has no spatial dims"),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |msg: String| Err(SimError::Config(format!("layer {index}: {msg}")));
        match *self {
            LayerKind::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return bad(format!("dense dims must be positive, got {inputs}x{outputs}"));
                }
            }
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                in_height,
                in_width,
                kernel,
                stride,
                padding,
            } => {
                if in_channels == 0 || out_channels == 0 || in_height == 0 || in_width == 0 {
                    return bad("conv dims must be positive".to_string());
                }
                if kernel == 0 || stride == 0 {
                    return bad("kernel and stride must be positive".to_string());
                }
                if kernel > in_height + 2 * padding || kernel > in_width + 2 * padding {
                    return bad(format!(
                        "kernel {kernel} exceeds padded input {}x{}",
                        in_height + 2 * padding,
                        in_width + 2 * padding
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
}

/// Parameter offsets of one layer within the flat weight/bias vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerLayout {
    pub weight_offset: usize,
    pub weight_len: usize,
    pub bias_offset: usize,
    pub bias_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    layers: Vec<LayerSpec>,
    layouts: Vec<LayerLayout>,
    num_classes: usize,
    weight_count: usize,
    bias_count: usize,
}

impl ModelSpec {
    /// Validates adjacency (output of layer i feeds layer i+1) and that the
    /// final layer emits one logit per class.
    pub fn new(layers: Vec<LayerSpec>, num_classes: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(SimError::Config("model needs at least one layer".into()));
        }
        if num_classes < 2 {
            return Err(SimError::Config("num_classes must be >= 2".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.kind.validate(i)?;
        }
        for i in 0..layers.len() - 1 {
            let out = layers[i].kind.output_len();
            let inn = layers[i + 1].kind.input_len();
            if out != inn {
                return Err(SimError::Config(format!(
                    "layer {i} emits {out} values but layer {} expects {inn}",
                    i + 1
                )));
            }
        }
        let last = layers.last().unwrap().kind.output_len();
        if last != num_classes {
            return Err(SimError::Config(format!(
                "final layer emits {last} values, expected {num_classes} classes"
            )));
        }

        let mut layouts = Vec::with_capacity(layers.len());
        let (mut w_off, mut b_off) = (0usize, 0usize);
        for layer in &layers {
            let wl = layer.kind.weight_len();
            let bl = layer.kind.bias_len();
            layouts.push(LayerLayout {
                weight_offset: w_off,
                weight_len: wl,
                bias_offset: b_off,
                bias_len: bl,
            });
            w_off += wl;
            b_off += bl;
        }
        Ok(Self { layers, layouts, num_classes, weight_count: w_off, bias_count: b_off })
    }

    /// Plain MLP: input -> hidden... -> classes, ReLU on hidden layers.
    pub fn mlp(input_dim: usize, hidden: &[usize], num_classes: usize) -> Result<Self> {
        let mut layers = Vec::new();
        let mut inn = input_dim;
        for &h in hidden {
            layers.push(LayerSpec {
                kind: LayerKind::Dense { inputs: inn, outputs: h },
                activation: Activation::Relu,
            });
            inn = h;
        }
        layers.push(LayerSpec {
            kind: LayerKind::Dense { inputs: inn, outputs: num_classes },
            activation: Activation::Identity,
        });
        Self::new(layers, num_classes)
    }

    /// LeNet-style CIFAR net: two stride-2 5x5 convolutions followed by
    /// three dense layers (400-120-84-10). 61,770 weights + 236 biases.
    pub fn lenet_cifar() -> Self {
        let conv = |in_c, out_c, in_h, in_w| LayerKind::Conv2d {
            in_channels: in_c,
            out_channels: out_c,
            in_height: in_h,
            in_width: in_w,
            kernel: 5,
            stride: 2,
            padding: 0,
        };
        let layers = vec![
            LayerSpec { kind: conv(3, 6, 32, 32), activation: Activation::Relu },
            LayerSpec { kind: conv(6, 16, 14, 14), activation: Activation::Relu },
            LayerSpec {
                kind: LayerKind::Dense { inputs: 400, outputs: 120 },
                activation: Activation::Relu,
            },
            LayerSpec {
                kind: LayerKind::Dense { inputs: 120, outputs: 84 },
                activation: Activation::Relu,
            },
            LayerSpec {
                kind: LayerKind::Dense { inputs: 84, outputs: 10 },
                activation: Activation::Identity,
            },
        ];
        Self::new(layers, 10).expect("lenet spec is well-formed")
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub(crate) fn layouts(&self) -> &[LayerLayout] {
        &self.layouts
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].kind.input_len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of weight parameters (mask length); biases excluded.
    pub fn weight_count(&self) -> usize {
        self.weight_count
    }

    pub fn bias_count(&self) -> usize {
        self.bias_count
    }
}

/// A model instance: spec plus flat weight and bias vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatModel {
    pub spec: ModelSpec,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl FlatModel {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            spec: spec.clone(),
            weights: vec![0.0; spec.weight_count()],
            biases: vec![0.0; spec.bias_count()],
        }
    }

    /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer;
    /// biases start at zero.
    pub fn init_random(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut model = Self::zeros(spec);
        for (layer, layout) in spec.layers().iter().zip(spec.layouts()) {
            let bound = 1.0 / (layer.kind.fan_in() as f64).sqrt();
            for w in
                &mut model.weights[layout.weight_offset..layout.weight_offset + layout.weight_len]
            {
                *w = rng.gen_range(-bound..bound);
            }
        }
        model
    }

    pub fn same_spec(&self, other: &FlatModel) -> bool {
        self.spec == other.spec
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite()) && self.biases.iter().all(|b| b.is_finite())
    }
}

/// A minibatch of flattened inputs with integer class labels.
#[derive(Debug, Clone)]
pub struct Batch {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
}

impl Batch {
    pub fn new(
        inputs: Vec<f64>,
        labels: Vec<usize>,
        input_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(SimError::Usage("batch must contain at least one sample".into()));
        }
        if inputs.len() != labels.len() * input_dim {
            return Err(SimError::Config(format!(
                "batch inputs have {} values, expected {} x {}",
                inputs.len(),
                labels.len(),
                input_dim
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(SimError::Config(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { inputs, labels, input_dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}
