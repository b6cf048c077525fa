//! Exact forward/backward passes for dense and conv2d layers with
//! softmax cross-entropy loss.
//!
//! Convolutions use direct loops rather than an im2col buffer; at the
//! simulator's scale this is simpler and numerically identical.

use super::{Activation, FlatModel, LayerKind, LayerLayout, LayerSpec};

/// Flat gradient vectors matching a model's weight/bias layout.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|g| g.is_finite()) && self.biases.iter().all(|g| g.is_finite())
    }
}

/// Per-layer activations recorded during the forward pass.
/// `outputs[0]` is the batch input; `outputs[i + 1]` is the post-activation
/// output of layer i. `pre[i]` is the pre-activation of layer i.
pub(crate) struct Trace {
    pub outputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.outputs.last().unwrap()
    }
}

pub(crate) fn forward(model: &FlatModel, inputs: &[f64], batch: usize) -> Trace {
    let spec = &model.spec;
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(spec.layers().len() + 1);
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(spec.layers().len());
    outputs.push(inputs.to_vec());

    for (layer, layout) in spec.layers().iter().zip(spec.layouts()) {
        let x = outputs.last().unwrap();
        let mut z = layer_forward(layer, layout, model, x, batch);
        pre.push(z.clone());
        apply_activation(layer.activation, &mut z);
        outputs.push(z);
    }
    Trace { outputs, pre }
}

fn apply_activation(act: Activation, values: &mut [f64]) {
    if act == Activation::Relu {
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

fn layer_forward(
    layer: &LayerSpec,
    layout: &LayerLayout,
    model: &FlatModel,
    x: &[f64],
    batch: usize,
) -> Vec<f64> {
    let w = &model.weights[layout.weight_offset..layout.weight_offset + layout.weight_len];
    let b = &model.biases[layout.bias_offset..layout.bias_offset + layout.bias_len];
    match layer.kind {
        LayerKind::Dense { inputs, outputs } => {
            let mut z = vec![0.0; batch * outputs];
            for s in 0..batch {
                let xs = &x[s * inputs..(s + 1) * inputs];
                let zs = &mut z[s * outputs..(s + 1) * outputs];
                for (o, zo) in zs.iter_mut().enumerate() {
                    let row = &w[o * inputs..(o + 1) * inputs];
                    let mut acc = b[o];
                    for (xi, wi) in xs.iter().zip(row) {
                        acc += xi * wi;
                    }
                    *zo = acc;
                }
            }
            z
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
            let (oh, ow) = layer.kind.conv_output_hw();
            let in_len = in_channels * in_height * in_width;
            let out_len = out_channels * oh * ow;
            let mut z = vec![0.0; batch * out_len];
            for s in 0..batch {
                let xs = &x[s * in_len..(s + 1) * in_len];
                let zs = &mut z[s * out_len..(s + 1) * out_len];
                for oc in 0..out_channels {
                    let w_oc = &w[oc * in_channels * kernel * kernel
                        ..(oc + 1) * in_channels * kernel * kernel];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = b[oc];
                            for ic in 0..in_channels {
                                let x_ic = &xs[ic * in_height * in_width
                                    ..(ic + 1) * in_height * in_width];
                                let w_ic = &w_oc[ic * kernel * kernel..(ic + 1) * kernel * kernel];
                                for ky in 0..kernel {
                                    let y = (oy * stride + ky) as isize - padding as isize;
                                    if y < 0 || y >= in_height as isize {
                                        continue;
                                    }
                                    for kx in 0..kernel {
                                        let xcol = (ox * stride + kx) as isize - padding as isize;
                                        if xcol < 0 || xcol >= in_width as isize {
                                            continue;
                                        }
                                        acc += x_ic[y as usize * in_width + xcol as usize]
                                            * w_ic[ky * kernel + kx];
                                    }
                                }
                            }
                            zs[oc * oh * ow + oy * ow + ox] = acc;
                        }
                    }
                }
            }
            z
        }
    }
}

/// Mean cross-entropy of softmax(logits) against labels, plus the gradient
/// with respect to the logits (already scaled by 1/batch).
pub(crate) fn softmax_cross_entropy(
    logits: &[f64],
    labels: &[usize],
    num_classes: usize,
) -> (f64, Vec<f64>) {
    let batch = labels.len();
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; logits.len()];
    let inv_batch = 1.0 / batch as f64;
    for (s, &label) in labels.iter().enumerate() {
        let row = &logits[s * num_classes..(s + 1) * num_classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &l in row {
            sum += (l - max).exp();
        }
        let lse = max + sum.ln();
        loss += lse - row[label];
        let drow = &mut dlogits[s * num_classes..(s + 1) * num_classes];
        for (c, d) in drow.iter_mut().enumerate() {
            let p = (row[c] - lse).exp();
            *d = (p - if c == label { 1.0 } else { 0.0 }) * inv_batch;
        }
    }
    (loss * inv_batch, dlogits)
}

/// Backpropagates `dlogits` through the recorded trace, returning flat
/// weight/bias gradients.
pub(crate) fn backward(model: &FlatModel, trace: &Trace, dlogits: Vec<f64>, batch: usize) -> Gradients {
    let spec = &model.spec;
    let mut grads = Gradients {
        weights: vec![0.0; spec.weight_count()],
        biases: vec![0.0; spec.bias_count()],
    };
    let mut delta = dlogits;
    for (i, (layer, layout)) in spec.layers().iter().zip(spec.layouts()).enumerate().rev() {
        // d(post-activation) -> d(pre-activation)
        if layer.activation == Activation::Relu {
            for (d, &z) in delta.iter_mut().zip(&trace.pre[i]) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        delta = layer_backward(layer, layout, model, &trace.outputs[i], &delta, batch, &mut grads);
    }
    grads
}

fn layer_backward(
    layer: &LayerSpec,
    layout: &LayerLayout,
    model: &FlatModel,
    x: &[f64],
    delta: &[f64],
    batch: usize,
    grads: &mut Gradients,
) -> Vec<f64> {
    let w = &model.weights[layout.weight_offset..layout.weight_offset + layout.weight_len];
    let gw = &mut grads.weights[layout.weight_offset..layout.weight_offset + layout.weight_len];
    let gb = &mut grads.biases[layout.bias_offset..layout.bias_offset + layout.bias_len];
    match layer.kind {
        LayerKind::Dense { inputs, outputs } => {
            let mut dx = vec![0.0; batch * inputs];
            for s in 0..batch {
                let xs = &x[s * inputs..(s + 1) * inputs];
                let ds = &delta[s * outputs..(s + 1) * outputs];
                let dxs = &mut dx[s * inputs..(s + 1) * inputs];
                for (o, &d) in ds.iter().enumerate() {
                    gb[o] += d;
                    let grow = &mut gw[o * inputs..(o + 1) * inputs];
                    let wrow = &w[o * inputs..(o + 1) * inputs];
                    for i in 0..inputs {
                        grow[i] += d * xs[i];
                        dxs[i] += d * wrow[i];
                    }
                }
            }
            dx
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
            let (oh, ow) = layer.kind.conv_output_hw();
            let in_len = in_channels * in_height * in_width;
            let out_len = out_channels * oh * ow;
            let mut dx = vec![0.0; batch * in_len];
            for s in 0..batch {
                let xs = &x[s * in_len..(s + 1) * in_len];
                let ds = &delta[s * out_len..(s + 1) * out_len];
                let dxs = &mut dx[s * in_len..(s + 1) * in_len];
                for oc in 0..out_channels {
                    let w_oc = &w[oc * in_channels * kernel * kernel
                        ..(oc + 1) * in_channels * kernel * kernel];
                    let gw_oc = oc * in_channels * kernel * kernel;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let d = ds[oc * oh * ow + oy * ow + ox];
                            if d == 0.0 {
                                continue;
                            }
                            gb[oc] += d;
                            for ic in 0..in_channels {
                                let x_base = ic * in_height * in_width;
                                let w_base = ic * kernel * kernel;
                                for ky in 0..kernel {
                                    let y = (oy * stride + ky) as isize - padding as isize;
                                    if y < 0 || y >= in_height as isize {
                                        continue;
                                    }
                                    for kx in 0..kernel {
                                        let xcol = (ox * stride + kx) as isize - padding as isize;
                                        if xcol < 0 || xcol >= in_width as isize {
                                            continue;
                                        }
                                        let xi = x_base + y as usize * in_width + xcol as usize;
                                        gw[gw_oc + w_base + ky * kernel + kx] += d * xs[xi];
                                        dxs[xi] += d * w_oc[w_base + ky * kernel + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            dx
        }
    }
}
