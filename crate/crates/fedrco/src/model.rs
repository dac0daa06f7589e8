//! Minimal feed-forward network with exact backpropagation.
//!
//! Layers: dense, 2-D convolution (via unfold/im2col), ReLU, max-pool,
//! flatten. Each parameterized layer owns exactly one weight matrix; biases
//! are folded in homogeneous-coordinate style by appending a constant-1 row to
//! the layer input, so a dense layer with bias has shape
//! `d_out x (d_in + 1)` and a conv layer `out_ch x (in_ch*k*k + 1)`.
//!
//! The backward pass additionally captures, per parameterized layer, the
//! input-activation matrix `A` and the pre-activation gradient matrix `G`
//! consumed by the curvature estimator.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Shape of the feature axis flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Flat(usize),
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        match *self {
            FeatureShape::Flat(d) => d,
            FeatureShape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn describe(&self) -> String {
        match *self {
            FeatureShape::Flat(d) => format!("flat({d})"),
            FeatureShape::Image {
                channels,
                height,
                width,
            } => format!("image({channels}x{height}x{width})"),
        }
    }
}

/// One layer of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn is_parameterized(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. })
    }
}

/// Shape produced by feeding `input` through `layer`.
pub fn output_shape(input: FeatureShape, layer: &LayerSpec) -> Result<FeatureShape> {
    match *layer {
        LayerSpec::Dense { in_dim, out_dim } => match input {
            FeatureShape::Flat(d) if d == in_dim => Ok(FeatureShape::Flat(out_dim)),
            other => Err(Error::shape_mismatch(
                format!("flat({in_dim})"),
                other.describe(),
            )),
        },
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => match input {
            FeatureShape::Image {
                channels,
                height,
                width,
            } if channels == in_ch => {
                let (oh, ow) = conv_output_hw(height, width, kernel, stride, pad)?;
                Ok(FeatureShape::Image {
                    channels: out_ch,
                    height: oh,
                    width: ow,
                })
            }
            other => Err(Error::shape_mismatch(
                format!("image({in_ch}xHxW)"),
                other.describe(),
            )),
        },
        LayerSpec::Relu => Ok(input),
        LayerSpec::MaxPool { kernel } => match input {
            FeatureShape::Image {
                channels,
                height,
                width,
            } => {
                if height < kernel || width < kernel {
                    return Err(Error::KernelLargerThanInput {
                        kernel,
                        input: height.min(width),
                    });
                }
                Ok(FeatureShape::Image {
                    channels,
                    height: height / kernel,
                    width: width / kernel,
                })
            }
            other => Err(Error::shape_mismatch("image", other.describe())),
        },
        LayerSpec::Flatten => Ok(FeatureShape::Flat(input.len())),
    }
}

fn conv_output_hw(
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize)> {
    assert!(stride >= 1, "stride must be at least 1");
    assert!(kernel >= 1, "kernel must be at least 1");
    if h + 2 * pad < kernel || w + 2 * pad < kernel {
        return Err(Error::KernelLargerThanInput {
            kernel,
            input: (h + 2 * pad).min(w + 2 * pad),
        });
    }
    Ok((
        (h + 2 * pad - kernel) / stride + 1,
        (w + 2 * pad - kernel) / stride + 1,
    ))
}

/// A mini-batch in column-major layout: `data` is `features x B`, one sample
/// per column. Image features are stored channel-major
/// (`c*H*W + y*W + x`), so `Flatten` is a pure shape relabel.
#[derive(Debug, Clone)]
pub struct Batch {
    pub shape: FeatureShape,
    pub data: Matrix,
}

impl Batch {
    pub fn new(shape: FeatureShape, data: Matrix) -> Result<Self> {
        if data.rows() != shape.len() {
            return Err(Error::shape_mismatch(
                format!("{} feature rows", shape.len()),
                format!("{}", data.rows()),
            ));
        }
        Ok(Batch { shape, data })
    }

    /// Build an image batch from sample-major `[B][C][H][W]` values.
    pub fn from_images(
        batch: usize,
        channels: usize,
        height: usize,
        width: usize,
        values: &[f64],
    ) -> Result<Self> {
        let per = channels * height * width;
        if values.len() != batch * per {
            return Err(Error::shape_mismatch(
                format!("{} values", batch * per),
                format!("{}", values.len()),
            ));
        }
        let mut data = Matrix::zeros(per, batch);
        for b in 0..batch {
            for f in 0..per {
                data[(f, b)] = values[b * per + f];
            }
        }
        Batch::new(
            FeatureShape::Image {
                channels,
                height,
                width,
            },
            data,
        )
    }

    pub fn size(&self) -> usize {
        self.data.cols()
    }
}

/// Per-layer factors captured during backprop: `a` is the layer input
/// (unfolded patches for conv, with the constant-1 bias row when biases are
/// enabled), `g` the loss gradient w.r.t. pre-activations. `b_eff` is the
/// batch size for dense layers and batch x spatial positions for conv.
#[derive(Debug, Clone)]
pub struct LayerCapture {
    pub a: Matrix,
    pub g: Matrix,
    pub b_eff: usize,
}

/// Captures for every parameterized layer, in layer order.
#[derive(Debug, Clone)]
pub struct BatchCapture {
    pub batch_size: usize,
    pub layers: Vec<LayerCapture>,
}

/// Ordered layer stack with one parameter matrix per dense/conv layer.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: FeatureShape,
    layers: Vec<LayerSpec>,
    params: Vec<Matrix>,
    bias: bool,
    num_classes: usize,
}

impl Network {
    /// Validate the layer stack and allocate zeroed parameters.
    pub fn zeroed(input_shape: FeatureShape, layers: Vec<LayerSpec>, bias: bool) -> Result<Self> {
        let mut shape = input_shape;
        let mut params = Vec::new();
        for layer in &layers {
            if layer.is_parameterized() {
                let (rows, cols) = weight_shape(layer, bias);
                params.push(Matrix::zeros(rows, cols));
            }
            shape = output_shape(shape, layer)?;
        }
        let num_classes = match shape {
            FeatureShape::Flat(d) if d >= 2 => d,
            other => {
                return Err(Error::shape_mismatch(
                    "final flat shape with >= 2 classes",
                    other.describe(),
                ))
            }
        };
        Ok(Network {
            input_shape,
            layers,
            params,
            bias,
            num_classes,
        })
    }

    /// He-style initialization: weights ~ N(0, sqrt(2/fan_in)), bias column 0.
    pub fn init(
        input_shape: FeatureShape,
        layers: Vec<LayerSpec>,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut net = Network::zeroed(input_shape, layers, bias)?;
        for (idx, layer) in net
            .layers
            .clone()
            .iter()
            .filter(|l| l.is_parameterized())
            .enumerate()
        {
            let fan_in = match *layer {
                LayerSpec::Dense { in_dim, .. } => in_dim,
                LayerSpec::Conv2d { in_ch, kernel, .. } => in_ch * kernel * kernel,
                _ => unreachable!(),
            };
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("valid stddev");
            let w = &mut net.params[idx];
            for r in 0..w.rows() {
                for c in 0..w.cols() {
                    // Bias column (the last one, when present) stays zero.
                    if bias && c == fan_in {
                        continue;
                    }
                    w[(r, c)] = normal.sample(rng);
                }
            }
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> FeatureShape {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Matrix>) {
        assert_eq!(params.len(), self.params.len());
        for (new, old) in params.iter().zip(&self.params) {
            assert_eq!((new.rows(), new.cols()), (old.rows(), old.cols()));
        }
        self.params = params;
    }

    /// Total scalar parameter count `d`.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.rows() * p.cols()).sum()
    }

    /// Forward pass returning logits and the stashes backward needs.
    fn forward(&self, input: &Batch) -> Result<(Matrix, Vec<Stash>)> {
        if input.shape != self.input_shape {
            return Err(Error::shape_mismatch(
                self.input_shape.describe(),
                input.shape.describe(),
            ));
        }
        if input.size() == 0 {
            return Err(Error::EmptyDataset);
        }
        let batch = input.size();
        let mut shape = input.shape;
        let mut data = input.data.clone();
        let mut stashes = Vec::with_capacity(self.layers.len());
        let mut param_idx = 0;

        for layer in &self.layers {
            match *layer {
                LayerSpec::Dense { .. } => {
                    let a = if self.bias {
                        append_ones_row(&data)
                    } else {
                        data
                    };
                    let w = &self.params[param_idx];
                    data = w.matmul(&a);
                    stashes.push(Stash::Dense { a });
                    shape = output_shape(shape, layer)?;
                    param_idx += 1;
                }
                LayerSpec::Conv2d {
                    out_ch,
                    kernel,
                    stride,
                    pad,
                    ..
                } => {
                    let current = Batch { shape, data };
                    let u_raw = unfold(&current, kernel, stride, pad)?;
                    let u = if self.bias {
                        append_ones_row(&u_raw)
                    } else {
                        u_raw
                    };
                    let w = &self.params[param_idx];
                    let out = w.matmul(&u); // out_ch x (B*oh*ow)
                    let out_shape = output_shape(shape, layer)?;
                    let FeatureShape::Image {
                        height: oh,
                        width: ow,
                        ..
                    } = out_shape
                    else {
                        unreachable!()
                    };
                    data = spatial_to_columns(&out, out_ch, oh, ow, batch);
                    stashes.push(Stash::Conv {
                        u,
                        in_shape: shape,
                        out_hw: (oh, ow),
                    });
                    shape = out_shape;
                    param_idx += 1;
                }
                LayerSpec::Relu => {
                    let mask: Vec<bool> = data.as_slice().iter().map(|&x| x > 0.0).collect();
                    for x in data.as_mut_slice() {
                        if *x < 0.0 {
                            *x = 0.0;
                        }
                    }
                    stashes.push(Stash::Relu { mask });
                }
                LayerSpec::MaxPool { kernel } => {
                    let out_shape = output_shape(shape, layer)?;
                    let (pooled, argmax) = max_pool(&data, shape, out_shape, kernel);
                    data = pooled;
                    stashes.push(Stash::MaxPool {
                        argmax,
                        in_rows: shape.len(),
                    });
                    shape = out_shape;
                }
                LayerSpec::Flatten => {
                    shape = output_shape(shape, layer)?;
                    stashes.push(Stash::Flatten);
                }
            }
        }
        Ok((data, stashes))
    }

    /// Logits for a batch (no gradient bookkeeping kept).
    pub fn logits(&self, input: &Batch) -> Result<Matrix> {
        Ok(self.forward(input)?.0)
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn loss(&self, input: &Batch, labels: &[usize]) -> Result<f64> {
        let logits = self.logits(input)?;
        Ok(softmax_cross_entropy(&logits, labels, self.num_classes)?.0)
    }

    /// Loss, exact per-parameter gradients of the mean loss, and the
    /// activation/gradient capture used by the curvature estimator.
    pub fn forward_backward(
        &self,
        input: &Batch,
        labels: &[usize],
    ) -> Result<(f64, Vec<Matrix>, BatchCapture)> {
        if labels.len() != input.size() {
            return Err(Error::shape_mismatch(
                format!("{} labels", input.size()),
                format!("{}", labels.len()),
            ));
        }
        let batch = input.size();
        let (logits, stashes) = self.forward(input)?;
        let (loss, mut upstream) = softmax_cross_entropy(&logits, labels, self.num_classes)?;

        let mut grads: Vec<Matrix> = Vec::with_capacity(self.params.len());
        let mut captures: Vec<LayerCapture> = Vec::with_capacity(self.params.len());
        let mut param_idx = self.params.len();

        for (layer, stash) in self.layers.iter().zip(stashes.iter()).rev() {
            match (*layer, stash) {
                (LayerSpec::Dense { .. }, Stash::Dense { a }) => {
                    param_idx -= 1;
                    let w = &self.params[param_idx];
                    let grad_w = upstream.matmul_transpose(a);
                    let g = std::mem::replace(&mut upstream, Matrix::zeros(1, 1));
                    let real_in = a.rows() - usize::from(self.bias);
                    upstream = propagate_dense(w, &g, real_in);
                    captures.push(LayerCapture {
                        a: a.clone(),
                        g,
                        b_eff: batch,
                    });
                    grads.push(grad_w);
                }
                (
                    LayerSpec::Conv2d {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        pad,
                    },
                    Stash::Conv {
                        u,
                        in_shape,
                        out_hw,
                    },
                ) => {
                    param_idx -= 1;
                    let w = &self.params[param_idx];
                    let (oh, ow) = *out_hw;
                    // Upstream arrives feature-major per column; regroup to
                    // out_ch x (B*oh*ow) to match the unfold layout.
                    let g_spatial = columns_to_spatial(&upstream, out_ch, oh, ow, batch);
                    let grad_w = g_spatial.matmul_transpose(u);
                    let patch_rows = in_ch * kernel * kernel;
                    let v = propagate_dense_to_matrix(w, &g_spatial, patch_rows);
                    upstream = fold_patches(&v, *in_shape, kernel, stride, pad, (oh, ow), batch);
                    captures.push(LayerCapture {
                        a: u.clone(),
                        g: g_spatial,
                        b_eff: batch * oh * ow,
                    });
                    grads.push(grad_w);
                }
                (LayerSpec::Relu, Stash::Relu { mask }) => {
                    for (x, &keep) in upstream.as_mut_slice().iter_mut().zip(mask) {
                        if !keep {
                            *x = 0.0;
                        }
                    }
                }
                (LayerSpec::MaxPool { .. }, Stash::MaxPool { argmax, in_rows }) => {
                    let mut downstream = Matrix::zeros(*in_rows, batch);
                    for (out_idx, &src_row) in argmax.iter().enumerate() {
                        let (row, col) = (out_idx / batch, out_idx % batch);
                        downstream[(src_row, col)] += upstream[(row, col)];
                    }
                    upstream = downstream;
                }
                (LayerSpec::Flatten, Stash::Flatten) => {}
                _ => unreachable!("stashout of sync with layer"),
            }
        }

        grads.reverse();
        captures.reverse();
        Ok((
            loss,
            grads,
            BatchCapture {
                batch_size: batch,
                layers: captures,
            },
        ))
    }

    /// Fraction of samples whose argmax logit matches the label. Ties break
    /// to the lowest class index.
    pub fn evaluate_accuracy(&self, features: &Batch, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() || features.size() == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != features.size() {
            return Err(Error::shape_mismatch(
                format!("{} labels", features.size()),
                format!("{}", labels.len()),
            ));
        }
        let logits = self.logits(features)?;
        let mut correct = 0usize;
        for (col, &label) in labels.iter().enumerate() {
            if label >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    num_classes: self.num_classes,
                });
            }
            let mut best = 0usize;
            for row in 1..self.num_classes {
                if logits[(row, col)] > logits[(best, col)] {
                    best = row;
                }
            }
            if best == label {
                correct += 1;
            }
        }
        Ok(correct as f64 / labels.len() as f64)
    }
}

enum Stash {
    Dense {
        a: Matrix,
    },
    Conv {
        u: Matrix,
        in_shape: FeatureShape,
        out_hw: (usize, usize),
    },
    Relu {
        mask: Vec<bool>,
    },
    MaxPool {
        argmax: Vec<usize>,
        in_rows: usize,
    },
    Flatten,
}

/// Weight matrix shape for a parameterized layer.
pub fn weight_shape(layer: &LayerSpec, bias: bool) -> (usize, usize) {
    match *layer {
        LayerSpec::Dense { in_dim, out_dim } => (out_dim, in_dim + usize::from(bias)),
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            ..
        } => (out_ch, in_ch * kernel * kernel + usize::from(bias)),
        _ => panic!("layer has no weights"),
    }
}

fn append_ones_row(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows() + 1, m.cols());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out[(r, c)] = m[(r, c)];
        }
    }
    for c in 0..m.cols() {
        out[(m.rows(), c)] = 1.0;
    }
    out
}

/// Gradient w.r.t. the dense layer input: Wᵀ·G with the bias column dropped.
fn propagate_dense(w: &Matrix, g: &Matrix, real_in: usize) -> Matrix {
    propagate_dense_to_matrix(w, g, real_in)
}

fn propagate_dense_to_matrix(w: &Matrix, g: &Matrix, real_in: usize) -> Matrix {
    let mut out = Matrix::zeros(real_in, g.cols());
    for k in 0..w.rows() {
        let g_row = g.row(k);
        for i in 0..real_in {
            let wv = w[(k, i)];
            if wv == 0.0 {
                continue;
            }
            let out_row = &mut out.as_mut_slice()[i * g_row.len()..(i + 1) * g_row.len()];
            for (o, gv) in out_row.iter_mut().zip(g_row) {
                *o += wv * gv;
            }
        }
    }
    out
}

/// Extract k x k x C patches at every output position of every sample.
///
/// Column `b*(oh*ow) + oy*ow + ox` holds the patch under output position
/// `(oy, ox)` of sample `b`, flattened channel-major (`c*k*k + ky*k + kx`).
/// Out-of-bounds reads under zero padding contribute 0, so the convolution
/// equals `weights x unfold(input)`.
pub fn unfold(input: &Batch, kernel: usize, stride: usize, pad: usize) -> Result<Matrix> {
    let FeatureShape::Image {
        channels,
        height,
        width,
    } = input.shape
    else {
        return Err(Error::shape_mismatch("image batch", input.shape.describe()));
    };
    let (oh, ow) = conv_output_hw(height, width, kernel, stride, pad)?;
    let batch = input.size();
    let mut out = Matrix::zeros(channels * kernel * kernel, batch * oh * ow);
    for b in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                let col = b * (oh * ow) + oy * ow + ox;
                for c in 0..channels {
                    for ky in 0..kernel {
                        let y = (oy * stride + ky) as isize - pad as isize;
                        for kx in 0..kernel {
                            let x = (ox * stride + kx) as isize - pad as isize;
                            let row = c * kernel * kernel + ky * kernel + kx;
                            if y >= 0 && (y as usize) < height && x >= 0 && (x as usize) < width {
                                let f = c * height * width + y as usize * width + x as usize;
                                out[(row, col)] = input.data[(f, b)];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Scatter-add patch gradients back onto the input image (inverse of unfold).
fn fold_patches(
    v: &Matrix,
    in_shape: FeatureShape,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_hw: (usize, usize),
    batch: usize,
) -> Matrix {
    let FeatureShape::Image {
        channels,
        height,
        width,
    } = in_shape
    else {
        unreachable!()
    };
    let (oh, ow) = out_hw;
    let mut out = Matrix::zeros(channels * height * width, batch);
    for b in 0..batch {
        for oy in 0..oh {
            for ox in 0..ow {
                let col = b * (oh * ow) + oy * ow + ox;
                for c in 0..channels {
                    for ky in 0..kernel {
                        let y = (oy * stride + ky) as isize - pad as isize;
                        for kx in 0..kernel {
                            let x = (ox * stride + kx) as isize - pad as isize;
                            if y >= 0 && (y as usize) < height && x >= 0 && (x as usize) < width {
                                let row = c * kernel * kernel + ky * kernel + kx;
                                let f = c * height * width + y as usize * width + x as usize;
                                out[(f, b)] += v[(row, col)];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// `out_ch x (B*oh*ow)` conv output to feature-major columns.
fn spatial_to_columns(out: &Matrix, out_ch: usize, oh: usize, ow: usize, batch: usize) -> Matrix {
    let positions = oh * ow;
    let mut data = Matrix::zeros(out_ch * positions, batch);
    for oc in 0..out_ch {
        for b in 0..batch {
            for pos in 0..positions {
                data[(oc * positions + pos, b)] = out[(oc, b * positions + pos)];
            }
        }
    }
    data
}

/// Inverse of [`spatial_to_columns`].
fn columns_to_spatial(data: &Matrix, out_ch: usize, oh: usize, ow: usize, batch: usize) -> Matrix {
    let positions = oh * ow;
    let mut out = Matrix::zeros(out_ch, batch * positions);
    for oc in 0..out_ch {
        for b in 0..batch {
            for pos in 0..positions {
                out[(oc, b * positions + pos)] = data[(oc * positions + pos, b)];
            }
        }
    }
    out
}

fn max_pool(
    data: &Matrix,
    in_shape: FeatureShape,
    out_shape: FeatureShape,
    kernel: usize,
) -> (Matrix, Vec<usize>) {
    let FeatureShape::Image {
        channels,
        height,
        width,
    } = in_shape
    else {
        unreachable!()
    };
    let FeatureShape::Image {
        height: oh,
        width: ow,
        ..
    } = out_shape
    else {
        unreachable!()
    };
    let batch = data.cols();
    let mut out = Matrix::zeros(channels * oh * ow, batch);
    let mut argmax = vec![0usize; channels * oh * ow * batch];
    for b in 0..batch {
        for c in 0..channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_f = c * height * width + (oy * kernel) * width + ox * kernel;
                    let mut best = data[(best_f, b)];
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let f = c * height * width
                                + (oy * kernel + ky) * width
                                + (ox * kernel + kx);
                            if data[(f, b)] > best {
                                best = data[(f, b)];
                                best_f = f;
                            }
                        }
                    }
                    let out_row = c * oh * ow + oy * ow + ox;
                    out[(out_row, b)] = best;
                    argmax[out_row * batch + b] = best_f;
                }
            }
        }
    }
    (out, argmax)
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
fn softmax_cross_entropy(
    logits: &Matrix,
    labels: &[usize],
    num_classes: usize,
) -> Result<(f64, Matrix)> {
    let batch = logits.cols();
    let mut grad = Matrix::zeros(num_classes, batch);
    let mut total = 0.0;
    for (col, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        let mut max = f64::NEG_INFINITY;
        for r in 0..num_classes {
            max = max.max(logits[(r, col)]);
        }
        let mut denom = 0.0;
        for r in 0..num_classes {
            denom += (logits[(r, col)] - max).exp();
        }
        total += denom.ln() - (logits[(label, col)] - max);
        let inv_batch = 1.0 / batch as f64;
        for r in 0..num_classes {
            let p = (logits[(r, col)] - max).exp() / denom;
            grad[(r, col)] = (p - f64::from(u8::from(r == label))) * inv_batch;
        }
    }
    Ok((total / batch as f64, grad))
}

/// Dense stack: input -> hidden(relu) ... -> classes.
pub fn dense_net(input_dim: usize, hidden: &[usize], classes: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let mut prev = input_dim;
    for &h in hidden {
        layers.push(LayerSpec::Dense {
            in_dim: prev,
            out_dim: h,
        });
        layers.push(LayerSpec::Relu);
        prev = h;
    }
    layers.push(LayerSpec::Dense {
        in_dim: prev,
        out_dim: classes,
    });
    layers
}

/// Small conv stack: two 3x3 conv blocks with a pool between, then two
/// hidden dense layers, sized by `filters` and `fc`.
pub fn conv_net(
    in_ch: usize,
    height: usize,
    width: usize,
    classes: usize,
    filters: (usize, usize),
    fc: (usize, usize),
) -> Result<Vec<LayerSpec>> {
    let mut layers = vec![
        LayerSpec::Conv2d {
            in_ch,
            out_ch: filters.0,
            kernel: 3,
            stride: 1,
            pad: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool { kernel: 2 },
        LayerSpec::Conv2d {
            in_ch: filters.0,
            out_ch: filters.1,
            kernel: 3,
            stride: 1,
            pad: 1,
        },
        LayerSpec::Relu,
        LayerSpec::Flatten,
    ];
    let flat = filters.1 * (height / 2) * (width / 2);
    layers.push(LayerSpec::Dense {
        in_dim: flat,
        out_dim: fc.0,
    });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Dense {
        in_dim: fc.0,
        out_dim: fc.1,
    });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Dense {
        in_dim: fc.1,
        out_dim: classes,
    });
    Ok(layers)
}
