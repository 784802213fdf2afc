//! Building blocks of one stage: dilated acausal convolution, the dilated
//! residual layer, 1x1 convolutions, the softmax classifier head and dropout,
//! each with a hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Temporal width of every dilated kernel.
pub const KERNEL_WIDTH: usize = 3;

/// Floor applied to probabilities before any logarithm.
pub const PROB_FLOOR: f64 = 1e-8;

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Uniform initialisation in `±sqrt(1 / fan_in)`.
pub(crate) fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape).expect("init shapes are valid");
    for v in t.data_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    t
}

/// Weights of a pointwise (1x1) convolution: `weight` is `(D_out, D_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1x1Params {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv1x1Params {
    pub fn zeros(d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Conv1x1Params {
            weight: Tensor::zeros(&[d_out, d_in])?,
            bias: Tensor::zeros(&[d_out])?,
        })
    }

    pub fn init(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Conv1x1Params {
            weight: uniform_init(&[d_out, d_in], d_in, rng),
            bias: uniform_init(&[d_out], d_in, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// `y = W x + b` applied independently at every frame of `x (D_in, T)`.
pub fn conv1x1_forward(input: &Tensor, params: &Conv1x1Params) -> Result<Tensor> {
    let (d_in, t_len) = input.dims2()?;
    let (d_out, w_in) = params.weight.dims2()?;
    if w_in != d_in || params.bias.shape() != [d_out] {
        return Err(Error::InvalidShape(format!(
            "1x1 conv weight {:?} / bias {:?} incompatible with input {:?}",
            params.weight.shape(),
            params.bias.shape(),
            input.shape()
        )));
    }
    let mut out = Tensor::zeros(&[d_out, t_len])?;
    let w = params.weight.data();
    let b = params.bias.data();
    for o in 0..d_out {
        let row = out.row_mut(o);
        row.fill(b[o]);
        for i in 0..d_in {
            let wi = w[o * d_in + i];
            if wi != 0.0 {
                axpy(wi, input.row(i), row);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`conv1x1_forward`]; returns the input gradient and accumulates
/// parameter gradients into `grads`.
pub fn conv1x1_backward(
    input: &Tensor,
    params: &Conv1x1Params,
    upstream: &Tensor,
    grads: &mut Conv1x1Params,
) -> Result<Tensor> {
    let (d_in, t_len) = input.dims2()?;
    let d_out = params.out_dim();
    upstream.ensure_shape(&[d_out, t_len], "1x1 conv upstream gradient")?;
    let mut grad_in = Tensor::zeros(&[d_in, t_len])?;
    let w = params.weight.data();
    for o in 0..d_out {
        let gy = upstream.row(o);
        grads.bias.data_mut()[o] += gy.iter().sum::<f64>();
        for i in 0..d_in {
            grads.weight.data_mut()[o * d_in + i] += dot(gy, input.row(i));
            axpy(w[o * d_in + i], gy, grad_in.row_mut(i));
        }
    }
    Ok(grad_in)
}

/// Frame offset of kernel tap `tap` at the given dilation.
#[inline]
fn tap_offset(tap: usize, dilation: usize) -> isize {
    (tap as isize - 1) * dilation as isize
}

/// Output frames `t` for which `t + offset` is a valid input frame.
#[inline]
fn valid_range(offset: isize, t_len: usize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (t_len as isize - offset.max(0)).max(0) as usize;
    (lo.min(t_len), hi.max(lo.min(t_len)))
}

fn check_dilated(input: &Tensor, kernel: &Tensor, bias: &Tensor, dilation: usize) -> Result<(usize, usize, usize)> {
    let (d_in, t_len) = input.dims2()?;
    if dilation == 0 {
        return Err(Error::InvalidArgument("dilation must be at least 1".into()));
    }
    match kernel.shape() {
        &[KERNEL_WIDTH, ki, ko] if ki == d_in && bias.shape() == [ko] => Ok((d_in, ko, t_len)),
        _ => Err(Error::InvalidShape(format!(
            "kernel {:?} / bias {:?} incompatible with input {:?}",
            kernel.shape(),
            bias.shape(),
            input.shape()
        ))),
    }
}

/// Acausal dilated convolution with kernel width 3 and zero padding of width
/// `dilation` on each side:
/// `out[o, t] = bias[o] + sum_k sum_i kernel[k, i, o] * input[i, t + (k - 1) * dilation]`.
pub fn dilated_conv1d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    dilation: usize,
) -> Result<Tensor> {
    let (d_in, d_out, t_len) = check_dilated(input, kernel, bias, dilation)?;
    let mut out = Tensor::zeros(&[d_out, t_len])?;
    let k = kernel.data();
    for o in 0..d_out {
        let row = out.row_mut(o);
        row.fill(bias.data()[o]);
        for tap in 0..KERNEL_WIDTH {
            let off = tap_offset(tap, dilation);
            let (lo, hi) = valid_range(off, t_len);
            if lo >= hi {
                continue;
            }
            let src_lo = (lo as isize + off) as usize;
            let src_hi = (hi as isize + off) as usize;
            for i in 0..d_in {
                let w = k[(tap * d_in + i) * d_out + o];
                if w != 0.0 {
                    axpy(w, &input.row(i)[src_lo..src_hi], &mut row[lo..hi]);
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`dilated_conv1d_forward`]. Returns the input gradient and
/// accumulates into `grad_kernel` / `grad_bias`.
pub fn dilated_conv1d_backward(
    input: &Tensor,
    kernel: &Tensor,
    dilation: usize,
    upstream: &Tensor,
    grad_kernel: &mut Tensor,
    grad_bias: &mut Tensor,
) -> Result<Tensor> {
    let (d_in, t_len) = input.dims2()?;
    let d_out = kernel.shape()[2];
    upstream.ensure_shape(&[d_out, t_len], "dilated conv upstream gradient")?;
    let mut grad_in = Tensor::zeros(&[d_in, t_len])?;
    let k = kernel.data();
    for o in 0..d_out {
        let gy = upstream.row(o);
        grad_bias.data_mut()[o] += gy.iter().sum::<f64>();
        for tap in 0..KERNEL_WIDTH {
            let off = tap_offset(tap, dilation);
            let (lo, hi) = valid_range(off, t_len);
            if lo >= hi {
                continue;
            }
            let src_lo = (lo as isize + off) as usize;
            let src_hi = (hi as isize + off) as usize;
            for i in 0..d_in {
                let idx = (tap * d_in + i) * d_out + o;
                grad_kernel.data_mut()[idx] += dot(&gy[lo..hi], &input.row(i)[src_lo..src_hi]);
                axpy(k[idx], &gy[lo..hi], &mut grad_in.row_mut(i)[src_lo..src_hi]);
            }
        }
    }
    Ok(grad_in)
}

/// Parameters of one dilated residual layer:
/// `H_l = H_{l-1} + W2 * ReLU(W1 *_d H_{l-1} + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedResidualLayerParams {
    /// `(3, D, D)` dilated kernel.
    pub w1: Tensor,
    pub b1: Tensor,
    /// `(D, D)` pointwise weights.
    pub w2: Tensor,
    pub b2: Tensor,
    pub dilation: usize,
}

impl DilatedResidualLayerParams {
    pub fn zeros(channels: usize, dilation: usize) -> Result<Self> {
        Ok(DilatedResidualLayerParams {
            w1: Tensor::zeros(&[KERNEL_WIDTH, channels, channels])?,
            b1: Tensor::zeros(&[channels])?,
            w2: Tensor::zeros(&[channels, channels])?,
            b2: Tensor::zeros(&[channels])?,
            dilation,
        })
    }

    pub fn init(channels: usize, dilation: usize, rng: &mut impl Rng) -> Self {
        let fan1 = KERNEL_WIDTH * channels;
        DilatedResidualLayerParams {
            w1: uniform_init(&[KERNEL_WIDTH, channels, channels], fan1, rng),
            b1: uniform_init(&[channels], fan1, rng),
            w2: uniform_init(&[channels, channels], channels, rng),
            b2: uniform_init(&[channels], channels, rng),
            dilation,
        }
    }

    pub fn channels(&self) -> usize {
        self.b1.len()
    }

    fn pointwise(&self) -> Conv1x1Params {
        Conv1x1Params {
            weight: self.w2.clone(),
            bias: self.b2.clone(),
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 4] {
        [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 4] {
        [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`, else
/// `1 / (1 - rate)`. `None` when dropout is inactive.
pub fn dropout_mask(shape: &[usize], rate: f64, training: bool, seed: u64) -> Result<Option<Tensor>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    let mut mask = Tensor::zeros(shape)?;
    for v in mask.data_mut() {
        *v = if rng.gen::<f64>() < rate { 0.0 } else { keep };
    }
    Ok(Some(mask))
}

/// Values saved by [`dilated_residual_layer_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ResidualLayerCache {
    input: Tensor,
    /// ReLU output before dropout.
    hidden: Tensor,
    /// Branch fed into the pointwise convolution (hidden after dropout).
    dropped: Option<Tensor>,
    mask: Option<Tensor>,
}

pub fn dilated_residual_layer_forward(
    input: &Tensor,
    params: &DilatedResidualLayerParams,
    dropout_rate: f64,
    training: bool,
    rng_seed: u64,
) -> Result<(Tensor, ResidualLayerCache)> {
    let (d, _) = input.dims2()?;
    if params.channels() != d {
        return Err(Error::InvalidShape(format!(
            "residual layer has {} channels, input has {d}",
            params.channels()
        )));
    }
    let mut hidden = dilated_conv1d_forward(input, &params.w1, &params.b1, params.dilation)?;
    for v in hidden.data_mut() {
        *v = v.max(0.0);
    }
    let mask = dropout_mask(hidden.shape(), dropout_rate, training, rng_seed)?;
    let dropped = mask.as_ref().map(|m| {
        let mut h = hidden.clone();
        for (v, k) in h.data_mut().iter_mut().zip(m.data()) {
            *v *= k;
        }
        h
    });
    let mut out = conv1x1_forward(dropped.as_ref().unwrap_or(&hidden), &params.pointwise())?;
    out.add_assign(input)?;
    Ok((
        out,
        ResidualLayerCache {
            input: input.clone(),
            hidden,
            dropped,
            mask,
        },
    ))
}

/// Adjoint of [`dilated_residual_layer_forward`], replaying the cached dropout
/// mask. Parameter gradients are accumulated into `grads`.
pub fn layer_backward(
    cache: &ResidualLayerCache,
    params: &DilatedResidualLayerParams,
    upstream: &Tensor,
    grads: &mut DilatedResidualLayerParams,
) -> Result<Tensor> {
    upstream.ensure_shape(cache.input.shape(), "residual layer upstream gradient")?;
    let branch_in = cache.dropped.as_ref().unwrap_or(&cache.hidden);
    let mut pw_grads = Conv1x1Params {
        weight: std::mem::replace(&mut grads.w2, params.w2.zeros_like()),
        bias: std::mem::replace(&mut grads.b2, params.b2.zeros_like()),
    };
    let mut grad_hidden = conv1x1_backward(branch_in, &params.pointwise(), upstream, &mut pw_grads)?;
    grads.w2 = pw_grads.weight;
    grads.b2 = pw_grads.bias;

    if let Some(mask) = &cache.mask {
        for (g, m) in grad_hidden.data_mut().iter_mut().zip(mask.data()) {
            *g *= m;
        }
    }
    // ReLU subgradient is 0 at exactly 0.
    for (g, h) in grad_hidden.data_mut().iter_mut().zip(cache.hidden.data()) {
        if *h <= 0.0 {
            *g = 0.0;
        }
    }
    let mut grad_in = dilated_conv1d_backward(
        &cache.input,
        &params.w1,
        params.dilation,
        &grad_hidden,
        &mut grads.w1,
        &mut grads.b1,
    )?;
    grad_in.add_assign(upstream)?;
    Ok(grad_in)
}

/// Classifier head `Y_t = softmax(W h_t + b)`, `W` is `(C, D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHeadParams {
    pub w: Tensor,
    pub b: Tensor,
}

impl ClassifierHeadParams {
    pub fn zeros(channels: usize, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        Ok(ClassifierHeadParams {
            w: Tensor::zeros(&[classes, channels])?,
            b: Tensor::zeros(&[classes])?,
        })
    }

    pub fn init(channels: usize, classes: usize, rng: &mut impl Rng) -> Self {
        ClassifierHeadParams {
            w: uniform_init(&[classes, channels], channels, rng),
            b: uniform_init(&[classes], channels, rng),
        }
    }

    pub fn classes(&self) -> usize {
        self.b.len()
    }

    fn as_conv(&self) -> Conv1x1Params {
        Conv1x1Params {
            weight: self.w.clone(),
            bias: self.b.clone(),
        }
    }
}

/// Column-wise softmax of a `(C, T)` logit matrix.
pub fn softmax_columns(logits: &Tensor) -> Result<Tensor> {
    let (c, t_len) = logits.dims2()?;
    let mut probs = logits.clone();
    let data = probs.data_mut();
    let mut max = vec![f64::NEG_INFINITY; t_len];
    for k in 0..c {
        for (m, v) in max.iter_mut().zip(&data[k * t_len..(k + 1) * t_len]) {
            *m = m.max(*v);
        }
    }
    let mut denom = vec![0.0; t_len];
    for k in 0..c {
        for t in 0..t_len {
            let e = (data[k * t_len + t] - max[t]).exp();
            data[k * t_len + t] = e;
            denom[t] += e;
        }
    }
    for k in 0..c {
        for t in 0..t_len {
            data[k * t_len + t] /= denom[t];
        }
    }
    Ok(probs)
}

/// Vector-Jacobian product of the column softmax:
/// `dz = y * (g - sum_c y g)`.
pub fn softmax_columns_backward(probs: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let (c, t_len) = probs.dims2()?;
    upstream.ensure_shape(probs.shape(), "softmax upstream gradient")?;
    let (y, g) = (probs.data(), upstream.data());
    let mut inner = vec![0.0; t_len];
    for k in 0..c {
        for t in 0..t_len {
            inner[t] += y[k * t_len + t] * g[k * t_len + t];
        }
    }
    let mut out = probs.zeros_like();
    let o = out.data_mut();
    for k in 0..c {
        for t in 0..t_len {
            let i = k * t_len + t;
            o[i] = y[i] * (g[i] - inner[t]);
        }
    }
    Ok(out)
}

/// Per-frame class probabilities `(C, T)` from features `h (D, T)`.
pub fn classifier_head_forward(h: &Tensor, params: &ClassifierHeadParams) -> Result<Tensor> {
    softmax_columns(&conv1x1_forward(h, &params.as_conv())?)
}

/// Adjoint of [`classifier_head_forward`] given the gradient with respect to
/// the probabilities.
pub fn classifier_head_backward(
    h: &Tensor,
    probs: &Tensor,
    params: &ClassifierHeadParams,
    upstream: &Tensor,
    grads: &mut ClassifierHeadParams,
) -> Result<Tensor> {
    let grad_logits = softmax_columns_backward(probs, upstream)?;
    let mut g = Conv1x1Params {
        weight: std::mem::replace(&mut grads.w, params.w.zeros_like()),
        bias: std::mem::replace(&mut grads.b, params.b.zeros_like()),
    };
    let grad_h = conv1x1_backward(h, &params.as_conv(), &grad_logits, &mut g)?;
    grads.w = g.weight;
    grads.b = g.bias;
    Ok(grad_h)
}

/// Receptive field, in frames, of layer `l` (1-based) of a stage with kernel
/// width 3 and dilations `1, 2, 4, ...`: `2^(l+1) - 1`.
pub fn receptive_field(l: u32) -> Result<u64> {
    if l < 1 {
        return Err(Error::InvalidArgument("layer index starts at 1".into()));
    }
    if l > 62 {
        return Err(Error::InvalidArgument(format!("layer index {l} too large")));
    }
    Ok((1u64 << (l + 1)) - 1)
}
