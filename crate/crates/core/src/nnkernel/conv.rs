use rand::Rng;

use super::init::glorot_uniform;
use super::tensor::{matmul, MatRef, Scalar, Tensor};
use super::KernelError;

/// Weights `[filters, width, channels]`, bias `[filters]`, valid padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1DParams<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
}

/// Gradients of a 1-D convolution with respect to its input and parameters.
#[derive(Debug, Clone)]
pub struct Conv1DGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_weights: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

impl<T: Scalar> Conv1DParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>, stride: usize) -> Result<Self, KernelError> {
        let (f, _, _) = weights.dims3("conv1d")?;
        if bias.shape() != [f] {
            return Err(KernelError::Shape {
                op: "conv1d",
                detail: format!("bias shape {:?} does not match {f} filters", bias.shape()),
            });
        }
        if stride == 0 {
            return Err(KernelError::Shape { op: "conv1d", detail: "stride must be at least 1".into() });
        }
        Ok(Self { weights, bias, stride })
    }

    pub fn zeros(filters: usize, width: usize, channels: usize, stride: usize) -> Self {
        Self {
            weights: Tensor::zeros(vec![filters, width, channels]),
            bias: Tensor::zeros(vec![filters]),
            stride,
        }
    }

    /// Glorot-uniform weights with Keras fan conventions, zero bias.
    pub fn glorot<R: Rng + ?Sized>(filters: usize, width: usize, channels: usize, stride: usize, rng: &mut R) -> Self {
        let weights = glorot_uniform(vec![filters, width, channels], width * channels, width * filters, rng);
        Self { weights, bias: Tensor::zeros(vec![filters]), stride }
    }

    pub fn filters(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// The `channels`-long weight vector of filter `f` at width position `s`.
    pub fn slice(&self, f: usize, s: usize) -> &[T] {
        let c = self.channels();
        let start = (f * self.width() + s) * c;
        &self.weights.data()[start..start + c]
    }
}

/// Output length of a valid convolution, or `None` if the input is too short.
pub fn conv_output_len(len: usize, width: usize, stride: usize) -> Option<usize> {
    if len < width || stride == 0 {
        None
    } else {
        Some((len - width) / stride + 1)
    }
}

/// Number of leading rows of a row-major `[rows, cols]` buffer that precede an all-zero suffix.
pub(crate) fn nonzero_prefix_rows<T: Scalar>(x: &[T], rows: usize, cols: usize) -> usize {
    let mut n = rows;
    while n > 0 && x[(n - 1) * cols..n * cols].iter().all(|v| *v == T::zero()) {
        n -= 1;
    }
    n
}

fn check_input<T: Scalar>(x: &Tensor<T>, p: &Conv1DParams<T>, op: &'static str) -> Result<(usize, usize, usize), KernelError> {
    let (len, channels) = x.dims2(op)?;
    if channels != p.channels() {
        return Err(KernelError::Shape {
            op,
            detail: format!("input has {channels} channels, filters expect {}", p.channels()),
        });
    }
    let out_len = conv_output_len(len, p.width(), p.stride).ok_or_else(|| KernelError::Shape {
        op,
        detail: format!("input length {len} is shorter than filter width {}", p.width()),
    })?;
    Ok((len, channels, out_len))
}

/// `out[t, f] = bias[f] + Σ_{s,c} x[t·stride + s, c] · w[f, s, c]`.
pub fn conv1d_forward<T: Scalar>(x: &Tensor<T>, p: &Conv1DParams<T>) -> Result<Tensor<T>, KernelError> {
    let (_, channels, out_len) = check_input(x, p, "conv1d_forward")?;
    let (f, s) = (p.filters(), p.width());
    let fs = f * s;
    // Rows of an all-zero suffix (padding) contribute nothing to the products.
    let active = nonzero_prefix_rows(x.data(), x.shape()[0], channels);
    let mut products = vec![T::zero(); active * fs];
    matmul(
        MatRef::rows(x.data(), active, channels),
        MatRef::transposed(p.weights.data(), fs, channels),
        &mut products,
        false,
    );
    let bias = p.bias.data();
    let mut out = vec![T::zero(); out_len * f];
    for t in 0..out_len {
        let row = &mut out[t * f..(t + 1) * f];
        for (fi, o) in row.iter_mut().enumerate() {
            let mut acc = bias[fi];
            for si in 0..s {
                let r = t * p.stride + si;
                if r < active {
                    acc += products[r * fs + fi * s + si];
                }
            }
            *o = acc;
        }
    }
    let out = Tensor::new(vec![out_len, f], out)?;
    out.ensure_finite("conv1d_forward")?;
    Ok(out)
}

/// Gradients of [`conv1d_forward`].
pub fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    p: &Conv1DParams<T>,
    grad_out: &Tensor<T>,
) -> Result<Conv1DGrads<T>, KernelError> {
    let len = x.dims2("conv1d_backward")?.0;
    let parts = conv1d_backward_parts(x, p, grad_out, true, len)?;
    Ok(Conv1DGrads {
        grad_x: parts.grad_x.expect("input rows requested"),
        grad_weights: parts.grad_weights.expect("weights requested"),
        grad_bias: parts.grad_bias,
    })
}

pub(crate) struct ConvBackwardParts<T> {
    /// `[input_rows, channels]`: the first `input_rows` rows of the input gradient.
    pub grad_x: Option<Tensor<T>>,
    pub grad_weights: Option<Tensor<T>>,
    pub grad_bias: Tensor<T>,
}

/// Backward pass computing only what the caller needs: weight gradients when
/// `want_weights`, and the first `input_rows` rows of the input gradient.
pub(crate) fn conv1d_backward_parts<T: Scalar>(
    x: &Tensor<T>,
    p: &Conv1DParams<T>,
    grad_out: &Tensor<T>,
    want_weights: bool,
    input_rows: usize,
) -> Result<ConvBackwardParts<T>, KernelError> {
    let (len, channels, out_len) = check_input(x, p, "conv1d_backward")?;
    let (f, s) = (p.filters(), p.width());
    if grad_out.shape() != [out_len, f] {
        return Err(KernelError::Shape {
            op: "conv1d_backward",
            detail: format!("grad_out shape {:?}, expected [{out_len}, {f}]", grad_out.shape()),
        });
    }
    let input_rows = input_rows.min(len);
    let g = grad_out.data();

    let mut grad_bias = vec![T::zero(); f];
    for t in 0..out_len {
        for (fi, gb) in grad_bias.iter_mut().enumerate() {
            *gb += g[t * f + fi];
        }
    }

    let fs = f * s;
    let active = if want_weights { nonzero_prefix_rows(x.data(), len, channels) } else { 0 };
    let rows = active.max(input_rows);
    let mut grad_weights = None;
    let mut grad_x = None;
    if rows > 0 {
        // Scatter grad_out back onto the per-position product layout used by the forward pass.
        let mut d_products = vec![T::zero(); rows * fs];
        for t in 0..out_len {
            for si in 0..s {
                let r = t * p.stride + si;
                if r >= rows {
                    continue;
                }
                let dst = &mut d_products[r * fs..(r + 1) * fs];
                for fi in 0..f {
                    dst[fi * s + si] += g[t * f + fi];
                }
            }
        }
        if want_weights {
            let mut gw = vec![T::zero(); fs * channels];
            matmul(
                MatRef::transposed(&d_products, active, fs),
                MatRef::rows(x.data(), active, channels),
                &mut gw,
                false,
            );
            grad_weights = Some(Tensor::new(vec![f, s, channels], gw)?);
        }
        if input_rows > 0 {
            let mut gx = vec![T::zero(); input_rows * channels];
            matmul(
                MatRef::rows(&d_products, input_rows, fs),
                MatRef::rows(p.weights.data(), fs, channels),
                &mut gx,
                false,
            );
            grad_x = Some(Tensor::new(vec![input_rows, channels], gx)?);
        }
    }
    if want_weights && grad_weights.is_none() {
        grad_weights = Some(Tensor::zeros(vec![f, s, channels]));
    }
    if input_rows > 0 && grad_x.is_none() {
        grad_x = Some(Tensor::zeros(vec![input_rows, channels]));
    }
    let grad_bias = Tensor::new(vec![f], grad_bias)?;
    grad_bias.ensure_finite("conv1d_backward")?;
    Ok(ConvBackwardParts { grad_x, grad_weights, grad_bias })
}
