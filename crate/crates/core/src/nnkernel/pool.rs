use super::tensor::{Scalar, Tensor};
use super::KernelError;

/// Output length of a max-pool window sweep, or `None` if the input is too short.
pub fn pool_output_len(len: usize, size: usize, stride: usize) -> Option<usize> {
    if size == 0 || stride == 0 || len < size {
        None
    } else {
        Some((len - size) / stride + 1)
    }
}

/// Max over each window of each channel. The second value holds, per output
/// element, the flat input index of the first maximal entry in its window.
pub fn maxpool1d<T: Scalar>(x: &Tensor<T>, size: usize, stride: usize) -> Result<(Tensor<T>, Vec<usize>), KernelError> {
    let (len, channels) = x.dims2("maxpool1d")?;
    let out_len = pool_output_len(len, size, stride).ok_or_else(|| KernelError::Shape {
        op: "maxpool1d",
        detail: format!("input length {len} is shorter than pool size {size}"),
    })?;
    let data = x.data();
    let mut out = Vec::with_capacity(out_len * channels);
    let mut argmax = Vec::with_capacity(out_len * channels);
    for t in 0..out_len {
        let start = t * stride;
        for c in 0..channels {
            let mut best_idx = start * channels + c;
            let mut best = data[best_idx];
            for k in 1..size {
                let idx = (start + k) * channels + c;
                if data[idx] > best {
                    best = data[idx];
                    best_idx = idx;
                }
            }
            out.push(best);
            argmax.push(best_idx);
        }
    }
    Ok((Tensor::new(vec![out_len, channels], out)?, argmax))
}

/// Routes each output gradient to the input position recorded in `argmax`.
pub fn maxpool1d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_shape: [usize; 2],
) -> Result<Tensor<T>, KernelError> {
    if grad_out.len() != argmax.len() {
        return Err(KernelError::Shape {
            op: "maxpool1d_backward",
            detail: format!("{} gradients for {} pooled positions", grad_out.len(), argmax.len()),
        });
    }
    let mut grad = Tensor::zeros(input_shape.to_vec());
    let buf = grad.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        if idx >= buf.len() {
            return Err(KernelError::Shape {
                op: "maxpool1d_backward",
                detail: format!("argmax index {idx} outside input of shape {input_shape:?}"),
            });
        }
        buf[idx] += g;
    }
    Ok(grad)
}
