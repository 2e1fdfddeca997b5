use rand::Rng;

use super::init::glorot_uniform;
use super::tensor::{matmul, MatRef, Scalar, Tensor};
use super::KernelError;

/// Fully connected layer: weights `[in, out]`, bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_weights: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

impl<T: Scalar> DenseParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self, KernelError> {
        let (_, out) = weights.dims2("dense")?;
        if bias.shape() != [out] {
            return Err(KernelError::Shape {
                op: "dense",
                detail: format!("bias shape {:?} does not match {out} outputs", bias.shape()),
            });
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weights: Tensor::zeros(vec![inputs, outputs]), bias: Tensor::zeros(vec![outputs]) }
    }

    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weights: glorot_uniform(vec![inputs, outputs], inputs, outputs, rng),
            bias: Tensor::zeros(vec![outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

fn check<T: Scalar>(x: &Tensor<T>, p: &DenseParams<T>, op: &'static str) -> Result<(usize, usize), KernelError> {
    let (batch, inputs) = x.dims2(op)?;
    if inputs != p.inputs() {
        return Err(KernelError::Shape { op, detail: format!("input width {inputs}, layer expects {}", p.inputs()) });
    }
    Ok((batch, inputs))
}

/// `[batch, in] -> [batch, out]`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, p: &DenseParams<T>) -> Result<Tensor<T>, KernelError> {
    let (batch, inputs) = check(x, p, "dense_forward")?;
    let outputs = p.outputs();
    let mut out: Vec<T> = p.bias.data().iter().copied().cycle().take(batch * outputs).collect();
    matmul(MatRef::rows(x.data(), batch, inputs), MatRef::rows(p.weights.data(), inputs, outputs), &mut out, true);
    let out = Tensor::new(vec![batch, outputs], out)?;
    out.ensure_finite("dense_forward")?;
    Ok(out)
}

pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    p: &DenseParams<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>, KernelError> {
    let (batch, inputs) = check(x, p, "dense_backward")?;
    let outputs = p.outputs();
    if grad_out.shape() != [batch, outputs] {
        return Err(KernelError::Shape {
            op: "dense_backward",
            detail: format!("grad_out shape {:?}, expected [{batch}, {outputs}]", grad_out.shape()),
        });
    }
    let g = grad_out.data();
    let mut gw = vec![T::zero(); inputs * outputs];
    matmul(MatRef::transposed(x.data(), batch, inputs), MatRef::rows(g, batch, outputs), &mut gw, false);
    let mut gx = vec![T::zero(); batch * inputs];
    matmul(MatRef::rows(g, batch, outputs), MatRef::transposed(p.weights.data(), inputs, outputs), &mut gx, false);
    let mut gb = vec![T::zero(); outputs];
    for row in g.chunks(outputs) {
        gb.iter_mut().zip(row).for_each(|(b, v)| *b += *v);
    }
    let grads = DenseGrads {
        grad_x: Tensor::new(vec![batch, inputs], gx)?,
        grad_weights: Tensor::new(vec![inputs, outputs], gw)?,
        grad_bias: Tensor::new(vec![outputs], gb)?,
    };
    grads.grad_weights.ensure_finite("dense_backward")?;
    Ok(grads)
}
