use super::tensor::{ensure_finite, Scalar, Tensor};
use super::KernelError;

/// Probabilities are clamped into `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|v| if *v > T::zero() { *v } else { T::zero() }).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Passes `grad` through where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>, KernelError> {
    if x.shape() != grad.shape() {
        return Err(KernelError::Shape {
            op: "relu_backward",
            detail: format!("input {:?} vs grad {:?}", x.shape(), grad.shape()),
        });
    }
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(x, g)| if *x > T::zero() { *g } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, KernelError> {
    x.ensure_finite("sigmoid")?;
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| sigmoid_scalar(*v)).collect())
}

/// Mean binary cross-entropy over the batch and its gradient with respect to `pred`.
pub fn bce_loss<T: Scalar>(pred: &[T], labels: &[T]) -> Result<(T, Vec<T>), KernelError> {
    if pred.len() != labels.len() || pred.is_empty() {
        return Err(KernelError::Shape {
            op: "bce_loss",
            detail: format!("{} predictions for {} labels", pred.len(), labels.len()),
        });
    }
    ensure_finite(pred, "bce_loss")?;
    let lo = T::from_f64(BCE_EPS);
    let hi = T::one() - lo;
    let n = T::from_f64(pred.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(labels) {
        let clamped = p.max(lo).min(hi);
        loss -= y * clamped.ln() + (T::one() - y) * (T::one() - clamped).ln();
        let g = if p < lo || p > hi { T::zero() } else { (-y / clamped + (T::one() - y) / (T::one() - clamped)) / n };
        grad.push(g);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(KernelError::NonFinite { op: "bce_loss" });
    }
    Ok((loss, grad))
}
