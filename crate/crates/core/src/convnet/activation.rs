use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != input.shape() {
        return Err(shape_err!("relu grad {:?} vs input {:?}", grad_out.shape(), input.shape()));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape(), data)
}

/// Row-wise softmax of a `[batch, classes]` tensor.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 2 {
        return Err(shape_err!("softmax expects [batch, classes], got {:?}", logits.shape()));
    }
    let c = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Ok(out)
}

fn check_labels<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<usize> {
    if probs.rank() != 2 || probs.shape()[0] != labels.len() {
        return Err(shape_err!(
            "probabilities {:?} vs {} labels",
            probs.shape(),
            labels.len()
        ));
    }
    let c = probs.shape()[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Data(format!("label {bad} out of range for {c} classes")));
    }
    Ok(c)
}

/// Mean over the batch of `−ln p[true class]`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let c = check_labels(probs, labels)?;
    let tiny = T::min_positive_value();
    let total: T = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs.data()[i * c + l].max(tiny).ln())
        .sum();
    Ok(total / T::of(labels.len() as f64))
}

/// Gradient of `cross_entropy(softmax(z))` with respect to the logits `z`:
/// `(p − onehot) / batch`.
pub fn softmax_cross_entropy_grad<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    let c = check_labels(probs, labels)?;
    let n = T::of(labels.len() as f64);
    let mut g = probs.clone();
    for (row, &l) in g.data_mut().chunks_mut(c).zip(labels) {
        row[l] -= T::one();
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(g)
}
