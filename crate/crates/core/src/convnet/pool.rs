use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Flat input offsets of each pooled maximum, for backward routing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Vec<usize>,
    pub offsets: Vec<usize>,
}

/// Non-overlapping 2D max pooling over the last two axes of a rank-4
/// tensor. Trailing partial windows are dropped; ties keep the first
/// element in row-major window order.
pub fn maxpool2d<T: Scalar>(input: &Tensor<T>, window: [usize; 2]) -> Result<(Tensor<T>, PoolIndices)> {
    if input.rank() != 4 {
        return Err(shape_err!("maxpool2d expects rank 4, got {:?}", input.shape()));
    }
    let [pt, pf] = window;
    let (b, c, t, f) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    if pt == 0 || pf == 0 || pt > t || pf > f {
        return Err(shape_err!("pool window {window:?} does not fit input [{t},{f}]"));
    }
    let (ot, of) = (t / pt, f / pf);
    let x = input.data();
    let mut vals = Vec::with_capacity(b * c * ot * of);
    let mut offsets = Vec::with_capacity(b * c * ot * of);
    for plane in 0..b * c {
        let base = plane * t * f;
        for i in 0..ot {
            for j in 0..of {
                let mut best_off = base + i * pt * f + j * pf;
                let mut best = x[best_off];
                for di in 0..pt {
                    for dj in 0..pf {
                        let off = base + (i * pt + di) * f + j * pf + dj;
                        if x[off] > best {
                            best = x[off];
                            best_off = off;
                        }
                    }
                }
                vals.push(best);
                offsets.push(best_off);
            }
        }
    }
    Ok((
        Tensor::new(&[b, c, ot, of], vals)?,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            offsets,
        },
    ))
}

pub fn maxpool2d_backward<T: Scalar>(grad_out: &Tensor<T>, indices: &PoolIndices) -> Result<Tensor<T>> {
    if grad_out.len() != indices.offsets.len() {
        return Err(shape_err!(
            "pool gradient has {} entries, forward produced {}",
            grad_out.len(),
            indices.offsets.len()
        ));
    }
    let mut gx = Tensor::zeros(&indices.input_shape)?;
    let d = gx.data_mut();
    for (&off, &g) in indices.offsets.iter().zip(grad_out.data()) {
        d[off] += g;
    }
    Ok(gx)
}
