use rand::Rng;

use super::glorot_uniform;
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer `y = x·W + b` with `W: [inputs, outputs]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Scalar = f64> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T: Scalar = f64> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(shape_err!("dense layer {inputs}x{outputs} is empty"));
        }
        Ok(Dense {
            weights: glorot_uniform(&[inputs, outputs], inputs, outputs, rng),
            bias: Tensor::zeros(&[outputs])?,
        })
    }

    pub fn from_parts(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[1]] {
            return Err(shape_err!(
                "weights {:?} and bias {:?} do not form a dense layer",
                weights.shape(),
                bias.shape()
            ));
        }
        Ok(Dense { weights, bias })
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

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = x.matmul(&self.weights)?;
        let n = self.outputs();
        let b = self.bias.data();
        for row in y.data_mut().chunks_mut(n) {
            row.iter_mut().zip(b).for_each(|(v, &bv)| *v += bv);
        }
        Ok(y)
    }

    pub fn backward(&self, grad_out: &Tensor<T>, x: &Tensor<T>) -> Result<DenseGrads<T>> {
        if grad_out.rank() != 2 || grad_out.shape()[1] != self.outputs() || grad_out.shape()[0] != x.shape()[0] {
            return Err(shape_err!(
                "dense grad {:?} does not match input {:?} and {} outputs",
                grad_out.shape(),
                x.shape(),
                self.outputs()
            ));
        }
        let weights = x.matmul_tn(grad_out)?;
        let input = grad_out.matmul_nt(&self.weights)?;
        let n = self.outputs();
        let mut bias = vec![T::zero(); n];
        for row in grad_out.data().chunks(n) {
            bias.iter_mut().zip(row).for_each(|(b, &g)| *b += g);
        }
        Ok(DenseGrads {
            input,
            weights,
            bias: Tensor::new(&[n], bias)?,
        })
    }
}
