use rand::Rng;

use super::glorot_uniform;
use crate::error::{shape_err, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2D convolution layer over `[batch, channel, time, frequency]` inputs.
/// Kernels are `[out_ch, in_ch, k_t, k_f]`; stride 1, no padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T: Scalar = f64> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T: Scalar = f64> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, kernel: [usize; 2], rng: &mut R) -> Result<Self> {
        let [kt, kf] = kernel;
        let shape = [out_ch, in_ch, kt, kf];
        if shape.contains(&0) {
            return Err(shape_err!("conv2d dimensions must be positive, got {shape:?}"));
        }
        let area = kt * kf;
        Ok(Conv2d {
            kernels: glorot_uniform(&shape, in_ch * area, out_ch * area, rng),
            bias: Tensor::zeros(&[out_ch])?,
        })
    }

    pub fn from_parts(kernels: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if kernels.rank() != 4 || bias.shape() != [kernels.shape()[0]] {
            return Err(shape_err!(
                "kernels {:?} and bias {:?} do not form a conv layer",
                kernels.shape(),
                bias.shape()
            ));
        }
        Ok(Conv2d { kernels, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    /// `[k_t, k_f]`
    pub fn kernel_size(&self) -> [usize; 2] {
        [self.kernels.shape()[2], self.kernels.shape()[3]]
    }

    pub fn param_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(input, self)
    }

    pub fn backward(&self, grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<ConvGrads<T>> {
        conv2d_backward(grad_out, input, self)
    }
}

fn check_operands<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>) -> Result<[usize; 8]> {
    if input.rank() != 4 || kernels.rank() != 4 {
        return Err(shape_err!(
            "conv2d expects rank-4 input and kernels, got {:?} and {:?}",
            input.shape(),
            kernels.shape()
        ));
    }
    let (b, c, t, f) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let (o, c2, kt, kf) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2], kernels.shape()[3]);
    if c != c2 {
        return Err(shape_err!("input has {c} channels, kernels expect {c2}"));
    }
    if kt > t || kf > f {
        return Err(shape_err!("kernel [{kt},{kf}] larger than input [{t},{f}]"));
    }
    Ok([b, c, t, f, o, kt, kf, 0])
}

/// Valid cross-correlation without bias.
pub fn correlate_valid<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, t, f, o, kt, kf, _] = check_operands(input, kernels)?;
    let (ot, of) = (t - kt + 1, f - kf + 1);
    let x = input.data();
    let k = kernels.data();
    let mut out = vec![T::zero(); b * o * ot * of];
    for bi in 0..b {
        for oi in 0..o {
            let obase = (bi * o + oi) * ot * of;
            let plane = &mut out[obase..obase + ot * of];
            for ci in 0..c {
                let xbase = (bi * c + ci) * t * f;
                let kbase = (oi * c + ci) * kt * kf;
                for i in 0..kt {
                    for j in 0..kf {
                        let w = k[kbase + i * kf + j];
                        for ti in 0..ot {
                            let xrow = &x[xbase + (ti + i) * f + j..xbase + (ti + i) * f + j + of];
                            let orow = &mut plane[ti * of..(ti + 1) * of];
                            for (ov, &xv) in orow.iter_mut().zip(xrow) {
                                *ov += w * xv;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[b, o, ot, of], out)
}

/// Adds `bias[o]` to every entry of output channel `o` in place.
pub fn add_channel_bias<T: Scalar>(out: &mut Tensor<T>, bias: &Tensor<T>) -> Result<()> {
    let o = out.shape()[1];
    if bias.shape() != [o] {
        return Err(shape_err!("bias {:?} does not match {o} channels", bias.shape()));
    }
    let plane: usize = out.shape()[2..].iter().product();
    let bias = bias.data();
    for (n, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let bv = bias[n % o];
        chunk.iter_mut().for_each(|v| *v += bv);
    }
    Ok(())
}

pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, layer: &Conv2d<T>) -> Result<Tensor<T>> {
    let mut out = correlate_valid(input, &layer.kernels)?;
    add_channel_bias(&mut out, &layer.bias)?;
    Ok(out)
}

/// Gradients of [`conv2d_forward`] with respect to input, kernels and bias.
pub fn conv2d_backward<T: Scalar>(grad_out: &Tensor<T>, input: &Tensor<T>, layer: &Conv2d<T>) -> Result<ConvGrads<T>> {
    let (input_grad, kernel_grad) = correlate_backward(grad_out, input, &layer.kernels)?;
    Ok(ConvGrads {
        input: input_grad,
        kernels: kernel_grad,
        bias: channel_bias_grad(grad_out)?,
    })
}

/// Sum of a `[batch, channel, ...]` gradient over everything but the channel axis.
pub fn channel_bias_grad<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let o = grad_out.shape()[1];
    let plane: usize = grad_out.shape()[2..].iter().product();
    let mut bias = vec![T::zero(); o];
    for (n, chunk) in grad_out.data().chunks(plane).enumerate() {
        bias[n % o] += chunk.iter().copied().sum();
    }
    Tensor::new(&[o], bias)
}

/// Gradients of [`correlate_valid`] with respect to input and kernels.
pub fn correlate_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    kernels: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let [b, c, t, f, o, kt, kf, _] = check_operands(input, kernels)?;
    let (ot, of) = (t - kt + 1, f - kf + 1);
    if grad_out.shape() != [b, o, ot, of] {
        return Err(shape_err!(
            "grad_out {:?} does not match forward output [{b},{o},{ot},{of}]",
            grad_out.shape()
        ));
    }
    let x = input.data();
    let k = kernels.data();
    let g = grad_out.data();
    let mut gx = vec![T::zero(); x.len()];
    let mut gk = vec![T::zero(); k.len()];
    for bi in 0..b {
        for oi in 0..o {
            let gbase = (bi * o + oi) * ot * of;
            let gplane = &g[gbase..gbase + ot * of];
            for ci in 0..c {
                let xbase = (bi * c + ci) * t * f;
                let kbase = (oi * c + ci) * kt * kf;
                for i in 0..kt {
                    for j in 0..kf {
                        let w = k[kbase + i * kf + j];
                        let mut acc = T::zero();
                        for ti in 0..ot {
                            let off = xbase + (ti + i) * f + j;
                            let grow = &gplane[ti * of..(ti + 1) * of];
                            let xrow = &x[off..off + of];
                            for (&gv, &xv) in grow.iter().zip(xrow) {
                                acc += gv * xv;
                            }
                            let gxrow = &mut gx[off..off + of];
                            for (d, &gv) in gxrow.iter_mut().zip(grow) {
                                *d += gv * w;
                            }
                        }
                        gk[kbase + i * kf + j] += acc;
                    }
                }
            }
        }
    }
    Ok((Tensor::new(input.shape(), gx)?, Tensor::new(kernels.shape(), gk)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradient, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Six-deep nested loop reference.
    fn naive(x: &Tensor, k: &Tensor, bias: &Tensor) -> Tensor {
        let [b, c, t, f] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let [o, _, kt, kf] = [k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]];
        Tensor::from_fn(&[b, o, t - kt + 1, f - kf + 1], |ix| {
            let mut s = bias.data()[ix[1]];
            for ci in 0..c {
                for i in 0..kt {
                    for j in 0..kf {
                        s += x.get(&[ix[0], ci, ix[2] + i, ix[3] + j]).unwrap() * k.get(&[ix[1], ci, i, j]).unwrap();
                    }
                }
            }
            s
        })
        .unwrap()
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor(&[2, 1, 4, 3], &mut rng);
        let layer = Conv2d::from_parts(Tensor::filled(&[1, 1, 1, 1], 1.0).unwrap(), Tensor::zeros(&[1]).unwrap()).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn ones_kernel_by_hand() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let layer = Conv2d::from_parts(Tensor::filled(&[1, 1, 2, 2], 1.0).unwrap(), Tensor::zeros(&[1]).unwrap()).unwrap();
        assert_eq!(layer.forward(&x).unwrap().data(), &[10.0]);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&[1, 2, 6, 5], &mut rng);
        let layer = Conv2d::from_parts(random_tensor(&[3, 2, 3, 2], &mut rng), random_tensor(&[3], &mut rng)).unwrap();
        let got = layer.forward(&x).unwrap();
        let want = naive(&x, &layer.kernels, &layer.bias);
        assert_eq!(got.shape(), &[1, 3, 4, 4]);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_larger_than_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = Conv2d::<f64>::new(1, 1, [5, 2], &mut rng).unwrap();
        let x = Tensor::zeros(&[1, 1, 4, 4]).unwrap();
        assert!(matches!(layer.forward(&x), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn zero_grad_and_bias_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_tensor(&[2, 2, 5, 4], &mut rng);
        let layer = Conv2d::<f64>::new(2, 3, [2, 2], &mut rng).unwrap();
        let y = layer.forward(&x).unwrap();
        let g = layer.backward(&y.zeros_like(), &x).unwrap();
        assert_eq!(g.input.max_abs(), 0.0);
        assert_eq!(g.kernels.max_abs(), 0.0);
        assert_eq!(g.bias.max_abs(), 0.0);
        let go = random_tensor(y.shape(), &mut rng);
        let g = layer.backward(&go, &x).unwrap();
        for oc in 0..3 {
            let mut s = 0.0;
            for b in 0..2 {
                for t in 0..4 {
                    for f in 0..3 {
                        s += go.get(&[b, oc, t, f]).unwrap();
                    }
                }
            }
            assert!((g.bias.data()[oc] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            use rand::Rng;
            let (b, c, o) = (rng.gen_range(1..3), rng.gen_range(1..3), rng.gen_range(1..4));
            let (kt, kf) = (rng.gen_range(1..4), rng.gen_range(1..3));
            let (t, f) = (kt + rng.gen_range(0..4), kf + rng.gen_range(0..3));
            let x = random_tensor(&[b, c, t, f], &mut rng);
            let layer = Conv2d::from_parts(random_tensor(&[o, c, kt, kf], &mut rng), random_tensor(&[o], &mut rng)).unwrap();
            let w = random_tensor(&[b, o, t - kt + 1, f - kf + 1], &mut rng);
            let g = layer.backward(&w, &x).unwrap();
            let loss_x = |xx: &Tensor| conv2d_forward(xx, &layer).unwrap().dot(&w).unwrap();
            check_gradient(loss_x, &x, &g.input, 1e-6).unwrap();
            let loss_k = |kk: &Tensor| {
                let l = Conv2d::from_parts(kk.clone(), layer.bias.clone()).unwrap();
                conv2d_forward(&x, &l).unwrap().dot(&w).unwrap()
            };
            check_gradient(loss_k, &layer.kernels, &g.kernels, 1e-6).unwrap();
            let loss_b = |bb: &Tensor| {
                let l = Conv2d::from_parts(layer.kernels.clone(), bb.clone()).unwrap();
                conv2d_forward(&x, &l).unwrap().dot(&w).unwrap()
            };
            check_gradient(loss_b, &layer.bias, &g.bias, 1e-6).unwrap();
        }
    }

    #[test]
    fn linear_in_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor(&[1, 2, 6, 4], &mut rng);
        let y = random_tensor(&[1, 2, 6, 4], &mut rng);
        let layer = Conv2d::from_parts(random_tensor(&[2, 2, 3, 2], &mut rng), Tensor::zeros(&[2]).unwrap()).unwrap();
        let (a, b) = (0.7, -1.3);
        let lhs = layer.forward(&x.scale(a).add(&y.scale(b)).unwrap()).unwrap();
        let rhs = layer.forward(&x).unwrap().scale(a).add(&layer.forward(&y).unwrap().scale(b)).unwrap();
        for (p, q) in lhs.data().iter().zip(rhs.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_instantiation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = Conv2d::<f32>::new(1, 2, [2, 2], &mut rng).unwrap();
        let x = Tensor::<f32>::filled(&[1, 1, 3, 3], 1.0).unwrap();
        assert_eq!(layer.forward(&x).unwrap().shape(), &[1, 2, 2, 2]);
    }
}
