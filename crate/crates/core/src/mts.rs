//! Multi-time-scale convolution.
//!
//! One canonical kernel bank is evaluated at several time scales. Branch `s`
//! convolves the input with the canonical kernels linearly resampled along
//! time to `max(1, round(k_t·s))` taps, multiplies the response by the tap
//! ratio `k_t / k_t(s)` so that a pattern stretched by `s` is matched with the
//! same amplitude as the original pattern by the original kernel, and
//! resamples the resulting map back to the time length of the scale-1 map.
//! The branch maps are merged by an element-wise max over scales, then the
//! shared bias is added. Frequency is never rescaled.
//!
//! Branch kernel banks are trained as separate copies and reconciled after
//! every optimizer step by [`MtsConv2d::average_weights`].

use rand::Rng;

use crate::convnet::{add_channel_bias, channel_bias_grad, correlate_backward, correlate_valid, Conv2d};
use crate::error::{shape_err, Error, Result};
use crate::interp::{resample_time, resample_to_length, Interpolator, ScaleSet};
use crate::scalar::Scalar;
use crate::tensor::{IndexTensor, Tensor};

const TIME_AXIS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct MtsConv2d<T: Scalar = f64> {
    canonical: Conv2d<T>,
    scales: ScaleSet,
    branch_kernels: Vec<Tensor<T>>,
    usage_counts: Vec<u64>,
}

/// State kept from [`MtsConv2d::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MtsCache<T: Scalar = f64> {
    input: Tensor<T>,
    /// Winning branch per output position, `[batch, out_ch, time, freq]`.
    argmax: IndexTensor,
    /// Pre-resampling time length of each branch map.
    branch_lens: Vec<usize>,
}

impl<T: Scalar> MtsCache<T> {
    pub fn argmax(&self) -> &IndexTensor {
        &self.argmax
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtsGrads<T: Scalar = f64> {
    pub input: Tensor<T>,
    pub branch_kernels: Vec<Tensor<T>>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> MtsConv2d<T> {
    /// Draws the canonical bank exactly as [`Conv2d::new`] would with the
    /// same generator.
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 2],
        scales: ScaleSet,
        rng: &mut R,
    ) -> Result<Self> {
        Self::from_conv(Conv2d::new(in_ch, out_ch, kernel, rng)?, scales)
    }

    pub fn from_conv(canonical: Conv2d<T>, scales: ScaleSet) -> Result<Self> {
        let n = scales.len();
        let mut layer = MtsConv2d {
            canonical,
            scales,
            branch_kernels: Vec::with_capacity(n),
            usage_counts: vec![0; n],
        };
        layer.derive_branch_kernels()?;
        Ok(layer)
    }

    pub fn canonical(&self) -> &Conv2d<T> {
        &self.canonical
    }

    pub fn scales(&self) -> &ScaleSet {
        &self.scales
    }

    pub fn branch_kernels(&self) -> &[Tensor<T>] {
        &self.branch_kernels
    }

    /// Direct access for the optimizer. Call [`Self::average_weights`] after
    /// modifying the banks.
    pub fn branch_kernels_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.branch_kernels
    }

    /// Optimizer slots in a fixed order: every branch bank, then the bias.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut slots: Vec<&mut Tensor<T>> = self.branch_kernels.iter_mut().collect();
        slots.push(&mut self.canonical.bias);
        slots
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.canonical.bias
    }

    pub fn usage_counts(&self) -> &[u64] {
        &self.usage_counts
    }

    pub fn reset_usage(&mut self) {
        self.usage_counts.iter_mut().for_each(|c| *c = 0);
    }

    /// Trainable parameters: the canonical bank plus bias, the same as the
    /// plain convolution this layer replaces.
    pub fn param_count(&self) -> usize {
        self.canonical.param_count()
    }

    /// Time extent of the longest branch kernel.
    pub fn max_kernel_time(&self) -> usize {
        self.branch_kernels.iter().map(|k| k.shape()[TIME_AXIS]).max().unwrap()
    }

    /// Re-materialises every branch bank from the canonical bank.
    pub fn derive_branch_kernels(&mut self) -> Result<()> {
        let canonical = &self.canonical.kernels;
        self.branch_kernels = self
            .scales
            .factors()
            .iter()
            .map(|&s| resample_time(canonical, TIME_AXIS, s))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Replaces the canonical bank by the mean of all branch banks resampled
    /// back to the canonical time extent, then re-derives the branches.
    pub fn average_weights(&mut self) -> Result<()> {
        let kt = self.canonical.kernels.shape()[TIME_AXIS];
        let mut acc = resample_to_length(&self.branch_kernels[0], TIME_AXIS, kt)?;
        for bank in &self.branch_kernels[1..] {
            acc.add_assign(&resample_to_length(bank, TIME_AXIS, kt)?)?;
        }
        let n = self.branch_kernels.len();
        if n > 1 {
            let n = T::of(n as f64);
            acc = acc.map(|v| v / n);
        }
        self.canonical.kernels = acc;
        self.derive_branch_kernels()
    }

    /// Per-branch fraction of pooled positions won since the last reset.
    pub fn branch_usage(&self) -> Result<Vec<f64>> {
        let total: u64 = self.usage_counts.iter().sum();
        if total == 0 {
            return Err(Error::State("no pooled positions observed yet".into()));
        }
        Ok(self.usage_counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    fn gain(&self, branch: usize) -> T {
        let kt = self.canonical.kernels.shape()[TIME_AXIS];
        T::of(kt as f64) / T::of(self.branch_kernels[branch].shape()[TIME_AXIS] as f64)
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<Vec<usize>> {
        if input_shape.len() != 4 {
            return Err(shape_err!("MTS input must be rank 4, got {input_shape:?}"));
        }
        let [kt, kf] = self.canonical.kernel_size();
        let longest = self.max_kernel_time();
        if input_shape[2] < longest || input_shape[3] < kf {
            return Err(shape_err!(
                "input [{},{}] shorter than longest branch kernel [{longest},{kf}]",
                input_shape[2],
                input_shape[3]
            ));
        }
        Ok(vec![
            input_shape[0],
            self.canonical.out_channels(),
            input_shape[2] - kt + 1,
            input_shape[3] - kf + 1,
        ])
    }

    /// Cross-scale max of the branch responses plus bias. Updates the usage
    /// counters.
    pub fn forward(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, MtsCache<T>)> {
        let out_shape = self.output_shape(input.shape())?;
        let ref_len = out_shape[2];
        let mut branch_lens = Vec::with_capacity(self.branch_kernels.len());
        let mut best: Option<Tensor<T>> = None;
        let mut argmax = vec![0usize; out_shape.iter().product()];
        for (b, bank) in self.branch_kernels.iter().enumerate() {
            let mut map = correlate_valid(input, bank)?;
            branch_lens.push(map.shape()[TIME_AXIS]);
            let gain = self.gain(b);
            if gain != T::one() {
                map = map.scale(gain);
            }
            let map = resample_to_length(&map, TIME_AXIS, ref_len)?;
            match best.as_mut() {
                None => best = Some(map),
                Some(cur) => {
                    for ((c, &v), a) in cur.data_mut().iter_mut().zip(map.data()).zip(argmax.iter_mut()) {
                        if v > *c {
                            *c = v;
                            *a = b;
                        }
                    }
                }
            }
        }
        let mut out = best.expect("scale set is never empty");
        for &a in &argmax {
            self.usage_counts[a] += 1;
        }
        add_channel_bias(&mut out, &self.canonical.bias)?;
        let argmax = IndexTensor::new(&out_shape, argmax)?;
        Ok((
            out,
            MtsCache {
                input: input.clone(),
                argmax,
                branch_lens,
            },
        ))
    }

    /// Routes each output gradient to its winning branch, through the
    /// adjoint of the map resampling and that branch's convolution.
    pub fn backward(&self, grad_out: &Tensor<T>, cache: &MtsCache<T>) -> Result<MtsGrads<T>> {
        if grad_out.shape() != cache.argmax.shape() {
            return Err(shape_err!(
                "MTS grad {:?} does not match forward output {:?}",
                grad_out.shape(),
                cache.argmax.shape()
            ));
        }
        if cache.branch_lens.len() != self.branch_kernels.len() {
            return Err(Error::State("forward cache belongs to a different layer".into()));
        }
        let mut grad_input: Option<Tensor<T>> = None;
        let mut kernel_grads = Vec::with_capacity(self.branch_kernels.len());
        for (b, bank) in self.branch_kernels.iter().enumerate() {
            let routed: Vec<T> = grad_out
                .data()
                .iter()
                .zip(cache.argmax.data())
                .map(|(&g, &a)| if a == b { g } else { T::zero() })
                .collect();
            let routed = Tensor::new(grad_out.shape(), routed)?;
            let mut g = Interpolator::new(cache.branch_lens[b], grad_out.shape()[TIME_AXIS])?
                .apply_adjoint(&routed, TIME_AXIS)?;
            let gain = self.gain(b);
            if gain != T::one() {
                g = g.scale(gain);
            }
            let (gx, gk) = correlate_backward(&g, &cache.input, bank)?;
            match grad_input.as_mut() {
                None => grad_input = Some(gx),
                Some(acc) => acc.add_assign(&gx)?,
            }
            kernel_grads.push(gk);
        }
        Ok(MtsGrads {
            input: grad_input.expect("scale set is never empty"),
            branch_kernels: kernel_grads,
            bias: channel_bias_grad(grad_out)?,
        })
    }
}
