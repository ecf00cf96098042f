use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::arch::{build_model, ArchId, ArchitectureSpec};
use crate::convnet::{
    conv2d_backward, conv2d_forward, maxpool2d, maxpool2d_backward, relu, relu_backward, AdamState, Conv2d, Dense,
    PoolIndices,
};
use crate::error::{shape_err, Error, Result};
use crate::interp::ScaleSet;
use crate::mts::{MtsCache, MtsConv2d};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::CODE_VERSION;

const CHECKPOINT_MAGIC: &str = "mtsconv-checkpoint 1";

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T: Scalar = f64> {
    Conv(Conv2d<T>),
    Mts(MtsConv2d<T>),
    Relu,
    MaxPool([usize; 2]),
    Flatten,
    Dense(Dense<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Mts(_) => "mts-conv",
            Layer::Relu => "relu",
            Layer::MaxPool(_) => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.param_count(),
            Layer::Mts(m) => m.param_count(),
            Layer::Dense(d) => d.param_count(),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone)]
enum LayerCache<T: Scalar> {
    Input(Tensor<T>),
    Mts(MtsCache<T>),
    Pool(PoolIndices),
    Shape(Vec<usize>),
}

/// Per-layer state recorded by [`Network::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Scalar = f64> {
    layers: Vec<LayerCache<T>>,
}

/// A sequential classifier over `[batch, 1, time, freq]` inputs producing
/// logits `[batch, classes]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar = f64> {
    spec: ArchitectureSpec,
    input: [usize; 2],
    classes: usize,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    pub(crate) fn from_layers(
        spec: ArchitectureSpec,
        input: [usize; 2],
        classes: usize,
        layers: Vec<Layer<T>>,
    ) -> Result<Self> {
        if layers.len() != spec.layers.len() {
            return Err(Error::State(format!(
                "{} layers built for a {}-layer spec",
                layers.len(),
                spec.layers.len()
            )));
        }
        Ok(Network {
            spec,
            input,
            classes,
            layers,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    /// `[time, freq]`
    pub fn input_shape(&self) -> [usize; 2] {
        self.input
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn mts_layers(&self) -> impl Iterator<Item = &MtsConv2d<T>> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Mts(m) => Some(m),
            _ => None,
        })
    }

    pub fn reset_usage(&mut self) {
        for l in &mut self.layers {
            if let Layer::Mts(m) = l {
                m.reset_usage();
            }
        }
    }

    /// Branch usage fractions of every MTS layer, in layer order.
    pub fn branch_usage(&self) -> Result<Vec<Vec<f64>>> {
        self.mts_layers().map(MtsConv2d::branch_usage).collect()
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let [t, f] = self.input;
        if x.rank() != 4 || x.shape()[1] != 1 || x.shape()[2] != t || x.shape()[3] != f {
            return Err(shape_err!("network expects [batch, 1, {t}, {f}], got {:?}", x.shape()));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &mut self.layers {
            let (next, cache) = match layer {
                Layer::Conv(c) => (conv2d_forward(&h, c)?, LayerCache::Input(h)),
                Layer::Mts(m) => {
                    let (y, cache) = m.forward(&h)?;
                    (y, LayerCache::Mts(cache))
                }
                Layer::Relu => (relu(&h), LayerCache::Input(h)),
                Layer::MaxPool(w) => {
                    let (y, idx) = maxpool2d(&h, *w)?;
                    (y, LayerCache::Pool(idx))
                }
                Layer::Flatten => {
                    let shape = h.shape().to_vec();
                    let rest: usize = shape[1..].iter().product();
                    (h.reshape(&[shape[0], rest])?, LayerCache::Shape(shape))
                }
                Layer::Dense(d) => (d.forward(&h)?, LayerCache::Input(h)),
            };
            caches.push(cache);
            h = next;
        }
        Ok((h, ForwardCache { layers: caches }))
    }

    /// Parameter gradients in [`Self::trainable_mut`] slot order.
    pub fn backward(&self, grad_logits: &Tensor<T>, cache: &ForwardCache<T>) -> Result<Vec<Tensor<T>>> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::State("forward cache belongs to a different network".into()));
        }
        let mut per_layer: Vec<Vec<Tensor<T>>> = vec![Vec::new(); self.layers.len()];
        let mut g = grad_logits.clone();
        for (i, (layer, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            g = match (layer, c) {
                (Layer::Conv(conv), LayerCache::Input(x)) => {
                    let grads = conv2d_backward(&g, x, conv)?;
                    per_layer[i] = vec![grads.kernels, grads.bias];
                    grads.input
                }
                (Layer::Mts(m), LayerCache::Mts(mc)) => {
                    let grads = m.backward(&g, mc)?;
                    per_layer[i] = grads.branch_kernels;
                    per_layer[i].push(grads.bias);
                    grads.input
                }
                (Layer::Relu, LayerCache::Input(x)) => relu_backward(&g, x)?,
                (Layer::MaxPool(_), LayerCache::Pool(idx)) => maxpool2d_backward(&g, idx)?,
                (Layer::Flatten, LayerCache::Shape(shape)) => g.reshape(shape)?,
                (Layer::Dense(d), LayerCache::Input(x)) => {
                    let grads = d.backward(&g, x)?;
                    per_layer[i] = vec![grads.weights, grads.bias];
                    grads.input
                }
                _ => return Err(Error::State(format!("cache of layer {i} does not match {}", layer.name()))),
            };
        }
        Ok(per_layer.into_iter().flatten().collect())
    }

    /// Optimizer slots: conv kernels and bias, every MTS branch bank and the
    /// bias, dense weights and bias, in layer order.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut slots = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => slots.extend([&mut c.kernels, &mut c.bias]),
                Layer::Mts(m) => slots.extend(m.trainable_mut()),
                Layer::Dense(d) => slots.extend([&mut d.weights, &mut d.bias]),
                _ => {}
            }
        }
        slots
    }

    /// One Adam step followed by weight averaging in every MTS layer.
    pub fn apply_gradients(&mut self, adam: &mut AdamState<T>, grads: &[Tensor<T>]) -> Result<()> {
        let slots = self.trainable_mut();
        if slots.len() != grads.len() {
            return Err(Error::State(format!("{} gradients for {} slots", grads.len(), slots.len())));
        }
        adam.step(slots.into_iter().zip(grads))?;
        for layer in &mut self.layers {
            if let Layer::Mts(m) = layer {
                m.average_weights()?;
            }
        }
        Ok(())
    }

    /// L2 norm of each layer's parameters, for diagnostics.
    pub fn layer_norms(&self) -> Vec<(String, f64)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                let norm = match l {
                    Layer::Conv(c) => (c.kernels.l2_norm().powi(2) + c.bias.l2_norm().powi(2)).sqrt(),
                    Layer::Mts(m) => {
                        let c = m.canonical();
                        (c.kernels.l2_norm().powi(2) + c.bias.l2_norm().powi(2)).sqrt()
                    }
                    Layer::Dense(d) => (d.weights.l2_norm().powi(2) + d.bias.l2_norm().powi(2)).sqrt(),
                    _ => return None,
                };
                Some((format!("{i}:{}", l.name()), norm.as_f64()))
            })
            .collect()
    }

    /// Writes a text header followed by binary tensor dumps. MTS layers store
    /// only their canonical kernels, bias and scale set.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let scales = self.spec.scales.as_ref().map_or("none".to_string(), ScaleSet::to_string);
        let header = format!(
            "{CHECKPOINT_MAGIC}\ncode_version {CODE_VERSION}\narch {}\nscales {scales}\ninput {} {}\nclasses {}\nend\n",
            self.spec.id, self.input[0], self.input[1], self.classes
        );
        let io = |e| Error::io(path, e);
        w.write_all(header.as_bytes()).map_err(io)?;
        for layer in &self.layers {
            let (a, b) = match layer {
                Layer::Conv(c) => (&c.kernels, &c.bias),
                Layer::Mts(m) => (&m.canonical().kernels, &m.canonical().bias),
                Layer::Dense(d) => (&d.weights, &d.bias),
                _ => continue,
            };
            a.write_dump(&mut w).map_err(io)?;
            b.write_dump(&mut w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut fields = std::collections::HashMap::new();
        let mut line = String::new();
        r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if line.trim_end() != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("{} is not a checkpoint", path.display())));
        }
        loop {
            line.clear();
            if r.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
                return Err(Error::Format("checkpoint header is truncated".into()));
            }
            let l = line.trim_end();
            if l == "end" {
                break;
            }
            let (k, v) = l
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("bad checkpoint header line {l:?}")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("checkpoint header lacks {k}")))
        };
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad number {s:?}")));
        let id: ArchId = get("arch")?.parse()?;
        let spec = match get("scales")?.as_str() {
            "none" => ArchitectureSpec::standard(id),
            s => ArchitectureSpec::mts(id, s.parse()?),
        };
        let input_field = get("input")?;
        let dims: Vec<&str> = input_field.split_whitespace().collect();
        if dims.len() != 2 {
            return Err(Error::Format(format!("bad input shape {input_field:?}")));
        }
        let input = [num(dims[0])?, num(dims[1])?];
        let classes = num(&get("classes")?)?;

        let mut net: Network<T> = build_model(&spec, input, classes, &mut rand::rngs::mock::StepRng::new(0, 0))?;
        for layer in &mut net.layers {
            let mut pair = || -> Result<(Tensor<T>, Tensor<T>)> { Ok((Tensor::read_dump(&mut r)?, Tensor::read_dump(&mut r)?)) };
            match layer {
                Layer::Conv(c) => {
                    let (k, b) = pair()?;
                    *c = checked_conv(c, k, b)?;
                }
                Layer::Mts(m) => {
                    let (k, b) = pair()?;
                    let conv = checked_conv(m.canonical(), k, b)?;
                    *m = MtsConv2d::from_conv(conv, m.scales().clone())?;
                }
                Layer::Dense(d) => {
                    let (w, b) = pair()?;
                    if w.shape() != d.weights.shape() {
                        return Err(Error::Format(format!(
                            "dense weights {:?} do not match {:?}",
                            w.shape(),
                            d.weights.shape()
                        )));
                    }
                    *d = Dense::from_parts(w, b)?;
                }
                _ => {}
            }
        }
        Ok(net)
    }
}

fn checked_conv<T: Scalar>(like: &Conv2d<T>, k: Tensor<T>, b: Tensor<T>) -> Result<Conv2d<T>> {
    if k.shape() != like.kernels.shape() {
        return Err(Error::Format(format!(
            "conv kernels {:?} do not match {:?}",
            k.shape(),
            like.kernels.shape()
        )));
    }
    Conv2d::from_parts(k, b)
}
