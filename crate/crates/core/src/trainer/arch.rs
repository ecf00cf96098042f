use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{Layer, Network};
use crate::convnet::{Conv2d, Dense};
use crate::error::{Error, Result};
use crate::interp::{scaled_len, ScaleSet};
use crate::mts::MtsConv2d;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchId {
    A1,
    A2,
    A3,
    A4,
}

impl ArchId {
    pub const ALL: [ArchId; 4] = [ArchId::A1, ArchId::A2, ArchId::A3, ArchId::A4];
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A1" => Ok(ArchId::A1),
            "A2" => Ok(ArchId::A2),
            "A3" => Ok(ArchId::A3),
            "A4" => Ok(ArchId::A4),
            other => Err(Error::Parameter(format!("unknown architecture {other:?} (expected A1..A4)"))),
        }
    }
}

/// One entry of a layer stack. `Dense { units: None }` is the classifier,
/// sized to the number of classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv { channels: usize, kernel: [usize; 2], mts: bool },
    Relu,
    MaxPool([usize; 2]),
    Flatten,
    Dense { units: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub id: ArchId,
    pub layers: Vec<LayerSpec>,
    /// Scale set shared by every MTS-enabled convolution; `None` builds the
    /// standard network.
    pub scales: Option<ScaleSet>,
}

fn conv(channels: usize, kt: usize, kf: usize, mts: bool) -> LayerSpec {
    LayerSpec::Conv {
        channels,
        kernel: [kt, kf],
        mts,
    }
}

fn dense(units: usize) -> LayerSpec {
    LayerSpec::Dense { units: Some(units) }
}

const CLASSIFIER: LayerSpec = LayerSpec::Dense { units: None };

impl ArchitectureSpec {
    pub fn standard(id: ArchId) -> Self {
        use LayerSpec::*;
        let layers = match id {
            ArchId::A1 | ArchId::A2 => {
                let ch = if id == ArchId::A1 { 1 } else { 10 };
                vec![conv(ch, 10, 5, true), Relu, Flatten, dense(200), Relu, CLASSIFIER]
            }
            ArchId::A3 => vec![
                conv(10, 10, 5, true),
                Relu,
                MaxPool([2, 2]),
                conv(10, 10, 5, true),
                Relu,
                Flatten,
                dense(200),
                Relu,
                CLASSIFIER,
            ],
            ArchId::A4 => vec![
                conv(16, 7, 5, true),
                Relu,
                MaxPool([2, 2]),
                conv(32, 5, 5, true),
                Relu,
                MaxPool([2, 2]),
                conv(64, 5, 3, false),
                Relu,
                conv(64, 5, 3, false),
                Relu,
                conv(32, 5, 3, false),
                Relu,
                MaxPool([2, 2]),
                Flatten,
                dense(256),
                Relu,
                dense(256),
                Relu,
                CLASSIFIER,
            ],
        };
        ArchitectureSpec { id, layers, scales: None }
    }

    pub fn mts(id: ArchId, scales: ScaleSet) -> Self {
        ArchitectureSpec {
            scales: Some(scales),
            ..Self::standard(id)
        }
    }

    pub fn is_mts(&self) -> bool {
        self.scales.is_some()
    }

    /// Convolutions that become MTS layers when built.
    pub fn mts_layer_count(&self) -> usize {
        if !self.is_mts() {
            return 0;
        }
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv { mts: true, .. }))
            .count()
    }

    /// Output shape of every layer (without the batch axis) for an input of
    /// `[time, freq]`, as a trace of `(description, shape)` rows.
    pub fn shape_trace(&self, input: [usize; 2], classes: usize) -> Result<Vec<(String, Vec<usize>)>> {
        let mut shape = vec![1, input[0], input[1]];
        let mut trace = vec![("input".to_string(), shape.clone())];
        let fail = |trace: &[(String, Vec<usize>)], msg: String| {
            let rows: Vec<String> = trace.iter().map(|(d, s)| format!("{d} -> {s:?}")).collect();
            Err(Error::Shape(format!("{msg}; trace: {}", rows.join(" | "))))
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let desc;
            match *layer {
                LayerSpec::Conv { channels, kernel, mts } => {
                    if shape.len() != 3 {
                        return fail(&trace, format!("layer {i}: convolution after flatten"));
                    }
                    let as_mts = mts && self.is_mts();
                    let longest = match (&self.scales, as_mts) {
                        (Some(s), true) => s
                            .factors()
                            .iter()
                            .map(|&f| scaled_len(kernel[0], f))
                            .collect::<Result<Vec<_>>>()?
                            .into_iter()
                            .max()
                            .unwrap(),
                        _ => kernel[0],
                    };
                    if shape[1] < longest.max(kernel[0]) || shape[2] < kernel[1] {
                        return fail(
                            &trace,
                            format!(
                                "layer {i}: input [{},{}] too small for kernel [{},{}] (longest branch {longest})",
                                shape[1], shape[2], kernel[0], kernel[1]
                            ),
                        );
                    }
                    shape = vec![channels, shape[1] - kernel[0] + 1, shape[2] - kernel[1] + 1];
                    desc = format!("{}conv{}x{}x{}", if as_mts { "mts-" } else { "" }, channels, kernel[0], kernel[1]);
                }
                LayerSpec::Relu => desc = "relu".into(),
                LayerSpec::MaxPool(w) => {
                    if shape.len() != 3 || shape[1] < w[0] || shape[2] < w[1] || w.contains(&0) {
                        return fail(&trace, format!("layer {i}: cannot pool {shape:?} with window {w:?}"));
                    }
                    shape = vec![shape[0], shape[1] / w[0], shape[2] / w[1]];
                    desc = format!("maxpool{}x{}", w[0], w[1]);
                }
                LayerSpec::Flatten => {
                    shape = vec![shape.iter().product()];
                    desc = "flatten".into();
                }
                LayerSpec::Dense { units } => {
                    if shape.len() != 1 {
                        return fail(&trace, format!("layer {i}: dense layer needs a flattened input"));
                    }
                    let n = units.unwrap_or(classes);
                    shape = vec![n];
                    desc = format!("dense{n}");
                }
            }
            trace.push((desc, shape.clone()));
        }
        Ok(trace)
    }
}

/// Instantiates `spec` for `[time, freq]` inputs and `classes` outputs.
/// Parameters are drawn from `rng` in layer order; standard and MTS variants
/// of one architecture consume identical draws.
pub fn build_model<T: Scalar, R: Rng + ?Sized>(
    spec: &ArchitectureSpec,
    input: [usize; 2],
    classes: usize,
    rng: &mut R,
) -> Result<Network<T>> {
    if classes < 2 {
        return Err(Error::Parameter(format!("need at least 2 classes, got {classes}")));
    }
    let trace = spec.shape_trace(input, classes)?;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let in_shape = &trace[i].1;
        let out_shape = &trace[i + 1].1;
        layers.push(match *layer {
            LayerSpec::Conv { channels, kernel, mts } => {
                let c = Conv2d::new(in_shape[0], channels, kernel, rng)?;
                match (&spec.scales, mts) {
                    (Some(s), true) => Layer::Mts(MtsConv2d::from_conv(c, s.clone())?),
                    _ => Layer::Conv(c),
                }
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::MaxPool(w) => Layer::MaxPool(w),
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Dense { .. } => Layer::Dense(Dense::new(in_shape[0], out_shape[0], rng)?),
        });
    }
    Network::from_layers(spec.clone(), input, classes, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(spec: &ArchitectureSpec, input: [usize; 2], classes: usize) -> Result<Network> {
        build_model(spec, input, classes, &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn a2_shape_arithmetic() {
        let trace = ArchitectureSpec::standard(ArchId::A2).shape_trace([99, 161], 7).unwrap();
        let shapes: Vec<Vec<usize>> = trace.into_iter().map(|(_, s)| s).collect();
        assert_eq!(shapes[1], vec![10, 90, 157]);
        assert_eq!(shapes[3], vec![141_300]);
        assert_eq!(shapes[4], vec![200]);
        assert_eq!(shapes.last().unwrap(), &vec![7]);
    }

    #[test]
    fn parameter_parity_and_mts_layer_counts() {
        let scales: ScaleSet = "0.5,1,2".parse().unwrap();
        for (id, input, expect) in [
            (ArchId::A1, [40, 16], 1),
            (ArchId::A2, [40, 16], 1),
            (ArchId::A3, [60, 24], 2),
            (ArchId::A4, [160, 64], 2),
        ] {
            let std = build(&ArchitectureSpec::standard(id), input, 4).unwrap();
            let mts = build(&ArchitectureSpec::mts(id, scales.clone()), input, 4).unwrap();
            assert_eq!(std.param_count(), mts.param_count(), "{id}");
            assert_eq!(mts.mts_layers().count(), expect, "{id}");
            assert_eq!(ArchitectureSpec::mts(id, scales.clone()).mts_layer_count(), expect);
            assert_eq!(std.mts_layers().count(), 0);
        }
    }

    #[test]
    fn a1_parameter_count_by_hand() {
        // conv 1x1x10x5 + 1 bias, dense (31*12)x200 + 200, dense 200x4 + 4
        let net = build(&ArchitectureSpec::standard(ArchId::A1), [40, 16], 4).unwrap();
        assert_eq!(net.param_count(), 51 + 372 * 200 + 200 + 200 * 4 + 4);
    }

    #[test]
    fn too_small_input_reports_trace() {
        let err = build(&ArchitectureSpec::standard(ArchId::A3), [20, 16], 4).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Shape(_)));
        assert!(msg.contains("layer 3") && msg.contains("trace") && msg.contains("maxpool2x2"), "{msg}");
        let scales: ScaleSet = "0.5,1,2".parse().unwrap();
        assert!(build(&ArchitectureSpec::mts(ArchId::A1, scales), [15, 16], 4).is_err());
        assert!(build(&ArchitectureSpec::standard(ArchId::A1), [15, 16], 4).is_ok());
    }

    #[test]
    fn arch_ids_parse() {
        assert_eq!("a3".parse::<ArchId>().unwrap(), ArchId::A3);
        assert!("A5".parse::<ArchId>().is_err());
        assert_eq!(ArchId::A4.to_string(), "A4");
    }
}
