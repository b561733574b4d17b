use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;
use crate::actstats::{fake_quantize_in_place, QuantRange};
use crate::bits::Bitwidth;
use crate::error::{Error, Result};
use crate::netgraph::{infer_shapes, LayerKind, NetworkSpec};

/// Kernel and bias of one weighted layer.
///
/// Kernel layouts: conv `[c_out, k, k, c_in]`, depthwise `[c, k, k]`,
/// fc `[out, in]`. Bias is `[c_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub kernel: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    /// One entry per layer; `None` for pooling layers.
    pub layers: Vec<Option<LayerWeights>>,
    pub seed: Option<u64>,
}

/// Expected (kernel dims, bias len, fan_in) for every layer.
/// Kernel dims, bias length and fan-in of a weighted layer.
type LayerDims = (Vec<usize>, usize, usize);

fn expected_dims(net: &NetworkSpec) -> Result<Vec<Option<LayerDims>>> {
    let shapes = infer_shapes(net)?;
    Ok(net
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let input = shapes[l];
            let output = shapes[l + 1];
            let k = layer.kernel;
            match layer.kind {
                LayerKind::Conv => Some((
                    vec![output.channels, k, k, input.channels],
                    output.channels,
                    k * k * input.channels,
                )),
                LayerKind::DepthwiseConv => Some((vec![input.channels, k, k], input.channels, k * k)),
                LayerKind::Fc => Some((
                    vec![output.channels, input.elements()],
                    output.channels,
                    input.elements(),
                )),
                LayerKind::Maxpool | LayerKind::Avgpool => None,
            }
        })
        .collect())
}

impl WeightSet {
    /// Kernels drawn from `N(0, 1/fan_in)`, zero biases.
    pub fn synthetic(net: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = expected_dims(net)?
            .into_iter()
            .map(|spec| {
                spec.map(|(dims, bias_len, fan_in)| {
                    let normal = Normal::new(0.0f64, (1.0 / fan_in as f64).sqrt())
                        .expect("positive std");
                    let n: usize = dims.iter().product();
                    let data = (0..n).map(|_| normal.sample(&mut rng) as f32).collect();
                    LayerWeights {
                        kernel: Tensor::new(dims, data).expect("sized"),
                        bias: Tensor::zeros(vec![bias_len]),
                    }
                })
            })
            .collect();
        Ok(Self {
            layers,
            seed: Some(seed),
        })
    }

    /// Builds a weight set from a tensor pack: kernel then bias for every
    /// weighted layer, in layer order.
    pub fn from_pack(net: &NetworkSpec, tensors: Vec<Tensor>) -> Result<Self> {
        let expected = expected_dims(net)?;
        let needed = expected.iter().flatten().count() * 2;
        if tensors.len() != needed {
            return Err(Error::LengthMismatch {
                what: "weight pack records",
                expected: needed,
                actual: tensors.len(),
            });
        }
        let mut it = tensors.into_iter();
        let layers = expected
            .iter()
            .map(|e| {
                e.as_ref().map(|_| LayerWeights {
                    kernel: it.next().expect("counted"),
                    bias: it.next().expect("counted"),
                })
            })
            .collect();
        let set = Self { layers, seed: None };
        set.validate(net)?;
        Ok(set)
    }

    pub fn to_pack(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|w| [w.kernel.clone(), w.bias.clone()])
            .collect()
    }

    pub fn validate(&self, net: &NetworkSpec) -> Result<()> {
        let expected = expected_dims(net)?;
        if expected.len() != self.layers.len() {
            return Err(Error::LengthMismatch {
                what: "weight layers",
                expected: expected.len(),
                actual: self.layers.len(),
            });
        }
        for (e, w) in expected.iter().zip(&self.layers) {
            match (e, w) {
                (None, None) => {}
                (Some((dims, bias_len, _)), Some(w)) => {
                    if w.kernel.dims() != dims.as_slice() {
                        return Err(Error::ShapeMismatch {
                            expected: dims.clone(),
                            actual: w.kernel.dims().to_vec(),
                        });
                    }
                    if w.bias.dims() != [*bias_len] {
                        return Err(Error::ShapeMismatch {
                            expected: vec![*bias_len],
                            actual: w.bias.dims().to_vec(),
                        });
                    }
                }
                _ => return Err(Error::Config("weight set does not match layer kinds".into())),
            }
        }
        Ok(())
    }

    /// Copy with every kernel fake-quantized per tensor; biases stay float.
    pub fn fake_quantized(&self, bits: Bitwidth) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|w| {
                w.as_ref().map(|w| {
                    let mut kernel = w.kernel.clone();
                    if let Ok(range) = QuantRange::observed(kernel.data()) {
                        fake_quantize_in_place(kernel.data_mut(), bits, range);
                    }
                    LayerWeights {
                        kernel,
                        bias: w.bias.clone(),
                    }
                })
            })
            .collect();
        Self {
            layers,
            seed: self.seed,
        }
    }
}
