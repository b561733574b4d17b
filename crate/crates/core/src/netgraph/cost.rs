//! MAC, BitOPs and feature-map memory accounting.

use serde::{Deserialize, Serialize};

use super::spec::{FeatureMapShape, LayerKind, NetworkSpec};
use crate::bits::Bitwidth;
use crate::error::{Error, Result};

/// Per-layer MAC counts for the first `shapes.len() - 1` layers, where
/// `shapes[l]` / `shapes[l + 1]` are the input / output of layer `l`
/// (full maps or branch-local regions).
pub fn mac_count(net: &NetworkSpec, shapes: &[FeatureMapShape]) -> Result<Vec<u64>> {
    if shapes.is_empty() || shapes.len() > net.layers.len() + 1 {
        return Err(Error::LengthMismatch {
            what: "feature map shapes",
            expected: net.layers.len() + 1,
            actual: shapes.len(),
        });
    }
    let mut macs = Vec::with_capacity(shapes.len() - 1);
    for (l, pair) in shapes.windows(2).enumerate() {
        let (input, output) = (pair[0], pair[1]);
        let layer = &net.layers[l];
        let expect_channels = match layer.kind {
            LayerKind::Conv | LayerKind::Fc => layer.out_channels.unwrap_or(0),
            _ => input.channels,
        };
        if output.channels != expect_channels {
            return Err(Error::ShapeMismatch {
                expected: vec![output.height, output.width, expect_channels],
                actual: vec![output.height, output.width, output.channels],
            });
        }
        let out_pixels = (output.height * output.width) as u64;
        let k2 = (layer.kernel * layer.kernel) as u64;
        let m = match layer.kind {
            LayerKind::Conv => out_pixels * output.channels as u64 * k2 * input.channels as u64,
            LayerKind::DepthwiseConv => out_pixels * output.channels as u64 * k2,
            LayerKind::Fc => input.elements() as u64 * output.channels as u64,
            LayerKind::Maxpool | LayerKind::Avgpool => 0,
        };
        macs.push(m);
    }
    Ok(macs)
}

/// `sum_l MACs_l * weight_bits * act_bits[l]`, where `act_bits[l]` is the
/// bitwidth of layer `l`'s input feature map.
pub fn bitops(macs: &[u64], weight_bits: Bitwidth, act_bits: &[Bitwidth]) -> Result<u64> {
    if act_bits.len() < macs.len() {
        return Err(Error::LengthMismatch {
            what: "activation bitwidths",
            expected: macs.len(),
            actual: act_bits.len(),
        });
    }
    let w = weight_bits.bits() as u64;
    Ok(macs
        .iter()
        .zip(act_bits)
        .map(|(&m, b)| m * w * b.bits() as u64)
        .sum())
}

/// Device memory budget for two live adjacent feature maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryModel {
    /// `None` means unconstrained.
    pub mem_limit: Option<u64>,
}

impl MemoryModel {
    pub fn unlimited() -> Self {
        Self { mem_limit: None }
    }

    pub fn limited(bytes: u64) -> Self {
        Self {
            mem_limit: Some(bytes),
        }
    }

    /// `ceil(n * b / 8)` bytes.
    pub fn mem(elements: u64, bits: Bitwidth) -> u64 {
        (elements * bits.bits() as u64).div_ceil(8)
    }

    pub fn fits(&self, bytes: u64) -> bool {
        self.mem_limit.is_none_or(|m| bytes <= m)
    }
}

/// Largest `Mem(i, b_i) + Mem(i+1, b_{i+1})` over adjacent pairs; a lone map
/// costs `Mem(0, b_0)`.
pub fn peak_memory(bits: &[Bitwidth], elements: &[u64]) -> Result<u64> {
    if bits.len() != elements.len() {
        return Err(Error::LengthMismatch {
            what: "bitwidth assignment",
            expected: elements.len(),
            actual: bits.len(),
        });
    }
    let mems: Vec<u64> = elements
        .iter()
        .zip(bits)
        .map(|(&n, &b)| MemoryModel::mem(n, b))
        .collect();
    Ok(peak_of_bytes(&mems))
}

/// Peak over adjacent pairs of per-map byte counts.
pub fn peak_of_bytes(mems: &[u64]) -> u64 {
    match mems {
        [] => 0,
        [only] => *only,
        _ => mems.windows(2).map(|w| w[0] + w[1]).max().unwrap_or(0),
    }
}
