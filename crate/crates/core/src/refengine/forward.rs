//! Float and fake-quantized forward passes.
//!
//! Every layer is evaluated through [`run_layer`], which computes an arbitrary
//! output window from an input window addressed in absolute coordinates. The
//! per-element accumulation order does not depend on the window, so patch-wise
//! execution reproduces layer-wise execution bit for bit.

use super::tensor::Tensor;
use super::weights::{LayerWeights, WeightSet};
use crate::actstats::{fake_quantize_in_place, QuantRange};
use crate::bits::Bitwidth;
use crate::error::{Error, Result};
use crate::netgraph::{
    infer_shapes, Activation, FeatureMapShape, LayerKind, LayerSpec, NetworkSpec, PatchSplit, Region,
};

/// Part of a feature map held in memory, positioned at `origin` in a map of
/// shape `full`.
struct Window<'a> {
    data: &'a [f32],
    origin: (usize, usize),
    cols: usize,
    full: FeatureMapShape,
}

impl Window<'_> {
    #[inline]
    fn at(&self, row: usize, col: usize, ch: usize) -> f32 {
        let r = row - self.origin.0;
        let c = col - self.origin.1;
        self.data[(r * self.cols + c) * self.full.channels + ch]
    }
}

/// Input coordinate for output position `o` and kernel tap `t`, or `None` in
/// the zero-padding border.
#[inline]
fn tap(o: usize, t: usize, stride: usize, padding: usize, len: usize) -> Option<usize> {
    let i = (o * stride + t) as i64 - padding as i64;
    (i >= 0 && (i as usize) < len).then_some(i as usize)
}

fn run_layer(
    layer: &LayerSpec,
    weights: Option<&LayerWeights>,
    input: &Window<'_>,
    out: Region,
    out_channels: usize,
) -> Vec<f32> {
    let (k, s, p) = (layer.kernel, layer.stride, layer.padding);
    let in_c = input.full.channels;
    let (in_h, in_w) = (input.full.height, input.full.width);
    let mut y = Vec::with_capacity(out.area() * out_channels);

    match layer.kind {
        LayerKind::Conv => {
            let w = weights.expect("conv has weights");
            let (kern, bias) = (w.kernel.data(), w.bias.data());
            for oy in out.row_start..out.row_end {
                for ox in out.col_start..out.col_end {
                    for co in 0..out_channels {
                        let mut acc = bias[co] as f64;
                        for ky in 0..k {
                            let Some(iy) = tap(oy, ky, s, p, in_h) else { continue };
                            for kx in 0..k {
                                let Some(ix) = tap(ox, kx, s, p, in_w) else { continue };
                                let base = ((co * k + ky) * k + kx) * in_c;
                                for ci in 0..in_c {
                                    acc += kern[base + ci] as f64 * input.at(iy, ix, ci) as f64;
                                }
                            }
                        }
                        y.push(acc as f32);
                    }
                }
            }
        }
        LayerKind::DepthwiseConv => {
            let w = weights.expect("depthwise has weights");
            let (kern, bias) = (w.kernel.data(), w.bias.data());
            for oy in out.row_start..out.row_end {
                for ox in out.col_start..out.col_end {
                    for c in 0..out_channels {
                        let mut acc = bias[c] as f64;
                        for ky in 0..k {
                            let Some(iy) = tap(oy, ky, s, p, in_h) else { continue };
                            for kx in 0..k {
                                let Some(ix) = tap(ox, kx, s, p, in_w) else { continue };
                                acc += kern[(c * k + ky) * k + kx] as f64 * input.at(iy, ix, c) as f64;
                            }
                        }
                        y.push(acc as f32);
                    }
                }
            }
        }
        LayerKind::Maxpool | LayerKind::Avgpool => {
            let is_max = layer.kind == LayerKind::Maxpool;
            for oy in out.row_start..out.row_end {
                for ox in out.col_start..out.col_end {
                    for c in 0..out_channels {
                        let mut best = f32::NEG_INFINITY;
                        let mut sum = 0.0f64;
                        let mut count = 0usize;
                        for ky in 0..k {
                            let Some(iy) = tap(oy, ky, s, p, in_h) else { continue };
                            for kx in 0..k {
                                let Some(ix) = tap(ox, kx, s, p, in_w) else { continue };
                                let v = input.at(iy, ix, c);
                                best = best.max(v);
                                sum += v as f64;
                                count += 1;
                            }
                        }
                        // padding < kernel guarantees count >= 1
                        y.push(if is_max { best } else { (sum / count as f64) as f32 });
                    }
                }
            }
        }
        LayerKind::Fc => {
            let w = weights.expect("fc has weights");
            let (kern, bias) = (w.kernel.data(), w.bias.data());
            let n_in = input.full.elements();
            for o in 0..out_channels {
                let row = &kern[o * n_in..(o + 1) * n_in];
                let mut acc = bias[o] as f64;
                for (wv, xv) in row.iter().zip(input.data) {
                    acc += *wv as f64 * *xv as f64;
                }
                y.push(acc as f32);
            }
        }
    }

    if layer.activation == Activation::Relu {
        for v in &mut y {
            *v = v.max(0.0);
        }
    }
    y
}

fn check_input(net: &NetworkSpec, input: &Tensor) -> Result<()> {
    let want = net.input_shape;
    if input.dims() != [want.height, want.width, want.channels] {
        return Err(Error::ShapeMismatch {
            expected: vec![want.height, want.width, want.channels],
            actual: input.dims().to_vec(),
        });
    }
    Ok(())
}

/// Runs layer `l` over the full map.
fn full_layer(net: &NetworkSpec, weights: &WeightSet, shapes: &[FeatureMapShape], l: usize, x: &Tensor) -> Tensor {
    let window = Window {
        data: x.data(),
        origin: (0, 0),
        cols: shapes[l].width,
        full: shapes[l],
    };
    let out = shapes[l + 1];
    let y = run_layer(&net.layers[l], weights.layers[l].as_ref(), &window, Region::full(&out), out.channels);
    Tensor::from_map(out, y)
}

/// Float forward pass; returns feature maps `0..=L` with map 0 the input.
pub fn forward_fp(net: &NetworkSpec, weights: &WeightSet, input: &Tensor) -> Result<Vec<Tensor>> {
    check_input(net, input)?;
    let shapes = infer_shapes(net)?;
    let mut maps = Vec::with_capacity(shapes.len());
    maps.push(Tensor::from_map(shapes[0], input.data().to_vec()));
    for l in 0..net.layers.len() {
        let next = full_layer(net, weights, &shapes, l, &maps[l]);
        maps.push(next);
    }
    Ok(maps)
}

fn check_plan(net: &NetworkSpec, plan: &[Bitwidth], ranges: &[QuantRange]) -> Result<()> {
    if plan.len() != net.map_count() {
        return Err(Error::LengthMismatch {
            what: "bitwidth plan",
            expected: net.map_count(),
            actual: plan.len(),
        });
    }
    if let Some(i) = plan
        .iter()
        .enumerate()
        .find(|(i, b)| **b != Bitwidth::Full && *i >= ranges.len())
        .map(|(i, _)| i)
    {
        return Err(Error::MissingRange(i));
    }
    Ok(())
}

/// Weights used by a quantized run: 8-bit per-tensor unless every activation
/// stays float, in which case the run is the float reference.
pub(crate) fn weights_for(weights: &WeightSet, all_float: bool) -> std::borrow::Cow<'_, WeightSet> {
    if all_float {
        std::borrow::Cow::Borrowed(weights)
    } else {
        std::borrow::Cow::Owned(weights.fake_quantized(Bitwidth::Eight))
    }
}

/// Layer-wise forward pass where feature map `i` is fake-quantized to
/// `plan[i]` over `ranges[i]` before it is consumed. The returned maps are
/// the quantized ones.
pub fn forward_quant(
    net: &NetworkSpec,
    weights: &WeightSet,
    input: &Tensor,
    plan: &[Bitwidth],
    ranges: &[QuantRange],
) -> Result<Vec<Tensor>> {
    check_input(net, input)?;
    check_plan(net, plan, ranges)?;
    let all_float = plan.iter().all(|b| *b == Bitwidth::Full);
    let w = weights_for(weights, all_float);
    forward_quant_prepared(net, &w, input, plan, ranges)
}

pub(crate) fn forward_quant_prepared(
    net: &NetworkSpec,
    weights: &WeightSet,
    input: &Tensor,
    plan: &[Bitwidth],
    ranges: &[QuantRange],
) -> Result<Vec<Tensor>> {
    let shapes = infer_shapes(net)?;
    let mut maps = Vec::with_capacity(shapes.len());
    let mut x = Tensor::from_map(shapes[0], input.data().to_vec());
    if plan[0] != Bitwidth::Full {
        fake_quantize_in_place(x.data_mut(), plan[0], ranges[0]);
    }
    maps.push(x);
    for l in 0..net.layers.len() {
        let mut y = full_layer(net, weights, &shapes, l, &maps[l]);
        if plan[l + 1] != Bitwidth::Full {
            fake_quantize_in_place(y.data_mut(), plan[l + 1], ranges[l + 1]);
        }
        maps.push(y);
    }
    Ok(maps)
}

/// Patch-based execution of a plan.
///
/// Branch `b` runs the patch stage on its own regions, quantizing its copy of
/// map `d` to `branch_bits[b][d]`; the quantized tiles are stitched into the
/// split map, and the remaining layers run on full maps with map `s + 1 + j`
/// quantized to `post_bits[j]`. Returns maps `s..=L`.
pub fn forward_patched(
    net: &NetworkSpec,
    split: &PatchSplit,
    weights: &WeightSet,
    input: &Tensor,
    branch_bits: &[Vec<Bitwidth>],
    post_bits: &[Bitwidth],
    ranges: &[QuantRange],
) -> Result<Vec<Tensor>> {
    let all_float = branch_bits.iter().flatten().chain(post_bits).all(|b| *b == Bitwidth::Full);
    let w = weights_for(weights, all_float);
    forward_patched_prepared(net, split, &w, input, branch_bits, post_bits, ranges)
}

pub(crate) fn forward_patched_prepared(
    net: &NetworkSpec,
    split: &PatchSplit,
    weights: &WeightSet,
    input: &Tensor,
    branch_bits: &[Vec<Bitwidth>],
    post_bits: &[Bitwidth],
    ranges: &[QuantRange],
) -> Result<Vec<Tensor>> {
    check_input(net, input)?;
    let s = net.patch_depth;
    let shapes = &split.shapes;
    if branch_bits.len() != split.branches.len() {
        return Err(Error::LengthMismatch {
            what: "branch assignments",
            expected: split.branches.len(),
            actual: branch_bits.len(),
        });
    }
    if post_bits.len() != net.layers.len() - s {
        return Err(Error::LengthMismatch {
            what: "post-stage bitwidths",
            expected: net.layers.len() - s,
            actual: post_bits.len(),
        });
    }
    let range = |i: usize| ranges.get(i).copied().ok_or(Error::MissingRange(i));

    let mut stitched = Tensor::zeros(vec![shapes[s].height, shapes[s].width, shapes[s].channels]);
    for (branch, bits) in split.branches.iter().zip(branch_bits) {
        if bits.len() != s + 1 {
            return Err(Error::LengthMismatch {
                what: "branch bitwidths",
                expected: s + 1,
                actual: bits.len(),
            });
        }
        let mut x = input.extract(branch.regions[0])?;
        if bits[0] != Bitwidth::Full {
            fake_quantize_in_place(x.data_mut(), bits[0], range(0)?);
        }
        for l in 0..s {
            let in_region = branch.regions[l];
            let out_region = branch.regions[l + 1];
            let window = Window {
                data: x.data(),
                origin: (in_region.row_start, in_region.col_start),
                cols: in_region.width(),
                full: shapes[l],
            };
            let c = shapes[l + 1].channels;
            let y = run_layer(&net.layers[l], weights.layers[l].as_ref(), &window, out_region, c);
            x = Tensor::from_map(out_region.shape(c), y);
            if bits[l + 1] != Bitwidth::Full {
                fake_quantize_in_place(x.data_mut(), bits[l + 1], range(l + 1)?);
            }
        }
        stitched.paste(branch.tile(), &x)?;
    }

    let mut maps = vec![stitched];
    for l in s..net.layers.len() {
        let mut y = full_layer(net, weights, shapes, l, maps.last().expect("nonempty"));
        let b = post_bits[l - s];
        if b != Bitwidth::Full {
            fake_quantize_in_place(y.data_mut(), b, range(l + 1)?);
        }
        maps.push(y);
    }
    Ok(maps)
}
