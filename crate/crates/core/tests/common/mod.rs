//! Brute-force reference implementations used as test oracles. None of these
//! call into the library's algorithms; they only share its data types.

#![allow(dead_code)]

use quantmcu::netgraph::{LayerKind, NetworkSpec};

/// `(rows, cols, channels)` of every map, from the textbook output-size formula.
pub fn oracle_shapes(net: &NetworkSpec) -> Vec<(usize, usize, usize)> {
    let mut cur = (net.input_shape.height, net.input_shape.width, net.input_shape.channels);
    let mut out = vec![cur];
    for l in &net.layers {
        cur = match l.kind {
            LayerKind::Fc => (1, 1, l.out_channels.unwrap()),
            _ => {
                let f = |n: usize| (n + 2 * l.padding - l.kernel) / l.stride + 1;
                let c = if l.kind == LayerKind::Conv { l.out_channels.unwrap() } else { cur.2 };
                (f(cur.0), f(cur.1), c)
            }
        };
        out.push(cur);
    }
    out
}

/// Half-open box `(r0, r1, c0, c1)`.
pub type Boxed = (usize, usize, usize, usize);

/// Marks every pixel of map `depth` inside `out`, then walks layers backwards
/// marking each input pixel some kernel tap of a marked output reads. Returns
/// the bounding box of the marked pixels of each map `0..=depth`.
pub fn marked_boxes(net: &NetworkSpec, depth: usize, out: Boxed) -> Vec<Boxed> {
    let shapes = oracle_shapes(net);
    let (h, w, _) = shapes[depth];
    let mut marks = vec![vec![false; w]; h];
    for row in marks.iter_mut().take(out.1).skip(out.0) {
        for m in row.iter_mut().take(out.3).skip(out.2) {
            *m = true;
        }
    }
    let mut boxes = vec![bbox(&marks)];
    for l in (0..depth).rev() {
        let layer = &net.layers[l];
        let (ih, iw, _) = shapes[l];
        let mut prev = vec![vec![false; iw]; ih];
        for (oy, row) in marks.iter().enumerate() {
            for (ox, &m) in row.iter().enumerate() {
                if !m {
                    continue;
                }
                for ky in 0..layer.kernel {
                    for kx in 0..layer.kernel {
                        let iy = (oy * layer.stride + ky) as i64 - layer.padding as i64;
                        let ix = (ox * layer.stride + kx) as i64 - layer.padding as i64;
                        if iy >= 0 && ix >= 0 && (iy as usize) < ih && (ix as usize) < iw {
                            prev[iy as usize][ix as usize] = true;
                        }
                    }
                }
            }
        }
        marks = prev;
        boxes.push(bbox(&marks));
    }
    boxes.reverse();
    boxes
}

fn bbox(marks: &[Vec<bool>]) -> Boxed {
    let mut b = (usize::MAX, 0, usize::MAX, 0);
    for (r, row) in marks.iter().enumerate() {
        for (c, &m) in row.iter().enumerate() {
            if m {
                b.0 = b.0.min(r);
                b.1 = b.1.max(r + 1);
                b.2 = b.2.min(c);
                b.3 = b.3.max(c + 1);
            }
        }
    }
    b
}

/// Tiles of an `h x w` map for a `rows x cols` grid; the last row/column of
/// tiles takes the remainder.
pub fn oracle_tiles(h: usize, w: usize, rows: usize, cols: usize) -> Vec<Boxed> {
    let mut tiles = Vec::new();
    for r in 0..rows {
        let r0 = r * (h / rows);
        let r1 = if r == rows - 1 { h } else { r0 + h / rows };
        for c in 0..cols {
            let c0 = c * (w / cols);
            let c1 = if c == cols - 1 { w } else { c0 + w / cols };
            tiles.push((r0, r1, c0, c1));
        }
    }
    tiles
}

/// Number of pixels covered by at least one box, by painting a grid.
pub fn union_count(boxes: &[Boxed], h: usize, w: usize) -> usize {
    let mut grid = vec![false; h * w];
    for b in boxes {
        for r in b.0..b.1 {
            for c in b.2..b.3 {
                grid[r * w + c] = true;
            }
        }
    }
    grid.iter().filter(|g| **g).count()
}

/// Histogram entropy by locating each value between explicit bin edges.
pub fn entropy_direct(values: &[f32], k: usize, lo: f64, hi: f64) -> f64 {
    let edges: Vec<f64> = (0..=k).map(|j| lo + (hi - lo) * j as f64 / k as f64).collect();
    let mut counts = vec![0usize; k];
    for &v in values {
        let x = v as f64;
        let mut bin = 0;
        while bin + 1 < k && x >= edges[bin + 1] {
            bin += 1;
        }
        counts[bin] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

pub fn bytes_of(elements: u64, bits: u32) -> u64 {
    (elements * bits as u64 + 7) / 8
}

/// True iff some assignment of `candidates` to the maps keeps every adjacent
/// pair within `limit`, found by enumerating all `m^(N+1)` assignments.
pub fn exhaustive_feasible(elements: &[u64], candidates: &[u32], limit: u64) -> bool {
    let n = elements.len();
    let m = candidates.len();
    let total = m.pow(n as u32);
    (0..total).any(|mut code| {
        let mut bits = Vec::with_capacity(n);
        for _ in 0..n {
            bits.push(candidates[code % m]);
            code /= m;
        }
        (0..n.saturating_sub(1)).all(|i| bytes_of(elements[i], bits[i]) + bytes_of(elements[i + 1], bits[i + 1]) <= limit)
    })
}

/// Mean and population standard deviation, two passes.
pub fn mean_std(values: &[f32]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Tail test on the Gaussian density relative to its peak:
/// `exp(-z^2 / 2) <= 1 - phi`.
pub fn is_tail_value(x: f64, mean: f64, std: f64, phi: f64) -> bool {
    let z = (x - mean) / std;
    (-0.5 * z * z).exp() <= 1.0 - phi
}

/// Uniform affine quantize/dequantize on `2^bits` levels over `[lo, hi]`.
pub fn quantize_ref(x: f32, bits: u32, lo: f64, hi: f64) -> f32 {
    let levels = ((1u64 << bits) - 1) as f64;
    let step = (hi - lo) / levels;
    let mut q = ((x as f64 - lo) / step).round();
    if q < 0.0 {
        q = 0.0;
    }
    if q > levels {
        q = levels;
    }
    (lo + q * step) as f32
}

/// Dense layer-by-layer evaluation on explicitly zero-padded buffers.
/// `kernels[l]` / `biases[l]` follow the library's layouts; `None` for pools.
/// Each map after the input goes through `post(l + 1, map)` before use.
pub fn naive_forward(
    net: &NetworkSpec,
    kernels: &[Option<Vec<f32>>],
    biases: &[Option<Vec<f32>>],
    input: &[f32],
    mut post: impl FnMut(usize, &mut Vec<f32>),
) -> Vec<Vec<f32>> {
    let shapes = oracle_shapes(net);
    let mut x = input.to_vec();
    post(0, &mut x);
    let mut maps = vec![x];
    for (l, layer) in net.layers.iter().enumerate() {
        let (ih, iw, ic) = shapes[l];
        let (oh, ow, oc) = shapes[l + 1];
        let src = maps.last().unwrap();
        let p = layer.padding;
        let (ph, pw) = (ih + 2 * p, iw + 2 * p);
        // NaN marks padding so pools can skip it; convs treat it as zero.
        let mut padded = vec![f32::NAN; ph * pw * ic];
        for r in 0..ih {
            for c in 0..iw {
                for ch in 0..ic {
                    padded[((r + p) * pw + c + p) * ic + ch] = src[(r * iw + c) * ic + ch];
                }
            }
        }
        let at = |r: usize, c: usize, ch: usize| padded[(r * pw + c) * ic + ch];
        let k = layer.kernel;
        let s = layer.stride;
        let mut y = vec![0.0f32; oh * ow * oc];
        match layer.kind {
            LayerKind::Fc => {
                let w = kernels[l].as_ref().unwrap();
                let b = biases[l].as_ref().unwrap();
                let n = src.len();
                for o in 0..oc {
                    let mut acc = b[o] as f64;
                    for i in 0..n {
                        acc += w[o * n + i] as f64 * src[i] as f64;
                    }
                    y[o] = acc as f32;
                }
            }
            kind => {
                for oy in 0..oh {
                    for ox in 0..ow {
                        for co in 0..oc {
                            let mut acc = 0.0f64;
                            let mut best = f32::NEG_INFINITY;
                            let mut count = 0usize;
                            for ky in 0..k {
                                for kx in 0..k {
                                    let (r, c) = (oy * s + ky, ox * s + kx);
                                    match kind {
                                        LayerKind::Conv => {
                                            let w = kernels[l].as_ref().unwrap();
                                            for ci in 0..ic {
                                                let v = at(r, c, ci);
                                                if !v.is_nan() {
                                                    acc += w[((co * k + ky) * k + kx) * ic + ci] as f64 * v as f64;
                                                }
                                            }
                                        }
                                        LayerKind::DepthwiseConv => {
                                            let w = kernels[l].as_ref().unwrap();
                                            let v = at(r, c, co);
                                            if !v.is_nan() {
                                                acc += w[(co * k + ky) * k + kx] as f64 * v as f64;
                                            }
                                        }
                                        _ => {
                                            let v = at(r, c, co);
                                            if !v.is_nan() {
                                                best = best.max(v);
                                                acc += v as f64;
                                                count += 1;
                                            }
                                        }
                                    }
                                }
                            }
                            y[(oy * ow + ox) * oc + co] = match kind {
                                LayerKind::Maxpool => best,
                                LayerKind::Avgpool => (acc / count as f64) as f32,
                                _ => (acc + biases[l].as_ref().unwrap()[co] as f64) as f32,
                            };
                        }
                    }
                }
            }
        }
        if layer.activation == quantmcu::netgraph::Activation::Relu {
            for v in &mut y {
                *v = v.max(0.0);
            }
        }
        post(l + 1, &mut y);
        maps.push(y);
    }
    maps
}
