//! Receptive-field arithmetic and the split of the patch stage into
//! per-patch dataflow branches.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::spec::{infer_shapes, FeatureMapShape, NetworkSpec};
use crate::error::{Error, Result};

/// Half-open spatial window `[row_start, row_end) x [col_start, col_end)`
/// covering all channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Region {
    pub fn new(row_start: usize, row_end: usize, col_start: usize, col_end: usize) -> Self {
        Self {
            row_start,
            row_end,
            col_start,
            col_end,
        }
    }

    pub fn full(shape: &FeatureMapShape) -> Self {
        Self::new(0, shape.height, 0, shape.width)
    }

    pub fn height(&self) -> usize {
        self.row_end - self.row_start
    }

    pub fn width(&self) -> usize {
        self.col_end - self.col_start
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.row_end <= self.row_start || self.col_end <= self.col_start
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_start..self.row_end).contains(&row) && (self.col_start..self.col_end).contains(&col)
    }

    pub fn fits(&self, shape: &FeatureMapShape) -> bool {
        !self.is_empty() && self.row_end <= shape.height && self.col_end <= shape.width
    }

    /// Shape of this window over a map with `channels` channels.
    pub fn shape(&self, channels: usize) -> FeatureMapShape {
        FeatureMapShape::new(self.height(), self.width(), channels)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}..{})x[{}..{})",
            self.row_start, self.row_end, self.col_start, self.col_end
        )
    }
}

/// Input interval needed to produce `[start, end)` of one layer's output axis,
/// clipped to the `input_len` real pixels.
fn back_interval(
    start: usize,
    end: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    input_len: usize,
) -> (usize, usize) {
    let lo = start as i64 * stride as i64 - padding as i64;
    let hi = (end as i64 - 1) * stride as i64 - padding as i64 + kernel as i64;
    (lo.max(0) as usize, (hi.min(input_len as i64)).max(0) as usize)
}

/// Maps a region of feature map `to` back to the region of feature map `from`
/// (`from <= to`) that determines it.
pub fn back_project(net: &NetworkSpec, from: usize, to: usize, out: Region) -> Result<Region> {
    let shapes = infer_shapes(net)?;
    back_project_with(net, &shapes, from, to, out)
}

pub(crate) fn back_project_with(
    net: &NetworkSpec,
    shapes: &[FeatureMapShape],
    from: usize,
    to: usize,
    out: Region,
) -> Result<Region> {
    if to > net.layers.len() || from > to {
        return Err(Error::Config(format!(
            "depth range {from}..{to} outside 0..={}",
            net.layers.len()
        )));
    }
    if !out.fits(&shapes[to]) {
        return Err(Error::RegionOutOfBounds {
            region: out.to_string(),
            depth: to,
            height: shapes[to].height,
            width: shapes[to].width,
        });
    }
    if let Some(layer) = (from..to).find(|&l| !net.layers[l].kind.is_spatial()) {
        return Err(Error::SpatialOnly { layer });
    }
    let mut region = out;
    for l in (from..to).rev() {
        let layer = &net.layers[l];
        let input = &shapes[l];
        let (r0, r1) = back_interval(
            region.row_start,
            region.row_end,
            layer.kernel,
            layer.stride,
            layer.padding,
            input.height,
        );
        let (c0, c1) = back_interval(
            region.col_start,
            region.col_end,
            layer.kernel,
            layer.stride,
            layer.padding,
            input.width,
        );
        region = Region::new(r0, r1, c0, c1);
    }
    Ok(region)
}

/// Minimal region of the network input that determines `out` at `depth`.
pub fn receptive_region(net: &NetworkSpec, depth: usize, out: Region) -> Result<Region> {
    back_project(net, 0, depth, out)
}

/// One patch's lineage through the patch stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataflowBranch {
    /// (row, col) in the patch grid.
    pub patch_id: (usize, usize),
    /// Region of feature map `d` computed (or read, at `d = 0`) by this branch,
    /// for `d = 0..=patch_depth`.
    pub regions: Vec<Region>,
    /// Share of each depth's redundant elements attributed to this branch.
    pub overlap_elements: Vec<f64>,
}

impl DataflowBranch {
    pub fn label(&self) -> String {
        format!("({},{})", self.patch_id.0, self.patch_id.1)
    }

    /// Branch-local shapes of feature maps `0..=patch_depth`.
    pub fn shapes(&self, net_shapes: &[FeatureMapShape]) -> Vec<FeatureMapShape> {
        self.regions
            .iter()
            .zip(net_shapes)
            .map(|(r, s)| r.shape(s.channels))
            .collect()
    }

    /// The tile of the split map owned by this branch.
    pub fn tile(&self) -> Region {
        *self.regions.last().expect("branch has at least one region")
    }
}

/// Result of splitting the patch stage into branches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSplit {
    pub branches: Vec<DataflowBranch>,
    /// Full-network feature map shapes.
    pub shapes: Vec<FeatureMapShape>,
    /// Per depth, `sum_b |region_b(d)| - |union_b region_b(d)|` in elements.
    pub overlap_per_depth: Vec<u64>,
}

impl PatchSplit {
    pub fn patch_depth(&self) -> usize {
        self.overlap_per_depth.len() - 1
    }

    /// Redundant input elements relative to the input size: the share of the
    /// network input read more than once across branches.
    pub fn redundancy_ratio(&self) -> f64 {
        self.overlap_per_depth[0] as f64 / self.shapes[0].elements() as f64
    }

    /// Fraction of the split map owned by `branch` (its tile share).
    pub fn tile_fraction(&self, branch: usize) -> f64 {
        let s = self.patch_depth();
        let tile = self.branches[branch].tile();
        tile.area() as f64 / (self.shapes[s].height * self.shapes[s].width) as f64
    }
}

fn union_area(branches: &[DataflowBranch], d: usize, shape: &FeatureMapShape) -> usize {
    let mut covered = vec![false; shape.height * shape.width];
    for b in branches {
        let r = b.regions[d];
        for row in r.row_start..r.row_end {
            covered[row * shape.width + r.col_start..row * shape.width + r.col_end].fill(true);
        }
    }
    covered.iter().filter(|c| **c).count()
}

/// Axis boundaries of a `parts`-way split of `len`; the last part absorbs
/// any remainder.
fn tile_bounds(len: usize, parts: usize) -> Vec<(usize, usize)> {
    let step = len / parts;
    (0..parts)
        .map(|i| {
            let start = i * step;
            let end = if i + 1 == parts { len } else { start + step };
            (start, end)
        })
        .collect()
}

/// Splits the depth-`patch_depth` feature map into grid tiles and back-propagates
/// each tile through the patch stage.
pub fn split_patches(net: &NetworkSpec, strict_grid: bool) -> Result<PatchSplit> {
    let shapes = infer_shapes(net)?;
    let s = net.patch_depth;
    let (rows, cols) = net.patch_grid;
    let split = shapes[s];
    let uneven = split.height % rows != 0 || split.width % cols != 0;
    if split.height < rows || split.width < cols || (strict_grid && uneven) {
        return Err(Error::UnevenGrid {
            rows,
            cols,
            height: split.height,
            width: split.width,
        });
    }
    if let Some(layer) = (0..s).find(|&l| !net.layers[l].kind.is_spatial()) {
        return Err(Error::SpatialOnly { layer });
    }

    let mut branches = Vec::with_capacity(rows * cols);
    for (r, &(r0, r1)) in tile_bounds(split.height, rows).iter().enumerate() {
        for (c, &(c0, c1)) in tile_bounds(split.width, cols).iter().enumerate() {
            let tile = Region::new(r0, r1, c0, c1);
            let regions = (0..=s)
                .map(|d| back_project_with(net, &shapes, d, s, tile))
                .collect::<Result<Vec<_>>>()?;
            branches.push(DataflowBranch {
                patch_id: (r, c),
                regions,
                overlap_elements: vec![0.0; s + 1],
            });
        }
    }

    let mut overlap_per_depth = Vec::with_capacity(s + 1);
    for d in 0..=s {
        let ch = shapes[d].channels;
        let total: usize = branches.iter().map(|b| b.regions[d].area() * ch).sum();
        // Pixels no output depends on (stride > kernel, unread borders) are
        // covered by no region, so compare against the union.
        let overlap = total - union_area(&branches, d, &shapes[d]) * ch;
        overlap_per_depth.push(overlap as u64);
        for b in branches.iter_mut() {
            let share = (b.regions[d].area() * ch) as f64 / total as f64;
            b.overlap_elements[d] = overlap as f64 * share;
        }
    }

    Ok(PatchSplit {
        branches,
        shapes,
        overlap_per_depth,
    })
}
