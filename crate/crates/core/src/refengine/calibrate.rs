use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::format::{list_tensor_files, load_tensor};
use super::forward::forward_fp;
use super::tensor::Tensor;
use super::weights::WeightSet;
use crate::actstats::QuantRange;
use crate::error::{Error, Result};
use crate::netgraph::{NetworkSpec, PatchSplit};

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub samples: Vec<Tensor>,
    pub sources: Vec<PathBuf>,
}

impl CalibrationSet {
    pub fn new(samples: Vec<Tensor>) -> Self {
        Self {
            samples,
            sources: Vec::new(),
        }
    }

    /// Loads every `.qmtn` file of `dir` in lexicographic order.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let sources = list_tensor_files(dir)?;
        let samples = sources.iter().map(|p| load_tensor(p)).collect::<Result<Vec<_>>>()?;
        if samples.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        Ok(Self { samples, sources })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Raw activation pools gathered from calibration runs.
#[derive(Debug, Clone)]
pub struct CalibrationPools {
    pub sample_count: usize,
    /// `branch[b][d]`: values of branch `b`'s region of map `d` (`d <= s`),
    /// concatenated over samples in order.
    pub branch: Vec<Vec<Vec<f32>>>,
    /// `full[i]`: every value of map `i`, concatenated over samples.
    pub full: Vec<Vec<f32>>,
    /// Per-map observed range over all samples.
    pub ranges: Vec<QuantRange>,
    /// Float network outputs per sample.
    pub outputs: Vec<Tensor>,
}

impl CalibrationPools {
    /// Values of branch `b`'s region of map `d` for one sample.
    pub fn branch_sample(&self, b: usize, d: usize, sample: usize) -> &[f32] {
        let pool = &self.branch[b][d];
        let per = pool.len() / self.sample_count;
        &pool[sample * per..(sample + 1) * per]
    }

    /// Pool that statistics of map `i` use for branch `b`: the branch-local
    /// region inside the patch stage, the shared full map after it.
    pub fn pool_for(&self, b: Option<usize>, i: usize) -> &[f32] {
        match b {
            Some(b) if i < self.branch[b].len() => &self.branch[b][i],
            _ => &self.full[i],
        }
    }
}

/// Runs the float network over the calibration set and pools activations per
/// branch (patch stage) and per map (everywhere).
pub fn calibrate(
    net: &NetworkSpec,
    weights: &WeightSet,
    cal: &CalibrationSet,
    split: &PatchSplit,
) -> Result<CalibrationPools> {
    if cal.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let runs: Vec<Vec<Tensor>> = cal
        .samples
        .par_iter()
        .map(|x| forward_fp(net, weights, x))
        .collect::<Result<_>>()?;

    let maps = net.map_count();
    let s = net.patch_depth;
    let mut full: Vec<Vec<f32>> = (0..maps)
        .map(|i| Vec::with_capacity(split.shapes[i].elements() * runs.len()))
        .collect();
    let mut branch: Vec<Vec<Vec<f32>>> = split
        .branches
        .iter()
        .map(|b| {
            (0..=s)
                .map(|d| Vec::with_capacity(b.regions[d].area() * split.shapes[d].channels * runs.len()))
                .collect()
        })
        .collect();

    for run in &runs {
        for (i, map) in run.iter().enumerate() {
            full[i].extend_from_slice(map.data());
        }
        for (b, br) in split.branches.iter().enumerate() {
            for d in 0..=s {
                branch[b][d].extend_from_slice(run[d].extract(br.regions[d])?.data());
            }
        }
    }
    let ranges = full
        .iter()
        .map(|pool| QuantRange::observed(pool))
        .collect::<Result<Vec<_>>>()?;
    let outputs = runs
        .into_iter()
        .map(|mut r| r.pop().expect("at least one map"))
        .collect();

    Ok(CalibrationPools {
        sample_count: cal.len(),
        branch,
        full,
        ranges,
        outputs,
    })
}
