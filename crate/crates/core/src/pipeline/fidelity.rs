use rayon::prelude::*;

use super::report::Fidelity;
use crate::actstats::QuantRange;
use crate::bits::Bitwidth;
use crate::error::{Error, Result};
use crate::netgraph::{LayerKind, NetworkSpec, PatchSplit};
use crate::refengine::{forward_patched_prepared, Tensor, WeightSet};

/// Reported in place of an infinite SQNR (exact reproduction).
pub const SQNR_CAP_DB: f64 = 300.0;

/// Bitwidths for one patch-based execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub branch_bits: Vec<Vec<Bitwidth>>,
    pub post_bits: Vec<Bitwidth>,
}

impl Assignment {
    pub fn uniform(split: &PatchSplit, net: &NetworkSpec, bits: Bitwidth) -> Self {
        let s = net.patch_depth;
        Self {
            branch_bits: vec![vec![bits; s + 1]; split.branches.len()],
            post_bits: vec![bits; net.layers.len() - s],
        }
    }

    pub fn is_all_float(&self) -> bool {
        self.branch_bits
            .iter()
            .flatten()
            .chain(&self.post_bits)
            .all(|b| *b == Bitwidth::Full)
    }
}

/// `10 log10(signal / noise)` with infinite ratios capped; `None` when both
/// are zero.
pub fn sqnr_db(reference: &[f32], approx: &[f32]) -> Option<f64> {
    let mut signal = 0.0f64;
    let mut noise = 0.0f64;
    for (&y, &q) in reference.iter().zip(approx) {
        let (y, q) = (y as f64, q as f64);
        signal += y * y;
        noise += (y - q) * (y - q);
    }
    match (signal > 0.0, noise > 0.0) {
        (_, false) if signal == 0.0 => None,
        (_, false) => Some(SQNR_CAP_DB),
        (false, true) => Some(-SQNR_CAP_DB),
        (true, true) => Some((10.0 * (signal / noise).log10()).clamp(-SQNR_CAP_DB, SQNR_CAP_DB)),
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f32]) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Runs every input patch-wise under `assign(sample)` and compares final
/// outputs with `references`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_fidelity<'a, F>(
    net: &NetworkSpec,
    split: &PatchSplit,
    weights: &WeightSet,
    weights_q: &WeightSet,
    inputs: &[Tensor],
    references: &[Tensor],
    ranges: &[QuantRange],
    assign: F,
) -> Result<Fidelity>
where
    F: Fn(usize) -> &'a Assignment + Sync,
{
    if inputs.len() != references.len() {
        return Err(Error::LengthMismatch {
            what: "reference outputs",
            expected: inputs.len(),
            actual: references.len(),
        });
    }
    let per_sample: Vec<(Option<f64>, bool)> = (0..inputs.len())
        .into_par_iter()
        .map(|n| {
            let a = assign(n);
            let w = if a.is_all_float() { weights } else { weights_q };
            let maps = forward_patched_prepared(net, split, w, &inputs[n], &a.branch_bits, &a.post_bits, ranges)?;
            let out = maps.last().expect("at least one map");
            let reference = references[n].data();
            Ok((sqnr_db(reference, out.data()), argmax(reference) == argmax(out.data())))
        })
        .collect::<Result<_>>()?;

    let defined: Vec<f64> = per_sample.iter().filter_map(|(s, _)| *s).collect();
    let sqnr = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    let is_fc = net.layers.last().is_some_and(|l| l.kind == LayerKind::Fc);
    let agreement = (is_fc && !per_sample.is_empty())
        .then(|| per_sample.iter().filter(|(_, a)| *a).count() as f64 / per_sample.len() as f64);
    Ok(Fidelity {
        sqnr_db: sqnr,
        agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqnr_cases() {
        assert_eq!(sqnr_db(&[1.0, 2.0], &[1.0, 2.0]), Some(SQNR_CAP_DB));
        assert_eq!(sqnr_db(&[0.0, 0.0], &[0.0, 0.0]), None);
        // signal 10, noise 0.1 -> 20 dB
        let s = sqnr_db(&[1.0, 3.0], &[1.0, 3.0 + 0.316_227_77]).unwrap();
        assert!((s - 20.0).abs() < 1e-5);
    }

    #[test]
    fn argmax_takes_first_max() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }
}
