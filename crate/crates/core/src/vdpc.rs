//! Value-driven patch classification.
//!
//! A patch containing at least one outlier value is outlier-class and its
//! whole dataflow branch stays at 8 bits; every other branch is handed to the
//! mixed-precision search.

use serde::{Deserialize, Serialize};

use crate::actstats::{OutlierModel, ValueClass};
use crate::error::{Error, Result};
use crate::netgraph::PatchSplit;
use crate::refengine::CalibrationPools;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchLabel {
    OutlierClass,
    NonOutlierClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Fixed8,
    MixedPrecision,
}

/// Verdict for one patch of one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchVerdict {
    pub label: PatchLabel,
    pub outlier_count: usize,
    pub fraction_outlier_values: f64,
}

/// Planning label of a branch across the calibration set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchClass {
    pub branch: usize,
    pub patch_id: (usize, usize),
    /// Majority label over samples; ties go to the outlier class.
    pub label: PatchLabel,
    pub outlier_samples: usize,
    /// Outlier values summed over all samples.
    pub outlier_count: usize,
    pub fraction_outlier_values: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchPolicy {
    pub branch: usize,
    pub policy: Policy,
}

pub fn classify_patch(values: &[f32], om: &OutlierModel) -> Result<PatchVerdict> {
    if values.is_empty() {
        return Err(Error::EmptyPatch);
    }
    let mut outliers = 0usize;
    for &v in values {
        if om.classify_value(v as f64)? == ValueClass::Outlier {
            outliers += 1;
        }
    }
    Ok(PatchVerdict {
        label: if outliers > 0 {
            PatchLabel::OutlierClass
        } else {
            PatchLabel::NonOutlierClass
        },
        outlier_count: outliers,
        fraction_outlier_values: outliers as f64 / values.len() as f64,
    })
}

/// Static labels plus the per-sample classification table.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub classes: Vec<PatchClass>,
    /// `per_sample[sample][branch]`.
    pub per_sample: Vec<Vec<PatchVerdict>>,
    pub warnings: Vec<String>,
}

impl Classification {
    pub fn outlier_fraction(&self) -> f64 {
        let n = self.classes.len().max(1);
        self.classes
            .iter()
            .filter(|c| c.label == PatchLabel::OutlierClass)
            .count() as f64
            / n as f64
    }

    /// Mean over samples of the share of outlier-class patches.
    pub fn dynamic_outlier_fraction(&self) -> f64 {
        if self.per_sample.is_empty() {
            return 0.0;
        }
        let total: usize = self
            .per_sample
            .iter()
            .map(|row| row.iter().filter(|v| v.label == PatchLabel::OutlierClass).count())
            .sum();
        total as f64 / (self.per_sample.len() * self.classes.len().max(1)) as f64
    }
}

/// Classifies every branch's input patch (map 0 of the branch) for every
/// calibration sample and derives the majority label per branch.
pub fn classify_all(split: &PatchSplit, pools: &CalibrationPools, om: &OutlierModel) -> Result<Classification> {
    let mut warnings = Vec::new();
    let degenerate = om.fit.is_degenerate();
    if degenerate {
        warnings.push(
            "split-map activations have zero spread; every patch is non-outlier class".to_string(),
        );
    }
    let branches = split.branches.len();
    let mut per_sample = Vec::with_capacity(pools.sample_count);
    for sample in 0..pools.sample_count {
        let mut row = Vec::with_capacity(branches);
        for b in 0..branches {
            let values = pools.branch_sample(b, 0, sample);
            let verdict = if degenerate {
                if values.is_empty() {
                    return Err(Error::EmptyPatch);
                }
                PatchVerdict {
                    label: PatchLabel::NonOutlierClass,
                    outlier_count: 0,
                    fraction_outlier_values: 0.0,
                }
            } else {
                classify_patch(values, om)?
            };
            row.push(verdict);
        }
        per_sample.push(row);
    }

    let classes = split
        .branches
        .iter()
        .enumerate()
        .map(|(b, branch)| {
            let outlier_samples = per_sample
                .iter()
                .filter(|row| row[b].label == PatchLabel::OutlierClass)
                .count();
            let outlier_count: usize = per_sample.iter().map(|row| row[b].outlier_count).sum();
            let values = pools.branch[b][0].len().max(1);
            PatchClass {
                branch: b,
                patch_id: branch.patch_id,
                label: if 2 * outlier_samples >= per_sample.len() && outlier_samples > 0 {
                    PatchLabel::OutlierClass
                } else {
                    PatchLabel::NonOutlierClass
                },
                outlier_samples,
                outlier_count,
                fraction_outlier_values: outlier_count as f64 / values as f64,
            }
        })
        .collect();

    Ok(Classification {
        classes,
        per_sample,
        warnings,
    })
}

pub fn policy_for(label: PatchLabel) -> Policy {
    match label {
        PatchLabel::OutlierClass => Policy::Fixed8,
        PatchLabel::NonOutlierClass => Policy::MixedPrecision,
    }
}

pub fn assign_policies(classes: &[PatchClass]) -> Vec<BranchPolicy> {
    classes
        .iter()
        .map(|c| BranchPolicy {
            branch: c.branch,
            policy: policy_for(c.label),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actstats::{GaussianFit, OutlierRule};

    fn om(phi: f64) -> OutlierModel {
        OutlierModel::new(
            GaussianFit {
                mu: 0.0,
                sigma: 1.0,
                sample_count: 10,
            },
            phi,
            OutlierRule::NormalizedDensity,
        )
        .unwrap()
    }

    #[test]
    fn values_at_the_mean_are_non_outlier() {
        let v = classify_patch(&[0.0; 9], &om(0.96)).unwrap();
        assert_eq!(v.label, PatchLabel::NonOutlierClass);
        assert_eq!(v.outlier_count, 0);
    }

    #[test]
    fn one_tail_value_makes_an_outlier_patch() {
        let v = classify_patch(&[0.1, -0.3, 3.0], &om(0.96)).unwrap();
        assert_eq!(v.label, PatchLabel::OutlierClass);
        assert_eq!(v.outlier_count, 1);
        assert!((v.fraction_outlier_values - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_phi_puts_every_value_past_the_threshold() {
        let v = classify_patch(&[0.25, -0.1], &om(0.0)).unwrap();
        assert_eq!(v.label, PatchLabel::OutlierClass);
        assert_eq!(v.outlier_count, 2);
    }

    #[test]
    fn empty_patch_errors() {
        assert!(matches!(classify_patch(&[], &om(0.5)), Err(Error::EmptyPatch)));
    }

    #[test]
    fn policies_follow_labels_in_order() {
        let mk = |b, label| PatchClass {
            branch: b,
            patch_id: (0, b),
            label,
            outlier_samples: 0,
            outlier_count: 0,
            fraction_outlier_values: 0.0,
        };
        let classes = vec![
            mk(0, PatchLabel::OutlierClass),
            mk(1, PatchLabel::NonOutlierClass),
            mk(2, PatchLabel::OutlierClass),
        ];
        let p = assign_policies(&classes);
        assert_eq!(
            p.iter().map(|p| p.policy).collect::<Vec<_>>(),
            vec![Policy::Fixed8, Policy::MixedPrecision, Policy::Fixed8]
        );
        assert_eq!(p.iter().map(|p| p.branch).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
