//! Re-evaluation of a saved plan against a (possibly different) calibration set.

use serde::{Deserialize, Serialize};

use super::{dynamic_report_labels, Assignment, Calibrated, DynamicReport, Fidelity, QuantPlan, Totals};
use crate::actstats::{GaussianFit, OutlierModel};
use crate::bits::Bitwidth;
use crate::error::{Error, Result};
use crate::vdpc::classify_all;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub network: String,
    pub samples: usize,
    pub totals: Totals,
    pub fidelity: Fidelity,
    pub dynamic: Option<DynamicReport>,
    pub warnings: Vec<String>,
}

impl SimulationReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

impl Calibrated {
    /// Executes `plan` with its stored quantization ranges on this context's
    /// inputs. Dynamic plans are re-classified per sample with the stored fit.
    pub fn simulate(&self, plan: &QuantPlan) -> Result<SimulationReport> {
        self.check_plan(plan)?;
        let ranges = &plan.calibration.ranges;
        let assign = Assignment {
            branch_bits: plan.branch_bits(),
            post_bits: plan.post_stage_bits.clone(),
        };
        let patch8 = Assignment::uniform(&self.split, &self.net, Bitwidth::Eight);
        let totals = Totals {
            bitops_layer_based: self.bitops_layer_based(),
            bitops_patch8: self.bitops(&patch8),
            bitops_plan: self.bitops(&assign),
            peak_mem_patch8: self.peak_memory(&patch8),
            peak_mem_plan: self.peak_memory(&assign),
            redundancy_ratio: self.split.redundancy_ratio(),
        };
        let fidelity = self.fidelity_with(ranges, |_| &assign)?;

        let mut warnings = Vec::new();
        let dynamic = if plan.config.dynamic {
            let fit = GaussianFit {
                mu: plan.calibration.mu,
                sigma: plan.calibration.sigma,
                sample_count: plan.calibration.samples,
            };
            let om = OutlierModel::new(fit, plan.config.phi, plan.config.outlier_rule)?;
            let classification = classify_all(&self.split, &self.pools, &om)?;
            warnings.extend(classification.warnings.iter().cloned());
            let (report, w) = dynamic_report_labels(
                self,
                &classification.per_sample,
                &plan.branches,
                plan.post_stage.mixed_bits.as_deref(),
                ranges,
            )?;
            warnings.extend(w);
            Some(report)
        } else {
            None
        };

        Ok(SimulationReport {
            network: self.net.name.clone(),
            samples: self.cal.len(),
            totals,
            fidelity,
            dynamic,
            warnings,
        })
    }

    fn check_plan(&self, plan: &QuantPlan) -> Result<()> {
        let s = self.patch_depth();
        let bad = |msg: String| Err(Error::Config(format!("plan does not fit network {}: {msg}", self.net.name)));
        if plan.network != self.net.name {
            return bad(format!("plan is for network {}", plan.network));
        }
        if plan.branches.len() != self.split.branches.len() {
            return bad(format!("{} branches, expected {}", plan.branches.len(), self.split.branches.len()));
        }
        if plan.branches.iter().any(|b| b.bits.len() != s + 1) {
            return bad(format!("branch bitwidth lists must have {} entries", s + 1));
        }
        if plan.post_stage_bits.len() != self.net.layers.len() - s {
            return bad(format!("post-stage bitwidth list must have {} entries", self.net.layers.len() - s));
        }
        if plan.calibration.ranges.len() != self.net.map_count() {
            return bad(format!("{} quantization ranges, expected {}", plan.calibration.ranges.len(), self.net.map_count()));
        }
        Ok(())
    }
}
