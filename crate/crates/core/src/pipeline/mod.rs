//! End-to-end planning: calibrate, classify patches, score and search
//! bitwidths, then total up costs and measure output fidelity.
//!
//! Maps after the patch stage follow the branches: if any branch is
//! outlier-class they stay at 8 bits, otherwise they form one more chain that
//! is searched like a branch, on full-map shapes.

mod fidelity;
mod report;
mod simulate;
mod sweep;

pub use fidelity::{argmax, evaluate_fidelity, sqnr_db, Assignment, SQNR_CAP_DB};
pub use report::{
    write_atomic, BranchReport, CalibrationSummary, DynamicReport, Fidelity, PostStageReport, QuantPlan,
    ReportConfig, Totals,
};
pub use simulate::SimulationReport;
pub use sweep::{sweep, SweepParam, SweepResult, SweepRow};

use rayon::prelude::*;

use crate::actstats::{fit_gaussian, GaussianFit, OutlierModel, OutlierRule, QuantRange};
use crate::bits::Bitwidth;
use crate::error::{Error, Result};
use crate::netgraph::{mac_count, peak_of_bytes, split_patches, MemoryModel, NetworkSpec, PatchSplit};
use crate::refengine::{calibrate, CalibrationPools, CalibrationSet, WeightSet};
use crate::vdpc::{assign_policies, classify_all, PatchLabel, Policy};
use crate::vdqs::{build_score_table, search_bitwidths, ChainInput, QuantScoreTable, SearchConfig, SearchOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct PlanConfig {
    pub phi: f64,
    pub rule: OutlierRule,
    pub search: SearchConfig,
    pub dynamic: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            phi: 0.96,
            rule: OutlierRule::NormalizedDensity,
            search: SearchConfig::default(),
            dynamic: false,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.phi) {
            return Err(Error::Config(format!("phi must lie in [0, 1), got {}", self.phi)));
        }
        self.search.validate()
    }
}

/// Network, weights and calibration statistics that do not depend on the
/// planning hyperparameters; shared by every plan of a sweep.
#[derive(Debug, Clone)]
pub struct Calibrated {
    pub net: NetworkSpec,
    pub weights: WeightSet,
    weights_q: WeightSet,
    pub cal: CalibrationSet,
    pub split: PatchSplit,
    pub pools: CalibrationPools,
    /// Fit of the input values over all calibration samples.
    pub fit: GaussianFit,
    /// Full-map MACs per layer.
    pub macs: Vec<u64>,
    /// Per branch, MACs of patch-stage layers on branch regions.
    pub branch_macs: Vec<Vec<u64>>,
    /// Per branch, element counts of maps `0..=s`.
    pub branch_elements: Vec<Vec<u64>>,
    pub strict_grid: bool,
    pub seed: Option<u64>,
}

/// Search results for one chain of maps.
#[derive(Debug, Clone)]
struct ChainPlan {
    table: Option<QuantScoreTable>,
    /// `None` when the chain cannot meet the memory limit.
    mixed: Option<SearchOutcome>,
    warnings: Vec<String>,
}

impl Calibrated {
    pub fn new(
        net: NetworkSpec,
        weights: WeightSet,
        cal: CalibrationSet,
        strict_grid: bool,
        seed: Option<u64>,
    ) -> Result<Self> {
        net.validate()?;
        weights.validate(&net)?;
        let split = split_patches(&net, strict_grid)?;
        let pools = calibrate(&net, &weights, &cal, &split)?;
        let fit = fit_gaussian(&pools.full[0])?;
        let macs = mac_count(&net, &split.shapes)?;
        let s = net.patch_depth;
        let branch_macs = split
            .branches
            .iter()
            .map(|b| mac_count(&net, &b.shapes(&split.shapes[..=s])))
            .collect::<Result<Vec<_>>>()?;
        let branch_elements = split
            .branches
            .iter()
            .map(|b| b.shapes(&split.shapes).iter().map(|sh| sh.elements() as u64).collect())
            .collect();
        let weights_q = weights.fake_quantized(Bitwidth::Eight);
        Ok(Self {
            net,
            weights,
            weights_q,
            cal,
            split,
            pools,
            fit,
            macs,
            branch_macs,
            branch_elements,
            strict_grid,
            seed,
        })
    }

    pub fn patch_depth(&self) -> usize {
        self.net.patch_depth
    }

    fn post_maps(&self) -> std::ops::RangeInclusive<usize> {
        self.patch_depth() + 1..=self.net.layers.len()
    }

    /// MACs reading map `d` of branch `b`; the first post-stage layer is
    /// charged to branches by tile share.
    fn branch_consumer_macs(&self, b: usize) -> Vec<f64> {
        let s = self.patch_depth();
        let mut out: Vec<f64> = self.branch_macs[b].iter().map(|&m| m as f64).collect();
        out.push(if s < self.net.layers.len() {
            self.macs[s] as f64 * self.split.tile_fraction(b)
        } else {
            0.0
        });
        out
    }

    fn post_consumer_macs(&self) -> Vec<f64> {
        let last = self.net.layers.len();
        self.post_maps()
            .map(|j| if j < last { self.macs[j] as f64 } else { 0.0 })
            .collect()
    }

    fn chain_input(&self, branch: Option<usize>) -> ChainInput<'_> {
        match branch {
            Some(b) => ChainInput {
                consumer_macs: self.branch_consumer_macs(b),
                pools: (0..=self.patch_depth()).map(|d| self.pools.branch[b][d].as_slice()).collect(),
                ranges: self.pools.ranges[..=self.patch_depth()].to_vec(),
                elements: self.branch_elements[b].clone(),
            },
            None => ChainInput {
                consumer_macs: self.post_consumer_macs(),
                pools: self.post_maps().map(|j| self.pools.full[j].as_slice()).collect(),
                ranges: self.post_maps().map(|j| self.pools.ranges[j]).collect(),
                elements: self.post_maps().map(|j| self.split.shapes[j].elements() as u64).collect(),
            },
        }
    }

    fn chain_label(&self, branch: Option<usize>) -> String {
        match branch {
            Some(b) => format!("branch {}", self.split.branches[b].label()),
            None => "post-stage".to_string(),
        }
    }

    fn plan_chain(&self, branch: Option<usize>, cfg: &SearchConfig) -> Result<ChainPlan> {
        let chain = self.chain_input(branch);
        let label = self.chain_label(branch);
        let mut warnings = Vec::new();
        let table = match build_score_table(&chain, cfg) {
            Ok(t) => t,
            Err(Error::ZeroB) => {
                warnings.push(format!("{label} performs no MACs; its maps stay at 8 bits"));
                return Ok(ChainPlan {
                    table: None,
                    mixed: Some(SearchOutcome {
                        bits: vec![Bitwidth::Eight; chain.len()],
                        demotions: 0,
                    }),
                    warnings,
                });
            }
            Err(e) => return Err(e),
        };
        if table.degenerate_denominator {
            warnings.push(format!("{label}: last map has zero entropy at 8 bits; omega set to 0"));
        }
        let first = if branch.is_some() { 0 } else { self.patch_depth() + 1 };
        let gains: Vec<String> = table
            .maps
            .iter()
            .enumerate()
            .flat_map(|(i, m)| {
                m.cells
                    .iter()
                    .filter(|c| c.entropy_gain)
                    .map(move |c| format!("map {} at {}", first + i, c.bits))
            })
            .collect();
        if !gains.is_empty() {
            warnings.push(format!("{label}: quantization raises entropy ({})", gains.join(", ")));
        }
        let mixed = match search_bitwidths(&table.rankings(), &chain.elements, cfg.memory) {
            Ok(o) => Some(o),
            Err(Error::Infeasible { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(ChainPlan {
            table: Some(table),
            mixed,
            warnings,
        })
    }

    /// Patch-based BitOPs of an assignment (8-bit weights).
    pub fn bitops(&self, a: &Assignment) -> f64 {
        let s = self.patch_depth();
        let mut total = 0.0;
        for (b, bits) in a.branch_bits.iter().enumerate() {
            for (l, &m) in self.branch_macs[b].iter().enumerate() {
                total += m as f64 * 8.0 * bits[l].bits() as f64;
            }
        }
        for l in s..self.net.layers.len() {
            let m = self.macs[l] as f64;
            if l == s {
                for (b, bits) in a.branch_bits.iter().enumerate() {
                    total += m * self.split.tile_fraction(b) * 8.0 * bits[s].bits() as f64;
                }
            } else {
                total += m * 8.0 * a.post_bits[l - s - 1].bits() as f64;
            }
        }
        total
    }

    /// Layer-based BitOPs with every map at 8 bits.
    pub fn bitops_layer_based(&self) -> f64 {
        self.macs.iter().map(|&m| m as f64 * 64.0).sum()
    }

    /// Peak bytes of two live adjacent maps: inside each branch, then across
    /// the stitched split map and the post-stage maps.
    pub fn peak_memory(&self, a: &Assignment) -> u64 {
        let s = self.patch_depth();
        let mut peak = 0;
        for (b, bits) in a.branch_bits.iter().enumerate() {
            let mems: Vec<u64> = self.branch_elements[b]
                .iter()
                .zip(bits)
                .map(|(&n, &bw)| MemoryModel::mem(n, bw))
                .collect();
            peak = peak.max(peak_of_bytes(&mems));
        }
        let ch = self.split.shapes[s].channels as u64;
        let stitched: u64 = self
            .split
            .branches
            .iter()
            .zip(&a.branch_bits)
            .map(|(br, bits)| MemoryModel::mem(br.tile().area() as u64 * ch, bits[s]))
            .sum();
        let mut post = vec![stitched];
        post.extend(
            self.post_maps()
                .zip(&a.post_bits)
                .map(|(j, &bw)| MemoryModel::mem(self.split.shapes[j].elements() as u64, bw)),
        );
        peak.max(peak_of_bytes(&post))
    }

    /// Fidelity over the calibration inputs.
    pub fn fidelity<'a, F>(&self, assign: F) -> Result<Fidelity>
    where
        F: Fn(usize) -> &'a Assignment + Sync,
    {
        self.fidelity_with(&self.pools.ranges, assign)
    }

    fn fidelity_with<'a, F>(&self, ranges: &[QuantRange], assign: F) -> Result<Fidelity>
    where
        F: Fn(usize) -> &'a Assignment + Sync,
    {
        evaluate_fidelity(
            &self.net,
            &self.split,
            &self.weights,
            &self.weights_q,
            &self.cal.samples,
            &self.pools.outputs,
            ranges,
            assign,
        )
    }

    /// Builds the plan for one configuration.
    pub fn plan(&self, cfg: &PlanConfig) -> Result<QuantPlan> {
        cfg.validate()?;
        let s = self.patch_depth();
        let om = OutlierModel::new(self.fit, cfg.phi, cfg.rule)?;
        let classification = classify_all(&self.split, &self.pools, &om)?;
        let policies = assign_policies(&classification.classes);
        let mut warnings = classification.warnings.clone();

        let chains: Vec<ChainPlan> = (0..self.split.branches.len())
            .into_par_iter()
            .map(|b| self.plan_chain(Some(b), &cfg.search))
            .collect::<Result<_>>()?;
        let post_chain = if s < self.net.layers.len() {
            Some(self.plan_chain(None, &cfg.search)?)
        } else {
            None
        };

        let mut branches = Vec::with_capacity(chains.len());
        for ((class, policy), chain) in classification.classes.iter().zip(&policies).zip(&chains) {
            warnings.extend(chain.warnings.iter().cloned());
            let label = self.split.branches[class.branch].label();
            let (bits, demotions) = match policy.policy {
                Policy::Fixed8 => {
                    let bits = vec![Bitwidth::Eight; s + 1];
                    let elems = &self.branch_elements[class.branch];
                    let over = (0..s).any(|d| {
                        !cfg.search.memory.fits(
                            MemoryModel::mem(elems[d], Bitwidth::Eight) + MemoryModel::mem(elems[d + 1], Bitwidth::Eight),
                        )
                    });
                    if over {
                        warnings.push(format!(
                            "outlier-class branch {label} exceeds the memory limit at 8 bits"
                        ));
                    }
                    (bits, 0)
                }
                Policy::MixedPrecision => match &chain.mixed {
                    Some(o) => (o.bits.clone(), o.demotions),
                    None => return Err(Error::Infeasible { branch: Some(label) }),
                },
            };
            branches.push(BranchReport {
                patch_id: class.patch_id,
                class: class.label,
                outlier_samples: class.outlier_samples,
                policy: policy.policy,
                bits,
                mixed_bits: chain.mixed.as_ref().map(|o| o.bits.clone()),
                demotions,
                score_table: chain.table.clone(),
            });
        }

        let any_outlier = branches.iter().any(|b| b.class == PatchLabel::OutlierClass);
        let post_len = self.net.layers.len() - s;
        let post_mixed = post_chain.as_ref().and_then(|c| c.mixed.as_ref()).map(|o| o.bits.clone());
        if let Some(c) = &post_chain {
            warnings.extend(c.warnings.iter().cloned());
        }
        let post_stage_bits = if any_outlier || post_len == 0 {
            vec![Bitwidth::Eight; post_len]
        } else {
            post_mixed.clone().ok_or(Error::Infeasible {
                branch: Some("post-stage".into()),
            })?
        };

        let static_assign = Assignment {
            branch_bits: branches.iter().map(|b| b.bits.clone()).collect(),
            post_bits: post_stage_bits.clone(),
        };
        let patch8 = Assignment::uniform(&self.split, &self.net, Bitwidth::Eight);
        let totals = Totals {
            bitops_layer_based: self.bitops_layer_based(),
            bitops_patch8: self.bitops(&patch8),
            bitops_plan: self.bitops(&static_assign),
            peak_mem_patch8: self.peak_memory(&patch8),
            peak_mem_plan: self.peak_memory(&static_assign),
            redundancy_ratio: self.split.redundancy_ratio(),
        };
        let fidelity = self.fidelity(|_| &static_assign)?;

        let dynamic = if cfg.dynamic {
            let (report, dyn_warnings) = dynamic_report_labels(
                self,
                &classification.per_sample,
                &branches,
                post_mixed.as_deref(),
                &self.pools.ranges,
            )?;
            warnings.extend(dyn_warnings);
            Some(report)
        } else {
            None
        };

        Ok(QuantPlan {
            network: self.net.name.clone(),
            config: ReportConfig {
                phi: cfg.phi,
                lambda: cfg.search.lambda,
                k: cfg.search.bins,
                mem_limit: cfg.search.memory.mem_limit,
                candidates: cfg.search.candidates.clone(),
                seed: self.seed,
                outlier_rule: cfg.rule,
                phi_baseline: cfg.search.phi_baseline,
                strict_grid: self.strict_grid,
                dynamic: cfg.dynamic,
            },
            calibration: CalibrationSummary {
                samples: self.pools.sample_count,
                mu: self.fit.mu,
                sigma: self.fit.sigma,
                threshold: om.threshold(),
                ranges: self.pools.ranges.clone(),
            },
            branches,
            post_stage_bits,
            post_stage: PostStageReport {
                mixed_bits: post_mixed,
                score_table: post_chain.and_then(|c| c.table),
            },
            totals,
            fidelity,
            dynamic,
            warnings,
        })
    }
}

/// Per-sample assignments: each branch follows its own class in that
/// sample; post-stage maps are mixed only when no patch of the sample is
/// outlier-class.
fn dynamic_report_labels(
    ctx: &Calibrated,
    per_sample: &[Vec<crate::vdpc::PatchVerdict>],
    branches: &[BranchReport],
    post_mixed: Option<&[Bitwidth]>,
    ranges: &[QuantRange],
) -> Result<(DynamicReport, Vec<String>)> {
    let labels: Vec<Vec<PatchLabel>> = per_sample.iter().map(|row| row.iter().map(|v| v.label).collect()).collect();
    let (assignments, warnings) = dynamic_assignments(&labels, branches, post_mixed, ctx.net.layers.len() - ctx.patch_depth());
    let n = assignments.len().max(1) as f64;
    let outlier_fraction = labels
        .iter()
        .map(|row| row.iter().filter(|l| **l == PatchLabel::OutlierClass).count() as f64 / row.len().max(1) as f64)
        .sum::<f64>()
        / n;
    let mean_bitops_plan = assignments.iter().map(|a| ctx.bitops(a)).sum::<f64>() / n;
    let mean_peak_mem_plan = assignments.iter().map(|a| ctx.peak_memory(a) as f64).sum::<f64>() / n;
    let fidelity = ctx.fidelity_with(ranges, |i| &assignments[i])?;
    Ok((
        DynamicReport {
            outlier_fraction,
            mean_bitops_plan,
            mean_peak_mem_plan,
            fidelity,
        },
        warnings,
    ))
}

/// Assignments for per-sample patch labels. A branch whose search was
/// infeasible stays at 8 bits.
pub fn dynamic_assignments(
    labels: &[Vec<PatchLabel>],
    branches: &[BranchReport],
    post_mixed: Option<&[Bitwidth]>,
    post_len: usize,
) -> (Vec<Assignment>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut warned = vec![false; branches.len()];
    let mut warned_post = false;
    let assignments = labels
        .iter()
        .map(|row| {
            let branch_bits = branches
                .iter()
                .zip(row)
                .enumerate()
                .map(|(b, (br, label))| match (label, &br.mixed_bits) {
                    (PatchLabel::NonOutlierClass, Some(bits)) => bits.clone(),
                    (PatchLabel::NonOutlierClass, None) => {
                        if !warned[b] {
                            warned[b] = true;
                            warnings.push(format!(
                                "dynamic: branch ({},{}) has no feasible mixed assignment; kept at 8 bits",
                                br.patch_id.0, br.patch_id.1
                            ));
                        }
                        vec![Bitwidth::Eight; br.bits.len()]
                    }
                    (PatchLabel::OutlierClass, _) => vec![Bitwidth::Eight; br.bits.len()],
                })
                .collect();
            let clean = row.iter().all(|l| *l == PatchLabel::NonOutlierClass);
            let post_bits = match (clean, post_mixed) {
                (true, Some(bits)) => bits.to_vec(),
                (true, None) if post_len > 0 => {
                    if !warned_post {
                        warned_post = true;
                        warnings.push("dynamic: post-stage has no feasible mixed assignment; kept at 8 bits".into());
                    }
                    vec![Bitwidth::Eight; post_len]
                }
                _ => vec![Bitwidth::Eight; post_len],
            };
            Assignment { branch_bits, post_bits }
        })
        .collect();
    (assignments, warnings)
}

/// One-shot planning: calibrate and build a plan.
pub fn build_plan(
    net: &NetworkSpec,
    weights: &WeightSet,
    cal: &CalibrationSet,
    cfg: &PlanConfig,
    strict_grid: bool,
) -> Result<QuantPlan> {
    Calibrated::new(net.clone(), weights.clone(), cal.clone(), strict_grid, None)?.plan(cfg)
}
