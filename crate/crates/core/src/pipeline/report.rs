use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::actstats::{OutlierRule, QuantRange};
use crate::bits::Bitwidth;
use crate::error::{Error, Result};
use crate::vdpc::{PatchLabel, Policy};
use crate::vdqs::{PhiBaseline, QuantScoreTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub phi: f64,
    pub lambda: f64,
    pub k: usize,
    /// Memory limit in bytes; `null` when unconstrained.
    #[serde(rename = "M")]
    pub mem_limit: Option<u64>,
    pub candidates: Vec<Bitwidth>,
    pub seed: Option<u64>,
    pub outlier_rule: OutlierRule,
    pub phi_baseline: PhiBaseline,
    pub strict_grid: bool,
    pub dynamic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub samples: usize,
    pub mu: f64,
    pub sigma: f64,
    /// Distance from `mu` beyond which input values are outliers.
    pub threshold: f64,
    /// Quantization range of every feature map.
    pub ranges: Vec<QuantRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub patch_id: (usize, usize),
    pub class: PatchLabel,
    /// Calibration samples in which this patch held an outlier value.
    pub outlier_samples: usize,
    pub policy: Policy,
    /// Bitwidth of each branch-local feature map `0..=s`.
    pub bits: Vec<Bitwidth>,
    /// Assignment the search produced for this branch, used whenever the
    /// branch is handled as non-outlier (`null` if infeasible).
    pub mixed_bits: Option<Vec<Bitwidth>>,
    pub demotions: usize,
    pub score_table: Option<QuantScoreTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostStageReport {
    /// Search result for the post-stage maps when no branch is outlier-class
    /// (`null` if infeasible).
    pub mixed_bits: Option<Vec<Bitwidth>>,
    pub score_table: Option<QuantScoreTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub bitops_layer_based: f64,
    pub bitops_patch8: f64,
    pub bitops_plan: f64,
    pub peak_mem_patch8: u64,
    pub peak_mem_plan: u64,
    pub redundancy_ratio: f64,
}

impl Totals {
    pub fn bitops_ratio(&self) -> f64 {
        self.bitops_plan / self.bitops_patch8
    }

    pub fn peak_mem_ratio(&self) -> f64 {
        self.peak_mem_plan as f64 / self.peak_mem_patch8 as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    /// Mean output SQNR in dB; `null` when no sample has a defined SQNR.
    pub sqnr_db: Option<f64>,
    /// Share of samples whose float and quantized argmax agree (fc nets only).
    pub agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicReport {
    /// Mean over samples of the share of outlier-class patches.
    pub outlier_fraction: f64,
    pub mean_bitops_plan: f64,
    pub mean_peak_mem_plan: f64,
    pub fidelity: Fidelity,
}

/// A complete quantization plan and its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantPlan {
    pub network: String,
    pub config: ReportConfig,
    pub calibration: CalibrationSummary,
    pub branches: Vec<BranchReport>,
    /// Bitwidths of feature maps `s + 1..=L`.
    pub post_stage_bits: Vec<Bitwidth>,
    pub post_stage: PostStageReport,
    pub totals: Totals,
    pub fidelity: Fidelity,
    pub dynamic: Option<DynamicReport>,
    pub warnings: Vec<String>,
}

impl QuantPlan {
    pub fn outlier_fraction(&self) -> f64 {
        let n = self.branches.len().max(1);
        self.branches.iter().filter(|b| b.class == PatchLabel::OutlierClass).count() as f64 / n as f64
    }

    pub fn branch_bits(&self) -> Vec<Vec<Bitwidth>> {
        self.branches.iter().map(|b| b.bits.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn atomic_write_into_missing_dir_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nope").join("r.json");
        assert!(write_atomic(&p, b"x").is_err());
        assert!(!p.exists());
    }
}
