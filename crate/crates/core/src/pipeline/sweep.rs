use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Assignment, Calibrated, PlanConfig};
use crate::bits::Bitwidth;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Phi,
    Lambda,
}

impl SweepParam {
    fn check(self, v: f64) -> bool {
        match self {
            SweepParam::Phi => (0.0..1.0).contains(&v),
            SweepParam::Lambda => (0.0..=1.0).contains(&v),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Phi => "phi",
            SweepParam::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub bitops_plan: Option<f64>,
    pub peak_mem_plan: Option<u64>,
    pub outlier_fraction: Option<f64>,
    pub sqnr_db: Option<f64>,
    pub agreement: Option<f64>,
    /// Failure of this row, e.g. an infeasible memory limit.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    pub bitops_patch8: f64,
    pub rows: Vec<SweepRow>,
}

/// Plans once per grid value, reusing the calibration in `ctx`. Infeasible
/// rows are recorded rather than aborting the sweep.
pub fn sweep(ctx: &Calibrated, param: SweepParam, grid: &[f64], base: &PlanConfig) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("sweep grid must be strictly increasing".into()));
    }
    if let Some(v) = grid.iter().find(|v| !param.check(**v)) {
        return Err(Error::Config(format!("{} value {v} is out of range", param.name())));
    }
    let rows = grid
        .par_iter()
        .map(|&value| {
            let mut cfg = base.clone();
            match param {
                SweepParam::Phi => cfg.phi = value,
                SweepParam::Lambda => cfg.search.lambda = value,
            }
            match ctx.plan(&cfg) {
                Ok(plan) => Ok(SweepRow {
                    value,
                    bitops_plan: Some(plan.totals.bitops_plan),
                    peak_mem_plan: Some(plan.totals.peak_mem_plan),
                    outlier_fraction: Some(plan.outlier_fraction()),
                    sqnr_db: plan.fidelity.sqnr_db,
                    agreement: plan.fidelity.agreement,
                    error: None,
                }),
                Err(e @ Error::Infeasible { .. }) => Ok(SweepRow {
                    value,
                    bitops_plan: None,
                    peak_mem_plan: None,
                    outlier_fraction: None,
                    sqnr_db: None,
                    agreement: None,
                    error: Some(e.to_string()),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let patch8 = Assignment::uniform(&ctx.split, &ctx.net, Bitwidth::Eight);
    Ok(SweepResult {
        param,
        grid: grid.to_vec(),
        bitops_patch8: ctx.bitops(&patch8),
        rows,
    })
}

impl SweepResult {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
