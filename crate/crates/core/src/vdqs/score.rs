//! Quantization score: a weighted trade-off between the normalized BitOPs
//! saving `phi` and the normalized entropy loss `omega` of quantizing one
//! feature map of a chain to a candidate bitwidth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actstats::{fake_quantize, histogram_entropy, QuantRange};
use crate::bits::Bitwidth;
use crate::error::{Error, Result};
use crate::netgraph::MemoryModel;

/// Reference precision that BitOPs savings are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiBaseline {
    /// Every map and weight at 8 bits.
    #[default]
    Int8,
    /// Weights and activations at 32 bits.
    Fp32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub lambda: f64,
    pub candidates: Vec<Bitwidth>,
    pub bins: usize,
    pub memory: MemoryModel,
    pub b_last: Bitwidth,
    pub phi_baseline: PhiBaseline,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            lambda: 0.6,
            candidates: Bitwidth::CANDIDATES.to_vec(),
            bins: 256,
            memory: MemoryModel::unlimited(),
            b_last: Bitwidth::Eight,
            phi_baseline: PhiBaseline::Int8,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.candidates.is_empty() || self.candidates.iter().any(|b| !b.is_candidate()) {
            return Err(Error::Config("candidates must be a nonempty subset of {2, 4, 8}".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be >= 1".into()));
        }
        Ok(())
    }
}

/// The inputs scoring needs about one chain of feature maps `0..=N`.
#[derive(Debug, Clone)]
pub struct ChainInput<'a> {
    /// MACs of the layers reading map `i`, attributed to this chain.
    pub consumer_macs: Vec<f64>,
    /// Calibration pool of map `i` as seen by this chain.
    pub pools: Vec<&'a [f32]>,
    /// Quantization range of map `i`.
    pub ranges: Vec<QuantRange>,
    /// Element count of map `i` for memory accounting.
    pub elements: Vec<u64>,
}

impl ChainInput<'_> {
    pub fn len(&self) -> usize {
        self.consumer_macs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consumer_macs.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        for (what, len) in [
            ("chain pools", self.pools.len()),
            ("chain ranges", self.ranges.len()),
            ("chain elements", self.elements.len()),
        ] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    actual: len,
                });
            }
        }
        if n == 0 {
            return Err(Error::Config("chain has no feature maps".into()));
        }
        Ok(())
    }
}

/// Branch BitOPs at the baseline precision.
pub fn baseline_bitops(consumer_macs: &[f64], baseline: PhiBaseline) -> f64 {
    let per_mac = match baseline {
        PhiBaseline::Int8 => 64.0,
        PhiBaseline::Fp32 => 1024.0,
    };
    consumer_macs.iter().sum::<f64>() * per_mac
}

/// BitOPs reduction of map `i` at `bits` (all other maps at the baseline) and
/// its share `phi` of the branch total.
pub fn phi_score(i: usize, bits: Bitwidth, consumer_macs: &[f64], baseline: PhiBaseline) -> Result<(f64, f64)> {
    let total = baseline_bitops(consumer_macs, baseline);
    if total <= 0.0 {
        return Err(Error::ZeroB);
    }
    let b = bits.bits() as f64;
    let delta = match baseline {
        PhiBaseline::Int8 => consumer_macs[i] * 8.0 * (8.0 - b),
        PhiBaseline::Fp32 => consumer_macs[i] * (1024.0 - 8.0 * b),
    };
    Ok((delta, delta / total))
}

/// Entropy of `pool` after quantizing it to `bits` over `range`.
pub fn quantized_entropy(pool: &[f32], bits: Bitwidth, range: QuantRange, k: usize) -> Result<f64> {
    let q = fake_quantize(pool, bits, range)?;
    Ok(histogram_entropy(&q, k, range)?.entropy_bits)
}

/// `(delta_h, omega)` of quantizing `pool` to `bits`, given the float entropy
/// of the pool and the chain's last-map entropy `h_last`. A zero denominator
/// yields `omega = 0`.
pub fn omega_score(
    pool: &[f32],
    bits: Bitwidth,
    range: QuantRange,
    k: usize,
    h_fp: f64,
    h_last: f64,
) -> Result<(f64, f64, f64)> {
    let h = quantized_entropy(pool, bits, range, k)?;
    let delta = h_fp - h;
    let omega = if h_last > 0.0 { delta / h_last } else { 0.0 };
    Ok((h, delta, omega))
}

pub fn quant_score(phi: f64, omega: f64, lambda: f64) -> f64 {
    -lambda * omega + (1.0 - lambda) * phi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub bits: Bitwidth,
    pub delta_b: f64,
    pub phi: f64,
    pub h: f64,
    pub delta_h: f64,
    pub omega: f64,
    pub score: f64,
    /// Quantization raised the histogram entropy (`delta_h < 0`).
    pub entropy_gain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapScores {
    pub h_fp: f64,
    pub cells: Vec<ScoreCell>,
    /// Candidates by descending score; ties go to the higher bitwidth.
    pub ranking: Vec<Bitwidth>,
}

impl MapScores {
    pub fn cell(&self, bits: Bitwidth) -> Option<&ScoreCell> {
        self.cells.iter().find(|c| c.bits == bits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantScoreTable {
    pub maps: Vec<MapScores>,
    /// Branch total `B` at the baseline precision.
    pub total_bitops: f64,
    /// Entropy of the chain's last map at `b_last`.
    pub h_last: f64,
    pub degenerate_denominator: bool,
}

impl QuantScoreTable {
    pub fn rankings(&self) -> Vec<Vec<Bitwidth>> {
        self.maps.iter().map(|m| m.ranking.clone()).collect()
    }
}

/// Orders candidates by descending score, higher bitwidth first on ties.
pub fn rank_candidates(cells: &[ScoreCell]) -> Vec<Bitwidth> {
    let mut order: Vec<&ScoreCell> = cells.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then(b.bits.cmp(&a.bits)));
    order.into_iter().map(|c| c.bits).collect()
}

/// Re-derives scores and rankings from stored `phi`/`omega` for another `lambda`.
pub fn rescore(table: &QuantScoreTable, lambda: f64) -> QuantScoreTable {
    let mut t = table.clone();
    for m in &mut t.maps {
        for c in &mut m.cells {
            c.score = quant_score(c.phi, c.omega, lambda);
        }
        m.ranking = rank_candidates(&m.cells);
    }
    t
}

/// Scores every (map, candidate) cell of a chain.
pub fn build_score_table(chain: &ChainInput<'_>, cfg: &SearchConfig) -> Result<QuantScoreTable> {
    chain.check()?;
    cfg.validate()?;
    let last = chain.len() - 1;
    let h_last = quantized_entropy(chain.pools[last], cfg.b_last, chain.ranges[last], cfg.bins)?;
    let total = baseline_bitops(&chain.consumer_macs, cfg.phi_baseline);
    if total <= 0.0 {
        return Err(Error::ZeroB);
    }

    let maps = (0..chain.len())
        .into_par_iter()
        .map(|i| {
            let pool = chain.pools[i];
            let range = chain.ranges[i];
            let h_fp = histogram_entropy(pool, cfg.bins, range)?.entropy_bits;
            let cells = cfg
                .candidates
                .iter()
                .map(|&bits| {
                    let (delta_b, phi) = phi_score(i, bits, &chain.consumer_macs, cfg.phi_baseline)?;
                    let (h, delta_h, omega) = omega_score(pool, bits, range, cfg.bins, h_fp, h_last)?;
                    Ok(ScoreCell {
                        bits,
                        delta_b,
                        phi,
                        h,
                        delta_h,
                        omega,
                        score: quant_score(phi, omega, cfg.lambda),
                        entropy_gain: delta_h < 0.0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let ranking = rank_candidates(&cells);
            Ok(MapScores { h_fp, cells, ranking })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(QuantScoreTable {
        maps,
        total_bitops: total,
        h_last,
        degenerate_denominator: h_last <= 0.0,
    })
}
