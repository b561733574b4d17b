//! Value-driven quantization search: per-map scores and the memory-bounded
//! bitwidth search built on them.

mod score;
mod search;

pub use score::{
    baseline_bitops, build_score_table, omega_score, phi_score, quant_score, quantized_entropy, rank_candidates,
    rescore, ChainInput, MapScores, PhiBaseline, QuantScoreTable, ScoreCell, SearchConfig,
};
pub use search::{search_bitwidths, SearchOutcome};

use crate::bits::Bitwidth;
use crate::error::Result;
use crate::vdpc::Policy;

/// Bitwidths for one chain under a policy. Fixed chains stay at 8 bits and do
/// not consult the table.
pub fn plan_branch(policy: Policy, table: &QuantScoreTable, elements: &[u64], cfg: &SearchConfig) -> Result<SearchOutcome> {
    match policy {
        Policy::Fixed8 => Ok(SearchOutcome {
            bits: vec![Bitwidth::Eight; elements.len()],
            demotions: 0,
        }),
        Policy::MixedPrecision => search_bitwidths(&table.rankings(), elements, cfg.memory),
    }
}
