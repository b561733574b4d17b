//! Memory-constrained bitwidth search over a chain of feature maps.
//!
//! Each map starts at its best-scoring candidate. Forward and backward sweeps
//! over adjacent pairs then demote maps, one ranking step at a time, until
//! every pair of live buffers fits the memory limit.

use serde::{Deserialize, Serialize};

use crate::bits::Bitwidth;
use crate::error::{Error, Result};
use crate::netgraph::MemoryModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub bits: Vec<Bitwidth>,
    /// Number of single-step demotions performed.
    pub demotions: usize,
}

struct State<'a> {
    rankings: &'a [Vec<Bitwidth>],
    elements: &'a [u64],
    mem: MemoryModel,
    pos: Vec<usize>,
}

impl State<'_> {
    fn bytes(&self, i: usize) -> u64 {
        MemoryModel::mem(self.elements[i], self.rankings[i][self.pos[i]])
    }

    fn pair_fits(&self, a: usize, b: usize) -> bool {
        self.mem.fits(self.bytes(a) + self.bytes(b))
    }

    /// Next ranked candidate of map `t` that strictly shrinks its buffer.
    fn next_smaller(&self, t: usize) -> Option<usize> {
        let cur = self.bytes(t);
        (self.pos[t] + 1..self.rankings[t].len())
            .find(|&j| MemoryModel::mem(self.elements[t], self.rankings[t][j]) < cur)
    }

    fn need_change(&self, target: usize, partner: usize) -> Option<usize> {
        if self.pair_fits(target, partner) {
            return None;
        }
        let next = self.next_smaller(target)?;
        let larger = self.bytes(target) >= self.bytes(partner);
        (larger || self.next_smaller(partner).is_none()).then_some(next)
    }

    fn adjust(&mut self, target: usize, partner: usize) -> usize {
        let mut steps = 0;
        while let Some(next) = self.need_change(target, partner) {
            self.pos[target] = next;
            steps += 1;
        }
        steps
    }

    fn all_fit(&self) -> bool {
        (0..self.pos.len().saturating_sub(1)).all(|i| self.pair_fits(i, i + 1))
    }
}

/// Searches a bitwidth per map given each map's candidate ranking (best
/// first) and element count.
pub fn search_bitwidths(rankings: &[Vec<Bitwidth>], elements: &[u64], mem: MemoryModel) -> Result<SearchOutcome> {
    if rankings.len() != elements.len() {
        return Err(Error::LengthMismatch {
            what: "search elements",
            expected: rankings.len(),
            actual: elements.len(),
        });
    }
    if rankings.is_empty() || rankings.iter().any(|r| r.is_empty()) {
        return Err(Error::Config("every map needs at least one candidate".into()));
    }
    let n = rankings.len();
    let mut st = State {
        rankings,
        elements,
        mem,
        pos: vec![0; n],
    };
    let outcome = |st: &State<'_>, demotions| SearchOutcome {
        bits: (0..n).map(|i| st.rankings[i][st.pos[i]]).collect(),
        demotions,
    };
    if mem.mem_limit.is_none() {
        return Ok(outcome(&st, 0));
    }

    let min_bytes = |i: usize| rankings[i].iter().map(|&b| MemoryModel::mem(elements[i], b)).min().unwrap_or(0);
    if (0..n - 1).any(|i| !mem.fits(min_bytes(i) + min_bytes(i + 1))) {
        return Err(Error::Infeasible { branch: None });
    }

    let mut demotions = 0;
    while !st.all_fit() {
        let mut steps = 0;
        for i in 0..n - 1 {
            steps += st.adjust(i + 1, i);
        }
        for i in (1..n).rev() {
            steps += st.adjust(i - 1, i);
        }
        if steps == 0 {
            return Err(Error::Infeasible { branch: None });
        }
        demotions += steps;
    }
    debug_assert!(demotions <= rankings.iter().map(|r| r.len() - 1).sum::<usize>());
    Ok(outcome(&st, demotions))
}
