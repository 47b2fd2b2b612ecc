use serde::Serialize;

use crate::error::{PintError, Result};
use crate::spectral::is_power_of_two;

/// Rank layout `rank = step * n_coll + node` over `n_step` step groups of
/// `n_coll` node ranks each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankTopology {
    pub n_step: usize,
    pub n_coll: usize,
    pub rank: usize,
}

impl RankTopology {
    /// `n_coll` must be 1 or the stage count `stages`.
    pub fn new(n_step: usize, n_coll: usize, stages: usize, rank: usize) -> Result<Self> {
        if !is_power_of_two(n_step) {
            return Err(PintError::Config(format!(
                "n_step must be a power of two, got {n_step}"
            )));
        }
        if n_coll != 1 && n_coll != stages {
            return Err(PintError::Config(format!(
                "n_coll must be 1 or M = {stages}, got {n_coll}"
            )));
        }
        if rank >= n_step * n_coll {
            return Err(PintError::Config(format!(
                "rank {rank} outside {} ranks",
                n_step * n_coll
            )));
        }
        Ok(RankTopology {
            n_step,
            n_coll,
            rank,
        })
    }

    pub fn size(&self) -> usize {
        self.n_step * self.n_coll
    }

    pub fn step_index(&self) -> usize {
        self.rank / self.n_coll
    }

    pub fn node_index(&self) -> usize {
        self.rank % self.n_coll
    }

    pub fn rank_of(&self, step: usize, node: usize) -> usize {
        step * self.n_coll + node
    }

    /// Ranks sharing this node index, ordered by step.
    pub fn row_group(&self) -> Vec<usize> {
        (0..self.n_step)
            .map(|s| self.rank_of(s, self.node_index()))
            .collect()
    }

    /// Ranks sharing this step index, ordered by node.
    pub fn column_group(&self) -> Vec<usize> {
        (0..self.n_coll)
            .map(|j| self.rank_of(self.step_index(), j))
            .collect()
    }

    /// Global stage indices held by this rank.
    pub fn held_stages(&self, stages: usize) -> std::ops::Range<usize> {
        if self.n_coll == 1 {
            0..stages
        } else {
            self.node_index()..self.node_index() + 1
        }
    }

    pub fn with_rank(&self, rank: usize) -> Self {
        RankTopology { rank, ..*self }
    }
}
