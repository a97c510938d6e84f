//! Post-processing: randomized merge of the two group rankings.

use serde::{Deserialize, Serialize};

use crate::data::Groups;
use crate::error::{Error, Result};
use crate::ranking::Ranking;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    /// Probability of drawing the next position from the protected queue.
    pub p: f64,
    pub seed: u64,
}

impl RerankConfig {
    /// `p` equal to the protected share of the population.
    pub fn proportional(groups: &Groups, seed: u64) -> Self {
        Self {
            p: groups.s_plus.len() as f64 / groups.len() as f64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.p) {
            Ok(())
        } else {
            Err(Error::InvalidProbability(self.p))
        }
    }
}

/// Splits the ranking into per-group queues (relative order kept) and refills
/// positions `1..=n`: a uniform draw `u < p` takes the protected queue's head,
/// otherwise the non-protected head. Once a queue runs dry the other drains.
pub fn fair_rerank(ranking: &Ranking, groups: &Groups, cfg: &RerankConfig) -> Result<Ranking> {
    cfg.validate()?;
    if groups.len() != ranking.len() {
        return Err(Error::SizeMismatch {
            expected: ranking.len(),
            actual: groups.len(),
        });
    }
    let (protected, other): (Vec<usize>, Vec<usize>) = ranking
        .order()
        .iter()
        .partition(|&&id| groups.is_protected(id));

    let mut rng = SplitMix64::new(cfg.seed);
    let mut order = Vec::with_capacity(ranking.len());
    let (mut a, mut b) = (protected.iter().peekable(), other.iter().peekable());
    while order.len() < ranking.len() {
        let next = match (a.peek(), b.peek()) {
            (Some(_), Some(_)) => {
                if rng.next_f64() < cfg.p {
                    a.next()
                } else {
                    b.next()
                }
            }
            (Some(_), None) => a.next(),
            _ => b.next(),
        };
        order.push(*next.expect("queues hold every id"));
    }
    ranking.reordered(order)
}
