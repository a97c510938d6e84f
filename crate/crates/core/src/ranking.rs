use serde::Serialize;

use crate::error::{Error, Result};

/// An ordered candidate list with a top-k threshold.
///
/// `order[0]` holds rank 1. Scores are indexed by id, not position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    order: Vec<usize>,
    #[serde(skip)]
    rank: Vec<usize>,
    scores: Vec<f64>,
    k: usize,
    reranked: bool,
}

impl Ranking {
    /// Sorts by descending score; exact ties go to the smaller id.
    pub fn from_scores(scores: Vec<f64>, k: usize) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidRanking(format!("score of {i} is not finite")));
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Self::build(order, scores, k, false)
    }

    /// Wraps an explicit order. Scores need not be sorted along it.
    pub fn from_order(order: Vec<usize>, scores: Vec<f64>, k: usize) -> Result<Self> {
        Self::build(order, scores, k, false)
    }

    fn build(order: Vec<usize>, scores: Vec<f64>, k: usize, reranked: bool) -> Result<Self> {
        let n = order.len();
        if scores.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                actual: scores.len(),
            });
        }
        if n == 0 {
            return Err(Error::InvalidRanking("empty ranking".into()));
        }
        if k == 0 || k > n {
            return Err(Error::InvalidK { k, n });
        }
        let mut rank = vec![0; n];
        for (pos, &id) in order.iter().enumerate() {
            if id >= n || rank[id] != 0 {
                return Err(Error::InvalidRanking(format!("order is not a permutation (id {id})")));
            }
            rank[id] = pos + 1;
        }
        Ok(Self {
            order,
            rank,
            scores,
            k,
            reranked,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// 1-based rank of `id`.
    #[inline]
    pub fn rank(&self, id: usize) -> usize {
        self.rank[id]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.rank
    }

    pub fn score(&self, id: usize) -> f64 {
        self.scores[id]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn reranked(&self) -> bool {
        self.reranked
    }

    pub fn top_k(&self) -> &[usize] {
        &self.order[..self.k]
    }

    pub fn with_k(&self, k: usize) -> Result<Self> {
        let n = self.len();
        if k == 0 || k > n {
            return Err(Error::InvalidK { k, n });
        }
        Ok(Self { k, ..self.clone() })
    }

    /// A post-processed ordering of the same candidates; scores are carried over.
    pub(crate) fn reordered(&self, order: Vec<usize>) -> Result<Self> {
        Self::build(order, self.scores.clone(), self.k, true)
    }
}
