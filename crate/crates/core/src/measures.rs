//! Individual, group and utility measures over the data, mapping and outcome phases.
//!
//! Ratio measures (`group_skew`, `gfdcg`, `statistical_parity`) share one
//! convention: `0/0` is 1.0 and `x/0` is `f64::INFINITY`.

use serde::{Deserialize, Serialize};

use crate::data::{FeatureView, Groups};
use crate::error::{Error, Result};
use crate::ranking::Ranking;
use crate::serde_util;
use crate::space::{gower_matrix, DistanceMatrix, SpacePair};

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        Err(Error::InvalidK { k, n })
    } else {
        Ok(())
    }
}

/// `1 - (1/h) Σ |r_i - r_j| / n` over the neighbour ranks.
pub fn rnn_from_ranks(rank: usize, neighbor_ranks: &[usize], n: usize) -> f64 {
    let h = neighbor_ranks.len();
    if h == 0 {
        return 1.0;
    }
    let gap: usize = neighbor_ranks.iter().map(|&r| rank.abs_diff(r)).sum();
    1.0 - gap as f64 / (h * n) as f64
}

/// Signed variant: above 1 when ranked ahead of the neighbours, below 1 when behind.
pub fn rnn_gain_from_ranks(rank: usize, neighbor_ranks: &[usize], n: usize) -> f64 {
    let h = neighbor_ranks.len();
    if h == 0 {
        return 1.0;
    }
    let signed: i64 = neighbor_ranks
        .iter()
        .map(|&r| rank as i64 - r as i64)
        .sum();
    1.0 - signed as f64 / (h * n) as f64
}

pub fn rnn(i: usize, ranking: &Ranking, neighbors: &[usize]) -> f64 {
    let ranks: Vec<usize> = neighbors.iter().map(|&j| ranking.rank(j)).collect();
    rnn_from_ranks(ranking.rank(i), &ranks, ranking.len())
}

pub fn rnn_gain(i: usize, ranking: &Ranking, neighbors: &[usize]) -> f64 {
    let ranks: Vec<usize> = neighbors.iter().map(|&j| ranking.rank(j)).collect();
    rnn_gain_from_ranks(ranking.rank(i), &ranks, ranking.len())
}

/// Per-instance rNN for every id, given each id's input-space neighbours.
pub fn instance_rnn(ranking: &Ranking, neighbors: &[Vec<usize>]) -> Vec<f64> {
    neighbors
        .iter()
        .enumerate()
        .map(|(i, nn)| rnn(i, ranking, nn))
        .collect()
}

fn mean_over(values: &[f64], ids: impl IntoIterator<Item = usize>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in ids {
        sum += values[i];
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

pub fn rnn_mean(ranking: &Ranking, neighbors: &[Vec<usize>]) -> f64 {
    let values = instance_rnn(ranking, neighbors);
    mean_over(&values, 0..values.len()).unwrap_or(1.0)
}

/// Mean rNN over the members of `group`.
pub fn rnn_group(ranking: &Ranking, neighbors: &[Vec<usize>], group: &[usize]) -> Result<f64> {
    let values = instance_rnn(ranking, neighbors);
    mean_over(&values, group.iter().copied()).ok_or(Error::EmptyGroup("rnn group".into()))
}

/// Symmetric Hausdorff distance between the two groups under Gower distance.
pub fn group_separation(view: &FeatureView, s_plus: &[usize], s_minus: &[usize]) -> Result<f64> {
    group_separation_from(&gower_matrix(view), s_plus, s_minus)
}

/// [`group_separation`] over a precomputed (raw Gower) distance matrix.
pub fn group_separation_from(dm: &DistanceMatrix, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptyGroup("S+".into()));
    }
    if b.is_empty() {
        return Err(Error::EmptyGroup("S-".into()));
    }
    Ok(directed_hausdorff(dm, a, b).max(directed_hausdorff(dm, b, a)))
}

fn directed_hausdorff(dm: &DistanceMatrix, from: &[usize], to: &[usize]) -> f64 {
    let mut worst = 0.0f64;
    for &x in from {
        let row = dm.row(x);
        let mut nearest = f64::INFINITY;
        for &y in to {
            let d = row[y];
            if d < nearest {
                nearest = d;
                // cannot raise `worst` any more
                if nearest <= worst {
                    break;
                }
            }
        }
        worst = worst.max(nearest);
    }
    worst
}

/// Mean between-group distortion over mean within-group distortion.
pub fn group_skew(pair: &SpacePair, groups: &Groups) -> Result<f64> {
    let dist = &pair.distortion;
    let n = dist.n();
    let (mut between, mut n_between) = (0.0, 0usize);
    let (mut within, mut n_within) = (0.0, 0usize);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist.get(i, j);
            if groups.is_protected(i) == groups.is_protected(j) {
                within += d;
                n_within += 1;
            } else {
                between += d;
                n_between += 1;
            }
        }
    }
    if n_between == 0 {
        return Err(Error::NoPairs("between-group"));
    }
    if n_within == 0 {
        return Err(Error::NoPairs("within-group"));
    }
    Ok(ratio(between / n_between as f64, within / n_within as f64))
}

/// Running top-k sums, advanced one ranking position at a time. Scalar
/// measures and the per-k curves share it so their values agree bit for bit.
struct TopK<'a> {
    ranking: &'a Ranking,
    labels: &'a [u8],
    groups: Option<&'a Groups>,
    n: usize,
    k: usize,
    positives: usize,
    dcg: f64,
    idcg: f64,
    dcg_plus: f64,
    dcg_minus: f64,
    sel_plus: usize,
    sel_minus: usize,
    total_positives: usize,
}

impl<'a> TopK<'a> {
    fn new(ranking: &'a Ranking, labels: &'a [u8], groups: Option<&'a Groups>) -> Self {
        Self {
            ranking,
            labels,
            groups,
            n: ranking.len(),
            k: 0,
            positives: 0,
            dcg: 0.0,
            idcg: 0.0,
            dcg_plus: 0.0,
            dcg_minus: 0.0,
            sel_plus: 0,
            sel_minus: 0,
            total_positives: labels.iter().filter(|&&y| y == 1).count(),
        }
    }

    fn advance(&mut self) {
        let pos = self.k + 1;
        let id = self.ranking.order()[self.k];
        let gain = (self.n - pos) as f64 / self.n as f64;
        let y = self.labels.get(id).copied().unwrap_or(0) as f64;
        if y > 0.0 {
            self.positives += 1;
        }
        self.dcg += y * gain;
        if pos <= self.total_positives {
            self.idcg += gain;
        }
        if let Some(g) = self.groups {
            if g.is_protected(id) {
                self.dcg_plus += y * gain;
                self.sel_plus += 1;
            } else {
                self.dcg_minus += y * gain;
                self.sel_minus += 1;
            }
        }
        self.k = pos;
    }

    fn run_to(mut self, k: usize) -> Self {
        while self.k < k {
            self.advance();
        }
        self
    }

    fn gfdcg(&self) -> f64 {
        ratio(self.dcg_plus, self.dcg_minus)
    }

    fn parity(&self) -> f64 {
        let g = self.groups.expect("groups");
        ratio(
            self.sel_plus as f64 / g.s_plus.len() as f64,
            self.sel_minus as f64 / g.s_minus.len() as f64,
        )
    }

    fn utility(&self) -> f64 {
        if self.idcg == 0.0 {
            1.0
        } else {
            self.dcg / self.idcg
        }
    }

    fn precision(&self) -> f64 {
        self.positives as f64 / self.k as f64
    }
}

fn check_labels(labels: &[u8], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    Ok(())
}

fn check_groups(groups: &Groups, n: usize) -> Result<()> {
    if groups.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: groups.len(),
        });
    }
    if groups.s_plus.is_empty() || groups.s_minus.is_empty() {
        return Err(Error::EmptyGroup("partition".into()));
    }
    Ok(())
}

/// Linear-discount DCG@k of the protected group over that of the non-protected group.
pub fn gfdcg(ranking: &Ranking, k: usize, labels: &[u8], groups: &Groups) -> Result<f64> {
    let n = ranking.len();
    check_k(k, n)?;
    check_labels(labels, n)?;
    check_groups(groups, n)?;
    Ok(TopK::new(ranking, labels, Some(groups)).run_to(k).gfdcg())
}

/// Ratio of top-k selection rates, protected over non-protected.
pub fn statistical_parity(ranking: &Ranking, k: usize, groups: &Groups) -> Result<f64> {
    let n = ranking.len();
    check_k(k, n)?;
    check_groups(groups, n)?;
    Ok(TopK::new(ranking, &[], Some(groups)).run_to(k).parity())
}

/// Linear DCG@k over the ideal linear DCG@k (all positives first).
pub fn utility_at_k(ranking: &Ranking, k: usize, labels: &[u8]) -> Result<f64> {
    let n = ranking.len();
    check_k(k, n)?;
    check_labels(labels, n)?;
    Ok(TopK::new(ranking, labels, None).run_to(k).utility())
}

pub fn precision_at_k(ranking: &Ranking, k: usize, labels: &[u8]) -> Result<f64> {
    let n = ranking.len();
    check_k(k, n)?;
    check_labels(labels, n)?;
    Ok(TopK::new(ranking, labels, None).run_to(k).precision())
}

/// Within-ranking measures for every threshold `k = 1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub k: Vec<usize>,
    #[serde(with = "serde_util::ratio_vec")]
    pub gfdcg: Vec<f64>,
    pub precision: Vec<f64>,
    #[serde(with = "serde_util::ratio_vec")]
    pub parity: Vec<f64>,
    pub utility: Vec<f64>,
}

pub fn within_ranking_curves(ranking: &Ranking, labels: &[u8], groups: &Groups) -> Result<Curves> {
    let n = ranking.len();
    check_labels(labels, n)?;
    check_groups(groups, n)?;
    let mut acc = TopK::new(ranking, labels, Some(groups));
    let mut curves = Curves {
        k: Vec::with_capacity(n),
        gfdcg: Vec::with_capacity(n),
        precision: Vec::with_capacity(n),
        parity: Vec::with_capacity(n),
        utility: Vec::with_capacity(n),
    };
    for _ in 0..n {
        acc.advance();
        curves.k.push(acc.k);
        curves.gfdcg.push(acc.gfdcg());
        curves.precision.push(acc.precision());
        curves.parity.push(acc.parity());
        curves.utility.push(acc.utility());
    }
    Ok(curves)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPhase {
    pub group_separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingPhase {
    #[serde(with = "serde_util::ratio")]
    pub group_skew: f64,
    pub rnn_mean: f64,
    pub rnn_s_plus: f64,
    pub rnn_s_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomePhase {
    #[serde(with = "serde_util::ratio")]
    pub gfdcg: f64,
    #[serde(with = "serde_util::ratio")]
    pub parity: f64,
    pub utility: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeasure {
    pub id: usize,
    pub rnn: f64,
    pub rnn_gain: f64,
    /// `rnn_gain - 1`: negative when disadvantaged relative to the neighbours.
    pub gain_delta: f64,
    pub neighbors: Vec<usize>,
}

/// Every measure of one run at threshold `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub k: usize,
    pub h: usize,
    #[serde(flatten)]
    pub data_phase: DataPhase,
    #[serde(flatten)]
    pub mapping_phase: MappingPhase,
    #[serde(flatten)]
    pub outcome_phase: OutcomePhase,
    /// Names of ratio fields that are infinite (serialized as `null`).
    pub flags: Vec<String>,
    pub curves: Curves,
    pub instances: Vec<InstanceMeasure>,
}

/// Inputs shared by every measure of one run.
pub struct MeasureInputs<'a> {
    pub pair: &'a SpacePair,
    pub ranking: &'a Ranking,
    pub labels: &'a [u8],
    pub groups: &'a Groups,
    pub neighbors: &'a [Vec<usize>],
}

pub fn measure_report(input: &MeasureInputs<'_>) -> Result<MeasureReport> {
    let MeasureInputs {
        pair,
        ranking,
        labels,
        groups,
        neighbors,
    } = *input;
    let n = ranking.len();
    let k = ranking.k();
    if neighbors.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: neighbors.len(),
        });
    }

    let rnn_values = instance_rnn(ranking, neighbors);
    let instances: Vec<InstanceMeasure> = neighbors
        .iter()
        .enumerate()
        .map(|(i, nn)| {
            let gain = rnn_gain(i, ranking, nn);
            InstanceMeasure {
                id: i,
                rnn: rnn_values[i],
                rnn_gain: gain,
                gain_delta: gain - 1.0,
                neighbors: nn.clone(),
            }
        })
        .collect();

    let mapping_phase = MappingPhase {
        group_skew: group_skew(pair, groups)?,
        rnn_mean: mean_over(&rnn_values, 0..n).unwrap_or(1.0),
        rnn_s_plus: mean_over(&rnn_values, groups.s_plus.iter().copied())
            .ok_or(Error::EmptyGroup("S+".into()))?,
        rnn_s_minus: mean_over(&rnn_values, groups.s_minus.iter().copied())
            .ok_or(Error::EmptyGroup("S-".into()))?,
    };
    let outcome_phase = OutcomePhase {
        gfdcg: gfdcg(ranking, k, labels, groups)?,
        parity: statistical_parity(ranking, k, groups)?,
        utility: utility_at_k(ranking, k, labels)?,
        precision: precision_at_k(ranking, k, labels)?,
    };
    let data_phase = DataPhase {
        group_separation: group_separation_from(&pair.gower, &groups.s_plus, &groups.s_minus)?,
    };

    let mut flags = Vec::new();
    for (name, v) in [
        ("group_skew", mapping_phase.group_skew),
        ("gfdcg", outcome_phase.gfdcg),
        ("parity", outcome_phase.parity),
    ] {
        if v.is_infinite() {
            flags.push(format!("{name}_infinite"));
        }
    }

    Ok(MeasureReport {
        k,
        h: neighbors.first().map_or(0, Vec::len),
        data_phase,
        mapping_phase,
        outcome_phase,
        flags,
        curves: within_ranking_curves(ranking, labels, groups)?,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::space_pair_from_gower;

    fn ranking_of_order(order: &[usize], k: usize) -> Ranking {
        let n = order.len();
        let mut scores = vec![0.0; n];
        for (pos, &id) in order.iter().enumerate() {
            scores[id] = (n - pos) as f64;
        }
        Ranking::from_order(order.to_vec(), scores, k).unwrap()
    }

    #[test]
    fn rnn_worked_examples() {
        assert!((rnn_from_ranks(5, &[4, 5, 6, 7], 10) - 0.9).abs() < 1e-12);
        assert!((rnn_gain_from_ranks(2, &[4, 5, 6, 7], 10) - 1.35).abs() < 1e-12);
        assert!((rnn_from_ranks(5, &[6], 10) - 0.9).abs() < 1e-12);
        assert!((rnn_from_ranks(5, &[6], 100) - 0.99).abs() < 1e-12);
        assert_eq!(rnn_gain_from_ranks(5, &[4, 6], 10), 1.0);
    }

    #[test]
    fn rnn_mean_of_two() {
        let r = ranking_of_order(&[0, 1], 1);
        let nn = vec![vec![1], vec![0]];
        assert_eq!(rnn_mean(&r, &nn), 0.5);
        assert_eq!(rnn_group(&r, &nn, &[0, 1]).unwrap(), 0.5);
        assert_eq!(rnn_group(&r, &nn, &[1]).unwrap(), rnn(1, &r, &nn[1]));
        assert!(matches!(rnn_group(&r, &nn, &[]), Err(Error::EmptyGroup(_))));
    }

    #[test]
    fn gfdcg_fixture() {
        let r = ranking_of_order(&[0, 1, 2, 3], 2);
        let groups = Groups::from_flags(vec![true, false, true, false]);
        let labels = [1, 1, 0, 0];
        assert_eq!(gfdcg(&r, 2, &labels, &groups).unwrap(), 1.5);
        assert_eq!(gfdcg(&r, 2, &[0, 0, 1, 1], &groups).unwrap(), 1.0);
        // positive protected label, nothing for S-
        assert_eq!(gfdcg(&r, 1, &labels, &groups).unwrap(), f64::INFINITY);
    }

    #[test]
    fn utility_fixture_and_conventions() {
        let r = ranking_of_order(&[0, 1, 2, 3], 2);
        assert_eq!(utility_at_k(&r, 2, &[0, 1, 1, 0]).unwrap(), 0.4);
        assert_eq!(utility_at_k(&r, 2, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(utility_at_k(&r, 3, &[0, 0, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn precision_counts() {
        let r = ranking_of_order(&[0, 1, 2, 3, 4, 5], 4);
        let labels = [1, 1, 0, 1, 1, 0];
        assert_eq!(precision_at_k(&r, 4, &labels).unwrap(), 0.75);
        assert_eq!(precision_at_k(&r, 2, &labels).unwrap(), 1.0);
        assert_eq!(precision_at_k(&r, 6, &labels).unwrap(), 4.0 / 6.0);
    }

    #[test]
    fn parity_fixture() {
        // five per group; top-4 holds one protected and three non-protected
        let groups = Groups::from_flags((0..10).map(|i| i < 5).collect());
        let r = ranking_of_order(&[5, 0, 6, 7, 1, 2, 3, 4, 8, 9], 4);
        let p = statistical_parity(&r, 4, &groups).unwrap();
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(statistical_parity(&r, 10, &groups).unwrap(), 1.0);
        let alt = ranking_of_order(&[0, 5, 1, 6, 2, 7, 3, 8, 4, 9], 4);
        assert_eq!(statistical_parity(&alt, 4, &groups).unwrap(), 1.0);
        assert!(matches!(statistical_parity(&r, 0, &groups), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn group_skew_fixtures() {
        let groups = Groups::from_flags(vec![true, true, false, false]);
        let r = ranking_of_order(&[0, 1, 2, 3], 2);
        let flat = DistanceMatrix::from_fn(4, |_, _| 0.3);
        let mut pair = space_pair_from_gower(flat.clone(), &r).unwrap();
        pair.distortion = DistanceMatrix::from_fn(4, |_, _| 0.7);
        assert!((group_skew(&pair, &groups).unwrap() - 1.0).abs() < 1e-12);

        pair.distortion = DistanceMatrix::from_fn(4, |i, j| if (i < 2) == (j < 2) { 0.2 } else { 0.4 });
        assert!((group_skew(&pair, &groups).unwrap() - 2.0).abs() < 1e-12);

        pair.distortion = DistanceMatrix::from_fn(4, |_, _| 0.0);
        assert_eq!(group_skew(&pair, &groups).unwrap(), 1.0);

        pair.distortion = DistanceMatrix::from_fn(4, |i, j| if (i < 2) == (j < 2) { 0.0 } else { 0.4 });
        assert_eq!(group_skew(&pair, &groups).unwrap(), f64::INFINITY);

        let singletons = Groups::from_flags(vec![true, false]);
        let r2 = ranking_of_order(&[0, 1], 1);
        let p2 = space_pair_from_gower(DistanceMatrix::from_fn(2, |_, _| 1.0), &r2).unwrap();
        assert!(matches!(group_skew(&p2, &singletons), Err(Error::NoPairs(_))));
    }

    #[test]
    fn hausdorff_small_cases() {
        let dm = DistanceMatrix::from_row_major(
            3,
            vec![0.0, 0.2, 1.0, 0.2, 0.0, 0.5, 1.0, 0.5, 0.0],
        )
        .unwrap();
        // A = {0}, B = {1, 2}: h(A,B) = 0.2, h(B,A) = 1.0
        assert_eq!(group_separation_from(&dm, &[0], &[1, 2]).unwrap(), 1.0);
        assert_eq!(group_separation_from(&dm, &[1], &[1]).unwrap(), 0.0);
        assert!(group_separation_from(&dm, &[], &[1]).is_err());
    }

    #[test]
    fn curves_match_scalars() {
        let groups = Groups::from_flags(vec![true, false, true, false, false, true]);
        let labels = [1, 0, 1, 1, 0, 1];
        let r = ranking_of_order(&[3, 0, 5, 1, 2, 4], 3);
        let c = within_ranking_curves(&r, &labels, &groups).unwrap();
        for k in 1..=6 {
            assert_eq!(c.gfdcg[k - 1].to_bits(), gfdcg(&r, k, &labels, &groups).unwrap().to_bits());
            assert_eq!(c.precision[k - 1], precision_at_k(&r, k, &labels).unwrap());
            assert_eq!(c.parity[k - 1], statistical_parity(&r, k, &groups).unwrap());
            assert_eq!(c.utility[k - 1], utility_at_k(&r, k, &labels).unwrap());
        }
        assert_eq!(c.precision[5], 4.0 / 6.0);
        assert_eq!(c.parity[5], 1.0);
    }
}
