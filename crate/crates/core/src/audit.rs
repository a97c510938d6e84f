//! Feature-level sources of bias: proxy correlation with the sensitive
//! attribute, association with outlier distortions, and perturbation retraining.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, Dataset, FeatureKind, FeatureView, Groups};
use crate::error::{Error, Result};
use crate::measures::{gfdcg, utility_at_k};
use crate::model::TrainConfig;
use crate::pipeline::model_and_rank;
use crate::rerank::RerankConfig;
use crate::serde_util;
use crate::space::SpacePair;

#[derive(Debug, Clone, PartialEq)]
pub enum Distribution1D {
    /// Samples already scaled onto the feature's `[0, 1]` range.
    Continuous(Vec<f64>),
    /// Probabilities per declared level.
    Categorical(Vec<f64>),
}

impl Distribution1D {
    /// Distribution of a dataset feature over the given rows.
    pub fn of_feature(d: &Dataset, feature: usize, ids: &[usize]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        Ok(match d.column(feature) {
            ColumnData::Continuous(_) => {
                Distribution1D::Continuous(ids.iter().map(|&i| d.scaled_value(feature, i)).collect())
            }
            ColumnData::Categorical(levels) => {
                let mut counts = vec![0usize; d.features()[feature].categories.len()];
                for &i in ids {
                    counts[levels[i]] += 1;
                }
                Distribution1D::Categorical(
                    counts
                        .into_iter()
                        .map(|c| c as f64 / ids.len() as f64)
                        .collect(),
                )
            }
        })
    }
}

/// First Wasserstein distance between two one-dimensional distributions.
///
/// Continuous: `∫ |F_p - F_q|` over the merged support of the empirical CDFs.
/// Categorical: the 0/1 ground metric, i.e. total variation `½ Σ |p - q|`.
pub fn wasserstein_1d(p: &Distribution1D, q: &Distribution1D) -> Result<f64> {
    match (p, q) {
        (Distribution1D::Continuous(a), Distribution1D::Continuous(b)) => {
            if a.is_empty() || b.is_empty() {
                return Err(Error::EmptyDistribution);
            }
            let mut a = a.clone();
            let mut b = b.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            Ok(empirical_w1(&a, &b))
        }
        (Distribution1D::Categorical(a), Distribution1D::Categorical(b)) => {
            if a.is_empty() || b.is_empty() {
                return Err(Error::EmptyDistribution);
            }
            if a.len() != b.len() {
                return Err(Error::KindMismatch);
            }
            Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
        }
        _ => Err(Error::KindMismatch),
    }
}

fn empirical_w1(a: &[f64], b: &[f64]) -> f64 {
    let (m, k) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            total += (x - p) * (i as f64 / m - j as f64 / k).abs();
        }
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        prev = Some(x);
    }
    total
}

/// How well a feature separates the groups: W1 between its S+ and S- distributions.
pub fn feature_correlation(feature: &str, dataset: &Dataset) -> Result<f64> {
    let idx = dataset.feature_index(feature)?;
    if idx == dataset.sensitive_index() {
        return Err(Error::IsSensitiveAttribute(feature.to_string()));
    }
    let g = dataset.groups();
    wasserstein_1d(
        &Distribution1D::of_feature(dataset, idx, &g.s_plus)?,
        &Distribution1D::of_feature(dataset, idx, &g.s_minus)?,
    )
}

/// Mean distortion of each instance against all others.
pub fn instance_distortions(pair: &SpacePair) -> Vec<f64> {
    let n = pair.n();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let row = pair.distortion.row(i);
            let mut s = 0.0;
            for (j, d) in row.iter().enumerate() {
                if j != i {
                    s += d;
                }
            }
            s / (n - 1) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSet {
    pub ids: Vec<usize>,
    /// Nearest-rank 95th percentile of the distortions.
    pub cutoff: f64,
    /// Set when the fallback returned several tied maxima.
    pub degenerate: bool,
}

/// Instances in the right 5% tail of the distortion distribution.
///
/// Ids strictly above the nearest-rank 95th percentile; if none are, every id
/// attaining the maximum is returned so the set is never empty.
pub fn outliers(distortions: &[f64]) -> OutlierSet {
    let n = distortions.len();
    if n == 0 {
        return OutlierSet {
            ids: Vec::new(),
            cutoff: 0.0,
            degenerate: true,
        };
    }
    let mut sorted = distortions.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    let cutoff = sorted[rank - 1];
    let above: Vec<usize> = (0..n).filter(|&i| distortions[i] > cutoff).collect();
    if !above.is_empty() {
        return OutlierSet {
            ids: above,
            cutoff,
            degenerate: false,
        };
    }
    let max = sorted[n - 1];
    let ids: Vec<usize> = (0..n).filter(|&i| distortions[i] == max).collect();
    let degenerate = ids.len() > 1;
    OutlierSet {
        ids,
        cutoff,
        degenerate,
    }
}

/// W1 between the feature's distribution over the outliers and over everyone.
pub fn feature_distortion_score(feature: &str, outlier_ids: &[usize], dataset: &Dataset) -> Result<f64> {
    let idx = dataset.feature_index(feature)?;
    let all: Vec<usize> = (0..dataset.n()).collect();
    wasserstein_1d(
        &Distribution1D::of_feature(dataset, idx, outlier_ids)?,
        &Distribution1D::of_feature(dataset, idx, &all)?,
    )
}

/// Swaps the first `⌈n/2⌉` values of column `q` with the remaining `⌊n/2⌋`.
pub fn perturb_feature(view: &FeatureView, q: &str) -> Result<FeatureView> {
    let idx = view.column_index(q)?;
    let n = view.n();
    let rotated = view.columns()[idx].data.rotated(n.div_ceil(2));
    Ok(view.with_column(idx, rotated))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    #[serde(with = "serde_util::ratio")]
    pub gfdcg: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Baseline minus perturbed; negative when perturbing improved the measure.
    #[serde(with = "serde_util::difference")]
    pub gfdcg_drop: f64,
    pub utility_drop: f64,
    /// Candidate ids in perturbed rank order.
    pub ranking: Vec<usize>,
}

/// Everything needed to retrain a run on a modified view.
#[derive(Debug, Clone)]
pub struct RetrainSpec<'a> {
    pub labels: &'a [u8],
    pub groups: &'a Groups,
    pub train: &'a TrainConfig,
    pub k: usize,
    pub rerank: Option<&'a RerankConfig>,
}

impl RetrainSpec<'_> {
    pub fn baseline(&self, view: &FeatureView) -> Result<Baseline> {
        let (_, ranking) =
            model_and_rank(view, self.groups, self.labels, self.train, self.k, self.rerank)?;
        Ok(Baseline {
            gfdcg: gfdcg(&ranking, self.k, self.labels, self.groups)?,
            utility: utility_at_k(&ranking, self.k, self.labels)?,
        })
    }
}

/// Retrains with column `q` perturbed and reports the change in GFDCG and utility.
pub fn perturbation_report(
    view: &FeatureView,
    q: &str,
    spec: &RetrainSpec<'_>,
    baseline: Baseline,
) -> Result<Perturbation> {
    let perturbed = perturb_feature(view, q)?;
    let (_, ranking) = model_and_rank(
        &perturbed,
        spec.groups,
        spec.labels,
        spec.train,
        spec.k,
        spec.rerank,
    )?;
    let g = gfdcg(&ranking, spec.k, spec.labels, spec.groups)?;
    let u = utility_at_k(&ranking, spec.k, spec.labels)?;
    let gfdcg_drop = if g == baseline.gfdcg { 0.0 } else { baseline.gfdcg - g };
    Ok(Perturbation {
        gfdcg_drop,
        utility_drop: baseline.utility - u,
        ranking: ranking.order().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAudit {
    pub name: String,
    pub kind: FeatureKind,
    /// `None` for the sensitive attribute itself.
    pub correlation: Option<f64>,
    pub distortion_score: f64,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAuditReport {
    pub features: Vec<FeatureAudit>,
    pub outliers: OutlierSet,
    /// Complement of the outlier set.
    pub non_outliers: Vec<usize>,
    pub instance_distortions: Vec<f64>,
}

/// All three audits for every feature of the view.
pub fn audit_view(
    view: &FeatureView,
    pair: &SpacePair,
    spec: &RetrainSpec<'_>,
    baseline: Baseline,
) -> Result<FeatureAuditReport> {
    let dataset = view.dataset();
    let distortions = instance_distortions(pair);
    let outlier_set = outliers(&distortions);
    let mut is_outlier = vec![false; view.n()];
    for &i in &outlier_set.ids {
        is_outlier[i] = true;
    }
    let non_outliers = (0..view.n()).filter(|&i| !is_outlier[i]).collect();

    let features = view
        .columns()
        .par_iter()
        .map(|c| {
            let correlation = match feature_correlation(&c.name, dataset) {
                Ok(v) => Some(v),
                Err(Error::IsSensitiveAttribute(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(FeatureAudit {
                name: c.name.clone(),
                kind: c.kind,
                correlation,
                distortion_score: feature_distortion_score(&c.name, &outlier_set.ids, dataset)?,
                perturbation: perturbation_report(view, &c.name, spec, baseline)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FeatureAuditReport {
        features,
        outliers: outlier_set,
        non_outliers,
        instance_distortions: distortions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_masses_at_ends() {
        let p = Distribution1D::Continuous(vec![0.0, 0.0]);
        let q = Distribution1D::Continuous(vec![1.0]);
        assert_eq!(wasserstein_1d(&p, &q).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn unequal_sample_sizes() {
        // F_p jumps 1/2 at 0 and 1; F_q jumps 1/3 at 0, 0.5, 1
        let p = Distribution1D::Continuous(vec![0.0, 1.0]);
        let q = Distribution1D::Continuous(vec![0.0, 0.5, 1.0]);
        let expected = 0.5 * (0.5f64 - 1.0 / 3.0).abs() + 0.5 * (0.5f64 - 2.0 / 3.0).abs();
        assert!((wasserstein_1d(&p, &q).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn categorical_is_total_variation() {
        let p = Distribution1D::Categorical(vec![1.0, 0.0]);
        let q = Distribution1D::Categorical(vec![0.0, 1.0]);
        assert_eq!(wasserstein_1d(&p, &q).unwrap(), 1.0);
        let r = Distribution1D::Categorical(vec![0.25, 0.75, 0.0]);
        assert!(matches!(wasserstein_1d(&p, &r), Err(Error::KindMismatch)));
        let c = Distribution1D::Continuous(vec![0.5]);
        assert!(matches!(wasserstein_1d(&p, &c), Err(Error::KindMismatch)));
        let e = Distribution1D::Continuous(vec![]);
        assert!(matches!(wasserstein_1d(&e, &c), Err(Error::EmptyDistribution)));
    }

    #[test]
    fn instance_distortion_hand_example() {
        use crate::ranking::Ranking;
        use crate::space::{space_pair_from_gower, DistanceMatrix};
        let r = Ranking::from_scores(vec![0.3, 0.2, 0.1], 1).unwrap();
        let mut pair = space_pair_from_gower(DistanceMatrix::from_fn(3, |_, _| 1.0), &r).unwrap();
        pair.distortion =
            DistanceMatrix::from_row_major(3, vec![0.0, 0.2, 0.4, 0.2, 0.0, 0.0, 0.4, 0.0, 0.0]).unwrap();
        let d = instance_distortions(&pair);
        let want = [0.3, 0.1, 0.2];
        for (a, b) in d.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let total: f64 = d.iter().sum::<f64>() * 2.0;
        assert!((total - 2.0 * 0.6).abs() < 1e-12);
    }

    #[test]
    fn outlier_tail_rules() {
        let d: Vec<f64> = (0..100).map(|i| ((i * 37) % 100) as f64).collect();
        let o = outliers(&d);
        let mut ids = o.ids.clone();
        ids.sort_by_key(|&i| d[i] as usize);
        assert_eq!(ids.iter().map(|&i| d[i]).collect::<Vec<_>>(), vec![95.0, 96.0, 97.0, 98.0, 99.0]);
        assert!(!o.degenerate);

        let flat = outliers(&[0.5; 30]);
        assert_eq!(flat.ids.len(), 30);
        assert!(flat.degenerate);

        let small: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(outliers(&small).ids, vec![9]);
    }

    #[test]
    fn perturbation_rotates_halves() {
        use crate::data::{select_features, DatasetSchema, FeatureSchema};
        use std::sync::Arc;
        let make = |vals: Vec<f64>| {
            let n = vals.len();
            let schema = DatasetSchema {
                features: vec![
                    FeatureSchema::continuous("x"),
                    FeatureSchema::categorical("g", ["a", "b"]),
                ],
                target: "y".into(),
                sensitive: "g".into(),
                protected: "a".into(),
            };
            let d = Dataset::from_columns(
                &schema,
                vec![
                    ColumnData::Continuous(vals),
                    ColumnData::Categorical((0..n).map(|i| i % 2).collect()),
                ],
                vec![0; n],
            )
            .unwrap();
            select_features(&Arc::new(d), &["x"]).unwrap()
        };
        let column = |v: &FeatureView| match &v.columns()[0].data {
            ColumnData::Continuous(x) => x.clone(),
            _ => unreachable!(),
        };
        let v = make(vec![1.0, 2.0, 3.0, 4.0]);
        let p = perturb_feature(&v, "x").unwrap();
        assert_eq!(column(&p), vec![3.0, 4.0, 1.0, 2.0]);
        assert_eq!(column(&perturb_feature(&p, "x").unwrap()), vec![1.0, 2.0, 3.0, 4.0]);

        let odd = make(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(column(&perturb_feature(&odd, "x").unwrap()), vec![4.0, 5.0, 1.0, 2.0, 3.0]);
        assert!(matches!(perturb_feature(&odd, "nope"), Err(Error::UnknownFeature(_))));
    }
}
