use crate::data::{FeatureView, Groups};
use crate::error::Result;
use crate::model::{fit_view, ScoringModel, TrainConfig};
use crate::ranking::Ranking;
use crate::rerank::{fair_rerank, RerankConfig};

/// Train on the view, rank every candidate, and optionally re-rank.
pub fn model_and_rank(
    view: &FeatureView,
    groups: &Groups,
    labels: &[u8],
    cfg: &TrainConfig,
    k: usize,
    rerank: Option<&RerankConfig>,
) -> Result<(ScoringModel, Ranking)> {
    let (model, design) = fit_view(view, groups, labels, cfg)?;
    let ranking = model.rank(&design, k)?;
    let ranking = match rerank {
        Some(rc) => fair_rerank(&ranking, groups, rc)?,
        None => ranking,
    };
    Ok((model, ranking))
}
