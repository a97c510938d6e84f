//! Scoring models: feature encoding, the additive counterfactually fair
//! residualization, and logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, FeatureView, Groups};
use crate::error::{Error, Result};
use crate::ranking::Ranking;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    AcfLogistic,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "acf" | "acf_logistic" => Ok(ModelKind::AcfLogistic),
            other => Err(Error::InvalidConfig(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model_kind: ModelKind::Logistic,
            learning_rate: 0.1,
            epochs: 2000,
            l2_penalty: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(Error::InvalidConfig("l2_penalty must be non-negative".into()));
        }
        Ok(())
    }
}

/// Dense row-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub rows: usize,
    pub columns: Vec<String>,
    pub values: Vec<f64>,
}

impl Design {
    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.values[i * self.cols() + j]).collect()
    }
}

/// Continuous features become their `[0, 1]` scaled value; categorical
/// features expand to one indicator column per declared level.
pub fn encode(view: &FeatureView) -> Design {
    let n = view.n();
    let ds = view.dataset();
    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for c in view.columns() {
        match &c.data {
            ColumnData::Continuous(_) => {
                names.push(c.name.clone());
                cols.push((0..n).map(|i| c.derived(i)).collect());
            }
            ColumnData::Categorical(levels) => {
                for (l, level) in ds.features()[c.feature].categories.iter().enumerate() {
                    names.push(format!("{}={}", c.name, level));
                    cols.push(levels.iter().map(|&x| if x == l { 1.0 } else { 0.0 }).collect());
                }
            }
        }
    }
    let p = cols.len();
    let mut values = vec![0.0; n * p];
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[i * p + j] = v;
        }
    }
    Design {
        rows: n,
        columns: names,
        values,
    }
}

/// Per-column group means removed by [`acf_transform`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfBaseline {
    pub protected_means: Vec<f64>,
    pub nonprotected_means: Vec<f64>,
}

/// Replaces every encoded column by its residual against group membership,
/// `x - mean(x | group of the row)`.
pub fn acf_transform(view: &FeatureView, groups: &Groups) -> Result<(Design, AcfBaseline)> {
    if view.sensitive_included() {
        return Err(Error::SensitiveFeatureInView(
            view.dataset().sensitive().name.clone(),
        ));
    }
    let design = encode(view);
    Ok(residualize(design, groups))
}

pub(crate) fn residualize(mut design: Design, groups: &Groups) -> (Design, AcfBaseline) {
    let p = design.cols();
    let mean = |ids: &[usize], j: usize, values: &[f64]| {
        let mut s = 0.0;
        for &i in ids {
            s += values[i * p + j];
        }
        s / ids.len() as f64
    };
    let protected_means: Vec<f64> = (0..p)
        .map(|j| mean(&groups.s_plus, j, &design.values))
        .collect();
    let nonprotected_means: Vec<f64> = (0..p)
        .map(|j| mean(&groups.s_minus, j, &design.values))
        .collect();
    for i in 0..design.rows {
        let means = if groups.is_protected(i) {
            &protected_means
        } else {
            &nonprotected_means
        };
        for (v, m) in design.values[i * p..(i + 1) * p].iter_mut().zip(means) {
            *v -= m;
        }
    }
    (
        design,
        AcfBaseline {
            protected_means,
            nonprotected_means,
        },
    )
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Regularized mean log-loss and its gradient.
///
/// `params` holds one weight per design column followed by the intercept;
/// the intercept is not penalized.
pub fn loss_and_gradient(design: &Design, labels: &[u8], params: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let p = design.cols();
    let n = design.rows;
    let (w, b) = (&params[..p], params[p]);
    let mut grad = vec![0.0; p + 1];
    let mut loss = 0.0;
    for (i, &label) in labels[..n].iter().enumerate() {
        let x = design.row(i);
        let z = b + x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let y = label as f64;
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for j in 0..p {
            grad[j] += r * x[j];
        }
        grad[p] += r;
    }
    let inv_n = 1.0 / n as f64;
    let mut penalty = 0.0;
    for j in 0..p {
        grad[j] = grad[j] * inv_n + l2 * w[j];
        penalty += w[j] * w[j];
    }
    grad[p] *= inv_n;
    (loss * inv_n + 0.5 * l2 * penalty, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringModel {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Design column names, in weight order.
    pub encoding: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acf_baseline: Option<AcfBaseline>,
}

fn check_training_input(design: &Design, labels: &[u8], cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if labels.len() != design.rows {
        return Err(Error::SizeMismatch {
            expected: design.rows,
            actual: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClassLabels);
    }
    Ok(())
}

fn descend(
    design: &Design,
    labels: &[u8],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(f64),
) -> Result<Vec<f64>> {
    check_training_input(design, labels, cfg)?;
    let mut params = vec![0.0; design.cols() + 1];
    for epoch in 0..cfg.epochs {
        let (loss, grad) = loss_and_gradient(design, labels, &params, cfg.l2_penalty);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(epoch));
        }
        on_epoch(loss);
        for (w, g) in params.iter_mut().zip(&grad) {
            *w -= cfg.learning_rate * g;
        }
    }
    let (loss, _) = loss_and_gradient(design, labels, &params, cfg.l2_penalty);
    if !loss.is_finite() || params.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteLoss(cfg.epochs));
    }
    Ok(params)
}

/// Fits logistic regression from zero weights. Deterministic for a fixed config.
pub fn train(design: &Design, labels: &[u8], cfg: &TrainConfig) -> Result<ScoringModel> {
    let mut params = descend(design, labels, cfg, |_| {})?;
    let intercept = params.pop().expect("intercept");
    Ok(ScoringModel {
        kind: cfg.model_kind,
        weights: params,
        intercept,
        encoding: design.columns.clone(),
        acf_baseline: None,
    })
}

/// Training loss before each epoch's update.
pub fn loss_trajectory(design: &Design, labels: &[u8], cfg: &TrainConfig) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(cfg.epochs);
    descend(design, labels, cfg, |l| losses.push(l))?;
    Ok(losses)
}

impl ScoringModel {
    pub fn scores(&self, design: &Design) -> Result<Vec<f64>> {
        if design.cols() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: design.cols(),
            });
        }
        Ok((0..design.rows)
            .map(|i| {
                let z = self.intercept
                    + design
                        .row(i)
                        .iter()
                        .zip(&self.weights)
                        .map(|(a, w)| a * w)
                        .sum::<f64>();
                sigmoid(z)
            })
            .collect())
    }

    /// Ranks rows by descending predicted probability; ties go to the smaller id.
    pub fn rank(&self, design: &Design, k: usize) -> Result<Ranking> {
        Ranking::from_scores(self.scores(design)?, k)
    }
}

/// Encodes the view as the model kind requires and trains on it.
pub fn fit_view(
    view: &FeatureView,
    groups: &Groups,
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<(ScoringModel, Design)> {
    match cfg.model_kind {
        ModelKind::Logistic => {
            let design = encode(view);
            let model = train(&design, labels, cfg)?;
            Ok((model, design))
        }
        ModelKind::AcfLogistic => {
            let (design, baseline) = acf_transform(view, groups)?;
            let mut model = train(&design, labels, cfg)?;
            model.acf_baseline = Some(baseline);
            Ok((model, design))
        }
    }
}
