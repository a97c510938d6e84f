//! Run lifecycle: execute the pipeline for a configuration, keep immutable
//! run records, compare runs and drill into single instances.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::audit::{audit_view, Baseline, Distribution1D, FeatureAuditReport, RetrainSpec};
use crate::data::{
    load_dataset, select_features, ColumnData, Dataset, DatasetSchema, FeatureKind, FeatureSchema,
};
use crate::error::{Error, Result};
use crate::measures::{measure_report, MeasureInputs, MeasureReport};
use crate::model::{ModelKind, ScoringModel, TrainConfig};
use crate::pipeline::model_and_rank;
use crate::rerank::RerankConfig;
use crate::serde_util;
use crate::space::{all_nearest_neighbors, embed_2d, gower_matrix, space_pair_from_gower, DEFAULT_H};

fn default_h() -> usize {
    DEFAULT_H
}

fn default_model() -> ModelKind {
    ModelKind::Logistic
}

/// Optional overrides of the training defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2_penalty: Option<f64>,
}

/// A run request. An empty `features` list means every schema feature;
/// `exclude` is applied afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset_id: u64,
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default = "default_model", alias = "model")]
    pub model_kind: ModelKind,
    pub k: usize,
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rerank: Option<RerankConfig>,
    #[serde(default)]
    pub train: TrainOverrides,
}

impl RunConfig {
    pub fn new(dataset_id: u64, k: usize) -> Self {
        Self {
            dataset_id,
            features: Vec::new(),
            exclude: Vec::new(),
            model_kind: ModelKind::Logistic,
            k,
            h: DEFAULT_H,
            seed: 0,
            rerank: None,
            train: TrainOverrides::default(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            model_kind: self.model_kind,
            learning_rate: self.train.learning_rate.unwrap_or(d.learning_rate),
            epochs: self.train.epochs.unwrap_or(d.epochs),
            l2_penalty: self.train.l2_penalty.unwrap_or(d.l2_penalty),
            seed: self.seed,
        }
    }

    /// Feature names after applying defaults and exclusions, in schema order.
    pub fn resolve_features(&self, d: &Dataset) -> Result<Vec<String>> {
        for name in self.features.iter().chain(&self.exclude) {
            d.feature_index(name)?;
        }
        let chosen: Vec<String> = d
            .features()
            .iter()
            .map(|f| &f.name)
            .filter(|n| self.features.is_empty() || self.features.contains(n))
            .filter(|n| !self.exclude.contains(n))
            .cloned()
            .collect();
        if chosen.is_empty() {
            return Err(Error::EmptySelection);
        }
        Ok(chosen)
    }
}

/// The configuration a run actually executed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub dataset_id: u64,
    pub features: Vec<String>,
    pub sensitive: String,
    pub protected: String,
    pub sensitive_included: bool,
    pub model_kind: ModelKind,
    pub k: usize,
    pub h: usize,
    pub seed: u64,
    pub rerank: Option<RerankConfig>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: usize,
    pub rank: usize,
    pub score: f64,
    pub protected: bool,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub k: usize,
    pub reranked: bool,
    /// Candidates in rank order.
    pub entries: Vec<RankedEntry>,
}

impl RankingRecord {
    pub fn order(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.id).collect()
    }
}

/// Immutable snapshot of one pipeline iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: u64,
    pub config: ConfigRecord,
    pub model: ScoringModel,
    pub ranking: RankingRecord,
    pub report: MeasureReport,
    pub audit: FeatureAuditReport,
    /// 2-D MDS projection of the input space.
    pub embedding: Vec<[f64; 2]>,
    /// Row-major normalized distortion matrix; absent above the matrix size limit.
    pub distortion: Option<Vec<f64>>,
    /// Seconds since the Unix epoch. Informational only.
    pub created_at: u64,
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run records serialize")
    }

    pub fn n(&self) -> usize {
        self.ranking.entries.len()
    }
}

/// Runs the whole pipeline. The returned record has `run_id` 0 and `created_at` 0.
pub fn execute_run(dataset: &Arc<Dataset>, dataset_id: u64, cfg: &RunConfig) -> Result<RunRecord> {
    let n = dataset.n();
    if n > crate::MAX_ROWS {
        return Err(Error::TooManyRows(n));
    }
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::InvalidK { k: cfg.k, n });
    }
    if cfg.h == 0 {
        return Err(Error::InvalidConfig("h must be at least 1".into()));
    }
    if cfg.h >= n {
        return Err(Error::HTooLarge { h: cfg.h, n });
    }
    if let Some(rc) = &cfg.rerank {
        rc.validate()?;
    }
    let features = cfg.resolve_features(dataset)?;
    let view = select_features(dataset, &features)?;
    let groups = dataset.groups();
    let labels = dataset.labels();
    let train_cfg = cfg.train_config();

    let (model, ranking) =
        model_and_rank(&view, groups, labels, &train_cfg, cfg.k, cfg.rerank.as_ref())?;

    let gower = gower_matrix(&view);
    let neighbors = all_nearest_neighbors(&gower, cfg.h)?;
    let embedding = embed_2d(&gower)?;
    let pair = space_pair_from_gower(gower, &ranking)?;
    let report = measure_report(&MeasureInputs {
        pair: &pair,
        ranking: &ranking,
        labels,
        groups,
        neighbors: &neighbors,
    })?;

    let spec = RetrainSpec {
        labels,
        groups,
        train: &train_cfg,
        k: cfg.k,
        rerank: cfg.rerank.as_ref(),
    };
    let baseline = Baseline {
        gfdcg: report.outcome_phase.gfdcg,
        utility: report.outcome_phase.utility,
    };
    let audit = audit_view(&view, &pair, &spec, baseline)?;

    let entries = ranking
        .order()
        .iter()
        .map(|&id| RankedEntry {
            id,
            rank: ranking.rank(id),
            score: ranking.score(id),
            protected: groups.is_protected(id),
            label: labels[id],
        })
        .collect();

    Ok(RunRecord {
        run_id: 0,
        config: ConfigRecord {
            dataset_id,
            features,
            sensitive: dataset.sensitive().name.clone(),
            protected: dataset.protected_value().to_string(),
            sensitive_included: view.sensitive_included(),
            model_kind: cfg.model_kind,
            k: cfg.k,
            h: cfg.h,
            seed: cfg.seed,
            rerank: cfg.rerank,
            learning_rate: train_cfg.learning_rate,
            epochs: train_cfg.epochs,
            l2_penalty: train_cfg.l2_penalty,
        },
        model,
        ranking: RankingRecord {
            k: ranking.k(),
            reranked: ranking.reranked(),
            entries,
        },
        report,
        audit,
        embedding: embedding.coords,
        distortion: (n <= crate::MAX_MATRIX_ROWS).then(|| pair.distortion.as_slice().to_vec()),
        created_at: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealMarkers {
    pub parity: f64,
    pub rnn_mean: f64,
    pub utility: f64,
}

impl Default for IdealMarkers {
    fn default() -> Self {
        Self {
            parity: 1.0,
            rnn_mean: 1.0,
            utility: 1.0,
        }
    }
}

/// One line of the between-run comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run_id: u64,
    /// Group fairness: statistical parity at the run's k.
    #[serde(with = "serde_util::ratio")]
    pub parity: f64,
    /// Individual fairness.
    pub rnn_mean: f64,
    pub utility: f64,
    pub ideal: IdealMarkers,
}

impl ComparisonRow {
    pub fn of(run: &RunRecord) -> Self {
        Self {
            run_id: run.run_id,
            parity: run.report.outcome_phase.parity,
            rnn_mean: run.report.mapping_phase.rnn_mean,
            utility: run.report.outcome_phase.utility,
            ideal: IdealMarkers::default(),
        }
    }
}

/// A cell of the instance feature table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Level(String),
}

/// Mean of raw values (continuous) or level frequencies (categorical).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureMean {
    Number(f64),
    Levels(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFeatureRow {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub levels: Vec<String>,
    pub value: FeatureValue,
    pub neighbor_mean: FeatureMean,
    /// Scaled difference to the neighbours: `(value - mean) / range` for
    /// continuous features, `1 - share of neighbours at the same level` for categorical.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFeatureRow {
    pub name: String,
    pub s_plus_mean: FeatureMean,
    pub s_minus_mean: FeatureMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDetail {
    pub run_id: u64,
    pub id: usize,
    pub protected: bool,
    pub rank: usize,
    pub rnn: f64,
    pub rnn_gain: f64,
    pub gain_delta: f64,
    pub neighbors: Vec<usize>,
    pub features: Vec<InstanceFeatureRow>,
    pub rnn_s_plus: f64,
    pub rnn_s_minus: f64,
    pub group_means: Vec<GroupFeatureRow>,
}

fn mean_of(d: &Dataset, feature: usize, ids: &[usize]) -> FeatureMean {
    match d.column(feature) {
        ColumnData::Continuous(v) => {
            let mut s = 0.0;
            for &i in ids {
                s += v[i];
            }
            FeatureMean::Number(if ids.is_empty() { 0.0 } else { s / ids.len() as f64 })
        }
        ColumnData::Categorical(_) => match Distribution1D::of_feature(d, feature, ids) {
            Ok(Distribution1D::Categorical(p)) => FeatureMean::Levels(p),
            _ => FeatureMean::Levels(vec![0.0; d.features()[feature].categories.len()]),
        },
    }
}

/// Local inspection of instance `i` in a run over `dataset`.
pub fn instance_detail(run: &RunRecord, dataset: &Dataset, i: usize) -> Result<InstanceDetail> {
    let inst = run
        .report
        .instances
        .get(i)
        .ok_or(Error::UnknownInstance(i))?;
    let groups = dataset.groups();
    let mut features = Vec::new();
    let mut group_means = Vec::new();
    for name in &run.config.features {
        let idx = dataset.feature_index(name)?;
        let schema = &dataset.features()[idx];
        let neighbor_mean = mean_of(dataset, idx, &inst.neighbors);
        let (value, delta) = match (dataset.column(idx), &neighbor_mean) {
            (ColumnData::Continuous(v), FeatureMean::Number(m)) => {
                let scale = dataset.scale(idx).expect("continuous");
                let span = scale.max - scale.min;
                let delta = if span > 0.0 { (v[i] - m) / span } else { 0.0 };
                (FeatureValue::Number(v[i]), delta)
            }
            (ColumnData::Categorical(levels), FeatureMean::Levels(p)) => (
                FeatureValue::Level(schema.categories[levels[i]].clone()),
                1.0 - p[levels[i]],
            ),
            _ => unreachable!("mean kind follows column kind"),
        };
        features.push(InstanceFeatureRow {
            name: name.clone(),
            kind: schema.kind,
            levels: schema.categories.clone(),
            value,
            neighbor_mean,
            delta,
        });
        group_means.push(GroupFeatureRow {
            name: name.clone(),
            s_plus_mean: mean_of(dataset, idx, &groups.s_plus),
            s_minus_mean: mean_of(dataset, idx, &groups.s_minus),
        });
    }
    let rank = run
        .ranking
        .entries
        .iter()
        .find(|e| e.id == i)
        .map_or(0, |e| e.rank);
    Ok(InstanceDetail {
        run_id: run.run_id,
        id: i,
        protected: groups.is_protected(i),
        rank,
        rnn: inst.rnn,
        rnn_gain: inst.rnn_gain,
        gain_delta: inst.gain_delta,
        neighbors: inst.neighbors.clone(),
        features,
        rnn_s_plus: run.report.mapping_phase.rnn_s_plus,
        rnn_s_minus: run.report.mapping_phase.rnn_s_minus,
        group_means,
    })
}

/// Per-group histogram of one feature. Continuous features use ten equal bins
/// over the scaled `[0, 1]` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupHistogram {
    pub bins: Vec<String>,
    pub s_plus: Vec<usize>,
    pub s_minus: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub schema: FeatureSchema,
    pub sensitive: bool,
    pub histogram: GroupHistogram,
    pub correlation: Option<f64>,
}

const HIST_BINS: usize = 10;

pub fn feature_summaries(d: &Dataset) -> Result<Vec<FeatureSummary>> {
    let groups = d.groups();
    d.features()
        .iter()
        .enumerate()
        .map(|(idx, f)| {
            let (bins, bin_of): (Vec<String>, Box<dyn Fn(usize) -> usize>) = match d.column(idx) {
                ColumnData::Categorical(levels) => {
                    let levels = levels.clone();
                    (f.categories.clone(), Box::new(move |i| levels[i]))
                }
                ColumnData::Continuous(_) => {
                    let scale = d.scale(idx).expect("continuous");
                    let bins = (0..HIST_BINS)
                        .map(|b| {
                            let lo = scale.min + (scale.max - scale.min) * b as f64 / HIST_BINS as f64;
                            format!("{lo}")
                        })
                        .collect();
                    (
                        bins,
                        Box::new(move |i| {
                            ((d.scaled_value(idx, i) * HIST_BINS as f64) as usize).min(HIST_BINS - 1)
                        }),
                    )
                }
            };
            let count = |ids: &[usize]| {
                let mut c = vec![0; bins.len()];
                for &i in ids {
                    c[bin_of(i)] += 1;
                }
                c
            };
            let sensitive = idx == d.sensitive_index();
            Ok(FeatureSummary {
                schema: f.clone(),
                sensitive,
                histogram: GroupHistogram {
                    s_plus: count(&groups.s_plus),
                    s_minus: count(&groups.s_minus),
                    bins: bins.clone(),
                },
                correlation: if sensitive {
                    None
                } else {
                    Some(crate::audit::feature_correlation(&f.name, d)?)
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredDataset {
    id: u64,
    schema: DatasetSchema,
    csv: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Snapshot {
    datasets: Vec<StoredDataset>,
    runs: Vec<RunRecord>,
}

struct DatasetEntry {
    stored: StoredDataset,
    dataset: Arc<Dataset>,
}

#[derive(Default)]
struct Inner {
    datasets: BTreeMap<u64, DatasetEntry>,
    runs: Vec<Arc<RunRecord>>,
}

pub type Clock = fn() -> u64;

fn system_clock() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// File name of the session snapshot inside a state directory.
pub const SNAPSHOT_FILE: &str = "session.json";

/// In-memory store of datasets and runs, optionally mirrored to a state directory.
///
/// Runs on one dataset are created one at a time; readers only ever see
/// complete records.
pub struct Session {
    inner: RwLock<Inner>,
    writers: Mutex<HashMap<u64, Arc<Mutex<()>>>>,
    clock: Clock,
    state_dir: Option<PathBuf>,
}

impl Default for Session {
    fn default() -> Self {
        Self::new()
    }
}

impl Session {
    pub fn new() -> Self {
        Self {
            inner: RwLock::new(Inner::default()),
            writers: Mutex::new(HashMap::new()),
            clock: system_clock,
            state_dir: None,
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Opens (or starts) the session persisted in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let mut session = Self::new();
        let path = dir.join(SNAPSHOT_FILE);
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(e.to_string()))?;
            let snap: Snapshot =
                serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let inner = session.inner.get_mut().expect("fresh lock");
            for stored in snap.datasets {
                let dataset = Arc::new(load_dataset(stored.csv.as_bytes(), &stored.schema)?);
                inner.datasets.insert(stored.id, DatasetEntry { stored, dataset });
            }
            inner.runs = snap.runs.into_iter().map(Arc::new).collect();
        }
        session.state_dir = Some(dir);
        Ok(session)
    }

    fn persist(&self, inner: &Inner) -> Result<()> {
        let Some(dir) = &self.state_dir else {
            return Ok(());
        };
        let snap = SnapshotRef {
            datasets: inner.datasets.values().map(|e| &e.stored).collect(),
            runs: inner.runs.iter().map(|r| r.as_ref()).collect(),
        };
        let io = |e: std::io::Error| Error::Io(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(&snap).expect("snapshot serializes")).map_err(io)?;
        std::fs::rename(&tmp, dir.join(SNAPSHOT_FILE)).map_err(io)
    }

    /// Registers a dataset. Identical CSV text and schema map to the same id.
    pub fn add_dataset(&self, csv: &str, schema: DatasetSchema) -> Result<u64> {
        let dataset = Arc::new(load_dataset(csv.as_bytes(), &schema)?);
        let mut inner = self.inner.write().expect("session lock");
        if let Some((&id, _)) = inner
            .datasets
            .iter()
            .find(|(_, e)| e.stored.csv == csv && e.stored.schema == schema)
        {
            return Ok(id);
        }
        let id = inner.datasets.keys().next_back().map_or(1, |k| k + 1);
        inner.datasets.insert(
            id,
            DatasetEntry {
                stored: StoredDataset {
                    id,
                    schema,
                    csv: csv.to_string(),
                },
                dataset,
            },
        );
        self.persist(&inner)?;
        Ok(id)
    }

    pub fn dataset(&self, id: u64) -> Result<Arc<Dataset>> {
        self.inner
            .read()
            .expect("session lock")
            .datasets
            .get(&id)
            .map(|e| Arc::clone(&e.dataset))
            .ok_or(Error::UnknownDataset(id))
    }

    pub fn create_run(&self, cfg: &RunConfig) -> Result<Arc<RunRecord>> {
        let dataset = self.dataset(cfg.dataset_id)?;
        let writer = {
            let mut w = self.writers.lock().expect("writer map");
            Arc::clone(w.entry(cfg.dataset_id).or_default())
        };
        let _guard = writer.lock().expect("dataset writer");
        let mut record = execute_run(&dataset, cfg.dataset_id, cfg)?;
        record.created_at = (self.clock)();

        let mut inner = self.inner.write().expect("session lock");
        record.run_id = inner.runs.last().map_or(1, |r| r.run_id + 1);
        let record = Arc::new(record);
        inner.runs.push(Arc::clone(&record));
        self.persist(&inner)?;
        Ok(record)
    }

    pub fn run(&self, id: u64) -> Result<Arc<RunRecord>> {
        self.inner
            .read()
            .expect("session lock")
            .runs
            .iter()
            .find(|r| r.run_id == id)
            .cloned()
            .ok_or(Error::UnknownRun(id))
    }

    pub fn runs(&self) -> Vec<Arc<RunRecord>> {
        self.inner.read().expect("session lock").runs.clone()
    }

    /// Comparison rows for the requested runs, ordered by run id.
    pub fn compare_runs(&self, ids: &[u64]) -> Result<Vec<ComparisonRow>> {
        if ids.is_empty() {
            return Err(Error::NoRuns);
        }
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter()
            .map(|id| self.run(id).map(|r| ComparisonRow::of(&r)))
            .collect()
    }

    pub fn instance_detail(&self, run_id: u64, i: usize) -> Result<InstanceDetail> {
        let run = self.run(run_id)?;
        let dataset = self.dataset(run.config.dataset_id)?;
        instance_detail(&run, &dataset, i)
    }
}

#[derive(Serialize)]
struct SnapshotRef<'a> {
    datasets: Vec<&'a StoredDataset>,
    runs: Vec<&'a RunRecord>,
}
