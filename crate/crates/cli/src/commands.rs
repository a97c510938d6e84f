//! Subcommand implementations. Each returns the JSON text for stdout.

use std::path::Path;
use std::sync::Arc;

use fairrank_core::audit::{perturbation_report, Baseline, Perturbation, RetrainSpec};
use fairrank_core::{
    feature_correlation, load_dataset, select_features, Dataset, DatasetSchema, Error, FeatureKind,
    RunConfig, Session,
};
use serde::Serialize;

use crate::args::{CompareArgs, DataArgs, PerturbArgs, RunArgs};
use crate::{clock, CliError};

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load(data: &DataArgs) -> Result<(String, DatasetSchema), CliError> {
    let csv = read(&data.data)?;
    let schema = DatasetSchema::from_json(&read(&data.schema)?)?;
    Ok((csv, schema))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report types serialize")
}

fn run_config(args: &RunArgs, dataset_id: u64) -> RunConfig {
    RunConfig {
        features: args.features.clone(),
        exclude: args.exclude.clone(),
        model_kind: args.model.into(),
        h: args.h,
        seed: args.seed,
        rerank: args.rerank,
        ..RunConfig::new(dataset_id, args.k)
    }
}

fn open_session(dir: Option<&Path>) -> Result<Session, CliError> {
    let session = match dir {
        Some(d) => Session::open(d)?,
        None => Session::new(),
    };
    Ok(session.with_clock(clock))
}

pub fn run(args: &RunArgs) -> Result<String, CliError> {
    let (csv, schema) = load(&args.data)?;
    let session = open_session(args.state_dir.as_deref())?;
    run_in(&session, &csv, schema, args)
}

/// [`run`] against an existing session.
pub fn run_in(session: &Session, csv: &str, schema: DatasetSchema, args: &RunArgs) -> Result<String, CliError> {
    let id = session.add_dataset(csv, schema)?;
    let record = session.create_run(&run_config(args, id))?;
    Ok(record.to_json())
}

#[derive(Debug, Serialize)]
pub struct CorrelationRow {
    pub feature: String,
    pub kind: FeatureKind,
    pub correlation: f64,
}

/// Correlation table sorted strongest first; the sensitive attribute is left out.
pub fn audit_table(d: &Dataset) -> Result<Vec<CorrelationRow>, Error> {
    let mut rows = Vec::new();
    for f in d.features() {
        if f.name == d.sensitive().name {
            continue;
        }
        rows.push(CorrelationRow {
            feature: f.name.clone(),
            kind: f.kind,
            correlation: feature_correlation(&f.name, d)?,
        });
    }
    rows.sort_by(|a, b| b.correlation.total_cmp(&a.correlation).then_with(|| a.feature.cmp(&b.feature)));
    Ok(rows)
}

pub fn audit(args: &DataArgs) -> Result<String, CliError> {
    let (csv, schema) = load(args)?;
    let d = load_dataset(csv.as_bytes(), &schema)?;
    Ok(to_json(&audit_table(&d)?))
}

#[derive(Debug, Serialize)]
pub struct PerturbOutput {
    pub feature: String,
    pub k: usize,
    pub features: Vec<String>,
    pub baseline: Baseline,
    pub perturbation: Perturbation,
}

pub fn perturb(args: &PerturbArgs) -> Result<String, CliError> {
    let (csv, schema) = load(&args.run.data)?;
    let d = Arc::new(load_dataset(csv.as_bytes(), &schema)?);
    let cfg = run_config(&args.run, 0);
    if cfg.k == 0 || cfg.k > d.n() {
        return Err(Error::InvalidK { k: cfg.k, n: d.n() }.into());
    }
    let features = cfg.resolve_features(&d)?;
    if !features.contains(&args.feature) {
        d.feature_index(&args.feature)?;
        return Err(CliError::Config(format!("`{}` is not among the selected features", args.feature)));
    }
    let view = select_features(&d, &features)?;
    let train = cfg.train_config();
    let spec = RetrainSpec {
        labels: d.labels(),
        groups: d.groups(),
        train: &train,
        k: cfg.k,
        rerank: cfg.rerank.as_ref(),
    };
    let baseline = spec.baseline(&view)?;
    let perturbation = perturbation_report(&view, &args.feature, &spec, baseline)?;
    Ok(to_json(&PerturbOutput {
        feature: args.feature.clone(),
        k: cfg.k,
        features,
        baseline,
        perturbation,
    }))
}

pub fn compare(args: &CompareArgs) -> Result<String, CliError> {
    if !args.state_dir.join(fairrank_core::session::SNAPSHOT_FILE).exists() {
        return Err(CliError::Config(format!("no session stored in {}", args.state_dir.display())));
    }
    let session = Session::open(&args.state_dir)?;
    let ids: Vec<u64> = if args.ids.is_empty() {
        session.runs().iter().map(|r| r.run_id).collect()
    } else {
        args.ids.clone()
    };
    Ok(to_json(&session.compare_runs(&ids)?))
}
