//! A seeded, German-Credit-style candidate pool and the scripted iterative
//! decision scenario run against it.
//!
//! The pool has 250 applicants, half of them women (the protected group), and
//! ten features. Labels carry a historical bias against women; `marriage` is a
//! strong proxy for sex and `account_check_status` tracks qualification.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::audit::feature_correlation;
use crate::data::{DatasetSchema, FeatureSchema};
use crate::error::Result;
use crate::model::ModelKind;
use crate::rng::SplitMix64;
use crate::session::{RunConfig, RunRecord, Session};

pub const CREDIT_ROWS: usize = 250;
pub const CREDIT_SEED: u64 = 20190801;
pub const CASE_STUDY_K: usize = 45;

const ACCOUNT: [&str; 4] = ["none", "<0", "0-200", ">=200"];
const SAVINGS: [&str; 4] = ["<100", "100-500", "500-1000", ">=1000"];
const JOB: [&str; 4] = ["unskilled", "skilled", "management", "self-employed"];

pub fn credit_schema() -> DatasetSchema {
    DatasetSchema {
        features: vec![
            FeatureSchema::categorical("account_check_status", ACCOUNT),
            FeatureSchema::continuous("duration"),
            FeatureSchema::continuous("credit_amount"),
            FeatureSchema::categorical("savings", SAVINGS),
            FeatureSchema::continuous("employment_years"),
            FeatureSchema::continuous("age"),
            FeatureSchema::categorical("job", JOB),
            FeatureSchema::categorical("marriage", ["single", "married"]),
            FeatureSchema::categorical("telephone", ["none", "yes"]),
            FeatureSchema::categorical("sex", ["female", "male"]),
        ],
        target: "credit_risk".into(),
        sensitive: "sex".into(),
        protected: "female".into(),
    }
}

fn bucket(x: f64, cuts: &[f64]) -> usize {
    cuts.iter().take_while(|&&c| x > c).count()
}

/// CSV text of the seeded candidate pool (header included).
pub fn credit_csv(seed: u64) -> String {
    let mut rng = SplitMix64::new(seed);
    let mut female: Vec<bool> = (0..CREDIT_ROWS).map(|i| i < CREDIT_ROWS / 2).collect();
    rng.shuffle(&mut female);

    let mut out = String::from(
        "account_check_status,duration,credit_amount,savings,employment_years,age,job,marriage,telephone,sex,credit_risk\n",
    );
    for &is_female in &female {
        let shift = if is_female { -1.0 } else { 1.0 };
        let quality = rng.normal() * if is_female { 0.7 } else { 1.2 };

        let account = bucket(quality + 0.35 * shift + 0.6 * rng.normal(), &[-0.9, 0.0, 0.9]);
        let duration = (30.0 - 8.0 * quality + 9.0 * rng.normal()).clamp(6.0, 72.0).round();
        let amount = (8.0 + 0.55 * rng.normal()).exp().clamp(250.0, 15000.0).round();
        let savings = bucket(0.6 * quality + rng.normal(), &[-0.3, 0.6, 1.3]);
        let employment = (4.0 + 1.2 * shift + 3.0 * rng.normal()).abs().min(20.0).round();
        let married = rng.next_f64() < if is_female { 0.82 } else { 0.2 };
        let age = (24.0 + if married { 8.0 } else { 0.0 } + 10.0 * rng.normal().abs())
            .clamp(19.0, 75.0)
            .round();
        let job = match rng.next_f64() {
            u if u < 0.15 => 0,
            u if u < 0.65 => 1,
            u if u < 0.65 + if is_female { 0.1 } else { 0.25 } => 2,
            _ => 3,
        };
        let telephone = usize::from(rng.next_f64() < 0.4);
        let label_logit = 1.6 * quality + 0.6 * shift + 0.6 * rng.normal();
        let risk = u8::from(label_logit > 0.0);

        writeln!(
            out,
            "{},{duration},{amount},{},{employment},{age},{},{},{},{},{risk}",
            ACCOUNT[account],
            SAVINGS[savings],
            JOB[job],
            if married { "married" } else { "single" },
            ["none", "yes"][telephone],
            if is_female { "female" } else { "male" },
        )
        .expect("writing to a String");
    }
    out
}

/// Outcome of the scripted iterations.
pub struct CaseStudy {
    /// Runs in creation order: baseline with the sensitive attribute, without
    /// it, without the strongest proxy, without the top outlier-distortion
    /// feature, then the counterfactually fair model on the last feature set.
    pub runs: Vec<Arc<RunRecord>>,
    /// Feature removed before each of runs 2..=4.
    pub dropped: Vec<String>,
}

impl CaseStudy {
    pub fn baseline(&self) -> &RunRecord {
        &self.runs[0]
    }

    pub fn fair(&self) -> &RunRecord {
        self.runs.last().expect("at least one run")
    }
}

/// Replays the iterative workflow on the seeded pool inside `session`.
pub fn run_case_study(session: &Session, seed: u64) -> Result<CaseStudy> {
    let schema = credit_schema();
    let sensitive = schema.sensitive.clone();
    let dataset_id = session.add_dataset(&credit_csv(seed), schema)?;
    let dataset = session.dataset(dataset_id)?;

    let mut cfg = RunConfig::new(dataset_id, CASE_STUDY_K);
    cfg.seed = seed;
    cfg.exclude = vec!["telephone".into()];
    let mut runs = vec![session.create_run(&cfg)?];
    let mut dropped = Vec::new();

    // pre-processing: drop the sensitive attribute
    cfg.exclude.push(sensitive.clone());
    dropped.push(sensitive);
    runs.push(session.create_run(&cfg)?);

    // the strongest remaining proxy
    let mut best: Option<(f64, String)> = None;
    for name in &runs[1].config.features {
        let score = feature_correlation(name, &dataset)?;
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, name.clone()));
        }
    }
    let (_, proxy) = best.expect("features remain");
    cfg.exclude.push(proxy.clone());
    dropped.push(proxy);
    runs.push(session.create_run(&cfg)?);

    // the feature most associated with outlier distortions
    let top = runs[2]
        .audit
        .features
        .iter()
        .max_by(|a, b| a.distortion_score.total_cmp(&b.distortion_score))
        .map(|f| f.name.clone())
        .expect("features remain");
    cfg.exclude.push(top.clone());
    dropped.push(top);
    runs.push(session.create_run(&cfg)?);

    // in-processing on the final feature set
    cfg.model_kind = ModelKind::AcfLogistic;
    runs.push(session.create_run(&cfg)?);

    Ok(CaseStudy { runs, dropped })
}
