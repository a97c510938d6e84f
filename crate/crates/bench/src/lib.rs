//! Inputs shared by the benchmarks.

use std::sync::Arc;

use fairrank_core::scenario::{credit_csv, credit_schema, CREDIT_ROWS, CREDIT_SEED};
use fairrank_core::{load_dataset, Dataset};

/// A pool of `blocks * 250` candidates built from consecutive seeds.
pub fn credit_pool(blocks: usize) -> Arc<Dataset> {
    let mut csv = String::new();
    for b in 0..blocks as u64 {
        let block = credit_csv(CREDIT_SEED + b);
        let body = if b == 0 { block.as_str() } else { block.split_once('\n').map_or("", |(_, rest)| rest) };
        csv.push_str(body);
    }
    let d = load_dataset(csv.as_bytes(), &credit_schema()).expect("generated pool loads");
    debug_assert_eq!(d.n(), blocks * CREDIT_ROWS);
    Arc::new(d)
}

pub fn all_features(d: &Dataset) -> Vec<String> {
    d.features()
        .iter()
        .map(|f| f.name.clone())
        .filter(|n| n != &d.sensitive().name)
        .collect()
}
