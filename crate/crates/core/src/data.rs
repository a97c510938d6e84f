//! Candidate tables: schema, CSV ingestion, group partition and feature views.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    pub kind: FeatureKind,
    /// Declared `[min, max]` for continuous features. Observed extremes are used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// Ordered levels of a categorical feature.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl FeatureSchema {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Continuous,
            range: None,
            categories: Vec::new(),
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        levels: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            range: None,
            categories: levels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn with_range(mut self, min: f64, max: f64) -> Self {
        self.range = Some([min, max]);
        self
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            FeatureKind::Continuous => {
                if let Some([lo, hi]) = self.range {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(Error::InvalidSchema(format!(
                            "`{}` declares range [{lo}, {hi}]; need min < max",
                            self.name
                        )));
                    }
                }
            }
            FeatureKind::Categorical => {
                if self.categories.is_empty() {
                    return Err(Error::InvalidSchema(format!(
                        "categorical `{}` declares no levels",
                        self.name
                    )));
                }
                let unique: HashSet<&str> = self.categories.iter().map(String::as_str).collect();
                if unique.len() != self.categories.len() {
                    return Err(Error::InvalidSchema(format!(
                        "categorical `{}` repeats a level",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The JSON sidecar describing a candidate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: Vec<FeatureSchema>,
    pub target: String,
    pub sensitive: String,
    pub protected: String,
}

impl DatasetSchema {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSchema(e.to_string()))
    }
}

/// Column storage. Categorical values are indices into the declared levels.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Continuous(Vec<f64>),
    Categorical(Vec<usize>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Continuous(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rotates the column left by `mid` positions.
    pub(crate) fn rotated(&self, mid: usize) -> ColumnData {
        fn rot<T: Clone>(v: &[T], mid: usize) -> Vec<T> {
            let mut out = v.to_vec();
            out.rotate_left(mid);
            out
        }
        match self {
            ColumnData::Continuous(v) => ColumnData::Continuous(rot(v, mid)),
            ColumnData::Categorical(v) => ColumnData::Categorical(rot(v, mid)),
        }
    }
}

/// Min and max used to scale a continuous feature onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scale {
    pub min: f64,
    pub max: f64,
}

impl Scale {
    /// Scaled value; zero-range features map to the constant 0.
    pub fn apply(&self, v: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (v - self.min) / span
        } else {
            0.0
        }
    }
}

/// Protected / non-protected partition of row ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Groups {
    pub s_plus: Vec<usize>,
    pub s_minus: Vec<usize>,
    #[serde(skip)]
    protected: Vec<bool>,
}

impl Groups {
    /// Builds a partition from per-row protected flags.
    pub fn from_flags(protected: Vec<bool>) -> Self {
        let mut s_plus = Vec::new();
        let mut s_minus = Vec::new();
        for (i, &p) in protected.iter().enumerate() {
            if p {
                s_plus.push(i);
            } else {
                s_minus.push(i);
            }
        }
        Self {
            s_plus,
            s_minus,
            protected,
        }
    }

    /// Builds a partition of `0..n` from the protected ids; everything else is non-protected.
    pub fn from_protected_ids(n: usize, s_plus: &[usize]) -> Result<Self> {
        let mut flags = vec![false; n];
        for &i in s_plus {
            if i >= n {
                return Err(Error::UnknownInstance(i));
            }
            flags[i] = true;
        }
        Ok(Self::from_flags(flags))
    }

    pub fn len(&self) -> usize {
        self.protected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.protected.is_empty()
    }

    pub fn is_protected(&self, id: usize) -> bool {
        self.protected[id]
    }

    pub fn flags(&self) -> &[bool] {
        &self.protected
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<FeatureSchema>,
    columns: Vec<ColumnData>,
    scales: Vec<Option<Scale>>,
    target: Vec<u8>,
    sensitive: usize,
    protected_level: usize,
    groups: Groups,
}

impl Dataset {
    /// Builds a dataset from already-typed columns. `columns` must align with `schema.features`.
    pub fn from_columns(schema: &DatasetSchema, columns: Vec<ColumnData>, target: Vec<u8>) -> Result<Self> {
        let mut names = HashSet::new();
        for f in &schema.features {
            f.validate()?;
            if !names.insert(f.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate feature `{}`", f.name)));
            }
        }
        if columns.len() != schema.features.len() {
            return Err(Error::SizeMismatch {
                expected: schema.features.len(),
                actual: columns.len(),
            });
        }
        let n = target.len();
        if n > crate::MAX_ROWS {
            return Err(Error::TooManyRows(n));
        }
        for (f, c) in schema.features.iter().zip(&columns) {
            if c.len() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    actual: c.len(),
                });
            }
            match (f.kind, c) {
                (FeatureKind::Continuous, ColumnData::Continuous(v)) => {
                    if let Some([lo, hi]) = f.range {
                        if let Some((row, &value)) =
                            v.iter().enumerate().find(|(_, x)| **x < lo || **x > hi)
                        {
                            return Err(Error::ValueOutOfRange {
                                row,
                                feature: f.name.clone(),
                                value,
                            });
                        }
                    }
                }
                (FeatureKind::Categorical, ColumnData::Categorical(v)) => {
                    if let Some((row, &lvl)) =
                        v.iter().enumerate().find(|(_, l)| **l >= f.categories.len())
                    {
                        return Err(Error::UnknownCategoryLevel {
                            row,
                            feature: f.name.clone(),
                            value: lvl.to_string(),
                        });
                    }
                }
                _ => {
                    return Err(Error::InvalidSchema(format!(
                        "column type of `{}` does not match its declared kind",
                        f.name
                    )))
                }
            }
        }
        if let Some(row) = target.iter().position(|&y| y > 1) {
            return Err(Error::UnparseableCell {
                row,
                column: schema.target.clone(),
                value: target[row].to_string(),
            });
        }

        let sensitive = schema
            .features
            .iter()
            .position(|f| f.name == schema.sensitive)
            .ok_or_else(|| Error::UnknownFeature(schema.sensitive.clone()))?;
        let sens = &schema.features[sensitive];
        if sens.kind != FeatureKind::Categorical || sens.categories.len() != 2 {
            return Err(Error::NonBinarySensitive(sens.name.clone()));
        }
        let protected_level = sens
            .categories
            .iter()
            .position(|c| *c == schema.protected)
            .ok_or_else(|| Error::EmptyGroup(format!("{}={}", sens.name, schema.protected)))?;

        let ColumnData::Categorical(levels) = &columns[sensitive] else {
            unreachable!("checked above")
        };
        let groups = Groups::from_flags(levels.iter().map(|&l| l == protected_level).collect());
        if groups.s_plus.is_empty() {
            return Err(Error::EmptyGroup(format!("{}={}", sens.name, schema.protected)));
        }
        if groups.s_minus.is_empty() {
            return Err(Error::EmptyGroup(format!("{}!={}", sens.name, schema.protected)));
        }

        let scales = schema
            .features
            .iter()
            .zip(&columns)
            .map(|(f, c)| match c {
                ColumnData::Continuous(v) => Some(match f.range {
                    Some([min, max]) => Scale { min, max },
                    None => Scale {
                        min: v.iter().copied().fold(f64::INFINITY, f64::min),
                        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    },
                }),
                ColumnData::Categorical(_) => None,
            })
            .collect();

        Ok(Self {
            features: schema.features.clone(),
            columns,
            scales,
            target,
            sensitive,
            protected_level,
            groups,
        })
    }

    pub fn n(&self) -> usize {
        self.target.len()
    }

    pub fn features(&self) -> &[FeatureSchema] {
        &self.features
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn column(&self, idx: usize) -> &ColumnData {
        &self.columns[idx]
    }

    pub fn scale(&self, idx: usize) -> Option<Scale> {
        self.scales[idx]
    }

    pub fn labels(&self) -> &[u8] {
        &self.target
    }

    pub fn groups(&self) -> &Groups {
        &self.groups
    }

    pub fn sensitive(&self) -> &FeatureSchema {
        &self.features[self.sensitive]
    }

    pub fn sensitive_index(&self) -> usize {
        self.sensitive
    }

    pub fn protected_value(&self) -> &str {
        &self.features[self.sensitive].categories[self.protected_level]
    }

    /// Feature values of column `idx` mapped onto `[0, 1]` (continuous) or level indices (categorical).
    pub fn scaled_value(&self, idx: usize, row: usize) -> f64 {
        match &self.columns[idx] {
            ColumnData::Continuous(v) => self.scales[idx].expect("continuous").apply(v[row]),
            ColumnData::Categorical(v) => v[row] as f64,
        }
    }

    /// Human-readable cell value.
    pub fn display_value(&self, idx: usize, row: usize) -> String {
        match &self.columns[idx] {
            ColumnData::Continuous(v) => v[row].to_string(),
            ColumnData::Categorical(v) => self.features[idx].categories[v[row]].clone(),
        }
    }
}

/// Reads a candidate table. Extra CSV columns not named in the schema are ignored.
pub fn load_dataset<R: std::io::Read>(csv_source: R, schema: &DatasetSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_source);
    let header = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let locate = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let feature_cols = schema
        .features
        .iter()
        .map(|f| locate(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let target_col = locate(&schema.target)?;

    let mut columns: Vec<ColumnData> = schema
        .features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Continuous => ColumnData::Continuous(Vec::new()),
            FeatureKind::Categorical => ColumnData::Categorical(Vec::new()),
        })
        .collect();
    let mut target = Vec::new();

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let cell = |col: usize| record.get(col).unwrap_or("");
        for ((f, &col), data) in schema.features.iter().zip(&feature_cols).zip(&mut columns) {
            let raw = cell(col);
            match data {
                ColumnData::Continuous(v) => {
                    let x: f64 = raw
                        .parse()
                        .ok()
                        .filter(|x: &f64| x.is_finite())
                        .ok_or_else(|| Error::UnparseableCell {
                            row,
                            column: f.name.clone(),
                            value: raw.to_string(),
                        })?;
                    v.push(x);
                }
                ColumnData::Categorical(v) => {
                    if raw.is_empty() {
                        return Err(Error::UnparseableCell {
                            row,
                            column: f.name.clone(),
                            value: String::new(),
                        });
                    }
                    let lvl = f.categories.iter().position(|c| c == raw).ok_or_else(|| {
                        Error::UnknownCategoryLevel {
                            row,
                            feature: f.name.clone(),
                            value: raw.to_string(),
                        }
                    })?;
                    v.push(lvl);
                }
            }
        }
        let raw = cell(target_col);
        let y = match raw {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(Error::UnparseableCell {
                    row,
                    column: schema.target.clone(),
                    value: raw.to_string(),
                })
            }
        };
        target.push(y);
    }
    Dataset::from_columns(schema, columns, target)
}

/// Returns `(S+, S-)`.
pub fn partition_groups(d: &Dataset) -> (Vec<usize>, Vec<usize>) {
    (d.groups.s_plus.clone(), d.groups.s_minus.clone())
}

/// One selected feature inside a [`FeatureView`].
#[derive(Debug, Clone, PartialEq)]
pub struct ViewColumn {
    pub feature: usize,
    pub name: String,
    pub kind: FeatureKind,
    pub data: ColumnData,
    pub scale: Option<Scale>,
}

impl ViewColumn {
    /// Per-feature Gower term: `|a - b| / range` or categorical mismatch.
    #[inline]
    pub fn gower_term(&self, a: usize, b: usize) -> f64 {
        match &self.data {
            ColumnData::Continuous(v) => {
                let s = self.scale.expect("continuous");
                let span = s.max - s.min;
                if span > 0.0 {
                    (v[a] - v[b]).abs() / span
                } else {
                    0.0
                }
            }
            ColumnData::Categorical(v) => {
                if v[a] == v[b] {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Value on the Gower scale: `[0, 1]` for continuous, level index for categorical.
    #[inline]
    pub fn derived(&self, row: usize) -> f64 {
        match &self.data {
            ColumnData::Continuous(v) => self.scale.expect("continuous").apply(v[row]),
            ColumnData::Categorical(v) => v[row] as f64,
        }
    }
}

/// A subset of the dataset's features. Columns are kept in schema order.
#[derive(Debug, Clone)]
pub struct FeatureView {
    dataset: Arc<Dataset>,
    columns: Vec<ViewColumn>,
    sensitive_included: bool,
}

impl PartialEq for FeatureView {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.dataset, &other.dataset)
            && self.columns == other.columns
            && self.sensitive_included == other.sensitive_included
    }
}

impl FeatureView {
    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn columns(&self) -> &[ViewColumn] {
        &self.columns
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn sensitive_included(&self) -> bool {
        self.sensitive_included
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    /// Row-major `n × p` matrix of derived values.
    pub fn derived_matrix(&self) -> Vec<f64> {
        let n = self.n();
        let p = self.columns.len();
        let mut out = vec![0.0; n * p];
        for (j, c) in self.columns.iter().enumerate() {
            for i in 0..n {
                out[i * p + j] = c.derived(i);
            }
        }
        out
    }

    pub(crate) fn with_column(&self, idx: usize, data: ColumnData) -> FeatureView {
        let mut out = self.clone();
        out.columns[idx].data = data;
        out
    }
}

/// Selects the named features. Duplicates are ignored; columns follow schema order.
pub fn select_features<S: AsRef<str>>(d: &Arc<Dataset>, names: &[S]) -> Result<FeatureView> {
    if names.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut chosen = vec![false; d.features.len()];
    for name in names {
        chosen[d.feature_index(name.as_ref())?] = true;
    }
    let columns = d
        .features
        .iter()
        .enumerate()
        .filter(|(i, _)| chosen[*i])
        .map(|(i, f)| ViewColumn {
            feature: i,
            name: f.name.clone(),
            kind: f.kind,
            data: d.columns[i].clone(),
            scale: d.scales[i],
        })
        .collect();
    Ok(FeatureView {
        dataset: Arc::clone(d),
        columns,
        sensitive_included: chosen[d.sensitive],
    })
}
