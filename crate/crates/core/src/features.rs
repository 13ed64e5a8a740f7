//! Object-centric feature maps.
//!
//! [`extract_features`] turns the objects of one type into a dense numeric
//! table: attribute values, lifecycle statistics, directly-follows edge counts
//! and interaction counts per object type. Column names follow a fixed scheme
//! (`numvalue<att>`, `strvalue<att>_<v>`, `lifecyclecontains<act>`,
//! `lifecyclestartswith<act>`, `lifecyclestarttime`, `lifecycleendtime`,
//! `lifecycleduration`, `dfg_<a>_<b>`, `interactions<ot>`, `creation<ot>`,
//! optionally `cobirth<ot>`/`codeath<ot>`, and `prop<name>` for propagated
//! columns).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ocel::{AttributeValue, OcelError, OcelLog};

pub const DEFAULT_EPSILON: f64 = 1e-9;
pub const DEFAULT_MAX_DISTINCT: usize = 20;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no objects of type {0}")]
    NoObjectsOfType(String),
    #[error("attribute {0} is numeric for some objects and text for others")]
    MixedAttributeType(String),
    #[error("cannot propagate features of type {0} onto itself")]
    TypeMismatch(String),
    #[error("variance filter dropped every column")]
    AllColumnsDropped,
    #[error("activity keep-set is empty")]
    EmptyKeepSet,
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("duplicate column name {0}")]
    DuplicateColumn(String),
    #[error("duplicate row id {0}")]
    DuplicateRow(String),
    #[error("value matrix is {rows}x{cols}, expected {want_rows}x{want_cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: String, column: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Ocel(#[from] OcelError),
}

impl From<csv::Error> for FeatureError {
    fn from(e: csv::Error) -> Self {
        FeatureError::Csv(e.to_string())
    }
}

/// Anything that exposes one numeric row per object.
pub trait DataMatrix {
    fn row_ids(&self) -> &[String];
    fn data(&self) -> ArrayView2<'_, f64>;
}

/// Named numeric columns over the objects of one type.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    object_type: String,
    row_ids: Vec<String>,
    columns: Vec<String>,
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(
        object_type: impl Into<String>,
        row_ids: Vec<String>,
        columns: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self, FeatureError> {
        if values.nrows() != row_ids.len() || values.ncols() != columns.len() {
            return Err(FeatureError::ShapeMismatch {
                rows: values.nrows(),
                cols: values.ncols(),
                want_rows: row_ids.len(),
                want_cols: columns.len(),
            });
        }
        let mut seen = HashSet::with_capacity(columns.len());
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(FeatureError::DuplicateColumn(c.clone()));
            }
        }
        let mut seen = HashSet::with_capacity(row_ids.len());
        for r in &row_ids {
            if !seen.insert(r.as_str()) {
                return Err(FeatureError::DuplicateRow(r.clone()));
            }
        }
        if let Some(((i, j), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                row: row_ids[i].clone(),
                column: columns[j].clone(),
            });
        }
        Ok(FeatureMatrix {
            object_type: object_type.into(),
            row_ids,
            columns,
            values,
        })
    }

    pub fn object_type(&self) -> &str {
        &self.object_type
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<ArrayView1<'_, f64>> {
        self.column_index(name).map(|j| self.values.column(j))
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.row_ids.iter().position(|r| r == id)
    }

    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        Some(self.values[[self.row_index(row)?, self.column_index(column)?]])
    }

    /// Keep only the columns at `keep`, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            object_type: self.object_type.clone(),
            row_ids: self.row_ids.clone(),
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self.values.select(Axis(1), keep),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(std::iter::once("object_id").chain(self.columns.iter().map(String::as_str)))?;
        for (id, row) in self.row_ids.iter().zip(self.values.rows()) {
            let mut record = Vec::with_capacity(row.len() + 1);
            record.push(id.clone());
            record.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| FeatureError::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(object_type: &str, reader: R) -> Result<Self, FeatureError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut row_ids = Vec::new();
        let mut flat = Vec::new();
        for record in r.records() {
            let record = record?;
            let mut fields = record.iter();
            row_ids.push(fields.next().unwrap_or_default().to_string());
            for f in fields {
                flat.push(
                    f.parse::<f64>()
                        .map_err(|e| FeatureError::Csv(format!("{f:?}: {e}")))?,
                );
            }
        }
        let values = Array2::from_shape_vec((row_ids.len(), columns.len()), flat)
            .map_err(|e| FeatureError::Csv(e.to_string()))?;
        FeatureMatrix::new(object_type, row_ids, columns, values)
    }
}

impl DataMatrix for FeatureMatrix {
    fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    fn data(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Add `cobirth<ot>` and `codeath<ot>` counts per object type.
    pub include_cobirth_codeath: bool,
}

enum AttrKind {
    Numeric,
    Text(BTreeSet<String>),
}

/// Build the feature matrix for the objects of type `ot`. Columns that are
/// zero on every row are left out.
pub fn extract_features(
    log: &OcelLog,
    ot: &str,
    cfg: &ExtractionConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let rows: Vec<usize> = log.objects_of_type(ot).collect();
    if rows.is_empty() {
        return Err(FeatureError::NoObjectsOfType(ot.to_string()));
    }
    let objects = log.objects();
    let events = log.events();

    let mut attrs: Vec<(String, AttrKind)> = Vec::new();
    for att in log.common_attributes(ot) {
        let mut numeric = 0usize;
        let mut texts = BTreeSet::new();
        for &o in &rows {
            match &objects[o].attributes[&att] {
                AttributeValue::Number(_) => numeric += 1,
                AttributeValue::Text(s) => {
                    texts.insert(s.clone());
                }
            }
        }
        if numeric > 0 && !texts.is_empty() {
            return Err(FeatureError::MixedAttributeType(att));
        }
        let kind = if texts.is_empty() {
            AttrKind::Numeric
        } else {
            AttrKind::Text(texts)
        };
        attrs.push((att, kind));
    }

    let mut activities = BTreeSet::new();
    let mut dfg_pairs = BTreeSet::new();
    for &o in &rows {
        for &e in log.lifecycle_of(o) {
            activities.insert(events[e].activity.as_str());
        }
        dfg_pairs.extend(log.dfg_activity_pairs(o));
    }
    let object_types: Vec<&str> = log.object_types().into_iter().collect();

    let mut columns: Vec<String> = Vec::new();
    for (att, kind) in &attrs {
        match kind {
            AttrKind::Numeric => columns.push(format!("numvalue{att}")),
            AttrKind::Text(values) => {
                columns.extend(values.iter().map(|v| format!("strvalue{att}_{v}")))
            }
        }
    }
    let contains_at = columns.len();
    columns.extend(activities.iter().map(|a| format!("lifecyclecontains{a}")));
    let starts_at = columns.len();
    columns.extend(activities.iter().map(|a| format!("lifecyclestartswith{a}")));
    let time_at = columns.len();
    columns.extend(
        ["lifecyclestarttime", "lifecycleendtime", "lifecycleduration"].map(String::from),
    );
    let dfg_at = columns.len();
    columns.extend(dfg_pairs.iter().map(|(a, b)| format!("dfg_{a}_{b}")));
    let inter_at = columns.len();
    let per_type = if cfg.include_cobirth_codeath { 4 } else { 2 };
    for t in &object_types {
        columns.push(format!("interactions{t}"));
        columns.push(format!("creation{t}"));
        if cfg.include_cobirth_codeath {
            columns.push(format!("cobirth{t}"));
            columns.push(format!("codeath{t}"));
        }
    }

    let activity_pos: HashMap<&str, usize> =
        activities.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let dfg_pos: HashMap<(&str, &str), usize> =
        dfg_pairs.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let n_cols = columns.len();

    let row_values: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|&o| {
            let mut row = vec![0.0; n_cols];
            let obj = &objects[o];
            let mut j = 0;
            for (att, kind) in &attrs {
                match (kind, &obj.attributes[att]) {
                    (AttrKind::Numeric, AttributeValue::Number(v)) => {
                        row[j] = *v;
                        j += 1;
                    }
                    (AttrKind::Text(values), AttributeValue::Text(s)) => {
                        if let Some(k) = values.iter().position(|v| v == s) {
                            row[j + k] = 1.0;
                        }
                        j += values.len();
                    }
                    _ => unreachable!("attribute kinds checked above"),
                }
            }
            for &e in log.lifecycle_of(o) {
                row[contains_at + activity_pos[events[e].activity.as_str()]] += 1.0;
            }
            if let (Some(start), Some(end)) = (log.start_event(o), log.end_event(o)) {
                row[starts_at + activity_pos[start.activity.as_str()]] = 1.0;
                row[time_at] = start.time;
                row[time_at + 1] = end.time;
                row[time_at + 2] = end.time - start.time;
            }
            for pair in log.dfg_activity_pairs(o) {
                row[dfg_at + dfg_pos[&pair]] += 1.0;
            }
            for (k, t) in object_types.iter().enumerate() {
                let sets = log.interaction_indices(o, t);
                let base = inter_at + k * per_type;
                row[base] = sets.interact.len() as f64;
                row[base + 1] = sets.creation.len() as f64;
                if cfg.include_cobirth_codeath {
                    row[base + 2] = sets.cobirth.len() as f64;
                    row[base + 3] = sets.codeath.len() as f64;
                }
            }
            row
        })
        .collect();

    let keep: Vec<usize> = (0..n_cols)
        .filter(|&j| row_values.iter().any(|r| r[j] != 0.0))
        .collect();
    let mut values = Array2::zeros((rows.len(), keep.len()));
    for (i, r) in row_values.iter().enumerate() {
        for (jj, &j) in keep.iter().enumerate() {
            values[[i, jj]] = r[j];
        }
    }
    FeatureMatrix::new(
        ot,
        rows.iter().map(|&o| objects[o].id.clone()).collect(),
        keep.iter().map(|&j| columns[j].clone()).collect(),
        values,
    )
}

/// Aggregation applied to the feature values of interacting neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationKind {
    Mean,
    Median,
    Min,
    Max,
    Sum,
}

impl AggregationKind {
    /// Aggregate `values`; an empty neighborhood yields 0.
    pub fn apply(self, values: &mut [f64]) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        match self {
            AggregationKind::Sum => values.iter().sum(),
            AggregationKind::Mean => values.iter().sum::<f64>() / values.len() as f64,
            AggregationKind::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            AggregationKind::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            AggregationKind::Median => {
                values.sort_by(f64::total_cmp);
                let n = values.len();
                if n % 2 == 1 {
                    values[n / 2]
                } else {
                    (values[n / 2 - 1] + values[n / 2]) / 2.0
                }
            }
        }
    }
}

impl fmt::Display for AggregationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationKind::Mean => "mean",
            AggregationKind::Median => "median",
            AggregationKind::Min => "min",
            AggregationKind::Max => "max",
            AggregationKind::Sum => "sum",
        })
    }
}

impl FromStr for AggregationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(AggregationKind::Mean),
            "median" => Ok(AggregationKind::Median),
            "min" => Ok(AggregationKind::Min),
            "max" => Ok(AggregationKind::Max),
            "sum" => Ok(AggregationKind::Sum),
            other => Err(format!("unknown aggregation {other:?}")),
        }
    }
}

/// Append `prop<σ>` columns to `base`, aggregating each neighbor column over
/// the objects of the neighbor type that interact with each base row.
pub fn propagate_features(
    log: &OcelLog,
    base: &FeatureMatrix,
    neighbor: &FeatureMatrix,
    agg: AggregationKind,
) -> Result<FeatureMatrix, FeatureError> {
    if base.object_type == neighbor.object_type {
        return Err(FeatureError::TypeMismatch(base.object_type.clone()));
    }
    let neighbor_rows: HashMap<&str, usize> = neighbor
        .row_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let objects = log.objects();
    let base_cols = base.n_cols();
    let mut values = Array2::zeros((base.n_rows(), base_cols + neighbor.n_cols()));
    values
        .slice_mut(ndarray::s![.., ..base_cols])
        .assign(&base.values);

    for (i, id) in base.row_ids.iter().enumerate() {
        let o = log.object_idx(id)?;
        let rows: Vec<usize> = log
            .interacting(o)
            .into_iter()
            .filter(|&n| objects[n].object_type == neighbor.object_type)
            .filter_map(|n| neighbor_rows.get(objects[n].id.as_str()).copied())
            .collect();
        let mut buf = Vec::with_capacity(rows.len());
        for j in 0..neighbor.n_cols() {
            buf.clear();
            buf.extend(rows.iter().map(|&r| neighbor.values[[r, j]]));
            values[[i, base_cols + j]] = agg.apply(&mut buf);
        }
    }

    let columns = base
        .columns
        .iter()
        .cloned()
        .chain(neighbor.columns.iter().map(|c| format!("prop{c}")))
        .collect();
    FeatureMatrix::new(base.object_type.clone(), base.row_ids.clone(), columns, values)
}

/// Feature matrix rescaled column-wise into [-1, 1]. Keeps the source matrix
/// so raw values remain available for support counts.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFeatureMatrix {
    source: FeatureMatrix,
    values: Array2<f64>,
    epsilon: f64,
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl NormalizedFeatureMatrix {
    pub fn source(&self) -> &FeatureMatrix {
        &self.source
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn columns(&self) -> &[String] {
        &self.source.columns
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn column_min(&self) -> &[f64] {
        &self.mins
    }

    pub fn column_max(&self) -> &[f64] {
        &self.maxs
    }

    /// The normalized values as a plain feature matrix.
    pub fn to_matrix(&self) -> FeatureMatrix {
        FeatureMatrix {
            object_type: self.source.object_type.clone(),
            row_ids: self.source.row_ids.clone(),
            columns: self.source.columns.clone(),
            values: self.values.clone(),
        }
    }

    /// Drop columns whose normalized population variance is not above
    /// `min_variance`.
    pub fn variance_filter(&self, min_variance: f64) -> Result<Self, FeatureError> {
        let keep = high_variance_columns(&self.values, min_variance);
        if keep.is_empty() {
            return Err(FeatureError::AllColumnsDropped);
        }
        Ok(NormalizedFeatureMatrix {
            source: self.source.select_columns(&keep),
            values: self.values.select(Axis(1), &keep),
            epsilon: self.epsilon,
            mins: keep.iter().map(|&j| self.mins[j]).collect(),
            maxs: keep.iter().map(|&j| self.maxs[j]).collect(),
        })
    }
}

impl DataMatrix for NormalizedFeatureMatrix {
    fn row_ids(&self) -> &[String] {
        &self.source.row_ids
    }

    fn data(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }
}

/// Min-max rescale every column: `-1 + 2 (v - min) / (max - min + epsilon)`.
pub fn normalize(f: &FeatureMatrix, epsilon: f64) -> Result<NormalizedFeatureMatrix, FeatureError> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(FeatureError::InvalidEpsilon(epsilon));
    }
    let mut values = f.values.clone();
    let mut mins = Vec::with_capacity(f.n_cols());
    let mut maxs = Vec::with_capacity(f.n_cols());
    for mut col in values.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo + epsilon;
        col.mapv_inplace(|v| -1.0 + 2.0 * ((v - lo) / span));
        mins.push(lo);
        maxs.push(hi);
    }
    Ok(NormalizedFeatureMatrix {
        source: f.clone(),
        values,
        epsilon,
        mins,
        maxs,
    })
}

pub fn population_variance(col: ArrayView1<'_, f64>) -> f64 {
    let n = col.len();
    if n == 0 {
        return 0.0;
    }
    let mean = col.sum() / n as f64;
    col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
}

fn high_variance_columns(values: &Array2<f64>, min_variance: f64) -> Vec<usize> {
    values
        .columns()
        .into_iter()
        .enumerate()
        .filter(|(_, c)| population_variance(c.view()) > min_variance)
        .map(|(j, _)| j)
        .collect()
}

/// Keep columns whose population variance exceeds `min_variance`.
pub fn variance_filter(f: &FeatureMatrix, min_variance: f64) -> Result<FeatureMatrix, FeatureError> {
    let keep = high_variance_columns(&f.values, min_variance);
    if keep.is_empty() {
        return Err(FeatureError::AllColumnsDropped);
    }
    Ok(f.select_columns(&keep))
}

/// Restrict the log to events whose activity is in `keep`.
pub fn filter_activities(log: &OcelLog, keep: &BTreeSet<String>) -> Result<OcelLog, FeatureError> {
    if keep.is_empty() {
        return Err(FeatureError::EmptyKeepSet);
    }
    Ok(log.retain_events(|e| keep.contains(&e.activity)))
}

/// Display form of a feature value inside an indicator name.
pub fn format_value(v: f64) -> String {
    // `+ 0.0` folds negative zero into zero.
    (v + 0.0).to_string()
}

/// Replace every column with at most `max_distinct` distinct values by one
/// 0/1 indicator column `(σ=v)` per value. Other columns pass through.
pub fn explode_values(f: &FeatureMatrix, max_distinct: usize) -> FeatureMatrix {
    let mut columns = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for (name, col) in f.columns.iter().zip(f.values.columns()) {
        let mut distinct: Vec<f64> = col.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup_by(|a, b| a == b);
        if distinct.len() > max_distinct {
            columns.push(name.clone());
            data.push(col.to_vec());
            continue;
        }
        for v in distinct {
            columns.push(format!("({name}={})", format_value(v)));
            data.push(col.iter().map(|&x| if x == v { 1.0 } else { 0.0 }).collect());
        }
    }
    let mut values = Array2::zeros((f.n_rows(), columns.len()));
    for (j, col) in data.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    // Indicator names are distinct per source column; source names are unique.
    FeatureMatrix {
        object_type: f.object_type.clone(),
        row_ids: f.row_ids.clone(),
        columns,
        values,
    }
}

/// Known column-name prefixes with their readable labels, longest first.
const PREFIX_LABELS: [(&str, &str); 13] = [
    ("lifecyclestartswith", "lifecyclestartswith "),
    ("lifecyclecontains", "lifecyclecontains "),
    ("lifecyclestarttime", "lifecyclestarttime"),
    ("lifecycleendtime", "lifecycleendtime"),
    ("lifecycleduration", "lifecycleduration"),
    ("interactions", "interactions "),
    ("numvalue", "numvalue "),
    ("strvalue", "strvalue "),
    ("creation", "creation "),
    ("cobirth", "cobirth "),
    ("codeath", "codeath "),
    ("prop", "prop "),
    ("dfg_", "dfg "),
];

/// Human-readable form of a feature name, e.g. `(lifecyclecontainsCancel=1)`
/// becomes `(lifecyclecontains Cancel = 1)`.
pub fn readable_feature_name(name: &str) -> String {
    if let Some(inner) = name.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        if let Some(eq) = inner.rfind('=') {
            return format!(
                "({} = {})",
                readable_feature_name(&inner[..eq]),
                &inner[eq + 1..]
            );
        }
    }
    for (prefix, label) in PREFIX_LABELS {
        if let Some(rest) = name.strip_prefix(prefix) {
            if rest.is_empty() {
                return label.trim_end().to_string();
            }
            let rest = if prefix == "prop" {
                readable_feature_name(rest)
            } else {
                rest.to_string()
            };
            return format!("{label}{rest}");
        }
    }
    name.to_string()
}

/// Distinct-value support per column: value → number of rows holding it.
pub fn value_support(f: &FeatureMatrix) -> Vec<BTreeMap<String, usize>> {
    f.values
        .columns()
        .into_iter()
        .map(|col| {
            let mut counts = BTreeMap::new();
            for &v in col {
                *counts.entry(format_value(v)).or_insert(0) += 1;
            }
            counts
        })
        .collect()
}
