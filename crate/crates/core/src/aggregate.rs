//! Feature-level anomaly scores aggregated from object scores.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::detect::ScoreVector;
use crate::features::{
    explode_values, normalize, population_variance, readable_feature_name, FeatureError,
    DataMatrix, FeatureMatrix, NormalizedFeatureMatrix, DEFAULT_EPSILON, DEFAULT_MAX_DISTINCT,
};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("feature rows and scored objects differ (first mismatch at position {0})")]
    RowMismatch(usize),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScoreRow {
    /// Display name; equals `column` unless the row came from a report.
    pub feature: String,
    /// Column name in the scored matrix.
    pub column: String,
    /// Columns with values identical to `column`, merged into this row.
    pub equivalent: Vec<String>,
    /// Objects where the raw (pre-normalization) value is nonzero.
    pub support: usize,
    pub score: f64,
}

/// Options for [`anomalous_feature_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub max_distinct: usize,
    pub epsilon: f64,
    pub top_n: usize,
    /// Report columns with identical values across all objects as one row.
    pub merge_identical: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            max_distinct: DEFAULT_MAX_DISTINCT,
            epsilon: DEFAULT_EPSILON,
            top_n: 10,
            merge_identical: true,
        }
    }
}

/// Rows sorted ascending by score, ties by feature name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureScoreTable {
    rows: Vec<FeatureScoreRow>,
}

impl FeatureScoreTable {
    fn from_rows(mut rows: Vec<FeatureScoreRow>) -> Self {
        rows.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.feature.cmp(&b.feature)));
        FeatureScoreTable { rows }
    }

    pub fn rows(&self) -> &[FeatureScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, feature: &str) -> Option<&FeatureScoreRow> {
        self.rows.iter().find(|r| r.feature == feature)
    }

    pub fn truncate(&mut self, n: usize) {
        self.rows.truncate(n);
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "count", "fea_score", "equivalent"])
            .expect("in-memory csv");
        for r in &self.rows {
            let equivalent: Vec<String> = r.equivalent.iter().map(|c| readable_feature_name(c)).collect();
            w.write_record([
                r.feature.as_str(),
                &r.support.to_string(),
                &r.score.to_string(),
                &equivalent.join(";"),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }

    /// Three aligned columns: feature, count, score with four decimals.
    pub fn render_text(&self) -> String {
        const HEADERS: [&str; 3] = ["Feature (with Value)", "Count", "FEA_SCORE"];
        let cells: Vec<[String; 3]> = self
            .rows
            .iter()
            .map(|r| {
                let name = if r.equivalent.is_empty() {
                    r.feature.clone()
                } else {
                    format!("{} (+{} equivalent)", r.feature, r.equivalent.len())
                };
                [name, r.support.to_string(), format!("{:.4}", r.score)]
            })
            .collect();
        let mut widths = HEADERS.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, c: [&str; 3]| {
            let _ = writeln!(
                out,
                "{:<w0$}  {:>w1$}  {:>w2$}",
                c[0],
                c[1],
                c[2],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2]
            );
        };
        line(&mut out, HEADERS);
        for row in &cells {
            line(&mut out, [&row[0], &row[1], &row[2]]);
        }
        out
    }
}

/// `score(σ) = Σ_o score(o) · norm(o, σ) / n`, summed in row order.
pub fn feature_scores(
    f: &NormalizedFeatureMatrix,
    scores: &ScoreVector,
) -> Result<FeatureScoreTable, AggregateError> {
    let ids = f.row_ids();
    if ids.len() != scores.len() {
        return Err(AggregateError::RowMismatch(ids.len().min(scores.len())));
    }
    if let Some(i) = ids.iter().zip(scores.object_ids()).position(|(a, b)| a != b) {
        return Err(AggregateError::RowMismatch(i));
    }
    let n = ids.len() as f64;
    let raw = f.source().values();
    let rows = f
        .columns()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col = f.values().column(j);
            let mut total = 0.0;
            for (s, v) in scores.scores().iter().zip(col) {
                total += s * v;
            }
            FeatureScoreRow {
                feature: name.clone(),
                column: name.clone(),
                equivalent: Vec::new(),
                support: raw.column(j).iter().filter(|&&v| v != 0.0).count(),
                score: if n > 0.0 { total / n } else { 0.0 },
            }
        })
        .collect();
    Ok(FeatureScoreTable::from_rows(rows))
}

/// Feature-value report: explode values into indicators, drop constant
/// indicators, optionally merge identical columns, normalize, score, and
/// keep the `top_n` most negative rows under readable names.
pub fn anomalous_feature_report(
    f: &FeatureMatrix,
    scores: &ScoreVector,
    opts: &ReportOptions,
) -> Result<FeatureScoreTable, AggregateError> {
    let exploded = explode_values(f, opts.max_distinct);
    let values = exploded.values();
    let mut keep: Vec<usize> = Vec::new();
    let mut merged: HashMap<usize, Vec<String>> = HashMap::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for (j, col) in values.columns().into_iter().enumerate() {
        if population_variance(col.view()) <= 0.0 {
            continue;
        }
        if opts.merge_identical {
            let key: Vec<u64> = col.iter().map(|v| (v + 0.0).to_bits()).collect();
            if let Some(&first) = seen.get(&key) {
                merged
                    .entry(first)
                    .or_default()
                    .push(exploded.columns()[j].clone());
                continue;
            }
            seen.insert(key, j);
        }
        keep.push(j);
    }
    let varying = exploded.select_columns(&keep);
    let normalized = normalize(&varying, opts.epsilon)?;
    let mut table = feature_scores(&normalized, scores)?;
    table.truncate(opts.top_n);
    for row in &mut table.rows {
        let j = exploded.column_index(&row.column).expect("column from exploded matrix");
        row.equivalent = merged.remove(&j).unwrap_or_default();
        row.feature = readable_feature_name(&row.column);
    }
    Ok(table)
}
