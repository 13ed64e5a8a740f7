//! Textual abstractions of feature tables and object lifecycles, plus the
//! oracles that judge them: a built-in fence rule and a chat-completion
//! endpoint.

use std::fmt::Write as _;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::features::{DataMatrix, FeatureMatrix};
use crate::ocel::{format_timestamp, OcelError, OcelLog};

/// Instruction preamble for feature-table summaries.
pub const FEATURE_TABLE_PROMPT: &str = include_str!("../prompts/feature_table_v1.txt");
/// Instruction preamble for single-object lifecycles.
pub const LIFECYCLE_PROMPT: &str = include_str!("../prompts/lifecycle_v1.txt");

pub const DEFAULT_WHISKER: f64 = 1.5;
pub const DEFAULT_MAX_EVENTS: usize = 50;
const FENCE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("feature matrix has no rows")]
    EmptyMatrix,
    #[error(transparent)]
    Ocel(#[from] OcelError),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned HTTP {0}")]
    HttpError(u16),
    #[error("unexpected response body: {0}")]
    SchemaMismatch(String),
    #[error("transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureStats {
    pub name: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub distinct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSummary {
    pub object_type: String,
    pub rows: usize,
    pub features: Vec<FeatureStats>,
}

/// Quantile of sorted data by linear interpolation at `(n - 1) p`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn column_stats(name: &str, values: &[f64]) -> FeatureStats {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut distinct = sorted.clone();
    distinct.dedup();
    FeatureStats {
        name: name.to_string(),
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean,
        stddev: var.sqrt(),
        distinct: distinct.len(),
    }
}

pub fn summarize_features(f: &FeatureMatrix) -> Result<FeatureSummary, OracleError> {
    if f.n_rows() == 0 {
        return Err(OracleError::EmptyMatrix);
    }
    let features = f
        .columns()
        .iter()
        .zip(f.values().columns())
        .map(|(name, col)| column_stats(name, &col.to_vec()))
        .collect();
    Ok(FeatureSummary {
        object_type: f.object_type().to_string(),
        rows: f.n_rows(),
        features,
    })
}

impl FeatureSummary {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "{} objects of type {}, {} features\n",
            self.rows,
            self.object_type,
            self.features.len()
        );
        for s in &self.features {
            let _ = writeln!(
                out,
                "{}: min={} q1={} median={} q3={} max={} mean={} stddev={} distinct={}",
                s.name, s.min, s.q1, s.median, s.q3, s.max, s.mean, s.stddev, s.distinct
            );
        }
        out
    }
}

/// Interquartile fence rule for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FenceScorer {
    pub low: f64,
    pub high: f64,
    pub iqr: f64,
    pub median: f64,
}

impl FenceScorer {
    pub fn new(stats: &FeatureStats, whisker: f64) -> Self {
        let iqr = stats.q3 - stats.q1;
        FenceScorer {
            low: stats.q1 - whisker * iqr,
            high: stats.q3 + whisker * iqr,
            iqr,
            median: stats.median,
        }
    }

    /// 0 inside the fences, negative and decreasing with the distance past
    /// the nearest fence. A zero-IQR feature accepts only its median.
    pub fn score(&self, v: f64) -> f64 {
        if self.iqr == 0.0 {
            return if v == self.median { 0.0 } else { -1.0 };
        }
        let beyond = if v < self.low {
            self.low - v
        } else if v > self.high {
            v - self.high
        } else {
            return 0.0;
        };
        -beyond / (self.iqr + FENCE_EPSILON)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleVerdict {
    pub feature: String,
    pub scorer: FenceScorer,
    pub rationale: String,
}

pub fn statistical_oracle(summary: &FeatureSummary, whisker: f64) -> Vec<OracleVerdict> {
    summary
        .features
        .iter()
        .map(|s| {
            let scorer = FenceScorer::new(s, whisker);
            let rationale = if scorer.iqr == 0.0 {
                format!("values other than {} are unusual", scorer.median)
            } else {
                format!("values outside [{}, {}] are unusual", scorer.low, scorer.high)
            };
            OracleVerdict {
                feature: s.name.clone(),
                scorer,
                rationale,
            }
        })
        .collect()
}

/// Verdicts paired with the objects whose value falls outside the band.
pub fn flag_objects(f: &FeatureMatrix, verdicts: &[OracleVerdict]) -> Vec<(String, String, f64, f64)> {
    let mut out = Vec::new();
    for (j, v) in verdicts.iter().enumerate() {
        for (i, id) in f.row_ids().iter().enumerate() {
            let value = f.values()[[i, j]];
            let score = v.scorer.score(value);
            if score < 0.0 {
                out.push((id.clone(), v.feature.clone(), value, score));
            }
        }
    }
    out
}

fn event_line(log: &OcelLog, event_idx: usize, me: &str) -> String {
    let e = &log.events()[event_idx];
    let mut line = format!("{}  {}  [{}]", format_timestamp(e.time), e.activity, e.id);
    let others: Vec<String> = log
        .omap(e)
        .filter(|o| *o != me)
        .map(|o| {
            let ot = log.object(o).map(|x| x.object_type.as_str()).unwrap_or("?");
            format!("{o} ({ot})")
        })
        .collect();
    if !others.is_empty() {
        let _ = write!(line, "  with {}", others.join(", "));
    }
    if !e.attributes.is_empty() {
        let attrs: Vec<String> = e.attributes.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = write!(line, "  {{{}}}", attrs.join(", "));
    }
    line
}

/// Chronological rendering of one object's lifecycle with summary lines.
/// Lifecycles longer than `max_events` keep their first and last events
/// around an elision marker.
pub fn abstract_lifecycle(log: &OcelLog, o: &str, max_events: usize) -> Result<String, OracleError> {
    let idx = log.object_idx(o)?;
    let object = &log.objects()[idx];
    let lifecycle = log.lifecycle_of(idx);
    let mut out = format!("object {} ({})\n", object.id, object.object_type);

    if lifecycle.is_empty() {
        out.push_str("no events\n");
    } else if lifecycle.len() <= max_events {
        for &e in lifecycle {
            out.push_str(&event_line(log, e, o));
            out.push('\n');
        }
    } else {
        let head = max_events / 2;
        let tail = max_events - head;
        for &e in &lifecycle[..head] {
            out.push_str(&event_line(log, e, o));
            out.push('\n');
        }
        let _ = writeln!(out, "... {} events omitted ...", lifecycle.len() - max_events);
        for &e in &lifecycle[lifecycle.len() - tail..] {
            out.push_str(&event_line(log, e, o));
            out.push('\n');
        }
    }

    let duration = match (log.start_event(idx), log.end_event(idx)) {
        (Some(s), Some(e)) => e.time - s.time,
        _ => 0.0,
    };
    let _ = writeln!(out, "events: {}", lifecycle.len());
    let _ = writeln!(out, "duration: {duration:.3} s");
    for ot in log.object_types() {
        let sets = log.interaction_indices(idx, ot);
        let _ = writeln!(
            out,
            "{ot}: interact={} creation={} continuation={} cobirth={} codeath={}",
            sets.interact.len(),
            sets.creation.len(),
            sets.continuation.len(),
            sets.cobirth.len(),
            sets.codeath.len()
        );
    }
    Ok(out)
}

/// OpenAI-compatible chat-completion endpoint.
#[derive(Debug, Clone)]
pub struct LlmEndpoint {
    /// Full URL of the chat-completions route.
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

/// Send `preamble` and `text` as one chat request and return the reply text
/// verbatim. Exactly one request per call; failures are not retried.
pub fn llm_oracle(endpoint: &LlmEndpoint, preamble: &str, text: &str) -> Result<String, OracleError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(endpoint.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let body = serde_json::json!({
        "model": endpoint.model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": preamble},
            {"role": "user", "content": text},
        ],
    });
    let mut request = agent
        .post(&endpoint.url)
        .header("Content-Type", "application/json");
    if let Some(key) = &endpoint.api_key {
        request = request.header("Authorization", &format!("Bearer {key}"));
    }
    let mut response = request.send(body.to_string()).map_err(transport_error)?;
    let status = response.status().as_u16();
    if !(200..300).contains(&status) {
        return Err(OracleError::HttpError(status));
    }
    let raw = response
        .body_mut()
        .read_to_string()
        .map_err(transport_error)?;
    let parsed: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| OracleError::SchemaMismatch(e.to_string()))?;
    parsed
        .pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| OracleError::SchemaMismatch("missing choices[0].message.content".into()))
}

fn transport_error(e: ureq::Error) -> OracleError {
    match e {
        ureq::Error::Timeout(_) => OracleError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => OracleError::Timeout,
        other => OracleError::Transport(other.to_string()),
    }
}
