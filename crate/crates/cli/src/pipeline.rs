use std::collections::HashMap;
use std::time::Duration;

use ocanomaly::aggregate::{anomalous_feature_report, ReportOptions};
use ocanomaly::detect::{
    bottom_k, isolation_forest, lof, rank, render_score_table, IsolationForestParams, LofParams,
    ScoreSource, ScoreVector,
};
use ocanomaly::features::{
    extract_features, normalize, propagate_features, ExtractionConfig, FeatureMatrix,
    NormalizedFeatureMatrix,
};
use ocanomaly::oracle::{
    abstract_lifecycle, flag_objects, llm_oracle, statistical_oracle, summarize_features,
    LlmEndpoint, FEATURE_TABLE_PROMPT,
};
use ocanomaly::reduce::{fastmap, pca};
use ocanomaly::synthgen::{generate_p2p, SynthConfig};
use ocanomaly::{DataMatrix, OcelLog};

use crate::args::{
    AbstractArgs, AggregateArgs, Command, DetectArgs, Detector, DetectorArgs, FeatureArgs,
    FeaturesArgs, GenerateArgs, OracleKind, Reducer,
};
use crate::manifest::OutputDir;
use crate::CliError;

/// `inputs` holds the bytes of `command.inputs()`, in the same order.
pub(crate) fn dispatch(command: &Command, inputs: &[Vec<u8>], out: &mut OutputDir) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => generate(a, out),
        Command::Features(a) => features(a, &inputs[0], out),
        Command::Detect(a) => detect(a, &inputs[0], out),
        Command::Aggregate(a) => aggregate(a, &inputs[0], inputs.get(1).map(Vec::as_slice), out),
        Command::Abstract(a) => abstract_table(a, &inputs[0], out),
        Command::Replay(_) => unreachable!("replay is handled before dispatch"),
    }
}

fn generate(a: &GenerateArgs, out: &mut OutputDir) -> Result<(), CliError> {
    let mut cfg = SynthConfig::new(a.orders, a.seed);
    for r in &a.rates {
        cfg = cfg.with_rate(r.kind, r.rate);
    }
    if let Some(g) = a.mean_gap_secs {
        cfg.mean_gap_secs = g;
    }
    if let Some(g) = a.mean_interarrival_secs {
        cfg.mean_interarrival_secs = g;
    }
    let (log, truth) = generate_p2p(&cfg)?;
    out.write("log.json", log.to_json().as_bytes())?;
    out.write("ground_truth.csv", truth.to_csv_string().as_bytes())
}

fn load(fa: &FeatureArgs, bytes: &[u8]) -> Result<(OcelLog, FeatureMatrix), CliError> {
    let log = OcelLog::from_json(bytes)?;
    let cfg = ExtractionConfig {
        include_cobirth_codeath: fa.cobirth,
    };
    let mut f = extract_features(&log, &fa.object_type, &cfg)?;
    if let Some(neighbor_type) = &fa.propagate {
        let neighbor = extract_features(&log, neighbor_type, &cfg)?;
        f = propagate_features(&log, &f, &neighbor, fa.agg)?;
    }
    Ok((log, f))
}

fn prepare(fa: &FeatureArgs, f: &FeatureMatrix) -> Result<NormalizedFeatureMatrix, CliError> {
    Ok(normalize(f, fa.epsilon)?.variance_filter(fa.min_variance)?)
}

fn features(a: &FeaturesArgs, bytes: &[u8], out: &mut OutputDir) -> Result<(), CliError> {
    let (_, f) = load(&a.features, bytes)?;
    let norm = prepare(&a.features, &f)?;
    out.write("features_raw.csv", f.to_csv_string().as_bytes())?;
    out.write("features.csv", norm.to_matrix().to_csv_string().as_bytes())
}

fn run_detector<M: DataMatrix + ?Sized>(d: &DetectorArgs, m: &M) -> Result<ScoreVector, CliError> {
    Ok(match d.resolved_detector() {
        Detector::Iforest => isolation_forest(
            m,
            IsolationForestParams {
                n_trees: d.trees,
                subsample: d.subsample,
                seed: d.seed,
            },
        )?,
        Detector::Lof => {
            let n = m.row_ids().len();
            let k = d.lof_k.min(n.saturating_sub(1)).max(1);
            if k != d.lof_k {
                log::info!("lof k lowered from {} to {k} for {n} rows", d.lof_k);
            }
            lof(m, LofParams { k })?
        }
    })
}

/// Optionally reduce, then score. The embedding is written when one is built.
fn score(d: &DetectorArgs, norm: &NormalizedFeatureMatrix, out: &mut OutputDir) -> Result<ScoreVector, CliError> {
    let (rows, cols) = norm.values().dim();
    let dims = d.dims.min(rows).min(cols).max(1);
    let embedding = match d.reducer {
        Reducer::None => return run_detector(d, norm),
        Reducer::Pca => pca(norm, dims)?,
        Reducer::Fastmap => fastmap(norm, dims, d.pivot_iters, d.seed)?,
    };
    out.write("embedding.csv", embedding.to_csv_string().as_bytes())?;
    run_detector(d, &embedding)
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn detect(a: &DetectArgs, bytes: &[u8], out: &mut OutputDir) -> Result<(), CliError> {
    let (log, f) = load(&a.features, bytes)?;
    let norm = prepare(&a.features, &f)?;
    let scores = score(&a.detector, &norm, out)?;
    let ranks = rank(&scores);
    out.write("scores.csv", scores.to_csv_string().as_bytes())?;
    out.write("ranks.csv", ranks.to_csv_string().as_bytes())?;

    let k = a.top_k.min(scores.len());
    let worst = bottom_k(&ranks, k)?;
    let by_id: HashMap<&str, f64> = scores
        .object_ids()
        .iter()
        .map(String::as_str)
        .zip(scores.scores().iter().copied())
        .collect();
    let worst_scores: Vec<f64> = worst.iter().map(|id| by_id[id.as_str()]).collect();
    out.write(
        "top_k.txt",
        render_score_table(&worst, &[("Score", &worst_scores)]).as_bytes(),
    )?;
    for (i, id) in worst.iter().enumerate() {
        let text = abstract_lifecycle(&log, id, a.max_events)?;
        out.write(&format!("lifecycles/{i:04}_{}.txt", file_safe(id)), text.as_bytes())?;
    }
    Ok(())
}

/// Scores from an `object_id,score` CSV, reordered to the rows of `f`.
fn read_scores(bytes: &[u8], f: &FeatureMatrix) -> Result<ScoreVector, CliError> {
    let bad = |m: String| CliError::Validation(format!("scores file: {m}"));
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column {name}")))
    };
    let (id_col, score_col) = (position("object_id")?, position("score")?);
    let mut by_id: HashMap<String, f64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let id = record.get(id_col).unwrap_or_default().to_string();
        let raw = record.get(score_col).unwrap_or_default();
        let value: f64 = raw.parse().map_err(|_| bad(format!("score {raw:?} for {id}")))?;
        if by_id.insert(id.clone(), value).is_some() {
            return Err(bad(format!("duplicate object {id}")));
        }
    }
    let ids = f.row_ids().to_vec();
    let mut values = Vec::with_capacity(ids.len());
    for id in &ids {
        values.push(by_id.remove(id).ok_or_else(|| bad(format!("no score for {id}")))?);
    }
    if let Some(extra) = by_id.keys().min() {
        return Err(bad(format!("{extra} is not a {} object", f.object_type())));
    }
    Ok(ScoreVector::new(ids, values, ScoreSource::External)?)
}

fn aggregate(a: &AggregateArgs, bytes: &[u8], scores_file: Option<&[u8]>, out: &mut OutputDir) -> Result<(), CliError> {
    let (_, f) = load(&a.features, bytes)?;
    let scores = match scores_file {
        Some(s) => read_scores(s, &f)?,
        None => {
            let norm = prepare(&a.features, &f)?;
            let s = score(&a.detector, &norm, out)?;
            out.write("scores.csv", s.to_csv_string().as_bytes())?;
            s
        }
    };
    let opts = ReportOptions {
        max_distinct: a.max_distinct,
        epsilon: a.features.epsilon,
        top_n: a.top_n,
        merge_identical: !a.no_merge,
    };
    let table = anomalous_feature_report(&f, &scores, &opts)?;
    out.write("feature_scores.csv", table.to_csv_string().as_bytes())?;
    out.write("feature_scores.txt", table.render_text().as_bytes())
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.write_record(row).expect("write to memory");
    }
    w.into_inner().expect("flush to memory")
}

fn abstract_table(a: &AbstractArgs, bytes: &[u8], out: &mut OutputDir) -> Result<(), CliError> {
    let (_, f) = load(&a.features, bytes)?;
    let summary = summarize_features(&f)?;
    out.write("summary.txt", summary.render_text().as_bytes())?;
    if a.raw_table {
        out.write("features_raw.csv", f.to_csv_string().as_bytes())?;
    }
    match a.oracle {
        OracleKind::Statistical => {
            let verdicts = statistical_oracle(&summary, a.whisker);
            let rows = verdicts.iter().map(|v| {
                vec![
                    v.feature.clone(),
                    v.scorer.low.to_string(),
                    v.scorer.high.to_string(),
                    v.scorer.median.to_string(),
                    v.rationale.clone(),
                ]
            });
            out.write(
                "verdicts.csv",
                &csv_bytes(&["feature", "low", "high", "median", "rationale"], rows),
            )?;
            let flagged = flag_objects(&f, &verdicts).into_iter().map(|(id, feature, value, s)| {
                vec![id, feature, value.to_string(), s.to_string()]
            });
            out.write(
                "flagged.csv",
                &csv_bytes(&["object_id", "feature", "value", "score"], flagged),
            )
        }
        OracleKind::Llm => {
            let missing = |flag: &str| CliError::Validation(format!("--oracle llm requires {flag}"));
            let endpoint = LlmEndpoint {
                url: a.llm_url.clone().ok_or_else(|| missing("--llm-url"))?,
                model: a.llm_model.clone().ok_or_else(|| missing("--llm-model"))?,
                api_key: std::env::var(&a.llm_key_env).ok(),
                timeout: Duration::from_secs(a.timeout_secs),
            };
            let text = if a.raw_table {
                f.to_csv_string()
            } else {
                summary.render_text()
            };
            let reply = llm_oracle(&endpoint, FEATURE_TABLE_PROMPT, &text)?;
            out.write("oracle_reply.txt", reply.as_bytes())
        }
    }
}
