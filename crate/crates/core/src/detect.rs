//! Object scoring and ranking.
//!
//! Both detectors emit scores where lower means more anomalous: Isolation
//! Forest reports `0.5 - s(x)` and LOF reports `-LOF(x)`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::DataMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("need at least {need} rows, got {rows}")]
    TooFewRows { rows: usize, need: usize },
    #[error("matrix has no columns")]
    NoColumns,
    #[error("requested {k} objects out of {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("{ids} object ids for {scores} scores")]
    LengthMismatch { ids: usize, scores: usize },
    #[error("score for {0} is not finite")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationForestParams {
    pub n_trees: usize,
    pub subsample: usize,
    pub seed: u64,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        IsolationForestParams {
            n_trees: 100,
            subsample: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LofParams {
    pub k: usize,
}

impl Default for LofParams {
    fn default() -> Self {
        LofParams { k: 20 }
    }
}

/// Which scorer produced a [`ScoreVector`], with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ScoreSource {
    #[serde(rename = "iforest")]
    IsolationForest(IsolationForestParams),
    Lof(LofParams),
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    object_ids: Vec<String>,
    scores: Vec<f64>,
    pub source: ScoreSource,
}

impl ScoreVector {
    pub fn new(
        object_ids: Vec<String>,
        scores: Vec<f64>,
        source: ScoreSource,
    ) -> Result<Self, DetectError> {
        if object_ids.len() != scores.len() {
            return Err(DetectError::LengthMismatch {
                ids: object_ids.len(),
                scores: scores.len(),
            });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(DetectError::NonFinite(object_ids[i].clone()));
        }
        Ok(ScoreVector {
            object_ids,
            scores,
            source,
        })
    }

    pub fn object_ids(&self) -> &[String] {
        &self.object_ids
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("object_id,score\n");
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for (id, s) in self.object_ids.iter().zip(&self.scores) {
            w.write_record([id.as_str(), &s.to_string()])
                .expect("in-memory csv");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8"));
        out
    }
}

/// Injective rank: 0 is the most anomalous object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVector {
    object_ids: Vec<String>,
    ranks: Vec<usize>,
}

impl RankVector {
    pub fn object_ids(&self) -> &[String] {
        &self.object_ids
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.object_ids
            .iter()
            .position(|o| o == id)
            .map(|i| self.ranks[i])
    }

    /// Object ids sorted by rank.
    pub fn in_rank_order(&self) -> Vec<&str> {
        let mut out = vec![""; self.ranks.len()];
        for (id, &r) in self.object_ids.iter().zip(&self.ranks) {
            out[r] = id;
        }
        out
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["object_id", "rank"]).expect("in-memory csv");
        for (id, r) in self.object_ids.iter().zip(&self.ranks) {
            w.write_record([id.as_str(), &r.to_string()])
                .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

/// Rank objects by ascending score; equal scores are ordered by object id.
pub fn rank(scores: &ScoreVector) -> RankVector {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores.scores[a]
            .total_cmp(&scores.scores[b])
            .then_with(|| scores.object_ids[a].cmp(&scores.object_ids[b]))
    });
    let mut ranks = vec![0; order.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r;
    }
    RankVector {
        object_ids: scores.object_ids.clone(),
        ranks,
    }
}

/// The `k` lowest-ranked objects, most anomalous first.
pub fn bottom_k(ranks: &RankVector, k: usize) -> Result<Vec<String>, DetectError> {
    let n = ranks.ranks.len();
    if k > n {
        return Err(DetectError::KTooLarge { k, n });
    }
    Ok(ranks
        .in_rank_order()
        .into_iter()
        .take(k)
        .map(String::from)
        .collect())
}

/// Aligned text table with one score column per detector, rows in the given
/// order (e.g. `PO_23667  -0.200785  -40.049412`).
pub fn render_score_table(ids: &[String], columns: &[(&str, &[f64])]) -> String {
    let id_width = ids
        .iter()
        .map(String::len)
        .chain(std::iter::once("Object ID".len()))
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = columns
        .iter()
        .map(|(name, vals)| {
            vals.iter()
                .map(|v| format!("{v:.6}").len())
                .chain(std::iter::once(name.len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:<id_width$}", "Object ID");
    for ((name, _), w) in columns.iter().zip(&widths) {
        let _ = write!(out, "  {name:>w$}");
    }
    out.push('\n');
    for (i, id) in ids.iter().enumerate() {
        let _ = write!(out, "{id:<id_width$}");
        for ((_, vals), w) in columns.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", format!("{:.6}", vals[i]));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Isolation Forest

/// Harmonic number H(i); exact summation for small i.
fn harmonic(i: usize) -> f64 {
    if i < 1000 {
        (1..=i).map(|j| 1.0 / j as f64).sum()
    } else {
        let x = i as f64;
        x.ln() + 0.577_215_664_901_532_9 + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x)
    }
}

/// Average path length of an unsuccessful search in a binary search tree
/// built from `m` points.
pub fn average_path_length(m: usize) -> f64 {
    if m <= 1 {
        0.0
    } else {
        let mf = m as f64;
        2.0 * harmonic(m - 1) - 2.0 * (mf - 1.0) / mf
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        size: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    fn grow(data: ArrayView2<'_, f64>, sample: Vec<usize>, limit: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut tree = IsolationTree { nodes: Vec::new() };
        tree.build(data, sample, 0, limit, rng);
        tree
    }

    fn build(
        &mut self,
        data: ArrayView2<'_, f64>,
        rows: Vec<usize>,
        depth: usize,
        limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if depth >= limit || rows.len() <= 1 {
            return id;
        }
        let ranges: Vec<(usize, f64, f64)> = (0..data.ncols())
            .filter_map(|j| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    let v = data[[r, j]];
                    (lo.min(v), hi.max(v))
                });
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let threshold = rng.random_range(lo..hi);
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| data[[i, feature]] <= threshold);
        let left = self.build(data, l, depth + 1, limit, rng);
        let right = self.build(data, r, depth + 1, limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn path_length(&self, x: ndarray::ArrayView1<'_, f64>) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature] <= threshold { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

/// Isolation Forest scores, `0.5 - 2^(-E[h(x)] / c(ψ))` per row.
pub fn isolation_forest<M: DataMatrix + ?Sized>(
    f: &M,
    params: IsolationForestParams,
) -> Result<ScoreVector, DetectError> {
    let data = f.data();
    let (n, d) = data.dim();
    if n < 2 {
        return Err(DetectError::TooFewRows { rows: n, need: 2 });
    }
    if d == 0 {
        return Err(DetectError::NoColumns);
    }
    if data.rows().into_iter().all(|r| r == data.row(0)) {
        log::warn!("isolation forest input has identical rows; all scores are equal");
    }

    let psi = params.subsample.clamp(1, n);
    let limit = (psi as f64).log2().ceil() as usize;
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| master.random()).collect();
    let trees: Vec<IsolationTree> = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let sample = rand::seq::index::sample(&mut rng, n, psi).into_vec();
            IsolationTree::grow(data, sample, limit, &mut rng)
        })
        .collect();

    let norm = average_path_length(psi);
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = data.row(i);
            let total: f64 = trees.iter().map(|t| t.path_length(row)).sum();
            let mean = total / trees.len().max(1) as f64;
            let s = if norm > 0.0 { (-mean / norm).exp2() } else { 0.5 };
            0.5 - s
        })
        .collect();

    ScoreVector::new(
        f.row_ids().to_vec(),
        scores,
        ScoreSource::IsolationForest(params),
    )
}

// ---------------------------------------------------------------------------
// Local Outlier Factor

/// Added to the mean reachability distance so coincident points get a large
/// finite density instead of infinity.
pub const LOF_DENSITY_FLOOR: f64 = 1e-10;

fn euclidean(data: ArrayView2<'_, f64>, a: usize, b: usize) -> f64 {
    data.row(a)
        .iter()
        .zip(data.row(b))
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// k-nearest neighborhood of `a`: every other point within the k-distance,
/// so ties at the boundary are all included.
fn neighborhood(data: ArrayView2<'_, f64>, a: usize, k: usize) -> (f64, Vec<(usize, f64)>) {
    let mut dists: Vec<(usize, f64)> = (0..data.nrows())
        .filter(|&b| b != a)
        .map(|b| (b, euclidean(data, a, b)))
        .collect();
    dists.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    let kdist = dists[k - 1].1;
    let cut = dists.partition_point(|&(_, d)| d <= kdist);
    dists.truncate(cut);
    (kdist, dists)
}

/// Local Outlier Factor with brute-force neighbor search; emits `-LOF`.
pub fn lof<M: DataMatrix + ?Sized>(f: &M, params: LofParams) -> Result<ScoreVector, DetectError> {
    let data = f.data();
    let n = data.nrows();
    let k = params.k.max(1);
    if n < k + 1 {
        return Err(DetectError::TooFewRows { rows: n, need: k + 1 });
    }

    let hoods: Vec<(f64, Vec<(usize, f64)>)> =
        (0..n).into_par_iter().map(|a| neighborhood(data, a, k)).collect();
    let lrd: Vec<f64> = hoods
        .iter()
        .map(|(_, nbrs)| {
            let reach: f64 = nbrs.iter().map(|&(b, d)| hoods[b].0.max(d)).sum();
            1.0 / (reach / nbrs.len() as f64 + LOF_DENSITY_FLOOR)
        })
        .collect();
    let scores: Vec<f64> = hoods
        .iter()
        .enumerate()
        .map(|(a, (_, nbrs))| {
            let ratio: f64 = nbrs.iter().map(|&(b, _)| lrd[b] / lrd[a]).sum();
            -(ratio / nbrs.len() as f64)
        })
        .collect();

    ScoreVector::new(f.row_ids().to_vec(), scores, ScoreSource::Lof(params))
}

/// Compare two scores with the detector's convention (lower = more anomalous).
pub fn score_order(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMatrix;
    use ndarray::{array, Array2};

    fn matrix(values: Array2<f64>) -> FeatureMatrix {
        let rows = (0..values.nrows()).map(|i| format!("r{i:03}")).collect();
        let cols = (0..values.ncols()).map(|j| format!("c{j}")).collect();
        FeatureMatrix::new("t", rows, cols, values).unwrap()
    }

    fn sv(pairs: &[(&str, f64)]) -> ScoreVector {
        ScoreVector::new(
            pairs.iter().map(|p| p.0.to_string()).collect(),
            pairs.iter().map(|p| p.1).collect(),
            ScoreSource::External,
        )
        .unwrap()
    }

    #[test]
    fn c_of_two_is_one() {
        assert_eq!(average_path_length(2), 1.0);
        assert_eq!(average_path_length(1), 0.0);
        let approx = 2.0 * (255f64.ln() + 0.577_215_664_901_532_9) - 2.0 * 255.0 / 256.0;
        assert!((average_path_length(256) - approx).abs() < 1e-2);
        assert!((average_path_length(3) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_points_score_zero() {
        let f = matrix(array![[0.0, 1.0], [3.0, -2.0]]);
        let s = isolation_forest(&f, IsolationForestParams { seed: 4, ..Default::default() }).unwrap();
        for v in s.scores() {
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn identical_rows_share_a_score() {
        let f = matrix(Array2::from_elem((10, 3), 1.5));
        let s = isolation_forest(&f, IsolationForestParams::default()).unwrap();
        assert!(s.scores().iter().all(|&v| v == s.scores()[0]));
    }

    #[test]
    fn planted_point_is_most_anomalous() {
        let mut values = Array2::zeros((101, 2));
        for i in 0..100 {
            values[[i, 0]] = (i % 10) as f64 / 10.0 + 0.03 * (i / 10) as f64;
            values[[i, 1]] = (i / 10) as f64 / 10.0 + 0.02 * (i % 7) as f64;
        }
        values[[100, 0]] = 10.0;
        values[[100, 1]] = 10.0;
        let f = matrix(values);
        for seed in 1..=10 {
            let s = isolation_forest(&f, IsolationForestParams { seed, ..Default::default() }).unwrap();
            let min = s.scores().iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(s.scores()[100], min, "seed {seed}");
        }
    }

    #[test]
    fn forest_is_deterministic() {
        let f = matrix(Array2::from_shape_fn((50, 3), |(i, j)| ((i * 31 + j * 17) % 23) as f64));
        let p = IsolationForestParams { seed: 11, ..Default::default() };
        assert_eq!(isolation_forest(&f, p).unwrap(), isolation_forest(&f, p).unwrap());
    }

    #[test]
    fn forest_needs_rows_and_columns() {
        let f = matrix(array![[1.0]]);
        assert!(matches!(
            isolation_forest(&f, IsolationForestParams::default()),
            Err(DetectError::TooFewRows { .. })
        ));
        let f = matrix(Array2::zeros((3, 0)));
        assert_eq!(
            isolation_forest(&f, IsolationForestParams::default()).unwrap_err(),
            DetectError::NoColumns
        );
    }

    #[test]
    fn lof_grid_interior_is_one() {
        let values = Array2::from_shape_fn((100, 2), |(i, j)| if j == 0 { (i % 10) as f64 } else { (i / 10) as f64 });
        let s = lof(&matrix(values), LofParams { k: 4 }).unwrap();
        for x in 2..8 {
            for y in 2..8 {
                let v = s.scores()[y * 10 + x];
                assert!((v + 1.0).abs() <= 0.2, "({x},{y}) {v}");
            }
        }
    }

    #[test]
    fn lof_coincident_points() {
        let s = lof(&matrix(Array2::from_elem((8, 2), 3.0)), LofParams { k: 3 }).unwrap();
        assert!(s.scores().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn lof_density_outlier() {
        let mut values = Array2::zeros((61, 2));
        for i in 0..30 {
            let t = i as f64 * 0.7;
            values[[i, 0]] = 0.1 * t.cos();
            values[[i, 1]] = 0.1 * t.sin();
            values[[30 + i, 0]] = 5.0 + 0.1 * (t * 1.3).cos();
            values[[30 + i, 1]] = 0.1 * (t * 1.3).sin();
        }
        values[[60, 0]] = 2.5;
        values[[60, 1]] = 1.0;
        let s = lof(&matrix(values), LofParams { k: 5 }).unwrap();
        let planted = s.scores()[60];
        assert!(s.scores()[..60].iter().all(|&v| v > planted));
    }

    #[test]
    fn lof_too_few_rows() {
        let f = matrix(Array2::zeros((5, 2)));
        assert_eq!(
            lof(&f, LofParams { k: 5 }).unwrap_err(),
            DetectError::TooFewRows { rows: 5, need: 6 }
        );
    }

    #[test]
    fn rank_examples() {
        let r = rank(&sv(&[("a", -2.0), ("b", -1.0), ("c", 0.0)]));
        assert_eq!(r.ranks(), [0, 1, 2]);
        let r = rank(&sv(&[("b", -1.0), ("a", -1.0)]));
        assert_eq!(r.rank_of("a"), Some(0));
        assert_eq!(r.rank_of("b"), Some(1));
    }

    #[test]
    fn bottom_k_examples() {
        let r = rank(&sv(&[("c", 0.0), ("a", -2.0), ("b", -1.0)]));
        assert!(bottom_k(&r, 0).unwrap().is_empty());
        assert_eq!(bottom_k(&r, 3).unwrap(), ["a", "b", "c"]);
        assert_eq!(bottom_k(&r, 2).unwrap(), ["a", "b"]);
        assert_eq!(bottom_k(&r, 4).unwrap_err(), DetectError::KTooLarge { k: 4, n: 3 });
    }

    #[test]
    fn score_table_row_format() {
        let ids = vec!["PO_23667".to_string()];
        let table = render_score_table(
            &ids,
            &[
                ("Isolation Forest Scores", &[-0.200785]),
                ("Local Outlier Factor Scores", &[-40.049412]),
            ],
        );
        let line = table.lines().nth(1).unwrap();
        let cells: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cells, ["PO_23667", "-0.200785", "-40.049412"]);
    }

    #[test]
    fn csv_layout() {
        let s = sv(&[("a", -0.5), ("b", 0.25)]);
        assert_eq!(s.to_csv_string(), "object_id,score\na,-0.5\nb,0.25\n");
        assert_eq!(rank(&s).to_csv_string(), "object_id,rank\na,0\nb,1\n");
    }

    #[test]
    fn non_finite_scores_rejected() {
        assert!(matches!(
            ScoreVector::new(vec!["a".into()], vec![f64::NAN], ScoreSource::External),
            Err(DetectError::NonFinite(_))
        ));
    }
}
