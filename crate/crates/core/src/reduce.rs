//! Dimensionality reduction: PCA and FastMap.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::DataMatrix;

pub const DEFAULT_FASTMAP_DIMS: usize = 8;
pub const DEFAULT_PIVOT_ITERS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReduceError {
    #[error("target dimension {k} outside 1..={max}")]
    InvalidDimension { k: usize, max: usize },
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionMethod {
    Pca,
    FastMap,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingDetail {
    Pca {
        /// k × d, orthonormal rows.
        components: Array2<f64>,
        explained_variance: Vec<f64>,
        mean: Array1<f64>,
    },
    FastMap {
        /// Pivot object ids of each non-degenerate axis; axes past the last
        /// pivot pair are all zero.
        pivots: Vec<(String, String)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    row_ids: Vec<String>,
    coords: Array2<f64>,
    pub detail: EmbeddingDetail,
}

impl Embedding {
    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }

    pub fn dims(&self) -> usize {
        self.coords.ncols()
    }

    pub fn method(&self) -> ReductionMethod {
        match self.detail {
            EmbeddingDetail::Pca { .. } => ReductionMethod::Pca,
            EmbeddingDetail::FastMap { .. } => ReductionMethod::FastMap,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = std::iter::once("object_id".to_string())
            .chain((0..self.dims()).map(|i| format!("dim_{i}")))
            .collect();
        w.write_record(&header).expect("in-memory csv");
        for (id, row) in self.row_ids.iter().zip(self.coords.rows()) {
            let record: Vec<String> = std::iter::once(id.clone())
                .chain(row.iter().map(|v| v.to_string()))
                .collect();
            w.write_record(&record).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

impl DataMatrix for Embedding {
    fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    fn data(&self) -> ArrayView2<'_, f64> {
        self.coords.view()
    }
}

fn check_dims(k: usize, rows: usize, cols: usize) -> Result<(), ReduceError> {
    let max = rows.min(cols);
    if k == 0 || k > max {
        return Err(ReduceError::InvalidDimension { k, max });
    }
    Ok(())
}

/// Principal component analysis on the covariance matrix (denominator n − 1).
///
/// Components come out in descending eigenvalue order, each flipped so that
/// its largest-magnitude entry is positive.
pub fn pca<M: DataMatrix + ?Sized>(f: &M, k: usize) -> Result<Embedding, ReduceError> {
    let data = f.data();
    let (n, d) = data.dim();
    check_dims(k, n, d)?;

    let mean = data.mean_axis(Axis(0)).expect("at least one row");
    let centered = &data - &mean;
    let denom = (n.max(2) - 1) as f64;
    let cov = centered.t().dot(&centered) / denom;

    let cov_na = nalgebra::DMatrix::from_fn(d, d, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let eig = nalgebra::SymmetricEigen::new(cov_na);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Array2::zeros((k, d));
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &src) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(src);
        let pivot = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .expect("d > 0");
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[[row, j]] = sign * v[j];
        }
        explained_variance.push(eig.eigenvalues[src].max(0.0));
    }

    let coords = centered.dot(&components.t());
    Ok(Embedding {
        row_ids: f.row_ids().to_vec(),
        coords,
        detail: EmbeddingDetail::Pca {
            components,
            explained_variance,
            mean,
        },
    })
}

struct Residual<'a> {
    data: ArrayView2<'a, f64>,
    coords: &'a Array2<f64>,
    axes: usize,
}

impl Residual<'_> {
    /// Squared distance left after removing the first `axes` coordinates,
    /// clamped at zero after every axis.
    fn dist2(&self, i: usize, j: usize) -> f64 {
        let mut d2: f64 = self
            .data
            .row(i)
            .iter()
            .zip(self.data.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        for h in 0..self.axes {
            let dx = self.coords[[i, h]] - self.coords[[j, h]];
            d2 = (d2 - dx * dx).max(0.0);
        }
        d2
    }

    fn farthest(&self, from: usize) -> usize {
        let n = self.data.nrows();
        let mut best = from;
        let mut best_d = -1.0;
        for i in 0..n {
            let d = self.dist2(from, i);
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// FastMap projection into `k` dimensions over Euclidean distances.
///
/// Pivots per axis come from the farthest-pair heuristic: a seeded random
/// start followed by `pivot_iters` alternating farthest-point sweeps.
pub fn fastmap<M: DataMatrix + ?Sized>(
    f: &M,
    k: usize,
    pivot_iters: usize,
    seed: u64,
) -> Result<Embedding, ReduceError> {
    let data = f.data();
    let (n, d) = data.dim();
    if n < 2 {
        return Err(ReduceError::TooFewRows(n));
    }
    check_dims(k, n, d)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Array2::zeros((n, k));
    let mut pivots = Vec::new();
    let mut scale = 0.0;

    for axis in 0..k {
        let residual = Residual {
            data,
            coords: &coords,
            axes: axis,
        };
        let mut b = rng.random_range(0..n);
        let mut a = b;
        for _ in 0..pivot_iters.max(1) {
            a = residual.farthest(b);
            b = residual.farthest(a);
        }
        let dab2 = residual.dist2(a, b);
        if axis == 0 {
            scale = dab2;
        }
        if dab2 <= 0.0 || dab2 <= 1e-24 * scale {
            break;
        }
        let dab = dab2.sqrt();
        let column: Vec<f64> = (0..n)
            .map(|i| (residual.dist2(a, i) + dab2 - residual.dist2(b, i)) / (2.0 * dab))
            .collect();
        for (i, x) in column.into_iter().enumerate() {
            coords[[i, axis]] = x;
        }
        let ids = f.row_ids();
        pivots.push((ids[a].clone(), ids[b].clone()));
    }

    Ok(Embedding {
        row_ids: f.row_ids().to_vec(),
        coords,
        detail: EmbeddingDetail::FastMap { pivots },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMatrix;
    use ndarray::array;

    fn matrix(values: Array2<f64>) -> FeatureMatrix {
        let rows = (0..values.nrows()).map(|i| format!("r{i}")).collect();
        let cols = (0..values.ncols()).map(|j| format!("c{j}")).collect();
        FeatureMatrix::new("t", rows, cols, values).unwrap()
    }

    fn dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn pca_on_a_line() {
        let f = matrix(array![[-2.0, 0.0], [0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]);
        let e = pca(&f, 1).unwrap();
        let EmbeddingDetail::Pca { components, .. } = &e.detail else {
            panic!("pca detail")
        };
        assert!((components[[0, 0]] - 1.0).abs() < 1e-12);
        assert!(components[[0, 1]].abs() < 1e-12);
    }

    #[test]
    fn pca_identical_rows() {
        let f = matrix(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]);
        let e = pca(&f, 2).unwrap();
        assert!(e.coords().iter().all(|&v| v == 0.0));
        let EmbeddingDetail::Pca {
            explained_variance, ..
        } = &e.detail
        else {
            panic!("pca detail")
        };
        assert!(explained_variance.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pca_rejects_bad_k() {
        let f = matrix(array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(matches!(pca(&f, 3), Err(ReduceError::InvalidDimension { .. })));
        assert!(matches!(pca(&f, 0), Err(ReduceError::InvalidDimension { .. })));
    }

    #[test]
    fn fastmap_two_points() {
        let f = matrix(array![[0.0, 0.0], [4.0, 0.0]]);
        let e = fastmap(&f, 1, DEFAULT_PIVOT_ITERS, 3).unwrap();
        let mut xs: Vec<f64> = e.coords().column(0).to_vec();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, vec![0.0, 4.0]);
    }

    #[test]
    fn fastmap_identical_points() {
        let f = matrix(Array2::from_elem((5, 3), 0.25));
        let e = fastmap(&f, 3, DEFAULT_PIVOT_ITERS, 1).unwrap();
        assert!(e.coords().iter().all(|&v| v == 0.0));
        assert_eq!(e.detail, EmbeddingDetail::FastMap { pivots: vec![] });
    }

    #[test]
    fn fastmap_triangle_exact() {
        let f = matrix(array![[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]);
        let expected = [[0.0, 3.0, 4.0], [3.0, 0.0, 5.0], [4.0, 5.0, 0.0]];
        for seed in 0..5 {
            let e = fastmap(&f, 2, DEFAULT_PIVOT_ITERS, seed).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let got = dist(e.coords().row(i), e.coords().row(j));
                    assert!((got - expected[i][j]).abs() <= 1e-9, "{i} {j} {got}");
                }
            }
        }
    }

    #[test]
    fn fastmap_too_few_rows() {
        let f = matrix(array![[1.0, 2.0]]);
        assert_eq!(
            fastmap(&f, 1, 5, 0).unwrap_err(),
            ReduceError::TooFewRows(1)
        );
    }

    #[test]
    fn fastmap_is_deterministic() {
        let values = Array2::from_shape_fn((30, 6), |(i, j)| ((i * 7 + j * 13) % 11) as f64 / 11.0);
        let f = matrix(values);
        let a = fastmap(&f, 4, 5, 9).unwrap();
        let b = fastmap(&f, 4, 5, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn embedding_csv_header() {
        let f = matrix(array![[0.0, 0.0], [4.0, 0.0]]);
        let e = fastmap(&f, 2, 5, 0).unwrap();
        assert!(e.to_csv_string().starts_with("object_id,dim_0,dim_1\n"));
    }
}
