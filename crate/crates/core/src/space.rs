//! Input and output metric spaces, their pairwise distortion, nearest neighbours
//! in input space, and a deterministic 2-D projection for display.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::FeatureView;
use crate::error::{Error, Result};
use crate::ranking::Ranking;

/// Default neighbourhood size for instance-level measures.
pub const DEFAULT_H: usize = 4;

/// Gower distance between rows `a` and `b` over the view's features.
///
/// Continuous features contribute `|a - b| / range`, categorical ones 0 or 1.
pub fn gower_distance(a: usize, b: usize, view: &FeatureView) -> f64 {
    let cols = view.columns();
    let mut sum = 0.0;
    for c in cols {
        sum += c.gower_term(a, b);
    }
    sum / cols.len() as f64
}

/// Symmetric `n × n` matrix with zero diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
    normalized: bool,
}

impl DistanceMatrix {
    /// Wraps a row-major matrix after checking shape, symmetry and the diagonal.
    pub fn from_row_major(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::SizeMismatch {
                expected: n * n,
                actual: values.len(),
            });
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::DegenerateMatrix(format!("non-zero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let (x, y) = (values[i * n + j], values[j * n + i]);
                if x != y || !x.is_finite() || x < 0.0 {
                    return Err(Error::DegenerateMatrix(format!("entry ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            n,
            values,
            normalized: false,
        })
    }

    /// Builds the matrix from a pairwise function evaluated on `i < j`.
    pub fn from_fn<F>(n: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| ((i + 1)..n).map(|j| f(i, j)).collect())
            .collect();
        let mut values = vec![0.0; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Self {
            n,
            values,
            normalized: false,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Min-max scales the off-diagonal entries onto `[0, 1]`.
    ///
    /// A flat matrix (all off-diagonal entries equal) maps to all ones.
    pub fn normalized(&self) -> DistanceMatrix {
        let n = self.n;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.get(i, j);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let span = hi - lo;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    values[i * n + j] = if span > 0.0 {
                        (self.get(i, j) - lo) / span
                    } else {
                        1.0
                    };
                }
            }
        }
        DistanceMatrix {
            n,
            values,
            normalized: true,
        }
    }
}

/// Pairwise Gower distances over all rows of the view (not normalized).
pub fn gower_matrix(view: &FeatureView) -> DistanceMatrix {
    DistanceMatrix::from_fn(view.n(), |i, j| gower_distance(i, j, view))
}

/// Input space, output space and their elementwise distortion.
#[derive(Debug, Clone)]
pub struct SpacePair {
    /// Raw Gower distances; neighbours and group separation are computed on these.
    pub gower: DistanceMatrix,
    pub input: DistanceMatrix,
    pub output: DistanceMatrix,
    pub distortion: DistanceMatrix,
}

impl SpacePair {
    pub fn n(&self) -> usize {
        self.input.n()
    }
}

/// Builds the normalized input and output spaces and `|d_I - d_O|` per pair.
pub fn build_space_pair(view: &FeatureView, ranking: &Ranking) -> Result<SpacePair> {
    let gower = gower_matrix(view);
    space_pair_from_gower(gower, ranking)
}

pub fn space_pair_from_gower(gower: DistanceMatrix, ranking: &Ranking) -> Result<SpacePair> {
    let n = gower.n();
    if ranking.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: ranking.len(),
        });
    }
    let input = gower.normalized();
    let output = DistanceMatrix::from_fn(n, |i, j| ranking.rank(i).abs_diff(ranking.rank(j)) as f64)
        .normalized();
    let mut values = vec![0.0; n * n];
    for (v, (a, b)) in values
        .iter_mut()
        .zip(input.as_slice().iter().zip(output.as_slice()))
    {
        *v = (a - b).abs();
    }
    let distortion = DistanceMatrix {
        n,
        values,
        normalized: true,
    };
    Ok(SpacePair {
        gower,
        input,
        output,
        distortion,
    })
}

/// The `h` rows closest to `i` in input space, excluding `i`. Ties go to the smaller id.
pub fn nearest_neighbors(view: &FeatureView, i: usize, h: usize) -> Result<Vec<usize>> {
    let n = view.n();
    if i >= n {
        return Err(Error::UnknownInstance(i));
    }
    if h >= n {
        return Err(Error::HTooLarge { h, n });
    }
    let dist: Vec<f64> = (0..n).map(|j| gower_distance(i, j, view)).collect();
    Ok(closest(&dist, i, h))
}

/// Nearest neighbours of every row, read off a precomputed distance matrix.
pub fn all_nearest_neighbors(dm: &DistanceMatrix, h: usize) -> Result<Vec<Vec<usize>>> {
    let n = dm.n();
    if h >= n {
        return Err(Error::HTooLarge { h, n });
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| closest(dm.row(i), i, h))
        .collect())
}

fn closest(dist: &[f64], i: usize, h: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..dist.len()).filter(|&j| j != i).collect();
    ids.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    ids.truncate(h);
    ids
}

/// 2-D coordinates in abstract units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding2D {
    pub coords: Vec<[f64; 2]>,
}

/// Classical (Torgerson) multidimensional scaling onto two axes.
///
/// Each axis is flipped so that its entry of largest magnitude is positive.
pub fn embed_2d(dm: &DistanceMatrix) -> Result<Embedding2D> {
    let n = dm.n();
    if n < 2 {
        return Err(Error::DegenerateMatrix(format!("need at least 2 points, got {n}")));
    }
    if dm.as_slice().iter().all(|&d| d == 0.0) {
        return Ok(Embedding2D {
            coords: vec![[0.0, 0.0]; n],
        });
    }

    // B = -1/2 J D^2 J
    let sq = DMatrix::from_fn(n, n, |i, j| {
        let d = dm.get(i, j);
        d * d
    });
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand)
    });

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));

    let mut coords = vec![[0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[k];
        if lambda <= 0.0 {
            continue;
        }
        let s = lambda.sqrt();
        let col = eig.eigenvectors.column(k);
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        let sign = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][axis] = sign * col[i] * s;
        }
    }
    Ok(Embedding2D { coords })
}
