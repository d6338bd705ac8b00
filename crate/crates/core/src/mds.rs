//! Classical (Torgerson) multidimensional scaling of a distance matrix onto
//! the plane.
//!
//! 1. Square the distances element-wise: `D2[i][j] = d[i][j]^2`.
//! 2. Double-center: `B = -1/2 · J · D2 · J` with `J = I - (1/n)·11ᵀ`, i.e.
//!    `B[i][j] = -1/2 · (D2[i][j] - row_mean[i] - row_mean[j] + grand_mean)`.
//! 3. Eigendecompose the symmetric `B` and sort eigenvalues descending.
//! 4. Coordinates on axis `a` are eigenvector `a` scaled by `sqrt(max(λ_a, 0))`.
//!
//! Jaccard distances are rarely Euclidean, so `B` usually has negative
//! eigenvalues. They are clipped to zero for the coordinates and their
//! magnitude is reported as `clipped_negative_mass`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::corpus::DiversitySource;
use crate::similarity::DistanceMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MdsError {
    #[error("need at least 2 tests, got {0}")]
    TooFewTests(usize),
    #[error("all distances are zero; stress is undefined")]
    ZeroDistanceMatrix,
    #[error("embedding and matrix describe different tests")]
    MismatchedIds,
    #[error("invalid dissimilarity matrix: {0}")]
    InvalidMatrix(String),
}

/// A 2-D similarity map. Axis units carry no meaning; only relative
/// distances between points do.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub ids: Vec<String>,
    pub source: DiversitySource,
    pub coords: Vec<[f64; 2]>,
    /// Normalized residual between input and embedded distances; 0 for an
    /// all-zero matrix.
    pub stress: f64,
    pub clipped_negative_mass: f64,
    /// Every eigenvalue of `B`, descending. Values within round-off of zero
    /// are reported as exactly 0.
    pub eigenvalues: Vec<f64>,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Euclidean distance between embedded points `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let [x1, y1] = self.coords[i];
        let [x2, y2] = self.coords[j];
        (x1 - x2).hypot(y1 - y2)
    }

    /// The points of `ids`, in that order, without re-centering.
    pub fn restrict<S: AsRef<str>>(&self, ids: &[S]) -> Option<Embedding> {
        let coords = ids
            .iter()
            .map(|id| {
                self.ids
                    .iter()
                    .position(|x| x == id.as_ref())
                    .map(|i| self.coords[i])
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Embedding {
            ids: ids.iter().map(|s| s.as_ref().to_string()).collect(),
            coords,
            ..self.clone()
        })
    }
}

/// Coordinates and spectrum of a classical MDS run, before ids are attached.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarLayout {
    pub coords: Vec<[f64; 2]>,
    pub eigenvalues: Vec<f64>,
    pub clipped_negative_mass: f64,
}

/// The double-centered Gram matrix `B`, exactly symmetric.
pub fn double_center(d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.nrows();
    let sq = |i: usize, j: usize| d[(i, j)] * d[(i, j)];
    let row_mean: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| sq(i, j)).sum::<f64>() / n as f64)
        .collect();
    let grand_mean = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = -0.5 * (sq(i, j) - row_mean[i] - row_mean[j] + grand_mean);
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    b
}

/// Classical MDS of any symmetric, zero-diagonal, non-negative
/// dissimilarity matrix.
pub fn classical_layout(d: &DMatrix<f64>) -> Result<PlanarLayout, MdsError> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(MdsError::InvalidMatrix("not square".into()));
    }
    if n < 2 {
        return Err(MdsError::TooFewTests(n));
    }
    for i in 0..n {
        if d[(i, i)] != 0.0 {
            return Err(MdsError::InvalidMatrix(format!("d[{i}][{i}] is not 0")));
        }
        for j in 0..n {
            let v = d[(i, j)];
            if !v.is_finite() || v < 0.0 || v != d[(j, i)] {
                return Err(MdsError::InvalidMatrix(format!(
                    "d[{i}][{j}] must be finite, non-negative and symmetric"
                )));
            }
        }
    }

    let eigen = SymmetricEigen::new(double_center(d));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let scale = eigen.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tolerance = scale * n as f64 * 1e-12;
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| eigen.eigenvalues[i])
        .map(|v| if v.abs() <= tolerance { 0.0 } else { v })
        .collect();
    let clipped_negative_mass = eigenvalues.iter().filter(|v| **v < 0.0).map(|v| -v).sum();

    let mut coords = vec![[0.0; 2]; n];
    for axis in 0..2.min(n) {
        let lambda = eigenvalues[axis];
        if lambda <= 0.0 {
            continue;
        }
        let column = eigen.eigenvectors.column(order[axis]);
        // sign convention: the largest-magnitude entry is positive
        let pivot = (0..n).fold(0, |best, i| {
            if column[i].abs() > column[best].abs() {
                i
            } else {
                best
            }
        });
        let sign = if column[pivot] < 0.0 { -1.0 } else { 1.0 };
        let factor = sign * lambda.sqrt();
        for (i, point) in coords.iter_mut().enumerate() {
            point[axis] = column[i] * factor;
        }
    }
    Ok(PlanarLayout {
        coords,
        eigenvalues,
        clipped_negative_mass,
    })
}

pub fn classical_mds(m: &DistanceMatrix) -> Result<Embedding, MdsError> {
    let n = m.len();
    if n < 2 {
        return Err(MdsError::TooFewTests(n));
    }
    let layout = classical_layout(&DMatrix::from_fn(n, n, |i, j| m.get(i, j)))?;
    let mut embedding = Embedding {
        ids: m.ids().to_vec(),
        source: m.source(),
        coords: layout.coords,
        stress: 0.0,
        clipped_negative_mass: layout.clipped_negative_mass,
        eigenvalues: layout.eigenvalues,
    };
    embedding.stress = match stress(m, &embedding) {
        Ok(s) => s,
        Err(MdsError::ZeroDistanceMatrix) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(embedding)
}

/// `sqrt(Σ_{i<j} (d_ij - δ_ij)² / Σ_{i<j} d_ij²)` with `δ` the embedded
/// distances.
pub fn stress(m: &DistanceMatrix, e: &Embedding) -> Result<f64, MdsError> {
    if m.ids() != e.ids.as_slice() || e.coords.len() != e.ids.len() {
        return Err(MdsError::MismatchedIds);
    }
    let n = m.len();
    let (mut residual, mut total) = (0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = m.get(i, j);
            let diff = d - e.distance(i, j);
            residual += diff * diff;
            total += d * d;
        }
    }
    if total == 0.0 {
        return Err(MdsError::ZeroDistanceMatrix);
    }
    Ok((residual / total).sqrt())
}
