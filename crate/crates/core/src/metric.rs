//! Matching scores in the learned discriminative subspace.
//!
//! A sample `y` is represented by `A^T k_y`, where `k_y` holds the kernel
//! values of `y` against every training sample. The squared Euclidean
//! distance between two such projections is the learned Mahalanobis distance
//! between the mapped samples. Lower scores mean closer matches.

use nalgebra::{DMatrix, DVector};

use crate::dataset::FeatureRows;
use crate::error::{Error, Result};
use crate::kfda::KfdaModel;

/// Coordinates of one sample in the discriminative subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coords: DVector<f64>,
}

impl Projection {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

pub fn embed(model: &KfdaModel, y: &[f64]) -> Result<Projection> {
    let rows = FeatureRows::new(y.to_vec(), y.len().max(1))?;
    if y.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: y.len(),
        });
    }
    let coords = model.embed_rows(&rows)?;
    Ok(Projection {
        coords: coords.row(0).transpose(),
    })
}

/// Row `i` of the result is the projection of row `i` of `rows`.
pub fn embed_batch(model: &KfdaModel, rows: &FeatureRows) -> Result<DMatrix<f64>> {
    model.embed_rows(rows)
}

/// `||A^T (k_y - k_z)||^2`.
pub fn score(model: &KfdaModel, y: &[f64], z: &[f64]) -> Result<f64> {
    let a = embed(model, y)?;
    let b = embed(model, z)?;
    Ok(squared_distance(a.coords.as_slice(), b.coords.as_slice()))
}

/// Feature-only baseline `||y - z||^2`.
pub fn euclidean_score(y: &[f64], z: &[f64]) -> Result<f64> {
    if y.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: z.len(),
        });
    }
    Ok(squared_distance(y, z))
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise squared distances between the rows of two coordinate matrices.
pub fn pairwise_scores(probes: &DMatrix<f64>, gallery: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if probes.ncols() != gallery.ncols() {
        return Err(Error::DimensionMismatch {
            expected: probes.ncols(),
            found: gallery.ncols(),
        });
    }
    let p_rows: Vec<Vec<f64>> = probes.row_iter().map(|r| r.iter().copied().collect()).collect();
    let g_rows: Vec<Vec<f64>> = gallery.row_iter().map(|r| r.iter().copied().collect()).collect();
    Ok(DMatrix::from_fn(p_rows.len(), g_rows.len(), |i, j| {
        squared_distance(&p_rows[i], &g_rows[j])
    }))
}

/// How probe/gallery pairs are scored.
#[derive(Debug, Clone, Copy)]
pub enum Scorer<'a> {
    Euclidean,
    Kfda(&'a KfdaModel),
}

impl Scorer<'_> {
    /// Score block `probes x gallery`. The kernel cross-blocks are computed
    /// once per call.
    pub fn score_block(&self, probes: &FeatureRows, gallery: &FeatureRows) -> Result<DMatrix<f64>> {
        match self {
            Scorer::Euclidean => {
                if probes.dim() != gallery.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: probes.dim(),
                        found: gallery.dim(),
                    });
                }
                Ok(DMatrix::from_fn(probes.len(), gallery.len(), |i, j| {
                    squared_distance(probes.row(i), gallery.row(j))
                }))
            }
            Scorer::Kfda(model) => {
                pairwise_scores(&model.embed_rows(probes)?, &model.embed_rows(gallery)?)
            }
        }
    }
}
