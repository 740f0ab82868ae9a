use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("dataset has no points")]
    Empty,
    #[error("dataset points have dimension zero")]
    ZeroDimension,
    #[error("point {index} has dimension {got}, expected {expected}")]
    Ragged { index: usize, expected: usize, got: usize },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("{labels} labels supplied for {points} points")]
    LabelCount { points: usize, labels: usize },
}

/// A finite set of `d`-dimensional points, the universe `V` every algorithm works over.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    dim: usize,
    points: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, DatasetError> {
        let first = points.first().ok_or(DatasetError::Empty)?;
        let dim = first.len();
        if dim == 0 {
            return Err(DatasetError::ZeroDimension);
        }
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(DatasetError::Ragged { index, expected: dim, got: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(DatasetError::NonFinite { index });
            }
        }
        Ok(Self { dim, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// The sub-dataset formed by `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        Self::new(indices.iter().map(|&i| self.points[i].clone()).collect())
    }
}

/// A dataset with optional integer class labels (partly labelled data is allowed).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledDataset {
    pub points: Dataset,
    pub labels: Vec<Option<i64>>,
}

impl LabeledDataset {
    pub fn new(points: Dataset, labels: Vec<Option<i64>>) -> Result<Self, DatasetError> {
        if labels.len() != points.len() {
            return Err(DatasetError::LabelCount { points: points.len(), labels: labels.len() });
        }
        Ok(Self { points, labels })
    }

    pub fn unlabeled(points: Dataset) -> Self {
        let labels = vec![None; points.len()];
        Self { points, labels }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.iter().any(Option::is_some)
    }
}

/// Coordinate-wise mean of the given points, accumulated in slice order.
pub fn mean_of<'a, I>(dim: usize, points: I) -> Option<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for p in points {
        for (s, x) in sum.iter_mut().zip(p) {
            *s += x;
        }
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let n = count as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Some(sum)
}
