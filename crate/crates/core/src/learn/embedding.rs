use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One `d`-dimensional vector per prompt, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Shape { expected: ids.len(), got: rows.len() });
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != dim {
                return Err(Error::Invalid(format!("embedding {id:?} has dimension {}, expected {dim}", row.len())));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("embedding {id:?} has a non-finite entry")));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { ids, dim, data })
    }

    /// A matrix with no rows but a fixed dimension.
    pub fn empty(dim: usize) -> Self {
        Self { ids: Vec::new(), dim, data: Vec::new() }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows()).map(move |i| self.row(i))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { ids: indices.iter().map(|&i| self.ids[i].clone()).collect(), dim: self.dim, data }
    }

    /// Scales every nonzero row to unit Euclidean norm.
    pub fn normalized(mut self) -> Self {
        if self.dim > 0 {
            for row in self.data.chunks_exact_mut(self.dim) {
                let norm = libm::sqrt(row.iter().map(|x| x * x).sum::<f64>());
                if norm > 0.0 {
                    row.iter_mut().for_each(|x| *x /= norm);
                }
            }
        }
        self
    }

    pub fn has_unique_ids(&self) -> bool {
        self.ids.iter().collect::<BTreeSet<_>>().len() == self.ids.len()
    }
}
