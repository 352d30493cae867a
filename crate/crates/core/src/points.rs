//! Dense row-major storage for encoded points.

use crate::error::{Result, SoberError};

/// A set of points in the encoded feature space, stored row-major.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn new(dim: usize) -> Self {
        Points { data: Vec::new(), dim }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Points {
            data: Vec::with_capacity(dim * n),
            dim,
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(SoberError::InvalidArgument("zero dimension with data".into()));
        }
        if dim > 0 && data.len() % dim != 0 {
            return Err(SoberError::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        Ok(Points { data, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut pts = Points::with_capacity(dim, rows.len());
        for r in rows {
            pts.push(r.as_ref())?;
        }
        Ok(pts)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(SoberError::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        let dim = self.dim.max(1);
        self.data.chunks_exact(dim).take(self.len())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, idx: &[usize]) -> Points {
        let mut out = Points::with_capacity(self.dim, idx.len());
        for &i in idx {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }

    pub fn extend(&mut self, other: &Points) -> Result<()> {
        if other.is_empty() {
            return Ok(());
        }
        if self.dim != other.dim {
            if self.is_empty() {
                self.dim = other.dim;
            } else {
                return Err(SoberError::DimensionMismatch {
                    expected: self.dim,
                    got: other.dim,
                });
            }
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    /// Leading `k` coordinates of every row.
    pub fn leading_columns(&self, k: usize) -> Points {
        let mut out = Points::with_capacity(k, self.len());
        for r in self.rows() {
            out.data.extend_from_slice(&r[..k]);
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }
}
