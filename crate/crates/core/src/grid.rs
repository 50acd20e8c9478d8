//! Multi-dimensional token layouts flattened into a sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flattening order of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FlattenOrder {
    /// Last axis varies fastest.
    #[default]
    RowMajor,
    /// First axis varies fastest.
    ColumnMajor,
}

/// Extents `(L_x, L_y, ...)` of a grid of tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    dims: Vec<usize>,
    order: FlattenOrder,
}

impl GridShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        Self::with_order(dims, FlattenOrder::RowMajor)
    }

    pub fn with_order(dims: Vec<usize>, order: FlattenOrder) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidParam(format!(
                "grid extents must be non-empty and positive, got {dims:?}"
            )));
        }
        Ok(Self { dims, order })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> FlattenOrder {
        self.order
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Total token count.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Distance in flat index between neighbours along `axis`.
    fn stride(&self, axis: usize) -> usize {
        match self.order {
            FlattenOrder::RowMajor => self.dims[axis + 1..].iter().product(),
            FlattenOrder::ColumnMajor => self.dims[..axis].iter().product(),
        }
    }

    /// Coordinate of token `flat` along `axis`.
    pub fn coord(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.dims[axis]
    }

    pub fn coords(&self, flat: usize) -> Vec<usize> {
        (0..self.ndim())
            .map(|axis| self.coord(flat, axis))
            .collect()
    }

    pub fn flat_index(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.ndim() || coords.iter().zip(&self.dims).any(|(c, d)| c >= d) {
            return Err(Error::shape(
                "GridShape::flat_index",
                format!("coordinates {coords:?} outside grid {:?}", self.dims),
            ));
        }
        Ok(coords
            .iter()
            .enumerate()
            .map(|(axis, c)| c * self.stride(axis))
            .sum())
    }
}
