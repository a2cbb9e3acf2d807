//! Observed entries of a partially observed tensor, stored in coordinate form.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Likelihood family of the observed values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    /// Real values with Gaussian noise.
    Continuous,
    /// Values in {0, 1} with a Bernoulli-logit link.
    Binary,
}

impl DataKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DataKind::Continuous => "continuous",
            DataKind::Binary => "binary",
        }
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DataKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(DataKind::Continuous),
            "binary" => Ok(DataKind::Binary),
            other => Err(Error::input(format!(
                "unknown data kind `{other}` (expected continuous or binary)"
            ))),
        }
    }
}

/// A sparse order-D tensor: shape plus a list of (index, value) pairs.
///
/// Indices are 0-based and stored flat (`len × order`). Construction checks
/// bounds, rejects duplicate index tuples and enforces `{0, 1}` values for
/// binary data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseTensor {
    shape: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    kind: DataKind,
}

impl SparseTensor {
    pub fn new(shape: Vec<usize>, entries: Vec<(Vec<usize>, f64)>, kind: DataKind) -> Result<Self> {
        let order = shape.len();
        let mut indices = Vec::with_capacity(entries.len() * order);
        let mut values = Vec::with_capacity(entries.len());
        for (idx, v) in entries {
            if idx.len() != order {
                return Err(Error::input(format!(
                    "index {idx:?} has {} components, tensor order is {order}",
                    idx.len()
                )));
            }
            indices.extend_from_slice(&idx);
            values.push(v);
        }
        Self::from_flat(shape, indices, values, kind)
    }

    /// Builds a tensor from a flat `len × order` index buffer.
    pub fn from_flat(
        shape: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
        kind: DataKind,
    ) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::input("tensor must have at least one mode"));
        }
        if let Some(d) = shape.iter().position(|&s| s == 0) {
            return Err(Error::input(format!("mode {d} has size zero")));
        }
        let order = shape.len();
        if indices.len() != values.len() * order {
            return Err(Error::input(format!(
                "{} index components for {} values of an order-{order} tensor",
                indices.len(),
                values.len()
            )));
        }
        let t = SparseTensor {
            shape,
            indices,
            values,
            kind,
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.len());
        for n in 0..self.len() {
            let idx = self.index(n);
            for (d, (&i, &size)) in idx.iter().zip(&self.shape).enumerate() {
                if i >= size {
                    return Err(Error::input(format!(
                        "entry {n}: index {i} out of bounds for mode {d} of size {size}"
                    )));
                }
            }
            if !seen.insert(idx) {
                return Err(Error::input(format!("entry {n}: duplicate index {idx:?}")));
            }
            let v = self.values[n];
            if !v.is_finite() {
                return Err(Error::input(format!("entry {n}: non-finite value {v}")));
            }
            if self.kind == DataKind::Binary && v != 0.0 && v != 1.0 {
                return Err(Error::input(format!(
                    "entry {n}: binary tensor value {v} is not 0 or 1"
                )));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    /// Number of observed entries.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[allow(clippy::should_implement_trait)]
    pub fn index(&self, n: usize) -> &[usize] {
        let d = self.order();
        &self.indices[n * d..(n + 1) * d]
    }

    pub fn value(&self, n: usize) -> f64 {
        self.values[n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flat_indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        (0..self.len()).map(move |n| (self.index(n), self.values[n]))
    }

    /// Total number of cells in the full tensor.
    pub fn num_cells(&self) -> u128 {
        self.shape.iter().map(|&s| s as u128).product()
    }

    /// Keeps the entries at the given positions, in that order.
    pub fn select(&self, positions: &[usize]) -> SparseTensor {
        let d = self.order();
        let mut indices = Vec::with_capacity(positions.len() * d);
        let mut values = Vec::with_capacity(positions.len());
        for &n in positions {
            indices.extend_from_slice(self.index(n));
            values.push(self.values[n]);
        }
        SparseTensor {
            shape: self.shape.clone(),
            indices,
            values,
            kind: self.kind,
        }
    }

    /// Same index set, new values. Used when resimulating data at fixed locations.
    pub fn with_values(&self, values: Vec<f64>) -> Result<SparseTensor> {
        if values.len() != self.len() {
            return Err(Error::input("value count does not match entry count"));
        }
        if self.kind == DataKind::Binary && values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::input("binary tensor values must be 0 or 1"));
        }
        Ok(SparseTensor {
            values,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_bounds() {
        let err = SparseTensor::new(vec![2, 2], vec![(vec![0, 2], 1.0)], DataKind::Continuous);
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn rejects_duplicates() {
        let err = SparseTensor::new(
            vec![2, 2],
            vec![(vec![1, 1], 1.0), (vec![1, 1], 2.0)],
            DataKind::Continuous,
        );
        assert!(err.is_err());
    }

    #[test]
    fn binary_values_enforced() {
        assert!(SparseTensor::new(vec![3], vec![(vec![0], 2.0)], DataKind::Binary).is_err());
        let t = SparseTensor::new(
            vec![3],
            vec![(vec![0], 1.0), (vec![2], 0.0)],
            DataKind::Binary,
        )
        .unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.with_values(vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn select_keeps_order() {
        let t = SparseTensor::new(
            vec![3, 3],
            vec![(vec![0, 0], 1.0), (vec![1, 2], 2.0), (vec![2, 1], 3.0)],
            DataKind::Continuous,
        )
        .unwrap();
        let s = t.select(&[2, 0]);
        assert_eq!(s.index(0), &[2, 1]);
        assert_eq!(s.value(1), 1.0);
    }
}
