//! In-memory numeric datasets with named columns.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("dataset has no rows")]
    Empty,
    #[error("row {row} has {found} values, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("column `{name}` has {found} values, expected {expected}")]
    ColumnLength { name: String, found: usize, expected: usize },
}

/// How a column takes part in an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnRole {
    /// Used by the distance metric when building a manifold.
    #[default]
    Feature,
    /// Available to lenses only; excluded from the manifold's metric.
    LensOnly,
    /// Metadata such as class labels.
    Label,
}

/// A rectangular, finite `N x D` matrix with named columns, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    roles: Vec<ColumnRole>,
    n_rows: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let d = columns.len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(DataError::Ragged { row: r, found: row.len(), expected: d });
            }
            values.extend_from_slice(row);
        }
        Self::from_row_major(columns, rows.len(), values)
    }

    pub fn from_row_major(
        columns: Vec<String>,
        n_rows: usize,
        values: Vec<f64>,
    ) -> Result<Self, DataError> {
        if n_rows == 0 {
            return Err(DataError::Empty);
        }
        let d = columns.len();
        if values.len() != n_rows * d {
            return Err(DataError::Ragged { row: 0, found: values.len() / n_rows.max(1), expected: d });
        }
        for (a, name) in columns.iter().enumerate() {
            if columns[..a].contains(name) {
                return Err(DataError::DuplicateColumn(name.clone()));
            }
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { row: p / d, col: p % d });
        }
        let roles = vec![ColumnRole::Feature; d];
        Ok(Dataset { columns, roles, n_rows, values })
    }

    /// Unnamed columns `c0, c1, ...`; handy for generated data.
    pub fn from_matrix(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self, DataError> {
        let columns = (0..n_cols).map(|j| format!("c{j}")).collect();
        Self::from_row_major(columns, n_rows, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn roles(&self) -> &[ColumnRole] {
        &self.roles
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.values[i * self.n_cols() + j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>, DataError> {
        Ok(self.column(self.column_index(name)?))
    }

    pub fn set_role(&mut self, name: &str, role: ColumnRole) -> Result<(), DataError> {
        let j = self.column_index(name)?;
        self.roles[j] = role;
        Ok(())
    }

    /// Appends a column, e.g. an externally computed lens.
    pub fn push_column(
        &mut self,
        name: &str,
        values: &[f64],
        role: ColumnRole,
    ) -> Result<(), DataError> {
        if self.columns.iter().any(|c| c == name) {
            return Err(DataError::DuplicateColumn(name.to_string()));
        }
        if values.len() != self.n_rows {
            return Err(DataError::ColumnLength {
                name: name.to_string(),
                found: values.len(),
                expected: self.n_rows,
            });
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { row, col: self.n_cols() });
        }
        let d = self.n_cols();
        let mut next = Vec::with_capacity(self.n_rows * (d + 1));
        for (i, v) in values.iter().enumerate() {
            next.extend_from_slice(&self.values[i * d..(i + 1) * d]);
            next.push(*v);
        }
        self.values = next;
        self.columns.push(name.to_string());
        self.roles.push(role);
        Ok(())
    }

    /// A dataset holding only the named columns, in the given order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset, DataError> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.select_indices(&idx))
    }

    fn select_indices(&self, idx: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(self.n_rows * idx.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            values.extend(idx.iter().map(|&j| row[j]));
        }
        Dataset {
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            roles: idx.iter().map(|&j| self.roles[j]).collect(),
            n_rows: self.n_rows,
            values,
        }
    }

    /// The columns tagged [`ColumnRole::Feature`].
    pub fn features(&self) -> Dataset {
        let idx: Vec<usize> =
            (0..self.n_cols()).filter(|&j| self.roles[j] == ColumnRole::Feature).collect();
        self.select_indices(&idx)
    }

    /// SHA-256 over column names and values, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.columns {
            h.update((c.len() as u64).to_le_bytes());
            h.update(c.as_bytes());
        }
        h.update((self.n_rows as u64).to_le_bytes());
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
