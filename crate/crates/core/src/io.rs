//! CSV ingestion, the `.lum` model container and embedding CSV files.
//!
//! A `.lum` file is
//!
//! ```text
//! "LUMAP1\n" | u32 LE header length | JSON header
//!            | offsets: (n+1) x u64 LE | indices: nnz x u32 LE | weights: nnz x f32 LE
//! ```
//!
//! The header carries `version`, `n_vertices`, `nnz`, `metric`, `k`,
//! `lens_history` and `dataset_digest`.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataError, Dataset};
use crate::graph::{GraphError, Manifold};
use crate::lenses::LensSpec;
use crate::metric::DistanceMetric;

pub const MAGIC: &[u8; 7] = b"LUMAP1\n";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error on line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("column `{0}` has no values")]
    AllMissingColumn(String),
    #[error("missing value at row {row}, column `{col}`")]
    MissingValue { row: usize, col: String },
    #[error("no complete rows to impute from")]
    NoCompleteRows,
    #[error("file contains no numeric columns")]
    NoNumericColumns,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("model file is truncated")]
    TruncatedFile,
    #[error("invalid model header: {0}")]
    Header(String),
    #[error("invalid model graph: {0}")]
    Graph(#[from] GraphError),
    #[error("embedding file: {0}")]
    Embedding(String),
}

/// What to do with empty or `NA` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Error,
    DropRows,
    /// Mean of the cell's column over the row's `k` nearest complete rows,
    /// by euclidean distance over the row's observed columns.
    KnnImpute(usize),
}

impl std::str::FromStr for MissingPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error" => Ok(MissingPolicy::Error),
            "drop_rows" | "drop-rows" => Ok(MissingPolicy::DropRows),
            _ => {
                let k = s
                    .strip_prefix("knn_impute:")
                    .or_else(|| s.strip_prefix("knn-impute:"))
                    .ok_or_else(|| format!("unknown missing-value policy `{s}`"))?;
                let k: usize = k.parse().map_err(|_| format!("bad imputation k in `{s}`"))?;
                if k == 0 {
                    return Err("imputation k must be positive".into());
                }
                Ok(MissingPolicy::KnnImpute(k))
            }
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "null" | "NULL")
}

/// Numeric columns of a delimited file with `None` for missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    /// Row-major.
    pub cells: Vec<Option<f64>>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.cells.len() / self.columns.len()
        }
    }

    /// Parses CSV text with a header row. Columns whose observed cells are
    /// all non-numeric (identifiers, names) are skipped; a column mixing
    /// numbers and text is a parse error.
    pub fn from_reader(reader: impl Read) -> Result<Self, IoError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| parse_error(&e, 1))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut text: Vec<Vec<String>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| parse_error(&e, text.len() as u64 + 2))?;
            text.push(rec.iter().map(str::to_string).collect());
        }
        let mut keep = Vec::new();
        for (j, name) in header.iter().enumerate() {
            let mut numeric = 0usize;
            let mut first_text = None;
            for (r, row) in text.iter().enumerate() {
                let cell = row[j].as_str();
                if is_missing(cell) {
                    continue;
                }
                if cell.parse::<f64>().is_ok() {
                    numeric += 1;
                } else if first_text.is_none() {
                    first_text = Some(r);
                }
            }
            match (numeric, first_text) {
                (0, Some(_)) => log::debug!("skipping non-numeric column `{name}`"),
                (_, Some(r)) => {
                    return Err(IoError::ParseError {
                        line: r as u64 + 2,
                        message: format!("non-numeric value `{}` in column `{name}`", text[r][j]),
                    })
                }
                _ => keep.push(j),
            }
        }
        if keep.is_empty() {
            return Err(IoError::NoNumericColumns);
        }
        let mut cells = Vec::with_capacity(text.len() * keep.len());
        for (r, row) in text.iter().enumerate() {
            for &j in &keep {
                let cell = row[j].as_str();
                let v = if is_missing(cell) { None } else { Some(cell.parse::<f64>().unwrap()) };
                match v {
                    Some(x) if !x.is_finite() => {
                        return Err(IoError::ParseError {
                            line: r as u64 + 2,
                            message: format!("non-finite value `{cell}` in column `{}`", header[j]),
                        })
                    }
                    _ => cells.push(v),
                }
            }
        }
        Ok(RawTable { columns: keep.iter().map(|&j| header[j].clone()).collect(), cells })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, IoError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    /// Drops columns, then rows, whose fraction of missing cells exceeds
    /// the given thresholds.
    pub fn drop_sparse(&self, max_col_missing: f64, max_row_missing: f64) -> RawTable {
        let (n, d) = (self.n_rows(), self.columns.len());
        let cols: Vec<usize> = (0..d)
            .filter(|&j| {
                let missing = (0..n).filter(|&i| self.cells[i * d + j].is_none()).count();
                n == 0 || missing as f64 / n as f64 <= max_col_missing
            })
            .collect();
        let mut cells = Vec::new();
        for i in 0..n {
            let row: Vec<Option<f64>> = cols.iter().map(|&j| self.cells[i * d + j]).collect();
            let missing = row.iter().filter(|c| c.is_none()).count();
            if cols.is_empty() || missing as f64 / cols.len() as f64 <= max_row_missing {
                cells.extend(row);
            }
        }
        RawTable { columns: cols.iter().map(|&j| self.columns[j].clone()).collect(), cells }
    }

    pub fn into_dataset(self, policy: MissingPolicy) -> Result<Dataset, IoError> {
        let (n, d) = (self.n_rows(), self.columns.len());
        for j in 0..d {
            if n > 0 && (0..n).all(|i| self.cells[i * d + j].is_none()) {
                return Err(IoError::AllMissingColumn(self.columns[j].clone()));
            }
        }
        let values = match policy {
            MissingPolicy::Error => {
                if let Some(p) = self.cells.iter().position(Option::is_none) {
                    return Err(IoError::MissingValue { row: p / d, col: self.columns[p % d].clone() });
                }
                self.cells.iter().map(|c| c.unwrap()).collect()
            }
            MissingPolicy::DropRows => self
                .cells
                .chunks(d)
                .filter(|row| row.iter().all(Option::is_some))
                .flat_map(|row| row.iter().map(|c| c.unwrap()))
                .collect(),
            MissingPolicy::KnnImpute(k) => knn_impute(&self.cells, n, d, k)?,
        };
        let rows = values.len() / d;
        Ok(Dataset::from_row_major(self.columns, rows, values)?)
    }
}

fn parse_error(e: &csv::Error, fallback_line: u64) -> IoError {
    let line = e.position().map_or(fallback_line, |p| p.line());
    IoError::ParseError { line, message: e.to_string() }
}

fn knn_impute(cells: &[Option<f64>], n: usize, d: usize, k: usize) -> Result<Vec<f64>, IoError> {
    let complete: Vec<usize> =
        (0..n).filter(|&i| cells[i * d..(i + 1) * d].iter().all(Option::is_some)).collect();
    let mut out: Vec<f64> = cells.iter().map(|c| c.unwrap_or(f64::NAN)).collect();
    if complete.len() == n {
        return Ok(out);
    }
    if complete.is_empty() {
        return Err(IoError::NoCompleteRows);
    }
    for i in 0..n {
        let row = &cells[i * d..(i + 1) * d];
        if row.iter().all(Option::is_some) {
            continue;
        }
        let mut dists: Vec<(f64, usize)> = complete
            .iter()
            .map(|&c| {
                let dist: f64 = row
                    .iter()
                    .enumerate()
                    .filter_map(|(j, v)| v.map(|v| (v - cells[c * d + j].unwrap()).powi(2)))
                    .sum();
                (dist, c)
            })
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &dists[..k.min(dists.len())];
        for j in 0..d {
            if row[j].is_none() {
                let sum: f64 = nearest.iter().map(|&(_, c)| cells[c * d + j].unwrap()).sum();
                out[i * d + j] = sum / nearest.len() as f64;
            }
        }
    }
    Ok(out)
}

/// Reads the numeric columns of a CSV file, applying `policy` to missing
/// cells.
pub fn load_csv(path: impl AsRef<Path>, policy: MissingPolicy) -> Result<Dataset, IoError> {
    RawTable::from_path(path)?.into_dataset(policy)
}

/// Parses CSV text; see [`load_csv`].
pub fn parse_csv(reader: impl Read, policy: MissingPolicy) -> Result<Dataset, IoError> {
    RawTable::from_reader(reader)?.into_dataset(policy)
}

/// A manifold together with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub manifold: Manifold,
    pub metric: DistanceMetric,
    pub k: usize,
    pub dataset_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    n_vertices: usize,
    nnz: usize,
    metric: DistanceMetric,
    k: usize,
    lens_history: Vec<LensSpec>,
    dataset_digest: String,
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.manifold;
        let header = Header {
            version: FORMAT_VERSION,
            n_vertices: m.n_vertices(),
            nnz: m.n_entries(),
            metric: self.metric,
            k: self.k,
            lens_history: m.lens_history.clone(),
            dataset_digest: self.dataset_digest.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(11 + json.len() + 8 * (m.n_vertices() + 1) + 8 * m.n_entries());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for &o in m.offsets() {
            out.extend_from_slice(&(o as u64).to_le_bytes());
        }
        for &j in m.indices() {
            out.extend_from_slice(&j.to_le_bytes());
        }
        for &w in m.weights() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IoError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if bytes.len() < MAGIC.len() {
            return Err(if MAGIC.starts_with(bytes) { IoError::TruncatedFile } else { IoError::BadMagic });
        }
        if cur.take(MAGIC.len())? != MAGIC {
            return Err(IoError::BadMagic);
        }
        let header_len = u32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as usize;
        let header_bytes = cur.take(header_len)?;
        let value: serde_json::Value =
            serde_json::from_slice(header_bytes).map_err(|e| IoError::Header(e.to_string()))?;
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(IoError::VersionMismatch { found: version });
        }
        let header: Header = serde_json::from_value(value).map_err(|e| IoError::Header(e.to_string()))?;
        let n = header.n_vertices;
        let offsets: Vec<usize> = cur
            .take(8 * (n + 1))?
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let nnz = header.nnz;
        if offsets.last() != Some(&nnz) {
            return Err(IoError::Header(format!("offsets end at {:?}, header says {nnz} entries", offsets.last())));
        }
        let indices: Vec<u32> =
            cur.take(4 * nnz)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        let weights: Vec<f32> =
            cur.take(4 * nnz)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if cur.pos != bytes.len() {
            return Err(IoError::Header(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        let manifold = Manifold::from_csr(offsets, indices, weights, header.lens_history)?;
        Ok(ModelFile { manifold, metric: header.metric, k: header.k, dataset_digest: header.dataset_digest })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], IoError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or(IoError::TruncatedFile)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<(), IoError> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| IoError::Io(e.error))?;
    Ok(())
}

pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<(), IoError> {
    write_atomic(path, &model.to_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile, IoError> {
    ModelFile::from_bytes(&std::fs::read(path)?)
}

/// Embedding CSV text: header `id,x,y`, one row per point. Floats use the
/// shortest representation that parses back to the same value.
pub fn embedding_to_csv(coords: &[[f64; 2]]) -> String {
    let mut s = String::with_capacity(coords.len() * 32 + 8);
    s.push_str("id,x,y\n");
    for (i, c) in coords.iter().enumerate() {
        s.push_str(&format!("{i},{},{}\n", c[0], c[1]));
    }
    s
}

pub fn write_embedding(path: impl AsRef<Path>, coords: &[[f64; 2]]) -> Result<(), IoError> {
    write_atomic(path, embedding_to_csv(coords).as_bytes())
}

/// Reads an embedding CSV; ids must be exactly `0..N` in any order.
pub fn read_embedding(path: impl AsRef<Path>) -> Result<Vec<[f64; 2]>, IoError> {
    parse_embedding(BufReader::new(File::open(path)?))
}

pub fn parse_embedding(reader: impl Read) -> Result<Vec<[f64; 2]>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(|e| parse_error(&e, 1))?.iter().map(str::to_string).collect();
    if header != ["id", "x", "y"] {
        return Err(IoError::Embedding(format!("expected header id,x,y, found {}", header.join(","))));
    }
    let mut rows: Vec<(usize, [f64; 2])> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r as u64 + 2;
        let rec = rec.map_err(|e| parse_error(&e, line))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let bad = |what: &str| IoError::ParseError { line, message: format!("bad {what}") };
        let id: usize = field(0).parse().map_err(|_| bad("id"))?;
        let x: f64 = field(1).parse().map_err(|_| bad("x"))?;
        let y: f64 = field(2).parse().map_err(|_| bad("y"))?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(bad("coordinate"));
        }
        rows.push((id, [x, y]));
    }
    let n = rows.len();
    let mut coords = vec![None; n];
    for (id, c) in rows {
        match coords.get_mut(id) {
            Some(slot @ None) => *slot = Some(c),
            Some(Some(_)) => return Err(IoError::Embedding(format!("duplicate id {id}"))),
            None => return Err(IoError::Embedding(format!("id {id} out of range for {n} rows"))),
        }
    }
    Ok(coords.into_iter().map(Option::unwrap).collect())
}

/// Newline-separated 0-based row indices; blank lines are ignored.
pub fn parse_selection(text: &str) -> Result<Vec<usize>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| IoError::ParseError {
                line: i as u64 + 1,
                message: format!("not a row index: `{}`", l.trim()),
            })
        })
        .collect()
}
