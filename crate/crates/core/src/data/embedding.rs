//! EMB1 embedding files.
//!
//! Layout: the ASCII bytes `EMB1`, then little-endian `u32` row count and
//! `u32` dimension, then `count * dim` little-endian `f32` values in row-major
//! order. Item tables carry a sidecar manifest next to the `.emb` file with the
//! same stem and extension `.ids`, one item id per line in row order.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

pub const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
    Behavior,
    Learned,
}

impl Modality {
    pub const INPUTS: [Modality; 3] = [Modality::Image, Modality::Text, Modality::Behavior];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Text => "text",
            Modality::Behavior => "behavior",
            Modality::Learned => "learned",
        }
    }

    fn from_stem(stem: &str) -> Self {
        match stem {
            "image" => Modality::Image,
            "text" => Modality::Text,
            "behavior" => Modality::Behavior,
            _ => Modality::Learned,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-item dense vectors for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T = f32> {
    item_order: Vec<String>,
    matrix: DenseMatrix<T>,
    modality: Modality,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(item_order: Vec<String>, matrix: DenseMatrix<T>, modality: Modality) -> Result<Self> {
        if item_order.len() != matrix.rows() {
            return Err(Error::ManifestMismatch { manifest: item_order.len(), rows: matrix.rows() });
        }
        let mut seen = HashSet::with_capacity(item_order.len());
        for id in &item_order {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite("embedding table"));
        }
        Ok(Self { item_order, matrix, modality })
    }

    pub fn item_order(&self) -> &[String] {
        &self.item_order
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix<T> {
        self.matrix
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.item_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_order.is_empty()
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingTable<U> {
        EmbeddingTable { item_order: self.item_order.clone(), matrix: self.matrix.cast(), modality: self.modality }
    }

    /// Rows reordered to follow `items`. Fails with `UnknownId` on any id the table lacks.
    pub fn aligned_to(&self, items: &[String]) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> =
            self.item_order.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let rows = items
            .iter()
            .map(|id| index.get(id.as_str()).copied().ok_or_else(|| Error::UnknownId(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { item_order: items.to_vec(), matrix: self.matrix.select_rows(&rows), modality: self.modality })
    }
}

pub fn manifest_path(emb_path: &Path) -> PathBuf {
    emb_path.with_extension("ids")
}

pub fn write_emb1<T: Scalar>(path: impl AsRef<Path>, matrix: &DenseMatrix<T>) -> Result<()> {
    let rows = u32::try_from(matrix.rows()).map_err(|_| Error::InvalidArg("too many rows for EMB1".into()))?;
    let cols = u32::try_from(matrix.cols()).map_err(|_| Error::InvalidArg("dimension too large for EMB1".into()))?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for v in matrix.as_slice() {
        w.write_all(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_emb1(path: impl AsRef<Path>) -> Result<DenseMatrix<f32>> {
    decode_emb1(&fs::read(path)?)
}

pub fn decode_emb1(bytes: &[u8]) -> Result<DenseMatrix<f32>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::MagicMismatch);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile { expected: HEADER_LEN, found: bytes.len() });
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = count * dim * 4;
    if payload.len() < expected {
        return Err(Error::TruncatedFile { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::InvalidArg(format!("{} trailing bytes after EMB1 payload", payload.len() - expected)));
    }
    let values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    DenseMatrix::new(count, dim, values)
}

/// Writes `<path>` and its `.ids` manifest.
pub fn write_embedding_table<T: Scalar>(path: impl AsRef<Path>, table: &EmbeddingTable<T>) -> Result<()> {
    let path = path.as_ref();
    write_emb1(path, table.matrix())?;
    let mut ids = String::new();
    for id in table.item_order() {
        ids.push_str(id);
        ids.push('\n');
    }
    fs::write(manifest_path(path), ids)?;
    Ok(())
}

/// Loads `<path>` with its `.ids` manifest. The modality is taken from the file
/// stem (`image`, `text`, `behavior`), anything else is `Learned`.
pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable<f32>> {
    let path = path.as_ref();
    let matrix = read_emb1(path)?;
    let ids: Vec<String> = fs::read_to_string(manifest_path(path))?.lines().map(str::to_owned).collect();
    if ids.len() != matrix.rows() {
        return Err(Error::ManifestMismatch { manifest: ids.len(), rows: matrix.rows() });
    }
    let modality = Modality::from_stem(path.file_stem().and_then(|s| s.to_str()).unwrap_or(""));
    EmbeddingTable::new(ids, matrix, modality)
}
