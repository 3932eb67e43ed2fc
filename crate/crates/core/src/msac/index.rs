use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::align::AlignmentParams;
use super::quantize::{assign, fuse_primary, residual_secondary, CascadedCodebooks, Codebook, CodebookLevel};
use super::train::{MsacInputs, MsacLoss, MsacModel};
use crate::data::{read_emb1, write_emb1};
use crate::error::{Error, Result};
use crate::tensor::{cosine_slices, norm, DenseMatrix, MIN_NORM};
use crate::Matrix;

pub const ASSIGNMENTS_FILE: &str = "assignments.tsv";
pub const DISTANCES_FILE: &str = "distances.emb";
pub const PRIMARY_FILE: &str = "primary.emb";
pub const SECONDARY_FILE: &str = "secondary.emb";

/// Item-to-cluster assignment over the whole catalogue plus primary codeword distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticIndex {
    items: Vec<String>,
    primary: Vec<usize>,
    secondary: Vec<usize>,
    k_s: usize,
    members: Vec<Vec<usize>>,
    cell_members: Vec<Vec<Vec<usize>>>,
    distances: Matrix,
    lookup: HashMap<String, usize>,
}

impl SemanticIndex {
    /// Validates and builds membership lists. `distances` must be `K_p × K_p`,
    /// symmetric, zero on the diagonal and within `[0, 1]`.
    pub fn from_assignments(
        items: Vec<String>,
        primary: Vec<usize>,
        secondary: Vec<usize>,
        k_s: usize,
        distances: Matrix,
    ) -> Result<Self> {
        let k_p = distances.rows();
        Error::dims(items.len(), primary.len())?;
        Error::dims(items.len(), secondary.len())?;
        Error::dims(k_p, distances.cols())?;
        if k_p < 2 || k_s < 2 {
            return Err(Error::InvalidArg("index needs K_p, K_s >= 2".into()));
        }
        for i in 0..k_p {
            if distances.get(i, i) != 0.0 {
                return Err(Error::InvalidArg(format!("distance diagonal {i} is not zero")));
            }
            for j in 0..k_p {
                let d = distances.get(i, j);
                if !(0.0..=1.0).contains(&d) || d != distances.get(j, i) {
                    return Err(Error::InvalidArg(format!("distance ({i}, {j}) = {d} invalid")));
                }
            }
        }
        let mut lookup = HashMap::with_capacity(items.len());
        let mut members = vec![Vec::new(); k_p];
        let mut cell_members = vec![vec![Vec::new(); k_s]; k_p];
        for (i, id) in items.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
            let (p, s) = (primary[i], secondary[i]);
            if p >= k_p || s >= k_s {
                return Err(Error::InvalidArg(format!("item {id} cell ({p}, {s}) out of range")));
            }
            members[p].push(i);
            cell_members[p][s].push(i);
        }
        Ok(Self { items, primary, secondary, k_s, members, cell_members, distances, lookup })
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn k_p(&self) -> usize {
        self.members.len()
    }

    pub fn k_s(&self) -> usize {
        self.k_s
    }

    pub fn item_idx(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn primary(&self, item: usize) -> usize {
        self.primary[item]
    }

    pub fn secondary(&self, item: usize) -> usize {
        self.secondary[item]
    }

    pub fn primary_assignments(&self) -> &[usize] {
        &self.primary
    }

    pub fn secondary_assignments(&self) -> &[usize] {
        &self.secondary
    }

    /// Items of primary cluster `c_p`, ascending.
    pub fn members(&self, c_p: usize) -> &[usize] {
        &self.members[c_p]
    }

    /// Items of cell `(c_p, c_s)`, ascending.
    pub fn cell_members(&self, c_p: usize, c_s: usize) -> &[usize] {
        &self.cell_members[c_p][c_s]
    }

    pub fn distances(&self) -> &Matrix {
        &self.distances
    }

    /// Same index with the primary assignment replaced, e.g. by a random
    /// partition. Secondary cells are kept per item.
    pub fn with_primary(&self, primary: Vec<usize>) -> Result<Self> {
        Self::from_assignments(self.items.clone(), primary, self.secondary.clone(), self.k_s, self.distances.clone())
    }
}

/// `D[i][j] = 1 − normalized_sim(z_p^i, z_p^j)`. Exactly symmetric with a zero
/// diagonal; a zero-norm codeword is at distance 1 from every other one.
pub fn primary_distances(c: &Matrix) -> Matrix {
    let k = c.rows();
    let mut d = DenseMatrix::zeros(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let (a, b) = (c.row(i), c.row(j));
            let v = if a == b {
                0.0
            } else if norm(a) < MIN_NORM || norm(b) < MIN_NORM {
                1.0
            } else {
                let sim = (cosine_slices(a, b).unwrap_or(0.0) + 1.0) / 2.0;
                (1.0 - sim).clamp(0.0, 1.0)
            };
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

/// Assigns every item to its nearest primary codeword and then to the nearest
/// secondary codeword of its residual. Empty clusters are kept.
pub fn build_semantic_index(
    params: &AlignmentParams<f64>,
    codebooks: &CascadedCodebooks<f64>,
    inputs: &MsacInputs,
) -> Result<SemanticIndex> {
    let m = params.project([&inputs.views[0], &inputs.views[1], &inputs.views[2]])?;
    let r_p = fuse_primary(&m);
    let primary = assign(&codebooks.primary, &r_p)?;
    let r_s = residual_secondary(&m, &codebooks.primary.codewords().select_rows(&primary))?;
    let secondary = assign(&codebooks.secondary, &r_s)?;
    SemanticIndex::from_assignments(
        inputs.items.clone(),
        primary,
        secondary,
        codebooks.secondary.len(),
        primary_distances(codebooks.primary.codewords()),
    )
}

/// Writes `assignments.tsv`, `distances.emb` and both codebooks into `dir`.
pub fn write_index(dir: impl AsRef<Path>, index: &SemanticIndex, codebooks: &CascadedCodebooks<f64>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(ASSIGNMENTS_FILE))?);
    for (i, id) in index.items.iter().enumerate() {
        writeln!(w, "{id}\t{}\t{}", index.primary[i], index.secondary[i])?;
    }
    w.flush()?;
    write_emb1(dir.join(DISTANCES_FILE), &index.distances)?;
    write_codebooks(dir, codebooks)
}

pub fn load_index(dir: impl AsRef<Path>) -> Result<SemanticIndex> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(ASSIGNMENTS_FILE))?;
    let (mut items, mut primary, mut secondary) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::ParseError { line: n + 1, msg: msg.to_string() };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("expected item_id, c_p, c_s"));
        }
        items.push(f[0].to_string());
        primary.push(f[1].parse().map_err(|_| bad("c_p is not an index"))?);
        secondary.push(f[2].parse().map_err(|_| bad("c_s is not an index"))?);
    }
    let distances = read_emb1(dir.join(DISTANCES_FILE))?.cast::<f64>();
    let k_s = read_emb1(dir.join(SECONDARY_FILE))?.rows();
    SemanticIndex::from_assignments(items, primary, secondary, k_s, distances)
}

pub fn write_codebooks(dir: impl AsRef<Path>, codebooks: &CascadedCodebooks<f64>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_emb1(dir.join(PRIMARY_FILE), codebooks.primary.codewords())?;
    write_emb1(dir.join(SECONDARY_FILE), codebooks.secondary.codewords())
}

pub fn load_codebooks(dir: impl AsRef<Path>) -> Result<CascadedCodebooks<f64>> {
    let dir = dir.as_ref();
    Ok(CascadedCodebooks {
        primary: Codebook::new(read_emb1(dir.join(PRIMARY_FILE))?.cast(), CodebookLevel::Primary)?,
        secondary: Codebook::new(read_emb1(dir.join(SECONDARY_FILE))?.cast(), CodebookLevel::Secondary)?,
    })
}

const WEIGHT_FILES: [&str; 3] = ["w_image.emb", "w_text.emb", "w_behavior.emb"];
const BIAS_FILE: &str = "bias.emb";
const LOSSES_FILE: &str = "msac_losses.json";

/// Stores projections, biases (one row per view), codebooks and epoch losses.
pub fn write_model(dir: impl AsRef<Path>, model: &MsacModel) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (w, name) in model.params.weights.iter().zip(WEIGHT_FILES) {
        write_emb1(dir.join(name), w)?;
    }
    let b = &model.params.biases;
    write_emb1(dir.join(BIAS_FILE), &DenseMatrix::from_rows(&[&b[0][..], &b[1][..], &b[2][..]])?)?;
    write_codebooks(dir, &model.codebooks)?;
    fs::write(dir.join(LOSSES_FILE), serde_json::to_string_pretty(&model.epoch_losses)?)?;
    Ok(())
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<MsacModel> {
    let dir = dir.as_ref();
    let mut weights = Vec::new();
    for name in WEIGHT_FILES {
        weights.push(read_emb1(dir.join(name))?.cast::<f64>());
    }
    let bias = read_emb1(dir.join(BIAS_FILE))?.cast::<f64>();
    Error::dims(3, bias.rows())?;
    let biases = [bias.row(0).to_vec(), bias.row(1).to_vec(), bias.row(2).to_vec()];
    let [w0, w1, w2]: [Matrix; 3] = weights.try_into().map_err(|_| Error::InvalidArg("expected three projection matrices".into()))?;
    let d_m = w0.cols();
    for w in [&w1, &w2] {
        Error::dims(d_m, w.cols())?;
    }
    Error::dims(d_m, bias.cols())?;
    let epoch_losses: Vec<MsacLoss> = serde_json::from_str(&fs::read_to_string(dir.join(LOSSES_FILE))?)?;
    Ok(MsacModel {
        params: AlignmentParams { weights: [w0, w1, w2], biases },
        codebooks: load_codebooks(dir)?,
        epoch_losses,
    })
}
