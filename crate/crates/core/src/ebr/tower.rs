use serde::{Deserialize, Serialize};

use crate::data::ProfileTable;
use crate::error::{Error, Result};
use crate::tensor::{dot, RngState};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Relu => x.max(0.0),
            Self::Identity => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Self::Relu if pre <= 0.0 => 0.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TowerConfig {
    /// Width of item id and profile embeddings.
    pub d_e: usize,
    pub hidden: usize,
    pub d_k: usize,
    /// Most recent behaviors kept per user.
    pub seq_cap: usize,
    pub activation: Activation,
}

impl Default for TowerConfig {
    fn default() -> Self {
        Self { d_e: 32, hidden: 64, d_k: 64, seq_cap: 10, activation: Activation::Relu }
    }
}

impl TowerConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        for (k, v) in [("d_e", self.d_e), ("hidden", self.hidden), ("d_k", self.d_k), ("seq_cap", self.seq_cap)] {
            if v == 0 {
                out.push((k, "must be positive".to_string()));
            }
        }
        out
    }
}

/// Two dense layers: `act(x·W1 + b1)·W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

fn add_bias(m: &mut Matrix, b: &[f64]) {
    for r in 0..m.rows() {
        for (x, &v) in m.row_mut(r).iter_mut().zip(b) {
            *x += v;
        }
    }
}

fn col_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (o, &x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    out
}

impl Mlp {
    fn random(d_in: usize, hidden: usize, d_out: usize, rng: &mut RngState) -> Self {
        let (s1, s2) = ((2.0 / d_in as f64).sqrt(), (1.0 / hidden as f64).sqrt());
        Self {
            w1: Matrix::from_fn(d_in, hidden, |_, _| rng.normal() * s1),
            b1: vec![0.0; hidden],
            w2: Matrix::from_fn(hidden, d_out, |_, _| rng.normal() * s2),
            b2: vec![0.0; d_out],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
        }
    }

    /// Returns (hidden pre-activation, hidden activation, output).
    fn forward(&self, x: &Matrix, act: Activation) -> Result<(Matrix, Matrix, Matrix)> {
        let mut pre = x.matmul(&self.w1)?;
        add_bias(&mut pre, &self.b1);
        let h = pre.map(|v| act.apply(v));
        let mut out = h.matmul(&self.w2)?;
        add_bias(&mut out, &self.b2);
        Ok((pre, h, out))
    }

    /// Gradients of the layer parameters and of the input.
    fn backward(&self, x: &Matrix, pre: &Matrix, h: &Matrix, g_out: &Matrix, act: Activation) -> Result<(Self, Matrix)> {
        let w2 = h.t_matmul(g_out)?;
        let b2 = col_sums(g_out);
        let mut g_h = g_out.matmul_t(&self.w2)?;
        for (g, &p) in g_h.as_mut_slice().iter_mut().zip(pre.as_slice()) {
            *g *= act.derivative(p);
        }
        let w1 = x.t_matmul(&g_h)?;
        let b1 = col_sums(&g_h);
        let g_x = g_h.matmul_t(&self.w1)?;
        Ok((Self { w1, b1, w2, b2 }, g_x))
    }

    fn blocks(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w1.as_mut_slice(), &mut self.b1, self.w2.as_mut_slice(), &mut self.b2]
    }
}

/// User-side inputs: recent item indices (oldest first) and profile ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFeatures {
    pub history: Vec<usize>,
    pub profile: Vec<u32>,
}

/// Parameters of both towers. The item id table is shared by the item tower
/// and the user tower's behavior pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerParams {
    pub item_emb: Matrix,
    pub profile_emb: Vec<Matrix>,
    pub user_mlp: Mlp,
    pub item_mlp: Mlp,
    pub activation: Activation,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    pre: Matrix,
    hidden: Matrix,
}

impl ForwardCache {
    /// Hidden-layer inputs to the activation, one row per encoded example.
    pub fn pre_activations(&self) -> &Matrix {
        &self.pre
    }
}

impl TowerParams {
    pub fn random(num_items: usize, profile_vocab: &[usize], config: &TowerConfig, rng: &mut RngState) -> Self {
        let d_e = config.d_e;
        let item_emb = Matrix::from_fn(num_items, d_e, |_, _| rng.normal() * 0.1);
        let profile_emb: Vec<Matrix> = profile_vocab.iter().map(|&n| Matrix::from_fn(n, d_e, |_, _| rng.normal() * 0.1)).collect();
        let user_in = d_e * (1 + profile_vocab.len());
        Self {
            item_emb,
            profile_emb,
            user_mlp: Mlp::random(user_in, config.hidden, config.d_k, rng),
            item_mlp: Mlp::random(d_e, config.hidden, config.d_k, rng),
            activation: config.activation,
        }
    }

    pub fn num_items(&self) -> usize {
        self.item_emb.rows()
    }

    pub fn d_e(&self) -> usize {
        self.item_emb.cols()
    }

    pub fn d_k(&self) -> usize {
        self.item_mlp.w2.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            item_emb: Matrix::zeros(self.item_emb.rows(), self.item_emb.cols()),
            profile_emb: self.profile_emb.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
            user_mlp: self.user_mlp.zeros_like(),
            item_mlp: self.item_mlp.zeros_like(),
            activation: self.activation,
        }
    }

    /// Parameter blocks in a fixed order: item table, profile tables, user MLP, item MLP.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = vec![self.item_emb.as_slice()];
        out.extend(self.profile_emb.iter().map(|m| m.as_slice()));
        out.extend(self.user_mlp.blocks());
        out.extend(self.item_mlp.blocks());
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.item_emb.as_mut_slice()];
        out.extend(self.profile_emb.iter_mut().map(|m| m.as_mut_slice()));
        out.extend(self.user_mlp.blocks_mut());
        out.extend(self.item_mlp.blocks_mut());
        out
    }

    /// Block names matching [`Self::blocks`], used by checkpoints.
    pub fn block_names(&self) -> Vec<String> {
        let mut out = vec!["item_emb".to_string()];
        out.extend((0..self.profile_emb.len()).map(|f| format!("profile_emb_{f}")));
        for t in ["user", "item"] {
            out.extend(["w1", "b1", "w2", "b2"].map(|p| format!("{t}_{p}")));
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        let mut at = 0;
        for b in out.blocks_mut() {
            if at + b.len() > flat.len() {
                return Err(Error::DimMismatch { expected: at + b.len(), got: flat.len() });
            }
            b.copy_from_slice(&flat[at..at + b.len()]);
            at += b.len();
        }
        Error::dims(at, flat.len())?;
        Ok(out)
    }

    pub fn add_scaled(&mut self, other: &Self, s: f64) {
        let others = other.blocks();
        for (b, o) in self.blocks_mut().into_iter().zip(others) {
            for (x, &y) in b.iter_mut().zip(o) {
                *x += s * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    fn check_item(&self, item: usize) -> Result<()> {
        if item >= self.num_items() {
            return Err(Error::UnknownId(format!("item #{item}")));
        }
        Ok(())
    }

    /// `[mean of history item embeddings (zero if empty) ; profile embeddings]`
    fn user_input(&self, users: &[UserFeatures]) -> Result<Matrix> {
        let d_e = self.d_e();
        let f = self.profile_emb.len();
        let mut x = Matrix::zeros(users.len(), d_e * (1 + f));
        for (r, u) in users.iter().enumerate() {
            Error::dims(f, u.profile.len())?;
            let row = x.row_mut(r);
            if !u.history.is_empty() {
                let inv = 1.0 / u.history.len() as f64;
                for &it in &u.history {
                    self.check_item(it)?;
                    for (o, &v) in row[..d_e].iter_mut().zip(self.item_emb.row(it)) {
                        *o += v * inv;
                    }
                }
            }
            for (k, (&id, table)) in u.profile.iter().zip(&self.profile_emb).enumerate() {
                if id as usize >= table.rows() {
                    return Err(Error::UnknownId(format!("profile feature {k} value {id}")));
                }
                row[d_e * (1 + k)..d_e * (2 + k)].copy_from_slice(table.row(id as usize));
            }
        }
        Ok(x)
    }

    pub fn encode_users_cached(&self, users: &[UserFeatures]) -> Result<(ForwardCache, Matrix)> {
        let input = self.user_input(users)?;
        let (pre, hidden, out) = self.user_mlp.forward(&input, self.activation)?;
        Ok((ForwardCache { input, pre, hidden }, out))
    }

    pub fn encode_items_cached(&self, items: &[usize]) -> Result<(ForwardCache, Matrix)> {
        for &i in items {
            self.check_item(i)?;
        }
        let input = self.item_emb.select_rows(items);
        let (pre, hidden, out) = self.item_mlp.forward(&input, self.activation)?;
        Ok((ForwardCache { input, pre, hidden }, out))
    }

    pub fn encode_users(&self, users: &[UserFeatures]) -> Result<Matrix> {
        Ok(self.encode_users_cached(users)?.1)
    }

    pub fn encode_items(&self, items: &[usize]) -> Result<Matrix> {
        Ok(self.encode_items_cached(items)?.1)
    }

    pub fn encode_user(&self, user: &UserFeatures) -> Result<Vec<f64>> {
        Ok(self.encode_users(std::slice::from_ref(user))?.row(0).to_vec())
    }

    pub fn encode_item(&self, item: usize) -> Result<Vec<f64>> {
        Ok(self.encode_items(&[item])?.row(0).to_vec())
    }

    /// Every item's output, in vocabulary order.
    pub fn encode_all_items(&self) -> Result<Matrix> {
        let all: Vec<usize> = (0..self.num_items()).collect();
        self.encode_items(&all)
    }

    /// Accumulates into `grads` the parameter gradient of the user tower given `∂L/∂output`.
    pub fn backward_users(&self, users: &[UserFeatures], cache: &ForwardCache, g_out: &Matrix, grads: &mut Self) -> Result<()> {
        let (g_mlp, g_x) = self.user_mlp.backward(&cache.input, &cache.pre, &cache.hidden, g_out, self.activation)?;
        add_mlp(&mut grads.user_mlp, &g_mlp);
        let d_e = self.d_e();
        for (r, u) in users.iter().enumerate() {
            let g = g_x.row(r);
            if !u.history.is_empty() {
                let inv = 1.0 / u.history.len() as f64;
                for &it in &u.history {
                    for (o, &v) in grads.item_emb.row_mut(it).iter_mut().zip(&g[..d_e]) {
                        *o += v * inv;
                    }
                }
            }
            for (k, &id) in u.profile.iter().enumerate() {
                for (o, &v) in grads.profile_emb[k].row_mut(id as usize).iter_mut().zip(&g[d_e * (1 + k)..d_e * (2 + k)]) {
                    *o += v;
                }
            }
        }
        Ok(())
    }

    /// Accumulates into `grads` the parameter gradient of the item tower given `∂L/∂output`.
    pub fn backward_items(&self, items: &[usize], cache: &ForwardCache, g_out: &Matrix, grads: &mut Self) -> Result<()> {
        let (g_mlp, g_x) = self.item_mlp.backward(&cache.input, &cache.pre, &cache.hidden, g_out, self.activation)?;
        add_mlp(&mut grads.item_mlp, &g_mlp);
        for (r, &it) in items.iter().enumerate() {
            for (o, &v) in grads.item_emb.row_mut(it).iter_mut().zip(g_x.row(r)) {
                *o += v;
            }
        }
        Ok(())
    }
}

fn add_mlp(dst: &mut Mlp, src: &Mlp) {
    for (d, s) in dst.blocks_mut().into_iter().zip(src.blocks()) {
        for (x, &y) in d.iter_mut().zip(s) {
            *x += y;
        }
    }
}

/// `uᵀv`
pub fn score(u: &[f64], v: &[f64]) -> Result<f64> {
    Error::dims(u.len(), v.len())?;
    Ok(dot(u, v))
}

/// Tower inputs for a user: the last `seq_cap` items of `history` plus profile ids.
pub fn user_features(history: &[usize], profiles: &ProfileTable, user_id: &str, seq_cap: usize) -> UserFeatures {
    let start = history.len().saturating_sub(seq_cap);
    UserFeatures { history: history[start..].to_vec(), profile: profiles.features(user_id) }
}
