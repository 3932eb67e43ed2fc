//! Planted-structure synthetic datasets.
//!
//! Items are partitioned into latent groups, each optionally split into
//! subgroups. Every input modality gets its own independent group anchors and
//! subgroup offsets, so each modality carries the structure through a
//! different embedding geometry. Users prefer a few (group, subgroup) cells and
//! draw most of their interactions from them.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingTable, Modality};
use super::interactions::{Interaction, InteractionLog};
use super::profile::{ProfileTable, UserProfile};
use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, RngState};

const BASE_TIMESTAMP: u64 = 1_600_000_000;
/// Vocabulary of the second (uninformative) profile slot.
const PROFILE_BUCKETS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub num_groups: usize,
    pub subgroups_per_group: usize,
    /// Native dimensions of the image, text and behavior tables.
    pub modal_dims: [usize; 3],
    /// Per-coordinate standard deviation of item noise around its anchor.
    /// Anchors have unit per-coordinate variance.
    pub intra_group_noise: f64,
    /// Per-coordinate standard deviation of subgroup offsets from the group anchor.
    pub subgroup_spread: f64,
    pub interactions_per_user: usize,
    /// Share of a user's interactions drawn from their preferred cells.
    pub preferred_fraction: f64,
    /// Zipf-like exponent of within-cell item popularity.
    pub popularity_skew: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_users: 2000,
            num_items: 5000,
            num_groups: 20,
            subgroups_per_group: 4,
            modal_dims: [32, 24, 16],
            intra_group_noise: 0.1,
            subgroup_spread: 0.3,
            interactions_per_user: 20,
            preferred_fraction: 0.9,
            popularity_skew: 0.5,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    /// `(key, message)` for every violated invariant.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut bad = |k: &'static str, m: &str| out.push((k, m.to_owned()));
        if self.num_users == 0 {
            bad("num_users", "must be positive");
        }
        if self.num_items == 0 {
            bad("num_items", "must be positive");
        }
        if self.num_groups == 0 || self.num_groups > self.num_items {
            bad("num_groups", "must be in 1..=num_items");
        }
        if self.subgroups_per_group == 0 || self.num_groups * self.subgroups_per_group > self.num_items {
            bad("subgroups_per_group", "num_groups * subgroups_per_group must be in 1..=num_items");
        }
        if self.modal_dims.iter().any(|&d| d < 2) {
            bad("modal_dims", "every dim must be at least 2");
        }
        if !(self.intra_group_noise.is_finite() && self.intra_group_noise >= 0.0) {
            bad("intra_group_noise", "must be finite and non-negative");
        }
        if !(self.subgroup_spread.is_finite() && self.subgroup_spread >= 0.0) {
            bad("subgroup_spread", "must be finite and non-negative");
        }
        if self.interactions_per_user == 0 {
            bad("interactions_per_user", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.preferred_fraction) {
            bad("preferred_fraction", "must be in [0, 1]");
        }
        if !(self.popularity_skew.is_finite() && self.popularity_skew >= 0.0) {
            bad("popularity_skew", "must be finite and non-negative");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some((k, m)) => Err(Error::InvalidSpec(format!("{k} {m}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub log: InteractionLog,
    /// Image, text and behavior tables, rows in `log.items()` order.
    pub tables: [EmbeddingTable<f32>; 3],
    /// Planted group per item, aligned with `log.items()`.
    pub groups: Vec<usize>,
    /// Planted subgroup (within its group) per item.
    pub subgroups: Vec<usize>,
    pub profiles: ProfileTable,
}

fn padded(prefix: char, i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(5);
    format!("{prefix}{i:0width$}")
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let root = RngState::new(spec.seed);
    let n = spec.num_items;
    let (g, s) = (spec.num_groups, spec.subgroups_per_group);

    let mut label_rng = root.fork(0);
    let mut groups: Vec<usize> = (0..n).map(|i| i % g).collect();
    label_rng.shuffle(&mut groups);
    let mut subgroups = vec![0usize; n];
    let mut cell_members: Vec<Vec<usize>> = vec![Vec::new(); g * s];
    let mut seen_in_group = vec![0usize; g];
    for i in 0..n {
        let sg = seen_in_group[groups[i]] % s;
        seen_in_group[groups[i]] += 1;
        subgroups[i] = sg;
        cell_members[groups[i] * s + sg].push(i);
    }
    let mut weight = vec![0.0f64; n];
    for members in &cell_members {
        for (rank, &i) in members.iter().enumerate() {
            weight[i] = (1.0 + rank as f64).powf(-spec.popularity_skew);
        }
    }

    let item_ids: Vec<String> = (0..n).map(|i| padded('i', i, n)).collect();
    let tables = [0usize, 1, 2].map(|m| {
        let mut rng = root.fork(1 + m as u64);
        let d = spec.modal_dims[m];
        let anchors = DenseMatrix::from_fn(g, d, |_, _| rng.normal());
        let offsets = DenseMatrix::from_fn(g * s, d, |_, _| if s > 1 { rng.normal() * spec.subgroup_spread } else { 0.0 });
        let values = DenseMatrix::from_fn(n, d, |i, c| {
            let cell = groups[i] * s + subgroups[i];
            (anchors.get(groups[i], c) + offsets.get(cell, c) + spec.intra_group_noise * rng.normal()) as f32
        });
        (values, Modality::INPUTS[m])
    });
    let tables = tables.map(|(m, modality)| EmbeddingTable::new(item_ids.clone(), m, modality));
    let [a, b, c] = tables;
    let tables = [a?, b?, c?];

    let mut user_rng = root.fork(4);
    let mut interactions = Vec::with_capacity(spec.num_users * spec.interactions_per_user);
    let mut profiles = Vec::with_capacity(spec.num_users);
    for u in 0..spec.num_users {
        let user_id = padded('u', u, spec.num_users);
        let n_pref = 1 + user_rng.below(3.min(g));
        let pref_groups = user_rng.choose_distinct(g, n_pref);
        let cells: Vec<usize> = pref_groups.iter().map(|&pg| pg * s + user_rng.below(s)).collect();
        profiles.push(UserProfile {
            user_id: user_id.clone(),
            features: vec![pref_groups[0] as u32, user_rng.below(PROFILE_BUCKETS as usize) as u32],
        });
        let mut ts = BASE_TIMESTAMP + user_rng.below(30 * 86_400) as u64;
        let mut taken = std::collections::HashSet::new();
        for _ in 0..spec.interactions_per_user {
            let mut item = 0;
            // prefer unseen items, give up after a few tries on tiny cells
            for _ in 0..16 {
                item = if user_rng.uniform() < spec.preferred_fraction {
                    let members = &cell_members[cells[user_rng.below(cells.len())]];
                    let w: Vec<f64> = members.iter().map(|&i| weight[i]).collect();
                    members[user_rng.weighted(&w).unwrap_or(0)]
                } else {
                    user_rng.weighted(&weight).unwrap_or(0)
                };
                if !taken.contains(&item) {
                    break;
                }
            }
            taken.insert(item);
            interactions.push(Interaction { user_id: user_id.clone(), item_id: item_ids[item].clone(), timestamp: ts });
            ts += 1 + user_rng.below(90) as u64;
        }
    }
    let log = InteractionLog::with_items(interactions, item_ids)?;
    let profiles = ProfileTable::new(vec![g as u32, PROFILE_BUCKETS], profiles)?;
    Ok(SyntheticDataset { log, tables, groups, subgroups, profiles })
}

/// Writes `item_id<TAB>group<TAB>subgroup` rows.
pub fn write_groups(path: impl AsRef<Path>, items: &[String], groups: &[usize], subgroups: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for ((id, g), s) in items.iter().zip(groups).zip(subgroups) {
        writeln!(w, "{id}\t{g}\t{s}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a ground-truth file as `(item_id, group, subgroup)` rows.
pub fn load_groups(path: impl AsRef<Path>) -> Result<Vec<(String, usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        let num = |s: &str| {
            s.parse::<usize>().map_err(|e| Error::ParseError { line: n + 1, msg: format!("{s:?}: {e}") })
        };
        if f.len() != 3 {
            return Err(Error::ParseError { line: n + 1, msg: "expected 3 fields".into() });
        }
        out.push((f[0].to_owned(), num(f[1])?, num(f[2])?));
    }
    Ok(out)
}
