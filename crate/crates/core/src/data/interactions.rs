use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub timestamp: u64,
}

/// Interaction log with interned users and items and per-user time-sorted sequences.
///
/// User and item vocabularies are kept in lexicographic order so the same set of
/// lines yields the same indices regardless of file order.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog {
    interactions: Vec<Interaction>,
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    /// `(item index, timestamp)` per user, ascending by timestamp; ties keep input order.
    sequences: Vec<Vec<(usize, u64)>>,
}

impl InteractionLog {
    pub fn new(interactions: Vec<Interaction>) -> Result<Self> {
        let items: BTreeSet<&str> = interactions.iter().map(|i| i.item_id.as_str()).collect();
        let items = items.into_iter().map(str::to_owned).collect();
        Self::with_items(interactions, items)
    }

    /// Builds a log over an explicit item vocabulary, which may contain items
    /// with no interactions. Every interaction's item must be in `items`.
    pub fn with_items(interactions: Vec<Interaction>, mut items: Vec<String>) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        items.sort();
        items.dedup();
        let item_index: HashMap<String, usize> = items.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let users: BTreeSet<&str> = interactions.iter().map(|i| i.user_id.as_str()).collect();
        let users: Vec<String> = users.into_iter().map(str::to_owned).collect();
        let user_index: HashMap<String, usize> = users.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let mut sequences = vec![Vec::new(); users.len()];
        for it in &interactions {
            if it.user_id.is_empty() || it.item_id.is_empty() {
                return Err(Error::InvalidArg("empty user or item id".into()));
            }
            let item = *item_index.get(&it.item_id).ok_or_else(|| Error::UnknownId(it.item_id.clone()))?;
            sequences[user_index[&it.user_id]].push((item, it.timestamp));
        }
        for s in &mut sequences {
            s.sort_by_key(|&(_, ts)| ts);
        }
        Ok(Self { interactions, users, items, user_index, item_index, sequences })
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_idx(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn item_idx(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    pub fn sequence(&self, user: usize) -> &[(usize, u64)] {
        &self.sequences[user]
    }

    pub fn sequences(&self) -> &[Vec<(usize, u64)>] {
        &self.sequences
    }

    /// Item ids of a user's sequence in time order.
    pub fn item_sequence(&self, user_id: &str) -> Option<Vec<&str>> {
        let u = self.user_idx(user_id)?;
        Some(self.sequences[u].iter().map(|&(i, _)| self.items[i].as_str()).collect())
    }

    /// Interaction count per item, indexed like [`items`](Self::items).
    pub fn popularity(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.items.len()];
        for s in &self.sequences {
            for &(i, _) in s {
                counts[i] += 1;
            }
        }
        counts
    }
}

/// Reads `user_id<TAB>item_id<TAB>timestamp` lines. Blank lines are skipped.
pub fn load_interactions(path: impl AsRef<Path>) -> Result<InteractionLog> {
    let text = fs::read_to_string(path)?;
    InteractionLog::new(parse_interactions(&text)?)
}

pub fn parse_interactions(text: &str) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::ParseError { line: line_no, msg: format!("expected 3 fields, found {}", fields.len()) });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::ParseError { line: line_no, msg: "empty id".into() });
        }
        let timestamp = fields[2]
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::ParseError { line: line_no, msg: format!("bad timestamp {:?}: {e}", fields[2]) })?;
        out.push(Interaction { user_id: fields[0].to_owned(), item_id: fields[1].to_owned(), timestamp });
    }
    Ok(out)
}

pub fn write_interactions(path: impl AsRef<Path>, interactions: &[Interaction]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for it in interactions {
        writeln!(w, "{}\t{}\t{}", it.user_id, it.item_id, it.timestamp)?;
    }
    w.flush()?;
    Ok(())
}
