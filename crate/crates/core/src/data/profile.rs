use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Categorical profile features of one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    pub user_id: String,
    pub features: Vec<u32>,
}

/// Profiles keyed by user id. Every profile has one value per feature slot and
/// each value is below that slot's vocabulary size.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProfileTable {
    vocab_sizes: Vec<u32>,
    profiles: BTreeMap<String, Vec<u32>>,
}

impl ProfileTable {
    pub fn new(vocab_sizes: Vec<u32>, profiles: impl IntoIterator<Item = UserProfile>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for p in profiles {
            check(&vocab_sizes, &p.features).map_err(|m| Error::InvalidArg(format!("user {}: {m}", p.user_id)))?;
            map.insert(p.user_id, p.features);
        }
        Ok(Self { vocab_sizes, profiles: map })
    }

    /// Table with no feature slots; every user gets an empty profile.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn vocab_sizes(&self) -> &[u32] {
        &self.vocab_sizes
    }

    pub fn num_features(&self) -> usize {
        self.vocab_sizes.len()
    }

    /// Features for `user_id`; users without a row get all-zero features.
    pub fn features(&self, user_id: &str) -> Vec<u32> {
        self.profiles.get(user_id).cloned().unwrap_or_else(|| vec![0; self.vocab_sizes.len()])
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}

fn check(vocab: &[u32], features: &[u32]) -> std::result::Result<(), String> {
    if features.len() != vocab.len() {
        return Err(format!("expected {} features, found {}", vocab.len(), features.len()));
    }
    for (slot, (&f, &v)) in features.iter().zip(vocab).enumerate() {
        if f >= v {
            return Err(format!("feature {slot} value {f} outside vocabulary of size {v}"));
        }
    }
    Ok(())
}

/// Profile file: a header `#vocab<TAB>n0<TAB>n1...` followed by
/// `user_id<TAB>f0<TAB>f1...` rows.
pub fn write_profiles(path: impl AsRef<Path>, table: &ProfileTable) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(w, "#vocab")?;
    for v in &table.vocab_sizes {
        write!(w, "\t{v}")?;
    }
    writeln!(w)?;
    for (user, feats) in &table.profiles {
        write!(w, "{user}")?;
        for f in feats {
            write!(w, "\t{f}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<ProfileTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::EmptyDataset)?;
    let mut head = header.split('\t');
    if head.next() != Some("#vocab") {
        return Err(Error::ParseError { line: 1, msg: "missing #vocab header".into() });
    }
    let parse = |line: usize, s: &str| {
        s.parse::<u32>().map_err(|e| Error::ParseError { line, msg: format!("bad integer {s:?}: {e}") })
    };
    let vocab = head.map(|s| parse(1, s)).collect::<Result<Vec<_>>>()?;
    let mut profiles = Vec::new();
    for (n, line) in lines {
        let mut fields = line.split('\t');
        let user_id = fields.next().unwrap_or_default().to_owned();
        let features = fields.map(|s| parse(n + 1, s)).collect::<Result<Vec<_>>>()?;
        check(&vocab, &features).map_err(|msg| Error::ParseError { line: n + 1, msg })?;
        profiles.push(UserProfile { user_id, features });
    }
    ProfileTable::new(vocab, profiles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_default() {
        let t = ProfileTable::new(
            vec![3, 2],
            [
                UserProfile { user_id: "u2".into(), features: vec![2, 1] },
                UserProfile { user_id: "u1".into(), features: vec![0, 0] },
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("profiles.tsv");
        write_profiles(&p, &t).unwrap();
        let back = load_profiles(&p).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.features("nobody"), vec![0, 0]);
    }

    #[test]
    fn out_of_vocab_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("profiles.tsv");
        fs::write(&p, "#vocab\t2\nu1\t5\n").unwrap();
        assert!(matches!(load_profiles(&p), Err(Error::ParseError { line: 2, .. })));
    }
}
