use super::interactions::{Interaction, InteractionLog};
use crate::error::Result;

/// Held-out ground truth: for each evaluated user, the items withheld from training.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    /// `(user index, held-out item indices)`, ascending by user index.
    pub users: Vec<(usize, Vec<usize>)>,
    /// The held-out interactions themselves.
    pub interactions: Vec<Interaction>,
}

impl EvalSet {
    pub fn num_pairs(&self) -> usize {
        self.users.iter().map(|(_, items)| items.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Leave-last-out split.
///
/// The last `holdout_per_user` interactions (by timestamp) of every user with at
/// least `holdout_per_user + 1` interactions become evaluation ground truth.
/// Users with fewer keep everything in train and are skipped from evaluation.
/// The training log keeps the full user and item vocabularies.
pub fn split_train_eval(log: &InteractionLog, holdout_per_user: usize) -> Result<(InteractionLog, EvalSet)> {
    let holdout = holdout_per_user.max(1);
    let mut train = Vec::with_capacity(log.len());
    let mut eval = EvalSet { users: Vec::new(), interactions: Vec::new() };
    for (u, user_id) in log.users().iter().enumerate() {
        let seq = log.sequence(u);
        let cut = if seq.len() > holdout { seq.len() - holdout } else { seq.len() };
        let to_row = |&(i, ts): &(usize, u64)| Interaction {
            user_id: user_id.clone(),
            item_id: log.items()[i].clone(),
            timestamp: ts,
        };
        train.extend(seq[..cut].iter().map(to_row));
        if cut < seq.len() {
            eval.users.push((u, seq[cut..].iter().map(|&(i, _)| i).collect()));
            eval.interactions.extend(seq[cut..].iter().map(to_row));
        }
    }
    log::info!(
        "split: {} train interactions, {} eval users, {} users skipped",
        train.len(),
        eval.users.len(),
        log.users().len() - eval.users.len()
    );
    let train = InteractionLog::with_items(train, log.items().to_vec())?;
    Ok((train, eval))
}
