use crate::error::{FgseError, Result};

/// Majority vote over argmax predictions.
///
/// Ties on count go to the class with the larger summed softmax mass across
/// all votes, then to the class voted for most recently.
pub fn majority_vote(votes: &[usize], probs: &[Vec<f32>]) -> Result<(usize, usize)> {
    if votes.is_empty() {
        return Err(FgseError::Argument("majority vote over an empty vote list".into()));
    }
    if probs.len() != votes.len() {
        return Err(FgseError::Argument(format!(
            "{} votes but {} softmax rows",
            votes.len(),
            probs.len()
        )));
    }
    let n = votes.iter().max().copied().unwrap_or(0) + 1;
    let mut counts = vec![0usize; n];
    let mut last_seen = vec![0usize; n];
    for (i, &v) in votes.iter().enumerate() {
        counts[v] += 1;
        last_seen[v] = i;
    }
    let best_count = *counts.iter().max().expect("non-empty");
    let tied: Vec<usize> = (0..n).filter(|&c| counts[c] == best_count).collect();
    if tied.len() == 1 {
        return Ok((tied[0], best_count));
    }
    let mass = |c: usize| -> f64 { probs.iter().map(|row| row.get(c).copied().unwrap_or(0.0) as f64).sum() };
    let winner = tied
        .into_iter()
        .map(|c| (c, mass(c), last_seen[c]))
        .max_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)))
        .map(|(c, _, _)| c)
        .expect("tied set is non-empty");
    Ok((winner, best_count))
}

/// Votes collected for one frame, per head, in arrival order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameVotes {
    /// `[head] -> [(argmax, softmax row)]`.
    pub heads: Vec<Vec<(usize, Vec<f32>)>>,
}

impl FrameVotes {
    pub fn new(head_count: usize) -> Self {
        FrameVotes {
            heads: vec![Vec::new(); head_count],
        }
    }

    pub fn count(&self) -> usize {
        self.heads.first().map_or(0, Vec::len)
    }

    pub fn add(&mut self, per_head: &[Vec<f32>]) {
        for (slot, probs) in self.heads.iter_mut().zip(per_head) {
            slot.push((crate::model::argmax(probs), probs.clone()));
        }
    }

    /// Per-head `(label, winning vote count)`.
    pub fn resolve(&self) -> Result<Vec<(usize, usize)>> {
        self.heads
            .iter()
            .map(|votes| {
                let labels: Vec<usize> = votes.iter().map(|v| v.0).collect();
                let probs: Vec<Vec<f32>> = votes.iter().map(|v| v.1.clone()).collect();
                majority_vote(&labels, &probs)
            })
            .collect()
    }
}
