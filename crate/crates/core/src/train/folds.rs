use std::cell::RefCell;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};
use crate::scenegraph::{EpisodeDataset, GraphSequence};

/// Leave-one-subject-out split: trains on every subject but one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub id: usize,
    pub test_subject: u32,
    /// Sequence indices into the dataset.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn make_folds(ds: &EpisodeDataset) -> Result<Vec<Fold>> {
    let subjects: BTreeSet<u32> = ds.sequences.iter().map(|s| s.subject).collect();
    if subjects.len() < 2 {
        return Err(FgseError::Config(format!(
            "leave-one-subject-out needs at least 2 subjects, dataset has {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .into_iter()
        .enumerate()
        .map(|(id, subject)| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..ds.sequences.len()).partition(|&i| ds.sequences[i].subject == subject);
            Fold {
                id,
                test_subject: subject,
                train,
                test,
            }
        })
        .collect())
}

/// Hands out training sequences of one fold and records every subject it served.
pub struct FoldLoader<'a> {
    ds: &'a EpisodeDataset,
    held_out: Option<u32>,
    indices: Vec<usize>,
    served: RefCell<BTreeSet<u32>>,
}

impl<'a> FoldLoader<'a> {
    pub fn new(ds: &'a EpisodeDataset, fold: Option<&Fold>) -> Self {
        FoldLoader {
            ds,
            held_out: fold.map(|f| f.test_subject),
            indices: fold.map_or_else(|| (0..ds.sequences.len()).collect(), |f| f.train.clone()),
            served: RefCell::new(BTreeSet::new()),
        }
    }

    pub fn training_sequences(&self) -> Result<Vec<&'a GraphSequence>> {
        self.indices
            .iter()
            .map(|&i| {
                let s = self.ds.sequences.get(i).ok_or(FgseError::Index {
                    what: "sequence",
                    index: i,
                    len: self.ds.sequences.len(),
                })?;
                if Some(s.subject) == self.held_out {
                    return Err(FgseError::Structure(format!(
                        "episode {} of held-out subject {} requested for training",
                        s.episode, s.subject
                    )));
                }
                self.served.borrow_mut().insert(s.subject);
                Ok(s)
            })
            .collect()
    }

    pub fn subjects_served(&self) -> BTreeSet<u32> {
        self.served.borrow().clone()
    }
}
