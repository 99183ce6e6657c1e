use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};
use crate::scenegraph::{GraphSequence, Vocabulary};
use crate::stream::{labels_by_head, run_stream, StreamConfig, WindowModel};
use crate::train::metrics::{f1_pooled, F1Scores};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodePredictions {
    pub episode: String,
    /// `[head][frame]` at the original frame rate.
    pub labels: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scores: F1Scores,
    pub frames: usize,
    pub episodes: Vec<EpisodePredictions>,
}

pub fn check_vocab(model_vocab: Option<&Vocabulary>, data_vocab: &Vocabulary) -> Result<()> {
    match model_vocab {
        Some(v) if v != data_vocab => Err(FgseError::Vocabulary(format!(
            "checkpoint vocabulary ({} objects, {} actions, heads {:?}) differs from the dataset's ({} objects, {} actions, heads {:?})",
            v.objects.len(),
            v.actions.len(),
            v.heads,
            data_vocab.objects.len(),
            data_vocab.actions.len(),
            data_vocab.heads
        ))),
        _ => Ok(()),
    }
}

/// Streams every episode through a fresh engine and scores the frame labels,
/// both heads pooled.
pub fn evaluate<M: WindowModel>(
    model: &M,
    seqs: &[&GraphSequence],
    n_classes: usize,
    cfg: StreamConfig,
) -> Result<EvalReport> {
    let heads = model.head_count();
    let mut preds = vec![Vec::new(); heads];
    let mut truth = vec![Vec::new(); heads];
    let mut episodes = Vec::with_capacity(seqs.len());
    for s in seqs {
        if s.head_count() != heads {
            return Err(FgseError::Structure(format!(
                "episode {} has {} label streams, model predicts {heads}",
                s.episode,
                s.head_count()
            )));
        }
        let cfg = StreamConfig {
            fps: cfg.fps.or(Some(s.fps)),
            ..cfg
        };
        let labels = labels_by_head(&run_stream(model, &s.graphs, cfg)?, heads);
        for h in 0..heads {
            preds[h].extend_from_slice(&labels[h]);
            truth[h].extend_from_slice(&s.labels[h]);
        }
        episodes.push(EpisodePredictions {
            episode: s.episode.clone(),
            labels,
        });
    }
    let frames = truth.first().map_or(0, Vec::len);
    Ok(EvalReport {
        scores: f1_pooled(&preds, &truth, n_classes)?,
        frames,
        episodes,
    })
}
