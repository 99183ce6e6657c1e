use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};
use crate::model::{argmax, FgseConfig, FgseModel, OutputMode};
use crate::numcore::{Adam, AdamConfig, Tape};
use crate::scenegraph::{downsample, mirror_graph_sequence, EpisodeDataset, GraphSequence, SceneGraph, Vocabulary};
use crate::train::folds::{Fold, FoldLoader};
use crate::train::metrics::f1_pooled;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per optimizer step.
    pub batch_size: usize,
    /// Window start spacing in downsampled frames; `W/2` when unset.
    pub stride: Option<usize>,
    /// Add hand-mirrored copies of bimanual sequences.
    pub mirror: bool,
    /// Temporal downsampling applied before windowing.
    pub downsample: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            stride: None,
            mirror: true,
            downsample: 3,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn stride_for(&self, window: usize) -> usize {
        self.stride.unwrap_or(window / 2).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.downsample == 0 {
            return Err(FgseError::Config(
                "epochs, batch_size and downsample must be positive".into(),
            ));
        }
        if self.stride == Some(0) {
            return Err(FgseError::Config("stride must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean window loss over the epoch.
    pub loss: f64,
    /// Training-window F1, per frame and without voting.
    pub f1_macro: f64,
    pub f1_micro: f64,
    pub windows: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub config: FgseConfig,
    pub train: TrainConfig,
    pub fold: Option<usize>,
    pub test_subject: Option<u32>,
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    #[serde(default)]
    pub checkpoint: Option<String>,
}

impl TrainRun {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Sets input, class and head counts from the vocabulary.
pub fn fit_config(cfg: FgseConfig, vocab: &Vocabulary) -> FgseConfig {
    FgseConfig {
        n_categories: vocab.n_categories(),
        n_classes: vocab.n_classes(),
        n_heads_out: vocab.head_count(),
        ..cfg
    }
}

/// Downsamples and, if enabled, appends mirrored copies.
pub fn prepare_sequences(seqs: &[&GraphSequence], cfg: &TrainConfig) -> Result<Vec<GraphSequence>> {
    let mut out: Vec<GraphSequence> = seqs
        .iter()
        .map(|s| downsample(s, cfg.downsample))
        .collect::<Result<_>>()?;
    if cfg.mirror && out.iter().all(|s| s.head_count() == 2) {
        let mirrored: Vec<GraphSequence> = out.iter().map(mirror_graph_sequence).collect::<Result<_>>()?;
        out.extend(mirrored);
    }
    Ok(out)
}

/// `(sequence, start)` of every training window. Starts advance by `stride`;
/// a last window aligned to the sequence end covers any remainder.
pub fn training_windows(seqs: &[GraphSequence], window: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, s) in seqs.iter().enumerate() {
        if s.len() < window {
            continue;
        }
        let mut start = 0;
        while start + window <= s.len() {
            out.push((i, start));
            start += stride;
        }
        let last = s.len() - window;
        if !last.is_multiple_of(stride) {
            out.push((i, last));
        }
    }
    out
}

/// Trains on the training side of `fold`, or on the whole dataset without one.
pub fn train(
    ds: &EpisodeDataset,
    fold: Option<&Fold>,
    model_cfg: FgseConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(FgseModel, TrainRun)> {
    let loader = FoldLoader::new(ds, fold);
    let seqs = loader.training_sequences()?;
    let model_cfg = fit_config(model_cfg, &ds.vocab);
    let (model, mut run) = train_sequences(&seqs, model_cfg, cfg, seed)?;
    run.fold = fold.map(|f| f.id);
    run.test_subject = fold.map(|f| f.test_subject);
    Ok((model, run))
}

pub fn train_sequences(
    seqs: &[&GraphSequence],
    model_cfg: FgseConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(FgseModel, TrainRun)> {
    cfg.validate()?;
    let w = model_cfg.window;
    let data = prepare_sequences(seqs, cfg)?;
    let windows = training_windows(&data, w, cfg.stride_for(w));
    if windows.is_empty() {
        return Err(FgseError::Config(format!(
            "window {w} is longer than every training sequence after downsampling by {}",
            cfg.downsample
        )));
    }
    let mut model = FgseModel::new(model_cfg, seed)?;
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed0f_5e9e);
    let heads = model_cfg.n_heads_out;
    let mut run = TrainRun {
        config: model_cfg,
        train: *cfg,
        fold: None,
        test_subject: None,
        seed,
        epochs: Vec::with_capacity(cfg.epochs),
        checkpoint: None,
    };
    log::info!(
        "training on {} sequences, {} windows of {w}, {} parameters",
        data.len(),
        windows.len(),
        model.param_count()
    );

    let mut order = windows.clone();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut preds = vec![Vec::new(); heads];
        let mut truth = vec![Vec::new(); heads];
        for chunk in order.chunks(cfg.batch_size) {
            let wins: Vec<&[SceneGraph]> = chunk.iter().map(|&(s, st)| &data[s].graphs[st..st + w]).collect();
            let labels: Vec<Vec<Vec<usize>>> = chunk
                .iter()
                .map(|&(s, st)| data[s].labels.iter().map(|l| l[st..st + w].to_vec()).collect())
                .collect();
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, true);
            let (loss, logits) = model.batch_loss(&mut tape, &bound, &wins, &labels)?;
            tape.backward(loss)?;
            model.params_mut().collect_grads(&tape, bound.vars())?;
            adam.step(model.params_mut())?;
            loss_sum += tape.scalar(loss) as f64 * chunk.len() as f64;

            let k = model_cfg.n_classes;
            for (h, &lg) in logits.iter().enumerate() {
                preds[h].extend(tape.value(lg).chunks(k).map(argmax));
                for l in &labels {
                    match model_cfg.output_mode {
                        OutputMode::Single => truth[h].push(l[h][w - 1]),
                        _ => truth[h].extend_from_slice(&l[h]),
                    }
                }
            }
        }
        let scores = f1_pooled(&preds, &truth, model_cfg.n_classes)?;
        let m = EpochMetrics {
            epoch,
            loss: loss_sum / order.len() as f64,
            f1_macro: scores.macro_f1,
            f1_micro: scores.micro_f1,
            windows: order.len(),
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} f1-macro {:.3} f1-micro {:.3} ({:.1}s)",
            m.loss,
            m.f1_macro,
            m.f1_micro,
            m.seconds
        );
        run.epochs.push(m);
    }
    Ok((model, run))
}
