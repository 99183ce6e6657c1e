use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FgseError, Result};
use crate::model::{FgseConfig, OutputMode, Pooling};
use crate::scenegraph::{EpisodeDataset, GraphSequence};
use crate::stream::StreamConfig;
use crate::train::eval::evaluate;
use crate::train::folds::{make_folds, Fold};
use crate::train::metrics::F1Scores;
use crate::train::trainer::{train, TrainConfig, TrainRun};

/// Worker count from `FGSE_THREADS`, else the machine's parallelism.
pub fn worker_threads() -> usize {
    std::env::var("FGSE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` over `items` on at most `worker_threads()` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    let threads = worker_threads().min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| FgseError::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subject: u32,
    pub scores: F1Scores,
    pub run: TrainRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    pub mean: F1Scores,
}

pub fn mean_scores(scores: &[F1Scores]) -> F1Scores {
    let n = scores.len().max(1) as f64;
    F1Scores {
        macro_f1: scores.iter().map(|s| s.macro_f1).sum::<f64>() / n,
        micro_f1: scores.iter().map(|s| s.micro_f1).sum::<f64>() / n,
    }
}

pub fn stream_config_for(train: &TrainConfig) -> StreamConfig {
    StreamConfig {
        downsample: train.downsample,
        ..StreamConfig::default()
    }
}

fn test_sequences<'a>(ds: &'a EpisodeDataset, fold: &Fold) -> Vec<&'a GraphSequence> {
    fold.test.iter().map(|&i| &ds.sequences[i]).collect()
}

fn selected_folds(ds: &EpisodeDataset, fold_ids: Option<&[usize]>) -> Result<Vec<Fold>> {
    let folds = make_folds(ds)?;
    match fold_ids {
        None => Ok(folds),
        Some(ids) => ids
            .iter()
            .map(|&i| {
                folds.get(i).cloned().ok_or(FgseError::Index {
                    what: "fold",
                    index: i,
                    len: folds.len(),
                })
            })
            .collect(),
    }
}

/// Trains and evaluates one model per selected fold.
/// With `checkpoint_dir`, each fold's model is saved as `fold{k}.json`.
pub fn cross_validate(
    ds: &EpisodeDataset,
    model_cfg: FgseConfig,
    train_cfg: &TrainConfig,
    seed: u64,
    fold_ids: Option<&[usize]>,
    checkpoint_dir: Option<&Path>,
) -> Result<CrossValidation> {
    let folds = selected_folds(ds, fold_ids)?;
    let results = par_map(&folds, |fold| {
        let (model, mut run) = train(ds, Some(fold), model_cfg, train_cfg, seed)?;
        if let Some(dir) = checkpoint_dir {
            fs::create_dir_all(dir).map_err(|e| FgseError::io(dir, e))?;
            let path = dir.join(format!("fold{}.json", fold.id));
            model.save(
                &path,
                &model.checkpoint_meta(Some(ds.vocab.clone()), train_cfg.downsample),
            )?;
            run.checkpoint = Some(path.display().to_string());
        }
        let report = evaluate(
            &model,
            &test_sequences(ds, fold),
            ds.n_classes(),
            stream_config_for(train_cfg),
        )?;
        log::info!(
            "fold {} (subject {}): f1-macro {:.4} f1-micro {:.4}",
            fold.id,
            fold.test_subject,
            report.scores.macro_f1,
            report.scores.micro_f1
        );
        Ok(FoldResult {
            fold: fold.id,
            test_subject: fold.test_subject,
            scores: report.scores,
            run,
        })
    })?;
    let mean = mean_scores(&results.iter().map(|r| r.scores).collect::<Vec<_>>());
    Ok(CrossValidation { folds: results, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub window: usize,
    /// Mean-over-folds F1-macro per seed.
    pub f1_macro: Vec<f64>,
    pub f1_micro: Vec<f64>,
    pub mean_f1_macro: f64,
    pub mean_f1_micro: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["window".to_string(), "mean_f1_macro".into(), "mean_f1_micro".into()];
        header.extend(self.seeds.iter().map(|s| format!("f1_macro_seed{s}")));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![
                r.window.to_string(),
                format!("{:.6}", r.mean_f1_macro),
                format!("{:.6}", r.mean_f1_micro),
            ];
            rec.extend(r.f1_macro.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| FgseError::Argument(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> FgseError {
    FgseError::Argument(format!("csv: {e}"))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// One cross-validated model per `(window, seed)`; F1 per window.
pub fn window_scaling_experiment(
    ds: &EpisodeDataset,
    base: FgseConfig,
    train_cfg: &TrainConfig,
    windows: &[usize],
    seeds: &[u64],
    fold_ids: Option<&[usize]>,
) -> Result<ScalingTable> {
    let mut rows = Vec::with_capacity(windows.len());
    for &window in windows {
        let cfg = FgseConfig { window, ..base };
        let mut f1_macro = Vec::new();
        let mut f1_micro = Vec::new();
        for &seed in seeds {
            let cv = cross_validate(ds, cfg, train_cfg, seed, fold_ids, None)?;
            f1_macro.push(cv.mean.macro_f1);
            f1_micro.push(cv.mean.micro_f1);
        }
        log::info!("W={window}: mean f1-macro {:.4}", mean(&f1_macro));
        rows.push(ScalingRow {
            window,
            mean_f1_macro: mean(&f1_macro),
            mean_f1_micro: mean(&f1_micro),
            f1_macro,
            f1_micro,
        });
    }
    Ok(ScalingTable {
        seeds: seeds.to_vec(),
        rows,
    })
}

/// F1-macro of the aggregation and pooling variants, each averaged over folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationScores {
    /// Per-frame outputs combined by majority voting.
    pub voting: f64,
    /// Same trained model, only the window's center row.
    pub center: f64,
    /// Model trained and evaluated on one pooled prediction per window.
    pub single: f64,
    /// Voting with hand pooling replaced by global mean pooling.
    pub mean_pooling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<AblationScores>,
    pub mean: AblationScores,
}

pub fn ablation_experiment(
    ds: &EpisodeDataset,
    base: FgseConfig,
    train_cfg: &TrainConfig,
    seeds: &[u64],
    fold_ids: Option<&[usize]>,
) -> Result<AblationTable> {
    let folds = selected_folds(ds, fold_ids)?;
    let stream = stream_config_for(train_cfg);
    let n_classes = ds.n_classes();
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let jobs: Vec<(&Fold, u8)> = folds.iter().flat_map(|f| [(f, 0u8), (f, 1), (f, 2)]).collect();
        let results = par_map(&jobs, |&(fold, variant)| -> Result<Vec<(u8, f64)>> {
            let test = test_sequences(ds, fold);
            let per_frame = FgseConfig {
                output_mode: OutputMode::PerFrame,
                ..base
            };
            match variant {
                0 => {
                    let (model, _) = train(
                        ds,
                        Some(fold),
                        FgseConfig {
                            pooling: Pooling::Hand,
                            ..per_frame
                        },
                        train_cfg,
                        seed,
                    )?;
                    let voting = evaluate(&model, &test, n_classes, stream)?.scores.macro_f1;
                    let center_model = model.with_output_mode(OutputMode::Center)?;
                    let center = evaluate(&center_model, &test, n_classes, stream)?.scores.macro_f1;
                    Ok(vec![(0, voting), (1, center)])
                }
                1 => {
                    let cfg = FgseConfig {
                        pooling: Pooling::Hand,
                        output_mode: OutputMode::Single,
                        ..base
                    };
                    let (model, _) = train(ds, Some(fold), cfg, train_cfg, seed)?;
                    Ok(vec![(2, evaluate(&model, &test, n_classes, stream)?.scores.macro_f1)])
                }
                _ => {
                    let cfg = FgseConfig {
                        pooling: Pooling::GlobalMean,
                        ..per_frame
                    };
                    let (model, _) = train(ds, Some(fold), cfg, train_cfg, seed)?;
                    Ok(vec![(3, evaluate(&model, &test, n_classes, stream)?.scores.macro_f1)])
                }
            }
        })?;
        let mut sums = [0.0f64; 4];
        for (k, v) in results.into_iter().flatten() {
            sums[k as usize] += v;
        }
        let n = folds.len() as f64;
        let s = AblationScores {
            voting: sums[0] / n,
            center: sums[1] / n,
            single: sums[2] / n,
            mean_pooling: sums[3] / n,
        };
        log::info!("seed {seed}: {s:?}");
        per_seed.push(s);
    }
    let avg = |f: fn(&AblationScores) -> f64| mean(&per_seed.iter().map(f).collect::<Vec<_>>());
    let mean = AblationScores {
        voting: avg(|s| s.voting),
        center: avg(|s| s.center),
        single: avg(|s| s.single),
        mean_pooling: avg(|s| s.mean_pooling),
    };
    Ok(AblationTable {
        seeds: seeds.to_vec(),
        per_seed,
        mean,
    })
}

/// What is needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub dataset_hash: Option<String>,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, dataset_hash: Option<String>, config: serde_json::Value) -> Self {
        RunManifest {
            version: format!("fgse {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            seed,
            dataset_hash,
            config,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| FgseError::io(dir, e))?;
        }
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| FgseError::io(path, e))
    }
}
