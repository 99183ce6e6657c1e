use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{FgseConfig, OutputMode, Pooling, WindowOutput};
use crate::numcore::AdamConfig;
use crate::scenegraph::{
    EpisodeDataset, GraphEdge, GraphNode, GraphSequence, HandRole, RelationVector, SceneGraph, Vocabulary,
};
use crate::stream::{StreamConfig, WindowModel};
use crate::Result;

/// Two nodes per frame; the hand's category is the frame's label.
fn frame(t: usize, label: usize) -> SceneGraph {
    SceneGraph {
        time_index: t as u64,
        nodes: vec![
            GraphNode {
                id: 1,
                cat: label,
                hand: HandRole::Right,
            },
            GraphNode {
                id: 2,
                cat: 2,
                hand: HandRole::None,
            },
        ],
        edges: vec![
            GraphEdge {
                src: 1,
                dst: 2,
                rel: RelationVector::empty(),
            },
            GraphEdge {
                src: 2,
                dst: 1,
                rel: RelationVector::empty(),
            },
        ],
    }
}

fn separable_sequence(episode: &str, subject: u32, len: usize, segment: usize) -> GraphSequence {
    let labels: Vec<usize> = (0..len).map(|t| (t / segment) % 2).collect();
    GraphSequence {
        episode: episode.into(),
        subject,
        fps: 30.0,
        graphs: labels.iter().enumerate().map(|(t, &l)| frame(t, l)).collect(),
        labels: vec![labels],
    }
}

fn separable_dataset(subjects: u32, per_subject: usize) -> EpisodeDataset {
    let vocab = Vocabulary::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec!["x".into(), "y".into()],
        vec!["main".into()],
    );
    let seqs = (0..subjects)
        .flat_map(|s| (0..per_subject).map(move |e| separable_sequence(&format!("s{s}e{e}"), s, 48, 8 + e)))
        .collect();
    EpisodeDataset::new(seqs, vocab).unwrap()
}

fn tiny_model() -> FgseConfig {
    FgseConfig {
        n_graph_layers: 1,
        d_model: 16,
        n_heads: 2,
        n_seq_layers: 1,
        window: 6,
        ..FgseConfig::default()
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 8,
        stride: Some(2),
        mirror: false,
        downsample: 1,
        adam: AdamConfig {
            lr: 3e-3,
            ..AdamConfig::default()
        },
    }
}

#[test]
fn f1_examples() {
    let s = f1_scores(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
    assert_eq!((s.macro_f1, s.micro_f1), (1.0, 1.0));
    // class 0: P 1/2 R 1 -> 2/3; class 1: P 1 R 2/3 -> 4/5
    let s = f1_scores(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
    assert!((s.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
    assert!((s.micro_f1 - 0.75).abs() < 1e-12);
    // class 2 never appears and is not averaged
    let s = f1_scores(&[0, 1], &[0, 1], 3).unwrap();
    assert_eq!(s.macro_f1, 1.0);
    // a wrongly predicted class counts with F1 0
    let s = f1_scores(&[0, 2], &[0, 0], 3).unwrap();
    assert!((s.macro_f1 - (2.0 / 3.0) / 2.0).abs() < 1e-12);
}

#[test]
fn f1_errors() {
    assert!(f1_scores(&[0], &[0, 1], 2).is_err());
    assert!(f1_scores(&[], &[], 2).is_err());
    assert!(f1_scores(&[3], &[0], 2).is_err());
    assert!(f1_pooled(&[vec![0]], &[vec![0], vec![1]], 2).is_err());
}

/// Reference F1 from precision and recall.
fn f1_oracle(preds: &[usize], truth: &[usize], k: usize) -> (f64, f64) {
    let mut per_class = Vec::new();
    for c in 0..k {
        let tp = preds.iter().zip(truth).filter(|(p, t)| **p == c && **t == c).count() as f64;
        let predicted = preds.iter().filter(|p| **p == c).count() as f64;
        let actual = truth.iter().filter(|t| **t == c).count() as f64;
        if predicted == 0.0 && actual == 0.0 {
            continue;
        }
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if actual > 0.0 { tp / actual } else { 0.0 };
        per_class.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
    }
    let accuracy = preds.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / preds.len() as f64;
    (per_class.iter().sum::<f64>() / per_class.len() as f64, accuracy)
}

#[test]
fn f1_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let k = rng.gen_range(1..7);
        let n = rng.gen_range(1..60);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let preds: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.gen_bool(0.6) { t } else { rng.gen_range(0..k) })
            .collect();
        let s = f1_scores(&preds, &truth, k).unwrap();
        let (m, a) = f1_oracle(&preds, &truth, k);
        assert!((s.macro_f1 - m).abs() < 1e-12, "{preds:?} {truth:?}");
        assert!((s.micro_f1 - a).abs() < 1e-12);
    }
}

#[test]
fn pooled_f1_concatenates_heads() {
    let preds = vec![vec![0, 1], vec![1, 1]];
    let truth = vec![vec![0, 1], vec![0, 1]];
    assert_eq!(
        f1_pooled(&preds, &truth, 2).unwrap(),
        f1_scores(&[0, 1, 1, 1], &[0, 1, 0, 1], 2).unwrap()
    );
}

#[test]
fn folds_hold_out_each_subject() {
    let ds = separable_dataset(3, 2);
    let folds = make_folds(&ds).unwrap();
    assert_eq!(folds.len(), 3);
    for f in &folds {
        assert_eq!(f.test.len(), 2);
        assert_eq!(f.train.len(), 4);
        assert!(f.test.iter().all(|&i| ds.sequences[i].subject == f.test_subject));
        assert!(f.train.iter().all(|&i| ds.sequences[i].subject != f.test_subject));
    }
    assert!(make_folds(&separable_dataset(1, 3)).is_err());
}

#[test]
fn loader_never_serves_the_test_subject() {
    let ds = separable_dataset(3, 2);
    let folds = make_folds(&ds).unwrap();
    let loader = FoldLoader::new(&ds, Some(&folds[1]));
    let seqs = loader.training_sequences().unwrap();
    assert_eq!(seqs.len(), 4);
    assert!(!loader.subjects_served().contains(&folds[1].test_subject));

    let mut leaky = folds[1].clone();
    leaky.train.push(leaky.test[0]);
    assert!(FoldLoader::new(&ds, Some(&leaky)).training_sequences().is_err());
}

#[test]
fn window_starts_cover_the_tail() {
    let seqs = vec![separable_sequence("a", 0, 10, 5), separable_sequence("b", 0, 3, 5)];
    assert_eq!(training_windows(&seqs, 4, 3), vec![(0, 0), (0, 3), (0, 6)]);
    assert_eq!(training_windows(&seqs, 4, 4), vec![(0, 0), (0, 4), (0, 6)]);
    assert_eq!(training_windows(&seqs, 11, 1), vec![]);
}

#[test]
fn mirroring_doubles_bimanual_sequences() {
    let mut s = separable_sequence("a", 0, 12, 3);
    s.labels.push(vec![1; 12]);
    let cfg = TrainConfig {
        downsample: 1,
        ..TrainConfig::default()
    };
    let out = prepare_sequences(&[&s], &cfg).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[1].labels[0], s.labels[1]);
    assert_eq!(out[1].labels[1], s.labels[0]);
    assert_eq!(out[1].graphs[0].nodes[0].hand, HandRole::Left);

    let single = separable_sequence("b", 0, 12, 3);
    assert_eq!(prepare_sequences(&[&single], &cfg).unwrap().len(), 1);
    let no_mirror = TrainConfig { mirror: false, ..cfg };
    assert_eq!(prepare_sequences(&[&s], &no_mirror).unwrap().len(), 1);
}

#[test]
fn downsampling_before_windowing() {
    let s = separable_sequence("a", 0, 30, 6);
    let cfg = TrainConfig {
        downsample: 3,
        mirror: false,
        ..TrainConfig::default()
    };
    let out = prepare_sequences(&[&s], &cfg).unwrap();
    assert_eq!(out[0].len(), 10);
    assert_eq!(out[0].labels[0], vec![0, 0, 1, 1, 0, 0, 1, 1, 0, 0]);
}

#[test]
fn loss_decreases_on_separable_data() {
    let ds = separable_dataset(2, 3);
    let mut mean = vec![0.0; 5];
    let seeds = [1u64, 2, 3];
    for &seed in &seeds {
        let (_, run) = train(&ds, None, tiny_model(), &quick_train(), seed).unwrap();
        for (m, e) in mean.iter_mut().zip(&run.epochs) {
            *m += e.loss / seeds.len() as f64;
        }
    }
    assert!(mean.windows(2).all(|w| w[1] < w[0]), "{mean:?}");
    assert!(mean[4] < 0.5 * std::f64::consts::LN_2.max(mean[0]), "{mean:?}");
}

#[test]
fn training_is_deterministic() {
    let ds = separable_dataset(2, 2);
    let cfg = TrainConfig {
        epochs: 2,
        ..quick_train()
    };
    let (a, ra) = train(&ds, None, tiny_model(), &cfg, 9).unwrap();
    let (b, rb) = train(&ds, None, tiny_model(), &cfg, 9).unwrap();
    assert_eq!(a.params(), b.params());
    assert_eq!(
        ra.epochs.iter().map(|e| e.loss).collect::<Vec<_>>(),
        rb.epochs.iter().map(|e| e.loss).collect::<Vec<_>>()
    );
    let (c, _) = train(&ds, None, tiny_model(), &cfg, 10).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn fit_config_follows_the_vocabulary() {
    let ds = separable_dataset(2, 1);
    let cfg = fit_config(FgseConfig::default(), &ds.vocab);
    assert_eq!((cfg.n_categories, cfg.n_classes, cfg.n_heads_out), (3, 2, 1));
}

#[test]
fn invalid_training_configs() {
    let ds = separable_dataset(2, 1);
    let zero = TrainConfig {
        epochs: 0,
        ..quick_train()
    };
    assert!(train(&ds, None, tiny_model(), &zero, 0).is_err());
    let long_window = FgseConfig {
        window: 100,
        ..tiny_model()
    };
    assert!(train(&ds, None, long_window, &quick_train(), 0).is_err());
}

/// Reads the label straight off the hand's category.
struct Oracle {
    w: usize,
    mode: OutputMode,
}

impl WindowModel for Oracle {
    type Token = usize;

    fn window(&self) -> usize {
        self.w
    }

    fn head_count(&self) -> usize {
        1
    }

    fn output_mode(&self) -> OutputMode {
        self.mode
    }

    fn embed(&self, g: &SceneGraph) -> Result<usize> {
        Ok(g.nodes[0].cat)
    }

    fn predict(&self, window: &[&usize]) -> Result<WindowOutput> {
        let one_hot = |c: usize| vec![(0..2).map(|k| if k == c { 1.0 } else { 0.0 }).collect::<Vec<f32>>()];
        let rows = match self.mode {
            OutputMode::PerFrame => window.iter().enumerate().map(|(r, &&c)| (r, one_hot(c))).collect(),
            OutputMode::Center => vec![(self.w / 2, one_hot(*window[self.w / 2]))],
            OutputMode::Single => vec![(self.w - 1, one_hot(*window[self.w - 1]))],
        };
        Ok(WindowOutput { rows })
    }
}

#[test]
fn oracle_model_scores_perfectly() {
    let ds = separable_dataset(2, 2);
    let seqs: Vec<&GraphSequence> = ds.sequences.iter().collect();
    for mode in [OutputMode::PerFrame, OutputMode::Center, OutputMode::Single] {
        let model = Oracle { w: 5, mode };
        let report = evaluate(&model, &seqs, 2, StreamConfig::default()).unwrap();
        assert_eq!(report.scores.macro_f1, 1.0, "{mode:?}");
        assert_eq!(report.frames, 4 * 48);
        assert_eq!(report.episodes[0].labels[0], ds.sequences[0].labels[0]);
    }
}

#[test]
fn downsampled_evaluation_of_a_constant_episode() {
    let mut s = separable_sequence("c", 0, 31, 100);
    s.labels[0] = vec![0; 31];
    let model = Oracle {
        w: 4,
        mode: OutputMode::PerFrame,
    };
    for d in [1, 3] {
        let cfg = StreamConfig {
            downsample: d,
            ..StreamConfig::default()
        };
        let report = evaluate(&model, &[&s], 2, cfg).unwrap();
        assert_eq!(report.frames, 31);
        assert_eq!(report.scores.micro_f1, 1.0, "D{d}");
    }
}

#[test]
fn evaluate_rejects_head_mismatch() {
    let mut s = separable_sequence("c", 0, 10, 5);
    s.labels.push(s.labels[0].clone());
    let model = Oracle {
        w: 4,
        mode: OutputMode::PerFrame,
    };
    assert!(evaluate(&model, &[&s], 2, StreamConfig::default()).is_err());
}

#[test]
fn vocabulary_check() {
    let ds = separable_dataset(2, 1);
    assert!(check_vocab(Some(&ds.vocab), &ds.vocab).is_ok());
    assert!(check_vocab(None, &ds.vocab).is_ok());
    let mut other = ds.vocab.clone();
    other.actions.push("z".into());
    assert!(check_vocab(Some(&other), &ds.vocab).is_err());
}

#[test]
fn cross_validation_averages_folds_and_saves_checkpoints() {
    let ds = separable_dataset(2, 2);
    let cfg = TrainConfig {
        epochs: 1,
        ..quick_train()
    };
    let dir = tempfile::tempdir().unwrap();
    let cv = cross_validate(&ds, tiny_model(), &cfg, 3, None, Some(dir.path())).unwrap();
    assert_eq!(cv.folds.len(), 2);
    let m = mean_scores(&cv.folds.iter().map(|f| f.scores).collect::<Vec<_>>());
    assert_eq!(cv.mean, m);
    assert!((cv.mean.macro_f1 - (cv.folds[0].scores.macro_f1 + cv.folds[1].scores.macro_f1) / 2.0).abs() < 1e-12);
    for f in &cv.folds {
        let path = dir.path().join(format!("fold{}.json", f.fold));
        assert!(path.exists());
        assert_eq!(f.run.test_subject, Some(f.test_subject));
        let (model, meta) = crate::model::FgseModel::load(&path).unwrap();
        assert_eq!(meta.vocab.as_ref(), Some(&ds.vocab));
        assert_eq!(model.config().window, 6);
    }
    let one = cross_validate(&ds, tiny_model(), &cfg, 3, Some(&[1]), None).unwrap();
    assert_eq!(one.folds.len(), 1);
    assert_eq!(one.folds[0].scores, cv.folds[1].scores);
    assert!(cross_validate(&ds, tiny_model(), &cfg, 3, Some(&[5]), None).is_err());
}

#[test]
fn single_mode_and_mean_pooling_train() {
    let ds = separable_dataset(2, 2);
    for cfg in [
        FgseConfig {
            output_mode: OutputMode::Single,
            ..tiny_model()
        },
        FgseConfig {
            pooling: Pooling::GlobalMean,
            ..tiny_model()
        },
    ] {
        let (_, run) = train(&ds, None, cfg, &quick_train(), 4).unwrap();
        assert!(run.final_loss().unwrap() < run.epochs[0].loss);
    }
}

#[test]
fn scaling_table_csv() {
    let table = ScalingTable {
        seeds: vec![1, 2],
        rows: vec![ScalingRow {
            window: 10,
            f1_macro: vec![0.5, 0.7],
            f1_micro: vec![0.6, 0.8],
            mean_f1_macro: 0.6,
            mean_f1_micro: 0.7,
        }],
    };
    assert_eq!(
        table.to_csv().unwrap(),
        "window,mean_f1_macro,mean_f1_micro,f1_macro_seed1,f1_macro_seed2\n10,0.600000,0.700000,0.500000,0.700000\n"
    );
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs/manifest.json");
    let m = RunManifest::new("train", 7, Some("abc".into()), serde_json::json!({"window": 20}));
    m.write(&path).unwrap();
    let back: RunManifest = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, m);
}

proptest! {
    #[test]
    fn f1_is_bounded_and_perfect_on_identity(truth in proptest::collection::vec(0usize..5, 1..80)) {
        let s = f1_scores(&truth, &truth, 5).unwrap();
        prop_assert_eq!(s.macro_f1, 1.0);
        prop_assert_eq!(s.micro_f1, 1.0);
        let shifted: Vec<usize> = truth.iter().map(|t| (t + 1) % 5).collect();
        let s = f1_scores(&shifted, &truth, 5).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.macro_f1));
        prop_assert_eq!(s.micro_f1, 0.0);
    }

    #[test]
    fn windows_cover_every_frame(len in 1usize..60, w in 1usize..12, stride in 1usize..12) {
        prop_assume!(stride <= w);
        let seqs = vec![separable_sequence("a", 0, len, 4)];
        let starts = training_windows(&seqs, w, stride);
        if len < w {
            prop_assert!(starts.is_empty());
        } else {
            let mut covered = vec![false; len];
            for (_, s) in &starts {
                prop_assert!(s + w <= len);
                covered[*s..s + w].iter_mut().for_each(|c| *c = true);
            }
            prop_assert!(covered.iter().all(|&c| c));
        }
    }
}
