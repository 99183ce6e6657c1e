//! `fgse`: dataset conversion, training, evaluation, streaming and benchmarking.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::os::unix::net::UnixStream;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use fgse::model::{count_params, FgseConfig, FgseModel, OutputMode, Pooling};
use fgse::scenegraph::{load_dataset, DatasetFormat, EpisodeDataset, FrameRecord, GraphSequence, RelationThresholds};
use fgse::stream::{bench, StreamConfig, StreamEngine};
use fgse::synth::{
    generate_benchmark_suite, generate_episode, label_histogram, write_suite, ScenarioScript, SuiteConfig,
};
use fgse::train::{
    ablation_experiment, check_vocab, cross_validate, evaluate, fit_config, make_folds, train,
    window_scaling_experiment, RunManifest, TrainConfig,
};

/// Bad flags, config files or arguments; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser)]
#[command(
    name = "fgse",
    version,
    about = "Streaming manipulation-action recognition over scene graphs"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Window length W in (downsampled) frames.
    #[arg(short = 'W', long, global = true)]
    window: Option<usize>,
    /// Temporal downsampling factor D.
    #[arg(short = 'D', long, global = true)]
    downsample: Option<usize>,
    /// Leave-one-subject-out fold: an index or `all`.
    #[arg(long, global = true)]
    fold: Option<FoldArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pooling: Option<PoolingArg>,
    #[arg(long, global = true, value_enum)]
    output_mode: Option<ModeArg>,
    /// Also emit labels for frames that are still collecting votes.
    #[arg(long, global = true)]
    provisional: bool,
    /// Window stride: training windows for train/scaling/ablation, inference windows otherwise.
    #[arg(long, global = true)]
    stride: Option<usize>,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FoldArg {
    All,
    Index(usize),
}

impl std::str::FromStr for FoldArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(FoldArg::All);
        }
        s.parse()
            .map(FoldArg::Index)
            .map_err(|_| format!("expected a fold index or `all`, got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolingArg {
    Hand,
    Mean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Frame,
    Single,
    Center,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    BimacsJson,
    CoaxBoxes,
    FgseJsonl,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::BimacsJson => DatasetFormat::BimacsJson,
            FormatArg::CoaxBoxes => DatasetFormat::CoaxBoxes,
            FormatArg::FgseJsonl => DatasetFormat::FgseJsonl,
        }
    }
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "fgse-jsonl")]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a Bimacs or CoAx dataset into the native format.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic benchmark suite or render one scripted episode.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        /// 2 cm position noise.
        #[arg(long)]
        hard: bool,
        /// Long still phases and slow hands.
        #[arg(long)]
        long: bool,
        /// Render this scenario script instead of a suite.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Train on a dataset: the whole of it, one fold, or every fold.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Directory for checkpoints, metrics and the manifest.
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a checkpoint with streaming inference.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Write the full report, including per-episode labels.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Read graphs line by line and print final predictions as JSON lines.
    Stream {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `-` for stdin, a file, `tcp://host:port` or `unix:/path`.
        #[arg(long, default_value = "-")]
        input: String,
    },
    /// Measure streaming throughput and delay.
    Bench {
        /// Defaults to a freshly initialized model of the configured size.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// Use at most this many episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Incoming frame rate; defaults to the dataset's.
        #[arg(long)]
        fps: Option<f64>,
    },
    /// F1 against window length, cross-validated per seed; writes CSV.
    Scaling {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_value = "10,20,30")]
        windows: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Voting, center, single-prediction and mean-pooling variants.
    Ablation {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Convert { .. } => "convert",
            Command::Synth { .. } => "synth",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Stream { .. } => "stream",
            Command::Bench { .. } => "bench",
            Command::Scaling { .. } => "scaling",
            Command::Ablation { .. } => "ablation",
        }
    }

    fn trains(&self) -> bool {
        matches!(
            self,
            Command::Train { .. } | Command::Scaling { .. } | Command::Ablation { .. }
        )
    }
}

/// Everything a run reads from the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    model: FgseConfig,
    thresholds: RelationThresholds,
    train: TrainConfig,
    stream: StreamConfig,
    synth: SuiteConfig,
    seed: u64,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text =
            fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    fn apply(&mut self, c: &Common, command: &Command) {
        if let Some(w) = c.window {
            self.model.window = w;
        }
        if let Some(d) = c.downsample {
            self.train.downsample = d;
            self.stream.downsample = d;
        }
        if let Some(s) = c.seed {
            self.seed = s;
            self.synth.seed = s;
        }
        if let Some(p) = c.pooling {
            self.model.pooling = match p {
                PoolingArg::Hand => Pooling::Hand,
                PoolingArg::Mean => Pooling::GlobalMean,
            };
        }
        if let Some(m) = c.output_mode {
            self.model.output_mode = match m {
                ModeArg::Frame => OutputMode::PerFrame,
                ModeArg::Single => OutputMode::Single,
                ModeArg::Center => OutputMode::Center,
            };
        }
        if c.provisional {
            self.stream.provisional = true;
        }
        if let Some(s) = c.stride {
            if command.trains() {
                self.train.stride = Some(s);
            } else {
                self.stream.stride = s;
            }
        }
    }
}

struct Ctx {
    common: Common,
    cfg: RunConfig,
    command: &'static str,
}

impl Ctx {
    fn manifest(&self, default_path: Option<PathBuf>, dataset_hash: Option<String>) -> anyhow::Result<()> {
        let Some(path) = self.common.manifest.clone().or(default_path) else {
            return Ok(());
        };
        let config = serde_json::to_value(&self.cfg)?;
        RunManifest::new(self.command, self.cfg.seed, dataset_hash, config).write(&path)?;
        log::info!("manifest written to {}", path.display());
        Ok(())
    }

    fn load_data(&self, data: &DataArgs) -> anyhow::Result<EpisodeDataset> {
        load_dataset(&data.data, data.format.into(), &self.cfg.thresholds)
            .with_context(|| format!("loading {}", data.data.display()))
    }

    fn fold_ids(&self) -> Option<Vec<usize>> {
        match self.common.fold {
            Some(FoldArg::Index(k)) => Some(vec![k]),
            _ => None,
        }
    }
}

fn sibling_manifest(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    output.with_file_name(format!("{stem}.manifest.json"))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.common.config.as_deref())?;
    cfg.apply(&cli.common, &cli.command);
    cfg.model.validate().map_err(|e| usage(e.to_string()))?;
    cfg.train.validate().map_err(|e| usage(e.to_string()))?;
    let ctx = Ctx {
        common: cli.common,
        cfg,
        command: cli.command.name(),
    };
    match cli.command {
        Command::Convert { input, format, output } => cmd_convert(&ctx, &input, format, &output),
        Command::Synth {
            output,
            subjects,
            episodes,
            hard,
            long,
            script,
        } => cmd_synth(&ctx, &output, subjects, episodes, hard, long, script.as_deref()),
        Command::Train { data, output } => cmd_train(&ctx, &data, &output),
        Command::Eval {
            checkpoint,
            data,
            output,
        } => cmd_eval(&ctx, &checkpoint, &data, output.as_deref()),
        Command::Stream { checkpoint, input } => cmd_stream(&ctx, &checkpoint, &input),
        Command::Bench {
            checkpoint,
            data,
            episodes,
            fps,
        } => cmd_bench(&ctx, checkpoint.as_deref(), &data, episodes, fps),
        Command::Scaling {
            data,
            windows,
            seeds,
            output,
        } => cmd_scaling(&ctx, &data, &windows, &seeds, output.as_deref()),
        Command::Ablation { data, seeds, output } => cmd_ablation(&ctx, &data, &seeds, output.as_deref()),
    }
}

fn cmd_convert(ctx: &Ctx, input: &Path, format: FormatArg, output: &Path) -> anyhow::Result<()> {
    let ds = load_dataset(input, format.into(), &ctx.cfg.thresholds)
        .with_context(|| format!("converting {}", input.display()))?;
    ds.write_native(output)?;
    println!(
        "{} episodes, {} frames, {} subjects",
        ds.sequences.len(),
        ds.total_frames(),
        ds.subjects.len()
    );
    println!("objects: {}", ds.vocab.objects.join(", "));
    println!("classes: {}", ds.vocab.actions.join(", "));
    if !ds.vocab.label_pairs.is_empty() {
        println!("label pairs:");
        for (i, (action, object)) in ds.vocab.label_pairs.iter().enumerate() {
            println!("  {i:>3}  {action} + {object}");
        }
    }
    ctx.manifest(Some(output.join("manifest.json")), Some(ds.hash()))
}

fn cmd_synth(
    ctx: &Ctx,
    output: &Path,
    subjects: Option<usize>,
    episodes: Option<usize>,
    hard: bool,
    long: bool,
    script: Option<&Path>,
) -> anyhow::Result<()> {
    if let Some(path) = script {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let script: ScenarioScript =
            serde_json::from_str(&text).map_err(|e| usage(format!("script {}: {e}", path.display())))?;
        let ep = generate_episode(&script, &ctx.cfg.thresholds)?;
        let ds = EpisodeDataset::new(vec![ep.sequence], fgse::synth::synth_vocabulary())?;
        ds.write_native(output)?;
        println!("{} frames written to {}", ds.total_frames(), output.display());
        return ctx.manifest(Some(output.join("manifest.json")), Some(ds.hash()));
    }
    let mut suite = ctx.cfg.synth;
    if let Some(n) = subjects {
        suite.n_subjects = n;
    }
    if let Some(n) = episodes {
        suite.episodes_per_subject = n;
    }
    if hard {
        suite = suite.hard();
    }
    if long {
        suite = suite.long();
    }
    let (ds, manifest) = generate_benchmark_suite(&suite).map_err(|e| usage(e.to_string()))?;
    write_suite(output, &ds, &manifest)?;
    println!(
        "{} episodes, {} frames written to {}",
        ds.sequences.len(),
        ds.total_frames(),
        output.display()
    );
    for (label, n) in label_histogram(&ds) {
        println!("  {label:<10} {n}");
    }
    ctx.manifest(Some(output.join("manifest.json")), Some(ds.hash()))
}

fn cmd_train(ctx: &Ctx, data: &DataArgs, output: &Path) -> anyhow::Result<()> {
    let ds = ctx.load_data(data)?;
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let (cfg, train_cfg, seed) = (ctx.cfg.model, ctx.cfg.train, ctx.cfg.seed);
    match ctx.common.fold {
        None => {
            let (model, mut run) = train(&ds, None, cfg, &train_cfg, seed)?;
            let path = output.join("model.json");
            model.save(
                &path,
                &model.checkpoint_meta(Some(ds.vocab.clone()), train_cfg.downsample),
            )?;
            run.checkpoint = Some(path.display().to_string());
            write_json(&output.join("metrics.json"), &run)?;
            println!("checkpoint: {}", path.display());
            if let Some(e) = run.epochs.last() {
                println!("final loss {:.4}, training f1-macro {:.4}", e.loss, e.f1_macro);
            }
        }
        Some(_) => {
            let ids = ctx.fold_ids();
            if let Some(&k) = ids.as_ref().and_then(|v| v.first()) {
                let n = make_folds(&ds)?.len();
                if k >= n {
                    return Err(usage(format!("fold {k} out of range, dataset has {n} folds")));
                }
            }
            let cv = cross_validate(&ds, cfg, &train_cfg, seed, ids.as_deref(), Some(output))?;
            write_json(&output.join("metrics.json"), &cv)?;
            for f in &cv.folds {
                println!(
                    "fold {} (subject {}): f1-macro {:.4} f1-micro {:.4}",
                    f.fold, f.test_subject, f.scores.macro_f1, f.scores.micro_f1
                );
            }
            println!("mean f1-macro {:.4} f1-micro {:.4}", cv.mean.macro_f1, cv.mean.micro_f1);
        }
    }
    ctx.manifest(Some(output.join("manifest.json")), Some(ds.hash()))
}

/// Stream settings for a checkpoint: the trained downsampling factor unless overridden.
fn stream_config(ctx: &Ctx, trained_downsample: usize) -> StreamConfig {
    StreamConfig {
        downsample: ctx.common.downsample.unwrap_or(trained_downsample),
        ..ctx.cfg.stream
    }
}

fn load_checkpoint(ctx: &Ctx, path: &Path) -> anyhow::Result<(FgseModel, fgse::model::CheckpointMeta)> {
    let (model, meta) = FgseModel::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let model = match ctx.common.output_mode {
        Some(_) => model.with_output_mode(ctx.cfg.model.output_mode)?,
        None => model,
    };
    Ok((model, meta))
}

fn cmd_eval(ctx: &Ctx, checkpoint: &Path, data: &DataArgs, output: Option<&Path>) -> anyhow::Result<()> {
    let (model, meta) = load_checkpoint(ctx, checkpoint)?;
    let ds = ctx.load_data(data)?;
    check_vocab(meta.vocab.as_ref(), &ds.vocab)?;
    let seqs: Vec<&GraphSequence> = match ctx.common.fold {
        Some(FoldArg::Index(k)) => {
            let folds = make_folds(&ds)?;
            let fold = folds
                .get(k)
                .ok_or_else(|| usage(format!("fold {k} out of range, dataset has {} folds", folds.len())))?;
            fold.test.iter().map(|&i| &ds.sequences[i]).collect()
        }
        _ => ds.sequences.iter().collect(),
    };
    let report = evaluate(&model, &seqs, ds.n_classes(), stream_config(ctx, meta.downsample))?;
    println!(
        "{}",
        serde_json::json!({
            "f1_macro": report.scores.macro_f1,
            "f1_micro": report.scores.micro_f1,
            "frames": report.frames,
            "episodes": seqs.len(),
        })
    );
    if let Some(path) = output {
        write_json(path, &report)?;
    }
    ctx.manifest(output.map(sibling_manifest), Some(ds.hash()))
}

fn open_source(input: &str) -> anyhow::Result<Box<dyn BufRead>> {
    if input == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    if let Some(addr) = input.strip_prefix("tcp://") {
        let s = TcpStream::connect(addr).with_context(|| format!("connecting to {addr}"))?;
        return Ok(Box::new(BufReader::new(s)));
    }
    if let Some(path) = input.strip_prefix("unix://").or_else(|| input.strip_prefix("unix:")) {
        let s = UnixStream::connect(path).with_context(|| format!("connecting to {path}"))?;
        return Ok(Box::new(BufReader::new(s)));
    }
    let f = fs::File::open(input).with_context(|| format!("opening {input}"))?;
    Ok(Box::new(BufReader::new(f)))
}

fn cmd_stream(ctx: &Ctx, checkpoint: &Path, input: &str) -> anyhow::Result<()> {
    let (model, meta) = load_checkpoint(ctx, checkpoint)?;
    let cfg = stream_config(ctx, meta.downsample);
    let vocab = meta.vocab.as_ref();
    let source = open_source(input)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut engine = StreamEngine::new(&model, cfg)?;
    let mut episode: Option<String> = None;
    let emit = |out: &mut io::StdoutLock, preds: Vec<fgse::stream::FinalPrediction>| -> anyhow::Result<()> {
        for p in preds {
            for line in p.lines(vocab) {
                writeln!(out, "{}", serde_json::to_string(&line)?)?;
            }
        }
        out.flush()?;
        Ok(())
    };
    let origin = Path::new(input);
    for (i, line) in source.lines().enumerate() {
        let line = line.with_context(|| format!("reading {input}"))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = FrameRecord::parse_line(origin, i + 1, &line)?;
        if episode.as_ref().is_some_and(|e| *e != rec.episode) {
            let tail = engine.flush()?;
            emit(&mut out, tail)?;
        }
        if episode.as_deref() != Some(rec.episode.as_str()) {
            episode = Some(rec.episode.clone());
            engine = StreamEngine::new(
                &model,
                StreamConfig {
                    fps: cfg.fps.or(Some(rec.fps)),
                    ..cfg
                },
            )?;
        }
        let preds = engine.push_frame(&rec.graph())?;
        emit(&mut out, preds)?;
    }
    let tail = engine.flush()?;
    emit(&mut out, tail)?;
    ctx.manifest(None, None)
}

fn cmd_bench(
    ctx: &Ctx,
    checkpoint: Option<&Path>,
    data: &DataArgs,
    episodes: Option<usize>,
    fps: Option<f64>,
) -> anyhow::Result<()> {
    let ds = ctx.load_data(data)?;
    let (model, downsample) = match checkpoint {
        Some(path) => {
            let (model, meta) = load_checkpoint(ctx, path)?;
            check_vocab(meta.vocab.as_ref(), &ds.vocab)?;
            (model, meta.downsample)
        }
        None => (
            FgseModel::new(fit_config(ctx.cfg.model, &ds.vocab), ctx.cfg.seed)?,
            ctx.cfg.train.downsample,
        ),
    };
    let take = episodes.unwrap_or(ds.sequences.len()).min(ds.sequences.len());
    let streams: Vec<_> = ds.sequences[..take].iter().map(|s| s.graphs.clone()).collect();
    let fps = fps
        .or(ctx.cfg.stream.fps)
        .or_else(|| ds.sequences.first().map(|s| s.fps));
    let cfg = StreamConfig {
        fps,
        ..stream_config(ctx, downsample)
    };
    let report = bench(&model, &streams, cfg)?;
    let c = model.config();
    println!(
        "model: W={} D={} d={} pooling={} output={} parameters={}",
        c.window,
        cfg.downsample,
        c.d_model,
        c.pooling,
        c.output_mode,
        count_params(c)
    );
    println!(
        "throughput: {:.1} graphs/s ({} graphs from {} frames in {:.2}s, {:.1} input frames/s)",
        report.graphs_per_second, report.graphs, report.frames, report.seconds, report.frames_per_second
    );
    let l = &report.latency;
    println!(
        "structural delay: W/fps = {}/{:.2} = {:.4}s; compute per window mean {:.4}s max {:.4}s; total {:.4}s",
        l.window, l.fps_effective, l.structural_delay_s, l.compute_mean_s, l.compute_max_s, l.total_delay_s
    );
    print_json(&report)?;
    ctx.manifest(None, Some(ds.hash()))
}

fn cmd_scaling(
    ctx: &Ctx,
    data: &DataArgs,
    windows: &[usize],
    seeds: &[u64],
    output: Option<&Path>,
) -> anyhow::Result<()> {
    if windows.is_empty() || seeds.is_empty() {
        return Err(usage("need at least one window and one seed"));
    }
    let ds = ctx.load_data(data)?;
    let table = window_scaling_experiment(
        &ds,
        ctx.cfg.model,
        &ctx.cfg.train,
        windows,
        seeds,
        ctx.fold_ids().as_deref(),
    )?;
    let csv = table.to_csv()?;
    print!("{csv}");
    if let Some(path) = output {
        fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
    }
    ctx.manifest(output.map(sibling_manifest), Some(ds.hash()))
}

fn cmd_ablation(ctx: &Ctx, data: &DataArgs, seeds: &[u64], output: Option<&Path>) -> anyhow::Result<()> {
    if seeds.is_empty() {
        return Err(usage("need at least one seed"));
    }
    let ds = ctx.load_data(data)?;
    let table = ablation_experiment(&ds, ctx.cfg.model, &ctx.cfg.train, seeds, ctx.fold_ids().as_deref())?;
    print_json(&table)?;
    if let Some(path) = output {
        write_json(path, &table)?;
    }
    if table.mean.voting < table.mean.center || table.mean.center < table.mean.single {
        log::warn!(
            "aggregation ordering voting >= center >= single does not hold: {:?}",
            table.mean
        );
    }
    ctx.manifest(output.map(sibling_manifest), Some(ds.hash()))
}
