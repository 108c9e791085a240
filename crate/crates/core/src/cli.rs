//! `graphpine` command line: prep | synth | train | eval | explain | analyze.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{export_explanation, propagation_stats, PropagationStats};
use crate::checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointManifest};
use crate::config::RunConfig;
use crate::dataprep::{prepare_bundle, DatasetBundle, Split};
use crate::error::{Error, Result};
use crate::io::write_json;
use crate::ip_layer::GraphLayout;
use crate::metrics::MetricsReport;
use crate::model::GraphPineModel;
use crate::synth::generate;
use crate::trainer::{evaluate, predict_all, train};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.gpine";
pub const TRAINLOG_FILE: &str = "trainlog.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const STATS_FILE: &str = "stats.json";
pub const EXPLAIN_DIR: &str = "explain";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Parser)]
#[command(name = "graphpine", version, about = "Importance-propagation GNN for drug response")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a dataset bundle from raw TSV tables named in the config's `data` section.
    Prep(PrepArgs),
    /// Generate a planted-signal dataset bundle.
    Synth(SynthArgs),
    /// Train a model; writes checkpoint.gpine and trainlog.jsonl.
    Train(TrainArgs),
    /// Evaluate a checkpoint; writes metrics.json.
    Eval(EvalArgs),
    /// Write top-gene explanations for (drug, cell) pairs.
    Explain(ExplainArgs),
    /// Summarise how propagation changed importance; writes stats.json.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PrepArgs {
    #[command(flatten)]
    common: Common,
    /// Split seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    edges: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset bundle directory (defaults to the output directory).
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint file (defaults to <out>/checkpoint.gpine).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Which split to use.
    #[arg(long, default_value = "test")]
    split: Split,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    /// `DRUG:CELL`; repeatable. Without it every pair of the split is explained.
    #[arg(long = "pair")]
    pairs: Vec<String>,
    /// Genes kept per explanation.
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
}

/// Removes the lock file when dropped.
struct OutputLock(PathBuf);

impl OutputLock {
    fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    _lock: OutputLock,
}

fn context(common: &Common) -> Result<Ctx> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set `out`".into()))?;
    let lock = OutputLock::acquire(&out)?;
    Ok(Ctx { cfg, out, _lock: lock })
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn load_model(ctx: &Ctx, args: &ModelArgs, explicit_config: bool) -> Result<(DatasetBundle, GraphPineModel)> {
    let bundle = DatasetBundle::load(args.data.data.as_deref().unwrap_or(&ctx.out))?;
    let path = args.checkpoint.clone().unwrap_or_else(|| ctx.out.join(CHECKPOINT_FILE));
    let (model, manifest): (GraphPineModel, CheckpointManifest) = if explicit_config {
        load_checkpoint_expecting(&path, &ctx.cfg.model)?
    } else {
        load_checkpoint(&path)?
    };
    if manifest.graph_nodes != bundle.graph.node_count() {
        return Err(Error::DimensionMismatch {
            context: "graph node count".into(),
            expected: format!("{} (checkpoint)", manifest.graph_nodes),
            actual: format!("{} (dataset)", bundle.graph.node_count()),
        });
    }
    Ok((bundle, model))
}

#[derive(Serialize)]
struct MetricsFile {
    split: Split,
    mean_loss: f64,
    #[serde(flatten)]
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct StatsFile {
    split: Split,
    #[serde(flatten)]
    stats: PropagationStats,
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let say = |out: &mut dyn Write, msg: String| {
        let _ = writeln!(out, "{msg}");
    };
    match cli.command {
        Command::Prep(a) => {
            let mut ctx = context(&a.common)?;
            if let Some(s) = a.seed {
                ctx.cfg.prep.split.seed = s;
            }
            let inputs = ctx
                .cfg
                .data
                .clone()
                .ok_or_else(|| Error::Config("prep needs a `data` section in --config".into()))?;
            let bundle = prepare_bundle(&inputs, &ctx.cfg.prep)?;
            let m = bundle.write(&ctx.out, now_unix())?;
            say(
                out,
                format!(
                    "wrote {} ({} samples)",
                    ctx.out.join(MANIFEST_FILE).display(),
                    m.counts.samples
                ),
            );
        }
        Command::Synth(a) => {
            let mut ctx = context(&a.common)?;
            let s = &mut ctx.cfg.synth;
            s.nodes = a.nodes.unwrap_or(s.nodes);
            s.edges = a.edges.or(s.edges);
            s.samples = a.samples.unwrap_or(s.samples);
            s.seed = a.seed.unwrap_or(s.seed);
            let data = generate(&ctx.cfg.synth)?;
            let m = data.bundle.write(&ctx.out, now_unix())?;
            say(
                out,
                format!(
                    "wrote {} ({} samples)",
                    ctx.out.join(MANIFEST_FILE).display(),
                    m.counts.samples
                ),
            );
        }
        Command::Train(a) => {
            let mut ctx = context(&a.common)?;
            let t = &mut ctx.cfg.train;
            t.seed = a.seed.unwrap_or(t.seed);
            t.epochs = a.epochs.unwrap_or(t.epochs);
            ctx.cfg.validate()?;
            let bundle = DatasetBundle::load(a.data.data.as_deref().unwrap_or(&ctx.out))?;
            let model = GraphPineModel::new(ctx.cfg.model, ctx.cfg.train.seed)?;
            let (best, log) = train(
                &model,
                &bundle.dataset(Split::Train),
                &bundle.dataset(Split::Val),
                &ctx.cfg.train,
            )?;
            save_checkpoint(&best, bundle.graph.node_count(), &ctx.out.join(CHECKPOINT_FILE))?;
            log.write_jsonl(&ctx.out.join(TRAINLOG_FILE))?;
            let last = log.records.last().expect("at least one epoch");
            say(
                out,
                format!(
                    "{} epochs, best epoch {} (val loss {:.6})",
                    last.epoch, last.best_epoch, last.best_val_loss
                ),
            );
        }
        Command::Eval(a) => {
            let ctx = context(&a.common)?;
            let (bundle, model) = load_model(&ctx, &a.model, a.common.config.is_some())?;
            let e = evaluate(&model, &bundle.dataset(a.model.split))?;
            write_json(
                &ctx.out.join(METRICS_FILE),
                &MetricsFile {
                    split: a.model.split,
                    mean_loss: e.mean_loss,
                    metrics: e.metrics,
                },
            )?;
            say(
                out,
                format!("split       {}\nmean_loss   {:.6}", a.model.split, e.mean_loss),
            );
            let _ = write!(out, "{}", e.metrics.table());
        }
        Command::Explain(a) => {
            let ctx = context(&a.common)?;
            let (bundle, model) = load_model(&ctx, &a.model, a.common.config.is_some())?;
            let samples = if a.pairs.is_empty() {
                bundle.dataset(a.model.split).samples
            } else {
                a.pairs
                    .iter()
                    .map(|p| {
                        let (d, c) = p
                            .split_once(':')
                            .ok_or_else(|| Error::Config(format!("pair `{p}` is not DRUG:CELL")))?;
                        bundle.find(d, c).ok_or_else(|| {
                            if bundle.drugs.iter().any(|x| x == d) {
                                Error::UnknownCellLine(c.to_owned())
                            } else {
                                Error::UnknownDrug(d.to_owned())
                            }
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let layout = GraphLayout::new(&bundle.graph);
            let dir = ctx.out.join(EXPLAIN_DIR);
            for s in &samples {
                let pred = model.predict(s, &layout)?;
                export_explanation(s, &pred, &bundle.graph, a.k)?.write(&dir)?;
            }
            say(
                out,
                format!("wrote {} explanation(s) to {}", samples.len(), dir.display()),
            );
        }
        Command::Analyze(a) => {
            let ctx = context(&a.common)?;
            let (bundle, model) = load_model(&ctx, &a.model, a.common.config.is_some())?;
            let data = bundle.dataset(a.model.split);
            if data.is_empty() {
                return Err(Error::EmptyDataset(a.model.split.to_string()));
            }
            let layout = GraphLayout::new(&bundle.graph);
            let preds = predict_all(&model, &data, &layout)?;
            let pairs: Vec<(&[f64], &[f64])> = data
                .samples
                .iter()
                .zip(&preds)
                .map(|(s, p)| (&s.importance[..], &p.final_importance[..]))
                .collect();
            let stats = propagation_stats(&pairs)?;
            write_json(
                &ctx.out.join(STATS_FILE),
                &StatsFile {
                    split: a.model.split,
                    stats,
                },
            )?;
            say(out, serde_json::to_string_pretty(&stats).expect("plain data"));
        }
    }
    Ok(())
}

/// Exit code for an error: configuration problems are usage errors.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            let _ = writeln!(err, "error: {msg}");
            exit_code(&e)
        }
    }
}
