use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use anticipation_bench::annotations::{class_stats, filter_classes, parse_annotations, GameAnnotations, Split};
use anticipation_bench::baselines::{run_baseline, BaselineKind, BaselineSpec};
use anticipation_bench::formats::{
    build_targets, loss_check, read_json, write_json, write_text, ClassCountsFile, EvalClipsFile, LossCheckInput,
    OutputsFile, PredictionsFile,
};
use anticipation_bench::heads::HeadVariant;
use anticipation_bench::metrics::{decode_predictions, evaluate, Tolerance};
use anticipation_bench::synth::{raw_json, synth_game, SynthSpec};
use anticipation_bench::windowing::{make_eval_clips, BenchConfig};
use anticipation_bench::ActionClass;

#[derive(Parser)]
#[command(
    name = "anticipation",
    version,
    about = "Football action anticipation benchmark tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct WindowArgs {
    /// Context window in seconds.
    #[arg(long, default_value_t = 5.0)]
    tc: f64,
    /// Anticipation window in seconds.
    #[arg(long, default_value_t = 5.0)]
    ta: f64,
    #[arg(long, default_value_t = 6.25)]
    fps: f64,
    /// Query slots; defaults to 8 per 5 s of anticipation window.
    #[arg(long)]
    queries: Option<usize>,
}

impl WindowArgs {
    fn config(&self) -> Result<BenchConfig> {
        let mut cfg = BenchConfig::for_anticipation(self.ta)?
            .with_context(self.tc)?
            .with_fps(self.fps)?;
        if let Some(q) = self.queries {
            cfg = cfg.with_queries(q)?;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Cut annotated games into evaluation clips.
    Prepare {
        #[arg(long, num_args = 1.., required = true)]
        annotations: Vec<PathBuf>,
        /// Only keep games of this split.
        #[arg(long)]
        split: Option<String>,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-split class counts and inverse-frequency weights.
    Stats {
        #[arg(long, num_args = 1.., required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Training clips with per-slot targets for a prediction head.
    Targets {
        #[arg(long, num_args = 1.., required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long)]
        variant: String,
        #[command(flatten)]
        window: WindowArgs,
        /// Slot outputs keyed by training clip id (Hungarian variants).
        #[arg(long)]
        outputs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute loss components for model outputs and their ground truth.
    LossCheck {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode slot outputs (keyed by evaluation clip id) into predictions.
    Decode {
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        variant: String,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prediction file against evaluation clips.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "1,2,3,4,5,inf")]
        deltas: String,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write predictions from a synthetic baseline.
    Baseline {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        kind: BaselineKind,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 0.0)]
        drop_prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long, default_value_t = 1)]
        prior_times: usize,
        #[arg(long, default_value_t = 8)]
        per_clip: usize,
        /// Training annotations for the prior baseline.
        #[arg(long, num_args = 1..)]
        train: Vec<PathBuf>,
        /// Class counts file for the prior baseline (alternative to --train).
        #[arg(long)]
        class_counts: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic annotation files.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        /// Games as `<id>:<split>`.
        #[arg(long, num_args = 1.., required = true)]
        game: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 240.0)]
        half_duration_s: f64,
        /// Write the raw upper-case label layout instead of canonical names.
        #[arg(long)]
        raw: bool,
    },
}

fn load_games(paths: &[PathBuf]) -> Result<Vec<GameAnnotations>> {
    let mut games = paths
        .iter()
        .map(|p| parse_annotations(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    games.sort_by(|a, b| a.game_id.cmp(&b.game_id));
    for w in games.windows(2) {
        if w[0].game_id == w[1].game_id {
            bail!("game {:?} appears twice", w[0].game_id);
        }
    }
    Ok(games)
}

fn variant(s: &str) -> Result<HeadVariant> {
    Ok(s.parse()?)
}

fn prepare(annotations: &[PathBuf], split: Option<&str>, window: &WindowArgs, out: Option<&Path>) -> Result<()> {
    let cfg = window.config()?;
    let split: Option<Split> = split.map(str::parse).transpose()?;
    let mut clips = Vec::new();
    for game in load_games(annotations)? {
        if split.is_some_and(|s| s != game.split) {
            continue;
        }
        clips.extend(make_eval_clips(&filter_classes(&game), &cfg));
    }
    let file = EvalClipsFile::new(&cfg, clips);
    eprintln!("{} clips, {} ground-truth actions", file.clips.len(), file.gt_total());
    Ok(write_json(out, &file)?)
}

fn stats(annotations: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let games: Vec<_> = load_games(annotations)?.iter().map(filter_classes).collect();
    let stats = class_stats(&games)?;
    let mut splits = BTreeMap::new();
    for (split, counts) in &stats.counts {
        let row: BTreeMap<String, u64> = ActionClass::RETAINED
            .iter()
            .zip(counts)
            .map(|(c, &n)| (c.name().to_string(), n))
            .collect();
        splits.insert(split.name().to_string(), row);
    }
    let weights: BTreeMap<String, f64> = ActionClass::RETAINED
        .iter()
        .zip(stats.weights_f64())
        .map(|(c, w)| (c.name().to_string(), w))
        .collect();
    let doc = serde_json::json!({ "splits": splits, "weights": weights });
    Ok(write_json(out, &doc)?)
}

fn decode(outputs: &Path, variant_name: &str, window: &WindowArgs, out: Option<&Path>) -> Result<()> {
    let cfg = window.config()?;
    let v = variant(variant_name)?;
    let file: OutputsFile = read_json(outputs)?;
    let mut predictions = Vec::new();
    let mut clamped = 0;
    for (clip_id, slots) in &file.outputs {
        let d = decode_predictions(clip_id, slots, v, &cfg).with_context(|| format!("clip {clip_id}"))?;
        clamped += d.clamped;
        predictions.extend(d.predictions);
    }
    if clamped > 0 {
        eprintln!("warning: {clamped} slot times decoded outside the window were clamped");
    }
    Ok(write_json(out, &PredictionsFile::new(predictions))?)
}

fn run_evaluate(gt: &Path, pred: &Path, deltas: &str, format: ReportFormat, out: Option<&Path>) -> Result<()> {
    let clips: EvalClipsFile = read_json(gt)?;
    let preds: PredictionsFile = read_json(pred)?;
    let tolerances = Tolerance::parse_list(deltas)?;
    let report = evaluate(&preds.predictions, &clips.clips, clips.anticipation_s(), &tolerances)?;
    let text = match format {
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Md => report.to_markdown(),
    };
    Ok(write_text(out, &text)?)
}

fn synth(out_dir: &Path, games: &[String], seed: u64, half_duration_s: f64, raw: bool) -> Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let spec = SynthSpec {
        seed,
        half_duration_ms: (half_duration_s * 1000.0).round() as u64,
        ..SynthSpec::default()
    };
    for g in games {
        let (id, split) = g.split_once(':').unwrap_or((g.as_str(), "test"));
        let game = synth_game(id, split.parse()?, &spec)?;
        let doc = if raw { raw_json(&game) } else { game.to_json() };
        write_json(Some(&out_dir.join(format!("{id}.json"))), &doc)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Prepare {
            annotations,
            split,
            window,
            out,
        } => prepare(&annotations, split.as_deref(), &window, out.as_deref()),
        Command::Stats { annotations, out } => stats(&annotations, out.as_deref()),
        Command::Targets {
            annotations,
            variant: v,
            window,
            outputs,
            out,
        } => {
            let cfg = window.config()?;
            let games: Vec<_> = load_games(&annotations)?.iter().map(filter_classes).collect();
            let outputs: Option<OutputsFile> = outputs.as_deref().map(read_json).transpose()?;
            let file = build_targets(&games, variant(&v)?, &cfg, outputs.as_ref())?;
            Ok(write_json(out.as_deref(), &file)?)
        }
        Command::LossCheck { input, out } => {
            let input: LossCheckInput = read_json(&input)?;
            Ok(write_json(out.as_deref(), &loss_check(&input)?)?)
        }
        Command::Decode {
            outputs,
            variant: v,
            window,
            out,
        } => decode(&outputs, &v, &window, out.as_deref()),
        Command::Evaluate {
            gt,
            pred,
            deltas,
            format,
            out,
        } => run_evaluate(&gt, &pred, &deltas, format, out.as_deref()),
        Command::Baseline {
            gt,
            kind,
            noise_std,
            drop_prob,
            seed,
            top_k,
            prior_times,
            per_clip,
            train,
            class_counts,
            out,
        } => {
            let clips: EvalClipsFile = read_json(&gt)?;
            let spec = BaselineSpec {
                kind,
                noise_std_s: noise_std,
                drop_prob,
                seed,
                top_k,
                prior_times,
                per_clip,
            };
            let counts = if let Some(path) = class_counts {
                let file: ClassCountsFile = read_json(&path)?;
                Some(
                    file.counts()?
                        .get(&Split::Train)
                        .copied()
                        .context("class counts have no train split")?,
                )
            } else if !train.is_empty() {
                let games: Vec<_> = load_games(&train)?.iter().map(filter_classes).collect();
                Some(class_stats(&games)?.split_counts(Split::Train))
            } else {
                None
            };
            let preds = run_baseline(&spec, &clips.clips, counts.as_ref(), clips.anticipation_s())?;
            Ok(write_json(out.as_deref(), &PredictionsFile::new(preds))?)
        }
        Command::Synth {
            out_dir,
            game,
            seed,
            half_duration_s,
            raw,
        } => synth(&out_dir, &game, seed, half_duration_s, raw),
    }
}
