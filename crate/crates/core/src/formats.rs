//! On-disk formats exchanged by the CLI commands, and the record builders
//! behind `targets` and `loss-check`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotations::{ActionClass, ClassCounts, GameAnnotations, Split, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::heads::{HeadVariant, SlotOutput};
use crate::losses::{loss_class, loss_detection, loss_segmentation, loss_time, total_loss, LossParts};
use crate::metrics::{canonical_order, Prediction};
use crate::targets::{assign_for_variant, SlotTarget};
use crate::windowing::{make_train_clips, segmentation_targets, BenchConfig, ClipAction, EvalClip, TrainClip};

pub const EVAL_CLIPS_FORMAT: &str = "anticipation-eval-clips/1";
pub const PREDICTIONS_FORMAT: &str = "anticipation-predictions/1";
pub const TARGETS_FORMAT: &str = "anticipation-targets/1";

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

/// Pretty JSON with a trailing newline, to `path` or stdout.
pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: "serialize".into(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalClipsFile {
    pub format: String,
    pub anticipation_ms: u64,
    pub eval_context_ms: u64,
    /// Ordered by (game_id, half, anticipation_start_ms).
    pub clips: Vec<EvalClip>,
}

impl EvalClipsFile {
    pub fn new(cfg: &BenchConfig, mut clips: Vec<EvalClip>) -> Self {
        clips.sort_by(|a, b| {
            (a.game_id.as_str(), a.half, a.anticipation_start_ms).cmp(&(
                b.game_id.as_str(),
                b.half,
                b.anticipation_start_ms,
            ))
        });
        EvalClipsFile {
            format: EVAL_CLIPS_FORMAT.into(),
            anticipation_ms: cfg.anticipation_ms,
            eval_context_ms: cfg.eval_context_ms,
            clips,
        }
    }

    pub fn anticipation_s(&self) -> f64 {
        self.anticipation_ms as f64 / 1000.0
    }

    pub fn gt_total(&self) -> usize {
        self.clips.iter().map(|c| c.gt_actions.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsFile {
    #[serde(default = "predictions_format")]
    pub format: String,
    pub predictions: Vec<Prediction>,
}

fn predictions_format() -> String {
    PREDICTIONS_FORMAT.into()
}

impl PredictionsFile {
    pub fn new(mut predictions: Vec<Prediction>) -> Self {
        predictions.sort_by(canonical_order);
        PredictionsFile {
            format: PREDICTIONS_FORMAT.into(),
            predictions,
        }
    }
}

/// Class counts per split, keyed by split name then label. Labels of
/// excluded classes are accepted and ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCountsFile {
    pub splits: BTreeMap<String, BTreeMap<String, u64>>,
}

impl ClassCountsFile {
    pub fn counts(&self) -> Result<BTreeMap<Split, ClassCounts>> {
        let mut out = BTreeMap::new();
        for (split, row) in &self.splits {
            let split: Split = split.parse()?;
            let mut counts = [0u64; NUM_CLASSES];
            for (label, &n) in row {
                let class: ActionClass = label.parse()?;
                if let Some(k) = class.index() {
                    counts[k] += n;
                }
            }
            out.insert(split, counts);
        }
        Ok(out)
    }
}

pub fn train_clip_id(clip: &TrainClip) -> String {
    format!("{}|{}|{}", clip.game_id, clip.half, clip.context_start_ms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub clip_id: String,
    pub game_id: String,
    pub half: u8,
    pub context_start_ms: u64,
    pub future_actions: Vec<ClipAction>,
    pub slots: Vec<SlotTarget>,
    pub unassigned: usize,
    /// Dilated per-frame labels over the context (0 = background).
    pub segmentation: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetsFile {
    pub format: String,
    pub variant: HeadVariant,
    pub config: BenchConfig,
    pub clips: Vec<TargetRecord>,
}

/// Slot outputs of a model keyed by training clip id, used by the
/// Hungarian variants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputsFile {
    pub outputs: BTreeMap<String, Vec<SlotOutput>>,
}

/// Training clips of every game with the targets of `variant`.
pub fn build_targets(
    games: &[GameAnnotations],
    variant: HeadVariant,
    cfg: &BenchConfig,
    outputs: Option<&OutputsFile>,
) -> Result<TargetsFile> {
    let mut games: Vec<&GameAnnotations> = games.iter().collect();
    games.sort_by(|a, b| a.game_id.cmp(&b.game_id));
    let mut clips = Vec::new();
    for game in games {
        for clip in make_train_clips(game, cfg) {
            let clip_id = train_clip_id(&clip);
            let slot_outputs = outputs.and_then(|o| o.outputs.get(&clip_id)).map(Vec::as_slice);
            let assignment = assign_for_variant(variant, &clip.future_actions, slot_outputs, cfg)?;
            let grid = segmentation_targets(&clip, cfg);
            clips.push(TargetRecord {
                clip_id,
                game_id: clip.game_id,
                half: clip.half,
                context_start_ms: clip.context_start_ms,
                future_actions: clip.future_actions,
                slots: assignment.slots,
                unassigned: assignment.unassigned,
                segmentation: grid.labels,
            });
        }
    }
    Ok(TargetsFile {
        format: TARGETS_FORMAT.into(),
        variant,
        config: cfg.clone(),
        clips,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSample {
    /// Ground truth of the anticipation window, sorted by offset.
    pub future_actions: Vec<ClipAction>,
    pub outputs: Vec<SlotOutput>,
    /// Context actions for the segmentation target, offsets from context start.
    #[serde(default)]
    pub context_actions: Vec<ClipAction>,
    /// Per-frame `(C + 1)` distributions; the segmentation loss is skipped
    /// when absent.
    #[serde(default)]
    pub frame_probs: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCheckInput {
    pub variant: HeadVariant,
    #[serde(default)]
    pub config: Option<BenchConfig>,
    /// Class weights; uniform when absent.
    #[serde(default)]
    pub class_weights: Option<Vec<f64>>,
    pub samples: Vec<LossSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleLosses {
    #[serde(flatten)]
    pub parts: LossParts,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCheckReport {
    pub variant: HeadVariant,
    pub samples: Vec<SampleLosses>,
    /// Component means over samples.
    pub mean: LossParts,
    pub total: f64,
}

/// Recomputes every loss component for each sample.
pub fn loss_check(input: &LossCheckInput) -> Result<LossCheckReport> {
    let mut cfg = input.config.clone().unwrap_or_default();
    if input.config.is_none() {
        cfg.queries = input.samples.first().map_or(cfg.queries, |s| s.outputs.len());
    }
    cfg.validate()?;
    let weights = input.class_weights.clone().unwrap_or_else(|| vec![1.0; NUM_CLASSES]);
    let mut samples = Vec::with_capacity(input.samples.len());
    let mut sum = LossParts::default();
    for s in &input.samples {
        let assignment = assign_for_variant(input.variant, &s.future_actions, Some(&s.outputs), &cfg)?;
        let segmentation = match &s.frame_probs {
            Some(frames) => {
                let clip = TrainClip {
                    game_id: String::new(),
                    half: 1,
                    context_start_ms: 0,
                    context_ms: cfg.context_ms,
                    context_actions: s.context_actions.clone(),
                    future_actions: Vec::new(),
                };
                loss_segmentation(frames, &segmentation_targets(&clip, &cfg), &weights)?
            }
            None => 0.0,
        };
        let parts = LossParts {
            detection: loss_detection(&s.outputs, &assignment)?,
            class: loss_class(&s.outputs, &assignment, &weights)?,
            time: loss_time(&s.outputs, &assignment, &cfg)?,
            segmentation,
        };
        sum.detection += parts.detection;
        sum.class += parts.class;
        sum.time += parts.time;
        sum.segmentation += parts.segmentation;
        samples.push(SampleLosses {
            parts,
            total: total_loss(&parts, &cfg),
        });
    }
    let n = input.samples.len().max(1) as f64;
    let mean = LossParts {
        detection: sum.detection / n,
        class: sum.class / n,
        time: sum.time / n,
        segmentation: sum.segmentation / n,
    };
    Ok(LossCheckReport {
        variant: input.variant,
        samples,
        mean,
        total: total_loss(&mean, &cfg),
    })
}
