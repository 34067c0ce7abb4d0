//! Synthetic predictors used as sanity reference points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotations::{ActionClass, ClassCounts, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::{canonical_order, Prediction};
use crate::rng::SplitMix64;
use crate::windowing::EvalClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Oracle,
    Prior,
    Random,
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(BaselineKind::Oracle),
            "prior" => Ok(BaselineKind::Prior),
            "random" => Ok(BaselineKind::Random),
            _ => Err(Error::Config(format!("unknown baseline kind {s:?}"))),
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Oracle => "oracle",
            BaselineKind::Prior => "prior",
            BaselineKind::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    /// Gaussian time noise added by the oracle.
    pub noise_std_s: f64,
    /// Probability that the oracle omits a ground-truth action.
    pub drop_prob: f64,
    pub seed: u64,
    /// Classes emitted per clip by the prior predictor.
    pub top_k: usize,
    /// Evenly spaced times per emitted class for the prior predictor.
    pub prior_times: usize,
    /// Predictions per clip for the random predictor.
    pub per_clip: usize,
}

impl BaselineSpec {
    pub fn new(kind: BaselineKind) -> Self {
        BaselineSpec {
            kind,
            noise_std_s: 0.0,
            drop_prob: 0.0,
            seed: 0,
            top_k: NUM_CLASSES,
            prior_times: 1,
            per_clip: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std_s.is_finite() && self.noise_std_s >= 0.0) {
            return Err(Error::Config(format!(
                "noise std must be >= 0, got {}",
                self.noise_std_s
            )));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(Error::Config(format!(
                "drop probability must lie in [0, 1], got {}",
                self.drop_prob
            )));
        }
        if self.top_k == 0 || self.top_k > NUM_CLASSES {
            return Err(Error::Config(format!("top_k must lie in 1..={NUM_CLASSES}")));
        }
        Ok(())
    }
}

fn sorted_clips(clips: &[EvalClip]) -> Vec<&EvalClip> {
    let mut v: Vec<&EvalClip> = clips.iter().collect();
    v.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    v
}

fn finish(mut preds: Vec<Prediction>) -> Vec<Prediction> {
    preds.sort_by(canonical_order);
    preds
}

/// Emits every ground-truth action, jittered by `N(0, noise_std_s)` and
/// clamped to the window, with confidence 1. Each action is dropped with
/// probability `drop_prob`. Two draws per action: drop, then noise.
pub fn oracle_predictor(clips: &[EvalClip], spec: &BaselineSpec, anticipation_s: f64) -> Result<Vec<Prediction>> {
    spec.validate()?;
    let mut preds = Vec::new();
    for clip in sorted_clips(clips) {
        let mut rng = SplitMix64::for_key(spec.seed, &clip.clip_id);
        for a in &clip.gt_actions {
            let dropped = rng.next_f64() < spec.drop_prob;
            let noise = rng.normal() * spec.noise_std_s;
            if dropped {
                continue;
            }
            preds.push(Prediction {
                clip_id: clip.clip_id.clone(),
                class: a.class,
                time_s: (a.offset_s() + noise).clamp(0.0, anticipation_s),
                confidence: 1.0,
            });
        }
    }
    Ok(finish(preds))
}

/// Emits the `top_k` most frequent training classes in every clip, each at
/// `prior_times` evenly spaced bin centres, with confidence `count / max_count`.
pub fn prior_predictor(
    train_counts: &ClassCounts,
    clips: &[EvalClip],
    spec: &BaselineSpec,
    anticipation_s: f64,
) -> Result<Vec<Prediction>> {
    spec.validate()?;
    let max = *train_counts.iter().max().unwrap_or(&0);
    if max == 0 {
        return Err(Error::Config("prior predictor needs non-empty training counts".into()));
    }
    let mut ranked: Vec<usize> = (0..NUM_CLASSES).collect();
    ranked.sort_by(|&a, &b| train_counts[b].cmp(&train_counts[a]).then(a.cmp(&b)));
    let slots = spec.prior_times.max(1);
    let step = anticipation_s / slots as f64;
    let mut preds = Vec::new();
    for clip in sorted_clips(clips) {
        for &k in ranked.iter().take(spec.top_k) {
            let confidence = train_counts[k] as f64 / max as f64;
            for j in 0..slots {
                preds.push(Prediction {
                    clip_id: clip.clip_id.clone(),
                    class: ActionClass::RETAINED[k],
                    time_s: (j as f64 + 0.5) * step,
                    confidence,
                });
            }
        }
    }
    Ok(finish(preds))
}

/// `per_clip` predictions per clip with uniform class, time and confidence
/// (three draws each, in that order).
pub fn random_predictor(clips: &[EvalClip], spec: &BaselineSpec, anticipation_s: f64) -> Result<Vec<Prediction>> {
    spec.validate()?;
    let mut preds = Vec::new();
    for clip in sorted_clips(clips) {
        let mut rng = SplitMix64::for_key(spec.seed, &clip.clip_id);
        for _ in 0..spec.per_clip {
            let class = ActionClass::RETAINED[rng.below(NUM_CLASSES)];
            let time_s = rng.next_f64() * anticipation_s;
            let confidence = rng.next_f64();
            preds.push(Prediction {
                clip_id: clip.clip_id.clone(),
                class,
                time_s,
                confidence,
            });
        }
    }
    Ok(finish(preds))
}

/// Dispatches on `spec.kind`; `train_counts` is only read by the prior.
pub fn run_baseline(
    spec: &BaselineSpec,
    clips: &[EvalClip],
    train_counts: Option<&ClassCounts>,
    anticipation_s: f64,
) -> Result<Vec<Prediction>> {
    match spec.kind {
        BaselineKind::Oracle => oracle_predictor(clips, spec, anticipation_s),
        BaselineKind::Random => random_predictor(clips, spec, anticipation_s),
        BaselineKind::Prior => {
            let counts =
                train_counts.ok_or_else(|| Error::Config("prior baseline needs training class counts".into()))?;
            prior_predictor(counts, clips, spec, anticipation_s)
        }
    }
}
