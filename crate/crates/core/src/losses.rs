//! Scalar reference implementations of the training losses.
//!
//! Every loss is a mean over the slots (or frames) that contribute to it,
//! and probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.

use serde::{Deserialize, Serialize};

use crate::annotations::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::heads::{encode_time, SlotOutput};
use crate::targets::{Assignment, ClassTarget};
use crate::windowing::{BenchConfig, SegGrid};

pub const PROB_EPS: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn bce(p: f64, label: bool) -> f64 {
    let p = clamp(p);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn check_lengths(outputs: &[SlotOutput], assignment: &Assignment) -> Result<()> {
    if outputs.len() != assignment.slots.len() {
        return Err(Error::InvalidOutput(format!(
            "{} slot outputs for {} assigned slots",
            outputs.len(),
            assignment.slots.len()
        )));
    }
    for o in outputs {
        o.validate(assignment.variant)?;
    }
    Ok(())
}

/// Class weight for a target index. Indices past the supplied weights (the
/// EoS/background class) weigh 1.
fn weight_at(weights: &[f64], index: usize) -> f64 {
    weights.get(index).copied().unwrap_or(1.0)
}

/// Binary cross-entropy on actionness: paired slots are positives, every
/// other supervised slot a negative. Zero for heads without actionness.
pub fn loss_detection(outputs: &[SlotOutput], assignment: &Assignment) -> Result<f64> {
    check_lengths(outputs, assignment)?;
    if !assignment.variant.has_actionness() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut n = 0;
    for (o, t) in outputs.iter().zip(&assignment.slots) {
        if !t.supervised {
            continue;
        }
        let p = o.actionness.expect("validated");
        sum += bce(p, t.actionness == 1);
        n += 1;
    }
    Ok(mean(sum, n))
}

/// Weighted cross-entropy against the slot's class target. Q-BCE targets
/// use per-class binary cross-entropy averaged over classes.
pub fn loss_class(outputs: &[SlotOutput], assignment: &Assignment, weights: &[f64]) -> Result<f64> {
    check_lengths(outputs, assignment)?;
    let mut sum = 0.0;
    let mut n = 0;
    for (o, t) in outputs.iter().zip(&assignment.slots) {
        if !t.supervised {
            continue;
        }
        match &t.class {
            ClassTarget::Ignore => {}
            ClassTarget::Index(k) => {
                let p = *o
                    .class_probs
                    .get(*k)
                    .ok_or_else(|| Error::InvalidOutput(format!("no class output for target {k}")))?;
                sum += weight_at(weights, *k) * -clamp(p).ln();
                n += 1;
            }
            ClassTarget::MultiHot(hot) => {
                let per_class: f64 = hot
                    .iter()
                    .zip(&o.class_probs)
                    .enumerate()
                    .map(|(c, (&y, &p))| weight_at(weights, c) * bce(p, y == 1))
                    .sum();
                sum += per_class / hot.len() as f64;
                n += 1;
            }
        }
    }
    Ok(mean(sum, n))
}

/// Mean squared error in log-time space over paired slots.
pub fn loss_time(outputs: &[SlotOutput], assignment: &Assignment, cfg: &BenchConfig) -> Result<f64> {
    check_lengths(outputs, assignment)?;
    let mut sum = 0.0;
    let mut n = 0;
    for (o, t) in outputs.iter().zip(&assignment.slots) {
        let Some(tau) = t.time else { continue };
        if !(0.0..1.0).contains(&tau) {
            return Err(Error::TimeOutOfWindow {
                time_s: tau * cfg.anticipation_s(),
                window_s: cfg.anticipation_s(),
            });
        }
        let d = o.time - encode_time(tau);
        sum += d * d;
        n += 1;
    }
    Ok(mean(sum, n))
}

/// Weighted cross-entropy over context frames. Each frame distribution has
/// `C + 1` entries laid out like the grid labels (0 = background). `weights`
/// may hold `C` class weights (background weighs 1) or `C + 1` entries.
pub fn loss_segmentation(frame_probs: &[Vec<f64>], grid: &SegGrid, weights: &[f64]) -> Result<f64> {
    if frame_probs.len() != grid.labels.len() {
        return Err(Error::InvalidOutput(format!(
            "{} frame distributions for {} frames",
            frame_probs.len(),
            grid.labels.len()
        )));
    }
    let mut sum = 0.0;
    for (probs, &label) in frame_probs.iter().zip(&grid.labels) {
        if probs.len() != NUM_CLASSES + 1 {
            return Err(Error::InvalidOutput(format!(
                "frame distribution has {} entries, expected {}",
                probs.len(),
                NUM_CLASSES + 1
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidOutput(format!("frame distribution sums to {total}")));
        }
        let label = usize::from(label);
        let w = match (weights.len(), label) {
            (n, _) if n == NUM_CLASSES + 1 => weights[label],
            (_, 0) => 1.0,
            _ => weight_at(weights, label - 1),
        };
        sum += w * -clamp(probs[label]).ln();
    }
    Ok(mean(sum, grid.labels.len()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub detection: f64,
    pub class: f64,
    pub time: f64,
    pub segmentation: f64,
}

impl LossParts {
    /// `λ_D L_D + λ_C L_C + λ_T L_T`.
    pub fn anticipation(&self, cfg: &BenchConfig) -> f64 {
        cfg.lambda_detection * self.detection + cfg.lambda_class * self.class + cfg.lambda_time * self.time
    }
}

/// Anticipation loss plus `λ_S` times the segmentation loss.
pub fn total_loss(parts: &LossParts, cfg: &BenchConfig) -> f64 {
    parts.anticipation(cfg) + cfg.lambda_segmentation * parts.segmentation
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::ActionClass;
    use crate::heads::HeadVariant;
    use crate::targets::assign_for_variant;
    use crate::windowing::ClipAction;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    fn one_hot(k: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        v
    }

    fn setup(variant: HeadVariant, q: usize) -> (Assignment, BenchConfig) {
        let cfg = BenchConfig::default().with_queries(q).unwrap();
        let gt = [
            ClipAction {
                class: ActionClass::Drive,
                offset_ms: 1000,
            },
            ClipAction {
                class: ActionClass::Shot,
                offset_ms: 3500,
            },
        ];
        (assign_for_variant(variant, &gt, None, &cfg).unwrap(), cfg)
    }

    #[test]
    fn detection_at_one_half_is_ln2() {
        let (a, _) = setup(HeadVariant::QAct, 8);
        let outs = vec![
            SlotOutput {
                actionness: Some(0.5),
                class_probs: uniform(NUM_CLASSES),
                time: 0.0
            };
            8
        ];
        assert_eq!(loss_detection(&outs, &a).unwrap(), std::f64::consts::LN_2);
    }

    #[test]
    fn perfect_detection_is_near_zero() {
        let (a, _) = setup(HeadVariant::QAct, 2);
        let outs = vec![
            SlotOutput {
                actionness: Some(1.0 - PROB_EPS),
                class_probs: uniform(NUM_CLASSES),
                time: 0.0
            };
            2
        ];
        assert!(loss_detection(&outs, &a).unwrap() < 1e-6);
    }

    #[test]
    fn uniform_class_is_weight_times_ln10() {
        let (a, _) = setup(HeadVariant::QAct, 8);
        let outs = vec![
            SlotOutput {
                actionness: Some(0.5),
                class_probs: uniform(NUM_CLASSES),
                time: 0.0
            };
            8
        ];
        let weights = [2.5; NUM_CLASSES];
        let l = loss_class(&outs, &a, &weights).unwrap();
        assert!((l - 2.5 * 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exact_class_is_zero_up_to_clamp() {
        let (a, _) = setup(HeadVariant::QAct, 2);
        let outs = vec![
            SlotOutput {
                actionness: Some(0.5),
                class_probs: one_hot(1, NUM_CLASSES),
                time: 0.0,
            },
            SlotOutput {
                actionness: Some(0.5),
                class_probs: one_hot(8, NUM_CLASSES),
                time: 0.0,
            },
        ];
        let l = loss_class(&outs, &a, &[1.0; NUM_CLASSES]).unwrap();
        assert!(l < 1e-6);
    }

    #[test]
    fn time_loss_zero_at_target_and_without_pairs() {
        let (a, cfg) = setup(HeadVariant::QAct, 3);
        let outs = vec![
            SlotOutput {
                actionness: Some(0.5),
                class_probs: uniform(NUM_CLASSES),
                time: encode_time(0.2),
            },
            SlotOutput {
                actionness: Some(0.5),
                class_probs: uniform(NUM_CLASSES),
                time: encode_time(0.7),
            },
            SlotOutput {
                actionness: Some(0.5),
                class_probs: uniform(NUM_CLASSES),
                time: 3.0,
            },
        ];
        assert_eq!(loss_time(&outs, &a, &cfg).unwrap(), 0.0);

        let empty = assign_for_variant(HeadVariant::QAct, &[], None, &cfg).unwrap();
        assert_eq!(loss_time(&outs, &empty, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn eos_slots_past_the_first_get_no_loss() {
        let (a, _) = setup(HeadVariant::QEos, 4);
        let mut outs = vec![
            SlotOutput {
                actionness: None,
                class_probs: one_hot(1, NUM_CLASSES + 1),
                time: 0.0,
            },
            SlotOutput {
                actionness: None,
                class_probs: one_hot(8, NUM_CLASSES + 1),
                time: 0.0,
            },
            SlotOutput {
                actionness: None,
                class_probs: one_hot(NUM_CLASSES, NUM_CLASSES + 1),
                time: 0.0,
            },
            SlotOutput {
                actionness: None,
                class_probs: one_hot(0, NUM_CLASSES + 1),
                time: 0.0,
            },
        ];
        let w = [1.0; NUM_CLASSES];
        assert!(loss_class(&outs, &a, &w).unwrap() < 1e-6);
        assert_eq!(loss_detection(&outs, &a).unwrap(), 0.0);
        outs[2].class_probs = uniform(NUM_CLASSES + 1);
        assert!(loss_class(&outs, &a, &w).unwrap() > 0.5);
    }

    #[test]
    fn uniform_segmentation_is_ln11() {
        let grid = SegGrid {
            labels: vec![0, 0, 3, 3, 0],
        };
        let probs = vec![uniform(NUM_CLASSES + 1); 5];
        let l = loss_segmentation(&probs, &grid, &[1.0; NUM_CLASSES]).unwrap();
        assert!((l - 11f64.ln()).abs() < 1e-12);
        let perfect: Vec<Vec<f64>> = grid
            .labels
            .iter()
            .map(|&k| one_hot(k as usize, NUM_CLASSES + 1))
            .collect();
        assert!(loss_segmentation(&perfect, &grid, &[1.0; NUM_CLASSES]).unwrap() < 1e-6);
        assert!(loss_segmentation(&probs[..4], &grid, &[]).is_err());
    }

    #[test]
    fn total_loss_uses_default_lambdas() {
        let cfg = BenchConfig::default();
        let ones = LossParts {
            detection: 1.0,
            class: 1.0,
            time: 1.0,
            segmentation: 1.0,
        };
        assert_eq!(total_loss(&ones, &cfg), 13.0);
        assert_eq!(total_loss(&LossParts::default(), &cfg), 0.0);
    }

    #[test]
    fn mismatched_slot_count_is_an_error() {
        let (a, _) = setup(HeadVariant::QAct, 3);
        let outs = vec![
            SlotOutput {
                actionness: Some(0.5),
                class_probs: uniform(NUM_CLASSES),
                time: 0.0
            };
            2
        ];
        assert!(loss_detection(&outs, &a).is_err());
    }
}
