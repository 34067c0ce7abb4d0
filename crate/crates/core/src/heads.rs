//! Prediction-head variants and the per-query output contract they share.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotations::NUM_CLASSES;
use crate::error::{Error, Result};

/// Offset added before taking the log of a normalized time target.
pub const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadVariant {
    /// Actionness + softmax class + time, sequential pairing.
    #[serde(rename = "q-act")]
    QAct,
    /// Extra end-of-sequence class instead of actionness.
    #[serde(rename = "q-eos")]
    QEos,
    /// Extra background class instead of actionness.
    #[serde(rename = "q-bckg")]
    QBckg,
    /// Independent sigmoid per class, no actionness.
    #[serde(rename = "q-bce")]
    QBce,
    /// Q-Act with Hungarian pairing on predicted times.
    #[serde(rename = "q-hung-t")]
    QHungTime,
    /// Q-Act with Hungarian pairing on class scores.
    #[serde(rename = "q-hung-a")]
    QHungClass,
    /// One query per fixed bin of width `T_a / q`.
    #[serde(rename = "anchors")]
    Anchors,
}

impl HeadVariant {
    pub const ALL: [HeadVariant; 7] = [
        HeadVariant::QAct,
        HeadVariant::QEos,
        HeadVariant::QBckg,
        HeadVariant::QBce,
        HeadVariant::QHungTime,
        HeadVariant::QHungClass,
        HeadVariant::Anchors,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadVariant::QAct => "q-act",
            HeadVariant::QEos => "q-eos",
            HeadVariant::QBckg => "q-bckg",
            HeadVariant::QBce => "q-bce",
            HeadVariant::QHungTime => "q-hung-t",
            HeadVariant::QHungClass => "q-hung-a",
            HeadVariant::Anchors => "anchors",
        }
    }

    pub fn has_actionness(self) -> bool {
        matches!(
            self,
            HeadVariant::QAct | HeadVariant::QHungTime | HeadVariant::QHungClass | HeadVariant::Anchors
        )
    }

    /// Length of the class output: `C`, or `C + 1` with an EoS/background slot.
    pub fn class_outputs(self) -> usize {
        match self {
            HeadVariant::QEos | HeadVariant::QBckg => NUM_CLASSES + 1,
            _ => NUM_CLASSES,
        }
    }

    /// Softmax-normalized class output (everything except Q-BCE).
    pub fn softmax_classes(self) -> bool {
        self != HeadVariant::QBce
    }
}

impl fmt::Display for HeadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "qact" => Ok(HeadVariant::QAct),
            "qeos" => Ok(HeadVariant::QEos),
            "qbckg" => Ok(HeadVariant::QBckg),
            "qbce" => Ok(HeadVariant::QBce),
            "qhungt" | "qhungtime" => Ok(HeadVariant::QHungTime),
            "qhunga" | "qhungclass" => Ok(HeadVariant::QHungClass),
            "anchors" => Ok(HeadVariant::Anchors),
            _ => Err(Error::Config(format!("unknown head variant {s:?}"))),
        }
    }
}

/// Output of one query slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutput {
    /// Probability that the slot holds any action; absent for heads without
    /// an actionness component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actionness: Option<f64>,
    pub class_probs: Vec<f64>,
    /// Raw time output in log space.
    pub time: f64,
}

impl SlotOutput {
    pub fn validate(&self, variant: HeadVariant) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidOutput(m));
        match (variant.has_actionness(), self.actionness) {
            (true, None) => return bad(format!("{variant} outputs need an actionness value")),
            (true, Some(p)) if !(0.0..=1.0).contains(&p) => return bad(format!("actionness {p} outside [0, 1]")),
            _ => {}
        }
        let expected = variant.class_outputs();
        if self.class_probs.len() != expected {
            return bad(format!(
                "{variant} expects {expected} class outputs, got {}",
                self.class_probs.len()
            ));
        }
        if self.class_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("class probabilities must lie in [0, 1]".into());
        }
        if variant.softmax_classes() {
            let sum: f64 = self.class_probs.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("class distribution sums to {sum}, expected 1"));
            }
        }
        if !self.time.is_finite() {
            return bad(format!("time output {} is not finite", self.time));
        }
        Ok(())
    }
}

/// Log-space time target for a normalized position `tau` in `[0, 1)`.
pub fn encode_time(tau: f64) -> f64 {
    (tau + TIME_EPS).ln()
}

/// Inverse of [`encode_time`], clamped to `[0, 1]`. The flag reports clamping.
pub fn decode_time(raw: f64) -> (f64, bool) {
    let tau = raw.exp() - TIME_EPS;
    if tau < 0.0 {
        (0.0, true)
    } else if tau > 1.0 {
        (1.0, true)
    } else {
        (tau, false)
    }
}
