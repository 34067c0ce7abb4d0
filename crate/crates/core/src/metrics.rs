//! Decoding head outputs into predictions and scoring them with mAP@δ.
//!
//! A prediction counts as correct when it lies within δ/2 seconds of a
//! same-class ground-truth action of its clip (boundary included). With
//! δ = ∞ only the class and the count per clip matter.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{CheckedAdd, Zero};
use serde::{Deserialize, Serialize};

use crate::annotations::{ActionClass, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::heads::{decode_time, HeadVariant, SlotOutput};
use crate::windowing::{BenchConfig, EvalClip};

/// Slack on the δ/2 boundary so decimal inputs such as 3.1 vs 3.6 at δ = 1
/// still count as on the boundary.
const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Seconds(f64),
    Infinite,
}

impl Tolerance {
    pub const DEFAULT: [Tolerance; 6] = [
        Tolerance::Seconds(1.0),
        Tolerance::Seconds(2.0),
        Tolerance::Seconds(3.0),
        Tolerance::Seconds(4.0),
        Tolerance::Seconds(5.0),
        Tolerance::Infinite,
    ];

    pub fn admits(self, distance_s: f64) -> bool {
        match self {
            Tolerance::Seconds(delta) => distance_s <= delta / 2.0 + BOUNDARY_SLACK,
            Tolerance::Infinite => true,
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Tolerance>> {
        s.split(',').map(|t| t.trim().parse()).collect()
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Seconds(d) => write!(f, "{d}"),
            Tolerance::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Tolerance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Tolerance::Infinite),
            other => match other.parse::<f64>() {
                Ok(d) if d.is_finite() && d > 0.0 => Ok(Tolerance::Seconds(d)),
                _ => Err(Error::Config(format!("invalid tolerance {s:?}"))),
            },
        }
    }
}

impl Serialize for Tolerance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tolerance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One anticipated action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub clip_id: String,
    #[serde(rename = "label")]
    pub class: ActionClass,
    /// Seconds from the start of the clip's anticipation window.
    pub time_s: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub predictions: Vec<Prediction>,
    /// Slots whose time output decoded outside the window and was clamped.
    pub clamped: usize,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Turns the slot outputs of one clip into per-class predictions.
///
/// Heads with actionness score each class as `actionness * p(class)`; the
/// others use the class output directly. Q-EOS stops at the first slot whose
/// most likely class is EoS. The EoS/background class is never emitted.
pub fn decode_predictions(
    clip_id: &str,
    outputs: &[SlotOutput],
    variant: HeadVariant,
    cfg: &BenchConfig,
) -> Result<Decoded> {
    if variant == HeadVariant::Anchors && outputs.len() != cfg.queries {
        return Err(Error::InvalidOutput(format!(
            "anchors need one output per query ({}), got {}",
            cfg.queries,
            outputs.len()
        )));
    }
    let ta = cfg.anticipation_s();
    let bin = ta / cfg.queries as f64;
    let mut predictions = Vec::new();
    let mut clamped = 0;
    for (slot, out) in outputs.iter().enumerate() {
        out.validate(variant)?;
        if variant == HeadVariant::QEos && argmax(&out.class_probs) == NUM_CLASSES {
            break;
        }
        let (tau, was_clamped) = decode_time(out.time);
        clamped += usize::from(was_clamped);
        let time_s = if variant == HeadVariant::Anchors {
            (slot as f64 + tau) * bin
        } else {
            tau * ta
        };
        let scale = out.actionness.filter(|_| variant.has_actionness()).unwrap_or(1.0);
        for (k, &p) in out.class_probs.iter().take(NUM_CLASSES).enumerate() {
            predictions.push(Prediction {
                clip_id: clip_id.to_string(),
                class: ActionClass::RETAINED[k],
                time_s: time_s.min(ta),
                confidence: scale * p,
            });
        }
    }
    Ok(Decoded { predictions, clamped })
}

/// A same-class prediction inside one clip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredTime {
    pub time_s: f64,
    pub confidence: f64,
}

/// Order in which predictions claim ground truth: higher confidence first,
/// then earlier time, then input position.
fn claim_order(preds: &[ScoredTime]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence
            .total_cmp(&preds[a].confidence)
            .then(preds[a].time_s.total_cmp(&preds[b].time_s))
            .then(a.cmp(&b))
    });
    order
}

/// Greedy matching of one class within one clip. Each prediction, in claim
/// order, takes the nearest unmatched ground truth within tolerance (earlier
/// ground truth on equal distance). Flags are returned in input order.
pub fn match_window(preds: &[ScoredTime], gts: &[f64], tolerance: Tolerance) -> Vec<bool> {
    let mut flags = vec![false; preds.len()];
    let mut taken = vec![false; gts.len()];
    for i in claim_order(preds) {
        let t = preds[i].time_s;
        let mut best: Option<(usize, f64)> = None;
        for (g, &gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let d = (t - gt).abs();
            if !tolerance.admits(d) {
                continue;
            }
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((g, d));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            flags[i] = true;
        }
    }
    flags
}

/// All-point interpolated average precision of a ranked TP/FP sequence:
/// recall steps weighted by the precision envelope. `None` when there is no
/// ground truth.
///
/// The area is accumulated as an exact fraction and rounded once; very long
/// rankings whose denominators overflow fall back to floating point.
pub fn average_precision(ranked_flags: &[bool], total_gt: usize) -> Option<f64> {
    if total_gt == 0 {
        return None;
    }
    let mut tp_before = Vec::with_capacity(ranked_flags.len());
    let mut tp = 0u128;
    for &hit in ranked_flags {
        tp += u128::from(hit);
        tp_before.push(tp);
    }
    // envelope as (true positives, rank) so comparisons stay exact
    let mut envelope: (u128, u128) = (0, 1);
    let mut exact = Some(Ratio::<u128>::zero());
    let mut approx = 0.0f64;
    for (i, &hit) in ranked_flags.iter().enumerate().rev() {
        let here = (tp_before[i], i as u128 + 1);
        if here.0 * envelope.1 > envelope.0 * here.1 {
            envelope = here;
        }
        if hit {
            let step = Ratio::new(envelope.0, envelope.1);
            exact = exact.and_then(|acc| acc.checked_add(&step));
            approx += envelope.0 as f64 / envelope.1 as f64;
        }
    }
    Some(match exact {
        Some(area) => {
            let ap = area / total_gt as u128;
            *ap.numer() as f64 / *ap.denom() as f64
        }
        None => approx / total_gt as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    #[serde(rename = "label")]
    pub class: ActionClass,
    pub gt: usize,
    pub predictions: usize,
    /// One entry per tolerance; `None` when the class has no ground truth.
    pub ap: Vec<Option<f64>>,
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
}

impl ClassReport {
    pub fn average(&self) -> Option<f64> {
        mean_of(&self.ap)
    }
}

fn mean_of(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for v in values {
        sum += (*v)?;
    }
    Some(sum / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub anticipation_s: f64,
    pub tolerances: Vec<Tolerance>,
    pub clips: usize,
    pub predictions: usize,
    pub classes: Vec<ClassReport>,
    /// Mean AP over classes with ground truth, per tolerance.
    pub map: Vec<Option<f64>>,
    /// Mean of `map` over tolerances.
    pub average: Option<f64>,
}

fn validate_predictions(
    predictions: &[Prediction],
    clips: &HashMap<&str, &EvalClip>,
    anticipation_s: f64,
) -> Result<()> {
    for (index, p) in predictions.iter().enumerate() {
        let err = |message: String| Err(Error::Prediction { index, message });
        if !clips.contains_key(p.clip_id.as_str()) {
            return err(format!("unknown clip_id {:?}", p.clip_id));
        }
        if !p.class.is_retained() {
            return err(format!("{} is not an evaluated class", p.class));
        }
        if !(p.time_s.is_finite() && (0.0..=anticipation_s).contains(&p.time_s)) {
            return err(format!("time {} s outside [0, {anticipation_s}]", p.time_s));
        }
        if !(p.confidence.is_finite() && (0.0..=1.0).contains(&p.confidence)) {
            return err(format!("confidence {} outside [0, 1]", p.confidence));
        }
    }
    Ok(())
}

/// Scores predictions against evaluation clips for every tolerance.
/// The result does not depend on the order of either input.
pub fn evaluate(
    predictions: &[Prediction],
    clips: &[EvalClip],
    anticipation_s: f64,
    tolerances: &[Tolerance],
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &EvalClip> = clips.iter().map(|c| (c.clip_id.as_str(), c)).collect();
    if by_id.len() != clips.len() {
        return Err(Error::Config("duplicate clip_id in evaluation clips".into()));
    }
    validate_predictions(predictions, &by_id, anticipation_s)?;

    // (class, clip) -> predictions; BTreeMap keeps the reduction ordered
    let mut grouped: BTreeMap<(usize, &str), Vec<ScoredTime>> = BTreeMap::new();
    for p in predictions {
        let k = p.class.index().expect("validated");
        grouped.entry((k, p.clip_id.as_str())).or_default().push(ScoredTime {
            time_s: p.time_s,
            confidence: p.confidence,
        });
    }
    let mut gt_times: BTreeMap<(usize, &str), Vec<f64>> = BTreeMap::new();
    let mut gt_totals = [0usize; NUM_CLASSES];
    for clip in clips {
        for a in &clip.gt_actions {
            if let Some(k) = a.class.index() {
                gt_times
                    .entry((k, clip.clip_id.as_str()))
                    .or_default()
                    .push(a.offset_s());
                gt_totals[k] += 1;
            }
        }
    }
    // input order inside a group must not matter
    for preds in grouped.values_mut() {
        preds.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.time_s.total_cmp(&b.time_s))
        });
    }

    let mut classes = Vec::with_capacity(NUM_CLASSES);
    for (k, &class) in ActionClass::RETAINED.iter().enumerate() {
        let mut report = ClassReport {
            class,
            gt: gt_totals[k],
            predictions: 0,
            ap: Vec::new(),
            tp: Vec::new(),
            fp: Vec::new(),
        };
        let groups: Vec<(&str, &Vec<ScoredTime>)> = grouped
            .range((k, "")..)
            .take_while(|((c, _), _)| *c == k)
            .map(|((_, clip), preds)| (*clip, preds))
            .collect();
        report.predictions = groups.iter().map(|(_, p)| p.len()).sum();
        for &tol in tolerances {
            // (confidence, clip, rank within clip, hit)
            let mut ranked: Vec<(f64, &str, usize, bool)> = Vec::with_capacity(report.predictions);
            for &(clip, preds) in &groups {
                let gts = gt_times.get(&(k, clip)).map_or(&[][..], Vec::as_slice);
                let flags = match_window(preds, gts, tol);
                for (rank, (p, hit)) in preds.iter().zip(flags).enumerate() {
                    ranked.push((p.confidence, clip, rank, hit));
                }
            }
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
            let flags: Vec<bool> = ranked.iter().map(|r| r.3).collect();
            let tp = flags.iter().filter(|&&f| f).count();
            report.tp.push(tp);
            report.fp.push(flags.len() - tp);
            report.ap.push(average_precision(&flags, report.gt));
        }
        classes.push(report);
    }

    let map: Vec<Option<f64>> = (0..tolerances.len())
        .map(|t| {
            let aps: Vec<f64> = classes.iter().filter_map(|c| c.ap[t]).collect();
            (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
        })
        .collect();
    let average = mean_of(&map);
    Ok(EvalReport {
        anticipation_s,
        tolerances: tolerances.to_vec(),
        clips: clips.len(),
        predictions: predictions.len(),
        classes,
        map,
        average,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x))
}

fn raw(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per (label, tolerance), plus `mAP` rows and a final average.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,delta,ap,tp,fp,gt\n");
        for c in &self.classes {
            for (t, tol) in self.tolerances.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.class,
                    tol,
                    raw(c.ap[t]),
                    c.tp[t],
                    c.fp[t],
                    c.gt
                );
            }
        }
        for (t, tol) in self.tolerances.iter().enumerate() {
            let _ = writeln!(out, "mAP,{},{},,,", tol, raw(self.map[t]));
        }
        let _ = writeln!(out, "mAP,avg,{},,,", raw(self.average));
        out
    }

    /// Per-class table in percent, one column per tolerance plus the average.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let heads: Vec<String> = self
            .tolerances
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let t = match t {
                    Tolerance::Infinite => "∞".to_string(),
                    other => other.to_string(),
                };
                if i == 0 {
                    format!("δ={t}")
                } else {
                    t
                }
            })
            .collect();
        let _ = writeln!(out, "| Action | {} | Avg. |", heads.join(" | "));
        let _ = writeln!(out, "|---|{}---:|", "---:|".repeat(heads.len()));
        for c in &self.classes {
            let cells: Vec<String> = c.ap.iter().map(|&v| pct(v)).collect();
            let _ = writeln!(out, "| {} | {} | {} |", c.class, cells.join(" | "), pct(c.average()));
        }
        let cells: Vec<String> = self.map.iter().map(|&v| pct(v)).collect();
        let _ = writeln!(out, "| **mAP** | {} | {} |", cells.join(" | "), pct(self.average));
        out
    }
}

/// Sort helper shared by writers: clip, class, time, then descending confidence.
pub fn canonical_order(a: &Prediction, b: &Prediction) -> Ordering {
    a.clip_id
        .cmp(&b.clip_id)
        .then(a.class.index().cmp(&b.class.index()))
        .then(a.time_s.total_cmp(&b.time_s))
        .then(b.confidence.total_cmp(&a.confidence))
}
