//! Query-slot supervision: pairing ground-truth actions with query slots
//! and encoding the per-slot targets of each head variant.

use serde::{Deserialize, Serialize};

use crate::annotations::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::heads::{decode_time, HeadVariant, SlotOutput};
use crate::windowing::{BenchConfig, ClipAction};

/// Dense cost matrix, rows are query slots and columns ground-truth actions.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "cost matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("cost matrix entry {v} is not finite")));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("cost matrix rows differ in length".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CostMatrix {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// O(n^3) shortest-augmenting-path assignment on a square matrix.
/// Returns the column assigned to each row.
fn solve_square(cost: &[f64], n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

fn square_cost(cost: &[f64], n: usize, assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum()
}

/// Optimal value of the square problem restricted to the given rows and columns.
fn restricted_optimum(cost: &[f64], n: usize, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    let sub: Vec<f64> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| cost[r * n + c]))
        .collect();
    let a = solve_square(&sub, k);
    square_cost(&sub, k, &a)
}

/// Minimum-cost pairing of `min(rows, cols)` row/column pairs.
///
/// Rectangular inputs are padded to square with a constant above every real
/// entry; padded pairs are dropped. Among optimal pairings the one whose
/// row-sorted pair list is lexicographically smallest is returned.
pub fn hungarian(cost: &CostMatrix) -> Pairing {
    let (rows, cols) = (cost.rows, cost.cols);
    if rows == 0 || cols == 0 {
        return Pairing {
            pairs: Vec::new(),
            cost: 0.0,
        };
    }
    let n = rows.max(cols);
    let max_abs = cost.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pad = cost.data.iter().fold(f64::MIN, |m, &v| m.max(v)) + 1.0;
    let mut square = vec![pad; n * n];
    for r in 0..rows {
        for c in 0..cols {
            square[r * n + c] = cost.get(r, c);
        }
    }
    let optimum = square_cost(&square, n, &solve_square(&square, n));
    let tol = 1e-10 * max_abs * n as f64;

    // Fix rows one at a time to the smallest column that still admits an
    // optimal completion; padding columns are interchangeable so any one
    // of them stands for "unpaired".
    let mut free_rows: Vec<usize> = (0..n).collect();
    let mut free_cols: Vec<usize> = (0..n).collect();
    let mut fixed_cost = 0.0;
    let mut pairs = Vec::new();
    for r in 0..rows {
        free_rows.retain(|&x| x != r);
        let mut candidates: Vec<usize> = free_cols.iter().copied().filter(|&c| c < cols).collect();
        if let Some(&p) = free_cols.iter().find(|&&c| c >= cols) {
            candidates.push(p);
        }
        let mut chosen = None;
        for (k, &c) in candidates.iter().enumerate() {
            let rest_cols: Vec<usize> = free_cols.iter().copied().filter(|&x| x != c).collect();
            let total = fixed_cost + square[r * n + c] + restricted_optimum(&square, n, &free_rows, &rest_cols);
            if total <= optimum + tol || k + 1 == candidates.len() {
                chosen = Some(c);
                break;
            }
        }
        let c = chosen.expect("at least one free column per row");
        fixed_cost += square[r * n + c];
        free_cols.retain(|&x| x != c);
        if c < cols {
            pairs.push((r, c));
        }
    }
    let total = pairs.iter().map(|&(r, c)| cost.get(r, c)).sum();
    Pairing { pairs, cost: total }
}

/// Which ground-truth action each query slot is paired with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotPairing {
    pub slots: Vec<Option<usize>>,
    /// Ground-truth actions left without a slot.
    pub unassigned: usize,
}

impl SlotPairing {
    pub fn truncated(&self) -> bool {
        self.unassigned > 0
    }

    pub fn paired(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }
}

/// Slot `i` takes ground-truth `i` (in time order) while both last.
pub fn sequential_assign(gt_len: usize, queries: usize) -> SlotPairing {
    SlotPairing {
        slots: (0..queries).map(|i| (i < gt_len).then_some(i)).collect(),
        unassigned: gt_len.saturating_sub(queries),
    }
}

fn pairing_from_hungarian(cost: &CostMatrix, queries: usize, gt_len: usize) -> SlotPairing {
    let mut slots = vec![None; queries];
    let p = hungarian(cost);
    for &(r, c) in &p.pairs {
        slots[r] = Some(c);
    }
    SlotPairing {
        slots,
        unassigned: gt_len - p.pairs.len(),
    }
}

/// Time cost `|t_pred - t_gt| / T_a` between slot predictions (seconds) and
/// ground-truth offsets.
pub fn time_cost(pred_times_s: &[f64], gt: &[ClipAction], cfg: &BenchConfig) -> Result<CostMatrix> {
    let ta = cfg.anticipation_s();
    let data = pred_times_s
        .iter()
        .flat_map(|&t| gt.iter().map(move |g| (t - g.offset_s()).abs() / ta))
        .collect();
    CostMatrix::new(pred_times_s.len(), gt.len(), data)
}

/// Class cost `1 - p_slot(class_gt)`.
pub fn class_cost(class_probs: &[Vec<f64>], gt: &[ClipAction]) -> Result<CostMatrix> {
    let mut data = Vec::with_capacity(class_probs.len() * gt.len());
    for probs in class_probs {
        for g in gt {
            let k = g
                .class
                .index()
                .ok_or_else(|| Error::InvalidOutput(format!("{} is not an evaluated class", g.class)))?;
            let p = *probs
                .get(k)
                .ok_or_else(|| Error::InvalidOutput("class output too short".into()))?;
            data.push(1.0 - p);
        }
    }
    CostMatrix::new(class_probs.len(), gt.len(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum ClassTarget {
    /// No class supervision.
    Ignore,
    /// Softmax target index; `NUM_CLASSES` is the EoS/background class.
    Index(usize),
    /// Per-class binary targets (Q-BCE).
    MultiHot(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTarget {
    pub gt: Option<usize>,
    pub actionness: u8,
    pub class: ClassTarget,
    /// Normalized time target in `[0, 1)`: `t / T_a`, or the position within
    /// the slot's bin for anchors.
    pub time: Option<f64>,
    /// False for slots past the EoS slot, which get no loss at all.
    pub supervised: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub variant: HeadVariant,
    pub slots: Vec<SlotTarget>,
    pub unassigned: usize,
}

impl Assignment {
    pub fn truncated(&self) -> bool {
        self.unassigned > 0
    }

    pub fn paired(&self) -> usize {
        self.slots.iter().filter(|s| s.gt.is_some()).count()
    }
}

fn check_gt(gt: &[ClipAction], cfg: &BenchConfig) -> Result<()> {
    for g in gt {
        if g.offset_ms >= cfg.anticipation_ms {
            return Err(Error::TimeOutOfWindow {
                time_s: g.offset_s(),
                window_s: cfg.anticipation_s(),
            });
        }
        if g.class.index().is_none() {
            return Err(Error::InvalidOutput(format!("{} is not an evaluated class", g.class)));
        }
    }
    if gt.windows(2).any(|w| w[0].offset_ms > w[1].offset_ms) {
        return Err(Error::Config("ground-truth actions must be sorted by time".into()));
    }
    Ok(())
}

fn outputs_for<'a>(
    variant: HeadVariant,
    outputs: Option<&'a [SlotOutput]>,
    cfg: &BenchConfig,
    what: &'static str,
) -> Result<&'a [SlotOutput]> {
    let outputs = outputs.ok_or(Error::MissingOutputs {
        variant: variant.name().into(),
        what,
    })?;
    if outputs.len() != cfg.queries {
        return Err(Error::InvalidOutput(format!(
            "expected {} slot outputs, got {}",
            cfg.queries,
            outputs.len()
        )));
    }
    for o in outputs {
        o.validate(variant)?;
    }
    Ok(outputs)
}

/// Anchor bins: slot `i` covers `[i * T_a / q, (i + 1) * T_a / q)` and takes
/// the first action inside it. Returns the pairing and in-bin positions.
fn anchor_pairing(gt: &[ClipAction], cfg: &BenchConfig) -> (SlotPairing, Vec<Option<f64>>) {
    let q = cfg.queries as u64;
    let ta = cfg.anticipation_ms;
    let mut slots = vec![None; cfg.queries];
    let mut times = vec![None; cfg.queries];
    for (k, g) in gt.iter().enumerate() {
        let scaled = g.offset_ms * q;
        let bin = (scaled / ta) as usize;
        if slots[bin].is_none() {
            slots[bin] = Some(k);
            times[bin] = Some((scaled - bin as u64 * ta) as f64 / ta as f64);
        }
    }
    let paired = slots.iter().filter(|s| s.is_some()).count();
    (
        SlotPairing {
            slots,
            unassigned: gt.len() - paired,
        },
        times,
    )
}

/// Builds the per-slot targets of `variant` for the ground-truth actions of
/// one anticipation window (sorted offsets). Hungarian variants need the
/// current slot outputs to build their cost matrix.
pub fn assign_for_variant(
    variant: HeadVariant,
    gt: &[ClipAction],
    outputs: Option<&[SlotOutput]>,
    cfg: &BenchConfig,
) -> Result<Assignment> {
    check_gt(gt, cfg)?;
    let q = cfg.queries;
    let mut anchor_times = Vec::new();
    let pairing = match variant {
        HeadVariant::QAct | HeadVariant::QEos | HeadVariant::QBckg | HeadVariant::QBce => {
            sequential_assign(gt.len(), q)
        }
        HeadVariant::QHungTime => {
            let outs = outputs_for(variant, outputs, cfg, "predicted times")?;
            let ta = cfg.anticipation_s();
            let times: Vec<f64> = outs.iter().map(|o| decode_time(o.time).0 * ta).collect();
            pairing_from_hungarian(&time_cost(&times, gt, cfg)?, q, gt.len())
        }
        HeadVariant::QHungClass => {
            let outs = outputs_for(variant, outputs, cfg, "class scores")?;
            let probs: Vec<Vec<f64>> = outs.iter().map(|o| o.class_probs.clone()).collect();
            pairing_from_hungarian(&class_cost(&probs, gt)?, q, gt.len())
        }
        HeadVariant::Anchors => {
            let (p, t) = anchor_pairing(gt, cfg);
            anchor_times = t;
            p
        }
    };

    let ta = cfg.anticipation_ms as f64;
    let mut eos_used = false;
    let slots = pairing
        .slots
        .iter()
        .enumerate()
        .map(|(i, &paired)| match paired {
            Some(k) => {
                let class = gt[k].class.index().expect("checked above");
                let time = if variant == HeadVariant::Anchors {
                    anchor_times[i]
                } else {
                    Some(gt[k].offset_ms as f64 / ta)
                };
                let class = if variant == HeadVariant::QBce {
                    let mut hot = vec![0u8; NUM_CLASSES];
                    hot[class] = 1;
                    ClassTarget::MultiHot(hot)
                } else {
                    ClassTarget::Index(class)
                };
                SlotTarget {
                    gt: Some(k),
                    actionness: 1,
                    class,
                    time,
                    supervised: true,
                }
            }
            None => {
                let (class, supervised) = match variant {
                    HeadVariant::QEos if eos_used => (ClassTarget::Ignore, false),
                    HeadVariant::QEos => {
                        eos_used = true;
                        (ClassTarget::Index(NUM_CLASSES), true)
                    }
                    HeadVariant::QBckg => (ClassTarget::Index(NUM_CLASSES), true),
                    HeadVariant::QBce => (ClassTarget::MultiHot(vec![0; NUM_CLASSES]), true),
                    _ => (ClassTarget::Ignore, true),
                };
                SlotTarget {
                    gt: None,
                    actionness: 0,
                    class,
                    time: None,
                    supervised,
                }
            }
        })
        .collect();
    Ok(Assignment {
        variant,
        slots,
        unassigned: pairing.unassigned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::ActionClass;
    use crate::heads::encode_time;

    fn act(class: ActionClass, offset_ms: u64) -> ClipAction {
        ClipAction { class, offset_ms }
    }

    fn brute_force_min(cost: &CostMatrix) -> f64 {
        fn rec(cost: &CostMatrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            let (rows, cols) = (cost.rows(), cost.cols());
            if rows <= cols {
                if row == rows {
                    *best = best.min(acc);
                    return;
                }
                for c in 0..cols {
                    if !used[c] {
                        used[c] = true;
                        rec(cost, row + 1, used, acc + cost.get(row, c), best);
                        used[c] = false;
                    }
                }
            } else {
                // assign each column to a distinct row
                if row == cols {
                    *best = best.min(acc);
                    return;
                }
                for r in 0..rows {
                    if !used[r] {
                        used[r] = true;
                        rec(cost, row + 1, used, acc + cost.get(r, row), best);
                        used[r] = false;
                    }
                }
            }
        }
        let mut best = f64::INFINITY;
        let mut used = vec![false; cost.rows().max(cost.cols())];
        rec(cost, 0, &mut used, 0.0, &mut best);
        best
    }

    #[test]
    fn diagonal_and_single_entry() {
        let m = CostMatrix::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]).unwrap();
        let p = hungarian(&m);
        assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(p.cost, 0.0);

        let one = CostMatrix::from_rows(&[vec![5.0]]).unwrap();
        assert_eq!(
            hungarian(&one),
            Pairing {
                pairs: vec![(0, 0)],
                cost: 5.0
            }
        );
    }

    #[test]
    fn empty_matrix_gives_empty_pairing() {
        let m = CostMatrix::new(0, 0, vec![]).unwrap();
        assert!(hungarian(&m).pairs.is_empty());
        let m = CostMatrix::new(3, 0, vec![]).unwrap();
        assert!(hungarian(&m).pairs.is_empty());
    }

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(CostMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(CostMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn ties_break_lexicographically() {
        let m = CostMatrix::from_rows(&[vec![1.0; 3], vec![1.0; 3]]).unwrap();
        assert_eq!(hungarian(&m).pairs, vec![(0, 0), (1, 1)]);
        let tall = CostMatrix::from_rows(&[vec![2.0], vec![2.0], vec![2.0]]).unwrap();
        assert_eq!(hungarian(&tall).pairs, vec![(0, 0)]);
        let tall = CostMatrix::from_rows(&[vec![3.0], vec![2.0], vec![2.0]]).unwrap();
        assert_eq!(hungarian(&tall).pairs, vec![(1, 0)]);
    }

    #[test]
    fn random_four_by_four_matches_permutations() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        for _ in 0..200 {
            let data: Vec<f64> = (0..16)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    ((state >> 33) % 20) as f64
                })
                .collect();
            let m = CostMatrix::new(4, 4, data).unwrap();
            assert_eq!(hungarian(&m).cost, brute_force_min(&m));
        }
    }

    #[test]
    fn sequential_examples() {
        let p = sequential_assign(3, 8);
        assert_eq!(p.paired(), 3);
        assert_eq!(&p.slots[..4], &[Some(0), Some(1), Some(2), None]);
        assert!(!p.truncated());
        assert_eq!(sequential_assign(0, 8).paired(), 0);
        let p = sequential_assign(9, 8);
        assert_eq!(p.paired(), 8);
        assert!(p.truncated());
    }

    #[test]
    fn anchors_bin_arithmetic() {
        let cfg = BenchConfig::default();
        let a = assign_for_variant(HeadVariant::Anchors, &[act(ActionClass::Pass, 1900)], None, &cfg).unwrap();
        let slot = &a.slots[3];
        assert_eq!(slot.gt, Some(0));
        assert_eq!(slot.actionness, 1);
        assert!((slot.time.unwrap() - 0.04).abs() < 1e-12);
        assert_eq!(a.paired(), 1);
    }

    #[test]
    fn anchors_keep_first_action_per_bin() {
        let cfg = BenchConfig::default();
        let gt = [
            act(ActionClass::Pass, 100),
            act(ActionClass::Drive, 400),
            act(ActionClass::Shot, 4999),
        ];
        let a = assign_for_variant(HeadVariant::Anchors, &gt, None, &cfg).unwrap();
        assert_eq!(a.slots[0].gt, Some(0));
        assert_eq!(a.slots[7].gt, Some(2));
        assert_eq!(a.unassigned, 1);
    }

    #[test]
    fn eos_marks_first_free_slot_only() {
        let cfg = BenchConfig::default().with_queries(4).unwrap();
        let gt = [act(ActionClass::Pass, 500), act(ActionClass::Cross, 1500)];
        let a = assign_for_variant(HeadVariant::QEos, &gt, None, &cfg).unwrap();
        assert_eq!(a.slots[0].class, ClassTarget::Index(0));
        assert_eq!(a.slots[1].class, ClassTarget::Index(6));
        assert_eq!(a.slots[2].class, ClassTarget::Index(NUM_CLASSES));
        assert!(a.slots[2].supervised);
        assert!(!a.slots[3].supervised);
        assert_eq!(a.slots[3].class, ClassTarget::Ignore);
    }

    #[test]
    fn background_and_multi_hot_targets() {
        let cfg = BenchConfig::default().with_queries(3).unwrap();
        let gt = [act(ActionClass::Shot, 2500)];
        let b = assign_for_variant(HeadVariant::QBckg, &gt, None, &cfg).unwrap();
        assert_eq!(b.slots[1].class, ClassTarget::Index(NUM_CLASSES));
        assert_eq!(b.slots[2].class, ClassTarget::Index(NUM_CLASSES));
        assert_eq!(b.slots[0].time, Some(0.5));
        let m = assign_for_variant(HeadVariant::QBce, &gt, None, &cfg).unwrap();
        let mut hot = vec![0u8; NUM_CLASSES];
        hot[8] = 1;
        assert_eq!(m.slots[0].class, ClassTarget::MultiHot(hot));
        assert_eq!(m.slots[1].class, ClassTarget::MultiHot(vec![0; NUM_CLASSES]));
    }

    fn slot_with_time(t_s: f64, ta_s: f64) -> SlotOutput {
        let mut probs = vec![0.0; NUM_CLASSES];
        probs[0] = 1.0;
        SlotOutput {
            actionness: Some(0.5),
            class_probs: probs,
            time: encode_time(t_s / ta_s),
        }
    }

    #[test]
    fn hungarian_time_example() {
        let cfg = BenchConfig::default().with_queries(2).unwrap();
        // gt listed as (2.9, 0.6) in prediction order; cost built directly
        let gt = [act(ActionClass::Pass, 2900), act(ActionClass::Pass, 600)];
        let cost = time_cost(&[0.5, 3.0], &gt, &cfg).unwrap();
        let p = hungarian(&cost);
        assert_eq!(p.pairs, vec![(0, 1), (1, 0)]);
        let swapped = (0.5f64 - 2.9).abs() + (3.0f64 - 0.6).abs();
        let straight = (0.5f64 - 0.6).abs() + (3.0f64 - 2.9).abs();
        assert!(straight < swapped);

        // through the variant API the ground truth must be sorted
        let sorted = [act(ActionClass::Pass, 600), act(ActionClass::Pass, 2900)];
        let outs = [slot_with_time(3.0, 5.0), slot_with_time(0.5, 5.0)];
        let a = assign_for_variant(HeadVariant::QHungTime, &sorted, Some(&outs), &cfg).unwrap();
        assert_eq!(a.slots[0].gt, Some(1));
        assert_eq!(a.slots[1].gt, Some(0));
    }

    #[test]
    fn hungarian_variants_need_outputs() {
        let cfg = BenchConfig::default();
        for v in [HeadVariant::QHungTime, HeadVariant::QHungClass] {
            assert!(matches!(
                assign_for_variant(v, &[], None, &cfg),
                Err(Error::MissingOutputs { .. })
            ));
        }
    }

    #[test]
    fn out_of_window_ground_truth_is_rejected() {
        let cfg = BenchConfig::default();
        let gt = [act(ActionClass::Pass, 5000)];
        assert!(matches!(
            assign_for_variant(HeadVariant::QAct, &gt, None, &cfg),
            Err(Error::TimeOutOfWindow { .. })
        ));
    }
}
