//! Helpers shared by the integration and acceptance tests, including a
//! deliberately simple reference evaluator written without the library's
//! matching or AP code.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use anticipation_bench::annotations::ActionInstance;
use anticipation_bench::rng::SplitMix64;
use anticipation_bench::windowing::ClipAction;
use anticipation_bench::{ActionClass, EvalClip, GameAnnotations, Prediction, Split, Tolerance, NUM_CLASSES};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn annotation_fixtures() -> Vec<PathBuf> {
    ["synthetic-a.json", "synthetic-b.json", "synthetic-c.json"]
        .iter()
        .map(|f| fixture_dir().join("annotations").join(f))
        .collect()
}

/// Per-class APs for every tolerance; `None` for classes without ground truth.
pub fn naive_evaluate(preds: &[Prediction], clips: &[EvalClip], tolerances: &[Tolerance]) -> Vec<Vec<Option<f64>>> {
    let mut out = Vec::new();
    for class in ActionClass::RETAINED {
        let mut row = Vec::new();
        for &tol in tolerances {
            row.push(naive_class_ap(preds, clips, class, tol));
        }
        out.push(row);
    }
    out
}

fn within(tol: Tolerance, a: f64, b: f64) -> bool {
    match tol {
        Tolerance::Infinite => true,
        Tolerance::Seconds(d) => (a - b).abs() <= d / 2.0 + 1e-9,
    }
}

fn naive_class_ap(preds: &[Prediction], clips: &[EvalClip], class: ActionClass, tol: Tolerance) -> Option<f64> {
    let total_gt: usize = clips
        .iter()
        .map(|c| c.gt_actions.iter().filter(|a| a.class == class).count())
        .sum();
    if total_gt == 0 {
        return None;
    }
    let mut mine: Vec<&Prediction> = preds.iter().filter(|p| p.class == class).collect();
    // confidences are distinct in the generated instances, so this is a total order
    mine.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());

    let mut used: Vec<Vec<bool>> = clips.iter().map(|c| vec![false; c.gt_actions.len()]).collect();
    let mut hits = Vec::new();
    for p in &mine {
        let ci = clips.iter().position(|c| c.clip_id == p.clip_id).unwrap();
        let mut best: Option<usize> = None;
        for (g, a) in clips[ci].gt_actions.iter().enumerate() {
            if a.class != class || used[ci][g] || !within(tol, p.time_s, a.offset_s()) {
                continue;
            }
            let closer = match best {
                None => true,
                Some(b) => (p.time_s - a.offset_s()).abs() < (p.time_s - clips[ci].gt_actions[b].offset_s()).abs(),
            };
            if closer {
                best = Some(g);
            }
        }
        if let Some(g) = best {
            used[ci][g] = true;
        }
        hits.push(best.is_some());
    }

    let n = hits.len();
    let mut precision = vec![0.0; n];
    let mut tp = 0.0;
    for i in 0..n {
        if hits[i] {
            tp += 1.0;
        }
        precision[i] = tp / (i + 1) as f64;
    }
    let mut ap = 0.0;
    for i in 0..n {
        if hits[i] {
            let best_after = precision[i..].iter().cloned().fold(0.0, f64::max);
            ap += best_after;
        }
    }
    Some(ap / total_gt as f64)
}

/// A small random evaluation problem: up to `max_clips` clips of a 5 s
/// window, times on a 0.1 s grid, distinct confidences.
pub fn random_instance(seed: u64, max_clips: usize) -> (Vec<EvalClip>, Vec<Prediction>) {
    let mut rng = SplitMix64::new(seed);
    let n_clips = 1 + rng.below(max_clips);
    let mut clips = Vec::new();
    let mut preds = Vec::new();
    let mut conf_pool: Vec<u64> = (1..=10_000).collect();
    for c in 0..n_clips {
        let clip_id = format!("g|1|{}", c * 5000);
        let mut gt = Vec::new();
        for class in ActionClass::RETAINED.iter().take(3) {
            for _ in 0..rng.below(5) {
                gt.push(ClipAction {
                    class: *class,
                    offset_ms: 100 * rng.below(50) as u64,
                });
            }
            for _ in 0..rng.below(7) {
                let pick = rng.below(conf_pool.len());
                let conf = conf_pool.swap_remove(pick) as f64 / 10_000.0;
                preds.push(Prediction {
                    clip_id: clip_id.clone(),
                    class: *class,
                    time_s: rng.below(51) as f64 / 10.0,
                    confidence: conf,
                });
            }
        }
        gt.sort_by_key(|a| a.offset_ms);
        clips.push(EvalClip {
            clip_id,
            game_id: "g".into(),
            half: 1,
            context_start_ms: (c as u64 * 5000).saturating_sub(30_000),
            context_end_ms: c as u64 * 5000,
            anticipation_start_ms: c as u64 * 5000,
            anticipation_end_ms: (c as u64 + 1) * 5000,
            partial: false,
            gt_actions: gt,
        });
    }
    (clips, preds)
}

/// Builds a game with `counts[k]` instances of each of the twelve classes
/// (retained classes first, then Free Kick and Goal), one every 100 ms.
pub fn game_from_counts(game_id: &str, split: Split, counts: &[(ActionClass, u64)]) -> GameAnnotations {
    let mut actions = Vec::new();
    let mut t = 0;
    for &(class, n) in counts {
        for _ in 0..n {
            actions.push(ActionInstance {
                game_id: game_id.into(),
                half: 1,
                time_ms: t,
                class,
            });
            t += 100;
        }
    }
    GameAnnotations::new(game_id, split, [None, None], actions).unwrap()
}

pub fn retained_count(game: &GameAnnotations) -> usize {
    game.actions.iter().filter(|a| a.class.is_retained()).count()
}

pub const CLASSES_WITH_EXCLUDED: usize = NUM_CLASSES + 2;
