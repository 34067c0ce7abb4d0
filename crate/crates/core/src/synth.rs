//! Deterministic synthetic annotation corpora for fixtures and tests.

use serde_json::Value;

use crate::annotations::{format_game_time, ActionClass, ActionInstance, GameAnnotations, Split};
use crate::error::Result;
use crate::rng::SplitMix64;

/// Class mix used for sampling: dataset-wide totals of the twelve raw labels.
pub const RAW_CLASS_TOTALS: [(ActionClass, u64); 12] = [
    (ActionClass::Pass, 4985),
    (ActionClass::Drive, 4300),
    (ActionClass::HighPass, 761),
    (ActionClass::Header, 713),
    (ActionClass::Out, 551),
    (ActionClass::ThrowIn, 362),
    (ActionClass::Cross, 261),
    (ActionClass::BallPlayerBlock, 223),
    (ActionClass::Shot, 169),
    (ActionClass::SuccessfulTackle, 74),
    (ActionClass::FreeKick, 21),
    (ActionClass::Goal, 13),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub half_duration_ms: u64,
    /// Mean gap between consecutive actions (exponential inter-arrivals).
    pub mean_gap_ms: f64,
    /// Minimum gap, so actions never collide.
    pub min_gap_ms: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            half_duration_ms: 240_000,
            mean_gap_ms: 3300.0,
            min_gap_ms: 80,
        }
    }
}

fn sample_class(rng: &mut SplitMix64) -> ActionClass {
    let total: u64 = RAW_CLASS_TOTALS.iter().map(|(_, n)| n).sum();
    let mut pick = (rng.next_f64() * total as f64) as u64;
    for &(class, n) in &RAW_CLASS_TOTALS {
        if pick < n {
            return class;
        }
        pick -= n;
    }
    ActionClass::Pass
}

/// A game with two halves of `half_duration_ms`, actions arriving with
/// exponential gaps and classes drawn from [`RAW_CLASS_TOTALS`].
pub fn synth_game(game_id: &str, split: Split, spec: &SynthSpec) -> Result<GameAnnotations> {
    let mut rng = SplitMix64::for_key(spec.seed, game_id);
    let mut actions = Vec::new();
    for half in 1..=2u8 {
        let mut t = 0u64;
        loop {
            let gap = -(1.0 - rng.next_f64()).ln() * spec.mean_gap_ms;
            t += (gap.round() as u64).max(spec.min_gap_ms);
            if t >= spec.half_duration_ms {
                break;
            }
            actions.push(ActionInstance {
                game_id: game_id.to_string(),
                half,
                time_ms: t,
                class: sample_class(&mut rng),
            });
        }
    }
    let d = Some(spec.half_duration_ms);
    GameAnnotations::new(game_id, split, [d, d], actions)
}

/// A game with exactly `count` actions at uniform times in either half.
pub fn synth_game_with_count(game_id: &str, split: Split, count: usize, spec: &SynthSpec) -> Result<GameAnnotations> {
    let mut rng = SplitMix64::for_key(spec.seed, game_id);
    let actions = (0..count)
        .map(|_| ActionInstance {
            game_id: game_id.to_string(),
            half: 1 + rng.below(2) as u8,
            time_ms: (rng.next_f64() * spec.half_duration_ms as f64) as u64,
            class: sample_class(&mut rng),
        })
        .collect();
    let d = Some(spec.half_duration_ms);
    GameAnnotations::new(game_id, split, [d, d], actions)
}

fn raw_label(class: ActionClass) -> &'static str {
    match class {
        ActionClass::Pass => "PASS",
        ActionClass::Drive => "DRIVE",
        ActionClass::HighPass => "HIGH PASS",
        ActionClass::Header => "HEADER",
        ActionClass::Out => "OUT",
        ActionClass::ThrowIn => "THROW IN",
        ActionClass::Cross => "CROSS",
        ActionClass::BallPlayerBlock => "BALL PLAYER BLOCK",
        ActionClass::Shot => "SHOT",
        ActionClass::SuccessfulTackle => "PLAYER SUCCESSFUL TACKLE",
        ActionClass::FreeKick => "FREE KICK",
        ActionClass::Goal => "GOAL",
    }
}

/// Serializes in the raw ball-action layout: upper-case labels, whole-second
/// `gameTime`, integer `position`, plus the `team`/`visibility` fields the
/// parser ignores.
pub fn raw_json(game: &GameAnnotations) -> Value {
    let annotations: Vec<Value> = game
        .actions
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let clock = format_game_time(a.half, a.time_ms);
            serde_json::json!({
                "gameTime": &clock[..clock.len() - 4],
                "label": raw_label(a.class),
                "position": a.time_ms,
                "team": if i % 2 == 0 { "home" } else { "away" },
                "visibility": "visible",
            })
        })
        .collect();
    serde_json::json!({
        "game": game.game_id,
        "split": game.split.name(),
        "annotations": annotations,
    })
}
