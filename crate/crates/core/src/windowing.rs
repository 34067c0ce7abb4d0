//! Evaluation clips, training clips and per-frame segmentation targets.

use serde::{Deserialize, Serialize};

use crate::annotations::{ActionClass, ActionInstance, GameAnnotations, NUM_CLASSES};
use crate::error::{Error, Result};

/// Benchmark-wide settings. Durations are integer milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Training context length (T_c).
    pub context_ms: u64,
    /// Anticipation window length (T_a).
    pub anticipation_ms: u64,
    /// Span of observed video attached to each evaluation clip.
    pub eval_context_ms: u64,
    pub fps: f64,
    /// Label dilation radius in frames.
    pub dilation: usize,
    pub queries: usize,
    pub lambda_detection: f64,
    pub lambda_class: f64,
    pub lambda_time: f64,
    pub lambda_segmentation: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            context_ms: 5000,
            anticipation_ms: 5000,
            eval_context_ms: 30_000,
            fps: 6.25,
            dilation: 4,
            queries: 8,
            lambda_detection: 1.0,
            lambda_class: 1.0,
            lambda_time: 10.0,
            lambda_segmentation: 1.0,
        }
    }
}

pub(crate) fn seconds_to_ms(s: f64, what: &str) -> Result<u64> {
    if !s.is_finite() || s <= 0.0 {
        return Err(Error::Config(format!("{what} must be positive, got {s}")));
    }
    let ms = (s * 1000.0).round();
    if (ms - s * 1000.0).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "{what} must be a whole number of milliseconds, got {s}"
        )));
    }
    Ok(ms as u64)
}

impl BenchConfig {
    /// Defaults for the given anticipation window: 8 queries at 5 s, and
    /// the query count doubled per extra 5 s otherwise.
    pub fn for_anticipation(anticipation_s: f64) -> Result<Self> {
        let anticipation_ms = seconds_to_ms(anticipation_s, "anticipation window")?;
        let queries = ((anticipation_ms as f64 / 5000.0 * 8.0).ceil() as usize).max(1);
        let cfg = BenchConfig {
            anticipation_ms,
            queries,
            ..BenchConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_context(mut self, context_s: f64) -> Result<Self> {
        self.context_ms = seconds_to_ms(context_s, "context window")?;
        self.validate()?;
        Ok(self)
    }

    pub fn with_fps(mut self, fps: f64) -> Result<Self> {
        self.fps = fps;
        self.validate()?;
        Ok(self)
    }

    pub fn with_queries(mut self, queries: usize) -> Result<Self> {
        self.queries = queries;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_ms == 0 || self.anticipation_ms == 0 || self.eval_context_ms == 0 {
            return Err(Error::Config("window lengths must be positive".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        if self.queries == 0 {
            return Err(Error::Config("at least one query is required".into()));
        }
        if !self.context_ms.is_multiple_of(10) {
            return Err(Error::Config(
                "context window must be a multiple of 10 ms (training stride is a tenth of it)".into(),
            ));
        }
        let lambdas = [
            self.lambda_detection,
            self.lambda_class,
            self.lambda_time,
            self.lambda_segmentation,
        ];
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn anticipation_s(&self) -> f64 {
        self.anticipation_ms as f64 / 1000.0
    }

    pub fn context_s(&self) -> f64 {
        self.context_ms as f64 / 1000.0
    }

    /// Frames in the training context, `ceil(T_c * fps)`: a partial trailing
    /// frame still counts (5 s at 6.25 fps gives 32).
    pub fn context_frames(&self) -> usize {
        (self.context_s() * self.fps - 1e-9).ceil() as usize
    }

    /// Training clips advance by a tenth of the context (90 % overlap).
    pub fn train_stride_ms(&self) -> u64 {
        self.context_ms / 10
    }

    pub fn num_classes(&self) -> usize {
        NUM_CLASSES
    }
}

/// An action expressed relative to the start of a clip span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipAction {
    pub class: ActionClass,
    pub offset_ms: u64,
}

impl ClipAction {
    pub fn offset_s(&self) -> f64 {
        self.offset_ms as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalClip {
    pub clip_id: String,
    pub game_id: String,
    pub half: u8,
    pub context_start_ms: u64,
    pub context_end_ms: u64,
    pub anticipation_start_ms: u64,
    pub anticipation_end_ms: u64,
    /// Set when the anticipation window runs past the end of the half.
    #[serde(default)]
    pub partial: bool,
    /// Offsets from `anticipation_start_ms`, sorted by time.
    pub gt_actions: Vec<ClipAction>,
}

pub fn clip_id(game_id: &str, half: u8, anticipation_start_ms: u64) -> String {
    format!("{game_id}|{half}|{anticipation_start_ms}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainClip {
    pub game_id: String,
    pub half: u8,
    pub context_start_ms: u64,
    pub context_ms: u64,
    /// Offsets from `context_start_ms`, in `[0, context_ms)`.
    pub context_actions: Vec<ClipAction>,
    /// Offsets from the end of the context, in `[0, anticipation_ms)`.
    pub future_actions: Vec<ClipAction>,
}

impl TrainClip {
    pub fn context_end_ms(&self) -> u64 {
        self.context_start_ms + self.context_ms
    }
}

/// Per-frame labels over the training context: 0 is background, class
/// `k` of the retained set is stored as `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegGrid {
    pub labels: Vec<u8>,
}

impl SegGrid {
    pub fn foreground_frames(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }
}

/// Length of a half: the declared duration, or the last action time plus
/// one anticipation window.
fn half_duration(game: &GameAnnotations, half: u8, cfg: &BenchConfig) -> Option<u64> {
    let last = game.half_actions(half).map(|a| a.time_ms).max();
    match (game.half_durations_ms[usize::from(half - 1)], last) {
        (Some(d), _) => Some(d),
        (None, Some(t)) => Some(t + cfg.anticipation_ms),
        (None, None) => None,
    }
}

/// Actions of a sorted half-slice with `start <= t < end`.
fn in_span(actions: &[&ActionInstance], start: u64, end: u64) -> Vec<ClipAction> {
    let lo = actions.partition_point(|a| a.time_ms < start);
    let hi = actions.partition_point(|a| a.time_ms < end);
    actions[lo..hi]
        .iter()
        .map(|a| ClipAction {
            class: a.class,
            offset_ms: a.time_ms - start,
        })
        .collect()
}

/// Tiles each half with anticipation windows of `T_a` starting at t = 0.
/// Every action of the game lands in exactly one window; the context of a
/// clip is the (up to) `eval_context_ms` span before its window.
pub fn make_eval_clips(game: &GameAnnotations, cfg: &BenchConfig) -> Vec<EvalClip> {
    let ta = cfg.anticipation_ms;
    let mut clips = Vec::new();
    for half in 1..=2u8 {
        let actions: Vec<&ActionInstance> = game.half_actions(half).collect();
        let Some(duration) = half_duration(game, half, cfg) else {
            continue;
        };
        let mut windows = duration.div_ceil(ta);
        if let Some(last) = actions.last() {
            windows = windows.max(last.time_ms / ta + 1);
        }
        for k in 0..windows {
            let start = k * ta;
            let end = start + ta;
            clips.push(EvalClip {
                clip_id: clip_id(&game.game_id, half, start),
                game_id: game.game_id.clone(),
                half,
                context_start_ms: start.saturating_sub(cfg.eval_context_ms),
                context_end_ms: start,
                anticipation_start_ms: start,
                anticipation_end_ms: end,
                partial: end > duration,
                gt_actions: in_span(&actions, start, end),
            });
        }
    }
    clips
}

/// Sliding training clips of length `T_c` with stride `T_c / 10`, each
/// carrying its context actions and the actions of the following `T_a`.
pub fn make_train_clips(game: &GameAnnotations, cfg: &BenchConfig) -> Vec<TrainClip> {
    let (tc, ta, stride) = (cfg.context_ms, cfg.anticipation_ms, cfg.train_stride_ms());
    let mut clips = Vec::new();
    for half in 1..=2u8 {
        let actions: Vec<&ActionInstance> = game.half_actions(half).collect();
        let Some(duration) = half_duration(game, half, cfg) else {
            continue;
        };
        if duration < tc {
            continue;
        }
        let count = (duration - tc) / stride + 1;
        for k in 0..count {
            let start = k * stride;
            let end = start + tc;
            clips.push(TrainClip {
                game_id: game.game_id.clone(),
                half,
                context_start_ms: start,
                context_ms: tc,
                context_actions: in_span(&actions, start, end),
                future_actions: in_span(&actions, end, end + ta),
            });
        }
    }
    clips
}

/// Frame index of an offset, rounding half up.
pub fn frame_index(offset_ms: u64, fps: f64) -> i64 {
    (offset_ms as f64 * fps / 1000.0 + 0.5).floor() as i64
}

/// Dilated per-frame class labels. Frames within `dilation` of an action's
/// frame take its class; where dilations overlap the nearest action centre
/// wins, and on equal distance the earlier action.
pub fn segmentation_targets(clip: &TrainClip, cfg: &BenchConfig) -> SegGrid {
    let frames = cfg.context_frames();
    let radius = cfg.dilation as i64;
    let mut labels = vec![0u8; frames];
    let mut best = vec![i64::MAX; frames];
    for action in &clip.context_actions {
        let Some(index) = action.class.index() else {
            continue;
        };
        let centre = frame_index(action.offset_ms, cfg.fps);
        let lo = (centre - radius).max(0);
        let hi = (centre + radius).min(frames as i64 - 1);
        for f in lo..=hi {
            let d = (f - centre).abs();
            let slot = f as usize;
            // strict: on a tie the earlier action keeps the frame
            if d < best[slot] {
                best[slot] = d;
                labels[slot] = (index + 1) as u8;
            }
        }
    }
    SegGrid { labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::Split;

    fn game(half_ms: Option<u64>, times: &[(u8, u64, ActionClass)]) -> GameAnnotations {
        let actions = times
            .iter()
            .map(|&(half, time_ms, class)| ActionInstance {
                game_id: String::new(),
                half,
                time_ms,
                class,
            })
            .collect();
        GameAnnotations::new("g", Split::Test, [half_ms, None], actions).unwrap()
    }

    #[test]
    fn default_frames_and_queries() {
        let cfg = BenchConfig::default();
        assert_eq!(cfg.context_frames(), 32);
        assert_eq!(BenchConfig::for_anticipation(5.0).unwrap().queries, 8);
        assert_eq!(BenchConfig::for_anticipation(10.0).unwrap().queries, 16);
        assert!(BenchConfig::for_anticipation(0.0).is_err());
        assert!(BenchConfig::default().with_fps(0.0).is_err());
        assert!(BenchConfig::default().with_queries(0).is_err());
    }

    #[test]
    fn hundred_second_half_gives_twenty_windows() {
        let g = game(Some(100_000), &[(1, 97_300, ActionClass::Pass)]);
        let clips = make_eval_clips(&g, &BenchConfig::default());
        assert_eq!(clips.len(), 20);
        for (k, c) in clips.iter().enumerate() {
            assert_eq!(c.anticipation_start_ms, k as u64 * 5000);
            assert_eq!(c.anticipation_end_ms, c.anticipation_start_ms + 5000);
            assert_eq!(c.context_end_ms, c.anticipation_start_ms);
            assert!(c.context_end_ms - c.context_start_ms <= 30_000);
            assert!(!c.partial);
        }
        let hits: Vec<_> = clips.iter().filter(|c| !c.gt_actions.is_empty()).collect();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].anticipation_start_ms, 95_000);
        assert_eq!(hits[0].gt_actions[0].offset_ms, 2300);
        assert_eq!(clips[19].context_start_ms, 65_000);
        assert_eq!(clips[3].context_start_ms, 0);
    }

    #[test]
    fn tail_window_is_partial() {
        let g = game(Some(12_000), &[(1, 11_999, ActionClass::Shot)]);
        let clips = make_eval_clips(&g, &BenchConfig::default());
        assert_eq!(clips.len(), 3);
        assert!(clips[2].partial);
        assert_eq!(clips[2].gt_actions.len(), 1);
    }

    #[test]
    fn inferred_duration_covers_last_action() {
        let g = game(None, &[(1, 10_000, ActionClass::Pass), (2, 0, ActionClass::Drive)]);
        let clips = make_eval_clips(&g, &BenchConfig::default());
        let total: usize = clips.iter().map(|c| c.gt_actions.len()).sum();
        assert_eq!(total, 2);
        // half 1 lasts 15 s -> 3 windows, half 2 lasts 5 s -> 1 window
        assert_eq!(clips.len(), 4);
    }

    #[test]
    fn empty_game_has_no_clips() {
        let g = game(None, &[]);
        assert!(make_eval_clips(&g, &BenchConfig::default()).is_empty());
        assert!(make_train_clips(&g, &BenchConfig::default()).is_empty());
    }

    #[test]
    fn training_stride_and_offsets() {
        let g = game(Some(20_000), &[(1, 16_200, ActionClass::Header)]);
        let cfg = BenchConfig::default();
        let clips = make_train_clips(&g, &cfg);
        assert_eq!(clips.len(), 31);
        assert_eq!(clips[1].context_start_ms, 500);
        let c = clips.iter().find(|c| c.context_start_ms == 10_000).unwrap();
        assert_eq!(
            c.future_actions,
            vec![ClipAction {
                class: ActionClass::Header,
                offset_ms: 1200
            }]
        );
        assert!(c.context_actions.is_empty());
    }

    #[test]
    fn single_action_dilation() {
        let clip = TrainClip {
            game_id: "g".into(),
            half: 1,
            context_start_ms: 0,
            context_ms: 5000,
            context_actions: vec![ClipAction {
                class: ActionClass::Drive,
                offset_ms: 2560,
            }],
            future_actions: vec![],
        };
        let grid = segmentation_targets(&clip, &BenchConfig::default());
        assert_eq!(grid.labels.len(), 32);
        for (f, &l) in grid.labels.iter().enumerate() {
            assert_eq!(l, if (12..=20).contains(&f) { 2 } else { 0 }, "frame {f}");
        }
    }

    #[test]
    fn no_actions_is_all_background() {
        let clip = TrainClip {
            game_id: "g".into(),
            half: 1,
            context_start_ms: 0,
            context_ms: 5000,
            context_actions: vec![],
            future_actions: vec![],
        };
        let grid = segmentation_targets(&clip, &BenchConfig::default());
        assert_eq!(grid.foreground_frames(), 0);
    }

    #[test]
    fn frame_rounding_is_half_up() {
        // 80 ms at 6.25 fps is exactly half a frame
        assert_eq!(frame_index(80, 6.25), 1);
        assert_eq!(frame_index(79, 6.25), 0);
        assert_eq!(frame_index(2560, 6.25), 16);
    }
}
