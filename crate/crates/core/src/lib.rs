//! Evaluation toolkit for football action anticipation.
//!
//! Works on annotation and prediction files only: it cuts games into
//! evaluation and training clips, builds query-slot supervision for the
//! different prediction heads, computes reference losses, decodes head
//! outputs and scores predictions with mAP@δ.

pub mod annotations;
pub mod baselines;
pub mod error;
pub mod formats;
pub mod heads;
pub mod losses;
pub mod metrics;
pub mod rng;
pub mod synth;
pub mod targets;
pub mod windowing;

pub use annotations::{
    class_stats, filter_classes, parse_annotations, parse_annotations_str, ActionClass, ActionInstance, ClassStats,
    GameAnnotations, Split, NUM_CLASSES,
};
pub use baselines::{oracle_predictor, prior_predictor, random_predictor, BaselineKind, BaselineSpec};
pub use error::{Error, Result};
pub use heads::{HeadVariant, SlotOutput};
pub use losses::{loss_class, loss_detection, loss_segmentation, loss_time, total_loss, LossParts};
pub use metrics::{average_precision, decode_predictions, evaluate, match_window, EvalReport, Prediction, Tolerance};
pub use targets::{assign_for_variant, hungarian, sequential_assign, Assignment, CostMatrix, Pairing};
pub use windowing::{
    make_eval_clips, make_train_clips, segmentation_targets, BenchConfig, EvalClip, SegGrid, TrainClip,
};
