//! Python bindings. Structured values cross the boundary as plain Python
//! dicts and lists with the same field names as the JSON file formats.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use anticipation_bench::baselines::run_baseline;
use anticipation_bench::formats::{EvalClipsFile, PredictionsFile};
use anticipation_bench::heads::{decode_time as decode_time_raw, encode_time as encode_time_raw};
use anticipation_bench::metrics::ScoredTime;
use anticipation_bench::windowing::ClipAction;
use anticipation_bench::{
    self as bench, ActionClass, BaselineKind, BaselineSpec, BenchConfig, CostMatrix, EvalClip, GameAnnotations,
    HeadVariant, LossParts, Prediction, SlotOutput, Split, Tolerance, TrainClip,
};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_error)
}

fn game_from_py(obj: &Bound<'_, PyAny>) -> PyResult<GameAnnotations> {
    let value: serde_json::Value = from_py(obj)?;
    bench::parse_annotations_str(&value.to_string(), "game").map_err(value_error)
}

fn variant(name: &str) -> PyResult<HeadVariant> {
    name.parse().map_err(value_error)
}

/// Benchmark settings: window lengths, frame rate, query count and loss weights.
#[pyclass(name = "BenchConfig", from_py_object)]
#[derive(Clone)]
struct PyBenchConfig {
    inner: BenchConfig,
}

#[pymethods]
impl PyBenchConfig {
    #[new]
    #[pyo3(signature = (anticipation_s = 5.0, context_s = 5.0, fps = 6.25, queries = None))]
    fn new(anticipation_s: f64, context_s: f64, fps: f64, queries: Option<usize>) -> PyResult<Self> {
        let mut cfg = BenchConfig::for_anticipation(anticipation_s)
            .and_then(|c| c.with_context(context_s))
            .and_then(|c| c.with_fps(fps))
            .map_err(value_error)?;
        if let Some(q) = queries {
            cfg = cfg.with_queries(q).map_err(value_error)?;
        }
        Ok(PyBenchConfig { inner: cfg })
    }

    #[getter]
    fn anticipation_s(&self) -> f64 {
        self.inner.anticipation_s()
    }

    #[getter]
    fn context_s(&self) -> f64 {
        self.inner.context_s()
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.inner.fps
    }

    #[getter]
    fn queries(&self) -> usize {
        self.inner.queries
    }

    #[getter]
    fn context_frames(&self) -> usize {
        self.inner.context_frames()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "BenchConfig(anticipation_s={}, context_s={}, fps={}, queries={})",
            self.inner.anticipation_s(),
            self.inner.context_s(),
            self.inner.fps,
            self.inner.queries
        )
    }
}

fn config(cfg: Option<PyBenchConfig>) -> BenchConfig {
    cfg.map(|c| c.inner).unwrap_or_default()
}

/// Names of the evaluated classes, in index order.
#[pyfunction]
fn class_names() -> Vec<&'static str> {
    ActionClass::RETAINED.iter().map(|c| c.name()).collect()
}

/// Parses an annotation file into a normalized game dict.
#[pyfunction]
fn parse_annotations<'py>(py: Python<'py>, path: &str) -> PyResult<Bound<'py, PyAny>> {
    let game = bench::parse_annotations(path).map_err(value_error)?;
    to_py(py, &game.to_json())
}

/// Parses annotation JSON text into a normalized game dict.
#[pyfunction]
#[pyo3(signature = (text, game_id = "game"))]
fn parse_annotations_str<'py>(py: Python<'py>, text: &str, game_id: &str) -> PyResult<Bound<'py, PyAny>> {
    let game = bench::parse_annotations_str(text, game_id).map_err(value_error)?;
    to_py(py, &game.to_json())
}

/// Drops Free Kick and Goal from a game dict.
#[pyfunction]
fn filter_classes<'py>(game: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let g = bench::filter_classes(&game_from_py(game)?);
    to_py(game.py(), &g.to_json())
}

/// Per-split counts and training-split class weights of a list of games.
/// Weights are returned both as floats and as exact `[numerator, denominator]`.
#[pyfunction]
fn class_stats<'py>(py: Python<'py>, games: Vec<Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
    let games: Vec<GameAnnotations> = games.iter().map(game_from_py).collect::<PyResult<_>>()?;
    let stats = bench::class_stats(&games).map_err(value_error)?;
    let counts: std::collections::BTreeMap<&str, Vec<u64>> =
        stats.counts.iter().map(|(s, c)| (s.name(), c.to_vec())).collect();
    let exact: Vec<[u64; 2]> = stats.weights.iter().map(|w| [*w.numer(), *w.denom()]).collect();
    let doc = serde_json::json!({
        "classes": class_names(),
        "counts": counts,
        "weights": stats.weights_f64().to_vec(),
        "weights_exact": exact,
    });
    to_py(py, &doc)
}

#[pyfunction]
#[pyo3(signature = (game, config = None))]
fn make_eval_clips<'py>(game: &Bound<'py, PyAny>, config: Option<PyBenchConfig>) -> PyResult<Bound<'py, PyAny>> {
    let clips = bench::make_eval_clips(&game_from_py(game)?, &self::config(config));
    to_py(game.py(), &clips)
}

#[pyfunction]
#[pyo3(signature = (game, config = None))]
fn make_train_clips<'py>(game: &Bound<'py, PyAny>, config: Option<PyBenchConfig>) -> PyResult<Bound<'py, PyAny>> {
    let clips = bench::make_train_clips(&game_from_py(game)?, &self::config(config));
    to_py(game.py(), &clips)
}

/// Dilated per-frame labels of a training clip (0 = background).
#[pyfunction]
#[pyo3(signature = (clip, config = None))]
fn segmentation_targets(clip: &Bound<'_, PyAny>, config: Option<PyBenchConfig>) -> PyResult<Vec<u8>> {
    let clip: TrainClip = from_py(clip)?;
    Ok(bench::segmentation_targets(&clip, &self::config(config)).labels)
}

/// Minimum-cost pairing of a (possibly rectangular) cost matrix.
/// Returns `(pairs, cost)` with `pairs` sorted by row.
#[pyfunction]
fn hungarian(rows: Vec<Vec<f64>>) -> PyResult<(Vec<(usize, usize)>, f64)> {
    let cost = CostMatrix::from_rows(&rows).map_err(value_error)?;
    let p = bench::hungarian(&cost);
    Ok((p.pairs, p.cost))
}

/// Slot `i` takes ground-truth `i` while both last.
#[pyfunction]
fn sequential_assign(gt_len: usize, queries: usize) -> Vec<Option<usize>> {
    bench::sequential_assign(gt_len, queries).slots
}

/// Per-slot targets of a head variant for one anticipation window.
#[pyfunction]
#[pyo3(signature = (variant, gt, outputs = None, config = None))]
fn assign_for_variant<'py>(
    py: Python<'py>,
    variant: &str,
    gt: &Bound<'py, PyAny>,
    outputs: Option<&Bound<'py, PyAny>>,
    config: Option<PyBenchConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    let gt: Vec<ClipAction> = from_py(gt)?;
    let outputs: Option<Vec<SlotOutput>> = outputs.map(from_py).transpose()?;
    let a = bench::assign_for_variant(self::variant(variant)?, &gt, outputs.as_deref(), &self::config(config))
        .map_err(value_error)?;
    to_py(py, &a)
}

/// Detection, class and time losses of slot outputs against their ground
/// truth, plus the weighted anticipation total.
#[pyfunction]
#[pyo3(signature = (variant, gt, outputs, config = None, class_weights = None))]
fn losses<'py>(
    py: Python<'py>,
    variant: &str,
    gt: &Bound<'py, PyAny>,
    outputs: &Bound<'py, PyAny>,
    config: Option<PyBenchConfig>,
    class_weights: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = self::config(config);
    let gt: Vec<ClipAction> = from_py(gt)?;
    let outputs: Vec<SlotOutput> = from_py(outputs)?;
    let weights = class_weights.unwrap_or_else(|| vec![1.0; bench::NUM_CLASSES]);
    let a = bench::assign_for_variant(self::variant(variant)?, &gt, Some(&outputs), &cfg).map_err(value_error)?;
    let parts = LossParts {
        detection: bench::loss_detection(&outputs, &a).map_err(value_error)?,
        class: bench::loss_class(&outputs, &a, &weights).map_err(value_error)?,
        time: bench::loss_time(&outputs, &a, &cfg).map_err(value_error)?,
        segmentation: 0.0,
    };
    let doc = serde_json::json!({
        "detection": parts.detection,
        "class": parts.class,
        "time": parts.time,
        "anticipation": parts.anticipation(&cfg),
    });
    to_py(py, &doc)
}

/// Weighted cross-entropy of per-frame `(C + 1)` distributions against a
/// label grid.
#[pyfunction]
#[pyo3(signature = (frame_probs, labels, class_weights = None))]
fn loss_segmentation(frame_probs: Vec<Vec<f64>>, labels: Vec<u8>, class_weights: Option<Vec<f64>>) -> PyResult<f64> {
    let weights = class_weights.unwrap_or_else(|| vec![1.0; bench::NUM_CLASSES]);
    bench::loss_segmentation(&frame_probs, &bench::SegGrid { labels }, &weights).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (detection, class_, time, segmentation, config = None))]
fn total_loss(detection: f64, class_: f64, time: f64, segmentation: f64, config: Option<PyBenchConfig>) -> f64 {
    let parts = LossParts {
        detection,
        class: class_,
        time,
        segmentation,
    };
    bench::total_loss(&parts, &self::config(config))
}

#[pyfunction]
fn encode_time(tau: f64) -> f64 {
    encode_time_raw(tau)
}

/// Returns `(tau, clamped)`.
#[pyfunction]
fn decode_time(raw: f64) -> (f64, bool) {
    decode_time_raw(raw)
}

/// Greedy TP flags for `(time_s, confidence)` predictions of one class in
/// one clip. `delta` is seconds, or `None` for unlimited tolerance.
#[pyfunction]
#[pyo3(signature = (predictions, gt_times, delta = None))]
fn match_window(predictions: Vec<(f64, f64)>, gt_times: Vec<f64>, delta: Option<f64>) -> Vec<bool> {
    let preds: Vec<ScoredTime> = predictions
        .into_iter()
        .map(|(time_s, confidence)| ScoredTime { time_s, confidence })
        .collect();
    let tol = delta.map_or(Tolerance::Infinite, Tolerance::Seconds);
    bench::match_window(&preds, &gt_times, tol)
}

#[pyfunction]
fn average_precision(ranked_flags: Vec<bool>, total_gt: usize) -> Option<f64> {
    bench::average_precision(&ranked_flags, total_gt)
}

/// Decodes the slot outputs of one clip into predictions.
#[pyfunction]
#[pyo3(signature = (clip_id, outputs, variant, config = None))]
fn decode_predictions<'py>(
    py: Python<'py>,
    clip_id: &str,
    outputs: &Bound<'py, PyAny>,
    variant: &str,
    config: Option<PyBenchConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    let outputs: Vec<SlotOutput> = from_py(outputs)?;
    let d = bench::decode_predictions(clip_id, &outputs, self::variant(variant)?, &self::config(config))
        .map_err(value_error)?;
    to_py(py, &d.predictions)
}

/// Scores predictions against evaluation clips and returns the report dict.
#[pyfunction]
#[pyo3(signature = (predictions, clips, anticipation_s = 5.0, deltas = "1,2,3,4,5,inf"))]
fn evaluate<'py>(
    predictions: &Bound<'py, PyAny>,
    clips: &Bound<'py, PyAny>,
    anticipation_s: f64,
    deltas: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let preds: Vec<Prediction> = from_py(predictions)?;
    let clips: Vec<EvalClip> = from_py(clips)?;
    let tols = Tolerance::parse_list(deltas).map_err(value_error)?;
    let report = bench::evaluate(&preds, &clips, anticipation_s, &tols).map_err(value_error)?;
    to_py(predictions.py(), &report)
}

/// Scores a prediction file against an evaluation-clips file and returns
/// the report rendered as `json`, `csv` or `md`.
#[pyfunction]
#[pyo3(signature = (gt_path, pred_path, deltas = "1,2,3,4,5,inf", format = "json"))]
fn evaluate_files(gt_path: &str, pred_path: &str, deltas: &str, format: &str) -> PyResult<String> {
    let clips: EvalClipsFile = bench::formats::read_json(gt_path.as_ref()).map_err(value_error)?;
    let preds: PredictionsFile = bench::formats::read_json(pred_path.as_ref()).map_err(value_error)?;
    let tols = Tolerance::parse_list(deltas).map_err(value_error)?;
    let report =
        bench::evaluate(&preds.predictions, &clips.clips, clips.anticipation_s(), &tols).map_err(value_error)?;
    match format {
        "json" => Ok(report.to_json()),
        "csv" => Ok(report.to_csv()),
        "md" => Ok(report.to_markdown()),
        other => Err(value_error(format!("unknown report format {other:?}"))),
    }
}

/// Predictions of a synthetic baseline (`oracle`, `prior` or `random`).
/// The prior needs `train_counts`, one count per evaluated class.
#[pyfunction]
#[pyo3(signature = (kind, clips, anticipation_s = 5.0, seed = 0, noise_std = 0.0, drop_prob = 0.0, train_counts = None))]
#[allow(clippy::too_many_arguments)]
fn baseline<'py>(
    py: Python<'py>,
    kind: &str,
    clips: &Bound<'py, PyAny>,
    anticipation_s: f64,
    seed: u64,
    noise_std: f64,
    drop_prob: f64,
    train_counts: Option<Vec<u64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: BaselineKind = kind.parse().map_err(value_error)?;
    let clips: Vec<EvalClip> = from_py(clips)?;
    let spec = BaselineSpec {
        seed,
        noise_std_s: noise_std,
        drop_prob,
        ..BaselineSpec::new(kind)
    };
    let counts = train_counts
        .map(|c| {
            <[u64; bench::NUM_CLASSES]>::try_from(c)
                .map_err(|c| value_error(format!("expected {} counts, got {}", bench::NUM_CLASSES, c.len())))
        })
        .transpose()?;
    let preds = run_baseline(&spec, &clips, counts.as_ref(), anticipation_s).map_err(value_error)?;
    to_py(py, &preds)
}

/// Synthetic game dict with the given id, split and seed.
#[pyfunction]
#[pyo3(signature = (game_id, split = "test", seed = 0))]
fn synth_game<'py>(py: Python<'py>, game_id: &str, split: &str, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let split: Split = split.parse().map_err(value_error)?;
    let spec = bench::synth::SynthSpec {
        seed,
        ..Default::default()
    };
    let game = bench::synth::synth_game(game_id, split, &spec).map_err(value_error)?;
    to_py(py, &game.to_json())
}

#[pymodule]
fn anticipation_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBenchConfig>()?;
    m.add("NUM_CLASSES", bench::NUM_CLASSES)?;
    m.add(
        "HEAD_VARIANTS",
        HeadVariant::ALL.iter().map(|v| v.name()).collect::<Vec<_>>(),
    )?;
    m.add_function(wrap_pyfunction!(class_names, m)?)?;
    m.add_function(wrap_pyfunction!(parse_annotations, m)?)?;
    m.add_function(wrap_pyfunction!(parse_annotations_str, m)?)?;
    m.add_function(wrap_pyfunction!(filter_classes, m)?)?;
    m.add_function(wrap_pyfunction!(class_stats, m)?)?;
    m.add_function(wrap_pyfunction!(make_eval_clips, m)?)?;
    m.add_function(wrap_pyfunction!(make_train_clips, m)?)?;
    m.add_function(wrap_pyfunction!(segmentation_targets, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(sequential_assign, m)?)?;
    m.add_function(wrap_pyfunction!(assign_for_variant, m)?)?;
    m.add_function(wrap_pyfunction!(losses, m)?)?;
    m.add_function(wrap_pyfunction!(loss_segmentation, m)?)?;
    m.add_function(wrap_pyfunction!(total_loss, m)?)?;
    m.add_function(wrap_pyfunction!(encode_time, m)?)?;
    m.add_function(wrap_pyfunction!(decode_time, m)?)?;
    m.add_function(wrap_pyfunction!(match_window, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(decode_predictions, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_files, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(synth_game, m)?)?;
    Ok(())
}
