//! Ball-action annotation files: parsing, validation, class filtering and
//! per-split class statistics.
//!
//! Times are kept as integer milliseconds from the start of each half so
//! that window membership never depends on floating-point rounding.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Number of action classes kept for evaluation.
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionClass {
    Pass,
    Drive,
    HighPass,
    Header,
    Out,
    ThrowIn,
    Cross,
    BallPlayerBlock,
    Shot,
    SuccessfulTackle,
    FreeKick,
    Goal,
}

impl ActionClass {
    /// The retained classes, in dataset-table order. `index()` follows this order.
    pub const RETAINED: [ActionClass; NUM_CLASSES] = [
        ActionClass::Pass,
        ActionClass::Drive,
        ActionClass::HighPass,
        ActionClass::Header,
        ActionClass::Out,
        ActionClass::ThrowIn,
        ActionClass::Cross,
        ActionClass::BallPlayerBlock,
        ActionClass::Shot,
        ActionClass::SuccessfulTackle,
    ];

    pub const EXCLUDED: [ActionClass; 2] = [ActionClass::FreeKick, ActionClass::Goal];

    pub fn name(self) -> &'static str {
        match self {
            ActionClass::Pass => "Pass",
            ActionClass::Drive => "Drive",
            ActionClass::HighPass => "High Pass",
            ActionClass::Header => "Header",
            ActionClass::Out => "Out",
            ActionClass::ThrowIn => "Throw-in",
            ActionClass::Cross => "Cross",
            ActionClass::BallPlayerBlock => "Ball Player Block",
            ActionClass::Shot => "Shot",
            ActionClass::SuccessfulTackle => "Successful Tackle",
            ActionClass::FreeKick => "Free Kick",
            ActionClass::Goal => "Goal",
        }
    }

    pub fn is_retained(self) -> bool {
        !matches!(self, ActionClass::FreeKick | ActionClass::Goal)
    }

    /// Position among the retained classes, `None` for excluded labels.
    pub fn index(self) -> Option<usize> {
        Self::RETAINED.iter().position(|&c| c == self)
    }

    pub fn from_index(index: usize) -> Option<ActionClass> {
        Self::RETAINED.get(index).copied()
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionClass {
    type Err = Error;

    /// Accepts the canonical names and the upper-case raw labels of the
    /// ball-action files ("THROW IN", "PLAYER SUCCESSFUL TACKLE", ...).
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let class = match key.as_str() {
            "pass" => ActionClass::Pass,
            "drive" => ActionClass::Drive,
            "highpass" => ActionClass::HighPass,
            "header" => ActionClass::Header,
            "out" | "ballout" => ActionClass::Out,
            "throwin" => ActionClass::ThrowIn,
            "cross" => ActionClass::Cross,
            "ballplayerblock" => ActionClass::BallPlayerBlock,
            "shot" => ActionClass::Shot,
            "successfultackle" | "playersuccessfultackle" => ActionClass::SuccessfulTackle,
            "freekick" | "fk" => ActionClass::FreeKick,
            "goal" => ActionClass::Goal,
            _ => return Err(Error::UnknownLabel(s.to_string())),
        };
        Ok(class)
    }
}

impl Serialize for ActionClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ActionClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    Challenge,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Valid, Split::Test, Split::Challenge];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Challenge => "challenge",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "validation" | "val" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "challenge" => Ok(Split::Challenge),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

/// One annotated on-ball event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionInstance {
    pub game_id: String,
    pub half: u8,
    pub time_ms: u64,
    pub class: ActionClass,
}

impl ActionInstance {
    fn sort_key(&self) -> (u8, u64, &'static str) {
        (self.half, self.time_ms, self.class.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameAnnotations {
    pub game_id: String,
    /// Declared duration of each half, when known.
    pub half_durations_ms: [Option<u64>; 2],
    /// Sorted by (half, time, class name).
    pub actions: Vec<ActionInstance>,
    pub split: Split,
}

impl GameAnnotations {
    /// Builds a game from raw instances, sorting and validating them.
    pub fn new(
        game_id: impl Into<String>,
        split: Split,
        half_durations_ms: [Option<u64>; 2],
        mut actions: Vec<ActionInstance>,
    ) -> Result<Self> {
        let game_id = game_id.into();
        for (i, a) in actions.iter_mut().enumerate() {
            if a.half != 1 && a.half != 2 {
                return Err(Error::Parse {
                    context: game_id.clone(),
                    record: i,
                    message: format!("half must be 1 or 2, got {}", a.half),
                });
            }
            if let Some(d) = half_durations_ms[usize::from(a.half - 1)] {
                if a.time_ms > d {
                    return Err(Error::Parse {
                        context: game_id.clone(),
                        record: i,
                        message: format!("time {} ms exceeds declared half duration {} ms", a.time_ms, d),
                    });
                }
            }
            a.game_id.clone_from(&game_id);
        }
        actions.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(GameAnnotations {
            game_id,
            half_durations_ms,
            actions,
            split,
        })
    }

    /// Actions of one half, in time order.
    pub fn half_actions(&self, half: u8) -> impl Iterator<Item = &ActionInstance> {
        self.actions.iter().filter(move |a| a.half == half)
    }

    /// Serializes back to the annotation file format.
    pub fn to_json(&self) -> Value {
        let annotations: Vec<Value> = self
            .actions
            .iter()
            .map(|a| {
                serde_json::json!({
                    "gameTime": format_game_time(a.half, a.time_ms),
                    "label": a.class.name(),
                    "position": a.time_ms.to_string(),
                })
            })
            .collect();
        let mut doc = serde_json::json!({
            "game": self.game_id,
            "split": self.split.name(),
            "annotations": annotations,
        });
        if self.half_durations_ms.iter().any(Option::is_some) {
            let mut durations = serde_json::Map::new();
            for (h, d) in self.half_durations_ms.iter().enumerate() {
                if let Some(d) = d {
                    durations.insert((h + 1).to_string(), Value::from(*d));
                }
            }
            doc["halfDurations"] = Value::Object(durations);
        }
        doc
    }
}

/// Formats `"<half> - MM:SS.mmm"`.
pub fn format_game_time(half: u8, time_ms: u64) -> String {
    let minutes = time_ms / 60_000;
    let seconds = (time_ms / 1000) % 60;
    let millis = time_ms % 1000;
    format!("{half} - {minutes:02}:{seconds:02}.{millis:03}")
}

/// Parses `"<half> - MM:SS"` or `"<half> - MM:SS.mmm"`; minutes may exceed 59.
pub fn parse_game_time(s: &str) -> std::result::Result<(u8, u64), String> {
    let (half, clock) = s.split_once('-').ok_or_else(|| format!("malformed gameTime {s:?}"))?;
    let half: u8 = half
        .trim()
        .parse()
        .map_err(|_| format!("malformed half in gameTime {s:?}"))?;
    if half != 1 && half != 2 {
        return Err(format!("half must be 1 or 2 in gameTime {s:?}"));
    }
    let clock = clock.trim();
    if clock.starts_with('-') {
        return Err(format!("negative time in gameTime {s:?}"));
    }
    let (minutes, rest) = clock
        .split_once(':')
        .ok_or_else(|| format!("malformed clock in gameTime {s:?}"))?;
    let (seconds, millis) = match rest.split_once('.') {
        Some((sec, ms)) => (sec, Some(ms)),
        None => (rest, None),
    };
    let digits = |part: &str, what: &str| -> std::result::Result<u64, String> {
        if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("malformed {what} in gameTime {s:?}"));
        }
        part.parse().map_err(|_| format!("malformed {what} in gameTime {s:?}"))
    };
    let minutes = digits(minutes, "minutes")?;
    if seconds.len() != 2 {
        return Err(format!("seconds must have two digits in gameTime {s:?}"));
    }
    let seconds = digits(seconds, "seconds")?;
    if seconds >= 60 {
        return Err(format!("seconds out of range in gameTime {s:?}"));
    }
    let millis = match millis {
        Some(ms) if ms.len() == 3 => digits(ms, "milliseconds")?,
        Some(_) => return Err(format!("milliseconds must have three digits in gameTime {s:?}")),
        None => 0,
    };
    Ok((half, minutes * 60_000 + seconds * 1000 + millis))
}

fn parse_position(v: &Value) -> std::result::Result<u64, String> {
    match v {
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                Ok(u)
            } else if n.as_i64().is_some_and(|i| i < 0) {
                Err(format!("negative position {n}"))
            } else {
                Err(format!("position must be an integer, got {n}"))
            }
        }
        Value::String(s) => {
            let t = s.trim();
            if t.starts_with('-') {
                return Err(format!("negative position {s:?}"));
            }
            t.parse().map_err(|_| format!("malformed position {s:?}"))
        }
        other => Err(format!("position must be a string or integer, got {other}")),
    }
}

/// Parses an annotation document. `default_game_id` is used when the
/// document carries no `game` field.
pub fn parse_annotations_str(text: &str, default_game_id: &str) -> Result<GameAnnotations> {
    let doc: Value = serde_json::from_str(text).map_err(|source| Error::Json {
        context: default_game_id.to_string(),
        source,
    })?;
    let game_id = doc
        .get("game")
        .and_then(Value::as_str)
        .unwrap_or(default_game_id)
        .to_string();
    let parse_err = |record: usize, message: String| Error::Parse {
        context: game_id.clone(),
        record,
        message,
    };
    let split = match doc.get("split") {
        None | Some(Value::Null) => Split::Test,
        Some(Value::String(s)) => s.parse().map_err(|e: Error| parse_err(0, e.to_string()))?,
        Some(other) => return Err(parse_err(0, format!("split must be a string, got {other}"))),
    };
    let mut half_durations_ms = [None, None];
    if let Some(durations) = doc.get("halfDurations") {
        let obj = durations
            .as_object()
            .ok_or_else(|| parse_err(0, "halfDurations must be an object".into()))?;
        for (k, v) in obj {
            let half: usize = match k.as_str() {
                "1" => 0,
                "2" => 1,
                _ => return Err(parse_err(0, format!("halfDurations key {k:?} is not 1 or 2"))),
            };
            let d = parse_position(v).map_err(|m| parse_err(0, format!("halfDurations: {m}")))?;
            half_durations_ms[half] = Some(d);
        }
    }
    let records = doc
        .get("annotations")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(0, "missing `annotations` array".into()))?;

    let mut actions = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let game_time = rec
            .get("gameTime")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err(i, "missing gameTime".into()))?;
        let (half, clock_ms) = parse_game_time(game_time).map_err(|m| parse_err(i, m))?;
        let time_ms = match rec.get("position") {
            Some(p) => parse_position(p).map_err(|m| parse_err(i, m))?,
            None => clock_ms,
        };
        let label = rec
            .get("label")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err(i, "missing label".into()))?;
        let class: ActionClass = label.parse().map_err(|e: Error| parse_err(i, e.to_string()))?;
        actions.push(ActionInstance {
            game_id: game_id.clone(),
            half,
            time_ms,
            class,
        });
    }
    GameAnnotations::new(game_id, split, half_durations_ms, actions)
}

/// Reads one annotation file. Without a `game` field the game id is the
/// parent directory name for `Labels*.json` files and the file stem otherwise.
pub fn parse_annotations(path: impl AsRef<Path>) -> Result<GameAnnotations> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let default_id = if stem.starts_with("Labels") {
        path.parent()
            .and_then(Path::file_name)
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(stem)
    } else {
        stem
    };
    parse_annotations_str(&text, &default_id)
}

/// Drops Free Kick and Goal instances, keeping everything else in order.
pub fn filter_classes(game: &GameAnnotations) -> GameAnnotations {
    GameAnnotations {
        actions: game.actions.iter().filter(|a| a.class.is_retained()).cloned().collect(),
        ..game.clone()
    }
}

pub type ClassCounts = [u64; NUM_CLASSES];

/// Per-split class counts and inverse-frequency class weights.
///
/// Weights come from the training split: `weight_c = mean_count / count_c`,
/// held as exact rationals. Any two classes satisfy
/// `weight_a * count_a == weight_b * count_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub counts: BTreeMap<Split, ClassCounts>,
    pub weights: [Ratio<u64>; NUM_CLASSES],
}

impl ClassStats {
    pub fn from_counts(counts: BTreeMap<Split, ClassCounts>) -> Result<Self> {
        let train = counts.get(&Split::Train).copied().unwrap_or([0; NUM_CLASSES]);
        if let Some(i) = train.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass {
                class: ActionClass::RETAINED[i].name().to_string(),
            });
        }
        let total: u64 = train.iter().sum();
        let n = NUM_CLASSES as u64;
        let weights = train.map(|c| Ratio::new(total, n * c));
        Ok(ClassStats { counts, weights })
    }

    pub fn weight(&self, class: ActionClass) -> Option<f64> {
        class.index().map(|i| ratio_to_f64(self.weights[i]))
    }

    pub fn weights_f64(&self) -> [f64; NUM_CLASSES] {
        self.weights.map(ratio_to_f64)
    }

    /// `weight(a) / weight(b)` as an exact reduced fraction.
    pub fn weight_ratio(&self, a: ActionClass, b: ActionClass) -> Option<Ratio<u64>> {
        Some(self.weights[a.index()?] / self.weights[b.index()?])
    }

    pub fn split_counts(&self, split: Split) -> ClassCounts {
        self.counts.get(&split).copied().unwrap_or([0; NUM_CLASSES])
    }
}

fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Counts classes per split over a filtered corpus and derives weights
/// from the training split.
pub fn class_stats(corpus: &[GameAnnotations]) -> Result<ClassStats> {
    let mut counts: BTreeMap<Split, ClassCounts> = BTreeMap::new();
    for game in corpus {
        let row = counts.entry(game.split).or_insert([0; NUM_CLASSES]);
        for a in &game.actions {
            if let Some(i) = a.class.index() {
                row[i] += 1;
            }
        }
    }
    ClassStats::from_counts(counts)
}
