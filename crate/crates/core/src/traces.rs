//! Trace ingestion rules: activity tagging, length/date filtering, gap masking
//! and stratified dataset splits.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{path_length, GeoPoint, Polyline};

/// Mode of transportation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Hiking,
    Driving,
    Walking,
    Cycling,
    Bus,
    Train,
    Boat,
    Flying,
}

impl Activity {
    pub const ALL: [Activity; 8] = [
        Activity::Hiking,
        Activity::Driving,
        Activity::Walking,
        Activity::Cycling,
        Activity::Bus,
        Activity::Train,
        Activity::Boat,
        Activity::Flying,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Hiking => "hiking",
            Activity::Driving => "driving",
            Activity::Walking => "walking",
            Activity::Cycling => "cycling",
            Activity::Bus => "bus",
            Activity::Train => "train",
            Activity::Boat => "boat",
            Activity::Flying => "flying",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activity {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activity::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| TraceError::UnknownActivityName(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trace has no points")]
    EmptyTrace,
    #[error("timestamps decrease at point {0}")]
    NonMonotonicTime(usize),
    #[error("invalid calendar date {0:?}")]
    BadDate(String),
    #[error("unknown activity {0:?}")]
    UnknownActivityName(String),
}

/// A proleptic Gregorian calendar date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CalendarDate {
    year: i32,
    month: u8,
    day: u8,
}

impl CalendarDate {
    pub fn new(year: i32, month: u8, day: u8) -> Result<Self, TraceError> {
        let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
        let days = match month {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            2 if leap => 29,
            2 => 28,
            _ => 0,
        };
        if day == 0 || day > days {
            return Err(TraceError::BadDate(format!("{year:04}-{month:02}-{day:02}")));
        }
        Ok(Self { year, month, day })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    pub fn day(&self) -> u8 {
        self.day
    }

    /// Calendar date of a unix timestamp (UTC).
    pub fn from_unix_seconds(secs: i64) -> Self {
        // Howard Hinnant's civil_from_days
        let z = secs.div_euclid(86_400) + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let y = yoe + era * 400;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let d = (doy - (153 * mp + 2) / 5 + 1) as u8;
        let m = if mp < 10 { mp + 3 } else { mp - 9 } as u8;
        let y = if m <= 2 { y + 1 } else { y };
        Self {
            year: y as i32,
            month: m,
            day: d,
        }
    }
}

impl fmt::Display for CalendarDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl FromStr for CalendarDate {
    type Err = TraceError;

    /// Accepts `YYYY-MM-DD`, optionally followed by a time part (`T...`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TraceError::BadDate(s.to_string());
        let date = s.trim().get(..10).ok_or_else(bad)?;
        let mut parts = date.split('-');
        let y = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let m = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let d = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        CalendarDate::new(y, m, d).map_err(|_| bad())
    }
}

impl Serialize for CalendarDate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CalendarDate {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A coordinate with an optional unix timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPoint {
    pub point: GeoPoint,
    pub time: Option<i64>,
}

impl TimedPoint {
    pub fn new(point: GeoPoint, time: Option<i64>) -> Self {
        Self { point, time }
    }
}

// Serialized as [lat, lon] or [lat, lon, ts].
impl Serialize for TimedPoint {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let len = if self.time.is_some() { 3 } else { 2 };
        let mut seq = serializer.serialize_seq(Some(len))?;
        seq.serialize_element(&self.point.lat())?;
        seq.serialize_element(&self.point.lon())?;
        if let Some(t) = self.time {
            seq.serialize_element(&t)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for TimedPoint {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v: Vec<serde_json::Value> = Vec::deserialize(deserializer)?;
        let num = |i: usize| v.get(i).and_then(|x| x.as_f64());
        let (lat, lon) = match (v.len(), num(0), num(1)) {
            (2 | 3, Some(lat), Some(lon)) => (lat, lon),
            _ => return Err(serde::de::Error::custom("expected [lat, lon] or [lat, lon, ts]")),
        };
        let time = match v.get(2) {
            None | Some(serde_json::Value::Null) => None,
            Some(x) => Some(
                x.as_i64()
                    .ok_or_else(|| serde::de::Error::custom("timestamp must be an integer"))?,
            ),
        };
        let point = GeoPoint::new(lat, lon).map_err(serde::de::Error::custom)?;
        Ok(TimedPoint { point, time })
    }
}

fn check_points(points: &[TimedPoint]) -> Result<(), TraceError> {
    if points.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    let mut last: Option<i64> = None;
    for (i, p) in points.iter().enumerate() {
        if let Some(t) = p.time {
            if last.is_some_and(|l| t < l) {
                return Err(TraceError::NonMonotonicTime(i));
            }
            last = Some(t);
        }
    }
    Ok(())
}

/// A GPS trace as ingested, before filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub id: String,
    pub name: String,
    pub description: String,
    pub upload_date: Option<CalendarDate>,
    pub region: String,
    points: Vec<TimedPoint>,
}

impl RawTrace {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        description: impl Into<String>,
        upload_date: Option<CalendarDate>,
        region: impl Into<String>,
        points: Vec<TimedPoint>,
    ) -> Result<Self, TraceError> {
        check_points(&points)?;
        Ok(Self {
            id: id.into(),
            name: name.into(),
            description: description.into(),
            upload_date,
            region: region.into(),
            points,
        })
    }

    pub fn points(&self) -> &[TimedPoint] {
        &self.points
    }

    pub fn path_length(&self) -> f64 {
        timed_path_length(&self.points)
    }
}

pub fn timed_path_length(points: &[TimedPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| crate::geo::haversine_distance(&w[0].point, &w[1].point))
        .sum()
}

/// A trace that passed filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trace_id: String,
    pub name: String,
    pub description: String,
    pub upload_date: Option<CalendarDate>,
    pub activity: Activity,
    pub region: String,
    pub points: Vec<TimedPoint>,
    pub total_length: f64,
}

impl Trajectory {
    /// Back to a raw trace, e.g. to re-run filtering.
    pub fn to_raw(&self) -> RawTrace {
        RawTrace {
            id: self.trace_id.clone(),
            name: self.name.clone(),
            description: self.description.clone(),
            upload_date: self.upload_date,
            region: self.region.clone(),
            points: self.points.clone(),
        }
    }
}

/// Pluggable activity tagger. Returning `None` means "unknown".
pub trait ActivityClassifier {
    fn classify(&self, name: &str, description: &str) -> Option<Activity>;
}

/// Whole-word keyword lookup over the trace name, then the description.
#[derive(Debug, Clone)]
pub struct KeywordClassifier {
    table: Vec<(String, Activity)>,
}

/// Default keyword table. Words are matched whole and case-insensitively.
pub const DEFAULT_KEYWORDS: &[(&str, Activity)] = &[
    ("bike", Activity::Cycling),
    ("bikes", Activity::Cycling),
    ("biking", Activity::Cycling),
    ("bicycle", Activity::Cycling),
    ("cycle", Activity::Cycling),
    ("cycling", Activity::Cycling),
    ("cyclist", Activity::Cycling),
    ("mtb", Activity::Cycling),
    ("velo", Activity::Cycling),
    ("hike", Activity::Hiking),
    ("hikes", Activity::Hiking),
    ("hiking", Activity::Hiking),
    ("hiker", Activity::Hiking),
    ("trail", Activity::Hiking),
    ("trek", Activity::Hiking),
    ("trekking", Activity::Hiking),
    ("drive", Activity::Driving),
    ("driving", Activity::Driving),
    ("drove", Activity::Driving),
    ("car", Activity::Driving),
    ("motorcycle", Activity::Driving),
    ("motorbike", Activity::Driving),
    ("taxi", Activity::Driving),
    ("bus", Activity::Bus),
    ("buses", Activity::Bus),
    ("train", Activity::Train),
    ("trains", Activity::Train),
    ("railway", Activity::Train),
    ("rail", Activity::Train),
    ("metro", Activity::Train),
    ("subway", Activity::Train),
    ("walk", Activity::Walking),
    ("walks", Activity::Walking),
    ("walking", Activity::Walking),
    ("walked", Activity::Walking),
    ("stroll", Activity::Walking),
    ("boat", Activity::Boat),
    ("ferry", Activity::Boat),
    ("sail", Activity::Boat),
    ("sailing", Activity::Boat),
    ("kayak", Activity::Boat),
    ("canoe", Activity::Boat),
    ("flight", Activity::Flying),
    ("fly", Activity::Flying),
    ("flying", Activity::Flying),
    ("plane", Activity::Flying),
    ("paragliding", Activity::Flying),
];

impl Default for KeywordClassifier {
    fn default() -> Self {
        Self::new(DEFAULT_KEYWORDS.iter().map(|(w, a)| (w.to_string(), *a)))
    }
}

impl KeywordClassifier {
    pub fn new(table: impl IntoIterator<Item = (String, Activity)>) -> Self {
        Self {
            table: table
                .into_iter()
                .map(|(w, a)| (w.to_lowercase(), a))
                .collect(),
        }
    }

    fn lookup(&self, text: &str) -> Option<Activity> {
        let lower = text.to_lowercase();
        lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .find_map(|w| self.table.iter().find(|(k, _)| k == w).map(|(_, a)| *a))
    }
}

impl ActivityClassifier for KeywordClassifier {
    fn classify(&self, name: &str, description: &str) -> Option<Activity> {
        self.lookup(name).or_else(|| self.lookup(description))
    }
}

/// Primary classifier with an optional fallback consulted on "unknown".
pub struct ClassifierChain<'a> {
    pub primary: &'a dyn ActivityClassifier,
    pub fallback: Option<&'a dyn ActivityClassifier>,
}

impl ActivityClassifier for ClassifierChain<'_> {
    fn classify(&self, name: &str, description: &str) -> Option<Activity> {
        self.primary
            .classify(name, description)
            .or_else(|| self.fallback.and_then(|f| f.classify(name, description)))
    }
}

/// Keyword classification with the default table.
pub fn classify_activity(name: &str, description: &str) -> Option<Activity> {
    KeywordClassifier::default().classify(name, description)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_length_m: f64,
    pub max_length_m: f64,
    pub min_upload_date: CalendarDate,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_length_m: 500.0,
            max_length_m: 30_000.0,
            min_upload_date: CalendarDate {
                year: 2024,
                month: 1,
                day: 1,
            },
        }
    }
}

/// Why a trace was not accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason")]
pub enum Rejection {
    TooShort { length_m: f64 },
    TooLong { length_m: f64 },
    /// Uploaded before the date floor, or with no known upload date.
    TooOld { upload_date: Option<CalendarDate> },
    UnknownActivity,
}

impl Rejection {
    pub fn kind(&self) -> &'static str {
        match self {
            Rejection::TooShort { .. } => "TooShort",
            Rejection::TooLong { .. } => "TooLong",
            Rejection::TooOld { .. } => "TooOld",
            Rejection::UnknownActivity => "UnknownActivity",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::TooShort { length_m } => write!(f, "TooShort ({length_m:.0} m)"),
            Rejection::TooLong { length_m } => write!(f, "TooLong ({length_m:.0} m)"),
            Rejection::TooOld {
                upload_date: Some(d),
            } => write!(f, "TooOld ({d})"),
            Rejection::TooOld { upload_date: None } => f.write_str("TooOld (no upload date)"),
            Rejection::UnknownActivity => f.write_str("UnknownActivity"),
        }
    }
}

/// Applies the date floor, the length window and activity resolution.
pub fn filter_trace(
    raw: &RawTrace,
    classifier: &dyn ActivityClassifier,
    config: &FilterConfig,
) -> Result<Trajectory, Rejection> {
    match raw.upload_date {
        Some(d) if d >= config.min_upload_date => {}
        other => return Err(Rejection::TooOld { upload_date: other }),
    }
    let length = raw.path_length();
    if length < config.min_length_m {
        return Err(Rejection::TooShort { length_m: length });
    }
    if length > config.max_length_m {
        return Err(Rejection::TooLong { length_m: length });
    }
    let activity = classifier
        .classify(&raw.name, &raw.description)
        .ok_or(Rejection::UnknownActivity)?;
    Ok(Trajectory {
        trace_id: raw.id.clone(),
        name: raw.name.clone(),
        description: raw.description.clone(),
        upload_date: raw.upload_date,
        activity,
        region: raw.region.clone(),
        points: raw.points.clone(),
        total_length: length,
    })
}

/// Masked-gap difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapKind {
    Small,
    Large,
}

impl GapKind {
    /// Allowed hidden-segment length in meters, inclusive.
    pub fn length_range(self) -> (f64, f64) {
        match self {
            GapKind::Small => (200.0, 500.0),
            GapKind::Large => (500.0, 2900.0),
        }
    }

    /// Bounding-box buffer used when fetching the road network.
    pub fn bbox_buffer_m(self) -> f64 {
        match self {
            GapKind::Small => 150.0,
            GapKind::Large => 500.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GapKind::Small => "small",
            GapKind::Large => "large",
        }
    }
}

impl fmt::Display for GapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GapKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(GapKind::Small),
            "large" => Ok(GapKind::Large),
            other => Err(format!("unknown gap kind {other:?}")),
        }
    }
}

/// Context that must survive on each side of the gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    pub min_context_points: usize,
    pub min_context_length_m: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            min_context_points: 5,
            min_context_length_m: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("no placement of a {kind} gap satisfies the context constraints")]
    InfeasibleMask { kind: GapKind },
}

/// A trajectory with one contiguous hidden segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedTask {
    pub task_id: String,
    pub trace_id: String,
    pub gap_kind: GapKind,
    pub activity: Activity,
    pub region: String,
    pub prefix: Vec<TimedPoint>,
    pub ground_truth: Vec<TimedPoint>,
    pub suffix: Vec<TimedPoint>,
    pub p_s: GeoPoint,
    pub p_e: GeoPoint,
    #[serde(rename = "masked_length_m")]
    pub masked_length: f64,
}

impl MaskedTask {
    pub fn ground_truth_polyline(&self) -> Polyline {
        self.ground_truth.iter().map(|p| p.point).collect()
    }

    /// prefix ∥ ground truth ∥ suffix.
    pub fn reassemble(&self) -> Vec<TimedPoint> {
        let mut out = Vec::with_capacity(self.prefix.len() + self.ground_truth.len() + self.suffix.len());
        out.extend_from_slice(&self.prefix);
        out.extend_from_slice(&self.ground_truth);
        out.extend_from_slice(&self.suffix);
        out
    }
}

/// Task id for one masked variant of a trace.
pub fn task_id(trace_id: &str, kind: GapKind) -> String {
    format!("{trace_id}-{kind}")
}

/// Hidden run `[first, last]` (inclusive point indices) and its length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskPlacement {
    pub first: usize,
    pub last: usize,
    pub length: f64,
}

/// Cumulative path length at each point index.
fn cumulative(points: &[TimedPoint]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        acc += crate::geo::haversine_distance(&w[0].point, &w[1].point);
        cum.push(acc);
    }
    cum
}

/// Feasible start/end index bounds for the hidden run.
fn context_bounds(cum: &[f64], config: &MaskConfig) -> Option<(usize, usize)> {
    let n = cum.len();
    let k = config.min_context_points.max(1);
    if n < 2 * k + 1 {
        return None;
    }
    // prefix = [0, first): needs `first >= k` points and cum[first-1] >= min
    let first_min = (k..n).find(|&i| cum[i - 1] >= config.min_context_length_m)?;
    // suffix = (last, n): needs n-1-last >= k and cum[n-1] - cum[last+1] >= min
    let total = cum[n - 1];
    let last_max = (0..=n - 1 - k)
        .rev()
        .find(|&j| total - cum[j + 1] >= config.min_context_length_m)?;
    (first_min <= last_max).then_some((first_min, last_max))
}

/// The in-range run whose length is closest to `target`; ties go to the
/// earliest start, then the earliest end.
pub fn best_placement(
    points: &[TimedPoint],
    range: (f64, f64),
    target: f64,
    config: &MaskConfig,
) -> Option<MaskPlacement> {
    let cum = cumulative(points);
    let (first_min, last_max) = context_bounds(&cum, config)?;
    let (lo, hi) = range;
    let mut best: Option<(f64, MaskPlacement)> = None;
    for i in first_min..=last_max {
        let window = &cum[i..=last_max];
        // first index with length >= target
        let k = window.partition_point(|&c| c - cum[i] < target);
        for j in [k.checked_sub(1), Some(k)].into_iter().flatten() {
            if j >= window.len() {
                continue;
            }
            let length = window[j] - cum[i];
            if length < lo || length > hi {
                continue;
            }
            let diff = (length - target).abs();
            if best.as_ref().is_none_or(|(d, _)| diff < *d) {
                best = Some((
                    diff,
                    MaskPlacement {
                        first: i,
                        last: i + j,
                        length,
                    },
                ));
            }
        }
    }
    best.map(|(_, p)| p)
}

/// Gap-length target for a given kind and seed.
pub fn sample_target(kind: GapKind, seed: u64) -> f64 {
    let (lo, hi) = kind.length_range();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.random_range(lo..=hi)
}

/// Hides the contiguous run whose length is closest to a seeded uniform
/// target in the kind's length range.
pub fn make_masked_task(
    traj: &Trajectory,
    kind: GapKind,
    seed: u64,
    config: &MaskConfig,
) -> Result<MaskedTask, MaskError> {
    let target = sample_target(kind, seed);
    let placement = best_placement(&traj.points, kind.length_range(), target, config)
        .ok_or(MaskError::InfeasibleMask { kind })?;
    let MaskPlacement { first, last, .. } = placement;
    let prefix = traj.points[..first].to_vec();
    let ground_truth = traj.points[first..=last].to_vec();
    let suffix = traj.points[last + 1..].to_vec();
    let masked_length = timed_path_length(&ground_truth);
    Ok(MaskedTask {
        task_id: task_id(&traj.trace_id, kind),
        trace_id: traj.trace_id.clone(),
        gap_kind: kind,
        activity: traj.activity,
        region: traj.region.clone(),
        p_s: prefix[prefix.len() - 1].point,
        p_e: suffix[0].point,
        prefix,
        ground_truth,
        suffix,
        masked_length,
    })
}

/// Mixes a run seed with a trace id and gap kind (FNV-1a) so each variant of
/// each trace draws an independent, reproducible target.
pub fn derive_seed(run_seed: u64, trace_id: &str, kind: GapKind) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ run_seed;
    for b in trace_id.bytes().chain(kind.as_str().bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub task_ids: Vec<String>,
}

/// What the splitter needs to know about a task.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitKey {
    pub task_id: String,
    pub trace_id: String,
    pub activity: Activity,
    pub region: String,
}

impl From<&MaskedTask> for SplitKey {
    fn from(t: &MaskedTask) -> Self {
        Self {
            task_id: t.task_id.clone(),
            trace_id: t.trace_id.clone(),
            activity: t.activity,
            region: t.region.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
}

/// Largest-remainder apportionment of `n` units over `ratios`.
pub fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact = ratios.map(|r| r * n as f64);
    let mut counts = exact.map(|e| crate::math::floor(e + 1e-9) as usize);
    let mut remaining = n.saturating_sub(counts.iter().sum());
    let mut order = [0usize, 1, 2];
    // stable: equal remainders keep train, dev, test order
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra)
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    counts
}

/// Splits tasks per (activity, region) stratum. Traces are the allotment
/// unit, so every masked variant of one trace lands in the same split.
pub fn stratified_split(
    tasks: &[SplitKey],
    ratios: [f64; 3],
    seed: u64,
) -> Result<[DatasetSplit; 3], SplitError> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(SplitError::BadRatios(ratios));
    }
    // trace -> (stratum, task ids)
    let mut traces: BTreeMap<&str, ((Activity, &str), Vec<&str>)> = BTreeMap::new();
    for t in tasks {
        traces
            .entry(t.trace_id.as_str())
            .or_insert_with(|| ((t.activity, t.region.as_str()), Vec::new()))
            .1
            .push(t.task_id.as_str());
    }
    let mut strata: BTreeMap<(Activity, &str), Vec<&str>> = BTreeMap::new();
    for (trace, (stratum, _)) in &traces {
        strata.entry(*stratum).or_default().push(trace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: [Vec<String>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        let counts = apportion(members.len(), ratios);
        let mut it = members.iter();
        for (split, &count) in counts.iter().enumerate() {
            for trace in it.by_ref().take(count) {
                out[split].extend(traces[trace].1.iter().map(|s| s.to_string()));
            }
        }
    }
    let [train, dev, test] = out.map(|mut v| {
        v.sort();
        v
    });
    Ok([
        DatasetSplit {
            name: SplitName::Train,
            task_ids: train,
        },
        DatasetSplit {
            name: SplitName::Dev,
            task_ids: dev,
        },
        DatasetSplit {
            name: SplitName::Test,
            task_ids: test,
        },
    ])
}

/// Path length of the hidden points, for callers holding only a polyline.
pub fn masked_length(points: &[GeoPoint]) -> f64 {
    path_length(points)
}
