//! Reconstruction scores (MAE and PoT in both directions, with F1 means),
//! stage-quality diagnostics for plan-bearing methods, and aggregation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{
    circular_angle_error, haversine_distance, initial_bearing, path_length,
    point_to_polyline_distance, Cardinal, GeoPoint,
};
use crate::llm::{GeometrySlice, NavigationPlan, Reconstruction};
use crate::roadnet::{snap_point, RoadNetwork};
use crate::traces::{Activity, GapKind, MaskedTask};

/// Per-axis tolerance, degrees, for "coordinate is a geometry vertex".
pub const VERTEX_MATCH_TOLERANCE_DEG: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// PoT tolerance, meters.
    pub tau: f64,
    /// Step-to-step jumps longer than this count as large gaps, meters.
    pub large_gap_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            tau: 10.0,
            large_gap_threshold: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("ground truth has zero length")]
    DegenerateGroundTruth,
    #[error("reconstruction has zero length")]
    DegenerateReconstruction,
    #[error("trajectory has no points")]
    EmptyTrajectory,
}

fn mean_min_point_distance(from: &[GeoPoint], to: &[GeoPoint]) -> f64 {
    let mut sum = 0.0;
    for p in from {
        let mut best = f64::INFINITY;
        for q in to {
            let d = haversine_distance(p, q);
            if d < best {
                best = d;
            }
        }
        sum += best;
    }
    sum
}

fn mae_directional(
    from: &[GeoPoint],
    to: &[GeoPoint],
    degenerate: MetricError,
) -> Result<f64, MetricError> {
    if from.is_empty() || to.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    let l = path_length(from);
    if l == 0.0 {
        return Err(degenerate);
    }
    Ok(mean_min_point_distance(from, to) / (from.len() as f64 * l) * 100.0)
}

/// Mean nearest-point deviation of ground-truth points from `r`, as a
/// percentage of the ground-truth length.
pub fn mae_gr(g: &[GeoPoint], r: &[GeoPoint]) -> Result<f64, MetricError> {
    mae_directional(g, r, MetricError::DegenerateGroundTruth)
}

/// Mirror of [`mae_gr`], normalized by the reconstruction length.
pub fn mae_rg(r: &[GeoPoint], g: &[GeoPoint]) -> Result<f64, MetricError> {
    mae_directional(r, g, MetricError::DegenerateReconstruction)
}

/// Harmonic mean; `0` when both inputs are `0`.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn mae_f1(a: f64, b: f64) -> f64 {
    harmonic_mean(a, b)
}

pub fn pot_f1(a: f64, b: f64) -> f64 {
    harmonic_mean(a, b)
}

fn pot_directional(from: &[GeoPoint], to: &[GeoPoint], tau: f64) -> f64 {
    if from.is_empty() {
        return 0.0;
    }
    let hits = from
        .iter()
        .filter(|p| point_to_polyline_distance(p, to).is_some_and(|d| d <= tau))
        .count();
    hits as f64 / from.len() as f64 * 100.0
}

/// Percentage of ground-truth points within `tau` meters of a segment of `r`.
pub fn pot_gr(g: &[GeoPoint], r: &[GeoPoint], tau: f64) -> f64 {
    pot_directional(g, r, tau)
}

/// Percentage of reconstruction points within `tau` meters of a segment of `g`.
pub fn pot_rg(r: &[GeoPoint], g: &[GeoPoint], tau: f64) -> f64 {
    pot_directional(r, g, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionScores {
    pub pot_gr: f64,
    pub pot_rg: f64,
    pub pot_f1: f64,
    pub mae_gr: f64,
    pub mae_rg: f64,
    pub mae_f1: f64,
}

pub fn score_reconstruction(
    g: &[GeoPoint],
    r: &[GeoPoint],
    cfg: &MetricsConfig,
) -> Result<ReconstructionScores, MetricError> {
    let mae_gr = mae_gr(g, r)?;
    let mae_rg = mae_rg(r, g)?;
    let pot_gr = pot_gr(g, r, cfg.tau);
    let pot_rg = pot_rg(r, g, cfg.tau);
    Ok(ReconstructionScores {
        pot_gr,
        pot_rg,
        pot_f1: pot_f1(pot_gr, pot_rg),
        mae_gr,
        mae_rg,
        mae_f1: mae_f1(mae_gr, mae_rg),
    })
}

/// Percentage of consecutive distinct road pairs in the plan that share an
/// intersection. A plan naming a single road scores 100.
pub fn plan_connectivity(plan: &NavigationPlan, net: &RoadNetwork) -> f64 {
    road_sequence_connectivity(&plan.mentioned_road_ids(), net)
}

pub fn road_sequence_connectivity(road_ids: &[i64], net: &RoadNetwork) -> f64 {
    let mut pairs = 0usize;
    let mut connected = 0usize;
    for w in road_ids.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        pairs += 1;
        if net.are_adjacent(w[0], w[1]) {
            connected += 1;
        }
    }
    if pairs == 0 {
        100.0
    } else {
        connected as f64 / pairs as f64 * 100.0
    }
}

/// Share of referenced road ids and node anchors that exist in `net`,
/// pooled over both kinds (distinct ids per kind). `None` when the plan
/// references nothing.
pub fn network_adherence(plan: &NavigationPlan, net: &RoadNetwork) -> Option<f64> {
    let roads: BTreeSet<i64> = plan.mentioned_road_ids().into_iter().collect();
    let anchors: BTreeSet<i64> = plan.anchor_node_ids().into_iter().collect();
    let total = roads.len() + anchors.len();
    if total == 0 {
        return None;
    }
    let node_ids: BTreeSet<i64> = net
        .roads()
        .values()
        .flat_map(|r| r.node_ids.iter().copied())
        .collect();
    let valid = roads.iter().filter(|r| net.road(**r).is_some()).count()
        + anchors.iter().filter(|n| node_ids.contains(n)).count();
    Some(valid as f64 / total as f64 * 100.0)
}

fn matches_any(p: &GeoPoint, candidates: &[GeoPoint]) -> bool {
    candidates
        .iter()
        .any(|v| p.approx_eq(v, VERTEX_MATCH_TOLERANCE_DEG))
}

/// Raw Stage-2 coordinates of one step with the vertices and boundary
/// anchors they may legitimately reproduce.
#[derive(Debug, Clone, Copy)]
pub struct StepCoordinates<'a> {
    pub raw: &'a [GeoPoint],
    pub geometry: &'a [GeoPoint],
    pub anchors: &'a [GeoPoint],
}

/// Percentage of raw coordinates that are geometry vertices or anchors.
/// `None` when no coordinates were generated.
pub fn geometry_adherence(steps: &[StepCoordinates<'_>]) -> Option<f64> {
    let mut total = 0usize;
    let mut valid = 0usize;
    for s in steps {
        for p in s.raw {
            total += 1;
            if matches_any(p, s.geometry) || matches_any(p, s.anchors) {
                valid += 1;
            }
        }
    }
    (total > 0).then(|| valid as f64 / total as f64 * 100.0)
}

/// Circular error between a stated direction and an observed bearing.
pub fn step_bearing_error(stated: Cardinal, actual_bearing: f64) -> f64 {
    circular_angle_error(stated.canonical_bearing(), actual_bearing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingErrorSummary {
    pub mean: Option<f64>,
    pub scored: usize,
    pub skipped: usize,
}

/// Mean bearing error over steps given as (stated direction, start, end).
/// Steps without a direction or with coincident endpoints are skipped.
pub fn bearing_error(steps: &[(Option<Cardinal>, GeoPoint, GeoPoint)]) -> BearingErrorSummary {
    let mut sum = 0.0;
    let mut scored = 0usize;
    let mut skipped = 0usize;
    for (dir, a, b) in steps {
        match (dir, initial_bearing(a, b)) {
            (Some(d), Ok(actual)) => {
                sum += step_bearing_error(*d, actual);
                scored += 1;
            }
            _ => skipped += 1,
        }
    }
    BearingErrorSummary {
        mean: (scored > 0).then(|| sum / scored as f64),
        scored,
        skipped,
    }
}

/// (number of steps, number of step-to-step jumps strictly above the
/// threshold). Empty steps are ignored when measuring jumps.
pub fn step_gap_stats(per_step_points: &[Vec<GeoPoint>], threshold: f64) -> (usize, usize) {
    let mut gaps = 0;
    let mut prev_last: Option<GeoPoint> = None;
    for step in per_step_points {
        let (Some(first), Some(last)) = (step.first(), step.last()) else {
            continue;
        };
        if let Some(pl) = prev_last {
            if haversine_distance(&pl, first) > threshold {
                gaps += 1;
            }
        }
        prev_last = Some(*last);
    }
    (per_step_points.len(), gaps)
}

/// One evaluated task. Metric fields are `None` when the reconstruction was
/// missing or the metric does not apply to the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task_id: String,
    pub method: String,
    pub gap_kind: GapKind,
    pub activity: Activity,
    pub region: String,
    pub pot_gr: Option<f64>,
    pub pot_rg: Option<f64>,
    pub pot_f1: Option<f64>,
    pub mae_gr: Option<f64>,
    pub mae_rg: Option<f64>,
    pub mae_f1: Option<f64>,
    pub connectivity: Option<f64>,
    pub network_adherence: Option<f64>,
    pub geometry_adherence: Option<f64>,
    pub bearing_error_mean: Option<f64>,
    pub num_steps: usize,
    pub num_large_gaps: usize,
    pub fallback_flag: bool,
    #[serde(default)]
    pub missing_reconstruction: bool,
}

impl EvalRecord {
    pub fn apply_scores(&mut self, s: &ReconstructionScores) {
        self.pot_gr = Some(s.pot_gr);
        self.pot_rg = Some(s.pot_rg);
        self.pot_f1 = Some(s.pot_f1);
        self.mae_gr = Some(s.mae_gr);
        self.mae_rg = Some(s.mae_rg);
        self.mae_f1 = Some(s.mae_f1);
    }
}

/// Numeric columns averaged by [`aggregate`], in output order.
pub const AGGREGATE_COLUMNS: [&str; 13] = [
    "pot_gr",
    "pot_rg",
    "pot_f1",
    "mae_gr",
    "mae_rg",
    "mae_f1",
    "connectivity",
    "network_adherence",
    "geometry_adherence",
    "bearing_error_mean",
    "num_steps",
    "num_large_gaps",
    "fallback_rate",
];

fn column_values(r: &EvalRecord) -> [Option<f64>; 13] {
    [
        r.pot_gr,
        r.pot_rg,
        r.pot_f1,
        r.mae_gr,
        r.mae_rg,
        r.mae_f1,
        r.connectivity,
        r.network_adherence,
        r.geometry_adherence,
        r.bearing_error_mean,
        Some(r.num_steps as f64),
        Some(r.num_large_gaps as f64),
        Some(if r.fallback_flag { 100.0 } else { 0.0 }),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Method,
    GapKind,
    Region,
    Activity,
}

impl GroupBy {
    pub const ALL: [GroupBy; 4] = [
        GroupBy::Method,
        GroupBy::GapKind,
        GroupBy::Region,
        GroupBy::Activity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupBy::Method => "method",
            GroupBy::GapKind => "gap_kind",
            GroupBy::Region => "region",
            GroupBy::Activity => "activity",
        }
    }

    fn key(self, r: &EvalRecord) -> String {
        match self {
            GroupBy::Method => r.method.clone(),
            GroupBy::GapKind => r.gap_kind.as_str().to_string(),
            GroupBy::Region => r.region.clone(),
            GroupBy::Activity => r.activity.as_str().to_string(),
        }
    }
}

/// Unweighted per-task means for one (method, group) cell. Each mean is
/// over the records where that metric is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub group: String,
    pub count: usize,
    pub means: Vec<Option<f64>>,
}

fn summarize(method: String, group: String, records: &[&EvalRecord]) -> AggregateRow {
    let mut sums = [0.0f64; 13];
    let mut counts = [0usize; 13];
    for r in records {
        for (k, v) in column_values(r).iter().enumerate() {
            if let Some(v) = v {
                sums[k] += v;
                counts[k] += 1;
            }
        }
    }
    let means = (0..13)
        .map(|k| (counts[k] > 0).then(|| sums[k] / counts[k] as f64))
        .collect();
    AggregateRow {
        method,
        group,
        count: records.len(),
        means,
    }
}

/// Group means per method. Rows are sorted by (method, group); grouping by
/// method yields one row per method with group `"all"`.
pub fn aggregate(records: &[EvalRecord], group_by: GroupBy) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<(String, String), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        let group = match group_by {
            GroupBy::Method => String::from("all"),
            other => other.key(r),
        };
        cells.entry((r.method.clone(), group)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((m, g), rs)| summarize(m, g, &rs))
        .collect()
}

/// Small / Large / Overall means of PoT F1 and MAE F1 for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTableRow {
    pub method: String,
    pub small_pot_f1: Option<f64>,
    pub small_mae_f1: Option<f64>,
    pub large_pot_f1: Option<f64>,
    pub large_mae_f1: Option<f64>,
    pub overall_pot_f1: Option<f64>,
    pub overall_mae_f1: Option<f64>,
}

fn mean_of(records: &[&EvalRecord], f: impl Fn(&EvalRecord) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = records.iter().filter_map(|r| f(r)).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Per-method table with Small gap / Large gap / Overall columns.
pub fn gap_table(records: &[EvalRecord]) -> Vec<GapTableRow> {
    let mut by_method: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_method.entry(r.method.as_str()).or_default().push(r);
    }
    by_method
        .into_iter()
        .map(|(method, rs)| {
            let small: Vec<&EvalRecord> =
                rs.iter().copied().filter(|r| r.gap_kind == GapKind::Small).collect();
            let large: Vec<&EvalRecord> =
                rs.iter().copied().filter(|r| r.gap_kind == GapKind::Large).collect();
            GapTableRow {
                method: method.to_string(),
                small_pot_f1: mean_of(&small, |r| r.pot_f1),
                small_mae_f1: mean_of(&small, |r| r.mae_f1),
                large_pot_f1: mean_of(&large, |r| r.pot_f1),
                large_mae_f1: mean_of(&large, |r| r.mae_f1),
                overall_pot_f1: mean_of(&rs, |r| r.pot_f1),
                overall_mae_f1: mean_of(&rs, |r| r.mae_f1),
            }
        })
        .collect()
}

fn stage_diagnostics(
    record: &mut EvalRecord,
    task: &MaskedTask,
    rec: &Reconstruction,
    plan: &NavigationPlan,
    net: Option<&RoadNetwork>,
    cfg: &MetricsConfig,
) {
    record.num_steps = plan.steps.len();
    if !rec.fallback_flag && rec.per_step_points.len() == plan.steps.len() {
        record.num_large_gaps = step_gap_stats(&rec.per_step_points, cfg.large_gap_threshold).1;
        let steps: Vec<(Option<Cardinal>, GeoPoint, GeoPoint)> = plan
            .steps
            .iter()
            .zip(&rec.per_step_points)
            .filter_map(|(s, pts)| Some((s.direction, *pts.first()?, *pts.last()?)))
            .collect();
        record.bearing_error_mean = bearing_error(&steps).mean;
    }
    let Some(net) = net else { return };
    record.connectivity = Some(plan_connectivity(plan, net));
    record.network_adherence = network_adherence(plan, net);
    let snapped = snap_point(net, &task.p_s).ok().map(|s| s.snapped_point);
    let owned: Vec<(Vec<GeoPoint>, Vec<GeoPoint>)> = rec
        .stage2
        .iter()
        .map(|t| {
            let geometry = GeometrySlice::from_ids(net, &t.slice_road_ids, &t.slice_node_ids).vertices();
            let mut anchors = alloc::vec![task.p_s, task.p_e, t.start];
            anchors.extend(snapped);
            (geometry, anchors)
        })
        .collect();
    let steps: Vec<StepCoordinates<'_>> = rec
        .stage2
        .iter()
        .zip(&owned)
        .map(|(t, (geometry, anchors))| StepCoordinates {
            raw: &t.raw_points,
            geometry,
            anchors,
        })
        .collect();
    record.geometry_adherence = geometry_adherence(&steps);
}

/// Scores one task. A missing reconstruction yields a flagged record with
/// no metrics; stage diagnostics need a plan, and those that look ids up
/// also need the task's network.
pub fn evaluate(
    task: &MaskedTask,
    method: &str,
    rec: Option<&Reconstruction>,
    net: Option<&RoadNetwork>,
    cfg: &MetricsConfig,
) -> EvalRecord {
    let mut record = EvalRecord {
        task_id: task.task_id.clone(),
        method: method.to_string(),
        gap_kind: task.gap_kind,
        activity: task.activity,
        region: task.region.clone(),
        pot_gr: None,
        pot_rg: None,
        pot_f1: None,
        mae_gr: None,
        mae_rg: None,
        mae_f1: None,
        connectivity: None,
        network_adherence: None,
        geometry_adherence: None,
        bearing_error_mean: None,
        num_steps: 0,
        num_large_gaps: 0,
        fallback_flag: false,
        missing_reconstruction: rec.is_none(),
    };
    let Some(rec) = rec else { return record };
    record.fallback_flag = rec.fallback_flag;
    let g: Vec<GeoPoint> = task.ground_truth.iter().map(|p| p.point).collect();
    let r = rec.points.points();
    if !r.is_empty() {
        let (a, b) = (pot_gr(&g, r, cfg.tau), pot_rg(r, &g, cfg.tau));
        record.pot_gr = Some(a);
        record.pot_rg = Some(b);
        record.pot_f1 = Some(pot_f1(a, b));
        record.mae_gr = mae_gr(&g, r).ok();
        record.mae_rg = mae_rg(r, &g).ok();
        if let (Some(a), Some(b)) = (record.mae_gr, record.mae_rg) {
            record.mae_f1 = Some(mae_f1(a, b));
        }
    }
    if let Some(plan) = &rec.plan {
        stage_diagnostics(&mut record, task, rec, plan, net, cfg);
    }
    record
}
