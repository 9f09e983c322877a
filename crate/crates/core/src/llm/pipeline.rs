use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    build_context_summary, build_stage1_prompt, build_stage2_prompt, geometry_slice,
    ground_coordinates, parse_plan, parse_step_coordinates, step_cap, ChatProvider, ContextSide,
    LlmError, NavigationPlan, Stage1Inputs, SummaryConfig, TokenUsage,
};
use crate::baselines::linear_interpolate;
use crate::geo::{GeoPoint, Polyline};
use crate::roadnet::{render_context, snap_point, Representation, RoadNetwork};
use crate::traces::{MaskedTask, TimedPoint};

/// Spacing of the linear line used when the pipeline gives up, meters.
pub const FALLBACK_SPACING_M: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub representation: Representation,
    pub small_step_cap: usize,
    pub large_step_cap: usize,
    pub summary: SummaryConfig,
    /// Pin Stage-2 coordinates to the slice geometry.
    pub grounding: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            representation: Representation::TopologyDirection,
            small_step_cap: 3,
            large_step_cap: 7,
            summary: SummaryConfig::default(),
            grounding: true,
        }
    }
}

/// Stage-2 record for one step, kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub index: usize,
    /// Coordinate the step was told to start from.
    pub start: GeoPoint,
    /// Coordinates as generated, before grounding.
    pub raw_points: Vec<GeoPoint>,
    pub dropped_pairs: usize,
    pub slice_road_ids: Vec<i64>,
    pub slice_node_ids: Vec<i64>,
}

/// A reconstructed segment, from any method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub task_id: String,
    pub method: String,
    pub points: Polyline,
    pub per_step_points: Vec<Vec<GeoPoint>>,
    pub plan: Option<NavigationPlan>,
    #[serde(default)]
    pub stage2: Vec<StepTrace>,
    pub fallback_flag: bool,
    #[serde(default)]
    pub failure: Option<String>,
    #[serde(default)]
    pub usage: TokenUsage,
    #[serde(default)]
    pub latency_ms: u64,
}

impl Reconstruction {
    /// A single-step reconstruction without a plan.
    pub fn simple(task_id: &str, method: &str, points: Polyline, fallback: bool) -> Self {
        Self {
            task_id: task_id.to_string(),
            method: method.to_string(),
            per_step_points: vec![points.points().to_vec()],
            points,
            plan: None,
            stage2: Vec::new(),
            fallback_flag: fallback,
            failure: None,
            usage: TokenUsage::default(),
            latency_ms: 0,
        }
    }

    /// Linear interpolation at [`FALLBACK_SPACING_M`], flagged.
    pub fn linear_fallback(task: &MaskedTask, method: &str, failure: impl Into<String>) -> Self {
        let line = linear_interpolate(&task.p_s, &task.p_e, FALLBACK_SPACING_M)
            .unwrap_or_else(|_| Polyline::new(vec![task.p_s, task.p_e]));
        let mut r = Self::simple(&task.task_id, method, line, true);
        r.failure = Some(failure.into());
        r
    }
}

fn snapped_names(net: &RoadNetwork, points: &[TimedPoint]) -> Vec<String> {
    points
        .iter()
        .filter_map(|p| snap_point(net, &p.point).ok())
        .filter_map(|s| net.road(s.road_id).and_then(|r| r.name.clone()))
        .collect()
}

struct Partial {
    plan: Option<NavigationPlan>,
    stage2: Vec<StepTrace>,
    usage: TokenUsage,
    latency_ms: u64,
}

/// Runs Stage 1 once and Stage 2 per step, chaining each step's last point
/// into the next. Any provider or parse failure yields a flagged linear
/// fallback that still carries whatever plan was obtained.
pub fn run_two_stage(
    task: &MaskedTask,
    net: &RoadNetwork,
    provider: &dyn ChatProvider,
    cfg: &PipelineConfig,
    method: &str,
) -> Reconstruction {
    let mut partial = Partial {
        plan: None,
        stage2: Vec::new(),
        usage: TokenUsage::default(),
        latency_ms: 0,
    };
    match two_stage(task, net, provider, cfg, &mut partial) {
        Ok(per_step) => {
            let mut points: Vec<GeoPoint> = Vec::new();
            for step in &per_step {
                for p in step {
                    if points.last() != Some(p) {
                        points.push(*p);
                    }
                }
            }
            Reconstruction {
                task_id: task.task_id.clone(),
                method: method.to_string(),
                points: Polyline::new(points),
                per_step_points: per_step,
                plan: partial.plan,
                stage2: partial.stage2,
                fallback_flag: false,
                failure: None,
                usage: partial.usage,
                latency_ms: partial.latency_ms,
            }
        }
        Err(e) => {
            let mut r = Reconstruction::linear_fallback(task, method, e.to_string());
            r.plan = partial.plan;
            r.stage2 = partial.stage2;
            r.usage = partial.usage;
            r.latency_ms = partial.latency_ms;
            r
        }
    }
}

#[derive(Debug)]
enum RunError {
    Network,
    Llm(LlmError),
}

impl core::fmt::Display for RunError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RunError::Network => f.write_str("road network is empty"),
            RunError::Llm(e) => write!(f, "{e}"),
        }
    }
}

impl From<LlmError> for RunError {
    fn from(e: LlmError) -> Self {
        RunError::Llm(e)
    }
}

fn two_stage(
    task: &MaskedTask,
    net: &RoadNetwork,
    provider: &dyn ChatProvider,
    cfg: &PipelineConfig,
    partial: &mut Partial,
) -> Result<Vec<Vec<GeoPoint>>, RunError> {
    let start = snap_point(net, &task.p_s).map_err(|_| RunError::Network)?;
    let end = snap_point(net, &task.p_e).map_err(|_| RunError::Network)?;
    let tail = &task.prefix[task.prefix.len().saturating_sub(cfg.summary.speed_window)..];
    let head = &task.suffix[..task.suffix.len().min(cfg.summary.speed_window)];
    let before = build_context_summary(
        &task.prefix,
        ContextSide::Before,
        &snapped_names(net, tail),
        &cfg.summary,
    )
    .ok();
    let after = build_context_summary(
        &task.suffix,
        ContextSide::After,
        &snapped_names(net, head),
        &cfg.summary,
    )
    .ok();
    let network_text = render_context(net, cfg.representation, &task.p_e);
    let prompt = build_stage1_prompt(&Stage1Inputs {
        task,
        before: before.as_ref(),
        after: after.as_ref(),
        start: &start,
        end: &end,
        network: net,
        network_text: &network_text,
        step_cap: step_cap(task.gap_kind, cfg.small_step_cap, cfg.large_step_cap),
    });
    let resp = provider.chat(&prompt).map_err(LlmError::from)?;
    partial.usage += resp.usage;
    partial.latency_ms += resp.latency_ms;
    let plan = parse_plan(&resp.text)?;
    partial.plan = Some(plan.clone());

    let mut per_step: Vec<Vec<GeoPoint>> = Vec::new();
    let last = plan.steps.len() - 1;
    for (k, step) in plan.steps.iter().enumerate() {
        let start_coord = match per_step.last().and_then(|s| s.last()) {
            Some(p) => *p,
            None => start.snapped_point,
        };
        let slice = geometry_slice(net, &plan.steps, k);
        let dest = (k == last).then_some(&task.p_e);
        let prompt = build_stage2_prompt(step, &slice, &start_coord, dest);
        let resp = provider.chat(&prompt).map_err(LlmError::from)?;
        partial.usage += resp.usage;
        partial.latency_ms += resp.latency_ms;
        let parsed = parse_step_coordinates(&resp.text, &start_coord)?;
        partial.stage2.push(StepTrace {
            index: step.index,
            start: start_coord,
            raw_points: parsed.points.clone(),
            dropped_pairs: parsed.dropped,
            slice_road_ids: slice.road_ids(),
            slice_node_ids: slice.node_ids(),
        });
        let anchors = [task.p_s, task.p_e, start.snapped_point, start_coord];
        let mut pts = if cfg.grounding {
            ground_coordinates(&parsed.points, &slice, &anchors)
        } else {
            parsed.points
        };
        if pts.first() != Some(&start_coord) {
            pts.insert(0, start_coord);
        }
        if k == last && pts.last() != Some(&task.p_e) {
            pts.push(task.p_e);
        }
        per_step.push(pts);
    }
    Ok(per_step)
}
