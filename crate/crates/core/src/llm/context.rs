use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::geo::{haversine_distance, initial_bearing, Cardinal};
use crate::math;
use crate::traces::{timed_path_length, TimedPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextSide {
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    /// Points next to the gap used for the average speed.
    pub speed_window: usize,
    /// Points next to the gap used for the heading.
    pub heading_window: usize,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self {
            speed_window: 10,
            heading_window: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub side: ContextSide,
    pub avg_speed: Option<f64>,
    pub heading: Option<Cardinal>,
    pub narrative: String,
}

/// The `n` points nearest the gap, in travel order.
fn window(points: &[TimedPoint], side: ContextSide, n: usize) -> &[TimedPoint] {
    let n = n.clamp(2, points.len());
    match side {
        ContextSide::Before => &points[points.len() - n..],
        ContextSide::After => &points[..n],
    }
}

fn average_speed(w: &[TimedPoint]) -> Option<(f64, bool)> {
    let times: Vec<i64> = w.iter().map(|p| p.time).collect::<Option<_>>()?;
    let elapsed = times.last()? - times.first()?;
    if elapsed <= 0 {
        return None;
    }
    let speed = timed_path_length(w) / elapsed as f64;
    let seg: Vec<f64> = w
        .windows(2)
        .zip(times.windows(2))
        .filter(|(_, t)| t[1] > t[0])
        .map(|(p, t)| haversine_distance(&p[0].point, &p[1].point) / (t[1] - t[0]) as f64)
        .collect();
    let steady = if seg.len() < 2 || speed == 0.0 {
        true
    } else {
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        let var = seg.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / seg.len() as f64;
        math::sqrt(var) / mean.max(1e-9) <= 0.3
    };
    Some((speed, steady))
}

/// Speed and heading next to the gap on one side, plus a short narrative.
/// `road_names` are names of roads the context points snap to, in travel
/// order. Speed is omitted when any window point lacks a timestamp.
pub fn build_context_summary(
    points: &[TimedPoint],
    side: ContextSide,
    road_names: &[String],
    cfg: &SummaryConfig,
) -> Result<ContextSummary, LlmError> {
    if points.len() < 2 {
        return Err(LlmError::Context);
    }
    let hw = window(points, side, cfg.heading_window);
    let heading = initial_bearing(&hw[0].point, &hw[hw.len() - 1].point)
        .ok()
        .map(Cardinal::from_bearing);
    let speed = average_speed(window(points, side, cfg.speed_window));
    let mut lines: Vec<String> = Vec::new();
    let mut names: Vec<&str> = Vec::new();
    for n in road_names {
        if names.last() != Some(&n.as_str()) {
            names.push(n);
        }
    }
    let (when, roads_label) = match side {
        ContextSide::Before => ("before the gap", "Roads travelled before the gap"),
        ContextSide::After => ("after the gap", "Roads travelled after the gap"),
    };
    if !names.is_empty() {
        lines.push(format!("- {roads_label}: {}", names.join(", ")));
    }
    if let Some(h) = heading {
        lines.push(format!("- Heading {when}: {}", h.word()));
    }
    if let Some((s, steady)) = speed {
        let kind = if steady { "steady" } else { "variable" };
        lines.push(format!("- Average speed: {s:.1} m/s ({kind})"));
    }
    if lines.is_empty() {
        lines.push(format!("- No usable movement context {when}"));
    }
    Ok(ContextSummary {
        side,
        avg_speed: speed.map(|s| s.0),
        heading,
        narrative: lines.join("\n"),
    })
}
