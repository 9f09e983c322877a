//! Two-stage reconstruction with a chat model: Stage 1 selects a path as a
//! sequence of road and intersection ids, Stage 2 turns each step into
//! coordinates that are then grounded on the road geometry.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::Cardinal;

mod context;
mod ground;
mod parse;
mod pipeline;
mod preference;
mod prompt;
pub mod stub;

pub use context::{build_context_summary, ContextSide, ContextSummary, SummaryConfig};
pub use ground::{geometry_slice, ground_coordinates, GeometrySlice, SliceRoad, GROUNDING_RADIUS_M};
pub use parse::{parse_plan, parse_step_coordinates, ParsedCoordinates};
pub use pipeline::{
    run_two_stage, PipelineConfig, Reconstruction, StepTrace, FALLBACK_SPACING_M,
};
pub use preference::{
    attach_pois, build_preference_prompt, length_band, render_preference_network, Poi,
    PreferenceProfile, ANCHOR_RADIUS_M, PREFERENCE_STEP_CAP,
};
pub use prompt::{build_stage1_prompt, build_stage2_prompt, step_cap, Stage1Inputs};
pub use stub::{CannedProvider, FailingProvider, GraphWalkProvider, ScriptedProvider};

/// Connection settings for an OpenAI-compatible chat endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Name of the environment variable holding the API key; empty for
    /// endpoints that need none.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_parallel")]
    pub max_parallel_requests: usize,
}

fn default_max_tokens() -> u32 {
    2048
}

fn default_timeout() -> u64 {
    120
}

fn default_parallel() -> usize {
    4
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(self.temperature >= 0.0) {
            return Err(ProviderError::Config(String::from("temperature must be >= 0")));
        }
        if self.max_parallel_requests == 0 {
            return Err(ProviderError::Config(String::from(
                "max_parallel_requests must be >= 1",
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider failed after {attempts} attempt(s): {message}")]
    Failed { attempts: u32, message: String },
    #[error("provider returned an empty completion")]
    EmptyResponse,
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("invalid provider configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
}

impl ChatResponse {
    /// A response with no usage accounting.
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: TokenUsage::default(),
            latency_ms: 0,
        }
    }
}

/// One chat-completion round trip.
pub trait ChatProvider {
    fn chat(&self, prompt: &str) -> Result<ChatResponse, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for &P {
    fn chat(&self, prompt: &str) -> Result<ChatResponse, ProviderError> {
        (**self).chat(prompt)
    }
}

/// Where a step ends: an OSM node, or the destination itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Node(i64),
    Endpoint,
}

impl Anchor {
    pub fn node_id(self) -> Option<i64> {
        match self {
            Anchor::Node(n) => Some(n),
            Anchor::Endpoint => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavStep {
    /// 1-based position in the plan.
    pub index: usize,
    /// The step line as written by the model, whitespace-normalized.
    pub text: String,
    pub direction: Option<Cardinal>,
    pub road_name: String,
    /// Every `(id=N)` in the step; the first is the road traversed.
    pub road_ids: Vec<i64>,
    pub target: Anchor,
}

impl NavStep {
    pub fn road_id(&self) -> Option<i64> {
        self.road_ids.first().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationPlan {
    pub reasoning: String,
    pub steps: Vec<NavStep>,
}

impl NavigationPlan {
    /// All referenced road ids in order, consecutive repeats collapsed.
    pub fn mentioned_road_ids(&self) -> Vec<i64> {
        let mut out: Vec<i64> = Vec::new();
        for id in self.steps.iter().flat_map(|s| s.road_ids.iter()) {
            if out.last() != Some(id) {
                out.push(*id);
            }
        }
        out
    }

    /// Traversed road of each step.
    pub fn traversed_road_ids(&self) -> Vec<i64> {
        self.steps.iter().filter_map(NavStep::road_id).collect()
    }

    pub fn anchor_node_ids(&self) -> Vec<i64> {
        self.steps.iter().filter_map(|s| s.target.node_id()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("context summary needs at least two points")]
    Context,
    #[error("no parseable step_N lines in completion")]
    PlanParse,
    #[error("no coordinate list in completion")]
    CoordParse,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}
