//! Offline chat providers for tests and dry runs.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::Deserialize;
use serde_json::Value;

use super::{ChatProvider, ChatResponse, ProviderError};
use crate::geo::{haversine_distance, initial_bearing, Cardinal, GeoPoint};

fn failure(msg: &str) -> ProviderError {
    ProviderError::Failed {
        attempts: 1,
        message: msg.to_string(),
    }
}

/// Always returns the same text.
#[derive(Debug, Clone)]
pub struct CannedProvider(pub String);

impl ChatProvider for CannedProvider {
    fn chat(&self, _prompt: &str) -> Result<ChatResponse, ProviderError> {
        if self.0.trim().is_empty() {
            return Err(ProviderError::EmptyResponse);
        }
        Ok(ChatResponse::text(self.0.clone()))
    }
}

/// Always fails.
#[derive(Debug, Clone, Default)]
pub struct FailingProvider;

impl ChatProvider for FailingProvider {
    fn chat(&self, _prompt: &str) -> Result<ChatResponse, ProviderError> {
        Err(failure("provider unavailable"))
    }
}

/// Replies chosen by the first rule whose needle occurs in the prompt.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    rules: Vec<(String, String)>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on(mut self, needle: impl Into<String>, reply: impl Into<String>) -> Self {
        self.rules.push((needle.into(), reply.into()));
        self
    }
}

impl ChatProvider for ScriptedProvider {
    fn chat(&self, prompt: &str) -> Result<ChatResponse, ProviderError> {
        self.rules
            .iter()
            .find(|(needle, _)| prompt.contains(needle.as_str()))
            .map(|(_, reply)| ChatResponse::text(reply.clone()))
            .ok_or_else(|| failure("no scripted reply matches the prompt"))
    }
}

/// Plans by breadth-first search over the connections listed in the
/// Stage-1 prompt and answers Stage 2 by walking the step road's vertices.
/// Works from prompt text alone, so it exercises the full pipeline.
#[derive(Debug, Clone, Copy, Default)]
pub struct GraphWalkProvider;

#[derive(Debug, Default)]
struct PromptGraph {
    /// road -> (neighbour road, shared node, node location if shown)
    adjacency: BTreeMap<i64, Vec<(i64, i64, Option<GeoPoint>)>>,
    names: BTreeMap<i64, String>,
}

impl PromptGraph {
    fn add(&mut self, a: i64, b: i64, node: i64, at: Option<GeoPoint>) {
        let list = self.adjacency.entry(a).or_default();
        if !list.iter().any(|x| x.0 == b && x.1 == node) {
            list.push((b, node, at));
        }
        self.adjacency.entry(b).or_default();
    }

    fn finish(&mut self) {
        for list in self.adjacency.values_mut() {
            list.sort_by_key(|x| (x.0, x.1));
        }
    }
}

fn coords(v: &Value) -> Option<GeoPoint> {
    let a = v.as_array()?;
    GeoPoint::new(a.first()?.as_f64()?, a.get(1)?.as_f64()?).ok()
}

fn id_of(v: &Value) -> Option<i64> {
    match v {
        Value::String(s) => s.parse().ok(),
        other => other.as_i64(),
    }
}

/// Balanced JSON object starting at the first `{` at or after `from`.
fn json_object_at(text: &str, from: usize) -> Option<&str> {
    let start = from + text[from..].find('{')?;
    let mut depth = 0i32;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_prompt_graph(prompt: &str) -> PromptGraph {
    let mut g = PromptGraph::default();
    if let Some(pos) = prompt.find("{\"roads\": {") {
        if let Some(Ok(Value::Object(root))) =
            json_object_at(prompt, pos).map(serde_json::from_str::<Value>)
        {
            if let Some(Value::Object(roads)) = root.get("roads") {
                for (id, r) in roads {
                    let Ok(id) = id.parse::<i64>() else { continue };
                    if let Some(n) = r.get("name").and_then(Value::as_str) {
                        g.names.insert(id, n.to_string());
                    }
                    g.adjacency.entry(id).or_default();
                    for c in r.get("connects_to").and_then(Value::as_array).into_iter().flatten() {
                        if let (Some(b), Some(n)) = (
                            c.get("road_id").and_then(id_of),
                            c.get("intersection_id").and_then(id_of),
                        ) {
                            g.add(id, b, n, c.get("coords").and_then(coords));
                        }
                    }
                }
            }
        }
    } else if let Some(pos) = prompt.find("Raw Road Network Data") {
        if let Some(Ok(Value::Object(roads))) =
            json_object_at(prompt, pos).map(serde_json::from_str::<Value>)
        {
            let mut users: BTreeMap<i64, BTreeSet<i64>> = BTreeMap::new();
            let mut locs: BTreeMap<i64, GeoPoint> = BTreeMap::new();
            for (id, r) in &roads {
                let Ok(id) = id.parse::<i64>() else { continue };
                g.adjacency.entry(id).or_default();
                let nodes = r.get("nodes_osmid").and_then(Value::as_array);
                let geom = r.get("geometry").and_then(Value::as_array);
                for (k, n) in nodes.into_iter().flatten().enumerate() {
                    let Some(n) = n.as_i64() else { continue };
                    users.entry(n).or_default().insert(id);
                    if let Some(p) = geom.and_then(|gm| gm.get(k)).and_then(coords) {
                        locs.entry(n).or_insert(p);
                    }
                }
            }
            for (n, rs) in users {
                for a in &rs {
                    for b in &rs {
                        if a != b {
                            g.add(*a, *b, n, locs.get(&n).copied());
                        }
                    }
                }
            }
        }
    } else {
        let mut current: Option<i64> = None;
        for line in prompt.lines() {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix("Road: ") {
                current = rest
                    .find("(ID: ")
                    .and_then(|i| rest[i + 5..].split([',', ')']).next())
                    .and_then(|s| s.trim().parse().ok());
                if let Some(id) = current {
                    g.adjacency.entry(id).or_default();
                }
            } else if let (Some(a), Some(rest)) = (current, t.strip_prefix("-> Road ")) {
                let mut parts = rest.split_whitespace();
                let b = parts.next().and_then(|s| s.parse().ok());
                let n = parts.nth(2).and_then(|s| s.parse().ok());
                let at = rest.find("([").and_then(|i| {
                    let inner = &rest[i + 2..rest[i..].find("])").map(|j| i + j)?];
                    let mut it = inner.split(',').map(|x| x.trim().parse::<f64>());
                    GeoPoint::new(it.next()?.ok()?, it.next()?.ok()?).ok()
                });
                if let (Some(b), Some(n)) = (b, n) {
                    g.add(a, b, n, at);
                }
            }
        }
    }
    g.finish();
    g
}

fn bracket_after(text: &str, key: &str) -> Option<GeoPoint> {
    let i = text.find(key)? + key.len();
    let rest = &text[i..];
    let open = rest.find('[')?;
    let close = rest[open..].find(']')? + open;
    let mut it = rest[open + 1..close].split(',').map(|x| x.trim().parse::<f64>());
    GeoPoint::new(it.next()?.ok()?, it.next()?.ok()?).ok()
}

fn snapped_ids(prompt: &str) -> Vec<i64> {
    prompt
        .lines()
        .filter_map(|l| l.trim().strip_prefix("Snapped to: "))
        .filter_map(|l| {
            let i = l.find("(id=")? + 4;
            let n = l[i..].bytes().take_while(u8::is_ascii_digit).count();
            l[i..i + n].parse().ok()
        })
        .collect()
}

fn bfs(g: &PromptGraph, from: i64, to: i64) -> Option<Vec<(i64, Option<(i64, Option<GeoPoint>)>)>> {
    let mut prev: BTreeMap<i64, (i64, i64, Option<GeoPoint>)> = BTreeMap::new();
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(r) = queue.pop_front() {
        if r == to {
            let mut path = Vec::new();
            let mut cur = to;
            let mut via: Option<(i64, Option<GeoPoint>)> = None;
            loop {
                path.push((cur, via));
                match prev.get(&cur) {
                    Some((p, n, at)) => {
                        via = Some((*n, *at));
                        cur = *p;
                    }
                    None => break,
                }
            }
            path.reverse();
            // each entry holds the node where the previous road hands over
            let mut out = Vec::new();
            for k in 0..path.len() {
                let next = path.get(k + 1).and_then(|x| x.1);
                out.push((path[k].0, next));
            }
            return Some(out);
        }
        for (b, n, at) in g.adjacency.get(&r).into_iter().flatten() {
            if seen.insert(*b) {
                prev.insert(*b, (r, *n, *at));
                queue.push_back(*b);
            }
        }
    }
    None
}

fn direction_word(from: Option<GeoPoint>, to: Option<GeoPoint>) -> &'static str {
    match (from, to) {
        (Some(a), Some(b)) => initial_bearing(&a, &b)
            .map(|x| Cardinal::from_bearing(x).word())
            .unwrap_or("straight"),
        _ => "straight",
    }
}

fn stage1_reply(prompt: &str) -> Result<String, ProviderError> {
    let g = parse_prompt_graph(prompt);
    let ids = snapped_ids(prompt);
    let (Some(from), Some(to)) = (ids.first().copied(), ids.get(1).copied()) else {
        return Err(failure("prompt lacks snapped roads"));
    };
    let start = bracket_after(prompt, "Start: ");
    let end = bracket_after(prompt, "End: ");
    let path = bfs(&g, from, to).unwrap_or_else(|| {
        if from == to {
            alloc::vec![(from, None)]
        } else {
            alloc::vec![(from, None), (to, None)]
        }
    });
    let label = |id: i64| g.names.get(&id).cloned().unwrap_or_else(|| String::from("road"));
    let mut s = String::from("**REASONING:**\n");
    let _ = writeln!(
        s,
        "Fewest road changes from road {from} to road {to} over the listed connections.\n"
    );
    s.push_str("**STEP-BY-STEP NAVIGATION:**\n\n");
    let mut here = start;
    for (k, (road, via)) in path.iter().enumerate() {
        let n = k + 1;
        match (via, path.get(k + 1)) {
            (Some((node, at)), Some((next, _))) => {
                let _ = writeln!(
                    s,
                    "step_{n}: Travel {} along {} (id={road}) until the intersection with {} (id={next}) (node_id_original={node})\n",
                    direction_word(here, *at),
                    label(*road),
                    label(*next)
                );
                here = at.or(here);
            }
            _ => {
                let _ = writeln!(
                    s,
                    "step_{n}: Travel {} along {} (id={road}) until reaching the endpoint\n",
                    direction_word(here, end),
                    label(*road)
                );
            }
        }
    }
    Ok(s)
}

#[derive(Deserialize)]
struct SliceJson {
    roads: Vec<SliceRoadJson>,
    intersections: Vec<SliceNodeJson>,
}

#[derive(Deserialize)]
struct SliceRoadJson {
    id: i64,
    geometry: Vec<[f64; 2]>,
}

#[derive(Deserialize)]
struct SliceNodeJson {
    lat: f64,
    lon: f64,
}

fn nearest_index(points: &[GeoPoint], p: &GeoPoint) -> Option<usize> {
    points
        .iter()
        .enumerate()
        .map(|(i, v)| (haversine_distance(v, p), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|x| x.1)
}

fn stage2_reply(prompt: &str) -> Result<String, ProviderError> {
    let gpos = prompt
        .find("**GEOMETRY (excerpt):**")
        .ok_or_else(|| failure("prompt lacks geometry"))?;
    let slice: SliceJson = json_object_at(prompt, gpos)
        .and_then(|j| serde_json::from_str(j).ok())
        .ok_or_else(|| failure("unreadable geometry"))?;
    let start = bracket_after(prompt, "Starting coordinate:")
        .ok_or_else(|| failure("prompt lacks a starting coordinate"))?;
    let description = &prompt[..gpos];
    let road_id = description.find("(id=").and_then(|i| {
        let rest = &description[i + 4..];
        let n = rest.bytes().take_while(u8::is_ascii_digit).count();
        rest[..n].parse::<i64>().ok()
    });
    let mut out: Vec<GeoPoint> = alloc::vec![start];
    let target = slice
        .intersections
        .first()
        .and_then(|n| GeoPoint::new(n.lat, n.lon).ok())
        .or_else(|| bracket_after(prompt, "Destination:"));
    let geometry: Vec<GeoPoint> = slice
        .roads
        .iter()
        .find(|r| Some(r.id) == road_id)
        .map(|r| r.geometry.iter().filter_map(|c| GeoPoint::new(c[0], c[1]).ok()).collect())
        .unwrap_or_default();
    if let (Some(i0), Some(t)) = (nearest_index(&geometry, &start), target) {
        let i1 = nearest_index(&geometry, &t).unwrap_or(i0);
        if i0 <= i1 {
            out.extend_from_slice(&geometry[i0..=i1]);
        } else {
            out.extend(geometry[i1..=i0].iter().rev());
        }
        if !slice.intersections.is_empty() {
            out.push(t);
        }
    }
    let mut s = String::from("- [");
    let mut last: Option<GeoPoint> = None;
    let mut first = true;
    for p in out {
        if last == Some(p) {
            continue;
        }
        last = Some(p);
        if !first {
            s.push_str(",\n  ");
        }
        first = false;
        s.push_str(&p.bracketed(7));
    }
    s.push(']');
    Ok(s)
}

impl ChatProvider for GraphWalkProvider {
    fn chat(&self, prompt: &str) -> Result<ChatResponse, ProviderError> {
        let text = if prompt.contains("**TASK:** Generate coordinates") {
            stage2_reply(prompt)?
        } else {
            stage1_reply(prompt)?
        };
        let words = |t: &str| t.split_whitespace().count() as u64;
        Ok(ChatResponse {
            usage: super::TokenUsage {
                prompt_tokens: words(prompt),
                completion_tokens: words(&text),
            },
            text,
            latency_ms: 0,
        })
    }
}
