//! Hidden-Markov map matching: per-observation road candidates, shortest-path
//! route distances on the road vertex graph, and Viterbi decoding.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::geo::{haversine_distance, project_to_segment, GeoPoint, Polyline};
use crate::roadnet::RoadNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmParams {
    /// Emission noise scale, meters.
    pub sigma_z: f64,
    /// Transition discrepancy scale, meters.
    pub beta: f64,
    pub max_candidates_per_point: usize,
    /// Search radius for candidates, meters.
    pub candidate_radius: f64,
    /// Forbid travel against oneway roads when routing.
    #[serde(default)]
    pub respect_oneway: bool,
}

impl Default for HmmParams {
    fn default() -> Self {
        Self {
            sigma_z: 10.0,
            beta: 50.0,
            max_candidates_per_point: 5,
            candidate_radius: 50.0,
            respect_oneway: false,
        }
    }
}

impl HmmParams {
    pub fn validate(&self) -> Result<(), BaselineError> {
        let ok = self.sigma_z > 0.0
            && self.beta > 0.0
            && self.candidate_radius > 0.0
            && self.max_candidates_per_point > 0;
        if ok {
            Ok(())
        } else {
            Err(BaselineError::InvalidParams)
        }
    }
}

/// Most probable state sequence for one unbroken chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub states: Vec<usize>,
    pub log_prob: f64,
}

/// A maximal run of observations decoded together, starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiChain {
    pub start: usize,
    pub path: ViterbiPath,
}

/// Viterbi decoding that restarts whenever every transition into a step is
/// impossible (`-inf`). `emissions[t][i]` is the log-probability of state
/// `i` at step `t`; `transition(t, i, j)` scores state `i` at `t` followed by
/// state `j` at `t + 1`. Ties keep the lower state index.
pub fn viterbi_chains<F>(emissions: &[Vec<f64>], mut transition: F) -> Vec<ViterbiChain>
where
    F: FnMut(usize, usize, usize) -> f64,
{
    let mut chains = Vec::new();
    if emissions.is_empty() {
        return chains;
    }
    let mut start = 0;
    let mut scores: Vec<f64> = emissions[0].clone();
    let mut back: Vec<Vec<usize>> = vec![Vec::new()];
    for t in 1..emissions.len() {
        let mut next = vec![f64::NEG_INFINITY; emissions[t].len()];
        let mut ptr = vec![0usize; emissions[t].len()];
        for (j, e) in emissions[t].iter().enumerate() {
            for (i, s) in scores.iter().enumerate() {
                if *s == f64::NEG_INFINITY {
                    continue;
                }
                let v = s + transition(t - 1, i, j) + e;
                if v > next[j] {
                    next[j] = v;
                    ptr[j] = i;
                }
            }
        }
        if next.iter().all(|v| *v == f64::NEG_INFINITY) {
            chains.push(ViterbiChain {
                start,
                path: backtrack(&scores, &back),
            });
            start = t;
            scores = emissions[t].clone();
            back = vec![Vec::new()];
        } else {
            scores = next;
            back.push(ptr);
        }
    }
    chains.push(ViterbiChain {
        start,
        path: backtrack(&scores, &back),
    });
    chains
}

fn backtrack(scores: &[f64], back: &[Vec<usize>]) -> ViterbiPath {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let mut states = vec![best; back.len()];
    for t in (1..back.len()).rev() {
        states[t - 1] = back[t][states[t]];
    }
    ViterbiPath {
        states,
        log_prob: scores.get(best).copied().unwrap_or(f64::NEG_INFINITY),
    }
}

/// Single-chain Viterbi; `None` when no complete path has finite probability.
pub fn viterbi<F>(emissions: &[Vec<f64>], transition: F) -> Option<ViterbiPath>
where
    F: FnMut(usize, usize, usize) -> f64,
{
    let mut chains = viterbi_chains(emissions, transition);
    if chains.len() == 1 && chains[0].path.log_prob.is_finite() {
        chains.pop().map(|c| c.path)
    } else {
        None
    }
}

/// Emission log-probability `-½ (d / σ)²`.
pub fn emission_log_prob(distance: f64, sigma_z: f64) -> f64 {
    let z = distance / sigma_z;
    -0.5 * z * z
}

/// Transition log-probability `-|gc - route| / β`.
pub fn transition_log_prob(great_circle: f64, route: f64, beta: f64) -> f64 {
    -(great_circle - route).abs() / beta
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    to: usize,
    length: f64,
    road_id: i64,
}

/// Directed graph over road geometry vertices keyed by OSM node id.
struct VertexGraph {
    locations: Vec<GeoPoint>,
    edges: Vec<Vec<Edge>>,
}

impl VertexGraph {
    fn new(net: &RoadNetwork, respect_oneway: bool) -> (Self, BTreeMap<i64, usize>) {
        let mut index: BTreeMap<i64, usize> = BTreeMap::new();
        let mut locations = Vec::new();
        for road in net.roads().values() {
            for (n, p) in road.node_ids.iter().zip(road.geometry.points()) {
                index.entry(*n).or_insert_with(|| {
                    locations.push(*p);
                    locations.len() - 1
                });
            }
        }
        let mut best: BTreeMap<(usize, usize), (f64, i64)> = BTreeMap::new();
        let mut add = |a: usize, b: usize, len: f64, road: i64| {
            let e = best.entry((a, b)).or_insert((len, road));
            if len < e.0 || (len == e.0 && road < e.1) {
                *e = (len, road);
            }
        };
        for road in net.roads().values() {
            let pts = road.geometry.points();
            for k in 1..road.node_ids.len() {
                let (a, b) = (index[&road.node_ids[k - 1]], index[&road.node_ids[k]]);
                if a == b {
                    continue;
                }
                let len = haversine_distance(&pts[k - 1], &pts[k]);
                add(a, b, len, road.id);
                if !(respect_oneway && road.oneway) {
                    add(b, a, len, road.id);
                }
            }
        }
        let mut edges = vec![Vec::new(); locations.len()];
        for ((a, b), (length, road_id)) in best {
            edges[a].push(Edge {
                to: b,
                length,
                road_id,
            });
        }
        (Self { locations, edges }, index)
    }

    /// Shortest distances from weighted sources, abandoning paths beyond `bound`.
    fn dijkstra(&self, sources: &[(usize, f64)], bound: f64) -> (Vec<f64>, Vec<Option<(usize, i64)>>) {
        let n = self.locations.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<(usize, i64)>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        for (v, d) in sources {
            if *d < dist[*v] {
                dist[*v] = *d;
                heap.push(State { cost: *d, vertex: *v });
            }
        }
        while let Some(State { cost, vertex }) = heap.pop() {
            if cost > dist[vertex] || cost > bound {
                continue;
            }
            for e in &self.edges[vertex] {
                let c = cost + e.length;
                if c < dist[e.to] {
                    dist[e.to] = c;
                    pred[e.to] = Some((vertex, e.road_id));
                    heap.push(State { cost: c, vertex: e.to });
                }
            }
        }
        (dist, pred)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct State {
    cost: f64,
    vertex: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A snap candidate on one road segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub road_id: i64,
    pub segment: usize,
    pub point: GeoPoint,
    pub distance: f64,
    t: f64,
    a: usize,
    b: usize,
    to_a: f64,
    to_b: f64,
    forward_only: bool,
}

/// Closest point of each road within the radius, best `k` by distance
/// (ties: lower road id).
fn candidates_for(
    net: &RoadNetwork,
    index: &BTreeMap<i64, usize>,
    obs: &GeoPoint,
    params: &HmmParams,
) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    for road in net.roads().values() {
        let pts = road.geometry.points();
        let mut best: Option<Candidate> = None;
        let segments = pts.len().saturating_sub(1).max(1);
        for s in 0..segments {
            let (pa, pb) = (pts[s], pts[(s + 1).min(pts.len() - 1)]);
            let proj = project_to_segment(obs, &pa, &pb);
            if best.as_ref().is_none_or(|c| proj.distance < c.distance) {
                best = Some(Candidate {
                    road_id: road.id,
                    segment: s,
                    point: proj.point,
                    distance: proj.distance,
                    t: proj.t,
                    a: index[&road.node_ids[s]],
                    b: index[&road.node_ids[(s + 1).min(pts.len() - 1)]],
                    to_a: haversine_distance(&proj.point, &pa),
                    to_b: haversine_distance(&proj.point, &pb),
                    forward_only: params.respect_oneway && road.oneway,
                });
            }
        }
        if let Some(c) = best.filter(|c| c.distance <= params.candidate_radius) {
            out.push(c);
        }
    }
    out.sort_by(|x, y| x.distance.total_cmp(&y.distance).then(x.road_id.cmp(&y.road_id)));
    out.truncate(params.max_candidates_per_point);
    out
}

impl Candidate {
    fn exits(&self) -> Vec<(usize, f64)> {
        let mut v = vec![(self.b, self.to_b)];
        if !self.forward_only {
            v.push((self.a, self.to_a));
        }
        v
    }

    fn entries(&self) -> Vec<(usize, f64)> {
        let mut v = vec![(self.a, self.to_a)];
        if !self.forward_only {
            v.push((self.b, self.to_b));
        }
        v
    }

    fn same_segment_reachable(&self, next: &Candidate) -> bool {
        self.road_id == next.road_id
            && self.segment == next.segment
            && (!self.forward_only || next.t >= self.t)
    }
}

/// Route from `from` to `to`: length, intermediate vertices and their roads.
struct Route {
    length: f64,
    vertices: Vec<(usize, i64)>,
}

fn route_between(
    dist_pred: &(Vec<f64>, Vec<Option<(usize, i64)>>),
    from: &Candidate,
    to: &Candidate,
) -> Option<Route> {
    if from.same_segment_reachable(to) {
        return Some(Route {
            length: haversine_distance(&from.point, &to.point),
            vertices: Vec::new(),
        });
    }
    let (dist, pred) = dist_pred;
    let (entry, length) = to
        .entries()
        .into_iter()
        .map(|(v, c)| (v, dist[v] + c))
        .filter(|(_, l)| l.is_finite())
        .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))?;
    let mut vertices = Vec::new();
    let mut cur = entry;
    let mut road = to.road_id;
    loop {
        vertices.push((cur, road));
        match pred[cur] {
            Some((prev, r)) => {
                road = r;
                cur = prev;
            }
            None => break,
        }
    }
    // Each vertex is tagged with the road used to leave it.
    vertices.reverse();
    Some(Route { length, vertices })
}

/// Output of map matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub polyline: Polyline,
    /// Traversed roads with consecutive repeats collapsed.
    pub road_ids: Vec<i64>,
    pub dropped_observations: usize,
    /// Number of independently decoded chains (1 when fully connected).
    pub chains: usize,
}

fn push_point(line: &mut Vec<GeoPoint>, p: GeoPoint) {
    if line.last() != Some(&p) {
        line.push(p);
    }
}

fn push_road(roads: &mut Vec<i64>, r: i64) {
    if roads.last() != Some(&r) {
        roads.push(r);
    }
}

/// Matches observations to the network with a Viterbi-decoded HMM.
pub fn hmm_map_match(
    net: &RoadNetwork,
    observations: &Polyline,
    params: &HmmParams,
) -> Result<MatchResult, BaselineError> {
    params.validate()?;
    if net.is_empty() {
        return Err(BaselineError::EmptyNetwork);
    }
    if observations.len() < 2 {
        return Err(BaselineError::TooFewObservations);
    }
    let (graph, index) = VertexGraph::new(net, params.respect_oneway);
    let mut kept: Vec<(GeoPoint, Vec<Candidate>)> = Vec::new();
    for obs in observations.points() {
        let c = candidates_for(net, &index, obs, params);
        if !c.is_empty() {
            kept.push((*obs, c));
        }
    }
    let dropped = observations.len() - kept.len();
    if kept.is_empty() {
        return Err(BaselineError::MatchInfeasible);
    }
    // One bounded Dijkstra per (step, candidate), reused for every target.
    let searches: Vec<Vec<(Vec<f64>, Vec<Option<(usize, i64)>>)>> = (0..kept.len() - 1)
        .map(|t| {
            let gc = haversine_distance(&kept[t].0, &kept[t + 1].0);
            let bound = 3.0 * gc + 2.0 * params.candidate_radius + 10.0 * params.beta;
            kept[t]
                .1
                .iter()
                .map(|c| graph.dijkstra(&c.exits(), bound))
                .collect()
        })
        .collect();
    let emissions: Vec<Vec<f64>> = kept
        .iter()
        .map(|(_, cs)| cs.iter().map(|c| emission_log_prob(c.distance, params.sigma_z)).collect())
        .collect();
    let chains = viterbi_chains(&emissions, |t, i, j| {
        let gc = haversine_distance(&kept[t].0, &kept[t + 1].0);
        match route_between(&searches[t][i], &kept[t].1[i], &kept[t + 1].1[j]) {
            Some(r) => transition_log_prob(gc, r.length, params.beta),
            None => f64::NEG_INFINITY,
        }
    });
    let mut line: Vec<GeoPoint> = Vec::new();
    let mut roads: Vec<i64> = Vec::new();
    for chain in &chains {
        for (k, &s) in chain.path.states.iter().enumerate() {
            let t = chain.start + k;
            let cand = &kept[t].1[s];
            if k > 0 {
                let prev = &kept[t - 1].1[chain.path.states[k - 1]];
                if let Some(route) =
                    route_between(&searches[t - 1][chain.path.states[k - 1]], prev, cand)
                {
                    push_road(&mut roads, prev.road_id);
                    for (v, r) in route.vertices {
                        push_point(&mut line, graph.locations[v]);
                        push_road(&mut roads, r);
                    }
                }
            }
            push_point(&mut line, cand.point);
            push_road(&mut roads, cand.road_id);
        }
    }
    Ok(MatchResult {
        polyline: Polyline::new(line),
        road_ids: roads,
        dropped_observations: dropped,
        chains: chains.len(),
    })
}
