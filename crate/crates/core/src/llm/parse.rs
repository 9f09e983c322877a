use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Anchor, LlmError, NavStep, NavigationPlan};
use crate::geo::{Cardinal, GeoPoint};

fn strip_markup(line: &str) -> &str {
    line.trim()
        .trim_start_matches(['*', '#', '-', '>', ' ', '\t'])
        .trim_end_matches(['*', ' '])
}

/// `step_N:` header; returns N as written and the remainder of the line.
fn step_header(line: &str) -> Option<(&str, &str)> {
    let s = strip_markup(line);
    let lower = s.get(..5)?;
    if !lower.eq_ignore_ascii_case("step_") && !lower.eq_ignore_ascii_case("step ") {
        return None;
    }
    let rest = &s[5..];
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let after = rest[digits..].trim_start_matches('*').trim_start();
    let body = after.strip_prefix(':')?;
    Some((&rest[..digits], body.trim_start_matches('*').trim()))
}

fn is_section_heading(line: &str) -> bool {
    let t = line.trim();
    if t.starts_with("---") {
        return true;
    }
    let s = strip_markup(line).to_ascii_uppercase();
    ["REASONING", "STEP-BY-STEP", "VALIDATION", "NOTES"]
        .iter()
        .any(|h| s.starts_with(h))
}

fn heading_rest<'a>(line: &'a str, heading: &str) -> Option<&'a str> {
    let s = strip_markup(line);
    let head = s.get(..heading.len())?;
    if !head.eq_ignore_ascii_case(heading) {
        return None;
    }
    let rest = s[heading.len()..].trim_start_matches('*').trim_start();
    Some(rest.strip_prefix(':').unwrap_or(rest).trim_start_matches('*').trim())
}

/// Integers following `key` (optionally spaced around `=`).
fn numbers_after(text: &str, key: &str) -> Vec<i64> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = text[from..].find(key) {
        let start = from + pos + key.len();
        from = start;
        let rest = text[start..].trim_start();
        let Some(rest) = rest.strip_prefix('=') else { continue };
        let rest = rest.trim_start();
        let n = rest.bytes().take_while(u8::is_ascii_digit).count();
        if let Ok(v) = rest[..n].parse::<i64>() {
            out.push(v);
        }
    }
    out
}

fn road_ids(text: &str) -> Vec<i64> {
    let mut out = Vec::new();
    for (i, _) in text.match_indices('(') {
        let rest = text[i + 1..].trim_start();
        let Some(rest) = rest.strip_prefix("id").or_else(|| rest.strip_prefix("ID")) else {
            continue;
        };
        let Some(rest) = rest.trim_start().strip_prefix('=') else {
            continue;
        };
        let rest = rest.trim_start();
        let n = rest.bytes().take_while(u8::is_ascii_digit).count();
        if let Ok(v) = rest[..n].parse::<i64>() {
            out.push(v);
        }
    }
    out
}

fn direction_token(tok: &str) -> Option<Cardinal> {
    let lower = tok.to_ascii_lowercase();
    let base = ["wards", "ward", "bound", "erly"]
        .iter()
        .find_map(|suf| lower.strip_suffix(suf))
        .unwrap_or(&lower);
    // two-letter tokens are abbreviations, handled separately
    Cardinal::parse(base).filter(|_| base.len() > 2)
}

/// First direction word; prose (lower-case) words beat capitalized ones,
/// which may be part of a road name, and those beat bare abbreviations.
fn direction(text: &str) -> Option<Cardinal> {
    let tokens: Vec<&str> = text
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
        .map(|t| t.trim_matches('-'))
        .filter(|t| !t.is_empty())
        .collect();
    let lower = tokens
        .iter()
        .filter(|t| t.chars().all(|c| !c.is_ascii_uppercase()))
        .find_map(|t| direction_token(t));
    lower
        .or_else(|| tokens.iter().find_map(|t| direction_token(t)))
        .or_else(|| {
            tokens
                .iter()
                .filter(|t| t.len() <= 2 && t.chars().all(|c| c.is_ascii_uppercase()))
                .find_map(|t| Cardinal::parse(t))
        })
}

fn road_name(body: &str) -> String {
    let Some(pos) = body.find("(id") else {
        return String::new();
    };
    let before = body[..pos].trim_end();
    let lower = before.to_ascii_lowercase();
    let cut = [" along ", " onto ", " on ", " via ", " follow ", " take ", " join "]
        .iter()
        .filter_map(|k| lower.rfind(k).map(|i| i + k.len()))
        .max();
    let name = match cut {
        Some(i) => &before[i..],
        None => before.rsplit(' ').next().unwrap_or(""),
    };
    String::from(name.trim_matches(|c: char| c.is_ascii_punctuation() || c == ' '))
}

/// Extracts the plan from a Stage-1 completion.
pub fn parse_plan(text: &str) -> Result<NavigationPlan, LlmError> {
    let mut reasoning: Vec<&str> = Vec::new();
    let mut in_reasoning = false;
    let mut raw_steps: Vec<(String, Vec<&str>)> = Vec::new();
    let mut in_step = false;
    for line in text.lines() {
        if let Some((n, body)) = step_header(line) {
            in_reasoning = false;
            in_step = true;
            let mut parts = Vec::new();
            if !body.is_empty() {
                parts.push(body);
            }
            raw_steps.push((String::from(n), parts));
            continue;
        }
        if let Some(rest) = heading_rest(line, "REASONING") {
            in_reasoning = true;
            in_step = false;
            if !rest.is_empty() {
                reasoning.push(rest);
            }
            continue;
        }
        if line.trim().is_empty() || is_section_heading(line) {
            in_step = false;
            if is_section_heading(line) {
                in_reasoning = false;
            }
            continue;
        }
        if in_step {
            if let Some(last) = raw_steps.last_mut() {
                last.1.push(line.trim());
            }
        } else if in_reasoning {
            reasoning.push(line.trim());
        }
    }
    if raw_steps.is_empty() {
        return Err(LlmError::PlanParse);
    }
    let mut steps: Vec<NavStep> = Vec::new();
    let mut prev_dir: Option<Cardinal> = None;
    for (i, (n, parts)) in raw_steps.into_iter().enumerate() {
        let body = parts.join(" ");
        let dir = direction(&body).or_else(|| {
            body.to_ascii_lowercase()
                .contains("straight")
                .then_some(prev_dir)
                .flatten()
        });
        prev_dir = dir.or(prev_dir);
        let target = numbers_after(&body, "node_id_original")
            .last()
            .map_or(Anchor::Endpoint, |n| Anchor::Node(*n));
        steps.push(NavStep {
            index: i + 1,
            text: format!("step_{n}: {body}"),
            direction: dir,
            road_name: road_name(&body),
            road_ids: road_ids(&body),
            target,
        });
    }
    Ok(NavigationPlan {
        reasoning: reasoning.join("\n"),
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedCoordinates {
    pub points: Vec<GeoPoint>,
    /// Pairs rejected as out of range.
    pub dropped: usize,
}

/// Every `[lat, lon]` pair in the completion, in order. A completion that
/// continues the prompt's list (leading comma) gets `start` prepended.
pub fn parse_step_coordinates(text: &str, start: &GeoPoint) -> Result<ParsedCoordinates, LlmError> {
    let mut points = Vec::new();
    let mut dropped = 0;
    if text.trim_start().starts_with(',') {
        points.push(*start);
    }
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else { break };
        let inner = &after[..close];
        if !inner.contains('[') {
            let fields: Vec<&str> = inner.split(',').map(str::trim).collect();
            if fields.len() == 2 {
                if let (Ok(lat), Ok(lon)) = (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
                    match GeoPoint::new(lat, lon) {
                        Ok(p) => points.push(p),
                        Err(_) => dropped += 1,
                    }
                }
            }
            rest = &after[close + 1..];
        } else {
            rest = after;
        }
    }
    if points.is_empty() {
        return Err(LlmError::CoordParse);
    }
    Ok(ParsedCoordinates { points, dropped })
}
