//! Core algorithms for masked GPS-trajectory reconstruction.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without the standard library (`alloc` is required). File formats,
//! HTTP clients and the command line live in the companion `gaptrace` crate.
//!
//! Modules:
//! - [`geo`]: points, polylines, haversine/bearing and segment distances.
//! - [`traces`]: activity tagging, trace filtering, gap masking, dataset splits.
//! - [`roadnet`]: Overpass queries, road graph construction, snapping and the
//!   four textual network representations.
//! - [`baselines`]: linear interpolation, HMM map matching, polyline codec.
//! - [`llm`]: the two-stage path-selection / coordinate-generation pipeline.
//! - [`metrics`]: MAE/PoT reconstruction scores, stage diagnostics, aggregation.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod math;

pub mod baselines;
pub mod geo;
pub mod llm;
pub mod metrics;
pub mod roadnet;
pub mod traces;

pub use geo::{BBox, Cardinal, GeoError, GeoPoint, Polyline};
