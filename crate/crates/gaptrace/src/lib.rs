//! File formats, network clients, and the batch commands around
//! `gaptrace-core`.

pub mod commands;
pub mod config;
pub mod gpx;
pub mod io;
pub mod overpass;
pub mod provider;
pub mod report;
