//! File formats, reports and the command line for `freeopt-core`.
//!
//! Configs are versioned JSON ([`config`]), replay inputs are CSV
//! ([`dataset`]), reports are CSV/JSON with unit-suffixed columns
//! ([`report`]) and every run leaves a [`manifest::RunManifest`].

pub mod cli;
pub mod config;
pub mod dataset;
pub mod manifest;
pub mod report;
pub mod run;
