#![cfg_attr(not(feature = "std"), no_std)]
//! Core of the visualization-literacy benchmark: chart generation, item
//! bank, trial planning, scoring, statistics and report data.

extern crate alloc;

pub mod chart;
pub mod chartgen;
pub mod geo;
pub mod numfmt;
pub mod qbank;
pub mod render;
pub mod report;
pub mod runner;
pub mod scene;
pub mod scoring;
pub mod stats;
