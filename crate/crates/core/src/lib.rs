//! Circuit pre-synthesis toolkit: merge rewrites, plan search and Clifford+T synthesis.

pub mod circuit;
pub mod math;
pub mod merge;
pub mod synth;
pub mod search;
pub mod benchgen;
pub mod harness;
