//! Streaming verification of reasoning traces.
//!
//! A monitor watches a model's output as it streams, pulls structured
//! intermediate states out of the free text, checks each one, and edits the
//! live trace when a check fails (feedback injection) or when a stopping rule
//! fires (end-of-thinking injection). The crate is `no_std` + `alloc`; IO,
//! HTTP, and the CLI live in the companion `tracewarden` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backend;
pub mod extraction;
pub mod game24;
pub mod maze;
pub mod methods;
pub mod metrics;
pub mod monitor;
pub mod search;
pub mod spatial;
pub mod stopping;
pub mod taskgen;
pub mod trace;
pub mod verdict;

pub use verdict::{Span, Verdict};
