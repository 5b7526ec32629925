//! Semantic search over spatially uncertain trajectories.
//!
//! Trajectories sampled as base-station references are textualized against
//! the POIs of each station's Voronoi region, query sentences are parsed into
//! temporal windows and ordered spatial keyword groups, POIs are ranked by
//! BM25 plus regional topic similarity, and matching trajectories come out of
//! a time-partitioned inverted index.

pub mod cli;
pub mod docgen;
pub mod embed;
pub mod index;
pub mod model;
pub mod nlq;
pub mod pipeline;
pub mod psr;
pub mod relevance;
pub mod service;
pub mod synth;
pub mod topics;
pub mod trajops;
