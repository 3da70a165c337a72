//! Ideological bias dynamics of social media users.
//!
//! The pipeline classifies shared URLs by the bias of the outlet they link
//! to, assigns every user an initial and a final bias group from two time
//! windows, detects users who drop out, tallies the flow matrix between
//! groups and summarizes how far users moved along the bias-group graph.
//!
//! * [`catalog`]: outlet catalog and URL classification
//! * [`events`]: event records, streaming parser, time windows
//! * [`bias`]: window biases, bias groups, user status
//! * [`geometry`]: constellations and signed distances between groups
//! * [`flow`]: flow matrix, dropout fractions, local modes
//! * [`movement`]: movement vectors and box-plot statistics
//! * [`synth`]: seeded synthetic cohorts with exact ground truth
//! * [`pipeline`] / [`report`]: sharded end-to-end driver and output tables

pub mod bias;
pub mod catalog;
pub mod error;
pub mod events;
pub mod flow;
pub mod geometry;
pub mod movement;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use bias::{bias_group, classify_user, window_bias, StudyRules, UserBiasProfile, UserStatus, WindowMode};
pub use catalog::{category_rank, classify_url, parse_catalog, NewsCategory, OutletCatalog};
pub use error::{Error, Result};
pub use events::{window_filter, Event, EventKind, EventReader, KindSet, ParseReport, TimeWindow};
pub use flow::{build_flow, dropout_fraction, local_modes, FlowSummary, Outcome, Scope};
pub use geometry::{constellation_of, signed_distance, BiasGraph, Constellation};
pub use movement::{box_stats, movement_stats, movement_vectors, BoxStats, MovementStats};
pub use pipeline::{
    analyze_sources, run_analyze, EventSource, PipelineConfig, PipelineOutput, ReportBundle, RunConfig,
};
pub use report::{summarize_counts, Format, UrlSummary};
pub use synth::{generate_cohort, CohortStream, ForceParams, SynthSpec};
