//! Report tables and their delimited / JSON encodings.
//!
//! Delimited outputs are comma-separated with a header row. Floating-point
//! columns use fixed precision (percentages 2 decimals, everything else 6)
//! so that files are byte-stable for fixed inputs.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::NewsCategory;
use crate::flow::FlowSummary;
use crate::movement::MovementStats;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("all URL counts are zero")]
    NoUrls,
    #[error("malformed counts row on line {line}")]
    MalformedCounts { line: usize },
    #[error("category `{0}` listed twice")]
    DuplicateCategory(String),
    #[error("malformed flow table: {0}")]
    MalformedFlow(String),
    #[error("unknown output format `{0}` (expected `csv` or `json`)")]
    UnknownFormat(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    /// Comma-delimited table.
    #[default]
    Csv,
    /// Pretty-printed JSON record.
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" | "delimited" => Ok(Format::Csv),
            "json" | "structured" => Ok(Format::Json),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

/// Per-category URL counts with their shares and count-weighted mean rank.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UrlSummary {
    pub counts: [u64; 8],
    pub total: u64,
    pub percentages: [f64; 8],
    pub weighted_mean_rank: f64,
}

pub fn summarize_counts(counts: &[u64; 8]) -> Result<UrlSummary, ReportError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(ReportError::NoUrls);
    }
    let mut percentages = [0.0; 8];
    let mut weighted = 0u128;
    for (i, &c) in counts.iter().enumerate() {
        percentages[i] = 100.0 * c as f64 / total as f64;
        weighted += (i as u128 + 1) * c as u128;
    }
    Ok(UrlSummary {
        counts: *counts,
        total,
        percentages,
        weighted_mean_rank: weighted as f64 / total as f64,
    })
}

/// Parses a counts file: `category,count` rows, `#` comments ignored.
/// Categories not listed count zero.
pub fn parse_counts(text: &str) -> Result<[u64; 8], ReportError> {
    let mut counts = [0u64; 8];
    let mut seen = [false; 8];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = || ReportError::MalformedCounts { line: i + 1 };
        let (name, count) = line.split_once(',').ok_or_else(malformed)?;
        let category: NewsCategory = name.trim().parse().map_err(|_| malformed())?;
        let count: u64 = count.trim().replace('_', "").parse().map_err(|_| malformed())?;
        if std::mem::replace(&mut seen[category.index()], true) {
            return Err(ReportError::DuplicateCategory(category.name().to_string()));
        }
        counts[category.index()] = count;
    }
    Ok(counts)
}

pub fn url_summary_csv(summary: &UrlSummary) -> String {
    let mut out = String::from("category,rank,count,pct\n");
    for c in NewsCategory::ALL {
        let i = c.index();
        let _ = writeln!(
            out,
            "{},{},{},{:.2}",
            c.name(),
            c.rank(),
            summary.counts[i],
            summary.percentages[i]
        );
    }
    out
}

const FLOW_HEADER: &str = "group,rank,I,D,U,A,F,FM_1,FM_2,FM_3,FM_4,FM_5,FM_6,FM_7,FM_8";

/// One row per group: its marginals and its flow-matrix row. `F` on a row is
/// the count of users whose final group is that row's group.
pub fn flow_csv(flow: &FlowSummary) -> String {
    let mut out = String::from(FLOW_HEADER);
    out.push('\n');
    for c in NewsCategory::ALL {
        let i = c.index();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            c.name(),
            c.rank(),
            flow.newcomers[i],
            flow.dropouts[i],
            flow.unclassified[i],
            flow.active[i],
            flow.finals[i]
        );
        for cell in flow.matrix[i] {
            let _ = write!(out, ",{cell}");
        }
        out.push('\n');
    }
    out
}

/// Reads a flow table written by [`flow_csv`] and checks conservation.
pub fn parse_flow_csv(text: &str) -> Result<FlowSummary, ReportError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| ReportError::MalformedFlow("empty input".into()))?;
    if header != FLOW_HEADER {
        return Err(ReportError::MalformedFlow(format!("unexpected header `{header}`")));
    }
    let mut flow = FlowSummary::default();
    let mut seen = [false; 8];
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 15 {
            return Err(ReportError::MalformedFlow(format!(
                "row `{line}` has {} columns",
                cols.len()
            )));
        }
        let category: NewsCategory = cols[0]
            .parse()
            .map_err(|_| ReportError::MalformedFlow(format!("unknown group `{}`", cols[0])))?;
        if cols[1] != category.rank().to_string() {
            return Err(ReportError::MalformedFlow(format!(
                "rank of {category} should be {}",
                category.rank()
            )));
        }
        let nums: Vec<u64> = cols[2..]
            .iter()
            .map(|c| c.parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ReportError::MalformedFlow(format!("row `{line}`: {e}")))?;
        let i = category.index();
        if std::mem::replace(&mut seen[i], true) {
            return Err(ReportError::MalformedFlow(format!("group {category} listed twice")));
        }
        flow.newcomers[i] = nums[0];
        flow.dropouts[i] = nums[1];
        flow.unclassified[i] = nums[2];
        flow.active[i] = nums[3];
        flow.finals[i] = nums[4];
        flow.matrix[i].copy_from_slice(&nums[5..13]);
    }
    if !seen.iter().all(|s| *s) {
        return Err(ReportError::MalformedFlow("missing group rows".into()));
    }
    flow.validate().map_err(|e| ReportError::MalformedFlow(e.to_string()))?;
    Ok(flow)
}

/// Reads a flow table in either encoding.
pub fn parse_flow(text: &str) -> Result<FlowSummary, ReportError> {
    if text.trim_start().starts_with('{') {
        let flow: FlowSummary = serde_json::from_str(text).map_err(|e| ReportError::MalformedFlow(e.to_string()))?;
        flow.validate().map_err(|e| ReportError::MalformedFlow(e.to_string()))?;
        Ok(flow)
    } else {
        parse_flow_csv(text)
    }
}

pub fn movement_csv(stats: &[MovementStats]) -> String {
    let mut out = String::from("group,rank,n,mean,q1,median,q3,lo_whisker,hi_whisker\n");
    for m in stats {
        let s = &m.stats;
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            m.group.name(),
            m.group.rank(),
            s.n,
            s.mean,
            s.q1,
            s.median,
            s.q3,
            s.lo_whisker,
            s.hi_whisker
        );
    }
    out
}

/// Dropout fraction of one scope; `None` when the scope had no newcomers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScopedFraction {
    pub scope: String,
    pub value: Option<f64>,
}

/// Counters describing one analysis run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunMetadata {
    pub lines_total: u64,
    pub lines_skipped: u64,
    pub events_read: u64,
    pub events_out_of_range: u64,
    pub urls_total: u64,
    pub urls_unclassified: u64,
    pub users_seen: u64,
    pub users_in_study: u64,
    pub users_out_of_study: u64,
    pub window_mode: String,
    pub range: String,
    pub initial_window: String,
    pub final_window: String,
    pub dropout_gap_days: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub weighted_mean_rank: f64,
    pub dropout_fractions: Vec<ScopedFraction>,
    /// Ranks of the local modes of `F`; `None` when no user has a final group.
    pub local_modes: Option<Vec<u8>>,
    pub metadata: RunMetadata,
}

pub fn summary_csv(summary: &Summary) -> String {
    let mut out = String::from("metric,scope,value\n");
    let _ = writeln!(out, "weighted_mean_rank,all,{:.6}", summary.weighted_mean_rank);
    for f in &summary.dropout_fractions {
        match f.value {
            Some(v) => {
                let _ = writeln!(out, "dropout_fraction,{},{v:.6}", f.scope);
            }
            None => {
                let _ = writeln!(out, "dropout_fraction,{},NA", f.scope);
            }
        }
    }
    match &summary.local_modes {
        Some(modes) => {
            let joined: Vec<String> = modes.iter().map(u8::to_string).collect();
            let _ = writeln!(out, "local_modes,final,{}", joined.join(" "));
        }
        None => out.push_str("local_modes,final,NA\n"),
    }
    let m = &summary.metadata;
    let rows: [(&str, String); 14] = [
        ("lines_total", m.lines_total.to_string()),
        ("lines_skipped", m.lines_skipped.to_string()),
        ("events_read", m.events_read.to_string()),
        ("events_out_of_range", m.events_out_of_range.to_string()),
        ("urls_total", m.urls_total.to_string()),
        ("urls_unclassified", m.urls_unclassified.to_string()),
        ("users_seen", m.users_seen.to_string()),
        ("users_in_study", m.users_in_study.to_string()),
        ("users_out_of_study", m.users_out_of_study.to_string()),
        ("window_mode", m.window_mode.clone()),
        ("range", m.range.clone()),
        ("initial_window", m.initial_window.clone()),
        ("final_window", m.final_window.clone()),
        ("dropout_gap_days", m.dropout_gap_days.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "{k},run,{v}");
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
