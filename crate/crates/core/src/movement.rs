//! Signed movement of active users and per-group box-plot statistics.

use serde::Serialize;
use thiserror::Error;

use crate::catalog::NewsCategory;
use crate::flow::FlowSummary;
use crate::geometry::{signed_distance, BiasGraph, GeometryError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MovementError {
    #[error("cannot summarize an empty list")]
    Empty,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Box-plot summary of one list. Whiskers are the true minimum and maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lo_whisker: f64,
    pub hi_whisker: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MovementStats {
    pub group: NewsCategory,
    #[serde(flatten)]
    pub stats: BoxStats,
}

/// Quantile of sorted data by linear interpolation at `h = p * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    match sorted.get(lo + 1) {
        Some(next) => sorted[lo] + (h - lo as f64) * (next - sorted[lo]),
        None => sorted[lo],
    }
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats, MovementError> {
    if values.is_empty() {
        return Err(MovementError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(BoxStats {
        n,
        mean: sorted.iter().sum::<f64>() / n as f64,
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        lo_whisker: sorted[0],
        hi_whisker: sorted[n - 1],
    })
}

/// Per initial group, the signed distance of every active user's move.
/// Each vector is ordered by final group.
pub fn movement_vectors(summary: &FlowSummary, graph: &BiasGraph) -> Result<[Vec<i32>; 8], MovementError> {
    let mut out: [Vec<i32>; 8] = Default::default();
    for from in NewsCategory::ALL {
        let row = &summary.matrix[from.index()];
        let vector = &mut out[from.index()];
        vector.reserve(row.iter().sum::<u64>() as usize);
        for to in NewsCategory::ALL {
            let count = row[to.index()];
            if count == 0 {
                continue;
            }
            let d = signed_distance(from, to, graph)?;
            vector.extend(std::iter::repeat_n(d, count as usize));
        }
    }
    Ok(out)
}

/// Box-plot statistics for every initial group with at least one active user.
pub fn movement_stats(summary: &FlowSummary, graph: &BiasGraph) -> Result<Vec<MovementStats>, MovementError> {
    let vectors = movement_vectors(summary, graph)?;
    let mut out = Vec::new();
    for group in NewsCategory::ALL {
        let v = &vectors[group.index()];
        if v.is_empty() {
            continue;
        }
        let values: Vec<f64> = v.iter().map(|&d| f64::from(d)).collect();
        out.push(MovementStats {
            group,
            stats: box_stats(&values)?,
        });
    }
    Ok(out)
}
