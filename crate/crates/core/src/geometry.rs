//! The bias-group graph: constellations, adjacency and signed distances.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::NewsCategory;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("no path between {0} and {1}")]
    Disconnected(NewsCategory, NewsCategory),
    #[error("malformed edge on line {line}: expected `rankA-rankB`")]
    MalformedEdge { line: usize },
    #[error("rank {rank} on line {line} is outside 1..=8")]
    InvalidRank { rank: String, line: usize },
    #[error("self-loop on rank {0}")]
    SelfLoop(u8),
}

/// Higher-level cluster of bias groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Constellation {
    Left,
    Right,
    /// Center and fake news sit outside both constellations.
    None,
}

impl Constellation {
    pub fn members(self) -> Vec<NewsCategory> {
        NewsCategory::ALL
            .into_iter()
            .filter(|g| constellation_of(*g) == self)
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Constellation::Left => "Left",
            Constellation::Right => "Right",
            Constellation::None => "None",
        }
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn constellation_of(group: NewsCategory) -> Constellation {
    match group.rank() {
        1..=3 => Constellation::Left,
        5..=7 => Constellation::Right,
        _ => Constellation::None,
    }
}

/// Undirected graph over the eight bias groups with precomputed all-pairs
/// shortest path lengths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiasGraph {
    adjacent: [[bool; 8]; 8],
    hops: [[Option<u32>; 8]; 8],
}

impl Default for BiasGraph {
    fn default() -> Self {
        BiasGraph::chain()
    }
}

impl BiasGraph {
    /// The rank chain 1-2-3-4-5-6-7-8.
    pub fn chain() -> Self {
        let edges = NewsCategory::ALL.windows(2).map(|w| (w[0], w[1]));
        BiasGraph::from_edges(edges).expect("chain has no self-loops")
    }

    pub fn from_edges<I>(edges: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = (NewsCategory, NewsCategory)>,
    {
        let mut adjacent = [[false; 8]; 8];
        for (a, b) in edges {
            if a == b {
                return Err(GeometryError::SelfLoop(a.rank()));
            }
            adjacent[a.index()][b.index()] = true;
            adjacent[b.index()][a.index()] = true;
        }
        Ok(BiasGraph {
            adjacent,
            hops: all_pairs_hops(&adjacent),
        })
    }

    /// Parses an edge list with one `rankA-rankB` pair per line. Blank lines
    /// and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, GeometryError> {
        let mut edges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (a, b) = line
                .split_once('-')
                .ok_or(GeometryError::MalformedEdge { line: line_no })?;
            let rank = |s: &str| {
                s.trim()
                    .parse::<i64>()
                    .ok()
                    .and_then(|r| NewsCategory::from_rank(r).ok())
                    .ok_or_else(|| GeometryError::InvalidRank {
                        rank: s.trim().to_string(),
                        line: line_no,
                    })
            };
            edges.push((rank(a)?, rank(b)?));
        }
        BiasGraph::from_edges(edges)
    }

    pub fn is_adjacent(&self, a: NewsCategory, b: NewsCategory) -> bool {
        self.adjacent[a.index()][b.index()]
    }

    /// Undirected edges with the lower rank first, in rank order.
    pub fn edges(&self) -> Vec<(NewsCategory, NewsCategory)> {
        let mut out = Vec::new();
        for i in 0..8 {
            for j in i + 1..8 {
                if self.adjacent[i][j] {
                    out.push((NewsCategory::ALL[i], NewsCategory::ALL[j]));
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.hops[0].iter().all(Option::is_some)
    }

    /// Unsigned shortest-path length in edges.
    pub fn hops(&self, a: NewsCategory, b: NewsCategory) -> Result<u32, GeometryError> {
        self.hops[a.index()][b.index()].ok_or(GeometryError::Disconnected(a, b))
    }
}

// Floyd-Warshall over unit edges.
fn all_pairs_hops(adjacent: &[[bool; 8]; 8]) -> [[Option<u32>; 8]; 8] {
    let mut d = [[None; 8]; 8];
    for i in 0..8 {
        d[i][i] = Some(0);
        for j in 0..8 {
            if adjacent[i][j] {
                d[i][j] = Some(1);
            }
        }
    }
    for k in 0..8 {
        for i in 0..8 {
            for j in 0..8 {
                if let (Some(ik), Some(kj)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|ij| ik + kj < ij) {
                        d[i][j] = Some(ik + kj);
                    }
                }
            }
        }
    }
    d
}

/// Shortest-path length from `from` to `to`, positive when moving toward a
/// higher rank and negative toward a lower one.
pub fn signed_distance(from: NewsCategory, to: NewsCategory, graph: &BiasGraph) -> Result<i32, GeometryError> {
    let hops = graph.hops(from, to)? as i32;
    Ok(match to.cmp(&from) {
        std::cmp::Ordering::Greater => hops,
        std::cmp::Ordering::Less => -hops,
        std::cmp::Ordering::Equal => 0,
    })
}
