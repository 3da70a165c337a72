//! News-outlet bias catalog and URL classification.
//!
//! The catalog maps normalized outlet domains to one of eight ranked news
//! media categories. URLs are classified by their host, matching the longest
//! catalog domain that is a dot-aligned suffix of the host.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("catalog is empty")]
    Empty,
    #[error("duplicate domain `{domain}` on line {line}")]
    DuplicateDomain { domain: String, line: usize },
    #[error("unknown category `{name}` on line {line}")]
    UnknownCategoryOnLine { name: String, line: usize },
    #[error("malformed catalog row on line {line}: expected `domain,category`")]
    MalformedRow { line: usize },
    #[error("empty domain on line {line}")]
    EmptyDomain { line: usize },
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("rank {0} is outside 1..=8")]
    InvalidRank(i64),
}

/// One of the eight ranked news media categories, ordered from the far left
/// of the political spectrum to fake news.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NewsCategory {
    ExtremeLeft,
    Left,
    LeaningLeft,
    Center,
    LeaningRight,
    Right,
    ExtremeRight,
    Fake,
}

impl NewsCategory {
    /// All categories in rank order.
    pub const ALL: [NewsCategory; 8] = [
        NewsCategory::ExtremeLeft,
        NewsCategory::Left,
        NewsCategory::LeaningLeft,
        NewsCategory::Center,
        NewsCategory::LeaningRight,
        NewsCategory::Right,
        NewsCategory::ExtremeRight,
        NewsCategory::Fake,
    ];

    /// Integer rank, 1 (extreme left) through 8 (fake news).
    pub fn rank(self) -> u8 {
        self.index() as u8 + 1
    }

    /// Zero-based position in [`NewsCategory::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_rank(rank: i64) -> Result<Self, CatalogError> {
        if (1..=8).contains(&rank) {
            Ok(Self::ALL[(rank - 1) as usize])
        } else {
            Err(CatalogError::InvalidRank(rank))
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            NewsCategory::ExtremeLeft => "ExtremeLeft",
            NewsCategory::Left => "Left",
            NewsCategory::LeaningLeft => "LeaningLeft",
            NewsCategory::Center => "Center",
            NewsCategory::LeaningRight => "LeaningRight",
            NewsCategory::Right => "Right",
            NewsCategory::ExtremeRight => "ExtremeRight",
            NewsCategory::Fake => "Fake",
        }
    }
}

impl fmt::Display for NewsCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NewsCategory {
    type Err = CatalogError;

    /// Category names are case-sensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| CatalogError::UnknownCategory(s.to_string()))
    }
}

/// Rank of a category given by name.
pub fn category_rank(name: &str) -> Result<u8, CatalogError> {
    name.parse::<NewsCategory>().map(NewsCategory::rank)
}

/// Domain → category lookup table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OutletCatalog {
    entries: HashMap<String, NewsCategory>,
}

impl OutletCatalog {
    /// Builds a catalog from `(domain, category)` pairs, normalizing domains.
    pub fn from_entries<I, S>(entries: I) -> Result<Self, CatalogError>
    where
        I: IntoIterator<Item = (S, NewsCategory)>,
        S: AsRef<str>,
    {
        let mut catalog = OutletCatalog::default();
        for (i, (domain, category)) in entries.into_iter().enumerate() {
            catalog.insert(domain.as_ref(), category, i + 1)?;
        }
        if catalog.is_empty() {
            return Err(CatalogError::Empty);
        }
        Ok(catalog)
    }

    fn insert(&mut self, raw: &str, category: NewsCategory, line: usize) -> Result<(), CatalogError> {
        let domain = normalize_domain(raw);
        if domain.is_empty() {
            return Err(CatalogError::EmptyDomain { line });
        }
        if self.entries.contains_key(&domain) {
            return Err(CatalogError::DuplicateDomain { domain, line });
        }
        self.entries.insert(domain, category);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact lookup of an already-normalized domain.
    pub fn get(&self, domain: &str) -> Option<NewsCategory> {
        self.entries.get(domain).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NewsCategory)> {
        self.entries.iter().map(|(d, c)| (d.as_str(), *c))
    }

    /// Domains of one category in lexicographic order.
    pub fn domains_for(&self, category: NewsCategory) -> Vec<&str> {
        let mut domains: Vec<&str> = self
            .entries
            .iter()
            .filter(|(_, c)| **c == category)
            .map(|(d, _)| d.as_str())
            .collect();
        domains.sort_unstable();
        domains
    }

    /// Looks up a host, trying successively shorter dot-aligned suffixes.
    pub fn classify_host(&self, host: &str) -> Option<NewsCategory> {
        let host = host.trim_end_matches('.');
        let host = host.strip_prefix("www.").unwrap_or(host);
        let mut candidate = host;
        loop {
            if candidate.is_empty() {
                return None;
            }
            if let Some(category) = self.entries.get(candidate) {
                return Some(*category);
            }
            let dot = candidate.find('.')?;
            candidate = &candidate[dot + 1..];
        }
    }

    /// Serializes to the catalog file format, sorted by domain.
    pub fn to_catalog_text(&self) -> String {
        let mut rows: Vec<(&str, NewsCategory)> = self.iter().collect();
        rows.sort_unstable();
        let mut out = String::new();
        for (domain, category) in rows {
            out.push_str(domain);
            out.push(',');
            out.push_str(category.name());
            out.push('\n');
        }
        out
    }
}

/// Lowercases, strips any scheme, path, port and one leading `www.`.
pub fn normalize_domain(raw: &str) -> String {
    let mut s = raw.trim();
    if let Some(pos) = s.find("://") {
        s = &s[pos + 3..];
    }
    if let Some(pos) = s.find(['/', '?', '#']) {
        s = &s[..pos];
    }
    if let Some(pos) = s.rfind(':') {
        s = &s[..pos];
    }
    let s = s.trim_end_matches('.').to_ascii_lowercase();
    match s.strip_prefix("www.") {
        Some(rest) => rest.to_string(),
        None => s,
    }
}

/// Parses catalog text: one `domain,category` row per line, `#` comments and
/// blank lines ignored.
pub fn parse_catalog(text: &str) -> Result<OutletCatalog, CatalogError> {
    let mut catalog = OutletCatalog::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',');
        let (Some(domain), Some(name), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(CatalogError::MalformedRow { line: line_no });
        };
        let name = name.trim();
        let category = name
            .parse::<NewsCategory>()
            .map_err(|_| CatalogError::UnknownCategoryOnLine {
                name: name.to_string(),
                line: line_no,
            })?;
        catalog.insert(domain, category, line_no)?;
    }
    if catalog.is_empty() {
        return Err(CatalogError::Empty);
    }
    Ok(catalog)
}

/// Extracts the lowercase host of a URL. Scheme-less inputs such as
/// `example.com/a` are retried as `http://`.
pub fn extract_host(url: &str) -> Option<String> {
    let url = url.trim();
    if url.is_empty() {
        return None;
    }
    let parsed = match Url::parse(url) {
        Ok(u) => u,
        Err(url::ParseError::RelativeUrlWithoutBase) if !url.contains("://") => {
            Url::parse(&format!("http://{url}")).ok()?
        }
        Err(_) => return None,
    };
    let host = parsed.host_str()?.to_ascii_lowercase();
    if host.is_empty() {
        None
    } else {
        Some(host)
    }
}

/// Category of the outlet a URL links to, if any.
pub fn classify_url(url: &str, catalog: &OutletCatalog) -> Option<NewsCategory> {
    let host = extract_host(url)?;
    catalog.classify_host(&host)
}
