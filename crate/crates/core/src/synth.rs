//! Seeded synthetic cohorts with exact ground truth.
//!
//! Every synthetic user starts in a known bias group, either drops out or
//! moves to a known final group, and emits events whose URLs make the
//! pipeline recover exactly those groups. The generator's own tally is the
//! ground-truth [`FlowSummary`].

use std::collections::VecDeque;

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{NewsCategory, OutletCatalog};
use crate::events::{parse_instant, Event, EventKind, TimeWindow};
use crate::flow::{FlowSummary, Outcome};
use crate::geometry::{signed_distance, BiasGraph};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("catalog has no domain for category {0}")]
    MissingCategory(NewsCategory),
    #[error("migration row {row} sums to {sum}, expected 1")]
    RowNotStochastic { row: u8, sum: f64 },
    #[error("migration row {row} has an invalid entry")]
    InvalidProbability { row: u8 },
    #[error("dropout probability for group {0} is outside [0, 1]")]
    InvalidDropout(u8),
    #[error("urls_per_window must be positive")]
    NoUrls,
    #[error("invalid force parameters: {0}")]
    InvalidForce(String),
    #[error("invalid time layout: {0}")]
    InvalidWindows(String),
}

/// Parameters of the popularity/travel/dropout sampling kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceParams {
    /// Exponent on group popularity; 0 ignores popularity.
    pub alpha: f64,
    /// Travel-penalty length scale; infinity ignores distance.
    pub lambda: f64,
    /// Users whose sampled move is longer than this drop out instead.
    #[serde(default)]
    pub drop_threshold: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    /// Users per initial group, in rank order.
    pub populations: [u64; 8],
    /// Row-stochastic final-group probabilities, row = initial group.
    pub migration: [[f64; 8]; 8],
    pub dropout_prob: [f64; 8],
    pub urls_per_window: u32,
    pub range: TimeWindow,
    pub initial: TimeWindow,
    pub final_window: TimeWindow,
    pub dropout_gap_days: i64,
    #[serde(default)]
    pub force_params: Option<ForceParams>,
    /// Mix ranks within a window while keeping the mean within half a rank
    /// of the target group.
    #[serde(default)]
    pub noise: bool,
}

pub fn identity_migration() -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

impl SynthSpec {
    /// Sep 1 - Dec 1 2020 with first and last calendar months as windows,
    /// a 60-day dropout gap, identity migration and no dropout.
    pub fn new(seed: u64, populations: [u64; 8]) -> Self {
        let start = parse_instant("2020-09-01").expect("valid date");
        let end = parse_instant("2020-12-01").expect("valid date");
        SynthSpec {
            seed,
            populations,
            migration: identity_migration(),
            dropout_prob: [0.0; 8],
            urls_per_window: 4,
            range: TimeWindow { start, end },
            initial: TimeWindow::month_from(start),
            final_window: TimeWindow::month_until(end),
            dropout_gap_days: 60,
            force_params: None,
            noise: false,
        }
    }

    pub fn dropout_cutoff(&self) -> DateTime<Utc> {
        self.range.end - Duration::days(self.dropout_gap_days)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (i, row) in self.migration.iter().enumerate() {
            let rank = i as u8 + 1;
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(SynthError::InvalidProbability { row: rank });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SynthError::RowNotStochastic { row: rank, sum });
            }
        }
        if let Some(i) = self.dropout_prob.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(SynthError::InvalidDropout(i as u8 + 1));
        }
        if self.urls_per_window == 0 {
            return Err(SynthError::NoUrls);
        }
        if let Some(f) = self.force_params {
            if !(f.alpha >= 0.0 && f.alpha.is_finite()) {
                return Err(SynthError::InvalidForce(format!(
                    "alpha {} must be finite and >= 0",
                    f.alpha
                )));
            }
            if f.lambda.is_nan() || f.lambda <= 0.0 {
                return Err(SynthError::InvalidForce(format!("lambda {} must be > 0", f.lambda)));
            }
        }
        let bad = |msg: &str| Err(SynthError::InvalidWindows(msg.to_string()));
        if self.dropout_gap_days <= 0 {
            return bad("dropout gap must be positive");
        }
        if !self.initial.within(&self.range) || !self.final_window.within(&self.range) {
            return bad("windows must lie inside the range");
        }
        if self.initial.end > self.final_window.start {
            return bad("initial window must end before the final window starts");
        }
        if self.dropout_span().is_none() {
            return bad("initial window must start before the dropout cutoff");
        }
        if self.final_span().is_none() {
            return bad("final window must reach past the dropout cutoff");
        }
        Ok(())
    }

    /// Where dropouts may post: initial window before the cutoff.
    fn dropout_span(&self) -> Option<TimeWindow> {
        let before = TimeWindow::new(self.range.start, self.dropout_cutoff()).ok()?;
        self.initial.intersect(&before)
    }

    /// Where active users post final-window URLs: final window after the
    /// cutoff, so every active user is recent.
    fn final_span(&self) -> Option<TimeWindow> {
        let after = TimeWindow::new(self.dropout_cutoff(), self.range.end).ok()?;
        self.final_window.intersect(&after)
    }
}

/// Final-group probabilities under the force kernel:
/// `popularity(g)^alpha * exp(-|distance(from, g)| / lambda)`, normalized,
/// where popularity is the initial population share.
pub fn force_kernel(from: NewsCategory, populations: &[u64; 8], force: &ForceParams, graph: &BiasGraph) -> [f64; 8] {
    let total: u64 = populations.iter().sum();
    let mut weights = [0.0; 8];
    for to in NewsCategory::ALL {
        let share = if total == 0 {
            0.0
        } else {
            populations[to.index()] as f64 / total as f64
        };
        let hops = signed_distance(from, to, graph)
            .map(|d| d.unsigned_abs() as f64)
            .unwrap_or(f64::INFINITY);
        weights[to.index()] = share.powf(force.alpha) * (-hops / force.lambda).exp();
    }
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        weights.iter_mut().for_each(|w| *w /= sum);
    } else {
        weights[from.index()] = 1.0;
    }
    weights
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64; 8]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Outlet domains for a synthetic catalog: two per category.
pub fn default_catalog() -> OutletCatalog {
    let entries = NewsCategory::ALL.into_iter().flat_map(|c| {
        let slug = c.name().to_ascii_lowercase();
        [(format!("{slug}-daily.test"), c), (format!("{slug}-wire.test"), c)]
    });
    OutletCatalog::from_entries(entries).expect("distinct non-empty domains")
}

/// Lazily generated synthetic event stream. Users are produced one at a time
/// so memory stays bounded regardless of cohort size.
pub struct CohortStream {
    spec: SynthSpec,
    rng: ChaCha8Rng,
    domains: Vec<Vec<String>>,
    kernels: Option<[[f64; 8]; 8]>,
    graph: BiasGraph,
    group: usize,
    member: u64,
    next_user: u64,
    pending: VecDeque<Event>,
    truth: FlowSummary,
}

impl CohortStream {
    pub fn new(spec: SynthSpec, catalog: &OutletCatalog) -> Result<Self, SynthError> {
        spec.validate()?;
        let mut domains = Vec::with_capacity(8);
        for c in NewsCategory::ALL {
            let d: Vec<String> = catalog.domains_for(c).into_iter().map(str::to_string).collect();
            if d.is_empty() {
                return Err(SynthError::MissingCategory(c));
            }
            domains.push(d);
        }
        let graph = BiasGraph::chain();
        let kernels = spec.force_params.map(|f| {
            let mut k = [[0.0; 8]; 8];
            for from in NewsCategory::ALL {
                k[from.index()] = force_kernel(from, &spec.populations, &f, &graph);
            }
            k
        });
        Ok(CohortStream {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            spec,
            domains,
            kernels,
            graph,
            group: 0,
            member: 0,
            next_user: 0,
            pending: VecDeque::new(),
            truth: FlowSummary::default(),
        })
    }

    /// Ground truth for the users generated so far; complete once the
    /// stream is exhausted.
    pub fn truth(&self) -> &FlowSummary {
        &self.truth
    }

    pub fn into_truth(self) -> FlowSummary {
        self.truth
    }

    fn next_initial_group(&mut self) -> Option<NewsCategory> {
        while self.group < 8 {
            if self.member < self.spec.populations[self.group] {
                self.member += 1;
                return NewsCategory::from_index(self.group);
            }
            self.group += 1;
            self.member = 0;
        }
        None
    }

    fn sample_outcome(&mut self, initial: NewsCategory) -> Outcome {
        let i = initial.index();
        let dropped = self.rng.random::<f64>() < self.spec.dropout_prob[i];
        let row = match &self.kernels {
            Some(k) => k[i],
            None => self.spec.migration[i],
        };
        let fin = NewsCategory::ALL[sample_index(&mut self.rng, &row)];
        if dropped {
            return Outcome::Dropout;
        }
        if let Some(threshold) = self.spec.force_params.and_then(|f| f.drop_threshold) {
            let hops = signed_distance(initial, fin, &self.graph)
                .expect("chain is connected")
                .unsigned_abs();
            if hops > threshold {
                return Outcome::Dropout;
            }
        }
        Outcome::Active(fin)
    }

    fn generate_user(&mut self, initial: NewsCategory) {
        let user_id = format!("user{:07}", self.next_user);
        self.next_user += 1;
        let outcome = self.sample_outcome(initial);
        self.truth.record(initial, outcome);

        let mut events = Vec::new();
        let dropout_span = self.spec.dropout_span().expect("validated");
        let initial_span = match outcome {
            Outcome::Dropout => dropout_span,
            _ => self.spec.initial,
        };
        self.window_events(&user_id, initial, initial_span, &mut events);
        let chatter_span = match outcome {
            Outcome::Active(fin) => {
                let span = self.spec.final_span().expect("validated");
                self.window_events(&user_id, fin, span, &mut events);
                self.spec.range
            }
            _ => dropout_span,
        };
        for _ in 0..self.rng.random_range(0..=2) {
            let urls = if self.rng.random_bool(0.5) {
                Vec::new()
            } else {
                vec![format!(
                    "https://unrated{}.example.net/item",
                    self.rng.random_range(0..100)
                )]
            };
            let timestamp = self.instant_in(chatter_span);
            let kind = self.kind();
            events.push(Event {
                user_id: user_id.clone(),
                timestamp,
                kind,
                urls,
            });
        }
        events.sort_by_key(|e| e.timestamp);
        self.pending.extend(events);
    }

    fn instant_in(&mut self, window: TimeWindow) -> DateTime<Utc> {
        let secs = (window.end - window.start).num_seconds();
        window.start + Duration::seconds(self.rng.random_range(0..secs))
    }

    fn kind(&mut self) -> EventKind {
        EventKind::ALL[self.rng.random_range(0..3)]
    }

    fn url_for(&mut self, rank_index: usize) -> String {
        let choices = &self.domains[rank_index];
        let domain = &choices[self.rng.random_range(0..choices.len())];
        let article: u32 = self.rng.random_range(0..1_000_000);
        match self.rng.random_range(0..3) {
            0 => format!("https://{domain}/article/{article}"),
            1 => format!("https://www.{domain}/story?id={article}"),
            _ => format!("http://politics.{domain}/{article}"),
        }
    }

    /// Ranks whose mean is `target` exactly, or with noise within half a
    /// rank (rounding half up still yields `target`).
    fn window_ranks(&mut self, target: NewsCategory) -> Vec<usize> {
        let n = self.spec.urls_per_window as usize;
        let g = target.index();
        let mut ranks = vec![g; n];
        if !self.spec.noise {
            return ranks;
        }
        let half = ((n - 1) / 2) as i64;
        let lo = if g == 0 { 0 } else { -half };
        let hi = if g == 7 { 0 } else { half };
        let shift = self.rng.random_range(lo..=hi);
        let k = shift.unsigned_abs() as usize;
        for r in ranks.iter_mut().take(k) {
            *r = if shift > 0 { g + 1 } else { g - 1 };
        }
        let spread = g.min(7 - g);
        if spread > 0 {
            let pairs = self.rng.random_range(0..=(n - k) / 2);
            for p in 0..pairs {
                let d = self.rng.random_range(1..=spread);
                ranks[k + 2 * p] = g + d;
                ranks[k + 2 * p + 1] = g - d;
            }
        }
        ranks.shuffle(&mut self.rng);
        ranks
    }

    fn window_events(&mut self, user_id: &str, target: NewsCategory, span: TimeWindow, out: &mut Vec<Event>) {
        let ranks = self.window_ranks(target);
        let mut idx = 0;
        while idx < ranks.len() {
            let take = self.rng.random_range(1..=3).min(ranks.len() - idx);
            let urls = ranks[idx..idx + take].iter().map(|&r| self.url_for(r)).collect();
            idx += take;
            let timestamp = self.instant_in(span);
            let kind = self.kind();
            out.push(Event {
                user_id: user_id.to_string(),
                timestamp,
                kind,
                urls,
            });
        }
    }
}

impl Iterator for CohortStream {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        loop {
            if let Some(e) = self.pending.pop_front() {
                return Some(e);
            }
            let initial = self.next_initial_group()?;
            self.generate_user(initial);
        }
    }
}

/// A fully materialized cohort.
#[derive(Clone, Debug)]
pub struct Cohort {
    pub events: Vec<Event>,
    pub truth: FlowSummary,
}

impl Cohort {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_json_line());
            out.push('\n');
        }
        out
    }
}

pub fn generate_cohort(spec: &SynthSpec, catalog: &OutletCatalog) -> Result<Cohort, SynthError> {
    let mut stream = CohortStream::new(spec.clone(), catalog)?;
    let events: Vec<Event> = stream.by_ref().collect();
    Ok(Cohort {
        events,
        truth: stream.into_truth(),
    })
}
