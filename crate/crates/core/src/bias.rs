//! Per-user window biases, bias groups and user status.

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::catalog::{classify_url, NewsCategory, OutletCatalog};
use crate::events::{Event, KindSet, TimeWindow};

#[derive(Debug, Error, PartialEq)]
pub enum BiasError {
    #[error("bias {0} is outside [1, 8]")]
    OutOfRange(f64),
    #[error("unknown window mode `{0}` (expected `global` or `per-user`)")]
    UnknownWindowMode(String),
}

/// Running sum of URL ranks. Merging is addition, so tallies from disjoint
/// event subsets combine in any order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RankTally {
    pub sum: u64,
    pub count: u64,
}

impl RankTally {
    pub fn add(&mut self, category: NewsCategory) {
        self.sum += u64::from(category.rank());
        self.count += 1;
    }

    pub fn merge(&mut self, other: RankTally) {
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum as f64 / self.count as f64)
    }
}

/// Mean rank of every classified URL in `events`, counting only events of
/// the given kinds. `None` when nothing classifies.
pub fn window_bias_with_kinds<I>(events: I, catalog: &OutletCatalog, kinds: KindSet) -> Option<f64>
where
    I: IntoIterator,
    I::Item: Borrow<Event>,
{
    let mut tally = RankTally::default();
    for event in events {
        let event = event.borrow();
        if !kinds.contains(event.kind) {
            continue;
        }
        for url in &event.urls {
            if let Some(category) = classify_url(url, catalog) {
                tally.add(category);
            }
        }
    }
    tally.mean()
}

/// Mean rank of every classified URL in `events`.
pub fn window_bias<I>(events: I, catalog: &OutletCatalog) -> Option<f64>
where
    I: IntoIterator,
    I::Item: Borrow<Event>,
{
    window_bias_with_kinds(events, catalog, KindSet::all())
}

/// Nearest integer rank; exact halves round up.
pub fn bias_group(bias: f64) -> Result<NewsCategory, BiasError> {
    if !(1.0..=8.0).contains(&bias) {
        return Err(BiasError::OutOfRange(bias));
    }
    let rank = (bias + 0.5).floor() as i64;
    Ok(NewsCategory::from_rank(rank.min(8)).expect("rank within 1..=8"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UserStatus {
    Active,
    Dropout,
    UnclassifiedFinal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UserBiasProfile {
    pub user_id: String,
    pub initial_bias: f64,
    pub initial_group: NewsCategory,
    pub final_bias: Option<f64>,
    pub final_group: Option<NewsCategory>,
    pub status: UserStatus,
    pub last_event_ts: DateTime<Utc>,
}

/// How the initial and final windows are placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WindowMode {
    /// The same calendar windows for every user.
    #[default]
    Global,
    /// The calendar month after a user's first event and the calendar month
    /// ending at their last event.
    PerUser,
}

impl FromStr for WindowMode {
    type Err = BiasError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(WindowMode::Global),
            "per-user" | "per_user" => Ok(WindowMode::PerUser),
            other => Err(BiasError::UnknownWindowMode(other.to_string())),
        }
    }
}

impl fmt::Display for WindowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowMode::Global => "global",
            WindowMode::PerUser => "per-user",
        })
    }
}

/// Parameters that turn a user's events into a profile.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyRules {
    pub initial: TimeWindow,
    pub final_window: TimeWindow,
    pub dropout_gap: Duration,
    /// Analysis range; events outside it are ignored entirely.
    pub range: TimeWindow,
    pub window_mode: WindowMode,
    /// Kinds whose URLs count toward biases. Every kind counts as activity.
    pub kinds: KindSet,
    /// Report users without a classifiable final window as dropouts.
    pub unclassified_as_dropout: bool,
}

impl StudyRules {
    /// Global calendar windows with the default 60-day dropout gap.
    pub fn new(range: TimeWindow, initial: TimeWindow, final_window: TimeWindow) -> Self {
        StudyRules {
            initial,
            final_window,
            dropout_gap: Duration::days(60),
            range,
            window_mode: WindowMode::Global,
            kinds: KindSet::all(),
            unclassified_as_dropout: false,
        }
    }

    /// Activity at or after this instant keeps a user from dropping out.
    pub fn dropout_cutoff(&self) -> DateTime<Utc> {
        self.range.end - self.dropout_gap
    }

    /// Initial and final windows for a user whose events span
    /// `[first, last]`.
    pub fn windows_for(&self, first: DateTime<Utc>, last: DateTime<Utc>) -> (TimeWindow, TimeWindow) {
        match self.window_mode {
            WindowMode::Global => (self.initial, self.final_window),
            WindowMode::PerUser => (
                TimeWindow::month_from(first),
                TimeWindow::month_until(last + Duration::seconds(1)),
            ),
        }
    }

    /// Final status given the window tallies and recent activity.
    pub fn resolve(
        &self,
        user_id: &str,
        initial: RankTally,
        final_tally: RankTally,
        last_event_ts: DateTime<Utc>,
    ) -> Option<UserBiasProfile> {
        let initial_bias = initial.mean()?;
        let initial_group = bias_group(initial_bias).expect("mean of ranks lies in [1, 8]");
        let recent = last_event_ts >= self.dropout_cutoff();
        let final_bias = final_tally.mean().filter(|_| recent);
        let status = match final_bias {
            Some(_) => UserStatus::Active,
            None if !recent || self.unclassified_as_dropout => UserStatus::Dropout,
            None => UserStatus::UnclassifiedFinal,
        };
        Some(UserBiasProfile {
            user_id: user_id.to_string(),
            initial_bias,
            initial_group,
            final_bias,
            final_group: final_bias.map(|b| bias_group(b).expect("mean of ranks lies in [1, 8]")),
            status,
            last_event_ts,
        })
    }
}

/// Profile of one user from all of their events within the analysis range.
/// `None` when the user has no classifiable URL in the initial window.
pub fn classify_user(user_events: &[Event], rules: &StudyRules, catalog: &OutletCatalog) -> Option<UserBiasProfile> {
    let in_range: Vec<&Event> = user_events
        .iter()
        .filter(|e| rules.range.contains(e.timestamp))
        .collect();
    let first = in_range.iter().map(|e| e.timestamp).min()?;
    let last = in_range.iter().map(|e| e.timestamp).max()?;
    let (initial_window, final_window) = rules.windows_for(first, last);

    let mut initial = RankTally::default();
    let mut final_tally = RankTally::default();
    for event in &in_range {
        if !rules.kinds.contains(event.kind) {
            continue;
        }
        let in_initial = initial_window.contains(event.timestamp);
        let in_final = final_window.contains(event.timestamp);
        if !in_initial && !in_final {
            continue;
        }
        for category in event.urls.iter().filter_map(|u| classify_url(u, catalog)) {
            if in_initial {
                initial.add(category);
            }
            if in_final {
                final_tally.add(category);
            }
        }
    }
    rules.resolve(&in_range[0].user_id, initial, final_tally, last)
}
