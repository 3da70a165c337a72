//! Event records, streaming line parser and time windows.
//!
//! The event file is JSON Lines. Each line is an object with keys
//! `user_id` (non-empty string), `timestamp` (RFC 3339 / ISO-8601 UTC string
//! or integer epoch seconds), `kind` (`"post"`, `"echo"` or `"comment"`) and
//! `urls` (array of strings; may be omitted when empty). Unknown keys are
//! ignored. Malformed lines are skipped and counted, never fatal.

use std::borrow::Borrow;
use std::fmt;
use std::io::{self, BufRead};
use std::str::FromStr;

use chrono::{DateTime, Months, NaiveDate, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EventError {
    #[error("invalid timestamp `{0}`")]
    InvalidTimestamp(String),
    #[error("unknown event kind `{0}`")]
    UnknownKind(String),
    #[error("empty user_id")]
    EmptyUser,
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("invalid window: start {start} is not before end {end}")]
    InvalidWindow { start: String, end: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Post,
    Echo,
    Comment,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [EventKind::Post, EventKind::Echo, EventKind::Comment];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Post => "post",
            EventKind::Echo => "echo",
            EventKind::Comment => "comment",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = EventError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "post" => Ok(EventKind::Post),
            "echo" => Ok(EventKind::Echo),
            "comment" => Ok(EventKind::Comment),
            other => Err(EventError::UnknownKind(other.to_string())),
        }
    }
}

/// Set of event kinds whose URLs contribute to biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KindSet(u8);

impl KindSet {
    pub fn all() -> Self {
        KindSet(0b111)
    }

    pub fn empty() -> Self {
        KindSet(0)
    }

    pub fn with(self, kind: EventKind) -> Self {
        KindSet(self.0 | kind.bit())
    }

    pub fn contains(self, kind: EventKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl Default for KindSet {
    fn default() -> Self {
        KindSet::all()
    }
}

impl FromIterator<EventKind> for KindSet {
    fn from_iter<T: IntoIterator<Item = EventKind>>(iter: T) -> Self {
        iter.into_iter().fold(KindSet::empty(), KindSet::with)
    }
}

impl FromStr for KindSet {
    type Err = EventError;

    /// Comma-separated kinds, e.g. `post,echo`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .map(EventKind::from_str)
            .collect()
    }
}

/// One user action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    pub kind: EventKind,
    pub urls: Vec<String>,
}

impl Event {
    /// Serializes to one JSON line (without trailing newline).
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            user_id: &'a str,
            timestamp: String,
            kind: EventKind,
            urls: &'a [String],
        }
        serde_json::to_string(&Out {
            user_id: &self.user_id,
            timestamp: format_instant(self.timestamp),
            kind: self.kind,
            urls: &self.urls,
        })
        .expect("event serialization cannot fail")
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTimestamp {
    Epoch(i64),
    Text(String),
}

#[derive(Deserialize)]
struct RawEvent {
    user_id: String,
    timestamp: RawTimestamp,
    kind: String,
    #[serde(default)]
    urls: Vec<String>,
}

/// Parses a single record line.
pub fn parse_event_line(line: &str) -> Result<Event, EventError> {
    let raw: RawEvent = serde_json::from_str(line).map_err(|e| EventError::Malformed(e.to_string()))?;
    if raw.user_id.is_empty() {
        return Err(EventError::EmptyUser);
    }
    let timestamp = match raw.timestamp {
        RawTimestamp::Epoch(secs) => epoch_to_instant(secs)?,
        RawTimestamp::Text(text) => parse_instant(&text)?,
    };
    Ok(Event {
        user_id: raw.user_id,
        timestamp,
        kind: raw.kind.parse()?,
        urls: raw.urls,
    })
}

fn epoch_to_instant(secs: i64) -> Result<DateTime<Utc>, EventError> {
    Utc.timestamp_opt(secs, 0)
        .single()
        .ok_or_else(|| EventError::InvalidTimestamp(secs.to_string()))
}

/// Parses an instant truncated to whole seconds. Accepts RFC 3339, a naive
/// `YYYY-MM-DDTHH:MM:SS` (taken as UTC), a bare date (midnight UTC) or
/// integer epoch seconds.
pub fn parse_instant(text: &str) -> Result<DateTime<Utc>, EventError> {
    let t = text.trim();
    let invalid = || EventError::InvalidTimestamp(text.to_string());
    if let Ok(secs) = t.parse::<i64>() {
        return epoch_to_instant(secs);
    }
    let parsed = if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        dt.with_timezone(&Utc)
    } else if let Ok(naive) = NaiveDateTime::parse_from_str(t, "%Y-%m-%dT%H:%M:%S%.f") {
        naive.and_utc()
    } else if let Ok(date) = NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        date.and_hms_opt(0, 0, 0).ok_or_else(invalid)?.and_utc()
    } else {
        return Err(invalid());
    };
    epoch_to_instant(parsed.timestamp())
}

pub fn format_instant(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Counters reported by [`EventReader`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub lines_total: u64,
    pub lines_skipped: u64,
}

impl ParseReport {
    pub fn merge(&mut self, other: ParseReport) {
        self.lines_total += other.lines_total;
        self.lines_skipped += other.lines_skipped;
    }
}

/// Streaming parser over a line-delimited reader. Yields well-formed events
/// in input order and holds at most one line in memory. Blank lines are
/// ignored and not counted.
pub struct EventReader<R> {
    reader: R,
    buf: Vec<u8>,
    report: ParseReport,
}

impl<R: BufRead> EventReader<R> {
    pub fn new(reader: R) -> Self {
        EventReader {
            reader,
            buf: Vec::with_capacity(512),
            report: ParseReport::default(),
        }
    }

    pub fn report(&self) -> ParseReport {
        self.report
    }

    /// Reads the next non-blank line into the internal buffer. Returns
    /// `Ok(None)` at end of stream. Counts the line as read.
    pub fn next_line(&mut self) -> io::Result<Option<&str>> {
        loop {
            self.buf.clear();
            if self.reader.read_until(b'\n', &mut self.buf)? == 0 {
                return Ok(None);
            }
            let trimmed = self.buf.trim_ascii();
            if trimmed.is_empty() {
                continue;
            }
            self.report.lines_total += 1;
            if std::str::from_utf8(trimmed).is_err() {
                self.report.lines_skipped += 1;
                continue;
            }
            break;
        }
        let line = std::str::from_utf8(self.buf.trim_ascii()).expect("validated above");
        Ok(Some(line))
    }

    /// Records a line the caller rejected.
    pub fn mark_skipped(&mut self) {
        self.report.lines_skipped += 1;
    }
}

impl<R: BufRead> Iterator for EventReader<R> {
    type Item = io::Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let parsed = match self.next_line() {
                Err(e) => return Some(Err(e)),
                Ok(None) => return None,
                Ok(Some(line)) => parse_event_line(line),
            };
            match parsed {
                Ok(event) => return Some(Ok(event)),
                Err(_) => self.mark_skipped(),
            }
        }
    }
}

/// Half-open interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, EventError> {
        if start < end {
            Ok(TimeWindow { start, end })
        } else {
            Err(EventError::InvalidWindow {
                start: format_instant(start),
                end: format_instant(end),
            })
        }
    }

    /// The calendar month starting at `start`.
    pub fn month_from(start: DateTime<Utc>) -> Self {
        let end = start.checked_add_months(Months::new(1)).expect("date in range");
        TimeWindow { start, end }
    }

    /// The calendar month ending (exclusive) at `end`.
    pub fn month_until(end: DateTime<Utc>) -> Self {
        let start = end.checked_sub_months(Months::new(1)).expect("date in range");
        TimeWindow { start, end }
    }

    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        self.start <= ts && ts < self.end
    }

    pub fn within(&self, outer: &TimeWindow) -> bool {
        outer.start <= self.start && self.end <= outer.end
    }

    pub fn intersect(&self, other: &TimeWindow) -> Option<TimeWindow> {
        TimeWindow::new(self.start.max(other.start), self.end.min(other.end)).ok()
    }

    /// Parses `START/END` where each side is accepted by [`parse_instant`].
    pub fn parse(text: &str) -> Result<Self, EventError> {
        let (a, b) = text
            .split_once('/')
            .ok_or_else(|| EventError::Malformed(format!("window `{text}` is not START/END")))?;
        TimeWindow::new(parse_instant(a)?, parse_instant(b)?)
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", format_instant(self.start), format_instant(self.end))
    }
}

/// Events whose timestamp lies in `window`, order preserved.
pub fn window_filter<I>(events: I, window: TimeWindow) -> impl Iterator<Item = I::Item>
where
    I: IntoIterator,
    I::Item: Borrow<Event>,
{
    events
        .into_iter()
        .filter(move |e| window.contains(e.borrow().timestamp))
}
