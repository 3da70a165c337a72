//! Streaming, sharded end-to-end analysis.
//!
//! Lines are read in fixed-size batches, parsed and classified in parallel,
//! then folded into per-user state held in `workers` shards keyed by a hash
//! of the user id. Memory therefore grows with the number of distinct users,
//! not with the number of events. Per-user state and all counters merge by
//! addition or max, so results do not depend on the shard count.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fs::File;
use std::hash::{Hash, Hasher};
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;

use crate::bias::{RankTally, StudyRules, UserBiasProfile, WindowMode};
use crate::catalog::{classify_url, parse_catalog, NewsCategory, OutletCatalog};
use crate::error::{Error, Result};
use crate::events::{parse_event_line, parse_instant, EventReader, KindSet, ParseReport, TimeWindow};
use crate::flow::{dropout_fraction, local_modes, FlowSummary, Scope};
use crate::geometry::{BiasGraph, Constellation};
use crate::movement::{movement_stats, MovementStats};
use crate::report::{summarize_counts, Format, RunMetadata, ScopedFraction, Summary, UrlSummary};

/// Something that can be opened, possibly more than once, as a line stream.
pub trait EventSource: Sync {
    fn open(&self) -> io::Result<Box<dyn BufRead + Send + '_>>;
}

impl EventSource for PathBuf {
    fn open(&self) -> io::Result<Box<dyn BufRead + Send + '_>> {
        let file = File::open(self).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", self.display())))?;
        Ok(Box::new(BufReader::with_capacity(1 << 16, file)))
    }
}

impl EventSource for Vec<u8> {
    fn open(&self) -> io::Result<Box<dyn BufRead + Send + '_>> {
        Ok(Box::new(self.as_slice()))
    }
}

impl EventSource for String {
    fn open(&self) -> io::Result<Box<dyn BufRead + Send + '_>> {
        Ok(Box::new(self.as_bytes()))
    }
}

/// Source backed by a closure producing a fresh reader on every open.
pub struct ReaderFn<F>(pub F);

impl<F, R> EventSource for ReaderFn<F>
where
    F: Fn() -> R + Sync,
    R: BufRead + Send + 'static,
{
    fn open(&self) -> io::Result<Box<dyn BufRead + Send + '_>> {
        Ok(Box::new((self.0)()))
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub rules: StudyRules,
    pub workers: usize,
    pub batch_lines: usize,
    /// Also return every in-study profile, sorted by user id.
    pub keep_profiles: bool,
}

impl PipelineConfig {
    pub fn new(rules: StudyRules) -> Self {
        PipelineConfig {
            rules,
            workers: 1,
            batch_lines: 8192,
            keep_profiles: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineOutput {
    pub flow: FlowSummary,
    /// Classified URLs per category over all in-range events of included kinds.
    pub url_counts: [u64; 8],
    pub urls_total: u64,
    pub urls_unclassified: u64,
    pub parse: ParseReport,
    pub events_read: u64,
    pub events_out_of_range: u64,
    pub users_seen: u64,
    pub users_in_study: u64,
    pub profiles: Vec<UserBiasProfile>,
}

#[derive(Clone, Copy, Debug)]
struct UserState {
    first: DateTime<Utc>,
    last: DateTime<Utc>,
    initial: RankTally,
    final_tally: RankTally,
}

struct Observation {
    shard: usize,
    user_id: String,
    timestamp: DateTime<Utc>,
    categories: Vec<NewsCategory>,
    unclassified: u64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pass {
    /// First pass of per-user mode: only first/last activity.
    Spans,
    Tally,
}

fn shard_of(user_id: &str, shards: usize) -> usize {
    let mut h = DefaultHasher::new();
    user_id.hash(&mut h);
    (h.finish() % shards as u64) as usize
}

fn observe(
    line: &str,
    shards: usize,
    range: &TimeWindow,
    kinds: KindSet,
    catalog: &OutletCatalog,
) -> Option<Option<Observation>> {
    let event = parse_event_line(line).ok()?;
    if !range.contains(event.timestamp) {
        return Some(None);
    }
    let mut categories = Vec::new();
    let mut unclassified = 0;
    if kinds.contains(event.kind) {
        for url in &event.urls {
            match classify_url(url, catalog) {
                Some(c) => categories.push(c),
                None => unclassified += 1,
            }
        }
    }
    Some(Some(Observation {
        shard: shard_of(&event.user_id, shards),
        user_id: event.user_id,
        timestamp: event.timestamp,
        categories,
        unclassified,
    }))
}

struct Analyzer<'a> {
    catalog: &'a OutletCatalog,
    config: &'a PipelineConfig,
    pool: rayon::ThreadPool,
    shards: Vec<HashMap<String, UserState>>,
    out: PipelineOutput,
}

impl<'a> Analyzer<'a> {
    fn new(catalog: &'a OutletCatalog, config: &'a PipelineConfig) -> Result<Self> {
        let workers = config.workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Analyzer {
            catalog,
            config,
            pool,
            shards: (0..workers).map(|_| HashMap::new()).collect(),
            out: PipelineOutput::default(),
        })
    }

    fn run_pass(&mut self, sources: &[&dyn EventSource], pass: Pass) -> Result<()> {
        let batch_lines = self.config.batch_lines.max(1);
        let mut batch: Vec<String> = Vec::with_capacity(batch_lines);
        for source in sources {
            let mut reader = EventReader::new(source.open()?);
            loop {
                batch.clear();
                while batch.len() < batch_lines {
                    match reader.next_line()? {
                        Some(line) => batch.push(line.to_string()),
                        None => break,
                    }
                }
                if batch.is_empty() {
                    break;
                }
                let skipped = self.process_batch(&batch, pass);
                for _ in 0..skipped {
                    reader.mark_skipped();
                }
            }
            if pass == Pass::Tally {
                self.out.parse.merge(reader.report());
            }
        }
        Ok(())
    }

    /// Returns the number of malformed lines.
    fn process_batch(&mut self, batch: &[String], pass: Pass) -> u64 {
        let shards = self.shards.len();
        let rules = &self.config.rules;
        let catalog = self.catalog;
        let parsed: Vec<Option<Option<Observation>>> = self.pool.install(|| {
            batch
                .par_iter()
                .map(|line| observe(line, shards, &rules.range, rules.kinds, catalog))
                .collect()
        });

        let mut skipped = 0;
        let mut observations = Vec::with_capacity(parsed.len());
        for p in parsed {
            match p {
                None => skipped += 1,
                Some(None) => {
                    if pass == Pass::Tally {
                        self.out.events_read += 1;
                        self.out.events_out_of_range += 1;
                    }
                }
                Some(Some(obs)) => {
                    if pass == Pass::Tally {
                        self.out.events_read += 1;
                        self.out.urls_unclassified += obs.unclassified;
                        self.out.urls_total += obs.unclassified + obs.categories.len() as u64;
                        for c in &obs.categories {
                            self.out.url_counts[c.index()] += 1;
                        }
                    }
                    observations.push(obs);
                }
            }
        }

        let observations = &observations;
        let shards_mut = &mut self.shards;
        self.pool.install(|| {
            shards_mut.par_iter_mut().enumerate().for_each(|(k, shard)| {
                for obs in observations.iter().filter(|o| o.shard == k) {
                    apply(shard, obs, rules, pass);
                }
            })
        });
        skipped
    }

    fn finish(mut self) -> PipelineOutput {
        let rules = &self.config.rules;
        let keep = self.config.keep_profiles;
        let partials: Vec<(FlowSummary, u64, u64, Vec<UserBiasProfile>)> = self.pool.install(|| {
            self.shards
                .par_iter()
                .map(|shard| {
                    let mut flow = FlowSummary::default();
                    let mut in_study = 0;
                    let mut profiles = Vec::new();
                    for (user, state) in shard {
                        if let Some(p) = rules.resolve(user, state.initial, state.final_tally, state.last) {
                            flow.record_profile(&p);
                            in_study += 1;
                            if keep {
                                profiles.push(p);
                            }
                        }
                    }
                    (flow, shard.len() as u64, in_study, profiles)
                })
                .collect()
        });
        for (flow, seen, in_study, profiles) in partials {
            self.out.flow += &flow;
            self.out.users_seen += seen;
            self.out.users_in_study += in_study;
            self.out.profiles.extend(profiles);
        }
        self.out.profiles.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        self.out
    }
}

fn apply(shard: &mut HashMap<String, UserState>, obs: &Observation, rules: &StudyRules, pass: Pass) {
    let state = match shard.get_mut(obs.user_id.as_str()) {
        Some(s) => s,
        None => shard.entry(obs.user_id.clone()).or_insert(UserState {
            first: obs.timestamp,
            last: obs.timestamp,
            initial: RankTally::default(),
            final_tally: RankTally::default(),
        }),
    };
    let per_user = rules.window_mode == WindowMode::PerUser;
    if pass == Pass::Spans || !per_user {
        state.first = state.first.min(obs.timestamp);
        state.last = state.last.max(obs.timestamp);
    }
    if pass == Pass::Spans || obs.categories.is_empty() {
        return;
    }
    let (initial, final_window) = rules.windows_for(state.first, state.last);
    let in_initial = initial.contains(obs.timestamp);
    let in_final = final_window.contains(obs.timestamp);
    for &c in &obs.categories {
        if in_initial {
            state.initial.add(c);
        }
        if in_final {
            state.final_tally.add(c);
        }
    }
}

/// Runs the streaming analysis over one or more sources. Per-user window
/// mode reads every source twice.
pub fn analyze_sources(
    sources: &[&dyn EventSource],
    catalog: &OutletCatalog,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let mut analyzer = Analyzer::new(catalog, config)?;
    if config.rules.window_mode == WindowMode::PerUser {
        analyzer.run_pass(sources, Pass::Spans)?;
    }
    analyzer.run_pass(sources, Pass::Tally)?;
    Ok(analyzer.finish())
}

/// Everything one configuration of the CLI needs.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub catalog_path: PathBuf,
    pub events_paths: Vec<PathBuf>,
    pub range: TimeWindow,
    /// Defaults to the first calendar month of the range.
    pub initial_window: Option<TimeWindow>,
    /// Defaults to the last calendar month of the range.
    pub final_window: Option<TimeWindow>,
    pub dropout_gap_days: i64,
    pub window_mode: WindowMode,
    pub kinds: KindSet,
    pub graph_path: Option<PathBuf>,
    pub unclassified_as_dropout: bool,
    pub workers: usize,
    pub out_dir: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    /// Sep 1 - Dec 1 2020, global windows, 60-day gap, all kinds.
    pub fn new(catalog_path: impl Into<PathBuf>, events_paths: Vec<PathBuf>) -> Self {
        let start = parse_instant("2020-09-01").expect("valid date");
        let end = parse_instant("2020-12-01").expect("valid date");
        RunConfig {
            catalog_path: catalog_path.into(),
            events_paths,
            range: TimeWindow { start, end },
            initial_window: None,
            final_window: None,
            dropout_gap_days: 60,
            window_mode: WindowMode::Global,
            kinds: KindSet::all(),
            graph_path: None,
            unclassified_as_dropout: false,
            workers: 1,
            out_dir: None,
            format: Format::Csv,
        }
    }

    pub fn rules(&self) -> Result<StudyRules> {
        let initial = self
            .initial_window
            .unwrap_or_else(|| TimeWindow::month_from(self.range.start));
        let final_window = self
            .final_window
            .unwrap_or_else(|| TimeWindow::month_until(self.range.end));
        if !initial.within(&self.range) || !final_window.within(&self.range) {
            return Err(Error::Config(format!(
                "windows {initial} and {final_window} must lie within the range {}",
                self.range
            )));
        }
        if self.dropout_gap_days <= 0 {
            return Err(Error::Config("dropout gap must be positive".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("no event kinds selected".into()));
        }
        if self.events_paths.is_empty() {
            return Err(Error::Config("no event files given".into()));
        }
        Ok(StudyRules {
            initial,
            final_window,
            dropout_gap: Duration::days(self.dropout_gap_days),
            range: self.range,
            window_mode: self.window_mode,
            kinds: self.kinds,
            unclassified_as_dropout: self.unclassified_as_dropout,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportBundle {
    pub url_summary: UrlSummary,
    pub flow: FlowSummary,
    pub movement: Vec<MovementStats>,
    pub summary: Summary,
}

pub fn load_catalog(path: &Path) -> Result<OutletCatalog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_catalog(&text)?)
}

pub fn load_graph(path: Option<&Path>) -> Result<BiasGraph> {
    match path {
        None => Ok(BiasGraph::chain()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let graph = BiasGraph::parse(&text)?;
            if !graph.is_connected() {
                return Err(Error::Config(format!("graph in {} is not connected", p.display())));
            }
            Ok(graph)
        }
    }
}

/// Dropout fractions overall, per constellation and per group.
pub fn dropout_table(flow: &FlowSummary) -> Vec<ScopedFraction> {
    let scopes = [Scope::All]
        .into_iter()
        .chain([Constellation::Left, Constellation::Right, Constellation::None].map(Scope::Constellation))
        .chain(NewsCategory::ALL.map(Scope::Group));
    scopes
        .map(|scope| ScopedFraction {
            scope: scope.label(),
            value: dropout_fraction(flow, scope).ok(),
        })
        .collect()
}

/// Builds all report tables from a pipeline output.
pub fn build_bundle(output: &PipelineOutput, rules: &StudyRules, graph: &BiasGraph) -> Result<ReportBundle> {
    if output.users_in_study == 0 {
        return Err(Error::NoUsers);
    }
    let url_summary = summarize_counts(&output.url_counts)?;
    let flow = output.flow.clone();
    flow.validate()?;
    let movement = movement_stats(&flow, graph)?;
    let metadata = RunMetadata {
        lines_total: output.parse.lines_total,
        lines_skipped: output.parse.lines_skipped,
        events_read: output.events_read,
        events_out_of_range: output.events_out_of_range,
        urls_total: output.urls_total,
        urls_unclassified: output.urls_unclassified,
        users_seen: output.users_seen,
        users_in_study: output.users_in_study,
        users_out_of_study: output.users_seen - output.users_in_study,
        window_mode: rules.window_mode.to_string(),
        range: rules.range.to_string(),
        initial_window: rules.initial.to_string(),
        final_window: rules.final_window.to_string(),
        dropout_gap_days: rules.dropout_gap.num_days(),
    };
    let summary = Summary {
        weighted_mean_rank: url_summary.weighted_mean_rank,
        dropout_fractions: dropout_table(&flow),
        local_modes: local_modes(&flow.finals)
            .ok()
            .map(|m| m.iter().map(|g| g.rank()).collect()),
        metadata,
    };
    Ok(ReportBundle {
        url_summary,
        flow,
        movement,
        summary,
    })
}

/// Loads inputs, runs the pipeline and builds every report table.
pub fn run_analyze(config: &RunConfig) -> Result<ReportBundle> {
    let rules = config.rules()?;
    let catalog = load_catalog(&config.catalog_path)?;
    let graph = load_graph(config.graph_path.as_deref())?;
    for path in &config.events_paths {
        if !path.is_file() {
            return Err(Error::io(
                path,
                io::Error::new(io::ErrorKind::NotFound, "events file not found"),
            ));
        }
    }
    let sources: Vec<&dyn EventSource> = config.events_paths.iter().map(|p| p as &dyn EventSource).collect();
    let mut pipeline = PipelineConfig::new(rules.clone());
    pipeline.workers = config.workers;
    let output = analyze_sources(&sources, &catalog, &pipeline)?;
    build_bundle(&output, &rules, &graph)
}
