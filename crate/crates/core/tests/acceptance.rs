//! Acceptance suite. Runs every criterion in sequence, prints one
//! `PASS`/`FAIL` line per criterion and exits non-zero if any failed.
//!
//! Runs without the libtest harness so the heap-counting allocator used by
//! the streaming check sees a single criterion at a time.

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::{self, BufReader, Read};
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration as StdDuration, Instant};

use biasflow::bias::{StudyRules, UserBiasProfile, UserStatus};
use biasflow::catalog::{parse_catalog, NewsCategory, OutletCatalog};
use biasflow::events::{parse_instant, TimeWindow};
use biasflow::flow::{build_flow, local_modes, FlowSummary};
use biasflow::geometry::{signed_distance, BiasGraph};
use biasflow::movement::box_stats;
use biasflow::pipeline::{analyze_sources, build_bundle, EventSource, PipelineConfig, PipelineOutput, ReaderFn};
use biasflow::report::summarize_counts;
use biasflow::synth::{default_catalog, generate_cohort, CohortStream, ForceParams, SynthSpec};
use chrono::Duration;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ── heap accounting ─────────────────────────────────────────────────────

struct CountingAlloc;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

fn grew(by: usize) {
    let now = LIVE.fetch_add(by, Ordering::Relaxed) + by;
    PEAK.fetch_max(now, Ordering::Relaxed);
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            grew(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc_zeroed(layout) };
        if !p.is_null() {
            grew(layout.size());
        }
        p
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            if new_size >= layout.size() {
                grew(new_size - layout.size());
            } else {
                LIVE.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

#[global_allocator]
static GLOBAL: CountingAlloc = CountingAlloc;

/// Runs `f` and returns its result with the heap high-water mark above the
/// live bytes at entry.
fn peak_heap<T>(f: impl FnOnce() -> T) -> (T, usize) {
    let base = LIVE.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    let out = f();
    (out, PEAK.load(Ordering::Relaxed).saturating_sub(base))
}

// ── harness ─────────────────────────────────────────────────────────────

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(started: Instant, limit: StdDuration) -> Result<StdDuration, String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn date(s: &str) -> chrono::DateTime<chrono::Utc> {
    parse_instant(s).unwrap()
}

fn rules_for(spec: &SynthSpec) -> StudyRules {
    let mut rules = StudyRules::new(spec.range, spec.initial, spec.final_window);
    rules.dropout_gap = Duration::days(spec.dropout_gap_days);
    rules
}

fn run_pipeline(
    sources: &[&dyn EventSource],
    catalog: &OutletCatalog,
    rules: &StudyRules,
    workers: usize,
) -> PipelineOutput {
    let mut config = PipelineConfig::new(rules.clone());
    config.workers = workers;
    analyze_sources(sources, catalog, &config).expect("pipeline runs")
}

fn events_text(spec: &SynthSpec, catalog: &OutletCatalog) -> (Vec<u8>, FlowSummary) {
    let cohort = generate_cohort(spec, catalog).expect("valid spec");
    (cohort.to_jsonl().into_bytes(), cohort.truth)
}

// ── reference URL counts per platform ───────────────────────────────────

const TWITTER_COUNTS: [u64; 8] = [
    39_857, 10_513_306, 33_093_257, 7_568_472, 4_648_000, 8_691_901, 4_064_820, 4_348_747,
];
const TWITTER_PCT: [f64; 8] = [0.05, 14.41, 45.35, 10.37, 6.37, 11.91, 5.57, 5.96];
const TWITTER_MEAN: f64 = 3.96;

const PARLER_COUNTS: [u64; 8] = [167, 1_504, 5_915, 18_149, 53_402, 199_320, 104_159, 280_502];
const PARLER_PCT: [f64; 8] = [0.02, 0.22, 0.89, 2.73, 8.05, 30.06, 15.70, 42.30];
const PARLER_MEAN: f64 = 6.83;

fn platforms() -> [(&'static str, [u64; 8], [f64; 8], f64); 2] {
    [
        ("twitter", TWITTER_COUNTS, TWITTER_PCT, TWITTER_MEAN),
        ("parler", PARLER_COUNTS, PARLER_PCT, PARLER_MEAN),
    ]
}

// ── 1 ──────────────────────────────────────────────────────────────────

fn platform_shares_count_mode() -> Check {
    let started = Instant::now();
    let mut report = String::new();
    let mut misses = Vec::new();
    for (name, counts, printed, mean) in platforms() {
        let s = summarize_counts(&counts).map_err(|e| e.to_string())?;
        let _ = write!(report, "{name} mean {:.4}; ", s.weighted_mean_rank);
        if (s.weighted_mean_rank - mean).abs() > 0.005 {
            misses.push(format!("{name} mean {:.4} vs {mean}", s.weighted_mean_rank));
        }
        for c in NewsCategory::ALL {
            let got = s.percentages[c.index()];
            let want = printed[c.index()];
            if (got - want).abs() > 0.005 {
                misses.push(format!(
                    "{name} {c} {got:.4}% vs {want:.2}% (off {:.4}pp)",
                    (got - want).abs()
                ));
            }
        }
    }
    let took = within_time(started, StdDuration::from_secs(1))?;
    ensure(misses.is_empty(), || {
        format!("{} cells outside 0.005pp: {}", misses.len(), misses.join("; "))
    })?;
    Ok(format!("{report}{took:.2?}"))
}

// ── 2 ──────────────────────────────────────────────────────────────────

/// Writes one user per chunk of up to 40 URLs, three URLs per event at most,
/// cycling through URL spellings that all resolve to the category's outlet.
fn scaled_fixture(counts: &[u64; 8]) -> (String, OutletCatalog) {
    let mut catalog_text = String::new();
    for c in NewsCategory::ALL {
        let _ = writeln!(catalog_text, "{}-outlet.example,{}", c.name().to_lowercase(), c.name());
    }
    let catalog = parse_catalog(&catalog_text).unwrap();

    let mut urls: Vec<String> = Vec::new();
    for c in NewsCategory::ALL {
        let domain = format!("{}-outlet.example", c.name().to_lowercase());
        for i in 0..counts[c.index()] {
            urls.push(match i % 4 {
                0 => format!("https://{domain}/story/{i}"),
                1 => format!("http://www.{domain}/a?id={i}"),
                2 => format!("https://edition.{domain}/{i}#top"),
                _ => format!("{domain}/p/{i}"),
            });
        }
    }
    let kinds = ["post", "echo", "comment"];
    let mut text = String::new();
    for (u, chunk) in urls.chunks(40).enumerate() {
        for (e, batch) in chunk.chunks(3).enumerate() {
            let ts = date("2020-09-02") + Duration::minutes((u * 17 + e * 5) as i64);
            let line = serde_json::json!({
                "user_id": format!("u{u}"),
                "timestamp": ts.to_rfc3339(),
                "kind": kinds[(u + e) % 3],
                "urls": batch,
            });
            text.push_str(&line.to_string());
            text.push('\n');
        }
    }
    (text, catalog)
}

fn platform_shares_event_mode() -> Check {
    let started = Instant::now();
    let range = TimeWindow::new(date("2020-09-01"), date("2020-12-01")).unwrap();
    let rules = StudyRules::new(
        range,
        TimeWindow::month_from(range.start),
        TimeWindow::month_until(range.end),
    );
    let mut report = String::new();
    for (name, counts, _, mean) in platforms() {
        let scaled = counts.map(|c| ((c as f64) / 1000.0).round() as u64);
        let (text, catalog) = scaled_fixture(&scaled);
        let output = run_pipeline(&[&text], &catalog, &rules, workers());
        ensure(output.url_counts == scaled, || {
            format!("{name}: classified {:?}, wrote {scaled:?}", output.url_counts)
        })?;
        let bundle = build_bundle(&output, &rules, &BiasGraph::chain()).map_err(|e| e.to_string())?;
        let got = bundle.summary.weighted_mean_rank;
        ensure((got - mean).abs() <= 0.01, || format!("{name} mean {got:.4} vs {mean}"))?;
        let _ = write!(report, "{name} {} URLs mean {got:.4}; ", output.urls_total);
    }
    let took = within_time(started, StdDuration::from_secs(30))?;
    Ok(format!("{report}{took:.2?}"))
}

// ── 3 ──────────────────────────────────────────────────────────────────

fn random_spec(rng: &mut ChaCha8Rng, seed: u64) -> SynthSpec {
    loop {
        let total = rng.random_range(1..=10_000u64);
        let weights: Vec<f64> = (0..8)
            .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random() })
            .collect();
        let wsum: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let mut pops = [0u64; 8];
        for g in 0..8 {
            pops[g] = (total as f64 * weights[g] / wsum).floor() as u64;
        }
        let mut spec = SynthSpec::new(seed, pops);
        for row in spec.migration.iter_mut() {
            let w: Vec<f64> = (0..8)
                .map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random() })
                .collect();
            let s: f64 = w.iter().sum();
            if s == 0.0 {
                continue; // keep the identity row
            }
            for (cell, x) in row.iter_mut().zip(&w) {
                *cell = x / s;
            }
        }
        for p in spec.dropout_prob.iter_mut() {
            *p = rng.random_range(0.0..0.8);
        }
        spec.urls_per_window = rng.random_range(1..=6);
        spec.noise = rng.random_bool(0.5);
        spec.dropout_gap_days = rng.random_range(30..=80);
        if rng.random_bool(0.25) {
            spec.force_params = Some(ForceParams {
                alpha: rng.random_range(0.0..2.0),
                lambda: rng.random_range(0.5..5.0),
                drop_threshold: rng.random_bool(0.5).then(|| rng.random_range(1..=4)),
            });
        }
        if spec.validate().is_ok() {
            return spec;
        }
    }
}

fn synthetic_round_trip() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let catalog = default_catalog();
    let (mut users, mut events) = (0u64, 0u64);
    for case in 0..100u64 {
        let spec = random_spec(&mut rng, 1000 + case);
        let (text, truth) = events_text(&spec, &catalog);
        let shards = rng.random_range(1..=8);
        let out = run_pipeline(&[&text], &catalog, &rules_for(&spec), shards);
        ensure(out.flow == truth, || {
            format!(
                "case {case} (seed {}): recovered {:?} but truth {:?}",
                spec.seed, out.flow, truth
            )
        })?;
        users += out.users_seen;
        events += out.events_read;
    }
    let took = within_time(started, StdDuration::from_secs(60))?;
    Ok(format!("100 specs, {users} users, {events} events, {took:.2?}"))
}

// ── 4 ──────────────────────────────────────────────────────────────────

fn random_profiles(rng: &mut ChaCha8Rng) -> Vec<UserBiasProfile> {
    let n = rng.random_range(0..=300);
    let ts = date("2020-11-20");
    (0..n)
        .map(|i| {
            let initial = NewsCategory::ALL[rng.random_range(0..8)];
            let (status, final_group) = match rng.random_range(0..3) {
                0 => (UserStatus::Dropout, None),
                1 => (UserStatus::UnclassifiedFinal, None),
                _ => (UserStatus::Active, Some(NewsCategory::ALL[rng.random_range(0..8)])),
            };
            UserBiasProfile {
                user_id: format!("p{i}"),
                initial_bias: initial.rank() as f64,
                initial_group: initial,
                final_bias: final_group.map(|g| g.rank() as f64),
                final_group,
                status,
                last_event_ts: ts,
            }
        })
        .collect()
}

fn flow_conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0usize;
    let mut first = None;
    for case in 0..1000 {
        let profiles = random_profiles(&mut rng);
        let flow = build_flow(&profiles);

        // brute-force tally keyed by (initial rank, outcome label)
        let mut tally: HashMap<(u8, String), u64> = HashMap::new();
        for p in &profiles {
            let key = match p.status {
                UserStatus::Dropout => "D".to_string(),
                UserStatus::UnclassifiedFinal => "U".to_string(),
                UserStatus::Active => format!("F{}", p.final_group.unwrap().rank()),
            };
            *tally.entry((p.initial_group.rank(), key)).or_default() += 1;
        }
        let get = |r: u8, k: &str| tally.get(&(r, k.to_string())).copied().unwrap_or(0);

        let mut ok = flow.validate().is_ok();
        for g in 0..8usize {
            let r = g as u8 + 1;
            let active: u64 = (1..=8).map(|f| get(r, &format!("F{f}"))).sum();
            let newcomers = get(r, "D") + get(r, "U") + active;
            let finals: u64 = (1..=8).map(|i| get(i, &format!("F{r}"))).sum();
            ok &= flow.newcomers[g] == newcomers
                && flow.dropouts[g] == get(r, "D")
                && flow.unclassified[g] == get(r, "U")
                && flow.active[g] == active
                && flow.finals[g] == finals
                && flow.newcomers[g] == flow.dropouts[g] + flow.unclassified[g] + flow.active[g]
                && flow.matrix[g].iter().sum::<u64>() == flow.active[g]
                && flow.matrix.iter().map(|row| row[g]).sum::<u64>() == flow.finals[g];
            for f in 0..8usize {
                ok &= flow.matrix[g][f] == get(r, &format!("F{}", f + 1));
            }
        }
        // merging partial tallies gives the tally of the whole
        let cut = rng.random_range(0..=profiles.len());
        ok &= build_flow(&profiles[..cut]) + build_flow(&profiles[cut..]) == flow;
        if !ok {
            violations += 1;
            first.get_or_insert(case);
        }
    }
    ensure(violations == 0, || {
        format!("{violations} violating cases, first is case {:?}", first)
    })?;
    Ok("1000 cases, 0 violations".into())
}

// ── 5 ──────────────────────────────────────────────────────────────────

fn bfs_hops(adj: &[Vec<usize>; 8], from: usize) -> [Option<u32>; 8] {
    let mut dist = [None; 8];
    dist[from] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

fn random_connected_edges(rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..8).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 1..8 {
        let parent = order[rng.random_range(0..i)];
        edges.push((parent, order[i]));
    }
    for a in 0..8 {
        for b in a + 1..8 {
            let present = edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a));
            if !present && rng.random_bool(0.15) {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn check_graph(edges: &[(usize, usize)], graph: &BiasGraph, label: &str) -> Result<(), String> {
    let mut adj: [Vec<usize>; 8] = Default::default();
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for a in 0..8 {
        let hops = bfs_hops(&adj, a);
        for (b, hop) in hops.iter().enumerate() {
            let (from, to) = (NewsCategory::ALL[a], NewsCategory::ALL[b]);
            let want = (b as i32 - a as i32).signum() * hop.ok_or("oracle graph disconnected")? as i32;
            let got = signed_distance(from, to, graph).map_err(|e| format!("{label}: {e}"))?;
            ensure(got == want, || {
                format!("{label}: d({from},{to}) = {got}, oracle {want}")
            })?;
            let back = signed_distance(to, from, graph).map_err(|e| e.to_string())?;
            ensure(back == -got, || {
                format!("{label}: d({to},{from}) = {back} is not -{got}")
            })?;
        }
    }
    Ok(())
}

fn distance_oracle() -> Check {
    let chain: Vec<(usize, usize)> = (0..7).map(|i| (i, i + 1)).collect();
    check_graph(&chain, &BiasGraph::chain(), "chain")?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..20 {
        let edges = random_connected_edges(&mut rng);
        let graph = BiasGraph::from_edges(edges.iter().map(|&(a, b)| (NewsCategory::ALL[a], NewsCategory::ALL[b])))
            .map_err(|e| e.to_string())?;
        check_graph(&edges, &graph, &format!("graph {k}"))?;
    }
    Ok("chain + 20 random graphs, 64 pairs each, antisymmetric".into())
}

// ── 6 ──────────────────────────────────────────────────────────────────

fn oracle_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() as f64 - 1.0);
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

fn quartile_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let n = rng.random_range(1..=500);
        // Movement-like integers or eighths, so sums are exact and the mean
        // carries no accumulation error.
        let values: Vec<f64> = if case % 2 == 0 {
            (0..n).map(|_| rng.random_range(-7..=7) as f64).collect()
        } else {
            (0..n).map(|_| rng.random_range(-800..=800) as f64 / 8.0).collect()
        };
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let expect = [
            mean,
            oracle_quantile(&sorted, 0.25),
            oracle_quantile(&sorted, 0.5),
            oracle_quantile(&sorted, 0.75),
            sorted[0],
            sorted[n - 1],
        ];
        let s = box_stats(&values).map_err(|e| e.to_string())?;
        ensure(s.n == n, || format!("case {case}: n {} vs {n}", s.n))?;
        let got = [s.mean, s.q1, s.median, s.q3, s.lo_whisker, s.hi_whisker];
        for (g, e) in got.iter().zip(expect) {
            worst = worst.max((g - e).abs());
        }

        let shift = rng.random_range(-80..=80) as f64 / 8.0;
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let t = box_stats(&shifted).map_err(|e| e.to_string())?;
        let moved = [t.mean, t.q1, t.median, t.q3, t.lo_whisker, t.hi_whisker];
        for (m, g) in moved.iter().zip(got) {
            ensure((m - (g + shift)).abs() <= 1e-12, || {
                format!("case {case}: shift by {shift} moved {g} to {m}")
            })?;
        }
    }
    ensure(worst <= 1e-12, || format!("max abs error {worst:e}"))?;
    Ok(format!("1000 lists, max abs error {worst:e}, shift invariant"))
}

// ── 7 ──────────────────────────────────────────────────────────────────

/// Mostly stay, a tenth to each rank neighbour.
fn diffusion() -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 0.8;
        if i > 0 {
            row[i - 1] = 0.1;
        }
        if i < 7 {
            row[i + 1] = 0.1;
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    m
}

fn recovered_flow(spec: &SynthSpec) -> Result<FlowSummary, String> {
    let catalog = default_catalog();
    let (text, truth) = events_text(spec, &catalog);
    let out = run_pipeline(&[&text], &catalog, &rules_for(spec), workers());
    ensure(out.flow == truth, || "recovered flow differs from ground truth".into())?;
    Ok(out.flow)
}

fn mode_shape() -> Check {
    let mut twitter = SynthSpec::new(71, [40, 1400, 4500, 1000, 600, 1200, 550, 600]);
    twitter.migration = diffusion();
    twitter.dropout_prob = [0.3; 8];
    twitter.noise = true;
    let mut parler = SynthSpec::new(72, [10, 30, 90, 250, 600, 1800, 2600, 4200]);
    parler.migration = diffusion();
    parler.dropout_prob = [0.3; 8];
    parler.noise = true;

    let ranks = |f: &FlowSummary| -> Result<Vec<u8>, String> {
        Ok(local_modes(&f.finals)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|g| g.rank())
            .collect())
    };
    let tw = ranks(&recovered_flow(&twitter)?)?;
    ensure(tw.len() == 2, || format!("twitter-shaped modes {tw:?}, expected two"))?;
    let pa = ranks(&recovered_flow(&parler)?)?;
    ensure(pa.len() == 1, || format!("parler-shaped modes {pa:?}, expected one"))?;

    // dropout demonstration against the configured probabilities
    let mut demo = SynthSpec::new(73, [3000; 8]);
    demo.migration = diffusion();
    demo.dropout_prob = [0.5, 0.35, 0.2, 0.4, 0.25, 0.45, 0.6, 0.497];
    let flow = recovered_flow(&demo)?;
    let mut fractions = Vec::new();
    for g in 0..8 {
        let (p, n) = (demo.dropout_prob[g], flow.newcomers[g] as f64);
        let got = flow.dropouts[g] as f64 / n;
        let half = 2.576 * (p * (1.0 - p) / n).sqrt();
        ensure((got - p).abs() <= half, || {
            format!("group {} dropout {got:.4} outside {p} +/- {half:.4}", g + 1)
        })?;
        fractions.push(format!("{got:.3}"));
    }
    Ok(format!(
        "twitter-shaped modes {tw:?}, parler-shaped modes {pa:?}, dropout fractions [{}] in 99% bands",
        fractions.join(", ")
    ))
}

// ── 8 ──────────────────────────────────────────────────────────────────

/// Renders a cohort as JSON Lines on demand, one chunk at a time.
struct CohortReader {
    stream: CohortStream,
    buf: Vec<u8>,
    pos: usize,
}

impl CohortReader {
    fn new(spec: SynthSpec, catalog: &OutletCatalog) -> Self {
        CohortReader {
            stream: CohortStream::new(spec, catalog).expect("valid spec"),
            buf: Vec::new(),
            pos: 0,
        }
    }
}

impl Read for CohortReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.buf.len() {
            self.buf.clear();
            self.pos = 0;
            while self.buf.len() < 1 << 16 {
                match self.stream.next() {
                    Some(e) => {
                        self.buf.extend_from_slice(e.to_json_line().as_bytes());
                        self.buf.push(b'\n');
                    }
                    None => break,
                }
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

fn streaming_run(spec: &SynthSpec) -> (PipelineOutput, usize, StdDuration) {
    let catalog = default_catalog();
    let source = ReaderFn({
        let spec = spec.clone();
        let catalog = catalog.clone();
        move || BufReader::with_capacity(1 << 16, CohortReader::new(spec.clone(), &catalog))
    });
    let started = Instant::now();
    let (out, peak) = peak_heap(|| run_pipeline(&[&source], &catalog, &rules_for(spec), workers()));
    (out, peak, started.elapsed())
}

fn streaming_memory() -> Check {
    const USERS_PER_GROUP: u64 = 22_000;
    let mut small = SynthSpec::new(81, [USERS_PER_GROUP; 8]);
    small.migration = diffusion();
    small.dropout_prob = [0.3; 8];
    small.urls_per_window = 5;
    let mut large = small.clone();
    large.urls_per_window = 68;

    let (out_small, peak_small, t_small) = streaming_run(&small);
    let truth = CohortStream::new(small.clone(), &default_catalog()).map(|mut s| {
        s.by_ref().for_each(drop);
        s.into_truth()
    });
    ensure(truth.as_ref().ok() == Some(&out_small.flow), || {
        "small run differs from ground truth".into()
    })?;

    let (out_large, peak_large, t_large) = streaming_run(&large);
    let mb = |b: usize| b as f64 / (1 << 20) as f64;
    let detail = format!(
        "{} events in {t_small:.1?} peak {:.1} MiB; {} events in {t_large:.1?} peak {:.1} MiB; {} users",
        out_small.events_read,
        mb(peak_small),
        out_large.events_read,
        mb(peak_large),
        out_large.users_seen
    );
    ensure(out_large.events_read >= 10_000_000, || {
        format!("only {} events: {detail}", out_large.events_read)
    })?;
    ensure(out_large.events_read >= 9 * out_small.events_read, || {
        format!("volumes not 10x apart: {detail}")
    })?;
    ensure(out_large.users_seen == out_small.users_seen, || {
        format!("user counts differ: {detail}")
    })?;
    ensure(t_large < StdDuration::from_secs(300), || format!("too slow: {detail}"))?;
    // Ten times the events may not cost more than a quarter extra heap.
    ensure(peak_large as f64 <= 1.25 * peak_small as f64, || {
        format!("heap grew with events: {detail}")
    })?;
    Ok(detail)
}

// ── main ────────────────────────────────────────────────────────────────

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 platform shares, count mode", platform_shares_count_mode),
        ("2 platform shares, event mode", platform_shares_event_mode),
        ("3 synthetic round trip", synthetic_round_trip),
        ("4 flow conservation", flow_conservation),
        ("5 distance oracle", distance_oracle),
        ("6 quartile oracle", quartile_oracle),
        ("7 mode shape and dropout demo", mode_shape),
        ("8 streaming memory", streaming_memory),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let default_hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    panic::set_hook(default_hook);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
