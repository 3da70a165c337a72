//! `biasflow` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use biasflow::error::Error;
use biasflow::events::{parse_instant, KindSet, TimeWindow};
use biasflow::pipeline::{analyze_sources, build_bundle, dropout_table, load_catalog, load_graph};
use biasflow::report::{self, parse_counts, Format};
use biasflow::synth::{default_catalog, CohortStream, SynthSpec};
use biasflow::{local_modes, movement_stats, EventSource, FlowSummary, PipelineConfig, RunConfig, WindowMode};

/// Exit status when no user could be placed in an initial bias group.
const EXIT_NO_USERS: u8 = 3;

#[derive(Parser)]
#[command(
    name = "biasflow",
    version,
    about = "Ideological bias dynamics of social media users"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write every report table.
    Analyze(AnalyzeArgs),
    /// Per-category URL counts, shares and the weighted mean rank.
    Table1(Table1Args),
    /// Flow matrix with its marginals, dropout fractions and local modes.
    Flow(AnalyzeArgs),
    /// Movement statistics per initial group.
    Movement(MovementArgs),
    /// Generate a synthetic cohort with its ground-truth flow matrix.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Outlet catalog, one `domain,category` row per line.
    #[arg(long)]
    catalog: PathBuf,
    /// Event files in JSON Lines format.
    #[arg(long, num_args = 1.., required = true)]
    events: Vec<PathBuf>,
    #[arg(long, default_value = "2020-09-01")]
    range_start: String,
    #[arg(long, default_value = "2020-12-01")]
    range_end: String,
    /// Initial window as `START/END`; defaults to the first month of the range.
    #[arg(long)]
    window_initial: Option<String>,
    /// Final window as `START/END`; defaults to the last month of the range.
    #[arg(long)]
    window_final: Option<String>,
    /// `global` or `per-user`.
    #[arg(long, default_value = "global")]
    window_mode: WindowMode,
    #[arg(long, default_value_t = 60)]
    dropout_gap_days: i64,
    /// Comma-separated event kinds whose URLs count towards a bias.
    #[arg(long, default_value = "post,echo,comment")]
    kinds: KindSet,
    /// Count users without a final bias as dropouts.
    #[arg(long)]
    unclassified_as_dropout: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// `csv` (delimited table) or `json` (structured record).
    #[arg(long, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Adjacency override, one `a-b` rank pair per line.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct Table1Args {
    /// Pre-aggregated `category,count` rows instead of an event stream.
    #[arg(long, conflicts_with_all = ["catalog", "events"])]
    counts: Option<PathBuf>,
    #[arg(long, requires = "events")]
    catalog: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    events: Vec<PathBuf>,
    #[arg(long, default_value = "2020-09-01")]
    range_start: String,
    #[arg(long, default_value = "2020-12-01")]
    range_end: String,
    #[arg(long, default_value = "post,echo,comment")]
    kinds: KindSet,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MovementArgs {
    /// Existing flow matrix file (csv or json) instead of an event stream.
    #[arg(long, conflicts_with_all = ["catalog", "events"])]
    flow: Option<PathBuf>,
    #[arg(long, requires = "events")]
    catalog: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    events: Vec<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value = "2020-09-01")]
    range_start: String,
    #[arg(long, default_value = "2020-12-01")]
    range_end: String,
    #[arg(long, default_value = "global")]
    window_mode: WindowMode,
    #[arg(long, default_value_t = 60)]
    dropout_gap_days: i64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Cohort spec as JSON; `--seed` overrides its seed when given explicitly.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Users per initial group when no spec file is given.
    #[arg(long, default_value_t = 100)]
    users_per_group: u64,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<Error>() {
                Some(Error::NoUsers) => ExitCode::from(EXIT_NO_USERS),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Analyze(args) => analyze(args, true),
        Command::Flow(args) => analyze(args, false),
        Command::Table1(args) => table1(args),
        Command::Movement(args) => movement(args),
        Command::Synth(args) => synth(args),
    }
}

fn range(start: &str, end: &str) -> anyhow::Result<TimeWindow> {
    let start = parse_instant(start).with_context(|| format!("--range-start {start}"))?;
    let end = parse_instant(end).with_context(|| format!("--range-end {end}"))?;
    Ok(TimeWindow::new(start, end)?)
}

fn run_config(input: &InputArgs, graph: Option<PathBuf>, output: &OutputArgs) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::new(&input.catalog, input.events.clone());
    config.range = range(&input.range_start, &input.range_end)?;
    config.initial_window = input.window_initial.as_deref().map(TimeWindow::parse).transpose()?;
    config.final_window = input.window_final.as_deref().map(TimeWindow::parse).transpose()?;
    config.dropout_gap_days = input.dropout_gap_days;
    config.window_mode = input.window_mode;
    config.kinds = input.kinds;
    config.unclassified_as_dropout = input.unclassified_as_dropout;
    config.workers = resolve_workers(input.workers);
    config.graph_path = graph;
    config.out_dir = Some(output.out.clone());
    config.format = output.format;
    Ok(config)
}

fn write_table(
    out: &OutputArgs,
    stem: &str,
    csv: impl FnOnce() -> String,
    json: impl FnOnce() -> String,
) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(&out.out).with_context(|| format!("creating {}", out.out.display()))?;
    let path = out.out.join(format!("{stem}.{}", out.format.extension()));
    let body = match out.format {
        Format::Csv => csv(),
        Format::Json => json(),
    };
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn resolve_workers(requested: usize) -> usize {
    match requested {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
}

fn check_paths(paths: &[PathBuf]) -> anyhow::Result<()> {
    for p in paths {
        if !p.is_file() {
            bail!("{}: no such file", p.display());
        }
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs, full: bool) -> anyhow::Result<()> {
    let config = run_config(&args.input, args.graph, &args.output)?;
    let bundle = biasflow::run_analyze(&config)?;
    let out = &args.output;
    let mut written = vec![
        write_table(
            out,
            "flow_matrix",
            || report::flow_csv(&bundle.flow),
            || report::to_json(&bundle.flow),
        )?,
        write_table(
            out,
            "summary",
            || report::summary_csv(&bundle.summary),
            || report::to_json(&bundle.summary),
        )?,
    ];
    if full {
        written.push(write_table(
            out,
            "url_summary",
            || report::url_summary_csv(&bundle.url_summary),
            || report::to_json(&bundle.url_summary),
        )?);
        written.push(write_table(
            out,
            "movement_stats",
            || report::movement_csv(&bundle.movement),
            || report::to_json(&bundle.movement),
        )?);
    }
    let meta = &bundle.summary.metadata;
    eprintln!(
        "{} lines ({} skipped), {} users in study of {} seen",
        meta.lines_total, meta.lines_skipped, meta.users_in_study, meta.users_seen
    );
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn table1(args: Table1Args) -> anyhow::Result<()> {
    let counts = match (&args.counts, &args.catalog) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_counts(&text)?
        }
        (None, Some(catalog_path)) => {
            check_paths(&args.events)?;
            let catalog = load_catalog(catalog_path)?;
            let mut config = RunConfig::new(catalog_path, args.events.clone());
            config.range = range(&args.range_start, &args.range_end)?;
            config.kinds = args.kinds;
            let mut pipeline = PipelineConfig::new(config.rules()?);
            pipeline.workers = resolve_workers(args.workers);
            let sources: Vec<&dyn EventSource> = args.events.iter().map(|p| p as &dyn EventSource).collect();
            analyze_sources(&sources, &catalog, &pipeline)?.url_counts
        }
        (None, None) => bail!("table1 needs either --counts or --catalog with --events"),
    };
    let summary = report::summarize_counts(&counts)?;
    let path = write_table(
        &args.output,
        "url_summary",
        || report::url_summary_csv(&summary),
        || report::to_json(&summary),
    )?;
    println!("{}", path.display());
    println!("weighted mean rank {:.2}", summary.weighted_mean_rank);
    Ok(())
}

fn movement(args: MovementArgs) -> anyhow::Result<()> {
    let graph = load_graph(args.graph.as_deref())?;
    let flow: FlowSummary = match (&args.flow, &args.catalog) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            report::parse_flow(&text)?
        }
        (None, Some(catalog_path)) => {
            check_paths(&args.events)?;
            let mut config = RunConfig::new(catalog_path, args.events.clone());
            config.range = range(&args.range_start, &args.range_end)?;
            config.window_mode = args.window_mode;
            config.dropout_gap_days = args.dropout_gap_days;
            let rules = config.rules()?;
            let catalog = load_catalog(catalog_path)?;
            let mut pipeline = PipelineConfig::new(rules.clone());
            pipeline.workers = resolve_workers(args.workers);
            let sources: Vec<&dyn EventSource> = args.events.iter().map(|p| p as &dyn EventSource).collect();
            let output = analyze_sources(&sources, &catalog, &pipeline)?;
            build_bundle(&output, &rules, &graph)?.flow
        }
        (None, None) => bail!("movement needs either --flow or --catalog with --events"),
    };
    let stats = movement_stats(&flow, &graph)?;
    let path = write_table(
        &args.output,
        "movement_stats",
        || report::movement_csv(&stats),
        || report::to_json(&stats),
    )?;
    println!("{}", path.display());
    Ok(())
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut spec: SynthSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if std::env::args().any(|a| a == "--seed" || a.starts_with("--seed=")) {
                spec.seed = args.seed;
            }
            spec
        }
        None => SynthSpec::new(args.seed, [args.users_per_group; 8]),
    };
    let catalog = default_catalog();
    let out = &args.output;
    fs::create_dir_all(&out.out).with_context(|| format!("creating {}", out.out.display()))?;

    let events_path = out.out.join("events.jsonl");
    let mut stream = CohortStream::new(spec.clone(), &catalog)?;
    write_events(&events_path, &mut stream)?;
    let truth = stream.into_truth();

    let catalog_path = out.out.join("catalog.csv");
    fs::write(&catalog_path, catalog.to_catalog_text())
        .with_context(|| format!("writing {}", catalog_path.display()))?;
    let spec_path = out.out.join("spec.json");
    fs::write(&spec_path, report::to_json(&spec)).with_context(|| format!("writing {}", spec_path.display()))?;
    let truth_path = write_table(
        out,
        "ground_truth",
        || report::flow_csv(&truth),
        || report::to_json(&truth),
    )?;

    let dropouts = dropout_table(&truth);
    let overall = dropouts.first().and_then(|d| d.value).unwrap_or(0.0);
    eprintln!(
        "{} newcomers, {} active, overall dropout {:.4}, final modes {:?}",
        truth.total_newcomers(),
        truth.total_active(),
        overall,
        local_modes(&truth.finals)
            .map(|m| m.iter().map(|g| g.rank()).collect::<Vec<_>>())
            .unwrap_or_default()
    );
    for path in [events_path, catalog_path, spec_path, truth_path] {
        println!("{}", path.display());
    }
    Ok(())
}

fn write_events(path: &Path, stream: &mut CohortStream) -> anyhow::Result<()> {
    use std::io::{BufWriter, Write};
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for event in stream {
        w.write_all(event.to_json_line().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
