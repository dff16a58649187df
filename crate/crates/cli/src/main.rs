use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use kgcil::generator_sim::GeneratorMode;
use kgcil::graph_inference::{CandidateSet, ClassText, InferenceEngine};
use kgcil::harness::bench::{bench, bench_sweep, render_tsv};
use kgcil::harness::config::RunConfig;
use kgcil::harness::output::write_outputs;
use kgcil::harness::schedule::TaskSchedule;
use kgcil::harness::{run_experiment_full, Comparison, RunOptions};
use kgcil::relation_text::RelationLexicon;
use kgcil::synth;
use kgcil::task_graph::{AllocationReport, TaskSubgraph};
use kgcil::triple_store::KnowledgeGraph;
use kgcil::HashingEncoder;

#[derive(Parser)]
#[command(name = "kgcil", version, about = "Knowledge-graph subgraphs and class-incremental evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a head/relation/tail TSV; print stats as JSON.
    Ingest {
        graph: PathBuf,
        /// Also write the normalized, deduplicated graph here.
        #[arg(long)]
        normalized: Option<PathBuf>,
    },
    /// Allocate relation paths for task blocks and export the subgraph.
    Build {
        #[arg(long)]
        graph: PathBuf,
        /// One class per line; blank lines separate tasks.
        #[arg(long)]
        classes: PathBuf,
        #[arg(short, long, default_value_t = 3)]
        r: usize,
        #[arg(long)]
        out: PathBuf,
        /// Fail when a class is not in the graph.
        #[arg(long)]
        strict: bool,
    },
    /// Run an experiment from a JSON config.
    Run {
        config: PathBuf,
        /// Sample-level worker threads; defaults to every core.
        #[arg(long)]
        jobs: Option<usize>,
        /// Record zero timings so outputs are byte-identical across runs.
        #[arg(long)]
        no_timing: bool,
        /// Skip the paired baseline run and its comparison block.
        #[arg(long)]
        no_baseline: bool,
        /// Samples for bench.tsv; 0 skips it.
        #[arg(long, default_value_t = 1000)]
        bench_samples: usize,
    },
    /// Explain one inference over an exported subgraph.
    Query {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        subgraph: PathBuf,
        #[arg(long, value_enum, default_value_t = ClassTextArg::Name)]
        class_text: ClassTextArg,
        text: String,
    },
    /// Storage and latency table for a subgraph, or for a sweep over r.
    Bench {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, conflicts_with = "classes")]
        subgraph: Option<PathBuf>,
        /// Single-task class list for a sweep over `--rs`.
        #[arg(long, requires = "rs")]
        classes: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        rs: Vec<usize>,
        #[arg(short, long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic graph.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
}

#[derive(Subcommand)]
enum SynthKind {
    /// Genus-structured taxonomy with confusable classes.
    Taxonomy {
        #[arg(long, default_value_t = 200)]
        classes: usize,
        #[arg(long, default_value_t = 4)]
        genus_size: usize,
        #[arg(long, default_value_t = 4)]
        private_facts: usize,
        /// Keep class names in distinct buckets of a hashing encoder.
        #[arg(long)]
        distinct_buckets: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Write the class list here, one per line.
        #[arg(long)]
        classes_out: Option<PathBuf>,
    },
    /// The 574,270 / 50 / 1,380,131 benchmark graph.
    Scale {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Write this many evenly spaced entities as a class list.
        #[arg(long, requires = "classes_out")]
        classes: Option<usize>,
        #[arg(long)]
        classes_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassTextArg {
    Name,
    NameWithTriplets,
}

impl From<ClassTextArg> for ClassText {
    fn from(v: ClassTextArg) -> Self {
        match v {
            ClassTextArg::Name => ClassText::Name,
            ClassTextArg::NameWithTriplets => ClassText::NameWithTriplets,
        }
    }
}

/// An invariant the engine promised and broke; exit code 2.
#[derive(Debug)]
struct Internal(String);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "internal invariant violated: {}", self.0)
    }
}

impl std::error::Error for Internal {}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    let graph = KnowledgeGraph::load_tsv(path).with_context(|| format!("loading {}", path.display()))?;
    log::info!("loaded {}: {} facts", path.display(), graph.num_facts());
    Ok(graph)
}

/// Task blocks separated by blank lines; `#` lines are comments.
fn read_task_blocks(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut tasks = vec![];
    let mut current = vec![];
    for line in text.lines().map(str::trim) {
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !current.is_empty() {
                tasks.push(std::mem::take(&mut current));
            }
        } else {
            current.push(line.to_owned());
        }
    }
    if !current.is_empty() {
        tasks.push(current);
    }
    Ok(tasks)
}

fn read_class_list(path: &Path) -> Result<Vec<String>> {
    Ok(read_task_blocks(path)?.concat())
}

fn cmd_ingest(graph: &Path, normalized: Option<&Path>) -> Result<()> {
    let g = load_graph(graph)?;
    if let Some(out) = normalized {
        let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
        g.write_tsv(io::BufWriter::new(file))?;
    }
    print_json(&serde_json::to_value(g.stats())?)
}

fn cmd_build(graph: &Path, classes: &Path, r: usize, out: &Path, strict: bool) -> Result<()> {
    let g = load_graph(graph)?;
    let tasks = read_task_blocks(classes)?;
    if tasks.is_empty() {
        log::warn!("{} lists no classes; writing an empty subgraph", classes.display());
    }
    if strict {
        let unknown: Vec<&String> = tasks.iter().flatten().filter(|c| g.entity(c).is_none()).collect();
        if !unknown.is_empty() {
            bail!("unknown classes: {}", unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "));
        }
    }
    let mut sub = TaskSubgraph::new();
    let mut reports: Vec<AllocationReport> = Vec::new();
    for task in &tasks {
        reports.push(sub.extend(&g, task, r)?);
    }
    for report in &reports {
        for c in &report.unknown {
            log::warn!("task {}: class `{c}` is not in the graph", report.task_index);
        }
    }
    let stats = sub.export(&g, out)?;
    let reloaded = TaskSubgraph::import(&g, out)?;
    if reloaded != sub {
        return Err(Internal("exported subgraph does not re-import identically".into()).into());
    }
    let shortfall: Vec<&String> = reports.iter().flat_map(|r| &r.shortfall).collect();
    if !shortfall.is_empty() {
        log::warn!("{} classes received fewer than {r} paths", shortfall.len());
    }
    print_json(&json!({
        "r_target": r,
        "tasks": reports,
        "shortfall": shortfall,
        "export": stats,
    }))
}

fn cmd_run(config: &Path, jobs: Option<usize>, no_timing: bool, no_baseline: bool, bench_samples: usize) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let graph = load_graph(&cfg.graph_path)?;
    let schedule = TaskSchedule {
        classes: cfg.classes()?,
        split: cfg.schedule.split,
        samples_per_class: cfg.schedule.samples_per_class,
    };
    let encoder = cfg.encoder.build()?;
    let options =
        RunOptions { class_text: cfg.encoder.class_text, jobs, timing: !no_timing, diagnostics: true, ..RunOptions::default() };
    log::info!("run: generator seed {}, orders {:?}", cfg.generator.seed, cfg.orders);

    let run = run_experiment_full(&graph, &schedule, &cfg.generator, cfg.r_target, encoder.as_ref(), &cfg.orders, &options)?;
    let comparison = if no_baseline || cfg.generator.mode == GeneratorMode::BaselineGmm {
        None
    } else {
        let baseline_cfg = cfg.generator.with_mode(GeneratorMode::BaselineGmm);
        let baseline = run_experiment_full(
            &graph,
            &schedule,
            &baseline_cfg,
            cfg.r_target,
            encoder.as_ref(),
            &cfg.orders,
            &RunOptions { diagnostics: false, ..options },
        )?;
        Some(Comparison::new(&run.report, &baseline.report))
    };
    let bench_rows = if bench_samples > 0 {
        let mut row = bench(&graph, &run.subgraph, bench_samples, cfg.generator.seed);
        if no_timing {
            row.generation_ms = 0.0;
            row.graph_inference_ms = 0.0;
        }
        vec![row]
    } else {
        vec![]
    };
    let written = write_outputs(&cfg.output_dir, &run.report, comparison.as_ref(), &run.diagnostics, &bench_rows)?;
    for p in &written {
        log::info!("wrote {}", p.display());
    }

    let mut out = io::stdout().lock();
    write!(out, "{}", run.report.render_text())?;
    if let Some(c) = &comparison {
        writeln!(
            out,
            "baseline_gmm: Avg {} Last {} | margin Avg {:+.2} Last {:+.2} | augmented >= baseline: {}",
            c.baseline.avg, c.baseline.last, c.margin_avg, c.margin_last, c.augmented_ge_baseline
        )?;
    }
    writeln!(out, "seed: {}", cfg.generator.seed)?;
    writeln!(out, "output: {}", cfg.output_dir.display())?;
    Ok(())
}

fn cmd_query(graph: &Path, subgraph: &Path, class_text: ClassText, text: &str) -> Result<()> {
    let g = load_graph(graph)?;
    let sub = TaskSubgraph::import(&g, subgraph).with_context(|| format!("loading subgraph {}", subgraph.display()))?;
    let encoder = HashingEncoder::default();
    let candidates = CandidateSet::from_subgraph(&sub, &g, &encoder, class_text)?;
    let lexicon = RelationLexicon::new(&g);
    let engine = InferenceEngine { graph: &g, subgraph: &sub, lexicon: &lexicon, candidates: &candidates, encoder: &encoder };
    let inference = engine.infer(text);
    print_json(&serde_json::to_value(engine.diagnostic(text, &inference))?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    graph: &Path,
    subgraph: Option<&Path>,
    classes: Option<&Path>,
    rs: &[usize],
    n: usize,
    seed: u64,
    as_json: bool,
) -> Result<()> {
    let g = load_graph(graph)?;
    let rows = match (subgraph, classes) {
        (Some(path), _) => vec![bench(&g, &TaskSubgraph::import(&g, path)?, n, seed)],
        (None, Some(path)) => bench_sweep(&g, &read_class_list(path)?, rs, n, seed)?,
        (None, None) => bail!("give --subgraph or --classes with --rs"),
    };
    if as_json {
        print_json(&serde_json::to_value(&rows)?)
    } else {
        print!("{}", render_tsv(&rows));
        Ok(())
    }
}

fn write_graph(graph: &KnowledgeGraph, out: &Path) -> Result<()> {
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    graph.write_tsv(io::BufWriter::new(file))?;
    Ok(())
}

fn write_lines(lines: &[String], out: &Path) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))
}

fn cmd_synth(kind: SynthKind) -> Result<()> {
    match kind {
        SynthKind::Taxonomy { classes, genus_size, private_facts, distinct_buckets, out, classes_out } => {
            if genus_size == 0 || classes == 0 {
                bail!("--classes and --genus-size must be positive");
            }
            let cfg = synth::TaxonomyConfig { classes, genus_size, private_facts, distinct_buckets };
            let t = synth::taxonomy(&cfg);
            write_graph(&t.graph, &out)?;
            if let Some(path) = classes_out {
                write_lines(&t.classes, &path)?;
            }
            print_json(&serde_json::to_value(t.graph.stats())?)
        }
        SynthKind::Scale { seed, out, classes, classes_out } => {
            let g = synth::scale_graph(seed);
            write_graph(&g, &out)?;
            if let (Some(n), Some(path)) = (classes, classes_out) {
                write_lines(&synth::scale_classes(n), &path)?;
            }
            let mut stats = serde_json::to_value(g.stats())?;
            stats["seed"] = json!(seed);
            print_json(&stats)
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { graph, normalized } => cmd_ingest(&graph, normalized.as_deref()),
        Command::Build { graph, classes, r, out, strict } => cmd_build(&graph, &classes, r, &out, strict),
        Command::Run { config, jobs, no_timing, no_baseline, bench_samples } => {
            cmd_run(&config, jobs, no_timing, no_baseline, bench_samples)
        }
        Command::Query { graph, subgraph, class_text, text } => cmd_query(&graph, &subgraph, class_text.into(), &text),
        Command::Bench { graph, subgraph, classes, rs, n, seed, json } => {
            cmd_bench(&graph, subgraph.as_deref(), classes.as_deref(), &rs, n, seed, json)
        }
        Command::Synth { kind } => cmd_synth(kind),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KGCIL_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Internal>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
        Err(_) => ExitCode::from(2),
    }
}
