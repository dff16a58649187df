//! End-to-end class-incremental runs over simulated generations.

pub mod bench;
pub mod config;
pub mod metrics;
pub mod output;
pub mod schedule;

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::generator_sim::{derive_stream, GenerateError, GeneratorConfig, GeneratorMode, Simulator};
use crate::graph_inference::{CandidateSet, ClassText, Diagnostic, InferenceEngine, InferenceError};
use crate::relation_text::RelationLexicon;
use crate::task_graph::{AllocationOptions, TaskGraphError, TaskSubgraph};
use crate::text_encoder::TextEncoder;
use crate::triple_store::{EntityId, KnowledgeGraph, DEFAULT_TWO_HOP_LIMIT};

pub use metrics::{
    compute_hacc, compute_pd, ClassScore, Comparison, MeanStd, MetricsReport, OrderMetrics, OrderResult, ReportHeader,
    SessionResult, Summary, Timing, DISCLOSURE,
};
pub use schedule::{split_sessions, ScheduleError, Split, TaskSchedule};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("class `{0}` is not in the graph")]
    UnknownClass(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("invalid `{key}`: {message}")]
    Config { key: String, message: String },
    #[error(transparent)]
    TaskGraph(#[from] TaskGraphError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub class_text: ClassText,
    /// Worker threads for sample evaluation; `None` uses every core.
    pub jobs: Option<usize>,
    /// Off makes reports bit-identical across runs.
    pub timing: bool,
    pub two_hop_limit: usize,
    /// Collect one diagnostic per class for the final session of each order.
    pub diagnostics: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            class_text: ClassText::Name,
            jobs: None,
            timing: true,
            two_hop_limit: DEFAULT_TWO_HOP_LIMIT,
            diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticRecord {
    pub order_seed: u64,
    pub session: usize,
    pub true_class: String,
    pub correct: bool,
    #[serde(flatten)]
    pub diagnostic: Diagnostic,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: MetricsReport,
    pub diagnostics: Vec<DiagnosticRecord>,
    /// Final subgraph of the first order.
    pub subgraph: TaskSubgraph,
}

struct SampleOutcome {
    correct: bool,
    timing: Timing,
}

fn elapsed_ms(start: Option<Instant>) -> f64 {
    start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3)
}

/// Context shared by every sample of one session.
struct SessionCtx<'a> {
    graph: &'a KnowledgeGraph,
    engine: InferenceEngine<'a>,
    sim: Simulator<'a>,
    candidates: &'a CandidateSet,
    generator: &'a GeneratorConfig,
    timing: bool,
}

impl SessionCtx<'_> {
    fn raw_text(&self, class: EntityId, stream: u64) -> String {
        match self.sim.generate(class, self.generator, stream) {
            Ok(text) => text,
            Err(GenerateError::NoAssignment(_)) => {
                let fallback = self.generator.with_mode(GeneratorMode::BaselineGmm);
                self.sim.generate(class, &fallback, stream).expect("baseline needs no assignment")
            }
        }
    }

    fn sample(&self, class: EntityId, stream: u64) -> SampleOutcome {
        let clock = || self.timing.then(Instant::now);
        let t0 = clock();
        let raw = self.raw_text(class, stream);
        let generation_ms = elapsed_ms(t0);
        let name = self.graph.entity_name(class);

        if self.generator.mode == GeneratorMode::BaselineGmm {
            let t1 = clock();
            let pred = self.candidates.classify(&raw, self.engine.encoder);
            let classify_ms = elapsed_ms(t1);
            return SampleOutcome {
                correct: pred.final_name == name,
                timing: Timing { generation_ms, graph_vote_ms: 0.0, classify_ms },
            };
        }

        let t1 = clock();
        let triplets = self.engine.lexicon.parse(&raw);
        let vote = crate::graph_inference::vote_head(&triplets, self.engine.subgraph, self.graph);
        let graph_vote_ms = elapsed_ms(t1);
        let t2 = clock();
        let augmented = crate::graph_inference::augment_text(&raw, vote.head, self.graph);
        let pred = self.candidates.classify(&augmented, self.engine.encoder);
        let classify_ms = elapsed_ms(t2);
        SampleOutcome { correct: pred.final_name == name, timing: Timing { generation_ms, graph_vote_ms, classify_ms } }
    }
}

fn resolve_classes(graph: &KnowledgeGraph, classes: &[String]) -> Result<(), HarnessError> {
    match classes.iter().find(|c| graph.entity(c).is_none()) {
        Some(c) => Err(HarnessError::UnknownClass(c.clone())),
        None => Ok(()),
    }
}

fn header(
    schedule: &TaskSchedule,
    generator: &GeneratorConfig,
    r_target: usize,
    encoder: &dyn TextEncoder,
    orders: &[u64],
    shortfall: usize,
) -> ReportHeader {
    let mut notes = vec![format!(
        "test samples are simulated generations ({} per seen class per session), not images",
        schedule.samples_per_class
    )];
    if let Split::FewShot { shot, .. } = schedule.split {
        notes.push(format!(
            "shot={shot} is bookkeeping only: path allocation consumes no samples and evaluation uses the full simulated pool"
        ));
    }
    if shortfall > 0 {
        notes.push(format!("{shortfall} class allocations received fewer than r={r_target} paths"));
    }
    ReportHeader {
        split: schedule.split.describe(),
        classes: schedule.classes.len(),
        samples_per_class: schedule.samples_per_class,
        r_target,
        encoder: encoder.id(),
        generator: *generator,
        orders: orders.to_vec(),
        notes,
        disclosure: DISCLOSURE.to_owned(),
    }
}

/// Shuffle `classes` with the order seed.
pub fn class_order(classes: &[String], order_seed: u64) -> Vec<String> {
    let mut order = classes.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(order_seed));
    order
}

pub fn run_experiment(
    graph: &KnowledgeGraph,
    schedule: &TaskSchedule,
    generator: &GeneratorConfig,
    r_target: usize,
    encoder: &dyn TextEncoder,
    orders: &[u64],
    options: &RunOptions,
) -> Result<MetricsReport, HarnessError> {
    Ok(run_experiment_full(graph, schedule, generator, r_target, encoder, orders, options)?.report)
}

/// [`run_experiment`] plus diagnostics and the final subgraph.
pub fn run_experiment_full(
    graph: &KnowledgeGraph,
    schedule: &TaskSchedule,
    generator: &GeneratorConfig,
    r_target: usize,
    encoder: &dyn TextEncoder,
    orders: &[u64],
    options: &RunOptions,
) -> Result<RunArtifacts, HarnessError> {
    if orders.is_empty() {
        return Err(HarnessError::Config { key: "orders".into(), message: "at least one order seed is required".into() });
    }
    if let Err(message) = generator.validate() {
        return Err(HarnessError::Config { key: "generator".into(), message });
    }
    if schedule.samples_per_class == 0 {
        return Err(HarnessError::Config {
            key: "schedule.samples_per_class".into(),
            message: "must be positive".into(),
        });
    }
    resolve_classes(graph, &schedule.classes)?;
    split_sessions(&schedule.classes, &schedule.split)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config { key: "jobs".into(), message: e.to_string() })?;
    let lexicon = RelationLexicon::new(graph);

    let mut order_results = Vec::with_capacity(orders.len());
    let mut diagnostics = Vec::new();
    let mut first_subgraph = None;
    let mut shortfall_total = 0;

    for &order_seed in orders {
        let ordered = class_order(&schedule.classes, order_seed);
        let sessions = split_sessions(&ordered, &schedule.split)?;
        let base: HashSet<&str> = sessions[0].iter().map(String::as_str).collect();
        let mut subgraph = TaskSubgraph::new();
        let mut seen: Vec<(EntityId, String)> = Vec::new();
        let mut results = Vec::with_capacity(sessions.len());

        for (s, classes) in sessions.iter().enumerate() {
            let alloc = AllocationOptions { two_hop_limit: options.two_hop_limit };
            let report = subgraph.extend_with(graph, classes, r_target, alloc)?;
            shortfall_total += report.shortfall.len();
            for c in classes {
                let id = graph.entity(c).expect("resolved above");
                seen.push((id, graph.entity_name(id).to_owned()));
            }
            log::info!(
                "order {order_seed} session {s}: {} new classes, {} seen, {} short",
                classes.len(),
                seen.len(),
                report.shortfall.len()
            );

            let candidates = CandidateSet::from_subgraph(&subgraph, graph, encoder, options.class_text)?;
            let ctx = SessionCtx {
                graph,
                engine: InferenceEngine { graph, subgraph: &subgraph, lexicon: &lexicon, candidates: &candidates, encoder },
                sim: Simulator::new(graph, &subgraph),
                candidates: &candidates,
                generator,
                timing: options.timing,
            };
            let n = schedule.samples_per_class;
            let stream = |class: EntityId, k: usize| {
                derive_stream(generator.seed, &[order_seed, s as u64, u64::from(class.0), k as u64])
            };
            let outcomes: Vec<SampleOutcome> = pool.install(|| {
                (0..seen.len() * n)
                    .into_par_iter()
                    .map(|i| {
                        let (class, _) = &seen[i / n];
                        ctx.sample(*class, stream(*class, i % n))
                    })
                    .collect()
            });

            let mut per_class = Vec::with_capacity(seen.len());
            let mut timing = Timing::default();
            let (mut base_hit, mut base_total, mut hit) = (0, 0, 0);
            for (ci, (_, name)) in seen.iter().enumerate() {
                let chunk = &outcomes[ci * n..(ci + 1) * n];
                let correct = chunk.iter().filter(|o| o.correct).count();
                for o in chunk {
                    timing.generation_ms += o.timing.generation_ms;
                    timing.graph_vote_ms += o.timing.graph_vote_ms;
                    timing.classify_ms += o.timing.classify_ms;
                }
                hit += correct;
                if base.contains(name.as_str()) {
                    base_hit += correct;
                    base_total += n;
                }
                per_class.push(ClassScore { class: name.clone(), correct, total: n });
            }
            let total = outcomes.len();
            let per_sample = total as f64;
            timing.generation_ms /= per_sample;
            timing.graph_vote_ms /= per_sample;
            timing.classify_ms /= per_sample;
            let accuracy = hit as f64 / total as f64;

            let final_session = s + 1 == sessions.len();
            if options.diagnostics && final_session {
                for (class, name) in &seen {
                    let raw = ctx.raw_text(*class, stream(*class, 0));
                    let diagnostic = if generator.mode == GeneratorMode::BaselineGmm {
                        let pred = candidates.classify(&raw, encoder);
                        Diagnostic {
                            raw: raw.clone(),
                            triplets: Vec::new(),
                            tally: Default::default(),
                            graph_head: None,
                            vote_tie: false,
                            augmented: raw.clone(),
                            final_class: pred.final_name.clone(),
                            similarity_tie: pred.tied,
                            top3: candidates.top_k(&pred.similarity_scores, 3),
                        }
                    } else {
                        ctx.engine.diagnostic(&raw, &ctx.engine.infer(&raw))
                    };
                    diagnostics.push(DiagnosticRecord {
                        order_seed,
                        session: s,
                        true_class: name.clone(),
                        correct: diagnostic.final_class == *name,
                        diagnostic,
                    });
                }
            }

            results.push(SessionResult {
                session: s,
                new_classes: classes.len(),
                seen_classes: seen.len(),
                per_class,
                accuracy,
                base_accuracy: if base_total == 0 { 0.0 } else { base_hit as f64 / base_total as f64 },
                all_accuracy: accuracy,
                shortfall_classes: report.shortfall.len(),
                subgraph_bytes: subgraph.to_tsv_bytes(graph).len() as u64,
                timing,
            });
        }

        let metrics = OrderMetrics::from_sessions(order_seed, &results);
        order_results.push(OrderResult { order_seed, class_order: ordered, sessions: results, metrics });
        first_subgraph.get_or_insert(subgraph);
    }

    let summary = Summary::of(&order_results.iter().map(|o| o.metrics.clone()).collect::<Vec<_>>());
    let report = MetricsReport {
        header: header(schedule, generator, r_target, encoder, orders, shortfall_total),
        orders: order_results,
        summary,
    };
    Ok(RunArtifacts { report, diagnostics, subgraph: first_subgraph.unwrap_or_default() })
}

/// The same run twice on identical seeds: once as configured, once with the
/// generator forced to `baseline_gmm`.
pub fn run_paired(
    graph: &KnowledgeGraph,
    schedule: &TaskSchedule,
    generator: &GeneratorConfig,
    r_target: usize,
    encoder: &dyn TextEncoder,
    orders: &[u64],
    options: &RunOptions,
) -> Result<(MetricsReport, MetricsReport, Comparison), HarnessError> {
    let augmented = run_experiment(graph, schedule, generator, r_target, encoder, orders, options)?;
    let baseline_cfg = generator.with_mode(GeneratorMode::BaselineGmm);
    let baseline = run_experiment(graph, schedule, &baseline_cfg, r_target, encoder, orders, options)?;
    let cmp = Comparison::new(&augmented, &baseline);
    Ok((augmented, baseline, cmp))
}
