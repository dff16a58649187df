//! Storage and latency accounting for a built subgraph.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::generator_sim::{derive_stream, stream_rng, GeneratorConfig, Simulator};
use crate::graph_inference::vote_head;
use crate::relation_text::RelationLexicon;
use crate::task_graph::{TaskGraphError, TaskSubgraph};
use crate::triple_store::KnowledgeGraph;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BenchRow {
    /// Largest number of paths held by one class.
    pub r: usize,
    pub classes: usize,
    pub samples: usize,
    pub avg_text_chars: f64,
    pub generation_ms: f64,
    pub storage_bytes: u64,
    pub storage_mb: f64,
    /// Parse plus vote, per sample.
    pub graph_inference_ms: f64,
    pub seed: u64,
}

/// Time `n_samples` oracle generations and graph votes over random
/// assigned classes. An empty subgraph, or one without any paths, costs
/// nothing.
pub fn bench(graph: &KnowledgeGraph, subgraph: &TaskSubgraph, n_samples: usize, seed: u64) -> BenchRow {
    let r = subgraph.assignments().iter().map(|a| a.paths.len()).max().unwrap_or(0);
    let mut row = BenchRow { r, classes: subgraph.assignments().len(), seed, ..BenchRow::default() };
    if r == 0 || n_samples == 0 {
        return row;
    }
    let bytes = subgraph.to_tsv_bytes(graph).len() as u64;
    row.storage_bytes = bytes;
    row.storage_mb = bytes as f64 / 1e6;
    row.samples = n_samples;

    let sim = Simulator::new(graph, subgraph);
    let lexicon = RelationLexicon::new(graph);
    let oracle = GeneratorConfig::oracle();
    let assignments = subgraph.assignments();
    let mut pick = stream_rng(derive_stream(seed, &[0]));

    let mut texts = Vec::with_capacity(n_samples);
    let start = Instant::now();
    for i in 0..n_samples {
        let a = &assignments[pick.gen_range(0..assignments.len())];
        let text = sim
            .generate(a.class, &oracle, derive_stream(seed, &[1, i as u64]))
            .unwrap_or_else(|_| format!("This is a photo of {}", graph.entity_name(a.class)));
        texts.push(text);
    }
    row.generation_ms = start.elapsed().as_secs_f64() * 1e3 / n_samples as f64;
    row.avg_text_chars = texts.iter().map(|t| t.chars().count()).sum::<usize>() as f64 / n_samples as f64;

    let mut heads = 0usize;
    let start = Instant::now();
    for t in &texts {
        let triplets = lexicon.parse(t);
        heads += usize::from(vote_head(&triplets, subgraph, graph).head.is_some());
    }
    row.graph_inference_ms = start.elapsed().as_secs_f64() * 1e3 / n_samples as f64;
    log::debug!("bench: {heads}/{n_samples} votes found a head");
    row
}

/// Bench one fresh subgraph per `r` over the same single-task class list.
pub fn bench_sweep(
    graph: &KnowledgeGraph,
    classes: &[String],
    rs: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<BenchRow>, TaskGraphError> {
    rs.iter()
        .map(|&r| {
            if r == 0 {
                return Ok(BenchRow { classes: classes.len(), seed, ..BenchRow::default() });
            }
            let mut sub = TaskSubgraph::new();
            sub.extend(graph, classes, r)?;
            Ok(bench(graph, &sub, n_samples, seed))
        })
        .collect()
}

/// Metrics as rows, one column per bench row.
pub fn render_tsv(rows: &[BenchRow]) -> String {
    let mut s = String::from("metric");
    for row in rows {
        let _ = write!(s, "\tr={}", row.r);
    }
    s.push('\n');
    let mut line = |name: &str, f: &dyn Fn(&BenchRow) -> String| {
        s.push_str(name);
        for row in rows {
            s.push('\t');
            s.push_str(&f(row));
        }
        s.push('\n');
    };
    line("classes", &|r| r.classes.to_string());
    line("samples", &|r| r.samples.to_string());
    line("avg_text_length_chars", &|r| format!("{:.1}", r.avg_text_chars));
    line("generation_ms", &|r| format!("{:.4}", r.generation_ms));
    line("storage_bytes", &|r| r.storage_bytes.to_string());
    line("storage_mb", &|r| format!("{:.4}", r.storage_mb));
    line("graph_inference_ms", &|r| format!("{:.4}", r.graph_inference_ms));
    line("seed", &|r| r.seed.to_string());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = "\
granny_smith\tIsA\tfruit
granny_smith\tReceiveAction\teaten
pineapple\tIsA\tfruit
pineapple\tAtLocation\tstore
pineapple\tAtLocation\tpizza
";

    #[test]
    fn empty_subgraph_costs_nothing() {
        let g = KnowledgeGraph::from_reader(FIG2.as_bytes()).unwrap();
        let row = bench(&g, &TaskSubgraph::new(), 100, 1);
        assert_eq!(row.storage_bytes, 0);
        assert_eq!(row.graph_inference_ms, 0.0);
        assert_eq!(row.generation_ms, 0.0);
    }

    #[test]
    fn sweep_reports_each_r() {
        let g = KnowledgeGraph::from_reader(FIG2.as_bytes()).unwrap();
        let classes = vec!["granny_smith".to_string(), "pineapple".to_string()];
        let rows = bench_sweep(&g, &classes, &[0, 1, 2], 50, 3).unwrap();
        assert_eq!(rows[0].storage_bytes, 0);
        assert_eq!(rows[0].graph_inference_ms, 0.0);
        assert_eq!(rows[1].r, 1);
        assert!(rows[2].storage_bytes > rows[1].storage_bytes);
        assert!(rows[2].avg_text_chars > rows[1].avg_text_chars);
        let tsv = render_tsv(&rows);
        assert!(tsv.starts_with("metric\tr=0\tr=1\tr=2\n"));
        assert!(tsv.contains("\nseed\t3\t3\t3\n"));
    }
}
