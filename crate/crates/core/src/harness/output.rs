//! Run outputs: metrics.json, sessions.csv, diagnostics.jsonl, bench.tsv.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::bench::{render_tsv, BenchRow};
use super::metrics::{Comparison, MetricsReport, DISCLOSURE};
use super::DiagnosticRecord;

#[derive(Debug, Serialize)]
pub struct MetricsDocument<'a> {
    pub disclosure: &'static str,
    pub seed: u64,
    pub report: &'a MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<&'a Comparison>,
}

pub fn metrics_json(report: &MetricsReport, comparison: Option<&Comparison>) -> serde_json::Result<String> {
    let doc = MetricsDocument { disclosure: DISCLOSURE, seed: report.header.generator.seed, report, comparison };
    serde_json::to_string_pretty(&doc)
}

pub fn sessions_csv(report: &MetricsReport) -> String {
    let mut s = String::from(
        "order_seed,session,new_classes,seen_classes,accuracy,base_accuracy,all_accuracy,\
         shortfall_classes,subgraph_bytes,generation_ms,graph_vote_ms,classify_ms\n",
    );
    for o in &report.orders {
        for r in &o.sessions {
            s.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{:.4},{},{},{:.6},{:.6},{:.6}\n",
                o.order_seed,
                r.session,
                r.new_classes,
                r.seen_classes,
                r.accuracy * 100.0,
                r.base_accuracy * 100.0,
                r.all_accuracy * 100.0,
                r.shortfall_classes,
                r.subgraph_bytes,
                r.timing.generation_ms,
                r.timing.graph_vote_ms,
                r.timing.classify_ms,
            ));
        }
    }
    s
}

pub fn write_diagnostics(path: &Path, records: &[DiagnosticRecord]) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Write every output into `dir`, creating it. Returns the paths written.
pub fn write_outputs(
    dir: &Path,
    report: &MetricsReport,
    comparison: Option<&Comparison>,
    diagnostics: &[DiagnosticRecord],
    bench: &[BenchRow],
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join("metrics.json");
    fs::write(&path, metrics_json(report, comparison)? + "\n")?;
    written.push(path);

    let path = dir.join("sessions.csv");
    fs::write(&path, sessions_csv(report))?;
    written.push(path);

    let path = dir.join("diagnostics.jsonl");
    write_diagnostics(&path, diagnostics)?;
    written.push(path);

    if !bench.is_empty() {
        let path = dir.join("bench.tsv");
        fs::write(&path, render_tsv(bench))?;
        written.push(path);
    }
    Ok(written)
}
