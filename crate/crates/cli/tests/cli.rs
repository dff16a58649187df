use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn kgcil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgcil"))
        .args(args)
        .env("KGCIL_LOG", "warn")
        .output()
        .expect("spawn kgcil")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn ingest_prints_stats() {
    let out = kgcil(&["ingest", p(&data("fig2.tsv"))]);
    let stats = stdout_json(&out);
    assert_eq!(stats["entities"], 6);
    assert_eq!(stats["relations"], 3);
    assert_eq!(stats["facts"], 6);
}

#[test]
fn ingest_malformed_names_line() {
    let out = kgcil(&["ingest", p(&data("malformed.tsv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn build_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("sub.tsv");
    let out = kgcil(&[
        "build",
        "--graph",
        p(&data("fig2.tsv")),
        "--classes",
        p(&data("fig2_classes.txt")),
        "-r",
        "2",
        "--out",
        p(&sub),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read(&sub).unwrap(), fs::read(data("fig2_subgraph.golden.tsv")).unwrap());
    assert_eq!(out.stdout, fs::read(data("fig2_build.golden.json")).unwrap());
}

#[test]
fn build_empty_classes_warns() {
    let dir = tempfile::tempdir().unwrap();
    let classes = dir.path().join("none.txt");
    fs::write(&classes, "# nothing yet\n\n").unwrap();
    let sub = dir.path().join("sub.tsv");
    let out = kgcil(&["build", "--graph", p(&data("fig2.tsv")), "--classes", p(&classes), "--out", p(&sub)]);
    let report = stdout_json(&out);
    assert_eq!(report["export"]["classes"], 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no classes"));
    let text = fs::read_to_string(&sub).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn build_unknown_class_strict_and_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("sub.tsv");
    let args = |strict: bool| {
        let mut a = vec![
            "build".to_string(),
            "--graph".into(),
            p(&data("fig2.tsv")).into(),
            "--classes".into(),
            p(&data("bogus_classes.txt")).into(),
            "-r".into(),
            "2".into(),
            "--out".into(),
            p(&sub).into(),
        ];
        if strict {
            a.push("--strict".into());
        }
        a
    };
    let strict: Vec<String> = args(true);
    let out = kgcil(&strict.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_class"));
    assert!(!sub.exists());

    let lenient: Vec<String> = args(false);
    let report = stdout_json(&kgcil(&lenient.iter().map(String::as_str).collect::<Vec<_>>()));
    assert_eq!(report["shortfall"], serde_json::json!(["bogus_class"]));
}

fn query(text: &str) -> serde_json::Value {
    stdout_json(&kgcil(&[
        "query",
        "--graph",
        p(&data("fig2.tsv")),
        "--subgraph",
        p(&data("fig2_subgraph.golden.tsv")),
        text,
    ]))
}

#[test]
fn query_oracle_pineapple() {
    let d = query("pineapple AtLocation store. pineapple AtLocation pizza.");
    assert_eq!(d["graph_head"], "pineapple");
    assert_eq!(d["final_class"], "pineapple");
    assert_eq!(d["tally"]["pineapple"], 2);
}

#[test]
fn query_without_keywords_falls_back() {
    let d = query("A blurry picture of something green");
    assert_eq!(d["tally"], serde_json::json!({}));
    assert!(d["graph_head"].is_null());
    assert_eq!(d["augmented"], "A blurry picture of something green");
    // No candidate shares a token with the text: every score is zero and the
    // smallest name wins.
    assert_eq!(d["final_class"], "granny_smith");
    assert_eq!(d["similarity_tie"], true);
}

#[test]
fn query_vote_tie_goes_to_smallest_name() {
    let d = query("It IsA fruit. It is AtLocation pizza.");
    assert_eq!(d["vote_tie"], true);
    assert_eq!(d["tally"], serde_json::json!({"granny_smith": 1, "pineapple": 1}));
    assert_eq!(d["graph_head"], "granny_smith");
    assert_eq!(d["final_class"], "granny_smith");
}

#[test]
fn query_missing_subgraph_fails() {
    let out = kgcil(&["query", "--graph", p(&data("fig2.tsv")), "--subgraph", "/nonexistent/sub.tsv", "x"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_table_echoes_seed() {
    let out = kgcil(&[
        "bench",
        "--graph",
        p(&data("fig2.tsv")),
        "--subgraph",
        p(&data("fig2_subgraph.golden.tsv")),
        "-n",
        "50",
        "--seed",
        "17",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("metric\tr=2\n"), "{text}");
    assert!(text.contains("\nstorage_bytes\t187\n"), "{text}");
    assert!(text.contains("\nseed\t17\n"), "{text}");
}

#[test]
fn bench_sweep_r0_is_free() {
    let out = kgcil(&[
        "bench",
        "--graph",
        p(&data("fig2.tsv")),
        "--classes",
        p(&data("fig2_classes.txt")),
        "--rs",
        "0,1,2",
        "--json",
    ]);
    let rows = stdout_json(&out);
    assert_eq!(rows[0]["storage_bytes"], 0);
    assert_eq!(rows[0]["graph_inference_ms"], 0.0);
    assert_eq!(rows[2]["r"], 2);
}

struct RunDir {
    dir: tempfile::TempDir,
}

impl RunDir {
    fn new(graph: &Path, classes: &[&str], generator: serde_json::Value, mutate: impl FnOnce(&mut serde_json::Value)) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = serde_json::json!({
            "graph_path": p(graph),
            "schedule": {"classes": classes, "split": {"kind": "b0", "tasks": 1}, "samples_per_class": 20},
            "r_target": 2,
            "generator": generator,
            "orders": [1, 2, 3],
            "output_dir": "out",
        });
        mutate(&mut cfg);
        fs::write(dir.path().join("run.json"), serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        Self { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("run.json")
    }

    fn out(&self, file: &str) -> PathBuf {
        self.dir.path().join("out").join(file)
    }

    fn metrics(&self) -> serde_json::Value {
        serde_json::from_slice(&fs::read(self.out("metrics.json")).unwrap()).unwrap()
    }
}

#[test]
fn run_oracle_is_perfect_and_discloses() {
    let run = RunDir::new(
        &data("fig2.tsv"),
        &["granny_smith", "pineapple"],
        serde_json::json!({"mode": "oracle", "seed": 5}),
        |c| c["schedule"]["split"]["tasks"] = 2.into(),
    );
    let out = kgcil(&["run", p(&run.config()), "--no-timing", "--no-baseline"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("NOT reproduced"), "{stdout}");
    assert!(stdout.contains("Avg 100.00±0.00 Last 100.00±0.00"), "{stdout}");
    assert!(stdout.contains("seed: 5"));

    let m = run.metrics();
    assert_eq!(m["seed"], 5);
    assert!(m["disclosure"].as_str().unwrap().contains("NOT reproduced"));
    assert_eq!(m["report"]["summary"]["avg"]["mean"], 100.0);
    assert_eq!(m["report"]["summary"]["last"]["mean"], 100.0);
    assert!(m.get("comparison").is_none());

    let csv = fs::read_to_string(run.out("sessions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    let diag = fs::read_to_string(run.out("diagnostics.jsonl")).unwrap();
    assert_eq!(diag.lines().count(), 3 * 2);
    assert!(run.out("bench.tsv").exists());
}

fn taxonomy(dir: &Path, classes: usize, dim: usize) -> (PathBuf, Vec<String>) {
    let graph = dir.join("tax.tsv");
    let list = dir.join("classes.txt");
    let out = kgcil(&[
        "synth",
        "taxonomy",
        "--classes",
        &classes.to_string(),
        "--distinct-buckets",
        &dim.to_string(),
        "--out",
        p(&graph),
        "--classes-out",
        p(&list),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names = fs::read_to_string(&list).unwrap().lines().map(str::to_owned).collect();
    (graph, names)
}

#[test]
fn run_drop_only_tracks_law() {
    let tmp = tempfile::tempdir().unwrap();
    let (graph, classes) = taxonomy(tmp.path(), 100, 2048);
    let names: Vec<&str> = classes.iter().map(String::as_str).collect();
    let run = RunDir::new(
        &graph,
        &names,
        serde_json::json!({"mode": "corrupted", "p_drop": 0.5, "seed": 11}),
        |c| {
            c["r_target"] = 3.into();
            c["orders"] = serde_json::json!([1]);
            c["schedule"]["samples_per_class"] = 100.into();
            c["encoder"] = serde_json::json!({"id": "hashing", "dimension": 2048});
        },
    );
    let out = kgcil(&["run", p(&run.config()), "--no-timing", "--no-baseline", "--bench-samples", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let last = run.metrics()["report"]["summary"]["last"]["mean"].as_f64().unwrap();
    // 10,000 samples: 3 sigma of a 0.875 binomial is under one point.
    assert!((last - 87.5).abs() < 1.0, "Last {last}");
    assert!(!run.out("bench.tsv").exists());
}

#[test]
fn run_paired_comparison_block() {
    let tmp = tempfile::tempdir().unwrap();
    let (graph, classes) = taxonomy(tmp.path(), 40, 1024);
    let names: Vec<&str> = classes.iter().map(String::as_str).collect();
    let run = RunDir::new(
        &graph,
        &names,
        serde_json::json!({"mode": "corrupted", "p_drop": 0.3, "p_swap": 0.3, "p_hypernym": 0.5, "seed": 3}),
        |c| {
            c["r_target"] = 3.into();
            c["schedule"]["split"] = serde_json::json!({"kind": "b0", "tasks": 4});
            c["encoder"] = serde_json::json!({"id": "hashing", "dimension": 1024});
        },
    );
    let out = kgcil(&["run", p(&run.config()), "--no-timing"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cmp = &run.metrics()["comparison"];
    assert_eq!(cmp["augmented_ge_baseline"], true, "{cmp}");
    assert!(cmp["margin_avg"].as_f64().unwrap() >= 0.0);
}

#[test]
fn run_is_deterministic_across_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let (graph, classes) = taxonomy(tmp.path(), 24, 1024);
    let names: Vec<&str> = classes.iter().map(String::as_str).collect();
    let gen = serde_json::json!({"mode": "corrupted", "p_drop": 0.4, "p_swap": 0.2, "p_hypernym": 0.3, "filler": true, "seed": 8});
    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let run = RunDir::new(&graph, &names, gen.clone(), |c| c["schedule"]["split"]["tasks"] = 3.into());
        let out = kgcil(&["run", p(&run.config()), "--no-timing", "--jobs", jobs]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((
            fs::read(run.out("metrics.json")).unwrap(),
            fs::read(run.out("sessions.csv")).unwrap(),
            fs::read(run.out("diagnostics.jsonl")).unwrap(),
            String::from_utf8(out.stdout).unwrap().lines().filter(|l| !l.starts_with("output:")).collect::<Vec<_>>().join("\n"),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn run_schema_errors_name_the_key() {
    let cases: [(&str, Box<dyn FnOnce(&mut serde_json::Value)>); 3] = [
        ("surprise", Box::new(|c| c["surprise"] = 1.into())),
        ("p_drop", Box::new(|c| c["generator"]["p_drop"] = 1.5.into())),
        ("samples_per_class", Box::new(|c| c["schedule"]["samples_per_class"] = 0.into())),
    ];
    for (key, mutate) in cases {
        let run = RunDir::new(&data("fig2.tsv"), &["pineapple"], serde_json::json!({"mode": "oracle"}), mutate);
        let out = kgcil(&["run", p(&run.config())]);
        assert_eq!(out.status.code(), Some(1), "{key}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(key), "{key}: {err}");
        assert!(out.stdout.is_empty());
        assert!(!run.out("metrics.json").exists());
    }
}
