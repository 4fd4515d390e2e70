use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_typeforge"));
    c.env_remove("TYPEFORGE_CACHE").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generator() -> Value {
    let ty = |path: &str, cues: [&str; 3]| {
        json!({
            "path": path,
            "templates": cues.iter().map(|c| format!("{c} {{m}} today")).collect::<Vec<_>>(),
            "fillers": ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"],
        })
    };
    json!({
        "types": [
            ty("person athlete", ["the runner", "a sprinter named", "fans cheered"]),
            ty("person artist", ["the painter", "a sculptor named", "critics loved"]),
            ty("location city", ["we visited", "the mayor of", "streets of"]),
            ty("organization company", ["shares of", "the ceo of", "investors in"]),
        ]
    })
}

fn small_config() -> Value {
    let mut c = train_config();
    c.as_object_mut().unwrap().extend(
        json!({
            "model.hidden": 16,
            "model.layers": 1,
            "model.heads": 2,
            "model.ffn": 32,
            "model.type_heads": 2,
            "model.max_len": 32,
        })
        .as_object()
        .unwrap()
        .clone(),
    );
    c
}

fn train_config() -> Value {
    json!({
        "train.max_steps": 30,
        "train.batch_size": 8,
        "train.eval_every": 10,
    })
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        fs::write(root.join("gen.json"), generator().to_string()).unwrap();
        fs::write(root.join("small.json"), small_config().to_string()).unwrap();
        fs::write(root.join("train.json"), train_config().to_string()).unwrap();
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn gen(&self, out: &str, seed: &str, view: &str) {
        ok(&[
            "gen-synth",
            "--config",
            s(&self.p("gen.json")),
            "--seed",
            seed,
            "--out",
            s(&self.p(out)),
            &format!("synth.view={view}"),
        ]);
    }

    fn pretrain(&self, out: &str) -> Output {
        ok(&[
            "pretrain-ufet",
            "--config",
            s(&self.p("small.json")),
            "--seed",
            "7",
            "--schema",
            s(&self.p("ufet/schema.txt")),
            "--train",
            s(&self.p("ufet/corpus.jsonl")),
            "--out",
            s(&self.p(out)),
        ])
    }
}

fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn pretraining_twice_gives_identical_checkpoints() {
    let f = Fixture::new();
    f.gen("ufet", "1", "free_form");
    f.pretrain("a");
    f.pretrain("b");
    let (a, b) = (dir_files(&f.p("a")), dir_files(&f.p("b")));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "manifest.json",
        "params.bin",
        "config.json",
        "vocab.txt",
        "resolved_config.json",
    ] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
    assert_eq!(a, b);
}

#[test]
fn snapshot_reproduces_the_run() {
    let f = Fixture::new();
    f.gen("ufet", "1", "free_form");
    f.pretrain("a");
    ok(&[
        "pretrain-ufet",
        "--config",
        s(&f.p("a/resolved_config.json")),
        "--schema",
        s(&f.p("ufet/schema.txt")),
        "--train",
        s(&f.p("ufet/corpus.jsonl")),
        "--out",
        s(&f.p("again")),
    ]);
    assert_eq!(
        fs::read(f.p("a/params.bin")).unwrap(),
        fs::read(f.p("again/params.bin")).unwrap()
    );
}

#[test]
fn map_labels_writes_one_row_per_label() {
    let f = Fixture::new();
    fs::write(
        f.p("onto.txt"),
        "/person\n/person/athlete\n/organization\n/organization/sports_team\n/other\n/other/body_part\n",
    )
    .unwrap();
    ok(&[
        "map-labels",
        "--schema",
        s(&f.p("onto.txt")),
        "--out",
        s(&f.p("mapping.tsv")),
    ]);
    let tsv = fs::read_to_string(f.p("mapping.tsv")).unwrap();
    let rows: Vec<&str> = tsv.lines().collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.contains(&"/person/athlete\tathlete"));
    assert!(rows.contains(&"/organization/sports_team\tsports team"));
    assert!(rows.contains(&"/other/body_part\tbody part"));
    assert!(f.p("mapping.tsv.resolved_config.json").exists());
}

#[test]
fn overrides_file_changes_a_phrase() {
    let f = Fixture::new();
    fs::write(f.p("onto.txt"), "/person\n/person/artist\n").unwrap();
    fs::write(f.p("over.tsv"), "/person/artist\tmusician\n").unwrap();
    ok(&[
        "map-labels",
        "--schema",
        s(&f.p("onto.txt")),
        "--mapping",
        s(&f.p("over.tsv")),
        "--out",
        s(&f.p("m.tsv")),
    ]);
    let tsv = fs::read_to_string(f.p("m.tsv")).unwrap();
    assert_eq!(tsv, "/person\tperson\n/person/artist\tmusician\n");
}

#[test]
fn fewshot_finetune_evaluate_predict() {
    let f = Fixture::new();
    f.gen("ufet", "1", "free_form");
    f.gen("fet", "2", "hierarchical");
    f.pretrain("pre");
    ok(&[
        "sample-fewshot",
        "--schema",
        s(&f.p("fet/schema.txt")),
        "--train",
        s(&f.p("fet/corpus.jsonl")),
        "--k",
        "2",
        "--seed",
        "3",
        "--out",
        s(&f.p("split")),
    ]);
    ok(&[
        "finetune-fet",
        "--config",
        s(&f.p("train.json")),
        "--from",
        s(&f.p("pre")),
        "--schema",
        s(&f.p("fet/schema.txt")),
        "--train",
        s(&f.p("split/train.jsonl")),
        "--dev",
        s(&f.p("split/dev.jsonl")),
        "--out",
        s(&f.p("ft")),
    ]);
    ok(&[
        "evaluate",
        "--from",
        s(&f.p("ft")),
        "--on",
        s(&f.p("fet/corpus.jsonl")),
        "--out",
        s(&f.p("metrics.json")),
    ]);
    let metrics: Value = serde_json::from_slice(&fs::read(f.p("metrics.json")).unwrap()).unwrap();
    for key in ["strict_accuracy", "micro_f1", "macro_f1"] {
        let v = metrics[key]
            .as_f64()
            .unwrap_or_else(|| panic!("missing {key}"));
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(metrics["strict_accuracy"].as_f64() <= metrics["macro_f1"].as_f64());

    ok(&[
        "predict",
        "--from",
        s(&f.p("ft")),
        "--on",
        s(&f.p("fet/corpus.jsonl")),
        "--threshold",
        "0.4",
        "--out",
        s(&f.p("preds.jsonl")),
    ]);
    let preds = fs::read_to_string(f.p("preds.jsonl")).unwrap();
    let first: Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert!(first["example_id"].is_string());
    assert!(!first["pred_labels"].as_array().unwrap().is_empty());
    let n_labels = fs::read_to_string(f.p("fet/schema.txt"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(first["scores"].as_array().unwrap().len(), n_labels);
    let snap: Value =
        serde_json::from_slice(&fs::read(f.p("preds.jsonl.resolved_config.json")).unwrap())
            .unwrap();
    assert_eq!(snap["config"]["decode.threshold"], json!(0.4));
}

#[test]
fn protocol_reports_every_seed_and_the_mean() {
    let f = Fixture::new();
    f.gen("ufet", "1", "free_form");
    f.gen("fet", "2", "hierarchical");
    f.pretrain("pre");
    ok(&[
        "evaluate",
        "--config",
        s(&f.p("train.json")),
        "--from",
        s(&f.p("pre")),
        "--schema",
        s(&f.p("fet/schema.txt")),
        "--train",
        s(&f.p("fet/corpus.jsonl")),
        "--on",
        s(&f.p("fet/corpus.jsonl")),
        "--k",
        "2",
        "--repeats",
        "3",
        "--out",
        s(&f.p("protocol.json")),
        "train.max_steps=10",
    ]);
    let report: Value = serde_json::from_slice(&fs::read(f.p("protocol.json")).unwrap()).unwrap();
    assert_eq!(report["per_seed"].as_array().unwrap().len(), 3);
    assert!(report["mean"]["macro_f1"].is_number());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["map-labels", "--schema", "x", "--out", "y", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_key_fails_naming_the_key() {
    let f = Fixture::new();
    f.gen("ufet", "1", "free_form");
    let (schema, train, out) = (f.p("ufet/schema.txt"), f.p("ufet/corpus.jsonl"), f.p("x"));
    let base = [
        "pretrain-ufet",
        "--schema",
        s(&schema),
        "--train",
        s(&train),
        "--out",
        s(&out),
    ];
    for (bad, key) in [
        ("train.learning_rte=0.1", "train.learning_rte"),
        ("model.hidden=wide", "model.hidden"),
        ("train.mlm_rate=1.5", "mlm_rate"),
    ] {
        let mut args = base.to_vec();
        args.push(bad);
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{bad}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(key), "{bad}: {err}");
    }
    assert!(!f.p("x/params.bin").exists());
}

#[test]
fn vocabulary_cache_is_reused() {
    let f = Fixture::new();
    f.gen("ufet", "1", "free_form");
    let cache = f.p("cache");
    let go = |out: &str| {
        let o = bin()
            .env("TYPEFORGE_CACHE", &cache)
            .args([
                "pretrain-ufet",
                "--config",
                s(&f.p("small.json")),
                "--schema",
                s(&f.p("ufet/schema.txt")),
                "--train",
                s(&f.p("ufet/corpus.jsonl")),
                "--out",
                s(&f.p(out)),
                "train.max_steps=2",
            ])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    go("c1");
    let entries: Vec<_> = fs::read_dir(&cache).unwrap().collect();
    assert_eq!(entries.len(), 1);
    go("c2");
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
    assert_eq!(
        fs::read(f.p("c1/vocab.txt")).unwrap(),
        fs::read(f.p("c2/vocab.txt")).unwrap()
    );
}

#[test]
fn inputs_are_not_modified() {
    let f = Fixture::new();
    f.gen("ufet", "1", "free_form");
    let before = dir_files(&f.p("ufet"));
    f.pretrain("a");
    assert_eq!(dir_files(&f.p("ufet")), before);
}
