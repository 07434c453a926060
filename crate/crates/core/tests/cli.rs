use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prsm::bundle::read_bundle;
use prsm::report::PrsmReport;
use serde_json::Value;

fn prsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prsm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str, sigma: &str, n_images: &str, n_queries: &str) -> Output {
    prsm(&[
        "synth",
        "--seed",
        seed,
        "--sigma",
        sigma,
        "--n-images",
        n_images,
        "--n-queries",
        n_queries,
        "--dim",
        "16",
        "--out",
        p(dir),
    ])
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn read_report(dir: &Path) -> PrsmReport {
    PrsmReport::from_json(&fs::read_to_string(dir.join("report/report.json")).unwrap()).unwrap()
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&synth(a.path(), "7", "0.3", "120", "6")), 0);
    assert_eq!(code(&synth(b.path(), "7", "0.3", "120", "6")), 0);
    let ta = tree(a.path());
    assert_eq!(ta, tree(b.path()));
    assert!(ta.contains_key(Path::new("config.json")));
    let c = tempfile::tempdir().unwrap();
    synth(c.path(), "8", "0.3", "120", "6");
    assert_ne!(ta, tree(c.path()));
}

#[test]
fn synth_headers_follow_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&synth(dir.path(), "1", "0.1", "100", "10")), 0);
    let images = read_bundle(dir.path().join("images.prsmemb")).unwrap();
    assert_eq!((images.len(), images.dim()), (100, 16));
    // Every base query yields one group per strategy: 3 + 4 + 4 rows.
    let queries = read_bundle(dir.path().join("queries.prsmemb")).unwrap();
    assert_eq!(queries.len(), 10 * 11);
    for name in ["groups_p1.jsonl", "groups_p2.jsonl", "groups_p3.jsonl"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 10);
    }
}

#[test]
fn zero_sigma_gives_perfect_stability() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2", "0", "150", "8");
    let config = dir.path().join("config.json");
    assert_eq!(
        code(&prsm(&[
            "evaluate",
            "--config",
            p(&config),
            "--k",
            "10,150"
        ])),
        0
    );
    let report = read_report(dir.path());
    assert_eq!(report.rows.len() % 10, 0);
    assert!(report.rows.len() >= 10);
    for row in &report.rows {
        assert_eq!(row.spearman, 1.0, "{} {}", row.spec, row.stratum);
        assert!(row.top_k.iter().all(|t| t.value == 1.0));
    }
}

#[test]
fn evaluate_is_byte_reproducible_and_restrictable() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "3", "0.4", "200", "12");
    let config = dir.path().join("config.json");
    let report_json = dir.path().join("report/report.json");
    assert_eq!(
        code(&prsm(&["evaluate", "--config", p(&config), "--jobs", "1"])),
        0
    );
    let first = fs::read(&report_json).unwrap();
    assert_eq!(
        code(&prsm(&["evaluate", "--config", p(&config), "--jobs", "4"])),
        0
    );
    assert_eq!(first, fs::read(&report_json).unwrap());
    for name in ["report.csv", "report.md", "run_info.json"] {
        assert!(dir.path().join("report").join(name).exists());
    }

    assert_eq!(
        code(&prsm(&[
            "evaluate",
            "--config",
            p(&config),
            "--specs",
            "o-c1"
        ])),
        0
    );
    let report = read_report(dir.path());
    assert!(report.rows.iter().all(|r| r.spec == "o-c1"));
    assert!(!report.rows.is_empty());
    let csv = fs::read_to_string(dir.path().join("report/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), report.rows.len() + 1);
}

#[test]
fn evaluate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "4", "0.2", "50", "4");
    let config = dir.path().join("config.json");
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&prsm(&["evaluate", "--config", p(&missing)])), 2);
    assert_eq!(
        code(&prsm(&[
            "evaluate",
            "--config",
            p(&config),
            "--specs",
            "o-x9"
        ])),
        2
    );
    assert_eq!(
        code(&prsm(&["evaluate", "--config", p(&config), "--k", "51"])),
        2
    );
    assert_eq!(
        code(&prsm(&["evaluate", "--config", p(&config), "--k", "10,5"])),
        2
    );
    assert_eq!(code(&prsm(&["evaluate"])), 2);

    // Only the P2 manifest, but a P1 spec requested: nothing to evaluate.
    let mut value: Value = serde_json::from_str(&fs::read_to_string(&config).unwrap()).unwrap();
    value["groups"] = serde_json::json!(["groups_p2.jsonl"]);
    let p2_only = dir.path().join("p2_only.json");
    fs::write(&p2_only, value.to_string()).unwrap();
    assert_eq!(
        code(&prsm(&[
            "evaluate",
            "--config",
            p(&p2_only),
            "--specs",
            "o-c1"
        ])),
        3
    );
    assert_eq!(
        code(&prsm(&[
            "evaluate",
            "--config",
            p(&p2_only),
            "--specs",
            "p1-np"
        ])),
        0
    );

    value["extra"] = Value::Bool(true);
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, value.to_string()).unwrap();
    assert_eq!(code(&prsm(&["evaluate", "--config", p(&unknown)])), 2);
}

#[test]
fn paraphrase_prefix_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let captions = dir.path().join("captions.txt");
    fs::write(
        &captions,
        "A photo of a young female academic\nnot a caption\n\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = prsm(&[
        "paraphrase",
        "--strategy",
        "p2",
        "--captions",
        p(&captions),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&run), 0);
    let manifest = fs::read_to_string(out.join("groups_p2.jsonl")).unwrap();
    let line: Value = serde_json::from_str(manifest.lines().next().unwrap()).unwrap();
    assert_eq!(manifest.lines().count(), 1);
    assert_eq!(line["np"], "a young female academic");
    assert_eq!(line["p1"], "an image of a young female academic");
    assert_eq!(line["stratum"], "female");
    let ledger = fs::read_to_string(out.join("ledger_p2.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 1);
    assert!(String::from_utf8_lossy(&run.stderr).contains("skipped"));
}

#[test]
fn paraphrase_empty_captions_file() {
    let dir = tempfile::tempdir().unwrap();
    let captions = dir.path().join("empty.txt");
    fs::write(&captions, "").unwrap();
    let out = dir.path().join("out");
    let run = prsm(&[
        "paraphrase",
        "--strategy",
        "p2",
        "--captions",
        p(&captions),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&run), 0);
    assert_eq!(fs::read_to_string(out.join("groups_p2.jsonl")).unwrap(), "");
    assert!(String::from_utf8_lossy(&run.stderr).contains("warning"));
}

#[test]
fn paraphrase_incomplete_lexicon_goes_to_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let captions = dir.path().join("captions.txt");
    let lines = [
        "a photo of a young female academic",
        "a photo of an elderly male nurse",
        "a picture of a young male chef",
        "an image of a tall female pilot",
        "a short male judge",
    ];
    fs::write(&captions, lines.join("\n")).unwrap();
    let lexicon = dir.path().join("lexicon.json");
    // "elderly", "tall" and "short" are missing: three affected captions.
    fs::write(
        &lexicon,
        r#"{"young": "youthful", "female": "woman", "male": "man"}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let args = [
        "paraphrase",
        "--strategy",
        "p3",
        "--captions",
        p(&captions),
        "--lexicon",
        p(&lexicon),
        "--out",
        p(&out),
    ];
    assert_eq!(code(&prsm(&args)), 0);
    let ledger = fs::read_to_string(out.join("ledger_p3.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 3);
    let manifest = fs::read_to_string(out.join("groups_p3.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    let first: Value = serde_json::from_str(manifest.lines().next().unwrap()).unwrap();
    assert_eq!(first["a12"], "a photo of a youthful woman academic");
}

#[test]
fn paraphrase_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let captions = dir.path().join("captions.txt");
    fs::write(&captions, "a photo of a young female academic\n").unwrap();
    let bad_lexicon = dir.path().join("bad.json");
    fs::write(&bad_lexicon, "[1, 2]").unwrap();
    let out = dir.path().join("out");
    let base = ["paraphrase", "--captions", p(&captions), "--out", p(&out)];
    let with = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        code(&prsm(&args))
    };
    assert_eq!(with(&["--strategy", "p3"]), 2);
    assert_eq!(with(&["--strategy", "p3", "--lexicon", p(&bad_lexicon)]), 2);
    assert_eq!(with(&["--strategy", "p2", "--lexicon", p(&bad_lexicon)]), 2);
    assert_eq!(with(&["--strategy", "p4"]), 2);
    // A plain caption list is not a valid P1 manifest.
    assert_eq!(with(&["--strategy", "p1"]), 2);
    let missing = dir.path().join("missing.txt");
    assert_eq!(
        code(&prsm(&[
            "paraphrase",
            "--strategy",
            "p2",
            "--captions",
            p(&missing),
            "--out",
            p(&out)
        ])),
        2
    );
}

#[test]
fn paraphrase_passes_p1_manifest_through() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("p1.jsonl");
    fs::write(
        &manifest,
        concat!(
            r#"{"group_id": "g1", "stratum": "male", "o": "a man cooking", "c1": "a man preparing food", "c2": "a male cook at work"}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = prsm(&[
        "paraphrase",
        "--strategy",
        "p1",
        "--captions",
        p(&manifest),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&run), 0);
    let written = fs::read_to_string(out.join("groups_p1.jsonl")).unwrap();
    let line: Value = serde_json::from_str(written.trim()).unwrap();
    assert_eq!(line["c2"], "a male cook at work");
    assert_eq!(line["stratum"], "male");
}

#[test]
fn inspect_recognizes_every_file_kind() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "5", "0.2", "60", "3");
    let config = dir.path().join("config.json");
    assert_eq!(code(&prsm(&["evaluate", "--config", p(&config)])), 0);
    let kinds = [
        ("images.prsmemb", "embedding_bundle"),
        ("groups_p3.jsonl", "manifest"),
        ("lexicon.json", "lexicon"),
        ("config.json", "run_config"),
        ("report/report.json", "report"),
    ];
    for (file, kind) in kinds {
        let out = prsm(&["inspect", p(&dir.path().join(file))]);
        assert_eq!(code(&out), 0, "{file}");
        let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(summary["kind"], kind, "{file}");
    }
    let summary: Value =
        serde_json::from_slice(&prsm(&["inspect", p(&dir.path().join("images.prsmemb"))]).stdout)
            .unwrap();
    assert_eq!(summary["n"], 60);

    let corrupt = dir.path().join("corrupt.prsmemb");
    let mut bytes = fs::read(dir.path().join("images.prsmemb")).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(&corrupt, bytes).unwrap();
    assert_eq!(code(&prsm(&["inspect", p(&corrupt)])), 2);
    assert_eq!(code(&prsm(&["inspect", p(&dir.path().join("absent"))])), 2);
}

#[test]
fn ranking_cache_is_written_and_inspectable() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "6", "0.2", "40", "2");
    let config_path = dir.path().join("config.json");
    let mut config: Value =
        serde_json::from_str(&fs::read_to_string(&config_path).unwrap()).unwrap();
    config["ranking_cache"] = Value::String("rankings.prsmrnk".into());
    config["k_values"] = serde_json::json!([4]);
    fs::write(&config_path, config.to_string()).unwrap();
    assert_eq!(code(&prsm(&["evaluate", "--config", p(&config_path)])), 0);
    let out = prsm(&["inspect", p(&dir.path().join("rankings.prsmrnk"))]);
    assert_eq!(code(&out), 0);
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["kind"], "ranking_cache");
    assert_eq!(summary["n_queries"], 22);
    assert_eq!(summary["n_images"], 40);
}
