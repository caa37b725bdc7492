use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-vote"))
        .args(args)
        .env_remove("SPARSE_VOTE_THREADS")
        .output()
        .expect("spawn sparse-vote")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = bin(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic tree: 3 classes, 4 train and 2 test images each.
fn small_tree() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "synth-gen", "--out", s(dir.path()), "--classes", "3", "--train-per-class", "4",
        "--test-per-class", "2", "--seed", "11",
    ]);
    dir
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_gen_default_counts_and_reproducibility() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&["synth-gen", "--out", s(a.path())]);
    ok(&["synth-gen", "--out", s(b.path())]);
    let train = listing(&a.path().join("train"));
    let test = listing(&a.path().join("test"));
    assert_eq!(train.len(), 140);
    assert_eq!(test.len(), 120);
    assert!(train.iter().any(|(n, _)| n == "m-001-01.pgm"));
    assert!(test.iter().any(|(n, _)| n == "w-005-26.pgm"));
    assert_eq!(train, listing(&b.path().join("train")));
    assert_eq!(test, listing(&b.path().join("test")));
}

#[test]
fn build_dict_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let dict = dir.path().join("d.spkd");
    let err = fails(&["build-dict", "--data-dir", s(dir.path()), "--dict-path", s(&dict)]);
    assert!(err.contains("no training samples"), "{err}");
    assert!(!dict.exists());
}

#[test]
fn corrupt_image_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m-001-01.pgm"), b"P5\n4 4\n255\nxx").unwrap();
    let err = fails(&[
        "build-dict", "--data-dir", s(dir.path()), "--dict-path", s(&dir.path().join("d")),
    ]);
    assert!(err.contains("m-001-01.pgm"), "{err}");
}

#[test]
fn classify_training_image_returns_its_label() {
    let tree = small_tree();
    let dict = tree.path().join("d.spkd");
    let summary = ok(&[
        "build-dict", "--data-dir", s(&tree.path().join("train")), "--dict-path", s(&dict),
    ]);
    assert!(summary.contains("classes: 3  training images: 12"), "{summary}");
    let out = ok(&[
        "classify", "--dict-path", s(&dict), s(&tree.path().join("train/w-001-03.pgm")),
    ]);
    assert!(out.starts_with("predicted: w-001\nvotes: w-001=121"), "{out}");
}

#[test]
fn dictionary_errors() {
    let tree = small_tree();
    let image = tree.path().join("test/m-001-08.pgm");
    let missing = tree.path().join("missing.spkd");
    let err = fails(&["classify", "--dict-path", s(&missing), s(&image)]);
    assert!(err.contains("missing.spkd"), "{err}");

    let dict = tree.path().join("d.spkd");
    ok(&["build-dict", "--data-dir", s(&tree.path().join("train")), "--dict-path", s(&dict)]);
    let mut bytes = fs::read(&dict).unwrap();
    bytes[4..6].copy_from_slice(&7u16.to_le_bytes());
    fs::write(&dict, &bytes).unwrap();
    let err = fails(&["classify", "--dict-path", s(&dict), s(&image)]);
    assert!(err.contains("version 7"), "{err}");
}

#[test]
fn config_file_supplies_flags() {
    let tree = small_tree();
    let dict = tree.path().join("d.spkd");
    let config = tree.path().join("run.toml");
    fs::write(
        &config,
        format!(
            "data_dir = {:?}\ndict_path = {:?}\nx_n = 5\ny_n = 6\n",
            s(&tree.path().join("train")),
            s(&dict)
        ),
    )
    .unwrap();
    let out = ok(&["build-dict", "--config", s(&config)]);
    assert!(out.contains("grid: 5x6 on 55x66  patch: 11x11"), "{out}");

    fs::write(&config, "bogus_key = 1\n").unwrap();
    fails(&["build-dict", "--config", s(&config)]);
}

#[test]
fn evaluate_report_matches_golden() {
    let tree = small_tree();
    let dict = tree.path().join("d.spkd");
    let report = tree.path().join("report.csv");
    ok(&["build-dict", "--data-dir", s(&tree.path().join("train")), "--dict-path", s(&dict)]);
    let out = ok(&[
        "evaluate", "--threads", "2", "--data-dir", s(&tree.path().join("test")),
        "--dict-path", s(&dict), "--output", s(&report),
    ]);
    assert!(out.starts_with("grid 11x11: global accuracy"), "{out}");
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/small_report.csv"))
        .unwrap();
    assert_eq!(fs::read_to_string(&report).unwrap(), golden);
}

#[test]
fn evaluate_several_grids_writes_suffixed_reports() {
    let tree = small_tree();
    let report = tree.path().join("r.json");
    let out = ok(&[
        "evaluate", "--data-dir", s(&tree.path().join("test")),
        "--train-dir", s(&tree.path().join("train")), "--grid", "5x5", "--grid", "11x11",
        "--format", "json", "--output", s(&report),
    ]);
    assert_eq!(out.lines().count(), 2, "{out}");
    for name in ["r-5x5.json", "r-11x11.json"] {
        let text = fs::read_to_string(tree.path().join(name)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["n_images"], 6);
        assert_eq!(v["images"].as_array().unwrap().len(), 6);
    }
}
