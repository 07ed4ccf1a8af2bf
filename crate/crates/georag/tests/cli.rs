//! End-to-end tests of the `georag` binary: every subcommand, the exit-code
//! contract, and the config-file/flag override path.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use georag::config::{flag_for_key, CONFIG_KEYS};
use georag::ingest::VectorBlob;
use georag::vecstore::{Index, IndexMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn georag() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_georag"));
    cmd.env_remove("GEORAG_API_KEY");
    cmd
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output {
        status,
        stdout,
        stderr,
    } = cmd.output().expect("failed to spawn georag");
    (
        status.code().unwrap_or(-1),
        String::from_utf8_lossy(&stdout).into_owned(),
        String::from_utf8_lossy(&stderr).into_owned(),
    )
}

/// Writes a gallery as the two files `build-index` consumes: a vector blob
/// and a metadata JSONL with one row per blob row.
fn write_raw_gallery(dir: &Path, seed: u64, n: usize, d: usize) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut meta = String::new();
    for i in 0..n {
        for _ in 0..d {
            data.push(rng.gen_range(-1.0f32..1.0));
        }
        meta.push_str(&format!(
            "{{\"id\": {i}, \"lat\": {:.6}, \"lon\": {:.6}, \"source\": \"OTHER\"}}\n",
            rng.gen_range(-89.0..89.0),
            rng.gen_range(-179.0..179.0)
        ));
    }
    let vectors = dir.join("vectors.gvec");
    VectorBlob::new(d as u32, data).unwrap().save(&vectors).unwrap();
    let metadata = dir.join("metadata.jsonl");
    std::fs::write(&metadata, meta).unwrap();
    (vectors, metadata)
}

struct Fixture {
    _dir: tempfile::TempDir,
    index: PathBuf,
    embeddings: PathBuf,
    image: PathBuf,
    manifest: PathBuf,
    out_dir: PathBuf,
    root: PathBuf,
}

/// A 40-record gallery indexed through the real `build-index` subcommand,
/// plus a 4-item benchmark manifest whose ground truths all sit at (0, 0).
fn fixture(seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let d = 8usize;
    let (vectors, metadata) = write_raw_gallery(&root, seed, 40, d);
    let index = root.join("gallery.grag");
    let (code, stdout, stderr) = run(georag()
        .arg("build-index")
        .arg("--vectors")
        .arg(&vectors)
        .arg("--metadata")
        .arg(&metadata)
        .arg("--out")
        .arg(&index));
    assert_eq!(code, 0, "fixture build-index failed: {stdout}{stderr}");

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xcab);
    let mut rows = Vec::with_capacity(4 * d);
    let mut manifest_lines = String::new();
    for i in 0..4 {
        for _ in 0..d {
            rows.push(rng.gen_range(-1.0f32..1.0));
        }
        let file = format!("img-{i}.jpg");
        std::fs::write(root.join(&file), [0xff, 0xd8, 0xff, i as u8]).unwrap();
        manifest_lines.push_str(&format!(
            "{{\"id\": \"item-{i}\", \"image_path\": \"{file}\", \"lat\": 0.0, \"lon\": 0.0}}\n"
        ));
    }
    let embeddings = root.join("queries.gvec");
    VectorBlob::new(d as u32, rows).unwrap().save(&embeddings).unwrap();
    let manifest = root.join("benchmark.jsonl");
    std::fs::write(&manifest, manifest_lines).unwrap();

    let image = root.join("img-0.jpg");
    let out_dir = root.join("out");
    Fixture {
        _dir: dir,
        index,
        embeddings,
        image,
        manifest,
        out_dir,
        root,
    }
}

fn write_script(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

#[test]
fn build_index_reports_gallery_shape() {
    let dir = tempfile::tempdir().unwrap();
    let (vectors, metadata) = write_raw_gallery(dir.path(), 11, 3, 4);
    let out = dir.path().join("tiny.grag");
    let (code, stdout, _) = run(georag()
        .arg("build-index")
        .arg("--vectors")
        .arg(&vectors)
        .arg("--metadata")
        .arg(&metadata)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 0);
    assert!(stdout.contains("count=3"), "stdout: {stdout}");
    assert!(stdout.contains("dimension=4"), "stdout: {stdout}");
    assert!(stdout.contains("mode=flat"), "stdout: {stdout}");
    assert!(out.exists());
}

#[test]
fn build_index_count_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (vectors, _) = write_raw_gallery(dir.path(), 12, 3, 4);
    let metadata = dir.path().join("short.jsonl");
    std::fs::write(
        &metadata,
        "{\"id\": 0, \"lat\": 1.0, \"lon\": 2.0, \"source\": \"OTHER\"}\n",
    )
    .unwrap();
    let (code, _, stderr) = run(georag()
        .arg("build-index")
        .arg("--vectors")
        .arg(&vectors)
        .arg("--metadata")
        .arg(&metadata)
        .arg("--out")
        .arg(dir.path().join("never.grag")));
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("error:"), "stderr: {stderr}");
}

#[test]
fn build_index_ivf_mode_round_trips_through_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let (vectors, metadata) = write_raw_gallery(dir.path(), 13, 1_000, 8);
    let out = dir.path().join("ivf.grag");
    let (code, stdout, stderr) = run(georag()
        .arg("--mode")
        .arg("ivf")
        .arg("--nlist")
        .arg("8")
        .arg("--nprobe")
        .arg("3")
        .arg("--seed")
        .arg("7")
        .arg("build-index")
        .arg("--vectors")
        .arg(&vectors)
        .arg("--metadata")
        .arg(&metadata)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(stdout.contains("mode=ivf"), "stdout: {stdout}");
    assert!(stdout.contains("nlist=8"), "stdout: {stdout}");
    let reloaded = Index::load(&out).unwrap();
    assert_eq!(reloaded.mode(), IndexMode::Ivf);
    assert_eq!(reloaded.nlist(), 8);
}

#[test]
fn query_parses_a_scripted_reply() {
    let f = fixture(21);
    let script = write_script(&f.root, "script.json", r#"[{"text": "10.0, 20.0"}]"#);
    let (code, stdout, stderr) = run(georag()
        .arg("query")
        .arg("--index")
        .arg(&f.index)
        .arg("--image")
        .arg(&f.image)
        .arg("--embedding")
        .arg(&f.embeddings)
        .arg("--mock-script")
        .arg(&script));
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(stdout.contains("model reply:"), "stdout: {stdout}");
    assert!(stdout.contains("10.0, 20.0"), "stdout: {stdout}");
    assert!(
        stdout.contains("parsed: (10.000000, 20.000000)"),
        "stdout: {stdout}"
    );
}

#[test]
fn query_without_a_coordinate_exits_4_but_prints_the_reply() {
    let f = fixture(22);
    let script = write_script(
        &f.root,
        "vague.json",
        r#"[{"text": "somewhere in western europe"}]"#,
    );
    let (code, stdout, stderr) = run(georag()
        .arg("query")
        .arg("--index")
        .arg(&f.index)
        .arg("--image")
        .arg(&f.image)
        .arg("--embedding")
        .arg(&f.embeddings)
        .arg("--mock-script")
        .arg(&script));
    assert_eq!(code, 4, "{stdout}{stderr}");
    assert!(
        stdout.contains("somewhere in western europe"),
        "stdout: {stdout}"
    );
    assert!(stderr.contains("no coordinate"), "stderr: {stderr}");
}

/// Lines shaped exactly like the prompt's reference coordinates: two
/// six-decimal numbers joined by a comma.
fn coordinate_lines(text: &str) -> usize {
    text.lines()
        .filter(|line| {
            let parts: Vec<&str> = line.trim().split(", ").collect();
            parts.len() == 2
                && parts.iter().all(|p| {
                    p.parse::<f64>().is_ok()
                        && p.split('.').nth(1).is_some_and(|frac| frac.len() == 6)
                })
        })
        .count()
}

#[test]
fn query_prompt_carries_both_candidate_blocks() {
    let f = fixture(23);
    let (code, stdout, stderr) = run(georag()
        .arg("--k-similar")
        .arg("16")
        .arg("--k-dissimilar")
        .arg("16")
        .arg("query")
        .arg("--index")
        .arg(&f.index)
        .arg("--image")
        .arg(&f.image)
        .arg("--embedding")
        .arg(&f.embeddings)
        .arg("--show-prompt")
        .arg("--verbose")
        .arg("--mock-echo-nearest"));
    assert_eq!(code, 0, "{stdout}{stderr}");
    let start = stdout.find("--- prompt ---").expect("prompt marker");
    let end = stdout.find("--- end prompt ---").expect("end marker");
    let prompt = &stdout[start..end];
    assert_eq!(
        coordinate_lines(prompt),
        32,
        "expected 16 similar + 16 dissimilar lines in {prompt}"
    );
    assert!(stdout.contains("similar:"), "stdout: {stdout}");
    assert!(stdout.contains("dissimilar:"), "stdout: {stdout}");
    assert!(stdout.contains("  16. id="), "stdout: {stdout}");
}

/// Four replies at ~0.5, ~10, ~100, and ~1000 km from the shared (0, 0)
/// ground truth: one per accuracy band below continent, giving the row
/// 25.0 / 50.0 / 75.0 / 75.0 / 100.0.
const BANDED_REPLIES: &str = r#"[
  {"text": "0.000000, 0.004491"},
  {"text": "0.000000, 0.089831"},
  {"text": "0.000000, 0.898301"},
  {"text": "0.000000, 8.983009"}
]"#;

#[test]
fn evaluate_writes_reports_and_outcomes() {
    let f = fixture(24);
    let script = write_script(&f.root, "banded.json", BANDED_REPLIES);
    let (code, stdout, stderr) = run(georag()
        .arg("--dataset")
        .arg("eval-fixture")
        .arg("--concurrency")
        .arg("1")
        .arg("evaluate")
        .arg("--manifest")
        .arg(&f.manifest)
        .arg("--index")
        .arg(&f.index)
        .arg("--embeddings")
        .arg(&f.embeddings)
        .arg("--out-dir")
        .arg(&f.out_dir)
        .arg("--format")
        .arg("markdown,csv,json")
        .arg("--mock-script")
        .arg(&script));
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(
        stdout.contains("| eval-fixture | 25.0 | 50.0 | 75.0 | 75.0 | 100.0 |"),
        "stdout: {stdout}"
    );
    assert!(stdout.contains("outcomes:"), "stdout: {stdout}");

    let outcomes = std::fs::read_to_string(f.out_dir.join("outcomes.jsonl")).unwrap();
    assert_eq!(outcomes.lines().count(), 4);
    let csv = std::fs::read_to_string(f.out_dir.join("report.csv")).unwrap();
    assert!(
        csv.contains("eval-fixture,4,0,0,0,25.0,50.0,75.0,75.0,100.0"),
        "csv: {csv}"
    );
    assert!(f.out_dir.join("report.md").exists());
    let json = f.out_dir.join("report.json");
    assert!(json.exists());

    // The report subcommand re-renders the JSON report byte-for-byte into
    // what evaluate wrote for the same format.
    let (code, rendered, stderr) = run(georag()
        .arg("report")
        .arg("--input")
        .arg(&json)
        .arg("--format")
        .arg("csv"));
    assert_eq!(code, 0, "{stderr}");
    assert_eq!(rendered, csv);
}

#[test]
fn evaluate_counts_a_missing_image_without_calling_the_model() {
    let f = fixture(25);
    std::fs::remove_file(f.root.join("img-2.jpg")).unwrap();
    let (code, stdout, stderr) = run(georag()
        .arg("evaluate")
        .arg("--manifest")
        .arg(&f.manifest)
        .arg("--index")
        .arg(&f.index)
        .arg("--embeddings")
        .arg(&f.embeddings)
        .arg("--out-dir")
        .arg(&f.out_dir)
        .arg("--mock-echo-nearest"));
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(
        stdout.contains("scored 3, missing 1, errored 0"),
        "stdout: {stdout}"
    );
    let outcomes = std::fs::read_to_string(f.out_dir.join("outcomes.jsonl")).unwrap();
    assert_eq!(outcomes.lines().count(), 4);
    assert_eq!(outcomes.matches("\"missing\"").count(), 1);
}

#[test]
fn healthcheck_reports_the_served_model() {
    let f = fixture(26);
    let script = write_script(&f.root, "pong.json", r#"[{"text": "pong"}]"#);
    let (code, stdout, stderr) = run(georag()
        .arg("healthcheck")
        .arg("--mock-script")
        .arg(&script));
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(stdout.contains("ok model=mock-model"), "stdout: {stdout}");
}

#[test]
fn healthcheck_against_the_wrong_model_is_a_transport_error() {
    let f = fixture(27);
    let script = write_script(
        &f.root,
        "strict.json",
        r#"{"expect_model": "other-model", "entries": [{"text": "pong"}]}"#,
    );
    let (code, _, stderr) = run(georag()
        .arg("healthcheck")
        .arg("--mock-script")
        .arg(&script));
    assert_eq!(code, 3, "stderr: {stderr}");
    assert!(stderr.contains("error:"), "stderr: {stderr}");
}

#[test]
fn flags_override_the_config_file() {
    let f = fixture(28);
    let config = f.root.join("run.conf");
    std::fs::write(&config, "dataset=from-file\nconcurrency=1\n").unwrap();

    let evaluate = |extra: &[&str]| {
        let mut cmd = georag();
        cmd.arg("--config").arg(&config);
        for arg in extra {
            cmd.arg(arg);
        }
        cmd.arg("evaluate")
            .arg("--manifest")
            .arg(&f.manifest)
            .arg("--index")
            .arg(&f.index)
            .arg("--embeddings")
            .arg(&f.embeddings)
            .arg("--out-dir")
            .arg(&f.out_dir)
            .arg("--mock-echo-nearest");
        run(&mut cmd)
    };

    let (code, stdout, stderr) = evaluate(&[]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(stdout.contains("## Accuracy: from-file"), "stdout: {stdout}");

    let (code, stdout, stderr) = evaluate(&["--dataset", "from-flag"]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert!(stdout.contains("## Accuracy: from-flag"), "stdout: {stdout}");
}

#[test]
fn every_config_key_has_exactly_its_long_flag() {
    let (code, stdout, _) = run(georag().arg("--help"));
    assert_eq!(code, 0);
    for key in CONFIG_KEYS {
        let flag = format!("--{}", flag_for_key(key));
        assert!(
            stdout.contains(&flag),
            "help text is missing {flag} for config key {key}"
        );
    }
}

#[test]
fn bad_usage_exits_1() {
    let (code, _, stderr) = run(georag()
        .arg("--definitely-not-a-flag")
        .arg("healthcheck")
        .arg("--mock-echo-nearest"));
    assert_eq!(code, 1, "stderr: {stderr}");

    let (code, _, stderr) = run(georag()
        .arg("--temperature")
        .arg("9000")
        .arg("healthcheck")
        .arg("--mock-echo-nearest"));
    assert_eq!(code, 1, "stderr: {stderr}");
    assert!(stderr.contains("error:"), "stderr: {stderr}");

    let f = fixture(29);
    let script = write_script(&f.root, "pong.json", r#"[{"text": "pong"}]"#);
    let (code, _, _) = run(georag()
        .arg("healthcheck")
        .arg("--mock-script")
        .arg(&script)
        .arg("--mock-echo-nearest"));
    assert_eq!(code, 1, "conflicting mock flags should be a usage error");
}
