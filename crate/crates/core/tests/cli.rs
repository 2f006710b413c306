use std::fs;
use std::path::Path;

use ebim_gnn::cli::run_with;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("ebimgnn").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
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
fn missing_subcommand_is_a_usage_error() {
    let (code, _, err) = run(&[]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"));
    assert_eq!(run(&["frobnicate"]).0, 1);
}

#[test]
fn reproduce_tables_is_hermetic_and_passes() {
    let (code, out, _) = run(&["reproduce-tables"]);
    assert_eq!(code, 0);
    for v in ["107480", "95806", "25030", "15254", "5640", "4676", "10.86", "39.05", "17.09", "16.22"] {
        assert!(out.contains(v), "{v} missing from\n{out}");
    }
}

#[test]
fn gen_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let (code, _, err) = run(&["--seed", "7", "--out", d.to_str().unwrap(), "gen", "--count", "2"]);
        assert_eq!(code, 0, "{err}");
    }
    let (ca, cb) = (dir_contents(&a), dir_contents(&b));
    assert_eq!(ca.len(), 5);
    assert_eq!(ca, cb);
    let labels = String::from_utf8(ca.iter().find(|(n, _)| n == "scene_0000.labels.csv").unwrap().1.clone()).unwrap();
    assert!(labels.starts_with("# ebimgnn "));
    assert!(labels.lines().next().unwrap().contains("seed=7 config="));
}

#[test]
fn pipeline_runs_from_the_shell() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let config = tmp.path().join("run.cfg");
    fs::write(&config, "# small run\nepochs = 2\nnum_layers = 1\nstate_width = 8\nedge_width = 8\nhidden_width = 8\n").unwrap();
    let cfg = config.to_str().unwrap();
    assert_eq!(run(&["--config", cfg, "--out", &p("gen"), "gen", "--count", "3"]).0, 0);
    let (code, out, _) = run(&["--config", cfg, "--out", &p("graph"), "graph", "--input", &p("gen/scene_0000.bin")]);
    assert_eq!(code, 0);
    assert!(out.contains("edges = "));
    assert!(Path::new(&p("graph/edges.csv")).exists());
    let (code, _, err) = run(&["--config", cfg, "--out", &p("train"), "train", "--input", &p("gen")]);
    assert_eq!(code, 0, "{err}");
    let loss = fs::read_to_string(p("train/loss.csv")).unwrap();
    assert_eq!(loss.lines().filter(|l| !l.starts_with('#')).count(), 3);
    let (code, _, err) = run(&[
        "--config", cfg, "--out", &p("detect"), "detect", "--input", &p("gen/scene_0001.bin"), "--model", &p("train/model.ckpt"),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(fs::read_to_string(p("detect/detections.csv")).unwrap().contains("classId,score,occlusion"));
    let (code, _, err) = run(&["--config", cfg, "--out", &p("protos"), "prototypes", "--input", &p("gen/scene_0000.labels.csv")]);
    assert_eq!(code, 0, "{err}");
    let (code, _, err) = run(&[
        "--config", cfg, "--out", &p("match"), "match", "--input", &p("gen/scene_0002.labels.csv"), "--prototypes", &p("train/prototypes.csv"),
    ]);
    assert_eq!(code, 0, "{err}");
    let (code, out, err) = run(&["--config", cfg, "--out", &p("report"), "report", "--input", &p("match/matches.csv")]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("Red. in usage (%)"));
    assert!(Path::new(&p("report/report.csv")).exists());
    assert!(!Path::new(&p("report/.lock")).exists());
}

#[test]
fn bad_inputs_are_data_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let config = tmp.path().join("bad.cfg");
    fs::write(&config, "radius = banana\n").unwrap();
    let (code, _, err) = run(&["--config", config.to_str().unwrap(), "reproduce-tables"]);
    assert_eq!(code, 2);
    assert!(err.contains("line 1"));
    fs::write(&config, "no_such_key = 1\n").unwrap();
    assert_eq!(run(&["--config", config.to_str().unwrap(), "reproduce-tables"]).0, 2);
    let missing = tmp.path().join("missing.csv");
    assert_eq!(run(&["--out", out, "prototypes", "--input", missing.to_str().unwrap()]).0, 2);
}

#[test]
fn a_held_lock_blocks_a_second_run() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join(".lock"), "1\n").unwrap();
    let (code, _, err) = run(&["--out", tmp.path().to_str().unwrap(), "gen", "--count", "1"]);
    assert_eq!(code, 2);
    assert!(err.contains(".lock"));
}
