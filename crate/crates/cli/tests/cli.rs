use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample_40x10.csv")
}

fn sample_labels() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample_40x10_labels.txt")
}

fn dea(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dea"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dea(args);
    assert!(
        out.status.success(),
        "dea {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fit_sample(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let model = dir.join(name);
    let input = sample();
    let mut args = vec!["fit", "--input", s(&input), "-p", "4", "--set", "max_epochs=500", "--out-model", s(&model)];
    args.extend_from_slice(extra);
    ok(&args);
    model
}

#[test]
fn fit_writes_model_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_sample(dir.path(), "model.json", &[]);
    assert!(model.exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["summary"]["u"], 20);
    assert_eq!(manifest["summary"]["q"], 16);
    assert_eq!(manifest["config"]["max_epochs"], 500);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["stages"].as_array().unwrap().iter().any(|s| s["name"] == "train"));
}

#[test]
fn same_seed_gives_identical_model_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = fit_sample(dir.path(), "a.json", &["--seed", "3"]);
    let b = fit_sample(dir.path(), "b.json", &["--seed", "3", "--threads", "1"]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let missing = dea(&["fit", "--input", "no/such/file.csv", "--out-model", s(&out)]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&missing.stderr).is_empty());

    let bad_key = dea(&["fit", "--input", s(&sample()), "--set", "colour=1", "--out-model", s(&out)]);
    assert_eq!(bad_key.status.code(), Some(2));
    let bad_p = dea(&["fit", "--input", s(&sample()), "-p", "16", "--out-model", s(&out)]);
    assert_eq!(bad_p.status.code(), Some(2));
    assert_eq!(dea(&["fit", "--bogus"]).status.code(), Some(2));

    let broken = dir.path().join("broken.csv");
    std::fs::write(&broken, "1,2,3\n4,NaN,6\n7,8,9\n").unwrap();
    let nonfinite = dea(&["fit", "--input", s(&broken), "--out-model", s(&out)]);
    assert_eq!(nonfinite.status.code(), Some(3));

    let divergent = dea(&[
        "fit", "--input", s(&sample()), "-p", "4", "--set", "learning_rate=1e308", "--set", "max_epochs=5",
        "--out-model", s(&out),
    ]);
    assert_eq!(divergent.status.code(), Some(4), "{}", String::from_utf8_lossy(&divergent.stderr));
    assert!(String::from_utf8_lossy(&divergent.stderr).contains("train"));
}

#[test]
fn transform_rank_select_chain() {
    let dir = tempfile::tempdir().unwrap();
    let model = fit_sample(dir.path(), "model.json", &[]);
    let proj = dir.path().join("proj.csv");
    ok(&["transform", "--model", s(&model), "--input", s(&sample()), "--out", s(&proj)]);
    let text = std::fs::read_to_string(&proj).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("component_0,"));
    assert_eq!(lines[0].split(',').count(), 11);

    let ranks = dir.path().join("rank.csv");
    ok(&["rank", "--model", s(&model), "--top", "30", "--out", s(&ranks)]);
    let text = std::fs::read_to_string(&ranks).unwrap();
    assert_eq!(text.lines().count(), 31);
    assert!(text.lines().nth(1).unwrap().contains(",1.0000000000000000e0,"));

    let picked = dir.path().join("picked.tsv");
    ok(&["select", "--model", s(&model), "--input", s(&sample()), "--top", "7", "--out", s(&picked)]);
    let text = std::fs::read_to_string(&picked).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert_eq!(text.lines().next().unwrap().split('\t').count(), 10);
}

#[test]
fn export_writes_one_image_per_component() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("img.csv");
    ok(&["generate", "--features", "400", "--per-class", "4", "--informative", "20", "--out", s(&data)]);
    let model = dir.path().join("model.json");
    ok(&["fit", "--input", s(&data), "-p", "5", "--set", "max_epochs=50", "--out-model", s(&model)]);
    let images = dir.path().join("images");
    ok(&["export", "--model", s(&model), "--image-spec", "20x20x1", "--out-dir", s(&images)]);
    let pngs = std::fs::read_dir(&images)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 5);
    assert!(images.join("manifest.json").exists());

    let kept = dir.path().join("kept");
    ok(&["export", "--model", s(&model), "--image-spec", "20x20", "--out-dir", s(&kept), "--drop", "0,3"]);
    assert!(kept.join("component_001.png").exists() && !kept.join("component_003.png").exists());
    let wrong = dea(&["export", "--model", s(&model), "--image-spec", "10x10", "--out-dir", s(&kept)]);
    assert_eq!(wrong.status.code(), Some(3));
}

#[test]
fn baselines_and_classification() {
    let dir = tempfile::tempdir().unwrap();
    let pca = dir.path().join("pca.json");
    ok(&["baseline", "--method", "pca", "--input", s(&sample()), "-p", "3", "--out-model", s(&pca)]);
    let nnmf = dir.path().join("nnmf.json");
    ok(&[
        "baseline", "--method", "nnmf", "--input", s(&sample()), "--normalize", "minmax", "-p", "3", "--iterations", "50",
        "--out-model", s(&nnmf),
    ]);
    let preds = dir.path().join("pred.txt");
    let out = ok(&[
        "classify", "--model", s(&pca), "--train", s(&sample()), "--train-labels", s(&sample_labels()), "--test",
        s(&sample()), "--test-labels", s(&sample_labels()), "--out", s(&preds),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("accuracy"));
    assert_eq!(std::fs::read_to_string(&preds).unwrap().lines().count(), 10);
    let proj = dir.path().join("nnmf_proj.csv");
    ok(&["transform", "--model", s(&nnmf), "--input", s(&sample()), "--normalize", "minmax", "--out", s(&proj)]);
    assert_eq!(std::fs::read_to_string(&proj).unwrap().lines().count(), 3);
}

#[test]
fn bench_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("acc.csv");
    ok(&[
        "bench", "--classes", "3", "--per-class", "6", "--features", "60", "--informative", "9",
        "--bench-components", "2,3", "--fractions", "0.3,0.5,0.7", "--seeds", "2", "--set", "max_epochs=30",
        "--set", "cluster_restarts=1", "--out", s(&csv),
    ]);
    let rows = std::fs::read_to_string(&csv).unwrap().lines().count() - 1;
    assert_eq!(rows, 3 * 2 * 3 * 2);
    let summary = std::fs::read_to_string(dir.path().join("acc_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 2 * 3);
}

#[test]
fn help_documents_config_keys() {
    let out = ok(&["--help"]);
    let help = String::from_utf8_lossy(&out.stdout);
    for key in ["q_fraction", "sigma_grid", "lambda", "beta", "rho", "max_epochs", "input_scale"] {
        assert!(help.contains(key), "{key}");
    }
    assert!(help.contains("[default: 0.001]"));
    let conf = ok(&["config"]);
    assert!(String::from_utf8_lossy(&conf.stdout).contains("rho = 0.05"));
}
