use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcel::data::{gen_blobs, split, BlobSpec};
use serde_json::Value;
use tempfile::TempDir;

fn mcel(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mcel"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("experiment.ini");
    fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &str = "[train]\nhidden = 8\nepochs = 10\nlearning_rate = 0.05\nmomentum = 0.5\n";

/// Six classes in three close pairs around a circle of radius 8.
fn paired_centers() -> String {
    let mut centers = Vec::new();
    for p in 0..3 {
        let angle = p as f64 * 2.0 * std::f64::consts::PI / 3.0;
        let (cx, cy) = (8.0 * angle.cos(), 8.0 * angle.sin());
        let (tx, ty) = (-angle.sin(), angle.cos());
        for s in [-1.0, 1.0] {
            centers.push(format!("{:?},{:?}", cx + s * tx, cy + s * ty));
        }
    }
    centers.join("; ")
}

#[test]
fn configuration_and_usage_errors_exit_with_status_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cases: [(&str, &[&str]); 4] = [
        ("[train]\nepochs = 3\nbogus = 1\n", &["train", "--blobs", "3,20,2,1"]),
        ("[loss]\nvariant = mcel\nepsilon = 0.2\n", &["train", "--blobs", "3,20,2,1"]),
        ("[loss]\nvariant = mcel\nepsilon = 0.5\n", &["train", "--blobs", "3,20,2,1"]),
        ("[train]\nepochs = 3\n", &["train"]),
    ];
    for (text, args) in cases {
        let c = config(&dir, text);
        let o = mcel(args, Some(&c), &out);
        assert_eq!(o.status.code(), Some(1), "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let missing = dir.path().join("absent.txt");
    let c = config(&dir, &format!("[loss]\nvariant = mcel\nepsilon = 0.2\nsimilarity = {}\n", missing.display()));
    assert_eq!(mcel(&["train", "--blobs", "3,20,2,1"], Some(&c), &out).status.code(), Some(1));
    assert_eq!(mcel(&["gradcheck", "--k", "1"], None, &out).status.code(), Some(1));
    assert_eq!(mcel(&["no-such-command"], None, &out).status.code(), Some(1));
}

#[test]
fn divergence_exits_with_status_two() {
    let dir = TempDir::new().unwrap();
    let c = config(&dir, "[train]\nlearning_rate = 1e300\nepochs = 3\n");
    let o = mcel(&["train", "--blobs", "3,30,2,1"], Some(&c), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
}

#[test]
fn two_class_similarity_is_forced() {
    let dir = TempDir::new().unwrap();
    let o = mcel(&["similarity", "--blobs", "2,30,3,1"], None, dir.path());
    assert_ok(&o);
    let a = mcel::lda::load_similarity(&dir.path().join("similarity.txt")).unwrap();
    assert_eq!(a.as_matrix().to_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    let heat = fs::read_to_string(dir.path().join("heatmap.csv")).unwrap();
    assert_eq!(heat.lines().count(), 5);
    assert!(String::from_utf8_lossy(&o.stdout).contains("asymmetry"));

    let again = TempDir::new().unwrap();
    assert_ok(&mcel(&["similarity", "--blobs", "2,30,3,1"], None, again.path()));
    assert_eq!(
        json(&dir.path().join("similarity.json"))["sha256"],
        json(&again.path().join("similarity.json"))["sha256"]
    );
}

#[test]
fn grouped_classes_show_block_structure() {
    let dir = TempDir::new().unwrap();
    let centers: Vec<String> = (0..10)
        .map(|c| {
            let mut v = [0.0; 10];
            v[0] = if c < 5 { -20.0 } else { 20.0 };
            v[1 + c % 5] = 2.0;
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        })
        .collect();
    let c = config(&dir, &format!("[data]\ncenters = {}\n", centers.join("; ")));
    assert_ok(&mcel(&["similarity", "--blobs", "10,60,10,0.5"], Some(&c), dir.path()));
    let a = mcel::lda::load_similarity(&dir.path().join("similarity.txt")).unwrap();
    for i in 0..10 {
        let within = (0..10).filter(|&j| j != i && j / 5 == i / 5).map(|j| a.get(i, j)).fold(f64::INFINITY, f64::min);
        let across = (0..10).filter(|&j| j / 5 != i / 5).map(|j| a.get(i, j)).fold(0.0, f64::max);
        assert!(within > across, "row {i}");
    }
}

#[test]
fn train_writes_stream_report_and_checkpoint() {
    let dir = TempDir::new().unwrap();
    let c = config(&dir, &format!("{SMALL}[loss]\nvariant = mcel\nepsilon = 0.2\nsimilarity = lda\n"));
    let out = dir.path().join("out");
    assert_ok(&mcel(&["train", "--blobs", "4,40,2,1"], Some(&c), &out));
    let report = json(&out.join("report.json"));
    let epochs = report["epochs"].as_array().unwrap();
    assert_eq!(epochs.len(), 10);
    let stream = fs::read_to_string(out.join("epochs.jsonl")).unwrap();
    assert_eq!(stream.lines().count(), 10);
    let best = epochs.iter().map(|e| e["val_accuracy"].as_f64().unwrap()).fold(0.0, f64::max);
    assert_eq!(report["best_val_accuracy"].as_f64().unwrap(), best);
    let best_epoch = report["best_epoch"].as_u64().unwrap() as usize;
    assert_eq!(epochs[best_epoch]["val_accuracy"].as_f64().unwrap(), best);
    assert_eq!(report["test"]["k_prime"], 4);
    assert_eq!(report["similarity_sha256"].as_str().unwrap().len(), 64);
    assert!(json(&out.join("meta.json"))["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    mcel::MlpModel::load(&out.join("model.bin")).unwrap();
}

#[test]
fn zero_epsilon_run_matches_cross_entropy_run() {
    let dir = TempDir::new().unwrap();
    let runs: Vec<Value> = ["[loss]\nvariant = ce\n", "[loss]\nvariant = mcel\nepsilon = 0\nsimilarity = lda\n"]
        .iter()
        .enumerate()
        .map(|(i, loss)| {
            let c = config(&dir, &format!("{SMALL}{loss}"));
            let out = dir.path().join(format!("run{i}"));
            assert_ok(&mcel(&["train", "--blobs", "3,40,2,1", "--seed", "4"], Some(&c), &out));
            json(&out.join("report.json"))
        })
        .collect();
    for key in ["epochs", "best_epoch", "best_val_accuracy", "test"] {
        assert_eq!(runs[0][key], runs[1][key], "{key}");
    }
    assert_eq!(fs::read(dir.path().join("run0/model.bin")).unwrap(), fs::read(dir.path().join("run1/model.bin")).unwrap());
}

#[test]
fn soft_per_class_run_reports_weights_inside_the_open_interval() {
    let dir = TempDir::new().unwrap();
    let c = config(
        &dir,
        &format!("{SMALL}[loss]\nvariant = sg-mcel\nepsilons = 0.1, 0.2, 0.3\nsoft = true\nsimilarity = lda\n"),
    );
    let out = dir.path().join("out");
    assert_ok(&mcel(&["train", "--blobs", "3,40,2,1"], Some(&c), &out));
    let eps = json(&out.join("report.json"))["learned_epsilons"].clone();
    let eps: Vec<f64> = eps.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(eps.len(), 3);
    assert!(eps.iter().all(|e| *e > 0.0 && *e < 0.5), "{eps:?}");
}

#[test]
fn soft_mixture_run_reports_entries_inside_the_unit_interval() {
    let dir = TempDir::new().unwrap();
    let c = config(&dir, &format!("{SMALL}[loss]\nvariant = gmcel\nepsilon = 0.2\nsoft = true\nsimilarity = lda\n"));
    let out = dir.path().join("out");
    assert_ok(&mcel(&["train", "--blobs", "3,40,2,1"], Some(&c), &out));
    let rows = json(&out.join("report.json"))["learned_mixture"].clone();
    for row in rows.as_array().unwrap() {
        assert!(row.as_array().unwrap().iter().all(|v| (0.0..1.0).contains(&v.as_f64().unwrap())));
    }
}

#[test]
fn similarity_file_feeds_training() {
    let dir = TempDir::new().unwrap();
    assert_ok(&mcel(&["similarity", "--blobs", "3,40,2,1"], None, dir.path()));
    let file = dir.path().join("similarity.txt");
    let c = config(&dir, &format!("{SMALL}[loss]\nvariant = mcel\nepsilon = 0.3\nsimilarity = {}\n", file.display()));
    let out = dir.path().join("out");
    assert_ok(&mcel(&["train", "--blobs", "3,40,2,1"], Some(&c), &out));
    let sha = json(&dir.path().join("similarity.json"))["sha256"].clone();
    assert_eq!(json(&out.join("report.json"))["similarity_sha256"], sha);
}

#[test]
fn csv_data_source_trains() {
    let dir = TempDir::new().unwrap();
    let data = gen_blobs(&BlobSpec {
        num_classes: 3,
        per_class: 30,
        dim: 2,
        centers: None,
        spread: 1.0,
        seed: 2,
    })
    .unwrap();
    let csv = dir.path().join("data.csv");
    data.save_csv(&csv).unwrap();
    let c = config(&dir, SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_mcel"))
        .args(["train", "--data-csv"])
        .arg(&csv)
        .args(["--label-col", "label", "--config"])
        .arg(&c)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_ok(&o);
    assert_eq!(json(&dir.path().join("out/report.json"))["num_classes"], 3);
}

#[test]
fn default_grid_evaluates_six_points_and_selects_with_tie_break() {
    let dir = TempDir::new().unwrap();
    let c = config(&dir, &format!("{SMALL}[loss]\nsimilarity = lda\n[grid]\nseeds = 0, 1\n"));
    assert_ok(&mcel(&["gridsearch", "--blobs", "3,30,2,1.5"], Some(&c), dir.path()));
    let grid = json(&dir.path().join("grid.json"));
    let points = grid["points"].as_array().unwrap();
    let eps: Vec<f64> = points.iter().map(|p| p["epsilon"].as_f64().unwrap()).collect();
    assert_eq!(eps, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.45]);
    assert_eq!(grid["runs"].as_array().unwrap().len(), 12);
    assert!(grid["note"].as_str().unwrap().contains("0.45"));
    let best = points.iter().map(|p| p["mean_val_accuracy"].as_f64().unwrap()).fold(0.0, f64::max);
    let first = points.iter().find(|p| p["mean_val_accuracy"].as_f64().unwrap() == best).unwrap();
    assert_eq!(grid["selected_epsilon"], first["epsilon"]);
    let csv = fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn single_point_grid_matches_train() {
    let dir = TempDir::new().unwrap();
    let c = config(&dir, &format!("{SMALL}[loss]\nvariant = mcel\nepsilon = 0.2\nsimilarity = lda\n"));
    let grid_out = dir.path().join("grid");
    assert_ok(&mcel(&["gridsearch", "--blobs", "3,30,2,1.5", "--epsilons", "0.2", "--seeds", "0"], Some(&c), &grid_out));
    let train_out = dir.path().join("train");
    assert_ok(&mcel(&["train", "--blobs", "3,30,2,1.5"], Some(&c), &train_out));
    let run = &json(&grid_out.join("grid.json"))["runs"][0];
    let report = json(&train_out.join("report.json"));
    assert_eq!(run["val_accuracy"], report["best_val_accuracy"]);
    assert_eq!(run["test_accuracy"], report["test"]["top1"]);
}

fn noise_config(extra: &str) -> String {
    format!(
        "[data]\ncenters = {}\n[train]\nhidden = 16\nepochs = 60\nlearning_rate = 0.05\nmomentum = 0.9\n\
         weight_decay = 1e-4\nbatch_size = 32\n[noise]\npairs = 0-1, 2-3, 4-5\n{extra}",
        paired_centers()
    )
}

#[test]
fn noise_masks_only_touch_training_rows() {
    let dir = TempDir::new().unwrap();
    let c = config(&dir, &noise_config("fractions = 0.3\nepsilons = 0.2\nseeds = 0, 1\n"));
    assert_ok(&mcel(&["noise-exp", "--blobs", "6,40,2,1"], Some(&c), dir.path()));
    let data = gen_blobs(&BlobSpec {
        num_classes: 6,
        per_class: 40,
        dim: 2,
        centers: Some(
            paired_centers()
                .split("; ")
                .map(|c| c.split(',').map(|v| v.parse().unwrap()).collect())
                .collect(),
        ),
        spread: 1.0,
        seed: 0,
    })
    .unwrap();
    let train_rows = split(&data, [0.6, 0.2, 0.2], 0).unwrap().train_rows;
    for seed in 0..2 {
        let mask = fs::read_to_string(dir.path().join(format!("masks/mask_f0.3_s{seed}.txt"))).unwrap();
        let rows: Vec<usize> = mask.lines().map(|l| l.parse().unwrap()).collect();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| train_rows.contains(r)));
    }
    let csv = fs::read_to_string(dir.path().join("noise.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}

#[test]
fn full_pair_swap_collapses_paired_accuracy() {
    let dir = TempDir::new().unwrap();
    let c = config(
        &dir,
        "[data]\ncenters = -6,-6; 6,-6; -6,6; 6,6\n[train]\nhidden = 8\nepochs = 40\nlearning_rate = 0.05\nmomentum = 0.9\n\
         [noise]\npairs = 0-1, 2-3\nfractions = 1\nepsilons = 0.2\nseeds = 0\n",
    );
    assert_ok(&mcel(&["noise-exp", "--blobs", "4,60,2,1"], Some(&c), dir.path()));
    let report = json(&dir.path().join("noise.json"));
    for run in report["runs"].as_array().unwrap() {
        let paired = run["paired_test_accuracy"].as_f64().unwrap();
        assert!(paired < 0.25 + 0.1, "{} {paired}", run["variant"]);
    }
}

#[test]
fn noisy_grid_searches_mostly_pick_positive_epsilon() {
    let dir = TempDir::new().unwrap();
    let c = config(&dir, &noise_config("train_fraction = 0.3\n[loss]\nsimilarity = lda\n[grid]\nseeds = 0, 1, 2\n"));
    let mut positive = 0;
    for seed in 0..5 {
        let out = dir.path().join(format!("rep{seed}"));
        assert_ok(&mcel(&["gridsearch", "--blobs", "6,100,2,1", "--seed", &seed.to_string()], Some(&c), &out));
        positive += usize::from(json(&out.join("grid.json"))["selected_epsilon"].as_f64().unwrap() > 0.0);
    }
    assert!(positive >= 3, "{positive}/5");
}

#[test]
fn gradcheck_passes_minimal_case_and_flags_corruption() {
    let dir = TempDir::new().unwrap();
    let ok = mcel(&["gradcheck", "--k", "2", "--trials", "50"], None, dir.path());
    assert_ok(&ok);
    let report = json(&dir.path().join("gradcheck.json"));
    assert_eq!(report["checks"].as_array().unwrap().len(), 14);
    assert_eq!(String::from_utf8_lossy(&ok.stdout).lines().count(), 14);
    let bad = mcel(&["gradcheck", "--k", "3", "--trials", "5", "--corrupt"], None, dir.path());
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}
