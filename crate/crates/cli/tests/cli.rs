use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sam_core::detector::ExternalScores;
use sam_core::sam::load_model;
use sam_core::{generate_mulcross_like, load_csv, save_csv, Dataset, GeneratorConfig};
use tempfile::TempDir;

fn sam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sam"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("spawn sam")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn exact_line(dir: &Path) -> PathBuf {
    write(dir, "line.csv", "x1,x2\n0,1\n1,3\n2,5\n")
}

#[test]
fn fit_exact_line_matches_library_example() {
    let dir = TempDir::new().unwrap();
    let input = exact_line(dir.path());
    let model = dir.path().join("m.json");
    let o = sam(&["fit", "--input", s(&input), "--output-model", s(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("x1: ols converged=true degenerate=false"));

    let m = load_model(&model).unwrap();
    let b = m.coefficients();
    assert_eq!(b[(0, 0)], 0.0);
    assert_eq!(b[(1, 1)], 0.0);
    assert!((b[(0, 1)] - 0.5).abs() < 1e-12);
    assert!((b[(1, 0)] - 2.0).abs() < 1e-12);
    assert!((m.intercepts()[0] + 0.5).abs() < 1e-12);
    assert!((m.intercepts()[1] - 1.0).abs() < 1e-12);
    assert_eq!(m.created_unix_seconds, 1_700_000_000);
}

#[test]
fn fit_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("g.csv");
    assert!(sam(&["gen", "--n", "500", "--seed", "4", "--out", s(&data)])
        .status
        .success());
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = sam(&[
            "fit",
            "--input",
            s(&data),
            "--output-model",
            s(out),
            "--ransac",
            "--seed",
            "9",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn ransac_on_clean_data_matches_ols() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("a,b,c\n");
    for i in 0..40 {
        let (a, b) = (i as f64 * 0.25, ((i * 7) % 11) as f64);
        text.push_str(&format!("{a},{b},{}\n", 1.5 * a - 0.5 * b + 2.0));
    }
    let input = write(dir.path(), "plane.csv", &text);
    let (ols, ransac) = (dir.path().join("ols.json"), dir.path().join("ransac.json"));
    assert!(sam(&["fit", "--input", s(&input), "--output-model", s(&ols)])
        .status
        .success());
    let o = sam(&["fit", "--input", s(&input), "--output-model", s(&ransac), "--ransac"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("ransac converged=true"));
    let (p, q) = (load_model(&ols).unwrap(), load_model(&ransac).unwrap());
    for (x, y) in p.coefficients().iter().zip(q.coefficients().iter()) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
    for (x, y) in p.intercepts().iter().zip(q.intercepts()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn fit_missing_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = sam(&[
        "fit",
        "--input",
        "/no/such/file.csv",
        "--output-model",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/file.csv"));
}

#[test]
fn fit_drops_label_column() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "l.csv", "x1,label,x2\n0,0,1\n1,0,3\n2,1,5\n3,0,7\n");
    let model = dir.path().join("m.json");
    assert!(sam(&["fit", "--input", s(&input), "--output-model", s(&model)])
        .status
        .success());
    assert_eq!(load_model(&model).unwrap().feature_names(), ["x1", "x2"]);

    let input = write(dir.path(), "k.csv", "x1,cls,x2\n0,n,1\n1,n,3\n2,y,5\n3,n,7\n");
    let o = sam(&[
        "fit",
        "--input",
        s(&input),
        "--output-model",
        s(&model),
        "--label-col",
        "cls",
        "--anomaly-value",
        "y",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(load_model(&model).unwrap().d(), 2);
}

fn fitted_line(dir: &Path) -> PathBuf {
    let model = dir.join("m.json");
    let input = exact_line(dir);
    assert!(sam(&["fit", "--input", s(&input), "--output-model", s(&model)])
        .status
        .success());
    model
}

#[test]
fn score_on_model_row_is_zero_and_normal() {
    let dir = TempDir::new().unwrap();
    let model = fitted_line(dir.path());
    let q = write(dir.path(), "q.csv", "x1,x2\n1,3\n1,5\n0,1\n");
    let o = sam(&[
        "score",
        "--model",
        s(&model),
        "--input",
        s(&q),
        "--threshold-percentile",
        "50",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "score,label");
    let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert!(first[0].abs() < 1e-12);
    assert_eq!(first[1], 1.0);
    assert!(lines[2].ends_with(",-1"));
    assert!(lines[2].starts_with("3"));
}

#[test]
fn score_attribution_lists_second_feature_first() {
    let dir = TempDir::new().unwrap();
    let model = fitted_line(dir.path());
    let q = write(dir.path(), "q.csv", "x1,x2\n1,5\n");
    let o = sam(&["score", "--model", s(&model), "--input", s(&q), "--attribute-top", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "x2");
    assert!((row[2].parse::<f64>().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn score_aligns_columns_by_name() {
    let dir = TempDir::new().unwrap();
    let model = fitted_line(dir.path());
    let q = write(dir.path(), "q.csv", "x2,x1\n5,1\n");
    let o = sam(&["score", "--model", s(&model), "--input", s(&q)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().nth(1).unwrap(), "3");
}

#[test]
fn score_normalize_flags() {
    let dir = TempDir::new().unwrap();
    let model = fitted_line(dir.path());
    let q = write(dir.path(), "q.csv", "x1,x2\n1,5\n");
    let norm = stdout(&sam(&["score", "--model", s(&model), "--input", s(&q), "--normalize"]));
    let v: f64 = norm.lines().nth(1).unwrap().parse().unwrap();
    assert!((v - 1.4).abs() < 1e-8);
    let cf = stdout(&sam(&[
        "score",
        "--model",
        s(&model),
        "--input",
        s(&q),
        "--normalize",
        "--denominator",
        "counterfactual",
    ]));
    // |1−2|/2 + |5−3|/3
    let v: f64 = cf.lines().nth(1).unwrap().parse().unwrap();
    assert!((v - (0.5 + 2.0 / 3.0)).abs() < 1e-8);
    let o = sam(&["score", "--model", s(&model), "--input", s(&q), "--normalize", "--raw"]);
    assert_eq!(o.status.code(), Some(1));
    let o = sam(&["score", "--model", s(&model), "--input", s(&q), "--epsilon", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn score_dimension_mismatch_exits_2_with_difference() {
    let dir = TempDir::new().unwrap();
    let train = write(dir.path(), "t.csv", "a,b,c\n1,2,3\n2,1,4\n3,5,1\n4,4,4\n5,0,2\n");
    let model = dir.path().join("m.json");
    assert!(sam(&["fit", "--input", s(&train), "--output-model", s(&model)])
        .status
        .success());
    let q = write(dir.path(), "q.csv", "a,b,c,d\n1,2,3,4\n");
    let o = sam(&["score", "--model", s(&model), "--input", s(&q)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not in model [d]"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let q = write(dir.path(), "r.csv", "a,z,c\n1,2,3\n");
    let err = stderr(&sam(&["score", "--model", s(&model), "--input", s(&q)]));
    assert!(
        err.contains("missing from input [b]") && err.contains("not in model [z]"),
        "{err}"
    );
}

#[test]
fn score_rejects_corrupt_model() {
    let dir = TempDir::new().unwrap();
    let m = write(dir.path(), "m.json", "{\"format_version\": 1, ");
    let q = write(dir.path(), "q.csv", "x1,x2\n1,5\n");
    let o = sam(&["score", "--model", s(&m), "--input", s(&q)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("byte offset"));
}

#[test]
fn gen_defaults_follow_the_generator() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("g.csv");
    let o = sam(&["gen", "--out", s(&out)]);
    assert!(o.status.success());
    let ds = load_csv(&out, Some("label"), None).unwrap();
    assert_eq!((ds.n(), ds.d()), (262_144, 4));
    assert_eq!(ds.anomaly_count(), 26_214);
}

#[test]
fn gen_zero_contamination_and_bad_config() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("g.csv");
    assert!(sam(&["gen", "--n", "300", "--contamination", "0", "--out", s(&out)])
        .status
        .success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
    assert_eq!(text.lines().count(), 301);
    for bad in [["--contamination", "1.2"], ["--n", "0"], ["--shift", "-1"]] {
        let o = sam(&["gen", bad[0], bad[1], "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(1), "{bad:?}");
    }
    let o = sam(&["gen", "--kind", "gaussian", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_fit_score_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("g.csv");
    let model = dir.path().join("m.json");
    assert!(
        sam(&["gen", "--n", "2000", "--d", "5", "--seed", "3", "--out", s(&data)])
            .status
            .success()
    );
    assert!(
        sam(&["fit", "--input", s(&data), "--output-model", s(&model), "--zscore"])
            .status
            .success()
    );
    let o = sam(&[
        "score",
        "--model",
        s(&model),
        "--input",
        s(&data),
        "--threshold-percentile",
        "90",
        "--attribute-top",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(
        out.lines().next().unwrap(),
        "score,label,top1,top1_share,top2,top2_share"
    );
    assert_eq!(out.lines().count(), 2001);
    let flagged = out
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some("-1"))
        .count();
    assert_eq!(flagged, 200);
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(sam(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(sam(&["fit"]).status.code(), Some(1));
    assert_eq!(sam(&["score", "--model"]).status.code(), Some(1));
    let h = sam(&["--help"]);
    assert_eq!(h.status.code(), Some(0));
    assert!(stdout(&h).contains("bench"));
    assert_eq!(sam(&["--version"]).status.code(), Some(0));
}

fn synthetic(dir: &Path, name: &str, n: usize, seed: u64) -> (PathBuf, Dataset) {
    let ds = generate_mulcross_like(&GeneratorConfig {
        n,
        seed,
        ..Default::default()
    })
    .unwrap();
    let p = dir.join(format!("{name}.csv"));
    save_csv(&ds, &p, Some("label")).unwrap();
    (p, ds)
}

#[test]
fn bench_two_datasets_eight_models() {
    let dir = TempDir::new().unwrap();
    let (a, da) = synthetic(dir.path(), "alpha", 300, 1);
    let (b, db) = synthetic(dir.path(), "beta", 250, 2);
    // precomputed scores for every row of both files: distance from the origin
    let ext = dir.path().join("ext.csv");
    let mut text = String::from("fingerprint,score\n");
    for ds in [&da, &db] {
        let scores: Vec<f64> = (0..ds.n()).map(|i| ds.row(i).iter().map(|v| v * v).sum()).collect();
        let mut buf = Vec::new();
        ExternalScores::write(ds, &scores, &mut buf).unwrap();
        text.push_str(String::from_utf8(buf).unwrap().split_once('\n').unwrap().1);
    }
    fs::write(&ext, text).unwrap();

    let models = format!("sam++,sam+-,sam-+,sam--,iforest,lof,knn,external:radius={}", s(&ext));
    let out = dir.path().join("r.csv");
    let o = sam(&[
        "bench",
        "--dataset",
        s(&a),
        "--dataset",
        s(&b),
        "--models",
        &models,
        "--repeats",
        "10",
        "--seed",
        "5",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.contains("# repeats = 10"));
    let roc: Vec<&str> = csv.lines().filter(|l| l.contains(",roc_auc,")).collect();
    assert_eq!(roc.len(), 16);
    for line in &roc {
        let mean: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&mean), "{line}");
    }
    let md = stdout(&o);
    assert_eq!(md.lines().filter(|l| l.starts_with("| radius |")).count(), 2);
    assert!(md.contains("| model | alpha | beta | avg. rank |"));
}

#[test]
fn bench_same_seed_identical_files() {
    let dir = TempDir::new().unwrap();
    let (a, _) = synthetic(dir.path(), "mc", 400, 3);
    let run = |tag: &str| {
        let out = dir.path().join(format!("{tag}.csv"));
        let md = dir.path().join(format!("{tag}.md"));
        let o = sam(&[
            "bench",
            "--dataset",
            s(&a),
            "--models",
            "sam--,sam++,iforest,knn",
            "--repeats",
            "3",
            "--seed",
            "11",
            "--out",
            s(&out),
            "--markdown",
            s(&md),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (fs::read(out).unwrap(), fs::read(md).unwrap(), o.stdout)
    };
    assert_eq!(run("first"), run("second"));
}

#[test]
fn bench_single_model_single_row() {
    let dir = TempDir::new().unwrap();
    let (a, _) = synthetic(dir.path(), "mc", 300, 4);
    let o = sam(&[
        "bench",
        "--dataset",
        s(&a),
        "--models",
        "sam++",
        "--repeats",
        "2",
        "--metrics",
        "roc_auc",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let md = stdout(&o);
    let rows: Vec<&str> = md
        .lines()
        .filter(|l| l.starts_with("| ") && !l.starts_with("| model"))
        .collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("| sam++ |"));
    assert!(!md.contains("PR AUC"));
}

#[test]
fn bench_unlabeled_dataset_exits_2() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "u.csv", "x1,x2\n0,1\n1,3\n2,5\n3,1\n");
    let o = sam(&["bench", "--dataset", s(&input), "--models", "sam--"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no labels"));
    assert!(o.stdout.is_empty());
}

#[test]
fn bench_bad_model_or_missing_lists_exit_1() {
    let dir = TempDir::new().unwrap();
    let (a, _) = synthetic(dir.path(), "mc", 200, 5);
    assert_eq!(
        sam(&["bench", "--dataset", s(&a), "--models", "svm"]).status.code(),
        Some(1)
    );
    assert_eq!(sam(&["bench", "--dataset", s(&a)]).status.code(), Some(1));
    assert_eq!(sam(&["bench", "--models", "sam--"]).status.code(), Some(1));
}

#[test]
fn bench_from_config_file() {
    let dir = TempDir::new().unwrap();
    synthetic(dir.path(), "onfile", 300, 6);
    let cfg = write(
        dir.path(),
        "bench.toml",
        r#"
seed = 3
repeats = 2
metrics = ["pr_auc"]
models = ["sam--", "iforest"]

[[dataset]]
name = "mc"
kind = "mulcross"
n = 400
seed = 1

[[dataset]]
path = "onfile.csv"
"#,
    );
    let out = dir.path().join("r.csv");
    let o = sam(&["bench", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.contains("# seed = 3"));
    assert!(csv.contains("mc,iforest,pr_auc,"));
    assert!(csv.contains("onfile,sam--,pr_auc,"));
    assert!(!csv.contains("roc_auc,"));

    let bad = write(dir.path(), "bad.toml", "repeats = 2\nmodles = [\"sam--\"]\n");
    assert_eq!(sam(&["bench", "--config", s(&bad)]).status.code(), Some(1));
}
