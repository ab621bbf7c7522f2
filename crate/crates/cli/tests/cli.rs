use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcf")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = rcf(args);
    assert!(
        out.status.success(),
        "rcf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic corpus plus a small bank's features.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new(n: usize, kind: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let n = n.to_string();
        ok(&["synth", "--n", &n, "--size", "24", "--label", kind, "--seed", "3", "--out", s(&root.join("img"))]);
        ok(&["featurize", "--images", s(&root.join("img")), "--k", "64", "--out", s(&root.join("feat"))]);
        Fixture { _dir: dir, root }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn features(&self) -> String {
        s(&self.p("feat/features.mskf")).to_string()
    }

    fn labels(&self) -> String {
        s(&self.p("img/manifest.csv")).to_string()
    }
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            header.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.extension().is_none_or(|e| e != "config"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn synth_writes_corpus_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    ok(&["synth", "--seed", "1", "--n", "10", "--size", "16", "--out", s(&a)]);
    ok(&["synth", "--seed", "1", "--n", "10", "--size", "16", "--out", s(&b)]);
    ok(&["synth", "--config", s(&a.join("synth.config")), "--out", s(&c)]);

    let manifest = read_csv(&a.join("manifest.csv"));
    assert_eq!(manifest.len(), 10);
    let images = fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")).count();
    assert_eq!(images, 10);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_eq!(dir_bytes(&a), dir_bytes(&c));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = rcf(&["synth", "--n", "0", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(rcf(&["synth", "--n", "many", "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(rcf(&["train"]).status.code(), Some(2));
    assert_eq!(rcf(&["synth", "--threads", "0", "--out", s(dir.path())]).status.code(), Some(2));
    let cfg = dir.path().join("bad.config");
    fs::write(&cfg, "nosuchkey=1\n").unwrap();
    assert_eq!(rcf(&["synth", "--config", s(&cfg), "--out", s(dir.path())]).status.code(), Some(2));
}

#[test]
fn corrupt_image_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img");
    ok(&["synth", "--n", "4", "--size", "16", "--out", s(&img)]);
    let victim = fs::read_dir(&img)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "png"))
        .unwrap();
    fs::write(&victim, b"not a png at all").unwrap();
    let out = rcf(&["featurize", "--images", s(&img), "--k", "16", "--out", s(&dir.path().join("f"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(victim.file_name().unwrap().to_str().unwrap()), "{err}");
}

#[test]
fn featurize_records_bank_shape() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img");
    ok(&["synth", "--n", "6", "--size", "20", "--out", s(&img)]);
    ok(&["featurize", "--images", s(&img), "--k", "256", "--m", "6", "--out", s(&dir.path().join("a"))]);
    let bank = rcf::PatchBank::read(&dir.path().join("a/bank.mskb")).unwrap();
    assert_eq!((bank.k(), bank.m()), (256, 6));
    let table = rcf::FeatureTable::read(&dir.path().join("a/features.mskf")).unwrap();
    assert_eq!((table.n(), table.k()), (6, 256));
    assert_eq!(table.fingerprint(), bank.fingerprint());

    ok(&["featurize", "--images", s(&img), "--out", s(&dir.path().join("d"))]);
    let bank = rcf::PatchBank::read(&dir.path().join("d/bank.mskb")).unwrap();
    assert_eq!((bank.k(), bank.m(), bank.n_stored()), (8192, 3, 4096));

    // Reusing a bank reproduces the table.
    ok(&[
        "featurize",
        "--images",
        s(&img),
        "--bank",
        s(&dir.path().join("a/bank.mskb")),
        "--out",
        s(&dir.path().join("b")),
    ]);
    assert_eq!(
        fs::read(dir.path().join("a/features.mskf")).unwrap(),
        fs::read(dir.path().join("b/features.mskf")).unwrap()
    );
}

#[test]
fn missing_label_column_is_a_schema_error() {
    let fx = Fixture::new(12, "linear");
    let out = rcf(&[
        "train",
        "--features",
        &fx.features(),
        "--labels",
        &fx.labels(),
        "--label-col",
        "income",
        "--out",
        s(&fx.p("t")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("income"));
}

#[test]
fn unmatched_labels_are_listed() {
    let fx = Fixture::new(12, "linear");
    let labels = fx.p("extra.csv");
    let mut text = fs::read_to_string(fx.labels()).unwrap();
    text.push_str("0,0,30.5,-100.5,0.5\n");
    fs::write(&labels, text).unwrap();
    let out = rcf(&["train", "--features", &fx.features(), "--labels", s(&labels), "--out", s(&fx.p("t"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(30.5, -100.5)"));
}

fn r2(y: &[f64], p: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

#[test]
fn train_predict_eval_agree() {
    let fx = Fixture::new(80, "linear");
    let (f, l) = (fx.features(), fx.labels());
    ok(&["train", "--features", &f, "--labels", &l, "--out", s(&fx.p("t"))]);
    let model = fx.p("t/model.mskm");
    ok(&["predict", "--features", &f, "--model", s(&model), "--out", s(&fx.p("p"))]);
    ok(&["eval", "--features", &f, "--labels", &l, "--model", s(&model), "--out", s(&fx.p("e"))]);

    let key = |r: &BTreeMap<String, String>| (r["lat"].clone(), r["lon"].clone());
    let labels: BTreeMap<_, f64> = read_csv(&fx.p("img/manifest.csv")).iter().map(|r| (key(r), num(r, "label"))).collect();
    let preds: BTreeMap<_, f64> = read_csv(&fx.p("p/predictions.csv")).iter().map(|r| (key(r), num(r, "prediction"))).collect();
    let split = read_csv(&fx.p("t/split.csv"));
    assert_eq!(split.len(), 80);
    let (mut y, mut p) = (Vec::new(), Vec::new());
    for r in split.iter().filter(|r| r["holdout"] == "0") {
        y.push(labels[&key(r)]);
        p.push(preds[&key(r)]);
    }
    assert_eq!(y.len(), 64);
    let metrics: BTreeMap<String, f64> = read_csv(&fx.p("e/metrics.csv")).iter().map(|r| (r["metric"].clone(), num(r, "value"))).collect();
    assert!((r2(&y, &p) - metrics["train_r2"]).abs() < 1e-10);
    assert_eq!(metrics["n_train"], 64.0);
    assert_eq!(metrics["n_holdout"], 16.0);
    assert!(metrics["cv_min_r2"] <= metrics["cv_mean_r2"] && metrics["cv_mean_r2"] <= metrics["cv_max_r2"]);

    // A model from another bank is refused.
    ok(&["featurize", "--images", s(&fx.p("img")), "--k", "64", "--seed", "9", "--out", s(&fx.p("other"))]);
    let out = rcf(&["predict", "--features", s(&fx.p("other/features.mskf")), "--model", s(&model), "--out", s(&fx.p("q"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn checkerboard_default_deltas_give_forty_runs() {
    let fx = Fixture::new(60, "spatial");
    ok(&["checkerboard", "--features", &fx.features(), "--labels", &fx.labels(), "--out", s(&fx.p("c"))]);
    let rows = read_csv(&fx.p("c/checkerboard.csv"));
    let runs: Vec<_> = rows.iter().filter(|r| r["offset"] != "summary").collect();
    assert_eq!(runs.len(), 40);
    let deltas: BTreeSet<&str> = runs.iter().map(|r| r["delta"].as_str()).collect();
    assert_eq!(deltas.len(), 10);
    assert_eq!(rows.len() - runs.len(), 10);
    assert!(fx.p("c/checkerboard.config").exists());
}

#[test]
fn rbf_single_sigma_is_chosen() {
    let fx = Fixture::new(60, "spatial");
    ok(&["rbf", "--labels", &fx.labels(), "--sigmas", "0.7", "--deltas", "2,8", "--out", s(&fx.p("r"))]);
    let rows = read_csv(&fx.p("r/rbf.csv"));
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r["sigma"] == "0.7"));
}

#[test]
fn superres_writes_every_factor() {
    let fx = Fixture::new(30, "linear");
    ok(&["train", "--features", &fx.features(), "--labels", &fx.labels(), "--out", s(&fx.p("t"))]);
    ok(&[
        "superres",
        "--images",
        s(&fx.p("img")),
        "--bank",
        s(&fx.p("feat/bank.mskb")),
        "--model",
        s(&fx.p("t/model.mskm")),
        "--truth",
        "green-dominant",
        "--pgm",
        "true",
        "--out",
        s(&fx.p("s")),
    ]);
    let rows = read_csv(&fx.p("s/superres.csv"));
    let mut per_image: BTreeMap<(String, String), BTreeMap<u32, usize>> = BTreeMap::new();
    for r in &rows {
        *per_image
            .entry((r["lat"].clone(), r["lon"].clone()))
            .or_default()
            .entry(r["F"].parse().unwrap())
            .or_default() += 1;
    }
    assert_eq!(per_image.len(), 30);
    for counts in per_image.values() {
        let expect: BTreeMap<u32, usize> = [2u32, 4, 8, 16].iter().map(|&f| (f, (f * f) as usize)).collect();
        assert_eq!(counts, &expect);
    }
    assert_eq!(read_csv(&fx.p("s/superres_metrics.csv")).len(), 4);
    assert_eq!(fs::read_dir(fx.p("s/maps")).unwrap().count(), 30);
}

#[test]
fn fuse_reads_raw_second_sensor() {
    let fx = Fixture::new(60, "spatial");
    let manifest = read_csv(&fx.p("img/manifest.csv"));
    let mut text = String::from("lat,lon,v0,v1,v2,v3\n");
    for (i, r) in manifest.iter().enumerate() {
        let y = num(r, "label");
        let base = 0.1 * (1.0 + 40.0 * y.max(0.0));
        text.push_str(&format!("{},{},{},{},{},{}\n", r["lat"], r["lon"], base, base * 2.0, 0.05, (i % 7) as f64));
    }
    let second = fx.p("nl.csv");
    fs::write(&second, text).unwrap();
    ok(&[
        "fuse",
        "--features",
        &fx.features(),
        "--labels",
        &fx.labels(),
        "--second",
        s(&second),
        "--lambdas1",
        "0.1,10",
        "--lambdas2",
        "0.1,10,1e12",
        "--out",
        s(&fx.p("u")),
    ]);
    assert_eq!(read_csv(&fx.p("u/fuse.csv")).len(), 6);
    let metrics: BTreeMap<String, f64> = read_csv(&fx.p("u/fuse_metrics.csv")).iter().map(|r| (r["metric"].clone(), num(r, "value"))).collect();
    assert!(metrics["cv_r2_fused"] >= metrics["cv_r2_single"] - 1e-6);

    let out = rcf(&["fuse", "--features", &fx.features(), "--labels", &fx.labels(), "--second", s(&second), "--second-kind", "features", "--out", s(&fx.p("v"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, tag: &str| {
        let root = dir.path().join(tag);
        let img = root.join("img");
        ok(&["synth", "--threads", threads, "--n", "40", "--size", "24", "--label", "spatial", "--out", s(&img)]);
        ok(&["featurize", "--threads", threads, "--images", s(&img), "--k", "64", "--precision", "f64", "--out", s(&root.join("f"))]);
        let (f, l) = (s(&root.join("f/features.mskf")).to_string(), s(&img.join("manifest.csv")).to_string());
        ok(&["train", "--threads", threads, "--features", &f, "--labels", &l, "--out", s(&root.join("t"))]);
        ok(&["checkerboard", "--threads", threads, "--features", &f, "--labels", &l, "--deltas", "1.5,6", "--out", s(&root.join("c"))]);
        ok(&["rbf", "--threads", threads, "--labels", &l, "--deltas", "1.5,6", "--out", s(&root.join("r"))]);
        root
    };
    let a = run("1", "one");
    let b = run("4", "four");
    for sub in ["img", "f", "t", "c", "r"] {
        assert_eq!(dir_bytes(&a.join(sub)), dir_bytes(&b.join(sub)), "{sub}");
    }
}
