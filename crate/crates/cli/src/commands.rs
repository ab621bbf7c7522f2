//! One function per subcommand. Each resolves its inputs from the config,
//! writes its outputs and the resolved config into `out`, and prints a
//! short summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use rcf::featurize::{build_bank, compression_ratio, featurize_corpus, BankConfig, Precision};
use rcf::image::{load_image_dir, write_image, Image};
use rcf::multisensor::{fit_block_ridge, nightlights_features, tune_block, OutOfRange, NL_FEATURES};
use rcf::ridge::{
    default_lambda_grid, holdout_split, log_grid, CvOptions, LabelTransform, RidgeModel, RidgeOptions,
};
use rcf::spatial::{checkerboard_experiment, default_deltas, rbf_checkerboard, CheckerboardReport};
use rcf::superres::{
    default_bandwidth, image_subgrid, pool_to_subgrid, subgrid_csv, superres_map, within_image_r2, write_pgm,
    SubgridPrediction,
};
use rcf::synth::{green_dominant_fraction, LabelKind, SyntheticCorpus, SyntheticTask};
use rcf::{FeatureTable, PatchBank};

use crate::config::Config;
use crate::data::{
    grid_from, join_labels, join_points, matrix_rows, r2_or_nan, read_labels, read_value_rows,
    write_text,
};
use crate::failure::Failure;

pub mod defaults {
    type Pairs = Vec<(&'static str, &'static str)>;

    fn grid() -> Pairs {
        vec![("cell_km", "1.39"), ("bounds", "25,50,-125,-66")]
    }

    fn with(mut base: Pairs, extra: &[(&'static str, &'static str)]) -> Pairs {
        base.extend_from_slice(extra);
        base.extend_from_slice(&[("seed", "0"), ("out", "")]);
        base
    }

    pub fn synth() -> Pairs {
        with(
            grid(),
            &[
                ("n", "100"),
                ("size", "64"),
                ("bands", "3"),
                ("label", "sub-image-linear"),
                ("noise", "0.05"),
            ],
        )
    }

    pub fn featurize() -> Pairs {
        with(
            grid(),
            &[
                ("images", ""),
                ("k", "8192"),
                ("m", "3"),
                ("eps", "1e-6"),
                ("center", "true"),
                ("precision", "f32"),
                ("csv", "false"),
                ("bank", ""),
            ],
        )
    }

    fn labelled() -> Pairs {
        let mut v = grid();
        v.extend_from_slice(&[
            ("features", ""),
            ("labels", ""),
            ("label_col", "label"),
            ("allow_unmatched", "false"),
        ]);
        v
    }

    pub fn train() -> Pairs {
        with(
            labelled(),
            &[
                ("folds", "5"),
                ("holdout", "0.2"),
                ("lambdas", "default"),
                ("transform", "identity"),
                ("standardize", "true"),
            ],
        )
    }

    pub fn predict() -> Pairs {
        with(Vec::new(), &[("features", ""), ("model", "")])
    }

    pub fn eval() -> Pairs {
        with(labelled(), &[("model", ""), ("split", ""), ("cv", "")])
    }

    pub fn checkerboard() -> Pairs {
        with(
            labelled(),
            &[("deltas", "default"), ("lambdas", "default"), ("transform", "identity")],
        )
    }

    pub fn rbf() -> Pairs {
        with(
            labelled(),
            &[("deltas", "default"), ("sigmas", "default"), ("transform", "identity")],
        )
    }

    pub fn superres() -> Pairs {
        with(
            grid(),
            &[
                ("images", ""),
                ("bank", ""),
                ("model", ""),
                ("factors", "2,4,8,16"),
                ("bandwidth", "auto"),
                ("truth", "none"),
                ("pgm", "false"),
            ],
        )
    }

    pub fn fuse() -> Pairs {
        with(
            labelled(),
            &[
                ("second", ""),
                ("second_kind", "raw"),
                ("nl_range", "clamp"),
                ("lambdas1", "default"),
                ("lambdas2", "default"),
                ("folds", "5"),
                ("holdout", "0.2"),
                ("transform", "identity"),
            ],
        )
    }
}

/// Bandwidths tried by `rbf` when none are given, in degrees.
fn default_sigmas() -> Vec<f64> {
    log_grid(0.01, 10.0, 13)
}

/// Penalties tried by `fuse` for each block when none are given.
fn default_block_grid() -> Vec<f64> {
    log_grid(1e-2, 1e4, 7)
}

fn out_dir(cfg: &Config) -> Result<PathBuf, Failure> {
    let dir = cfg.path("out")?;
    std::fs::create_dir_all(&dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn transform(cfg: &Config) -> Result<LabelTransform, Failure> {
    LabelTransform::parse(cfg.str("transform"))
        .ok_or_else(|| Failure::usage(format!("`transform`: unknown `{}`", cfg.str("transform"))))
}

fn load_images(cfg: &Config) -> Result<Vec<Image>, Failure> {
    let dir = cfg.path("images")?;
    if !dir.is_dir() {
        return Err(Failure::data(format!("{}: not a directory", dir.display())));
    }
    let images = load_image_dir(&dir, &grid_from(cfg)?)?;
    if images.is_empty() {
        return Err(Failure::data(format!("{}: no <row>_<col>.png or .rfi images", dir.display())));
    }
    Ok(images)
}

fn finish(cfg: &Config, dir: &Path) -> Result<(), Failure> {
    let path = cfg.write(dir)?;
    println!("config  {}", path.display());
    Ok(())
}

pub fn synth(cfg: &Config) -> Result<(), Failure> {
    let out = out_dir(cfg)?;
    let grid = grid_from(cfg)?;
    let kind = LabelKind::parse(cfg.str("label"))
        .ok_or_else(|| Failure::usage(format!("`label`: unknown kind `{}`", cfg.str("label"))))?;
    let task = SyntheticTask {
        seed: cfg.u64("seed")?,
        kind,
        noise_sd: cfg.f64("noise")?,
        domain: grid.bounds(),
        cell_km: grid.cell_size_km(),
    };
    let corpus = SyntheticCorpus::new(&task, cfg.usize("n")?, cfg.usize("size")?, cfg.usize("bands")?)?;
    let labels: Vec<f64> = (0..corpus.len())
        .into_par_iter()
        .map(|i| {
            let (img, y) = corpus.generate(i);
            write_image(&img, &out)?;
            Ok(y)
        })
        .collect::<rcf::Result<_>>()?;
    let mut manifest = String::from("cell_row,cell_col,lat,lon,label\n");
    for (c, y) in corpus.cells().iter().zip(&labels) {
        writeln!(manifest, "{},{},{},{},{y}", c.row, c.col, c.lat, c.lon).unwrap();
    }
    write_text(&out.join("manifest.csv"), &manifest)?;
    println!("images  {} ({})", corpus.len(), kind.name());
    finish(cfg, &out)
}

pub fn featurize(cfg: &Config) -> Result<(), Failure> {
    let out = out_dir(cfg)?;
    let precision = Precision::parse(cfg.str("precision"))
        .ok_or_else(|| Failure::usage("`precision`: expected f32 or f64"))?;
    let started = Instant::now();
    let images = load_images(cfg)?;
    let bank = match cfg.optional_path("bank") {
        Some(p) => PatchBank::read(&p)?,
        None => build_bank(
            &images,
            &BankConfig {
                k: cfg.usize("k")?,
                m: cfg.usize("m")?,
                eps_rel: cfg.f64("eps")?,
                center: cfg.bool("center")?,
                seed: cfg.u64("seed")?,
            },
        )?,
    };
    if let Some(img) = images.iter().find(|i| i.bands() != bank.bands()) {
        return Err(Failure::data(format!(
            "{}: {} bands, bank expects {}",
            img.source,
            img.bands(),
            bank.bands()
        )));
    }
    let table = featurize_corpus(&images, &bank, precision)?;
    bank.write(&out.join("bank.mskb"))?;
    let table_path = out.join("features.mskf");
    table.write(&table_path)?;
    if cfg.bool("csv")? {
        table.write_csv(&out.join("features.csv"))?;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let first = &images[0];
    let image_bytes: usize = images.iter().map(|i| i.height() * i.width() * i.bands()).sum();
    let table_bytes = std::fs::metadata(&table_path).map(|m| m.len()).unwrap_or(0);
    println!("N       {}", table.n());
    println!("K       {} (M = {}, {} stored patches)", bank.k(), bank.m(), bank.n_stored());
    println!("time    {elapsed:.2} s");
    println!("bytes   {image_bytes} image (8-bit) -> {table_bytes} feature table");
    println!(
        "ratio   {:.2}x per image",
        compression_ratio(first.height(), first.width(), first.bands(), bank.k())
    );
    println!("bank    {}", bank.fingerprint_hex());
    finish(cfg, &out)
}

struct Labelled {
    table: FeatureTable,
    rows: Vec<usize>,
    y: Vec<f64>,
}

impl Labelled {
    fn load(cfg: &Config) -> Result<Self, Failure> {
        let table = FeatureTable::read(&cfg.path("features")?)?;
        let labels = read_labels(&cfg.path("labels")?, cfg.required("label_col")?)?;
        let joined = join_labels(&table, &labels, &grid_from(cfg)?, cfg.bool("allow_unmatched")?)?;
        Ok(Labelled {
            table,
            rows: joined.rows,
            y: joined.y,
        })
    }

    fn locs(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|&i| self.table.locations()[i]).collect()
    }
}

fn pick(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

fn fmt_r2(v: f64) -> String {
    if v.is_nan() {
        "undefined".into()
    } else {
        format!("{v:.4}")
    }
}

pub fn train(cfg: &Config) -> Result<(), Failure> {
    let out = out_dir(cfg)?;
    let data = Labelled::load(cfg)?;
    let seed = cfg.u64("seed")?;
    let n = data.rows.len();
    let (tr, ho) = holdout_split(n, cfg.f64("holdout")?, seed)?;
    let x = matrix_rows(&data.table, &data.rows);
    let x_tr = x.select_rows(tr.iter());
    let y_tr = pick(&data.y, &tr);
    let opts = RidgeOptions {
        standardize: cfg.bool("standardize")?,
        transform: transform(cfg)?,
    };
    let cv = CvOptions {
        folds: cfg.usize("folds")?,
        seed,
        ..CvOptions::default()
    };
    let lambdas = cfg.f64_list("lambdas", default_lambda_grid)?;
    let (model, report) = RidgeModel::fit_cv(&x_tr, &y_tr, &lambdas, &opts, &cv, data.table.fingerprint())?;
    model.write(&out.join("model.mskm"))?;

    let mut csv = String::from("lambda,fold,r2\n");
    for (l, lam) in report.lambdas.iter().enumerate() {
        for (f, r) in report.r2[l].iter().enumerate() {
            writeln!(csv, "{lam},{f},{}", r.map(|v| v.to_string()).unwrap_or_default()).unwrap();
        }
    }
    write_text(&out.join("cv.csv"), &csv)?;

    let locs = data.locs();
    let mut split = String::from("lat,lon,holdout\n");
    let mut is_ho = vec![false; n];
    ho.iter().for_each(|&i| is_ho[i] = true);
    for (i, (lat, lon)) in locs.iter().enumerate() {
        writeln!(split, "{lat},{lon},{}", is_ho[i] as u8).unwrap();
    }
    write_text(&out.join("split.csv"), &split)?;

    let pred_ho = model.predict(&x.select_rows(ho.iter()))?;
    println!("rows    {} train, {} holdout", tr.len(), ho.len());
    println!("lambda  {}", model.lambda);
    if report.boundary {
        eprintln!("warning: selected penalty {} is at the edge of the grid", model.lambda);
    }
    if !report.degenerate_folds.is_empty() {
        eprintln!("warning: folds {:?} have constant validation labels", report.degenerate_folds);
    }
    println!("cv r2   {}", fmt_r2(report.best_mean_r2()));
    println!("holdout {}", fmt_r2(r2_or_nan(&pick(&data.y, &ho), &pred_ho)));
    finish(cfg, &out)
}

fn check_fingerprint(model: &RidgeModel, table: &FeatureTable) -> Result<(), Failure> {
    if model.fingerprint != table.fingerprint() {
        return Err(rcf::Error::FingerprintMismatch.into());
    }
    Ok(())
}

pub fn predict(cfg: &Config) -> Result<(), Failure> {
    let out = out_dir(cfg)?;
    let table = FeatureTable::read(&cfg.path("features")?)?;
    let model = RidgeModel::read(&cfg.path("model")?)?;
    check_fingerprint(&model, &table)?;
    let pred = model.predict(&table.to_matrix())?;
    let mut csv = String::from("lat,lon,prediction\n");
    for ((lat, lon), p) in table.locations().iter().zip(&pred) {
        writeln!(csv, "{lat},{lon},{p}").unwrap();
    }
    write_text(&out.join("predictions.csv"), &csv)?;
    println!("rows    {}", pred.len());
    finish(cfg, &out)
}

fn sibling(cfg: &Config, key: &str, name: &str) -> Result<PathBuf, Failure> {
    match cfg.optional_path(key) {
        Some(p) => Ok(p),
        None => {
            let model = cfg.path("model")?;
            Ok(model.parent().unwrap_or(Path::new(".")).join(name))
        }
    }
}

pub fn eval(cfg: &Config) -> Result<(), Failure> {
    let out = out_dir(cfg)?;
    let data = Labelled::load(cfg)?;
    let model = RidgeModel::read(&cfg.path("model")?)?;
    check_fingerprint(&model, &data.table)?;
    let grid = grid_from(cfg)?;
    let split = read_labels(&sibling(cfg, "split", "split.csv")?, "holdout")?;
    let locs = data.locs();
    let (rows, flags) = join_points(&locs, &split, &grid, false, "split")?;
    let x = matrix_rows(&data.table, &data.rows);
    let pred = model.predict(&x)?;
    let (mut tr, mut ho) = (Vec::new(), Vec::new());
    for (r, f) in rows.iter().zip(&flags) {
        if *f == 1.0 { ho.push(*r) } else { tr.push(*r) }
    }
    let train_r2 = r2_or_nan(&pick(&data.y, &tr), &pick(&pred, &tr));
    let holdout_r2 = r2_or_nan(&pick(&data.y, &ho), &pick(&pred, &ho));

    let mut metrics = String::from("metric,value\n");
    writeln!(metrics, "n_train,{}", tr.len()).unwrap();
    writeln!(metrics, "n_holdout,{}", ho.len()).unwrap();
    writeln!(metrics, "lambda,{}", model.lambda).unwrap();
    writeln!(metrics, "train_r2,{train_r2}").unwrap();
    writeln!(metrics, "holdout_r2,{holdout_r2}").unwrap();

    let cv_path = sibling(cfg, "cv", "cv.csv")?;
    if cv_path.exists() {
        let folds = fold_r2_at(&cv_path, model.lambda)?;
        if !folds.is_empty() {
            let mean = folds.iter().sum::<f64>() / folds.len() as f64;
            let lo = folds.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = folds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            writeln!(metrics, "cv_mean_r2,{mean}").unwrap();
            writeln!(metrics, "cv_min_r2,{lo}").unwrap();
            writeln!(metrics, "cv_max_r2,{hi}").unwrap();
            println!("cv r2   {} (folds {} .. {})", fmt_r2(mean), fmt_r2(lo), fmt_r2(hi));
        }
    }
    write_text(&out.join("metrics.csv"), &metrics)?;
    println!("train   {}", fmt_r2(train_r2));
    println!("holdout {}", fmt_r2(holdout_r2));
    finish(cfg, &out)
}

/// Validation R^2 of each fold at `lambda` from a `lambda,fold,r2` file.
fn fold_r2_at(path: &Path, lambda: f64) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() == 3 && f[0].parse::<f64>().ok() == Some(lambda) {
            if let Ok(v) = f[2].parse::<f64>() {
                out.push(v);
            }
        }
    }
    Ok(out)
}

fn print_report(rep: &CheckerboardReport) {
    for d in &rep.deltas {
        match (d.mean(), d.min(), d.max()) {
            (Some(m), Some(lo), Some(hi)) => println!(
                "delta {:>5}  r2 {:.4}  [{:.4}, {:.4}]  {} {}",
                d.delta,
                m,
                lo,
                hi,
                rep.param_name,
                d.param.unwrap_or(f64::NAN)
            ),
            _ => println!("delta {:>5}  skipped", d.delta),
        }
    }
}

pub fn checkerboard(cfg: &Config) -> Result<(), Failure> {
    let out = out_dir(cfg)?;
    let data = Labelled::load(cfg)?;
    let y = transform(cfg)?.forward(&data.y)?;
    let x = matrix_rows(&data.table, &data.rows);
    let deltas = cfg.f64_list("deltas", default_deltas)?;
    let lambdas = cfg.f64_list("lambdas", default_lambda_grid)?;
    let rep = checkerboard_experiment(&x, &y, &data.locs(), &deltas, &lambdas)?;
    rep.write_csv(&out.join("checkerboard.csv"))?;
    print_report(&rep);
    finish(cfg, &out)
}

pub fn rbf(cfg: &Config) -> Result<(), Failure> {
    let out = out_dir(cfg)?;
    let labels = read_labels(&cfg.path("labels")?, cfg.required("label_col")?)?;
    let (locs, y_raw): (Vec<(f64, f64)>, Vec<f64>) = match cfg.optional_path("features") {
        Some(_) => {
            let data = Labelled::load(cfg)?;
            (data.locs(), data.y)
        }
        None => labels.iter().map(|&(a, b, v)| ((a, b), v)).unzip(),
    };
    let y = transform(cfg)?.forward(&y_raw)?;
    let deltas = cfg.f64_list("deltas", default_deltas)?;
    let sigmas = cfg.f64_list("sigmas", default_sigmas)?;
    let rep = rbf_checkerboard(&y, &locs, &deltas, &sigmas)?;
    rep.write_csv(&out.join("rbf.csv"))?;
    print_report(&rep);
    finish(cfg, &out)
}

pub fn superres(cfg: &Config) -> Result<(), Failure> {
    let out = out_dir(cfg)?;
    let images = load_images(cfg)?;
    let bank = PatchBank::read(&cfg.path("bank")?)?;
    let model = RidgeModel::read(&cfg.path("model")?)?;
    let factors = cfg.usize_list("factors")?;
    let bandwidth = match cfg.str("bandwidth") {
        "auto" => None,
        _ => Some(cfg.f64("bandwidth")?),
    };
    let truth = match cfg.str("truth") {
        "none" => false,
        "green-dominant" => true,
        other => return Err(Failure::usage(format!("`truth`: unknown `{other}`"))),
    };
    let pgm = cfg.bool("pgm")?;
    if pgm {
        std::fs::create_dir_all(out.join("maps")).map_err(|e| Failure::data(e.to_string()))?;
    }

    type PerImage = Vec<(SubgridPrediction, Option<f64>)>;
    let results: Vec<PerImage> = images
        .par_iter()
        .map(|img| {
            let map = superres_map(img, &bank, &model)?;
            if pgm {
                let c = img.location;
                write_pgm(&map, &out.join("maps").join(format!("{}_{}.pgm", c.row, c.col)))?;
            }
            factors
                .iter()
                .map(|&f| {
                    let bw = bandwidth.unwrap_or_else(|| default_bandwidth(&map, f));
                    let p = pool_to_subgrid(&map, f, bw)?;
                    let r2 = if truth {
                        let t = image_subgrid(img, f, green_dominant_fraction);
                        within_image_r2(&p, &t).ok()
                    } else {
                        None
                    };
                    Ok((p, r2))
                })
                .collect::<rcf::Result<PerImage>>()
        })
        .collect::<rcf::Result<_>>()?;

    let items: Vec<((f64, f64), &SubgridPrediction)> = images
        .iter()
        .zip(&results)
        .flat_map(|(img, per)| per.iter().map(move |(p, _)| ((img.location.lat, img.location.lon), p)))
        .collect();
    write_text(&out.join("superres.csv"), &subgrid_csv(&items))?;

    if truth {
        let mut csv = String::from("F,images,skipped,mean_within_r2\n");
        for (fi, &f) in factors.iter().enumerate() {
            let vals: Vec<f64> = results.iter().filter_map(|per| per[fi].1).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            writeln!(csv, "{f},{},{},{mean}", vals.len(), images.len() - vals.len()).unwrap();
            println!("F {f:>3}  within-image r2 {}  ({} images)", fmt_r2(mean), vals.len());
        }
        write_text(&out.join("superres_metrics.csv"), &csv)?;
    }
    println!("images  {}", images.len());
    finish(cfg, &out)
}

pub fn fuse(cfg: &Config) -> Result<(), Failure> {
    let out = out_dir(cfg)?;
    let data = Labelled::load(cfg)?;
    let grid = grid_from(cfg)?;
    let range = match cfg.str("nl_range") {
        "clamp" => OutOfRange::Clamp,
        "drop" => OutOfRange::Drop,
        other => return Err(Failure::usage(format!("`nl_range`: unknown `{other}`"))),
    };
    let raw = read_value_rows(&cfg.path("second")?)?;
    let second: Vec<(f64, f64, Vec<f64>)> = match cfg.str("second_kind") {
        "raw" => raw
            .into_iter()
            .map(|(a, b, v)| Ok((a, b, nightlights_features(&v, range)?.to_vec())))
            .collect::<rcf::Result<_>>()?,
        "features" => {
            if let Some(r) = raw.iter().find(|r| r.2.len() != NL_FEATURES) {
                return Err(Failure::data(format!(
                    "second-sensor row ({}, {}) has {} values, expected {NL_FEATURES}",
                    r.0,
                    r.1,
                    r.2.len()
                )));
            }
            raw
        }
        other => return Err(Failure::usage(format!("`second_kind`: unknown `{other}`"))),
    };
    let locs = data.locs();
    let (keep, zrows) = join_points(&locs, &second, &grid, cfg.bool("allow_unmatched")?, "second-sensor rows")?;
    let rows: Vec<usize> = keep.iter().map(|&i| data.rows[i]).collect();
    let y = transform(cfg)?.forward(&pick(&data.y, &keep))?;
    let x = matrix_rows(&data.table, &rows);
    let z = nalgebra::DMatrix::from_fn(rows.len(), NL_FEATURES, |i, j| zrows[i][j]);

    let seed = cfg.u64("seed")?;
    let folds = cfg.usize("folds")?;
    let (tr, ho) = holdout_split(rows.len(), cfg.f64("holdout")?, seed)?;
    let (x_tr, z_tr, y_tr) = (x.select_rows(tr.iter()), z.select_rows(tr.iter()), pick(&y, &tr));
    let g1 = cfg.f64_list("lambdas1", default_block_grid)?;
    let g2 = cfg.f64_list("lambdas2", default_block_grid)?;
    let rep = tune_block(&x_tr, &z_tr, &y_tr, &g1, &g2, folds, seed)?;
    let (l1, l2) = rep.chosen_lambdas();
    let fused = fit_block_ridge(&x_tr, &z_tr, &y_tr, l1, l2, true)?;

    let opts = RidgeOptions::default();
    let cv = CvOptions { folds, seed, ..CvOptions::default() };
    let (single, single_rep) = RidgeModel::fit_cv(&x_tr, &y_tr, &g1, &opts, &cv, [0; 32])?;

    let (lo, hi) = y_tr
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let y_ho = pick(&y, &ho);
    let fused_ho: Vec<f64> = fused
        .predict(&x.select_rows(ho.iter()), &z.select_rows(ho.iter()))?
        .into_iter()
        .map(|p| p.clamp(lo, hi))
        .collect();
    let single_ho = single.predict(&x.select_rows(ho.iter()))?;

    let mut csv = String::from("lambda1,lambda2,mean_r2\n");
    for (a, l1v) in g1.iter().enumerate() {
        for (b, l2v) in g2.iter().enumerate() {
            writeln!(csv, "{l1v},{l2v},{}", rep.mean_r2[a][b]).unwrap();
        }
    }
    write_text(&out.join("fuse.csv"), &csv)?;
    let mut m = String::from("metric,value\n");
    writeln!(m, "lambda1,{l1}").unwrap();
    writeln!(m, "lambda2,{l2}").unwrap();
    writeln!(m, "cv_r2_fused,{}", rep.best_mean_r2()).unwrap();
    writeln!(m, "cv_r2_single,{}", single_rep.best_mean_r2()).unwrap();
    writeln!(m, "holdout_r2_fused,{}", r2_or_nan(&y_ho, &fused_ho)).unwrap();
    writeln!(m, "holdout_r2_single,{}", r2_or_nan(&y_ho, &single_ho)).unwrap();
    write_text(&out.join("fuse_metrics.csv"), &m)?;
    println!("lambda  {l1} (imagery), {l2} (second sensor)");
    println!(
        "cv r2   {} fused, {} imagery only",
        fmt_r2(rep.best_mean_r2()),
        fmt_r2(single_rep.best_mean_r2())
    );
    println!(
        "holdout {} fused, {} imagery only",
        fmt_r2(r2_or_nan(&y_ho, &fused_ho)),
        fmt_r2(r2_or_nan(&y_ho, &single_ho))
    );
    finish(cfg, &out)
}
