//! `rcf`: featurize imagery once, then fit and evaluate label models.

mod commands;
mod config;
mod data;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::failure::Failure;

#[derive(Parser)]
#[command(name = "rcf", version, about = "Random convolutional features and the regressions built on them")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// key=value file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic image corpus with labels
    Synth(SynthArgs),
    /// Build a patch bank and featurize an image directory
    Featurize(FeaturizeArgs),
    /// Holdout split, cross-validated penalty, final fit
    Train(TrainArgs),
    /// Predict labels for every row of a feature table
    Predict(PredictArgs),
    /// Training, validation and holdout R^2 of a trained model
    Eval(EvalArgs),
    /// Ridge skill under checkerboard spatial splits
    Checkerboard(CheckerboardArgs),
    /// RBF interpolation skill under checkerboard spatial splits
    Rbf(RbfArgs),
    /// Sub-image predictions from activation maps
    Superres(SuperresArgs),
    /// Two-sensor ridge with separate penalties
    Fuse(FuseArgs),
}

macro_rules! flag_list {
    ($a:expr; $($f:ident),*) => {{
        let mut v: Vec<(&'static str, Option<String>)> = vec![
            ("seed", $a.common.seed.clone()),
            ("out", $a.common.out.clone()),
        ];
        $(v.push((stringify!($f), $a.$f.clone()));)*
        v
    }};
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<String>,
    /// Image side in pixels
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    bands: Option<String>,
    /// sub-image-linear or spatially-autocorrelated
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    cell_km: Option<String>,
    /// lat_min,lat_max,lon_min,lon_max
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    images: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    m: Option<String>,
    /// Whitening regulariser relative to the top covariance eigenvalue
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    center: Option<String>,
    /// f32 or f64
    #[arg(long)]
    precision: Option<String>,
    /// Also write features.csv
    #[arg(long)]
    csv: Option<String>,
    /// Reuse an existing bank instead of building one
    #[arg(long)]
    bank: Option<String>,
    #[arg(long)]
    cell_km: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    /// Fraction of rows held out
    #[arg(long)]
    holdout: Option<String>,
    /// Comma list or `default`
    #[arg(long)]
    lambdas: Option<String>,
    /// identity, log1p or log
    #[arg(long)]
    transform: Option<String>,
    #[arg(long)]
    standardize: Option<String>,
    #[arg(long)]
    allow_unmatched: Option<String>,
    #[arg(long)]
    cell_km: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    label_col: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// split.csv written by train (default: next to the model)
    #[arg(long)]
    split: Option<String>,
    /// cv.csv written by train (default: next to the model)
    #[arg(long)]
    cv: Option<String>,
    #[arg(long)]
    allow_unmatched: Option<String>,
    #[arg(long)]
    cell_km: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
}

#[derive(Args)]
struct CheckerboardArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    label_col: Option<String>,
    /// Square sides in degrees, comma list or `default`
    #[arg(long)]
    deltas: Option<String>,
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long)]
    transform: Option<String>,
    #[arg(long)]
    allow_unmatched: Option<String>,
    #[arg(long)]
    cell_km: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
}

#[derive(Args)]
struct RbfArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    label_col: Option<String>,
    /// Restrict to rows present in this feature table
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    deltas: Option<String>,
    /// Bandwidths in degrees, comma list or `default`
    #[arg(long)]
    sigmas: Option<String>,
    #[arg(long)]
    transform: Option<String>,
    #[arg(long)]
    allow_unmatched: Option<String>,
    #[arg(long)]
    cell_km: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
}

#[derive(Args)]
struct SuperresArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    images: Option<String>,
    #[arg(long)]
    bank: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Sub-divisions per side, comma list
    #[arg(long)]
    factors: Option<String>,
    /// Smoothing bandwidth in map pixels, or `auto`
    #[arg(long)]
    bandwidth: Option<String>,
    /// none or green-dominant (score sub-blocks against the image itself)
    #[arg(long)]
    truth: Option<String>,
    /// Write a PGM of each score map
    #[arg(long)]
    pgm: Option<String>,
    #[arg(long)]
    cell_km: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    label_col: Option<String>,
    /// CSV lat,lon,v_0,... of second-sensor values
    #[arg(long)]
    second: Option<String>,
    /// raw (luminosity samples) or features (22 prebuilt columns)
    #[arg(long)]
    second_kind: Option<String>,
    /// clamp or drop luminosities outside the bin edges
    #[arg(long)]
    nl_range: Option<String>,
    #[arg(long)]
    lambdas1: Option<String>,
    #[arg(long)]
    lambdas2: Option<String>,
    #[arg(long)]
    folds: Option<String>,
    #[arg(long)]
    holdout: Option<String>,
    #[arg(long)]
    transform: Option<String>,
    #[arg(long)]
    allow_unmatched: Option<String>,
    #[arg(long)]
    cell_km: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
}

impl Cmd {
    fn common(&self) -> &Common {
        match self {
            Cmd::Synth(a) => &a.common,
            Cmd::Featurize(a) => &a.common,
            Cmd::Train(a) => &a.common,
            Cmd::Predict(a) => &a.common,
            Cmd::Eval(a) => &a.common,
            Cmd::Checkerboard(a) => &a.common,
            Cmd::Rbf(a) => &a.common,
            Cmd::Superres(a) => &a.common,
            Cmd::Fuse(a) => &a.common,
        }
    }

    fn config(&self) -> Result<Config, Failure> {
        let file = self.common().config.as_deref();
        use commands::defaults as d;
        match self {
            Cmd::Synth(a) => Config::resolve(
                "synth",
                &d::synth(),
                file,
                flag_list!(a; n, size, bands, label, noise, cell_km, bounds),
            ),
            Cmd::Featurize(a) => Config::resolve(
                "featurize",
                &d::featurize(),
                file,
                flag_list!(a; images, k, m, eps, center, precision, csv, bank, cell_km, bounds),
            ),
            Cmd::Train(a) => Config::resolve(
                "train",
                &d::train(),
                file,
                flag_list!(a; features, labels, label_col, folds, holdout, lambdas, transform,
                    standardize, allow_unmatched, cell_km, bounds),
            ),
            Cmd::Predict(a) => Config::resolve("predict", &d::predict(), file, flag_list!(a; features, model)),
            Cmd::Eval(a) => Config::resolve(
                "eval",
                &d::eval(),
                file,
                flag_list!(a; features, labels, label_col, model, split, cv, allow_unmatched, cell_km, bounds),
            ),
            Cmd::Checkerboard(a) => Config::resolve(
                "checkerboard",
                &d::checkerboard(),
                file,
                flag_list!(a; features, labels, label_col, deltas, lambdas, transform, allow_unmatched,
                    cell_km, bounds),
            ),
            Cmd::Rbf(a) => Config::resolve(
                "rbf",
                &d::rbf(),
                file,
                flag_list!(a; labels, label_col, features, deltas, sigmas, transform, allow_unmatched,
                    cell_km, bounds),
            ),
            Cmd::Superres(a) => Config::resolve(
                "superres",
                &d::superres(),
                file,
                flag_list!(a; images, bank, model, factors, bandwidth, truth, pgm, cell_km, bounds),
            ),
            Cmd::Fuse(a) => Config::resolve(
                "fuse",
                &d::fuse(),
                file,
                flag_list!(a; features, labels, label_col, second, second_kind, nl_range, lambdas1,
                    lambdas2, folds, holdout, transform, allow_unmatched, cell_km, bounds),
            ),
        }
    }

    fn run(&self, cfg: &Config) -> Result<(), Failure> {
        match self {
            Cmd::Synth(_) => commands::synth(cfg),
            Cmd::Featurize(_) => commands::featurize(cfg),
            Cmd::Train(_) => commands::train(cfg),
            Cmd::Predict(_) => commands::predict(cfg),
            Cmd::Eval(_) => commands::eval(cfg),
            Cmd::Checkerboard(_) => commands::checkerboard(cfg),
            Cmd::Rbf(_) => commands::rbf(cfg),
            Cmd::Superres(_) => commands::superres(cfg),
            Cmd::Fuse(_) => commands::fuse(cfg),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        if let Some(t) = cli.cmd.common().threads {
            if t == 0 {
                return Err(Failure::usage("--threads must be at least 1"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| Failure::usage(format!("thread pool: {e}")))?;
        }
        let cfg = cli.cmd.config()?;
        cli.cmd.run(&cfg)
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rcf: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
