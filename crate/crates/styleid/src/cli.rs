//! Command-line front end: argument parsing, settings resolution, and the
//! six pipeline operations (`train`, `stylize`, `invert`, `eval`, `sweep`,
//! `replay`).
//!
//! Every run that writes files also writes a `run.manifest` recording the
//! resolved settings and SHA-256 digests of all inputs and outputs, which is
//! what makes `replay` possible: it re-executes the recorded command into a
//! scratch directory and fails (exit code 3) unless the fresh manifest
//! matches the stored one on every non-volatile key.
//!
//! Settings precedence, highest first: command-line flag, the `STYLEID_SEED`
//! environment variable (seed only), a `--config` key=value file, built-in
//! defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{load_config, RunManifest};
use crate::dataset::list_images;
use crate::error::{Error, Result};
use crate::generator::{Generator, Image, ToyConfig, ToyGenerator};
use crate::inversion::{invert, InversionOpts};
use crate::io::{
    load_png, load_png_fitted, read_extractor, read_generator, save_png, write_generator,
    write_latent,
};
use crate::latent::SwapList;
use crate::metrics::{fid_score, ssim, SsimOpts};
use crate::perceptual::FeatureStack;
use crate::trainer::{fine_tune, stylize, EpochRecord, TrainConfig};

/// Environment variable consulted for the base seed when `--seed` is absent.
pub const SEED_ENV: &str = "STYLEID_SEED";

/// Seed of the fixed feature stack used for losses and metrics. Pinned so
/// that every command measures with the same ruler.
const METRIC_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(
    name = "styleid",
    version,
    about = "Few-shot portrait stylization: latent mixing, identity-preserving \
             generator fine-tuning, inversion, and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fine-tune a generator on a directory of style references.
    Train(TrainArgs),
    /// Stylize a photo with an already fine-tuned checkpoint.
    Stylize(StylizeArgs),
    /// Recover the latent of a photo under a generator backend.
    Invert(InvertArgs),
    /// Score a directory of images against a reference directory.
    Eval(EvalArgs),
    /// Grid-sweep identity weight and reference count.
    Sweep(SweepArgs),
    /// Re-run a recorded manifest and verify byte-identical outputs.
    Replay(ReplayArgs),
}

/// Flags shared by every command that runs the pipeline. All are optional;
/// unset values fall back to `--config` entries and then to defaults.
#[derive(Debug, Clone, Default, Args)]
struct CommonArgs {
    /// Flat key=value file supplying defaults for the other flags.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Base seed for all derived randomness.
    #[arg(long)]
    seed: Option<u64>,

    /// Generator backend: `toy` or `checkpoint:PATH`.
    #[arg(long, value_name = "SPEC")]
    backend: Option<String>,

    /// Blend factor toward the reference style in mixed latents.
    #[arg(long)]
    alpha: Option<f64>,

    /// Comma-separated latent rows treated as style, e.g. `3,4,5,7`.
    #[arg(long, value_name = "ROWS")]
    swap_list: Option<String>,

    /// Weight of the identity-preservation term.
    #[arg(long)]
    lambda_feature: Option<f64>,

    /// Fine-tuning epochs.
    #[arg(long)]
    epochs: Option<usize>,

    /// Gradient step on generator parameters during fine-tuning.
    #[arg(long)]
    step_size: Option<f64>,

    /// Gradient steps per latent inversion.
    #[arg(long)]
    invert_steps: Option<usize>,

    /// Gradient step in latent space during inversion.
    #[arg(long)]
    invert_step_size: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory of style reference PNGs.
    #[arg(long, value_name = "DIR")]
    refs: PathBuf,
    /// Subject photo whose identity is preserved.
    #[arg(long, value_name = "PNG")]
    input: PathBuf,
    /// Output directory (checkpoint.sidg, history.tsv, stylized.png,
    /// run.manifest).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct StylizeArgs {
    /// Fine-tuned generator checkpoint (.sidg).
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// Photo to stylize.
    #[arg(long, value_name = "PNG")]
    input: PathBuf,
    /// Output directory (stylized.png, run.manifest).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct InvertArgs {
    /// Photo to invert.
    #[arg(long, value_name = "PNG")]
    input: PathBuf,
    /// Output directory (latent.sidl, recon.png, run.manifest).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of images to score.
    #[arg(long, value_name = "DIR")]
    generated: PathBuf,
    /// Directory of reference images; the first one fixes the working size
    /// unless an extractor file dictates its own.
    #[arg(long, value_name = "DIR")]
    reference: PathBuf,
    /// Optional feature-extractor weights (`.sidg` flat container, default
    /// architecture); replaces the built-in seeded stack.
    #[arg(long, value_name = "FILE")]
    extractor: Option<PathBuf>,
    /// Seed of the built-in extractor (also honors STYLEID_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Directory of style reference PNGs.
    #[arg(long, value_name = "DIR")]
    refs: PathBuf,
    /// Primary subject photo (drives the montage and dispersion columns).
    #[arg(long, value_name = "PNG")]
    input: PathBuf,
    /// Optional directory of additional subjects, stylized at every grid
    /// point so the per-point distribution score has enough samples.
    #[arg(long, value_name = "DIR")]
    photos: Option<PathBuf>,
    /// Output directory (sweep.tsv, montage.png, run.manifest).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Comma-separated identity-weight grid; default is the single resolved
    /// lambda.
    #[arg(long, value_name = "LIST")]
    lambdas: Option<String>,
    /// Comma-separated reference-count grid; default uses every reference.
    #[arg(long, value_name = "LIST")]
    ref_counts: Option<String>,
    /// Worker threads for the grid (default: one per core).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Manifest of a previous `train`, `stylize`, `invert`, or `sweep` run.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Keep the replayed outputs here instead of a scratch directory.
    #[arg(long, value_name = "DIR")]
    keep: Option<PathBuf>,
}

/// Parse and dispatch `std::env::args`. Usage errors (and `--help`) are
/// handled by the parser itself, which exits with code 2 on bad input.
pub fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train(a) => run_train(&a).map(drop),
        Command::Stylize(a) => run_stylize(&a).map(drop),
        Command::Invert(a) => run_invert(&a).map(drop),
        Command::Eval(a) => run_eval(&a),
        Command::Sweep(a) => run_sweep(&a).map(drop),
        Command::Replay(a) => run_replay(&a),
    }
}

// ---------------------------------------------------------------------------
// Settings resolution

/// Which generator produces (or loads) the images.
#[derive(Debug, Clone, PartialEq, Eq)]
enum BackendSpec {
    /// Built-in procedural generator with default dimensions.
    Toy,
    /// Generator restored from a `.sidg` checkpoint.
    Checkpoint(PathBuf),
}

impl BackendSpec {
    fn parse(s: &str) -> Result<Self> {
        if s == "toy" {
            return Ok(BackendSpec::Toy);
        }
        if let Some(path) = s.strip_prefix("checkpoint:") {
            if path.is_empty() {
                return Err(Error::invalid("backend `checkpoint:` needs a path"));
            }
            return Ok(BackendSpec::Checkpoint(PathBuf::from(path)));
        }
        Err(Error::invalid(format!(
            "unknown backend {s:?}; expected `toy` or `checkpoint:PATH`"
        )))
    }

    fn descriptor(&self) -> String {
        match self {
            BackendSpec::Toy => "toy".into(),
            BackendSpec::Checkpoint(p) => format!("checkpoint:{}", p.display()),
        }
    }

    /// Checkpoint file backing this backend, if any.
    fn file(&self) -> Option<&Path> {
        match self {
            BackendSpec::Toy => None,
            BackendSpec::Checkpoint(p) => Some(p),
        }
    }

    fn load(&self) -> Result<ToyGenerator> {
        match self {
            BackendSpec::Toy => ToyGenerator::new(ToyConfig::default()),
            BackendSpec::Checkpoint(p) => read_generator(p),
        }
    }
}

/// Keys accepted in a `--config` file; anything else is rejected so typos
/// fail loudly instead of silently using a default.
const CONFIG_KEYS: &[&str] = &[
    "seed",
    "backend",
    "alpha",
    "swap_list",
    "lambda_feature",
    "epochs",
    "step_size",
    "invert_steps",
    "invert_step_size",
];

fn parse_value<T>(what: &str, raw: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| Error::invalid(format!("bad value {raw:?} for {what}: {e}")))
}

/// Fully resolved run settings, after applying the flag > environment >
/// config-file > default precedence.
#[derive(Debug, Clone)]
struct Settings {
    seed: u64,
    backend: BackendSpec,
    alpha: f64,
    /// `None` means "use the depth-appropriate default rows".
    swap: Option<SwapList>,
    lambda_feature: f64,
    epochs: usize,
    step_size: f64,
    invert_steps: usize,
    invert_step_size: f64,
}

impl Settings {
    fn resolve(common: &CommonArgs) -> Result<Self> {
        let file: BTreeMap<String, String> = match &common.config {
            Some(path) => load_config(path)?,
            None => BTreeMap::new(),
        };
        for key in file.keys() {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::invalid(format!(
                    "unknown config key {key:?}; known keys: {}",
                    CONFIG_KEYS.join(", ")
                )));
            }
        }
        let cfg = |key: &str| file.get(key).map(String::as_str);

        let seed = match common.seed {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => parse_value(SEED_ENV, v.trim())?,
                Err(_) => match cfg("seed") {
                    Some(v) => parse_value("seed", v)?,
                    None => 0,
                },
            },
        };

        let train_defaults = TrainConfig::default();
        let invert_defaults = InversionOpts::default();

        let alpha = match (common.alpha, cfg("alpha")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("alpha", v)?,
            (None, None) => train_defaults.alpha,
        };
        let lambda_feature = match (common.lambda_feature, cfg("lambda_feature")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("lambda_feature", v)?,
            (None, None) => train_defaults.lambda_feature,
        };
        let epochs = match (common.epochs, cfg("epochs")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("epochs", v)?,
            (None, None) => train_defaults.epochs,
        };
        let step_size = match (common.step_size, cfg("step_size")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("step_size", v)?,
            (None, None) => train_defaults.step_size,
        };
        let invert_steps = match (common.invert_steps, cfg("invert_steps")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("invert_steps", v)?,
            (None, None) => invert_defaults.steps,
        };
        let invert_step_size = match (common.invert_step_size, cfg("invert_step_size")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("invert_step_size", v)?,
            (None, None) => invert_defaults.step_size,
        };
        let swap = match common.swap_list.as_deref().or_else(|| cfg("swap_list")) {
            Some(v) => Some(v.parse::<SwapList>()?),
            None => None,
        };
        let backend = BackendSpec::parse(
            common.backend.as_deref().or_else(|| cfg("backend")).unwrap_or("toy"),
        )?;

        Ok(Settings {
            seed,
            backend,
            alpha,
            swap,
            lambda_feature,
            epochs,
            step_size,
            invert_steps,
            invert_step_size,
        })
    }

    fn inversion_opts(&self) -> InversionOpts {
        InversionOpts {
            steps: self.invert_steps,
            step_size: self.invert_step_size,
            seed: self.seed,
            ..InversionOpts::default()
        }
    }

    /// Train configuration for a backend of the given depth; an explicit
    /// swap list wins over the depth-appropriate default.
    fn train_config(&self, layers: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lambda_feature: self.lambda_feature,
            alpha: self.alpha,
            swap: self
                .swap
                .clone()
                .unwrap_or_else(|| SwapList::style_rows_default(layers)),
            step_size: self.step_size,
            seed: self.seed,
            inversion: self.inversion_opts(),
        }
    }

    /// Record every resolved setting that influences results.
    fn record(&self, m: &mut RunManifest, swap_effective: &SwapList) {
        m.set("backend", self.backend.descriptor());
        m.set("seed", self.seed);
        m.set("alpha", self.alpha);
        m.set("swap", swap_effective);
        m.set("lambda_feature", self.lambda_feature);
        m.set("epochs", self.epochs);
        m.set("step_size", self.step_size);
        self.record_inversion(m);
    }

    /// Subset of [`Settings::record`] for commands that only invert.
    fn record_inversion(&self, m: &mut RunManifest) {
        let opts = self.inversion_opts();
        m.set("invert.steps", opts.steps);
        m.set("invert.step_size", opts.step_size);
        m.set("invert.perceptual_weight", opts.perceptual_weight);
        m.set("invert.pixel_weight", opts.pixel_weight);
        m.set("invert.mean_latent_samples", opts.mean_latent_samples);
    }
}

// ---------------------------------------------------------------------------
// Shared helpers

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn new_manifest(command: &str, settings: Option<&Settings>) -> RunManifest {
    let mut m = RunManifest::new();
    m.set("command", command);
    m.set("tool_version", env!("CARGO_PKG_VERSION"));
    if let Some(st) = settings {
        m.set("backend", st.backend.descriptor());
        m.set("seed", st.seed);
    }
    m
}

/// Digest the backend checkpoint into the manifest, when there is one.
fn record_backend_file(m: &mut RunManifest, backend: &BackendSpec) -> Result<()> {
    if let Some(path) = backend.file() {
        m.set_file_digest("input", "backend", path)?;
    }
    Ok(())
}

/// Load every PNG in `dir` resized to `h` x `w`, returning sorted paths too.
fn load_image_dir(dir: &Path, h: usize, w: usize) -> Result<(Vec<PathBuf>, Vec<Image>)> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(Error::invalid(format!(
            "no .png images found in {}",
            dir.display()
        )));
    }
    let images = paths
        .iter()
        .map(|p| load_png_fitted(p, h, w))
        .collect::<Result<Vec<_>>>()?;
    Ok((paths, images))
}

/// Digest a directory's images into the manifest as `input.<kind>.NN`.
fn record_image_dir(m: &mut RunManifest, kind: &str, paths: &[PathBuf]) -> Result<()> {
    for (i, p) in paths.iter().enumerate() {
        m.set_file_digest("input", &format!("{kind}.{i:02}"), p)?;
    }
    Ok(())
}

fn finish_manifest(mut m: RunManifest, out: &Path, t0: Instant) -> Result<RunManifest> {
    m.set("elapsed_ms", t0.elapsed().as_millis());
    m.write(out.join("run.manifest"))?;
    Ok(m)
}

/// Tab-separated history dump, one line per epoch, no header.
fn history_tsv(history: &[EpochRecord]) -> String {
    let mut text = String::new();
    for r in history {
        let _ = writeln!(
            text,
            "{}\t{}\t{}\t{}",
            r.epoch, r.ref_loss, r.feature_loss, r.total
        );
    }
    text
}

fn parse_f64_list(what: &str, raw: &str) -> Result<Vec<f64>> {
    let vals = raw
        .split(',')
        .map(|t| parse_value::<f64>(what, t.trim()))
        .collect::<Result<Vec<_>>>()?;
    if vals.is_empty() {
        return Err(Error::invalid(format!("{what} list is empty")));
    }
    Ok(vals)
}

fn parse_usize_list(what: &str, raw: &str) -> Result<Vec<usize>> {
    let vals = raw
        .split(',')
        .map(|t| parse_value::<usize>(what, t.trim()))
        .collect::<Result<Vec<_>>>()?;
    if vals.is_empty() {
        return Err(Error::invalid(format!("{what} list is empty")));
    }
    Ok(vals)
}

fn join_display<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

// ---------------------------------------------------------------------------
// train

fn run_train(args: &TrainArgs) -> Result<RunManifest> {
    let t0 = Instant::now();
    let st = Settings::resolve(&args.common)?;
    let gen = st.backend.load()?;
    let (h, w, _) = gen.output_shape();
    let stack = FeatureStack::toy(h, w, METRIC_SEED)?;

    let (ref_paths, refs) = load_image_dir(&args.refs, h, w)?;
    let photo = load_png_fitted(&args.input, h, w)?;
    let cfg = st.train_config(gen.layer_count());

    create_out_dir(&args.out)?;
    let outcome = fine_tune(&gen, &refs, &photo, &stack, &cfg)?;

    let checkpoint = args.out.join("checkpoint.sidg");
    write_generator(&checkpoint, outcome.generator.as_ref())?;
    let history_path = args.out.join("history.tsv");
    write_text(&history_path, &history_tsv(&outcome.history))?;
    let preview = outcome.generator.synthesize(&outcome.photo_latent)?;
    let preview_path = args.out.join("stylized.png");
    save_png(&preview_path, &preview)?;

    let mut m = new_manifest("train", None);
    st.record(&mut m, &cfg.swap);
    m.set("metric.stack", stack.identifier());
    m.set("arg.refs", args.refs.display());
    m.set("arg.input", args.input.display());
    m.set("arg.out", args.out.display());
    m.set("ref_count", refs.len());
    record_backend_file(&mut m, &st.backend)?;
    m.set_file_digest("input", "photo", &args.input)?;
    record_image_dir(&mut m, "ref", &ref_paths)?;
    if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
        m.set("first_total", first.total);
        m.set("final_total", last.total);
    }
    m.set_file_digest("out", "checkpoint", &checkpoint)?;
    m.set_file_digest("out", "history", &history_path)?;
    m.set_file_digest("out", "stylized", &preview_path)?;

    println!(
        "train: {} reference(s), {} epoch(s), lambda_feature = {}",
        refs.len(),
        cfg.epochs,
        cfg.lambda_feature
    );
    if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
        println!("total loss: {:.6} -> {:.6}", first.total, last.total);
    }
    for p in [&checkpoint, &history_path, &preview_path] {
        println!("wrote {}", p.display());
    }
    let m = finish_manifest(m, &args.out, t0)?;
    println!("wrote {}", args.out.join("run.manifest").display());
    Ok(m)
}

// ---------------------------------------------------------------------------
// stylize

fn run_stylize(args: &StylizeArgs) -> Result<RunManifest> {
    let t0 = Instant::now();
    let st = Settings::resolve(&args.common)?;
    let pretrained = st.backend.load()?;
    let tuned = read_generator(&args.checkpoint)?;
    let (h, w, _) = tuned.output_shape();
    let stack = FeatureStack::toy(h, w, METRIC_SEED)?;
    let photo = load_png_fitted(&args.input, h, w)?;
    let opts = st.inversion_opts();

    create_out_dir(&args.out)?;
    let out_img = stylize(&pretrained, &tuned, &photo, &stack, &opts)?;
    let out_path = args.out.join("stylized.png");
    save_png(&out_path, &out_img)?;

    let mut m = new_manifest("stylize", Some(&st));
    st.record_inversion(&mut m);
    m.set("metric.stack", stack.identifier());
    m.set("arg.checkpoint", args.checkpoint.display());
    m.set("arg.input", args.input.display());
    m.set("arg.out", args.out.display());
    record_backend_file(&mut m, &st.backend)?;
    m.set_file_digest("input", "checkpoint", &args.checkpoint)?;
    m.set_file_digest("input", "photo", &args.input)?;
    m.set_file_digest("out", "stylized", &out_path)?;

    println!(
        "stylize: inverted {} on the pretrained backend, decoded with {}",
        args.input.display(),
        args.checkpoint.display()
    );
    println!("wrote {}", out_path.display());
    let m = finish_manifest(m, &args.out, t0)?;
    println!("wrote {}", args.out.join("run.manifest").display());
    Ok(m)
}

// ---------------------------------------------------------------------------
// invert

fn run_invert(args: &InvertArgs) -> Result<RunManifest> {
    let t0 = Instant::now();
    let st = Settings::resolve(&args.common)?;
    let gen = st.backend.load()?;
    let (h, w, _) = gen.output_shape();
    let stack = FeatureStack::toy(h, w, METRIC_SEED)?;
    let photo = load_png_fitted(&args.input, h, w)?;
    let opts = st.inversion_opts();

    create_out_dir(&args.out)?;
    let result = invert(&gen, &photo, &stack, &opts)?;
    let latent_path = args.out.join("latent.sidl");
    write_latent(&latent_path, &result.latent)?;
    let recon = gen.synthesize(&result.latent)?;
    let recon_path = args.out.join("recon.png");
    save_png(&recon_path, &recon)?;

    let mut m = new_manifest("invert", Some(&st));
    st.record_inversion(&mut m);
    m.set("metric.stack", stack.identifier());
    m.set("arg.input", args.input.display());
    m.set("arg.out", args.out.display());
    record_backend_file(&mut m, &st.backend)?;
    m.set_file_digest("input", "photo", &args.input)?;
    m.set("baseline_loss", result.history[0]);
    m.set("final_loss", result.loss);
    m.set_file_digest("out", "latent", &latent_path)?;
    m.set_file_digest("out", "recon", &recon_path)?;

    println!(
        "invert: {} step(s), loss {:.6} -> {:.6}",
        opts.steps, result.history[0], result.loss
    );
    for p in [&latent_path, &recon_path] {
        println!("wrote {}", p.display());
    }
    let m = finish_manifest(m, &args.out, t0)?;
    println!("wrote {}", args.out.join("run.manifest").display());
    Ok(m)
}

// ---------------------------------------------------------------------------
// eval

fn run_eval(args: &EvalArgs) -> Result<()> {
    let ref_list = list_images(&args.reference)?;
    let gen_list = list_images(&args.generated)?;
    if ref_list.is_empty() || gen_list.is_empty() {
        return Err(Error::invalid(format!(
            "eval needs images in both directories ({} generated, {} reference)",
            gen_list.len(),
            ref_list.len()
        )));
    }
    if ref_list.len() < 2 || gen_list.len() < 2 {
        return Err(Error::invalid(format!(
            "distribution distance needs at least 2 images per side, got {} generated and {} reference",
            gen_list.len(),
            ref_list.len()
        )));
    }

    let seed = match args.seed {
        Some(s) => s,
        None => match std::env::var(SEED_ENV) {
            Ok(v) => parse_value(SEED_ENV, v.trim())?,
            Err(_) => METRIC_SEED,
        },
    };

    // An extractor file dictates the working size; otherwise the first
    // reference image (sorted order) fixes it. Everything else is resized
    // and center-cropped to match.
    let stack = match &args.extractor {
        Some(path) => read_extractor(path)?,
        None => {
            let (h, w, _) = load_png(&ref_list[0])?.shape();
            FeatureStack::toy(h, w, seed)?
        }
    };
    let (h, w, c) = stack.input_shape();
    if c != 3 {
        return Err(Error::invalid(format!(
            "extractor expects {c}-channel input but decoded images have 3"
        )));
    }
    let ref_imgs = ref_list
        .iter()
        .map(|p| load_png_fitted(p, h, w))
        .collect::<Result<Vec<_>>>()?;
    let gen_imgs = gen_list
        .iter()
        .map(|p| load_png_fitted(p, h, w))
        .collect::<Result<Vec<_>>>()?;

    let fid = fid_score(&gen_imgs, &ref_imgs, &stack)?;

    // Structural similarity is paired by file stem; unpaired images are
    // reported and skipped.
    let stem = |p: &PathBuf| p.file_stem().map(|s| s.to_string_lossy().into_owned());
    let mut pairs = Vec::new();
    for (gi, gp) in gen_list.iter().enumerate() {
        let name = stem(gp);
        match ref_list.iter().position(|rp| stem(rp) == name) {
            Some(ri) => pairs.push((gi, ri)),
            None => log::warn!(
                "{}: no reference with the same stem; skipped for ssim",
                gp.display()
            ),
        }
    }
    for rp in &ref_list {
        if !gen_list.iter().any(|gp| stem(gp) == stem(rp)) {
            log::warn!(
                "{}: no generated image with the same stem; skipped for ssim",
                rp.display()
            );
        }
    }

    println!("images: {} generated vs {} reference at {h}x{w}", gen_imgs.len(), ref_imgs.len());
    println!("extractor: {}", stack.identifier());
    println!("seed = {seed}");
    println!("fid = {fid:.6}");
    if pairs.is_empty() {
        println!("ssim = n/a (0 pairs)");
    } else {
        let opts = SsimOpts::default();
        let mut total = 0.0;
        for &(gi, ri) in &pairs {
            total += ssim(&gen_imgs[gi], &ref_imgs[ri], &opts)?;
        }
        println!("ssim = {:.6} ({} pairs)", total / pairs.len() as f64, pairs.len());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

/// One fine-tuning job of the sweep grid.
struct SweepTask {
    point: usize,
    run: usize,
    ref_idx: Vec<usize>,
    cfg: TrainConfig,
}

struct SweepRun {
    point: usize,
    run: usize,
    final_record: Option<EpochRecord>,
    /// Stylized output per subject, primary subject first.
    outputs: Vec<Image>,
}

fn run_sweep(args: &SweepArgs) -> Result<RunManifest> {
    let t0 = Instant::now();
    let st = Settings::resolve(&args.common)?;
    let gen = st.backend.load()?;
    let (h, w, _) = gen.output_shape();
    let stack = FeatureStack::toy(h, w, METRIC_SEED)?;

    let (ref_paths, ref_imgs) = load_image_dir(&args.refs, h, w)?;
    let photo = load_png_fitted(&args.input, h, w)?;
    let mut subjects = vec![photo.clone()];
    let extra_paths = match &args.photos {
        Some(dir) => {
            let (paths, imgs) = load_image_dir(dir, h, w)?;
            subjects.extend(imgs);
            paths
        }
        None => Vec::new(),
    };

    let lambdas = match &args.lambdas {
        Some(raw) => parse_f64_list("lambda", raw)?,
        None => vec![st.lambda_feature],
    };
    for &l in &lambdas {
        if !l.is_finite() || l < 0.0 {
            return Err(Error::invalid(format!(
                "lambda grid values must be finite and >= 0, got {l}"
            )));
        }
    }
    let counts = match &args.ref_counts {
        Some(raw) => parse_usize_list("ref count", raw)?,
        None => vec![ref_imgs.len()],
    };
    for &c in &counts {
        if c == 0 || c > ref_imgs.len() {
            return Err(Error::invalid(format!(
                "ref count {c} out of range 1..={}",
                ref_imgs.len()
            )));
        }
    }
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Error::invalid("--jobs must be at least 1"));
        }
    }

    let base_cfg = st.train_config(gen.layer_count());

    // Subjects are always inverted on the pretrained backend, so their
    // latents are shared by every grid point.
    let inv_opts = st.inversion_opts();
    let subject_latents = subjects
        .iter()
        .map(|img| invert(&gen, img, &stack, &inv_opts).map(|r| r.latent))
        .collect::<Result<Vec<_>>>()?;

    // Grid points in row-major (lambda, count) order. A count of 1 fans out
    // into one run per pooled reference, so the spread across reference
    // choice is measurable; larger counts train once on the first `c` refs.
    let pool = *counts.iter().max().expect("counts is nonempty");
    let mut tasks = Vec::new();
    let mut point_meta = Vec::new();
    for (li, &lambda) in lambdas.iter().enumerate() {
        for (ci, &count) in counts.iter().enumerate() {
            let point = li * counts.len() + ci;
            point_meta.push((lambda, count));
            let cfg = TrainConfig {
                lambda_feature: lambda,
                swap: base_cfg.swap.clone(),
                inversion: base_cfg.inversion.clone(),
                ..base_cfg
            };
            if count == 1 {
                for run in 0..pool {
                    tasks.push(SweepTask {
                        point,
                        run,
                        ref_idx: vec![run],
                        cfg: cfg.clone(),
                    });
                }
            } else {
                tasks.push(SweepTask {
                    point,
                    run: 0,
                    ref_idx: (0..count).collect(),
                    cfg,
                });
            }
        }
    }

    let execute = |task: &SweepTask| -> Result<SweepRun> {
        let subset: Vec<Image> = task.ref_idx.iter().map(|&i| ref_imgs[i].clone()).collect();
        let outcome = fine_tune(&gen, &subset, &photo, &stack, &task.cfg)?;
        let outputs = subject_latents
            .iter()
            .map(|wl| outcome.generator.synthesize(wl))
            .collect::<Result<Vec<_>>>()?;
        log::info!(
            "sweep point {} run {} done (lambda = {}, {} ref(s))",
            task.point,
            task.run,
            task.cfg.lambda_feature,
            task.ref_idx.len()
        );
        Ok(SweepRun {
            point: task.point,
            run: task.run,
            final_record: outcome.history.last().copied(),
            outputs,
        })
    };
    let mut runs: Vec<SweepRun> = match args.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?
            .install(|| tasks.par_iter().map(execute).collect::<Result<Vec<_>>>())?,
        None => tasks.par_iter().map(execute).collect::<Result<Vec<_>>>()?,
    };
    runs.sort_by_key(|r| (r.point, r.run));

    // Primary-subject outputs of each single-reference battery, keyed by
    // lambda index; this is the pool the dispersion columns draw from.
    let mut batteries: Vec<Vec<&Image>> = vec![Vec::new(); lambdas.len()];
    for r in &runs {
        let (_, count) = point_meta[r.point];
        if count == 1 {
            batteries[r.point / counts.len()].push(&r.outputs[0]);
        }
    }

    let mut tsv = String::new();
    let mut table = Vec::new();
    for (point, &(lambda, count)) in point_meta.iter().enumerate() {
        let point_runs: Vec<&SweepRun> = runs.iter().filter(|r| r.point == point).collect();
        let battery = &batteries[point / counts.len()];

        let (ref_loss, feature_loss) = match point_runs[0].final_record {
            Some(rec) => (Some(rec.ref_loss), Some(rec.feature_loss)),
            None => (None, None),
        };

        // Distribution distance of every stylized output at this point
        // against the full reference set.
        let generated: Vec<Image> = point_runs
            .iter()
            .flat_map(|r| r.outputs.iter().cloned())
            .collect();
        let fid = if generated.len() >= 2 && ref_imgs.len() >= 2 {
            Some(fid_score(&generated, &ref_imgs, &stack)?)
        } else {
            None
        };

        // Dispersion: for a battery point, the mean pairwise perceptual
        // distance across reference choice; for a multi-reference point,
        // the distance from its output to the battery's pixel mean.
        let dispersion = if count == 1 && battery.len() >= 2 {
            let mut total = 0.0;
            let mut n = 0usize;
            for i in 0..battery.len() {
                for j in (i + 1)..battery.len() {
                    total += stack.perc_distance(battery[i], battery[j])?;
                    n += 1;
                }
            }
            Some(total / n as f64)
        } else if count > 1 && !battery.is_empty() {
            let mut mean = Image::zeros(h, w, 3);
            for img in battery {
                for (dst, src) in mean.data_mut().iter_mut().zip(img.data()) {
                    *dst += src / battery.len() as f64;
                }
            }
            Some(stack.perc_distance(&point_runs[0].outputs[0], &mean)?)
        } else {
            None
        };

        let cell = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| x.to_string());
        let _ = writeln!(
            tsv,
            "{lambda}\t{count}\t{}\t{}\t{}\t{}",
            cell(ref_loss),
            cell(feature_loss),
            cell(fid),
            cell(dispersion)
        );
        table.push((lambda, count, ref_loss, feature_loss, fid, dispersion));
    }

    create_out_dir(&args.out)?;
    let tsv_path = args.out.join("sweep.tsv");
    write_text(&tsv_path, &tsv)?;

    // Montage: one row per reference count, one column per lambda, showing
    // the primary subject from each point's first run.
    let mut montage = Image::zeros(counts.len() * h, lambdas.len() * w, 3);
    for (point, _) in point_meta.iter().enumerate() {
        let li = point / counts.len();
        let ci = point % counts.len();
        let first_run = runs
            .iter()
            .find(|r| r.point == point)
            .expect("every point has at least one run");
        let cell = &first_run.outputs[0];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    montage.set(ci * h + y, li * w + x, c, cell.get(y, x, c));
                }
            }
        }
    }
    let montage_path = args.out.join("montage.png");
    save_png(&montage_path, &montage)?;

    let mut m = new_manifest("sweep", None);
    st.record(&mut m, &base_cfg.swap);
    m.set("metric.stack", stack.identifier());
    m.set("grid.lambdas", join_display(&lambdas));
    m.set("grid.ref_counts", join_display(&counts));
    if let Some(jobs) = args.jobs {
        m.set("jobs", jobs);
    }
    m.set("arg.refs", args.refs.display());
    m.set("arg.input", args.input.display());
    if let Some(photos) = &args.photos {
        m.set("arg.photos", photos.display());
    }
    m.set("arg.out", args.out.display());
    record_backend_file(&mut m, &st.backend)?;
    m.set_file_digest("input", "photo", &args.input)?;
    record_image_dir(&mut m, "ref", &ref_paths)?;
    record_image_dir(&mut m, "photos", &extra_paths)?;
    m.set_file_digest("out", "sweep", &tsv_path)?;
    m.set_file_digest("out", "montage", &montage_path)?;

    println!(
        "sweep: {} point(s), {} run(s), {} subject(s)",
        point_meta.len(),
        runs.len(),
        subjects.len()
    );
    println!("lambda      refs  ref_loss   feature_loss  fid        dispersion");
    for (lambda, count, rl, fl, fid, disp) in &table {
        let cell = |v: &Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.6}"));
        println!(
            "{lambda:<10}  {count:<4}  {:<9}  {:<12}  {:<9}  {}",
            cell(rl),
            cell(fl),
            cell(fid),
            cell(disp)
        );
    }
    for p in [&tsv_path, &montage_path] {
        println!("wrote {}", p.display());
    }
    let m = finish_manifest(m, &args.out, t0)?;
    println!("wrote {}", args.out.join("run.manifest").display());
    Ok(m)
}

// ---------------------------------------------------------------------------
// replay

fn manifest_key<'a>(m: &'a RunManifest, path: &Path, key: &str) -> Result<&'a str> {
    m.get(key)
        .ok_or_else(|| Error::format(path, format!("missing key {key:?}")))
}

fn manifest_value<T>(m: &RunManifest, path: &Path, key: &str) -> Result<Option<T>>
where
    T: std::str::FromStr,
{
    match m.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| Error::format(path, format!("bad value {raw:?} for key {key:?}"))),
    }
}

/// Rebuild the flag set of a recorded run. Every recorded setting is passed
/// back explicitly, so the replay is immune to the current environment and
/// any config file the original run read.
fn common_from_manifest(m: &RunManifest, path: &Path) -> Result<CommonArgs> {
    Ok(CommonArgs {
        config: None,
        seed: manifest_value(m, path, "seed")?,
        backend: m.get("backend").map(str::to_owned),
        alpha: manifest_value(m, path, "alpha")?,
        swap_list: m.get("swap").map(str::to_owned),
        lambda_feature: manifest_value(m, path, "lambda_feature")?,
        epochs: manifest_value(m, path, "epochs")?,
        step_size: manifest_value(m, path, "step_size")?,
        invert_steps: manifest_value(m, path, "invert.steps")?,
        invert_step_size: manifest_value(m, path, "invert.step_size")?,
    })
}

fn run_replay(args: &ReplayArgs) -> Result<()> {
    let recorded = RunManifest::read(&args.manifest)?;
    let path = args.manifest.as_path();
    let command = manifest_key(&recorded, path, "command")?.to_owned();
    let common = common_from_manifest(&recorded, path)?;

    // Outputs go to a scratch directory unless the caller wants them kept.
    let scratch;
    let out_dir: PathBuf = match &args.keep {
        Some(dir) => dir.clone(),
        None => {
            scratch = tempfile::tempdir()
                .map_err(|e| Error::io(std::env::temp_dir(), e))?;
            scratch.path().to_path_buf()
        }
    };

    let arg_path = |key: &str| -> Result<PathBuf> {
        manifest_key(&recorded, path, key).map(PathBuf::from)
    };
    println!("replay: {command} from {}", path.display());
    let fresh = match command.as_str() {
        "train" => run_train(&TrainArgs {
            refs: arg_path("arg.refs")?,
            input: arg_path("arg.input")?,
            out: out_dir,
            common,
        })?,
        "stylize" => run_stylize(&StylizeArgs {
            checkpoint: arg_path("arg.checkpoint")?,
            input: arg_path("arg.input")?,
            out: out_dir,
            common,
        })?,
        "invert" => run_invert(&InvertArgs {
            input: arg_path("arg.input")?,
            out: out_dir,
            common,
        })?,
        "sweep" => run_sweep(&SweepArgs {
            refs: arg_path("arg.refs")?,
            input: arg_path("arg.input")?,
            photos: recorded.get("arg.photos").map(PathBuf::from),
            out: out_dir,
            lambdas: recorded.get("grid.lambdas").map(str::to_owned),
            ref_counts: recorded.get("grid.ref_counts").map(str::to_owned),
            jobs: manifest_value(&recorded, path, "jobs")?,
            common,
        })?,
        other => {
            return Err(Error::format(
                path,
                format!("cannot replay command {other:?}"),
            ))
        }
    };

    let diffs = recorded.diff(&fresh);
    if diffs.is_empty() {
        let outputs = recorded
            .entries()
            .iter()
            .filter(|(k, _)| k.starts_with("out."))
            .count();
        println!(
            "replay ok: {} manifest key(s) match, {} output digest(s) verified",
            recorded.entries().len(),
            outputs
        );
        Ok(())
    } else {
        Err(Error::format(
            path,
            format!("replay mismatch on: {}", diffs.join(", ")),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_spec_round_trips_and_rejects_garbage() {
        assert_eq!(BackendSpec::parse("toy").unwrap(), BackendSpec::Toy);
        let ck = BackendSpec::parse("checkpoint:/tmp/g.sidg").unwrap();
        assert_eq!(ck, BackendSpec::Checkpoint(PathBuf::from("/tmp/g.sidg")));
        assert_eq!(ck.descriptor(), "checkpoint:/tmp/g.sidg");
        assert!(BackendSpec::parse("checkpoint:").is_err());
        assert!(BackendSpec::parse("resnet").is_err());
    }

    #[test]
    fn settings_precedence_is_flag_env_config_default() {
        // No flags, no env, no config: library defaults.
        let st = Settings::resolve(&CommonArgs::default()).unwrap();
        assert_eq!(st.seed, 0);
        assert_eq!(st.epochs, TrainConfig::default().epochs);
        assert_eq!(st.backend, BackendSpec::Toy);
        assert!(st.swap.is_none());

        // Config file loses to a flag.
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "seed = 9\nepochs = 3\nswap_list = 1,2\n").unwrap();
        let st = Settings::resolve(&CommonArgs {
            config: Some(cfg.clone()),
            epochs: Some(5),
            ..CommonArgs::default()
        })
        .unwrap();
        assert_eq!(st.seed, 9);
        assert_eq!(st.epochs, 5);
        assert_eq!(st.swap.as_ref().unwrap().indices(), &[1, 2]);

        // Unknown config keys are rejected.
        std::fs::write(&cfg, "sed = 9\n").unwrap();
        assert!(Settings::resolve(&CommonArgs {
            config: Some(cfg),
            ..CommonArgs::default()
        })
        .is_err());
    }

    #[test]
    fn effective_swap_follows_backend_depth() {
        let st = Settings::resolve(&CommonArgs::default()).unwrap();
        assert_eq!(
            st.train_config(18).swap,
            SwapList::style_rows_default(18)
        );
        assert_eq!(st.train_config(8).swap, SwapList::style_rows_default(8));
        let explicit = Settings {
            swap: Some("2,3".parse().unwrap()),
            ..st
        };
        assert_eq!(explicit.train_config(18).swap.indices(), &[2, 3]);
    }

    #[test]
    fn grid_list_parsing_rejects_garbage() {
        assert_eq!(
            parse_f64_list("lambda", "0.001, 0.01").unwrap(),
            vec![0.001, 0.01]
        );
        assert!(parse_f64_list("lambda", "0.1,x").is_err());
        assert_eq!(parse_usize_list("refs", "1,7").unwrap(), vec![1, 7]);
        assert!(parse_usize_list("refs", "1,,7").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
