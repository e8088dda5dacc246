//! Command-line front end.
//!
//! Image sources given with `--input`, `--real` or `--fake` may be a
//! directory of PNG/JPEG files, a dataset descriptor (`.json`) or an image
//! set written by `sample` (`.fgimg`).
//!
//! Exit status: 0 on success, 2 for usage errors, 3 when a config file does
//! not parse, 1 for anything else. `FREQGAN_SEED` overrides seeds that are
//! not given explicitly on the command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    fake_detection_probe, frequency_gap, mean_spectrum, normalize_maps, sfa_sensitivity_map,
    ProbeConfig, ProbeDomain, ProbeResult,
};
use crate::container::{load_checkpoint, load_image_set, save_image_set};
use crate::data::{image_files, load_dataset, DatasetDescriptor};
use crate::error::{Error, Result};
use crate::objectives::{MatchDistance, MatchTransform, Regularizer};
use crate::report::{
    ensure_dir, image_grid, unix_ms, write_grid_csv, write_json, write_pgm, write_png, write_text,
    RunManifest,
};
use crate::spectral::{dct2, f_drop};
use crate::tensor::Tensor;
use crate::trainer::{sample, sweep, sweep_csv, train_gan, ExperimentConfig, RunFiles, SweepGrid};

pub const SEED_ENV: &str = "FREQGAN_SEED";

#[derive(Parser, Debug)]
#[command(name = "freqgan", version, about = "Frequency-domain GAN training and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model from a JSON experiment config
    Train(TrainArgs),
    /// Train a (gamma, lambda) grid
    Sweep(SweepArgs),
    /// Apply the DCT low-pass filter to images for one or more gammas
    Filter(FilterArgs),
    /// Single-Fourier-attack sensitivity maps of discriminators
    Attack(AttackArgs),
    /// Frequency gap between two image sets
    Gap(GapArgs),
    /// Mean DCT magnitude spectra of image sets
    Spectrum(SpectrumArgs),
    /// Linear real/fake probe accuracies
    Detect(DetectArgs),
    /// Generate images from a checkpoint
    Sample(SampleArgs),
}

#[derive(Args, Debug, Clone)]
struct SourceOpts {
    /// resolution images from directories are resized to
    #[arg(long, default_value_t = 16)]
    size: usize,
    /// 1 (gray) or 3 (RGB) for images read from directories
    #[arg(long, default_value_t = 3)]
    channels: usize,
    /// use at most this many images per source (0 = all)
    #[arg(long, default_value_t = 0)]
    limit: usize,
}

#[derive(Args, Debug, Clone)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    regularizer: Option<Regularizer>,
    #[arg(long)]
    transform: Option<MatchTransform>,
    #[arg(long)]
    distance: Option<MatchDistance>,
    #[arg(long)]
    eval_every: Option<u64>,
    /// log 0 instead of elapsed milliseconds, making logs byte-identical across reruns
    #[arg(long)]
    no_wall_time: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSON experiment config; omitted fields take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    gammas: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    lambdas: Vec<f64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// repeat or comma-separate for several filters
    #[arg(long, value_delimiter = ',', required = true)]
    gamma: Vec<f64>,
    #[command(flatten)]
    source: SourceOpts,
}

#[derive(Args, Debug)]
struct AttackArgs {
    /// one or more checkpoints; their maps share one normalisation
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// perturbation size on the 0..255 pixel scale
    #[arg(long, default_value_t = 10.0 / 255.0)]
    epsilon: f64,
    #[command(flatten)]
    source: SourceOpts,
}

#[derive(Args, Debug)]
struct GapArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    fake: PathBuf,
    /// also report the gap after masking with M(gamma)
    #[arg(long)]
    lower_band: bool,
    #[arg(long, default_value_t = 0.8)]
    gamma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    source: SourceOpts,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    source: SourceOpts,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum DomainArg {
    Spatial,
    Frequency,
    Both,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    fake: PathBuf,
    #[arg(long, value_enum, default_value_t = DomainArg::Both)]
    domain: DomainArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    source: SourceOpts,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// images per grid row
    #[arg(long, default_value_t = 8)]
    cols: usize,
}

/// Parse arguments (including the program name) and run. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("freqgan: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 3,
        _ => 1,
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn seed_or(flag: Option<u64>, fallback: u64) -> Result<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(fallback),
    })
}

/// Parse an experiment config, reporting the line, column and field of any error.
pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| {
        Error::Config(format!(
            "{}:{}:{}: {e}",
            origin.display(),
            e.line(),
            e.column()
        ))
    })
}

fn load_config(path: Option<&Path>, o: &Overrides) -> Result<ExperimentConfig> {
    let mut c = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config(&text, p)?
        }
        None => ExperimentConfig::default(),
    };
    c.seed = seed_or(o.seed, c.seed)?;
    if let Some(v) = o.iterations {
        c.iterations = v;
    }
    if let Some(v) = o.gamma {
        c.gamma = v;
    }
    if let Some(v) = o.lambda {
        c.lambda = v;
    }
    if let Some(v) = o.regularizer {
        c.regularizer = v;
    }
    if let Some(v) = o.transform {
        c.match_variant.transform = v;
    }
    if let Some(v) = o.distance {
        c.match_variant.distance = v;
    }
    if let Some(v) = o.eval_every {
        c.eval_every = v;
    }
    if o.no_wall_time {
        c.record_wall_time = false;
    }
    c.validate()?;
    Ok(c)
}

/// Load an image set from a directory, a descriptor or an `.fgimg` file.
pub fn load_source(path: &Path, size: usize, channels: usize, limit: usize) -> Result<Tensor> {
    let set = if path.is_dir() {
        crate::data::load_image_dir(path, size, channels, limit)?
    } else if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let desc: DatasetDescriptor = serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
        })?;
        load_dataset(&desc)?
    } else {
        load_image_set(path)?
    };
    if limit > 0 && set.shape()[0] > limit {
        return set.select0(&(0..limit).collect::<Vec<_>>());
    }
    Ok(set)
}

fn source(path: &Path, o: &SourceOpts) -> Result<Tensor> {
    load_source(path, o.size, o.channels, o.limit)
}

/// Names for the images of a source: file stems for directories, indices otherwise.
fn image_names(path: &Path, n: usize) -> Result<Vec<String>> {
    if path.is_dir() {
        let files = image_files(path)?;
        Ok(files
            .iter()
            .take(n)
            .map(|f| f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            .collect())
    } else {
        Ok((0..n).map(|i| format!("{i:05}")).collect())
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Gap(a) => cmd_gap(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Sample(a) => cmd_sample(a),
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let started = unix_ms();
    let config = load_config(a.config.as_deref(), &a.overrides)?;
    ensure_dir(&a.out)?;
    let data = load_dataset(&config.dataset)?;
    let files = RunFiles { dir: a.out.clone() };
    let out = train_gan(&config, &data, Some(&files))?;
    let config_path = a.out.join("config.json");
    write_json(&config_path, &config)?;
    let dataset_path = a.out.join("dataset.json");
    write_json(&dataset_path, &config.dataset)?;

    let mut m = RunManifest::new("train", serde_json::to_value(&config)?, started);
    for p in [files.metrics(), files.last(), files.best(), config_path, dataset_path] {
        m.add_output(&p, &a.out);
    }
    for r in &out.log.records {
        m.add_output(&files.checkpoint(r.iteration), &a.out);
    }
    if let Some(r) = out.log.last() {
        println!(
            "iteration {} d_loss {} g_loss {} gap {} lower_band_gap {}",
            r.iteration, r.d_loss, r.g_loss, r.gap, r.lower_band_gap
        );
    }
    m.write(&a.out)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let started = unix_ms();
    let config = load_config(a.config.as_deref(), &a.overrides)?;
    ensure_dir(&a.out)?;
    let data = load_dataset(&config.dataset)?;
    let grid = SweepGrid {
        gammas: a.gammas,
        lambdas: a.lambdas,
    };
    let rows = sweep(&config, &grid, &data, Some(&a.out))?;
    for r in &rows {
        let dir = a.out.join(format!("gamma{}_lambda{}", r.gamma, r.lambda));
        let cell = ExperimentConfig {
            gamma: r.gamma,
            lambda: r.lambda,
            seed: r.seed,
            ..config.clone()
        };
        let mut m = RunManifest::new("sweep-cell", serde_json::to_value(&cell)?, started);
        m.add_output(&dir.join("metrics.csv"), &dir);
        m.write(&dir)?;
    }
    let table = a.out.join("sweep.csv");
    write_text(&table, &sweep_csv(&rows))?;
    print!("{}", sweep_csv(&rows));
    let mut m = RunManifest::new(
        "sweep",
        serde_json::json!({ "base": config, "grid": grid }),
        started,
    );
    m.add_output(&table, &a.out);
    m.write(&a.out)
}

fn cmd_filter(a: FilterArgs) -> Result<()> {
    let started = unix_ms();
    let images = source(&a.input, &a.source)?;
    let names = image_names(&a.input, images.shape()[0])?;
    ensure_dir(&a.out)?;
    let mut m = RunManifest::new(
        "filter",
        serde_json::json!({ "input": a.input, "gamma": a.gamma, "size": a.source.size }),
        started,
    );
    for &gamma in &a.gamma {
        let dir = a.out.join(format!("gamma_{gamma}"));
        ensure_dir(&dir)?;
        let filtered = f_drop(&images, gamma)?;
        for (i, name) in names.iter().enumerate() {
            let img = filtered.index0(i)?;
            let png = dir.join(format!("{name}.png"));
            write_png(&png, &img)?;
            // channel-averaged log magnitude spectrum of the filtered image
            let spec = dct2(&img)?.0;
            let [c, h, w] = [spec.shape()[0], spec.shape()[1], spec.shape()[2]];
            let mut mag = vec![0.0; h * w];
            for p in spec.data().chunks_exact(h * w) {
                for (a, x) in mag.iter_mut().zip(p) {
                    *a += x.abs() / c as f64;
                }
            }
            let disp: Vec<f64> = mag.iter().map(|x| x.ln_1p()).collect();
            let max = disp.iter().copied().fold(0.0, f64::max);
            let pgm = dir.join(format!("{name}_spectrum.pgm"));
            write_pgm(&pgm, &disp, h, w, max)?;
            m.add_output(&png, &a.out);
            m.add_output(&pgm, &a.out);
        }
    }
    m.write(&a.out)
}

fn cmd_attack(a: AttackArgs) -> Result<()> {
    let started = unix_ms();
    let images = source(&a.input, &a.source)?;
    ensure_dir(&a.out)?;
    let mut maps = Vec::new();
    let mut stems = Vec::new();
    for ck in &a.checkpoint {
        let (model, _) = load_checkpoint(ck)?;
        maps.push(sfa_sensitivity_map(&model, &images, a.epsilon)?);
        let stem = ck.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        stems.push(format!("{}_{stem}", stems.len()));
    }
    let normalized = normalize_maps(&maps);
    let mut m = RunManifest::new(
        "attack",
        serde_json::json!({ "checkpoints": a.checkpoint, "input": a.input, "epsilon": a.epsilon }),
        started,
    );
    let mut summary = Vec::new();
    for ((map, norm), stem) in maps.iter().zip(&normalized).zip(&stems) {
        let csv = a.out.join(format!("sfa_{stem}.csv"));
        let pgm = a.out.join(format!("sfa_{stem}.pgm"));
        write_grid_csv(&csv, &map.values, map.size)?;
        write_pgm(&pgm, norm, map.size, map.size, 1.0)?;
        m.add_output(&csv, &a.out);
        m.add_output(&pgm, &a.out);
        summary.push(serde_json::json!({
            "map": stem,
            "max": map.max(),
            "high_band_mean": map.high_band_mean(0.2),
            "n_images": map.n_images,
        }));
    }
    let json = a.out.join("sfa.json");
    write_json(&json, &summary)?;
    m.add_output(&json, &a.out);
    m.write(&a.out)
}

fn cmd_gap(a: GapArgs) -> Result<()> {
    let started = unix_ms();
    let real = source(&a.real, &a.source)?;
    let fake = source(&a.fake, &a.source)?;
    let report = frequency_gap(&real, &fake, a.lower_band.then_some(a.gamma))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        let json = out.join("gap.json");
        write_json(&json, &report)?;
        let mut m = RunManifest::new(
            "gap",
            serde_json::json!({ "real": a.real, "fake": a.fake, "lower_band": a.lower_band, "gamma": a.gamma }),
            started,
        );
        m.add_output(&json, out);
        m.write(out)?;
    }
    Ok(())
}

fn cmd_spectrum(a: SpectrumArgs) -> Result<()> {
    let started = unix_ms();
    ensure_dir(&a.out)?;
    let mut spectra = Vec::new();
    for p in &a.input {
        spectra.push(mean_spectrum(&source(p, &a.source)?)?);
    }
    // one display scale for every spectrum in the report
    let max = spectra
        .iter()
        .flat_map(|s| s.display.data().iter().copied())
        .fold(0.0, f64::max);
    let mut m = RunManifest::new("spectrum", serde_json::json!({ "inputs": a.input }), started);
    for (i, s) in spectra.iter().enumerate() {
        let (h, w) = (s.values.shape()[0], s.values.shape()[1]);
        let csv = a.out.join(format!("spectrum_{i}.csv"));
        let pgm = a.out.join(format!("spectrum_{i}.pgm"));
        write_grid_csv(&csv, s.values.data(), w)?;
        write_pgm(&pgm, s.display.data(), h, w, max)?;
        m.add_output(&csv, &a.out);
        m.add_output(&pgm, &a.out);
    }
    m.write(&a.out)
}

fn cmd_detect(a: DetectArgs) -> Result<()> {
    let started = unix_ms();
    let real = source(&a.real, &a.source)?;
    let fake = source(&a.fake, &a.source)?;
    let seed = seed_or(a.seed, 0)?;
    let config = ProbeConfig {
        epochs: a.epochs,
        ..ProbeConfig::default()
    };
    let domains: &[ProbeDomain] = match a.domain {
        DomainArg::Spatial => &[ProbeDomain::Spatial],
        DomainArg::Frequency => &[ProbeDomain::Frequency],
        DomainArg::Both => &[ProbeDomain::Spatial, ProbeDomain::Frequency],
    };
    let results: Vec<ProbeResult> = domains
        .iter()
        .map(|&d| fake_detection_probe(&real, &fake, d, seed, &config))
        .collect::<Result<_>>()?;
    println!("{}", serde_json::to_string_pretty(&results)?);
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        let json = out.join("probe.json");
        write_json(&json, &results)?;
        let mut m = RunManifest::new(
            "detect",
            serde_json::json!({ "real": a.real, "fake": a.fake, "seed": seed, "epochs": a.epochs }),
            started,
        );
        m.add_output(&json, out);
        m.write(out)?;
    }
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let started = unix_ms();
    let (model, iteration) = load_checkpoint(&a.checkpoint)?;
    let seed = seed_or(a.seed, 0)?;
    let images = sample(&model, a.n, seed)?;
    ensure_dir(&a.out)?;
    let set = a.out.join("samples.fgimg");
    save_image_set(&set, &images)?;
    let grid = a.out.join("grid.png");
    write_png(&grid, &image_grid(&images, a.cols)?)?;
    let mut m = RunManifest::new(
        "sample",
        serde_json::json!({ "checkpoint": a.checkpoint, "iteration": iteration, "n": a.n, "seed": seed }),
        started,
    );
    m.add_output(&set, &a.out);
    m.add_output(&grid, &a.out);
    m.write(&a.out)
}
