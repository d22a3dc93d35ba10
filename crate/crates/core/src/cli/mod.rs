//! The `strainer` command-line tool.
//!
//! Exit codes: 0 success, 2 usage or configuration error (nothing is
//! written), 3 runtime or numerical error.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use config::{
    build_id, InverseSection, Paths, RunConfig, RunRecord, Summary, Task, TrainSection, DEFAULT_FIT_ITERATIONS,
    DEFAULT_PRETRAIN_ITERATIONS, DEFAULT_SWEEP_BUDGET,
};
pub use report::{aggregate, AggregateRow, RunReport};

use crate::checkpoint::Checkpoint;
use crate::data::{load_preprocessed, save_image, DatasetManifest, PreprocessSpec};
use crate::error::{Error, Result};
use crate::fit::{run_fit, FitOptions, FitProblem};
use crate::inr::{init_model, make_coord_grid, render, Activation, ImageSignal, MlpParams};
use crate::inverse::{
    add_poisson_noise, apply_operator, calibrate_peak, fit_inverse, snr_db, ForwardOperator, Measurement,
};
use crate::strainer::{sweep_shared_layers, sweep_to_csv, train_shared_encoder, transfer_init_from_encoder};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "strainer",
    version,
    about = "Shared-encoder pretraining and transfer fitting for coordinate MLPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a shared encoder on the manifest's train split.
    Pretrain(PretrainArgs),
    /// Fit one image from a random, encoder or full-model initialization.
    Fit(FitArgs),
    /// Denoising or super-resolution through a forward operator.
    Inverse(InverseArgs),
    /// Pretrain and transfer for several encoder depths.
    Sweep(SweepArgs),
    /// Summarize run directories.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run config or run record; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub encoder_depth: Option<usize>,
    #[arg(long)]
    pub omega0: Option<f64>,
    /// `sine` or `relu` (ReLU with positional encoding).
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Keep the first K layers fixed during fitting (ablation).
    #[arg(long)]
    pub freeze_encoder: bool,
    /// Square side length after preprocessing.
    #[arg(long)]
    pub size: Option<usize>,
    /// `rgb`, `gray` or `gray3`.
    #[arg(long)]
    pub channels: Option<String>,
    /// Leave the wall_ms column empty so CSVs are reproducible byte for byte.
    #[arg(long)]
    pub no_wall_clock: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Image to fit. Defaults to the manifest test split entry at --test-index.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub test_index: Option<usize>,
    /// `random`, `encoder:PATH` or `full:PATH`.
    #[arg(long)]
    pub init: Option<String>,
    /// Iterations at which to capture gradient histograms, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub histograms: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args)]
pub struct InverseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// `denoise` or `sr`.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub factor: Option<usize>,
    /// Poisson peak (photon count at intensity 1).
    #[arg(long, conflicts_with = "target_snr_db")]
    pub peak: Option<f64>,
    /// Calibrate the Poisson peak to this SNR in dB (default 2).
    #[arg(long)]
    pub target_snr_db: Option<f64>,
    /// Encoder checkpoint for transfer initialization.
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Ground truth, when --image is already a measurement.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Clean image from which the measurement is simulated.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub test_index: Option<usize>,
    /// Treat --image as the measurement itself.
    #[arg(long)]
    pub observed: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Encoder depths to compare, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub k_list: Option<Vec<usize>>,
    /// Test-time iterations per K.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub test_index: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run directories containing run.json.
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

trait ExitCode<T> {
    fn usage(self) -> CliResult<T>;
    fn runtime(self) -> CliResult<T>;
}

impl<T> ExitCode<T> for Result<T> {
    fn usage(self) -> CliResult<T> {
        self.map_err(|error| CliError {
            code: EXIT_USAGE,
            error,
        })
    }

    fn runtime(self) -> CliResult<T> {
        self.map_err(|error| CliError {
            code: EXIT_RUNTIME,
            error,
        })
    }
}

fn config_error<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Error::Config(msg.into())).usage()
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Pretrain(a) => cmd_pretrain(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Inverse(a) => cmd_inverse(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

/// Config file (or defaults) with flag overrides applied; flags win.
pub fn build_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let m = &mut cfg.model;
    if let Some(v) = common.width {
        m.width = v;
    }
    if let Some(v) = common.depth {
        m.depth = v;
    }
    if let Some(v) = common.encoder_depth {
        m.encoder_depth = v;
    }
    if let Some(name) = &common.activation {
        m.activation = match name.as_str() {
            "sine" => Activation::sine(),
            "relu" => Activation::relu_posenc(),
            other => {
                return Err(Error::Config(format!(
                    "unknown activation {other:?} (expected sine or relu)"
                )))
            }
        };
    }
    if let Some(w0) = common.omega0 {
        match &mut m.activation {
            Activation::Sine { omega0 } => *omega0 = w0,
            Activation::ReluPosenc { .. } => return Err(Error::Config("--omega0 applies to sine models only".into())),
        }
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = common.iterations {
        cfg.train.iterations = Some(v);
    }
    if let Some(v) = common.log_every {
        if v == 0 {
            return Err(Error::Config("--log-every must be >= 1".into()));
        }
        cfg.train.log_every = Some(v);
    }
    if common.freeze_encoder {
        cfg.freeze_encoder = true;
    }
    if common.no_wall_clock {
        cfg.wall_clock = false;
    }
    if let Some(v) = common.size {
        cfg.preprocess.size = v;
    }
    if let Some(v) = &common.channels {
        cfg.preprocess.channels = v.parse()?;
    }
    if let Some(v) = &common.manifest {
        cfg.paths.manifest = Some(v.clone());
    }
    if let Some(v) = &common.out {
        cfg.paths.out = Some(v.clone());
    }
    Ok(cfg)
}

fn finish_config(cfg: RunConfig, default_iterations: usize) -> Result<RunConfig> {
    let cfg = cfg.resolved(default_iterations);
    cfg.validate()?;
    if cfg.paths.out.is_none() {
        return Err(Error::Config("--out is required".into()));
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let out = cfg.paths.out.clone().expect("validated");
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::io(&out, e))
        .runtime()?;
    Ok(out)
}

fn preprocess_spec(cfg: &RunConfig) -> PreprocessSpec {
    cfg.preprocess
}

struct LoadedManifest {
    manifest: DatasetManifest,
    base: PathBuf,
}

fn load_manifest(cfg: &RunConfig) -> Result<LoadedManifest> {
    let path = cfg
        .paths
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("--manifest is required".into()))?;
    let manifest = DatasetManifest::load(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedManifest { manifest, base })
}

fn load_split(cfg: &RunConfig, m: &LoadedManifest, split: &[String]) -> Result<Vec<ImageSignal>> {
    m.manifest
        .resolve(&m.base, split)
        .iter()
        .map(|p| load_preprocessed(p, &preprocess_spec(cfg)))
        .collect()
}

/// `paths.image` if set, otherwise entry `test_index` of the manifest test split.
fn input_image_path(cfg: &RunConfig) -> Result<PathBuf> {
    if let Some(p) = &cfg.paths.image {
        return Ok(p.clone());
    }
    let m = load_manifest(cfg).map_err(|e| match e {
        Error::Config(_) => Error::Config("--image or --manifest is required".into()),
        other => other,
    })?;
    let entry = m.manifest.test.get(cfg.test_index).ok_or_else(|| {
        Error::Config(format!(
            "test index {} outside the {}-image test split",
            cfg.test_index,
            m.manifest.test.len()
        ))
    })?;
    Ok(m.manifest.resolve(&m.base, std::slice::from_ref(entry)).remove(0))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn wall_ms(cfg: &RunConfig, start: Instant) -> Option<f64> {
    cfg.wall_clock.then(|| start.elapsed().as_secs_f64() * 1e3)
}

pub fn cmd_pretrain(args: &PretrainArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = build_config(&args.common)
        .and_then(|c| finish_config(c, DEFAULT_PRETRAIN_ITERATIONS))
        .usage()?;
    let m = load_manifest(&cfg).usage()?;
    if m.manifest.train.is_empty() {
        return config_error("manifest train split is empty");
    }
    let images = load_split(&cfg, &m, &m.manifest.train).usage()?;
    let train = cfg.train_config(DEFAULT_PRETRAIN_ITERATIONS);

    let (state, logs) = train_shared_encoder(&images, &cfg.model, &train, cfg.seed).runtime()?;
    let out = out_dir(&cfg)?;
    Checkpoint::encoder(cfg.model, state.encoder.clone())
        .and_then(|ck| ck.save(&out.join("encoder.strn")))
        .runtime()?;
    let mut fitlogs = Vec::with_capacity(logs.len());
    for (i, log) in logs.iter().enumerate() {
        let name = format!("fitlog_{i:03}.csv");
        log.write_csv(&out.join(&name), cfg.wall_clock).runtime()?;
        fitlogs.push(name);
    }
    let finals: Vec<f64> = logs.iter().filter_map(|l| l.last().map(|r| r.psnr_db)).collect();
    let summary = Summary {
        psnr: Some(finals.iter().sum::<f64>() / finals.len() as f64),
        ..Summary::default()
    };
    let record = RunRecord {
        command: "pretrain".into(),
        method: format!("pretrain-{}", images.len()),
        build_id: build_id(),
        config: cfg.clone(),
        fitlogs,
        summary,
        total_wall_ms: wall_ms(&cfg, start),
    };
    record.save(&out.join("run.json")).runtime()?;
    println!(
        "pretrained {} decoders for {} iterations; mean final PSNR {:.3} dB",
        images.len(),
        train.iterations,
        record.summary.psnr.unwrap_or(f64::NAN)
    );
    Ok(())
}

enum InitSource {
    Random,
    Encoder(Checkpoint),
    Full(Checkpoint),
}

impl InitSource {
    fn parse(spec: &str, cfg: &RunConfig) -> Result<Self> {
        let (kind, path) = match spec.split_once(':') {
            Some((k, p)) => (k, Some(p)),
            None => (spec, None),
        };
        let load = |want_fragment: bool| -> Result<Checkpoint> {
            let path = path.ok_or_else(|| Error::Config(format!("--init {kind} needs a path ({kind}:PATH)")))?;
            let ck = Checkpoint::load(Path::new(path))?;
            if ck.encoder_fragment != want_fragment {
                return Err(Error::Config(format!(
                    "{path} is {} checkpoint",
                    if ck.encoder_fragment {
                        "an encoder"
                    } else {
                        "a full-model"
                    }
                )));
            }
            ck.check_compatible(&cfg.model)?;
            Ok(ck)
        };
        match (kind, path) {
            ("random", None) => Ok(InitSource::Random),
            ("encoder", _) => Ok(InitSource::Encoder(load(true)?)),
            ("full", _) => Ok(InitSource::Full(load(false)?)),
            _ => Err(Error::Config(format!(
                "unknown --init {spec:?} (expected random, encoder:PATH or full:PATH)"
            ))),
        }
    }

    fn method(&self) -> &'static str {
        match self {
            InitSource::Random => "siren",
            InitSource::Encoder(_) => "strainer",
            InitSource::Full(_) => "finetune",
        }
    }

    fn params(&self, cfg: &RunConfig) -> Result<MlpParams> {
        match self {
            InitSource::Random => init_model(&cfg.model, cfg.seed),
            InitSource::Encoder(ck) => transfer_init_from_encoder(&cfg.model, &ck.params, cfg.seed),
            InitSource::Full(ck) => Ok(ck.params.clone()),
        }
    }
}

fn freeze_layers(cfg: &RunConfig) -> usize {
    if cfg.freeze_encoder {
        cfg.model.encoder_depth
    } else {
        0
    }
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = build_config(&args.common)
        .map(|mut c| {
            if let Some(p) = &args.image {
                c.paths.image = Some(p.clone());
            }
            if let Some(i) = args.test_index {
                c.test_index = i;
            }
            if let Some(init) = &args.init {
                c.paths.checkpoint = Some(init.clone());
            }
            if let Some(h) = &args.histograms {
                c.histogram_iterations = h.clone();
            }
            c
        })
        .and_then(|c| finish_config(c, DEFAULT_FIT_ITERATIONS))
        .usage()?;
    let image = input_image_path(&cfg)
        .and_then(|p| load_preprocessed(&p, &preprocess_spec(&cfg)))
        .usage()?;
    let init = InitSource::parse(cfg.paths.checkpoint.as_deref().unwrap_or("random"), &cfg).usage()?;
    let train = cfg.train_config(DEFAULT_FIT_ITERATIONS);
    let options = FitOptions {
        freeze_layers: freeze_layers(&cfg),
        histogram_iterations: cfg.histogram_iterations.clone(),
        histogram_bins: cfg.histogram_bins,
        track_best: false,
        final_ssim: true,
    };

    let params = init.params(&cfg).runtime()?;
    let problem = FitProblem::signal(&image).runtime()?;
    let outcome = run_fit(params, &cfg.model.activation, &problem, &train, &options).runtime()?;
    let out = out_dir(&cfg)?;
    Checkpoint::full(cfg.model, outcome.params.clone())
        .and_then(|ck| ck.save(&out.join("fitted.strn")))
        .runtime()?;
    outcome
        .log
        .write_csv(&out.join("fitlog.csv"), cfg.wall_clock)
        .runtime()?;
    if !outcome.log.gradient_histograms.is_empty() {
        write_text(
            &out.join("histograms.csv"),
            &crate::metrics::histograms_to_csv(&outcome.log.gradient_histograms),
        )
        .runtime()?;
    }
    let recon = render(&outcome.params, &problem.grid, &cfg.model.activation).runtime()?;
    save_image(&out.join("recon.png"), &recon).runtime()?;
    let last = outcome.log.last().expect("at least one record");
    let summary = Summary {
        psnr: Some(last.psnr_db),
        ssim: last.ssim,
        best_iteration: Some(outcome.best.iteration),
        best_psnr: Some(outcome.best.psnr_db),
    };
    write_json(&out.join("summary.json"), &summary).runtime()?;
    let record = RunRecord {
        command: "fit".into(),
        method: init.method().into(),
        build_id: build_id(),
        config: cfg.clone(),
        fitlogs: vec!["fitlog.csv".into()],
        summary,
        total_wall_ms: wall_ms(&cfg, start),
    };
    record.save(&out.join("run.json")).runtime()?;
    println!(
        "{} fit: {} iterations, PSNR {:.3} dB, SSIM {:.4}",
        init.method(),
        train.iterations,
        last.psnr_db,
        last.ssim.unwrap_or(f64::NAN)
    );
    Ok(())
}

struct InversePlan {
    measurement: Measurement,
    peak: Option<f64>,
    snr_db: Option<f64>,
}

fn plan_inverse(cfg: &RunConfig) -> Result<InversePlan> {
    let task = cfg
        .inverse
        .task
        .ok_or_else(|| Error::Config("--task denoise|sr is required".into()))?;
    let spec = preprocess_spec(cfg);
    let image_path = input_image_path(cfg)?;
    let operator = match task {
        Task::Denoise => ForwardOperator::Identity,
        Task::Sr => {
            if cfg.inverse.factor < 2 {
                return Err(Error::Config(format!(
                    "--factor must be >= 2, got {}",
                    cfg.inverse.factor
                )));
            }
            ForwardOperator::Downsample {
                factor: cfg.inverse.factor,
            }
        }
    };
    if cfg.inverse.observed {
        let observed = load_preprocessed(&image_path, &spec)?;
        let latent = match operator {
            ForwardOperator::Downsample { factor } => spec.size * factor,
            ForwardOperator::Identity => spec.size,
        };
        let ground_truth = match &cfg.paths.gt {
            Some(p) => Some(load_preprocessed(p, &PreprocessSpec { size: latent, ..spec })?),
            None => None,
        };
        return Ok(InversePlan {
            measurement: Measurement {
                observed,
                operator,
                ground_truth,
            },
            peak: None,
            snr_db: None,
        });
    }
    let clean = load_preprocessed(&image_path, &spec)?;
    let (observed, peak, snr) = match task {
        Task::Sr => (apply_operator(&operator, &clean)?, None, None),
        Task::Denoise => {
            let peak = match cfg.inverse.peak {
                Some(p) if p > 0.0 && p.is_finite() => p,
                Some(p) => return Err(Error::Config(format!("--peak must be positive, got {p}"))),
                None => calibrate_peak(&clean, cfg.inverse.target_snr_db.unwrap_or(2.0), cfg.seed)?.0,
            };
            let noisy = add_poisson_noise(&clean, peak, cfg.seed)?;
            let snr = snr_db(&clean, &noisy)?;
            (noisy, Some(peak), Some(snr))
        }
    };
    Ok(InversePlan {
        measurement: Measurement {
            observed,
            operator,
            ground_truth: Some(clean),
        },
        peak,
        snr_db: snr,
    })
}

#[derive(serde::Serialize)]
struct InverseSummary<'a> {
    #[serde(flatten)]
    summary: &'a Summary,
    task: Task,
    peak: Option<f64>,
    snr_db: Option<f64>,
}

pub fn cmd_inverse(args: &InverseArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = build_config(&args.common)
        .and_then(|mut c| {
            if let Some(t) = &args.task {
                c.inverse.task = Some(t.parse()?);
            }
            if let Some(f) = args.factor {
                c.inverse.factor = f;
            }
            if let Some(p) = args.peak {
                c.inverse.peak = Some(p);
                c.inverse.target_snr_db = None;
            }
            if let Some(s) = args.target_snr_db {
                c.inverse.target_snr_db = Some(s);
                c.inverse.peak = None;
            }
            if args.observed {
                c.inverse.observed = true;
            }
            if let Some(p) = &args.encoder {
                c.paths.checkpoint = Some(format!("encoder:{}", p.display()));
            }
            if let Some(p) = &args.gt {
                c.paths.gt = Some(p.clone());
            }
            if let Some(p) = &args.image {
                c.paths.image = Some(p.clone());
            }
            if let Some(i) = args.test_index {
                c.test_index = i;
            }
            Ok(c)
        })
        .and_then(|c| finish_config(c, DEFAULT_FIT_ITERATIONS))
        .usage()?;
    let plan = plan_inverse(&cfg).usage()?;
    let task = cfg.inverse.task.expect("planned");
    let init = InitSource::parse(cfg.paths.checkpoint.as_deref().unwrap_or("random"), &cfg).usage()?;
    if matches!(init, InitSource::Full(_)) {
        return config_error("inverse accepts --encoder checkpoints only");
    }
    let train = cfg.train_config(DEFAULT_FIT_ITERATIONS);
    let options = FitOptions {
        freeze_layers: freeze_layers(&cfg),
        final_ssim: true,
        ..FitOptions::default()
    };

    let params = init.params(&cfg).runtime()?;
    let fit = fit_inverse(params, &cfg.model.activation, &plan.measurement, &train, &options).runtime()?;
    let out = out_dir(&cfg)?;
    let (lh, lw) = plan.measurement.latent_dims();
    let grid = make_coord_grid(lh, lw).runtime()?;
    let export = if plan.measurement.ground_truth.is_some() {
        &fit.best_params
    } else {
        &fit.params
    };
    let restored = render(export, &grid, &cfg.model.activation).runtime()?;
    save_image(&out.join("restored.png"), &restored).runtime()?;
    save_image(&out.join("observed.png"), &plan.measurement.observed).runtime()?;
    Checkpoint::full(cfg.model, fit.params.clone())
        .and_then(|ck| ck.save(&out.join("fitted.strn")))
        .runtime()?;
    fit.log.write_csv(&out.join("fitlog.csv"), cfg.wall_clock).runtime()?;
    let last = fit.log.last().expect("at least one record");
    let summary = Summary {
        psnr: Some(last.psnr_db),
        ssim: last.ssim,
        best_iteration: Some(fit.best.iteration),
        best_psnr: Some(fit.best.psnr_db),
    };
    write_json(
        &out.join("summary.json"),
        &InverseSummary {
            summary: &summary,
            task,
            peak: plan.peak,
            snr_db: plan.snr_db,
        },
    )
    .runtime()?;
    let task_name = match task {
        Task::Denoise => "denoise",
        Task::Sr => "sr",
    };
    let record = RunRecord {
        command: "inverse".into(),
        method: format!("{task_name}-{}", init.method()),
        build_id: build_id(),
        config: cfg.clone(),
        fitlogs: vec!["fitlog.csv".into()],
        summary,
        total_wall_ms: wall_ms(&cfg, start),
    };
    record.save(&out.join("run.json")).runtime()?;
    println!(
        "{task_name}: peak latent PSNR {:.3} dB at iteration {}, final {:.3} dB",
        fit.best.psnr_db, fit.best.iteration, last.psnr_db
    );
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg = build_config(&args.common)
        .map(|mut c| {
            if let Some(k) = &args.k_list {
                c.k_list = k.clone();
            }
            if let Some(b) = args.budget {
                c.sweep_budget = b;
            }
            if let Some(p) = &args.image {
                c.paths.image = Some(p.clone());
            }
            if let Some(i) = args.test_index {
                c.test_index = i;
            }
            // The sweep overrides K per row; the base config only needs a valid one.
            if let Some(&k) = c.k_list.first() {
                c.model.encoder_depth = k;
            }
            c
        })
        .and_then(|c| finish_config(c, DEFAULT_PRETRAIN_ITERATIONS))
        .usage()?;
    if cfg.k_list.is_empty() {
        return config_error("--k-list is empty");
    }
    for &k in &cfg.k_list {
        cfg.model.with_encoder_depth(k).validate().usage()?;
    }
    let m = load_manifest(&cfg).usage()?;
    if m.manifest.train.is_empty() {
        return config_error("manifest train split is empty");
    }
    let images = load_split(&cfg, &m, &m.manifest.train).usage()?;
    let test = input_image_path(&cfg)
        .and_then(|p| load_preprocessed(&p, &preprocess_spec(&cfg)))
        .usage()?;
    let pretrain = cfg.train_config(DEFAULT_PRETRAIN_ITERATIONS);

    let rows = sweep_shared_layers(
        &images,
        &cfg.model,
        &cfg.k_list,
        &test,
        &pretrain,
        cfg.sweep_budget,
        cfg.seed,
    )
    .runtime()?;
    let out = out_dir(&cfg)?;
    write_text(&out.join("sweep.csv"), &sweep_to_csv(&rows)).runtime()?;
    let record = RunRecord {
        command: "sweep".into(),
        method: "sweep".into(),
        build_id: build_id(),
        config: cfg.clone(),
        fitlogs: Vec::new(),
        summary: Summary::default(),
        total_wall_ms: wall_ms(&cfg, start),
    };
    record.save(&out.join("run.json")).runtime()?;
    for r in &rows {
        println!("K={} final PSNR {:.3} dB", r.encoder_depth, r.final_psnr_db);
    }
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    if args.runs.is_empty() {
        return config_error("report needs at least one run directory");
    }
    let out = args
        .out
        .clone()
        .ok_or_else(|| Error::Config("--out is required".into()))
        .usage()?;
    let runs = args
        .runs
        .iter()
        .map(|dir| report::load_run(dir))
        .collect::<Result<Vec<_>>>()
        .usage()?;
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::io(&out, e))
        .runtime()?;
    for (i, run) in runs.iter().enumerate() {
        let name = run
            .dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let dir = out.join(format!("{i:02}_{name}"));
        std::fs::create_dir_all(&dir)
            .map_err(|e| Error::io(&dir, e))
            .runtime()?;
        report::write_run_report(run, &dir).runtime()?;
    }
    let rows = aggregate(&runs);
    write_text(&out.join("aggregate.csv"), &report::aggregate_csv(&rows)).runtime()?;
    write_json(&out.join("aggregate.json"), &rows).runtime()?;
    print!("{}", report::aggregate_table(&rows));
    Ok(())
}
