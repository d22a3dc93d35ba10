//! The gradient-descent fitting loop shared by single-signal fitting,
//! transfer fitting, fine-tuning and inverse problems, plus [`FitLog`].

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Tape, Tensor};
use crate::error::{Error, Result};
use crate::inr::{forward_on_tape, lift_input, Activation, CoordGrid, ImageSignal, MlpParams};
use crate::inverse::ForwardOperator;
use crate::metrics::{self, GradientHistogram};

/// Optimizer settings for one fitting or pretraining run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Record every `log_every`-th iteration; the last iteration is always recorded.
    pub log_every: usize,
}

impl TrainConfig {
    pub const DEFAULT_LR: f64 = 1e-4;

    /// Logs every iteration up to 2000 iterations and every 10th beyond.
    pub fn new(learning_rate: f64, iterations: usize) -> Self {
        Self {
            learning_rate,
            iterations,
            log_every: default_log_every(iterations),
        }
    }

    pub fn with_log_every(mut self, log_every: usize) -> Self {
        self.log_every = log_every.max(1);
        self
    }

    pub fn should_log(&self, iteration: usize) -> bool {
        iteration.is_multiple_of(self.log_every.max(1)) || iteration == self.iterations
    }
}

pub fn default_log_every(iterations: usize) -> usize {
    if iterations <= 2000 {
        1
    } else {
        10
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitRecord {
    /// Number of optimizer updates applied before this measurement.
    pub iteration: usize,
    pub loss: f64,
    pub psnr_db: f64,
    pub ssim: Option<f64>,
    pub wall_ms: f64,
}

/// Per-iteration trajectory of a fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitLog {
    pub records: Vec<FitRecord>,
    pub gradient_histograms: Vec<GradientHistogram>,
}

pub const FITLOG_HEADER: &str = "iteration,loss,psnr_db,ssim,wall_ms";

impl FitLog {
    pub fn last(&self) -> Option<&FitRecord> {
        self.records.last()
    }

    pub fn at(&self, iteration: usize) -> Option<&FitRecord> {
        self.records.iter().find(|r| r.iteration == iteration)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn psnrs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.psnr_db).collect()
    }

    /// Logged record with the highest PSNR (earliest on ties).
    pub fn best(&self) -> Option<&FitRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&FitRecord>, r| match best {
                Some(b) if b.psnr_db >= r.psnr_db => Some(b),
                _ => Some(r),
            })
    }

    /// CSV with header `iteration,loss,psnr_db,ssim,wall_ms`. Missing SSIM is an
    /// empty field; with `wall_clock = false` the timing column is left empty
    /// so reruns produce identical bytes.
    pub fn to_csv(&self, wall_clock: bool) -> String {
        let mut out = String::from(FITLOG_HEADER);
        out.push('\n');
        for r in &self.records {
            let ssim = r.ssim.map(|s| format!("{s:e}")).unwrap_or_default();
            let wall = if wall_clock {
                format!("{:.3}", r.wall_ms)
            } else {
                String::new()
            };
            let _ = writeln!(out, "{},{:e},{:e},{},{}", r.iteration, r.loss, r.psnr_db, ssim, wall);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<FitLog> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == FITLOG_HEADER => {}
            other => return Err(Error::Data(format!("unexpected FitLog header {other:?}"))),
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Data(format!("FitLog line {}: expected 5 fields", n + 2)));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("FitLog line {}: {e}", n + 2)))
            };
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.trim().is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            records.push(FitRecord {
                iteration: f[0]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Data(format!("FitLog line {}: {e}", n + 2)))?,
                loss: num(f[1])?,
                psnr_db: num(f[2])?,
                ssim: opt(f[3])?,
                wall_ms: opt(f[4])?.unwrap_or(0.0),
            });
        }
        Ok(FitLog {
            records,
            gradient_histograms: Vec::new(),
        })
    }

    pub fn write_csv(&self, path: &Path, wall_clock: bool) -> Result<()> {
        std::fs::write(path, self.to_csv(wall_clock)).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<FitLog> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// What is being fit: a latent image on `grid`, observed through `operator`.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub grid: CoordGrid,
    pub operator: ForwardOperator,
    /// Observation as a `[rows, channels]` tensor in the operator's output space.
    pub observed: Tensor,
    pub channels: usize,
    /// Latent-space image used for PSNR/SSIM logging. When absent the
    /// measurement-space fit is scored against `observed` instead.
    pub reference: Option<ImageSignal>,
}

impl FitProblem {
    /// Plain signal fitting (`A` = identity, reference = the signal).
    pub fn signal(signal: &ImageSignal) -> Result<Self> {
        let grid = crate::inr::make_coord_grid(signal.height(), signal.width())?;
        Ok(Self {
            grid,
            operator: ForwardOperator::Identity,
            observed: signal.to_tensor(),
            channels: signal.channels(),
            reference: Some(signal.clone()),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Leading layers that receive no updates (ablation only).
    pub freeze_layers: usize,
    /// Iterations at which per-layer gradient histograms are captured.
    pub histogram_iterations: Vec<usize>,
    pub histogram_bins: usize,
    /// Keep a copy of the parameters at the best-PSNR iteration.
    pub track_best: bool,
    /// Compute SSIM on the last record.
    pub final_ssim: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestIterate {
    pub iteration: usize,
    pub psnr_db: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: MlpParams,
    pub log: FitLog,
    /// Best PSNR over every iteration (not only logged ones).
    pub best: BestIterate,
    pub best_params: Option<MlpParams>,
}

/// Runs Adam on `‖A(f(p)) − observed‖²` (mean over entries) starting from `init`.
///
/// Record `t` holds the loss and PSNR of the parameters after `t` updates,
/// so `iterations = 0` yields a single record for `init`.
pub fn run_fit(
    init: MlpParams,
    activation: &Activation,
    problem: &FitProblem,
    train: &TrainConfig,
    options: &FitOptions,
) -> Result<FitOutcome> {
    let last_layer = init
        .layers
        .last()
        .ok_or_else(|| Error::Config("cannot fit an empty model".into()))?;
    if last_layer.out_dim() != problem.channels {
        return Err(Error::ArchMismatch {
            expected: format!("{} output channels", problem.channels),
            found: format!("{}", last_layer.out_dim()),
        });
    }
    let (lh, lw) = (problem.grid.height(), problem.grid.width());
    let expected_rows = problem.operator.output_rows(lh, lw)?;
    if problem.observed.rows() != expected_rows || problem.observed.cols() != problem.channels {
        return Err(Error::shape(
            "fit (operator output vs observed)",
            (expected_rows, problem.channels),
            problem.observed.shape(),
        ));
    }
    if let Some(r) = &problem.reference {
        if r.dims() != (lh, lw, problem.channels) {
            return Err(Error::shape(
                "fit (latent vs reference)",
                (lh, lw, problem.channels),
                r.dims(),
            ));
        }
    }

    let input = lift_input(problem.grid.rows(), activation);
    let depth = init.depth();
    let mut params = init.tensors();
    let mut adam = Adam::new(train.learning_rate, &params);
    let mut log = FitLog::default();
    let mut best = BestIterate {
        iteration: 0,
        psnr_db: f64::NEG_INFINITY,
    };
    let mut best_params = None;
    let start = Instant::now();

    for it in 0..=train.iterations {
        let mut tape = Tape::new();
        let vars: Vec<_> = params
            .chunks(2)
            .map(|p| (tape.leaf(p[0].clone()), tape.leaf(p[1].clone())))
            .collect();
        let x = tape.constant(input.clone());
        let pred = forward_on_tape(&mut tape, &vars, x, activation, true)?;
        let measured = problem.operator.record(&mut tape, pred, lh, lw)?;
        let target = tape.constant(problem.observed.clone());
        let loss_var = tape.mse(measured, target)?;
        let loss = tape.value(loss_var).item();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, loss });
        }

        let psnr_db = match &problem.reference {
            Some(r) => metrics::psnr_values(tape.value(pred).data(), r.pixels(), true),
            None => metrics::psnr_values(tape.value(measured).data(), problem.observed.data(), true),
        };
        if psnr_db > best.psnr_db {
            best = BestIterate { iteration: it, psnr_db };
            if options.track_best {
                best_params = Some(MlpParams::from_tensors(params.clone())?);
            }
        }
        if train.should_log(it) {
            let ssim = if options.final_ssim && it == train.iterations {
                final_ssim(tape.value(pred), tape.value(measured), problem, lh, lw)
            } else {
                None
            };
            log.records.push(FitRecord {
                iteration: it,
                loss,
                psnr_db,
                ssim,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        if it == train.iterations {
            break;
        }

        let mut grads = tape.backward(loss_var)?;
        let mut grad_tensors: Vec<Tensor> = vars.iter().flat_map(|&(w, b)| [grads.take(w), grads.take(b)]).collect();
        for g in grad_tensors.iter_mut().take(2 * options.freeze_layers.min(depth)) {
            g.data_mut().fill(0.0);
        }
        if options.histogram_iterations.contains(&it) {
            let bins = if options.histogram_bins == 0 {
                50
            } else {
                options.histogram_bins
            };
            for (layer, pair) in grad_tensors.chunks(2).enumerate() {
                let values: Vec<f64> = pair.iter().flat_map(|t| t.data().iter().copied()).collect();
                log.gradient_histograms
                    .push(metrics::gradient_histogram(&values, bins, layer, it));
            }
        }
        adam.step(&mut params, &grad_tensors)?;
    }

    Ok(FitOutcome {
        params: MlpParams::from_tensors(params)?,
        log,
        best,
        best_params,
    })
}

fn final_ssim(pred: &Tensor, measured: &Tensor, problem: &FitProblem, lh: usize, lw: usize) -> Option<f64> {
    let c = problem.channels;
    let (img, reference) = match &problem.reference {
        Some(r) => (ImageSignal::from_clamped(lh, lw, c, pred.data()).ok()?, r.clone()),
        None => {
            let (oh, ow) = problem.operator.output_dims(lh, lw).ok()?;
            (
                ImageSignal::from_clamped(oh, ow, c, measured.data()).ok()?,
                ImageSignal::from_clamped(oh, ow, c, problem.observed.data()).ok()?,
            )
        }
    };
    metrics::ssim(&img, &reference).ok()
}
