//! Shared-encoder pretraining over `N` signals with per-signal decoders,
//! transfer initialization from the trained encoder, and test-time fitting.
//!
//! Pretraining minimizes the unweighted sum of per-signal MSE losses with a
//! single Adam instance over `[encoder, decoder₁ … decoder_N]`. Because the
//! loss is a sum rather than a mean, encoder gradients grow with `N`.
//!
//! Initialization draws from one ChaCha8 stream seeded by the caller: the
//! encoder layers first, then each decoder's layers in signal order. With
//! `N = 1` this reproduces [`init_model`](crate::inr::init_model) exactly.

use std::collections::HashMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::fit::{run_fit, FitLog, FitOptions, FitProblem, FitRecord, TrainConfig};
use crate::inr::{
    forward_on_tape, init_layers, lift_input, make_coord_grid, params_on_tape, ImageSignal, MlpParams, ModelConfig,
};
use crate::metrics;

/// Shared encoder plus one decoder per pretraining signal.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainerState {
    pub config: ModelConfig,
    pub encoder: MlpParams,
    pub decoders: Vec<MlpParams>,
}

impl StrainerState {
    /// Random initialization from a single stream (encoder, then decoders in order).
    pub fn init(config: &ModelConfig, num_decoders: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.depth < 2 {
            return Err(Error::Config("a shared encoder needs depth >= 2".into()));
        }
        if num_decoders == 0 {
            return Err(Error::Config("need at least one decoder".into()));
        }
        let k = config.encoder_depth;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = init_layers(config, 0..k, &mut rng);
        let decoders = (0..num_decoders)
            .map(|_| init_layers(config, k..config.depth, &mut rng))
            .collect();
        Ok(Self {
            config: *config,
            encoder,
            decoders,
        })
    }

    pub fn num_decoders(&self) -> usize {
        self.decoders.len()
    }

    /// `count(encoder) + N · count(decoder)`.
    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoders.iter().map(MlpParams::param_count).sum::<usize>()
    }

    /// Full single-decoder network for signal `i`.
    pub fn branch(&self, i: usize) -> Result<MlpParams> {
        let decoder = self
            .decoders
            .get(i)
            .ok_or_else(|| Error::Config(format!("no decoder {i}")))?;
        MlpParams::join(&self.encoder, decoder)
    }

    fn tensors(&self) -> Vec<Tensor> {
        let mut t = self.encoder.tensors();
        for d in &self.decoders {
            t.extend(d.tensors());
        }
        t
    }

    fn from_tensors(config: ModelConfig, n: usize, tensors: Vec<Tensor>) -> Result<Self> {
        let k = config.encoder_depth;
        let per_decoder = 2 * (config.depth - k);
        let mut it = tensors.into_iter();
        let encoder = MlpParams::from_tensors(it.by_ref().take(2 * k).collect())?;
        let decoders = (0..n)
            .map(|_| MlpParams::from_tensors(it.by_ref().take(per_decoder).collect()))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            encoder,
            decoders,
        })
    }
}

/// Parameter count of the pretraining graph for `n` decoders.
pub fn training_param_count(config: &ModelConfig, n: usize) -> usize {
    let dims = config.layer_dims();
    let count = |r: &[(usize, usize)]| r.iter().map(|&(o, i)| o * i + o).sum::<usize>();
    let (enc, dec) = dims.split_at(config.encoder_depth);
    count(enc) + n * count(dec)
}

struct BranchGraph {
    encoder: Vec<(Var, Var)>,
    decoders: Vec<Vec<(Var, Var)>>,
    preds: Vec<Var>,
    losses: Vec<Var>,
}

/// Records the whole pretraining objective on one tape. Signals with the
/// same size share one encoder pass.
fn record_objective(tape: &mut Tape, state: &StrainerState, signals: &[ImageSignal]) -> Result<BranchGraph> {
    let act = state.config.activation;
    let encoder = params_on_tape(tape, &state.encoder);
    let mut features: HashMap<(usize, usize), Var> = HashMap::new();
    let mut decoders = Vec::with_capacity(signals.len());
    let mut preds = Vec::with_capacity(signals.len());
    let mut losses = Vec::with_capacity(signals.len());
    for (signal, dec) in signals.iter().zip(&state.decoders) {
        let key = (signal.height(), signal.width());
        let feat = match features.get(&key) {
            Some(&f) => f,
            None => {
                let grid = make_coord_grid(key.0, key.1)?;
                let x = tape.constant(lift_input(grid.rows(), &act));
                let f = forward_on_tape(tape, &encoder, x, &act, false)?;
                features.insert(key, f);
                f
            }
        };
        let dvars = params_on_tape(tape, dec);
        let pred = forward_on_tape(tape, &dvars, feat, &act, true)?;
        let target = tape.constant(signal.to_tensor());
        losses.push(tape.mse(pred, target)?);
        preds.push(pred);
        decoders.push(dvars);
    }
    Ok(BranchGraph {
        encoder,
        decoders,
        preds,
        losses,
    })
}

fn check_signals(state: &StrainerState, signals: &[ImageSignal]) -> Result<()> {
    if signals.is_empty() {
        return Err(Error::Config("pretraining needs at least one signal".into()));
    }
    if signals.len() != state.decoders.len() {
        return Err(Error::Config(format!(
            "{} signals for {} decoders",
            signals.len(),
            state.decoders.len()
        )));
    }
    let c = state.config.out_dim;
    if let Some((i, s)) = signals.iter().enumerate().find(|(_, s)| s.channels() != c) {
        return Err(Error::Config(format!(
            "signal {i} has {} channels, expected {c}",
            s.channels()
        )));
    }
    Ok(())
}

/// Gradients of `Σᵢ lossᵢ` w.r.t. every parameter of the state, from one
/// joint tape. Returned as `(loss_total, encoder grads, per-decoder grads)`.
pub fn objective_gradients(
    state: &StrainerState,
    signals: &[ImageSignal],
) -> Result<(f64, Vec<Tensor>, Vec<Vec<Tensor>>)> {
    check_signals(state, signals)?;
    let mut tape = Tape::new();
    let graph = record_objective(&mut tape, state, signals)?;
    let total = tape.sum(&graph.losses)?;
    let loss = tape.value(total).item();
    let mut grads = tape.backward(total)?;
    let flat = |g: &mut crate::autodiff::Gradients, vars: &[(Var, Var)]| -> Vec<Tensor> {
        vars.iter().flat_map(|&(w, b)| [g.take(w), g.take(b)]).collect()
    };
    let enc = flat(&mut grads, &graph.encoder);
    let decs = graph.decoders.iter().map(|d| flat(&mut grads, d)).collect();
    Ok((loss, enc, decs))
}

/// Gradients of the single branch loss `lossᵢ` alone, for every parameter of
/// the state (decoders `j ≠ i` come back as exact zeros).
pub fn branch_gradients(
    state: &StrainerState,
    signals: &[ImageSignal],
    branch: usize,
) -> Result<(Vec<Tensor>, Vec<Vec<Tensor>>)> {
    check_signals(state, signals)?;
    let mut tape = Tape::new();
    let graph = record_objective(&mut tape, state, signals)?;
    let loss = *graph
        .losses
        .get(branch)
        .ok_or_else(|| Error::Config(format!("no branch {branch}")))?;
    let mut grads = tape.backward(loss)?;
    let flat = |g: &mut crate::autodiff::Gradients, vars: &[(Var, Var)]| -> Vec<Tensor> {
        vars.iter().flat_map(|&(w, b)| [g.take(w), g.take(b)]).collect()
    };
    let enc = flat(&mut grads, &graph.encoder);
    let decs = graph.decoders.iter().map(|d| flat(&mut grads, d)).collect();
    Ok((enc, decs))
}

/// Pretrains a shared encoder and `N = signals.len()` decoders.
///
/// Each iteration records every branch on one tape, sums the branch losses in
/// index order, back-propagates once and applies one Adam step over all
/// parameters. Returns one [`FitLog`] per signal (its branch loss and PSNR).
pub fn train_shared_encoder(
    signals: &[ImageSignal],
    config: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<(StrainerState, Vec<FitLog>)> {
    if signals.is_empty() {
        return Err(Error::Config("pretraining needs at least one signal".into()));
    }
    let state = StrainerState::init(config, signals.len(), seed)?;
    check_signals(&state, signals)?;
    let n = signals.len();
    let mut params = state.tensors();
    let mut adam = Adam::new(train.learning_rate, &params);
    let mut logs = vec![FitLog::default(); n];
    let start = Instant::now();
    let mut current = state;

    for it in 0..=train.iterations {
        let mut tape = Tape::new();
        let graph = record_objective(&mut tape, &current, signals)?;
        let total = tape.sum(&graph.losses)?;
        let loss = tape.value(total).item();
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, loss });
        }
        if train.should_log(it) {
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            for (i, log) in logs.iter_mut().enumerate() {
                let pred = tape.value(graph.preds[i]);
                log.records.push(FitRecord {
                    iteration: it,
                    loss: tape.value(graph.losses[i]).item(),
                    psnr_db: metrics::psnr_values(pred.data(), signals[i].pixels(), true),
                    ssim: None,
                    wall_ms,
                });
            }
        }
        if it == train.iterations {
            break;
        }
        let mut grads = tape.backward(total)?;
        let grad_tensors: Vec<Tensor> = graph
            .encoder
            .iter()
            .chain(graph.decoders.iter().flatten())
            .flat_map(|&(w, b)| [grads.take(w), grads.take(b)])
            .collect();
        adam.step(&mut params, &grad_tensors)?;
        current = StrainerState::from_tensors(*config, n, params.clone())?;
    }
    Ok((current, logs))
}

/// Full `L`-layer network: the trained encoder copied bit for bit, followed
/// by freshly initialized decoder layers drawn from `seed`.
pub fn transfer_init(state: &StrainerState, seed: u64) -> Result<MlpParams> {
    let cfg = &state.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decoder = init_layers(cfg, cfg.encoder_depth..cfg.depth, &mut rng);
    let params = MlpParams::join(&state.encoder, &decoder)?;
    params.check_matches(cfg)?;
    Ok(params)
}

/// Builds a transfer initialization from a bare encoder block.
pub fn transfer_init_from_encoder(config: &ModelConfig, encoder: &MlpParams, seed: u64) -> Result<MlpParams> {
    let state = StrainerState {
        config: *config,
        encoder: encoder.clone(),
        decoders: Vec::new(),
    };
    transfer_init(&state, seed)
}

/// Test-time fitting: every layer is optimized (the encoder is not frozen
/// unless `options.freeze_layers` says so).
pub fn fit_test_signal(
    init: MlpParams,
    config: &ModelConfig,
    signal: &ImageSignal,
    train: &TrainConfig,
    options: &FitOptions,
) -> Result<(MlpParams, FitLog)> {
    let problem = FitProblem::signal(signal)?;
    let out = run_fit(init, &config.activation, &problem, train, options)?;
    Ok((out.params, out.log))
}

/// Fine-tuning baseline: start from a network fit to another image. Same
/// loop as [`fit_test_signal`]; only the initialization differs.
pub fn finetune_baseline(
    pretrained: MlpParams,
    config: &ModelConfig,
    signal: &ImageSignal,
    train: &TrainConfig,
) -> Result<(MlpParams, FitLog)> {
    pretrained.check_matches(config)?;
    fit_test_signal(pretrained, config, signal, train, &FitOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub encoder_depth: usize,
    pub final_psnr_db: f64,
}

/// For each `K`: pretrain with `K` shared layers, transfer, and fit
/// `test_signal` for `budget_iterations`.
pub fn sweep_shared_layers(
    signals: &[ImageSignal],
    config: &ModelConfig,
    k_values: &[usize],
    test_signal: &ImageSignal,
    pretrain: &TrainConfig,
    budget_iterations: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    for &k in k_values {
        config.with_encoder_depth(k).validate()?;
    }
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let cfg = config.with_encoder_depth(k);
        let (state, _) = train_shared_encoder(signals, &cfg, pretrain, seed)?;
        let init = transfer_init(&state, seed.wrapping_add(1))?;
        let train = TrainConfig::new(pretrain.learning_rate, budget_iterations);
        let (_, log) = fit_test_signal(init, &cfg, test_signal, &train, &FitOptions::default())?;
        rows.push(SweepRow {
            encoder_depth: k,
            final_psnr_db: log.last().map_or(f64::NAN, |r| r.psnr_db),
        });
    }
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("encoder_depth,final_psnr_db\n");
    for r in rows {
        out.push_str(&format!("{},{:e}\n", r.encoder_depth, r.final_psnr_db));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inr::{fit_single, init_model, param_count, Activation};

    fn small(width: usize) -> ModelConfig {
        ModelConfig {
            width,
            ..ModelConfig::default()
        }
    }

    fn gradient_image(h: usize, w: usize, phase: f64) -> ImageSignal {
        let px = (0..h * w * 3)
            .map(|i| {
                let p = i / 3;
                let (y, x) = ((p / w) as f64, (p % w) as f64);
                0.5 + 0.3 * ((x + phase) / 3.0).sin() * ((y - phase) / 4.0).cos() + 0.05 * (i % 3) as f64
            })
            .collect();
        ImageSignal::new(h, w, 3, px).unwrap()
    }

    #[test]
    fn table6_training_graph_count() {
        let cfg = ModelConfig::default();
        assert_eq!(training_param_count(&cfg, 10), 271_646);
        assert_eq!(training_param_count(&cfg, 1), param_count(&cfg));
    }

    #[test]
    fn state_counts_and_shapes() {
        let cfg = small(8);
        let s = StrainerState::init(&cfg, 3, 1).unwrap();
        assert_eq!(s.param_count(), training_param_count(&cfg, 3));
        let dims = s.decoders[0].layer_dims();
        assert!(s.decoders.iter().all(|d| d.layer_dims() == dims));
        assert_eq!(s.encoder.layers.last().unwrap().out_dim(), dims[0].1);
    }

    #[test]
    fn single_decoder_reduces_to_single_fit() {
        let cfg = small(8);
        let img = gradient_image(8, 8, 0.0);
        let train = TrainConfig::new(1e-3, 15);
        let (state, logs) = train_shared_encoder(std::slice::from_ref(&img), &cfg, &train, 42).unwrap();
        let (params, log) = fit_single(&img, &cfg, &train, 42).unwrap();
        assert_eq!(
            StrainerState::init(&cfg, 1, 42).unwrap().branch(0).unwrap(),
            init_model(&cfg, 42).unwrap()
        );
        assert_eq!(logs[0].losses(), log.losses());
        assert_eq!(state.branch(0).unwrap(), params);
    }

    #[test]
    fn transfer_init_copies_encoder_only() {
        let cfg = small(8);
        let state = StrainerState::init(&cfg, 2, 5).unwrap();
        let a = transfer_init(&state, 1).unwrap();
        let b = transfer_init(&state, 2).unwrap();
        assert_eq!(a.flatten().len(), param_count(&cfg));
        for k in 0..cfg.encoder_depth {
            assert_eq!(a.layers[k], state.encoder.layers[k]);
            assert_eq!(a.layers[k], b.layers[k]);
        }
        assert_ne!(a.layers[5], b.layers[5]);
    }

    #[test]
    fn decoders_get_no_cross_branch_gradient() {
        let cfg = small(6);
        let signals = [
            gradient_image(6, 6, 0.0),
            gradient_image(6, 6, 1.0),
            gradient_image(6, 6, 2.0),
        ];
        let state = StrainerState::init(&cfg, 3, 9).unwrap();
        let (_, enc_total, _) = objective_gradients(&state, &signals).unwrap();
        let mut enc_sum: Vec<Tensor> = enc_total.iter().map(|t| Tensor::zeros(t.shape())).collect();
        for i in 0..3 {
            let (enc, decs) = branch_gradients(&state, &signals, i).unwrap();
            for (j, d) in decs.iter().enumerate() {
                if j != i {
                    assert!(d.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
                }
            }
            for (s, e) in enc_sum.iter_mut().zip(&enc) {
                s.add_assign(e);
            }
        }
        for (a, b) in enc_total.iter().zip(&enc_sum) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_channels_rejected() {
        let cfg = small(4);
        let gray = ImageSignal::constant(4, 4, 1, 0.5).unwrap();
        assert!(train_shared_encoder(&[gray], &cfg, &TrainConfig::new(1e-4, 1), 0).is_err());
        assert!(train_shared_encoder(&[], &cfg, &TrainConfig::new(1e-4, 1), 0).is_err());
    }

    #[test]
    fn zero_iteration_fit_returns_init() {
        let cfg = small(8);
        let init = init_model(&cfg, 3).unwrap();
        let img = gradient_image(8, 8, 0.5);
        let (p, log) = fit_test_signal(
            init.clone(),
            &cfg,
            &img,
            &TrainConfig::new(1e-4, 0),
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(p, init);
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.records[0].iteration, 0);
    }

    #[test]
    fn frozen_encoder_is_untouched() {
        let cfg = small(8);
        let init = init_model(&cfg, 3).unwrap();
        let img = gradient_image(8, 8, 0.5);
        let opts = FitOptions {
            freeze_layers: cfg.encoder_depth,
            ..FitOptions::default()
        };
        let (p, _) = fit_test_signal(init.clone(), &cfg, &img, &TrainConfig::new(1e-3, 5), &opts).unwrap();
        assert_eq!(p.layers[..5], init.layers[..5]);
        assert_ne!(p.layers[5], init.layers[5]);
    }

    #[test]
    fn relu_variant_trains() {
        let cfg = ModelConfig {
            activation: Activation::relu_posenc(),
            ..small(8)
        };
        let signals = [gradient_image(8, 8, 0.0), gradient_image(8, 8, 1.0)];
        let (_, logs) = train_shared_encoder(&signals, &cfg, &TrainConfig::new(1e-3, 20), 1).unwrap();
        for log in logs {
            assert!(log.last().unwrap().loss < log.records[0].loss);
        }
    }

    #[test]
    fn sweep_emits_one_row_per_k() {
        let cfg = small(6);
        let signals = [gradient_image(6, 6, 0.0), gradient_image(6, 6, 1.0)];
        let rows = sweep_shared_layers(
            &signals,
            &cfg,
            &[1, 3, 5],
            &gradient_image(6, 6, 0.3),
            &TrainConfig::new(1e-3, 3),
            3,
            0,
        )
        .unwrap();
        assert_eq!(rows.iter().map(|r| r.encoder_depth).collect::<Vec<_>>(), vec![1, 3, 5]);
        assert!(sweep_shared_layers(&signals, &cfg, &[6], &signals[0], &TrainConfig::new(1e-3, 1), 1, 0).is_err());
    }
}
