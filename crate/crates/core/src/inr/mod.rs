//! Coordinate MLPs: configuration, initialization, the encoder/decoder
//! split, coordinate grids, evaluation and single-signal fitting.

mod model;
mod signal;

pub(crate) use model::init_layers;
pub use model::{
    forward, forward_on_tape, hidden_features, init_model, lift_input, make_coord_grid, param_count, params_on_tape,
    split_encoder_decoder, Activation, CoordGrid, Layer, MlpParams, ModelConfig,
};
pub use signal::ImageSignal;

use crate::error::{Error, Result};
use crate::fit::{run_fit, FitLog, FitOptions, FitProblem, TrainConfig};

/// Fits a freshly initialized network to one image (`A` = identity).
pub fn fit_single(
    signal: &ImageSignal,
    config: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<(MlpParams, FitLog)> {
    if config.out_dim != signal.channels() {
        return Err(Error::Config(format!(
            "model has {} outputs but the image has {} channels",
            config.out_dim,
            signal.channels()
        )));
    }
    let init = init_model(config, seed)?;
    let problem = FitProblem::signal(signal)?;
    let out = run_fit(init, &config.activation, &problem, train, &FitOptions::default())?;
    Ok((out.params, out.log))
}

/// Decodes `[H·W, C]` network output into an image, clamping to `[0, 1]`.
pub fn render(params: &MlpParams, grid: &CoordGrid, activation: &Activation) -> Result<ImageSignal> {
    let out = forward(params, grid, activation)?;
    let channels = out.cols();
    ImageSignal::from_clamped(grid.height(), grid.width(), channels, out.data())
}
