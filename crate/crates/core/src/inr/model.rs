use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{linear_forward, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Nonlinearity used after every hidden affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    /// `sin(omega0 · x)` with the scale-aware uniform initialization.
    Sine { omega0: f64 },
    /// ReLU on top of a Fourier-feature lift of the coordinates
    /// (`p, sin(2^j π p), cos(2^j π p)` for `j < bands`).
    ReluPosenc { bands: usize },
}

impl Activation {
    pub const DEFAULT_OMEGA0: f64 = 30.0;
    pub const DEFAULT_BANDS: usize = 10;

    pub fn sine() -> Self {
        Activation::Sine {
            omega0: Self::DEFAULT_OMEGA0,
        }
    }

    pub fn relu_posenc() -> Self {
        Activation::ReluPosenc {
            bands: Self::DEFAULT_BANDS,
        }
    }

    /// Width of the first layer's input for `in_dim`-dimensional coordinates.
    pub fn lifted_dim(&self, in_dim: usize) -> usize {
        match self {
            Activation::Sine { .. } => in_dim,
            Activation::ReluPosenc { bands } => in_dim * (1 + 2 * bands),
        }
    }

    fn apply(&self, tape: &mut Tape, x: Var) -> Var {
        match *self {
            Activation::Sine { omega0 } => tape.sine(x, omega0),
            Activation::ReluPosenc { .. } => tape.relu(x),
        }
    }

    fn apply_in_place(&self, t: &mut Tensor) {
        match *self {
            Activation::Sine { omega0 } => t
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = crate::autodiff::trig::sin(omega0 * *v)),
            Activation::ReluPosenc { .. } => t.data_mut().iter_mut().for_each(|v| {
                if *v <= 0.0 {
                    *v = 0.0
                }
            }),
        }
    }
}

/// Architecture of a coordinate MLP and its encoder/decoder split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Total number of affine layers `L`.
    pub depth: usize,
    pub width: usize,
    /// Coordinate dimension `m`.
    pub in_dim: usize,
    /// Signal channels `n`.
    pub out_dim: usize,
    pub activation: Activation,
    /// Number of leading layers `K` shared as the encoder.
    pub encoder_depth: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            depth: 6,
            width: 256,
            in_dim: 2,
            out_dim: 3,
            activation: Activation::sine(),
            encoder_depth: 5,
        }
    }
}

impl ModelConfig {
    /// Sizes must be positive, `omega0 > 0`, and when `depth ≥ 2` the
    /// encoder depth must lie in `[1, depth − 1]`. A single-layer model has
    /// no split and ignores `encoder_depth`.
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Config(format!(
                "depth, width, in_dim and out_dim must be >= 1 (got {}, {}, {}, {})",
                self.depth, self.width, self.in_dim, self.out_dim
            )));
        }
        if self.depth >= 2 {
            check_split(self.depth, self.encoder_depth)?;
        }
        match self.activation {
            Activation::Sine { omega0 } if !(omega0 > 0.0 && omega0.is_finite()) => {
                Err(Error::Config(format!("omega0 must be positive, got {omega0}")))
            }
            _ => Ok(()),
        }
    }

    /// `(out, in)` for every layer, first to last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let input = self.activation.lifted_dim(self.in_dim);
        (0..self.depth)
            .map(|i| {
                let fan_in = if i == 0 { input } else { self.width };
                let fan_out = if i + 1 == self.depth { self.out_dim } else { self.width };
                (fan_out, fan_in)
            })
            .collect()
    }

    pub fn with_encoder_depth(mut self, k: usize) -> Self {
        self.encoder_depth = k;
        self
    }
}

fn check_split(depth: usize, k: usize) -> Result<()> {
    if k == 0 || k >= depth {
        return Err(Error::Config(format!(
            "encoder depth K={k} outside [1, {}] for a {depth}-layer model",
            depth.saturating_sub(1)
        )));
    }
    Ok(())
}

/// Number of learnable scalars: Σ over layers of `out·in + out`.
pub fn param_count(config: &ModelConfig) -> usize {
    config.layer_dims().iter().map(|&(o, i)| o * i + o).sum()
}

/// One affine layer: `weight` is `[out, in]`, `bias` is `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Ordered affine layers of a coordinate MLP (or a contiguous block of one).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::shape(
                    "MlpParams (layer chaining)",
                    pair[0].weight.shape(),
                    pair[1].weight.shape(),
                ));
            }
        }
        for l in &layers {
            if l.bias.shape() != [l.out_dim()] {
                return Err(Error::shape(
                    "MlpParams (weight vs bias)",
                    l.weight.shape(),
                    l.bias.shape(),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// `(out, in)` of each layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.out_dim(), l.in_dim())).collect()
    }

    /// Flattened parameter vector in layer order, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    /// Tensors in optimizer order `[W0, b0, W1, b1, …]`.
    pub fn tensors(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .collect()
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        if !tensors.len().is_multiple_of(2) {
            return Err(Error::Data("parameter tensors must come in weight/bias pairs".into()));
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::new();
        while let (Some(weight), Some(bias)) = (it.next(), it.next()) {
            layers.push(Layer { weight, bias });
        }
        Self::new(layers)
    }

    /// Splits into the first `k` layers and the rest.
    pub fn split(&self, k: usize) -> Result<(MlpParams, MlpParams)> {
        check_split(self.depth(), k)?;
        Ok((
            MlpParams {
                layers: self.layers[..k].to_vec(),
            },
            MlpParams {
                layers: self.layers[k..].to_vec(),
            },
        ))
    }

    /// Concatenates an encoder block and a decoder block.
    pub fn join(encoder: &MlpParams, decoder: &MlpParams) -> Result<MlpParams> {
        let layers = encoder.layers.iter().chain(&decoder.layers).cloned().collect();
        MlpParams::new(layers)
    }

    /// Checks that these parameters have exactly the layer shapes of `config`.
    pub fn check_matches(&self, config: &ModelConfig) -> Result<()> {
        let expected = config.layer_dims();
        let found = self.layer_dims();
        if expected != found {
            return Err(Error::ArchMismatch {
                expected: format!("{expected:?}"),
                found: format!("{found:?}"),
            });
        }
        Ok(())
    }
}

/// Splits parameters into encoder (first `k` layers) and decoder.
pub fn split_encoder_decoder(params: &MlpParams, k: usize) -> Result<(MlpParams, MlpParams)> {
    params.split(k)
}

/// Draws one layer's weights for the layer at position `index` of a model
/// with the given config; biases start at zero.
pub(crate) fn init_layer(config: &ModelConfig, index: usize, rng: &mut ChaCha8Rng) -> Layer {
    let (out, inp) = config.layer_dims()[index];
    let bound = match config.activation {
        Activation::Sine { .. } if index == 0 => 1.0 / inp as f64,
        Activation::Sine { omega0 } => (6.0 / inp as f64).sqrt() / omega0,
        Activation::ReluPosenc { .. } => (6.0 / inp as f64).sqrt(),
    };
    let weights = (0..out * inp).map(|_| rng.random_range(-bound..=bound)).collect();
    Layer {
        weight: Tensor::new(vec![out, inp], weights).expect("layer shape"),
        bias: Tensor::zeros(&[out]),
    }
}

pub(crate) fn init_layers(config: &ModelConfig, range: std::ops::Range<usize>, rng: &mut ChaCha8Rng) -> MlpParams {
    MlpParams {
        layers: range.map(|i| init_layer(config, i, rng)).collect(),
    }
}

/// Random initialization, deterministic in `seed`.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<MlpParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(init_layers(config, 0..config.depth, &mut rng))
}

/// `H·W` coordinates in `[−1, 1]²`, `y` outer and `x` inner, each row `(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordGrid {
    height: usize,
    width: usize,
    rows: Tensor,
}

impl CoordGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Arbitrary coordinate rows (e.g. a permuted or sparse grid).
    pub fn from_rows(rows: Tensor) -> Result<Self> {
        if rows.shape().len() != 2 {
            return Err(Error::shape("CoordGrid::from_rows", rows.shape(), "[rows, m]"));
        }
        Ok(Self {
            height: rows.shape()[0],
            width: 1,
            rows,
        })
    }
}

fn linspace(n: usize) -> Vec<f64> {
    let step = 2.0 / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { 1.0 } else { -1.0 + i as f64 * step })
        .collect()
}

/// Inclusive `[−1, 1]` grid; both sides must be at least 2.
pub fn make_coord_grid(height: usize, width: usize) -> Result<CoordGrid> {
    if height < 2 || width < 2 {
        return Err(Error::Config(format!(
            "coordinate grid needs both sides >= 2, got {height}x{width}"
        )));
    }
    let (ys, xs) = (linspace(height), linspace(width));
    let mut data = Vec::with_capacity(height * width * 2);
    for &y in &ys {
        for &x in &xs {
            data.push(y);
            data.push(x);
        }
    }
    Ok(CoordGrid {
        height,
        width,
        rows: Tensor::new(vec![height * width, 2], data)?,
    })
}

/// Network input for the given activation: raw coordinates for sine models,
/// Fourier features for the ReLU variant.
pub fn lift_input(coords: &Tensor, activation: &Activation) -> Tensor {
    match *activation {
        Activation::Sine { .. } => coords.clone(),
        Activation::ReluPosenc { bands } => {
            let m = coords.cols();
            let lifted = m * (1 + 2 * bands);
            let mut data = Vec::with_capacity(coords.rows() * lifted);
            for row in coords.data().chunks_exact(m) {
                data.extend_from_slice(row);
                for j in 0..bands {
                    let freq = (1u64 << j) as f64 * std::f64::consts::PI;
                    for &p in row {
                        let (s, c) = (freq * p).sin_cos();
                        data.push(s);
                        data.push(c);
                    }
                }
            }
            Tensor::new(vec![coords.rows(), lifted], data).expect("lift shape")
        }
    }
}

/// Records `layers` on the tape. Every layer is followed by the activation,
/// except the last one when `final_is_output` is set.
pub fn forward_on_tape(
    tape: &mut Tape,
    layers: &[(Var, Var)],
    input: Var,
    activation: &Activation,
    final_is_output: bool,
) -> Result<Var> {
    let mut h = input;
    for (i, &(w, b)) in layers.iter().enumerate() {
        h = tape.linear(w, b, h)?;
        if !(final_is_output && i + 1 == layers.len()) {
            h = activation.apply(tape, h);
        }
    }
    Ok(h)
}

/// Pushes every parameter tensor onto the tape as a leaf.
pub fn params_on_tape(tape: &mut Tape, params: &MlpParams) -> Vec<(Var, Var)> {
    params
        .layers
        .iter()
        .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
        .collect()
}

/// Evaluates the full network on coordinates: affine + activation for every
/// layer but the last, which is purely affine.
pub fn forward(params: &MlpParams, coords: &CoordGrid, activation: &Activation) -> Result<Tensor> {
    let input = lift_input(coords.rows(), activation);
    forward_layers(params, input, activation, true)
}

/// Activations after the first `upto` layers (each followed by the nonlinearity).
pub fn hidden_features(params: &MlpParams, coords: &CoordGrid, activation: &Activation, upto: usize) -> Result<Tensor> {
    if upto == 0 || upto > params.depth() {
        return Err(Error::Config(format!(
            "feature layer {upto} outside [1, {}]",
            params.depth()
        )));
    }
    let block = MlpParams {
        layers: params.layers[..upto].to_vec(),
    };
    forward_layers(&block, lift_input(coords.rows(), activation), activation, false)
}

fn forward_layers(params: &MlpParams, input: Tensor, activation: &Activation, final_is_output: bool) -> Result<Tensor> {
    let mut h = input;
    let n = params.layers.len();
    for (i, l) in params.layers.iter().enumerate() {
        h = linear_forward(&l.weight, &l.bias, &h)?;
        if !(final_is_output && i + 1 == n) {
            activation.apply_in_place(&mut h);
        }
    }
    Ok(h)
}
