//! Python bindings for `strainer-core`.
//!
//! Images cross the boundary as flat row-major lists of floats in `[0, 1]`
//! (`height · width · channels` entries, channel fastest).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use strainer_core::checkpoint::Checkpoint;
use strainer_core::fit::{FitOptions, TrainConfig};
use strainer_core::inr::{self, Activation, ImageSignal, MlpParams, ModelConfig};
use strainer_core::inverse::{self, ForwardOperator, Measurement};
use strainer_core::{data, metrics, strainer, Error};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } | Error::UnsupportedImage { .. } => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for strainer_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Network architecture. `activation` is `"sine"` or `"relu"`.
#[pyclass(name = "ModelConfig", from_py_object)]
#[derive(Clone)]
struct PyModelConfig {
    inner: ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[new]
    #[pyo3(signature = (depth=6, width=256, encoder_depth=5, out_dim=3, in_dim=2, activation="sine", omega0=30.0))]
    fn new(
        depth: usize,
        width: usize,
        encoder_depth: usize,
        out_dim: usize,
        in_dim: usize,
        activation: &str,
        omega0: f64,
    ) -> PyResult<Self> {
        let activation = match activation {
            "sine" => Activation::Sine { omega0 },
            "relu" => Activation::relu_posenc(),
            other => return Err(PyValueError::new_err(format!("unknown activation {other:?}"))),
        };
        let inner = ModelConfig {
            depth,
            width,
            in_dim,
            out_dim,
            activation,
            encoder_depth,
        };
        inner.validate().py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn encoder_depth(&self) -> usize {
        self.inner.encoder_depth
    }

    #[getter]
    fn out_dim(&self) -> usize {
        self.inner.out_dim
    }

    #[getter]
    fn activation(&self) -> &'static str {
        match self.inner.activation {
            Activation::Sine { .. } => "sine",
            Activation::ReluPosenc { .. } => "relu",
        }
    }

    fn param_count(&self) -> usize {
        inr::param_count(&self.inner)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "ModelConfig(depth={}, width={}, encoder_depth={}, out_dim={}, activation={:?})",
            c.depth,
            c.width,
            c.encoder_depth,
            c.out_dim,
            self.activation()
        )
    }
}

#[pyclass(name = "Image", from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: ImageSignal,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: ImageSignal::new(height, width, channels, pixels).py()?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_image(&path).py()?,
        })
    }

    /// Loads, centre-crops, resizes to `size` and converts to `channels`
    /// (`"rgb"`, `"gray"` or `"gray3"`).
    #[staticmethod]
    #[pyo3(signature = (path, size=178, channels="rgb"))]
    fn load_preprocessed(path: PathBuf, size: usize, channels: &str) -> PyResult<Self> {
        let spec = data::PreprocessSpec {
            size,
            channels: channels.parse().py()?,
        };
        Ok(Self {
            inner: data::load_preprocessed(&path, &spec).py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (size, seed=0))]
    fn synthetic_face(size: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: data::synthetic::synthetic_face(size, seed).py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        data::save_image(&path, &self.inner).py()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    #[getter]
    fn pixels(&self) -> Vec<f64> {
        self.inner.pixels().to_vec()
    }

    fn __repr__(&self) -> String {
        let (h, w, c) = self.inner.dims();
        format!("Image({h}x{w}x{c})")
    }
}

/// Parameters of a coordinate MLP together with its architecture.
#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
struct PyModel {
    config: ModelConfig,
    params: MlpParams,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn config(&self) -> PyModelConfig {
        PyModelConfig { inner: self.config }
    }

    fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// All weights and biases, layer by layer (weights row-major, then bias).
    fn flatten(&self) -> Vec<f64> {
        self.params.flatten()
    }

    fn render(&self, height: usize, width: usize) -> PyResult<PyImage> {
        let grid = inr::make_coord_grid(height, width).py()?;
        Ok(PyImage {
            inner: inr::render(&self.params, &grid, &self.config.activation).py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::full(self.config, self.params.clone())
            .py()?
            .save(&path)
            .py()
    }

    /// Loads a full-model checkpoint.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).py()?;
        if ck.encoder_fragment {
            return Err(PyValueError::new_err(
                "checkpoint holds an encoder fragment; use Encoder.load",
            ));
        }
        Ok(Self {
            config: ck.config,
            params: ck.params,
        })
    }
}

/// A trained shared encoder (the first `K` layers).
#[pyclass(name = "Encoder", from_py_object)]
#[derive(Clone)]
struct PyEncoder {
    config: ModelConfig,
    encoder: MlpParams,
}

#[pymethods]
impl PyEncoder {
    #[getter]
    fn config(&self) -> PyModelConfig {
        PyModelConfig { inner: self.config }
    }

    fn param_count(&self) -> usize {
        self.encoder.param_count()
    }

    /// Full network: this encoder plus a decoder drawn from `seed`.
    #[pyo3(signature = (seed=0))]
    fn transfer_init(&self, seed: u64) -> PyResult<PyModel> {
        Ok(PyModel {
            config: self.config,
            params: strainer::transfer_init_from_encoder(&self.config, &self.encoder, seed).py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::encoder(self.config, self.encoder.clone())
            .py()?
            .save(&path)
            .py()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).py()?;
        if !ck.encoder_fragment {
            return Err(PyValueError::new_err("checkpoint holds a full model; use Model.load"));
        }
        Ok(Self {
            config: ck.config,
            encoder: ck.params,
        })
    }
}

/// Trajectory of a fit: one entry per logged iteration.
#[pyclass(name = "FitLog", from_py_object)]
#[derive(Clone)]
struct PyFitLog {
    inner: strainer_core::FitLog,
}

#[pymethods]
impl PyFitLog {
    #[getter]
    fn iterations(&self) -> Vec<usize> {
        self.inner.records.iter().map(|r| r.iteration).collect()
    }

    #[getter]
    fn losses(&self) -> Vec<f64> {
        self.inner.losses()
    }

    #[getter]
    fn psnrs(&self) -> Vec<f64> {
        self.inner.psnrs()
    }

    /// SSIM of the final record, if computed.
    #[getter]
    fn final_ssim(&self) -> Option<f64> {
        self.inner.last().and_then(|r| r.ssim)
    }

    #[pyo3(signature = (wall_clock=false))]
    fn to_csv(&self, wall_clock: bool) -> String {
        self.inner.to_csv(wall_clock)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

fn train_config(lr: f64, iterations: usize) -> TrainConfig {
    TrainConfig::new(lr, iterations)
}

fn final_ssim() -> FitOptions {
    FitOptions {
        final_ssim: true,
        ..FitOptions::default()
    }
}

#[pyfunction]
fn param_count(config: &PyModelConfig) -> usize {
    inr::param_count(&config.inner)
}

#[pyfunction]
#[pyo3(signature = (config, seed=0))]
fn init_model(config: &PyModelConfig, seed: u64) -> PyResult<PyModel> {
    Ok(PyModel {
        config: config.inner,
        params: inr::init_model(&config.inner, seed).py()?,
    })
}

/// Fits a randomly initialized network to `image`.
#[pyfunction]
#[pyo3(signature = (image, config, lr=1e-4, iterations=2000, seed=0))]
fn fit_single(
    py: Python<'_>,
    image: &PyImage,
    config: &PyModelConfig,
    lr: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<(PyModel, PyFitLog)> {
    let init = inr::init_model(&config.inner, seed).py()?;
    let cfg = config.inner;
    fit_from(py, init, &cfg, &image.inner, lr, iterations)
}

/// Fits `model` (any initialization) to `image`, updating every layer.
#[pyfunction]
#[pyo3(signature = (model, image, lr=1e-4, iterations=2000))]
fn fit_test_signal(
    py: Python<'_>,
    model: &PyModel,
    image: &PyImage,
    lr: f64,
    iterations: usize,
) -> PyResult<(PyModel, PyFitLog)> {
    fit_from(py, model.params.clone(), &model.config, &image.inner, lr, iterations)
}

fn fit_from(
    py: Python<'_>,
    init: MlpParams,
    config: &ModelConfig,
    image: &ImageSignal,
    lr: f64,
    iterations: usize,
) -> PyResult<(PyModel, PyFitLog)> {
    let train = train_config(lr, iterations);
    let (params, log) = py
        .detach(|| strainer::fit_test_signal(init, config, image, &train, &final_ssim()))
        .py()?;
    Ok((
        PyModel {
            config: *config,
            params,
        },
        PyFitLog { inner: log },
    ))
}

/// Trains one shared encoder with a private decoder per image.
#[pyfunction]
#[pyo3(signature = (images, config, lr=1e-4, iterations=5000, seed=0))]
fn train_shared_encoder(
    py: Python<'_>,
    images: Vec<PyImage>,
    config: &PyModelConfig,
    lr: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<(PyEncoder, Vec<PyFitLog>)> {
    let signals: Vec<ImageSignal> = images.into_iter().map(|i| i.inner).collect();
    let cfg = config.inner;
    let train = train_config(lr, iterations);
    let (state, logs) = py
        .detach(|| strainer::train_shared_encoder(&signals, &cfg, &train, seed))
        .py()?;
    Ok((
        PyEncoder {
            config: cfg,
            encoder: state.encoder,
        },
        logs.into_iter().map(|inner| PyFitLog { inner }).collect(),
    ))
}

#[pyfunction]
fn psnr(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    metrics::psnr(&a.inner, &b.inner).py()
}

#[pyfunction]
fn ssim(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    metrics::ssim(&a.inner, &b.inner).py()
}

/// Block-average downsampling by an integer factor.
#[pyfunction]
fn downsample(image: &PyImage, factor: usize) -> PyResult<PyImage> {
    Ok(PyImage {
        inner: inverse::apply_operator(&ForwardOperator::Downsample { factor }, &image.inner).py()?,
    })
}

/// Poisson noise at `peak` photons for intensity 1. Returns the noisy image.
#[pyfunction]
#[pyo3(signature = (image, peak, seed=0))]
fn add_poisson_noise(image: &PyImage, peak: f64, seed: u64) -> PyResult<PyImage> {
    Ok(PyImage {
        inner: inverse::add_poisson_noise(&image.inner, peak, seed).py()?,
    })
}

/// Poisson peak giving `target_snr_db`; returns `(peak, achieved_snr_db)`.
#[pyfunction]
#[pyo3(signature = (image, target_snr_db=2.0, seed=0))]
fn calibrate_peak(image: &PyImage, target_snr_db: f64, seed: u64) -> PyResult<(f64, f64)> {
    inverse::calibrate_peak(&image.inner, target_snr_db, seed).py()
}

/// Fits `model` so that the operator applied to its output matches
/// `observed`. `factor = 1` means denoising. Returns the final model, the
/// model at the best iteration, the log and the best iteration.
#[pyfunction]
#[pyo3(signature = (model, observed, factor=1, ground_truth=None, lr=1e-4, iterations=2000))]
fn fit_inverse(
    py: Python<'_>,
    model: &PyModel,
    observed: &PyImage,
    factor: usize,
    ground_truth: Option<PyImage>,
    lr: f64,
    iterations: usize,
) -> PyResult<(PyModel, PyModel, PyFitLog, usize)> {
    let operator = match factor {
        0 => return Err(PyValueError::new_err("factor must be positive")),
        1 => ForwardOperator::Identity,
        f => ForwardOperator::Downsample { factor: f },
    };
    let meas = Measurement {
        observed: observed.inner.clone(),
        operator,
        ground_truth: ground_truth.map(|g| g.inner),
    };
    let train = train_config(lr, iterations);
    let init = model.params.clone();
    let activation = model.config.activation;
    let out = py
        .detach(|| inverse::fit_inverse(init, &activation, &meas, &train, &FitOptions::default()))
        .py()?;
    let wrap = |params| PyModel {
        config: model.config,
        params,
    };
    Ok((
        wrap(out.params),
        wrap(out.best_params),
        PyFitLog { inner: out.log },
        out.best.iteration,
    ))
}

#[pymodule]
fn pystrainer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyEncoder>()?;
    m.add_class::<PyFitLog>()?;
    m.add_function(wrap_pyfunction!(param_count, m)?)?;
    m.add_function(wrap_pyfunction!(init_model, m)?)?;
    m.add_function(wrap_pyfunction!(fit_single, m)?)?;
    m.add_function(wrap_pyfunction!(fit_test_signal, m)?)?;
    m.add_function(wrap_pyfunction!(train_shared_encoder, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(downsample, m)?)?;
    m.add_function(wrap_pyfunction!(add_poisson_noise, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_peak, m)?)?;
    m.add_function(wrap_pyfunction!(fit_inverse, m)?)?;
    Ok(())
}
