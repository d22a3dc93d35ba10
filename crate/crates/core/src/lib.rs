//! Shared-encoder pretraining for sinusoidal implicit neural representations.
//!
//! A coordinate MLP is split into an encoder (the first `K` layers) and a
//! decoder. Pretraining fits `N` images at once with one shared encoder and
//! `N` decoders; the trained encoder then initializes a fresh network for a
//! new image or for an inverse problem observed through a forward operator.
//!
//! ```
//! use strainer_core::inr::{param_count, ModelConfig};
//! assert_eq!(param_count(&ModelConfig::default()), 264_707);
//! ```

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod data;
mod error;
pub mod fit;
pub mod inr;
pub mod inverse;
pub mod metrics;
pub mod strainer;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use fit::{FitLog, FitRecord, TrainConfig};
pub use inr::{ImageSignal, MlpParams, ModelConfig};
pub use strainer::StrainerState;
