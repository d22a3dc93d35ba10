//! Binary `STRN` checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "STRN"                      4 bytes magic
//! version                     u32 (= 1)
//! L, m, n, width, K           u32 each (L = number of stored layers)
//! activation tag              u32 (0 = sine, 1 = relu + positional encoding)
//! flags                       u32 (bit 0: encoder fragment)
//! omega0                      f64 (sine frequency; posenc bands for tag 1)
//! per layer:
//!   out, in                   u32 each
//!   weights                   out·in f64, row-major
//!   biases                    out f64
//! ```
//!
//! A full model stores all `L` layers. An encoder fragment stores only the
//! first `K` layers, so its `L` field equals `K`.

use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::inr::{Activation, Layer, MlpParams, ModelConfig};

pub const MAGIC: &[u8; 4] = b"STRN";
pub const VERSION: u32 = 1;
const FLAG_ENCODER_FRAGMENT: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Architecture of the full model the layers belong to.
    pub config: ModelConfig,
    pub params: MlpParams,
    pub encoder_fragment: bool,
}

impl Checkpoint {
    pub fn full(config: ModelConfig, params: MlpParams) -> Result<Self> {
        params.check_matches(&config)?;
        Ok(Self {
            config,
            params,
            encoder_fragment: false,
        })
    }

    pub fn encoder(config: ModelConfig, encoder: MlpParams) -> Result<Self> {
        let expected: Vec<_> = config.layer_dims()[..config.encoder_depth].to_vec();
        if encoder.layer_dims() != expected {
            return Err(Error::ArchMismatch {
                expected: format!("{expected:?}"),
                found: format!("{:?}", encoder.layer_dims()),
            });
        }
        Ok(Self {
            config,
            params: encoder,
            encoder_fragment: true,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + 8 * self.params.param_count() + 8 * self.params.depth());
        out.extend_from_slice(MAGIC);
        let (tag, scalar) = match self.config.activation {
            Activation::Sine { omega0 } => (0u32, omega0),
            Activation::ReluPosenc { bands } => (1u32, bands as f64),
        };
        let header = [
            VERSION,
            self.params.depth() as u32,
            self.config.in_dim as u32,
            self.config.out_dim as u32,
            self.config.width as u32,
            self.config.encoder_depth as u32,
            tag,
            if self.encoder_fragment {
                FLAG_ENCODER_FRAGMENT
            } else {
                0
            },
        ];
        for v in header {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&scalar.to_le_bytes());
        for l in &self.params.layers {
            out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
            for v in l.weight.data().iter().chain(l.bias.data()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let stored = read_u32(&mut r)? as usize;
        let in_dim = read_u32(&mut r)? as usize;
        let out_dim = read_u32(&mut r)? as usize;
        let width = read_u32(&mut r)? as usize;
        let k = read_u32(&mut r)? as usize;
        let tag = read_u32(&mut r)?;
        let flags = read_u32(&mut r)?;
        let scalar = read_f64(&mut r)?;
        let activation = match tag {
            0 => Activation::Sine { omega0: scalar },
            1 => Activation::ReluPosenc { bands: scalar as usize },
            t => return Err(Error::Checkpoint(format!("unknown activation tag {t}"))),
        };
        let encoder_fragment = flags & FLAG_ENCODER_FRAGMENT != 0;

        let mut layers = Vec::with_capacity(stored);
        for _ in 0..stored {
            let out = read_u32(&mut r)? as usize;
            let inp = read_u32(&mut r)? as usize;
            let weights = read_f64s(&mut r, out * inp)?;
            let bias = read_f64s(&mut r, out)?;
            layers.push(Layer {
                weight: Tensor::new(vec![out, inp], weights)?,
                bias: Tensor::new(vec![out], bias)?,
            });
        }
        if !r.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        let params = MlpParams::new(layers)?;
        // Fragments do not record the full depth; report the shallowest model
        // that has this encoder. Callers check against their own config.
        let depth = if encoder_fragment { k + 1 } else { stored };
        let config = ModelConfig {
            depth,
            width,
            in_dim,
            out_dim,
            activation,
            encoder_depth: k,
        };
        if encoder_fragment {
            if stored != k {
                return Err(Error::Checkpoint(format!(
                    "encoder fragment stores {stored} layers but K = {k}"
                )));
            }
            Checkpoint::encoder(config, params)
        } else {
            Checkpoint::full(config, params)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Confirms the stored layers fit `config` (full model or its first K layers).
    pub fn check_compatible(&self, config: &ModelConfig) -> Result<()> {
        let dims = config.layer_dims();
        let expected = if self.encoder_fragment {
            dims[..config.encoder_depth.min(dims.len())].to_vec()
        } else {
            dims
        };
        let found = self.params.layer_dims();
        if expected != found || self.config.activation != config.activation {
            return Err(Error::ArchMismatch {
                expected: format!("{expected:?} with {:?}", config.activation),
                found: format!("{found:?} with {:?}", self.config.activation),
            });
        }
        Ok(())
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Checkpoint("unexpected end of file".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut &[u8]) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64s(r: &mut &[u8], n: usize) -> Result<Vec<f64>> {
    if r.len() < n * 8 {
        return Err(Error::Checkpoint("unexpected end of file".into()));
    }
    (0..n).map(|_| read_f64(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inr::init_model;
    use proptest::prelude::*;

    fn cfg(width: usize) -> ModelConfig {
        ModelConfig {
            width,
            depth: 3,
            encoder_depth: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn exact_byte_layout() {
        let c = ModelConfig {
            depth: 1,
            width: 7,
            in_dim: 1,
            out_dim: 1,
            activation: Activation::Sine { omega0: 30.0 },
            encoder_depth: 1,
        };
        let mut p = init_model(&c, 0).unwrap();
        p.layers[0].weight.data_mut()[0] = 0.5;
        p.layers[0].bias.data_mut()[0] = -2.0;
        let bytes = Checkpoint::full(c, p).unwrap().to_bytes();
        let mut expected = b"STRN".to_vec();
        for v in [1u32, 1, 1, 1, 7, 1, 0, 0] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&30.0f64.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&0.5f64.to_le_bytes());
        expected.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn encoder_fragment_round_trip() {
        let c = cfg(5);
        let p = init_model(&c, 1).unwrap();
        let (enc, _) = p.split(2).unwrap();
        let ck = Checkpoint::encoder(c, enc.clone()).unwrap();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert!(back.encoder_fragment);
        assert_eq!(back.params, enc);
        back.check_compatible(&c).unwrap();
        assert!(back.check_compatible(&cfg(6)).is_err());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let c = cfg(3);
        let bytes = Checkpoint::full(c, init_model(&c, 2).unwrap()).unwrap().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    proptest! {
        #[test]
        fn full_checkpoint_round_trips_bitwise(seed in 0u64..500, width in 1usize..12, relu in any::<bool>()) {
            let c = ModelConfig {
                activation: if relu { Activation::relu_posenc() } else { Activation::sine() },
                ..cfg(width)
            };
            let p = init_model(&c, seed).unwrap();
            let ck = Checkpoint::full(c, p).unwrap();
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &ck);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
