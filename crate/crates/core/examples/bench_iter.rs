//! Per-iteration cost of single-image fitting and 10-image pretraining on
//! 64×64 inputs, for a few widths.

use std::time::Instant;

use strainer_core::data::synthetic::synthetic_faces;
use strainer_core::inr::{fit_single, ModelConfig};
use strainer_core::strainer::train_shared_encoder;
use strainer_core::TrainConfig;

fn main() -> strainer_core::Result<()> {
    let faces = synthetic_faces(10, 64, 0)?;
    for width in [32, 48, 64, 96] {
        let cfg = ModelConfig {
            width,
            ..ModelConfig::default()
        };
        let t = Instant::now();
        fit_single(&faces[0], &cfg, &TrainConfig::new(1e-4, 50), 0)?;
        let single = t.elapsed().as_secs_f64() * 1e3 / 50.0;
        let t = Instant::now();
        train_shared_encoder(&faces, &cfg, &TrainConfig::new(1e-4, 10), 0)?;
        let shared = t.elapsed().as_secs_f64() * 1e3 / 10.0;
        println!("width {width}: fit {single:.2} ms/it, pretrain-10 {shared:.1} ms/it");
    }
    Ok(())
}
