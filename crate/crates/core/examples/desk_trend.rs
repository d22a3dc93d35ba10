//! PSNR trajectories of random and transferred initializations on held-out
//! procedural faces.
//!
//! Args: `width pretrain_iters fit_iters lr n_test [omega0]`. Pretrains one
//! encoder on 10 faces, then fits `n_test` held-out faces from both inits.

use std::time::Instant;

use strainer_core::data::synthetic::synthetic_faces;
use strainer_core::fit::FitOptions;
use strainer_core::inr::{fit_single, Activation, ModelConfig};
use strainer_core::strainer::{fit_test_signal, train_shared_encoder, transfer_init};
use strainer_core::{FitLog, TrainConfig};

const MARKS: [usize; 9] = [0, 10, 25, 50, 100, 200, 500, 1000, 2000];

fn arg<T: std::str::FromStr>(args: &[String], i: usize, name: &str) -> T {
    args.get(i)
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("argument {i} ({name}) missing or malformed"))
}

fn main() -> strainer_core::Result<()> {
    let a: Vec<String> = std::env::args().skip(1).collect();
    let width: usize = arg(&a, 0, "width");
    let pre_it: usize = arg(&a, 1, "pretrain_iters");
    let fit_it: usize = arg(&a, 2, "fit_iters");
    let lr: f64 = arg(&a, 3, "lr");
    let n_test: usize = arg(&a, 4, "n_test");
    let omega0: f64 = if a.len() > 5 {
        arg(&a, 5, "omega0")
    } else {
        Activation::DEFAULT_OMEGA0
    };

    let faces = synthetic_faces(10 + n_test, 64, 0)?;
    let cfg = ModelConfig {
        width,
        activation: Activation::Sine { omega0 },
        ..ModelConfig::default()
    };
    let t = Instant::now();
    let (state, logs) = train_shared_encoder(&faces[..10], &cfg, &TrainConfig::new(lr, pre_it), 0)?;
    let pre: Vec<String> = logs
        .iter()
        .map(|l| format!("{:.1}", l.last().unwrap().psnr_db))
        .collect();
    println!(
        "pretrain {:.1}s, final branch PSNR {}",
        t.elapsed().as_secs_f64(),
        pre.join(" ")
    );

    let row = |l: &FitLog| -> String {
        MARKS
            .iter()
            .filter(|&&m| m <= fit_it)
            .map(|&m| format!("{:5.1}", l.at(m).unwrap().psnr_db))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let header: Vec<String> = MARKS
        .iter()
        .filter(|&&m| m <= fit_it)
        .map(|m| format!("{m:>5}"))
        .collect();
    println!("iteration        {}", header.join(" "));
    let train = TrainConfig::new(lr, fit_it);
    for (i, img) in faces[10..].iter().enumerate() {
        let seed = 100 + i as u64;
        let (_, base) = fit_single(img, &cfg, &train, seed)?;
        let init = transfer_init(&state, seed)?;
        let (_, tr) = fit_test_signal(init, &cfg, img, &train, &FitOptions::default())?;
        println!("img {i} random   {}", row(&base));
        println!("img {i} transfer {}", row(&tr));
    }
    Ok(())
}
