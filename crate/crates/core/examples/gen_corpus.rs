//! Writes the bundled 64×64 face corpus and its manifest.
//!
//! Usage: `cargo run --example gen_corpus [out_dir]`. The default output is
//! `tests/fixtures/faces` inside this crate.

use std::path::PathBuf;

use strainer_core::data::synthetic::synthetic_faces;
use strainer_core::data::{make_split, save_image};

const COUNT: usize = 20;
const SIZE: usize = 64;
const TRAIN: usize = 10;
const SEED: u64 = 0;

fn main() -> strainer_core::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/faces"));
    std::fs::create_dir_all(&out).map_err(|e| strainer_core::Error::Data(format!("{}: {e}", out.display())))?;
    let mut names = Vec::new();
    for (i, face) in synthetic_faces(COUNT, SIZE, SEED)?.iter().enumerate() {
        let name = format!("face_{i:02}.ppm");
        save_image(&out.join(&name), face)?;
        names.push(name);
    }
    make_split("synthetic-faces", &names, TRAIN, SEED)?.save(&out.join("manifest.json"))?;
    println!("wrote {COUNT} images to {}", out.display());
    Ok(())
}
