use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::inr::ImageSignal;

/// Reads an 8-bit PNG (gray, gray+alpha, RGB, RGBA or palette) or a binary
/// PGM/PPM (`P5`/`P6`, maxval 255). Alpha is dropped. Values map to `v / 255`.
pub fn load_image(path: &Path) -> Result<ImageSignal> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(path)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(path, &bytes)
    } else {
        Err(unsupported(path, "not a PNG or binary PGM/PPM file"))
    }
}

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnsupportedImage {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn decode_png(path: &Path) -> Result<ImageSignal> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| unsupported(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| unsupported(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(unsupported(path, format!("bit depth {:?}", info.bit_depth)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let (src_channels, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => return Err(unsupported(path, format!("color type {other:?}"))),
    };
    let data = &buf[..info.buffer_size()];
    let mut pixels = Vec::with_capacity(w * h * keep);
    for y in 0..h {
        let row = &data[y * info.line_size..][..w * src_channels];
        for px in row.chunks_exact(src_channels) {
            pixels.extend(px[..keep].iter().map(|&v| v as f64 / 255.0));
        }
    }
    ImageSignal::new(h, w, keep, pixels)
}

fn decode_pnm(path: &Path, bytes: &[u8]) -> Result<ImageSignal> {
    let channels = if &bytes[..2] == b"P5" { 1 } else { 3 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| unsupported(path, "malformed PNM header"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(unsupported(path, format!("maxval {maxval} (only 8-bit is supported)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = w * h * channels;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| unsupported(path, "truncated raster"))?;
    ImageSignal::new(h, w, channels, raster.iter().map(|&v| v as f64 / 255.0).collect())
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes 8-bit output, choosing the format from the extension
/// (`.png`, `.pgm`, `.ppm`). Values are rounded to the nearest level.
pub fn save_image(path: &Path, image: &ImageSignal) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let (h, w, c) = image.dims();
    let bytes: Vec<u8> = image.pixels().iter().map(|&v| quantize(v)).collect();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match ext.as_str() {
        "png" => {
            let color = match c {
                1 => png::ColorType::Grayscale,
                3 => png::ColorType::Rgb,
                _ => return Err(unsupported(path, format!("{c} channels"))),
            };
            let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
            enc.set_color(color);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| unsupported(path, e.to_string()))?;
            writer
                .write_image_data(&bytes)
                .map_err(|e| unsupported(path, e.to_string()))?;
        }
        "pgm" | "ppm" => {
            let (magic, data) = match (ext.as_str(), c) {
                ("pgm", 1) | ("ppm", 3) => (if c == 1 { "P5" } else { "P6" }, bytes),
                ("pgm", 3) => ("P5", image.to_luma().pixels().iter().map(|&v| quantize(v)).collect()),
                ("ppm", 1) => ("P6", bytes.iter().flat_map(|&v| [v, v, v]).collect()),
                _ => return Err(unsupported(path, format!("{c} channels"))),
            };
            write!(out, "{magic}\n{w} {h}\n255\n").map_err(|e| Error::io(path, e))?;
            out.write_all(&data).map_err(|e| Error::io(path, e))?;
        }
        _ => return Err(unsupported(path, "unknown extension (use .png, .pgm or .ppm)")),
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_full_intensity() {
        let dir = tempfile::tempdir().unwrap();
        for ext in ["png", "pgm"] {
            let p = dir.path().join(format!("z.{ext}"));
            save_image(&p, &ImageSignal::constant(3, 5, 1, 0.0).unwrap()).unwrap();
            assert!(load_image(&p).unwrap().pixels().iter().all(|&v| v == 0.0));
            save_image(&p, &ImageSignal::constant(3, 5, 1, 1.0).unwrap()).unwrap();
            assert!(load_image(&p).unwrap().pixels().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn round_trip_within_half_level() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageSignal::new(4, 6, 3, (0..72).map(|i| (i as f64 * 0.137).fract()).collect()).unwrap();
        for ext in ["png", "ppm"] {
            let p = dir.path().join(format!("r.{ext}"));
            save_image(&p, &img).unwrap();
            let back = load_image(&p).unwrap();
            assert_eq!(back.dims(), img.dims());
            for (a, b) in img.pixels().iter().zip(back.pixels()) {
                assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn pnm_with_comment_and_bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        std::fs::write(&p, b"P5\n# comment\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(load_image(&p).unwrap().pixels(), &[0.0, 1.0]);
        std::fs::write(&p, b"P5\n2 1\n65535\n\x00\x00\x00\x00").unwrap();
        assert!(matches!(load_image(&p), Err(Error::UnsupportedImage { .. })));
        std::fs::write(&p, b"hello").unwrap();
        assert!(load_image(&p).is_err());
        assert!(matches!(
            load_image(&dir.path().join("missing.png")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn sixteen_bit_png_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        {
            let f = File::create(&p).unwrap();
            let mut enc = png::Encoder::new(BufWriter::new(f), 2, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            enc.write_header().unwrap().write_image_data(&[0, 1, 2, 3]).unwrap();
        }
        assert!(matches!(load_image(&p), Err(Error::UnsupportedImage { .. })));
    }
}
