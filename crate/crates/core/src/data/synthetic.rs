//! Procedural face-like images: a shared layout (head, hair, eyes, nose,
//! mouth on a shaded background) with per-seed variation in geometry,
//! colour and texture. Images in one corpus share low-frequency structure
//! the way aligned face crops do.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::inr::ImageSignal;

const SUPERSAMPLE: usize = 3;

struct Ellipse {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
}

impl Ellipse {
    /// Signed level: < 1 inside.
    fn level(&self, y: f64, x: f64) -> f64 {
        let dy = (y - self.cy) / self.ry;
        let dx = (x - self.cx) / self.rx;
        dy * dy + dx * dx
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        self.level(y, x) < 1.0
    }
}

struct Face {
    background: [[f64; 3]; 2],
    skin: [f64; 3],
    hair: [f64; 3],
    iris: [f64; 3],
    lips: [f64; 3],
    head: Ellipse,
    hair_cap: Ellipse,
    eyes: [Ellipse; 2],
    pupil_r: f64,
    nose: Ellipse,
    mouth: Ellipse,
    /// Texture sinusoids: (amplitude, ky, kx, phase).
    texture: Vec<(f64, f64, f64, f64)>,
}

fn jitter(rng: &mut ChaCha8Rng, centre: f64, spread: f64) -> f64 {
    centre + rng.random_range(-spread..=spread)
}

fn colour(rng: &mut ChaCha8Rng, base: [f64; 3], spread: f64) -> [f64; 3] {
    let s = rng.random_range(-spread..=spread);
    base.map(|c| (c + s + rng.random_range(-spread / 3.0..=spread / 3.0)).clamp(0.02, 0.98))
}

impl Face {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let cx = jitter(rng, 0.5, 0.03);
        let cy = jitter(rng, 0.53, 0.03);
        let rx = jitter(rng, 0.30, 0.03);
        let ry = jitter(rng, 0.38, 0.03);
        let eye_y = cy - ry * jitter(rng, 0.22, 0.04);
        let eye_dx = rx * jitter(rng, 0.42, 0.05);
        let eye_rx = rx * jitter(rng, 0.2, 0.03);
        let eye_ry = eye_rx * jitter(rng, 0.55, 0.1);
        let eye = |x| Ellipse {
            cy: eye_y,
            cx: x,
            ry: eye_ry,
            rx: eye_rx,
        };
        let texture = (0..6)
            .map(|_| {
                (
                    rng.random_range(0.005..0.025),
                    rng.random_range(-40.0..40.0),
                    rng.random_range(-40.0..40.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        Face {
            background: [colour(rng, [0.35, 0.45, 0.6], 0.2), colour(rng, [0.2, 0.25, 0.3], 0.15)],
            skin: colour(rng, [0.85, 0.65, 0.52], 0.15),
            hair: colour(rng, [0.25, 0.17, 0.1], 0.15),
            iris: colour(rng, [0.3, 0.35, 0.3], 0.15),
            lips: colour(rng, [0.7, 0.35, 0.35], 0.1),
            hair_cap: Ellipse {
                cy: cy - ry * jitter(rng, 0.35, 0.05),
                cx,
                ry: ry * jitter(rng, 0.8, 0.08),
                rx: rx * jitter(rng, 1.12, 0.05),
            },
            eyes: [eye(cx - eye_dx), eye(cx + eye_dx)],
            pupil_r: eye_ry * jitter(rng, 0.8, 0.1),
            nose: Ellipse {
                cy: cy + ry * 0.08,
                cx,
                ry: ry * jitter(rng, 0.16, 0.03),
                rx: rx * jitter(rng, 0.09, 0.02),
            },
            mouth: Ellipse {
                cy: cy + ry * jitter(rng, 0.45, 0.04),
                cx,
                ry: ry * jitter(rng, 0.07, 0.015),
                rx: rx * jitter(rng, 0.38, 0.05),
            },
            head: Ellipse { cy, cx, ry, rx },
            texture,
        }
    }

    /// Colour at normalized coordinates in `[0, 1]²`.
    fn shade(&self, y: f64, x: f64) -> [f64; 3] {
        let t = y;
        let mut c: [f64; 3] = std::array::from_fn(|i| self.background[0][i] * (1.0 - t) + self.background[1][i] * t);
        let in_head = self.head.contains(y, x);
        let hairline = y < self.head.cy - self.head.ry * 0.45;
        if self.hair_cap.contains(y, x) && (hairline || !in_head) && y < self.head.cy + self.head.ry * 0.2 {
            c = self.hair;
        } else if in_head {
            // Darken towards the rim for a rounded look.
            let rim = 1.0 - 0.25 * self.head.level(y, x);
            c = self.skin.map(|s| s * rim);
            for eye in &self.eyes {
                if eye.contains(y, x) {
                    let r = ((y - eye.cy).powi(2) + (x - eye.cx).powi(2)).sqrt();
                    c = if r < self.pupil_r * 0.45 {
                        [0.03, 0.03, 0.03]
                    } else if r < self.pupil_r {
                        self.iris
                    } else {
                        [0.95, 0.95, 0.93]
                    };
                }
            }
            if self.nose.contains(y, x) {
                c = c.map(|v| v * 0.85);
            }
            if self.mouth.contains(y, x) && y > self.mouth.cy - self.mouth.ry * 0.3 {
                c = self.lips;
            }
        }
        let tex: f64 = self
            .texture
            .iter()
            .map(|&(a, ky, kx, ph)| a * (ky * y + kx * x + ph).sin())
            .sum();
        c.map(|v| (v + tex).clamp(0.0, 1.0))
    }
}

/// One `size × size` RGB face, box-filtered from a 3× supersampled render.
pub fn synthetic_face(size: usize, seed: u64) -> Result<ImageSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let face = Face::random(&mut rng);
    let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut px = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let mut acc = [0.0; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let fy = (y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64) / size as f64;
                    let fx = (x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64) / size as f64;
                    let c = face.shade(fy, fx);
                    for i in 0..3 {
                        acc[i] += c[i];
                    }
                }
            }
            px.extend(acc.iter().map(|a| a / n));
        }
    }
    ImageSignal::from_clamped(size, size, 3, &px)
}

/// `count` faces with seeds `seed, seed + 1, ...`.
pub fn synthetic_faces(count: usize, size: usize, seed: u64) -> Result<Vec<ImageSignal>> {
    (0..count as u64).map(|i| synthetic_face(size, seed + i)).collect()
}
