//! Deterministic synthetic test images.
//!
//! Purely hash-based, so the same `(width, height, seed)` always yields the
//! same pixels on every platform. `synthetic_natural` layers smooth
//! illumination, multi-octave value noise and a couple of soft edges to get
//! photograph-like band statistics without shipping binary fixtures.

use crate::transform::Image;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Lattice value in [-1, 1] for integer coordinates.
fn lattice(seed: u64, octave: u64, gx: i64, gy: i64) -> f64 {
    let h = splitmix64(
        seed ^ octave.wrapping_mul(0xA076_1D64_78BD_642F)
            ^ (gx as u64).wrapping_mul(0xE703_7ED1_A0B4_28DB)
            ^ (gy as u64).wrapping_mul(0x8EBC_6AF0_9C88_C6E3),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Bilinear value noise at one octave of cell size `cell`.
fn value_noise(seed: u64, octave: u64, x: f64, y: f64, cell: f64) -> f64 {
    let fx = x / cell;
    let fy = y / cell;
    let gx = fx.floor();
    let gy = fy.floor();
    let tx = smoothstep(fx - gx);
    let ty = smoothstep(fy - gy);
    let (gx, gy) = (gx as i64, gy as i64);
    let v00 = lattice(seed, octave, gx, gy);
    let v10 = lattice(seed, octave, gx + 1, gy);
    let v01 = lattice(seed, octave, gx, gy + 1);
    let v11 = lattice(seed, octave, gx + 1, gy + 1);
    let a = v00 + (v10 - v00) * tx;
    let b = v01 + (v11 - v01) * tx;
    a + (b - a) * ty
}

/// A textured, edge-bearing test image with natural-looking statistics.
pub fn synthetic_natural(width: usize, height: usize, seed: u64) -> Image {
    let w = width as f64;
    let h = height as f64;
    Image::from_fn(width, height, |xi, yi| {
        let x = xi as f64;
        let y = yi as f64;
        // smooth illumination
        let mut v = 118.0
            + 48.0 * (x / w * 2.3 + 0.7).sin() * (y / h * 1.7 + 1.9).cos()
            + 22.0 * (y / h * 4.1).sin();
        // texture octaves, coarse to fine; the fine ones sit near the
        // unit-bin quantization threshold like photographic grain does
        v += 10.0 * value_noise(seed, 1, x, y, 53.0);
        v += 1.0 * value_noise(seed, 2, x, y, 17.0);
        v += 0.5 * value_noise(seed, 3, x, y, 5.0);
        v += 0.35 * value_noise(seed, 4, x, y, 1.7);
        // a soft diagonal edge and a vertical one
        let d1 = (x * 0.62 + y * 0.78 - 0.55 * w) / 6.0;
        v += 22.0 * d1.tanh();
        let d2 = (x - 0.22 * w) / 5.0;
        v -= 14.0 * d2.tanh();
        v.round().clamp(0.0, 255.0) as u8
    })
    .expect("nonzero dimensions")
}

/// A smooth diagonal ramp.
pub fn gradient(width: usize, height: usize) -> Image {
    Image::from_fn(width, height, |x, y| {
        (255.0 * (x + y) as f64 / (width + height - 2).max(1) as f64).round() as u8
    })
    .expect("nonzero dimensions")
}
