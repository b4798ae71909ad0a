//! Seeded procedural textures loosely resembling stained tissue: a pink
//! stroma background with oriented fibers, dark purple nuclei and pixel noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::image::Image;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    pub min_nuclei: usize,
    pub max_nuclei: usize,
    pub noise_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 64,
            min_nuclei: 6,
            max_nuclei: 24,
            noise_std: 6.0,
        }
    }
}

/// Image `index` of the corpus identified by `seed`. Independent of other indices.
pub fn texture(config: &SynthConfig, seed: u64, index: u64) -> Image {
    let mut rng = seed::rng(seed::derive_indexed(seed, "synth", index));
    let n = config.size;
    let jitter = |rng: &mut rand_chacha::ChaCha8Rng, base: f64, spread: f64| {
        base + rng.random_range(-spread..=spread)
    };
    let background = [
        jitter(&mut rng, 232.0, 12.0),
        jitter(&mut rng, 170.0, 18.0),
        jitter(&mut rng, 205.0, 14.0),
    ];
    let fiber = [
        jitter(&mut rng, 205.0, 15.0),
        jitter(&mut rng, 110.0, 20.0),
        jitter(&mut rng, 165.0, 15.0),
    ];
    let nucleus = [
        jitter(&mut rng, 85.0, 20.0),
        jitter(&mut rng, 50.0, 15.0),
        jitter(&mut rng, 135.0, 20.0),
    ];

    let angle = rng.random_range(0.0..std::f64::consts::PI);
    let freq = rng.random_range(0.25..0.7);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let warp = rng.random_range(0.5..2.5);
    let (ca, sa) = (angle.cos(), angle.sin());

    let count = rng.random_range(config.min_nuclei..=config.max_nuclei);
    let nuclei: Vec<(f64, f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            let cx = rng.random_range(0.0..n as f64);
            let cy = rng.random_range(0.0..n as f64);
            let rx = rng.random_range(1.8..4.5);
            let ry = rx * rng.random_range(0.6..1.4);
            let rot = rng.random_range(0.0..std::f64::consts::PI);
            (cx, cy, rx, ry, rot)
        })
        .collect();

    let noise = Normal::new(0.0, config.noise_std).expect("finite std");
    let mut data = Vec::with_capacity(n * n * 3);
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = (x as f64, y as f64);
            let u = fx * ca + fy * sa;
            let v = -fx * sa + fy * ca;
            let stripe = 0.5 + 0.5 * (freq * u + warp * (0.15 * v).sin() + phase).sin();
            let mut mix = [0.0; 3];
            for c in 0..3 {
                mix[c] = background[c] + (fiber[c] - background[c]) * stripe * stripe;
            }
            let mut coverage: f64 = 0.0;
            for &(cx, cy, rx, ry, rot) in &nuclei {
                let (dx, dy) = (fx - cx, fy - cy);
                let (cr, sr) = (rot.cos(), rot.sin());
                let a = (dx * cr + dy * sr) / rx;
                let b = (-dx * sr + dy * cr) / ry;
                let r2 = a * a + b * b;
                // soft edge over roughly one pixel
                coverage = coverage.max((1.0 - (r2.sqrt() - 1.0) * rx).clamp(0.0, 1.0));
            }
            for c in 0..3 {
                let value = mix[c] + (nucleus[c] - mix[c]) * coverage + noise.sample(&mut rng);
                data.push(value.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(n, n, 3, data).expect("sized buffer")
}

/// `count` textures with indices `0..count`.
pub fn corpus(config: &SynthConfig, seed: u64, count: usize) -> Vec<Image> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| texture(config, seed, i))
        .collect()
}
