//! Deterministic built-in feature map.
//!
//! Three stages of fixed random 3×3 convolutions (16, 32 and 80 filters) with
//! ReLU and 2×2 average pooling. Every stage's activations are averaged over
//! the four image quadrants, giving `4 × (16 + 32 + 80) = 512` features.
//! Filters are drawn once from the seed and never change.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::FeatureSet;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed;

pub const OUTPUT_DIM: usize = 512;
pub const MIN_IMAGE_SIDE: usize = 32;
pub const DEFAULT_EXTRACTOR_SEED: u64 = 42;

const STAGE_WIDTHS: [usize; 3] = [16, 32, 80];
const INPUT_CHANNELS: usize = 3;
const REGIONS: usize = 4;

#[derive(Clone, Debug)]
struct ConvStage {
    in_ch: usize,
    out_ch: usize,
    /// out_ch × in_ch × 3 × 3
    kernels: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct BuiltinExtractor {
    seed: u64,
    stages: Vec<ConvStage>,
}

impl Default for BuiltinExtractor {
    fn default() -> Self {
        Self::new(DEFAULT_EXTRACTOR_SEED)
    }
}

impl BuiltinExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, "extractor-filters"));
        let mut stages = Vec::with_capacity(STAGE_WIDTHS.len());
        let mut in_ch = INPUT_CHANNELS;
        for &out_ch in &STAGE_WIDTHS {
            let fan = in_ch * 9;
            let mut kernels = Vec::with_capacity(out_ch * fan);
            for _ in 0..out_ch {
                // zero-mean, unit-norm: each filter responds to structure, not brightness
                let raw: Vec<f64> = (0..fan).map(|_| StandardNormal.sample(&mut rng)).collect();
                let mean = raw.iter().sum::<f64>() / fan as f64;
                let norm = raw
                    .iter()
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>()
                    .sqrt();
                kernels.extend(raw.iter().map(|v| ((v - mean) / norm) as f32));
            }
            stages.push(ConvStage {
                in_ch,
                out_ch,
                kernels,
            });
            in_ch = out_ch;
        }
        debug_assert_eq!(REGIONS * STAGE_WIDTHS.iter().sum::<usize>(), OUTPUT_DIM);
        Self { seed, stages }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn output_dim(&self) -> usize {
        OUTPUT_DIM
    }

    pub fn tag(&self) -> String {
        format!("builtin-conv3:seed={}", self.seed)
    }

    /// Feature vector of one image.
    pub fn extract(&self, image: &Image) -> Result<Vec<f32>> {
        let (w, h) = (image.width(), image.height());
        if w.min(h) < MIN_IMAGE_SIDE {
            return Err(Error::invalid(format!(
                "image is {w}x{h}, minimum side is {MIN_IMAGE_SIDE}"
            )));
        }
        let mut features = Vec::with_capacity(OUTPUT_DIM);
        let (mut act, mut aw, mut ah) = (to_planes(image)?, w, h);
        for stage in &self.stages {
            let mut out = conv3x3(&act, aw, ah, stage);
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
            for plane in out.chunks_exact(aw * ah) {
                quadrant_means(plane, aw, ah, &mut features);
            }
            let (pooled, pw, ph) = avg_pool2(&out, aw, ah, stage.out_ch);
            act = pooled;
            aw = pw;
            ah = ph;
        }
        debug_assert_eq!(features.len(), OUTPUT_DIM);
        Ok(features)
    }

    /// One row per image, in input order.
    pub fn extract_features(&self, images: &[Image], corpus_tag: &str) -> Result<FeatureSet> {
        let Some(first) = images.first() else {
            return Err(Error::invalid(
                "cannot extract features from an empty image list",
            ));
        };
        if let Some(i) = images
            .iter()
            .position(|im| im.channels() != first.channels())
        {
            return Err(Error::invalid(format!(
                "image {i} has {} channels, image 0 has {}",
                images[i].channels(),
                first.channels()
            )));
        }
        let rows: Vec<Vec<f32>> = images
            .par_iter()
            .enumerate()
            .map(|(i, im)| {
                self.extract(im)
                    .map_err(|e| Error::invalid(format!("image {i}: {e}")))
            })
            .collect::<Result<_>>()?;
        FeatureSet::from_rows(rows, format!("{}|corpus={corpus_tag}", self.tag()))
    }
}

/// Planar f32 RGB in [-0.5, 0.5]. Gray images are replicated, alpha is dropped.
fn to_planes(image: &Image) -> Result<Vec<f32>> {
    let c = image.channels();
    let src_channel = |k: usize| -> Result<usize> {
        match c {
            1 => Ok(0),
            3 | 4 => Ok(k),
            _ => Err(Error::invalid(format!("unsupported channel count {c}"))),
        }
    };
    let n = image.width() * image.height();
    let mut planes = vec![0.0f32; INPUT_CHANNELS * n];
    for k in 0..INPUT_CHANNELS {
        let sc = src_channel(k)?;
        for (p, dst) in planes[k * n..(k + 1) * n].iter_mut().enumerate() {
            *dst = f32::from(image.data()[p * c + sc]) / 255.0 - 0.5;
        }
    }
    Ok(planes)
}

/// Zero-padded "same" 3×3 convolution over planar input.
fn conv3x3(input: &[f32], w: usize, h: usize, stage: &ConvStage) -> Vec<f32> {
    let n = w * h;
    let mut out = vec![0.0f32; stage.out_ch * n];
    for (oc, out_plane) in out.chunks_exact_mut(n).enumerate() {
        for ic in 0..stage.in_ch {
            let in_plane = &input[ic * n..(ic + 1) * n];
            let kernel = &stage.kernels[(oc * stage.in_ch + ic) * 9..][..9];
            for ky in 0..3 {
                for kx in 0..3 {
                    let weight = kernel[ky * 3 + kx];
                    let dy = ky as isize - 1;
                    let dx = kx as isize - 1;
                    let y0 = dy.min(0).unsigned_abs();
                    let y1 = (h as isize - dy.max(0)) as usize;
                    let x0 = dx.min(0).unsigned_abs();
                    let x1 = (w as isize - dx.max(0)) as usize;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let src = &in_plane[sy * w..(sy + 1) * w];
                        let dst = &mut out_plane[y * w..(y + 1) * w];
                        for x in x0..x1 {
                            dst[x] += weight * src[(x as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

fn avg_pool2(input: &[f32], w: usize, h: usize, channels: usize) -> (Vec<f32>, usize, usize) {
    let (pw, ph) = (w / 2, h / 2);
    let mut out = vec![0.0f32; channels * pw * ph];
    for c in 0..channels {
        let src = &input[c * w * h..(c + 1) * w * h];
        let dst = &mut out[c * pw * ph..(c + 1) * pw * ph];
        for y in 0..ph {
            for x in 0..pw {
                let i = 2 * y * w + 2 * x;
                dst[y * pw + x] = 0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
            }
        }
    }
    (out, pw, ph)
}

/// Means of the top-left, top-right, bottom-left and bottom-right quadrants.
/// Odd sides put the extra row/column in the bottom/right quadrants.
fn quadrant_means(plane: &[f32], w: usize, h: usize, out: &mut Vec<f32>) {
    let (mx, my) = (w / 2, h / 2);
    for (y0, y1) in [(0, my), (my, h)] {
        for (x0, x1) in [(0, mx), (mx, w)] {
            let mut sum = 0.0f64;
            for row in plane[y0 * w..y1 * w].chunks_exact(w) {
                sum += row[x0..x1].iter().map(|&v| f64::from(v)).sum::<f64>();
            }
            out.push((sum / ((y1 - y0) * (x1 - x0)) as f64) as f32);
        }
    }
}
