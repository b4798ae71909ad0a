//! Severity-parameterized image degradations: Gaussian blur (a defocus
//! surrogate), salt-and-pepper noise, gray rectangular occlusions and forward
//! diffusion noise. Every kind is the exact identity at severity 0 and is
//! deterministic given its seed.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed;

pub const MAX_BLUR_SIGMA: f64 = 16.0;
pub const MAX_RECT_COUNT: usize = 64;
pub const RECT_FILL: u8 = 128;
pub const MIN_RECT_SIDE: usize = 8;

/// Gaussian sigma ladder standing in for focal-plane offsets 0 → ±8.
pub const BLUR_LADDER: [f64; 9] = [0.0, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 12.0, 16.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DegradeKind {
    Blur,
    SaltPepper,
    RectPatch,
    Diffusion,
}

impl DegradeKind {
    pub const ALL: [DegradeKind; 4] = [
        DegradeKind::Blur,
        DegradeKind::SaltPepper,
        DegradeKind::RectPatch,
        DegradeKind::Diffusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DegradeKind::Blur => "blur",
            DegradeKind::SaltPepper => "salt_pepper",
            DegradeKind::RectPatch => "rect_patch",
            DegradeKind::Diffusion => "diffusion",
        }
    }

    /// Default severity ladder, starting at the identity level 0.
    pub fn default_ladder(self) -> Vec<f64> {
        match self {
            DegradeKind::Blur => BLUR_LADDER.to_vec(),
            DegradeKind::SaltPepper => vec![0.0, 0.02, 0.05, 0.1, 0.2, 0.4, 0.6],
            DegradeKind::RectPatch => vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            DegradeKind::Diffusion => vec![0.0, 25.0, 50.0, 100.0, 200.0, 400.0, 800.0],
        }
    }
}

impl fmt::Display for DegradeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DegradeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "blur" => Ok(DegradeKind::Blur),
            "salt_pepper" | "saltpepper" => Ok(DegradeKind::SaltPepper),
            "rect_patch" | "rectpatch" | "rect" => Ok(DegradeKind::RectPatch),
            "diffusion" => Ok(DegradeKind::Diffusion),
            other => Err(Error::invalid(format!(
                "unknown degradation kind {other:?}"
            ))),
        }
    }
}

/// Linear beta schedule of the forward diffusion process.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    /// alpha_bars[t] = Π_{s ≤ t} (1 − β_s), with alpha_bars[0] = 1
    alpha_bars: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("valid default schedule")
    }
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::invalid("betas must lie in (0, 1)"));
        }
        if betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("betas must be non-decreasing"));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `ᾱ_t` for `t ∈ [0, T]`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars.get(t).copied().ok_or_else(|| {
            Error::invalid(format!("diffusion step {t} outside [0, {}]", self.steps()))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradeSpec {
    pub kind: DegradeKind,
    pub severity: f64,
    pub seed: u64,
}

impl DegradeSpec {
    pub fn new(kind: DegradeKind, severity: f64, seed: u64) -> Self {
        Self {
            kind,
            severity,
            seed,
        }
    }

    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        let s = self.severity;
        let in_range = match self.kind {
            DegradeKind::Blur => (0.0..=MAX_BLUR_SIGMA).contains(&s),
            DegradeKind::SaltPepper => (0.0..=1.0).contains(&s),
            DegradeKind::RectPatch => {
                (0.0..=MAX_RECT_COUNT as f64).contains(&s) && s.fract() == 0.0
            }
            DegradeKind::Diffusion => {
                (0.0..=schedule.steps() as f64).contains(&s) && s.fract() == 0.0
            }
        };
        if in_range {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "severity {s} is outside the valid range for {}",
                self.kind
            )))
        }
    }

    /// Apply to one image. `index` decorrelates the noise of different images in a corpus.
    pub fn apply(&self, image: &Image, schedule: &NoiseSchedule, index: u64) -> Result<Image> {
        self.validate(schedule)?;
        let seed = seed::derive_indexed(self.seed, self.kind.name(), index);
        match self.kind {
            DegradeKind::Blur => gaussian_blur(image, self.severity),
            DegradeKind::SaltPepper => salt_pepper(image, self.severity, seed),
            DegradeKind::RectPatch => rect_patch(image, self.severity as usize, seed),
            DegradeKind::Diffusion => {
                diffusion_noise(image, self.severity as usize, schedule, seed)
            }
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Separable Gaussian blur with kernel radius ⌈3σ⌉ and clamped edges.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Result<Image> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "blur sigma must be non-negative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h, c) = (image.width(), image.height(), image.channels());
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut horiz = vec![0.0f64; w * h * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                horiz[(y * w + x) * c + ch] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| {
                        let sx = clamp(x as isize + k as isize - radius, w);
                        wt * f64::from(image.get(sx, y, ch))
                    })
                    .sum();
            }
        }
    }
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wt)| {
                        let sy = clamp(y as isize + k as isize - radius, h);
                        wt * horiz[(sy * w + x) * c + ch]
                    })
                    .sum();
                let i = out.index(x, y, ch);
                out.data_mut()[i] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}

/// Each pixel is replaced with probability `p`; a second draw picks black or white.
pub fn salt_pepper(image: &Image, p: f64, seed: u64) -> Result<Image> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "salt-and-pepper rate must lie in [0, 1], got {p}"
        )));
    }
    let mut out = image.clone();
    if p == 0.0 {
        return Ok(out);
    }
    let mut rng = seed::rng(seed);
    for px in out.data_mut().chunks_exact_mut(image.channels()) {
        if rng.random::<f64>() < p {
            let value = if rng.random::<bool>() { 255 } else { 0 };
            px.fill(value);
        }
    }
    Ok(out)
}

/// Draw `count` mid-gray rectangles with sides uniform in `[8, side/4]`.
pub fn rect_patch(image: &Image, count: usize, seed: u64) -> Result<Image> {
    if count > MAX_RECT_COUNT {
        return Err(Error::invalid(format!(
            "rectangle count {count} exceeds {MAX_RECT_COUNT}"
        )));
    }
    let mut out = image.clone();
    let mut rng = seed::rng(seed);
    let (w, h) = (image.width(), image.height());
    let side_range = |n: usize| {
        let lo = MIN_RECT_SIDE.min(n);
        let hi = (n / 4).max(lo).min(n);
        lo..=hi
    };
    for _ in 0..count {
        let rh = rng.random_range(side_range(h));
        let rw = rng.random_range(side_range(w));
        let top = rng.random_range(0..=h - rh);
        let left = rng.random_range(0..=w - rw);
        for y in top..top + rh {
            for x in left..left + rw {
                out.pixel_mut(x, y).fill(RECT_FILL);
            }
        }
    }
    Ok(out)
}

/// Forward diffusion in normalized [-1, 1] space: `√ᾱ_t·x₀ + √(1−ᾱ_t)·ε`. No clamping.
pub fn forward_diffuse(
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Vec<f64>> {
    let alpha_bar = schedule.alpha_bar(t)?;
    if t == 0 {
        return Ok(x0.to_vec());
    }
    let (signal, noise) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    let mut rng = seed::rng(seed);
    Ok(x0
        .iter()
        .map(|&x| {
            let eps: f64 = StandardNormal.sample(&mut rng);
            signal * x + noise * eps
        })
        .collect())
}

/// [`forward_diffuse`] on an 8-bit image, re-quantized to 8 bits.
pub fn diffusion_noise(
    image: &Image,
    t: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Image> {
    schedule.alpha_bar(t)?;
    if t == 0 {
        return Ok(image.clone());
    }
    let x0: Vec<f64> = image
        .data()
        .iter()
        .map(|&p| f64::from(p) / 127.5 - 1.0)
        .collect();
    let xt = forward_diffuse(&x0, t, schedule, seed)?;
    let data = xt
        .iter()
        .map(|v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8)
        .collect();
    Image::new(image.width(), image.height(), image.channels(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn texture(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = seed::rng(seed);
        let data = (0..w * h * 3).map(|_| rng.random_range(30..=220)).collect();
        Image::new(w, h, 3, data).unwrap()
    }

    fn variance(img: &Image) -> f64 {
        let n = img.data().len() as f64;
        let mean = img.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        img.data()
            .iter()
            .map(|&v| (f64::from(v) - mean).powi(2))
            .sum::<f64>()
            / n
    }

    #[test]
    fn severity_zero_is_identity_for_every_kind() {
        let img = texture(40, 30, 1);
        let schedule = NoiseSchedule::default();
        for kind in DegradeKind::ALL {
            let out = DegradeSpec::new(kind, 0.0, 9)
                .apply(&img, &schedule, 0)
                .unwrap();
            assert_eq!(out, img, "{kind}");
        }
    }

    #[test]
    fn out_of_range_severities() {
        let img = texture(16, 16, 1);
        let schedule = NoiseSchedule::default();
        let cases = [
            (DegradeKind::Blur, -0.1),
            (DegradeKind::Blur, 16.5),
            (DegradeKind::SaltPepper, 1.2),
            (DegradeKind::RectPatch, 65.0),
            (DegradeKind::RectPatch, 1.5),
            (DegradeKind::Diffusion, 1001.0),
        ];
        for (kind, s) in cases {
            assert!(
                DegradeSpec::new(kind, s, 0)
                    .apply(&img, &schedule, 0)
                    .is_err(),
                "{kind} {s}"
            );
        }
        assert!(gaussian_blur(&img, -1.0).is_err());
        assert!(salt_pepper(&img, -0.1, 0).is_err());
        assert!(diffusion_noise(&img, 1001, &schedule, 0).is_err());
    }

    #[test]
    fn blur_of_impulse_is_center_weight() {
        let mut img = Image::filled(31, 31, 1, 0);
        img.pixel_mut(15, 15)[0] = 255;
        let out = gaussian_blur(&img, 2.0).unwrap();
        // independent evaluation of the normalized 1-D kernel at the center
        let total: f64 = (-6i32..=6).map(|k| (-(k * k) as f64 / 8.0).exp()).sum();
        let center = 1.0 / total;
        assert_eq!(out.get(15, 15, 0), (255.0 * center * center).round() as u8);
        assert_eq!(out.get(15, 15, 0), 10);
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let img = Image::filled(20, 12, 3, 77);
        for sigma in [0.5, 3.0, 16.0] {
            assert_eq!(gaussian_blur(&img, sigma).unwrap(), img);
        }
    }

    #[test]
    fn salt_pepper_extremes_and_rate() {
        let gray = Image::filled(512, 512, 3, 100);
        let all = salt_pepper(&gray, 1.0, 4).unwrap();
        assert!(all.data().iter().all(|&v| v == 0 || v == 255));
        let some = salt_pepper(&gray, 0.3, 4).unwrap();
        let altered = some
            .data()
            .chunks_exact(3)
            .filter(|px| px[0] != 100)
            .count() as f64
            / (512.0 * 512.0);
        assert!((altered - 0.3).abs() < 0.01, "{altered}");
        let whites = some
            .data()
            .chunks_exact(3)
            .filter(|px| px[0] == 255)
            .count() as f64;
        assert!((whites / (altered * 512.0 * 512.0) - 0.5).abs() < 0.02);
    }

    #[test]
    fn one_rectangle_on_white() {
        let white = Image::filled(64, 48, 3, 255);
        let out = rect_patch(&white, 1, 17).unwrap();
        let gray: Vec<(usize, usize)> = (0..48)
            .flat_map(|y| (0..64).map(move |x| (x, y)))
            .filter(|&(x, y)| out.get(x, y, 0) == RECT_FILL)
            .collect();
        let changed = out.data().iter().filter(|&&v| v != 255).count();
        let (x0, x1) = (
            gray.iter().map(|p| p.0).min().unwrap(),
            gray.iter().map(|p| p.0).max().unwrap(),
        );
        let (y0, y1) = (
            gray.iter().map(|p| p.1).min().unwrap(),
            gray.iter().map(|p| p.1).max().unwrap(),
        );
        let area = (x1 - x0 + 1) * (y1 - y0 + 1);
        assert_eq!(gray.len(), area, "gray region is a solid rectangle");
        assert_eq!(changed, area * 3);
        assert!((8..=16).contains(&(x1 - x0 + 1)) && (8..=12).contains(&(y1 - y0 + 1)));
        assert_eq!(rect_patch(&white, 1, 17).unwrap(), out);
    }

    #[test]
    fn schedule_shape() {
        let s = NoiseSchedule::default();
        assert_eq!(s.steps(), 1000);
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
        assert!((s.betas()[0] - 1e-4).abs() < 1e-15 && (s.betas()[999] - 0.02).abs() < 1e-15);
        let bars: Vec<f64> = (0..=1000).map(|t| s.alpha_bar(t).unwrap()).collect();
        assert!(bars.windows(2).all(|w| w[1] < w[0]));
        assert!(bars[1000] < 1e-3);
        assert!(NoiseSchedule::from_betas(vec![0.1, 0.05]).is_err());
        assert!(NoiseSchedule::from_betas(vec![1.0]).is_err());
    }

    #[test]
    fn full_diffusion_decorrelates() {
        let img = texture(256, 256, 3);
        let s = NoiseSchedule::default();
        let out = diffusion_noise(&img, 1000, &s, 5).unwrap();
        let xs: Vec<f64> = img.data().iter().map(|&v| f64::from(v)).collect();
        let ys: Vec<f64> = out.data().iter().map(|&v| f64::from(v)).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        assert!((cov / (vx * vy).sqrt()).abs() < 0.1);
    }

    #[test]
    fn diffused_mean_matches_closed_form() {
        let s = NoiseSchedule::default();
        let x0: Vec<f64> = (0..64).map(|i| -0.9 + 1.8 * i as f64 / 63.0).collect();
        let t = 300;
        let seeds = 100;
        let mut mean = vec![0.0; x0.len()];
        for seed in 0..seeds {
            let xt = forward_diffuse(&x0, t, &s, seed).unwrap();
            for (m, v) in mean.iter_mut().zip(xt) {
                *m += v / seeds as f64;
            }
        }
        let ab = s.alpha_bar(t).unwrap();
        // Monte-Carlo standard error of the mean is sqrt(1 - ab) / 10
        let tol = 4.0 * (1.0 - ab).sqrt() / (seeds as f64).sqrt();
        for (m, x) in mean.iter().zip(&x0) {
            assert!((m - ab.sqrt() * x).abs() < tol, "{m} vs {}", ab.sqrt() * x);
        }
    }

    #[test]
    fn kinds_parse() {
        for kind in DegradeKind::ALL {
            assert_eq!(kind.name().parse::<DegradeKind>().unwrap(), kind);
        }
        assert!("jpeg".parse::<DegradeKind>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn blur_never_increases_variance(seed in 0u64..1000, sigma in 0.1f64..6.0) {
            let img = texture(24, 20, seed);
            let out = gaussian_blur(&img, sigma).unwrap();
            prop_assert!(variance(&out) <= variance(&img) + 1e-9);
        }

        #[test]
        fn degradations_are_deterministic(seed in 0u64..1000, kind_idx in 0usize..4) {
            let img = texture(32, 32, 7);
            let kind = DegradeKind::ALL[kind_idx];
            let severity = match kind {
                DegradeKind::Blur => 1.5,
                DegradeKind::SaltPepper => 0.2,
                DegradeKind::RectPatch => 3.0,
                DegradeKind::Diffusion => 200.0,
            };
            let spec = DegradeSpec::new(kind, severity, seed);
            let s = NoiseSchedule::default();
            prop_assert_eq!(spec.apply(&img, &s, 3).unwrap(), spec.apply(&img, &s, 3).unwrap());
        }
    }
}
