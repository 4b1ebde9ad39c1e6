//! Image corruptions with graded severities for robustness sweeps.
//! Severity 0 means no corruption; severities 1..=5 follow fixed parameter
//! tables per kind. Outputs are clamped to [0, 1].

use crate::error::{Error, Result};
use crate::image::Image;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    /// Additive Gaussian pixel noise.
    Noise,
    /// Repeated box blur.
    Blur,
    /// Block-average downsample + nearest upsample.
    Pixelate,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 3] = [
        CorruptionKind::Noise,
        CorruptionKind::Blur,
        CorruptionKind::Pixelate,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(CorruptionKind::Noise),
            "blur" => Ok(CorruptionKind::Blur),
            "pixelate" => Ok(CorruptionKind::Pixelate),
            _ => Err(Error::Config(format!("unknown corruption kind `{s}`"))),
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorruptionKind::Noise => write!(f, "noise"),
            CorruptionKind::Blur => write!(f, "blur"),
            CorruptionKind::Pixelate => write!(f, "pixelate"),
        }
    }
}

const NOISE_SIGMA: [f64; 5] = [0.02, 0.04, 0.08, 0.12, 0.18];
const BLUR_SIDE: [usize; 5] = [3, 3, 5, 5, 7];
const BLUR_PASSES: [usize; 5] = [1, 2, 2, 3, 3];
const PIXELATE_FACTOR: [usize; 5] = [2, 3, 4, 6, 8];

/// Box blur with edge renormalization (averages over in-bounds neighbors).
fn box_blur(img: &Image, side: usize) -> Image {
    let half = side as isize / 2;
    let mut out = Image::new(img.height, img.width);
    for c in 0..3 {
        for y in 0..img.height {
            for x in 0..img.width {
                let mut acc = 0.0;
                let mut count = 0.0;
                for dy in -half..=half {
                    for dx in -half..=half {
                        let iy = y as isize + dy;
                        let ix = x as isize + dx;
                        if iy < 0 || ix < 0 || iy >= img.height as isize || ix >= img.width as isize
                        {
                            continue;
                        }
                        acc += img.get(c, iy as usize, ix as usize);
                        count += 1.0;
                    }
                }
                out.set(c, y, x, acc / count);
            }
        }
    }
    out
}

fn pixelate(img: &Image, factor: usize) -> Image {
    let mut out = img.clone();
    for c in 0..3 {
        let mut y = 0;
        while y < img.height {
            let y1 = (y + factor).min(img.height);
            let mut x = 0;
            while x < img.width {
                let x1 = (x + factor).min(img.width);
                let mut acc = 0.0;
                for yy in y..y1 {
                    for xx in x..x1 {
                        acc += img.get(c, yy, xx);
                    }
                }
                let mean = acc / ((y1 - y) * (x1 - x)) as f64;
                for yy in y..y1 {
                    for xx in x..x1 {
                        out.set(c, yy, xx, mean);
                    }
                }
                x = x1;
            }
            y = y1;
        }
    }
    out
}

/// Apply one corruption at the given severity. Severity 0 returns the image
/// unchanged; severities above 5 are config errors. `rng` drives the noise
/// kind only (blur and pixelate are deterministic).
pub fn corrupt(
    image: &Image,
    kind: CorruptionKind,
    severity: usize,
    rng: &mut impl Rng,
) -> Result<Image> {
    if severity > 5 {
        return Err(Error::Config(format!(
            "severity {severity} outside 0..=5"
        )));
    }
    if severity == 0 {
        return Ok(image.clone());
    }
    let idx = severity - 1;
    let mut out = match kind {
        CorruptionKind::Noise => {
            let sigma = NOISE_SIGMA[idx];
            let mut out = image.clone();
            for v in out.data.iter_mut() {
                let n: f64 = StandardNormal.sample(rng);
                *v += sigma * n;
            }
            out
        }
        CorruptionKind::Blur => {
            let mut out = image.clone();
            for _ in 0..BLUR_PASSES[idx] {
                out = box_blur(&out, BLUR_SIDE[idx]);
            }
            out
        }
        CorruptionKind::Pixelate => pixelate(image, PIXELATE_FACTOR[idx]),
    };
    out.clamp_unit();
    Ok(out)
}

/// Mean absolute pixel deviation between two images.
pub fn mean_abs_deviation(a: &Image, b: &Image) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, side: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::new(side, side);
        for v in img.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        img
    }

    #[test]
    fn severity_zero_is_identity_for_every_kind() {
        let img = random_image(1, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in CorruptionKind::ALL {
            let out = corrupt(&img, kind, 0, &mut rng).unwrap();
            assert_eq!(out, img, "{kind}");
        }
    }

    #[test]
    fn severity_out_of_range_is_config_error() {
        let img = random_image(3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(
            corrupt(&img, CorruptionKind::Noise, 6, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn noise_severity_five_has_the_declared_variance() {
        // Constant mid image: the sample variance of the corrupted pixels
        // estimates sigma^2 = 0.18^2.
        let img = Image::filled(64, 64, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = corrupt(&img, CorruptionKind::Noise, 5, &mut rng).unwrap();
        let n = out.data.len() as f64;
        let mean = out.data.iter().sum::<f64>() / n;
        let var = out.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let expect = 0.18 * 0.18;
        assert!(
            (var - expect).abs() / expect < 0.10,
            "variance {var} vs {expect}"
        );
    }

    #[test]
    fn pixelate_leaves_block_constant_images_unchanged() {
        // 2x2-block-constant image is a fixed point of factor-2 pixelation.
        let mut img = Image::new(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for c in 0..3 {
            for by in 0..4 {
                for bx in 0..4 {
                    let v = rng.gen_range(0.0..1.0);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            img.set(c, by * 2 + dy, bx * 2 + dx, v);
                        }
                    }
                }
            }
        }
        let out = corrupt(&img, CorruptionKind::Pixelate, 1, &mut rng).unwrap();
        for (a, b) in img.data.iter().zip(&out.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pixelate_handles_non_divisible_factors() {
        let img = random_image(7, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // Factor 6 does not divide 32; edge blocks are smaller.
        let out = corrupt(&img, CorruptionKind::Pixelate, 4, &mut rng).unwrap();
        assert_eq!(out.data.len(), img.data.len());
        assert!(out.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = Image::filled(16, 16, 0.42);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = corrupt(&img, CorruptionKind::Blur, 5, &mut rng).unwrap();
        for v in &out.data {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn severity_is_monotone_in_mean_absolute_deviation() {
        // Random face-like renders, not i.i.d. pixel noise: blur deviation
        // is only monotone on spatially structured images.
        use crate::data::synth::{render, GeneratorSpec};
        for (seed, kind) in [(10u64, CorruptionKind::Noise), (11, CorruptionKind::Blur), (12, CorruptionKind::Pixelate)] {
            for gen in [GeneratorSpec::synthetic(0), GeneratorSpec::synthetic(4)] {
                let img = render(&gen, seed, 64);
                let mut prev = 0.0;
                for severity in 0..=5 {
                    let mut rng = ChaCha8Rng::seed_from_u64(100 + severity as u64);
                    let out = corrupt(&img, kind, severity, &mut rng).unwrap();
                    let dev = mean_abs_deviation(&img, &out);
                    assert!(
                        dev >= prev - 1e-12,
                        "{kind} severity {severity}: {dev} < {prev}"
                    );
                    prev = dev;
                }
            }
        }
    }
}
