//! Gaze encoder: a deterministic stand-in estimator producing a 2-component
//! gaze vector from fixed eye-region windows, plus the trainable adapter
//! that lifts the vector to a d-dimensional gaze token.
//!
//! The estimator is frozen by construction: it runs outside the autodiff
//! graph, so no gradient ever reaches it.

use crate::error::{Error, Result};
use crate::image::{Image, CHANNEL_STD};
use crate::params::ParameterStore;
use crate::tensor::{Graph, TensorId};
use std::f64::consts::{FRAC_PI_2, PI};

/// Yaw/pitch in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeVector {
    pub yaw: f64,
    pub pitch: f64,
}

impl GazeVector {
    pub fn new(yaw: f64, pitch: f64) -> Result<Self> {
        if !yaw.is_finite() || !pitch.is_finite() {
            return Err(Error::Data(format!(
                "gaze vector must be finite, got ({yaw}, {pitch})"
            )));
        }
        Ok(GazeVector { yaw, pitch })
    }

    pub fn norm(&self) -> f64 {
        (self.yaw * self.yaw + self.pitch * self.pitch).sqrt()
    }
}

/// Fractional window over the image: rows `[y0, y1)`, cols `[x0, x1)` after
/// scaling by the image side. Windows are canonical eye-region positions
/// for a square face crop, disjoint from one another.
#[derive(Debug, Clone, Copy)]
pub struct Window {
    pub y0: f64,
    pub y1: f64,
    pub x0: f64,
    pub x1: f64,
}

pub const WINDOW_LEFT: Window = Window { y0: 0.3125, y1: 0.4375, x0: 0.1875, x1: 0.375 };
pub const WINDOW_RIGHT: Window = Window { y0: 0.3125, y1: 0.4375, x0: 0.625, x1: 0.8125 };
pub const WINDOW_TOP: Window = Window { y0: 0.125, y1: 0.25, x0: 0.3125, x1: 0.6875 };
pub const WINDOW_BOTTOM: Window = Window { y0: 0.5625, y1: 0.6875, x0: 0.3125, x1: 0.6875 };

impl Window {
    pub fn bounds(&self, height: usize, width: usize) -> (usize, usize, usize, usize) {
        (
            (self.y0 * height as f64) as usize,
            (self.y1 * height as f64) as usize,
            (self.x0 * width as f64) as usize,
            (self.x1 * width as f64) as usize,
        )
    }

    pub fn contains(&self, y: usize, x: usize, height: usize, width: usize) -> bool {
        let (y0, y1, x0, x1) = self.bounds(height, width);
        y >= y0 && y < y1 && x >= x0 && x < x1
    }
}

/// Affine gain of the stand-in: yaw = GAIN * (mu_left - mu_right).
pub const ESTIMATOR_GAIN: f64 = FRAC_PI_2;

/// Mean of the per-channel inverse normalization stds; the factor by which a
/// raw intensity offset appears in a normalized-image window mean.
pub fn normalization_gain() -> f64 {
    CHANNEL_STD.iter().map(|s| 1.0 / s).sum::<f64>() / 3.0
}

/// Raw intensity offset that encodes a gaze component into a window pair.
pub fn injection_offset(component: f64) -> f64 {
    component / (PI * normalization_gain())
}

fn window_mean(img: &Image, w: Window) -> f64 {
    let (y0, y1, x0, x1) = w.bounds(img.height, img.width);
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        for y in y0..y1 {
            for x in x0..x1 {
                sum += img.get(c, y, x);
                count += 1;
            }
        }
    }
    sum / count as f64
}

/// Deterministic stand-in estimator on a normalized face image:
/// yaw from the left/right eye-window intensity difference, pitch from the
/// top/bottom difference, both clamped to [-pi/2, pi/2].
pub fn estimate_gaze_standin(normalized: &Image) -> GazeVector {
    let yaw = ESTIMATOR_GAIN * (window_mean(normalized, WINDOW_LEFT) - window_mean(normalized, WINDOW_RIGHT));
    let pitch = ESTIMATOR_GAIN * (window_mean(normalized, WINDOW_TOP) - window_mean(normalized, WINDOW_BOTTOM));
    GazeVector {
        yaw: yaw.clamp(-FRAC_PI_2, FRAC_PI_2),
        pitch: pitch.clamp(-FRAC_PI_2, FRAC_PI_2),
    }
}

/// Gaze adapter: row-vector product `[1,2] x [2,d]` with the trainable
/// adapter weight, differentiable w.r.t. the weight.
pub fn gaze_adapter(g: &mut Graph, store: &ParameterStore, gaze: GazeVector) -> Result<TensorId> {
    let vec = g.constant(vec![gaze.yaw, gaze.pitch], vec![1, 2])?;
    let w = g.param(store, "gaze.adapter.w")?;
    g.matmul(vec, w)
}

pub const GAZE_ADAPTER_PARAM: &str = "gaze.adapter.w";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Precision;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn windows_are_disjoint_at_desk_scale() {
        let windows = [WINDOW_LEFT, WINDOW_RIGHT, WINDOW_TOP, WINDOW_BOTTOM];
        for y in 0..32 {
            for x in 0..32 {
                let hits = windows
                    .iter()
                    .filter(|w| w.contains(y, x, 32, 32))
                    .count();
                assert!(hits <= 1, "windows overlap at ({y},{x})");
            }
        }
    }

    #[test]
    fn uniform_mid_gray_maps_to_zero_gaze() {
        let img = Image::filled(32, 32, 0.5).normalize().unwrap();
        let gaze = estimate_gaze_standin(&img);
        assert!(gaze.yaw.abs() < 1e-12, "yaw {}", gaze.yaw);
        assert!(gaze.pitch.abs() < 1e-12, "pitch {}", gaze.pitch);
    }

    #[test]
    fn injection_is_recovered_by_the_affine_formula() {
        // Write a known gaze into the windows of a flat image, then check the
        // estimator output against a by-hand evaluation of its formula.
        let target = GazeVector { yaw: 0.31, pitch: -0.17 };
        let mut img = Image::filled(32, 32, 0.5);
        let uy = injection_offset(target.yaw);
        let up = injection_offset(target.pitch);
        for y in 0..32 {
            for x in 0..32 {
                for c in 0..3 {
                    let mut v = img.get(c, y, x);
                    if WINDOW_LEFT.contains(y, x, 32, 32) {
                        v += uy;
                    }
                    if WINDOW_RIGHT.contains(y, x, 32, 32) {
                        v -= uy;
                    }
                    if WINDOW_TOP.contains(y, x, 32, 32) {
                        v += up;
                    }
                    if WINDOW_BOTTOM.contains(y, x, 32, 32) {
                        v -= up;
                    }
                    img.set(c, y, x, v);
                }
            }
        }
        let gaze = estimate_gaze_standin(&img.normalize().unwrap());
        assert!((gaze.yaw - target.yaw).abs() < 1e-9, "yaw {}", gaze.yaw);
        assert!((gaze.pitch - target.pitch).abs() < 1e-9, "pitch {}", gaze.pitch);
    }

    #[test]
    fn estimator_matches_hand_evaluated_affine_formula() {
        // Independent re-evaluation: window means by direct loops, then the
        // published affine map, compared against the estimator output.
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let mut img = Image::new(32, 32);
        for v in img.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        let norm = img.normalize().unwrap();
        let mean_of = |w: Window| -> f64 {
            let (y0, y1, x0, x1) = w.bounds(32, 32);
            let mut sum = 0.0;
            let mut n = 0.0;
            for c in 0..3 {
                for y in y0..y1 {
                    for x in x0..x1 {
                        sum += norm.get(c, y, x);
                        n += 1.0;
                    }
                }
            }
            sum / n
        };
        let expect_yaw = (std::f64::consts::FRAC_PI_2
            * (mean_of(WINDOW_LEFT) - mean_of(WINDOW_RIGHT)))
        .clamp(-FRAC_PI_2, FRAC_PI_2);
        let expect_pitch = (std::f64::consts::FRAC_PI_2
            * (mean_of(WINDOW_TOP) - mean_of(WINDOW_BOTTOM)))
        .clamp(-FRAC_PI_2, FRAC_PI_2);
        let got = estimate_gaze_standin(&norm);
        assert!((got.yaw - expect_yaw).abs() < 1e-12);
        assert!((got.pitch - expect_pitch).abs() < 1e-12);
    }

    #[test]
    fn estimator_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut img = Image::new(32, 32);
        for v in img.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        let norm = img.normalize().unwrap();
        let a = estimate_gaze_standin(&norm);
        let b = estimate_gaze_standin(&norm);
        assert_eq!(a.yaw.to_bits(), b.yaw.to_bits());
        assert_eq!(a.pitch.to_bits(), b.pitch.to_bits());
    }

    #[test]
    fn adapter_selects_rows_for_basis_gaze() {
        let mut store = ParameterStore::new();
        let d = 4;
        let w: Vec<f64> = (0..2 * d).map(|i| i as f64).collect();
        store.insert(GAZE_ADAPTER_PARAM, vec![2, d], w, false).unwrap();
        let mut g = Graph::new(Precision::F64);
        let token = gaze_adapter(&mut g, &store, GazeVector { yaw: 1.0, pitch: 0.0 }).unwrap();
        assert_eq!(g.values(token), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn adapter_zero_weight_gives_zero_token() {
        let mut store = ParameterStore::new();
        store
            .insert(GAZE_ADAPTER_PARAM, vec![2, 3], vec![0.0; 6], false)
            .unwrap();
        let mut g = Graph::new(Precision::F64);
        let token = gaze_adapter(&mut g, &store, GazeVector { yaw: 0.4, pitch: 0.2 }).unwrap();
        assert!(g.values(token).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn adapter_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let d = 6;
        let w: Vec<f64> = (0..2 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gaze = GazeVector { yaw: rng.gen_range(-1.0..1.0), pitch: rng.gen_range(-1.0..1.0) };
        let mut store = ParameterStore::new();
        store.insert(GAZE_ADAPTER_PARAM, vec![2, d], w.clone(), false).unwrap();
        let mut g = Graph::new(Precision::F64);
        let token = gaze_adapter(&mut g, &store, gaze).unwrap();
        for j in 0..d {
            let expect = gaze.yaw * w[j] + gaze.pitch * w[d + j];
            assert!((g.values(token)[j] - expect).abs() < 1e-6);
        }
    }
}
