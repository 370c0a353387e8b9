//! Noise-level estimation from a single image and the noise-aware prior
//! assignment weight.
//!
//! The image is pixel-shuffle downsampled with stride 4 to break spatial
//! noise correlation, 8×8 patches are scored by their mean absolute first
//! difference, and the weak-texture half of each sub-image contributes
//! high-pass residual standard deviations. For white noise the residual
//! n − box₃ₓ₃(n) has variance (72/81)σ², hence the √(81/72) correction.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{pd_down, ImageTensor};

const PD_STRIDE: usize = 4;
const PATCH: usize = 8;
const PATCH_STRIDE: usize = 4;

/// Estimated average noise level.
#[derive(Debug, Clone)]
pub struct NoiseEstimate<T> {
    /// Noise standard deviation on the 0–255 scale.
    pub delta: T,
    /// Number of weak-texture patches that contributed.
    pub patches_used: usize,
    /// Median residual std (0–1 scale) per sub-image, across channels.
    pub sub_medians: Vec<T>,
}

fn median<T: Real>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / T::of(2.0)
    }
}

// Mean absolute horizontal plus vertical first difference.
fn texture_score<T: Real>(patch: &[T]) -> T {
    let mut acc = T::zero();
    let mut count = 0usize;
    for y in 0..PATCH {
        for x in 0..PATCH - 1 {
            acc = acc + (patch[y * PATCH + x + 1] - patch[y * PATCH + x]).abs();
            count += 1;
        }
    }
    let mut acc_v = T::zero();
    let mut count_v = 0usize;
    for y in 0..PATCH - 1 {
        for x in 0..PATCH {
            acc_v = acc_v + (patch[(y + 1) * PATCH + x] - patch[y * PATCH + x]).abs();
            count_v += 1;
        }
    }
    acc / T::of(count as f64) + acc_v / T::of(count_v as f64)
}

// Std of (patch − box₃ₓ₃ patch) on the interior, with the white-noise bias
// correction √(81/72).
fn residual_std<T: Real>(patch: &[T]) -> T {
    let mut res = Vec::with_capacity((PATCH - 2) * (PATCH - 2));
    for y in 1..PATCH - 1 {
        for x in 1..PATCH - 1 {
            let mut mean = T::zero();
            for dy in 0..3 {
                for dx in 0..3 {
                    mean = mean + patch[(y + dy - 1) * PATCH + (x + dx - 1)];
                }
            }
            mean = mean / T::of(9.0);
            res.push(patch[y * PATCH + x] - mean);
        }
    }
    let n = T::of(res.len() as f64);
    let mean = res.iter().copied().fold(T::zero(), |a, b| a + b) / n;
    let var = res
        .iter()
        .map(|&r| (r - mean) * (r - mean))
        .fold(T::zero(), |a, b| a + b)
        / n;
    var.sqrt() * T::of((81.0 / 72.0f64).sqrt())
}

/// Estimate the average noise standard deviation δ (0–255 scale) from a
/// single noisy image. Requires height and width of at least 32.
pub fn estimate_delta<T: Real>(y: &ImageTensor<T>) -> Result<NoiseEstimate<T>> {
    let (channels, height, width) = y.shape();
    if height < 32 || width < 32 {
        return Err(Error::argument(format!(
            "noise estimation needs at least 32x32, got {height}x{width}"
        )));
    }
    let grid = pd_down(y, PD_STRIDE)?;
    let mut sub_medians = Vec::new();
    let mut patches_used = 0usize;
    for sub in grid.subs() {
        for c in 0..channels {
            let (sh, sw) = (sub.height(), sub.width());
            let mut scored: Vec<(T, T)> = Vec::new();
            let mut r = 0;
            while r + PATCH <= sh {
                let mut s = 0;
                while s + PATCH <= sw {
                    let mut patch = Vec::with_capacity(PATCH * PATCH);
                    for dy in 0..PATCH {
                        for dx in 0..PATCH {
                            patch.push(sub.at(c, r + dy, s + dx));
                        }
                    }
                    scored.push((texture_score(&patch), residual_std(&patch)));
                    s += PATCH_STRIDE;
                }
                r += PATCH_STRIDE;
            }
            if scored.is_empty() {
                continue;
            }
            let mut scores: Vec<T> = scored.iter().map(|&(t, _)| t).collect();
            let threshold = median(&mut scores);
            // Keep the weak-texture half (score at or below the median, so at
            // least half the patches always survive).
            let mut kept: Vec<T> = scored
                .iter()
                .filter(|&&(t, _)| t <= threshold)
                .map(|&(_, sd)| sd)
                .collect();
            patches_used += kept.len();
            sub_medians.push(median(&mut kept));
        }
    }
    if sub_medians.is_empty() {
        return Err(Error::argument("no usable patches"));
    }
    let mean = sub_medians.iter().copied().fold(T::zero(), |a, b| a + b)
        / T::of(sub_medians.len() as f64);
    Ok(NoiseEstimate { delta: T::of(255.0) * mean, patches_used, sub_medians })
}

/// Prior-assignment weight λ(δ): 1/γ below l1, 1 on [l1, l2), γ at or above
/// l2.
pub fn lambda_weight<T: Real>(delta: T, l1: T, l2: T, gamma: T) -> T {
    if delta < l1 {
        T::one() / gamma
    } else if delta < l2 {
        T::one()
    } else {
        gamma
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{add_noise, NoiseModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_gives_zero_delta() {
        let img = ImageTensor::<f64>::full(1, 32, 32, 0.5);
        let est = estimate_delta(&img).unwrap();
        assert_eq!(est.delta, 0.0);
        assert!(est.patches_used >= 1);
    }

    #[test]
    fn small_image_rejected() {
        let img = ImageTensor::<f64>::full(1, 31, 64, 0.5);
        assert!(estimate_delta(&img).is_err());
    }

    #[test]
    fn awgn_sigma15_calibration() {
        let img = ImageTensor::<f64>::full(1, 64, 64, 0.5);
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy =
                add_noise(&img, &NoiseModel::Awgn { sigma: 15.0 / 255.0 }, &mut rng).unwrap();
            let est = estimate_delta(&noisy).unwrap();
            assert!(
                (12.0..=18.0).contains(&est.delta),
                "seed {seed}: delta {}",
                est.delta
            );
        }
    }

    #[test]
    fn smooth_gradient_sigma30_calibration() {
        let img = ImageTensor::<f64>::from_fn(1, 64, 64, |_, y, x| {
            0.3 + 0.4 * (x as f64 / 63.0 + y as f64 / 63.0) / 2.0
        });
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy =
                add_noise(&img, &NoiseModel::Awgn { sigma: 30.0 / 255.0 }, &mut rng).unwrap();
            let est = estimate_delta(&noisy).unwrap();
            assert!(
                (21.0..=39.0).contains(&est.delta),
                "seed {seed}: delta {}",
                est.delta
            );
        }
    }

    #[test]
    fn scale_equivariant_on_noise_amplitude() {
        let img = ImageTensor::<f64>::full(1, 64, 64, 0.5);
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n1 =
                add_noise(&img, &NoiseModel::Awgn { sigma: 10.0 / 255.0 }, &mut rng).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n2 =
                add_noise(&img, &NoiseModel::Awgn { sigma: 20.0 / 255.0 }, &mut rng).unwrap();
            let d1 = estimate_delta(&n1).unwrap().delta;
            let d2 = estimate_delta(&n2).unwrap().delta;
            let ratio = d2 / d1;
            assert!((1.7..=2.3).contains(&ratio), "seed {seed}: ratio {ratio}");
        }
    }

    #[test]
    fn lambda_plateaus_and_boundaries() {
        // Defaults l1=10, l2=25, γ=2.
        assert_eq!(lambda_weight(5.0, 10.0, 25.0, 2.0), 0.5);
        assert_eq!(lambda_weight(15.0, 10.0, 25.0, 2.0), 1.0);
        assert_eq!(lambda_weight(30.0, 10.0, 25.0, 2.0), 2.0);
        // Half-open boundary semantics.
        assert_eq!(lambda_weight(10.0, 10.0, 25.0, 2.0), 1.0);
        assert_eq!(lambda_weight(25.0, 10.0, 25.0, 2.0), 2.0);
    }

    #[test]
    fn lambda_is_nondecreasing_step() {
        let mut prev = 0.0f64;
        let mut plateaus = std::collections::BTreeSet::new();
        let mut d = 0.0f64;
        while d < 40.0 {
            let l = lambda_weight(d, 10.0, 25.0, 2.0);
            assert!(l >= prev);
            plateaus.insert((l * 1e9) as i64);
            prev = l;
            d += 0.25;
        }
        assert_eq!(plateaus.len(), 3);
    }
}
