//! PSNR and SSIM quality metrics over [0, 1]-ranged images.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::ImageTensor;

/// PSNR cap returned when the images are identical (zero MSE).
pub const PSNR_CAP_DB: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

/// Peak signal-to-noise ratio in dB with peak value 1.0, capped at 100 dB.
pub fn psnr<T: Real>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<T> {
    a.require_same_shape(b, "psnr")?;
    let mut acc = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x.to_f64c() - y.to_f64c();
        acc += d * d;
    }
    let mse = acc / a.len() as f64;
    if mse <= 0.0 {
        return Ok(T::of(PSNR_CAP_DB));
    }
    Ok(T::of((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, wi) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *wi = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *wi;
    }
    for wi in &mut w {
        *wi /= sum;
    }
    w
}

// Horizontal then vertical valid-mode filtering of one channel plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let wo = w - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            let mut acc = 0.0;
            for (t, &wt) in win.iter().enumerate() {
                acc += wt * plane[y * w + x + t];
            }
            tmp[y * wo + x] = acc;
        }
    }
    let ho = h - SSIM_WINDOW + 1;
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            let mut acc = 0.0;
            for (t, &wt) in win.iter().enumerate() {
                acc += wt * tmp[(y + t) * wo + x];
            }
            out[y * wo + x] = acc;
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5) and
/// stability constants (0.01)² and (0.03)² for peak 1.0. The local index is
/// evaluated wherever the full window fits and averaged over positions and
/// channels.
pub fn ssim<T: Real>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> Result<T> {
    a.require_same_shape(b, "ssim")?;
    let (channels, h, w) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::argument(format!(
            "ssim requires at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let n = h * w;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..channels {
        let pa: Vec<f64> = a.data()[c * n..(c + 1) * n].iter().map(|v| v.to_f64c()).collect();
        let pb: Vec<f64> = b.data()[c * n..(c + 1) * n].iter().map(|v| v.to_f64c()).collect();
        let paa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let pbb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let pab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, h, w, &win);
        let mu_b = filter_valid(&pb, h, w, &win);
        let m_aa = filter_valid(&paa, h, w, &win);
        let m_bb = filter_valid(&pbb, h, w, &win);
        let m_ab = filter_valid(&pab, h, w, &win);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = m_aa[i] - ma * ma;
            let var_b = m_bb[i] - mb * mb;
            let cov = m_ab[i] - ma * mb;
            let v = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            total += v;
            count += 1;
        }
    }
    Ok(T::of(total / count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise_img(seed: u64, h: usize, w: usize) -> ImageTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(1, h, w, |_, _, _| rng.gen::<f64>())
    }

    #[test]
    fn psnr_known_values() {
        let a = ImageTensor::<f64>::full(1, 4, 4, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = a.map(|v| v + 0.01);
        assert!((psnr(&a, &c).unwrap() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_symmetric_and_shape_checked() {
        let a = noise_img(1, 8, 8);
        let b = noise_img(2, 8, 8);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let small = noise_img(3, 4, 4);
        assert!(psnr(&a, &small).is_err());
    }

    #[test]
    fn ssim_self_similarity() {
        let a = noise_img(7, 16, 16);
        let s = ssim(&a, &a).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "ssim(a,a) = {s}");
    }

    #[test]
    fn ssim_inverted_checkerboard_is_negative() {
        let a = ImageTensor::<f64>::from_fn(1, 16, 16, |_, y, x| ((y + x) % 2) as f64);
        let b = a.map(|v| 1.0 - v);
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.0, "ssim = {s}");
    }

    #[test]
    fn ssim_tiny_perturbation_stays_high() {
        let a = noise_img(11, 16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = a.map(|v| v + 1e-4 * <f64 as crate::real::Real>::std_normal(&mut rng));
        let s = ssim(&a, &b).unwrap();
        assert!(s > 0.999, "ssim = {s}");
    }

    #[test]
    fn ssim_symmetric() {
        let a = noise_img(21, 14, 14);
        let b = noise_img(22, 14, 14);
        let s1 = ssim(&a, &b).unwrap();
        let s2 = ssim(&b, &a).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = noise_img(5, 10, 16);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn ssim_matches_direct_window_evaluation() {
        // Independent oracle: evaluate the SSIM definition with explicit
        // per-window loops instead of separable filtering.
        let a = noise_img(31, 13, 15);
        let b = a.map(|v| 0.8 * v + 0.05);
        let win = gaussian_window();
        let (h, w) = (13usize, 15usize);
        let c1 = 1e-4;
        let c2 = 9e-4;
        let mut total = 0.0;
        let mut count = 0;
        for y0 in 0..h - 10 {
            for x0 in 0..w - 10 {
                let (mut ma, mut mb, mut maa, mut mbb, mut mab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..11 {
                    for dx in 0..11 {
                        let wt = win[dy] * win[dx];
                        let va = a.at(0, y0 + dy, x0 + dx);
                        let vb = b.at(0, y0 + dy, x0 + dx);
                        ma += wt * va;
                        mb += wt * vb;
                        maa += wt * va * va;
                        mbb += wt * vb * vb;
                        mab += wt * va * vb;
                    }
                }
                let (va, vb, cov) = (maa - ma * ma, mbb - mb * mb, mab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        let want = total / count as f64;
        let got = ssim(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }
}
