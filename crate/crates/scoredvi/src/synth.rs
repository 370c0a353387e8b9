//! Synthetic scenes, noise generators and exact reference posteriors: the
//! ground-truth machinery behind the verification and acceptance suites.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::oracle::GmmPriorOracle;
use crate::real::Real;
use crate::tensor::{ImageTensor, NoiseVarMap};

/// Clean-scene generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Every pixel 0.5.
    Constant,
    /// Horizontal ramp 0..1 across the width.
    Ramp,
    /// Binary checkerboard with 1-pixel cells.
    Checker,
    /// 7×7 box-blurred uniform noise, renormalized to [0.2, 0.8].
    SmoothRandom,
}

impl SceneKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "ramp" => Ok(Self::Ramp),
            "checker" => Ok(Self::Checker),
            "smooth-random" => Ok(Self::SmoothRandom),
            other => Err(Error::argument(format!("unknown scene kind '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Ramp => "ramp",
            Self::Checker => "checker",
            Self::SmoothRandom => "smooth-random",
        }
    }
}

/// Generate a clean scene with values in [0, 1].
pub fn gen_clean<T: Real, R: Rng>(
    kind: SceneKind,
    channels: usize,
    height: usize,
    width: usize,
    rng: &mut R,
) -> Result<ImageTensor<T>> {
    if height < 8 || width < 8 {
        return Err(Error::argument("scene must be at least 8x8"));
    }
    let img = match kind {
        SceneKind::Constant => ImageTensor::full(channels, height, width, T::of(0.5)),
        SceneKind::Ramp => ImageTensor::from_fn(channels, height, width, |_, _, x| {
            T::of(x as f64 / (width - 1) as f64)
        }),
        SceneKind::Checker => ImageTensor::from_fn(channels, height, width, |_, y, x| {
            T::of(((y + x) % 2) as f64)
        }),
        SceneKind::SmoothRandom => {
            let mut out = ImageTensor::zeros(channels, height, width);
            for c in 0..channels {
                let field: Vec<f64> =
                    (0..height * width).map(|_| rng.gen::<f64>()).collect();
                // 7x7 box blur; windows truncated at the borders.
                let mut blurred = vec![0.0; height * width];
                for y in 0..height {
                    for x in 0..width {
                        let (mut acc, mut n) = (0.0, 0.0);
                        for dy in y.saturating_sub(3)..(y + 4).min(height) {
                            for dx in x.saturating_sub(3)..(x + 4).min(width) {
                                acc += field[dy * width + dx];
                                n += 1.0;
                            }
                        }
                        blurred[y * width + x] = acc / n;
                    }
                }
                // The blurred field lives in [0, 1]; compress that range
                // into [0.2, 0.8] so the scene keeps a margin to both ends.
                for y in 0..height {
                    for x in 0..width {
                        out.set(c, y, x, T::of(0.2 + 0.6 * blurred[y * width + x]));
                    }
                }
            }
            out
        }
    };
    Ok(img)
}

/// Generative noise laws for synthetic observations.
#[derive(Debug, Clone)]
pub enum NoiseModel<T> {
    /// i.i.d. N(0, σ²).
    Awgn { sigma: T },
    /// Independent per-pixel N(0, v_i) from an explicit variance map.
    NonIid { var_map: ImageTensor<T> },
    /// White noise convolved (circularly) with a kernel, rescaled so the
    /// marginal standard deviation equals `sigma`.
    Correlated { sigma: T, kernel_h: usize, kernel_w: usize, kernel: Vec<T> },
    /// Signal-dependent N(0, a·x + b).
    SignalDependent { a: T, b: T },
}

impl<T: Real> NoiseModel<T> {
    pub fn correlated_box3(sigma: T) -> Self {
        let w = T::of(1.0 / 9.0);
        NoiseModel::Correlated { sigma, kernel_h: 3, kernel_w: 3, kernel: vec![w; 9] }
    }

    fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Awgn { sigma } => {
                if *sigma < T::zero() {
                    return Err(Error::domain("awgn sigma must be nonnegative"));
                }
            }
            NoiseModel::NonIid { var_map } => {
                if var_map.data().iter().any(|&v| v < T::zero()) {
                    return Err(Error::domain("variance map must be nonnegative"));
                }
            }
            NoiseModel::Correlated { sigma, kernel_h, kernel_w, kernel } => {
                if *sigma < T::zero() {
                    return Err(Error::domain("correlated sigma must be nonnegative"));
                }
                if kernel.len() != kernel_h * kernel_w || kernel.is_empty() {
                    return Err(Error::argument("kernel dims do not match taps"));
                }
                let sum: T = kernel.iter().copied().fold(T::zero(), |a, b| a + b);
                if (sum - T::one()).abs() > T::of(1e-6) {
                    return Err(Error::domain("kernel must sum to 1"));
                }
            }
            NoiseModel::SignalDependent { .. } => {}
        }
        Ok(())
    }
}

/// Draw one noise realization and add it to the image. The output is not
/// clamped, so values may leave [0, 1].
pub fn add_noise<T: Real, R: Rng>(
    img: &ImageTensor<T>,
    model: &NoiseModel<T>,
    rng: &mut R,
) -> Result<ImageTensor<T>> {
    model.validate()?;
    let (channels, height, width) = img.shape();
    match model {
        NoiseModel::Awgn { sigma } => {
            Ok(img.map(|v| v + *sigma * T::std_normal(rng)))
        }
        NoiseModel::NonIid { var_map } => {
            img.require_same_shape(var_map, "non-iid noise")?;
            let mut out = img.clone();
            for i in 0..out.len() {
                let s = var_map.data()[i].sqrt();
                out.data_mut()[i] = out.data_mut()[i] + s * T::std_normal(rng);
            }
            Ok(out)
        }
        NoiseModel::Correlated { sigma, kernel_h, kernel_w, kernel } => {
            let l2 = kernel
                .iter()
                .map(|&k| k * k)
                .fold(T::zero(), |a, b| a + b)
                .sqrt();
            let scale = *sigma / l2;
            let mut out = img.clone();
            for c in 0..channels {
                let white: Vec<T> =
                    (0..height * width).map(|_| T::std_normal(rng)).collect();
                for y in 0..height {
                    for x in 0..width {
                        let mut acc = T::zero();
                        for ky in 0..*kernel_h {
                            for kx in 0..*kernel_w {
                                // Circular convolution keeps the field
                                // stationary, so the analytic rescale is exact.
                                let sy = (y + height + ky - kernel_h / 2) % height;
                                let sx = (x + width + kx - kernel_w / 2) % width;
                                acc = acc + kernel[ky * kernel_w + kx] * white[sy * width + sx];
                            }
                        }
                        let i = out.idx(c, y, x);
                        out.data_mut()[i] = out.data_mut()[i] + scale * acc;
                    }
                }
            }
            Ok(out)
        }
        NoiseModel::SignalDependent { a, b } => {
            let mut out = img.clone();
            for i in 0..out.len() {
                let v = *a * img.data()[i] + *b;
                if v < T::zero() {
                    return Err(Error::domain("signal-dependent variance went negative"));
                }
                out.data_mut()[i] = out.data_mut()[i] + v.sqrt() * T::std_normal(rng);
            }
            Ok(out)
        }
    }
}

/// Test-bed instantiation of the image prior p(x).
#[derive(Debug, Clone)]
pub enum ScenePrior<T> {
    /// Independent per-pixel Gaussian N(m_i, s²_i).
    Gauss { mean: ImageTensor<T>, var: ImageTensor<T> },
    /// Shared scalar Gaussian mixture.
    Gmm(GmmPriorOracle<T>),
}

impl<T: Real> ScenePrior<T> {
    /// Log-density at pixel `i` of the prior smoothed by N(0, v).
    pub fn smoothed_log_pdf(&self, pixel: usize, x: T, v: T) -> T {
        let half = T::of(0.5);
        let log_2pi = T::of(1.837_877_066_409_345_5);
        match self {
            ScenePrior::Gauss { mean, var } => {
                let tv = var.data()[pixel] + v;
                let d = x - mean.data()[pixel];
                -half * (log_2pi + tv.ln()) - d * d / (tv + tv)
            }
            ScenePrior::Gmm(g) => g.smoothed_log_pdf(x, v),
        }
    }
}

/// Fit a shared scalar GMM to sample values by expectation–maximization with
/// deterministic quantile initialization.
pub fn fit_gmm_1d<T: Real>(
    values: &[T],
    components: usize,
    iters: usize,
    var_floor: T,
) -> Result<GmmPriorOracle<T>> {
    if values.is_empty() || components == 0 {
        return Err(Error::argument("fit_gmm_1d needs data and at least one component"));
    }
    let n = values.len();
    let mut sorted: Vec<T> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut means: Vec<T> = (0..components)
        .map(|j| sorted[((j as f64 + 0.5) / components as f64 * n as f64) as usize % n])
        .collect();
    let global_mean = values.iter().copied().fold(T::zero(), |a, b| a + b) / T::of(n as f64);
    let global_var = values
        .iter()
        .map(|&v| (v - global_mean) * (v - global_mean))
        .fold(T::zero(), |a, b| a + b)
        / T::of(n as f64);
    let mut vars = vec![(global_var / T::of(components as f64)).max(var_floor); components];
    let mut weights = vec![T::one() / T::of(components as f64); components];
    let mut resp = vec![T::zero(); components];
    for _ in 0..iters {
        let mut nk = vec![T::zero(); components];
        let mut sum_x = vec![T::zero(); components];
        let mut sum_xx = vec![T::zero(); components];
        for &x in values {
            let mut best = T::neg_infinity();
            for j in 0..components {
                let d = x - means[j];
                let lr = weights[j].max(T::of(1e-300)).ln()
                    - T::of(0.5) * vars[j].ln()
                    - d * d / (vars[j] + vars[j]);
                resp[j] = lr;
                if lr > best {
                    best = lr;
                }
            }
            let mut z = T::zero();
            for r in resp.iter_mut() {
                *r = (*r - best).exp();
                z = z + *r;
            }
            for j in 0..components {
                let r = resp[j] / z;
                nk[j] = nk[j] + r;
                sum_x[j] = sum_x[j] + r * x;
                sum_xx[j] = sum_xx[j] + r * x * x;
            }
        }
        for j in 0..components {
            let denom = nk[j].max(T::of(1e-12));
            weights[j] = nk[j] / T::of(n as f64);
            means[j] = sum_x[j] / denom;
            vars[j] = (sum_xx[j] / denom - means[j] * means[j]).max(var_floor);
        }
        // Keep the simplex exact despite rounding.
        let wsum: T = weights.iter().copied().fold(T::zero(), |a, b| a + b);
        for w in weights.iter_mut() {
            *w = *w / wsum;
        }
    }
    GmmPriorOracle::new(weights, means, vars)
}

/// Exact conjugate posterior for a per-pixel Gaussian prior under diagonal
/// Gaussian noise: mean = (s²y + σ²m)/(s²+σ²), variance = s²σ²/(s²+σ²).
pub fn exact_posterior_gauss<T: Real>(
    y: &ImageTensor<T>,
    prior_mean: &ImageTensor<T>,
    prior_var: &ImageTensor<T>,
    noise_var: &NoiseVarMap<T>,
) -> Result<(ImageTensor<T>, ImageTensor<T>)> {
    y.require_same_shape(prior_mean, "exact_posterior_gauss")?;
    y.require_same_shape(prior_var, "exact_posterior_gauss")?;
    y.require_same_shape(noise_var, "exact_posterior_gauss")?;
    let mut mean = ImageTensor::zeros_like(y);
    let mut var = ImageTensor::zeros_like(y);
    for i in 0..y.len() {
        let s2 = prior_var.data()[i];
        let n2 = noise_var.data()[i];
        mean.data_mut()[i] = (s2 * y.data()[i] + n2 * prior_mean.data()[i]) / (s2 + n2);
        var.data_mut()[i] = s2 * n2 / (s2 + n2);
    }
    Ok((mean, var))
}

fn require_spd(m: &DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::argument(format!("{what} must be square")));
    }
    let scale = m.amax().max(1e-300);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::argument(format!("{what} is not symmetric")));
            }
        }
    }
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::argument(format!("{what} is not positive definite")))
}

/// Dense-matrix consistency check of the score identity
/// Σ⁻¹(E[x|x̃] − x̃) = −(P+Σ)⁻¹(x̃ − m) for a Gaussian prior N(m, P) and
/// noise covariance Σ. Returns the maximum relative elementwise discrepancy
/// between the two sides.
pub fn verify_theorem1_dense(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    observed: &DVector<f64>,
) -> Result<f64> {
    let dim = prior_mean.len();
    if dim == 0 || dim > 64 {
        return Err(Error::argument("dimension must be in 1..=64"));
    }
    if prior_cov.nrows() != dim || noise_cov.nrows() != dim || observed.len() != dim {
        return Err(Error::argument("dimension mismatch"));
    }
    require_spd(prior_cov, "prior covariance")?;
    let sigma_chol = require_spd(noise_cov, "noise covariance")?;
    let total = prior_cov + noise_cov;
    let total_chol = require_spd(&total, "prior+noise covariance")?;

    let innov = observed - prior_mean;
    // Marginal score of N(m, P+Σ) at x̃.
    let lhs = -total_chol.solve(&innov);
    // Posterior mean E[x|x̃] = m + P (P+Σ)⁻¹ (x̃−m), then Σ⁻¹ (E − x̃).
    let posterior_mean = prior_mean + prior_cov * total_chol.solve(&innov);
    let rhs = sigma_chol.solve(&(posterior_mean - observed));

    let mut worst = 0.0f64;
    for i in 0..dim {
        let denom = lhs[i].abs().max(rhs[i].abs()).max(f64::EPSILON);
        worst = worst.max((lhs[i] - rhs[i]).abs() / denom);
    }
    Ok(worst)
}

/// Monte Carlo estimate of E_{x∼N(μ, σ²)} log p_v(x), where p_v is the prior
/// smoothed at the fixed level v = σ². Returns (estimate, standard error),
/// summed over pixels.
pub fn mc_expected_logp<T: Real, R: Rng>(
    mu: &ImageTensor<T>,
    sigma2: &ImageTensor<T>,
    prior: &ScenePrior<T>,
    samples: usize,
    rng: &mut R,
) -> Result<(T, T)> {
    mu.require_same_shape(sigma2, "mc_expected_logp")?;
    if sigma2.data().iter().any(|&v| v <= T::zero()) {
        return Err(Error::domain("sigma2 must be positive"));
    }
    if samples == 0 {
        return Err(Error::argument("need at least one sample"));
    }
    let mut acc = T::zero();
    let mut acc2 = T::zero();
    for _ in 0..samples {
        let mut total = T::zero();
        for i in 0..mu.len() {
            let v = sigma2.data()[i];
            let x = mu.data()[i] + v.sqrt() * T::std_normal(rng);
            total = total + prior.smoothed_log_pdf(i, x, v);
        }
        acc = acc + total;
        acc2 = acc2 + total * total;
    }
    let n = T::of(samples as f64);
    let mean = acc / n;
    let var = (acc2 / n - mean * mean).max(T::zero());
    let se = (var / n).sqrt();
    Ok((mean, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_and_ramp_scenes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c: ImageTensor<f64> =
            gen_clean(SceneKind::Constant, 1, 8, 8, &mut rng).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.5));
        let r: ImageTensor<f64> = gen_clean(SceneKind::Ramp, 1, 8, 8, &mut rng).unwrap();
        for x in 0..8 {
            assert!((r.at(0, 5, x) - x as f64 / 7.0).abs() < 1e-12);
        }
        assert!(gen_clean::<f64, _>(SceneKind::Ramp, 1, 4, 8, &mut rng).is_err());
    }

    #[test]
    fn smooth_random_is_smooth_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let img: ImageTensor<f64> =
                gen_clean(SceneKind::SmoothRandom, 1, 32, 32, &mut rng).unwrap();
            assert!(img.min_value() >= 0.2 - 1e-12 && img.max_value() <= 0.8 + 1e-12);
            let mut max_diff = 0.0f64;
            for y in 0..32 {
                for x in 0..31 {
                    max_diff = max_diff.max((img.at(0, y, x + 1) - img.at(0, y, x)).abs());
                    max_diff = max_diff.max((img.at(0, x, y) - img.at(0, x + 1, y)).abs());
                }
            }
            assert!(max_diff < 0.2, "max first difference {max_diff}");
        }
    }

    #[test]
    fn awgn_zero_sigma_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img: ImageTensor<f64> =
            gen_clean(SceneKind::SmoothRandom, 1, 16, 16, &mut rng).unwrap();
        let noisy = add_noise(&img, &NoiseModel::Awgn { sigma: 0.0 }, &mut rng).unwrap();
        assert_eq!(noisy, img);
    }

    #[test]
    fn awgn_empirical_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = ImageTensor::<f64>::full(1, 256, 256, 0.5);
        let noisy = add_noise(&img, &NoiseModel::Awgn { sigma: 0.1 }, &mut rng).unwrap();
        let res: Vec<f64> = noisy.data().iter().map(|&v| v - 0.5).collect();
        let m = res.iter().sum::<f64>() / res.len() as f64;
        let sd =
            (res.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / res.len() as f64).sqrt();
        assert!((0.098..=0.102).contains(&sd), "std {sd}");
    }

    #[test]
    fn correlated_noise_marginal_and_autocorrelation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = ImageTensor::<f64>::full(1, 256, 256, 0.5);
        let model = NoiseModel::correlated_box3(0.1);
        let noisy = add_noise(&img, &model, &mut rng).unwrap();
        let res: Vec<f64> = noisy.data().iter().map(|&v| v - 0.5).collect();
        let sd = (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt();
        assert!((0.095..=0.105).contains(&sd), "marginal std {sd}");
        // Lag-1 autocorrelation along rows.
        let mut num = 0.0;
        let mut den = 0.0;
        for y in 0..256 {
            for x in 0..255 {
                num += res[y * 256 + x] * res[y * 256 + x + 1];
            }
        }
        for r in &res {
            den += r * r;
        }
        let rho = num / den;
        assert!(rho > 0.3, "lag-1 autocorrelation {rho}");

        // AWGN for contrast has autocorrelation near zero.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let white = add_noise(&img, &NoiseModel::Awgn { sigma: 0.1 }, &mut rng).unwrap();
        let res: Vec<f64> = white.data().iter().map(|&v| v - 0.5).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for y in 0..256 {
            for x in 0..255 {
                num += res[y * 256 + x] * res[y * 256 + x + 1];
            }
        }
        for r in &res {
            den += r * r;
        }
        assert!((num / den).abs() < 0.05);
    }

    #[test]
    fn signal_dependent_rejects_negative_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = ImageTensor::<f64>::full(1, 8, 8, 0.5);
        let bad = NoiseModel::SignalDependent { a: -1.0, b: 0.1 };
        assert!(add_noise(&img, &bad, &mut rng).is_err());
        let ok = NoiseModel::SignalDependent { a: 0.01, b: 0.001 };
        assert!(add_noise(&img, &ok, &mut rng).is_ok());
    }

    #[test]
    fn exact_posterior_limits() {
        let y = ImageTensor::<f64>::full(1, 4, 4, 0.7);
        let m = ImageTensor::<f64>::full(1, 4, 4, 0.3);
        let s2 = ImageTensor::<f64>::full(1, 4, 4, 0.02);
        // Zero noise: posterior collapses onto the observation.
        let nv = ImageTensor::<f64>::zeros(1, 4, 4);
        let (mean, var) = exact_posterior_gauss(&y, &m, &s2, &nv).unwrap();
        assert_eq!(mean.at(0, 0, 0), 0.7);
        assert_eq!(var.at(0, 0, 0), 0.0);
        // Equal variances: midpoint.
        let nv = ImageTensor::<f64>::full(1, 4, 4, 0.02);
        let (mean, var) = exact_posterior_gauss(&y, &m, &s2, &nv).unwrap();
        assert!((mean.at(0, 0, 0) - 0.5).abs() < 1e-12);
        // Information never hurts.
        assert!(var.at(0, 0, 0) < 0.02);
    }

    #[test]
    fn theorem1_diagonal_reduces_to_scalar_identity() {
        let dim = 8;
        let m = DVector::from_element(dim, 0.4);
        let p = DMatrix::identity(dim, dim) * 0.02;
        let s = DMatrix::identity(dim, dim) * 0.01;
        let xt = DVector::from_fn(dim, |i, _| 0.1 * i as f64);
        let disc = verify_theorem1_dense(&m, &p, &s, &xt).unwrap();
        assert!(disc <= 1e-10, "discrepancy {disc}");
        // x̃ = m: both sides vanish.
        let disc = verify_theorem1_dense(&m, &p, &s, &m).unwrap();
        assert!(disc <= 1e-10);
    }

    #[test]
    fn theorem1_rejects_non_spd() {
        let dim = 4;
        let m = DVector::zeros(dim);
        let xt = DVector::from_element(dim, 0.1);
        let s = DMatrix::identity(dim, dim) * 0.01;
        let mut bad = DMatrix::identity(dim, dim);
        bad[(0, 1)] = 0.9;
        assert!(verify_theorem1_dense(&m, &bad, &s, &xt).is_err()); // asymmetric
        let neg = DMatrix::identity(dim, dim) * -1.0;
        assert!(verify_theorem1_dense(&m, &neg, &s, &xt).is_err());
    }

    #[test]
    fn mc_expected_logp_matches_gauss_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mu = ImageTensor::<f64>::full(1, 1, 1, 0.6);
        let s2 = ImageTensor::<f64>::full(1, 1, 1, 0.02);
        let prior = ScenePrior::Gauss {
            mean: ImageTensor::full(1, 1, 1, 0.4),
            var: ImageTensor::full(1, 1, 1, 0.03),
        };
        let (est, se) = mc_expected_logp(&mu, &s2, &prior, 200_000, &mut rng).unwrap();
        let tv: f64 = 0.03 + 0.02;
        let closed = -0.5 * (2.0 * std::f64::consts::PI * tv).ln()
            - ((0.6f64 - 0.4).powi(2) + 0.02) / (2.0 * tv);
        assert!((est - closed).abs() <= 3.0 * se, "est {est} closed {closed} se {se}");
    }

    #[test]
    fn fit_gmm_recovers_two_well_separated_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut vals = Vec::new();
        for _ in 0..4000 {
            let z: f64 = rng.gen();
            let (m, s) = if z < 0.3 { (0.2, 0.02) } else { (0.7, 0.03) };
            vals.push(m + s * <f64 as Real>::std_normal(&mut rng));
        }
        let gmm = fit_gmm_1d(&vals, 2, 100, 1e-6).unwrap();
        let mut pairs: Vec<(f64, f64)> = gmm
            .means()
            .iter()
            .zip(gmm.weights())
            .map(|(&m, &w)| (m, w))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!((pairs[0].0 - 0.2).abs() < 0.02);
        assert!((pairs[1].0 - 0.7).abs() < 0.02);
        assert!((pairs[0].1 - 0.3).abs() < 0.05);
    }
}
