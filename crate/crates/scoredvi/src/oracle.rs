//! MMSE Gaussian denoiser oracles and score extraction.
//!
//! A denoiser oracle approximates the posterior mean E[x | x̃] of a clean
//! image given an observation corrupted by independent per-pixel Gaussian
//! noise. The score of the noise-smoothed prior then follows from the
//! residual: ∇ log p(x̃) = (1/σ²) ⊙ (G(x̃) − x̃).

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::io::{read_sdvi, write_sdvi};
use crate::real::Real;
use crate::tensor::{ImageTensor, NoiseVarMap};

/// Pluggable MMSE denoiser for independent per-pixel Gaussian noise.
pub trait DenoiserOracle<T: Real>: Send + Sync {
    /// Estimate E[x | x̃] for the given per-pixel noise variance.
    fn denoise(&self, noisy: &ImageTensor<T>, noise_var: &NoiseVarMap<T>)
        -> Result<ImageTensor<T>>;

    /// Noise standard-deviation range the oracle is valid for, if limited.
    fn validity_range(&self) -> Option<(T, T)> {
        None
    }

    /// Whether concurrent invocations are safe.
    fn concurrent_safe(&self) -> bool {
        true
    }
}

fn check_shapes<T: Real>(noisy: &ImageTensor<T>, noise_var: &NoiseVarMap<T>) -> Result<()> {
    noisy.require_same_shape(noise_var, "denoise")?;
    if noise_var.data().iter().any(|&v| v < T::zero()) {
        return Err(Error::argument("noise variance must be nonnegative"));
    }
    Ok(())
}

/// Returns the input unchanged; its score is identically zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityOracle;

impl<T: Real> DenoiserOracle<T> for IdentityOracle {
    fn denoise(
        &self,
        noisy: &ImageTensor<T>,
        noise_var: &NoiseVarMap<T>,
    ) -> Result<ImageTensor<T>> {
        check_shapes(noisy, noise_var)?;
        Ok(noisy.clone())
    }
}

/// Exact MMSE denoiser for a per-pixel Gaussian prior N(m, s²).
#[derive(Debug, Clone)]
pub struct GaussPriorOracle<T> {
    mean: ImageTensor<T>,
    var: ImageTensor<T>,
}

impl<T: Real> GaussPriorOracle<T> {
    pub fn new(mean: ImageTensor<T>, var: ImageTensor<T>) -> Result<Self> {
        mean.require_same_shape(&var, "gauss prior")?;
        if var.data().iter().any(|&v| v <= T::zero()) {
            return Err(Error::domain("prior variance must be strictly positive"));
        }
        Ok(Self { mean, var })
    }

    /// Spatially constant prior.
    pub fn constant(channels: usize, height: usize, width: usize, m: T, s2: T) -> Result<Self> {
        Self::new(
            ImageTensor::full(channels, height, width, m),
            ImageTensor::full(channels, height, width, s2),
        )
    }

    pub fn mean(&self) -> &ImageTensor<T> {
        &self.mean
    }
    pub fn var(&self) -> &ImageTensor<T> {
        &self.var
    }
}

impl<T: Real> DenoiserOracle<T> for GaussPriorOracle<T> {
    fn denoise(
        &self,
        noisy: &ImageTensor<T>,
        noise_var: &NoiseVarMap<T>,
    ) -> Result<ImageTensor<T>> {
        check_shapes(noisy, noise_var)?;
        noisy.require_same_shape(&self.mean, "gauss prior denoise")?;
        let mut out = ImageTensor::zeros_like(noisy);
        for i in 0..noisy.len() {
            let x = noisy.data()[i];
            let s2 = self.var.data()[i];
            let n2 = noise_var.data()[i];
            out.data_mut()[i] = (s2 * x + n2 * self.mean.data()[i]) / (s2 + n2);
        }
        Ok(out)
    }
}

/// Exact MMSE denoiser for a shared scalar Gaussian-mixture prior: every
/// pixel value is modeled as drawn from Σ_j w_j N(m_j, s_j²).
#[derive(Debug, Clone)]
pub struct GmmPriorOracle<T> {
    weights: Vec<T>,
    means: Vec<T>,
    vars: Vec<T>,
}

impl<T: Real> GmmPriorOracle<T> {
    pub fn new(weights: Vec<T>, means: Vec<T>, vars: Vec<T>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != vars.len() {
            return Err(Error::argument("gmm prior: component count mismatch"));
        }
        let sum: T = weights.iter().copied().fold(T::zero(), |a, b| a + b);
        if (sum - T::one()).abs() > T::of(1e-6) || weights.iter().any(|&w| w < T::zero()) {
            return Err(Error::domain("gmm prior: weights must form a simplex"));
        }
        if vars.iter().any(|&v| v <= T::zero()) {
            return Err(Error::domain("gmm prior: variances must be positive"));
        }
        Ok(Self { weights, means, vars })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }
    pub fn weights(&self) -> &[T] {
        &self.weights
    }
    pub fn means(&self) -> &[T] {
        &self.means
    }
    pub fn vars(&self) -> &[T] {
        &self.vars
    }

    /// Log-density of the mixture smoothed by additive N(0, v) noise.
    pub fn smoothed_log_pdf(&self, x: T, v: T) -> T {
        let half = T::of(0.5);
        let log_2pi = T::of(1.837_877_066_409_345_5);
        let mut best = T::neg_infinity();
        let mut terms = Vec::with_capacity(self.weights.len());
        for j in 0..self.weights.len() {
            let tv = self.vars[j] + v;
            let d = x - self.means[j];
            let lt = if self.weights[j] > T::zero() {
                self.weights[j].ln() - half * (log_2pi + tv.ln()) - d * d / (tv + tv)
            } else {
                T::neg_infinity()
            };
            if lt > best {
                best = lt;
            }
            terms.push(lt);
        }
        let mut acc = T::zero();
        for lt in terms {
            acc = acc + (lt - best).exp();
        }
        best + acc.ln()
    }

    // Posterior mean of x given observation `x` under noise variance n2,
    // evaluated in log-space for stability.
    fn posterior_mean_scalar(&self, x: T, n2: T) -> T {
        let j = self.weights.len();
        let mut log_resp = Vec::with_capacity(j);
        let mut best = T::neg_infinity();
        for i in 0..j {
            let tv = self.vars[i] + n2;
            let d = x - self.means[i];
            let lr = if self.weights[i] > T::zero() {
                self.weights[i].ln() - T::of(0.5) * tv.ln() - d * d / (tv + tv)
            } else {
                T::neg_infinity()
            };
            if lr > best {
                best = lr;
            }
            log_resp.push(lr);
        }
        let mut norm = T::zero();
        let mut acc = T::zero();
        for i in 0..j {
            let r = (log_resp[i] - best).exp();
            let tv = self.vars[i] + n2;
            let post = (self.vars[i] * x + n2 * self.means[i]) / tv;
            acc = acc + r * post;
            norm = norm + r;
        }
        acc / norm
    }
}

impl<T: Real> DenoiserOracle<T> for GmmPriorOracle<T> {
    fn denoise(
        &self,
        noisy: &ImageTensor<T>,
        noise_var: &NoiseVarMap<T>,
    ) -> Result<ImageTensor<T>> {
        check_shapes(noisy, noise_var)?;
        let mut out = ImageTensor::zeros_like(noisy);
        for i in 0..noisy.len() {
            out.data_mut()[i] =
                self.posterior_mean_scalar(noisy.data()[i], noise_var.data()[i]);
        }
        Ok(out)
    }
}

/// Default validity window (noise std, [0,1] pixel scale) for external
/// denoisers, mirroring the usual 8-bit training range of 1..100.
pub const EXTERNAL_SIGMA_RANGE: (f64, f64) = (1.0 / 255.0, 100.0 / 255.0);

/// Denoiser implemented by an external command.
///
/// The command template must contain `{in}`, `{out}` and `{nv}` placeholders;
/// tensors are exchanged as SDVI1 files and exit code 0 signals success.
pub struct ExternalDenoiser<T> {
    template: String,
    timeout: Duration,
    validity: Option<(T, T)>,
}

static ORACLE_CALLS: AtomicU64 = AtomicU64::new(0);

impl<T: Real> ExternalDenoiser<T> {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        for ph in ["{in}", "{out}", "{nv}"] {
            if !template.contains(ph) {
                return Err(Error::argument(format!(
                    "command template is missing the {ph} placeholder"
                )));
            }
        }
        Ok(Self {
            template,
            timeout: Duration::from_secs(120),
            validity: Some((T::of(EXTERNAL_SIGMA_RANGE.0), T::of(EXTERNAL_SIGMA_RANGE.1))),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_validity(mut self, range: Option<(T, T)>) -> Self {
        self.validity = range;
        self
    }

    fn scratch_dir(&self) -> Result<PathBuf> {
        let n = ORACLE_CALLS.fetch_add(1, Ordering::Relaxed);
        let dir = std::env::temp_dir()
            .join(format!("sdvi-oracle-{}-{n}", std::process::id()));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

impl<T: Real> DenoiserOracle<T> for ExternalDenoiser<T> {
    fn denoise(
        &self,
        noisy: &ImageTensor<T>,
        noise_var: &NoiseVarMap<T>,
    ) -> Result<ImageTensor<T>> {
        check_shapes(noisy, noise_var)?;
        let dir = self.scratch_dir()?;
        let result = (|| {
            let in_path = dir.join("in.sdvi");
            let out_path = dir.join("out.sdvi");
            let nv_path = dir.join("nv.sdvi");
            write_sdvi(noisy, &in_path)?;
            write_sdvi(noise_var, &nv_path)?;
            let cmd = self
                .template
                .replace("{in}", &in_path.display().to_string())
                .replace("{out}", &out_path.display().to_string())
                .replace("{nv}", &nv_path.display().to_string());
            let mut child = Command::new("sh")
                .arg("-c")
                .arg(&cmd)
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(Stdio::from(std::fs::File::create(dir.join("stderr"))?))
                .spawn()
                .map_err(|e| Error::Oracle(format!("failed to spawn '{cmd}': {e}")))?;
            let deadline = Instant::now() + self.timeout;
            let status = loop {
                if let Some(status) = child.try_wait()? {
                    break status;
                }
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::Oracle(format!(
                        "'{cmd}' timed out after {:?}",
                        self.timeout
                    )));
                }
                std::thread::sleep(Duration::from_millis(5));
            };
            if !status.success() {
                let mut diag = String::new();
                if let Ok(mut f) = std::fs::File::open(dir.join("stderr")) {
                    let _ = f.take(4096).read_to_string(&mut diag);
                }
                return Err(Error::Oracle(format!(
                    "'{cmd}' exited with {status}: {}",
                    diag.trim()
                )));
            }
            let out: ImageTensor<T> = read_sdvi(&out_path)
                .map_err(|e| Error::Oracle(format!("reading denoiser output: {e}")))?;
            if out.shape() != noisy.shape() {
                return Err(Error::Oracle(format!(
                    "denoiser output shape {:?} does not match input {:?}",
                    out.shape(),
                    noisy.shape()
                )));
            }
            if !out.all_finite() {
                return Err(Error::Oracle("denoiser output contains non-finite values".into()));
            }
            Ok(out)
        })();
        let _ = std::fs::remove_dir_all(&dir);
        result
    }

    fn validity_range(&self) -> Option<(T, T)> {
        self.validity
    }

    fn concurrent_safe(&self) -> bool {
        false
    }
}

/// Score of the σ-smoothed prior at x̃: (1/σ²) ⊙ (G(x̃) − x̃).
///
/// Requires strictly positive noise variance everywhere. When the oracle
/// declares a validity range, σ is clamped into it before the call and the
/// clamped value is used in the 1/σ² factor as well.
pub fn score_from_denoiser<T: Real>(
    noisy: &ImageTensor<T>,
    noise_var: &NoiseVarMap<T>,
    oracle: &dyn DenoiserOracle<T>,
) -> Result<ImageTensor<T>> {
    noisy.require_same_shape(noise_var, "score_from_denoiser")?;
    if noise_var.data().iter().any(|&v| v <= T::zero()) {
        return Err(Error::domain("score undefined at zero noise variance"));
    }
    let nv = match oracle.validity_range() {
        Some((lo, hi)) => noise_var.map(|v| {
            let s = v.sqrt().max(lo).min(hi);
            s * s
        }),
        None => noise_var.clone(),
    };
    let denoised = oracle.denoise(noisy, &nv)?;
    let mut out = ImageTensor::zeros_like(noisy);
    for i in 0..noisy.len() {
        out.data_mut()[i] = (denoised.data()[i] - noisy.data()[i]) / nv.data()[i];
    }
    Ok(out)
}

/// Oracle assignment for the K mixture components: either one oracle
/// broadcast to every component or one per component.
pub struct OracleSet<T> {
    oracles: Vec<Box<dyn DenoiserOracle<T>>>,
}

impl<T: Real> OracleSet<T> {
    pub fn broadcast(oracle: Box<dyn DenoiserOracle<T>>) -> Self {
        Self { oracles: vec![oracle] }
    }

    pub fn per_component(oracles: Vec<Box<dyn DenoiserOracle<T>>>) -> Result<Self> {
        if oracles.is_empty() {
            return Err(Error::argument("oracle set must not be empty"));
        }
        Ok(Self { oracles })
    }

    pub fn validate_for(&self, mixtures: usize) -> Result<()> {
        if self.oracles.len() == 1 || self.oracles.len() == mixtures {
            Ok(())
        } else {
            Err(Error::argument(format!(
                "need 1 or {mixtures} oracles, got {}",
                self.oracles.len()
            )))
        }
    }

    pub fn get(&self, component: usize) -> &dyn DenoiserOracle<T> {
        if self.oracles.len() == 1 {
            self.oracles[0].as_ref()
        } else {
            self.oracles[component].as_ref()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_px(v: f64) -> ImageTensor<f64> {
        ImageTensor::full(1, 1, 1, v)
    }

    #[test]
    fn gauss_prior_posterior_mean() {
        // m=0.5, s²=0.01, σ²=0.01, x̃=0.7 -> equal-weight average 0.6.
        let o = GaussPriorOracle::constant(1, 1, 1, 0.5, 0.01).unwrap();
        let out = o.denoise(&one_px(0.7), &one_px(0.01)).unwrap();
        assert_abs_diff_eq!(out.at(0, 0, 0), 0.6, epsilon = 1e-12);
        // Zero noise variance returns the input exactly.
        let out = o.denoise(&one_px(0.7), &one_px(0.0)).unwrap();
        assert_eq!(out.at(0, 0, 0), 0.7);
        // Near-flat prior returns (almost) the input.
        let flat = GaussPriorOracle::constant(1, 1, 1, 0.5, 1e9).unwrap();
        let out = flat.denoise(&one_px(0.7), &one_px(0.01)).unwrap();
        assert_abs_diff_eq!(out.at(0, 0, 0), 0.7, epsilon = 1e-6);
    }

    #[test]
    fn gauss_prior_shrinks_toward_mean() {
        let o = GaussPriorOracle::constant(1, 4, 4, 0.4, 0.03).unwrap();
        let x = ImageTensor::from_fn(1, 4, 4, |_, y, _| 0.1 * y as f64);
        let out = o.denoise(&x, &ImageTensor::full(1, 4, 4, 0.02)).unwrap();
        for i in 0..x.len() {
            assert!((out.data()[i] - 0.4).abs() <= (x.data()[i] - 0.4).abs() + 1e-15);
        }
    }

    #[test]
    fn gmm_single_component_equals_gauss() {
        let gmm = GmmPriorOracle::new(vec![1.0], vec![0.5], vec![0.01]).unwrap();
        let gauss = GaussPriorOracle::constant(1, 1, 1, 0.5, 0.01).unwrap();
        for &x in &[0.1, 0.4, 0.9] {
            let a = gmm.denoise(&one_px(x), &one_px(0.02)).unwrap();
            let b = gauss.denoise(&one_px(x), &one_px(0.02)).unwrap();
            assert_abs_diff_eq!(a.at(0, 0, 0), b.at(0, 0, 0), epsilon = 1e-12);
        }
    }

    #[test]
    fn gmm_symmetric_prior_fixes_midpoint() {
        let gmm =
            GmmPriorOracle::new(vec![0.5, 0.5], vec![-0.3, 0.3], vec![0.01, 0.01]).unwrap();
        let out = gmm.denoise(&one_px(0.0), &one_px(0.05)).unwrap();
        assert_abs_diff_eq!(out.at(0, 0, 0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gmm_matches_quadrature() {
        // Scalar case against direct quadrature of ∫ x p(x | x̃) dx.
        let w = vec![0.3, 0.5, 0.2];
        let m = vec![0.2, 0.55, 0.8];
        let s2 = vec![0.004, 0.01, 0.002];
        let gmm = GmmPriorOracle::new(w.clone(), m.clone(), s2.clone()).unwrap();
        let n2 = 0.012;
        for &x in &[0.05, 0.3, 0.62, 0.95] {
            let got = gmm.denoise(&one_px(x), &one_px(n2)).unwrap().at(0, 0, 0);
            // Quadrature on a wide grid.
            let lo = -1.0;
            let hi = 2.0;
            let n = 100_000;
            let dx = (hi - lo) / n as f64;
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                let t = lo + (i as f64 + 0.5) * dx;
                let mut prior = 0.0;
                for j in 0..3 {
                    prior += w[j] / (2.0 * std::f64::consts::PI * s2[j]).sqrt()
                        * (-(t - m[j]) * (t - m[j]) / (2.0 * s2[j])).exp();
                }
                let lik = (-(x - t) * (x - t) / (2.0 * n2)).exp();
                num += t * prior * lik;
                den += prior * lik;
            }
            let want = num / den;
            assert!((got - want).abs() < 1e-6, "x={x}: got {got}, want {want}");
        }
    }

    #[test]
    fn gmm_survives_far_tail_inputs() {
        // All responsibilities underflow in linear space; log-space keeps
        // the result finite.
        let gmm =
            GmmPriorOracle::new(vec![0.5, 0.5], vec![0.0, 1.0], vec![1e-6, 1e-6]).unwrap();
        let out = gmm.denoise(&one_px(500.0), &one_px(1e-4)).unwrap();
        assert!(out.at(0, 0, 0).is_finite());
    }

    #[test]
    fn score_closed_form_for_gauss_prior() {
        // Score of N(0.5, s²+σ²) at 0.7 with s²=σ²=0.01: -(0.2)/0.02 = -10.
        let o = GaussPriorOracle::constant(1, 1, 1, 0.5, 0.01).unwrap();
        let s = score_from_denoiser(&one_px(0.7), &one_px(0.01), &o).unwrap();
        assert_abs_diff_eq!(s.at(0, 0, 0), -10.0, epsilon = 1e-9);
        // At the prior mean the score vanishes.
        let s = score_from_denoiser(&one_px(0.5), &one_px(0.01), &o).unwrap();
        assert_abs_diff_eq!(s.at(0, 0, 0), 0.0, epsilon = 1e-12);
        // Zero noise variance is out of domain.
        assert!(score_from_denoiser(&one_px(0.5), &one_px(0.0), &o).is_err());
    }

    #[test]
    fn score_matches_finite_difference_of_smoothed_gmm() {
        let gmm = GmmPriorOracle::new(
            vec![0.4, 0.6],
            vec![0.25, 0.7],
            vec![0.01, 0.02],
        )
        .unwrap();
        let v = 0.015;
        for i in 0..=20 {
            let x = 0.05 + 0.9 * (i as f64) / 20.0;
            let got = score_from_denoiser(&one_px(x), &one_px(v), &gmm).unwrap().at(0, 0, 0);
            let h = 1e-6;
            let fd = (gmm.smoothed_log_pdf(x + h, v) - gmm.smoothed_log_pdf(x - h, v))
                / (2.0 * h);
            assert!((got - fd).abs() < 1e-5, "x={x}: got {got}, fd {fd}");
        }
    }

    #[test]
    fn identity_oracle_has_zero_score() {
        let s =
            score_from_denoiser(&one_px(0.3), &one_px(0.01), &IdentityOracle).unwrap();
        assert_eq!(s.at(0, 0, 0), 0.0);
    }

    #[test]
    fn tweedie_consistency_random_draws() {
        // (1/σ²)(G(x̃)−x̃) == −(x̃−m)/(s²+σ²) for the Gaussian prior.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let m = rng.gen_range(0.0..1.0);
            let s2 = rng.gen_range(1e-4..0.1);
            let n2 = rng.gen_range(1e-4..0.1);
            let x = rng.gen_range(-0.5..1.5);
            let o = GaussPriorOracle::constant(1, 1, 1, m, s2).unwrap();
            let got = score_from_denoiser(&one_px(x), &one_px(n2), &o).unwrap().at(0, 0, 0);
            let want = -(x - m) / (s2 + n2);
            assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn external_template_validation() {
        assert!(ExternalDenoiser::<f64>::new("cp {in} {out}").is_err());
        assert!(ExternalDenoiser::<f64>::new("cp {in} {out} # {nv}").is_ok());
    }

    #[test]
    fn oracle_set_counts() {
        let set: OracleSet<f64> = OracleSet::broadcast(Box::new(IdentityOracle));
        assert!(set.validate_for(3).is_ok());
        let set: OracleSet<f64> = OracleSet::per_component(vec![
            Box::new(IdentityOracle),
            Box::new(IdentityOracle),
        ])
        .unwrap();
        assert!(set.validate_for(2).is_ok());
        assert!(set.validate_for(3).is_err());
    }
}
