//! Monte Carlo score gradients for the intractable part of L2.
//!
//! Per component k, samples x_m = μ_k + σ_k ⊙ ε_m are denoised by the
//! component's oracle; the residuals give the gradients of E_q log p:
//!   ∇μ  = mean_m (G(x_m) − x_m) / σ²
//!   ∇σ² = mean_m (G(x_m) − x_m) / σ² ⊙ ε_m / (2σ)   (chain-corrected)
//!       = mean_m (G(x_m) − x_m) / σ² ⊙ ε_m          (as printed)
//! They enter the loss gradient as −λ·π ⊙ ∇. The mixing weights receive no
//! gradient from this term: a score oracle never yields the value of
//! E log p that ∂L2/∂π would require.

use rand::Rng;

use crate::error::{Error, Result};
use crate::oracle::{score_from_denoiser, OracleSet};
use crate::params::{Theta, ThetaGrad};
use crate::real::Real;
use crate::tensor::ImageTensor;

use super::Sigma2GradMode;

/// Gradients of E_q log p with respect to μ_k and σ²_k (before weighting).
#[derive(Debug, Clone)]
pub struct ScoreGrads<T> {
    pub d_mu: Vec<ImageTensor<T>>,
    pub d_sigma2: Vec<ImageTensor<T>>,
}

/// Estimate the score gradients with M fresh samples per component.
pub fn score_grad_l2<T: Real, R: Rng>(
    theta: &Theta<T>,
    oracles: &OracleSet<T>,
    mc_samples: usize,
    mode: Sigma2GradMode,
    rng: &mut R,
) -> Result<ScoreGrads<T>> {
    let k = theta.mixtures();
    oracles.validate_for(k)?;
    if mc_samples == 0 {
        return Err(Error::argument("need at least one MC sample"));
    }
    let (c, h, w) = theta.map_shape();
    let inv_m = T::one() / T::of(mc_samples as f64);
    let two = T::of(2.0);
    let mut d_mu = Vec::with_capacity(k);
    let mut d_sigma2 = Vec::with_capacity(k);
    for kk in 0..k {
        let sigma2 = &theta.sigma2[kk];
        if sigma2.data().iter().any(|&v| v <= T::zero()) {
            return Err(Error::domain("sigma2 must be positive for score sampling"));
        }
        let mu = &theta.mu[kk];
        let oracle = oracles.get(kk);
        let mut acc_mu = ImageTensor::zeros(c, h, w);
        let mut acc_s2 = ImageTensor::zeros(c, h, w);
        let mut eps = ImageTensor::zeros(c, h, w);
        let mut sample = ImageTensor::zeros(c, h, w);
        for _ in 0..mc_samples {
            for i in 0..eps.len() {
                let e = T::std_normal(rng);
                eps.data_mut()[i] = e;
                sample.data_mut()[i] = mu.data()[i] + sigma2.data()[i].sqrt() * e;
            }
            let score = score_from_denoiser(&sample, sigma2, oracle)?;
            for i in 0..eps.len() {
                let s = score.data()[i];
                acc_mu.data_mut()[i] = acc_mu.data_mut()[i] + s;
                let factor = match mode {
                    Sigma2GradMode::ChainCorrected => {
                        eps.data()[i] / (two * sigma2.data()[i].sqrt())
                    }
                    Sigma2GradMode::AsPrinted => eps.data()[i],
                };
                acc_s2.data_mut()[i] = acc_s2.data_mut()[i] + s * factor;
            }
        }
        acc_mu.scale_in_place(inv_m);
        acc_s2.scale_in_place(inv_m);
        d_mu.push(acc_mu);
        d_sigma2.push(acc_s2);
    }
    Ok(ScoreGrads { d_mu, d_sigma2 })
}

/// Fold the score gradients into the loss gradient as −λ·π ⊙ ∇(E log p).
pub fn apply_score_grads<T: Real>(
    grad: &mut ThetaGrad<T>,
    theta: &Theta<T>,
    scores: &ScoreGrads<T>,
    lambda: T,
) {
    for k in 0..theta.mixtures() {
        let pi = &theta.pi[k];
        for i in 0..pi.len() {
            let p = lambda * pi.data()[i];
            grad.mu[k].data_mut()[i] =
                grad.mu[k].data_mut()[i] - p * scores.d_mu[k].data()[i];
            grad.sigma2[k].data_mut()[i] =
                grad.sigma2[k].data_mut()[i] - p * scores.d_sigma2[k].data()[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{GaussPriorOracle, IdentityOracle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_theta(mu: f64, sigma2: f64) -> Theta<f64> {
        Theta {
            mu: vec![ImageTensor::full(1, 1, 1, mu)],
            sigma2: vec![ImageTensor::full(1, 1, 1, sigma2)],
            alpha: vec![ImageTensor::full(1, 1, 1, 1.0)],
            beta: vec![ImageTensor::full(1, 1, 1, 1.0)],
            pi: vec![ImageTensor::full(1, 1, 1, 1.0)],
            dhat: vec![ImageTensor::full(1, 1, 1, 1.0)],
        }
    }

    #[test]
    fn identity_oracle_gives_exactly_zero() {
        let theta = scalar_theta(0.4, 0.01);
        let set = OracleSet::broadcast(Box::new(IdentityOracle));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sg =
            score_grad_l2(&theta, &set, 16, Sigma2GradMode::ChainCorrected, &mut rng).unwrap();
        assert_eq!(sg.d_mu[0].at(0, 0, 0), 0.0);
        assert_eq!(sg.d_sigma2[0].at(0, 0, 0), 0.0);
    }

    #[test]
    fn gauss_oracle_mu_gradient_matches_closed_form() {
        // ∇μ E log p_σ = −(μ−m)/(s²+σ²) for the Gaussian prior.
        let (m, s2, mu, sigma2) = (0.3, 0.02, 0.55, 0.008);
        let theta = scalar_theta(mu, sigma2);
        let set: OracleSet<f64> =
            OracleSet::broadcast(Box::new(GaussPriorOracle::constant(1, 1, 1, m, s2).unwrap()));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sg =
            score_grad_l2(&theta, &set, 200_000, Sigma2GradMode::ChainCorrected, &mut rng)
                .unwrap();
        let want = -(mu - m) / (s2 + sigma2);
        let got = sg.d_mu[0].at(0, 0, 0);
        assert!(
            (got - want).abs() / want.abs() < 0.01,
            "got {got}, want {want}"
        );
    }

    #[test]
    fn sigma2_gradient_modes_differ_by_two_sigma() {
        let (m, s2, mu, sigma2) = (0.3, 0.02, 0.7, 0.005);
        let theta = scalar_theta(mu, sigma2);
        let set: OracleSet<f64> =
            OracleSet::broadcast(Box::new(GaussPriorOracle::constant(1, 1, 1, m, s2).unwrap()));
        // Same seed, so both modes see identical samples.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let chain =
            score_grad_l2(&theta, &set, 500, Sigma2GradMode::ChainCorrected, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let printed =
            score_grad_l2(&theta, &set, 500, Sigma2GradMode::AsPrinted, &mut rng).unwrap();
        let ratio = printed.d_sigma2[0].at(0, 0, 0) / chain.d_sigma2[0].at(0, 0, 0);
        let want = 2.0 * sigma2.sqrt();
        assert!((ratio - want).abs() < 1e-10, "ratio {ratio}, want {want}");
    }

    #[test]
    fn symmetric_point_has_small_mu_gradient() {
        // μ at the prior mean: gradient within 3 MC standard errors of 0.
        let (m, s2, sigma2) = (0.5, 0.01, 0.004);
        let theta = scalar_theta(m, sigma2);
        let set: OracleSet<f64> =
            OracleSet::broadcast(Box::new(GaussPriorOracle::constant(1, 1, 1, m, s2).unwrap()));
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let samples = 100_000;
        let sg =
            score_grad_l2(&theta, &set, samples, Sigma2GradMode::ChainCorrected, &mut rng)
                .unwrap();
        // Per-sample std of (m−x)/(s²+σ²) with x ~ N(m, σ²) is σ/(s²+σ²).
        let se = sigma2.sqrt() / (s2 + sigma2) / (samples as f64).sqrt();
        assert!(sg.d_mu[0].at(0, 0, 0).abs() <= 3.0 * se);
    }

    #[test]
    fn apply_weights_by_lambda_pi_and_skips_pi_gradient() {
        let theta = scalar_theta(0.4, 0.01);
        let sg = ScoreGrads {
            d_mu: vec![ImageTensor::full(1, 1, 1, 2.0)],
            d_sigma2: vec![ImageTensor::full(1, 1, 1, 3.0)],
        };
        let mut grad = ThetaGrad::zeros_like(&theta);
        apply_score_grads(&mut grad, &theta, &sg, 0.5);
        assert_eq!(grad.mu[0].at(0, 0, 0), -0.5 * 2.0);
        assert_eq!(grad.sigma2[0].at(0, 0, 0), -0.5 * 3.0);
        assert_eq!(grad.pi[0].at(0, 0, 0), 0.0);
    }
}
