//! Closed-form loss terms and their analytic gradients.
//!
//! Gradients treat every Θ entry as a free coordinate (no simplex
//! renormalization), which is what the finite-difference suites check; the
//! softmax chain lives in the parameter backends.

use crate::error::{Error, Result};
use crate::params::{Theta, ThetaGrad};
use crate::real::Real;
use crate::special::{digamma, kl_gamma, log_gamma, trigamma, GammaParams};
use crate::tensor::ImageTensor;

/// Data term: Σ_{i,k} π·(((μ−y)² + σ²)·α̂/(2β̂) − (ψ(α̂) − log β̂)/2).
pub fn compute_l1<T: Real>(
    theta: &Theta<T>,
    y: &ImageTensor<T>,
    mut grad: Option<&mut ThetaGrad<T>>,
) -> Result<T> {
    theta.mu[0].require_same_shape(y, "compute_l1")?;
    let half = T::of(0.5);
    let two = T::of(2.0);
    let mut total = T::zero();
    for k in 0..theta.mixtures() {
        let (mu, s2) = (&theta.mu[k], &theta.sigma2[k]);
        let (al, be) = (&theta.alpha[k], &theta.beta[k]);
        let pi = &theta.pi[k];
        for i in 0..y.len() {
            let d = mu.data()[i] - y.data()[i];
            let a = al.data()[i];
            let b = be.data()[i];
            let p = pi.data()[i];
            let quad = d * d + s2.data()[i];
            let point = quad * a / (two * b) - (digamma(a)? - b.ln()) / two;
            total = total + p * point;
            if let Some(g) = grad.as_deref_mut() {
                g.mu[k].data_mut()[i] = g.mu[k].data_mut()[i] + p * d * a / b;
                g.sigma2[k].data_mut()[i] = g.sigma2[k].data_mut()[i] + p * a / (two * b);
                g.alpha[k].data_mut()[i] =
                    g.alpha[k].data_mut()[i] + p * (quad / (two * b) - trigamma(a)? / two);
                g.beta[k].data_mut()[i] = g.beta[k].data_mut()[i]
                    + p * (T::one() / (two * b) - quad * a / (two * b * b));
                g.pi[k].data_mut()[i] = g.pi[k].data_mut()[i] + point;
            }
        }
        let _ = half;
    }
    if !total.is_finite() {
        return Err(Error::numeric("L1 is not finite"));
    }
    Ok(total)
}

/// Computable entropy part of L2: −½ Σ π log σ². Returns the raw value;
/// gradient contributions are scaled by the prior-assignment weight λ.
pub fn l2_entropy_part<T: Real>(
    theta: &Theta<T>,
    lambda: T,
    mut grad: Option<&mut ThetaGrad<T>>,
) -> Result<T> {
    let half = T::of(0.5);
    let mut total = T::zero();
    for k in 0..theta.mixtures() {
        let s2 = &theta.sigma2[k];
        let pi = &theta.pi[k];
        for i in 0..s2.len() {
            let v = s2.data()[i];
            if v <= T::zero() {
                return Err(Error::domain("sigma2 must be positive in the entropy term"));
            }
            let lv = v.ln();
            total = total - half * pi.data()[i] * lv;
            if let Some(g) = grad.as_deref_mut() {
                g.sigma2[k].data_mut()[i] =
                    g.sigma2[k].data_mut()[i] - lambda * pi.data()[i] / (v + v);
                g.pi[k].data_mut()[i] = g.pi[k].data_mut()[i] - lambda * half * lv;
            }
        }
    }
    Ok(total)
}

/// Precision-posterior penalty: Σ_{i,k} π·KL(Gamma(α̂,β̂) ‖ Gamma(α,β)).
pub fn compute_l3<T: Real>(
    theta: &Theta<T>,
    hyper: &GammaParams<T>,
    mut grad: Option<&mut ThetaGrad<T>>,
) -> Result<T> {
    let (a0, b0) = (hyper.shape, hyper.rate);
    let mut total = T::zero();
    for k in 0..theta.mixtures() {
        let (al, be) = (&theta.alpha[k], &theta.beta[k]);
        let pi = &theta.pi[k];
        for i in 0..al.len() {
            let a = al.data()[i];
            let b = be.data()[i];
            let p = pi.data()[i];
            let kl = kl_gamma(GammaParams { shape: a, rate: b }, *hyper)?;
            total = total + p * kl;
            if let Some(g) = grad.as_deref_mut() {
                g.alpha[k].data_mut()[i] =
                    g.alpha[k].data_mut()[i] + p * ((a - a0) * trigamma(a)? + (b0 - b) / b);
                g.beta[k].data_mut()[i] =
                    g.beta[k].data_mut()[i] + p * (a0 / b - a * b0 / (b * b));
                g.pi[k].data_mut()[i] = g.pi[k].data_mut()[i] + kl;
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::numeric("L3 is not finite"));
    }
    Ok(total)
}

/// Assignment-posterior penalty: Σ_{i,k} π·(log π − ψ(d̂) + ψ(Σ_k d̂)),
/// with 0·log 0 = 0.
pub fn compute_l4<T: Real>(theta: &Theta<T>, mut grad: Option<&mut ThetaGrad<T>>) -> Result<T> {
    let kk = theta.mixtures();
    let mut total = T::zero();
    for i in 0..theta.pixels() {
        let mut dsum = T::zero();
        let mut pi_sum = T::zero();
        for k in 0..kk {
            dsum = dsum + theta.dhat[k].data()[i];
            pi_sum = pi_sum + theta.pi[k].data()[i];
        }
        let psi_sum = digamma(dsum)?;
        let tri_sum = trigamma(dsum)?;
        for k in 0..kk {
            let p = theta.pi[k].data()[i];
            let d = theta.dhat[k].data()[i];
            let psi_d = digamma(d)?;
            if p > T::zero() {
                total = total + p * (p.ln() - psi_d + psi_sum);
            }
            if let Some(g) = grad.as_deref_mut() {
                if p > T::zero() {
                    g.pi[k].data_mut()[i] =
                        g.pi[k].data_mut()[i] + p.ln() + T::one() - psi_d + psi_sum;
                }
                g.dhat[k].data_mut()[i] =
                    g.dhat[k].data_mut()[i] - p * trigamma(d)? + pi_sum * tri_sum;
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::numeric("L4 is not finite"));
    }
    Ok(total)
}

/// Dirichlet hyperposterior penalty: Σ_i KL(Dir(d̂_i) ‖ Dir(d)).
pub fn compute_l5<T: Real>(
    theta: &Theta<T>,
    dir_prior: &[T],
    mut grad: Option<&mut ThetaGrad<T>>,
) -> Result<T> {
    let kk = theta.mixtures();
    if dir_prior.len() != kk {
        return Err(Error::argument("dirichlet prior length != K"));
    }
    // Site-independent part of log Z for the prior.
    let prior_sum = dir_prior.iter().copied().fold(T::zero(), |a, b| a + b);
    let mut log_z_prior = log_gamma(prior_sum)?;
    for &d in dir_prior {
        log_z_prior = log_z_prior - log_gamma(d)?;
    }
    let mut total = T::zero();
    for i in 0..theta.pixels() {
        let mut dsum = T::zero();
        for k in 0..kk {
            dsum = dsum + theta.dhat[k].data()[i];
        }
        let psi_sum = digamma(dsum)?;
        let tri_sum = trigamma(dsum)?;
        let mut site = log_gamma(dsum)? - log_z_prior;
        let mut dev_sum = T::zero();
        for k in 0..kk {
            let d = theta.dhat[k].data()[i];
            let dev = d - dir_prior[k];
            dev_sum = dev_sum + dev;
            site = site - log_gamma(d)? + dev * (digamma(d)? - psi_sum);
        }
        total = total + site;
        if let Some(g) = grad.as_deref_mut() {
            for k in 0..kk {
                let d = theta.dhat[k].data()[i];
                g.dhat[k].data_mut()[i] = g.dhat[k].data_mut()[i]
                    + (d - dir_prior[k]) * trigamma(d)?
                    - dev_sum * tri_sum;
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::numeric("L5 is not finite"));
    }
    Ok(total)
}

/// Pixel-wise fusion of the component posteriors:
/// μ̄ = Σ_k π_k ⊙ μ_k and σ̄² = Σ_k π_k² ⊙ σ²_k.
pub fn fuse<T: Real>(theta: &Theta<T>) -> (ImageTensor<T>, ImageTensor<T>) {
    let (c, h, w) = theta.map_shape();
    let mut mu_bar = ImageTensor::zeros(c, h, w);
    let mut var_bar = ImageTensor::zeros(c, h, w);
    for k in 0..theta.mixtures() {
        for i in 0..mu_bar.len() {
            let p = theta.pi[k].data()[i];
            mu_bar.data_mut()[i] = mu_bar.data_mut()[i] + p * theta.mu[k].data()[i];
            var_bar.data_mut()[i] = var_bar.data_mut()[i] + p * p * theta.sigma2[k].data()[i];
        }
    }
    (mu_bar, var_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParamBackend, DirectBackend};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    pub(crate) fn random_theta(
        k: usize,
        c: usize,
        h: usize,
        w: usize,
        rng: &mut ChaCha8Rng,
    ) -> Theta<f64> {
        let map = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            ImageTensor::from_fn(c, h, w, |_, _, _| rng.gen_range(lo..hi))
        };
        let mut pi: Vec<ImageTensor<f64>> =
            (0..k).map(|_| ImageTensor::zeros(c, h, w)).collect();
        for i in 0..c * h * w {
            // Keep weights away from 0 so free-coordinate FD stays accurate.
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            for (kk, r) in raw.iter().enumerate() {
                pi[kk].data_mut()[i] = r / sum;
            }
        }
        Theta {
            mu: (0..k).map(|_| map(rng, -0.5, 1.5)).collect(),
            sigma2: (0..k).map(|_| map(rng, 0.3, 2.0)).collect(),
            alpha: (0..k).map(|_| map(rng, 0.5, 3.0)).collect(),
            beta: (0..k).map(|_| map(rng, 0.5, 3.0)).collect(),
            pi,
            dhat: (0..k).map(|_| map(rng, 0.5, 3.0)).collect(),
        }
    }

    #[test]
    fn l1_single_component_hand_value() {
        // K=1, μ=y, σ²=0, α̂=β̂=1: n·γ/2 with π=1.
        let y = ImageTensor::<f64>::full(1, 3, 3, 0.4);
        let theta = Theta {
            mu: vec![y.clone()],
            sigma2: vec![ImageTensor::zeros(1, 3, 3)],
            alpha: vec![ImageTensor::full(1, 3, 3, 1.0)],
            beta: vec![ImageTensor::full(1, 3, 3, 1.0)],
            pi: vec![ImageTensor::full(1, 3, 3, 1.0)],
            dhat: vec![ImageTensor::full(1, 3, 3, 1.0)],
        };
        let v = compute_l1(&theta, &y, None).unwrap();
        assert_abs_diff_eq!(v, 9.0 * EULER_GAMMA / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn l1_zero_weight_sites_contribute_nothing() {
        let y = ImageTensor::<f64>::full(1, 2, 2, 0.4);
        let mut theta = random_theta(2, 1, 2, 2, &mut ChaCha8Rng::seed_from_u64(5));
        for v in theta.pi[0].data_mut() {
            *v = 0.0;
        }
        for v in theta.pi[1].data_mut() {
            *v = 1.0;
        }
        let mut grad = ThetaGrad::zeros_like(&theta);
        compute_l1(&theta, &y, Some(&mut grad)).unwrap();
        assert!(grad.mu[0].data().iter().all(|&v| v == 0.0));
        assert!(grad.sigma2[0].data().iter().all(|&v| v == 0.0));
        assert!(grad.alpha[0].data().iter().all(|&v| v == 0.0));
        assert!(grad.beta[0].data().iter().all(|&v| v == 0.0));
        // The pi gradient is the pointwise value, nonzero in general.
        assert!(grad.pi[0].data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn entropy_part_values() {
        let mut theta = random_theta(2, 1, 2, 2, &mut ChaCha8Rng::seed_from_u64(7));
        for k in 0..2 {
            for v in theta.sigma2[k].data_mut() {
                *v = 1.0;
            }
        }
        assert_abs_diff_eq!(l2_entropy_part(&theta, 1.0, None).unwrap(), 0.0, epsilon = 1e-12);
        for k in 0..2 {
            for v in theta.sigma2[k].data_mut() {
                *v = std::f64::consts::E;
            }
        }
        // −½ Σ_{i,k} π = −N/2 for simplex π.
        assert_abs_diff_eq!(
            l2_entropy_part(&theta, 1.0, None).unwrap(),
            -(4.0) / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn l3_hand_value_and_zero_at_prior() {
        let mut theta = random_theta(1, 1, 1, 1, &mut ChaCha8Rng::seed_from_u64(9));
        theta.pi[0].data_mut()[0] = 1.0;
        theta.alpha[0].data_mut()[0] = 2.0;
        theta.beta[0].data_mut()[0] = 1.0;
        let hyper = GammaParams { shape: 1.0, rate: 1.0 };
        let v = compute_l3(&theta, &hyper, None).unwrap();
        assert_abs_diff_eq!(v, 1.0 - EULER_GAMMA, epsilon = 1e-10);
        theta.alpha[0].data_mut()[0] = 1.0;
        assert_abs_diff_eq!(compute_l3(&theta, &hyper, None).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn l4_uniform_hand_value_and_dhat_monotonicity() {
        let n = 6usize;
        let theta = Theta {
            mu: vec![ImageTensor::<f64>::zeros(1, 2, 3); 2],
            sigma2: vec![ImageTensor::full(1, 2, 3, 1.0); 2],
            alpha: vec![ImageTensor::full(1, 2, 3, 1.0); 2],
            beta: vec![ImageTensor::full(1, 2, 3, 1.0); 2],
            pi: vec![ImageTensor::full(1, 2, 3, 0.5); 2],
            dhat: vec![ImageTensor::full(1, 2, 3, 1.0); 2],
        };
        let v = compute_l4(&theta, None).unwrap();
        assert_abs_diff_eq!(v, n as f64 * (0.5f64.ln() + 1.0), epsilon = 1e-10);

        // One-hot π on the argmax of d̂: loss decreases as that d̂ grows.
        let mut prev = f64::INFINITY;
        for dbig in [2.0, 4.0, 8.0, 16.0] {
            let mut t = theta.clone();
            for i in 0..n {
                t.pi[0].data_mut()[i] = 1.0;
                t.pi[1].data_mut()[i] = 0.0;
                t.dhat[0].data_mut()[i] = dbig;
            }
            let v = compute_l4(&t, None).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn l4_agrees_with_divergence_helper_on_valid_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let theta = random_theta(3, 1, 2, 2, &mut rng);
        let got = compute_l4(&theta, None).unwrap();
        let mut want = 0.0;
        for i in 0..4 {
            let pi: Vec<f64> = (0..3).map(|k| theta.pi[k].data()[i]).collect();
            let dh: Vec<f64> = (0..3).map(|k| theta.dhat[k].data()[i]).collect();
            want += crate::special::expected_cat_dirichlet_kl(
                &pi,
                &crate::special::DirichletParams::new(dh).unwrap(),
            )
            .unwrap();
        }
        assert_abs_diff_eq!(got, want, epsilon = 1e-9);
    }

    #[test]
    fn l5_hand_value_and_zero_at_prior() {
        let mut theta = random_theta(2, 1, 1, 1, &mut ChaCha8Rng::seed_from_u64(11));
        theta.dhat[0].data_mut()[0] = 2.0;
        theta.dhat[1].data_mut()[0] = 1.0;
        let v = compute_l5(&theta, &[1.0, 1.0], None).unwrap();
        assert_abs_diff_eq!(v, 2.0f64.ln() - 0.5, epsilon = 1e-10);
        theta.dhat[0].data_mut()[0] = 1.0;
        assert_abs_diff_eq!(compute_l5(&theta, &[1.0, 1.0], None).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fuse_reductions_and_hand_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // K=1: identity.
        let theta = random_theta(1, 1, 2, 2, &mut rng);
        let (mu, var) = fuse(&theta);
        assert_eq!(mu.data(), theta.mu[0].data());
        assert_eq!(var.data(), theta.sigma2[0].data());
        // Hand value.
        let theta = Theta {
            mu: vec![ImageTensor::full(1, 1, 1, 0.2), ImageTensor::full(1, 1, 1, 0.6)],
            sigma2: vec![ImageTensor::full(1, 1, 1, 0.04); 2],
            alpha: vec![ImageTensor::full(1, 1, 1, 1.0); 2],
            beta: vec![ImageTensor::full(1, 1, 1, 1.0); 2],
            pi: vec![ImageTensor::full(1, 1, 1, 0.5); 2],
            dhat: vec![ImageTensor::full(1, 1, 1, 1.0); 2],
        };
        let (mu, var) = fuse(&theta);
        assert_abs_diff_eq!(mu.at(0, 0, 0), 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(var.at(0, 0, 0), 0.02, epsilon = 1e-12);
        // One-hot π selects a component.
        let mut theta = random_theta(3, 1, 2, 2, &mut ChaCha8Rng::seed_from_u64(23));
        for i in 0..4 {
            theta.pi[0].data_mut()[i] = 0.0;
            theta.pi[1].data_mut()[i] = 1.0;
            theta.pi[2].data_mut()[i] = 0.0;
        }
        let (mu, _) = fuse(&theta);
        assert_eq!(mu.data(), theta.mu[1].data());
    }

    #[test]
    fn fuse_respects_convex_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let theta = random_theta(3, 1, 3, 3, &mut rng);
            let (mu, var) = fuse(&theta);
            for i in 0..9 {
                let lo =
                    (0..3).map(|k| theta.mu[k].data()[i]).fold(f64::INFINITY, f64::min);
                let hi =
                    (0..3).map(|k| theta.mu[k].data()[i]).fold(f64::NEG_INFINITY, f64::max);
                assert!(mu.data()[i] >= lo - 1e-12 && mu.data()[i] <= hi + 1e-12);
                assert!(var.data()[i] >= 0.0);
            }
        }
    }

    // Central finite differences over every Θ entry for all loss terms.
    #[test]
    fn all_loss_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let y = ImageTensor::<f64>::from_fn(1, 4, 4, |_, _, _| rng.gen_range(0.0..1.0));
        let theta = random_theta(2, 1, 4, 4, &mut rng);
        let hyper = GammaParams { shape: 1.0, rate: 0.5 };
        let dprior = vec![1.0, 1.5];
        let lambda = 1.0;

        let eval = |t: &Theta<f64>| -> f64 {
            compute_l1(t, &y, None).unwrap()
                + lambda * l2_entropy_part(t, 1.0, None).unwrap()
                + compute_l3(t, &hyper, None).unwrap()
                + compute_l4(t, None).unwrap()
                + compute_l5(t, &dprior, None).unwrap()
        };
        let mut grad = ThetaGrad::zeros_like(&theta);
        compute_l1(&theta, &y, Some(&mut grad)).unwrap();
        l2_entropy_part(&theta, lambda, Some(&mut grad)).unwrap();
        compute_l3(&theta, &hyper, Some(&mut grad)).unwrap();
        compute_l4(&theta, Some(&mut grad)).unwrap();
        compute_l5(&theta, &dprior, Some(&mut grad)).unwrap();

        let mut t = theta.clone();
        let fields: [(&str, fn(&mut Theta<f64>) -> &mut Vec<ImageTensor<f64>>, fn(&ThetaGrad<f64>) -> &Vec<ImageTensor<f64>>); 6] = [
            ("mu", |t| &mut t.mu, |g| &g.mu),
            ("sigma2", |t| &mut t.sigma2, |g| &g.sigma2),
            ("alpha", |t| &mut t.alpha, |g| &g.alpha),
            ("beta", |t| &mut t.beta, |g| &g.beta),
            ("pi", |t| &mut t.pi, |g| &g.pi),
            ("dhat", |t| &mut t.dhat, |g| &g.dhat),
        ];
        for (name, get_mut, get_grad) in fields {
            for k in 0..2 {
                for i in 0..16 {
                    let orig = get_mut(&mut t)[k].data()[i];
                    let h = 1e-5 * (1.0 + orig.abs());
                    get_mut(&mut t)[k].data_mut()[i] = orig + h;
                    let fp = eval(&t);
                    get_mut(&mut t)[k].data_mut()[i] = orig - h;
                    let fm = eval(&t);
                    get_mut(&mut t)[k].data_mut()[i] = orig;
                    let fd = (fp - fm) / (2.0 * h);
                    let an = get_grad(&grad)[k].data()[i];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                    assert!(rel <= 1e-5, "{name}[{k}][{i}]: fd {fd} vs analytic {an} (rel {rel})");
                }
            }
        }
    }

    #[test]
    fn full_chain_direct_backend_fd() {
        // Loss gradient chained through the direct backend's links matches
        // finite differences over the raw parameters.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let y = ImageTensor::<f64>::from_fn(1, 3, 3, |_, _, _| rng.gen_range(0.2..0.8));
        let mut backend = DirectBackend::new(2, &y).unwrap();
        {
            let (p, _) = backend.params_and_grads();
            for v in p.iter_mut() {
                *v += 0.3 * rng.gen_range(-1.0..1.0f64);
            }
        }
        let hyper = GammaParams { shape: 1.0, rate: 0.5 };
        let dprior = vec![1.0, 1.0];
        let loss_of = |b: &mut DirectBackend<f64>| -> f64 {
            let t = b.forward(&y).unwrap();
            compute_l1(&t, &y, None).unwrap()
                + l2_entropy_part(&t, 1.0, None).unwrap()
                + compute_l3(&t, &hyper, None).unwrap()
                + compute_l4(&t, None).unwrap()
                + compute_l5(&t, &dprior, None).unwrap()
        };
        let theta = backend.forward(&y).unwrap();
        let mut grad = ThetaGrad::zeros_like(&theta);
        compute_l1(&theta, &y, Some(&mut grad)).unwrap();
        l2_entropy_part(&theta, 1.0, Some(&mut grad)).unwrap();
        compute_l3(&theta, &hyper, Some(&mut grad)).unwrap();
        compute_l4(&theta, Some(&mut grad)).unwrap();
        compute_l5(&theta, &dprior, Some(&mut grad)).unwrap();
        backend.zero_grads();
        backend.backward(&grad).unwrap();
        let analytic: Vec<f64> = backend.params_and_grads().1.to_vec();
        let n = backend.param_len();
        for i in (0..n).step_by(7) {
            let (p, _) = backend.params_and_grads();
            let orig = p[i];
            let h = 1e-5 * (1.0 + orig.abs());
            backend.params_and_grads().0[i] = orig + h;
            let fp = loss_of(&mut backend);
            backend.params_and_grads().0[i] = orig - h;
            let fm = loss_of(&mut backend);
            backend.params_and_grads().0[i] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let an = analytic[i];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
            assert!(rel <= 1e-4, "param {i}: fd {fd} vs {an} (rel {rel})");
        }
    }
}
