//! Backend holding one optimizable raw value per Θ entry.

use crate::error::{Error, Result};
use crate::io::WeightEntry;
use crate::real::Real;
use crate::tensor::ImageTensor;

use super::{
    softmax_backward_site, softmax_site, softplus, softplus_deriv, ParamBackend, Theta,
    ThetaGrad, DHAT_FLOOR, GAMMA_FLOOR, SIGMA2_FLOOR,
};

const FIELDS: [&str; 6] = ["raw_mu", "raw_sigma2", "raw_alpha", "raw_beta", "pi_logits", "raw_dhat"];

/// Directly optimizable Θ: six raw fields of shape K×C×H×W behind the link
/// functions (identity for μ, softplus + floor for the positive fields,
/// softmax over K for π).
pub struct DirectBackend<T> {
    mixtures: usize,
    channels: usize,
    height: usize,
    width: usize,
    params: Vec<T>,
    grads: Vec<T>,
}

impl<T: Real> DirectBackend<T> {
    /// Raw μ starts at the observation (replicated over components); every
    /// other raw field starts at zero.
    pub fn new(mixtures: usize, y: &ImageTensor<T>) -> Result<Self> {
        if mixtures == 0 {
            return Err(Error::argument("need at least one mixture component"));
        }
        let (channels, height, width) = y.shape();
        let block = mixtures * channels * height * width;
        let mut params = vec![T::zero(); 6 * block];
        for k in 0..mixtures {
            let base = k * channels * height * width;
            params[base..base + y.len()].copy_from_slice(y.data());
        }
        Ok(Self { mixtures, channels, height, width, params, grads: vec![T::zero(); 6 * block] })
    }

    fn block(&self) -> usize {
        self.mixtures * self.channels * self.height * self.width
    }

    fn per_k(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn field(&self, f: usize) -> &[T] {
        let b = self.block();
        &self.params[f * b..(f + 1) * b]
    }
}

impl<T: Real> ParamBackend<T> for DirectBackend<T> {
    fn forward(&mut self, y: &ImageTensor<T>) -> Result<Theta<T>> {
        if y.shape() != (self.channels, self.height, self.width) {
            return Err(Error::argument(format!(
                "backend configured for {:?}, got {:?}",
                (self.channels, self.height, self.width),
                y.shape()
            )));
        }
        let per_k = self.per_k();
        let k = self.mixtures;
        let take = |f: usize, kk: usize, floor: f64, linked: bool| -> ImageTensor<T> {
            let src = &self.field(f)[kk * per_k..(kk + 1) * per_k];
            let data = if linked {
                src.iter().map(|&r| softplus(r) + T::of(floor)).collect()
            } else {
                src.to_vec()
            };
            ImageTensor::new(self.channels, self.height, self.width, data)
                .expect("sizes are consistent by construction")
        };
        let mu: Vec<_> = (0..k).map(|kk| take(0, kk, 0.0, false)).collect();
        let sigma2: Vec<_> = (0..k).map(|kk| take(1, kk, SIGMA2_FLOOR, true)).collect();
        let alpha: Vec<_> = (0..k).map(|kk| take(2, kk, GAMMA_FLOOR, true)).collect();
        let beta: Vec<_> = (0..k).map(|kk| take(3, kk, GAMMA_FLOOR, true)).collect();
        let dhat: Vec<_> = (0..k).map(|kk| take(5, kk, DHAT_FLOOR, true)).collect();

        let logits = self.field(4);
        let mut pi: Vec<ImageTensor<T>> =
            (0..k).map(|_| ImageTensor::zeros(self.channels, self.height, self.width)).collect();
        let mut site_logits = vec![T::zero(); k];
        let mut site_pi = vec![T::zero(); k];
        for i in 0..per_k {
            for kk in 0..k {
                site_logits[kk] = logits[kk * per_k + i];
            }
            softmax_site(&site_logits, &mut site_pi);
            for kk in 0..k {
                pi[kk].data_mut()[i] = site_pi[kk];
            }
        }
        Ok(Theta { mu, sigma2, alpha, beta, pi, dhat })
    }

    fn backward(&mut self, grad: &ThetaGrad<T>) -> Result<()> {
        if grad.mu.len() != self.mixtures
            || grad.mu[0].shape() != (self.channels, self.height, self.width)
        {
            return Err(Error::argument("gradient shape does not match backend"));
        }
        if !grad.all_finite() {
            return Err(Error::numeric("non-finite upstream gradient"));
        }
        let per_k = self.per_k();
        let b = self.block();
        let k = self.mixtures;
        // Identity link for mu; softplus chain for the positive fields.
        for kk in 0..k {
            for i in 0..per_k {
                self.grads[kk * per_k + i] =
                    self.grads[kk * per_k + i] + grad.mu[kk].data()[i];
            }
        }
        for (f, g) in [(1usize, &grad.sigma2), (2, &grad.alpha), (3, &grad.beta), (5, &grad.dhat)]
        {
            for kk in 0..k {
                for i in 0..per_k {
                    let idx = f * b + kk * per_k + i;
                    let raw = self.params[idx];
                    self.grads[idx] = self.grads[idx] + g[kk].data()[i] * softplus_deriv(raw);
                }
            }
        }
        // Softmax Jacobian for pi; recompute probabilities from the logits.
        let mut site_logits = vec![T::zero(); k];
        let mut site_pi = vec![T::zero(); k];
        let mut site_g = vec![T::zero(); k];
        let mut site_gl = vec![T::zero(); k];
        for i in 0..per_k {
            for kk in 0..k {
                site_logits[kk] = self.params[4 * b + kk * per_k + i];
                site_g[kk] = grad.pi[kk].data()[i];
            }
            softmax_site(&site_logits, &mut site_pi);
            softmax_backward_site(&site_pi, &site_g, &mut site_gl);
            for kk in 0..k {
                let idx = 4 * b + kk * per_k + i;
                self.grads[idx] = self.grads[idx] + site_gl[kk];
            }
        }
        Ok(())
    }

    fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = T::zero();
        }
    }

    fn param_len(&self) -> usize {
        self.params.len()
    }

    fn params_and_grads(&mut self) -> (&mut [T], &[T]) {
        (&mut self.params, &self.grads)
    }

    fn weight_entries(&self) -> Vec<WeightEntry<T>> {
        let b = self.block();
        FIELDS
            .iter()
            .enumerate()
            .map(|(f, name)| WeightEntry {
                name: (*name).to_string(),
                dims: vec![
                    self.mixtures as u32,
                    self.channels as u32,
                    self.height as u32,
                    self.width as u32,
                ],
                data: self.params[f * b..(f + 1) * b].to_vec(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_y() -> ImageTensor<f64> {
        ImageTensor::from_fn(1, 2, 2, |_, y, x| 0.1 + 0.2 * (y * 2 + x) as f64)
    }

    #[test]
    fn zero_raw_fields_give_uniform_pi_and_softplus_levels() {
        let y = small_y();
        let mut b = DirectBackend::new(3, &y).unwrap();
        let theta = b.forward(&y).unwrap();
        theta.validate().unwrap();
        let ln2 = 2.0f64.ln();
        for k in 0..3 {
            // mu initialized at the observation.
            assert_eq!(theta.mu[k], y);
            for i in 0..4 {
                assert!((theta.pi[k].data()[i] - 1.0 / 3.0).abs() < 1e-12);
                assert!((theta.sigma2[k].data()[i] - (ln2 + SIGMA2_FLOOR)).abs() < 1e-12);
                assert!((theta.alpha[k].data()[i] - (ln2 + GAMMA_FLOOR)).abs() < 1e-12);
                assert!((theta.dhat[k].data()[i] - (ln2 + DHAT_FLOOR)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_link_passes_mu_gradient_through() {
        let y = small_y();
        let mut b = DirectBackend::new(2, &y).unwrap();
        let theta = b.forward(&y).unwrap();
        let mut g = ThetaGrad::zeros_like(&theta);
        for k in 0..2 {
            for v in g.mu[k].data_mut() {
                *v = 1.0;
            }
        }
        b.backward(&g).unwrap();
        let (_, grads) = b.params_and_grads();
        // First block is raw mu: all ones, everything else zero.
        assert!(grads[..8].iter().all(|&v| v == 1.0));
        assert!(grads[8..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let y = small_y();
        let mut b = DirectBackend::new(2, &y).unwrap();
        let t1 = b.forward(&y).unwrap();
        let t2 = b.forward(&y).unwrap();
        for k in 0..2 {
            assert_eq!(t1.pi[k].data(), t2.pi[k].data());
            assert_eq!(t1.sigma2[k].data(), t2.sigma2[k].data());
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let y = small_y();
        let mut b = DirectBackend::new(2, &y).unwrap();
        let wrong = ImageTensor::<f64>::zeros(1, 3, 3);
        assert!(b.forward(&wrong).is_err());
    }

    #[test]
    fn nan_gradient_rejected() {
        let y = small_y();
        let mut b = DirectBackend::new(1, &y).unwrap();
        let theta = b.forward(&y).unwrap();
        let mut g = ThetaGrad::zeros_like(&theta);
        g.mu[0].data_mut()[0] = f64::NAN;
        assert!(b.backward(&g).is_err());
    }
}
