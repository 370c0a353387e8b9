//! Variational parameter set Θ and the trainable backends that produce it.
//!
//! A backend maps raw trainable fields (per-pixel values or conv-net
//! weights) through link functions onto Θ = {μ, σ², α̂, β̂, π, d̂}, each of
//! shape K×C×H×W, and backpropagates loss gradients from Θ to the raw
//! fields.

mod adam;
mod conv;
mod direct;

pub use adam::AdamState;
pub use conv::{
    avg_pool2_backward, avg_pool2_forward, concat_backward, concat_forward, conv3x3_backward,
    conv3x3_forward, leaky_relu_backward, leaky_relu_forward, upsample_nearest_backward,
    upsample_nearest_forward, ConvBackend,
};
pub use direct::DirectBackend;

use crate::error::{Error, Result};
use crate::io::WeightEntry;
use crate::real::Real;
use crate::tensor::ImageTensor;

/// Positivity floor added after softplus for σ².
pub const SIGMA2_FLOOR: f64 = 1e-6;
/// Positivity floor for α̂ and β̂.
pub const GAMMA_FLOOR: f64 = 1e-3;
/// Positivity floor for d̂.
pub const DHAT_FLOOR: f64 = 1e-3;

/// The full variational parameter set; every field holds K maps of shape
/// C×H×W.
#[derive(Debug, Clone)]
pub struct Theta<T> {
    pub mu: Vec<ImageTensor<T>>,
    pub sigma2: Vec<ImageTensor<T>>,
    pub alpha: Vec<ImageTensor<T>>,
    pub beta: Vec<ImageTensor<T>>,
    pub pi: Vec<ImageTensor<T>>,
    pub dhat: Vec<ImageTensor<T>>,
}

impl<T: Real> Theta<T> {
    pub fn mixtures(&self) -> usize {
        self.mu.len()
    }

    /// Shape (C, H, W) of each component map.
    pub fn map_shape(&self) -> (usize, usize, usize) {
        self.mu[0].shape()
    }

    pub fn pixels(&self) -> usize {
        self.mu[0].len()
    }

    /// Check the structural invariants: consistent shapes, positivity
    /// floors, per-site simplex over K, finiteness.
    pub fn validate(&self) -> Result<()> {
        let k = self.mu.len();
        if k == 0 {
            return Err(Error::argument("theta must have at least one component"));
        }
        let shape = self.mu[0].shape();
        let fields: [(&str, &Vec<ImageTensor<T>>); 6] = [
            ("mu", &self.mu),
            ("sigma2", &self.sigma2),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("pi", &self.pi),
            ("dhat", &self.dhat),
        ];
        for (name, field) in fields {
            if field.len() != k {
                return Err(Error::argument(format!("{name} has {} maps, want {k}", field.len())));
            }
            for map in field.iter() {
                if map.shape() != shape {
                    return Err(Error::argument(format!("{name} map shape mismatch")));
                }
                if !map.all_finite() {
                    return Err(Error::numeric(format!("{name} contains non-finite values")));
                }
            }
        }
        let slack = T::of(1.0 - 1e-9);
        let s2_floor = T::of(SIGMA2_FLOOR) * slack;
        let g_floor = T::of(GAMMA_FLOOR) * slack;
        let d_floor = T::of(DHAT_FLOOR) * slack;
        for kk in 0..k {
            if self.sigma2[kk].data().iter().any(|&v| v < s2_floor) {
                return Err(Error::domain("sigma2 below floor"));
            }
            if self.alpha[kk].data().iter().any(|&v| v < g_floor)
                || self.beta[kk].data().iter().any(|&v| v < g_floor)
            {
                return Err(Error::domain("alpha/beta below floor"));
            }
            if self.dhat[kk].data().iter().any(|&v| v < d_floor) {
                return Err(Error::domain("dhat below floor"));
            }
        }
        let tol = T::of(1e-6);
        for i in 0..self.pixels() {
            let mut sum = T::zero();
            for kk in 0..k {
                let p = self.pi[kk].data()[i];
                if p < T::zero() {
                    return Err(Error::domain("negative mixing weight"));
                }
                sum = sum + p;
            }
            if (sum - T::one()).abs() > tol {
                return Err(Error::domain("pi does not sum to 1"));
            }
        }
        Ok(())
    }
}

/// Loss-gradient accumulator with the same layout as [`Theta`].
#[derive(Debug, Clone)]
pub struct ThetaGrad<T> {
    pub mu: Vec<ImageTensor<T>>,
    pub sigma2: Vec<ImageTensor<T>>,
    pub alpha: Vec<ImageTensor<T>>,
    pub beta: Vec<ImageTensor<T>>,
    pub pi: Vec<ImageTensor<T>>,
    pub dhat: Vec<ImageTensor<T>>,
}

impl<T: Real> ThetaGrad<T> {
    pub fn zeros(mixtures: usize, channels: usize, height: usize, width: usize) -> Self {
        let make = || {
            (0..mixtures)
                .map(|_| ImageTensor::zeros(channels, height, width))
                .collect::<Vec<_>>()
        };
        Self { mu: make(), sigma2: make(), alpha: make(), beta: make(), pi: make(), dhat: make() }
    }

    pub fn zeros_like(theta: &Theta<T>) -> Self {
        let (c, h, w) = theta.map_shape();
        Self::zeros(theta.mixtures(), c, h, w)
    }

    pub fn all_finite(&self) -> bool {
        self.mu.iter().all(ImageTensor::all_finite)
            && self.sigma2.iter().all(ImageTensor::all_finite)
            && self.alpha.iter().all(ImageTensor::all_finite)
            && self.beta.iter().all(ImageTensor::all_finite)
            && self.pi.iter().all(ImageTensor::all_finite)
            && self.dhat.iter().all(ImageTensor::all_finite)
    }
}

/// Numerically stable softplus.
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// d softplus / dx = logistic(x).
pub fn softplus_deriv<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax of `logits` written into `out` (max-subtracted).
pub fn softmax_site<T: Real>(logits: &[T], out: &mut [T]) {
    let mut best = T::neg_infinity();
    for &l in logits {
        if l > best {
            best = l;
        }
    }
    let mut sum = T::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - best).exp();
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

/// Backward through softmax: given probabilities and upstream ∂L/∂π,
/// produce ∂L/∂logits = π ⊙ (g − ⟨g, π⟩).
pub fn softmax_backward_site<T: Real>(pi: &[T], gpi: &[T], glogits: &mut [T]) {
    let mut dot = T::zero();
    for (p, g) in pi.iter().zip(gpi) {
        dot = dot + *p * *g;
    }
    for i in 0..pi.len() {
        glogits[i] = pi[i] * (gpi[i] - dot);
    }
}

/// Trainable producer of Θ from a noisy image.
pub trait ParamBackend<T: Real> {
    /// Evaluate Θ. Deterministic given the current weights.
    fn forward(&mut self, y: &ImageTensor<T>) -> Result<Theta<T>>;

    /// Chain loss gradients w.r.t. Θ back onto the raw fields/weights,
    /// accumulating into the internal gradient buffer. `forward` must have
    /// been called first with the inputs the gradients belong to.
    fn backward(&mut self, grad: &ThetaGrad<T>) -> Result<()>;

    fn zero_grads(&mut self);

    fn param_len(&self) -> usize;

    /// Mutable parameter slice plus the accumulated gradient slice.
    fn params_and_grads(&mut self) -> (&mut [T], &[T]);

    /// Named tensors for checkpointing.
    fn weight_entries(&self) -> Vec<WeightEntry<T>>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_basics() {
        assert!((softplus(0.0f64) - 2.0f64.ln()).abs() < 1e-12);
        assert!((softplus(30.0f64) - 30.0).abs() < 1e-9);
        assert!(softplus(-30.0f64) > 0.0);
        // Derivative is the logistic function.
        for &x in &[-5.0f64, -0.3, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((softplus_deriv(x) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_site_normalizes() {
        let logits = [1.0f64, -2.0, 0.3];
        let mut pi = [0.0; 3];
        softmax_site(&logits, &mut pi);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pi.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn softmax_backward_uniform_one_hot() {
        // At uniform π with upstream e_k, the logit gradient is
        // (1/K)(1 − 1/K) at k and −1/K² elsewhere.
        let k = 4usize;
        let pi = vec![0.25f64; k];
        let mut g = vec![0.0f64; k];
        g[1] = 1.0;
        let mut gl = vec![0.0f64; k];
        softmax_backward_site(&pi, &g, &mut gl);
        for (i, &v) in gl.iter().enumerate() {
            let want = if i == 1 { 0.25 * (1.0 - 0.25) } else { -0.25 * 0.25 };
            assert!((v - want).abs() < 1e-12, "i={i}: {v} vs {want}");
        }
    }
}
