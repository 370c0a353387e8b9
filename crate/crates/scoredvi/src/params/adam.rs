//! Adam optimizer with bias correction, operating on flat parameter slices.

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(lr: T, param_len: usize) -> Self {
        Self {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            step: 0,
            m: vec![T::zero(); param_len],
            v: vec![T::zero(); param_len],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::argument(format!(
                "adam state sized for {} params, got {}/{}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let one = T::one();
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = AdamState::new(1e-3f64, 3);
        let mut p = vec![1.0, -2.0, 0.5];
        let orig = p.clone();
        for _ in 0..5 {
            adam.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, orig);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let lr = 1e-3f64;
        let mut adam = AdamState::new(lr, 2);
        let mut p = vec![0.0f64, 0.0];
        adam.step(&mut p, &[0.7, -1234.0]).unwrap();
        // Bias correction makes m̂/√v̂ = sign(g) at step 1, up to ε.
        assert!((p[0] + lr).abs() < 1e-6 * lr);
        assert!((p[1] - lr).abs() < 1e-6 * lr);
    }

    #[test]
    fn constant_gradient_moves_about_lr_per_step() {
        let lr = 1e-3f64;
        let mut adam = AdamState::new(lr, 1);
        let mut p = vec![10.0f64];
        let mut prev = p[0];
        for step in 0..100 {
            adam.step(&mut p, &[3.0]).unwrap();
            let moved = prev - p[0];
            assert!(moved > 0.0, "monotone decrease at step {step}");
            assert!((moved - lr).abs() < 0.05 * lr, "step size {moved}");
            prev = p[0];
        }
        assert!((10.0 - p[0] - 100.0 * lr).abs() < 0.05 * 100.0 * lr);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut adam = AdamState::new(1e-3f64, 2);
        let mut p = vec![0.0f64; 3];
        assert!(adam.step(&mut p, &[0.0; 3]).is_err());
    }
}
