//! The optimization loop: estimate the noise level once, freeze λ, then
//! iterate forward → losses and gradients → score injection → backward →
//! Adam. Fully deterministic for a fixed seed (single-threaded RNG stream).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::save_weights;
use crate::noise_est::{estimate_delta, lambda_weight};
use crate::oracle::OracleSet;
use crate::params::{AdamState, ParamBackend, ThetaGrad};
use crate::real::Real;
use crate::tensor::ImageTensor;

use super::{
    apply_score_grads, compute_l1, compute_l3, compute_l4, compute_l5, fuse, l2_entropy_part,
    score_grad_l2, ElboBreakdown, ElboConfig, RunResult,
};

fn at_iter<T>(iter: usize, last: Option<&ElboBreakdown<T>>, err: Error) -> Error
where
    T: Real,
{
    let context = match last {
        Some(b) => format!(" (iteration {iter}, last finite total {})", b.total),
        None => format!(" (iteration {iter})"),
    };
    match err {
        Error::Numeric(m) => Error::Numeric(format!("{m}{context}")),
        Error::Domain(m) => Error::Domain(format!("{m}{context}")),
        Error::Oracle(m) => Error::Oracle(format!("{m}{context}")),
        other => other,
    }
}

/// Run the full variational optimization on one noisy image.
pub fn run<T: Real, B: ParamBackend<T>>(
    y: &ImageTensor<T>,
    config: &ElboConfig<T>,
    oracles: &OracleSet<T>,
    backend: &mut B,
) -> Result<RunResult<T>> {
    config.validate()?;
    oracles.validate_for(config.mixtures)?;
    if !y.all_finite() {
        return Err(Error::numeric("input image contains non-finite values"));
    }
    // Noise level is estimated once up front; λ stays fixed for the run.
    let estimate = estimate_delta(y)?;
    let lambda = lambda_weight(
        estimate.delta,
        config.thresh_low,
        config.thresh_high,
        config.gamma,
    );

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(config.lr, backend.param_len());
    let mut history: Vec<ElboBreakdown<T>> = Vec::with_capacity(config.iterations);

    for iter in 0..config.iterations {
        let theta = backend.forward(y)?;
        theta.validate().map_err(|e| at_iter(iter, history.last(), e))?;

        let mut grad = ThetaGrad::zeros_like(&theta);
        let l1 = compute_l1(&theta, y, Some(&mut grad))
            .map_err(|e| at_iter(iter, history.last(), e))?;
        let l2_entropy = l2_entropy_part(&theta, lambda, Some(&mut grad))
            .map_err(|e| at_iter(iter, history.last(), e))?;
        let l3 = compute_l3(&theta, &config.hyper, Some(&mut grad))
            .map_err(|e| at_iter(iter, history.last(), e))?;
        let l4 = compute_l4(&theta, Some(&mut grad))
            .map_err(|e| at_iter(iter, history.last(), e))?;
        let l5 = compute_l5(&theta, &config.dir_prior, Some(&mut grad))
            .map_err(|e| at_iter(iter, history.last(), e))?;
        let scores =
            score_grad_l2(&theta, oracles, config.mc_samples, config.sigma2_grad, &mut rng)
                .map_err(|e| at_iter(iter, history.last(), e))?;
        apply_score_grads(&mut grad, &theta, &scores, lambda);

        let breakdown = ElboBreakdown::new(iter, l1, l2_entropy, l3, l4, l5, lambda);
        if !breakdown.total.is_finite() {
            return Err(at_iter(
                iter,
                history.last(),
                Error::numeric("loss became non-finite"),
            ));
        }

        backend.zero_grads();
        backend.backward(&grad).map_err(|e| at_iter(iter, history.last(), e))?;
        {
            let (params, grads) = backend.params_and_grads();
            adam.step(params, grads)?;
        }
        history.push(breakdown);

        if config.checkpoint_every > 0 && (iter + 1) % config.checkpoint_every == 0 {
            if let Some(dir) = &config.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                let entries = backend.weight_entries();
                save_weights(
                    dir.join(format!("iter_{:06}.bin", iter + 1)),
                    dir.join(format!("iter_{:06}.manifest", iter + 1)),
                    &entries,
                )?;
            }
        }
    }

    let theta = backend.forward(y)?;
    let (mu_bar, sigma2_bar) = fuse(&theta);
    Ok(RunResult {
        mu_bar,
        sigma2_bar,
        pi: theta.pi,
        delta: estimate.delta,
        lambda,
        history,
    })
}
