//! Built-in verification suites: dense score-identity trials, finite
//! difference checks of every analytic gradient, and Monte Carlo validation
//! of the closed-form divergences. The CLI `selftest` command runs these at
//! runtime; the acceptance tests run them at full strength.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma as GammaDist};

use crate::elbo::{
    compute_l1, compute_l3, compute_l4, compute_l5, l2_entropy_part, score_grad_l2,
    Sigma2GradMode,
};
use crate::error::{Error, Result};
use crate::oracle::{GaussPriorOracle, OracleSet};
use crate::params::{
    avg_pool2_backward, avg_pool2_forward, conv3x3_backward, conv3x3_forward,
    leaky_relu_backward, leaky_relu_forward, softmax_backward_site, softmax_site, softplus,
    softplus_deriv, upsample_nearest_backward, upsample_nearest_forward, ConvBackend,
    DirectBackend, ParamBackend, Theta, ThetaGrad,
};
use crate::special::{
    digamma, expected_cat_dirichlet_kl, kl_dirichlet, kl_gamma, l1_pointwise, log_gamma,
    DirichletParams, GammaParams,
};
use crate::synth::verify_theorem1_dense;
use crate::tensor::ImageTensor;

/// Outcome of a single check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(suite: &'static str, name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self { suite, name: name.into(), passed, detail }
    }
}

pub const SUITE_NAMES: [&str; 3] = ["theorem1", "fdgrad", "klmc"];

fn random_spd(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() * (scale / dim as f64) + DMatrix::identity(dim, dim) * (0.2 * scale)
}

/// Dense score-identity trials at dims {4, 16, 64} plus the diagonal
/// reduction.
pub fn suite_theorem1(trials: usize, seed: u64) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let dims = [4usize, 16, 64];
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for t in 0..trials {
        let dim = dims[t % dims.len()];
        let m = DVector::from_fn(dim, |_, _| rng.gen_range(0.0..1.0));
        let p = random_spd(&mut rng, dim, 0.5);
        let s = random_spd(&mut rng, dim, 0.05);
        let xt = DVector::from_fn(dim, |_, _| rng.gen_range(-0.5..1.5));
        match verify_theorem1_dense(&m, &p, &s, &xt) {
            Ok(d) => {
                worst = worst.max(d);
                if d > 1e-8 {
                    failures += 1;
                }
            }
            Err(e) => {
                failures += 1;
                worst = f64::INFINITY;
                out.push(CheckReport::new(
                    "theorem1",
                    format!("trial {t}"),
                    false,
                    format!("{e}"),
                ));
            }
        }
    }
    out.push(CheckReport::new(
        "theorem1",
        format!("dense identity, {trials} SPD trials at dims 4/16/64"),
        failures == 0,
        format!("max relative discrepancy {worst:.3e} (tolerance 1e-8)"),
    ));

    // Diagonal covariances reduce to the elementwise formula.
    let dim = 16;
    let m = DVector::from_element(dim, 0.4);
    let p = DMatrix::identity(dim, dim) * 0.02;
    let s = DMatrix::identity(dim, dim) * 0.01;
    let xt = DVector::from_fn(dim, |i, _| 0.05 * i as f64);
    let disc = verify_theorem1_dense(&m, &p, &s, &xt).unwrap_or(f64::INFINITY);
    // Both sides must also equal -(x̃-m)/(s²+σ²) elementwise.
    let mut diag_err = 0.0f64;
    for i in 0..dim {
        let want = -(xt[i] - m[i]) / (0.02 + 0.01);
        let oracle = GaussPriorOracle::constant(1, 1, 1, m[i], 0.02).unwrap();
        let got = crate::oracle::score_from_denoiser(
            &ImageTensor::full(1, 1, 1, xt[i]),
            &ImageTensor::full(1, 1, 1, 0.01),
            &oracle,
        )
        .unwrap()
        .at(0, 0, 0);
        diag_err = diag_err.max((got - want).abs() / want.abs().max(1.0));
    }
    out.push(CheckReport::new(
        "theorem1",
        "diagonal reduction",
        disc <= 1e-10 && diag_err <= 1e-10,
        format!("dense vs scalar discrepancy {disc:.3e}, formula deviation {diag_err:.3e}"),
    ));
    out
}

fn random_theta_for_fd(rng: &mut ChaCha8Rng, k: usize, c: usize, h: usize, w: usize) -> Theta<f64> {
    let map = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        ImageTensor::from_fn(c, h, w, |_, _, _| rng.gen_range(lo..hi))
    };
    let mut pi: Vec<ImageTensor<f64>> = (0..k).map(|_| ImageTensor::zeros(c, h, w)).collect();
    for i in 0..c * h * w {
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

// Worst relative error between fd and analytic, with an absolute floor.
fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8)
}

fn check_loss_fd(rng: &mut ChaCha8Rng) -> CheckReport {
    let y = ImageTensor::<f64>::from_fn(1, 4, 4, |_, _, _| rng.gen_range(0.0..1.0));
    let theta = random_theta_for_fd(rng, 2, 1, 4, 4);
    let hyper = GammaParams { shape: 1.0, rate: 0.5 };
    let dprior = vec![1.0, 1.5];
    let eval = |t: &Theta<f64>| -> f64 {
        compute_l1(t, &y, None).unwrap()
            + l2_entropy_part(t, 1.0, None).unwrap()
            + compute_l3(t, &hyper, None).unwrap()
            + compute_l4(t, None).unwrap()
            + compute_l5(t, &dprior, None).unwrap()
    };
    let mut grad = ThetaGrad::zeros_like(&theta);
    compute_l1(&theta, &y, Some(&mut grad)).unwrap();
    l2_entropy_part(&theta, 1.0, Some(&mut grad)).unwrap();
    compute_l3(&theta, &hyper, Some(&mut grad)).unwrap();
    compute_l4(&theta, Some(&mut grad)).unwrap();
    compute_l5(&theta, &dprior, Some(&mut grad)).unwrap();

    let mut t = theta.clone();
    let mut worst = 0.0f64;
    type FieldAccess = (
        fn(&mut Theta<f64>) -> &mut Vec<ImageTensor<f64>>,
        fn(&ThetaGrad<f64>) -> &Vec<ImageTensor<f64>>,
    );
    let fields: [FieldAccess; 6] = [
        (|t| &mut t.mu, |g| &g.mu),
        (|t| &mut t.sigma2, |g| &g.sigma2),
        (|t| &mut t.alpha, |g| &g.alpha),
        (|t| &mut t.beta, |g| &g.beta),
        (|t| &mut t.pi, |g| &g.pi),
        (|t| &mut t.dhat, |g| &g.dhat),
    ];
    for (get_mut, get_grad) in fields {
        for k in 0..2 {
            for i in 0..16 {
                let orig = get_mut(&mut t)[k].data()[i];
                let h = 1e-5 * (1.0 + orig.abs());
                get_mut(&mut t)[k].data_mut()[i] = orig + h;
                let fp = eval(&t);
                get_mut(&mut t)[k].data_mut()[i] = orig - h;
                let fm = eval(&t);
                get_mut(&mut t)[k].data_mut()[i] = orig;
                worst = worst.max(rel_err((fp - fm) / (2.0 * h), get_grad(&grad)[k].data()[i]));
            }
        }
    }
    CheckReport::new(
        "fdgrad",
        "loss terms L1/L2ent/L3/L4/L5 vs central FD (4x4, K=2)",
        worst <= 1e-5,
        format!("max relative error {worst:.3e} (tolerance 1e-5)"),
    )
}

fn check_link_fd(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = rng.gen_range(-4.0..4.0);
        let h = 1e-5;
        let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
        worst = worst.max(rel_err(fd, softplus_deriv(x)));
    }
    // Softmax Jacobian on random sites.
    for _ in 0..50 {
        let k = rng.gen_range(2..5usize);
        let logits: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gpi: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut pi = vec![0.0; k];
        softmax_site(&logits, &mut pi);
        let mut glogits = vec![0.0; k];
        softmax_backward_site(&pi, &gpi, &mut glogits);
        for j in 0..k {
            let h = 1e-6;
            let mut lp = logits.clone();
            lp[j] += h;
            let mut pp = vec![0.0; k];
            softmax_site(&lp, &mut pp);
            lp[j] -= 2.0 * h;
            let mut pm = vec![0.0; k];
            softmax_site(&lp, &mut pm);
            let fd: f64 =
                (0..k).map(|i| gpi[i] * (pp[i] - pm[i]) / (2.0 * h)).sum();
            worst = worst.max(rel_err(fd, glogits[j]));
        }
    }
    CheckReport::new(
        "fdgrad",
        "link functions (softplus, softmax) vs central FD",
        worst <= 1e-5,
        format!("max relative error {worst:.3e} (tolerance 1e-5)"),
    )
}

fn check_conv_layers_fd(rng: &mut ChaCha8Rng) -> CheckReport {
    let mut worst = 0.0f64;
    // conv3x3 on a 4x5 instance, all of gx/gw/gb.
    let (in_ch, out_ch, h, w) = (2usize, 3usize, 4usize, 5usize);
    let x = ImageTensor::<f64>::from_fn(in_ch, h, w, |_, _, _| rng.gen_range(-1.0..1.0));
    let mut wt: Vec<f64> = (0..out_ch * in_ch * 9).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mut bias: Vec<f64> = (0..out_ch).map(|_| rng.gen_range(-0.2..0.2)).collect();
    let sel = ImageTensor::<f64>::from_fn(out_ch, h, w, |_, _, _| rng.gen_range(-1.0..1.0));
    let loss = |x: &ImageTensor<f64>, wt: &[f64], bias: &[f64]| -> f64 {
        conv3x3_forward(x, wt, bias, out_ch)
            .data()
            .iter()
            .zip(sel.data())
            .map(|(a, b)| a * b)
            .sum()
    };
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; bias.len()];
    let gx = conv3x3_backward(&x, &wt, &sel, &mut gw, &mut gb);
    let step = 1e-4;
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + step;
        let fp = loss(&xp, &wt, &bias);
        xp.data_mut()[i] = orig - step;
        let fm = loss(&xp, &wt, &bias);
        xp.data_mut()[i] = orig;
        worst = worst.max(rel_err((fp - fm) / (2.0 * step), gx.data()[i]));
    }
    for i in 0..wt.len() {
        let orig = wt[i];
        wt[i] = orig + step;
        let fp = loss(&x, &wt, &bias);
        wt[i] = orig - step;
        let fm = loss(&x, &wt, &bias);
        wt[i] = orig;
        worst = worst.max(rel_err((fp - fm) / (2.0 * step), gw[i]));
    }
    for i in 0..bias.len() {
        let orig = bias[i];
        bias[i] = orig + step;
        let fp = loss(&x, &wt, &bias);
        bias[i] = orig - step;
        let fm = loss(&x, &wt, &bias);
        bias[i] = orig;
        worst = worst.max(rel_err((fp - fm) / (2.0 * step), gb[i]));
    }

    // Leaky rectifier, pooling, upsampling on odd sizes.
    let x = ImageTensor::<f64>::from_fn(2, 5, 7, |_, _, _| rng.gen_range(-1.0..1.0) + 0.01);
    let sel = ImageTensor::<f64>::from_fn(2, 5, 7, |_, _, _| rng.gen_range(-1.0..1.0));
    let g = leaky_relu_backward(&x, &sel, 0.1);
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        // Stay on one side of the kink.
        if orig.abs() < 2.0 * step {
            continue;
        }
        xp.data_mut()[i] = orig + step;
        let fp: f64 = leaky_relu_forward(&xp, 0.1)
            .data()
            .iter()
            .zip(sel.data())
            .map(|(a, b)| a * b)
            .sum();
        xp.data_mut()[i] = orig - step;
        let fm: f64 = leaky_relu_forward(&xp, 0.1)
            .data()
            .iter()
            .zip(sel.data())
            .map(|(a, b)| a * b)
            .sum();
        xp.data_mut()[i] = orig;
        worst = worst.max(rel_err((fp - fm) / (2.0 * step), g.data()[i]));
    }

    let sel_p = ImageTensor::<f64>::from_fn(2, 3, 4, |_, _, _| rng.gen_range(-1.0..1.0));
    let gx = avg_pool2_backward(5, 7, &sel_p);
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + step;
        let fp: f64 = avg_pool2_forward(&xp).data().iter().zip(sel_p.data()).map(|(a, b)| a * b).sum();
        xp.data_mut()[i] = orig - step;
        let fm: f64 = avg_pool2_forward(&xp).data().iter().zip(sel_p.data()).map(|(a, b)| a * b).sum();
        xp.data_mut()[i] = orig;
        worst = worst.max(rel_err((fp - fm) / (2.0 * step), gx.data()[i]));
    }

    let small = ImageTensor::<f64>::from_fn(2, 3, 4, |_, _, _| rng.gen_range(-1.0..1.0));
    let sel_u = ImageTensor::<f64>::from_fn(2, 5, 7, |_, _, _| rng.gen_range(-1.0..1.0));
    let gx = upsample_nearest_backward(3, 4, &sel_u);
    let mut xp = small.clone();
    for i in 0..small.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + step;
        let fp: f64 = upsample_nearest_forward(&xp, 5, 7)
            .data()
            .iter()
            .zip(sel_u.data())
            .map(|(a, b)| a * b)
            .sum();
        xp.data_mut()[i] = orig - step;
        let fm: f64 = upsample_nearest_forward(&xp, 5, 7)
            .data()
            .iter()
            .zip(sel_u.data())
            .map(|(a, b)| a * b)
            .sum();
        xp.data_mut()[i] = orig;
        worst = worst.max(rel_err((fp - fm) / (2.0 * step), gx.data()[i]));
    }

    CheckReport::new(
        "fdgrad",
        "conv/pool/upsample/activation layers vs central FD",
        worst <= 1e-3,
        format!("max relative error {worst:.3e} (tolerance 1e-3)"),
    )
}

fn check_backend_chain_fd(rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let mut out = Vec::new();
    let y = ImageTensor::<f64>::from_fn(1, 8, 8, |_, _, _| rng.gen_range(0.2..0.8));
    let hyper = GammaParams { shape: 1.0, rate: 0.5 };

    // Scalarized random loss over Theta: fixed random linear functional.
    let k = 2usize;
    let sel: Vec<ImageTensor<f64>> =
        (0..6 * k).map(|_| ImageTensor::from_fn(1, 8, 8, |_, _, _| rng.gen_range(-1.0..1.0))).collect();
    let theta_loss = |t: &Theta<f64>| -> f64 {
        let mut acc = 0.0;
        for kk in 0..k {
            for (f, field) in
                [&t.mu, &t.sigma2, &t.alpha, &t.beta, &t.pi, &t.dhat].into_iter().enumerate()
            {
                acc += field[kk]
                    .data()
                    .iter()
                    .zip(sel[f * k + kk].data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        acc
    };
    let theta_grad_of = |t: &Theta<f64>| -> ThetaGrad<f64> {
        let mut g = ThetaGrad::zeros_like(t);
        for kk in 0..k {
            g.mu[kk] = sel[kk].clone();
            g.sigma2[kk] = sel[k + kk].clone();
            g.alpha[kk] = sel[2 * k + kk].clone();
            g.beta[kk] = sel[3 * k + kk].clone();
            g.pi[kk] = sel[4 * k + kk].clone();
            g.dhat[kk] = sel[5 * k + kk].clone();
        }
        g
    };

    for (name, backend) in [
        (
            "direct backend full-chain FD (8x8, K=2)",
            Box::new(DirectBackend::new(k, &y).unwrap()) as Box<dyn ParamBackend<f64>>,
        ),
        (
            "conv backend full-chain FD (8x8, K=2)",
            Box::new(ConvBackend::new(k, 1, 8, 8, rng).unwrap()) as Box<dyn ParamBackend<f64>>,
        ),
    ] {
        let mut backend = backend;
        if name.starts_with("direct") {
            let (p, _) = backend.params_and_grads();
            for v in p.iter_mut() {
                *v += 0.2 * rng.gen_range(-1.0..1.0f64);
            }
        }
        let theta = backend.forward(&y).unwrap();
        let g = theta_grad_of(&theta);
        backend.zero_grads();
        backend.backward(&g).unwrap();
        let analytic: Vec<f64> = backend.params_and_grads().1.to_vec();
        let n = analytic.len();
        let stride = (n / 120).max(1);
        let mut worst = 0.0f64;
        let mut skipped = 0usize;
        let mut checked = 0usize;
        for i in (0..n).step_by(stride) {
            let orig = backend.params_and_grads().0[i];
            let mut fd_at = |h: f64| -> f64 {
                backend.params_and_grads().0[i] = orig + h;
                let fp = theta_loss(&backend.forward(&y).unwrap());
                backend.params_and_grads().0[i] = orig - h;
                let fm = theta_loss(&backend.forward(&y).unwrap());
                backend.params_and_grads().0[i] = orig;
                (fp - fm) / (2.0 * h)
            };
            let h = 1e-4 * (1.0 + orig.abs());
            let fd1 = fd_at(h);
            let fd2 = fd_at(h / 8.0);
            // Central differences only converge where the function is
            // smooth; a rectifier kink inside the probe window makes the
            // two step sizes disagree, so such coordinates are skipped.
            if (fd1 - fd2).abs() > 1e-4 * fd1.abs().max(fd2.abs()).max(1e-4) {
                skipped += 1;
                continue;
            }
            let an = analytic[i];
            if fd2.abs().max(an.abs()) < 1e-9 {
                continue;
            }
            worst = worst.max(rel_err(fd2, an));
            checked += 1;
        }
        let enough = checked >= 60;
        out.push(CheckReport::new(
            "fdgrad",
            name,
            worst <= 1e-3 && enough,
            format!(
                "max relative error {worst:.3e} over {checked} params \
                 ({skipped} kink-adjacent skipped; tolerance 1e-3)"
            ),
        ));
    }
    let _ = hyper;
    out
}

fn check_score_sigma2_mode(mode: Sigma2GradMode, rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let mut out = Vec::new();
    let (m, s2, mu, sigma2) = (0.3, 0.02, 0.6, 0.006);
    let theta = Theta {
        mu: vec![ImageTensor::full(1, 1, 1, mu)],
        sigma2: vec![ImageTensor::full(1, 1, 1, sigma2)],
        alpha: vec![ImageTensor::full(1, 1, 1, 1.0)],
        beta: vec![ImageTensor::full(1, 1, 1, 1.0)],
        pi: vec![ImageTensor::full(1, 1, 1, 1.0)],
        dhat: vec![ImageTensor::full(1, 1, 1, 1.0)],
    };
    let set: OracleSet<f64> =
        OracleSet::broadcast(Box::new(GaussPriorOracle::constant(1, 1, 1, m, s2).unwrap()));
    let samples = 200_000;
    let seed_local = rng.gen::<u64>();
    let mut r1 = ChaCha8Rng::seed_from_u64(seed_local);
    let grads = score_grad_l2(&theta, &set, samples, mode, &mut r1).unwrap();
    let got = grads.d_sigma2[0].at(0, 0, 0);
    // Fixed-smoothing analytic value: ∂/∂σ² E log p_v at v held fixed is
    // −1/(2(s²+v)); per-sample std of the chain-mode estimator dominates by
    // the score×ε/(2σ) term.
    let want = -1.0 / (2.0 * (s2 + sigma2));
    let per_sample_std = {
        // std of ((m−x)/(s²+v))·ε/(2σ) under x = μ+σε: dominated by
        // ((μ−m)/(s²+v))·ε/(2σ) plus σε²/(s²+v)/(2σ); bound it empirically.
        let mut r = ChaCha8Rng::seed_from_u64(seed_local ^ 1);
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        let nprobe = 20_000;
        for _ in 0..nprobe {
            let e: f64 = rand_distr::StandardNormal.sample(&mut r);
            let x = mu + sigma2.sqrt() * e;
            let sc = (m - x) / (s2 + sigma2);
            let v = sc * e / (2.0 * sigma2.sqrt());
            acc += v;
            acc2 += v * v;
        }
        let mean = acc / nprobe as f64;
        ((acc2 / nprobe as f64 - mean * mean).max(0.0)).sqrt()
    };
    let se = per_sample_std / (samples as f64).sqrt();
    let tol = (3.0 * se).max(0.01 * want.abs());
    let passed = (got - want).abs() <= tol;
    let ratio = got / want;
    let detail = if passed {
        format!("MC {got:.5} vs fixed-smoothing FD value {want:.5} (3se tol {tol:.2e})")
    } else {
        format!(
            "MC {got:.5} vs fixed-smoothing value {want:.5}: discrepancy factor {ratio:.4} \
             (2σ = {:.4}); the as-printed mode estimates the σ-gradient, not the σ²-gradient",
            2.0 * sigma2.sqrt()
        )
    };
    out.push(CheckReport::new(
        "fdgrad",
        format!("score σ²-gradient ({} mode) vs smoothed objective", mode.name()),
        passed,
        detail,
    ));

    // Both modes from identical samples differ by exactly 2σ.
    let mut ra = ChaCha8Rng::seed_from_u64(seed_local ^ 2);
    let chain = score_grad_l2(&theta, &set, 500, Sigma2GradMode::ChainCorrected, &mut ra).unwrap();
    let mut rb = ChaCha8Rng::seed_from_u64(seed_local ^ 2);
    let printed = score_grad_l2(&theta, &set, 500, Sigma2GradMode::AsPrinted, &mut rb).unwrap();
    let ratio = printed.d_sigma2[0].at(0, 0, 0) / chain.d_sigma2[0].at(0, 0, 0);
    let dev = (ratio - 2.0 * sigma2.sqrt()).abs();
    out.push(CheckReport::new(
        "fdgrad",
        "σ²-gradient mode ratio equals 2σ",
        dev <= 1e-10,
        format!("ratio {ratio:.12} vs 2σ {:.12} (dev {dev:.2e})", 2.0 * sigma2.sqrt()),
    ));
    out
}

/// Finite-difference suite. The σ²-gradient checks honor the requested mode,
/// so running it in as-printed mode reports the expected 2σ discrepancy as a
/// failure.
pub fn suite_fd(mode: Sigma2GradMode, seed: u64) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![
        check_loss_fd(&mut rng),
        check_link_fd(&mut rng),
        check_conv_layers_fd(&mut rng),
    ];
    out.extend(check_backend_chain_fd(&mut rng));
    out.extend(check_score_sigma2_mode(mode, &mut rng));
    out
}

fn sample_dirichlet(conc: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut draws: Vec<f64> = conc
        .iter()
        .map(|&d| GammaDist::new(d, 1.0).unwrap().sample(rng))
        .collect();
    let sum: f64 = draws.iter().sum();
    for v in draws.iter_mut() {
        *v /= sum;
    }
    draws
}

fn log_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - log_gamma(shape).unwrap() + (shape - 1.0) * x.ln() - rate * x
}

fn log_dirichlet_pdf(omega: &[f64], conc: &[f64]) -> f64 {
    let total: f64 = conc.iter().sum();
    let mut v = log_gamma(total).unwrap();
    for (&w, &d) in omega.iter().zip(conc) {
        v -= log_gamma(d).unwrap();
        v += (d - 1.0) * w.ln();
    }
    v
}

struct McAccum {
    n: usize,
    sum: f64,
    sum2: f64,
}

impl McAccum {
    fn new() -> Self {
        Self { n: 0, sum: 0.0, sum2: 0.0 }
    }
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum2 += v * v;
    }
    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
    fn se(&self) -> f64 {
        let m = self.mean();
        ((self.sum2 / self.n as f64 - m * m).max(0.0) / self.n as f64).sqrt()
    }
}

/// Monte Carlo validation of the closed-form divergences, `draws` random
/// parameter draws with `samples` MC samples each, 3-standard-error bands.
pub fn suite_klmc(draws: usize, samples: usize, seed: u64) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // KL between Gamma distributions.
    let mut worst_z = 0.0f64;
    let mut pass = true;
    for _ in 0..draws {
        let q = GammaParams { shape: rng.gen_range(0.5..3.0), rate: rng.gen_range(0.5..3.0) };
        let p = GammaParams { shape: rng.gen_range(0.5..3.0), rate: rng.gen_range(0.5..3.0) };
        let closed = kl_gamma(q, p).unwrap();
        let dist = GammaDist::new(q.shape, 1.0 / q.rate).unwrap();
        let mut acc = McAccum::new();
        for _ in 0..samples {
            let phi: f64 = dist.sample(&mut rng);
            acc.push(log_gamma_pdf(phi, q.shape, q.rate) - log_gamma_pdf(phi, p.shape, p.rate));
        }
        let z = (closed - acc.mean()).abs() / acc.se().max(1e-12);
        worst_z = worst_z.max(z);
        pass &= z <= 3.0;
    }
    out.push(CheckReport::new(
        "klmc",
        format!("kl_gamma vs MC ({draws} draws x {samples} samples)"),
        pass,
        format!("worst |z| = {worst_z:.2} (limit 3)"),
    ));

    // KL between Dirichlet distributions.
    let mut worst_z = 0.0f64;
    let mut pass = true;
    for _ in 0..draws {
        let k = rng.gen_range(2..5usize);
        let dq: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..3.0)).collect();
        let dp: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..3.0)).collect();
        let closed = kl_dirichlet(
            &DirichletParams::new(dq.clone()).unwrap(),
            &DirichletParams::new(dp.clone()).unwrap(),
        )
        .unwrap();
        let mut acc = McAccum::new();
        for _ in 0..samples {
            let w = sample_dirichlet(&dq, &mut rng);
            acc.push(log_dirichlet_pdf(&w, &dq) - log_dirichlet_pdf(&w, &dp));
        }
        let z = (closed - acc.mean()).abs() / acc.se().max(1e-12);
        worst_z = worst_z.max(z);
        pass &= z <= 3.0;
    }
    out.push(CheckReport::new(
        "klmc",
        format!("kl_dirichlet vs MC ({draws} draws x {samples} samples)"),
        pass,
        format!("worst |z| = {worst_z:.2} (limit 3)"),
    ));

    // Expected categorical-vs-Dirichlet KL.
    let mut worst_z = 0.0f64;
    let mut pass = true;
    for _ in 0..draws {
        let k = rng.gen_range(2..5usize);
        let pi = sample_dirichlet(&vec![1.0; k], &mut rng);
        let dh: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..3.0)).collect();
        let closed =
            expected_cat_dirichlet_kl(&pi, &DirichletParams::new(dh.clone()).unwrap()).unwrap();
        let mut acc = McAccum::new();
        for _ in 0..samples {
            let u: f64 = rng.gen();
            let mut z = 0usize;
            let mut cum = 0.0;
            for (j, &p) in pi.iter().enumerate() {
                cum += p;
                if u < cum {
                    z = j;
                    break;
                }
                z = j;
            }
            let w = sample_dirichlet(&dh, &mut rng);
            acc.push(pi[z].ln() - w[z].ln());
        }
        let z = (closed - acc.mean()).abs() / acc.se().max(1e-12);
        worst_z = worst_z.max(z);
        pass &= z <= 3.0;
    }
    out.push(CheckReport::new(
        "klmc",
        format!("expected_cat_dirichlet_kl vs MC ({draws} draws x {samples} samples)"),
        pass,
        format!("worst |z| = {worst_z:.2} (limit 3)"),
    ));

    // Pointwise data term.
    let mut worst_z = 0.0f64;
    let mut pass = true;
    for _ in 0..draws {
        let y: f64 = rng.gen_range(0.0..1.0);
        let mu: f64 = rng.gen_range(0.0..1.0);
        let s2: f64 = rng.gen_range(0.001..0.5);
        let a: f64 = rng.gen_range(0.5..3.0);
        let b: f64 = rng.gen_range(0.5..3.0);
        let closed = l1_pointwise(y, mu, s2, a, b).unwrap();
        let dist = GammaDist::new(a, 1.0 / b).unwrap();
        let mut acc = McAccum::new();
        for _ in 0..samples {
            let phi: f64 = dist.sample(&mut rng);
            let x = mu + s2.sqrt() * <f64 as crate::real::Real>::std_normal(&mut rng);
            // −log N(y; x, 1/φ) − ½ log 2π
            acc.push(-0.5 * phi.ln() + phi * (y - x) * (y - x) / 2.0);
        }
        let z = (closed - acc.mean()).abs() / acc.se().max(1e-12);
        worst_z = worst_z.max(z);
        pass &= z <= 3.0;
    }
    out.push(CheckReport::new(
        "klmc",
        format!("l1_pointwise vs MC ({draws} draws x {samples} samples)"),
        pass,
        format!("worst |z| = {worst_z:.2} (limit 3)"),
    ));

    // Nonnegativity and zero-at-equality of both KL divergences.
    let mut pass = true;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let q: GammaParams<f64> =
            GammaParams { shape: rng.gen_range(0.1..5.0), rate: rng.gen_range(0.1..5.0) };
        let p: GammaParams<f64> =
            GammaParams { shape: rng.gen_range(0.1..5.0), rate: rng.gen_range(0.1..5.0) };
        let v = kl_gamma(q, p).unwrap();
        pass &= v >= -1e-12;
        let eq = kl_gamma(q, q).unwrap().abs();
        worst = worst.max(eq);
        pass &= eq <= 1e-9;
        let k = rng.gen_range(2..4usize);
        let dq: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..5.0)).collect();
        let dp: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..5.0)).collect();
        let dq = DirichletParams::new(dq).unwrap();
        let dp = DirichletParams::new(dp).unwrap();
        let v = kl_dirichlet(&dq, &dp).unwrap();
        pass &= v >= -1e-12;
        let eq = kl_dirichlet(&dq, &dq).unwrap().abs();
        worst = worst.max(eq);
        pass &= eq <= 1e-9;
    }
    out.push(CheckReport::new(
        "klmc",
        "KL nonnegativity and zero at equality (10^4 draws)",
        pass,
        format!("worst |KL(q,q)| = {worst:.2e}"),
    ));

    // Digamma recurrence across magnitudes.
    let mut worst = 0.0f64;
    let mut x = 1e-3f64;
    while x < 1e3 {
        let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
        worst = worst.max((lhs - 1.0 / x).abs() / (1.0 / x).max(1.0));
        x *= 1.21;
    }
    out.push(CheckReport::new(
        "klmc",
        "digamma recurrence psi(x+1) = psi(x) + 1/x over [1e-3, 1e3]",
        worst <= 1e-10,
        format!("worst deviation {worst:.2e} (tolerance 1e-10)"),
    ));
    out
}

/// Run the named suite (or all of them) and report.
pub fn run_suites(
    filter: Option<&str>,
    mode: Sigma2GradMode,
    klmc_draws: usize,
    klmc_samples: usize,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    let want = |name: &str| filter.is_none() || filter == Some(name);
    if let Some(f) = filter {
        if !SUITE_NAMES.contains(&f) {
            return Err(Error::argument(format!(
                "unknown suite '{f}' (want one of {})",
                SUITE_NAMES.join(", ")
            )));
        }
    }
    if want("theorem1") {
        out.extend(suite_theorem1(100, seed));
    }
    if want("fdgrad") {
        out.extend(suite_fd(mode, seed ^ 0x51ed));
    }
    if want("klmc") {
        out.extend(suite_klmc(klmc_draws, klmc_samples, seed ^ 0xd1ce));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theorem1_suite_passes() {
        let reports = suite_theorem1(30, 1);
        for r in &reports {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn fd_suite_passes_in_chain_mode() {
        let reports = suite_fd(Sigma2GradMode::ChainCorrected, 2);
        for r in &reports {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn fd_suite_flags_printed_mode_with_ratio() {
        let reports = suite_fd(Sigma2GradMode::AsPrinted, 2);
        let flagged: Vec<_> = reports.iter().filter(|r| !r.passed).collect();
        assert_eq!(flagged.len(), 1, "exactly the σ²-mode check should fail");
        assert!(flagged[0].detail.contains("discrepancy factor"));
    }

    #[test]
    fn klmc_suite_passes_at_reduced_size() {
        let reports = suite_klmc(5, 100_000, 3);
        for r in &reports {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
