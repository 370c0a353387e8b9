//! Compact convolutional backend: a 2-scale encoder–decoder with a skip
//! connection emits raw μ/σ² maps and three plain 5-layer conv nets emit the
//! remaining raw fields. Forward and backward passes are written out
//! explicitly; gradients are validated against finite differences in the
//! test suites.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::WeightEntry;
use crate::real::Real;
use crate::tensor::ImageTensor;

use super::{
    softmax_backward_site, softmax_site, softplus, softplus_deriv, ParamBackend, Theta,
    ThetaGrad, DHAT_FLOOR, GAMMA_FLOOR, SIGMA2_FLOOR,
};

/// Hidden width of every conv layer.
const HIDDEN: usize = 32;
/// Leaky-rectifier slope.
const LEAKY_SLOPE: f64 = 0.1;

/// Zero-padded 3×3 convolution, stride 1; spatial dimensions preserved.
/// Weights are laid out `[out][in][ky][kx]`.
pub fn conv3x3_forward<T: Real>(
    x: &ImageTensor<T>,
    w: &[T],
    b: &[T],
    out_ch: usize,
) -> ImageTensor<T> {
    let (in_ch, h, wd) = x.shape();
    debug_assert_eq!(w.len(), out_ch * in_ch * 9);
    debug_assert_eq!(b.len(), out_ch);
    let mut out = ImageTensor::zeros(out_ch, h, wd);
    for o in 0..out_ch {
        for y in 0..h {
            for xx in 0..wd {
                let mut acc = b[o];
                for i in 0..in_ch {
                    let wbase = (o * in_ch + i) * 9;
                    for ky in 0..3usize {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        for kx in 0..3usize {
                            let sx = xx + kx;
                            if sx < 1 || sx > wd {
                                continue;
                            }
                            acc = acc + w[wbase + ky * 3 + kx] * x.at(i, sy - 1, sx - 1);
                        }
                    }
                }
                out.set(o, y, xx, acc);
            }
        }
    }
    out
}

/// Backward pass of [`conv3x3_forward`]: returns the input gradient and
/// accumulates weight/bias gradients into `gw`/`gb`.
pub fn conv3x3_backward<T: Real>(
    x: &ImageTensor<T>,
    w: &[T],
    gout: &ImageTensor<T>,
    gw: &mut [T],
    gb: &mut [T],
) -> ImageTensor<T> {
    let (in_ch, h, wd) = x.shape();
    let out_ch = gout.channels();
    let mut gx = ImageTensor::zeros(in_ch, h, wd);
    for o in 0..out_ch {
        for y in 0..h {
            for xx in 0..wd {
                let g = gout.at(o, y, xx);
                gb[o] = gb[o] + g;
                for i in 0..in_ch {
                    let wbase = (o * in_ch + i) * 9;
                    for ky in 0..3usize {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        for kx in 0..3usize {
                            let sx = xx + kx;
                            if sx < 1 || sx > wd {
                                continue;
                            }
                            let xi = x.idx(i, sy - 1, sx - 1);
                            gw[wbase + ky * 3 + kx] = gw[wbase + ky * 3 + kx] + g * x.data()[xi];
                            gx.data_mut()[xi] = gx.data_mut()[xi] + g * w[wbase + ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
    gx
}

pub fn leaky_relu_forward<T: Real>(x: &ImageTensor<T>, slope: T) -> ImageTensor<T> {
    x.map(|v| if v > T::zero() { v } else { slope * v })
}

pub fn leaky_relu_backward<T: Real>(
    x: &ImageTensor<T>,
    gout: &ImageTensor<T>,
    slope: T,
) -> ImageTensor<T> {
    let mut gx = gout.clone();
    for i in 0..gx.len() {
        if x.data()[i] <= T::zero() {
            gx.data_mut()[i] = gx.data_mut()[i] * slope;
        }
    }
    gx
}

/// 2×2 average pooling with ceil-mode output dims; edge windows shrink so
/// odd inputs stay representable.
pub fn avg_pool2_forward<T: Real>(x: &ImageTensor<T>) -> ImageTensor<T> {
    let (c, h, w) = x.shape();
    let oh = h.div_ceil(2);
    let ow = w.div_ceil(2);
    let mut out = ImageTensor::zeros(c, oh, ow);
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let y1 = (2 * y + 2).min(h);
                let x1 = (2 * xx + 2).min(w);
                let mut acc = T::zero();
                let mut n = 0usize;
                for sy in 2 * y..y1 {
                    for sx in 2 * xx..x1 {
                        acc = acc + x.at(ch, sy, sx);
                        n += 1;
                    }
                }
                out.set(ch, y, xx, acc / T::of(n as f64));
            }
        }
    }
    out
}

pub fn avg_pool2_backward<T: Real>(
    in_h: usize,
    in_w: usize,
    gout: &ImageTensor<T>,
) -> ImageTensor<T> {
    let (c, oh, ow) = gout.shape();
    let mut gx = ImageTensor::zeros(c, in_h, in_w);
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let y1 = (2 * y + 2).min(in_h);
                let x1 = (2 * xx + 2).min(in_w);
                let n = T::of(((y1 - 2 * y) * (x1 - 2 * xx)) as f64);
                let g = gout.at(ch, y, xx) / n;
                for sy in 2 * y..y1 {
                    for sx in 2 * xx..x1 {
                        let i = gx.idx(ch, sy, sx);
                        gx.data_mut()[i] = gx.data_mut()[i] + g;
                    }
                }
            }
        }
    }
    gx
}

/// Nearest-neighbor upsampling to an explicit target size (the inverse
/// spatial map of [`avg_pool2_forward`]).
pub fn upsample_nearest_forward<T: Real>(
    x: &ImageTensor<T>,
    target_h: usize,
    target_w: usize,
) -> ImageTensor<T> {
    let (c, _, _) = x.shape();
    ImageTensor::from_fn(c, target_h, target_w, |ch, y, xx| x.at(ch, y / 2, xx / 2))
}

pub fn upsample_nearest_backward<T: Real>(
    in_h: usize,
    in_w: usize,
    gout: &ImageTensor<T>,
) -> ImageTensor<T> {
    let (c, th, tw) = gout.shape();
    let mut gx = ImageTensor::zeros(c, in_h, in_w);
    for ch in 0..c {
        for y in 0..th {
            for xx in 0..tw {
                let i = gx.idx(ch, y / 2, xx / 2);
                gx.data_mut()[i] = gx.data_mut()[i] + gout.at(ch, y, xx);
            }
        }
    }
    gx
}

/// Channel concatenation [a; b].
pub fn concat_forward<T: Real>(a: &ImageTensor<T>, b: &ImageTensor<T>) -> ImageTensor<T> {
    let (ca, h, w) = a.shape();
    let (cb, hb, wb) = b.shape();
    debug_assert_eq!((h, w), (hb, wb));
    let mut data = Vec::with_capacity((ca + cb) * h * w);
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    ImageTensor::new(ca + cb, h, w, data).expect("shapes agree")
}

pub fn concat_backward<T: Real>(
    gout: &ImageTensor<T>,
    a_channels: usize,
) -> (ImageTensor<T>, ImageTensor<T>) {
    let (c, h, w) = gout.shape();
    let split = a_channels * h * w;
    let ga = ImageTensor::new(a_channels, h, w, gout.data()[..split].to_vec()).unwrap();
    let gb = ImageTensor::new(c - a_channels, h, w, gout.data()[split..].to_vec()).unwrap();
    (ga, gb)
}

#[derive(Debug, Clone)]
struct ConvSpec {
    in_ch: usize,
    out_ch: usize,
    w: Range<usize>,
    b: Range<usize>,
}

struct Alloc {
    len: usize,
}

impl Alloc {
    fn conv(&mut self, in_ch: usize, out_ch: usize) -> ConvSpec {
        let w = self.len..self.len + out_ch * in_ch * 9;
        self.len = w.end;
        let b = self.len..self.len + out_ch;
        self.len = b.end;
        ConvSpec { in_ch, out_ch, w, b }
    }
}

// Plain net: five 3×3 convs, leaky rectifier after the first four.
struct PlainNet {
    convs: [ConvSpec; 5],
}

struct PlainCache<T> {
    input: ImageTensor<T>,
    pres: Vec<ImageTensor<T>>,
    acts: Vec<ImageTensor<T>>,
}

impl PlainNet {
    fn new(alloc: &mut Alloc, in_ch: usize, out_ch: usize) -> Self {
        Self {
            convs: [
                alloc.conv(in_ch, HIDDEN),
                alloc.conv(HIDDEN, HIDDEN),
                alloc.conv(HIDDEN, HIDDEN),
                alloc.conv(HIDDEN, HIDDEN),
                alloc.conv(HIDDEN, out_ch),
            ],
        }
    }

    fn forward<T: Real>(
        &self,
        params: &[T],
        input: &ImageTensor<T>,
    ) -> (ImageTensor<T>, PlainCache<T>) {
        let slope = T::of(LEAKY_SLOPE);
        let mut pres = Vec::with_capacity(4);
        let mut acts = Vec::with_capacity(4);
        let mut cur = input.clone();
        for spec in &self.convs[..4] {
            let pre =
                conv3x3_forward(&cur, &params[spec.w.clone()], &params[spec.b.clone()], spec.out_ch);
            let act = leaky_relu_forward(&pre, slope);
            pres.push(pre);
            cur = act.clone();
            acts.push(act);
        }
        let head = &self.convs[4];
        let out =
            conv3x3_forward(&cur, &params[head.w.clone()], &params[head.b.clone()], head.out_ch);
        (out, PlainCache { input: input.clone(), pres, acts })
    }

    fn backward<T: Real>(
        &self,
        params: &[T],
        grads: &mut [T],
        cache: &PlainCache<T>,
        ghead: &ImageTensor<T>,
    ) {
        let slope = T::of(LEAKY_SLOPE);
        let head = &self.convs[4];
        let (gw, gb) = split_wb(grads, head);
        let mut g = conv3x3_backward(&cache.acts[3], &params[head.w.clone()], ghead, gw, gb);
        for li in (0..4).rev() {
            let spec = &self.convs[li];
            let g_pre = leaky_relu_backward(&cache.pres[li], &g, slope);
            let below: &ImageTensor<T> =
                if li == 0 { &cache.input } else { &cache.acts[li - 1] };
            let (gw, gb) = split_wb(grads, spec);
            g = conv3x3_backward(below, &params[spec.w.clone()], &g_pre, gw, gb);
        }
    }
}

// Two disjoint gradient slices for one conv layer.
fn split_wb<'a, T>(grads: &'a mut [T], spec: &ConvSpec) -> (&'a mut [T], &'a mut [T]) {
    debug_assert_eq!(spec.b.start, spec.w.end);
    let (_, rest) = grads.split_at_mut(spec.w.start);
    let (gw, rest) = rest.split_at_mut(spec.w.end - spec.w.start);
    let (gb, _) = rest.split_at_mut(spec.b.end - spec.b.start);
    (gw, gb)
}

// Encoder–decoder with one downsampling stage and a skip connection.
struct XNet {
    c1: ConvSpec,
    c2: ConvSpec,
    c3: ConvSpec,
    c4: ConvSpec,
    head: ConvSpec,
}

struct XCache<T> {
    input: ImageTensor<T>,
    pre1: ImageTensor<T>,
    a1: ImageTensor<T>,
    pooled: ImageTensor<T>,
    pre2: ImageTensor<T>,
    a2: ImageTensor<T>,
    pre3: ImageTensor<T>,
    a3: ImageTensor<T>,
    cat: ImageTensor<T>,
    pre4: ImageTensor<T>,
    a4: ImageTensor<T>,
}

impl XNet {
    fn new(alloc: &mut Alloc, in_ch: usize, out_ch: usize) -> Self {
        Self {
            c1: alloc.conv(in_ch, HIDDEN),
            c2: alloc.conv(HIDDEN, HIDDEN),
            c3: alloc.conv(HIDDEN, HIDDEN),
            c4: alloc.conv(2 * HIDDEN, HIDDEN),
            head: alloc.conv(HIDDEN, out_ch),
        }
    }

    fn forward<T: Real>(
        &self,
        params: &[T],
        input: &ImageTensor<T>,
    ) -> (ImageTensor<T>, XCache<T>) {
        let slope = T::of(LEAKY_SLOPE);
        let (_, h, w) = input.shape();
        let pre1 = conv3x3_forward(
            input,
            &params[self.c1.w.clone()],
            &params[self.c1.b.clone()],
            self.c1.out_ch,
        );
        let a1 = leaky_relu_forward(&pre1, slope);
        let pooled = avg_pool2_forward(&a1);
        let pre2 = conv3x3_forward(
            &pooled,
            &params[self.c2.w.clone()],
            &params[self.c2.b.clone()],
            self.c2.out_ch,
        );
        let a2 = leaky_relu_forward(&pre2, slope);
        let pre3 = conv3x3_forward(
            &a2,
            &params[self.c3.w.clone()],
            &params[self.c3.b.clone()],
            self.c3.out_ch,
        );
        let a3 = leaky_relu_forward(&pre3, slope);
        let up = upsample_nearest_forward(&a3, h, w);
        let cat = concat_forward(&up, &a1);
        let pre4 = conv3x3_forward(
            &cat,
            &params[self.c4.w.clone()],
            &params[self.c4.b.clone()],
            self.c4.out_ch,
        );
        let a4 = leaky_relu_forward(&pre4, slope);
        let out = conv3x3_forward(
            &a4,
            &params[self.head.w.clone()],
            &params[self.head.b.clone()],
            self.head.out_ch,
        );
        (out, XCache { input: input.clone(), pre1, a1, pooled, pre2, a2, pre3, a3, cat, pre4, a4 })
    }

    fn backward<T: Real>(
        &self,
        params: &[T],
        grads: &mut [T],
        cache: &XCache<T>,
        ghead: &ImageTensor<T>,
    ) {
        let slope = T::of(LEAKY_SLOPE);
        let (gw, gb) = split_wb(grads, &self.head);
        let g_a4 = conv3x3_backward(&cache.a4, &params[self.head.w.clone()], ghead, gw, gb);
        let g_pre4 = leaky_relu_backward(&cache.pre4, &g_a4, slope);
        let (gw, gb) = split_wb(grads, &self.c4);
        let g_cat = conv3x3_backward(&cache.cat, &params[self.c4.w.clone()], &g_pre4, gw, gb);
        let (g_up, g_a1_cat) = concat_backward(&g_cat, HIDDEN);
        let g_a3 = upsample_nearest_backward(cache.a3.height(), cache.a3.width(), &g_up);
        let g_pre3 = leaky_relu_backward(&cache.pre3, &g_a3, slope);
        let (gw, gb) = split_wb(grads, &self.c3);
        let g_a2 = conv3x3_backward(&cache.a2, &params[self.c3.w.clone()], &g_pre3, gw, gb);
        let g_pre2 = leaky_relu_backward(&cache.pre2, &g_a2, slope);
        let (gw, gb) = split_wb(grads, &self.c2);
        let g_pooled =
            conv3x3_backward(&cache.pooled, &params[self.c2.w.clone()], &g_pre2, gw, gb);
        let mut g_a1 = avg_pool2_backward(cache.a1.height(), cache.a1.width(), &g_pooled);
        g_a1.axpy(T::one(), &g_a1_cat).expect("skip shapes agree");
        let g_pre1 = leaky_relu_backward(&cache.pre1, &g_a1, slope);
        let (gw, gb) = split_wb(grads, &self.c1);
        let _ = conv3x3_backward(&cache.input, &params[self.c1.w.clone()], &g_pre1, gw, gb);
    }
}

struct Caches<T> {
    x: XCache<T>,
    x_heads: ImageTensor<T>,
    phi: PlainCache<T>,
    phi_heads: ImageTensor<T>,
    z: PlainCache<T>,
    z_heads: ImageTensor<T>,
    omega: PlainCache<T>,
    omega_heads: ImageTensor<T>,
}

/// Conv-net parameterization of Θ.
pub struct ConvBackend<T> {
    mixtures: usize,
    channels: usize,
    height: usize,
    width: usize,
    params: Vec<T>,
    grads: Vec<T>,
    x_net: XNet,
    phi_net: PlainNet,
    z_net: PlainNet,
    omega_net: PlainNet,
    cache: Option<Caches<T>>,
}

impl<T: Real> ConvBackend<T> {
    /// Fan-in-scaled uniform weight init, zero biases; consumes draws from
    /// `rng` in a fixed order.
    pub fn new<R: Rng>(
        mixtures: usize,
        channels: usize,
        height: usize,
        width: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if mixtures == 0 || channels == 0 || height == 0 || width == 0 {
            return Err(Error::argument("bad backend dimensions"));
        }
        let kc = mixtures * channels;
        let mut alloc = Alloc { len: 0 };
        let x_net = XNet::new(&mut alloc, channels, 2 * kc);
        let phi_net = PlainNet::new(&mut alloc, channels, 2 * kc);
        let z_net = PlainNet::new(&mut alloc, channels, kc);
        let omega_net = PlainNet::new(&mut alloc, channels, kc);
        let mut params = vec![T::zero(); alloc.len];
        let two = T::of(2.0);
        for net in [&x_net.c1, &x_net.c2, &x_net.c3, &x_net.c4, &x_net.head]
            .into_iter()
            .chain(phi_net.convs.iter())
            .chain(z_net.convs.iter())
            .chain(omega_net.convs.iter())
        {
            let bound = T::of(1.0 / ((net.in_ch * 9) as f64).sqrt());
            for i in net.w.clone() {
                params[i] = (T::unit_uniform(rng) * two - T::one()) * bound;
            }
        }
        let grads = vec![T::zero(); alloc.len];
        Ok(Self {
            mixtures,
            channels,
            height,
            width,
            params,
            grads,
            x_net,
            phi_net,
            z_net,
            omega_net,
            cache: None,
        })
    }

    fn head_map(&self, heads: &ImageTensor<T>, offset: usize, k: usize, c: usize) -> Vec<T> {
        let (_, h, w) = heads.shape();
        let ch = offset + k * self.channels + c;
        let base = ch * h * w;
        heads.data()[base..base + h * w].to_vec()
    }
}

impl<T: Real> ParamBackend<T> for ConvBackend<T> {
    fn forward(&mut self, y: &ImageTensor<T>) -> Result<Theta<T>> {
        if y.shape() != (self.channels, self.height, self.width) {
            return Err(Error::argument(format!(
                "backend configured for {:?}, got {:?}",
                (self.channels, self.height, self.width),
                y.shape()
            )));
        }
        let (x_heads, x_cache) = self.x_net.forward(&self.params, y);
        let (phi_heads, phi_cache) = self.phi_net.forward(&self.params, y);
        let (z_heads, z_cache) = self.z_net.forward(&self.params, y);
        let (omega_heads, omega_cache) = self.omega_net.forward(&self.params, y);

        let k = self.mixtures;
        let kc = k * self.channels;
        let hw = self.height * self.width;
        let mk_maps = |heads: &ImageTensor<T>, offset: usize, floor: f64, linked: bool| {
            (0..k)
                .map(|kk| {
                    let mut data = Vec::with_capacity(self.channels * hw);
                    for c in 0..self.channels {
                        let raw = self.head_map(heads, offset, kk, c);
                        if linked {
                            data.extend(raw.iter().map(|&r| softplus(r) + T::of(floor)));
                        } else {
                            data.extend_from_slice(&raw);
                        }
                    }
                    ImageTensor::new(self.channels, self.height, self.width, data).unwrap()
                })
                .collect::<Vec<_>>()
        };
        let mu = mk_maps(&x_heads, 0, 0.0, false);
        let sigma2 = mk_maps(&x_heads, kc, SIGMA2_FLOOR, true);
        let alpha = mk_maps(&phi_heads, 0, GAMMA_FLOOR, true);
        let beta = mk_maps(&phi_heads, kc, GAMMA_FLOOR, true);
        let dhat = mk_maps(&omega_heads, 0, DHAT_FLOOR, true);

        let mut pi: Vec<ImageTensor<T>> = (0..k)
            .map(|_| ImageTensor::zeros(self.channels, self.height, self.width))
            .collect();
        let mut logits = vec![T::zero(); k];
        let mut probs = vec![T::zero(); k];
        for c in 0..self.channels {
            for i in 0..hw {
                for kk in 0..k {
                    logits[kk] = z_heads.data()[(kk * self.channels + c) * hw + i];
                }
                softmax_site(&logits, &mut probs);
                for kk in 0..k {
                    pi[kk].data_mut()[c * hw + i] = probs[kk];
                }
            }
        }

        self.cache = Some(Caches {
            x: x_cache,
            x_heads,
            phi: phi_cache,
            phi_heads,
            z: z_cache,
            z_heads,
            omega: omega_cache,
            omega_heads,
        });
        Ok(Theta { mu, sigma2, alpha, beta, pi, dhat })
    }

    fn backward(&mut self, grad: &ThetaGrad<T>) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::argument("backward called before forward"))?;
        if !grad.all_finite() {
            self.cache = Some(cache);
            return Err(Error::numeric("non-finite upstream gradient"));
        }
        let k = self.mixtures;
        let kc = k * self.channels;
        let hw = self.height * self.width;

        // Heads of the encoder–decoder: identity for mu, softplus for sigma2.
        let mut gx_heads = ImageTensor::zeros(2 * kc, self.height, self.width);
        let mut gphi_heads = ImageTensor::zeros(2 * kc, self.height, self.width);
        let mut gomega_heads = ImageTensor::zeros(kc, self.height, self.width);
        for kk in 0..k {
            for c in 0..self.channels {
                let ch = kk * self.channels + c;
                for i in 0..hw {
                    let gi = c * hw + i;
                    gx_heads.data_mut()[ch * hw + i] = grad.mu[kk].data()[gi];
                    let raw = cache.x_heads.data()[(kc + ch) * hw + i];
                    gx_heads.data_mut()[(kc + ch) * hw + i] =
                        grad.sigma2[kk].data()[gi] * softplus_deriv(raw);
                    let raw = cache.phi_heads.data()[ch * hw + i];
                    gphi_heads.data_mut()[ch * hw + i] =
                        grad.alpha[kk].data()[gi] * softplus_deriv(raw);
                    let raw = cache.phi_heads.data()[(kc + ch) * hw + i];
                    gphi_heads.data_mut()[(kc + ch) * hw + i] =
                        grad.beta[kk].data()[gi] * softplus_deriv(raw);
                    let raw = cache.omega_heads.data()[ch * hw + i];
                    gomega_heads.data_mut()[ch * hw + i] =
                        grad.dhat[kk].data()[gi] * softplus_deriv(raw);
                }
            }
        }
        // Softmax Jacobian for the mixing-weight logits.
        let mut gz_heads = ImageTensor::zeros(kc, self.height, self.width);
        let mut logits = vec![T::zero(); k];
        let mut probs = vec![T::zero(); k];
        let mut gpi = vec![T::zero(); k];
        let mut glogit = vec![T::zero(); k];
        for c in 0..self.channels {
            for i in 0..hw {
                for kk in 0..k {
                    logits[kk] = cache.z_heads.data()[(kk * self.channels + c) * hw + i];
                    gpi[kk] = grad.pi[kk].data()[c * hw + i];
                }
                softmax_site(&logits, &mut probs);
                softmax_backward_site(&probs, &gpi, &mut glogit);
                for kk in 0..k {
                    gz_heads.data_mut()[(kk * self.channels + c) * hw + i] = glogit[kk];
                }
            }
        }

        self.x_net.backward(&self.params, &mut self.grads, &cache.x, &gx_heads);
        self.phi_net.backward(&self.params, &mut self.grads, &cache.phi, &gphi_heads);
        self.z_net.backward(&self.params, &mut self.grads, &cache.z, &gz_heads);
        self.omega_net.backward(&self.params, &mut self.grads, &cache.omega, &gomega_heads);
        self.cache = Some(cache);
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
        let name_spec = |prefix: &str, idx: usize, spec: &ConvSpec| {
            vec![
                WeightEntry {
                    name: format!("{prefix}.conv{idx}.weight"),
                    dims: vec![spec.out_ch as u32, spec.in_ch as u32, 3, 3],
                    data: self.params[spec.w.clone()].to_vec(),
                },
                WeightEntry {
                    name: format!("{prefix}.conv{idx}.bias"),
                    dims: vec![spec.out_ch as u32],
                    data: self.params[spec.b.clone()].to_vec(),
                },
            ]
        };
        let mut out = Vec::new();
        for (i, s) in [&self.x_net.c1, &self.x_net.c2, &self.x_net.c3, &self.x_net.c4, &self.x_net.head]
            .into_iter()
            .enumerate()
        {
            out.extend(name_spec("x_net", i, s));
        }
        for (prefix, net) in
            [("phi_net", &self.phi_net), ("z_net", &self.z_net), ("omega_net", &self.omega_net)]
        {
            for (i, s) in net.convs.iter().enumerate() {
                out.extend(name_spec(prefix, i, s));
            }
        }
        out
    }
}
