//! C×H×W tensor of real values: the carrier for images, parameter maps and
//! gradients, plus pixel-shuffle downsampling into phase sub-images.

use crate::error::{Error, Result};
use crate::real::Real;

/// Dense row-major C×H×W tensor.
///
/// Image-valued tensors hold intensities in [0, 1]; parameter and gradient
/// maps are unrestricted.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Real> ImageTensor<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::argument("tensor dimensions must be positive"));
        }
        if data.len() != channels * height * width {
            return Err(Error::argument(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![T::zero(); channels * height * width] }
    }

    pub fn full(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.channels, other.height, other.width)
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn require_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::argument(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.require_same_shape(other, "zip_map")?;
        Ok(Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// In-place `self += scale * other`. Requires exclusive access.
    pub fn axpy(&mut self, scale: T, other: &Self) -> Result<()> {
        self.require_same_shape(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + scale * b;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, s: T) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::of(self.data.len() as f64)
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Clamp every value into [lo, hi].
    pub fn clamped(&self, lo: T, hi: T) -> Self {
        self.map(|v| v.max(lo).min(hi))
    }

    pub fn cast<U: Real>(&self) -> ImageTensor<U> {
        ImageTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.to_f64c())).collect(),
        }
    }
}

/// Per-pixel noise variance map (diagonal of the noise covariance).
pub type NoiseVarMap<T> = ImageTensor<T>;

/// Result of pixel-shuffle downsampling: `stride`² phase sub-images per
/// channel layout, each ⌊H/s⌋×⌊W/s⌋. Sub-image (a, b) holds the pixels at
/// rows a, a+s, ... and columns b, b+s, ...; it sits at index `a*s + b`.
#[derive(Debug, Clone)]
pub struct SubImageGrid<T> {
    stride: usize,
    sub_height: usize,
    sub_width: usize,
    subs: Vec<ImageTensor<T>>,
}

impl<T: Real> SubImageGrid<T> {
    pub fn stride(&self) -> usize {
        self.stride
    }
    pub fn sub_height(&self) -> usize {
        self.sub_height
    }
    pub fn sub_width(&self) -> usize {
        self.sub_width
    }
    pub fn subs(&self) -> &[ImageTensor<T>] {
        &self.subs
    }

    pub fn sub(&self, row_phase: usize, col_phase: usize) -> &ImageTensor<T> {
        &self.subs[row_phase * self.stride + col_phase]
    }

    /// Inverse of [`pd_down`]: interleaves the sub-images back into the
    /// s-divisible crop of the original image.
    pub fn reassemble(&self) -> ImageTensor<T> {
        let s = self.stride;
        let channels = self.subs[0].channels();
        let height = self.sub_height * s;
        let width = self.sub_width * s;
        let mut out = ImageTensor::zeros(channels, height, width);
        for a in 0..s {
            for b in 0..s {
                let sub = self.sub(a, b);
                for c in 0..channels {
                    for y in 0..self.sub_height {
                        for x in 0..self.sub_width {
                            out.set(c, y * s + a, x * s + b, sub.at(c, y, x));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Pixel-shuffle downsampling with the given stride. Trailing rows/columns
/// not divisible by the stride are dropped.
pub fn pd_down<T: Real>(img: &ImageTensor<T>, stride: usize) -> Result<SubImageGrid<T>> {
    if stride == 0 {
        return Err(Error::argument("stride must be >= 1"));
    }
    let (channels, height, width) = img.shape();
    if stride > height || stride > width {
        return Err(Error::argument(format!(
            "stride {stride} larger than image {height}x{width}"
        )));
    }
    let sub_height = height / stride;
    let sub_width = width / stride;
    let mut subs = Vec::with_capacity(stride * stride);
    for a in 0..stride {
        for b in 0..stride {
            subs.push(ImageTensor::from_fn(channels, sub_height, sub_width, |c, y, x| {
                img.at(c, y * stride + a, x * stride + b)
            }));
        }
    }
    Ok(SubImageGrid { stride, sub_height, sub_width, subs })
}
