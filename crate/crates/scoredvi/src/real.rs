//! Scalar abstraction: the numeric core is generic over f32/f64.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point scalar type for tensors, losses and gradients.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Convert an f64 constant. Panics only for non-representable values,
    /// which cannot happen for the literals used in this crate.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable")
    }

    fn to_f64c(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Standard normal draw.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw from [0, 1).
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f32 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen()
    }
}

impl Real for f64 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen()
    }
}
