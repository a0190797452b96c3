//! Scalar trait and the small planar helpers shared by every module.

use nalgebra::{Complex, RealField, Vector2};
use num_traits::ToPrimitive;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Real scalar the library is generic over (`f32` or `f64`).
///
/// Tolerances used by the identifiability checks assume `f64`; `f32` works
/// for geometry and waveform statistics but loses most of the EFIM digits.
pub trait Real: RealField + Copy + ToPrimitive + Send + Sync + 'static {}

impl<T> Real for T where T: RealField + Copy + ToPrimitive + Send + Sync + 'static {}

/// Converts an `f64` constant into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Lossy conversion back to `f64`, for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Speed of light as `T`.
#[inline]
pub fn light<T: Real>() -> T {
    lit(SPEED_OF_LIGHT)
}

/// Unit vector pointing at angle `theta`.
#[inline]
pub fn unit<T: Real>(theta: T) -> Vector2<T> {
    Vector2::new(theta.cos(), theta.sin())
}

/// `unit(theta - pi/2)`; note `d unit / d theta = -unit_perp`.
#[inline]
pub fn unit_perp<T: Real>(theta: T) -> Vector2<T> {
    Vector2::new(theta.sin(), -theta.cos())
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle<T: Real>(theta: T) -> T {
    let pi = T::pi();
    let two_pi = T::two_pi();
    let mut w = theta - two_pi * ((theta + pi) / two_pi).floor();
    // floor can land exactly on +pi after rounding
    if w >= pi {
        w -= two_pi;
    }
    if w < -pi {
        w += two_pi;
    }
    w
}

/// `e^{j x}`.
#[inline]
pub fn cis<T: Real>(x: T) -> Complex<T> {
    Complex::new(x.cos(), x.sin())
}

/// dBm to watts.
pub fn dbm_to_watts<T: Real>(dbm: T) -> T {
    let ten: T = lit(10.0);
    ten.powf((dbm - lit(30.0)) / ten)
}
