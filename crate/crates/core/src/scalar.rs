use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar the numerics are written against.
///
/// Implemented for `f32` and `f64`. The default tolerances across the crate
/// assume `f64`; with `f32` callers should loosen them accordingly.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_angle<T: Real>(x: T) -> T {
    let two_pi = T::TAU();
    let r = x % two_pi;
    let r = if r < T::zero() { r + two_pi } else { r };
    if r >= two_pi {
        T::zero()
    } else {
        r
    }
}

/// Signed difference `a - b` reduced to `(-π, π]`.
pub fn angle_diff<T: Real>(a: T, b: T) -> T {
    let d = wrap_angle(a - b);
    if d > T::PI() {
        d - T::TAU()
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_range() {
        for &x in &[-7.0f64, -std::f64::consts::TAU, -1e-18, 0.0, 3.0, std::f64::consts::TAU, 100.0] {
            let w = wrap_angle(x);
            assert!((0.0..std::f64::consts::TAU).contains(&w), "{x} -> {w}");
        }
        assert!((wrap_angle(-1.0f32) - (std::f32::consts::TAU - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn diff_is_symmetric_and_small() {
        assert!((angle_diff(0.1f64, 6.2) - (0.1 - 6.2 + std::f64::consts::TAU)).abs() < 1e-15);
        assert!((angle_diff(6.2f64, 0.1) + angle_diff(0.1, 6.2)).abs() < 1e-15);
    }
}
