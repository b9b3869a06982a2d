//! Inner dynamics on the invariant cylinder `p = q = 0` and ergodization.
//!
//! On the cylinder `İ_i = ε a_i sin φ_i`, `φ̇_i = Ω_i I_i`, `ṡ = 1`, with the
//! separated first integrals `F_i = Ω_i I_i²/2 + ε a_i (cos φ_i − 1)`.

use thiserror::Error;

use crate::melnikov::{crest_branch, psi, MelnikovError, ReducedState};
use crate::model::ModelParams;
use crate::ode::{propagate, IntegratorConfig, OdeError};
use crate::scalar::{wrap_angle, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InnerError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Melnikov(#[from] MelnikovError),
    #[error("psi window not reached within t <= {t_bound}")]
    WindowUnreachable { t_bound: f64 },
    #[error("inner line is closed (omega2/omega1 = +-1) and misses the window; psi0 = {psi0}")]
    UseScatteringDetour { psi0: f64 },
    #[error("state is within the double-resonance guard radius (|I| = {norm} < {guard})")]
    DoubleResonance { norm: f64, guard: f64 },
}

/// Point on the cylinder: `(I₁, I₂, φ₁, φ₂, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InnerState<T> {
    pub i: [T; 2],
    pub phi: [T; 2],
    pub s: T,
}

impl<T: Real> InnerState<T> {
    pub fn to_array(&self) -> [T; 5] {
        [self.i[0], self.i[1], self.phi[0], self.phi[1], self.s]
    }

    pub fn from_array(x: &[T; 5]) -> Self {
        InnerState {
            i: [x[0], x[1]],
            phi: [x[2], x[3]],
            s: x[4],
        }
    }
}

pub fn inner_field<T: Real>(x: &[T; 5], params: &ModelParams<T>) -> [T; 5] {
    let a = params.a();
    let om = params.big_omega();
    let e = params.eps();
    [
        e * a[0] * x[2].sin(),
        e * a[1] * x[3].sin(),
        om[0] * x[0],
        om[1] * x[1],
        T::one(),
    ]
}

/// Exact inner flow for time `t` (either sign).
pub fn inner_flow<T: Real>(x: &InnerState<T>, t: T, params: &ModelParams<T>, cfg: &IntegratorConfig<T>) -> Result<InnerState<T>, InnerError> {
    if t == T::zero() {
        return Ok(*x);
    }
    let p = *params;
    let y = propagate(move |_t, y: &[T; 5]| inner_field(y, &p), T::zero(), x.to_array(), t, cfg)?;
    Ok(InnerState::from_array(&y))
}

/// The ε = 0 approximation: actions frozen, angles rotate rigidly.
pub fn inner_flow_linear<T: Real>(x: &InnerState<T>, t: T, params: &ModelParams<T>) -> InnerState<T> {
    let w = params.frequencies(x.i).omega;
    InnerState {
        i: x.i,
        phi: [x.phi[0] + t * w[0], x.phi[1] + t * w[1]],
        s: x.s + t,
    }
}

pub fn first_integrals<T: Real>(x: &InnerState<T>, params: &ModelParams<T>) -> [T; 2] {
    let a = params.a();
    let om = params.big_omega();
    let e = params.eps();
    let half = T::lit(0.5);
    [
        half * om[0] * x.i[0] * x.i[0] + e * a[0] * (x.phi[0].cos() - T::one()),
        half * om[1] * x.i[1] * x.i[1] + e * a[1] * (x.phi[1].cos() - T::one()),
    ]
}

/// First integrals in the slow angles: `F_i = Ω_i I_i²/2 + ε a_i cos θ_i`.
pub fn first_integrals_reduced<T: Real>(x: &ReducedState<T>, params: &ModelParams<T>) -> [T; 2] {
    let a = params.a();
    let om = params.big_omega();
    let e = params.eps();
    let half = T::lit(0.5);
    [
        half * om[0] * x.i[0] * x.i[0] + e * a[0] * x.theta[0].cos(),
        half * om[1] * x.i[1] * x.i[1] + e * a[1] * x.theta[1].cos(),
    ]
}

/// Half-width bound `2√(2ε|a_i|/Ω_i)` of the action excursion along an
/// exact inner orbit.
pub fn action_excursion_bound<T: Real>(params: &ModelParams<T>) -> [T; 2] {
    let a = params.a();
    let om = params.big_omega();
    let e = params.eps();
    let two = T::lit(2.0);
    [
        two * (two * e * a[0].abs() / om[0]).sqrt(),
        two * (two * e * a[1].abs() / om[1]).sqrt(),
    ]
}

/// Product of open arcs `(lo_k, hi_k)` on the circle; an arc of length
/// `≥ 2π` places no constraint on that component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleWindow<T> {
    pub lo: [T; 2],
    pub hi: [T; 2],
}

impl<T: Real> AngleWindow<T> {
    /// `(π, 2π)²`: both `∂L*/∂θ_k` positive when the amplitudes are positive.
    pub fn positive() -> Self {
        AngleWindow {
            lo: [T::PI(); 2],
            hi: [T::TAU(); 2],
        }
    }

    pub fn full() -> Self {
        AngleWindow {
            lo: [T::zero(); 2],
            hi: [T::TAU(); 2],
        }
    }

    /// Window where `u_k ∂L*/∂θ_k = −u_k A_k sin ψ_k > 0` for the constrained
    /// components. `None` leaves a component free. `margin` trims both ends.
    pub fn for_direction(signs: [Option<bool>; 2], amplitudes: [T; 3], margin: T) -> Self {
        let mut w = Self::full();
        for k in 0..2 {
            if let Some(up) = signs[k] {
                // −A sin ψ has the sign of `up` iff sin ψ has the sign of −up·sgn A
                let want_negative_sine = up == (amplitudes[k] > T::zero());
                let base = if want_negative_sine { T::PI() } else { T::zero() };
                w.lo[k] = base + margin;
                w.hi[k] = base + T::PI() - margin;
            }
        }
        w
    }

    fn constrained(&self, k: usize) -> bool {
        self.hi[k] - self.lo[k] < T::TAU()
    }

    pub fn contains(&self, psi: [T; 2]) -> bool {
        (0..2).all(|k| {
            if !self.constrained(k) {
                return true;
            }
            let x = wrap_angle(psi[k] - self.lo[k]);
            x > T::zero() && x < self.hi[k] - self.lo[k]
        })
    }
}

/// Result of an ergodization search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ergodization<T> {
    /// Inner-flow time to the window.
    pub t: T,
    /// State after the first-order inner flow `θ ↦ θ + tω`.
    pub state: ReducedState<T>,
    pub psi: [T; 2],
}

/// `2π ε^{−2a}`: Minkowski-type bound on the waiting time for a window hit.
pub fn minkowski_bound<T: Real>(eps: T, a_exp: T) -> T {
    T::TAU() * eps.powf(-T::lit(2.0) * a_exp)
}

/// Interval `(a, b)` of line parameters `r` where component `k` of
/// `θ₀ + rω` lies in the arc, with `b > r`; `None` if never.
fn next_interval<T: Real>(theta0: T, omega: T, lo: T, hi: T, r: T) -> Option<(T, T)> {
    let two_pi = T::TAU();
    if hi - lo >= two_pi {
        return Some((T::neg_infinity(), T::infinity()));
    }
    if omega == T::zero() {
        let x = wrap_angle(theta0 - lo);
        return if x > T::zero() && x < hi - lo {
            Some((T::neg_infinity(), T::infinity()))
        } else {
            None
        };
    }
    if omega > T::zero() {
        let n = ((r * omega + theta0 - hi) / two_pi).floor() + T::one();
        let a = (lo + two_pi * n - theta0) / omega;
        let b = (hi + two_pi * n - theta0) / omega;
        Some((a, b))
    } else {
        let n = ((r * omega + theta0 - lo) / two_pi).ceil() - T::one();
        let a = (hi + two_pi * n - theta0) / omega;
        let b = (lo + two_pi * n - theta0) / omega;
        Some((a, b))
    }
}

/// Smallest `r ≥ r0` (up to `r_max`) with `θ₀ + rω` inside the window.
fn first_entry<T: Real>(theta0: [T; 2], omega: [T; 2], window: &AngleWindow<T>, r0: T, r_max: T) -> Option<T> {
    let mut r = r0;
    for _ in 0..1_000_000 {
        if r > r_max {
            return None;
        }
        let i1 = next_interval(theta0[0], omega[0], window.lo[0], window.hi[0], r)?;
        let i2 = next_interval(theta0[1], omega[1], window.lo[1], window.hi[1], r)?;
        let start = r.max(i1.0).max(i2.0);
        let end = i1.1.min(i2.1);
        if start < end {
            // step just inside when landing on an open boundary
            return Some(if start > r { start + (end - start) * T::lit(1e-9) } else { start });
        }
        // nudge past the end so rounding cannot return the same interval
        let advance = i1.1.min(i2.1);
        r = r.max(advance) + T::lit(4.0) * T::epsilon() * (T::one() + r.abs());
    }
    None
}

/// Waits along the first-order inner flow until `ψ_j(θ + tω) ∈ W`.
///
/// The inner line in `ψ` is `θ₀ + rω` and `t(r) = r − ξ_j(I, θ₀ + rω)` is
/// increasing, so the first entry of the line into the window gives the
/// smallest waiting time. Closed lines with `|ω₂/ω₁| = 1` that miss the window
/// over a full period report [`InnerError::UseScatteringDetour`].
pub fn ergodize<T: Real>(
    state: &ReducedState<T>,
    window: &AngleWindow<T>,
    j: i32,
    params: &ModelParams<T>,
    t_bound: T,
) -> Result<Ergodization<T>, InnerError> {
    let norm = (state.i[0] * state.i[0] + state.i[1] * state.i[1]).sqrt();
    let guard = params.eps().sqrt();
    if norm < guard {
        return Err(InnerError::DoubleResonance {
            norm: norm.as_f64(),
            guard: guard.as_f64(),
        });
    }
    let omega = params.frequencies(state.i).omega;
    let psi_now = psi(j, state, params)?;
    if window.contains(psi_now) {
        return Ok(Ergodization {
            t: T::zero(),
            state: *state,
            psi: psi_now,
        });
    }
    // ψ(t) = θ₀ + r(t) ω with r(0) = −τ*(θ₀)
    let theta0 = state.theta;
    let r0 = if omega[0] != T::zero() {
        (psi_now[0] - theta0[0]) / omega[0]
    } else {
        (psi_now[1] - theta0[1]) / omega[1]
    };
    let xi = |r: T| crest_branch(j, state.i, [theta0[0] + r * omega[0], theta0[1] + r * omega[1]], params);
    let time_of = |r: T| -> Result<T, InnerError> { Ok(r - xi(r)?) };
    // r ≤ t + max|ξ| ≤ t + π|j| + π/2
    let r_max = t_bound + T::PI() * (T::from_i32(j.abs()).unwrap() + T::one());
    let closed = omega[0] != T::zero()
        && omega[1] != T::zero()
        && ((omega[1] / omega[0]).abs() - T::one()).abs() < T::lit(1e-12);
    let search_max = if closed {
        r_max.min(r0 + T::TAU() / omega[0].abs() + T::lit(1e-9))
    } else {
        r_max
    };
    match first_entry(theta0, omega, window, r0, search_max) {
        Some(r) => {
            let t = time_of(r)?.max(T::zero());
            if t > t_bound {
                return Err(InnerError::WindowUnreachable { t_bound: t_bound.as_f64() });
            }
            let moved = ReducedState::new(state.i, [theta0[0] + t * omega[0], theta0[1] + t * omega[1]]);
            let p = psi(j, &moved, params)?;
            Ok(Ergodization { t, state: moved, psi: p })
        }
        None if closed => {
            let ratio = omega[1] / omega[0];
            Err(InnerError::UseScatteringDetour {
                psi0: wrap_angle(psi_now[1] - ratio * psi_now[0]).as_f64(),
            })
        }
        None => Err(InnerError::WindowUnreachable { t_bound: t_bound.as_f64() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PendulumSign;
    use std::f64::consts::PI;

    fn params(eps: f64) -> ModelParams<f64> {
        ModelParams::new([0.3, 0.1, 1.0], [1.0, 1.0], eps, PendulumSign::Plus).unwrap()
    }

    #[test]
    fn linear_flow_at_zero_eps() {
        let p = params(0.0);
        let x = InnerState {
            i: [0.5, -1.0],
            phi: [0.1, 0.2],
            s: 0.0,
        };
        let y = inner_flow(&x, 3.0, &p, &IntegratorConfig::default()).unwrap();
        let z = inner_flow_linear(&x, 3.0, &p);
        assert_eq!(y.i, x.i);
        for k in 0..2 {
            assert!((y.phi[k] - z.phi[k]).abs() < 1e-11);
        }
    }

    #[test]
    fn first_integral_examples() {
        let p = params(0.0);
        let x = InnerState {
            i: [0.0, 0.0],
            phi: [0.0, 0.0],
            s: 0.0,
        };
        assert_eq!(first_integrals(&x, &params(0.1)), [0.0, 0.0]);
        let x = InnerState {
            i: [1.0, 1.0],
            phi: [PI, PI],
            s: 0.0,
        };
        assert_eq!(first_integrals(&x, &p), [0.5, 0.5]);
    }

    #[test]
    fn integrals_conserved_and_excursion_bounded() {
        let p = params(1e-3);
        let x = InnerState {
            i: [0.01, -0.02],
            phi: [3.0, 0.5],
            s: 0.0,
        };
        let f0 = first_integrals(&x, &p);
        let y = inner_flow(&x, 1000.0, &p, &IntegratorConfig::default()).unwrap();
        let f1 = first_integrals(&y, &p);
        assert!((f0[0] - f1[0]).abs() < 1e-10 && (f0[1] - f1[1]).abs() < 1e-10);
        let b = action_excursion_bound(&p);
        assert!((y.i[0] - x.i[0]).abs() <= b[0] && (y.i[1] - x.i[1]).abs() <= b[1]);
        // libration near I₁ = 0 pushes I₁ along sin φ₁
        assert!(inner_field(&x.to_array(), &p)[0] > 0.0);
    }

    #[test]
    fn window_membership() {
        let w = AngleWindow::<f64>::positive();
        assert!(w.contains([4.0, 5.0]));
        assert!(!w.contains([4.0, 1.0]));
        assert!(w.contains([4.0 - 2.0 * PI, 5.0 + 4.0 * PI]));
        let w = AngleWindow::for_direction([Some(true), None], [0.3, 0.1, 1.0], 0.1);
        assert!(w.contains([3.5 * PI / 2.0 * 0.9, 0.3]));
        assert!(!w.contains([1.0, 0.3]));
        let w = AngleWindow::for_direction([Some(false), Some(true)], [0.3, -0.1, 1.0], 0.0);
        assert!(w.contains([1.0, 1.0]));
    }

    #[test]
    fn already_inside_waits_zero() {
        let p = params(1e-3);
        let th = crate::melnikov::theta_from_psi(0, [1.0, 1.5], [4.5, 4.5], &p).unwrap();
        let st = ReducedState::new([1.0, 1.5], th);
        let e = ergodize(&st, &AngleWindow::positive(), 0, &p, 100.0).unwrap();
        assert_eq!(e.t, 0.0);
    }

    #[test]
    fn irrational_line_reaches_window() {
        let p = ModelParams::new([0.3, 0.1, 1.0], [1.0, 2f64.sqrt()], 1e-3, PendulumSign::Plus).unwrap();
        let st = ReducedState::new([1.0, 1.0], [0.5, 0.3]);
        let bound = minkowski_bound(1e-3, 0.125);
        let e = ergodize(&st, &AngleWindow::positive(), 0, &p, bound).unwrap();
        assert!(e.t > 0.0 && e.t <= bound);
        assert!(AngleWindow::positive().contains(e.psi));
        assert_eq!(e.state.i, st.i);
    }

    #[test]
    fn closed_line_through_pi_needs_detour() {
        let p = params(1e-3);
        // ω = (1, 1) and ψ₂ − ψ₁ = π
        let th = crate::melnikov::theta_from_psi(0, [1.0, 1.0], [0.3, 0.3 + PI], &p).unwrap();
        let st = ReducedState::new([1.0, 1.0], th);
        match ergodize(&st, &AngleWindow::positive(), 0, &p, 1e4) {
            Err(InnerError::UseScatteringDetour { psi0 }) => assert!((psi0 - PI).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn double_resonance_guard() {
        let p = params(1e-2);
        let st = ReducedState::new([0.01, 0.0], [0.0, 0.0]);
        assert!(matches!(
            ergodize(&st, &AngleWindow::positive(), 0, &p, 10.0),
            Err(InnerError::DoubleResonance { .. })
        ));
    }
}
