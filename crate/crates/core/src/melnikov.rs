//! Melnikov potential, crest geometry and the reduced Poincaré function.
//!
//! Along the separatrix the first-order splitting potential is
//!
//! ```text
//! L(I, φ, s) = A₁ cos φ₁ + A₂ cos φ₂ + A₃ cos s,   A(ω, a) = 2πωa / sinh(πω/2)
//! ```
//!
//! with `A(0, a) = 4a`. The crest is the set where the derivative of `L`
//! along `(ω₁, ω₂, 1)` vanishes; for each slow angle `θ` the critical time
//! `τ*_j(I, θ)` is the intersection of the line `(θ − τω, −τ)` with the
//! `j`-th crest sheet, and `L*_j(I, θ) = L(I, θ − τ*ω, −τ*)`.
//!
//! Crest sheets are lifted as `ξ_j = πj + (−1)^{j+1} arcsin(S)` where
//! `S = Σ μ_k α(ω_k) sin φ_k`, so `ξ_0(I, 0) = 0` and `ξ_1(I, 0) = π`.

use thiserror::Error;

use crate::model::{separatrix, Branch, ModelParams};
use crate::quad::{integrate, QuadError};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MelnikovError {
    #[error("crest is not horizontal at I = {i:?} ({kind:?})")]
    NotHorizontal { i: [f64; 2], kind: CrestKind },
    #[error("crest equation has no solution: |sum mu alpha sin phi| = {value} > 1")]
    OutOfRange { value: f64 },
    #[error("tau* solver did not converge at I = {i:?}, theta = {theta:?} (residual {residual})")]
    NoConvergence {
        i: [f64; 2],
        theta: [f64; 2],
        residual: f64,
    },
}

/// Slow variables of the scattering map: actions and `θ = φ − sω`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReducedState<T> {
    pub i: [T; 2],
    pub theta: [T; 2],
}

impl<T: Real> ReducedState<T> {
    pub fn new(i: [T; 2], theta: [T; 2]) -> Self {
        ReducedState { i, theta }
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.i[0], self.i[1], self.theta[0], self.theta[1]]
    }

    pub fn from_array(x: &[T; 4]) -> Self {
        ReducedState {
            i: [x[0], x[1]],
            theta: [x[2], x[3]],
        }
    }

    pub fn wrapped(&self) -> Self {
        ReducedState {
            i: self.i,
            theta: self.theta.map(crate::scalar::wrap_angle),
        }
    }
}

/// `x / sinh x`, accurate near zero and free of overflow for large `|x|`.
fn x_over_sinh<T: Real>(x: T) -> T {
    let ax = x.abs();
    if ax < T::lit(1e-2) {
        let x2 = x * x;
        T::one() - x2 / T::lit(6.0) + T::lit(7.0 / 360.0) * x2 * x2 - T::lit(31.0 / 15120.0) * x2 * x2 * x2
    } else if ax < T::one() {
        x / x.sinh()
    } else {
        let e = (-ax).exp();
        T::lit(2.0) * ax * e / (T::one() - e * e)
    }
}

/// Derivative of `x / sinh x`.
fn d_x_over_sinh<T: Real>(x: T) -> T {
    if x.abs() < T::lit(1e-2) {
        let x2 = x * x;
        -x / T::lit(3.0) + T::lit(7.0 / 90.0) * x2 * x - T::lit(31.0 / 2520.0) * x2 * x2 * x
    } else {
        x_over_sinh(x) * (x.recip() - x.tanh().recip())
    }
}

/// `α(ω) = ω² sinh(π/2) / sinh(ωπ/2)`, extended by `α(0) = 0`. It is odd in ω.
pub fn alpha<T: Real>(omega: T) -> T {
    let x = T::FRAC_PI_2() * omega;
    T::FRAC_2_PI() * T::FRAC_PI_2().sinh() * omega * x_over_sinh(x)
}

/// Melnikov coefficient `A(ω, a) = 2πωa / sinh(πω/2)`; even in ω, `A(0, a) = 4a`.
pub fn coefficient<T: Real>(omega: T, a: T) -> T {
    T::lit(4.0) * a * x_over_sinh(T::FRAC_PI_2() * omega)
}

/// `dA/dω`, vanishing at ω = 0.
pub fn coefficient_derivative<T: Real>(omega: T, a: T) -> T {
    T::TAU() * a * d_x_over_sinh(T::FRAC_PI_2() * omega)
}

/// Coefficients `(A₁, A₂, A₃)` at actions `I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MelnikovCoeffs<T> {
    pub values: [T; 3],
    /// `dA_i/dω_i` for the two rotors.
    pub slopes: [T; 2],
}

pub fn melnikov_coeffs<T: Real>(i: [T; 2], params: &ModelParams<T>) -> MelnikovCoeffs<T> {
    let w = params.frequencies(i).omega;
    let a = params.a();
    MelnikovCoeffs {
        values: [
            coefficient(w[0], a[0]),
            coefficient(w[1], a[1]),
            coefficient(T::one(), a[2]),
        ],
        slopes: [coefficient_derivative(w[0], a[0]), coefficient_derivative(w[1], a[1])],
    }
}

pub fn melnikov_potential<T: Real>(i: [T; 2], phi: [T; 2], s: T, params: &ModelParams<T>) -> T {
    let c = melnikov_coeffs(i, params).values;
    c[0] * phi[0].cos() + c[1] * phi[1].cos() + c[2] * s.cos()
}

/// `∫ (cos q₀(ρ) − 1) g(φ + ρω, s + ρ) dρ` over `[−half_width, half_width]`
/// along the upper separatrix, by adaptive quadrature. The integrand decays
/// like `8e^{−2|ρ|}`; the result equals `−L(I, φ, s)` up to that tail.
pub fn melnikov_integral<T: Real>(
    i: [T; 2],
    phi: [T; 2],
    s: T,
    half_width: T,
    params: &ModelParams<T>,
) -> Result<T, QuadError> {
    let w = params.frequencies(i).omega;
    let f = |r: T| {
        let (_, q0) = separatrix(r, Branch::Plus);
        (q0.cos() - T::one()) * params.g([phi[0] + r * w[0], phi[1] + r * w[1]], s + r)
    };
    // split at the origin where the integrand peaks
    let tol = T::lit(1e-13);
    let left = integrate(f, -half_width, T::zero(), tol, tol, 500)?;
    let right = integrate(f, T::zero(), half_width, tol, tol, 500)?;
    Ok(left.value + right.value)
}

/// Sup of `|α(ω)|` and `|ω α(ω)|` over `[lo, hi]` by a uniform scan refined
/// with golden-section search around the best samples.
pub fn alpha_bounds<T: Real>(lo: T, hi: T, step: T) -> (T, T) {
    let n = ((hi - lo) / step).ceil().to_usize().unwrap_or(0).max(2);
    let grid = |k: usize| lo + (hi - lo) * T::from_usize(k).unwrap() / T::from_usize(n).unwrap();
    let refine = |f: &dyn Fn(T) -> T| -> T {
        let mut best_k = 0;
        let mut best = T::neg_infinity();
        for k in 0..=n {
            let v = f(grid(k));
            if v > best {
                best = v;
                best_k = k;
            }
        }
        let mut a = grid(best_k.saturating_sub(1));
        let mut b = grid((best_k + 1).min(n));
        let g = T::lit(0.618_033_988_749_894_9);
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best.max(f(T::lit(0.5) * (a + b)))
    };
    (
        refine(&|w: T| alpha(w).abs()),
        refine(&|w: T| (w * alpha(w)).abs()),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrestKind {
    Horizontal,
    /// Vertical crest separated along rotor `1` or `2`.
    Vertical(u8),
    Unseparated,
}

/// Crest classification and branch parametrizations at a fixed action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrestInfo<T> {
    pub kind: CrestKind,
    /// `α(ω_k) μ_k`.
    pub weights: [T; 2],
    pub omega: [T; 2],
    /// `1 − max_φ f_I(φ)`; nonpositive means NHIM lines may touch the crest.
    pub tangency_margin: T,
    pub tangency_possible: bool,
}

impl<T: Real> CrestInfo<T> {
    /// `(ξ_M, ξ_m)`: the `s`-values of the maximum and minimum sheets over `φ`.
    pub fn horizontal_sheets(&self, phi: [T; 2]) -> Option<(T, T)> {
        if self.kind != CrestKind::Horizontal {
            return None;
        }
        let s = self.weights[0] * phi[0].sin() + self.weights[1] * phi[1].sin();
        let r = s.max(-T::one()).min(T::one()).asin();
        Some((-r, T::PI() + r))
    }

    /// `(η_M, η_m)`: the separated angle `φ_i` as a function of the other
    /// rotor angle and `s`, for a vertical crest.
    pub fn vertical_sheets(&self, other_phi: T, s: T) -> Option<(T, T)> {
        let k = match self.kind {
            CrestKind::Vertical(k) => (k - 1) as usize,
            _ => return None,
        };
        let r = (self.weights[1 - k] * other_phi.sin() + s.sin()) / self.weights[k];
        let r = r.max(-T::one()).min(T::one()).asin();
        Some((-r, T::PI() + r))
    }
}

/// Decision tree: horizontal iff `|w₁| + |w₂| ≤ 1`, else vertical along `i`
/// iff `|w_j| + 1 ≤ |w_i|`, else unseparated (`w_k = α(ω_k) μ_k`).
pub fn classify_crest<T: Real>(i: [T; 2], params: &ModelParams<T>) -> CrestInfo<T> {
    let omega = params.frequencies(i).omega;
    let mu = params.mu();
    let w = [alpha(omega[0]) * mu[0], alpha(omega[1]) * mu[1]];
    let kind = if w[0].abs() + w[1].abs() <= T::one() {
        CrestKind::Horizontal
    } else if w[1].abs() + T::one() <= w[0].abs() {
        CrestKind::Vertical(1)
    } else if w[0].abs() + T::one() <= w[1].abs() {
        CrestKind::Vertical(2)
    } else {
        CrestKind::Unseparated
    };
    let margin = tangency_margin_from(w, omega);
    CrestInfo {
        kind,
        weights: w,
        omega,
        tangency_margin: margin,
        tangency_possible: margin <= T::zero(),
    }
}

fn horizontal_weights<T: Real>(i: [T; 2], params: &ModelParams<T>) -> Result<([T; 2], [T; 2]), MelnikovError> {
    let omega = params.frequencies(i).omega;
    let mu = params.mu();
    let w = [alpha(omega[0]) * mu[0], alpha(omega[1]) * mu[1]];
    if w[0].abs() + w[1].abs() > T::one() {
        return Err(MelnikovError::NotHorizontal {
            i: i.map(|v| v.as_f64()),
            kind: classify_crest(i, params).kind,
        });
    }
    Ok((w, omega))
}

fn lift_sign<T: Real>(j: i32) -> T {
    if j.rem_euclid(2) == 0 {
        -T::one()
    } else {
        T::one()
    }
}

/// Crest sheet `ξ_j(I, φ)` on the real lift.
pub fn crest_branch<T: Real>(j: i32, i: [T; 2], phi: [T; 2], params: &ModelParams<T>) -> Result<T, MelnikovError> {
    let (w, _) = horizontal_weights(i, params)?;
    let s = w[0] * phi[0].sin() + w[1] * phi[1].sin();
    if s.abs() > T::one() {
        return Err(MelnikovError::OutOfRange { value: s.as_f64() });
    }
    Ok(T::PI() * T::from_i32(j).unwrap() + lift_sign::<T>(j) * s.asin())
}

fn tangency_value<T: Real>(w: [T; 2], c: [T; 2], phi: [T; 2]) -> T {
    let u = c[0] * phi[0].cos() + c[1] * phi[1].cos();
    let v = w[0] * phi[0].sin() + w[1] * phi[1].sin();
    u * u + v * v
}

fn tangency_margin_from<T: Real>(w: [T; 2], omega: [T; 2]) -> T {
    let c = [omega[0] * w[0], omega[1] * w[1]];
    let n = 256;
    let step = T::TAU() / T::from_usize(n).unwrap();
    let mut best = T::neg_infinity();
    let mut arg = [T::zero(); 2];
    for a in 0..n {
        for b in 0..n {
            let phi = [step * T::from_usize(a).unwrap(), step * T::from_usize(b).unwrap()];
            let v = tangency_value(w, c, phi);
            if v > best {
                best = v;
                arg = phi;
            }
        }
    }
    let two = T::lit(2.0);
    for _ in 0..10 {
        let (s0, c0) = arg[0].sin_cos();
        let (s1, c1) = arg[1].sin_cos();
        let u = c[0] * c0 + c[1] * c1;
        let v = w[0] * s0 + w[1] * s1;
        let du = [-c[0] * s0, -c[1] * s1];
        let dv = [w[0] * c0, w[1] * c1];
        let g = [two * (u * du[0] + v * dv[0]), two * (u * du[1] + v * dv[1])];
        let diag = [
            two * (du[0] * du[0] + dv[0] * dv[0] - u * c[0] * c0 - v * w[0] * s0),
            two * (du[1] * du[1] + dv[1] * dv[1] - u * c[1] * c1 - v * w[1] * s1),
        ];
        let off = two * (du[0] * du[1] + dv[0] * dv[1]);
        let det = diag[0] * diag[1] - off * off;
        if det == T::zero() || !det.is_finite() {
            break;
        }
        let step = [
            (diag[1] * g[0] - off * g[1]) / det,
            (diag[0] * g[1] - off * g[0]) / det,
        ];
        let cand = [arg[0] - step[0], arg[1] - step[1]];
        let v = tangency_value(w, c, cand);
        if v >= best {
            best = v;
            arg = cand;
        } else {
            break;
        }
    }
    T::one() - best
}

/// `1 − max_φ f_I(φ)` with `f_I = (Σ ω_k α_k μ_k cos φ_k)² + (Σ α_k μ_k sin φ_k)²`.
pub fn tangency_margin<T: Real>(i: [T; 2], params: &ModelParams<T>) -> T {
    let omega = params.frequencies(i).omega;
    let mu = params.mu();
    tangency_margin_from([alpha(omega[0]) * mu[0], alpha(omega[1]) * mu[1]], omega)
}

/// Critical time on branch `j`, with `|τ + ξ_j(I, θ − τω)|` as residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauStar<T> {
    pub value: T,
    pub branch: i32,
    pub residual: T,
}

/// Solves `τ + ξ_j(I, θ − τω) = 0` by bisection on a rigorous bracket
/// followed by Newton polishing.
pub fn solve_tau_star<T: Real>(j: i32, state: &ReducedState<T>, params: &ModelParams<T>) -> Result<TauStar<T>, MelnikovError> {
    let (w, omega) = horizontal_weights(state.i, params)?;
    let th = state.theta;
    let sign = lift_sign::<T>(j);
    let base = T::PI() * T::from_i32(j).unwrap();
    let g_and_dg = |tau: T| -> (T, T) {
        let p0 = th[0] - tau * omega[0];
        let p1 = th[1] - tau * omega[1];
        let (s0, c0) = p0.sin_cos();
        let (s1, c1) = p1.sin_cos();
        let s = (w[0] * s0 + w[1] * s1).max(-T::one()).min(T::one());
        let g = tau + base + sign * s.asin();
        let ds = -(w[0] * c0 * omega[0] + w[1] * c1 * omega[1]);
        let root = (T::one() - s * s).sqrt();
        (g, T::one() + sign * ds / root)
    };
    let kappa = (w[0].abs() + w[1].abs()).min(T::one()).asin();
    let pad = T::lit(1e-9) * (T::one() + base.abs());
    let mut lo = -base - kappa - pad;
    let mut hi = -base + kappa + pad;
    let coarse = T::lit(1e-6).max(T::epsilon() * T::lit(64.0));
    while hi - lo > coarse {
        let mid = T::lit(0.5) * (lo + hi);
        if g_and_dg(mid).0 < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut tau = T::lit(0.5) * (lo + hi);
    let fine = T::lit(1e-14).max(T::epsilon() * T::lit(4.0)) * (T::one() + tau.abs());
    for _ in 0..50 {
        let (g, dg) = g_and_dg(tau);
        if g == T::zero() {
            break;
        }
        if g < T::zero() {
            lo = lo.max(tau);
        } else {
            hi = hi.min(tau);
        }
        let newton = tau - g / dg;
        let bisected = !(newton >= lo && newton <= hi) || !newton.is_finite();
        let next = if bisected { T::lit(0.5) * (lo + hi) } else { newton };
        let delta = (next - tau).abs();
        tau = next;
        if !bisected && delta <= fine {
            break;
        }
    }
    let residual = g_and_dg(tau).0.abs();
    let accept = T::lit(1e-12).max(T::epsilon() * T::lit(1e3)) * (T::one() + tau.abs());
    if !(residual <= accept) {
        return Err(MelnikovError::NoConvergence {
            i: state.i.map(|v| v.as_f64()),
            theta: th.map(|v| v.as_f64()),
            residual: residual.as_f64(),
        });
    }
    Ok(TauStar {
        value: tau,
        branch: j,
        residual,
    })
}

/// Value and first derivatives of `L*_j` at a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareEval<T> {
    pub value: T,
    pub d_action: [T; 2],
    pub d_angle: [T; 2],
    pub tau: TauStar<T>,
    /// `ψ = θ − τ* ω`.
    pub psi: [T; 2],
    pub coeffs: MelnikovCoeffs<T>,
}

/// Evaluates `L*_j` and its gradient. Since `τ*` is a critical point in τ,
/// derivatives of `τ*` drop out of the chain rule.
pub fn evaluate_reduced<T: Real>(j: i32, state: &ReducedState<T>, params: &ModelParams<T>) -> Result<PoincareEval<T>, MelnikovError> {
    let tau = solve_tau_star(j, state, params)?;
    let t = tau.value;
    let om = params.big_omega();
    let omega = params.frequencies(state.i).omega;
    let coeffs = melnikov_coeffs(state.i, params);
    let a = coeffs.values;
    let psi = [state.theta[0] - omega[0] * t, state.theta[1] - omega[1] * t];
    let (s0, c0) = psi[0].sin_cos();
    let (s1, c1) = psi[1].sin_cos();
    let value = a[0] * c0 + a[1] * c1 + a[2] * t.cos();
    let d_angle = [-a[0] * s0, -a[1] * s1];
    let d_action = [
        om[0] * (coeffs.slopes[0] * c0 + t * a[0] * s0),
        om[1] * (coeffs.slopes[1] * c1 + t * a[1] * s1),
    ];
    Ok(PoincareEval {
        value,
        d_action,
        d_angle,
        tau,
        psi,
        coeffs,
    })
}

pub fn reduced_poincare<T: Real>(j: i32, state: &ReducedState<T>, params: &ModelParams<T>) -> Result<T, MelnikovError> {
    Ok(evaluate_reduced(j, state, params)?.value)
}

/// `ψ_j = θ − τ*_j(I, θ) ω`.
pub fn psi<T: Real>(j: i32, state: &ReducedState<T>, params: &ModelParams<T>) -> Result<[T; 2], MelnikovError> {
    let t = solve_tau_star(j, state, params)?.value;
    let omega = params.frequencies(state.i).omega;
    Ok([state.theta[0] - omega[0] * t, state.theta[1] - omega[1] * t])
}

/// Inverse of [`psi`]: `θ = ψ − ξ_j(I, ψ) ω`.
pub fn theta_from_psi<T: Real>(j: i32, i: [T; 2], psi: [T; 2], params: &ModelParams<T>) -> Result<[T; 2], MelnikovError> {
    let xi = crest_branch(j, i, psi, params)?;
    let omega = params.frequencies(i).omega;
    Ok([psi[0] - xi * omega[0], psi[1] - xi * omega[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PendulumSign;
    use std::f64::consts::PI;

    fn params(a: [f64; 3]) -> ModelParams<f64> {
        ModelParams::new(a, [1.0, 1.0], 1e-3, PendulumSign::Plus).unwrap()
    }

    #[test]
    fn integral_matches_closed_form() {
        let p = ModelParams::new([0.3, 0.1, 1.0], [1.0, 1.0], 1e-3, PendulumSign::Plus).unwrap();
        for (i, phi, s) in [([1.0, 1.0], [0.3, 2.0], 0.7), ([-2.5, 0.4], [4.0, 1.0], 5.5), ([0.0, 3.0], [0.0, 0.0], 0.0)] {
            let quad: f64 = melnikov_integral(i, phi, s, 40.0, &p).unwrap();
            assert!((quad + melnikov_potential(i, phi, s, &p)).abs() < 1e-10, "{quad}");
        }
    }

    #[test]
    fn alpha_values() {
        assert!((alpha(1.0f64) - 1.0).abs() < 1e-15);
        assert_eq!(alpha(0.0f64), 0.0);
        assert!((alpha(-2.5f64) + alpha(2.5)).abs() < 1e-15);
        // continuity across the series switch
        for &x in &[0.99e-2, 1.01e-2] {
            let w = x / std::f64::consts::FRAC_PI_2;
            let direct = w * w * (PI / 2.0).sinh() / (w * PI / 2.0).sinh();
            assert!((alpha(w) - direct).abs() < 1e-14 * direct.abs().max(1e-300) + 1e-18);
        }
    }

    #[test]
    fn coefficient_values() {
        assert_eq!(coefficient(0.0f64, 0.3), 1.2);
        assert!((coefficient(1.0f64, 1.0) - 2.0 * PI / (PI / 2.0).sinh()).abs() < 1e-14);
        assert!((coefficient(1.0f64, 1.0) - 2.7303).abs() < 1e-4);
        assert_eq!(coefficient(-3.7f64, 0.2), coefficient(3.7, 0.2));
        assert!(coefficient(500.0f64, 1.0) >= 0.0);
        assert_eq!(coefficient_derivative(0.0f64, 1.0), 0.0);
    }

    #[test]
    fn slope_matches_difference_quotient() {
        for &w in &[-4.0f64, -0.3, 1e-5, 0.006, 0.0064, 0.7, 2.0, 9.0] {
            let h = 1e-5;
            let fd = (coefficient(w + h, 0.3) - coefficient(w - h, 0.3)) / (2.0 * h);
            let an = coefficient_derivative(w, 0.3);
            assert!((fd - an).abs() < 1e-9, "w={w}: {fd} vs {an}");
        }
    }

    #[test]
    fn potential_extremes() {
        let p = params([0.3, 0.1, 1.0]);
        let i = [0.4, -1.3];
        let c = melnikov_coeffs(i, &p).values;
        assert!((melnikov_potential(i, [0.0, 0.0], 0.0, &p) - (c[0] + c[1] + c[2])).abs() < 1e-15);
        assert!((melnikov_potential(i, [PI, PI], PI, &p) + (c[0] + c[1] + c[2])).abs() < 1e-15);
    }

    #[test]
    fn alpha_bounds_match_extended_precision() {
        // maxima sit at ω ≈ 1.2191 and ω ≈ 1.9001, slightly above 1.03 and 1.6
        let (a, wa) = alpha_bounds(-20.0f64, 20.0, 1e-3);
        assert!((a - 1.030_289_113_330_254_5).abs() < 1e-12, "{a}");
        assert!((wa - 1.600_361_485_543_587_6).abs() < 1e-12, "{wa}");
    }

    #[test]
    fn crest_classes_for_figure_parameters() {
        let at = |mu1: f64, mu2: f64| classify_crest([1.0, 1.0], &params([mu1, mu2, 1.0])).kind;
        assert_eq!(at(0.4, 0.4), CrestKind::Horizontal);
        assert_eq!(at(1.7, 0.4), CrestKind::Vertical(1));
        assert_eq!(at(0.4, 1.7), CrestKind::Vertical(2));
        assert_eq!(at(0.8, 0.4), CrestKind::Unseparated);
    }

    #[test]
    fn sheets_are_on_the_crest() {
        let info = classify_crest([1.0, 1.0], &params([0.4, 0.4, 1.0]));
        let phi = [0.7, 2.9];
        let (m, n) = info.horizontal_sheets(phi).unwrap();
        for s in [m, n] {
            let r = info.weights[0] * phi[0].sin() + info.weights[1] * phi[1].sin() + s.sin();
            assert!(r.abs() < 1e-14);
        }
        let info = classify_crest([1.0, 1.0], &params([1.7, 0.4, 1.0]));
        let (m, n) = info.vertical_sheets(1.1, 0.3).unwrap();
        for p1 in [m, n] {
            let r = info.weights[0] * p1.sin() + info.weights[1] * 1.1f64.sin() + 0.3f64.sin();
            assert!(r.abs() < 1e-14);
        }
        assert!(info.horizontal_sheets(phi).is_none());
    }

    #[test]
    fn crest_branch_examples() {
        let p = params([0.2, 0.3, 1.0]);
        assert_eq!(crest_branch(0, [1.0, 1.0], [0.0, 0.0], &p).unwrap(), 0.0);
        assert!((crest_branch(1, [1.0, 1.0], [0.0, 0.0], &p).unwrap() - PI).abs() < 1e-15);
        let x = crest_branch(0, [1.0, 1.0], [PI / 2.0, PI / 2.0], &p).unwrap();
        assert!((x + 0.5f64.asin()).abs() < 1e-14);
        let q = params([1.7, 0.4, 1.0]);
        assert!(matches!(crest_branch(0, [1.0, 1.0], [0.0, 0.0], &q), Err(MelnikovError::NotHorizontal { .. })));
    }

    #[test]
    fn tangency_margins() {
        let p = params([0.25, 0.25, 1.0]);
        assert!(tangency_margin([3.0, -2.0], &p) > 0.0);
        let p = params([0.0, 0.0, 1.0]);
        assert_eq!(tangency_margin([1.0, 2.0], &p), 1.0);
        let p = params([0.4, 0.4, 1.0]);
        let worst = (0..=40)
            .flat_map(|a| (0..=40).map(move |b| [a as f64 * 0.1, b as f64 * 0.1]))
            .map(|i| tangency_margin(i, &p))
            .fold(f64::INFINITY, f64::min);
        assert!(worst < 0.0, "{worst}");
    }

    #[test]
    fn tau_star_at_zero_action() {
        let p = params([0.3, 0.1, 1.0]);
        let st = ReducedState::new([0.0, 0.0], [1.0, 2.0]);
        assert_eq!(solve_tau_star(0, &st, &p).unwrap().value, 0.0);
        assert!((solve_tau_star(1, &st, &p).unwrap().value + PI).abs() < 1e-14);
    }

    #[test]
    fn reduced_poincare_examples() {
        let p = params([0.3, 0.1, 1.0]);
        let v = reduced_poincare(0, &ReducedState::new([0.0, 0.0], [PI / 2.0, PI / 2.0]), &p).unwrap();
        assert!((v - coefficient(1.0, 1.0)).abs() < 1e-14);
        let v = reduced_poincare(0, &ReducedState::new([0.0, 0.0], [0.0, 0.0]), &p).unwrap();
        assert!((v - (1.2 + 0.4 + coefficient(1.0, 1.0))).abs() < 1e-14);
    }

    #[test]
    fn psi_inverse() {
        let p = params([0.2, 0.3, 1.0]);
        let st = ReducedState::new([1.0, 1.0], [5.0 * PI / 4.0, 5.0 * PI / 4.0]);
        for j in [0, 1] {
            let ps = psi(j, &st, &p).unwrap();
            let th = theta_from_psi(j, st.i, ps, &p).unwrap();
            assert!((th[0] - st.theta[0]).abs() < 1e-12 && (th[1] - st.theta[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn f32_instantiation() {
        let p = ModelParams::new([0.2f32, 0.3, 1.0], [1.0, 1.0], 1e-3, PendulumSign::Plus).unwrap();
        let st = ReducedState::new([1.0f32, 1.0], [3.9, 3.9]);
        let t32 = solve_tau_star(0, &st, &p).unwrap().value;
        let t64 = solve_tau_star(0, &ReducedState::new([1.0, 1.0], [3.9, 3.9]), &params([0.2, 0.3, 1.0]))
            .unwrap()
            .value;
        assert!((t32 as f64 - t64).abs() < 1e-5);
        assert_eq!(classify_crest([1.0f32, 1.0], &p).kind, CrestKind::Horizontal);
    }
}
