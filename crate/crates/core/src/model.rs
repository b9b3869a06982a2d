//! The pendulum + two-rotor Hamiltonian
//!
//! ```text
//! H = ±(p²/2 + cos q − 1) + Ω₁I₁²/2 + Ω₂I₂²/2 + ε cos q (a₁ cos φ₁ + a₂ cos φ₂ + a₃ cos s)
//! ```
//!
//! with `s` the (lifted) time angle. Hamilton's equations use `ṗ = −∂H/∂q`,
//! `q̇ = ∂H/∂p`, so the `+` sign gives the unperturbed `q̇ = p`, `ṗ = sin q`.

use thiserror::Error;

use crate::scalar::Real;

/// Sufficient bound on `|μ₁| + |μ₂|` for transversal, tangency-free crests.
pub const HORIZONTAL_SAFE_BOUND: f64 = 0.625;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("diffusion regime needs a1*a2*a3 != 0 (got a = {a:?})")]
    DegenerateAmplitudes { a: [f64; 3] },
    #[error("parameters are outside the horizontal-safe regime (|mu1|+|mu2| = {mu_sum} >= 0.625)")]
    NotHorizontalSafe { mu_sum: f64 },
}

/// The `±` in front of the pendulum energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PendulumSign {
    #[default]
    Plus,
    Minus,
}

impl PendulumSign {
    pub fn value<T: Real>(self) -> T {
        match self {
            PendulumSign::Plus => T::one(),
            PendulumSign::Minus => -T::one(),
        }
    }
}

/// Validated model parameters. Derived quantities are computed at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    a: [T; 3],
    big_omega: [T; 2],
    eps: T,
    sign: PendulumSign,
    mu: [T; 2],
    horizontal_safe: bool,
}

impl<T: Real> ModelParams<T> {
    pub fn new(a: [T; 3], big_omega: [T; 2], eps: T, sign: PendulumSign) -> Result<Self, ModelError> {
        let names = ["a1", "a2", "a3"];
        for (k, v) in a.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::InvalidParameter {
                    name: names[k],
                    value: v.as_f64(),
                    reason: "must be finite",
                });
            }
        }
        if a[2] == T::zero() {
            return Err(ModelError::InvalidParameter {
                name: "a3",
                value: 0.0,
                reason: "must be nonzero (mu_i = a_i/a3)",
            });
        }
        for (k, v) in big_omega.iter().enumerate() {
            if !(v.is_finite() && *v > T::zero()) {
                return Err(ModelError::InvalidParameter {
                    name: ["Omega1", "Omega2"][k],
                    value: v.as_f64(),
                    reason: "must be finite and > 0",
                });
            }
        }
        if !(eps.is_finite() && eps >= T::zero()) {
            return Err(ModelError::InvalidParameter {
                name: "eps",
                value: eps.as_f64(),
                reason: "must be finite and >= 0",
            });
        }
        let mu = [a[0] / a[2], a[1] / a[2]];
        let horizontal_safe = mu[0].abs() + mu[1].abs() < T::lit(HORIZONTAL_SAFE_BOUND);
        Ok(ModelParams {
            a,
            big_omega,
            eps,
            sign,
            mu,
            horizontal_safe,
        })
    }

    /// Same parameters with a different perturbation size.
    pub fn with_eps(&self, eps: T) -> Result<Self, ModelError> {
        Self::new(self.a, self.big_omega, eps, self.sign)
    }

    pub fn a(&self) -> [T; 3] {
        self.a
    }
    pub fn big_omega(&self) -> [T; 2] {
        self.big_omega
    }
    pub fn eps(&self) -> T {
        self.eps
    }
    pub fn sign(&self) -> PendulumSign {
        self.sign
    }
    pub fn mu(&self) -> [T; 2] {
        self.mu
    }
    pub fn horizontal_safe(&self) -> bool {
        self.horizontal_safe
    }

    /// Checks the hypotheses of the diffusion theorem: nonzero amplitudes and
    /// the horizontal-safe regime.
    pub fn require_diffusion_regime(&self) -> Result<(), ModelError> {
        if self.a.iter().any(|v| *v == T::zero()) {
            return Err(ModelError::DegenerateAmplitudes {
                a: self.a.map(|v| v.as_f64()),
            });
        }
        self.require_horizontal_safe()
    }

    pub fn require_horizontal_safe(&self) -> Result<(), ModelError> {
        if self.horizontal_safe {
            Ok(())
        } else {
            Err(ModelError::NotHorizontalSafe {
                mu_sum: (self.mu[0].abs() + self.mu[1].abs()).as_f64(),
            })
        }
    }

    /// Rotor frequencies `ω_i = Ω_i I_i`.
    pub fn frequencies(&self, i: [T; 2]) -> Frequencies<T> {
        Frequencies {
            omega: [self.big_omega[0] * i[0], self.big_omega[1] * i[1]],
        }
    }

    /// The perturbation `g(φ, s) = a₁ cos φ₁ + a₂ cos φ₂ + a₃ cos s`.
    pub fn g(&self, phi: [T; 2], s: T) -> T {
        self.a[0] * phi[0].cos() + self.a[1] * phi[1].cos() + self.a[2] * s.cos()
    }
}

/// Rotor frequencies at a given action; never cached across action updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequencies<T> {
    pub omega: [T; 2],
}

impl<T: Real> Frequencies<T> {
    /// `(ω₁, ω₂, 1)`.
    pub fn tilde(&self) -> [T; 3] {
        [self.omega[0], self.omega[1], T::one()]
    }
}

/// Phase point `(p, q, I₁, I₂, φ₁, φ₂, s)`. Angles are kept on their lift.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FullState<T> {
    pub p: T,
    pub q: T,
    pub i: [T; 2],
    pub phi: [T; 2],
    pub s: T,
}

impl<T: Real> FullState<T> {
    pub fn new(p: T, q: T, i: [T; 2], phi: [T; 2], s: T) -> Self {
        FullState { p, q, i, phi, s }
    }

    pub fn to_array(&self) -> [T; 7] {
        [self.p, self.q, self.i[0], self.i[1], self.phi[0], self.phi[1], self.s]
    }

    pub fn from_array(x: &[T; 7]) -> Self {
        FullState {
            p: x[0],
            q: x[1],
            i: [x[2], x[3]],
            phi: [x[4], x[5]],
            s: x[6],
        }
    }

    /// Copy with all angles reduced to `[0, 2π)`.
    pub fn wrapped(&self) -> Self {
        use crate::scalar::wrap_angle;
        FullState {
            p: self.p,
            q: wrap_angle(self.q),
            i: self.i,
            phi: self.phi.map(wrap_angle),
            s: wrap_angle(self.s),
        }
    }
}

pub fn hamiltonian<T: Real>(x: &FullState<T>, params: &ModelParams<T>) -> T {
    let sigma: T = params.sign.value();
    let half = T::lit(0.5);
    let om = params.big_omega;
    sigma * (half * x.p * x.p + x.q.cos() - T::one())
        + half * om[0] * x.i[0] * x.i[0]
        + half * om[1] * x.i[1] * x.i[1]
        + params.eps * x.q.cos() * params.g(x.phi, x.s)
}

/// Hamilton's equations; `ṡ = 1`.
pub fn vector_field<T: Real>(x: &FullState<T>, params: &ModelParams<T>) -> FullState<T> {
    let sigma: T = params.sign.value();
    let eps = params.eps;
    let (sq, cq) = x.q.sin_cos();
    let a = params.a;
    FullState {
        p: sigma * sq + eps * sq * params.g(x.phi, x.s),
        q: sigma * x.p,
        i: [
            eps * a[0] * x.phi[0].sin() * cq,
            eps * a[1] * x.phi[1].sin() * cq,
        ],
        phi: [params.big_omega[0] * x.i[0], params.big_omega[1] * x.i[1]],
        s: T::one(),
    }
}

/// Array form of [`vector_field`] for the integrator.
pub fn vector_field_array<T: Real>(x: &[T; 7], params: &ModelParams<T>) -> [T; 7] {
    vector_field(&FullState::from_array(x), params).to_array()
}

/// Which half of the separatrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

/// Unperturbed homoclinic orbit `(±2/cosh τ, 4 arctan e^{±τ})`.
pub fn separatrix<T: Real>(tau: T, branch: Branch) -> (T, T) {
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    match branch {
        Branch::Plus => (two / tau.cosh(), four * tau.exp().atan()),
        Branch::Minus => (-two / tau.cosh(), four * (-tau).exp().atan()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params(eps: f64) -> ModelParams<f64> {
        ModelParams::new([0.3, 0.1, 1.0], [1.0, 1.5], eps, PendulumSign::Plus).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let p = params(0.01);
        let origin = FullState::default();
        assert!((hamiltonian(&origin, &p) - 0.01 * 1.4).abs() < 1e-15);
        let p0 = params(0.0);
        let sep = FullState::new(2.0, PI, [0.0, 0.0], [0.0, 0.0], 0.0);
        assert!(hamiltonian(&sep, &p0).abs() < 1e-15);
        let rot = FullState::new(0.0, 0.0, [1.2, -0.7], [0.4, 2.0], 3.0);
        let expect = 0.5 * 1.2 * 1.2 + 0.5 * 1.5 * 0.49;
        assert!((hamiltonian(&rot, &p0) - expect).abs() < 1e-15);
    }

    #[test]
    fn field_examples() {
        let p0 = params(0.0);
        let x = FullState::new(1.0, PI / 2.0, [0.0, 0.0], [0.0, 0.0], 0.0);
        let f = vector_field(&x, &p0);
        assert!((f.p - 1.0).abs() < 1e-15 && (f.q - 1.0).abs() < 1e-15);
        let p = params(0.2);
        let nhim = FullState::new(0.0, 0.0, [0.3, -2.0], [1.0, 4.0], 7.0);
        let f = vector_field(&nhim, &p);
        assert_eq!((f.p, f.q), (0.0, 0.0));
        assert_eq!(f.s, 1.0);
    }

    #[test]
    fn field_is_minus_gradient_of_h() {
        let p = params(0.05);
        let x = FullState::new(0.4, 1.3, [0.7, -0.2], [2.1, 0.3], 0.9);
        let f = vector_field(&x, &p);
        let h = 1e-6;
        let d = |k: usize| {
            let mut xp = x.to_array();
            let mut xm = x.to_array();
            xp[k] += h;
            xm[k] -= h;
            (hamiltonian(&FullState::from_array(&xp), &p) - hamiltonian(&FullState::from_array(&xm), &p)) / (2.0 * h)
        };
        assert!((f.q - d(0)).abs() < 1e-8);
        assert!((f.p + d(1)).abs() < 1e-8);
        assert!((f.phi[0] - d(2)).abs() < 1e-8);
        assert!((f.i[0] + d(4)).abs() < 1e-8);
        assert!((f.i[1] + d(5)).abs() < 1e-8);
    }

    #[test]
    fn minus_sign_flips_pendulum_only() {
        let p = ModelParams::new([0.3, 0.1, 1.0], [1.0, 1.0], 0.0, PendulumSign::Minus).unwrap();
        let x = FullState::new(1.0, PI / 2.0, [1.0, 0.0], [0.0, 0.0], 0.0);
        let f = vector_field(&x, &p);
        assert_eq!((f.p, f.q), (-1.0, -1.0));
        assert_eq!(f.phi[0], 1.0);
    }

    #[test]
    fn separatrix_examples() {
        let (p, q) = separatrix(0.0f64, Branch::Plus);
        assert!((p - 2.0).abs() < 1e-15 && (q - PI).abs() < 1e-15);
        let (p, q) = separatrix(40.0f64, Branch::Plus);
        assert!(p < 1e-16 && (q - 2.0 * PI).abs() < 1e-15);
        let p0 = params(0.0);
        for &t in &[-5.0, -1.0, 0.0, 1.0, 5.0] {
            for b in [Branch::Plus, Branch::Minus] {
                let (p, q) = separatrix(t, b);
                let x = FullState::new(p, q, [0.0, 0.0], [0.0, 0.0], 0.0);
                assert!(hamiltonian(&x, &p0).abs() < 1e-14);
            }
        }
        let (pp, qp) = separatrix(1.7f64, Branch::Plus);
        let (pm, qm) = separatrix(-1.7f64, Branch::Plus);
        assert!((pp - pm).abs() < 1e-15);
        assert!((qm - (2.0 * PI - qp)).abs() < 1e-14);
    }

    #[test]
    fn validation() {
        assert!(ModelParams::new([0.3, 0.1, 0.0], [1.0, 1.0], 0.0, PendulumSign::Plus).is_err());
        assert!(ModelParams::new([0.3, 0.1, 1.0], [0.0, 1.0], 0.0, PendulumSign::Plus).is_err());
        assert!(ModelParams::new([0.3, 0.1, 1.0], [1.0, 1.0], -1e-3, PendulumSign::Plus).is_err());
        let p = ModelParams::new([0.0, 0.1, 1.0], [1.0, 1.0], 1e-3, PendulumSign::Plus).unwrap();
        assert!(matches!(p.require_diffusion_regime(), Err(ModelError::DegenerateAmplitudes { .. })));
        let p = ModelParams::new([0.4, 0.3, 1.0], [1.0, 1.0], 1e-3, PendulumSign::Plus).unwrap();
        assert!(!p.horizontal_safe());
        let p = ModelParams::new([0.3, -0.2, 0.5], [1.0, 1.0], 1e-3, PendulumSign::Plus).unwrap();
        assert_eq!(p.mu(), [0.6, -0.4]);
        assert!(!p.horizontal_safe());
    }

    #[test]
    fn generic_in_f32() {
        let p = ModelParams::new([0.3f32, 0.1, 1.0], [1.0, 1.0], 0.0, PendulumSign::Plus).unwrap();
        let (ps, qs) = separatrix(0.5f32, Branch::Plus);
        let x = FullState::new(ps, qs, [0.0, 0.0], [0.0, 0.0], 0.0);
        assert!(hamiltonian(&x, &p).abs() < 1e-6);
    }
}
