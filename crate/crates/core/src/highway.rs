//! Highways: orbits of the scattering flow on the level `L*₀ = A₃` along
//! which the actions drift without bound.
//!
//! Seeds come from the large-|ω| asymptotics of the invariant graph
//! `θ = Θ(I)` and are then transported by the flow.

use thiserror::Error;

use crate::melnikov::{coefficient, evaluate_reduced, melnikov_coeffs, solve_tau_star, MelnikovError, ReducedState};
use crate::model::{ModelError, ModelParams};
use crate::ode::{integrate_to_event, integrate_with_events, EventDirection, EventSpec, IntegratorConfig, OdeError};
use crate::scalar::{angle_diff, Real};
use crate::scattering::flow_rhs;

const BRANCH: i32 = 0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HighwayError {
    #[error(transparent)]
    Melnikov(#[from] MelnikovError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("asymptotic seed misses the level by {residual:e}")]
    AsymptoticsUnreliable { residual: f64 },
    #[error("arccos argument {name} = {value} outside [-1, 1] at Ibar = {ibar}")]
    DomainError { ibar: f64, name: &'static str, value: f64 },
    #[error("|L*0 - A3| reached {drift:e} at t = {t}")]
    LevelDrift { drift: f64, t: f64 },
    #[error("symmetric formulas need a1 = a2 and Omega1 = Omega2")]
    NotSymmetric,
    #[error("section I{component} = {value} not reached")]
    SectionNotReached { component: usize, value: f64 },
    #[error("level projection did not converge (residual {residual:e})")]
    ProjectionFailed { residual: f64 },
}

/// Angle quadrant of a Highway sheet: `Lower` near `π/2` (`θ̄_h` in the
/// symmetric formulas) and `Upper` near `3π/2` (`θ̄_H`). `Upper` pushes the
/// actions forward in time when the amplitudes are positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighwayBranch {
    Lower,
    Upper,
}

impl HighwayBranch {
    fn centre<T: Real>(self) -> T {
        match self {
            HighwayBranch::Lower => T::FRAC_PI_2(),
            HighwayBranch::Upper => T::lit(1.5) * T::PI(),
        }
    }

    fn sign<T: Real>(self) -> T {
        match self {
            HighwayBranch::Lower => T::one(),
            HighwayBranch::Upper => -T::one(),
        }
    }

    /// Classifies an angle by the nearer centre.
    pub fn of_angle<T: Real>(theta: T) -> Self {
        if theta.sin() >= T::zero() {
            HighwayBranch::Lower
        } else {
            HighwayBranch::Upper
        }
    }
}

/// The Highway level `A₃`.
pub fn highway_level<T: Real>(params: &ModelParams<T>) -> T {
    coefficient(T::one(), params.a()[2])
}

/// `L*₀(x) − A₃`.
pub fn level_residual<T: Real>(state: &ReducedState<T>, params: &ModelParams<T>) -> Result<T, HighwayError> {
    Ok(evaluate_reduced(BRANCH, state, params)?.value - highway_level(params))
}

/// Asymptotic graph `Θ_i = c_i ∓ sinh(π/2) μ_i |ω_i|³ e^{−π|ω_i|/2}`, without
/// projection onto the level.
pub fn asymptotic_theta<T: Real>(i: [T; 2], branches: [HighwayBranch; 2], params: &ModelParams<T>) -> [T; 2] {
    let omega = params.frequencies(i).omega;
    let mu = params.mu();
    let s = T::FRAC_PI_2().sinh();
    let mut out = [T::zero(); 2];
    for k in 0..2 {
        let w = omega[k].abs();
        out[k] = branches[k].centre::<T>() + branches[k].sign::<T>() * s * mu[k] * w * w * w * (-T::FRAC_PI_2() * w).exp();
    }
    out
}

/// Highway seed at action `i`. Fails when the asymptotic graph misses the
/// level by more than `1e-4`.
pub fn highway_seed<T: Real>(i: [T; 2], branches: [HighwayBranch; 2], params: &ModelParams<T>) -> Result<ReducedState<T>, HighwayError> {
    let state = ReducedState::new(i, asymptotic_theta(i, branches, params));
    let r = level_residual(&state, params)?;
    if !(r.abs() <= T::lit(1e-4)) {
        return Err(HighwayError::AsymptoticsUnreliable { residual: r.as_f64() });
    }
    Ok(state)
}

/// Moves `θ` along `∇_θ L*₀` until `L*₀ = A₃` to rounding.
pub fn project_to_level<T: Real>(state: &ReducedState<T>, params: &ModelParams<T>) -> Result<ReducedState<T>, HighwayError> {
    let level = highway_level(params);
    let mut x = *state;
    let mut r = T::infinity();
    for _ in 0..50 {
        let ev = evaluate_reduced(BRANCH, &x, params)?;
        r = ev.value - level;
        if r.abs() <= T::lit(4.0) * T::epsilon() * level.abs() {
            return Ok(x);
        }
        let g = ev.d_angle;
        let n2 = g[0] * g[0] + g[1] * g[1];
        if n2 == T::zero() {
            break;
        }
        x.theta[0] -= r * g[0] / n2;
        x.theta[1] -= r * g[1] / n2;
    }
    if r.abs() <= T::lit(1e-13) * (T::one() + level.abs()) {
        Ok(x)
    } else {
        Err(HighwayError::ProjectionFailed { residual: r.as_f64() })
    }
}

/// Highway angle `θ̄(Ī)` for `a₁ = a₂`, `Ω₁ = Ω₂` on the diagonal `I₁ = I₂ = Ī`.
///
/// With `A = 2A₁(ω̄)`, `X = A₃(1 − f)/A` and
/// `f = (A₃²(ω̄²+1) − ω̄²A²) / (A₃(ω̄²A₃ + √(A₃² + (ω̄²−1)ω̄²A²)))`
/// (which reduces to `1 − A²/(2A₃²)` at `ω̄ = ±1`), the sheets are
/// `θ̄_h = arccos X + |ω̄| arccos f` and `θ̄_H = −θ̄_h`.
pub fn symmetric_highway_theta<T: Real>(ibar: T, branch: HighwayBranch, params: &ModelParams<T>) -> Result<T, HighwayError> {
    let a = params.a();
    let om = params.big_omega();
    if a[0] != a[1] || om[0] != om[1] {
        return Err(HighwayError::NotSymmetric);
    }
    let w = params.frequencies([ibar, ibar]).omega[0];
    let big_a = T::lit(2.0) * coefficient(w, a[0]);
    let a3 = highway_level(params);
    let w2 = w * w;
    let disc = a3 * a3 + (w2 - T::one()) * w2 * big_a * big_a;
    if disc < T::zero() {
        return Err(HighwayError::DomainError {
            ibar: ibar.as_f64(),
            name: "discriminant",
            value: disc.as_f64(),
        });
    }
    let f = (a3 * a3 * (w2 + T::one()) - w2 * big_a * big_a) / (a3 * (w2 * a3 + disc.sqrt()));
    let x = if big_a == T::zero() {
        T::zero()
    } else {
        a3 * (T::one() - f) / big_a
    };
    let slack = T::lit(1e-12);
    for (name, v) in [("f", f), ("X", x)] {
        if v.abs() > T::one() + slack || !v.is_finite() {
            return Err(HighwayError::DomainError {
                ibar: ibar.as_f64(),
                name,
                value: v.as_f64(),
            });
        }
    }
    let clamp = |v: T| v.max(-T::one()).min(T::one());
    let h = clamp(x).acos() + w.abs() * clamp(f).acos();
    Ok(match branch {
        HighwayBranch::Lower => h,
        HighwayBranch::Upper => -h,
    })
}

/// `I_component = value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section<T> {
    pub component: usize,
    pub value: T,
}

impl<T: Real> Section<T> {
    pub fn new(component: usize, value: T) -> Self {
        assert!(component < 2, "action component must be 0 or 1");
        Section { component, value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceConfig<T> {
    /// Crossings recorded along the way.
    pub sections: Vec<Section<T>>,
    /// Section whose first crossing ends the trace.
    pub stop: Section<T>,
    /// Signed time limit; negative traces backward.
    pub t_max: T,
    pub max_drift: T,
}

impl<T: Real> TraceConfig<T> {
    pub fn new(stop: Section<T>, t_max: T) -> Self {
        TraceConfig {
            sections: Vec::new(),
            stop,
            t_max,
            max_drift: T::lit(1e-7),
        }
    }

    pub fn with_sections(mut self, sections: Vec<Section<T>>) -> Self {
        self.sections = sections;
        self
    }
}

/// Integrator settings for Highway traces: far from the origin the field
/// is exponentially small, so steps must be allowed to grow large.
pub fn highway_integrator<T: Real>() -> IntegratorConfig<T> {
    IntegratorConfig::default().with_steps(T::lit(1e-2), T::lit(1e-12), T::lit(1e7))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighwaySample<T> {
    pub t: T,
    pub state: ReducedState<T>,
    pub tau: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionCrossing<T> {
    pub section: Section<T>,
    pub t: T,
    pub state: ReducedState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighwayOrbit<T> {
    pub branch: HighwayBranch,
    pub seed: ReducedState<T>,
    pub samples: Vec<HighwaySample<T>>,
    pub crossings: Vec<SectionCrossing<T>>,
    pub level_drift: T,
}

impl<T: Real> HighwayOrbit<T> {
    pub fn crossing(&self, section: Section<T>) -> Option<&SectionCrossing<T>> {
        self.crossings.iter().find(|c| c.section == section)
    }

    /// Flow time between the first crossings of two sections.
    pub fn transit_time(&self, from: Section<T>, to: Section<T>) -> Option<T> {
        Some(self.crossing(to)?.t - self.crossing(from)?.t)
    }

    /// State where the orbit crosses `I_component = value`, refined by
    /// re-integrating from the nearest stored sample.
    pub fn state_at(
        &self,
        section: Section<T>,
        params: &ModelParams<T>,
        cfg: &IntegratorConfig<T>,
    ) -> Result<(T, ReducedState<T>), HighwayError> {
        let c = section.component;
        let v = section.value;
        let not_reached = || HighwayError::SectionNotReached {
            component: c,
            value: v.as_f64(),
        };
        let k = self
            .samples
            .windows(2)
            .position(|w| (w[0].state.i[c] - v) * (w[1].state.i[c] - v) <= T::zero())
            .ok_or_else(not_reached)?;
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        if a.state.i[c] == v {
            return Ok((a.t, a.state));
        }
        let ev = EventSpec::new(move |_t: T, x: &[T; 4]| x[c] - v, EventDirection::Both);
        let span = b.t - a.t;
        let hit = integrate_to_event(flow_rhs(BRANCH, *params), a.t, a.state.to_array(), b.t + span, &ev, cfg)?;
        Ok((hit.t, ReducedState::from_array(&hit.state)))
    }
}

/// Transports a seed with the scattering flow until the stop section.
pub fn highway_trace<T: Real>(
    seed: &ReducedState<T>,
    trace: &TraceConfig<T>,
    params: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<HighwayOrbit<T>, HighwayError> {
    let mut all = trace.sections.clone();
    all.push(trace.stop);
    let events: Vec<_> = all
        .iter()
        .map(|s| {
            let (c, v) = (s.component, s.value);
            EventSpec::new(move |_t: T, x: &[T; 4]| x[c] - v, EventDirection::Both)
        })
        .collect();
    let rhs = flow_rhs(BRANCH, *params);
    let stop = all.len() - 1;
    let (tr, hits) = integrate_with_events(&rhs, T::zero(), seed.to_array(), trace.t_max, &events, Some(stop), cfg)?;
    if !hits.iter().any(|h| h.0 == stop) {
        return Err(HighwayError::SectionNotReached {
            component: trace.stop.component,
            value: trace.stop.value.as_f64(),
        });
    }
    let level = highway_level(params);
    let mut drift = T::zero();
    let mut samples = Vec::with_capacity(tr.times.len());
    for (t, x) in tr.times.iter().zip(&tr.states) {
        let state = ReducedState::from_array(x);
        let ev = evaluate_reduced(BRANCH, &state, params)?;
        let d = (ev.value - level).abs();
        if d > drift {
            drift = d;
            if d > trace.max_drift {
                return Err(HighwayError::LevelDrift {
                    drift: d.as_f64(),
                    t: t.as_f64(),
                });
            }
        }
        samples.push(HighwaySample {
            t: *t,
            state,
            tau: ev.tau.value,
        });
    }
    let mut crossings = Vec::new();
    for (k, h) in hits {
        if crossings.iter().all(|c: &SectionCrossing<T>| c.section != all[k]) {
            crossings.push(SectionCrossing {
                section: all[k],
                t: h.t,
                state: ReducedState::from_array(&h.state),
            });
        }
    }
    Ok(HighwayOrbit {
        branch: HighwayBranch::of_angle(seed.theta[0]),
        seed: *seed,
        samples,
        crossings,
        level_drift: drift,
    })
}

/// Mismatch between a forward trace from one end of the Highway and a
/// backward trace from the other end, meeting at a common section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Glue<T> {
    pub forward: ReducedState<T>,
    pub backward: ReducedState<T>,
    /// `max |Δθ_k|` at the meeting point once the matched action agrees.
    pub discrepancy: T,
    /// Seed of the backward trace on the far section.
    pub backward_seed: ReducedState<T>,
}

/// Shoots the far-end seed (moving along the far section) until the
/// backward trace meets the forward trace at the same action on `meet`.
pub fn glue<T: Real>(
    forward: &HighwayOrbit<T>,
    meet: Section<T>,
    far: Section<T>,
    params: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<Glue<T>, HighwayError> {
    let target = forward.crossing(meet).ok_or(HighwayError::SectionNotReached {
        component: meet.component,
        value: meet.value.as_f64(),
    })?;
    let other = 1 - meet.component;
    let free = 1 - far.component;
    let t_back = -(forward.samples.last().map_or(T::one(), |s| s.t.abs()) * T::lit(10.0) + T::lit(1e3));
    let branches = [
        HighwayBranch::of_angle(forward.seed.theta[0]),
        HighwayBranch::of_angle(forward.seed.theta[1]),
    ];
    let shoot = |v: T| -> Result<(ReducedState<T>, ReducedState<T>), HighwayError> {
        let mut i = [T::zero(); 2];
        i[far.component] = far.value;
        i[free] = v;
        let seed = project_to_level(&highway_seed(i, branches, params)?, params)?;
        let orbit = highway_trace(&seed, &TraceConfig::new(meet, t_back), params, cfg)?;
        let hit = orbit.crossing(meet).expect("stop section is recorded");
        Ok((seed, hit.state))
    };
    // first guess: where the forward trace itself crosses the far section
    let (_, x_far) = forward.state_at(far, params, cfg)?;
    let mut v0 = x_far.i[free];
    let (mut s0, mut h0) = shoot(v0)?;
    let mut r0 = h0.i[other] - target.state.i[other];
    let mut v1 = v0 + T::lit(1e-3);
    for _ in 0..30 {
        let (s1, h1) = shoot(v1)?;
        let r1 = h1.i[other] - target.state.i[other];
        s0 = s1;
        h0 = h1;
        if r1.abs() < T::lit(1e-11) || r1 == r0 {
            break;
        }
        let v2 = v1 - r1 * (v1 - v0) / (r1 - r0);
        v0 = v1;
        r0 = r1;
        v1 = v2;
    }
    let d = angle_diff(h0.theta[0], target.state.theta[0])
        .abs()
        .max(angle_diff(h0.theta[1], target.state.theta[1]).abs());
    Ok(Glue {
        forward: target.state,
        backward: h0,
        discrepancy: d,
        backward_seed: s0,
    })
}

/// Straight-line asymptotes `I₂ = slope·I₁ + offset` of Highway orbits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Asymptote<T> {
    pub slope: T,
    /// For `I ≫ 1`.
    pub offset_plus: T,
    /// For `I ≪ −1`.
    pub offset_minus: T,
}

pub fn highway_asymptote<T: Real>(params: &ModelParams<T>) -> Result<Asymptote<T>, HighwayError> {
    let a = params.a();
    let om = params.big_omega();
    if a[0] == T::zero() || a[1] == T::zero() {
        return Err(ModelError::DegenerateAmplitudes { a: a.map(|v| v.as_f64()) }.into());
    }
    let k = T::lit(2.0) / (T::PI() * om[1]) * ((om[0] * a[0]) / (om[1] * a[1])).abs().ln();
    Ok(Asymptote {
        slope: om[0] / om[1],
        offset_plus: -k,
        offset_minus: k,
    })
}

/// `τ*` along a stored sample, recomputed (for callers that edit states).
pub fn sample_tau<T: Real>(state: &ReducedState<T>, params: &ModelParams<T>) -> Result<T, HighwayError> {
    Ok(solve_tau_star(BRANCH, state, params)?.value)
}

/// `|ω₁| A`-weighted magnitude of the flow; used to pick seed sections.
pub fn flow_speed<T: Real>(i: [T; 2], params: &ModelParams<T>) -> T {
    let c = melnikov_coeffs(i, params).values;
    (c[0] * c[0] + c[1] * c[1]).sqrt()
}
