//! First-order scattering maps and the scattering flow.
//!
//! The map `S_j` is the time-ε map of the Hamiltonian flow of `−L*_j`:
//!
//! ```text
//! İ = ∂L*/∂θ = −A sin ψ,   θ̇ = −∂L*/∂I = −Ω (A' cos ψ + τ* A sin ψ),   ψ = θ − τ* ω
//! ```

use rayon::prelude::*;
use thiserror::Error;

use crate::melnikov::{evaluate_reduced, reduced_poincare, MelnikovError, ReducedState};
use crate::model::{ModelError, ModelParams};
use crate::ode::{integrate, integrate_events, EventDirection, EventSpec, IntegratorConfig, OdeError, Trajectory};
use crate::scalar::{angle_diff, wrap_angle, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScatteringError {
    #[error(transparent)]
    Melnikov(#[from] MelnikovError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("only branches 0 and 1 are exposed (got {0})")]
    UnsupportedBranch(i32),
    #[error("scattering map needs eps > 0")]
    NonPositiveEps,
    #[error("no theta1 puts I = {i:?}, theta2 = {theta2} on level {level}")]
    LevelUnreachable { i: [f64; 2], theta2: f64, level: f64 },
    #[error("orbit {orbit} never returned to the section before t = {t_max}")]
    EventNotFound { orbit: usize, t_max: f64 },
}

fn check_branch(j: i32) -> Result<(), ScatteringError> {
    if j == 0 || j == 1 {
        Ok(())
    } else {
        Err(ScatteringError::UnsupportedBranch(j))
    }
}

/// One application of the first-order scattering map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringStep<T> {
    pub before: ReducedState<T>,
    pub after: ReducedState<T>,
    pub branch: i32,
    /// `ΔI = ε ∂L*/∂θ`.
    pub jump: [T; 2],
    /// `ε² M` when the map carries a calibrated constant `M`.
    pub truncation_bound: Option<T>,
}

/// `I += ε ∂L*_j/∂θ`, `θ −= ε ∂L*_j/∂I`.
pub fn scattering_map<T: Real>(j: i32, state: &ReducedState<T>, params: &ModelParams<T>) -> Result<ScatteringStep<T>, ScatteringError> {
    check_branch(j)?;
    let eps = params.eps();
    if !(eps > T::zero()) {
        return Err(ScatteringError::NonPositiveEps);
    }
    let ev = evaluate_reduced(j, state, params)?;
    let jump = [eps * ev.d_angle[0], eps * ev.d_angle[1]];
    let after = ReducedState {
        i: [state.i[0] + jump[0], state.i[1] + jump[1]],
        theta: [
            state.theta[0] - eps * ev.d_action[0],
            state.theta[1] - eps * ev.d_action[1],
        ],
    };
    Ok(ScatteringStep {
        before: *state,
        after,
        branch: j,
        jump,
        truncation_bound: None,
    })
}

/// Scattering map with a calibrated second-order constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringMap<T> {
    pub branch: i32,
    pub params: ModelParams<T>,
    /// Empirical `sup |ΔL*| / ε²` over the calibration box.
    pub m: T,
}

impl<T: Real> ScatteringMap<T> {
    /// Calibrates `M` on a grid of `n⁴` states with `|I_k| ≤ radius`.
    pub fn calibrated(j: i32, params: ModelParams<T>, radius: T, n: usize) -> Result<Self, ScatteringError> {
        let m = calibrate_truncation(j, &params, radius, n)?;
        Ok(ScatteringMap { branch: j, params, m })
    }

    pub fn apply(&self, state: &ReducedState<T>) -> Result<ScatteringStep<T>, ScatteringError> {
        let mut step = scattering_map(self.branch, state, &self.params)?;
        let e = self.params.eps();
        step.truncation_bound = Some(e * e * self.m);
        Ok(step)
    }
}

/// `sup |L*(S(x)) − L*(x)| / ε²` over a state grid.
pub fn calibrate_truncation<T: Real>(j: i32, params: &ModelParams<T>, radius: T, n: usize) -> Result<T, ScatteringError> {
    check_branch(j)?;
    let eps = params.eps();
    if !(eps > T::zero()) {
        return Err(ScatteringError::NonPositiveEps);
    }
    let n = n.max(2);
    let nt = T::from_usize(n).unwrap();
    let states: Vec<ReducedState<T>> = (0..n.pow(4))
        .map(|k| {
            let idx = [k % n, (k / n) % n, (k / n / n) % n, k / n / n / n];
            let act = |m: usize| -radius + T::lit(2.0) * radius * T::from_usize(m).unwrap() / (nt - T::one());
            let ang = |m: usize| T::TAU() * (T::from_usize(m).unwrap() + T::lit(0.5)) / nt;
            ReducedState::new([act(idx[0]), act(idx[1])], [ang(idx[2]), ang(idx[3])])
        })
        .collect();
    let worst = states
        .par_iter()
        .map(|x| -> Result<T, ScatteringError> {
            let step = scattering_map(j, x, params)?;
            let d = reduced_poincare(j, &step.after, params)? - reduced_poincare(j, x, params)?;
            Ok(d.abs() / (eps * eps))
        })
        .collect::<Result<Vec<T>, _>>()?
        .into_iter()
        .fold(T::zero(), T::max);
    Ok(worst)
}

/// `(İ₁, İ₂, θ̇₁, θ̇₂) = (∂L*/∂θ, −∂L*/∂I)`.
pub fn scattering_flow_field<T: Real>(j: i32, state: &ReducedState<T>, params: &ModelParams<T>) -> Result<[T; 4], ScatteringError> {
    check_branch(j)?;
    let ev = evaluate_reduced(j, state, params)?;
    Ok([ev.d_angle[0], ev.d_angle[1], -ev.d_action[0], -ev.d_action[1]])
}

/// Integrator-ready flow field; solver failures surface as non-finite values.
pub fn flow_rhs<T: Real>(j: i32, params: ModelParams<T>) -> impl Fn(T, &[T; 4]) -> [T; 4] + Sync {
    move |_t, x| {
        scattering_flow_field(j, &ReducedState::from_array(x), &params).unwrap_or([T::nan(); 4])
    }
}

pub fn flow_trajectory<T: Real>(
    j: i32,
    state: &ReducedState<T>,
    t1: T,
    params: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<T, 4>, ScatteringError> {
    check_branch(j)?;
    Ok(integrate(flow_rhs(j, *params), T::zero(), state.to_array(), t1, cfg)?)
}

/// Box and resolution for the equilibrium search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSearch<T> {
    pub action_radius: T,
    pub action_points: usize,
    pub angle_points: usize,
}

impl<T: Real> Default for EquilibriumSearch<T> {
    fn default() -> Self {
        EquilibriumSearch {
            action_radius: T::lit(5.0),
            action_points: 21,
            angle_points: 16,
        }
    }
}

fn field_norm<T: Real>(j: i32, x: &[T; 4], params: &ModelParams<T>) -> T {
    scattering_flow_field(j, &ReducedState::from_array(x), params)
        .map(|f| f.iter().fold(T::zero(), |m, v| m.max(v.abs())))
        .unwrap_or(T::infinity())
}

fn solve4<T: Real>(mut a: [[T; 4]; 4], mut b: [T; 4]) -> Option<[T; 4]> {
    for c in 0..4 {
        let p = (c..4).max_by(|&r, &s| a[r][c].abs().partial_cmp(&a[s][c].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if a[p][c] == T::zero() || !a[p][c].is_finite() {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [T::zero(); 4];
    for c in (0..4).rev() {
        let mut s = b[c];
        for k in c + 1..4 {
            s = s - a[c][k] * x[k];
        }
        x[c] = s / a[c][c];
    }
    Some(x)
}

fn newton_zero<T: Real>(j: i32, x0: [T; 4], params: &ModelParams<T>, radius: T) -> Option<[T; 4]> {
    let field = |x: &[T; 4]| scattering_flow_field(j, &ReducedState::from_array(x), params).ok();
    let mut x = x0;
    let h = T::lit(1e-6);
    for _ in 0..60 {
        let f = field(&x)?;
        let mut jac = [[T::zero(); 4]; 4];
        for c in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fp = field(&xp)?;
            let fm = field(&xm)?;
            for r in 0..4 {
                jac[r][c] = (fp[r] - fm[r]) / (h + h);
            }
        }
        let dx = solve4(jac, f.map(|v| -v))?;
        for c in 0..4 {
            x[c] += dx[c];
        }
        if x[0].abs() > radius + T::one() || x[1].abs() > radius + T::one() {
            return None;
        }
        let step = dx.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if step < T::lit(1e-12) {
            let res = field_norm(j, &x, params);
            return if res < T::lit(1e-12) { Some(x) } else { None };
        }
    }
    None
}

/// Zeros of the scattering flow field found by a grid scan of `‖field‖`
/// followed by Newton refinement from every local minimum of the scan.
pub fn find_equilibria<T: Real>(j: i32, params: &ModelParams<T>, search: &EquilibriumSearch<T>) -> Result<Vec<ReducedState<T>>, ScatteringError> {
    check_branch(j)?;
    let na = search.action_points.max(2);
    let nt = search.angle_points.max(2);
    let r = search.action_radius;
    let act = |m: usize| -r + T::lit(2.0) * r * T::from_usize(m).unwrap() / T::from_usize(na - 1).unwrap();
    let ang = |m: usize| T::TAU() * T::from_usize(m).unwrap() / T::from_usize(nt).unwrap();
    let idx = |a: usize, b: usize, c: usize, d: usize| ((a * na + b) * nt + c) * nt + d;
    let total = na * na * nt * nt;
    let values: Vec<T> = (0..total)
        .into_par_iter()
        .map(|k| {
            let d = k % nt;
            let c = (k / nt) % nt;
            let b = (k / nt / nt) % na;
            let a = k / nt / nt / na;
            field_norm(j, &[act(a), act(b), ang(c), ang(d)], params)
        })
        .collect();
    let mut candidates = Vec::new();
    for a in 0..na {
        for b in 0..na {
            for c in 0..nt {
                for d in 0..nt {
                    let v = values[idx(a, b, c, d)];
                    let mut is_min = true;
                    'nb: for da in -1i64..=1 {
                        for db in -1i64..=1 {
                            for dc in -1i64..=1 {
                                for dd in -1i64..=1 {
                                    if da == 0 && db == 0 && dc == 0 && dd == 0 {
                                        continue;
                                    }
                                    let aa = a as i64 + da;
                                    let bb = b as i64 + db;
                                    if aa < 0 || bb < 0 || aa >= na as i64 || bb >= na as i64 {
                                        continue;
                                    }
                                    let cc = (c as i64 + dc).rem_euclid(nt as i64) as usize;
                                    let dd2 = (d as i64 + dd).rem_euclid(nt as i64) as usize;
                                    if values[idx(aa as usize, bb as usize, cc, dd2)] < v {
                                        is_min = false;
                                        break 'nb;
                                    }
                                }
                            }
                        }
                    }
                    if is_min {
                        candidates.push([act(a), act(b), ang(c), ang(d)]);
                    }
                }
            }
        }
    }
    let found: Vec<[T; 4]> = candidates
        .par_iter()
        .filter_map(|x0| newton_zero(j, *x0, params, r))
        .collect();
    let mut unique: Vec<ReducedState<T>> = Vec::new();
    let tol = T::lit(1e-6);
    for x in found {
        if x[0].abs() > r || x[1].abs() > r {
            continue;
        }
        let st = ReducedState::from_array(&x).wrapped();
        let dup = unique.iter().any(|u| {
            (u.i[0] - st.i[0]).abs() < tol
                && (u.i[1] - st.i[1]).abs() < tol
                && angle_diff(u.theta[0], st.theta[0]).abs() < tol
                && angle_diff(u.theta[1], st.theta[1]).abs() < tol
        });
        if !dup {
            unique.push(st);
        }
    }
    unique.sort_by(|a, b| {
        a.to_array()
            .iter()
            .zip(b.to_array().iter())
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| *o != std::cmp::Ordering::Equal)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(unique)
}

/// Solves `L*_j(I, θ₁, θ₂) = level` for `θ₁`, preferring the root nearest `guess`.
pub fn level_seed<T: Real>(
    j: i32,
    level: T,
    i: [T; 2],
    theta2: T,
    guess: T,
    params: &ModelParams<T>,
) -> Result<ReducedState<T>, ScatteringError> {
    let h = |t1: T| -> Result<T, ScatteringError> {
        Ok(reduced_poincare(j, &ReducedState::new(i, [t1, theta2]), params)? - level)
    };
    let n = 256;
    let step = T::TAU() / T::from_usize(n).unwrap();
    let unreachable = || ScatteringError::LevelUnreachable {
        i: i.map(|v| v.as_f64()),
        theta2: theta2.as_f64(),
        level: level.as_f64(),
    };
    let mut best: Option<(T, T)> = None;
    let mut prev_x = guess - T::PI();
    let mut prev = h(prev_x)?;
    for k in 1..=n {
        let x = guess - T::PI() + step * T::from_usize(k).unwrap();
        let v = h(x)?;
        if prev == T::zero() || (prev < T::zero()) != (v < T::zero()) {
            let mid = T::lit(0.5) * (prev_x + x);
            if best.is_none_or(|(a, b)| (mid - guess).abs() < (T::lit(0.5) * (a + b) - guess).abs()) {
                best = Some((prev_x, x));
            }
        }
        prev = v;
        prev_x = x;
    }
    let (mut lo, mut hi) = best.ok_or_else(unreachable)?;
    let mut f_lo = h(lo)?;
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        let fm = h(mid)?;
        if fm == T::zero() || hi - lo < T::lit(4.0) * T::epsilon() * (T::one() + mid.abs()) {
            lo = mid;
            break;
        }
        if (fm < T::zero()) == (f_lo < T::zero()) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(ReducedState::new(i, [lo, theta2]))
}

/// Crossing of the section `I₁ = c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionPoint<T> {
    pub orbit: usize,
    pub t: T,
    pub i2: T,
    /// Wrapped to `[0, 2π)`.
    pub theta2: T,
    pub theta1: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionConfig<T> {
    pub section: T,
    pub t_max: T,
    pub direction: EventDirection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSection<T> {
    pub orbit: usize,
    pub seed: ReducedState<T>,
    pub points: Vec<SectionPoint<T>>,
    /// Largest `|L*(x(t)) − L*(seed)|` over the crossings and the endpoint.
    pub level_drift: T,
}

/// Crossings of one orbit with the section, excluding the seed itself.
pub fn poincare_orbit<T: Real>(
    j: i32,
    orbit: usize,
    seed: &ReducedState<T>,
    section: &SectionConfig<T>,
    params: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<OrbitSection<T>, ScatteringError> {
    check_branch(j)?;
    let c = section.section;
    let ev = EventSpec::new(move |_t: T, x: &[T; 4]| x[0] - c, section.direction);
    let rhs = flow_rhs(j, *params);
    let (hits, _t_end, x_end) = integrate_events(&rhs, T::zero(), seed.to_array(), section.t_max, &ev, cfg, None)?;
    if hits.is_empty() {
        return Err(ScatteringError::EventNotFound {
            orbit,
            t_max: section.t_max.as_f64(),
        });
    }
    let level = reduced_poincare(j, seed, params)?;
    let mut drift = (reduced_poincare(j, &ReducedState::from_array(&x_end), params)? - level).abs();
    let mut points = Vec::with_capacity(hits.len());
    for h in hits {
        let st = ReducedState::from_array(&h.state);
        drift = drift.max((reduced_poincare(j, &st, params)? - level).abs());
        points.push(SectionPoint {
            orbit,
            t: h.t,
            i2: st.i[1],
            theta2: wrap_angle(st.theta[1]),
            theta1: wrap_angle(st.theta[0]),
        });
    }
    Ok(OrbitSection {
        orbit,
        seed: *seed,
        points,
        level_drift: drift,
    })
}

/// Section portrait for a batch of seeds, each first moved onto `level` by
/// adjusting `θ₁`. Seeds are processed in parallel; results keep seed order.
pub fn poincare_section<T: Real>(
    j: i32,
    level: T,
    seeds: &[ReducedState<T>],
    section: &SectionConfig<T>,
    params: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Vec<Result<OrbitSection<T>, ScatteringError>> {
    seeds
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let seed = level_seed(j, level, s.i, s.theta[1], s.theta[0], params)?;
            poincare_orbit(j, k, &seed, section, params, cfg)
        })
        .collect()
}

/// Poisson brackets `{F_i, −L*_j}` of the inner first integrals with the
/// scattering Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transversality<T> {
    pub brackets: [T; 2],
    /// Set when the dominant term `−ω_i A_i sin ψ_i` does not exceed the
    /// ε-sized remainder for either rotor.
    pub near_degenerate: bool,
}

pub fn transversality_certificate<T: Real>(j: i32, state: &ReducedState<T>, params: &ModelParams<T>) -> Result<Transversality<T>, ScatteringError> {
    check_branch(j)?;
    let ev = evaluate_reduced(j, state, params)?;
    let eps = params.eps();
    let a = params.a();
    let om = params.big_omega();
    let omega = params.frequencies(state.i).omega;
    let t = ev.tau.value;
    let mut brackets = [T::zero(); 2];
    let mut degenerate = true;
    for k in 0..2 {
        let (sp, cp) = ev.psi[k].sin_cos();
        let am = ev.coeffs.values[k];
        let slope = ev.coeffs.slopes[k];
        let small = eps * a[k] * om[k] * state.theta[k].sin() * (slope * cp + t * am * sp);
        let dominant = -omega[k] * am * sp;
        brackets[k] = small + dominant;
        let bound = eps * a[k].abs() * om[k] * (slope.abs() + (t * am).abs());
        if dominant.abs() > bound {
            degenerate = false;
        }
    }
    Ok(Transversality {
        brackets,
        near_degenerate: degenerate,
    })
}
