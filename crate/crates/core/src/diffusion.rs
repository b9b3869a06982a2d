//! Pseudo-orbits that shadow a prescribed action path, diffusion-time
//! estimates along Highways, and a full-system check of the scattering jump.

use thiserror::Error;

use crate::highway::{HighwayError, HighwayOrbit, Section};
use crate::inner::{ergodize, AngleWindow, InnerError};
use crate::melnikov::{alpha, coefficient, evaluate_reduced, solve_tau_star, MelnikovError, ReducedState};
use crate::model::{separatrix, vector_field_array, Branch, FullState, ModelError, ModelParams};
use crate::ode::{propagate, IntegratorConfig, OdeError};
use crate::quad::{integrate as quadrature, QuadError};
use crate::scalar::{wrap_angle, Real};
use crate::scattering::{calibrate_truncation, scattering_map, ScatteringError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffusionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Melnikov(#[from] MelnikovError),
    #[error(transparent)]
    Scattering(#[from] ScatteringError),
    #[error(transparent)]
    Inner(#[from] InnerError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Highway(#[from] HighwayError),
    #[error("invalid action path: {0}")]
    InvalidPath(String),
    #[error("eps = {eps} exceeds the threshold eps0 = {eps0}")]
    EpsilonTooLarge { eps: f64, eps0: f64 },
    #[error("pseudo-orbit stuck after {steps} steps at I = {i:?}, theta = {theta:?}: {reason}")]
    Stuck { steps: usize, i: [f64; 2], theta: [f64; 2], reason: String },
    #[error("needed velocity component vanishes on segment {segment}")]
    DegenerateDirection { segment: usize },
    #[error("orbit covers I1 in [{covered_lo}, {covered_hi}], requested [{lo}, {hi}]")]
    RangeNotCovered { lo: f64, hi: f64, covered_lo: f64, covered_hi: f64 },
    #[error("excursion endpoints are {distance:e} from the cylinder (limit {limit:e})")]
    ExcursionTooShort { distance: f64, limit: f64 },
    #[error("could not bracket the {manifold} manifold in p")]
    ManifoldBracket { manifold: &'static str },
}

fn sub<T: Real>(a: [T; 2], b: [T; 2]) -> [T; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[0] + a[1] * b[1]
}

fn norm<T: Real>(a: [T; 2]) -> T {
    dot(a, a).sqrt()
}

fn point_segment_distance<T: Real>(x: [T; 2], a: [T; 2], b: [T; 2]) -> T {
    let ab = sub(b, a);
    let l2 = dot(ab, ab);
    let t = if l2 == T::zero() {
        T::zero()
    } else {
        (dot(sub(x, a), ab) / l2).max(T::zero()).min(T::one())
    };
    norm(sub(x, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

/// Piecewise-linear action path with tracking radius `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPath<T> {
    waypoints: Vec<[T; 2]>,
    delta: T,
    stairstep: bool,
}

impl<T: Real> ActionPath<T> {
    pub fn new(waypoints: Vec<[T; 2]>, delta: T) -> Result<Self, DiffusionError> {
        if waypoints.is_empty() {
            return Err(DiffusionError::InvalidPath("no waypoints".into()));
        }
        if waypoints.iter().any(|w| !w[0].is_finite() || !w[1].is_finite()) {
            return Err(DiffusionError::InvalidPath("non-finite waypoint".into()));
        }
        if !(delta > T::zero() && delta < T::one()) {
            return Err(DiffusionError::InvalidPath(format!("delta = {delta} outside (0, 1)")));
        }
        Ok(ActionPath {
            waypoints,
            delta,
            stairstep: false,
        })
    }

    /// Track an axis-aligned staircase of the path instead of the path itself.
    pub fn with_stairstep(mut self, on: bool) -> Self {
        self.stairstep = on;
        self
    }

    pub fn waypoints(&self) -> &[[T; 2]] {
        &self.waypoints
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn is_stairstep(&self) -> bool {
        self.stairstep
    }

    pub fn start(&self) -> [T; 2] {
        self.waypoints[0]
    }

    pub fn end(&self) -> [T; 2] {
        *self.waypoints.last().expect("path has a waypoint")
    }

    pub fn length(&self) -> T {
        self.waypoints.windows(2).fold(T::zero(), |s, w| s + norm(sub(w[1], w[0])))
    }

    pub fn distance(&self, x: [T; 2]) -> T {
        if self.waypoints.len() == 1 {
            return norm(sub(x, self.waypoints[0]));
        }
        self.waypoints
            .windows(2)
            .map(|w| point_segment_distance(x, w[0], w[1]))
            .fold(T::infinity(), T::min)
    }

    /// Replaces every segment that passes within `guard` of `I = 0` by a
    /// polygonal detour on the circle of radius `1.25·guard`.
    pub fn rerouted(&self, guard: T) -> Result<Self, DiffusionError> {
        let radius = T::lit(1.25) * guard;
        let mut out = vec![self.waypoints[0]];
        for w in self.waypoints.windows(2) {
            let (a, b) = (w[0], w[1]);
            if point_segment_distance([T::zero(); 2], a, b) >= guard {
                out.push(b);
                continue;
            }
            if norm(a) < guard || norm(b) < guard {
                return Err(DiffusionError::InvalidPath(format!(
                    "waypoint within the guard radius {guard} of the double resonance"
                )));
            }
            let ang_a = a[1].atan2(a[0]);
            let ang_b = b[1].atan2(b[0]);
            let ccw = a[0] * b[1] - a[1] * b[0] >= T::zero();
            let mut sweep = wrap_angle(ang_b - ang_a);
            if !ccw {
                sweep -= T::TAU();
            }
            let k = (sweep.abs() / T::FRAC_PI_4()).ceil().to_usize().unwrap_or(1).max(1);
            for m in 0..=k {
                let ang = ang_a + sweep * T::from_usize(m).unwrap() / T::from_usize(k).unwrap();
                out.push([radius * ang.cos(), radius * ang.sin()]);
            }
            out.push(b);
        }
        Ok(ActionPath {
            waypoints: out,
            delta: self.delta,
            stairstep: self.stairstep,
        })
    }

    /// The curve a pseudo-orbit actually tracks.
    pub fn tracked(&self) -> Result<Self, DiffusionError> {
        if self.stairstep {
            stairstep(self, self.delta / T::lit(2.0))
        } else {
            self.rerouted(self.delta)
        }
    }
}

/// Axis-aligned polyline within `resolution` (Hausdorff) of the rerouted
/// path; each segment moves `I₁` first, then `I₂`.
pub fn stairstep<T: Real>(path: &ActionPath<T>, resolution: T) -> Result<ActionPath<T>, DiffusionError> {
    let res = resolution.min(path.delta / T::lit(2.0));
    let routed = path.rerouted(path.delta)?;
    let mut pts: Vec<[T; 2]> = vec![routed.waypoints[0]];
    for w in routed.waypoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = sub(b, a);
        let l = norm(d);
        if l == T::zero() {
            continue;
        }
        if d[0] == T::zero() || d[1] == T::zero() {
            pts.push(b);
            continue;
        }
        // a corner sits |dx·dy|/(nL) off the segment
        let n = ((d[0] * d[1]).abs() / (l * res) * T::lit(1.000_001)).ceil().to_usize().unwrap_or(1).max(1);
        let nt = T::from_usize(n).unwrap();
        for k in 0..n {
            let x1 = a[0] + d[0] * T::from_usize(k + 1).unwrap() / nt;
            let y0 = a[1] + d[1] * T::from_usize(k).unwrap() / nt;
            let y1 = if k + 1 == n { b[1] } else { a[1] + d[1] * T::from_usize(k + 1).unwrap() / nt };
            let x1 = if k + 1 == n { b[0] } else { x1 };
            pts.push([x1, y0]);
            pts.push([x1, y1]);
        }
    }
    // merge repeated and collinear points
    let mut clean: Vec<[T; 2]> = Vec::with_capacity(pts.len());
    for p in pts {
        if clean.last() == Some(&p) {
            continue;
        }
        if clean.len() >= 2 {
            let a = clean[clean.len() - 2];
            let b = clean[clean.len() - 1];
            let same_axis = (a[0] == b[0] && b[0] == p[0]) || (a[1] == b[1] && b[1] == p[1]);
            let forward = dot(sub(b, a), sub(p, b)) > T::zero();
            if same_axis && forward {
                clean.pop();
            }
        }
        clean.push(p);
    }
    Ok(ActionPath {
        waypoints: clean,
        delta: path.delta,
        stairstep: true,
    })
}

/// Kind of a pseudo-orbit step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepKind<T> {
    Scattering { branch: i32 },
    /// Ergodization along the inner flow for time `t`.
    Inner { t: T },
    /// Resonant case: inner time `t` to a chosen point of the closed inner
    /// line, then one scattering step there.
    Detour { t: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitStep<T> {
    pub state: ReducedState<T>,
    pub kind: StepKind<T>,
    /// Distance from `I` to the tracked path.
    pub distance: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOrbit<T> {
    pub start: ReducedState<T>,
    pub steps: Vec<OrbitStep<T>>,
    /// Number of scattering applications `N_s` (detours included).
    pub scattering_steps: usize,
    /// Number of inner applications `C_s`.
    pub inner_steps: usize,
    pub inner_time: T,
    pub detours: usize,
    pub max_deviation: T,
    pub final_distance: T,
    pub eps: T,
    pub eps0: T,
    pub tracked: ActionPath<T>,
}

impl<T: Real> PseudoOrbit<T> {
    pub fn final_state(&self) -> ReducedState<T> {
        self.steps.last().map_or(self.start, |s| s.state)
    }
}

/// Tuning of the pseudo-orbit builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoOrbitOptions<T> {
    /// Window margin for ergodization: entry requires `|sin ψ_k| ≥ sin(margin)`.
    pub entry_margin: T,
    /// Margin of the fallback window when the entry window is unreachable.
    pub fallback_margin: T,
    /// Scattering continues while the dominant `|sin ψ|` stays above this.
    pub continue_sin: T,
    /// Transverse deviation (in units of δ) that triggers a correction.
    pub correct_fraction: T,
    /// Finish inside this fraction of δ around the end point.
    pub finish_fraction: T,
    pub t_bound: T,
    pub max_steps: usize,
    /// Half-width of the action box used to calibrate `M`.
    pub calibration_radius: Option<T>,
    pub calibration_points: usize,
    pub check_threshold: bool,
}

impl<T: Real> Default for PseudoOrbitOptions<T> {
    fn default() -> Self {
        PseudoOrbitOptions {
            entry_margin: T::FRAC_PI_4(),
            fallback_margin: T::lit(0.1),
            continue_sin: T::lit(0.5),
            correct_fraction: T::lit(0.25),
            finish_fraction: T::lit(0.5),
            t_bound: T::lit(1e6),
            max_steps: 5_000_000,
            calibration_radius: None,
            calibration_points: 6,
            check_threshold: true,
        }
    }
}

/// Theorem-1 thresholds for one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonThreshold<T> {
    pub eps0: T,
    /// Smallest `|A_k|` on a moving component along the path.
    pub m: T,
    /// Calibrated second-order constant.
    pub big_m: T,
}

/// `ε₀ = min{1/(2M), 2δ/m, m/(2M)}` with `m` the smallest amplitude of a
/// needed velocity component along the tracked path and `M` the calibrated
/// `O(ε²)` constant of the scattering map over `|I_k| ≤ radius`.
pub fn epsilon_threshold<T: Real>(
    path: &ActionPath<T>,
    delta: T,
    radius: T,
    calibration_points: usize,
    params: &ModelParams<T>,
) -> Result<EpsilonThreshold<T>, DiffusionError> {
    let tracked = path.tracked()?;
    let mut m = T::infinity();
    for (k, w) in tracked.waypoints.windows(2).enumerate() {
        let d = sub(w[1], w[0]);
        let l = norm(d);
        if l == T::zero() {
            continue;
        }
        let n = 64;
        for s in 0..=n {
            let f = T::from_usize(s).unwrap() / T::from_usize(n).unwrap();
            let i = [w[0][0] + f * d[0], w[0][1] + f * d[1]];
            let omega = params.frequencies(i).omega;
            for c in 0..2 {
                if d[c].abs() > T::lit(1e-12) * l {
                    let a = coefficient(omega[c], params.a()[c]).abs();
                    if a == T::zero() {
                        return Err(DiffusionError::DegenerateDirection { segment: k });
                    }
                    m = m.min(a);
                }
            }
        }
    }
    if !m.is_finite() {
        // single point: nothing to move
        m = T::one();
    }
    let calib = if params.eps() > T::zero() {
        *params
    } else {
        params.with_eps(T::lit(1e-3))?
    };
    let big_m = calibrate_truncation(0, &calib, radius, calibration_points)?;
    let half = T::lit(0.5);
    let eps0 = (half / big_m).min(T::lit(2.0) * delta / m).min(half * m / big_m);
    Ok(EpsilonThreshold { eps0, m, big_m })
}

struct Tracker<T> {
    seg: usize,
    correcting: Option<[T; 2]>,
}

/// Builds a pseudo-orbit from `start` along `path` by alternating first-order
/// scattering steps with inner ergodization.
///
/// A scattering step is taken only while every needed component of
/// `ε ∂L*/∂θ` has the sign of the wanted velocity. Otherwise the inner flow
/// rotates `ψ` into the matching window first.
pub fn build_pseudo_orbit<T: Real>(
    path: &ActionPath<T>,
    start: &ReducedState<T>,
    params: &ModelParams<T>,
    opts: &PseudoOrbitOptions<T>,
) -> Result<PseudoOrbit<T>, DiffusionError> {
    params.require_horizontal_safe()?;
    let eps = params.eps();
    if !(eps > T::zero()) {
        return Err(ScatteringError::NonPositiveEps.into());
    }
    let delta = path.delta;
    let tracked = path.tracked()?;
    if norm(sub(start.i, tracked.start())) > delta {
        return Err(DiffusionError::InvalidPath("start state is not within delta of the path start".into()));
    }
    let end = tracked.end();
    let mut orbit = PseudoOrbit {
        start: *start,
        steps: Vec::new(),
        scattering_steps: 0,
        inner_steps: 0,
        inner_time: T::zero(),
        detours: 0,
        max_deviation: tracked.distance(start.i),
        final_distance: norm(sub(start.i, end)),
        eps,
        eps0: T::infinity(),
        tracked: tracked.clone(),
    };
    if tracked.length() < delta {
        return Ok(orbit);
    }
    if opts.check_threshold {
        let radius = opts.calibration_radius.unwrap_or_else(|| {
            tracked
                .waypoints
                .iter()
                .map(|w| w[0].abs().max(w[1].abs()))
                .fold(T::zero(), T::max)
                + delta
        });
        let th = epsilon_threshold(path, delta, radius, opts.calibration_points, params)?;
        orbit.eps0 = th.eps0;
        if eps > th.eps0 {
            return Err(DiffusionError::EpsilonTooLarge {
                eps: eps.as_f64(),
                eps0: th.eps0.as_f64(),
            });
        }
    }
    let segs: Vec<([T; 2], [T; 2], T)> = tracked
        .waypoints
        .windows(2)
        .filter_map(|w| {
            let d = sub(w[1], w[0]);
            let l = norm(d);
            (l > T::zero()).then(|| (w[0], [d[0] / l, d[1] / l], l))
        })
        .collect();
    let last = segs.len() - 1;
    let finish = opts.finish_fraction * delta;
    let mut tr = Tracker {
        seg: 0,
        correcting: None,
    };
    let mut relaxed = false;
    let mut x = *start;
    let stuck = |x: &ReducedState<T>, steps: usize, reason: String| DiffusionError::Stuck {
        steps,
        i: x.i.map(|v| v.as_f64()),
        theta: x.theta.map(|v| v.as_f64()),
        reason,
    };
    loop {
        if norm(sub(x.i, end)) <= finish {
            break;
        }
        if orbit.steps.len() >= opts.max_steps {
            return Err(stuck(&x, orbit.steps.len(), "step limit reached".into()));
        }
        while tr.seg < last && dot(sub(x.i, segs[tr.seg].0), segs[tr.seg].1) >= segs[tr.seg].2 {
            tr.seg += 1;
            tr.correcting = None;
            relaxed = false;
        }
        let (p0, d, len) = segs[tr.seg];
        let rel = sub(x.i, p0);
        let along = dot(rel, d);
        let perp = [rel[0] - along * d[0], rel[1] - along * d[1]];
        let dev = norm(perp);
        let mut v = if tr.seg == last && along > len { [-d[0], -d[1]] } else { d };
        if tr.correcting.is_none() && dev > opts.correct_fraction * delta {
            tr.correcting = Some([perp[0] / dev, perp[1] / dev]);
            relaxed = false;
        }
        if let Some(c) = tr.correcting {
            if dot(perp, c) <= T::zero() {
                tr.correcting = None;
                relaxed = false;
            } else {
                v = [v[0] - T::lit(2.0) * c[0], v[1] - T::lit(2.0) * c[1]];
            }
        }
        let vmax = v[0].abs().max(v[1].abs());
        let signs: [Option<bool>; 2] = [0, 1].map(|k| (v[k].abs() > T::lit(1e-9) * vmax).then(|| v[k] > T::zero()));
        let dom = if v[0].abs() >= v[1].abs() { 0 } else { 1 };

        let ev = evaluate_reduced(0, &x, params)?;
        let signs_ok = (0..2).all(|k| signs[k].is_none_or(|up| (ev.d_angle[k] > T::zero()) == up && ev.d_angle[k] != T::zero()));
        let need = if relaxed {
            T::lit(0.5) * opts.fallback_margin.sin()
        } else {
            opts.continue_sin
        };
        if signs_ok && ev.psi[dom].sin().abs() >= need {
            let step = scattering_map(0, &x, params)?;
            x = step.after;
            orbit.scattering_steps += 1;
            push(&mut orbit, x, StepKind::Scattering { branch: 0 });
            continue;
        }
        let amps = ev.coeffs.values;
        let entry = AngleWindow::for_direction(signs, amps, opts.entry_margin);
        let result = match ergodize(&x, &entry, 0, params, opts.t_bound) {
            Err(InnerError::WindowUnreachable { .. }) => {
                relaxed = true;
                let wide = AngleWindow::for_direction(signs, amps, opts.fallback_margin);
                ergodize(&x, &wide, 0, params, opts.t_bound)
            }
            other => {
                relaxed = false;
                other
            }
        };
        match result {
            Ok(e) => {
                if e.t > T::zero() {
                    x = e.state;
                    orbit.inner_steps += 1;
                    orbit.inner_time += e.t;
                    push(&mut orbit, x, StepKind::Inner { t: e.t });
                } else {
                    // inside the window but below the magnitude gate
                    relaxed = true;
                }
            }
            Err(InnerError::UseScatteringDetour { .. }) => {
                // move to |sin ψ_dom| = 1 with the wanted sign, then scatter
                let up = signs[dom].unwrap_or(true);
                let want_negative_sine = up == (amps[dom] > T::zero());
                let centre = if want_negative_sine { T::lit(1.5) * T::PI() } else { T::FRAC_PI_2() };
                let mut w = AngleWindow::<T>::full();
                w.lo[dom] = centre - T::lit(0.05);
                w.hi[dom] = centre + T::lit(0.05);
                let e = ergodize(&x, &w, 0, params, opts.t_bound)
                    .map_err(|err| stuck(&x, orbit.steps.len(), format!("detour failed: {err}")))?;
                let step = scattering_map(0, &e.state, params)?;
                x = step.after;
                orbit.detours += 1;
                orbit.scattering_steps += 1;
                orbit.inner_steps += 1;
                orbit.inner_time += e.t;
                push(&mut orbit, x, StepKind::Detour { t: e.t });
                relaxed = false;
            }
            Err(err) => return Err(stuck(&x, orbit.steps.len(), err.to_string())),
        }
    }
    orbit.final_distance = norm(sub(x.i, end));
    Ok(orbit)
}

fn push<T: Real>(orbit: &mut PseudoOrbit<T>, x: ReducedState<T>, kind: StepKind<T>) {
    let distance = orbit.tracked.distance(x.i);
    orbit.max_deviation = orbit.max_deviation.max(distance);
    orbit.steps.push(OrbitStep { state: x, kind, distance });
}

/// Scattering-flow time of a path with every needed phase optimal
/// (`|sin ψ| = 1`): `∫ ds / min_k(|A_k|/|d_k|)` over each segment.
pub fn optimal_path_time<T: Real>(path: &ActionPath<T>, params: &ModelParams<T>) -> Result<T, DiffusionError> {
    let tracked = path.tracked()?;
    let mut total = T::zero();
    for w in tracked.waypoints.windows(2) {
        let d = sub(w[1], w[0]);
        let l = norm(d);
        if l == T::zero() {
            continue;
        }
        let u = [d[0] / l, d[1] / l];
        let integrand = |s: T| {
            let i = [w[0][0] + s * u[0], w[0][1] + s * u[1]];
            let omega = params.frequencies(i).omega;
            let mut speed = T::infinity();
            for k in 0..2 {
                if u[k].abs() > T::lit(1e-12) {
                    speed = speed.min(coefficient(omega[k], params.a()[k]).abs() / u[k].abs());
                }
            }
            T::one() / speed
        };
        total += quadrature(integrand, T::zero(), l, T::lit(1e-12), T::lit(1e-10), 200)?.value;
    }
    Ok(total)
}

/// Leading-order diffusion time along a Highway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEstimate<T> {
    /// Scattering-flow time from the quadrature in `ω₁`.
    pub t_s: T,
    /// Flow time between the same sections read off the orbit.
    pub t_s_direct: T,
    pub t_h: T,
    pub c: T,
    /// `max |ω_k − α(ω_k)|` over the action ranges.
    pub m_omega: [T; 2],
    pub t_d: T,
    pub eps: T,
}

/// `T_s = ∫ dω₁ / (Ω₁ · (−A₁(ω₁) sin(θ₁ − ω₁τ*)))` along the Highway,
/// which is `(1/(2πa₁Ω₁)) ∫ −sinh(πω₁/2) dω₁ / (ω₁ sin(θ₁ − ω₁τ*))` written
/// through `A₁` so that `ω₁ = 0` is regular. Then `T_h = 2 log(C/ε)` and
/// `T_d = (T_s/ε)·T_h`.
pub fn time_estimate<T: Real>(
    omega_range: (T, T),
    highway: &HighwayOrbit<T>,
    eps: T,
    params: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<TimeEstimate<T>, DiffusionError> {
    params.require_horizontal_safe()?;
    let om = params.big_omega();
    let a = params.a();
    let (w0, wf) = omega_range;
    let (i0, i_f) = (w0 / om[0], wf / om[0]);
    let (lo_c, hi_c) = highway
        .samples
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), s| (lo.min(s.state.i[0]), hi.max(s.state.i[0])));
    let (lo, hi) = (i0.min(i_f), i0.max(i_f));
    if lo < lo_c || hi > hi_c {
        return Err(DiffusionError::RangeNotCovered {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
            covered_lo: lo_c.as_f64(),
            covered_hi: hi_c.as_f64(),
        });
    }
    let mut failure: Option<DiffusionError> = None;
    let integrand = |w: T| -> T {
        let at = highway
            .state_at(Section::new(0, w / om[0]), params, cfg)
            .map_err(DiffusionError::from)
            .and_then(|(_, x)| Ok(evaluate_reduced(0, &x, params)?));
        match at {
            Ok(ev) => {
                let a1 = coefficient(w, a[0]);
                T::one() / (om[0] * (-a1 * ev.psi[0].sin()))
            }
            Err(e) => {
                failure.get_or_insert(e);
                T::nan()
            }
        }
    };
    let q = quadrature(integrand, w0, wf, T::lit(1e-12), T::lit(1e-10), 400);
    if let Some(e) = failure {
        return Err(e);
    }
    let t_s = q?.value;
    let (ta, xa) = highway.state_at(Section::new(0, i0), params, cfg)?;
    let (tb, xb) = highway.state_at(Section::new(0, i_f), params, cfg)?;
    let t_s_direct = tb - ta;
    // action range of I₂ between the two sections
    let (t_lo, t_hi) = (ta.min(tb), ta.max(tb));
    let mut i2_lo = xa.i[1].min(xb.i[1]);
    let mut i2_hi = xa.i[1].max(xb.i[1]);
    for s in &highway.samples {
        if s.t >= t_lo && s.t <= t_hi {
            i2_lo = i2_lo.min(s.state.i[1]);
            i2_hi = i2_hi.max(s.state.i[1]);
        }
    }
    let (c, m_omega) = homoclinic_constant([(lo, hi), (i2_lo, i2_hi)], params);
    let t_h = T::lit(2.0) * (c / eps).ln();
    Ok(TimeEstimate {
        t_s,
        t_s_direct,
        t_h,
        c,
        m_omega,
        t_d: t_s / eps * t_h,
        eps,
    })
}

/// Constant `C` of the homoclinic time `2 log(C/ε)` over the action box
/// `ranges`, with `M_k = max |ω_k − α(ω_k)|` scanned on 2001 points.
/// Returns `(C, [M₁, M₂])`.
pub fn homoclinic_constant<T: Real>(ranges: [(T, T); 2], params: &ModelParams<T>) -> (T, [T; 2]) {
    let om = params.big_omega();
    let a = params.a();
    let scan = |k: usize| -> T {
        let (lo, hi) = ranges[k];
        let n = 2000;
        (0..=n)
            .map(|j| {
                let i = lo + (hi - lo) * T::from_usize(j).unwrap() / T::from_usize(n).unwrap();
                let w = om[k] * i;
                (w - alpha(w)).abs()
            })
            .fold(T::zero(), T::max)
    };
    let m_omega = [scan(0), scan(1)];
    let mu = params.mu();
    let denom = T::PI() * (T::one() - T::lit(1.466) * (mu[0].abs() + mu[1].abs()));
    let s = T::FRAC_PI_2().sinh();
    let mut c = a[0].abs();
    for k in 0..2 {
        c += T::lit(2.0) * (a[2] * mu[k]).abs() * s * mu[0].abs() / denom * m_omega[k];
    }
    (T::lit(16.0) * c, m_omega)
}

/// Outcome of one full-system excursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpCheck<T> {
    pub measured: [T; 2],
    pub predicted: [T; 2],
    /// `|measured − predicted|`.
    pub discrepancy: T,
    /// Largest distance of the excursion endpoints from the cylinder.
    pub endpoint_distance: T,
    pub excursion: T,
}

/// Default half-length `log(16/ε)` of the excursion.
pub fn default_excursion<T: Real>(eps: T) -> T {
    (T::lit(16.0) / eps).ln()
}

/// Measures the action jump of the full system along the homoclinic
/// excursion through `q₀(τ*)` at `s = 0`, `φ = θ`.
///
/// Points on the stable and unstable manifolds are located by bisection in
/// `p`, carried to `±T`, projected onto `p = q = 0` and brought back to
/// `t = 0` along the inner flow. The footpoint difference is compared with
/// `ε ∂L*₀/∂θ`.
pub fn verify_scattering_jump<T: Real>(
    state: &ReducedState<T>,
    eps: T,
    excursion: T,
    params: &ModelParams<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<JumpCheck<T>, DiffusionError> {
    let p = params.with_eps(eps)?;
    let sigma: T = p.sign().value();
    let two_pi = T::TAU();
    let tau = solve_tau_star(0, state, &p)?.value;
    let (p0, q0) = separatrix(tau, Branch::Plus);
    let p_init = sigma * p0;
    let field = move |_t: T, y: &[T; 7]| vector_field_array(y, &p);
    let start = |pp: T| FullState::new(pp, q0, state.i, state.theta, T::zero()).to_array();
    let overshoot = excursion + T::lit(3.0);
    // sign of the unstable coordinate past the forward saddle
    let forward_side = |pp: T| -> Result<bool, DiffusionError> {
        let y = propagate(field, T::zero(), start(pp), overshoot, cfg)?;
        Ok(sigma * y[0] + (y[1] - two_pi) > T::zero())
    };
    // sign of the stable coordinate before the backward saddle
    let backward_side = |pp: T| -> Result<bool, DiffusionError> {
        let y = propagate(field, T::zero(), start(pp), -overshoot, cfg)?;
        Ok(sigma * y[0] - y[1] > T::zero())
    };
    let locate = |side: &dyn Fn(T) -> Result<bool, DiffusionError>, name: &'static str| -> Result<T, DiffusionError> {
        let mut w = T::lit(4.0) * eps.max(T::lit(1e-6));
        for _ in 0..8 {
            let (mut lo, mut hi) = (p_init - w, p_init + w);
            let s_lo = side(lo)?;
            if s_lo != side(hi)? {
                for _ in 0..200 {
                    let mid = T::lit(0.5) * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if side(mid)? == s_lo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(T::lit(0.5) * (lo + hi));
            }
            w *= T::lit(4.0);
        }
        Err(DiffusionError::ManifoldBracket { manifold: name })
    };
    let p_s = locate(&forward_side, "stable")?;
    let p_u = locate(&backward_side, "unstable")?;
    let y_plus = propagate(field, T::zero(), start(p_s), excursion, cfg)?;
    let y_minus = propagate(field, T::zero(), start(p_u), -excursion, cfg)?;
    let d_plus = y_plus[0].abs() + (y_plus[1] - two_pi).abs();
    let d_minus = y_minus[0].abs() + y_minus[1].abs();
    let dist = d_plus.max(d_minus);
    let limit = T::lit(10.0) * eps;
    if eps > T::zero() && dist > limit {
        return Err(DiffusionError::ExcursionTooShort {
            distance: dist.as_f64(),
            limit: limit.as_f64(),
        });
    }
    let foot = |y: &[T; 7], t_from: T| -> Result<[T; 2], DiffusionError> {
        let mut z = *y;
        z[0] = T::zero();
        z[1] = T::zero();
        let back = propagate(field, t_from, z, T::zero(), cfg)?;
        Ok([back[2], back[3]])
    };
    let i_plus = foot(&y_plus, excursion)?;
    let i_minus = foot(&y_minus, -excursion)?;
    let measured = [i_plus[0] - i_minus[0], i_plus[1] - i_minus[1]];
    let ev = evaluate_reduced(0, state, &p)?;
    let predicted = [eps * ev.d_angle[0], eps * ev.d_angle[1]];
    Ok(JumpCheck {
        measured,
        predicted,
        discrepancy: norm(sub(measured, predicted)),
        endpoint_distance: dist,
        excursion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::{action_excursion_bound, inner_flow, InnerState};
    use crate::model::PendulumSign;
    use std::f64::consts::PI;

    fn params(eps: f64) -> ModelParams<f64> {
        ModelParams::new([0.3, 0.1, 1.0], [1.0, 1.0], eps, PendulumSign::Plus).unwrap()
    }

    fn hausdorff(a: &ActionPath<f64>, b: &ActionPath<f64>) -> f64 {
        let dense = |p: &ActionPath<f64>| -> Vec<[f64; 2]> {
            let mut v = Vec::new();
            for w in p.waypoints().windows(2) {
                for k in 0..=200 {
                    let f = k as f64 / 200.0;
                    v.push([w[0][0] + f * (w[1][0] - w[0][0]), w[0][1] + f * (w[1][1] - w[0][1])]);
                }
            }
            v
        };
        let ab = dense(a).into_iter().map(|x| b.distance(x)).fold(0.0, f64::max);
        let ba = dense(b).into_iter().map(|x| a.distance(x)).fold(0.0, f64::max);
        ab.max(ba)
    }

    #[test]
    fn path_validation() {
        assert!(ActionPath::<f64>::new(vec![], 0.1).is_err());
        assert!(ActionPath::new(vec![[0.0, 1.0]], 1.5).is_err());
        assert!(ActionPath::new(vec![[f64::NAN, 1.0]], 0.1).is_err());
        let p = ActionPath::new(vec![[1.0, 1.0], [4.0, 5.0]], 0.1).unwrap();
        assert_eq!(p.length(), 5.0);
        assert!((p.distance([1.0, 5.0]) - 2.4_f64).abs() < 1e-12);
    }

    #[test]
    fn stairstep_keeps_axis_aligned_paths() {
        let p = ActionPath::new(vec![[1.0, 1.0], [3.0, 1.0], [3.0, 2.0]], 0.1).unwrap();
        let s = stairstep(&p, 0.05).unwrap();
        assert_eq!(s.waypoints(), p.waypoints());
    }

    #[test]
    fn stairstep_quarter_circle() {
        let pts: Vec<[f64; 2]> = (0..=400)
            .map(|k| {
                let a = PI / 2.0 * k as f64 / 400.0;
                [2.0 * a.cos() + 1.0, 2.0 * a.sin() + 1.0]
            })
            .collect();
        let p = ActionPath::new(pts, 0.2).unwrap();
        let s = stairstep(&p, 0.05).unwrap();
        assert!(hausdorff(&p, &s) <= 0.05);
        for w in s.waypoints().windows(2) {
            assert!(w[0][0] == w[1][0] || w[0][1] == w[1][1]);
        }
    }

    #[test]
    fn reroute_clears_the_guard_disk() {
        let p = ActionPath::new(vec![[-1.0, 0.02], [1.0, 0.02]], 0.1).unwrap();
        let s = stairstep(&p, 0.05).unwrap();
        let clearance = s
            .waypoints()
            .windows(2)
            .map(|w| point_segment_distance([0.0, 0.0], w[0], w[1]))
            .fold(f64::INFINITY, f64::min);
        assert!(clearance >= 0.05, "{clearance}");
        assert_eq!(s.start(), p.start());
        assert_eq!(s.end(), p.end());
        let bad = ActionPath::new(vec![[0.01, 0.0], [1.0, 0.0]], 0.1).unwrap();
        assert!(bad.rerouted(0.1).is_err());
    }

    #[test]
    fn short_path_is_a_zero_step_orbit() {
        let p = params(1e-3);
        let path = ActionPath::new(vec![[1.0, 1.0], [1.05, 1.0]], 0.1).unwrap();
        let st = ReducedState::new([1.0, 1.0], [0.0, 0.0]);
        let o = build_pseudo_orbit(&path, &st, &p, &PseudoOrbitOptions::default()).unwrap();
        assert!(o.steps.is_empty());
        assert_eq!(o.scattering_steps, 0);
    }

    #[test]
    fn horizontal_segment_is_tracked() {
        let p = params(1e-3);
        let path = ActionPath::new(vec![[1.0, 1.0], [3.0, 1.0]], 0.1).unwrap();
        let st = ReducedState::new([1.0, 1.0], [0.3, 2.0]);
        let o = build_pseudo_orbit(&path, &st, &p, &PseudoOrbitOptions::default()).unwrap();
        assert!(o.max_deviation <= 0.1, "{}", o.max_deviation);
        assert!(o.final_distance <= 0.05);
        let t_opt = optimal_path_time(&path, &p).unwrap();
        let ratio = o.scattering_steps as f64 * 1e-3 / t_opt;
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
        assert!(o.inner_steps > 0);
    }

    #[test]
    fn inner_steps_move_actions_within_level_width() {
        let p = params(1e-3);
        let path = ActionPath::new(vec![[1.0, 1.0], [1.5, 1.0]], 0.1).unwrap();
        let st = ReducedState::new([1.0, 1.0], [0.3, 2.0]);
        let o = build_pseudo_orbit(&path, &st, &p, &PseudoOrbitOptions::default()).unwrap();
        let bound = action_excursion_bound(&p);
        let mut prev = st;
        let cfg = IntegratorConfig::default();
        let mut checked = 0;
        for s in &o.steps {
            if let StepKind::Inner { t } = s.kind {
                assert_eq!(s.state.i, prev.i);
                if checked < 5 {
                    let x = InnerState {
                        i: prev.i,
                        phi: prev.theta,
                        s: 0.0,
                    };
                    let y = inner_flow(&x, t, &p, &cfg).unwrap();
                    for k in 0..2 {
                        assert!((y.i[k] - x.i[k]).abs() <= bound[k]);
                    }
                    checked += 1;
                }
            }
            prev = s.state;
        }
        assert!(checked > 0);
    }

    #[test]
    fn resonant_diagonal_uses_detour() {
        let p = ModelParams::new([0.2, 0.2, 1.0], [1.0, 1.0], 1e-3, PendulumSign::Plus).unwrap();
        let theta = crate::melnikov::theta_from_psi(0, [1.0, 1.0], [0.4, 0.4 + PI], &p).unwrap();
        let st = ReducedState::new([1.0, 1.0], theta);
        let path = ActionPath::new(vec![[1.0, 1.0], [1.3, 1.3]], 0.1).unwrap();
        let o = build_pseudo_orbit(&path, &st, &p, &PseudoOrbitOptions::default()).unwrap();
        assert!(o.detours >= 1);
        assert!(matches!(o.steps[0].kind, StepKind::Detour { .. }));
        assert!(o.final_distance <= 0.05);
        assert!(o.max_deviation <= 0.1);
    }

    #[test]
    fn large_eps_is_rejected() {
        let p = params(0.5);
        let path = ActionPath::new(vec![[1.0, 1.0], [3.0, 1.0]], 0.1).unwrap();
        let st = ReducedState::new([1.0, 1.0], [0.3, 2.0]);
        assert!(matches!(
            build_pseudo_orbit(&path, &st, &p, &PseudoOrbitOptions::default()),
            Err(DiffusionError::EpsilonTooLarge { .. })
        ));
    }

    #[test]
    fn threshold_flags_dead_direction() {
        let p = ModelParams::new([0.3, 0.0, 1.0], [1.0, 1.0], 1e-3, PendulumSign::Plus).unwrap();
        let path = ActionPath::new(vec![[1.0, 1.0], [1.0, 2.0]], 0.1).unwrap();
        assert!(matches!(
            epsilon_threshold(&path, 0.1, 3.0, 4, &p),
            Err(DiffusionError::DegenerateDirection { segment: 0 })
        ));
        let path = ActionPath::new(vec![[1.0, 1.0], [2.0, 1.0]], 0.1).unwrap();
        let th = epsilon_threshold(&path, 0.1, 3.0, 4, &p).unwrap();
        assert!(th.eps0 > 0.0 && th.m > 0.0 && th.big_m > 0.0);
    }

    #[test]
    fn threshold_is_linear_in_delta_when_small() {
        let p = params(1e-3);
        let eps0 = |d: f64| {
            let path = ActionPath::new(vec![[0.5, 1.0], [1.5, 1.0]], d).unwrap();
            epsilon_threshold(&path, d, 5.0, 4, &p).unwrap()
        };
        let (a, b, c) = (eps0(0.05), eps0(0.1), eps0(0.2));
        assert!((b.eps0 / a.eps0 - 2.0).abs() < 1e-12, "{a:?} {b:?}");
        assert!((c.eps0 / b.eps0 - 2.0).abs() < 1e-12);
        assert_eq!(a.big_m, c.big_m);
    }

    #[test]
    fn jump_vanishes_without_perturbation() {
        let p = params(0.0);
        let st = ReducedState::new([1.0, 1.0], [1.25 * PI, 1.25 * PI]);
        let j = verify_scattering_jump(&st, 0.0, 10.0, &p, &IntegratorConfig::default()).unwrap();
        assert_eq!(j.measured, [0.0, 0.0]);
        assert_eq!(j.predicted, [0.0, 0.0]);
    }
}
