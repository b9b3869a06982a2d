//! Adaptive Runge–Kutta–Fehlberg 7(8) integration with event location.
//!
//! The 8th-order solution is propagated; the embedded 7th-order solution
//! only drives step-size control. Fields are plain closures
//! `Fn(t, &[T; N]) -> [T; N]`; a field that cannot be evaluated should return
//! non-finite values, which aborts the integration with [`OdeError::NonFinite`].

use std::io::{self, Write};

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("integration span is empty (t0 == t1)")]
    EmptySpan,
    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps ({steps}) exceeded at t = {t}")]
    MaxStepsExceeded { t: f64, steps: usize },
    #[error("vector field returned a non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("no event crossing found before t = {t_end}")]
    EventNotFound { t_end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub h_init: T,
    pub h_min: T,
    pub h_max: T,
    pub max_steps: usize,
}

impl<T: Real> Default for IntegratorConfig<T> {
    fn default() -> Self {
        IntegratorConfig {
            abs_tol: T::lit(1e-12),
            rel_tol: T::lit(1e-12),
            h_init: T::lit(1e-2),
            h_min: T::lit(1e-12),
            h_max: T::lit(10.0),
            max_steps: 1_000_000,
        }
    }
}

impl<T: Real> IntegratorConfig<T> {
    pub fn with_tolerances(mut self, abs_tol: T, rel_tol: T) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_steps(mut self, h_init: T, h_min: T, h_max: T) -> Self {
        self.h_init = h_init;
        self.h_min = h_min;
        self.h_max = h_max;
        self
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        if !(self.abs_tol > T::zero() && self.rel_tol > T::zero()) {
            return Err(OdeError::InvalidConfig("tolerances must be positive"));
        }
        if !(self.h_min > T::zero() && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(OdeError::InvalidConfig("need 0 < h_min <= h_init <= h_max"));
        }
        if self.max_steps == 0 {
            return Err(OdeError::InvalidConfig("max_steps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Accepted steps of an integration, including the initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T, const N: usize> {
    pub times: Vec<T>,
    pub states: Vec<[T; N]>,
    pub stats: StepStats,
}

impl<T: Real, const N: usize> Trajectory<T, N> {
    pub fn final_time(&self) -> T {
        *self.times.last().expect("trajectory holds the initial point")
    }

    pub fn final_state(&self) -> [T; N] {
        *self.states.last().expect("trajectory holds the initial point")
    }

    /// One row per accepted step: `t` followed by the state components.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[&str]) -> io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(w, "{}", fmt17(*t))?;
            for v in x {
                write!(w, ",{}", fmt17(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt17<T: Real>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventDirection {
    Rising,
    Falling,
    Both,
}

/// Scalar event function with crossing direction and refinement tolerance.
pub struct EventSpec<G, T> {
    pub g: G,
    pub direction: EventDirection,
    pub tol: T,
}

impl<G, T: Real> EventSpec<G, T> {
    pub fn new(g: G, direction: EventDirection) -> Self {
        EventSpec {
            g,
            direction,
            tol: T::lit(1e-12),
        }
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventHit<T, const N: usize> {
    pub t: T,
    pub state: [T; N],
}

const C: [f64; 13] = [
    0.0,
    2.0 / 27.0,
    1.0 / 9.0,
    1.0 / 6.0,
    5.0 / 12.0,
    0.5,
    5.0 / 6.0,
    1.0 / 6.0,
    2.0 / 3.0,
    1.0 / 3.0,
    1.0,
    0.0,
    1.0,
];

const A: [[f64; 12]; 13] = [
    [0.0; 12],
    [2.0 / 27.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 36.0, 1.0 / 12.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 24.0, 0.0, 1.0 / 8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [5.0 / 12.0, 0.0, -25.0 / 16.0, 25.0 / 16.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 20.0, 0.0, 0.0, 1.0 / 4.0, 1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-25.0 / 108.0, 0.0, 0.0, 125.0 / 108.0, -65.0 / 27.0, 125.0 / 54.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [31.0 / 300.0, 0.0, 0.0, 0.0, 61.0 / 225.0, -2.0 / 9.0, 13.0 / 900.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.0, 0.0, 0.0, -53.0 / 6.0, 704.0 / 45.0, -107.0 / 9.0, 67.0 / 90.0, 3.0, 0.0, 0.0, 0.0, 0.0],
    [
        -91.0 / 108.0,
        0.0,
        0.0,
        23.0 / 108.0,
        -976.0 / 135.0,
        311.0 / 54.0,
        -19.0 / 60.0,
        17.0 / 6.0,
        -1.0 / 12.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        2383.0 / 4100.0,
        0.0,
        0.0,
        -341.0 / 164.0,
        4496.0 / 1025.0,
        -301.0 / 82.0,
        2133.0 / 4100.0,
        45.0 / 82.0,
        45.0 / 164.0,
        18.0 / 41.0,
        0.0,
        0.0,
    ],
    [3.0 / 205.0, 0.0, 0.0, 0.0, 0.0, -6.0 / 41.0, -3.0 / 205.0, -3.0 / 41.0, 3.0 / 41.0, 6.0 / 41.0, 0.0, 0.0],
    [
        -1777.0 / 4100.0,
        0.0,
        0.0,
        -341.0 / 164.0,
        4496.0 / 1025.0,
        -289.0 / 82.0,
        2193.0 / 4100.0,
        51.0 / 82.0,
        33.0 / 164.0,
        12.0 / 41.0,
        0.0,
        1.0,
    ],
];

// 8th-order weights; the 7th-order ones differ only in stages 0, 10, 11, 12.
const B8: [f64; 13] = [
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    34.0 / 105.0,
    9.0 / 35.0,
    9.0 / 35.0,
    9.0 / 280.0,
    9.0 / 280.0,
    0.0,
    41.0 / 840.0,
    41.0 / 840.0,
];

const ERR_WEIGHT: f64 = 41.0 / 840.0;

struct Tableau<T> {
    c: [T; 13],
    a: [[T; 12]; 13],
    b8: [T; 13],
    err: T,
}

impl<T: Real> Tableau<T> {
    fn new() -> Self {
        Tableau {
            c: C.map(T::lit),
            a: A.map(|row| row.map(T::lit)),
            b8: B8.map(T::lit),
            err: T::lit(ERR_WEIGHT),
        }
    }

    /// One step of size `h`; returns the 8th-order state and the error estimate.
    fn step<F, const N: usize>(&self, f: &F, t: T, y: &[T; N], h: T) -> ([T; N], [T; N])
    where
        F: Fn(T, &[T; N]) -> [T; N],
    {
        let mut k = [[T::zero(); N]; 13];
        k[0] = f(t, y);
        for s in 1..13 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = self.a[s][j];
                if a != T::zero() {
                    for n in 0..N {
                        ys[n] += h * a * kj[n];
                    }
                }
            }
            k[s] = f(t + self.c[s] * h, &ys);
        }
        let mut y8 = *y;
        let mut err = [T::zero(); N];
        for n in 0..N {
            let mut acc = T::zero();
            for s in 5..13 {
                acc += self.b8[s] * k[s][n];
            }
            y8[n] += h * acc;
            err[n] = h * self.err * (k[0][n] + k[10][n] - k[11][n] - k[12][n]);
        }
        (y8, err)
    }
}

/// A single RKF78 step of size `h`, returning the 8th-order state.
pub fn rkf78_step<T: Real, F, const N: usize>(f: &F, t: T, y: &[T; N], h: T) -> [T; N]
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    Tableau::new().step(f, t, y, h).0
}

/// Integrates with `n` equal steps and no error control (order studies).
pub fn integrate_fixed<T: Real, F, const N: usize>(f: F, t0: T, x0: [T; N], t1: T, n: usize) -> [T; N]
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    let tab = Tableau::new();
    let h = (t1 - t0) / T::from_usize(n).expect("step count fits");
    let mut y = x0;
    for k in 0..n {
        let t = t0 + T::from_usize(k).expect("index fits") * h;
        y = tab.step(&f, t, &y, h).0;
    }
    y
}

fn error_norm<T: Real, const N: usize>(err: &[T; N], y0: &[T; N], y1: &[T; N], cfg: &IntegratorConfig<T>) -> T {
    let mut m = T::zero();
    for n in 0..N {
        let scale = cfg.abs_tol + cfg.rel_tol * y0[n].abs().max(y1[n].abs());
        m = m.max(err[n].abs() / scale);
    }
    m
}

fn all_finite<T: Real, const N: usize>(y: &[T; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Adaptive driver. `on_step` sees every accepted step `(t_prev, y_prev, t, y, h)`
/// and may stop the integration by returning `false`.
struct Driver<'a, T, F, const N: usize> {
    f: &'a F,
    cfg: &'a IntegratorConfig<T>,
    tab: Tableau<T>,
    stats: StepStats,
}

impl<'a, T: Real, F, const N: usize> Driver<'a, T, F, N>
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    fn new(f: &'a F, cfg: &'a IntegratorConfig<T>) -> Result<Self, OdeError> {
        cfg.validate()?;
        Ok(Driver {
            f,
            cfg,
            tab: Tableau::new(),
            stats: StepStats::default(),
        })
    }

    fn run<S>(&mut self, t0: T, x0: [T; N], t1: T, mut on_step: S) -> Result<(T, [T; N]), OdeError>
    where
        S: FnMut(&Tableau<T>, T, &[T; N], T, &[T; N]) -> Result<bool, OdeError>,
    {
        if t0 == t1 {
            return Err(OdeError::EmptySpan);
        }
        if !all_finite(&x0) {
            return Err(OdeError::NonFinite { t: t0.as_f64() });
        }
        let dir = (t1 - t0).signum();
        let mut h = self.cfg.h_init.min((t1 - t0).abs());
        let mut t = t0;
        let mut y = x0;
        let safety = T::lit(0.9);
        let shrink = T::lit(0.2);
        let grow = T::lit(5.0);
        let eighth = T::lit(0.125);
        loop {
            if self.stats.accepted >= self.cfg.max_steps {
                return Err(OdeError::MaxStepsExceeded {
                    t: t.as_f64(),
                    steps: self.cfg.max_steps,
                });
            }
            let remaining = (t1 - t).abs();
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            let (y_new, err) = self.tab.step(self.f, t, &y, dir * h_try);
            self.stats.evaluations += 13;
            let en = error_norm(&err, &y, &y_new, self.cfg);
            if !en.is_finite() || !all_finite(&y_new) {
                if h_try <= self.cfg.h_min {
                    return Err(OdeError::NonFinite { t: t.as_f64() });
                }
                self.stats.rejected += 1;
                h = (h_try * shrink).max(self.cfg.h_min);
                continue;
            }
            let factor = if en == T::zero() {
                grow
            } else {
                (safety * en.powf(-eighth)).max(shrink).min(grow)
            };
            if en <= T::one() {
                let t_new = if last { t1 } else { t + dir * h_try };
                self.stats.accepted += 1;
                let keep_going = on_step(&self.tab, t, &y, t_new, &y_new)?;
                t = t_new;
                y = y_new;
                if last || !keep_going {
                    return Ok((t, y));
                }
                h = (h_try * factor).min(self.cfg.h_max);
            } else {
                self.stats.rejected += 1;
                let h_new = h_try * factor;
                if h_new < self.cfg.h_min {
                    return Err(OdeError::StepSizeUnderflow {
                        t: t.as_f64(),
                        h: h_new.as_f64(),
                    });
                }
                h = h_new;
            }
        }
    }
}

/// Integrates from `t0` to `t1` (either direction), storing every accepted step.
pub fn integrate<T: Real, F, const N: usize>(
    f: F,
    t0: T,
    x0: [T; N],
    t1: T,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<T, N>, OdeError>
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    let mut driver = Driver::new(&f, cfg)?;
    let mut times = vec![t0];
    let mut states = vec![x0];
    driver.run(t0, x0, t1, |_, _, _, t, y| {
        times.push(t);
        states.push(*y);
        Ok(true)
    })?;
    Ok(Trajectory {
        times,
        states,
        stats: driver.stats,
    })
}

/// Like [`integrate`] but keeps only the final state.
pub fn propagate<T: Real, F, const N: usize>(
    f: F,
    t0: T,
    x0: [T; N],
    t1: T,
    cfg: &IntegratorConfig<T>,
) -> Result<[T; N], OdeError>
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    let mut driver = Driver::new(&f, cfg)?;
    Ok(driver.run(t0, x0, t1, |_, _, _, _, _| Ok(true))?.1)
}

fn crossed<T: Real>(g0: T, g1: T, dir: EventDirection) -> bool {
    let rising = g0 < T::zero() && g1 >= T::zero();
    let falling = g0 > T::zero() && g1 <= T::zero();
    match dir {
        EventDirection::Rising => rising,
        EventDirection::Falling => falling,
        EventDirection::Both => rising || falling,
    }
}

/// Locates the root of `g` inside an accepted step by re-stepping from its start.
fn refine<T: Real, F, G, const N: usize>(
    tab: &Tableau<T>,
    f: &F,
    g: &G,
    tol: T,
    t0: T,
    y0: &[T; N],
    t1: T,
    y1: &[T; N],
) -> EventHit<T, N>
where
    F: Fn(T, &[T; N]) -> [T; N],
    G: Fn(T, &[T; N]) -> T,
{
    let at = |dt: T| -> [T; N] {
        if dt == T::zero() {
            *y0
        } else {
            tab.step(f, t0, y0, dt).0
        }
    };
    let h = t1 - t0;
    let mut lo = T::zero();
    let mut hi = h;
    let mut g_lo = g(t0, y0);
    let mut g_hi = g(t1, y1);
    if g_hi == T::zero() {
        return EventHit { t: t1, state: *y1 };
    }
    // Bisection to a coarse bracket, then secant with bracketing safeguard.
    let coarse = h.abs() * T::lit(1e-6);
    while (hi - lo).abs() > coarse {
        let mid = T::lit(0.5) * (lo + hi);
        let g_mid = g(t0 + mid, &at(mid));
        if g_mid == T::zero() {
            return EventHit {
                t: t0 + mid,
                state: at(mid),
            };
        }
        if (g_mid < T::zero()) == (g_lo < T::zero()) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    let mut best = if g_lo.abs() < g_hi.abs() { lo } else { hi };
    let mut best_g = g_lo.abs().min(g_hi.abs());
    for _ in 0..50 {
        if best_g < tol || hi == lo {
            break;
        }
        let mut x = hi - g_hi * (hi - lo) / (g_hi - g_lo);
        let inside = (x - lo) * (x - hi) < T::zero();
        if !inside || !x.is_finite() {
            x = T::lit(0.5) * (lo + hi);
        }
        let gx = g(t0 + x, &at(x));
        if gx.abs() < best_g {
            best = x;
            best_g = gx.abs();
        }
        if gx == T::zero() {
            break;
        }
        if (gx < T::zero()) == (g_lo < T::zero()) {
            lo = x;
            g_lo = gx;
        } else {
            hi = x;
            g_hi = gx;
        }
    }
    EventHit {
        t: t0 + best,
        state: at(best),
    }
}

/// Integrates until the first crossing of the event function, or fails with
/// [`OdeError::EventNotFound`] at `t_max`.
pub fn integrate_to_event<T: Real, F, G, const N: usize>(
    f: F,
    t0: T,
    x0: [T; N],
    t_max: T,
    event: &EventSpec<G, T>,
    cfg: &IntegratorConfig<T>,
) -> Result<EventHit<T, N>, OdeError>
where
    F: Fn(T, &[T; N]) -> [T; N],
    G: Fn(T, &[T; N]) -> T,
{
    let hits = integrate_events(&f, t0, x0, t_max, event, cfg, Some(1))?.0;
    hits.into_iter()
        .next()
        .ok_or(OdeError::EventNotFound { t_end: t_max.as_f64() })
}

/// Collects event crossings over `[t0, t1]`, stopping early after `limit` hits.
/// Returns the hits and the state where integration stopped.
pub fn integrate_events<T: Real, F, G, const N: usize>(
    f: &F,
    t0: T,
    x0: [T; N],
    t1: T,
    event: &EventSpec<G, T>,
    cfg: &IntegratorConfig<T>,
    limit: Option<usize>,
) -> Result<(Vec<EventHit<T, N>>, T, [T; N]), OdeError>
where
    F: Fn(T, &[T; N]) -> [T; N],
    G: Fn(T, &[T; N]) -> T,
{
    let mut driver = Driver::new(f, cfg)?;
    let mut hits = Vec::new();
    let mut g_prev = (event.g)(t0, &x0);
    let (t_end, y_end) = driver.run(t0, x0, t1, |tab, ta, ya, tb, yb| {
        let g_new = (event.g)(tb, yb);
        if crossed(g_prev, g_new, event.direction) {
            hits.push(refine(tab, f, &event.g, event.tol, ta, ya, tb, yb));
        }
        g_prev = g_new;
        Ok(limit.is_none_or(|l| hits.len() < l))
    })?;
    Ok((hits, t_end, y_end))
}

/// Dense run with several events. Every accepted step is stored; hits are
/// tagged with the index of their event. The first hit of event `terminal`
/// ends the run and becomes the last stored sample.
pub fn integrate_with_events<T: Real, F, G, const N: usize>(
    f: &F,
    t0: T,
    x0: [T; N],
    t1: T,
    events: &[EventSpec<G, T>],
    terminal: Option<usize>,
    cfg: &IntegratorConfig<T>,
) -> Result<(Trajectory<T, N>, Vec<(usize, EventHit<T, N>)>), OdeError>
where
    F: Fn(T, &[T; N]) -> [T; N],
    G: Fn(T, &[T; N]) -> T,
{
    let mut driver = Driver::new(f, cfg)?;
    let mut times = vec![t0];
    let mut states = vec![x0];
    let mut hits = Vec::new();
    let mut g_prev: Vec<T> = events.iter().map(|e| (e.g)(t0, &x0)).collect();
    driver.run(t0, x0, t1, |tab, ta, ya, tb, yb| {
        let mut stop = None;
        for (k, ev) in events.iter().enumerate() {
            let g_new = (ev.g)(tb, yb);
            if crossed(g_prev[k], g_new, ev.direction) {
                let hit = refine(tab, f, &ev.g, ev.tol, ta, ya, tb, yb);
                if terminal == Some(k) {
                    stop = Some(hit);
                }
                hits.push((k, hit));
            }
            g_prev[k] = g_new;
        }
        match stop {
            Some(hit) => {
                // drop non-terminal hits past the stopping time
                let dir = (tb - ta).signum();
                hits.retain(|(_, h)| (h.t - hit.t) * dir <= T::zero());
                times.push(hit.t);
                states.push(hit.state);
                Ok(false)
            }
            None => {
                times.push(tb);
                states.push(*yb);
                Ok(true)
            }
        }
    })?;
    hits.sort_by(|a, b| {
        let d = (a.1.t - b.1.t) * (t1 - t0).signum();
        d.partial_cmp(&T::zero()).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok((
        Trajectory {
            times,
            states,
            stats: driver.stats,
        },
        hits,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{separatrix, Branch};
    use std::f64::consts::PI;

    fn oscillator(_t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], -y[0]]
    }

    fn pendulum(_t: f64, y: &[f64; 2]) -> [f64; 2] {
        // (p, q) with q' = p, p' = sin q
        [y[1].sin(), y[0]]
    }

    #[test]
    fn oscillator_period() {
        let cfg = IntegratorConfig::default();
        let y = propagate(oscillator, 0.0, [1.0, 0.0], 2.0 * PI, &cfg).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-10 && y[1].abs() < 1e-10, "{y:?}");
    }

    #[test]
    fn separatrix_transport() {
        let cfg = IntegratorConfig::default();
        let (p, q) = separatrix(-3.0, Branch::Plus);
        let y = propagate(pendulum, 0.0, [p, q], 6.0, &cfg).unwrap();
        let (pe, qe) = separatrix(3.0, Branch::Plus);
        assert!((y[0] - pe).abs() < 1e-9 && (y[1] - qe).abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn backward_and_reversal() {
        let cfg = IntegratorConfig::default();
        let x0 = [0.3, 1.1];
        let fwd = propagate(pendulum, 0.0, x0, 7.5, &cfg).unwrap();
        let back = propagate(pendulum, 7.5, fwd, 0.0, &cfg).unwrap();
        assert!((back[0] - x0[0]).abs() < 1e-11 && (back[1] - x0[1]).abs() < 1e-11);
    }

    #[test]
    fn eighth_order_convergence() {
        let exact = [1.0f64.cos(), -1.0f64.sin()];
        let err = |n| {
            let y = integrate_fixed(oscillator, 0.0, [1.0, 0.0], 1.0, n);
            ((y[0] - exact[0]).powi(2) + (y[1] - exact[1]).powi(2)).sqrt()
        };
        let (e1, e2) = (err(4), err(8));
        let order = (e1 / e2).log2();
        assert!(order > 7.5 && order < 9.5, "observed order {order}");
    }

    #[test]
    fn event_quarter_period() {
        let cfg = IntegratorConfig::default();
        let ev = EventSpec::new(|_t: f64, y: &[f64; 2]| y[0], EventDirection::Falling);
        let hit = integrate_to_event(oscillator, 0.0, [1.0, 0.0], 10.0, &ev, &cfg).unwrap();
        assert!((hit.t - PI / 2.0).abs() < 1e-9, "{}", hit.t);
        assert!(hit.state[0].abs() < 1e-12);
        let ev = EventSpec::new(|_t: f64, y: &[f64; 2]| y[0], EventDirection::Rising);
        let hit = integrate_to_event(oscillator, 0.0, [1.0, 0.0], 10.0, &ev, &cfg).unwrap();
        assert!((hit.t - 1.5 * PI).abs() < 1e-9);
    }

    #[test]
    fn dense_run_with_terminal_event() {
        let cfg = IntegratorConfig::default();
        // oscillator x = cos t: x = 0.5 at π/3, x = 0 at π/2, x = −0.5 at 2π/3
        let evs: Vec<_> = [0.5, -0.5, 0.0]
            .iter()
            .map(|&c| EventSpec::new(move |_t: f64, y: &[f64; 2]| y[0] - c, EventDirection::Falling))
            .collect();
        let (tr, hits) = integrate_with_events(&oscillator, 0.0, [1.0, 0.0], 10.0, &evs, Some(1), &cfg).unwrap();
        assert!((tr.final_time() - 2.0 * PI / 3.0).abs() < 1e-9);
        let ids: Vec<usize> = hits.iter().map(|h| h.0).collect();
        assert_eq!(ids, vec![0, 2, 1]);
        assert!((hits[1].1.t - PI / 2.0).abs() < 1e-9);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn event_not_found() {
        let cfg = IntegratorConfig::default();
        let ev = EventSpec::new(|_t: f64, _y: &[f64; 2]| 1.0, EventDirection::Both);
        let r = integrate_to_event(oscillator, 0.0, [1.0, 0.0], 10.0, &ev, &cfg);
        assert!(matches!(r, Err(OdeError::EventNotFound { .. })));
    }

    #[test]
    fn errors_are_reported() {
        let cfg = IntegratorConfig::default();
        assert_eq!(propagate(oscillator, 1.0, [1.0, 0.0], 1.0, &cfg), Err(OdeError::EmptySpan));
        let tight = IntegratorConfig {
            max_steps: 3,
            ..cfg
        };
        assert!(matches!(
            propagate(oscillator, 0.0, [1.0, 0.0], 100.0, &tight),
            Err(OdeError::MaxStepsExceeded { .. })
        ));
        let blowup = |_t: f64, y: &[f64; 1]| [y[0] * y[0]];
        assert!(propagate(blowup, 0.0, [1.0], 2.0, &cfg).is_err());
        let bad = IntegratorConfig { h_min: 1.0, ..cfg };
        assert!(matches!(propagate(oscillator, 0.0, [1.0, 0.0], 1.0, &bad), Err(OdeError::InvalidConfig(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let cfg = IntegratorConfig::default();
        let tr = integrate(oscillator, 0.0, [1.0, 0.0], 1.0, &cfg).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, &["t", "x", "v"]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), tr.times.len() + 1);
        assert!(text.starts_with("t,x,v\n"));
    }

    #[test]
    fn works_in_f32() {
        let cfg = IntegratorConfig::<f32>::default().with_tolerances(1e-6, 1e-6);
        let y = propagate(|_t: f32, y: &[f32; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], std::f32::consts::TAU, &cfg).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-4);
    }
}
