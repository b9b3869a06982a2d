//! Adaptive Gauss–Kronrod (7, 15) quadrature.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("quadrature did not reach tolerance (estimated error {error}) within {intervals} intervals")]
    NotConverged { error: f64, intervals: usize },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Result<(T, T), QuadError> {
    let c = T::lit(0.5) * (a + b);
    let h = T::lit(0.5) * (b - a);
    let mut kron = T::zero();
    let mut gauss = T::zero();
    for k in 0..8 {
        let x = T::lit(XGK[k]);
        let pts: &[T] = if k == 7 { &[T::zero()] } else { &[x, -x] };
        for &dx in pts {
            let xx = c + h * dx;
            let v = f(xx);
            if !v.is_finite() {
                return Err(QuadError::NonFinite { x: xx.as_f64() });
            }
            kron += T::lit(WGK[k]) * v;
            if k % 2 == 1 {
                gauss += T::lit(WG[k / 2]) * v;
            }
        }
    }
    Ok((kron * h, ((kron - gauss) * h).abs()))
}

/// Integrates `f` over `[a, b]` until the summed error estimate is below
/// `max(abs_tol, rel_tol·|value|)`, bisecting the worst interval each round.
pub fn integrate<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
    max_intervals: usize,
) -> Result<QuadResult<T>, QuadError> {
    let (v, e) = gk15(&mut f, a, b)?;
    let mut parts = vec![(a, b, v, e)];
    loop {
        let value = parts.iter().fold(T::zero(), |s, p| s + p.2);
        let error = parts.iter().fold(T::zero(), |s, p| s + p.3);
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(QuadResult {
                value,
                error,
                intervals: parts.len(),
            });
        }
        if parts.len() >= max_intervals {
            return Err(QuadError::NotConverged {
                error: error.as_f64(),
                intervals: parts.len(),
            });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(k, _)| k)
            .expect("at least one interval");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = T::lit(0.5) * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid)?;
        let (v2, e2) = gk15(&mut f, mid, hi)?;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}
