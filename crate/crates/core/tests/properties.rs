use std::f64::consts::PI;

use arnold::melnikov::{
    alpha, classify_crest, evaluate_reduced, psi, reduced_poincare, solve_tau_star, theta_from_psi, CrestKind,
    ReducedState,
};
use arnold::model::{hamiltonian, separatrix, vector_field_array, Branch, FullState, ModelParams, PendulumSign};
use arnold::ode::{propagate, IntegratorConfig};
use arnold::scalar::angle_diff;
use arnold::scattering::scattering_map;
use proptest::prelude::*;

fn params(eps: f64) -> ModelParams<f64> {
    ModelParams::new([0.3, 0.1, 1.0], [1.0, 1.0], eps, PendulumSign::Plus).unwrap()
}

fn angle() -> impl Strategy<Value = f64> {
    0.0..2.0 * PI
}

fn reduced(radius: f64) -> impl Strategy<Value = ReducedState<f64>> {
    (-radius..radius, -radius..radius, angle(), angle()).prop_map(|(a, b, c, d)| ReducedState::new([a, b], [c, d]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cylinder_is_invariant(i1 in -10.0..10.0f64, i2 in -10.0..10.0f64, p1 in angle(), p2 in angle(),
                             s in angle(), eps in 0.0..0.1f64) {
        let p = params(eps);
        for sign in [PendulumSign::Plus, PendulumSign::Minus] {
            let p = ModelParams::new(p.a(), p.big_omega(), eps, sign).unwrap();
            let f = vector_field_array(&FullState::new(0.0, 0.0, [i1, i2], [p1, p2], s).to_array(), &p);
            prop_assert_eq!(f[0], 0.0);
            prop_assert_eq!(f[1], 0.0);
        }
    }

    #[test]
    fn separatrix_is_reversible(tau in -20.0..20.0f64) {
        let (p_plus, q_plus) = separatrix(tau, Branch::Plus);
        let (p_minus, q_minus) = separatrix(-tau, Branch::Plus);
        prop_assert!((p_plus - p_minus).abs() < 1e-14);
        prop_assert!((q_plus + q_minus - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn unperturbed_energy_is_conserved(p0 in -1.5..1.5f64, q0 in angle(), i1 in -2.0..2.0f64, i2 in -2.0..2.0f64) {
        let p = params(0.0);
        let x = FullState::new(p0, q0, [i1, i2], [0.1, 0.2], 0.0);
        let y = propagate(|_t, y: &[f64; 7]| vector_field_array(y, &p), 0.0, x.to_array(), 10.0, &IntegratorConfig::default()).unwrap();
        let h0 = hamiltonian(&x, &p);
        let h1 = hamiltonian(&FullState::from_array(&y), &p);
        prop_assert!((h1 - h0).abs() < 1e-9 * (1.0 + h0.abs()), "{} vs {}", h0, h1);
    }

    #[test]
    fn forward_then_backward_returns(p0 in -1.0..1.0f64, q0 in angle(), i1 in -2.0..2.0f64, i2 in -2.0..2.0f64,
                                     eps in 0.0..0.05f64) {
        let p = params(eps);
        let cfg = IntegratorConfig::default();
        let field = |_t: f64, y: &[f64; 7]| vector_field_array(y, &p);
        let x0 = FullState::new(p0, q0, [i1, i2], [0.4, 1.3], 0.0).to_array();
        let x1 = propagate(field, 0.0, x0, 5.0, &cfg).unwrap();
        let back = propagate(field, 5.0, x1, 0.0, &cfg).unwrap();
        for k in 0..7 {
            prop_assert!((back[k] - x0[k]).abs() < 1e-9 * (1.0 + x0[k].abs()), "component {}: {} vs {}", k, back[k], x0[k]);
        }
    }

    #[test]
    fn angle_gradient_is_the_envelope(st in reduced(5.0)) {
        let p = params(1e-3);
        let ev = evaluate_reduced(0, &st, &p).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            prop_assert!((ev.d_angle[k] + ev.coeffs.values[k] * ev.psi[k].sin()).abs() < 1e-14);
            let mut a = st;
            let mut b = st;
            a.theta[k] += h;
            b.theta[k] -= h;
            let fd = (reduced_poincare(0, &a, &p).unwrap() - reduced_poincare(0, &b, &p).unwrap()) / (2.0 * h);
            prop_assert!((fd - ev.d_angle[k]).abs() < 1e-8, "{} vs {}", fd, ev.d_angle[k]);
        }
    }

    #[test]
    fn branches_are_ordered(st in reduced(5.0)) {
        let p = params(1e-3);
        let w = classify_crest(st.i, &p).weights;
        let kappa = (w[0].abs() + w[1].abs()).min(1.0).asin();
        let t0 = solve_tau_star(0, &st, &p).unwrap().value;
        let t1 = solve_tau_star(1, &st, &p).unwrap().value;
        let gap = (t1 - t0).abs();
        prop_assert!(gap > PI - 2.0 * kappa - 1e-12 && gap < PI + 2.0 * kappa + 1e-12, "gap {} kappa {}", gap, kappa);
    }

    #[test]
    fn psi_is_invertible(st in reduced(5.0), j in 0i32..2) {
        let p = params(1e-3);
        let ps = psi(j, &st, &p).unwrap();
        let back = theta_from_psi(j, st.i, ps, &p).unwrap();
        for k in 0..2 {
            prop_assert!(angle_diff(back[k], st.theta[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn crest_flips_at_the_bifurcation_value(share in 0.1..0.9f64, side in prop::bool::ANY) {
        // at the maximiser of α the horizontal condition reads |μ₁| + |μ₂| ≤ 1/sup α
        let w_star = 1.219_1;
        let a_max = alpha(w_star);
        let total = if side { 1.0 - 1e-4 } else { 1.0 + 1e-4 } / a_max;
        let p = ModelParams::new([share * total, (1.0 - share) * total, 1.0], [1.0, 1.0], 1e-3, PendulumSign::Plus).unwrap();
        let kind = classify_crest([w_star, w_star], &p).kind;
        prop_assert_eq!(kind, if side { CrestKind::Horizontal } else { CrestKind::Unseparated });
    }

    #[test]
    fn scattering_map_is_first_order_symplectic(st in reduced(3.0)) {
        let eps = 1e-3;
        let p = params(eps);
        let h = 1e-4;
        let x = st.to_array();
        let map = |y: [f64; 4]| scattering_map(0, &ReducedState::from_array(&y), &p).unwrap().after.to_array();
        let l = |y: [f64; 4]| reduced_poincare(0, &ReducedState::from_array(&y), &p).unwrap();
        let mut hess = [[0.0; 4]; 4];
        for r in 0..4 {
            for c in 0..4 {
                let shift = |dr: f64, dc: f64| {
                    let mut y = x;
                    y[r] += dr;
                    y[c] += dc;
                    l(y)
                };
                hess[r][c] = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
            }
        }
        // J∇L* = (∂θL*, −∂IL*)
        let jh = [hess[2], hess[3], hess[0].map(|v| -v), hess[1].map(|v| -v)];
        for c in 0..4 {
            let mut yp = x;
            let mut ym = x;
            yp[c] += h;
            ym[c] -= h;
            let (fp, fm) = (map(yp), map(ym));
            for r in 0..4 {
                let jac = (fp[r] - fm[r]) / (2.0 * h);
                let want = if r == c { 1.0 } else { 0.0 } + eps * jh[r][c];
                prop_assert!((jac - want).abs() < 1e-9, "entry ({}, {}): {} vs {}", r, c, jac, want);
            }
        }
    }
}
