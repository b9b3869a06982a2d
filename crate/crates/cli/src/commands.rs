use std::f64::consts::PI;
use std::path::Path;

use arnold::diffusion::{
    build_pseudo_orbit, epsilon_threshold, homoclinic_constant, optimal_path_time, time_estimate,
    verify_scattering_jump, ActionPath, PseudoOrbitOptions, StepKind,
};
use arnold::highway::{
    highway_asymptote, highway_level, highway_seed, highway_trace, project_to_level, HighwayError, Section,
    TraceConfig,
};
use arnold::melnikov::{
    classify_crest, evaluate_reduced, psi, reduced_poincare, solve_tau_star, theta_from_psi, CrestKind, ReducedState,
};
use arnold::model::{vector_field_array, FullState, ModelParams};
use arnold::ode::{propagate, EventDirection, IntegratorConfig};
use arnold::scalar::angle_diff;
use arnold::scattering::{flow_trajectory, poincare_section, scattering_flow_field, SectionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ConfigError, RunConfig};
use crate::output::{fmt, Output};
use crate::CliError;

pub fn model_params(cfg: &RunConfig) -> Result<ModelParams<f64>, CliError> {
    let m = &cfg.model;
    ModelParams::new([m.a1, m.a2, m.a3], [m.omega1, m.omega2], m.eps, m.sign).map_err(|e| {
        CliError::Config(ConfigError::Invalid {
            section: "model".into(),
            msg: e.to_string(),
        })
    })
}

pub fn integrator(cfg: &RunConfig) -> Result<IntegratorConfig<f64>, CliError> {
    let i = &cfg.integrator;
    let c = IntegratorConfig {
        abs_tol: i.abs_tol,
        rel_tol: i.rel_tol,
        h_init: i.h_init,
        h_min: i.h_min,
        h_max: i.h_max,
        max_steps: i.max_steps,
    };
    c.validate().map_err(|e| {
        CliError::Config(ConfigError::Invalid {
            section: "integrator".into(),
            msg: e.to_string(),
        })
    })?;
    Ok(c)
}

fn highway_integrator(cfg: &RunConfig) -> Result<IntegratorConfig<f64>, CliError> {
    let mut c = integrator(cfg)?;
    c.h_max = c.h_max.max(cfg.highway.h_max);
    Ok(c)
}

fn row(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| fmt(*v)).collect()
}

pub fn crest(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let p = model_params(cfg)?;
    let c = &cfg.crest;
    let info = classify_crest([c.i1, c.i2], &p);
    let n = c.grid.max(2);
    let grid = |k: usize| 2.0 * PI * k as f64 / n as f64;
    let mut o = Output::new(out, "crest")?;
    let mut rows = Vec::new();
    let header: &[&str] = match info.kind {
        CrestKind::Horizontal => {
            for a in 0..n {
                for b in 0..n {
                    let phi = [grid(a), grid(b)];
                    let (hi, lo) = info.horizontal_sheets(phi).expect("horizontal crest");
                    rows.push(row(&[phi[0], phi[1], hi, lo]));
                }
            }
            &["phi1[rad]", "phi2[rad]", "s_max[rad]", "s_min[rad]"]
        }
        CrestKind::Vertical(_) => {
            for a in 0..n {
                for b in 0..n {
                    let (other, s) = (grid(a), grid(b));
                    let (hi, lo) = info.vertical_sheets(other, s).expect("vertical crest");
                    rows.push(row(&[other, s, hi, lo]));
                }
            }
            &["phi_other[rad]", "s[rad]", "phi_max[rad]", "phi_min[rad]"]
        }
        CrestKind::Unseparated => &["phi1[rad]", "phi2[rad]", "s_max[rad]", "s_min[rad]"],
    };
    o.csv("crest.csv", header, &rows)?;
    o.finish(
        cfg,
        json!({
            "kind": format!("{:?}", info.kind),
            "weights": info.weights,
            "omega": info.omega,
            "tangency_margin": info.tangency_margin,
            "tangency_possible": info.tangency_possible,
            "grid": n,
        }),
    )?;
    Ok(())
}

pub fn tau(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let p = model_params(cfg)?;
    let t = &cfg.tau;
    let st = ReducedState::new([t.i1, t.i2], [t.theta1, t.theta2]);
    let ts = solve_tau_star(t.branch, &st, &p)?;
    let ev = evaluate_reduced(t.branch, &st, &p)?;
    let mut o = Output::new(out, "tau")?;
    o.csv(
        "tau.csv",
        &[
            "I1[action]", "I2[action]", "theta1[rad]", "theta2[rad]", "branch[-]", "tau[time]", "residual[time]",
            "psi1[rad]", "psi2[rad]", "L[energy]",
        ],
        &[vec![
            fmt(t.i1),
            fmt(t.i2),
            fmt(t.theta1),
            fmt(t.theta2),
            t.branch.to_string(),
            fmt(ts.value),
            fmt(ts.residual),
            fmt(ev.psi[0]),
            fmt(ev.psi[1]),
            fmt(ev.value),
        ]],
    )?;
    o.finish(
        cfg,
        json!({
            "tau": ts.value,
            "residual": ts.residual,
            "psi": ev.psi,
            "value": ev.value,
            "d_action": ev.d_action,
            "d_angle": ev.d_angle,
        }),
    )?;
    Ok(())
}

pub fn poincare(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let p = model_params(cfg)?;
    let ode = integrator(cfg)?;
    let c = &cfg.poincare;
    let level = reduced_poincare(
        0,
        &ReducedState::new([c.level_i1, c.level_i2], [c.level_theta1, c.level_theta2]),
        &p,
    )?;
    let seeds: Vec<_> = (0..c.seeds)
        .map(|k| {
            let f = if c.seeds > 1 { k as f64 / (c.seeds - 1) as f64 } else { 0.5 };
            let th2 = c.theta2_center - c.theta2_halfwidth + 2.0 * c.theta2_halfwidth * f;
            ReducedState::new([c.level_i1, c.level_i2], [c.level_theta1, th2])
        })
        .collect();
    let sc = SectionConfig {
        section: c.section,
        t_max: c.t_max,
        direction: EventDirection::Rising,
    };
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    let mut drift = 0.0f64;
    for r in poincare_section(0, level, &seeds, &sc, &p, &ode) {
        let orbit = r?;
        drift = drift.max(orbit.level_drift);
        counts.push(orbit.points.len());
        for pt in &orbit.points {
            rows.push(vec![orbit.orbit.to_string(), fmt(pt.t), fmt(pt.i2), fmt(pt.theta2), fmt(pt.theta1)]);
        }
    }
    let mut o = Output::new(out, "poincare")?;
    o.csv("poincare.csv", &["orbit[-]", "t[time]", "I2[action]", "theta2[rad]", "theta1[rad]"], &rows)?;
    o.finish(cfg, json!({ "level": level, "crossings": counts, "max_level_drift": drift }))?;
    if drift >= 1e-8 {
        return Err(CliError::Invariant(format!("level drift {drift:e} along a section orbit exceeds 1e-8")));
    }
    Ok(())
}

pub fn highway(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let p = model_params(cfg)?;
    let ode = highway_integrator(cfg)?;
    let h = &cfg.highway;
    let sections: Vec<_> = h.sections.iter().map(|v| Section::new(1, *v)).collect();
    let mut tc = TraceConfig::new(Section::new(0, h.stop_i1), h.t_max).with_sections(sections.clone());
    tc.max_drift = h.max_drift;
    let mut orbit_rows = Vec::new();
    let mut transit_rows = Vec::new();
    let mut summaries = Vec::new();
    for (k, &i1) in h.seeds.iter().enumerate() {
        let seed = project_to_level(&highway_seed([i1, h.start_i2], [h.branch; 2], &p)?, &p)?;
        let orbit = match highway_trace(&seed, &tc, &p, &ode) {
            Err(HighwayError::LevelDrift { drift, t }) => {
                return Err(CliError::Invariant(format!(
                    "highway orbit {k} left the level by {drift:e} at t = {t}"
                )))
            }
            other => other?,
        };
        for s in &orbit.samples {
            let x = s.state;
            orbit_rows.push({
                let mut r = vec![k.to_string()];
                r.extend(row(&[s.t, x.i[0], x.i[1], x.theta[0], x.theta[1], s.tau]));
                r
            });
        }
        for c in &orbit.crossings {
            transit_rows.push({
                let mut r = vec![k.to_string(), format!("I{}", c.section.component + 1)];
                r.extend(row(&[c.section.value, c.t, c.state.i[0], c.state.i[1]]));
                r
            });
        }
        let last = orbit.samples.last().map(|s| s.state);
        summaries.push(json!({
            "seed_i1": i1,
            "level_drift": orbit.level_drift,
            "crossings": orbit.crossings.iter().map(|c| json!({
                "component": c.section.component + 1, "value": c.section.value, "t": c.t
            })).collect::<Vec<_>>(),
            "final_state": last.map(|s| [s.i[0], s.i[1], s.theta[0], s.theta[1]]),
        }));
    }
    let asym = highway_asymptote(&p).ok();
    let mut o = Output::new(out, "highway")?;
    o.csv(
        "highway_orbits.csv",
        &["orbit[-]", "t[time]", "I1[action]", "I2[action]", "theta1[rad]", "theta2[rad]", "tau[time]"],
        &orbit_rows,
    )?;
    o.csv(
        "highway_transits.csv",
        &["orbit[-]", "section[-]", "value[action]", "t[time]", "I1[action]", "I2[action]"],
        &transit_rows,
    )?;
    o.finish(
        cfg,
        json!({
            "level": highway_level(&p),
            "branch": format!("{:?}", h.branch),
            "asymptote": asym.map(|a| json!({"slope": a.slope, "offset_plus": a.offset_plus, "offset_minus": a.offset_minus})),
            "orbits": summaries,
        }),
    )?;
    Ok(())
}

pub fn diffuse(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let d = &cfg.diffuse;
    let invalid = |msg: String| {
        CliError::Config(ConfigError::Invalid {
            section: "diffuse".into(),
            msg,
        })
    };
    let path = ActionPath::new(d.waypoints.clone(), d.delta)
        .map_err(|e| invalid(e.to_string()))?
        .with_stairstep(d.stairstep);
    let tracked = path.tracked()?;
    let radius = d.calibration_radius.unwrap_or_else(|| {
        tracked.waypoints().iter().map(|w| w[0].abs().max(w[1].abs())).fold(0.0, f64::max) + d.delta
    });
    let base = model_params(cfg)?;
    let th = epsilon_threshold(&path, d.delta, radius, d.calibration_points, &base)?;
    let eps = d.eps.unwrap_or(0.5 * th.eps0);
    let p = base.with_eps(eps).map_err(|e| invalid(e.to_string()))?;
    let start = ReducedState::new(path.start(), [d.theta1, d.theta2]);
    let opts = PseudoOrbitOptions {
        calibration_radius: Some(radius),
        calibration_points: d.calibration_points,
        ..PseudoOrbitOptions::default()
    };
    let orbit = build_pseudo_orbit(&path, &start, &p, &opts)?;
    let mut rows = vec![{
        let mut r = vec!["0".into(), "start".into()];
        r.extend(row(&[0.0, start.i[0], start.i[1], start.theta[0], start.theta[1], tracked.distance(start.i)]));
        r
    }];
    for (k, s) in orbit.steps.iter().enumerate() {
        let (kind, t) = match s.kind {
            StepKind::Scattering { .. } => ("scattering", 0.0),
            StepKind::Inner { t } => ("inner", t),
            StepKind::Detour { t } => ("detour", t),
        };
        let x = s.state;
        let mut r = vec![(k + 1).to_string(), kind.into()];
        r.extend(row(&[t, x.i[0], x.i[1], x.theta[0], x.theta[1], s.distance]));
        rows.push(r);
    }
    let t_s = optimal_path_time(&path, &p)?;
    let (lo, hi) = tracked.waypoints().iter().fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(lo, hi), w| {
        ([lo[0].min(w[0]), lo[1].min(w[1])], [hi[0].max(w[0]), hi[1].max(w[1])])
    });
    let (c, _) = homoclinic_constant([(lo[0] - d.delta, hi[0] + d.delta), (lo[1] - d.delta, hi[1] + d.delta)], &p);
    let t_h = 2.0 * (c / eps).ln();
    let mut o = Output::new(out, "diffuse")?;
    o.csv(
        "diffuse.csv",
        &[
            "step[-]", "kind[-]", "inner_time[time]", "I1[action]", "I2[action]", "theta1[rad]", "theta2[rad]",
            "distance[action]",
        ],
        &rows,
    )?;
    o.finish(
        cfg,
        json!({
            "eps": eps,
            "eps0": th.eps0,
            "m": th.m,
            "M": th.big_m,
            "scattering_steps": orbit.scattering_steps,
            "inner_steps": orbit.inner_steps,
            "inner_time": orbit.inner_time,
            "detours": orbit.detours,
            "max_deviation": orbit.max_deviation,
            "final_distance": orbit.final_distance,
            "T_s": t_s,
            "C": c,
            "T_h": t_h,
            "T_d": t_s / eps * t_h,
        }),
    )?;
    if orbit.max_deviation > d.delta {
        return Err(CliError::Invariant(format!(
            "pseudo-orbit deviates {} from the path (delta = {})",
            orbit.max_deviation, d.delta
        )));
    }
    Ok(())
}

pub fn melnikov_verify(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let p = model_params(cfg)?;
    let ode = integrator(cfg)?;
    let v = &cfg.verify;
    let st = ReducedState::new([v.i1, v.i2], [v.theta1, v.theta2]);
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &eps in &v.eps {
        let t = v.excursion.unwrap_or_else(|| (16.0 / eps).ln());
        let j = verify_scattering_jump(&st, eps, t, &p, &ode)?;
        rows.push(row(&[
            eps,
            t,
            j.measured[0],
            j.measured[1],
            j.predicted[0],
            j.predicted[1],
            j.discrepancy,
            j.endpoint_distance,
        ]));
        checks.push((eps, j));
    }
    let ratios: Vec<_> = checks
        .windows(2)
        .map(|w| json!({"eps": [w[0].0, w[1].0], "ratio": w[0].1.discrepancy / w[1].1.discrepancy}))
        .collect();
    let mut o = Output::new(out, "melnikov-verify")?;
    o.csv(
        "melnikov_verify.csv",
        &[
            "eps[-]", "excursion[time]", "dI1_measured[action]", "dI2_measured[action]", "dI1_predicted[action]",
            "dI2_predicted[action]", "discrepancy[action]", "endpoint_distance[-]",
        ],
        &rows,
    )?;
    o.finish(
        cfg,
        json!({
            "state": [v.i1, v.i2, v.theta1, v.theta2],
            "discrepancies": checks.iter().map(|c| c.1.discrepancy).collect::<Vec<_>>(),
            "ratios": ratios,
        }),
    )?;
    Ok(())
}

pub fn time_estimate_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let p = model_params(cfg)?;
    let ode = highway_integrator(cfg)?;
    let t = &cfg.time;
    let om1 = cfg.model.omega1;
    let stop = (t.omega_hi.max(t.omega_lo) / om1).abs() + 0.5;
    let seed = project_to_level(&highway_seed([t.seed_i1, t.start_i2], [t.branch; 2], &p)?, &p)?;
    let mut tc = TraceConfig::new(Section::new(0, stop), cfg.highway.t_max);
    tc.max_drift = cfg.highway.max_drift;
    let orbit = highway_trace(&seed, &tc, &p, &ode)?;
    let est = time_estimate((t.omega_lo, t.omega_hi), &orbit, p.eps(), &p, &ode)?;
    let mut o = Output::new(out, "time-estimate")?;
    o.csv(
        "time_estimate.csv",
        &[
            "eps[-]", "omega_lo[freq]", "omega_hi[freq]", "T_s[time]", "T_s_direct[time]", "C[-]", "M1[freq]",
            "M2[freq]", "T_h[time]", "T_d[time]",
        ],
        &[row(&[
            est.eps,
            t.omega_lo,
            t.omega_hi,
            est.t_s,
            est.t_s_direct,
            est.c,
            est.m_omega[0],
            est.m_omega[1],
            est.t_h,
            est.t_d,
        ])],
    )?;
    o.finish(
        cfg,
        json!({
            "T_s": est.t_s,
            "T_s_direct": est.t_s_direct,
            "C": est.c,
            "M": est.m_omega,
            "T_h": est.t_h,
            "T_d": est.t_d,
            "eps": est.eps,
        }),
    )?;
    Ok(())
}

struct CheckResult {
    name: &'static str,
    error: f64,
    tolerance: f64,
}

/// Quick invariant suite on randomly sampled states.
pub fn check(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let p = model_params(cfg)?;
    let ode = integrator(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let n = cfg.check.samples.max(1);
    let mut sample = |radius: f64| {
        ReducedState::new(
            [rng.gen_range(-radius..radius), rng.gen_range(-radius..radius)],
            [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)],
        )
    };
    let states: Vec<_> = (0..n).map(|_| sample(4.0)).collect();
    let mut results = Vec::new();

    let mut cyl = 0.0f64;
    for s in &states {
        let f = vector_field_array(&FullState::new(0.0, 0.0, s.i, s.theta, s.theta[0]).to_array(), &p);
        cyl = cyl.max(f[0].abs()).max(f[1].abs());
    }
    results.push(CheckResult { name: "cylinder_invariance", error: cyl, tolerance: 0.0 });

    let mut env = 0.0f64;
    let mut inv = 0.0f64;
    let mut order = 0.0f64;
    for s in &states {
        let ev = evaluate_reduced(0, s, &p)?;
        for k in 0..2 {
            env = env.max((ev.d_angle[k] + ev.coeffs.values[k] * ev.psi[k].sin()).abs());
        }
        let ps = psi(0, s, &p)?;
        let back = theta_from_psi(0, s.i, ps, &p)?;
        inv = inv.max(angle_diff(back[0], s.theta[0]).abs()).max(angle_diff(back[1], s.theta[1]).abs());
        let w = classify_crest(s.i, &p).weights;
        let kappa = (w[0].abs() + w[1].abs()).min(1.0).asin();
        let gap = (solve_tau_star(1, s, &p)?.value - solve_tau_star(0, s, &p)?.value).abs();
        order = order.max(((gap - PI).abs() - 2.0 * kappa).max(0.0));
    }
    results.push(CheckResult { name: "gradient_envelope", error: env, tolerance: 1e-14 });
    results.push(CheckResult { name: "psi_inverse", error: inv, tolerance: 1e-10 });
    results.push(CheckResult { name: "branch_ordering", error: order, tolerance: 1e-12 });

    let mut eq = 0.0f64;
    for th in [[0.0, 0.0], [PI, 0.0], [0.0, PI], [PI, PI]] {
        let f = scattering_flow_field(0, &ReducedState::new([0.0, 0.0], th), &p)?;
        eq = f.iter().fold(eq, |m, v| m.max(v.abs()));
    }
    results.push(CheckResult { name: "equilibria", error: eq, tolerance: 1e-14 });

    let mut drift = 0.0f64;
    for s in states.iter().take(5) {
        let l0 = reduced_poincare(0, s, &p)?;
        let tr = flow_trajectory(0, s, 100.0, &p, &ode)?;
        for x in &tr.states {
            drift = drift.max((reduced_poincare(0, &ReducedState::from_array(x), &p)? - l0).abs());
        }
    }
    results.push(CheckResult { name: "flow_energy", error: drift, tolerance: 1e-8 });

    let mut rev = 0.0f64;
    for s in states.iter().take(5) {
        let x0 = FullState::new(0.5, 1.0, s.i, s.theta, 0.0).to_array();
        let field = |_t: f64, y: &[f64; 7]| vector_field_array(y, &p);
        let x1 = propagate(field, 0.0, x0, 5.0, &ode)?;
        let back = propagate(field, 5.0, x1, 0.0, &ode)?;
        for k in 0..7 {
            rev = rev.max((back[k] - x0[k]).abs() / (1.0 + x0[k].abs()));
        }
    }
    results.push(CheckResult { name: "time_reversal", error: rev, tolerance: 10.0 * ode.rel_tol.max(ode.abs_tol) * 1e3 });

    let rows: Vec<_> = results
        .iter()
        .map(|r| {
            vec![
                r.name.to_string(),
                fmt(r.error),
                fmt(r.tolerance),
                (r.error <= r.tolerance).to_string(),
            ]
        })
        .collect();
    let failed: Vec<_> = results.iter().filter(|r| r.error > r.tolerance).map(|r| r.name).collect();
    let mut o = Output::new(out, "check")?;
    o.csv("check.csv", &["check[-]", "max_error[-]", "tolerance[-]", "pass[-]"], &rows)?;
    o.finish(
        cfg,
        json!({
            "samples": n,
            "checks": results.iter().map(|r| json!({"name": r.name, "error": r.error, "tolerance": r.tolerance})).collect::<Vec<Value>>(),
            "failed": failed,
        }),
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("failed checks: {}", failed.join(", "))))
    }
}
