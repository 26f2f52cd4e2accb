mod common;

use std::f64::consts::PI;

use energy_orbit::optimizer::{multi_start, SolverConfig};
use energy_orbit::orbit::*;
use energy_orbit::potentials::{make_combined, make_power_law, Potential};
use energy_orbit::Error;

fn solve(model: &dyn Potential, cfg: &SolverConfig) -> OrbitSolution {
    let ms = multi_start(cfg, model).unwrap();
    let best = ms.best().unwrap();
    orbit_from_loop(&best.minimizer, cfg.h, model, &cfg.grid().unwrap(), DEFAULT_OUT_SAMPLES).unwrap()
}

fn harmonic_cfg(h: f64) -> SolverConfig {
    SolverConfig { nodes: 48, starts: 2, ..SolverConfig::with_harmonics(h, 5) }
}

#[test]
fn doubled_period_is_detected() {
    let model = make_power_law(0.5, 1, 2).unwrap();
    let good = solve(&model, &harmonic_cfg(1.0));
    let bad = rescale(&good.unit_loop, 2.0 * good.period, 1.0, &model, DEFAULT_OUT_SAMPLES).unwrap();
    assert!(good.diagnostics.ode_residual_inf <= 1e-8);
    assert!(bad.diagnostics.ode_residual_inf >= 1e4 * good.diagnostics.ode_residual_inf);
    assert!(bad.diagnostics.energy_err_inf > 1e-2);
}

#[test]
fn constant_fake_orbit_does_not_close() {
    let model = make_power_law(1.0, 2, 2).unwrap();
    let mut fake = solve(&model, &SolverConfig { starts: 1, ..SolverConfig::with_harmonics(3.0, 7) });
    let q0 = vec![0.8, -0.3];
    for s in &mut fake.orbit_samples {
        s.q = q0.clone();
        s.v = vec![0.0, 0.0];
    }
    match verify_by_integration(&fake, &model, DEFAULT_STEPS) {
        Err(Error::IntegratorBlowup { .. }) => {}
        Ok(d) => assert!(d.closure_error.unwrap() > 1e3 * Thresholds::default().closure, "{d:?}"),
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn stormer_verlet_is_second_order() {
    let model = make_power_law(0.5, 1, 2).unwrap();
    let orbit = solve(&model, &harmonic_cfg(1.0));
    let closure = |steps| verify_by_integration(&orbit, &model, steps).unwrap().closure_error.unwrap();
    let errs: Vec<f64> = [512, 1024, 2048, 4096].into_iter().map(closure).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.2..=4.8).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn harmonic_verification_bounds() {
    let model = make_power_law(0.5, 1, 2).unwrap();
    let orbit = solve(&model, &harmonic_cfg(1.0));
    let d = verify_by_integration(&orbit, &model, 4096).unwrap();
    assert!(d.closure_error.unwrap() <= 1e-5 && d.integrator_energy_drift.unwrap() <= 1e-6, "{d:?}");
    let rk = verify_with(&orbit, &model, 4096, Integrator::Rk4).unwrap();
    assert!(rk.closure_error.unwrap() <= 1e-8, "{rk:?}");
    assert!((orbit.period - 2.0 * PI).abs() <= 1e-6 * 2.0 * PI);
}

#[test]
fn samples_follow_the_rescaled_loop() {
    let model = make_power_law(1.0, 2, 2).unwrap();
    let orbit = solve(&model, &SolverConfig { starts: 1, ..SolverConfig::with_harmonics(3.0, 7) });
    let n = orbit.orbit_samples.len();
    let mut q = vec![0.0; 2];
    let mut v = vec![0.0; 2];
    for (i, s) in orbit.orbit_samples.iter().enumerate() {
        assert!((s.t - i as f64 * orbit.period / n as f64).abs() <= 1e-14 * orbit.period);
        orbit.unit_loop.eval(s.t / orbit.period, &mut q);
        orbit.unit_loop.eval_velocity(s.t / orbit.period, &mut v);
        for d in 0..2 {
            assert!((s.q[d] - q[d]).abs() <= 1e-14);
            assert!((s.v[d] - v[d] / orbit.period).abs() <= 1e-13);
        }
        if i + n / 2 < n {
            let other = &orbit.orbit_samples[i + n / 2];
            assert!((other.q[0] + s.q[0]).abs() <= 1e-10 && (other.q[1] + s.q[1]).abs() <= 1e-10);
        }
    }
    assert!(orbit.diagnostics.antiperiodicity_error <= 1e-10);
}

#[test]
fn fixture_orbits_satisfy_energy_and_residual_consistency() {
    let harmonic = make_power_law(0.5, 1, 2).unwrap();
    let quartic = make_power_law(1.0, 2, 2).unwrap();
    let combined = make_combined(1.0, 1, 2).unwrap();
    let cases: [(&dyn Potential, SolverConfig); 3] = [
        (&harmonic, harmonic_cfg(1.0)),
        (&quartic, SolverConfig { starts: 2, ..SolverConfig::with_harmonics(3.0, 15) }),
        (&combined, SolverConfig { starts: 2, ..SolverConfig::with_harmonics(2.0, 15) }),
    ];
    for (model, cfg) in cases {
        let mut orbit = solve(model, &cfg);
        orbit.verify(model, DEFAULT_STEPS, Integrator::StormerVerlet).unwrap();
        let d = &orbit.diagnostics;
        assert!(d.energy_err_inf <= 1e-6 * (1.0 + cfg.h.abs()), "{}: {d:?}", model.label());
        // d/dt E = <q', q'' + V'(q)>, so the energy error is bounded by the residual
        let bound = d.energy_err_initial + orbit.period * d.max_speed * d.ode_residual_inf;
        assert!(d.energy_err_inf <= bound, "{}: {} > {bound}", model.label(), d.energy_err_inf);
        assert!(d.is_nonconstant());
        assert!(Thresholds::default().breaches(d, cfg.h).is_empty(), "{}: {d:?}", model.label());
    }
}

#[test]
fn quartic_period_scales_as_inverse_fourth_root_of_energy() {
    let quartic = make_power_law(1.0, 2, 2).unwrap();
    let t = |h: f64| solve(&quartic, &SolverConfig { starts: 2, ..SolverConfig::with_harmonics(h, 15) }).period;
    let (t1, t3) = (t(1.0), t(3.0));
    assert!(t3 < t1);
    assert!((t3 / t1 - 3f64.powf(-0.25)).abs() <= 1e-6, "{t1} {t3}");
}

#[test]
fn orbit_serializes_losslessly() {
    let model = make_power_law(0.5, 1, 2).unwrap();
    let orbit = rescale(&solve(&model, &harmonic_cfg(2.0)).unit_loop, 2.0 * PI, 2.0, &model, 16).unwrap();
    let text = serde_json::to_string(&orbit).unwrap();
    let back: OrbitSolution = serde_json::from_str(&text).unwrap();
    assert_eq!(back, orbit);
    let mut csv = Vec::new();
    orbit.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let row: Vec<f64> = text.lines().nth(3).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    let s = &orbit.orbit_samples[2];
    assert_eq!(row, [vec![s.t], s.q.clone(), s.v.clone()].concat());
}
