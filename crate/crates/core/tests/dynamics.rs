use std::f64::consts::PI;

use fkdv::config::periodic_bo_wave;
use fkdv::diagnostics::{self, DiagnosticSpec};
use fkdv::propagator::{self, ModelParams, Nonlinearity, StepperConfig};
use fkdv::spectral::make_grid;
use fkdv::Field;

fn bo() -> ModelParams {
    ModelParams::single(1.0, 2, 1, 1).unwrap()
}

fn soliton(x: f64) -> f64 {
    4.0 / (1.0 + x * x)
}

fn run(u0: &Field, model: &ModelParams, cfg: &StepperConfig) -> propagator::Trajectory {
    propagator::evolve(u0, model, cfg, &DiagnosticSpec::default(), |_| {}).unwrap()
}

fn stepper(dt: f64, t_end: f64) -> StepperConfig {
    StepperConfig {
        dt,
        t_end,
        record_every: 10,
        ..StepperConfig::default()
    }
}

fn soliton_error(n: usize, half_length: f64) -> f64 {
    let grid = make_grid(1, n, half_length).unwrap();
    let u0 = Field::from_fn(&grid, |x| soliton(x[0]));
    let traj = run(&u0, &bo(), &stepper(1e-3, 1.0));
    let exact = Field::from_fn(&grid, |x| soliton(x[0] - 1.0));
    traj.final_state.axpy(-1.0, &exact).unwrap().l2_norm()
}

#[test]
fn soliton_travels_at_unit_speed() {
    assert!(soliton_error(1024, 100.0) < 1e-3);
}

#[test]
fn soliton_on_the_wide_box_converges_in_n() {
    // on [-100 pi, 100 pi) the soliton core spans two cells at n = 1024
    let errors: Vec<f64> = [1024, 2048, 4096].iter().map(|n| soliton_error(*n, 100.0 * PI)).collect();
    assert!(errors[0] > 0.1, "{errors:?}");
    assert!(errors[1] < errors[0] / 10.0, "{errors:?}");
    assert!(errors[2] < 1e-5, "{errors:?}");
}

#[test]
fn periodic_wave_is_translated_exactly() {
    let grid = make_grid(1, 512, 30.0).unwrap();
    let u0 = periodic_bo_wave(&grid, 1.0).unwrap();
    let cfg = StepperConfig {
        dealias_fraction: 1.0,
        ..stepper(2.5e-3, 3.0)
    };
    let traj = run(&u0, &bo(), &cfg);
    let shifted = Field::from_fn(&grid, |x| u0.interpolate(&[x[0] - 3.0]));
    let err = traj.final_state.axpy(-1.0, &shifted).unwrap().sup_norm();
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn fourth_order_self_convergence() {
    let grid = make_grid(1, 256, 30.0).unwrap();
    let u0 = periodic_bo_wave(&grid, 1.0).unwrap();
    let at = |dt: f64| {
        let cfg = StepperConfig {
            dealias_fraction: 1.0,
            record_every: 1000,
            ..stepper(dt, 2.0)
        };
        run(&u0, &bo(), &cfg).final_state
    };
    let reference = at(0.1 / 8.0);
    let errors: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|dt| at(*dt).axpy(-1.0, &reference).unwrap().l2_norm())
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 3.5, "observed order {order} from {errors:?}");
    }
}

#[test]
fn drift_shrinks_at_fourth_order() {
    let grid = make_grid(1, 256, 30.0).unwrap();
    let u0 = Field::from_fn(&grid, |x| soliton(x[0]));
    let drift = |dt: f64| {
        let traj = run(&u0, &bo(), &StepperConfig { record_every: 1, ..stepper(dt, 4.0) });
        let i2 = traj.records[0].i2;
        traj.records.iter().map(|r| (r.i2 - i2).abs() / i2).fold(0.0, f64::max)
    };
    let d: Vec<f64> = [0.05, 0.025, 0.0125].iter().map(|dt| drift(*dt)).collect();
    for w in d.windows(2) {
        assert!(w[0] / w[1] > 2f64.powf(3.5), "{d:?}");
    }
}

#[test]
fn soliton_run_conserves_invariants() {
    let grid = make_grid(1, 1024, 100.0).unwrap();
    let u0 = Field::from_fn(&grid, |x| soliton(x[0]));
    let traj = run(&u0, &bo(), &stepper(1e-3, 1.0));
    let first = &traj.records[0];
    assert!(first.i3.is_finite() && first.i3 != 0.0);
    for r in &traj.records {
        assert!((r.i1 - first.i1).abs() < 1e-12);
        assert!((r.i2 - first.i2).abs() < 1e-6 * first.i2);
        assert!((r.i3 - first.i3).abs() < 1e-5 * first.i3.abs());
    }
}

#[test]
fn combined_nonlinearities_conserve_l2() {
    let model = ModelParams::new(
        1.0,
        vec![Nonlinearity::new(2, 1).unwrap(), Nonlinearity::new(3, 1).unwrap()],
        1,
    )
    .unwrap();
    let grid = make_grid(1, 1024, 50.0).unwrap();
    let u0 = Field::from_fn(&grid, |x| 0.5 * (-x[0] * x[0] / 2.0).exp());
    let traj = run(&u0, &model, &stepper(1e-3, 1.0));
    let i2 = traj.records[0].i2;
    for r in &traj.records {
        assert!((r.i2 - i2).abs() < 1e-6 * i2);
    }
}

#[test]
fn zero_data_stays_zero() {
    let grid = make_grid(1, 128, 10.0).unwrap();
    let traj = run(&Field::zeros(&grid), &bo(), &stepper(1e-2, 0.5));
    assert_eq!(traj.final_state.sup_norm(), 0.0);
    for r in &traj.records {
        assert_eq!((r.i1, r.i2, r.i3, r.sup_norm), (0.0, 0.0, 0.0, 0.0));
        assert!(r.weighted_norms.iter().all(|(_, v)| *v == 0.0));
        assert!(r.moments.iter().all(|m| m.value == 0.0));
    }
    let mr = diagnostics::momentum_residual(&traj.records, &bo()).unwrap();
    assert_eq!(mr.residual, 0.0);
}

#[test]
fn momentum_identity_along_the_periodic_soliton() {
    let grid = make_grid(1, 1024, 100.0).unwrap();
    let u0 = periodic_bo_wave(&grid, 1.0).unwrap();
    let cfg = StepperConfig {
        dealias_fraction: 1.0,
        ..stepper(1e-3, 1.0)
    };
    let traj = run(&u0, &bo(), &cfg);
    let mr = diagnostics::momentum_residual(&traj.records, &bo()).unwrap();
    assert!(mr.residual < 1e-6, "{mr:?}");
    // the seam term is what separates the box from the line
    assert!(mr.raw_residual > 1e-2, "{mr:?}");
}

#[test]
fn free_flow_keeps_first_moment_of_mean_zero_data() {
    let free = ModelParams {
        a: 1.0,
        nonlinearities: Vec::new(),
        dim: 1,
    };
    let grid = make_grid(1, 2048, 100.0).unwrap();
    let f = Field::from_fn(&grid, |x| -2.0 * x[0] * (-x[0] * x[0]).exp());
    let spec = DiagnosticSpec::default();
    let records: Vec<_> = (0..=20)
        .map(|i| {
            let t = 0.1 * i as f64;
            let u = propagator::apply_group(&f, t, free.a).unwrap();
            diagnostics::record(&u, &free, &spec, t).unwrap()
        })
        .collect();
    let mr = diagnostics::momentum_residual(&records, &free).unwrap();
    assert!(mr.residual < 1e-8, "{mr:?}");
    let m0 = records[0].moment([1, 0]).unwrap();
    for r in &records {
        assert!((r.moment([1, 0]).unwrap() - m0).abs() < 1e-8);
        assert!((r.i1 - records[0].i1).abs() < 1e-12);
        assert!((r.i2 - records[0].i2).abs() < 1e-12 * records[0].i2);
    }
}

#[test]
fn free_flow_keeps_transverse_moment_in_two_dimensions() {
    let grid = make_grid(2, 128, 24.0).unwrap();
    let f = Field::from_fn(&grid, |x| (1.0 + 0.5 * x[1]) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp());
    let m = |u: &Field| diagnostics::moment(u, &[0, 1]).unwrap();
    let m0 = m(&f);
    for t in [0.25, 0.5, 1.0] {
        let u = propagator::apply_group(&f, t, 1.0).unwrap();
        assert!((m(&u) - m0).abs() < 1e-10, "t = {t}");
        assert!((u.integral() - f.integral()).abs() < 1e-12);
    }
}
