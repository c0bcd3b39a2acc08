use fkdv::scenarios::{self, ScenarioConfig, ScenarioReport};

fn run(name: &str, overrides: &str) -> ScenarioReport {
    scenarios::run(&ScenarioConfig::from_toml(name, overrides).unwrap()).unwrap()
}

fn metric(report: &ScenarioReport, key: &str) -> f64 {
    report.metrics[key]
}

#[test]
fn linear_growth_defaults_pass() {
    let report = run("linear_growth", "");
    assert!(report.pass, "{report:?}");
    assert!(metric(&report, "rho.r1") <= 1.2);
}

#[test]
fn linear_growth_at_zero_weight_is_flat() {
    let report = run("linear_growth", "r_list = [0.0]");
    assert!(metric(&report, "rho.r0").abs() < 1e-10);
}

#[test]
fn group_inverse_recovers_the_weighted_norm() {
    use fkdv::diagnostics::weighted_l2_norm;
    use fkdv::propagator::apply_group;
    use fkdv::spectral::make_grid;
    use fkdv::Field;
    let grid = make_grid(1, 4096, 256.0).unwrap();
    let g = Field::from_fn(&grid, |x| (-x[0] * x[0] / 2.0).exp());
    let f = apply_group(&g, -3.0, 1.0).unwrap();
    let back = apply_group(&f, 3.0, 1.0).unwrap();
    let (want, got) = (weighted_l2_norm(&g, 1.0).unwrap(), weighted_l2_norm(&back, 1.0).unwrap());
    assert!((want - got).abs() < 1e-12 * want);
}

#[test]
fn increment_ratios_follow_the_tail_power() {
    // U(1) of a Gaussian decays like |x|^-3, its zero-mean derivative like
    // |x|^-4; each doubling multiplies the squared-norm increment by
    // 2^(2r - 2p + 1)
    let r = 2.75;
    let report = run("moment_dichotomy", "r_list = [2.75]\nt_probes = [1.0]");
    let gauss = metric(&report, "data.increment_ratio");
    let zero_mean = metric(&report, "alt_data.increment_ratio");
    assert!((gauss - 2f64.powf(2.0 * r - 5.0)).abs() < 0.02, "{gauss}");
    assert!((zero_mean - 2f64.powf(2.0 * r - 7.0)).abs() < 0.02, "{zero_mean}");
}

#[test]
fn moment_dichotomy_branches_disagree() {
    let report = run("moment_dichotomy", "");
    assert!(report.pass, "{report:?}");
    assert!(metric(&report, "data.increment_ratio") > 1.0);
    assert!(metric(&report, "alt_data.max_change") < 0.1);
    assert!(metric(&report, "alt_data.increment_ratio") < 1.0);
}

#[test]
fn no_dichotomy_at_time_zero() {
    let report = run("moment_dichotomy", "t_probes = [0.0]");
    assert!(report.pass, "{report:?}");
    assert!(metric(&report, "data.max_change") < 1e-6);
    assert!(metric(&report, "alt_data.max_change") < 1e-6);
}

#[test]
fn persistence_defaults_pass() {
    let report = run("persistence", "");
    assert!(report.pass, "{report:?}");
}

#[test]
fn persistence_of_zero_mean_data_is_cauchy() {
    let report = run(
        "persistence",
        "[data]\nkind = \"derivative_gaussian\"\naxis = 0\nwidth = 1.0\namplitude = 0.1\n",
    );
    assert!(report.pass, "{report:?}");
    let change = metric(&report, "ladder.r2.75.t1.max_change");
    assert!(change < 0.1, "{change}");
}

#[test]
fn zero_data_passes_trivially() {
    for name in ["persistence", "combined"] {
        let report = run(name, "[data]\nkind = \"zero\"\n");
        assert!(report.pass, "{name}: {report:?}");
        for (key, value) in &report.metrics {
            if key.contains("rung") || key.starts_with("envelope") || key.starts_with("momentum") {
                assert_eq!(*value, 0.0, "{name}: {key}");
            }
        }
    }
}

#[test]
fn combined_with_one_term_reproduces_persistence() {
    let model = "[model]\na = 1.0\ndim = 1\nnonlinearities = [{ k = 2, nu = 1 }]\n";
    let data = "[data]\nkind = \"gaussian\"\nwidth = 1.0\namplitude = 0.1\n";
    let stepper = "[stepper]\nt_end = 2.0\nrecord_every = 100\n";
    let text = format!("{model}{data}{stepper}");
    let combined = run("combined", &text);
    let persistence = run("persistence", &text);
    for (key, value) in &persistence.metrics {
        assert_eq!(combined.metrics[key].to_bits(), value.to_bits(), "{key}");
    }
}

#[test]
fn combined_momentum_residual() {
    let report = run("combined", "");
    assert!(report.pass, "{report:?}");
    assert!(metric(&report, "momentum.residual") < 1e-5);
}

#[test]
fn tstar_defaults_pass() {
    let report = run("tstar", "");
    assert!(report.pass, "{report:?}");
    assert!(metric(&report, "tstar.relative_error") < 0.01);
    assert!(metric(&report, "m1.slope_relative_error") < 1e-4);
}

#[test]
fn symbol_bound_on_short_ladders() {
    let report = run("symbol_bound", "[symbol]\ntimes = [0.0, 1.0, 4.0, 16.0]\nfrequencies = [2.0, 4.0, 8.0, 16.0]\n");
    assert!(report.pass, "{report:?}");
}

#[test]
fn reports_are_reproducible() {
    let a = serde_json::to_string(&run("linear_growth", "")).unwrap();
    let b = serde_json::to_string(&run("linear_growth", "")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn scenario_file_is_loaded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tstar.toml");
    std::fs::write(&path, "[thresholds]\ntstar_tol = 0.02\n").unwrap();
    let (cfg, bytes) = ScenarioConfig::load("run_tstar", Some(&path)).unwrap();
    assert_eq!(cfg.thresholds.tstar_tol, 0.02);
    assert_eq!(bytes, std::fs::read(&path).unwrap());
    assert!(ScenarioConfig::load("tstar", Some(&dir.path().join("missing.toml"))).is_err());
    let (defaults, bytes) = ScenarioConfig::load("tstar", None).unwrap();
    assert_eq!(defaults.thresholds.tstar_tol, 0.01);
    assert!(bytes.is_empty());
}
