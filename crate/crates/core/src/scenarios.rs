//! Turnkey experiment protocols reporting pass/fail against declared
//! thresholds.
//!
//! A scenario starts from per-name defaults ([`ScenarioConfig::defaults`]);
//! a user file overrides any subset of keys. Weighted-norm divergence is
//! measured along a box-doubling ladder at fixed spacing. With `N_i` the norm
//! on rung `i`, the ladder is divergent when the increments
//! `N_(i+1)^2 - N_i^2` do not decay (a tail `|x|^(-p)` with `2r - 2p > -1`
//! adds a fixed factor `2^(2r - 2p + 1)` per doubling), and Cauchy when
//! successive norms agree to a relative tolerance.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{self, DataSpec, GridSpec};
use crate::diagnostics::{self, DiagnosticRecord, DiagnosticSpec};
use crate::error::{Error, Result};
use crate::propagator::{self, ModelParams, Nonlinearity, StepperConfig};
use crate::spectral::{Field, Grid};

pub const NAMES: &[&str] = &[
    "linear_growth",
    "moment_dichotomy",
    "persistence",
    "tstar",
    "symbol_bound",
    "combined",
];

/// Canonical scenario name; accepts a `run_` prefix.
pub fn canonical_name(name: &str) -> Result<&'static str> {
    let bare = name.strip_prefix("run_").unwrap_or(name);
    NAMES
        .iter()
        .find(|n| **n == bare)
        .copied()
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario `{name}`; valid names: {}",
                NAMES.join(", ")
            ))
        })
}

/// Calibration constants. None of these come from the theory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Minimum ratio of successive squared-norm increments along the ladder
    /// for a divergent ladder.
    pub increment_ratio: f64,
    /// Maximum relative change per doubling for a Cauchy ladder.
    pub cauchy_tol: f64,
    /// Allowed excess of the fitted growth exponent over `r`.
    pub exponent_slack: f64,
    /// Bound on `||<x>^r U(t)f|| / (<t>^r (||J^(ar) f|| + ||<x>^r f||))`.
    pub bound_constant: f64,
    /// Bound on `||<x>^r u(t)|| / (<t>^r ||<x>^r u_0||)`.
    pub envelope_constant: f64,
    /// Largest admissible edge-to-peak ratio before a time is discarded.
    pub boundary_tol: f64,
    pub tstar_tol: f64,
    pub slope_tol: f64,
    pub momentum_tol: f64,
    /// `|int u_0| / int |u_0|` below this counts as zero mean.
    pub mean_tol: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            increment_ratio: 1.0,
            cauchy_tol: 0.1,
            exponent_slack: 0.2,
            bound_constant: 10.0,
            envelope_constant: 10.0,
            boundary_tol: 1e-6,
            tstar_tol: 0.01,
            slope_tol: 1e-4,
            momentum_tol: 1e-5,
            mean_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymbolSpec {
    pub b: f64,
    pub times: Vec<f64>,
    pub frequencies: Vec<f64>,
}

impl Default for SymbolSpec {
    fn default() -> Self {
        SymbolSpec {
            b: 0.5,
            times: vec![0.0, 1.0, 4.0, 16.0, 64.0],
            frequencies: vec![0.0, 4.0, 16.0, 64.0, 256.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelParams,
    /// Grids `(n, L)`, coarsest first.
    pub ladder: Vec<GridSpec>,
    pub stepper: StepperConfig,
    pub data: DataSpec,
    #[serde(default)]
    pub alt_data: Option<DataSpec>,
    pub r_list: Vec<f64>,
    pub t_probes: Vec<f64>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub symbol: SymbolSpec,
}

fn gaussian(amplitude: f64) -> DataSpec {
    DataSpec::Gaussian {
        center: Vec::new(),
        width: 1.0,
        amplitude,
    }
}

fn derivative_gaussian(amplitude: f64) -> DataSpec {
    DataSpec::DerivativeGaussian {
        axis: 0,
        center: Vec::new(),
        width: 1.0,
        amplitude,
    }
}

fn ladder(rungs: &[(usize, f64)]) -> Vec<GridSpec> {
    rungs.iter().map(|&(n, half_length)| GridSpec { n, half_length }).collect()
}

impl ScenarioConfig {
    pub fn defaults(name: &str) -> Result<ScenarioConfig> {
        let name = canonical_name(name)?;
        let bo = ModelParams::single(1.0, 2, 1, 1)?;
        let box_ladder = ladder(&[(1024, 64.0), (2048, 128.0), (4096, 256.0)]);
        let base = ScenarioConfig {
            name: name.to_string(),
            model: bo.clone(),
            ladder: box_ladder.clone(),
            stepper: StepperConfig::default(),
            data: gaussian(1.0),
            alt_data: None,
            r_list: Vec::new(),
            t_probes: Vec::new(),
            thresholds: Thresholds::default(),
            symbol: SymbolSpec::default(),
        };
        Ok(match name {
            "linear_growth" => ScenarioConfig {
                ladder: ladder(&[(8192, 512.0)]),
                r_list: vec![0.0, 0.5, 1.0, 1.5],
                t_probes: vec![1.0, 2.0, 4.0, 8.0, 16.0],
                ..base
            },
            "moment_dichotomy" => ScenarioConfig {
                alt_data: Some(derivative_gaussian(1.0)),
                r_list: vec![2.75],
                t_probes: vec![1.0],
                ..base
            },
            "persistence" => ScenarioConfig {
                stepper: StepperConfig {
                    t_end: 2.0,
                    record_every: 100,
                    ..StepperConfig::default()
                },
                data: gaussian(0.1),
                r_list: vec![1.0, 2.0, 2.75],
                t_probes: vec![1.0, 2.0],
                ..base
            },
            "tstar" => ScenarioConfig {
                ladder: ladder(&[(4096, 200.0)]),
                stepper: StepperConfig {
                    t_end: 4.0,
                    record_every: 10,
                    ..StepperConfig::default()
                },
                data: derivative_gaussian(-4.0),
                ..base
            },
            "symbol_bound" => ScenarioConfig {
                model: ModelParams::single(0.5, 2, 1, 1)?,
                ladder: Vec::new(),
                ..base
            },
            "combined" => ScenarioConfig {
                model: ModelParams::new(1.0, vec![Nonlinearity::new(2, 1)?, Nonlinearity::new(3, 1)?], 1)?,
                stepper: StepperConfig {
                    t_end: 2.0,
                    record_every: 10,
                    ..StepperConfig::default()
                },
                data: gaussian(0.5),
                r_list: vec![1.0, 2.0, 2.75],
                t_probes: vec![1.0, 2.0],
                ..base
            },
            _ => unreachable!(),
        })
    }

    /// Defaults for `name` overlaid with `text` (TOML, possibly empty).
    pub fn from_toml(name: &str, text: &str) -> Result<ScenarioConfig> {
        let defaults = ScenarioConfig::defaults(name)?;
        let mut table = match toml::Value::try_from(&defaults).map_err(|e| Error::Config(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!(),
        };
        let user = config::parse_table(text)?;
        if let Some(given) = user.get("name") {
            if given.as_str().map(canonical_name).transpose()?.unwrap_or("") != defaults.name {
                return Err(Error::Config(format!(
                    "config names scenario {given} but `{}` was requested",
                    defaults.name
                )));
            }
        }
        for key in ["data", "alt_data"] {
            if user.contains_key(key) {
                table.remove(key);
            }
        }
        config::merge(&mut table, user);
        table.insert("name".into(), toml::Value::String(defaults.name.clone()));
        let cfg: ScenarioConfig = config::from_table(table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(name: &str, path: Option<&Path>) -> Result<(ScenarioConfig, Vec<u8>)> {
        match path {
            None => Ok((ScenarioConfig::from_toml(name, "")?, Vec::new())),
            Some(p) => {
                let bytes = std::fs::read(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                let text = std::str::from_utf8(&bytes)
                    .map_err(|_| Error::Config(format!("{} is not UTF-8", p.display())))?;
                Ok((ScenarioConfig::from_toml(name, text)?, bytes))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        canonical_name(&self.name)?;
        self.model.validate()?;
        self.stepper.validate()?;
        for w in self.ladder.windows(2) {
            if w[1].n < w[0].n || w[1].half_length < w[0].half_length {
                return Err(Error::Config("ladder must be ordered from coarsest to finest".into()));
            }
        }
        if self.r_list.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("r_list must be sorted".into()));
        }
        if self.r_list.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::Config("r_list entries must be non-negative".into()));
        }
        if self.t_probes.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("t_probes must be non-negative".into()));
        }
        Ok(())
    }

    /// `a + 1 + d/2`, the largest weight carried without a moment condition.
    pub fn threshold(&self) -> f64 {
        self.model.a + 1.0 + self.model.dim as f64 / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"<"`, `"<="` or `">"`.
    pub relation: String,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            value,
            relation: "<".into(),
            threshold,
            pass: value < threshold,
        }
    }

    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            value,
            relation: "<=".into(),
            threshold,
            pass: value <= threshold,
        }
    }

    fn above(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            value,
            relation: ">".into(),
            threshold,
            pass: value > threshold,
        }
    }
}

/// Columns of `t` against norms, for plotting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotTable {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
    /// Time at which a nonlinear run was aborted, if any.
    pub blow_up: Option<f64>,
    #[serde(skip)]
    pub plot: PlotTable,
    /// Diagnostics of the finest nonlinear run.
    #[serde(skip)]
    pub records: Vec<DiagnosticRecord>,
}

impl ScenarioReport {
    fn new(name: &str) -> ScenarioReport {
        ScenarioReport {
            name: name.to_string(),
            ..Default::default()
        }
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    fn finish(mut self) -> ScenarioReport {
        self.pass = self.blow_up.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
        self
    }
}

/// Dispatches on `cfg.name`.
pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    match canonical_name(&cfg.name)? {
        "linear_growth" => run_linear_growth(cfg),
        "moment_dichotomy" => run_moment_dichotomy(cfg),
        "persistence" => run_persistence(cfg),
        "tstar" => run_tstar(cfg),
        "symbol_bound" => run_symbol_bound(cfg),
        "combined" => run_combined(cfg),
        _ => unreachable!(),
    }
}

/// Thread pool honouring `FKDV_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("FKDV_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("FKDV_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(Error::Config("FKDV_THREADS must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(e.to_string()))
}

fn bracket(t: f64) -> f64 {
    (1.0 + t * t).sqrt()
}

fn build_rung(cfg: &ScenarioConfig, spec: &GridSpec, data: &DataSpec) -> Result<(Grid, Field)> {
    let grid = spec.build(cfg.model.dim)?;
    let u0 = data.build(&grid, &cfg.model)?;
    Ok((grid, u0))
}

fn finest(cfg: &ScenarioConfig) -> Result<&GridSpec> {
    cfg.ladder
        .last()
        .ok_or_else(|| Error::Config("scenario needs at least one grid in `ladder`".into()))
}

fn has_mass(u: &Field, tol: f64) -> bool {
    let l1: f64 = u.values().iter().map(|v| v.abs()).sum::<f64>() * u.grid().cell_volume();
    l1 > 0.0 && u.integral().abs() > tol * l1
}

/// Ladder verdict for one norm sequence.
struct LadderStats {
    min_ratio: f64,
    max_change: f64,
    min_increment_ratio: f64,
}

fn ladder_stats(norms: &[f64]) -> LadderStats {
    if norms.iter().all(|n| *n == 0.0) {
        return LadderStats {
            min_ratio: 1.0,
            max_change: 0.0,
            min_increment_ratio: 0.0,
        };
    }
    let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0]).collect();
    let increments: Vec<f64> = norms.windows(2).map(|w| w[1] * w[1] - w[0] * w[0]).collect();
    LadderStats {
        min_ratio: ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        max_change: ratios.iter().map(|q| (q - 1.0).abs()).fold(0.0, f64::max),
        min_increment_ratio: increments
            .windows(2)
            .map(|w| w[1] / w[0])
            .fold(f64::INFINITY, f64::min),
    }
}

fn ladder_checks(
    report: &mut ScenarioReport,
    label: &str,
    norms: &[f64],
    divergent: bool,
    th: &Thresholds,
) {
    for (i, n) in norms.iter().enumerate() {
        report.metric(format!("{label}.rung{i}"), *n);
    }
    let stats = ladder_stats(norms);
    report.metric(format!("{label}.min_ratio"), stats.min_ratio);
    report.metric(format!("{label}.max_change"), stats.max_change);
    report.metric(format!("{label}.increment_ratio"), stats.min_increment_ratio);
    if divergent {
        report.check(Check::above(
            format!("{label}.increment_ratio"),
            stats.min_increment_ratio,
            th.increment_ratio,
        ));
    } else {
        report.check(Check::below(format!("{label}.max_change"), stats.max_change, th.cauchy_tol));
    }
}

/// Growth of `||<x>^r U(t) f||` in `t` on the finest grid.
pub fn run_linear_growth(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let th = &cfg.thresholds;
    let a = cfg.model.a;
    let mut report = ScenarioReport::new(&cfg.name);
    let (_, f) = build_rung(cfg, finest(cfg)?, &cfg.data)?;
    let limit = cfg.threshold();
    if let Some(r) = cfg.r_list.iter().find(|r| **r >= limit) {
        return Err(Error::Config(format!("r = {r} is not below a + 1 + d/2 = {limit}")));
    }
    if cfg.t_probes.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Config("linear growth probes must be positive times".into()));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for &t in &cfg.t_probes {
        let u = propagator::apply_group(&f, t, a)?;
        let edge = diagnostics::boundary_ratio(&u);
        if edge > th.boundary_tol {
            report
                .notes
                .push(format!("edge ratio {edge:e} at t = {t}; ladder stops at the previous time"));
            break;
        }
        times.push(t);
        states.push(u);
    }
    report.metric("times_used", times.len() as f64);
    if times.len() < 2 {
        report.notes.push("fewer than two clean times".into());
        report.check(Check::above("times_used", times.len() as f64, 1.0));
        return Ok(report.finish());
    }
    report.plot.header = std::iter::once("t".to_string())
        .chain(cfg.r_list.iter().map(|r| format!("w_{r}")))
        .collect();
    report.plot.rows = times.iter().map(|t| vec![*t]).collect();
    for &r in &cfg.r_list {
        let norms: Vec<f64> = states
            .iter()
            .map(|u| diagnostics::weighted_l2_norm(u, r))
            .collect::<Result<_>>()?;
        for (row, n) in report.plot.rows.iter_mut().zip(&norms) {
            row.push(*n);
        }
        let points: Vec<(f64, f64)> = times.iter().zip(&norms).map(|(t, n)| (t.ln(), n.ln())).collect();
        let rho = diagnostics::fit_line(&points).0;
        let rhs = diagnostics::sobolev_norm(&f, a * r)? + diagnostics::weighted_l2_norm(&f, r)?;
        let ratio = times
            .iter()
            .zip(&norms)
            .map(|(t, n)| n / (bracket(*t).powf(r) * rhs))
            .fold(0.0, f64::max);
        report.metric(format!("rho.r{r}"), rho);
        report.metric(format!("bound_ratio.r{r}"), ratio);
        report.check(Check::at_most(format!("rho.r{r}"), rho, r + th.exponent_slack));
        report.check(Check::below(format!("bound_ratio.r{r}"), ratio, th.bound_constant));
    }
    Ok(report.finish())
}

fn linear_ladder(cfg: &ScenarioConfig, data: &DataSpec, r: f64, t: f64) -> Result<(Vec<f64>, bool)> {
    let mut norms = Vec::new();
    let mut divergent = false;
    for (i, spec) in cfg.ladder.iter().enumerate() {
        let (_, f) = build_rung(cfg, spec, data)?;
        if i == 0 {
            divergent = t != 0.0 && has_mass(&f, cfg.thresholds.mean_tol);
        }
        norms.push(diagnostics::weighted_l2_norm(&propagator::apply_group(&f, t, cfg.model.a)?, r)?);
    }
    Ok((norms, divergent))
}

/// Box-doubling ladder for `||<x>^r U(t) f||` above the threshold weight,
/// for data with and without mean.
pub fn run_moment_dichotomy(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    if cfg.ladder.len() < 3 {
        return Err(Error::Config(format!(
            "moment dichotomy needs a ladder of at least 3 rungs, got {}",
            cfg.ladder.len()
        )));
    }
    let alt = cfg
        .alt_data
        .as_ref()
        .ok_or_else(|| Error::Config("moment dichotomy needs `alt_data`".into()))?;
    let mut report = ScenarioReport::new(&cfg.name);
    let r = *cfg
        .r_list
        .first()
        .ok_or_else(|| Error::Config("moment dichotomy needs one weight in `r_list`".into()))?;
    let t = *cfg
        .t_probes
        .first()
        .ok_or_else(|| Error::Config("moment dichotomy needs a time in `t_probes`".into()))?;
    report.metric("r", r);
    report.metric("t", t);
    let (primary, primary_div) = linear_ladder(cfg, &cfg.data, r, t)?;
    let (secondary, secondary_div) = linear_ladder(cfg, alt, r, t)?;
    ladder_checks(&mut report, "data", &primary, primary_div, &cfg.thresholds);
    ladder_checks(&mut report, "alt_data", &secondary, secondary_div, &cfg.thresholds);
    report.plot.header = vec!["n".into(), "L".into(), "data".into(), "alt_data".into()];
    report.plot.rows = cfg
        .ladder
        .iter()
        .zip(primary.iter().zip(&secondary))
        .map(|(g, (p, s))| vec![g.n as f64, g.half_length, *p, *s])
        .collect();
    Ok(report.finish())
}

fn probe_index(records: &[DiagnosticRecord], t: f64, dt: f64) -> Result<usize> {
    records
        .iter()
        .position(|r| (r.t - t).abs() < 0.5 * dt)
        .ok_or_else(|| Error::Config(format!("probe time {t} is not a record time")))
}

/// Nonlinear ladder shared by persistence and the combined run.
fn nonlinear_ladder(cfg: &ScenarioConfig, report: &mut ScenarioReport) -> Result<Option<Vec<Vec<DiagnosticRecord>>>> {
    if cfg.ladder.len() < 3 {
        return Err(Error::Config(format!(
            "persistence needs a ladder of at least 3 rungs, got {}",
            cfg.ladder.len()
        )));
    }
    let spec = DiagnosticSpec {
        weights: cfg.r_list.clone(),
        sobolev: Vec::new(),
    };
    let mut runs = Vec::new();
    for (i, g) in cfg.ladder.iter().enumerate() {
        let (_, u0) = build_rung(cfg, g, &cfg.data)?;
        match propagator::evolve(&u0, &cfg.model, &cfg.stepper, &spec, |_| {}) {
            Ok(tr) => runs.push(tr.records),
            Err(Error::BlowUp { t, sup_norm, reason }) => {
                report.blow_up = Some(t);
                report.notes.push(format!(
                    "rung {i} (n = {}, L = {}) blew up at t = {t}: {reason} (sup {sup_norm:e})",
                    g.n, g.half_length
                ));
                return Ok(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Some(runs))
}

fn persistence_checks(cfg: &ScenarioConfig, report: &mut ScenarioReport, runs: &[Vec<DiagnosticRecord>]) -> Result<()> {
    let th = &cfg.thresholds;
    let limit = cfg.threshold();
    let dt = cfg.stepper.schedule().1;
    let fine = runs.last().expect("ladder is non-empty");
    let (_, u0) = build_rung(cfg, &cfg.ladder[0], &cfg.data)?;
    let divergent = has_mass(&u0, th.mean_tol);
    report.metric("mean", u0.integral());
    report.metric("threshold", limit);
    for &r in &cfg.r_list {
        if r < limit {
            let n0 = fine[0].weighted_norm(r).unwrap_or(0.0);
            let envelope = if n0 == 0.0 {
                0.0
            } else {
                fine.iter()
                    .map(|rec| rec.weighted_norm(r).unwrap_or(0.0) / (bracket(rec.t).powf(r) * n0))
                    .fold(0.0, f64::max)
            };
            report.metric(format!("envelope.r{r}"), envelope);
            report.check(Check::at_most(format!("envelope.r{r}"), envelope, th.envelope_constant));
        } else {
            for &t in &cfg.t_probes {
                let norms: Vec<f64> = runs
                    .iter()
                    .map(|recs| {
                        let i = probe_index(recs, t, dt)?;
                        Ok(recs[i].weighted_norm(r).unwrap_or(0.0))
                    })
                    .collect::<Result<_>>()?;
                ladder_checks(report, &format!("ladder.r{r}.t{t}"), &norms, divergent && t != 0.0, th);
            }
        }
    }
    report.plot.header = std::iter::once("t".to_string())
        .chain(cfg.r_list.iter().map(|r| format!("w_{r}")))
        .collect();
    report.plot.rows = fine
        .iter()
        .map(|rec| {
            std::iter::once(rec.t)
                .chain(cfg.r_list.iter().map(|r| rec.weighted_norm(*r).unwrap_or(0.0)))
                .collect()
        })
        .collect();
    report.records = fine.clone();
    Ok(())
}

/// Weighted norms of a nonlinear run across the box ladder: bounded below
/// the threshold weight, divergent above it unless the data has zero mean.
pub fn run_persistence(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(&cfg.name);
    if let Some(runs) = nonlinear_ladder(cfg, &mut report)? {
        persistence_checks(cfg, &mut report, &runs)?;
    }
    Ok(report.finish())
}

/// Persistence plus the multi-term momentum identity on the finest rung.
pub fn run_combined(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(&cfg.name);
    if cfg.model.nonlinearities.len() < 2 {
        report
            .notes
            .push("single nonlinearity: this reduces to the persistence scenario".into());
    }
    if let Some(runs) = nonlinear_ladder(cfg, &mut report)? {
        persistence_checks(cfg, &mut report, &runs)?;
        let mr = diagnostics::momentum_residual(runs.last().unwrap(), &cfg.model)?;
        report.metric("momentum.residual", mr.residual);
        report.metric("momentum.raw_residual", mr.raw_residual);
        report.metric("momentum.max_seam_flux", mr.max_seam_flux);
        report.check(Check::below("momentum.residual", mr.residual, cfg.thresholds.momentum_tol));
    }
    Ok(report.finish())
}

/// Positive zero of `G(t) = int_0^t M_1`, from the trapezoid rule and linear
/// interpolation at the first sign change after `t = 0`.
pub fn first_zero_of_primitive(times: &[f64], m1: &[f64]) -> Option<(f64, Vec<f64>)> {
    let mut g = vec![0.0; times.len()];
    for i in 1..times.len() {
        g[i] = g[i - 1] + 0.5 * (times[i] - times[i - 1]) * (m1[i] + m1[i - 1]);
    }
    let sign = g.iter().skip(1).find(|v| **v != 0.0)?.signum();
    for i in 2..g.len() {
        if g[i].signum() != sign || g[i] == 0.0 {
            let (t0, t1, g0, g1) = (times[i - 1], times[i], g[i - 1], g[i]);
            return Some((t0 - g0 * (t1 - t0) / (g1 - g0), g));
        }
    }
    None
}

/// `t*` for quadratic nonlinearity: the zero of `G` against
/// `-4 int x_1 u_0 / (nu ||u_0||^2)`, and the slope of `M_1`.
pub fn run_tstar(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let th = &cfg.thresholds;
    let mut report = ScenarioReport::new(&cfg.name);
    let nu = match cfg.model.nonlinearities.as_slice() {
        [Nonlinearity { k: 2, nu }] => *nu as f64,
        _ => return Err(Error::Config("tstar needs a single quadratic nonlinearity".into())),
    };
    let (grid, u0) = build_rung(cfg, finest(cfg)?, &cfg.data)?;
    let i2 = u0.values().iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
    let m1_0 = diagnostics::moment(&u0, &[1, 0][..grid.dim()])?;
    if u0.integral().abs() > th.mean_tol * i2.sqrt().max(1e-300) {
        report.notes.push("data does not have zero mean".into());
    }
    let predicted = -4.0 * m1_0 / (nu * i2);
    report.metric("tstar.predicted", predicted);
    if !(predicted > 0.0) || !(predicted < cfg.stepper.t_end) {
        return Err(Error::Config(format!(
            "predicted t* = {predicted} is not inside (0, {}]",
            cfg.stepper.t_end
        )));
    }
    let spec = DiagnosticSpec {
        weights: cfg.r_list.clone(),
        sobolev: Vec::new(),
    };
    let traj = match propagator::evolve(&u0, &cfg.model, &cfg.stepper, &spec, |_| {}) {
        Ok(t) => t,
        Err(Error::BlowUp { t, reason, .. }) => {
            report.blow_up = Some(t);
            report.notes.push(format!("blew up at t = {t}: {reason}"));
            return Ok(report.finish());
        }
        Err(e) => return Err(e),
    };
    let times: Vec<f64> = traj.records.iter().map(|r| r.t).collect();
    let m1: Vec<f64> = traj.records.iter().map(|r| r.moment([1, 0]).unwrap_or(0.0)).collect();
    let i2_mean = traj.records.iter().map(|r| r.i2).sum::<f64>() / traj.records.len() as f64;
    report.plot.header = vec!["t".into(), "M1".into(), "G".into()];
    match first_zero_of_primitive(&times, &m1) {
        Some((zero, g)) => {
            report.metric("tstar.measured", zero);
            let rel = (zero - predicted).abs() / predicted;
            report.metric("tstar.relative_error", rel);
            report.check(Check::below("tstar.relative_error", rel, th.tstar_tol));
            report.plot.rows = times.iter().zip(&m1).zip(&g).map(|((t, m), g)| vec![*t, *m, *g]).collect();
        }
        None => {
            report.notes.push("no sign change of G inside the horizon".into());
            report.check(Check::below("tstar.relative_error", f64::INFINITY, th.tstar_tol));
        }
    }
    let points: Vec<(f64, f64)> = times.iter().cloned().zip(m1.iter().cloned()).collect();
    let (slope, _, rms) = diagnostics::fit_line(&points);
    let expected = 0.5 * nu * i2_mean;
    let rel = (slope - expected).abs() / expected.abs();
    report.metric("m1.slope", slope);
    report.metric("m1.expected_slope", expected);
    report.metric("m1.slope_relative_error", rel);
    report.metric("m1.fit_rms", rms);
    report.check(Check::below("m1.slope_relative_error", rel, th.slope_tol));
    report.records = traj.records;
    Ok(report.finish())
}

/// Stein derivative of `exp(i t y |y|^a)` against `<t>^b <xi>^(ab)`.
pub fn run_symbol_bound(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    let s = &cfg.symbol;
    let a = cfg.model.a;
    let b = s.b;
    let mut report = ScenarioReport::new(&cfg.name);
    let res = diagnostics::symbol_stein_check(&s.times, a, b, &s.frequencies)?;
    report.metric("t_exponent", res.t_exponent);
    report.metric("xi_exponent", res.xi_exponent);
    report.metric("max_ratio", res.max_ratio);
    report.check(Check::at_most("t_exponent", res.t_exponent, b + 0.1));
    report.check(Check::at_most("xi_exponent", res.xi_exponent, a * b + 0.1));
    report.plot.header = std::iter::once("t".to_string())
        .chain(s.frequencies.iter().map(|xi| format!("xi_{xi}")))
        .collect();
    report.plot.rows = s
        .times
        .iter()
        .zip(&res.values)
        .map(|(t, row)| std::iter::once(*t).chain(row.iter().cloned()).collect())
        .collect();
    Ok(report.finish())
}
