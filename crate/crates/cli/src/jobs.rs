use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use fkdv::config::{self, EvolveConfig, GroundstateConfig, LinearConfig};
use fkdv::diagnostics;
use fkdv::groundstate::{self, PetviashviliOptions};
use fkdv::propagator::{self, ModelParams};
use fkdv::scenarios::{self, ScenarioConfig};
use fkdv::{snapshot, Error, Result};
use serde_json::json;

use crate::manifest::Outcome;

pub struct Context {
    out: PathBuf,
    quiet: bool,
    artifacts: Vec<String>,
}

impl Context {
    pub fn new(out: PathBuf, quiet: bool) -> Context {
        Context {
            out,
            quiet,
            artifacts: Vec::new(),
        }
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    fn path(&mut self, name: &str) -> PathBuf {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        self.out.join(name)
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

fn e17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn evolve(ctx: &mut Context, text: &str) -> Result<Outcome> {
    let cfg: EvolveConfig = config::parse(text, EvolveConfig::REQUIRED)?;
    cfg.model.validate()?;
    cfg.stepper.validate()?;
    let grid = cfg.grid.build(cfg.model.dim)?;
    let u0 = cfg.data.build(&grid, &cfg.model)?;
    let mut csv = BufWriter::new(File::create(ctx.path("diagnostics.csv"))?);
    let mut io_error = None;
    let mut first = true;
    let result = propagator::evolve(&u0, &cfg.model, &cfg.stepper, &cfg.diagnostics, |rec| {
        let mut write = || -> std::io::Result<()> {
            if first {
                writeln!(csv, "{}", rec.csv_header())?;
                first = false;
            }
            writeln!(csv, "{}", rec.csv_row())
        };
        if let Err(e) = write() {
            io_error.get_or_insert(e);
        }
    });
    csv.flush()?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let traj = result?;
    snapshot::write(&ctx.path("final_state.bin"), &traj.final_state, cfg.model.a)?;
    let (first, last) = (&traj.records[0], traj.records.last().unwrap());
    ctx.say(format!(
        "evolved to t = {}: relative I2 drift {:.3e}, I3 drift {:.3e}",
        last.t,
        (last.i2 - first.i2).abs() / first.i2.abs().max(f64::MIN_POSITIVE),
        (last.i3 - first.i3).abs() / first.i3.abs().max(f64::MIN_POSITIVE)
    ));
    Ok(Outcome::Success)
}

pub fn groundstate(ctx: &mut Context, text: &str) -> Result<Outcome> {
    let cfg: GroundstateConfig = config::parse(text, GroundstateConfig::REQUIRED)?;
    let grid = cfg.grid.build(cfg.model.dim)?;
    let seed = match &cfg.seed {
        Some(spec) => spec.build(&grid, &cfg.model)?,
        None => groundstate::default_seed(&grid),
    };
    let opts: PetviashviliOptions = cfg.solver;
    let res = groundstate::petviashvili_solve(&cfg.model, cfg.c, &seed, opts)?;
    groundstate::write_profile_csv(&ctx.path("profile.csv"), &res.profile)?;
    snapshot::write(&ctx.path("profile.bin"), &res.profile, res.a)?;
    let window = match cfg.tail_window {
        Some([lo, hi]) => (lo, hi),
        None => groundstate::default_tail_window(&grid, res.a),
    };
    let decay = match groundstate::verify_decay(&res, window) {
        Ok(d) => json!({
            "window": [window.0, window.1],
            "expected_exponent": d.expected,
            "fitted_exponent": d.fit.exponent,
            "fit_residual": d.fit.residual,
            "inner_exponent": d.fit.inner_exponent,
            "outer_exponent": d.fit.outer_exponent,
            "a1": d.a1,
            "a2": d.a2,
            "excluded": d.excluded,
            "pass": d.pass,
        }),
        Err(e) => json!({ "window": [window.0, window.1], "error": e.to_string() }),
    };
    let report = json!({
        "c": res.c,
        "a": res.a,
        "k": res.k,
        "residual": res.residual,
        "stabilizer": res.stabilizer,
        "iterations": res.iterations,
        "converged": res.converged,
        "min_value": res.min_value,
        "sup_norm": res.profile.sup_norm(),
        "decay": decay,
    });
    ctx.write_json("report.json", &report)?;
    ctx.say(format!(
        "{} after {} iterations, residual {:.3e}",
        if res.converged { "converged" } else { "not converged" },
        res.iterations,
        res.residual
    ));
    if res.converged {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::Failed(format!(
            "Petviashvili iteration did not converge (residual {:e}, stabilizer {})",
            res.residual, res.stabilizer
        )))
    }
}

pub fn scenario(ctx: &mut Context, name: &str, text: Option<&str>) -> Result<Outcome> {
    let cfg = ScenarioConfig::from_toml(name, text.unwrap_or(""))?;
    let mut report = scenarios::run(&cfg)?;
    if !report.records.is_empty() {
        let mut csv = format!("{}\n", report.records[0].csv_header());
        for rec in &report.records {
            csv.push_str(&rec.csv_row());
            csv.push('\n');
        }
        ctx.write_text("diagnostics.csv", &csv)?;
    }
    if !report.plot.rows.is_empty() {
        ctx.write_text("plot.csv", &report.plot.to_csv())?;
    }
    ctx.path("report.json");
    report.artifacts = ctx.artifacts().to_vec();
    let value = serde_json::to_value(&report).map_err(|e| Error::Config(e.to_string()))?;
    ctx.write_json("report.json", &value)?;
    for c in &report.checks {
        ctx.say(format!(
            "{} {} = {:.6e} {} {:e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.threshold
        ));
    }
    Ok(match (report.pass, report.blow_up) {
        (true, _) => Outcome::Success,
        (false, Some(t)) => Outcome::BlowUp {
            t,
            message: report.notes.join("; "),
        },
        (false, None) => Outcome::Failed(format!("scenario `{}` failed its checks", report.name)),
    })
}

pub fn linear(ctx: &mut Context, text: &str) -> Result<Outcome> {
    let cfg: LinearConfig = config::parse(text, LinearConfig::REQUIRED)?;
    if cfg.times.is_empty() {
        return Err(Error::Config("`times` must not be empty".into()));
    }
    let model = ModelParams {
        a: cfg.model.a,
        nonlinearities: Vec::new(),
        dim: cfg.model.dim,
    };
    let grid = cfg.grid.build(cfg.model.dim)?;
    let f = cfg.data.build(&grid, &model)?;
    let mut csv = String::from("t,L2");
    for r in &cfg.weights {
        csv.push_str(&format!(",w_{r}"));
    }
    csv.push_str(",edge_ratio\n");
    let mut last = None;
    for &t in &cfg.times {
        let u = propagator::apply_group(&f, t, cfg.model.a)?;
        let mut row = vec![e17(t), e17(u.l2_norm())];
        for &r in &cfg.weights {
            row.push(e17(diagnostics::weighted_l2_norm(&u, r)?));
        }
        row.push(e17(diagnostics::boundary_ratio(&u)));
        csv.push_str(&row.join(","));
        csv.push('\n');
        last = Some(u);
    }
    ctx.write_text("linear.csv", &csv)?;
    snapshot::write(&ctx.path("final_state.bin"), last.as_ref().unwrap(), cfg.model.a)?;
    ctx.say(format!("applied the linear group at {} times", cfg.times.len()));
    Ok(Outcome::Success)
}
