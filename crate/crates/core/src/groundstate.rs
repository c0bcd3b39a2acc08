//! Solitary waves `cQ + D^a Q = Q^k / k` by Petviashvili iteration, the
//! scaling law between speeds and tail-decay checks.

use std::io::Write;
use std::path::Path;

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, TailFit};
use crate::error::{Error, Result};
use crate::propagator::ModelParams;
use crate::spectral::{Field, Grid, Multiplier};

/// Bound on the stabilizing factor before the iteration is declared divergent.
const M_RANGE: (f64, f64) = (1e-3, 1e3);

#[derive(Clone, Debug)]
pub struct GroundStateResult {
    pub profile: Field,
    pub c: f64,
    pub a: f64,
    pub k: u32,
    /// `||cQ + D^a Q - Q^k/k||_{L^2}`
    pub residual: f64,
    /// Last stabilizing factor `<(c + D^a)Q, Q> / <Q^k/k, Q>`.
    pub stabilizer: f64,
    pub iterations: usize,
    /// Fitted tail exponent over the default window, if the fit succeeded.
    pub tail_exponent: Option<f64>,
    pub converged: bool,
    /// Smallest sample over all iterates.
    pub min_value: f64,
    /// `(M_n, residual_n)` per iteration.
    pub trace: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PetviashviliOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PetviashviliOptions {
    fn default() -> Self {
        PetviashviliOptions {
            tol: 1e-9,
            max_iter: 2000,
        }
    }
}

/// Gaussian bump of unit height and width 2, `exp(-|x|^2 / 4)`.
pub fn default_seed(grid: &Grid) -> Field {
    Field::from_fn(grid, |x| (-x.iter().map(|v| v * v).sum::<f64>() / 4.0).exp())
}

fn check_model(params: &ModelParams) -> Result<(u32, f64)> {
    params.validate()?;
    if params.nonlinearities.len() != 1 {
        return Err(Error::InvalidParameter(
            "ground states need a single nonlinearity".into(),
        ));
    }
    let term = params.nonlinearities[0];
    if term.nu != 1 {
        return Err(Error::InvalidParameter(format!(
            "ground states exist only for the focusing sign nu = +1, got {}",
            term.nu
        )));
    }
    let (d, a) = (params.dim as f64, params.a);
    if a < d {
        let critical = (d + a) / (d - a);
        if term.k as f64 >= critical {
            return Err(Error::InvalidParameter(format!(
                "k = {} is not below the critical power k* = (d + a)/(d - a) = {critical}; \
                 positive decaying ground states exist only for subcritical k",
                term.k
            )));
        }
    }
    Ok((term.k, a))
}

fn operator_symbol(grid: &Grid, a: f64, c: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|idx| c + Multiplier::RieszPotential(a).symbol(grid, idx).re)
        .collect()
}

fn power_over_k(q: &Field, k: u32) -> Field {
    let values = q.values().iter().map(|v| v.powi(k as i32) / k as f64).collect();
    Field::from_values(q.grid(), values).expect("same grid")
}

fn inner(u: &[Complex64], v: &[Complex64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a * b.conj()).re).sum()
}

/// `||cQ + D^a Q - Q^k/k||_{L^2}` under the Parseval normalization.
pub fn profile_residual(q: &Field, a: f64, k: u32, c: f64) -> f64 {
    let symbol = operator_symbol(q.grid(), a, c);
    residual_with(q, &power_over_k(q, k), &symbol)
}

fn residual_with(q: &Field, nonlinear: &Field, symbol: &[f64]) -> f64 {
    let grid = q.grid();
    let sum: f64 = q
        .coeffs()
        .iter()
        .zip(nonlinear.coeffs())
        .zip(symbol)
        .map(|((qh, nh), s)| (qh * s - nh).norm_sqr())
        .sum();
    (sum * grid.cell_volume() / grid.len() as f64).sqrt()
}

fn stabilizing_factor(q: &Field, nonlinear: &Field, symbol: &[f64]) -> f64 {
    let num: f64 = q.coeffs().iter().zip(symbol).map(|(z, s)| z.norm_sqr() * s).sum();
    num / inner(nonlinear.coeffs(), q.coeffs())
}

/// Petviashvili iteration `Q <- M^gamma (c + D^a)^(-1)(Q^k/k)` with
/// `gamma = k/(k-1)`, the exponent that cancels the degree-`k` homogeneity
/// of the nonlinearity.
///
/// Stops once the residual drops below `tol` or the iterates stagnate
/// (successive difference below `tol / 1000`). The result counts as converged when the residual is below `tol`
/// and `|M - 1| < 1e-10`. A stabilizer leaving `[1e-3, 1e3]` ends the
/// iteration with a non-converged result.
pub fn petviashvili_solve(
    params: &ModelParams,
    c: f64,
    seed: &Field,
    opts: PetviashviliOptions,
) -> Result<GroundStateResult> {
    let (k, a) = check_model(params)?;
    params.check_grid(seed.grid())?;
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("speed must be positive, got {c}")));
    }
    if !(seed.values().iter().cloned().fold(f64::MIN, f64::max) > 0.0) {
        return Err(Error::InvalidParameter("seed must be a positive bump".into()));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter("tolerance and iteration cap must be positive".into()));
    }
    let grid = seed.grid().clone();
    let symbol = operator_symbol(&grid, a, c);
    let gamma = k as f64 / (k - 1) as f64;
    let mut q = seed.clone();
    let mut nonlinear = power_over_k(&q, k);
    let mut trace = Vec::new();
    let mut min_value = q.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let mut stabilizer = f64::NAN;
    let mut residual = residual_with(&q, &nonlinear, &symbol);
    let mut iterations = 0;
    let mut diverged = false;
    while iterations < opts.max_iter {
        stabilizer = stabilizing_factor(&q, &nonlinear, &symbol);
        if !(stabilizer >= M_RANGE.0 && stabilizer <= M_RANGE.1) {
            trace.push((stabilizer, residual));
            diverged = true;
            break;
        }
        let factor = stabilizer.powf(gamma);
        let next: Vec<Complex64> = nonlinear
            .coeffs()
            .iter()
            .zip(&symbol)
            .map(|(z, s)| z * (factor / s))
            .collect();
        let next = Field::from_coeffs(&grid, next)?;
        let step = next.axpy(-1.0, &q)?.l2_norm();
        q = next;
        nonlinear = power_over_k(&q, k);
        iterations += 1;
        min_value = min_value.min(q.values().iter().cloned().fold(f64::INFINITY, f64::min));
        residual = residual_with(&q, &nonlinear, &symbol);
        trace.push((stabilizer, residual));
        if !residual.is_finite() {
            diverged = true;
            break;
        }
        if residual < opts.tol || step < 1e-3 * opts.tol {
            break;
        }
    }
    if !diverged {
        stabilizer = stabilizing_factor(&q, &nonlinear, &symbol);
    }
    let converged = !diverged && residual < opts.tol && (stabilizer - 1.0).abs() < 1e-10;
    let tail_exponent = if diverged {
        None
    } else {
        diagnostics::tail_exponent_fit(&q, default_tail_window(&grid, a)).ok().map(|f| f.exponent)
    };
    Ok(GroundStateResult {
        profile: q,
        c,
        a,
        k,
        residual,
        stabilizer,
        iterations,
        tail_exponent,
        converged,
        min_value,
        trace,
    })
}

/// Radial window for tail fits: from `L/20` to `L/4`. Periodic images start
/// to bend the profile beyond that.
pub fn default_tail_window(grid: &Grid, _a: f64) -> (f64, f64) {
    let l = grid.half_length();
    (0.05 * l, 0.25 * l)
}

/// `Q_c(x) = c^(1/(k-1)) Q(c^(1/a) x)` resampled on the grid of `q` by
/// trigonometric interpolation. Points that map outside the box take the
/// value zero.
pub fn rescale_ground_state(q: &Field, c: f64, a: f64, k: u32) -> Result<Field> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("speed must be positive, got {c}")));
    }
    if !(a > 0.0) || k < 2 {
        return Err(Error::InvalidParameter(format!("need a > 0 and k >= 2, got a = {a}, k = {k}")));
    }
    if c == 1.0 {
        return Ok(q.clone());
    }
    let grid = q.grid();
    let d = grid.dim();
    let l = grid.half_length();
    let amplitude = c.powf(1.0 / (k - 1) as f64);
    let stretch = c.powf(1.0 / a);
    let mut outside = 0usize;
    let values = (0..grid.len())
        .map(|idx| {
            let p = grid.point(idx);
            let mut y = [0.0; 2];
            for ax in 0..d {
                y[ax] = stretch * p[ax];
            }
            if y[..d].iter().any(|v| *v < -l || *v >= l) {
                outside += 1;
                0.0
            } else {
                amplitude * q.interpolate(&y[..d])
            }
        })
        .collect();
    let scaled = Field::from_values(grid, values)?;
    let edge = diagnostics::boundary_ratio(&scaled);
    if outside > 0 || edge > 1e-10 {
        warn!(
            "rescaled profile exceeds the box: {outside} samples map outside, boundary/sup ratio {edge:.3e}"
        );
    }
    Ok(scaled)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub expected: f64,
    pub fit: TailFit,
    /// Sandwich constants: `A1 / (1 + r^p) <= Q <= A2 / (1 + r^p)` on the window.
    pub a1: f64,
    pub a2: f64,
    /// Exponential or faster tail; the exponent test does not apply.
    pub excluded: bool,
    pub pass: bool,
}

/// Fits the tail exponent on `window` and compares it with `d + a`.
pub fn verify_decay(result: &GroundStateResult, window: (f64, f64)) -> Result<DecayReport> {
    if !result.converged {
        warn!("verify_decay called on a non-converged ground state");
    }
    let grid = result.profile.grid();
    let expected = grid.dim() as f64 + result.a;
    let fit = diagnostics::tail_exponent_fit(&result.profile, window)?;
    let (mut a1, mut a2) = (f64::INFINITY, 0.0_f64);
    for (r, v) in &fit.samples {
        let scaled = v * (1.0 + r.powf(expected));
        a1 = a1.min(scaled);
        a2 = a2.max(scaled);
    }
    let excluded = fit.super_polynomial;
    let pass = !excluded && (fit.exponent - expected).abs() <= 0.3 && a1 > 0.0 && a2 / a1 < 10.0;
    Ok(DecayReport {
        expected,
        fit,
        a1,
        a2,
        excluded,
        pass,
    })
}

/// Writes `x,Q` (or `x1,x2,Q`) rows with 17 significant digits.
pub fn write_profile_csv(path: &Path, q: &Field) -> Result<()> {
    let grid = q.grid();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    match grid.dim() {
        1 => writeln!(out, "x,Q")?,
        _ => writeln!(out, "x1,x2,Q")?,
    }
    for (idx, v) in q.values().iter().enumerate() {
        let p = grid.point(idx);
        match grid.dim() {
            1 => writeln!(out, "{:.16e},{:.16e}", p[0], v)?,
            _ => writeln!(out, "{:.16e},{:.16e},{:.16e}", p[0], p[1], v)?,
        }
    }
    out.flush()?;
    Ok(())
}
