//! Time evolution of
//! `u_t = d_{x1} D^a u - sum_j nu_j u^(k_j - 1) d_{x1} u`.
//!
//! In Fourier variables this reads `v' = L v + N(v)` with the diagonal,
//! purely imaginary `L = i xi_1 |xi|^a` and the conservative nonlinearity
//! `N(v) = -i xi_1 F[sum_j nu_j u^k_j / k_j]`. The linear part is handled
//! exactly: either by exponential time differencing (ETDRK4, default) or by
//! an integrating factor (IFRK4).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticRecord, DiagnosticSpec};
use crate::error::{Error, Result};
use crate::spectral::{self, Field, Grid, Multiplier};

/// Sup-norm above which the solution is declared blown up.
pub const DEFAULT_SUP_CAP: f64 = 1e8;

/// Number of contour points used for the phi functions.
pub const CONTOUR_POINTS: usize = 64;

/// One power-type term `nu u^(k-1) d_{x1} u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nonlinearity {
    pub k: u32,
    pub nu: i32,
}

impl Nonlinearity {
    pub fn new(k: u32, nu: i32) -> Result<Nonlinearity> {
        let term = Nonlinearity { k, nu };
        term.validate()?;
        Ok(term)
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidParameter(format!(
                "nonlinearity power k must be at least 2, got {}",
                self.k
            )));
        }
        if self.nu != 1 && self.nu != -1 {
            return Err(Error::InvalidParameter(format!(
                "nonlinearity sign nu must be +1 or -1, got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Dispersion exponent in `(0, 2]`; `a = 2` is kept for validation runs.
    pub a: f64,
    pub nonlinearities: Vec<Nonlinearity>,
    pub dim: usize,
}

impl ModelParams {
    pub fn new(a: f64, nonlinearities: Vec<Nonlinearity>, dim: usize) -> Result<ModelParams> {
        let params = ModelParams {
            a,
            nonlinearities,
            dim,
        };
        params.validate()?;
        Ok(params)
    }

    /// A single term, i.e. the equation with one power nonlinearity.
    pub fn single(a: f64, k: u32, nu: i32, dim: usize) -> Result<ModelParams> {
        ModelParams::new(a, vec![Nonlinearity { k, nu }], dim)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "dispersion exponent must lie in (0, 2], got {}",
                self.a
            )));
        }
        if self.nonlinearities.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one nonlinearity is required".into(),
            ));
        }
        for term in &self.nonlinearities {
            term.validate()?;
        }
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 1 or 2, got {}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Threshold `a + 1 + d/2` beyond which weights require a vanishing mean.
    pub fn first_threshold(&self) -> f64 {
        self.a + 1.0 + 0.5 * self.dim as f64
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.dim() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "model dimension {} does not match grid dimension {}",
                self.dim,
                grid.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Etdrk4,
    Ifrk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Fraction of each axis' modes kept when forming products.
    pub dealias_fraction: f64,
    pub record_every: usize,
    pub sup_cap: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        StepperConfig {
            dt: 1e-3,
            t_end: 1.0,
            scheme: Scheme::Etdrk4,
            dealias_fraction: 2.0 / 3.0,
            record_every: 10,
            sup_cap: DEFAULT_SUP_CAP,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::InvalidParameter(format!(
                "final time {} must be at least one time step {}",
                self.t_end, self.dt
            )));
        }
        check_fraction(self.dealias_fraction)?;
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        if !(self.sup_cap > 0.0) {
            return Err(Error::InvalidParameter("sup_cap must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps and the step actually taken, `t_end / steps`.
    pub fn schedule(&self) -> (usize, f64) {
        let steps = ((self.t_end / self.dt).round() as usize).max(1);
        (steps, self.t_end / steps as f64)
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "dealias fraction must lie in (0, 1], got {fraction}"
        )));
    }
    Ok(())
}

/// `U(t) f`, the exact linear flow.
pub fn apply_group(f: &Field, t: f64, a: f64) -> Result<Field> {
    spectral::apply_multiplier(f, Multiplier::GroupPhase { t, a })
}

/// Mask keeping modes with `|m| <= fraction * n/2` on every axis.
pub fn dealias_mask(grid: &Grid, fraction: f64) -> Vec<f64> {
    let n = grid.n();
    let cutoff = fraction * (n / 2) as f64;
    (0..grid.len())
        .map(|idx| {
            let multi = grid.multi_index(idx);
            let keep = multi[..grid.dim()]
                .iter()
                .all(|&i| (spectral::signed_mode(i, n).unsigned_abs() as f64) <= cutoff + 1e-9);
            if keep {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// The spectral right-hand side `N(v)`, shared by the stepper and
/// [`nonlinear_term`].
struct Nonlinear {
    grid: Grid,
    terms: Vec<Nonlinearity>,
    mask: Vec<f64>,
    derivative: Vec<Complex64>,
    cap: f64,
    scale: f64,
}

impl Nonlinear {
    fn new(grid: &Grid, params: &ModelParams, fraction: f64, cap: f64) -> Result<Nonlinear> {
        check_fraction(fraction)?;
        params.check_grid(grid)?;
        Ok(Nonlinear {
            grid: grid.clone(),
            terms: params.nonlinearities.clone(),
            mask: dealias_mask(grid, fraction),
            derivative: Multiplier::Derivative(0).table(grid),
            cap,
            scale: 1.0,
        })
    }

    fn eval(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.scale == 0.0 {
            return Ok(vec![Complex64::new(0.0, 0.0); v.len()]);
        }
        let filtered: Vec<Complex64> = v.iter().zip(&self.mask).map(|(c, m)| c * m).collect();
        let u = spectral::to_physical(&self.grid, &filtered);
        let sup = u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if !sup.is_finite() || sup > self.cap {
            return Err(Error::BlowUp {
                t: f64::NAN,
                sup_norm: sup,
                reason: format!("sup norm exceeds cap {}", self.cap),
            });
        }
        let flux: Vec<f64> = u
            .iter()
            .map(|&x| {
                self.terms
                    .iter()
                    .map(|term| term.nu as f64 * x.powi(term.k as i32) / term.k as f64)
                    .sum()
            })
            .collect();
        let spectrum = spectral::to_spectral(&self.grid, &flux);
        let mut out: Vec<Complex64> = spectrum
            .iter()
            .zip(&self.derivative)
            .zip(&self.mask)
            .map(|((s, d), m)| -self.scale * m * d * s)
            .collect();
        spectral::enforce_hermitian(&self.grid, &mut out);
        Ok(out)
    }
}

/// `-sum_j nu_j d_{x1}(u^k_j)/k_j`, with products formed from the dealiased
/// field and the result dealiased again.
pub fn nonlinear_term(u: &Field, params: &ModelParams, dealias_fraction: f64) -> Result<Field> {
    let op = Nonlinear::new(u.grid(), params, dealias_fraction, DEFAULT_SUP_CAP)?;
    Field::from_coeffs(u.grid(), op.eval(u.coeffs())?)
}

/// `phi_1, phi_2, phi_3` evaluated directly from their closed forms.
/// Accurate away from the origin only.
pub fn phi_direct(z: Complex64) -> [Complex64; 3] {
    let one = Complex64::new(1.0, 0.0);
    let ez = z.exp();
    let phi1 = (ez - one) / z;
    let phi2 = (ez - one - z) / (z * z);
    let phi3 = (ez - one - z - 0.5 * z * z) / (z * z * z);
    [phi1, phi2, phi3]
}

/// `phi_1, phi_2, phi_3` as means over a circle of radius one around `z`,
/// which sidesteps the cancellation of the closed forms near the origin.
pub fn phi_contour(z: Complex64, points: usize) -> [Complex64; 3] {
    let mut acc = [Complex64::new(0.0, 0.0); 3];
    for m in 0..points {
        let theta = 2.0 * PI * (m as f64 + 0.5) / points as f64;
        let w = z + Complex64::from_polar(1.0, theta);
        let phi = phi_direct(w);
        for (a, p) in acc.iter_mut().zip(phi) {
            *a += p;
        }
    }
    let inv = 1.0 / points as f64;
    acc.map(|a| a * inv)
}

/// ETDRK4 coefficient tables for one `(grid, a, dt)`.
#[derive(Clone, Debug)]
pub struct EtdCoefficients {
    pub dt: f64,
    /// `exp(dt L)`
    pub e: Vec<Complex64>,
    /// `exp(dt L / 2)`
    pub e_half: Vec<Complex64>,
    /// `dt/2 phi_1(dt L / 2)`
    pub q: Vec<Complex64>,
    /// `dt (phi_1 - 3 phi_2 + 4 phi_3)(dt L)`
    pub f1: Vec<Complex64>,
    /// `dt (phi_2 - 2 phi_3)(dt L)`
    pub f2: Vec<Complex64>,
    /// `dt (-phi_2 + 4 phi_3)(dt L)`
    pub f3: Vec<Complex64>,
}

/// Diagonal linear operator `i xi_1 |xi|^a` (Nyquist `xi_1` zeroed).
pub fn linear_symbol(grid: &Grid, a: f64) -> Vec<Complex64> {
    (0..grid.len())
        .map(|idx| {
            let xi = grid.wavevector(idx);
            let norm = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            let xi1 = if grid.is_nyquist(idx, 0) { 0.0 } else { xi[0] };
            let rate = if norm == 0.0 { 0.0 } else { xi1 * norm.powf(a) };
            Complex64::new(0.0, rate)
        })
        .collect()
}

pub fn etd_coefficients(grid: &Grid, a: f64, dt: f64) -> EtdCoefficients {
    let symbol = linear_symbol(grid, a);
    let len = symbol.len();
    let mut out = EtdCoefficients {
        dt,
        e: Vec::with_capacity(len),
        e_half: Vec::with_capacity(len),
        q: Vec::with_capacity(len),
        f1: Vec::with_capacity(len),
        f2: Vec::with_capacity(len),
        f3: Vec::with_capacity(len),
    };
    for l in symbol {
        let z = dt * l;
        let [p1, p2, p3] = phi_contour(z, CONTOUR_POINTS);
        let [h1, _, _] = phi_contour(0.5 * z, CONTOUR_POINTS);
        out.e.push(z.exp());
        out.e_half.push((0.5 * z).exp());
        out.q.push(0.5 * dt * h1);
        out.f1.push(dt * (p1 - 3.0 * p2 + 4.0 * p3));
        out.f2.push(dt * (p2 - 2.0 * p3));
        out.f3.push(dt * (-p2 + 4.0 * p3));
    }
    out
}

/// Precomputed one-step map for a fixed grid, model and time step.
pub struct Stepper {
    grid: Grid,
    scheme: Scheme,
    coeffs: EtdCoefficients,
    nonlinear: Nonlinear,
}

impl Stepper {
    pub fn new(grid: &Grid, params: &ModelParams, dt: f64, scheme: Scheme, dealias_fraction: f64) -> Result<Stepper> {
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        Ok(Stepper {
            grid: grid.clone(),
            scheme,
            coeffs: etd_coefficients(grid, params.a, dt),
            nonlinear: Nonlinear::new(grid, params, dealias_fraction, DEFAULT_SUP_CAP)?,
        })
    }

    pub fn with_sup_cap(mut self, cap: f64) -> Stepper {
        self.nonlinear.cap = cap;
        self
    }

    /// Scales the nonlinear term; `0` leaves the exact linear flow. Used to
    /// isolate the linear part in tests and experiments.
    pub fn set_nonlinear_scale(&mut self, scale: f64) {
        self.nonlinear.scale = scale;
    }

    pub fn dt(&self) -> f64 {
        self.coeffs.dt
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Advances spectral coefficients by one step.
    pub fn advance(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut next = match self.scheme {
            Scheme::Etdrk4 => self.etdrk4(v)?,
            Scheme::Ifrk4 => self.ifrk4(v)?,
        };
        if next.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::BlowUp {
                t: f64::NAN,
                sup_norm: f64::INFINITY,
                reason: "non-finite spectral coefficient".into(),
            });
        }
        spectral::enforce_hermitian(&self.grid, &mut next);
        Ok(next)
    }

    pub fn step(&self, u: &Field) -> Result<Field> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Field::from_coeffs(&self.grid, self.advance(u.coeffs())?)
    }

    fn etdrk4(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let c = &self.coeffs;
        let n = &self.nonlinear;
        let nv = n.eval(v)?;
        let a: Vec<Complex64> = (0..v.len()).map(|i| c.e_half[i] * v[i] + c.q[i] * nv[i]).collect();
        let na = n.eval(&a)?;
        let b: Vec<Complex64> = (0..v.len()).map(|i| c.e_half[i] * v[i] + c.q[i] * na[i]).collect();
        let nb = n.eval(&b)?;
        let cc: Vec<Complex64> = (0..v.len())
            .map(|i| c.e_half[i] * a[i] + c.q[i] * (2.0 * nb[i] - nv[i]))
            .collect();
        let nc = n.eval(&cc)?;
        Ok((0..v.len())
            .map(|i| {
                c.e[i] * v[i] + c.f1[i] * nv[i] + 2.0 * c.f2[i] * (na[i] + nb[i]) + c.f3[i] * nc[i]
            })
            .collect())
    }

    fn ifrk4(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let c = &self.coeffs;
        let n = &self.nonlinear;
        let h = c.dt;
        let k1 = n.eval(v)?;
        let a: Vec<Complex64> = (0..v.len()).map(|i| c.e_half[i] * (v[i] + 0.5 * h * k1[i])).collect();
        let k2 = n.eval(&a)?;
        let b: Vec<Complex64> = (0..v.len()).map(|i| c.e_half[i] * v[i] + 0.5 * h * k2[i]).collect();
        let k3 = n.eval(&b)?;
        let cc: Vec<Complex64> = (0..v.len()).map(|i| c.e[i] * v[i] + h * c.e_half[i] * k3[i]).collect();
        let k4 = n.eval(&cc)?;
        Ok((0..v.len())
            .map(|i| {
                c.e[i] * v[i]
                    + h / 6.0 * (c.e[i] * k1[i] + 2.0 * c.e_half[i] * (k2[i] + k3[i]) + k4[i])
            })
            .collect())
    }
}

/// One step of size `dt`. Builds the coefficient tables on every call; use
/// [`Stepper`] for repeated stepping.
pub fn step(u: &Field, dt: f64, params: &ModelParams, scheme: Scheme) -> Result<Field> {
    Stepper::new(u.grid(), params, dt, scheme, 2.0 / 3.0)?.step(u)
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub final_state: Field,
    pub records: Vec<DiagnosticRecord>,
}

/// Integrates from `t = 0` to `config.t_end`, recording diagnostics at
/// `t = 0`, every `record_every` steps and at the final time. The initial
/// state is first projected onto the modes kept by the product filter. Each record is
/// handed to `sink` as soon as it is produced.
pub fn evolve<S>(
    u0: &Field,
    params: &ModelParams,
    config: &StepperConfig,
    spec: &DiagnosticSpec,
    sink: S,
) -> Result<Trajectory>
where
    S: FnMut(&DiagnosticRecord),
{
    let stepper = Stepper::new(u0.grid(), params, config.schedule().1, config.scheme, config.dealias_fraction)?
        .with_sup_cap(config.sup_cap);
    evolve_with(&stepper, u0, params, config, spec, sink)
}

/// [`evolve`] with a caller-supplied stepper (e.g. one with a modified
/// nonlinear scale).
pub fn evolve_with<S>(
    stepper: &Stepper,
    u0: &Field,
    params: &ModelParams,
    config: &StepperConfig,
    spec: &DiagnosticSpec,
    mut sink: S,
) -> Result<Trajectory>
where
    S: FnMut(&DiagnosticRecord),
{
    config.validate()?;
    params.check_grid(u0.grid())?;
    let (steps, dt) = config.schedule();
    if (stepper.dt() - dt).abs() > 1e-15 * dt.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "stepper built for dt = {} but schedule needs {}",
            stepper.dt(),
            dt
        )));
    }
    let grid = u0.grid().clone();
    // modes beyond the filter never interact and would only rotate linearly
    let mask = dealias_mask(&grid, config.dealias_fraction);
    let start = Field::from_coeffs(&grid, u0.coeffs().iter().zip(&mask).map(|(c, m)| c * m).collect())?;
    let mut records = Vec::new();
    let first = diagnostics::record_filtered(&start, params, spec, config.dealias_fraction, 0.0)?;
    sink(&first);
    records.push(first);

    let mut v = start.coeffs().to_vec();
    for s in 1..=steps {
        let t = s as f64 * dt;
        v = stepper.advance(&v).map_err(|e| match e {
            Error::BlowUp { sup_norm, reason, .. } => Error::BlowUp {
                t: t - dt,
                sup_norm,
                reason,
            },
            other => other,
        })?;
        if s % config.record_every == 0 || s == steps {
            let field = Field::from_coeffs(&grid, v.clone())?;
            let sup = field.sup_norm();
            if !sup.is_finite() || sup > config.sup_cap {
                return Err(Error::BlowUp {
                    t,
                    sup_norm: sup,
                    reason: format!("sup norm exceeds cap {}", config.sup_cap),
                });
            }
            let rec = diagnostics::record_filtered(&field, params, spec, config.dealias_fraction, t)?;
            sink(&rec);
            records.push(rec);
        }
    }
    Ok(Trajectory {
        final_state: Field::from_coeffs(&grid, v)?,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_random(grid: &Grid, seed: u64) -> Field {
        // random low modes so the field is resolved and mean zero
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let [i, j] = grid.multi_index(idx);
            let mi = spectral::signed_mode(i, grid.n()).abs();
            let mj = spectral::signed_mode(j, grid.n()).abs();
            if idx != 0 && mi <= 4 && mj <= 4 {
                *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * grid.len() as f64 * 0.1;
            }
        }
        Field::from_coeffs(grid, coeffs).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::single(0.0, 2, 1, 1).is_err());
        assert!(ModelParams::single(2.5, 2, 1, 1).is_err());
        assert!(ModelParams::single(1.0, 1, 1, 1).is_err());
        assert!(ModelParams::single(1.0, 2, 0, 1).is_err());
        assert!(ModelParams::single(1.0, 2, 1, 3).is_err());
        assert!(ModelParams::new(1.0, vec![], 1).is_err());
        assert!(ModelParams::single(2.0, 2, -1, 2).is_ok());
    }

    #[test]
    fn group_at_zero_time_is_identity() {
        let g = make_grid(1, 64, 10.0).unwrap();
        let f = Field::from_fn(&g, |x| (-x[0] * x[0]).exp());
        let out = apply_group(&f, 0.0, 0.7).unwrap();
        assert!(max_diff(out.values(), f.values()) < 1e-15);
    }

    #[test]
    fn group_law_holds() {
        let g = make_grid(2, 32, 8.0).unwrap();
        let f = smooth_random(&g, 3);
        let a = 1.4;
        let two = apply_group(&apply_group(&f, 0.3, a).unwrap(), 1.1, a).unwrap();
        let once = apply_group(&f, 1.4, a).unwrap();
        assert!(max_diff(two.values(), once.values()) < 1e-11);
        assert!((once.l2_norm() / f.l2_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflection_equivariance_of_group() {
        // U(t) applied to f(-x1, x') equals the reflection of U(-t) f
        let g = make_grid(2, 32, 8.0).unwrap();
        let f = Field::from_fn(&g, |x| (-(x[0] - 1.0).powi(2) - 0.5 * (x[1] + 0.5).powi(2)).exp() * (1.0 + x[0]));
        let reflect = |u: &Field| {
            let n = g.n();
            let values = (0..g.len())
                .map(|idx| {
                    let [i, j] = g.multi_index(idx);
                    u.values()[g.flat_index([(n - i) % n, j])]
                })
                .collect();
            Field::from_values(&g, values).unwrap()
        };
        let lhs = apply_group(&reflect(&f), 0.8, 0.6).unwrap();
        let rhs = reflect(&apply_group(&f, -0.8, 0.6).unwrap());
        assert!(max_diff(lhs.values(), rhs.values()) < 1e-12);
    }

    #[test]
    fn nonlinear_term_of_sine() {
        let g = make_grid(1, 32, PI).unwrap();
        let u = Field::from_fn(&g, |x| x[0].sin());
        let params = ModelParams::single(1.0, 2, 1, 1).unwrap();
        let out = nonlinear_term(&u, &params, 2.0 / 3.0).unwrap();
        let expected = Field::from_fn(&g, |x| -(2.0 * x[0]).sin() / 2.0);
        assert!(max_diff(out.values(), expected.values()) < 1e-13);
        let zero = nonlinear_term(&Field::zeros(&g), &params, 2.0 / 3.0).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
    }

    /// Circular convolution of coefficient arrays, `(uv)^_m = (1/n) sum_{p+q=m} u_p v_q`.
    fn convolve(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let n = a.len();
        (0..n)
            .map(|m| {
                (0..n)
                    .map(|p| a[p] * b[(m + n - p) % n])
                    .sum::<Complex64>()
                    / n as f64
            })
            .collect()
    }

    #[test]
    fn cubic_term_matches_convolution_oracle() {
        let g = make_grid(1, 32, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let values: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = Field::from_values(&g, values).unwrap();
        let params = ModelParams::single(1.0, 3, -1, 1).unwrap();
        let fraction = 2.0 / 3.0;
        let mask = dealias_mask(&g, fraction);
        let w: Vec<Complex64> = u.coeffs().iter().zip(&mask).map(|(c, m)| c * m).collect();
        let cube = convolve(&convolve(&w, &w), &w);
        let expected: Vec<Complex64> = (0..32)
            .map(|i| {
                let d = Multiplier::Derivative(0).symbol(&g, i);
                // -nu/k * d(u^3), nu = -1, k = 3
                (1.0 / 3.0) * d * cube[i] * mask[i]
            })
            .collect();
        let out = nonlinear_term(&u, &params, fraction).unwrap();
        let diff = out
            .coeffs()
            .iter()
            .zip(&expected)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn phi_functions_at_origin_and_symmetry() {
        let [p1, p2, p3] = phi_contour(Complex64::new(0.0, 0.0), CONTOUR_POINTS);
        assert!((p1 - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((p2 - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((p3 - Complex64::new(1.0 / 6.0, 0.0)).norm() < 1e-14);
        let z = Complex64::new(0.3, -2.1);
        let a = phi_contour(z, CONTOUR_POINTS);
        let b = phi_contour(z.conj(), CONTOUR_POINTS);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y.conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn contour_agrees_with_closed_form_far_from_origin() {
        for z in [Complex64::new(0.0, 10.0), Complex64::new(-6.0, 8.0), Complex64::new(0.0, -10.0)] {
            let a = phi_contour(z, CONTOUR_POINTS);
            let b = phi_direct(z);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-12 * y.norm().max(1e-3), "{z}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn coefficient_tables_are_conjugate_symmetric() {
        let g = make_grid(1, 64, 5.0).unwrap();
        let c = etd_coefficients(&g, 1.0, 0.01);
        for i in 1..64 {
            if i == 32 {
                continue;
            }
            let m = 64 - i;
            assert!((c.f1[i] - c.f1[m].conj()).norm() < 1e-15);
            assert!((c.q[i] - c.q[m].conj()).norm() < 1e-15);
        }
    }

    #[test]
    fn linear_only_step_is_the_group() {
        let g = make_grid(1, 128, 20.0).unwrap();
        let params = ModelParams::single(1.3, 2, 1, 1).unwrap();
        let u = Field::from_fn(&g, |x| (-x[0] * x[0]).exp());
        for scheme in [Scheme::Etdrk4, Scheme::Ifrk4] {
            let mut stepper = Stepper::new(&g, &params, 0.05, scheme, 2.0 / 3.0).unwrap();
            stepper.set_nonlinear_scale(0.0);
            let out = stepper.step(&u).unwrap();
            let exact = apply_group(&u, 0.05, 1.3).unwrap();
            assert!(max_diff(out.values(), exact.values()) < 1e-12);
        }
    }

    #[test]
    fn mass_is_conserved_and_output_real() {
        let g = make_grid(2, 32, 10.0).unwrap();
        let params = ModelParams::new(
            0.8,
            vec![Nonlinearity { k: 2, nu: 1 }, Nonlinearity { k: 3, nu: -1 }],
            2,
        )
        .unwrap();
        let u = Field::from_fn(&g, |x| 0.5 * (-(x[0] * x[0] + x[1] * x[1]) / 4.0).exp());
        let stepper = Stepper::new(&g, &params, 0.01, Scheme::Etdrk4, 2.0 / 3.0).unwrap();
        let mut v = u.coeffs().to_vec();
        for _ in 0..20 {
            v = stepper.advance(&v).unwrap();
            assert!(spectral::imaginary_residual(&g, &v) < 1e-12);
        }
        assert!((v[0] - u.coeffs()[0]).norm() < 1e-12 * u.coeffs()[0].norm());
    }

    #[test]
    fn blow_up_is_reported() {
        let g = make_grid(1, 64, 10.0).unwrap();
        let params = ModelParams::single(1.0, 2, 1, 1).unwrap();
        let u = Field::from_fn(&g, |x| 10.0 * (-x[0] * x[0]).exp());
        let stepper = Stepper::new(&g, &params, 0.01, Scheme::Etdrk4, 2.0 / 3.0)
            .unwrap()
            .with_sup_cap(1.0);
        assert!(matches!(stepper.step(&u), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn config_validation_and_schedule() {
        let mut cfg = StepperConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.schedule(), (1000, 1e-3));
        cfg.dt = 2.0;
        assert!(cfg.validate().is_err());
        cfg.dt = 0.1;
        cfg.dealias_fraction = 0.0;
        assert!(cfg.validate().is_err());
        cfg.dealias_fraction = 1.0;
        cfg.record_every = 0;
        assert!(cfg.validate().is_err());
    }
}
