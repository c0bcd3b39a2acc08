//! Periodic grids, discrete Fourier transforms and Fourier multipliers.
//!
//! The whole space is replaced by the periodic box `[-L, L)^d` sampled at
//! `x_j = -L + j h`, `h = 2L/n`. Arrays are stored row-major with axis 0
//! being the propagation direction `x_1`; in `d = 2` the flat index of
//! `(i0, i1)` is `i0 * n + i1`.
//!
//! Normalization: the forward transform carries no factor and the inverse
//! carries `1/n^d`, so `c_0 = sum_j u_j` and `integral(u) = c_0 h^d`. Spectral
//! coefficients are taken relative to the corner `-L` of the box, i.e.
//! `c_k = sum_j u_j exp(-i xi_k (x_j + L))`. Every operator in this crate is a
//! diagonal multiplier, so the phase convention never leaks into results.
//!
//! The box is only a faithful proxy for the whole space while the solution
//! stays concentrated away from the boundary. As a rule of thumb take `L` at
//! least four times the effective support radius of the data plus the
//! distance dispersive waves travel during the run.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Largest point count accepted by [`oracle_dft`].
pub const ORACLE_LIMIT: usize = 4096;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Periodic computational box metadata.
#[derive(Clone, Debug)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_length: f64,
    spacing: f64,
    /// Per-axis wavenumbers in FFT storage order.
    wavenumbers: Arc<[f64]>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.half_length == other.half_length
    }
}

impl Grid {
    pub fn new(dim: usize, n: usize, half_length: f64) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and at least 8, got {n}"
            )));
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "half length must be positive and finite, got {half_length}"
            )));
        }
        let unit = PI / half_length;
        let wavenumbers: Vec<f64> = (0..n).map(|i| unit * signed_mode(i, n) as f64).collect();
        Ok(Grid {
            dim,
            n,
            half_length,
            spacing: 2.0 * half_length / n as f64,
            wavenumbers: wavenumbers.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of grid points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of one cell, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Per-axis wavenumbers in FFT storage order: index `i` holds
    /// `(pi/L) * i` for `i < n/2` and `(pi/L) * (i - n)` otherwise.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Per-axis lattice in increasing order, `(pi/L) * {-n/2, ..., n/2 - 1}`.
    pub fn lattice(&self) -> Vec<f64> {
        let unit = PI / self.half_length;
        (0..self.n)
            .map(|i| unit * (i as f64 - (self.n / 2) as f64))
            .collect()
    }

    /// Coordinate of grid index `i` along any axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.spacing
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coordinate(i)).collect()
    }

    /// Per-axis indices of a flat index; unused axes are zero.
    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.n, flat % self.n],
        }
    }

    pub fn flat_index(&self, multi: [usize; 2]) -> usize {
        match self.dim {
            1 => multi[0],
            _ => multi[0] * self.n + multi[1],
        }
    }

    /// Physical point of a flat index; unused components are zero.
    pub fn point(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.multi_index(flat);
        match self.dim {
            1 => [self.coordinate(i), 0.0],
            _ => [self.coordinate(i), self.coordinate(j)],
        }
    }

    /// Wavevector of a flat index; unused components are zero.
    pub fn wavevector(&self, flat: usize) -> [f64; 2] {
        let [i, j] = self.multi_index(flat);
        match self.dim {
            1 => [self.wavenumbers[i], 0.0],
            _ => [self.wavenumbers[i], self.wavenumbers[j]],
        }
    }

    /// Flat index of the mode `-k` (Nyquist entries map to themselves).
    pub fn mirror_index(&self, flat: usize) -> usize {
        let n = self.n;
        let [i, j] = self.multi_index(flat);
        let mi = (n - i) % n;
        let mj = (n - j) % n;
        self.flat_index([mi, mj])
    }

    /// Whether the flat index sits on the Nyquist plane of `axis`.
    pub fn is_nyquist(&self, flat: usize, axis: usize) -> bool {
        axis < self.dim && self.multi_index(flat)[axis] == self.n / 2
    }

    /// Whether the flat index sits on the seam `x_axis = -L` of the box.
    pub fn is_seam(&self, flat: usize, axis: usize) -> bool {
        axis < self.dim && self.multi_index(flat)[axis] == 0
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                actual: len,
            });
        }
        Ok(())
    }
}

/// Signed mode number of FFT storage index `i`.
pub(crate) fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Builds a grid; see [`Grid::new`].
pub fn make_grid(dim: usize, n: usize, half_length: f64) -> Result<Grid> {
    Grid::new(dim, n, half_length)
}

fn fft_in_place(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n;
    let fft = plan(n, inverse);
    if grid.dim == 1 {
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, &mut scratch);
        return;
    }
    // rows, transpose, rows again, transpose back
    let rows = |buf: &mut [Complex64]| {
        buf.par_chunks_mut(n).for_each_init(
            || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
    };
    rows(data);
    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
    transpose(data, &mut t, n);
    rows(&mut t);
    transpose(&t, data, n);
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const BLOCK: usize = 32;
    for ib in (0..n).step_by(BLOCK) {
        for jb in (0..n).step_by(BLOCK) {
            for i in ib..(ib + BLOCK).min(n) {
                for j in jb..(jb + BLOCK).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

pub(crate) fn to_spectral(grid: &Grid, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(grid, &mut data, false);
    data
}

/// Inverse transform keeping only the real part. The caller is responsible
/// for Hermitian symmetry of `coeffs`.
pub(crate) fn to_physical(grid: &Grid, coeffs: &[Complex64]) -> Vec<f64> {
    let mut data = coeffs.to_vec();
    fft_in_place(grid, &mut data, true);
    let scale = 1.0 / grid.len() as f64;
    data.iter().map(|c| c.re * scale).collect()
}

/// Largest imaginary part produced by the inverse transform, relative to the
/// largest real part.
pub fn imaginary_residual(grid: &Grid, coeffs: &[Complex64]) -> f64 {
    let mut data = coeffs.to_vec();
    fft_in_place(grid, &mut data, true);
    let re = data.iter().fold(0.0_f64, |m, c| m.max(c.re.abs()));
    let im = data.iter().fold(0.0_f64, |m, c| m.max(c.im.abs()));
    if re == 0.0 {
        im
    } else {
        im / re
    }
}

/// Replaces `c_k` by `(c_k + conj(c_{-k}))/2`, which makes the inverse
/// transform exactly real.
pub(crate) fn enforce_hermitian(grid: &Grid, coeffs: &mut [Complex64]) {
    for idx in 0..coeffs.len() {
        let m = grid.mirror_index(idx);
        if m == idx {
            coeffs[idx].im = 0.0;
        } else if idx < m {
            let avg = 0.5 * (coeffs[idx] + coeffs[m].conj());
            coeffs[idx] = avg;
            coeffs[m] = avg.conj();
        }
    }
}

/// A real function on the grid together with its spectral coefficients.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
    coeffs: Vec<Complex64>,
}

impl Field {
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Field> {
        grid.check_len(values.len())?;
        let mut coeffs = to_spectral(grid, &values);
        enforce_hermitian(grid, &mut coeffs);
        Ok(Field {
            grid: grid.clone(),
            values,
            coeffs,
        })
    }

    /// Builds the field from spectral coefficients; Hermitian symmetry is
    /// enforced before the inverse transform.
    pub fn from_coeffs(grid: &Grid, mut coeffs: Vec<Complex64>) -> Result<Field> {
        grid.check_len(coeffs.len())?;
        enforce_hermitian(grid, &mut coeffs);
        let values = to_physical(grid, &coeffs);
        Ok(Field {
            grid: grid.clone(),
            values,
            coeffs,
        })
    }

    /// Samples `f` at every grid point. In `d = 1` the closure receives a
    /// one-element slice.
    pub fn from_fn<F>(grid: &Grid, f: F) -> Field
    where
        F: Fn(&[f64]) -> f64,
    {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|idx| {
                let p = grid.point(idx);
                f(&p[..d])
            })
            .collect();
        Field::from_values(grid, values).expect("length matches grid by construction")
    }

    pub fn zeros(grid: &Grid) -> Field {
        Field {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Quadrature `L^2` norm, `(sum u_j^2 h^d)^(1/2)`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// Quadrature integral `sum u_j h^d`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Pointwise combination `self + factor * other`.
    pub fn axpy(&self, factor: f64, other: &Field) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + factor * b)
                .collect(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + factor * b)
                .collect(),
        })
    }

    /// Evaluates the trigonometric interpolant at an arbitrary point.
    /// `O(n^d)` per call.
    pub fn interpolate(&self, point: &[f64]) -> f64 {
        let grid = &self.grid;
        let n = grid.n();
        let l = grid.half_length();
        let scale = 1.0 / grid.len() as f64;
        let mut acc = 0.0;
        for (idx, c) in self.coeffs.iter().enumerate() {
            let [i, j] = grid.multi_index(idx);
            // split the Nyquist mode symmetrically so the interpolant is real
            let mut phase = 0.0;
            let mut weight = 1.0;
            for (axis, &mode_index) in [i, j].iter().enumerate().take(grid.dim()) {
                let xi = grid.wavenumbers()[mode_index];
                if mode_index == n / 2 {
                    weight *= 0.5;
                    // cos of the Nyquist term, both signs
                    let arg = xi * (point[axis] + l);
                    weight *= 2.0 * arg.cos();
                } else {
                    phase += xi * (point[axis] + l);
                }
            }
            acc += weight * (c * Complex64::from_polar(1.0, phase)).re;
        }
        acc * scale
    }
}

/// Forward transform of the field's samples (no normalization factor).
pub fn forward(field: &Field) -> Vec<Complex64> {
    to_spectral(field.grid(), field.values())
}

/// Inverse transform back to a real field (factor `1/n^d`).
pub fn inverse(coeffs: &[Complex64], grid: &Grid) -> Result<Field> {
    Field::from_coeffs(grid, coeffs.to_vec())
}

/// Direct `O(N^2)` DFT with the same convention as [`forward`].
pub fn oracle_dft(field: &Field) -> Result<Vec<Complex64>> {
    let grid = field.grid();
    let total = grid.len();
    if total > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            limit: ORACLE_LIMIT,
            actual: total,
        });
    }
    let n = grid.n() as f64;
    let mut out = Vec::with_capacity(total);
    for k in 0..total {
        let kk = grid.multi_index(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &v) in field.values().iter().enumerate() {
            let jj = grid.multi_index(j);
            let dot = (0..grid.dim())
                .map(|ax| ((kk[ax] * jj[ax]) % grid.n()) as f64)
                .sum::<f64>();
            acc += v * Complex64::from_polar(1.0, -2.0 * PI * dot / n);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Fourier multipliers used throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Multiplier {
    /// `|xi|^s`; the zero mode is mapped to 0 for every `s != 0`.
    RieszPotential(f64),
    /// `(1 + |xi|^2)^(s/2)`.
    Bessel(f64),
    /// `-i xi_j / |xi|` on the given axis; zero at the origin and on the
    /// Nyquist plane of that axis.
    RieszTransform(usize),
    /// `exp(i t xi_1 |xi|^a)`, the linear group. The `xi_1` factor is zeroed
    /// on the `x_1` Nyquist plane so the symbol stays unimodular there.
    GroupPhase { t: f64, a: f64 },
    /// `i xi_j`, zeroed on the Nyquist plane of that axis.
    Derivative(usize),
}

impl Multiplier {
    pub fn symbol(&self, grid: &Grid, flat: usize) -> Complex64 {
        let xi = grid.wavevector(flat);
        let norm = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
        let value = match *self {
            Multiplier::RieszPotential(s) => {
                if s == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else if norm == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(norm.powf(s), 0.0)
                }
            }
            Multiplier::Bessel(s) => Complex64::new((1.0 + norm * norm).powf(0.5 * s), 0.0),
            Multiplier::RieszTransform(axis) => {
                if norm == 0.0 || grid.is_nyquist(flat, axis) {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, -xi[axis] / norm)
                }
            }
            Multiplier::GroupPhase { t, a } => {
                let xi1 = if grid.is_nyquist(flat, 0) { 0.0 } else { xi[0] };
                let phase = if norm == 0.0 { 0.0 } else { t * xi1 * norm.powf(a) };
                Complex64::from_polar(1.0, phase)
            }
            Multiplier::Derivative(axis) => {
                if grid.is_nyquist(flat, axis) {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, xi[axis])
                }
            }
        };
        assert!(
            value.re.is_finite() && value.im.is_finite(),
            "non-finite symbol for {self:?}"
        );
        value
    }

    /// Symbol evaluated at every lattice point in storage order.
    pub fn table(&self, grid: &Grid) -> Vec<Complex64> {
        (0..grid.len()).map(|idx| self.symbol(grid, idx)).collect()
    }

    fn validate(&self, grid: &Grid) -> Result<()> {
        match *self {
            Multiplier::RieszTransform(axis) | Multiplier::Derivative(axis) if axis >= grid.dim() => {
                Err(Error::InvalidParameter(format!(
                    "axis {axis} out of range for dimension {}",
                    grid.dim()
                )))
            }
            Multiplier::RieszPotential(s) | Multiplier::Bessel(s) if !s.is_finite() => Err(
                Error::InvalidParameter(format!("non-finite order {s}")),
            ),
            Multiplier::GroupPhase { t, a } if !(t.is_finite() && a.is_finite()) => Err(
                Error::InvalidParameter(format!("non-finite group parameters t={t}, a={a}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Multiplies the coefficients of `field` pointwise by the symbol of `spec`.
pub fn apply_multiplier(field: &Field, spec: Multiplier) -> Result<Field> {
    let grid = field.grid();
    spec.validate(grid)?;
    let coeffs = field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(idx, c)| c * spec.symbol(grid, idx))
        .collect();
    Field::from_coeffs(grid, coeffs)
}
