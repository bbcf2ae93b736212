//! Truncated Fourier series of real functions on the torus `T^d`.
//!
//! A [`TorusFunction`] stores the complex coefficients `c_k` of
//! `f(σ) = Σ_k c_k e^{2πi k·σ}` for `k` in the band `[-N/2, N/2)^d`, in the
//! usual FFT (wrapped) ordering of a row-major `N^d` array. The collocation
//! view is the uniform grid `σ_j = j/N`.
//!
//! Nonlinear operations are evaluated on the dealiasing grid of `(2N)^d`
//! points and truncated back to the band. Modes with some component equal to
//! `-N/2` (Nyquist modes) have no conjugate partner inside the band; they are
//! kept by [`TorusFunction::analyze`] so the grid round trip is exact, and
//! dropped by every other operation.

mod fft;

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const REDUCE_CHUNK: usize = 4096;

/// Relative tolerance used when validating Hermitian symmetry.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Shells whose largest coefficient is below this are ignored by the decay fit.
pub const DECAY_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("resolution {0} is not a power of two >= 2")]
    UnsupportedResolution(usize),
    #[error("dimension {0} is not supported (need d >= 2)")]
    UnsupportedDimension(usize),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("shape mismatch: ({0}, {1}) vs ({2}, {3})")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("coefficients are not Hermitian at k = {index}: deviation {deviation:e}")]
    SymmetryViolation { index: LatticeIndex, deviation: f64 },
    #[error("lattice index {0} lies outside the band of resolution {1}")]
    OutOfBand(LatticeIndex, usize),
}

/// Integer wave vector `k ∈ Z^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeIndex(pub Vec<i64>);

impl LatticeIndex {
    pub fn new(k: impl Into<Vec<i64>>) -> Self {
        LatticeIndex(k.into())
    }

    pub fn zero(dim: usize) -> Self {
        LatticeIndex(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|k| = Σ|k_i|`.
    pub fn norm1(&self) -> i64 {
        self.0.iter().map(|k| k.abs()).sum()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(&k, &x)| k as f64 * x).sum()
    }

    pub fn negated(&self) -> Self {
        LatticeIndex(self.0.iter().map(|k| -k).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }
}

impl fmt::Display for LatticeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// Index arithmetic for a row-major `n^d` array in FFT ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub dim: usize,
    pub n: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Writes the wave vector of `flat` into `k`; returns `false` for Nyquist modes.
    #[inline]
    pub fn wavevector(&self, mut flat: usize, k: &mut [i64]) -> bool {
        let mut inside = true;
        for a in (0..self.dim).rev() {
            let i = flat % self.n;
            flat /= self.n;
            k[a] = self.wavenumber(i);
            inside &= k[a] != -(self.n as i64 / 2);
        }
        inside
    }

    pub fn flat_of(&self, k: &[i64]) -> Option<usize> {
        let half = (self.n / 2) as i64;
        let mut flat = 0usize;
        for &ka in k {
            if ka < -half || ka >= half {
                return None;
            }
            flat = flat * self.n + ka.rem_euclid(self.n as i64) as usize;
        }
        Some(flat)
    }

    /// Flat index of `-k` (mod n on each axis).
    #[inline]
    pub fn partner(&self, mut flat: usize) -> usize {
        let mut out = 0usize;
        let mut mult = 1usize;
        for _ in 0..self.dim {
            let i = flat % self.n;
            flat /= self.n;
            out += ((self.n - i) % self.n) * mult;
            mult *= self.n;
        }
        out
    }

    /// Grid point `σ_j = j/n` of the collocation grid.
    #[inline]
    pub fn point(&self, mut flat: usize, sigma: &mut [f64]) {
        for a in (0..self.dim).rev() {
            sigma[a] = (flat % self.n) as f64 / self.n as f64;
            flat /= self.n;
        }
    }
}

fn validate_shape(dim: usize, n: usize) -> Result<Layout, TorusError> {
    if dim < 2 {
        return Err(TorusError::UnsupportedDimension(dim));
    }
    if n < 2 || !n.is_power_of_two() {
        return Err(TorusError::UnsupportedResolution(n));
    }
    Ok(Layout { dim, n })
}

/// Real function on `T^d` given by its truncated Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusFunction {
    layout: Layout,
    coeffs: Vec<Complex64>,
}

/// Norms and decay diagnostics of a [`TorusFunction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub sup_norm: f64,
    /// `(r, ‖f‖_{H^r})` pairs in the requested order.
    pub sobolev: Vec<(f64, f64)>,
    /// Fitted exponential decay rate of the coefficients; `None` when the fit
    /// is undefined (fewer than three usable shells) or not decaying.
    pub decay_rate: Option<f64>,
}

impl NormReport {
    pub fn sobolev(&self, r: f64) -> Option<f64> {
        self.sobolev.iter().find(|(s, _)| *s == r).map(|&(_, v)| v)
    }
}

impl TorusFunction {
    pub fn zeros(dim: usize, n: usize) -> Result<Self, TorusError> {
        let layout = validate_shape(dim, n)?;
        Ok(Self {
            layout,
            coeffs: vec![Complex64::new(0.0, 0.0); layout.len()],
        })
    }

    pub fn constant(dim: usize, n: usize, value: f64) -> Result<Self, TorusError> {
        let mut f = Self::zeros(dim, n)?;
        f.coeffs[0] = Complex64::new(value, 0.0);
        Ok(f)
    }

    /// Builds a function from a list of `(k, c_k)`; repeated indices add up.
    pub fn from_modes(
        dim: usize,
        n: usize,
        modes: &[(LatticeIndex, Complex64)],
    ) -> Result<Self, TorusError> {
        let mut f = Self::zeros(dim, n)?;
        for (k, c) in modes {
            if k.dim() != dim {
                return Err(TorusError::OutOfBand(k.clone(), n));
            }
            let flat = f
                .layout
                .flat_of(&k.0)
                .ok_or_else(|| TorusError::OutOfBand(k.clone(), n))?;
            f.coeffs[flat] += c;
        }
        f.check_hermitian()?;
        Ok(f)
    }

    /// Wraps a coefficient array in FFT ordering, validating Hermitian symmetry.
    pub fn from_coeffs(dim: usize, n: usize, coeffs: Vec<Complex64>) -> Result<Self, TorusError> {
        let layout = validate_shape(dim, n)?;
        if coeffs.len() != layout.len() {
            return Err(TorusError::LengthMismatch {
                expected: layout.len(),
                got: coeffs.len(),
            });
        }
        let f = Self { layout, coeffs };
        f.check_hermitian()?;
        Ok(f)
    }

    pub(crate) fn from_raw(layout: Layout, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), layout.len());
        Self { layout, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn resolution(&self) -> usize {
        self.layout.n
    }

    pub(crate) fn layout(&self) -> Layout {
        self.layout
    }

    /// Coefficients in FFT ordering.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: &LatticeIndex) -> Complex64 {
        match self.layout.flat_of(&k.0) {
            Some(flat) if k.dim() == self.dim() => self.coeffs[flat],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn same_shape(&self, other: &Self) -> Result<(), TorusError> {
        if self.layout != other.layout {
            return Err(TorusError::ShapeMismatch(
                self.dim(),
                self.resolution(),
                other.dim(),
                other.resolution(),
            ));
        }
        Ok(())
    }

    pub fn check_hermitian(&self) -> Result<(), TorusError> {
        let scale = self.max_abs_coeff().max(1.0);
        let mut worst = (0usize, 0.0f64);
        for (flat, c) in self.coeffs.iter().enumerate() {
            let dev = (c - self.coeffs[self.layout.partner(flat)].conj()).norm();
            if dev > worst.1 {
                worst = (flat, dev);
            }
        }
        if worst.1 > HERMITIAN_TOL * scale || !worst.1.is_finite() {
            let mut k = vec![0; self.dim()];
            self.layout.wavevector(worst.0, &mut k);
            return Err(TorusError::SymmetryViolation {
                index: LatticeIndex(k),
                deviation: worst.1,
            });
        }
        Ok(())
    }

    /// Position of `k` in the coefficient array, if it lies in the band.
    pub fn flat_index(&self, k: &LatticeIndex) -> Option<usize> {
        if k.dim() != self.dim() {
            return None;
        }
        self.layout.flat_of(&k.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Values on the `N^d` collocation grid.
    pub fn synthesize(&self) -> Result<Vec<f64>, TorusError> {
        self.check_hermitian()?;
        Ok(self.grid_values())
    }

    pub(crate) fn grid_values(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        fft::transform(
            &mut buf,
            self.dim(),
            self.resolution(),
            FftDirection::Inverse,
        );
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Coefficients of the trigonometric interpolant of grid values.
    pub fn analyze(dim: usize, n: usize, values: &[f64]) -> Result<Self, TorusError> {
        let layout = validate_shape(dim, n)?;
        if values.len() != layout.len() {
            return Err(TorusError::LengthMismatch {
                expected: layout.len(),
                got: values.len(),
            });
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::transform(&mut buf, dim, n, FftDirection::Forward);
        let scale = 1.0 / layout.len() as f64;
        buf.par_iter_mut().for_each(|z| *z *= scale);
        let coeffs = symmetrize(layout, &buf, false);
        Ok(Self { layout, coeffs })
    }

    /// Number of points on the dealiasing grid, `(2N)^d`.
    pub fn fine_len(&self) -> usize {
        (2 * self.resolution()).pow(self.dim() as u32)
    }

    /// Values on the `(2N)^d` dealiasing grid `σ_j = j/(2N)`.
    pub fn collocate(&self) -> Vec<f64> {
        let fine = Layout {
            dim: self.dim(),
            n: 2 * self.resolution(),
        };
        let mut buf = vec![Complex64::new(0.0, 0.0); fine.len()];
        let mut k = vec![0i64; self.dim()];
        for (flat, c) in self.coeffs.iter().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            self.layout.wavevector(flat, &mut k);
            // band indices always fit on the fine grid
            let target = fine.flat_of(&k).expect("band index on fine grid");
            buf[target] = *c;
        }
        fft::transform(&mut buf, fine.dim, fine.n, FftDirection::Inverse);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Analyzes values on the `(2N)^d` grid and truncates to the band of `N`.
    pub fn from_collocation(dim: usize, n: usize, values: &[f64]) -> Result<Self, TorusError> {
        let layout = validate_shape(dim, n)?;
        let fine = Layout { dim, n: 2 * n };
        if values.len() != fine.len() {
            return Err(TorusError::LengthMismatch {
                expected: fine.len(),
                got: values.len(),
            });
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::transform(&mut buf, dim, fine.n, FftDirection::Forward);
        let scale = 1.0 / fine.len() as f64;
        let mut band = vec![Complex64::new(0.0, 0.0); layout.len()];
        let mut k = vec![0i64; dim];
        for (flat, c) in band.iter_mut().enumerate() {
            if layout.wavevector(flat, &mut k) {
                *c = buf[fine.flat_of(&k).expect("band index on fine grid")] * scale;
            }
        }
        let coeffs = symmetrize(layout, &band, true);
        Ok(Self { layout, coeffs })
    }

    /// Points `σ_j = j/(2N)` of the dealiasing grid, flattened `d` at a time.
    pub fn fine_points(&self) -> Vec<f64> {
        let fine = Layout {
            dim: self.dim(),
            n: 2 * self.resolution(),
        };
        let mut pts = vec![0.0; fine.len() * self.dim()];
        pts.par_chunks_mut(self.dim())
            .enumerate()
            .for_each(|(j, s)| fine.point(j, s));
        pts
    }

    /// `f ∘ T_t`, i.e. `σ ↦ f(σ + t)`.
    pub fn shift(&self, t: &[f64]) -> Self {
        assert_eq!(t.len(), self.dim(), "shift vector dimension");
        let layout = self.layout;
        let coeffs = self
            .coeffs
            .par_iter()
            .enumerate()
            .map_init(
                || vec![0i64; layout.dim],
                |k, (flat, c)| {
                    if !layout.wavevector(flat, k) {
                        return Complex64::new(0.0, 0.0);
                    }
                    let theta: f64 = k.iter().zip(t).map(|(&ki, &ti)| ki as f64 * ti).sum();
                    c * phase(theta)
                },
            )
            .collect();
        Self { layout, coeffs }
    }

    /// Directional derivative `(α·∇) f`.
    pub fn dalpha(&self, alpha: &[f64]) -> Self {
        assert_eq!(alpha.len(), self.dim(), "direction dimension");
        let layout = self.layout;
        let coeffs = self
            .coeffs
            .par_iter()
            .enumerate()
            .map_init(
                || vec![0i64; layout.dim],
                |k, (flat, c)| {
                    if !layout.wavevector(flat, k) {
                        return Complex64::new(0.0, 0.0);
                    }
                    let ka: f64 = k.iter().zip(alpha).map(|(&ki, &ai)| ki as f64 * ai).sum();
                    c * Complex64::new(0.0, 2.0 * PI * ka)
                },
            )
            .collect();
        Self { layout, coeffs }
    }

    /// Dealiased product.
    pub fn multiply(&self, other: &Self) -> Result<Self, TorusError> {
        self.same_shape(other)?;
        let a = self.collocate();
        let b = other.collocate();
        let prod: Vec<f64> = a.par_iter().zip(&b).map(|(x, y)| x * y).collect();
        Self::from_collocation(self.dim(), self.resolution(), &prod)
    }

    /// Applies a pointwise map on the dealiasing grid to several functions.
    ///
    /// `f` receives the point index and the values of each input at that point.
    pub fn pointwise<F>(inputs: &[&TorusFunction], f: F) -> Result<Self, TorusError>
    where
        F: Fn(usize, &[f64]) -> f64 + Sync,
    {
        let first = inputs.first().expect("at least one input");
        for g in &inputs[1..] {
            first.same_shape(g)?;
        }
        let grids: Vec<Vec<f64>> = inputs.iter().map(|g| g.collocate()).collect();
        let values = pointwise_values(&grids, f);
        Self::from_collocation(first.dim(), first.resolution(), &values)
    }

    /// Average over the torus, `c_0`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn with_zero_mean(mut self) -> Self {
        self.coeffs[0] = Complex64::new(0.0, 0.0);
        self
    }

    pub fn add_constant(mut self, c: f64) -> Self {
        self.coeffs[0] += c;
        self
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            layout: self.layout,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// `‖f‖²_{H^r} = Σ |c_k|² (1 + |k|²)^r` with `|k|` the 1-norm.
    pub fn sobolev_norm(&self, r: f64) -> f64 {
        let layout = self.layout;
        // fixed chunks keep the summation order independent of scheduling
        let partial: Vec<f64> = self
            .coeffs
            .par_chunks(REDUCE_CHUNK)
            .enumerate()
            .map(|(chunk, cs)| {
                let mut k = vec![0i64; layout.dim];
                let mut acc = 0.0;
                for (i, c) in cs.iter().enumerate() {
                    layout.wavevector(chunk * REDUCE_CHUNK + i, &mut k);
                    let s = k.iter().map(|x| x.abs()).sum::<i64>() as f64;
                    acc += c.norm_sqr() * (1.0 + s * s).powf(r);
                }
                acc
            })
            .collect();
        let sum: f64 = partial.iter().sum();
        sum.sqrt()
    }

    /// Largest absolute value on the `N^d` collocation grid.
    pub fn sup_norm(&self) -> f64 {
        self.grid_values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest coefficient modulus on each 1-norm shell `|k| = s`.
    pub fn shell_maxima(&self) -> Vec<f64> {
        let max_shell = self.dim() * self.resolution() / 2;
        let mut shells = vec![0.0f64; max_shell + 1];
        let mut k = vec![0i64; self.dim()];
        for (flat, c) in self.coeffs.iter().enumerate() {
            self.layout.wavevector(flat, &mut k);
            let s = k.iter().map(|x| x.unsigned_abs() as usize).sum::<usize>();
            shells[s] = shells[s].max(c.norm());
        }
        shells
    }

    /// Decay rate `ρ̂` from a least-squares fit `log max_{|k|=s}|c_k| ≈ a - 2πρ̂ s`.
    pub fn decay_rate(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .shell_maxima()
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &m)| m > DECAY_FLOOR)
            .map(|(s, &m)| (s as f64, m.ln()))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        let slope = least_squares_slope(&pts);
        let rate = -slope / (2.0 * PI);
        (rate.is_finite() && rate >= 0.0).then_some(rate)
    }

    pub fn norms(&self, r_list: &[f64]) -> NormReport {
        NormReport {
            sup_norm: self.sup_norm(),
            sobolev: r_list.iter().map(|&r| (r, self.sobolev_norm(r))).collect(),
            decay_rate: self.decay_rate(),
        }
    }

    /// Direct evaluation of the series at an arbitrary point.
    pub fn eval_at(&self, sigma: &[f64]) -> f64 {
        let mut k = vec![0i64; self.dim()];
        let mut acc = 0.0;
        for (flat, c) in self.coeffs.iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            self.layout.wavevector(flat, &mut k);
            let theta: f64 = k.iter().zip(sigma).map(|(&ki, &s)| ki as f64 * s).sum();
            acc += (c * phase(theta)).re;
        }
        acc
    }

    /// Nonzero in-band modes sorted lexicographically by `k`.
    pub fn modes(&self) -> Vec<(LatticeIndex, Complex64)> {
        let mut out: Vec<(LatticeIndex, Complex64)> = self
            .all_modes()
            .into_iter()
            .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Every stored coefficient with its wave vector, sorted lexicographically.
    pub fn all_modes(&self) -> Vec<(LatticeIndex, Complex64)> {
        let mut out = Vec::with_capacity(self.coeffs.len());
        for (flat, c) in self.coeffs.iter().enumerate() {
            let mut k = vec![0i64; self.dim()];
            self.layout.wavevector(flat, &mut k);
            out.push((LatticeIndex(k), *c));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Zero-pads or truncates to another resolution.
    pub fn resample(&self, n: usize) -> Result<Self, TorusError> {
        let target = validate_shape(self.dim(), n)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); target.len()];
        let mut k = vec![0i64; self.dim()];
        for (flat, c) in self.coeffs.iter().enumerate() {
            if !self.layout.wavevector(flat, &mut k) {
                continue;
            }
            if let Some(t) = target.flat_of(&k) {
                if target.wavevector(t, &mut k.clone()) {
                    coeffs[t] = *c;
                }
            }
        }
        Ok(Self {
            layout: target,
            coeffs,
        })
    }

    /// Zeroes every mode with `max_i |k_i| > cutoff`.
    pub fn low_pass(mut self, cutoff: i64) -> Self {
        let layout = self.layout;
        self.coeffs.par_iter_mut().enumerate().for_each_init(
            || vec![0i64; layout.dim],
            |k, (flat, c)| {
                let inside = layout.wavevector(flat, k);
                if !inside || k.iter().any(|x| x.abs() > cutoff) {
                    *c = Complex64::new(0.0, 0.0);
                }
            },
        );
        self
    }

    /// Largest coefficient difference.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// `e^{2πiθ}` with the argument reduced mod 1 first.
#[inline]
pub(crate) fn phase(theta: f64) -> Complex64 {
    let r = theta - theta.round();
    let (s, c) = (2.0 * PI * r).sin_cos();
    Complex64::new(c, s)
}

pub(crate) fn pointwise_values<F>(grids: &[Vec<f64>], f: F) -> Vec<f64>
where
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    let len = grids[0].len();
    (0..len)
        .into_par_iter()
        .map_init(
            || vec![0.0; grids.len()],
            |args, j| {
                for (a, g) in args.iter_mut().zip(grids) {
                    *a = g[j];
                }
                f(j, args)
            },
        )
        .collect()
}

/// `(c_k + conj c_{-k}) / 2`, optionally zeroing Nyquist modes.
fn symmetrize(layout: Layout, raw: &[Complex64], drop_nyquist: bool) -> Vec<Complex64> {
    raw.par_iter()
        .enumerate()
        .map_init(
            || vec![0i64; layout.dim],
            |k, (flat, c)| {
                if !layout.wavevector(flat, k) && drop_nyquist {
                    return Complex64::new(0.0, 0.0);
                }
                (c + raw[layout.partner(flat)].conj()) * 0.5
            },
        )
        .collect()
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

impl Add for &TorusFunction {
    type Output = TorusFunction;
    fn add(self, rhs: Self) -> TorusFunction {
        assert_eq!(self.layout, rhs.layout, "shape mismatch in add");
        TorusFunction {
            layout: self.layout,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &TorusFunction {
    type Output = TorusFunction;
    fn sub(self, rhs: Self) -> TorusFunction {
        assert_eq!(self.layout, rhs.layout, "shape mismatch in sub");
        TorusFunction {
            layout: self.layout,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Neg for &TorusFunction {
    type Output = TorusFunction;
    fn neg(self) -> TorusFunction {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &TorusFunction {
    type Output = TorusFunction;
    fn mul(self, s: f64) -> TorusFunction {
        self.scale(s)
    }
}
