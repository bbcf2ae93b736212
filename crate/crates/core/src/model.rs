//! Trigonometric-polynomial forces and the equilibrium error functional
//!
//! `E[ĥ,λ](σ) = ĥ(σ+ωα) + ĥ(σ−ωα) − 2ĥ(σ) + Û(σ + α ĥ(σ)) + λ`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::{second_difference_symbol, FrequencyData};
use crate::torus::{phase, LatticeIndex, Layout, TorusError, TorusFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("force is not real-valued: mode {0} has no conjugate partner")]
    NonHermitian(LatticeIndex),
    #[error("mode {k} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        k: LatticeIndex,
        got: usize,
        expected: usize,
    },
    #[error("force spec gives both U_modes and V_modes")]
    AmbiguousSpec,
    #[error(transparent)]
    Torus(#[from] TorusError),
}

/// One Fourier mode `(k, c_k)` of a force or potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: LatticeIndex,
    pub re: f64,
    pub im: f64,
}

impl Mode {
    pub fn new(k: impl Into<Vec<i64>>, amplitude: Complex64) -> Self {
        Self {
            k: LatticeIndex::new(k),
            re: amplitude.re,
            im: amplitude.im,
        }
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Either the force `Û` or a potential `V̂` with `Û = ∂_α V̂`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceSpec {
    #[serde(rename = "U_modes", default, skip_serializing_if = "Option::is_none")]
    pub u_modes: Option<Vec<Mode>>,
    #[serde(rename = "V_modes", default, skip_serializing_if = "Option::is_none")]
    pub v_modes: Option<Vec<Mode>>,
}

impl ForceSpec {
    pub fn force(modes: Vec<Mode>) -> Self {
        Self {
            u_modes: Some(modes),
            v_modes: None,
        }
    }

    pub fn potential(modes: Vec<Mode>) -> Self {
        Self {
            u_modes: None,
            v_modes: Some(modes),
        }
    }

    /// `V̂(σ) = Σ_i a_i sin(2πσ_i)`, the potential of the running example.
    pub fn sine_potential(amplitudes: &[f64]) -> Self {
        let d = amplitudes.len();
        let mut modes = Vec::new();
        for (i, &a) in amplitudes.iter().enumerate() {
            let mut k = vec![0i64; d];
            k[i] = 1;
            let minus: Vec<i64> = k.iter().map(|x| -x).collect();
            modes.push(Mode::new(k, Complex64::new(0.0, -a / 2.0)));
            modes.push(Mode::new(minus, Complex64::new(0.0, a / 2.0)));
        }
        Self::potential(modes)
    }

    /// Sine potential rescaled so that `Û = ∂_α V̂ = Σ_i a_i cos(2πσ_i)`.
    pub fn unit_gradient_sines(amplitudes: &[f64], alpha: &[f64]) -> Self {
        let scaled: Vec<f64> = amplitudes
            .iter()
            .zip(alpha)
            .map(|(a, al)| a / (2.0 * std::f64::consts::PI * al))
            .collect();
        Self::sine_potential(&scaled)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ForceTerm {
    pub k: Vec<i64>,
    pub amplitude: Complex64,
    /// `k·α`
    pub k_alpha: f64,
}

/// Real force `Û` on `T^d` given by finitely many Fourier modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceModel {
    alpha: Vec<f64>,
    terms: Vec<ForceTerm>,
    potential: Option<Vec<(LatticeIndex, Complex64)>>,
}

fn collect_modes(
    modes: &[Mode],
    dim: usize,
) -> Result<BTreeMap<LatticeIndex, Complex64>, ModelError> {
    let mut map: BTreeMap<LatticeIndex, Complex64> = BTreeMap::new();
    for m in modes {
        if m.k.dim() != dim {
            return Err(ModelError::DimensionMismatch {
                k: m.k.clone(),
                got: m.k.dim(),
                expected: dim,
            });
        }
        *map.entry(m.k.clone()).or_default() += m.amplitude();
    }
    let scale = map.values().map(|c| c.norm()).fold(1.0, f64::max);
    for (k, c) in &map {
        let partner = map.get(&k.negated()).copied().unwrap_or_default();
        if (c - partner.conj()).norm() > 1e-12 * scale {
            return Err(ModelError::NonHermitian(k.clone()));
        }
    }
    Ok(map)
}

/// Builds `Û` from the spec; a potential is differentiated, `Û_k = 2πi(k·α) V̂_k`.
pub fn build_force(spec: &ForceSpec, alpha: &[f64]) -> Result<ForceModel, ModelError> {
    let dim = alpha.len();
    let (force, potential) = match (&spec.u_modes, &spec.v_modes) {
        (Some(_), Some(_)) => return Err(ModelError::AmbiguousSpec),
        (Some(u), None) => (collect_modes(u, dim)?, None),
        (None, v) => {
            let v = collect_modes(v.as_deref().unwrap_or(&[]), dim)?;
            let u = v
                .iter()
                .map(|(k, c)| (k.clone(), Complex64::new(0.0, 2.0 * PI * k.dot(alpha)) * c))
                .collect();
            (u, Some(v.into_iter().collect()))
        }
    };
    let terms = force
        .into_iter()
        .filter(|(_, c)| c.norm() != 0.0)
        .map(|(k, amplitude)| ForceTerm {
            k_alpha: k.dot(alpha),
            k: k.0,
            amplitude,
        })
        .collect();
    Ok(ForceModel {
        alpha: alpha.to_vec(),
        terms,
        potential,
    })
}

impl ForceModel {
    pub fn zero(alpha: &[f64]) -> Self {
        build_force(&ForceSpec::default(), alpha).expect("empty spec")
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn is_gradient(&self) -> bool {
        self.potential.is_some()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Nonzero force modes `(k, Û_k)`, sorted by `k`.
    pub fn modes(&self) -> Vec<(LatticeIndex, Complex64)> {
        self.terms
            .iter()
            .map(|t| (LatticeIndex(t.k.clone()), t.amplitude))
            .collect()
    }

    /// `Σ_k |Û_k|`, a bound for `sup |Û|`.
    pub fn amplitude_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude.norm()).sum()
    }

    pub fn potential_modes(&self) -> Option<&[(LatticeIndex, Complex64)]> {
        self.potential.as_deref()
    }

    pub(crate) fn terms(&self) -> &[ForceTerm] {
        &self.terms
    }

    /// Largest `|k_i|` over the force modes.
    pub fn max_wavenumber(&self) -> i64 {
        self.terms
            .iter()
            .flat_map(|t| t.k.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            alpha: self.alpha.clone(),
            terms: self
                .terms
                .iter()
                .filter(|_| s != 0.0)
                .map(|t| ForceTerm {
                    amplitude: t.amplitude * s,
                    ..t.clone()
                })
                .collect(),
            potential: self
                .potential
                .as_ref()
                .map(|v| v.iter().map(|(k, c)| (k.clone(), c * s)).collect()),
        }
    }

    /// `(∂_α)^order Û` at `σ + α x`.
    pub fn evaluate(&self, sigma: &[f64], x: f64, order: u32) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let theta: f64 =
                t.k.iter()
                    .zip(sigma)
                    .map(|(&k, &s)| k as f64 * s)
                    .sum::<f64>()
                    + t.k_alpha * x;
            acc += t.amplitude * derivative_factor(t.k_alpha, order) * phase(theta);
        }
        acc.re
    }

    /// `(∂_α)^order Û(σ + α h(σ))` on the dealiasing grid of `h`.
    pub fn values_along(&self, h: &TorusFunction, order: u32) -> Vec<f64> {
        let h_vals = h.collocate();
        self.values_along_grid(h, &h_vals, order)
    }

    pub(crate) fn values_along_grid(
        &self,
        h: &TorusFunction,
        h_vals: &[f64],
        order: u32,
    ) -> Vec<f64> {
        let fine = Layout {
            dim: h.dim(),
            n: 2 * h.resolution(),
        };
        h_vals
            .par_iter()
            .enumerate()
            .map_init(
                || vec![0.0; fine.dim],
                |sigma, (j, &x)| {
                    fine.point(j, sigma);
                    self.evaluate(sigma, x, order)
                },
            )
            .collect()
    }
}

#[inline]
fn derivative_factor(k_alpha: f64, order: u32) -> Complex64 {
    Complex64::new(0.0, 2.0 * PI * k_alpha).powu(order)
}

/// `Û(σ + α ĥ(σ))`, evaluated mode by mode at the displaced grid points.
pub fn eval_force_along(h: &TorusFunction, force: &ForceModel) -> TorusFunction {
    if force.is_zero() {
        return TorusFunction::zeros(h.dim(), h.resolution()).expect("valid shape");
    }
    let vals = force.values_along(h, 0);
    TorusFunction::from_collocation(h.dim(), h.resolution(), &vals).expect("valid shape")
}

/// `ĥ∘T_{ωα} + ĥ∘T_{−ωα} − 2ĥ`, applied in coefficient space.
pub fn second_difference(h: &TorusFunction, freq: &FrequencyData) -> TorusFunction {
    let layout = h.layout();
    let coeffs = h
        .coeffs()
        .par_iter()
        .enumerate()
        .map_init(
            || vec![0i64; layout.dim],
            |k, (flat, c)| {
                if !layout.wavevector(flat, k) {
                    return Complex64::new(0.0, 0.0);
                }
                c * second_difference_symbol(freq.rotation_phase(k))
            },
        )
        .collect();
    TorusFunction::from_raw(layout, coeffs)
}

/// Equilibrium error `e = E[ĥ,λ]` with its sup and `H^m` norms.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumError {
    pub values: TorusFunction,
    pub sup: f64,
    pub sobolev_m: f64,
    pub m: f64,
}

impl EquilibriumError {
    pub fn from_values(values: TorusFunction, m: f64) -> Self {
        Self {
            sup: values.sup_norm(),
            sobolev_m: values.sobolev_norm(m),
            values,
            m,
        }
    }
}

/// `E[ĥ,λ] = ĥ∘T_{ωα} + ĥ∘T_{−ωα} − 2ĥ + Û∘(Id + αĥ) + λ`.
pub fn error_functional(
    h: &TorusFunction,
    lambda: f64,
    force: &ForceModel,
    freq: &FrequencyData,
    m: f64,
) -> EquilibriumError {
    let values = error_values(h, lambda, force, freq);
    EquilibriumError::from_values(values, m)
}

pub(crate) fn error_values(
    h: &TorusFunction,
    lambda: f64,
    force: &ForceModel,
    freq: &FrequencyData,
) -> TorusFunction {
    let linear = second_difference(h, freq);
    let composed = eval_force_along(h, force);
    (&linear + &composed).add_constant(lambda)
}

/// `D₁E[ĥ,λ] X = X∘T_{ωα} + X∘T_{−ωα} − 2X + ∂_αÛ(σ + αĥ)·X`.
pub fn linearized_error(
    h: &TorusFunction,
    force: &ForceModel,
    freq: &FrequencyData,
    x: &TorusFunction,
) -> TorusFunction {
    let linear = second_difference(x, freq);
    let du = force.values_along(h, 1);
    let xv = x.collocate();
    let prod: Vec<f64> = du.par_iter().zip(&xv).map(|(a, b)| a * b).collect();
    let coupling =
        TorusFunction::from_collocation(x.dim(), x.resolution(), &prod).expect("valid shape");
    &linear + &coupling
}
