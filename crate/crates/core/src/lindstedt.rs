//! Perturbative expansion in the force amplitude.
//!
//! With force `εÛ` the pair `ĥ_ε = Σ εⁿ ĥⁿ`, `λ_ε = Σ εⁿ λⁿ` solves the
//! equilibrium equation order by order:
//!
//! ```text
//! ĥⁿ∘T_{ωα} + ĥⁿ∘T_{−ωα} − 2ĥⁿ + R_n + λⁿ = 0,
//! R_n = [Û(σ + α Σ_{m<n} εᵐ ĥᵐ)]_{n−1}
//! ```
//!
//! where `[·]_j` is the coefficient of `εʲ`. `R_n` is computed pointwise with
//! truncated Taylor series (jets) of the exponentials in the force.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::{
    divide_by_symbol, second_difference_symbol, CohomologyError, FrequencyData,
};
use crate::model::ForceModel;
use crate::torus::{phase, Layout, TorusError, TorusFunction};

pub const DEFAULT_ORDER: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LindstedtError {
    #[error(transparent)]
    Cohomology(#[from] CohomologyError),
    #[error(transparent)]
    Torus(#[from] TorusError),
    #[error("expansion order must be at least 1")]
    ZeroOrder,
    #[error("force has dimension {force}, frequency has dimension {freq}")]
    DimensionMismatch { force: usize, freq: usize },
}

/// Terms `ĥ¹..ĥ^{n_max}` and `λ¹..λ^{n_max}`; the zeroth order vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct LindstedtSeries {
    pub order: usize,
    pub h_terms: Vec<TorusFunction>,
    pub lambda_terms: Vec<f64>,
}

/// Row of the scaling table written next to a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub residual_sup: f64,
}

/// `exp(u)` as a jet, given `u` with `u₀ = 0`.
///
/// Uses `n yₙ = Σ_{j=1}^{n} j uⱼ y_{n−j}`.
fn exp_jet(u: &[Complex64], y: &mut [Complex64]) {
    y[0] = Complex64::new(1.0, 0.0);
    for n in 1..y.len() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 1..=n {
            acc += u[j] * y[n - j] * j as f64;
        }
        y[n] = acc / n as f64;
    }
}

/// `R_n` on the dealiasing grid from the fine-grid values of `ĥ¹..ĥ^{n−1}`.
fn order_rhs(force: &ForceModel, h_vals: &[Vec<f64>], layout: Layout) -> Vec<f64> {
    let n = h_vals.len() + 1;
    let terms = force.terms();
    (0..layout.len())
        .into_par_iter()
        .map_init(
            || {
                (
                    vec![0.0; layout.dim],
                    vec![Complex64::new(0.0, 0.0); n],
                    vec![Complex64::new(0.0, 0.0); n],
                )
            },
            |(sigma, u, y), j| {
                layout.point(j, sigma);
                let mut acc = Complex64::new(0.0, 0.0);
                for t in terms {
                    let scale = Complex64::new(0.0, 2.0 * std::f64::consts::PI * t.k_alpha);
                    u[0] = Complex64::new(0.0, 0.0);
                    for m in 1..n {
                        u[m] = scale * h_vals[m - 1][j];
                    }
                    exp_jet(u, y);
                    let theta: f64 =
                        t.k.iter()
                            .zip(sigma.iter())
                            .map(|(&k, &s)| k as f64 * s)
                            .sum();
                    acc += t.amplitude * phase(theta) * y[n - 1];
                }
                acc.re
            },
        )
        .collect()
}

/// Computes the series up to order `n_max` at resolution `n`.
pub fn lindstedt_expand(
    force: &ForceModel,
    freq: &FrequencyData,
    n: usize,
    n_max: usize,
) -> Result<LindstedtSeries, LindstedtError> {
    if n_max == 0 {
        return Err(LindstedtError::ZeroOrder);
    }
    if force.dim() != freq.dim() {
        return Err(LindstedtError::DimensionMismatch {
            force: force.dim(),
            freq: freq.dim(),
        });
    }
    let dim = freq.dim();
    let zero = TorusFunction::zeros(dim, n)?;
    let fine = Layout { dim, n: 2 * n };
    let mut h_terms: Vec<TorusFunction> = Vec::with_capacity(n_max);
    let mut fine_vals: Vec<Vec<f64>> = Vec::with_capacity(n_max);
    let mut lambda_terms = Vec::with_capacity(n_max);
    for _ in 1..=n_max {
        let r = if force.is_zero() {
            zero.clone()
        } else {
            TorusFunction::from_collocation(dim, n, &order_rhs(force, &fine_vals, fine))?
        };
        let lambda = -r.mean();
        // second difference of ĥⁿ equals −(R_n + λⁿ); mode 0 drops out
        let h = divide_by_symbol(&r.scale(-1.0), freq, |theta| {
            Complex64::new(second_difference_symbol(theta), 0.0)
        })?;
        fine_vals.push(h.collocate());
        h_terms.push(h);
        lambda_terms.push(lambda);
    }
    Ok(LindstedtSeries {
        order: n_max,
        h_terms,
        lambda_terms,
    })
}

/// Truncated sums `Σ_{n≤n_max} εⁿ ĥⁿ` and `Σ εⁿ λⁿ`.
pub fn lindstedt_eval(series: &LindstedtSeries, epsilon: f64) -> (TorusFunction, f64) {
    let first = &series.h_terms[0];
    let mut h = TorusFunction::zeros(first.dim(), first.resolution()).expect("valid shape");
    let mut lambda = 0.0;
    let mut p = 1.0;
    for (hn, ln) in series.h_terms.iter().zip(&series.lambda_terms) {
        p *= epsilon;
        h = &h + &hn.scale(p);
        lambda += p * ln;
    }
    (h, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohomology::diophantine_estimate;
    use crate::model::{build_force, error_functional, ForceSpec, Mode};
    use crate::torus::LatticeIndex;
    use std::f64::consts::PI;

    fn alpha() -> Vec<f64> {
        vec![1.0, 2f64.sqrt()]
    }

    fn freq() -> FrequencyData {
        diophantine_estimate(&alpha(), (5f64.sqrt() - 1.0) / 2.0, 2.5, 32).unwrap()
    }

    #[test]
    fn exp_jet_matches_series_of_exp() {
        // exp(z ε) -> zⁿ/n!
        let z = Complex64::new(0.3, -1.1);
        let u = [
            Complex64::new(0.0, 0.0),
            z,
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let mut y = [Complex64::new(0.0, 0.0); 4];
        exp_jet(&u, &mut y);
        assert!((y[3] - z * z * z / 6.0).norm() < 1e-15);
        // exp(ε + ε²) = 1 + ε + 3ε²/2 + 7ε³/6
        let one = Complex64::new(1.0, 0.0);
        let u = [Complex64::new(0.0, 0.0), one, one, Complex64::new(0.0, 0.0)];
        exp_jet(&u, &mut y);
        assert!((y[2].re - 1.5).abs() < 1e-15 && (y[3].re - 7.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn first_order_counterterm_is_minus_mean_force() {
        let spec = ForceSpec::force(vec![
            Mode::new(vec![0, 0], Complex64::new(0.4, 0.0)),
            Mode::new(vec![1, 0], Complex64::new(0.1, 0.0)),
            Mode::new(vec![-1, 0], Complex64::new(0.1, 0.0)),
        ]);
        let force = build_force(&spec, &alpha()).unwrap();
        let s = lindstedt_expand(&force, &freq(), 16, 2).unwrap();
        assert!((s.lambda_terms[0] + 0.4).abs() < 1e-15);
        let theta = freq().rotation_phase(&[1, 0]);
        let expect = -0.1 / second_difference_symbol(theta);
        assert!((s.h_terms[0].coeff(&LatticeIndex::new(vec![1, 0])).re - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_force_gives_zero_series() {
        let s = lindstedt_expand(&ForceModel::zero(&alpha()), &freq(), 16, 4).unwrap();
        assert!(s.h_terms.iter().all(TorusFunction::is_zero));
        assert!(s.lambda_terms.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn second_order_single_cosine_by_hand() {
        // Û = A cos(2πk·σ); ĥ¹ = c cos x with c = A/(4 sin²πθ), x = 2πk·σ,
        // R₂ = ∂ₓÛ·ĥ¹ = −πA(k·α) c sin 2x, ĥ² = −R₂ / (−4 sin²(2πθ))
        let a = 0.3;
        let k = [1i64, 1];
        let spec = ForceSpec::force(vec![
            Mode::new(k.to_vec(), Complex64::new(a / 2.0, 0.0)),
            Mode::new(vec![-1, -1], Complex64::new(a / 2.0, 0.0)),
        ]);
        let fr = freq();
        let force = build_force(&spec, &alpha()).unwrap();
        let s = lindstedt_expand(&force, &fr, 16, 2).unwrap();
        let theta = fr.rotation_phase(&k);
        let ka = 1.0 + 2f64.sqrt();
        let c = a / (4.0 * (PI * theta).sin().powi(2));
        assert!(s.lambda_terms[1].abs() < 1e-16);
        for sigma in [[0.1, 0.2], [0.37, 0.05], [0.8, 0.61]] {
            let x = 2.0 * PI * (sigma[0] + sigma[1]);
            let h1 = c * x.cos();
            let r2 = -PI * a * ka * c * (2.0 * x).sin();
            let h2 = r2 / (4.0 * (2.0 * PI * theta).sin().powi(2));
            assert!((s.h_terms[0].eval_at(&sigma) - h1).abs() < 1e-13);
            assert!((s.h_terms[1].eval_at(&sigma) - h2).abs() < 1e-12 * h2.abs().max(1.0));
        }
        // support of ĥ² is ±2k
        let h2 = &s.h_terms[1];
        let floor = 1e-13 * h2.max_abs_coeff();
        assert!(h2
            .modes()
            .iter()
            .all(|(m, c)| c.norm() < floor || m.0 == vec![2, 2] || m.0 == vec![-2, -2]));
    }

    #[test]
    fn eval_truncation() {
        let force = build_force(
            &ForceSpec::unit_gradient_sines(&[1.0, 1.0], &alpha()),
            &alpha(),
        )
        .unwrap();
        let s = lindstedt_expand(&force, &freq(), 16, 3).unwrap();
        let (h, l) = lindstedt_eval(&s, 0.0);
        assert!(h.is_zero() && l == 0.0);
        let one = LindstedtSeries {
            order: 1,
            h_terms: vec![s.h_terms[0].clone()],
            lambda_terms: vec![s.lambda_terms[0]],
        };
        let (h, l) = lindstedt_eval(&one, 0.25);
        assert_eq!(h, s.h_terms[0].scale(0.25));
        assert_eq!(l, 0.25 * s.lambda_terms[0]);
        assert!(s.h_terms.iter().all(|t| t.mean() == 0.0));
    }

    #[test]
    fn gradient_series_has_vanishing_counterterms() {
        let force = build_force(
            &ForceSpec::unit_gradient_sines(&[1.0, 0.5], &alpha()),
            &alpha(),
        )
        .unwrap();
        let s = lindstedt_expand(&force, &freq(), 32, 5).unwrap();
        assert!(
            s.lambda_terms.iter().all(|l| l.abs() < 1e-12),
            "{:?}",
            s.lambda_terms
        );
    }

    #[test]
    fn order_three_residual_scales_as_fourth_power() {
        let fr = freq();
        let force = build_force(
            &ForceSpec::unit_gradient_sines(&[1.0, 1.0], &alpha()),
            &alpha(),
        )
        .unwrap();
        let s = lindstedt_expand(&force, &fr, 32, 3).unwrap();
        let res: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&eps| {
                let (h, l) = lindstedt_eval(&s, eps);
                error_functional(&h, l, &force.scaled(eps), &fr, 3.0).sup
            })
            .collect();
        for w in res.windows(2) {
            let ratio = w[0] / w[1];
            assert!((8.0..=24.0).contains(&ratio), "{res:?}");
        }
    }
}
