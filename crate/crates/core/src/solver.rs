//! Quasi-Newton iteration for the pair `[ĥ, λ]`.
//!
//! One step turns the error `e = E[ĥ,λ]` into a correction `[Δ, δ]` by solving
//!
//! ```text
//! (Δ/l)∘T_{−ωα} − Δ/l = W / (l · l∘T_{−ωα})
//! W∘T_{ωα} − W       = l · (e + δ)
//! ```
//!
//! with `l = 1 + ∂_α ĥ`. Both are constant-coefficient first differences, so
//! the step costs a handful of FFTs and two diagonal divisions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::{solve_first_difference, CohomologyError, Direction, FrequencyData};
use crate::model::{
    error_functional, error_values, second_difference, EquilibriumError, ForceModel,
};
use crate::torus::TorusFunction;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("hull function is not monotone: min l = {min_l:e}")]
    DegenerateConjugacy { min_l: f64 },
    #[error(transparent)]
    Cohomology(#[from] CohomologyError),
    #[error("no convergence after {iterations} steps (residual {residual:e})")]
    Diverged {
        iterations: usize,
        residual: f64,
        history: Vec<HistoryRecord>,
    },
    #[error("step {iteration} failed: {source}")]
    StepFailed {
        iteration: usize,
        source: Box<SolverError>,
        history: Vec<HistoryRecord>,
    },
}

impl SolverError {
    pub fn history(&self) -> &[HistoryRecord] {
        match self {
            SolverError::Diverged { history, .. } | SolverError::StepFailed { history, .. } => {
                history
            }
            _ => &[],
        }
    }
}

/// Smallest integer `m > d/2 + 2τ`.
pub fn monitoring_exponent(dim: usize, tau: f64) -> f64 {
    (dim as f64 / 2.0 + 2.0 * tau).floor() + 1.0
}

/// Current iterate `[ĥ, λ]` with its equilibrium error.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub h: TorusFunction,
    pub lambda: f64,
    pub residual: EquilibriumError,
    pub iteration: usize,
}

impl SolverState {
    pub fn new(
        h: TorusFunction,
        lambda: f64,
        force: &ForceModel,
        freq: &FrequencyData,
        m: f64,
    ) -> Self {
        let residual = error_functional(&h, lambda, force, freq, m);
        Self {
            h,
            lambda,
            residual,
            iteration: 0,
        }
    }

    /// `ĥ = 0` at the given resolution.
    pub fn zero(
        dim: usize,
        n: usize,
        lambda: f64,
        force: &ForceModel,
        freq: &FrequencyData,
        m: f64,
    ) -> Result<Self, crate::torus::TorusError> {
        Ok(Self::new(
            TorusFunction::zeros(dim, n)?,
            lambda,
            force,
            freq,
            m,
        ))
    }
}

/// Sup and `H^m` norms of a residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub sup: f64,
    pub sobolev_m: f64,
}

/// Non-degeneracy quantities of an approximate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub m: f64,
    pub n_plus_sup: f64,
    pub n_plus_hm: f64,
    pub n_minus_sup: f64,
    pub n_minus_hm: f64,
    /// `|⟨1/(l · l∘T_{−ωα})⟩|`
    pub c_avg: f64,
    pub min_l: f64,
    pub epsilon: Option<ResidualNorms>,
    pub nu_hat: Option<f64>,
    pub tau: Option<f64>,
}

fn hull_derivative(h: &TorusFunction, alpha: &[f64]) -> TorusFunction {
    h.dalpha(alpha).add_constant(1.0)
}

fn grid_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn grid_min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn from_grid(like: &TorusFunction, values: &[f64]) -> TorusFunction {
    TorusFunction::from_collocation(like.dim(), like.resolution(), values).expect("valid shape")
}

/// Safety factor on the round-off estimate in [`resolved_sobolev_norm`].
pub const RESOLUTION_MARGIN: f64 = 1e4;

/// `H^r` norm of `ĥ` over the modes that stand above round-off.
///
/// A mode is kept when `|ĥ_k| > RESOLUTION_MARGIN · ε · scale / s_k²` with
/// `s_k = |e^{2πi k·ωα} − 1|`: two first-difference solves per step turn
/// round-off of size `ε · scale` in the error into that much noise in `ĥ_k`.
/// At large `N` and `r` the plain norm is dominated by such noise in
/// near-resonant and corner modes. `scale` is the size of the terms of the
/// equilibrium error, e.g. `sup|ĥ| + Σ|Û_k|`.
pub fn resolved_sobolev_norm(h: &TorusFunction, freq: &FrequencyData, r: f64, scale: f64) -> f64 {
    let noise = RESOLUTION_MARGIN * f64::EPSILON * scale;
    let total: f64 = h
        .all_modes()
        .par_iter()
        .map(|(k, c)| {
            let s = 2.0
                * (std::f64::consts::PI * freq.rotation_phase(&k.0))
                    .sin()
                    .abs();
            if c.norm() * s * s > noise {
                let k1 = k.0.iter().map(|x| x.unsigned_abs()).sum::<u64>() as f64;
                c.norm_sqr() * (1.0 + k1 * k1).powf(r)
            } else {
                0.0
            }
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total.sqrt()
}

/// Condition numbers `N⁺`, `N⁻`, `c` of `l = 1 + ∂_α ĥ`.
pub fn condition_numbers(
    h: &TorusFunction,
    freq: &FrequencyData,
    m: f64,
) -> Result<ConditionReport, SolverError> {
    let l = hull_derivative(h, &freq.alpha);
    let lv = l.collocate();
    let min_l = grid_min(&lv);
    if !(min_l > 0.0) {
        return Err(SolverError::DegenerateConjugacy { min_l });
    }
    let lbv = l.shift(&freq.back_shift()).collocate();
    let inv: Vec<f64> = lv.par_iter().map(|x| 1.0 / x).collect();
    let inv = from_grid(h, &inv);
    let q: Vec<f64> = lv
        .par_iter()
        .zip(&lbv)
        .map(|(a, b)| 1.0 / (a * b))
        .collect();
    Ok(ConditionReport {
        m,
        n_plus_sup: l.sup_norm(),
        n_plus_hm: l.sobolev_norm(m),
        n_minus_sup: inv.sup_norm(),
        n_minus_hm: inv.sobolev_norm(m),
        c_avg: grid_mean(&q).abs(),
        min_l,
        epsilon: None,
        nu_hat: freq.nu_hat(),
        tau: freq.tau(),
    })
}

/// Intermediate quantities of one quasi-Newton step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInternals {
    pub e: TorusFunction,
    pub l: TorusFunction,
    pub f: TorusFunction,
    pub b: TorusFunction,
    pub w0: TorusFunction,
    pub w_bar: f64,
    /// `1 / (l · l∘T_{−ωα})`
    pub q: TorusFunction,
    /// `W q`, the right side of the backward difference equation
    pub a: TorusFunction,
    pub beta_tilde: TorusFunction,
    pub beta_bar: f64,
}

impl StepInternals {
    pub fn w(&self) -> TorusFunction {
        self.w0.clone().add_constant(self.w_bar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub delta_h: TorusFunction,
    pub delta_lambda: f64,
    pub internals: StepInternals,
}

/// Correction `[Δ, δ]` for a given error `e` at fixed `ĥ`.
///
/// The map `e ↦ [Δ, δ]` is linear; [`quasi_newton_step`] applies it to
/// `e = E[ĥ,λ]`.
pub fn approximate_inverse(
    h: &TorusFunction,
    e: &TorusFunction,
    freq: &FrequencyData,
) -> Result<StepOutput, SolverError> {
    // step 4
    let l = hull_derivative(h, &freq.alpha);
    let lv = l.collocate();
    let min_l = grid_min(&lv);
    if !(min_l > 0.0) {
        return Err(SolverError::DegenerateConjugacy { min_l });
    }
    let lbv = l.shift(&freq.back_shift()).collocate();
    let ev = e.collocate();

    // steps 5-7; ⟨l⟩ = 1 exactly so ⟨b⟩ = ⟨f⟩ + δ = 0
    let fv: Vec<f64> = lv.par_iter().zip(&ev).map(|(a, b)| a * b).collect();
    let f = from_grid(h, &fv);
    let delta = -f.mean();
    let b = &f + &l.scale(delta);

    // step 8
    let w0 = solve_first_difference(&b, freq, Direction::Forward)?.solution;

    // steps 9-10
    let qv: Vec<f64> = lv
        .par_iter()
        .zip(&lbv)
        .map(|(a, b)| 1.0 / (a * b))
        .collect();
    let w0v = w0.collocate();
    let w0q: Vec<f64> = w0v.par_iter().zip(&qv).map(|(a, b)| a * b).collect();
    let w_bar = -grid_mean(&w0q) / grid_mean(&qv);

    // step 11: β∘T_{−ωα} − β = W q
    let av: Vec<f64> = w0q
        .par_iter()
        .zip(&qv)
        .map(|(wq, q)| wq + w_bar * q)
        .collect();
    let a = from_grid(h, &av);
    let beta_tilde = solve_first_difference(&a, freq, Direction::Backward)?.solution;

    // step 12
    let btv = beta_tilde.collocate();
    let prod: Vec<f64> = btv.par_iter().zip(&lv).map(|(a, b)| a * b).collect();
    let beta_l = from_grid(h, &prod);
    let beta_bar = -beta_l.mean() / l.mean();
    let delta_h = (&beta_l + &l.scale(beta_bar)).with_zero_mean();

    Ok(StepOutput {
        delta_h,
        delta_lambda: delta,
        internals: StepInternals {
            e: e.clone(),
            l,
            f,
            b,
            w0,
            w_bar,
            q: from_grid(h, &qv),
            a,
            beta_tilde,
            beta_bar,
        },
    })
}

/// One quasi-Newton step from `state`.
pub fn quasi_newton_step(
    state: &SolverState,
    force: &ForceModel,
    freq: &FrequencyData,
) -> Result<StepOutput, SolverError> {
    let e = error_values(&state.h, state.lambda, force, freq);
    approximate_inverse(&state.h, &e, freq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Sobolev exponent of the monitored residual norm.
    pub m: f64,
    /// Abort once the residual exceeds this multiple of the best residual seen.
    pub divergence_factor: f64,
    /// Abort after this many consecutive steps without a new best residual.
    pub patience: usize,
    /// Corrections keep only modes with `max_i |k_i| ≤ band · N/2`.
    pub band: f64,
}

pub const DEFAULT_BAND: f64 = 2.0 / 3.0;

/// Largest wave number kept by the correction filter.
pub fn band_cutoff(n: usize, band: f64) -> i64 {
    ((band * (n / 2) as f64).floor() as i64).min(n as i64 / 2 - 1)
}

impl SolveOptions {
    pub fn new(m: f64) -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            m,
            divergence_factor: 1e6,
            patience: 6,
            band: DEFAULT_BAND,
        }
    }
}

/// One line of the convergence history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub sup_residual: f64,
    #[serde(rename = "Hm_residual")]
    pub hm_residual: f64,
    pub lambda: f64,
    /// Sup norm of the correction taken from this iterate (`None` on the last).
    pub delta_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub state: SolverState,
    pub history: Vec<HistoryRecord>,
}

/// Iterates quasi-Newton steps until the sup residual drops to `opts.tol`.
pub fn solve(
    initial: &SolverState,
    force: &ForceModel,
    freq: &FrequencyData,
    opts: &SolveOptions,
) -> Result<SolveOutcome, SolverError> {
    let cutoff = band_cutoff(initial.h.resolution(), opts.band);
    let mut h = initial.h.clone().with_zero_mean().low_pass(cutoff);
    let mut lambda = initial.lambda;
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut iteration = 0;
    loop {
        let e = error_values(&h, lambda, force, freq);
        let sup = e.sup_norm();
        let hm = e.sobolev_norm(opts.m);
        let record = HistoryRecord {
            iteration,
            sup_residual: sup,
            hm_residual: hm,
            lambda,
            delta_norm: None,
        };
        if sup <= opts.tol {
            history.push(record);
            let residual = EquilibriumError {
                values: e,
                sup,
                sobolev_m: hm,
                m: opts.m,
            };
            return Ok(SolveOutcome {
                state: SolverState {
                    h,
                    lambda,
                    residual,
                    iteration,
                },
                history,
            });
        }
        if sup < best {
            best = sup;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if iteration >= opts.max_iter
            || !sup.is_finite()
            || sup > opts.divergence_factor * best
            || since_best >= opts.patience
        {
            history.push(record);
            return Err(SolverError::Diverged {
                iterations: iteration,
                residual: sup,
                history,
            });
        }
        let step = match approximate_inverse(&h, &e, freq) {
            Ok(s) => s,
            Err(err) => {
                history.push(record);
                return Err(SolverError::StepFailed {
                    iteration,
                    source: Box::new(err),
                    history,
                });
            }
        };
        history.push(HistoryRecord {
            delta_norm: Some(step.delta_h.sup_norm()),
            ..record
        });
        log::debug!("iteration {iteration}: residual {sup:.3e}, lambda {lambda:.6e}");
        h = (&h + &step.delta_h.low_pass(cutoff)).with_zero_mean();
        lambda += step.delta_lambda;
        iteration += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Every computable hypothesis holds and the residual is below the threshold.
    CertifiableShape,
    ResidualTooLarge,
    Degenerate,
    /// No usable Diophantine estimate for the frequency.
    Resonant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AposterioriReport {
    pub conditions: Option<ConditionReport>,
    pub epsilon: ResidualNorms,
    pub decay_rate: Option<f64>,
    pub threshold: f64,
    pub verdict: Verdict,
}

/// Condition numbers, residual and decay of an approximate solution.
///
/// The verdict only checks the shape of the hypotheses; the smallness
/// threshold of the existence theorem is not available in closed form.
pub fn aposteriori_report(
    state: &SolverState,
    force: &ForceModel,
    freq: &FrequencyData,
    m: f64,
    threshold: f64,
) -> AposterioriReport {
    let e = error_functional(&state.h, state.lambda, force, freq, m);
    let epsilon = ResidualNorms {
        sup: e.sup,
        sobolev_m: e.sobolev_m,
    };
    let conditions = condition_numbers(&state.h, freq, m).ok().map(|mut c| {
        c.epsilon = Some(epsilon);
        c
    });
    let verdict = match (&conditions, freq.nu_hat()) {
        (None, _) => Verdict::Degenerate,
        (Some(_), nu) if !nu.is_some_and(|v| v > 0.0) => Verdict::Resonant,
        (Some(_), _) if epsilon.sup > threshold => Verdict::ResidualTooLarge,
        _ => Verdict::CertifiableShape,
    };
    AposterioriReport {
        conditions,
        epsilon,
        decay_rate: state.h.decay_rate(),
        threshold,
        verdict,
    }
}

/// Sup-norm residuals of the identities satisfied by one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `l·(D₁E Δ) − Δ·(D₁E l) + l·(e + δ)`
    pub geometric: f64,
    /// `‖l‖·‖e‖`, the natural scale of `geometric`
    pub geometric_scale: f64,
    /// `l·Δ∘T₊ + l·Δ∘T₋ − Δ·(l∘T₊ + l∘T₋) + (e + δ)·l`
    pub quasi_newton: f64,
    /// `W − (Δ∘T₋·l − Δ·l∘T₋)`
    pub w_identity: f64,
    /// `W∘T₊ − W − l·(e + δ)`
    pub forward_equation: f64,
    /// `E[ĥ+Δ, λ+δ] − e′·Δ/l − R` with `R` the Taylor remainder of the composition
    pub taylor: f64,
    pub new_error_sup: f64,
    pub error_sup: f64,
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Evaluates the step identities on the dealiasing grid.
pub fn verify_identities(
    h: &TorusFunction,
    lambda: f64,
    force: &ForceModel,
    freq: &FrequencyData,
) -> Result<IdentityReport, SolverError> {
    let e = error_values(h, lambda, force, freq);
    let step = approximate_inverse(h, &e, freq)?;
    let delta = &step.delta_h;
    let dl = step.delta_lambda;
    let l = &step.internals.l;
    let fwd = &freq.shift;
    let back = freq.back_shift();

    let dv = delta.collocate();
    let dpv = delta.shift(fwd).collocate();
    let dmv = delta.shift(&back).collocate();
    let lv = l.collocate();
    let lpv = l.shift(fwd).collocate();
    let lmv = l.shift(&back).collocate();
    let ev = e.collocate();
    let du = force.values_along(h, 1);
    let d1e_delta: Vec<f64> = second_difference(delta, freq)
        .collocate()
        .iter()
        .zip(&du)
        .zip(&dv)
        .map(|((s, u), d)| s + u * d)
        .collect();
    let d1e_l: Vec<f64> = second_difference(l, freq)
        .collocate()
        .iter()
        .zip(&du)
        .zip(&lv)
        .map(|((s, u), x)| s + u * x)
        .collect();

    let n = dv.len();
    let geometric: Vec<f64> = (0..n)
        .map(|j| lv[j] * d1e_delta[j] - dv[j] * d1e_l[j] + lv[j] * (ev[j] + dl))
        .collect();
    let quasi_newton: Vec<f64> = (0..n)
        .map(|j| lv[j] * dpv[j] + lv[j] * dmv[j] - dv[j] * (lpv[j] + lmv[j]) + (ev[j] + dl) * lv[j])
        .collect();
    let w = step.internals.w();
    let wv = w.collocate();
    let w_identity: Vec<f64> = (0..n)
        .map(|j| wv[j] - (dmv[j] * lv[j] - dv[j] * lmv[j]))
        .collect();
    let forward_equation = (&(&w.shift(fwd) - &w) - &step.internals.b).sup_norm();

    // E[ĥ+Δ, λ+δ] pointwise against e′Δ/l + R
    let h_new = h + delta;
    let u_new = force.values_along(&h_new, 0);
    let u_old = force.values_along(h, 0);
    let lin_new = second_difference(&h_new, freq).collocate();
    let e_prime = e.dalpha(&freq.alpha).collocate();
    let mut new_error_sup = 0.0f64;
    let taylor: Vec<f64> = (0..n)
        .map(|j| {
            let e_new = lin_new[j] + u_new[j] + lambda + dl;
            new_error_sup = new_error_sup.max(e_new.abs());
            let remainder = u_new[j] - u_old[j] - du[j] * dv[j];
            e_new - e_prime[j] * dv[j] / lv[j] - remainder
        })
        .collect();

    Ok(IdentityReport {
        geometric: sup_abs(&geometric),
        geometric_scale: sup_abs(&lv) * sup_abs(&ev),
        quasi_newton: sup_abs(&quasi_newton),
        w_identity: sup_abs(&w_identity),
        forward_equation,
        taylor: sup_abs(&taylor),
        new_error_sup,
        error_sup: sup_abs(&ev),
    })
}
