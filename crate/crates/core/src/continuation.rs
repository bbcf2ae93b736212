//! Continuation in the force amplitude and bisection of the breakdown point.
//!
//! The force at parameter `p` is `p·Û` for a fixed base force `Û`. Each
//! parameter is solved from the last accepted state. A solve is accepted when
//! it converges, keeps `min l` above a floor and keeps the resolved Sobolev
//! norm of `ĥ` below a multiple of its first nonzero value along the ramp.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohomology::FrequencyData;
use crate::model::ForceModel;
use crate::solver::{condition_numbers, resolved_sobolev_norm, solve, SolveOptions, SolverState};
use crate::torus::{TorusError, TorusFunction};

pub const DEFAULT_MIN_L: f64 = 0.05;
pub const DEFAULT_BLOWUP: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuationError {
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("parameter grid is not strictly monotone at index {0}")]
    NonMonotoneGrid(usize),
    #[error("first point p = {param} failed: {reason}")]
    SeedFailure { param: f64, reason: String },
    #[error("bracket [{lower}, {upper}] is empty")]
    EmptyBracket { lower: f64, upper: f64 },
    #[error("lower end p = {param} does not converge: {reason}")]
    LowerFails { param: f64, reason: String },
    #[error("upper end p = {param} converges; bracket does not contain a breakdown")]
    UpperConverges { param: f64 },
    #[error(transparent)]
    Torus(#[from] TorusError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationConfig {
    /// Force at unit parameter.
    pub force: ForceModel,
    pub freq: FrequencyData,
    pub n: usize,
    pub solve: SolveOptions,
    pub min_step: f64,
    pub max_step: f64,
    pub min_l_floor: f64,
    pub blowup_factor: f64,
    /// Reference Sobolev norm for the blow-up test; taken from the first
    /// nonzero value along the ramp when `None`.
    pub sobolev_baseline: Option<f64>,
}

impl ContinuationConfig {
    pub fn new(force: ForceModel, freq: FrequencyData, n: usize, solve: SolveOptions) -> Self {
        Self {
            force,
            freq,
            n,
            solve,
            min_step: 1e-4,
            max_step: 1e-2,
            min_l_floor: DEFAULT_MIN_L,
            blowup_factor: DEFAULT_BLOWUP,
            sobolev_baseline: None,
        }
    }
}

/// Outcome at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub param: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub lambda_star: Option<f64>,
    pub sobolev_m: Option<f64>,
    pub decay_rate: Option<f64>,
    pub min_l: Option<f64>,
    /// Seconds spent reaching this parameter.
    pub wall_time: f64,
    pub substeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakdownEstimate {
    pub lower: f64,
    pub upper: f64,
    pub bracket_width: f64,
    pub steps: usize,
}

/// Accepted solve at one parameter.
#[derive(Debug, Clone)]
struct Point {
    state: SolverState,
    iterations: usize,
    sobolev_m: f64,
    min_l: f64,
}

/// Last accepted state and the adaptive step.
#[derive(Debug, Clone)]
struct Tracker {
    param: f64,
    point: Point,
    step: f64,
    streak: usize,
}

#[derive(Debug, Clone)]
struct Rejection {
    iterations: usize,
    residual: f64,
    reason: String,
}

impl ContinuationConfig {
    /// Resolved `H^m` norm of `ĥ` at `param`, see [`resolved_sobolev_norm`].
    pub fn monitored_norm(&self, h: &TorusFunction, param: f64) -> f64 {
        let scale = h.sup_norm() + param.abs() * self.force.amplitude_sum();
        resolved_sobolev_norm(h, &self.freq, self.solve.m, scale)
    }

    fn attempt(
        &self,
        from: &SolverState,
        param: f64,
        baseline: Option<f64>,
    ) -> Result<Point, Rejection> {
        let force = self.force.scaled(param);
        let m = self.solve.m;
        let init = SolverState::new(from.h.clone(), from.lambda, &force, &self.freq, m);
        let out = match solve(&init, &force, &self.freq, &self.solve) {
            Ok(out) => out,
            Err(e) => {
                let last = e.history().last();
                return Err(Rejection {
                    iterations: last.map_or(0, |r| r.iteration),
                    residual: last.map_or(f64::NAN, |r| r.sup_residual),
                    reason: e.to_string(),
                });
            }
        };
        let iterations = out.state.iteration;
        let reject = |reason: String| Rejection {
            iterations,
            residual: out.state.residual.sup,
            reason,
        };
        let min_l = match condition_numbers(&out.state.h, &self.freq, m) {
            Ok(c) => c.min_l,
            Err(e) => return Err(reject(e.to_string())),
        };
        if min_l < self.min_l_floor {
            return Err(reject(format!(
                "min l = {min_l:.3e} below {}",
                self.min_l_floor
            )));
        }
        let sobolev_m = self.monitored_norm(&out.state.h, param);
        if let Some(b) = baseline {
            if sobolev_m > self.blowup_factor * b {
                return Err(reject(format!("Sobolev norm {sobolev_m:.3e} blew up")));
            }
        }
        Ok(Point {
            state: out.state,
            iterations,
            sobolev_m,
            min_l,
        })
    }

    /// Moves `tr` to `target` in adaptive substeps; returns the substep count.
    fn advance(
        &self,
        tr: &mut Tracker,
        target: f64,
        baseline: &mut Option<f64>,
    ) -> Result<usize, Rejection> {
        let mut substeps = 0;
        while tr.param != target {
            let gap = target - tr.param;
            let next = if gap.abs() <= tr.step {
                target
            } else {
                tr.param + tr.step.copysign(gap)
            };
            substeps += 1;
            match self.attempt(&tr.point.state, next, *baseline) {
                Ok(point) => {
                    if baseline.is_none() && point.sobolev_m > 0.0 {
                        *baseline = Some(point.sobolev_m);
                    }
                    if point.iterations <= 3 {
                        tr.streak += 1;
                        if tr.streak >= 3 {
                            tr.step = (2.0 * tr.step).min(self.max_step);
                            tr.streak = 0;
                        }
                    } else {
                        tr.streak = 0;
                    }
                    tr.param = next;
                    tr.point = point;
                }
                Err(rej) => {
                    tr.streak = 0;
                    tr.step /= 2.0;
                    log::debug!(
                        "p = {next:.6e} rejected ({}); step -> {:.3e}",
                        rej.reason,
                        tr.step
                    );
                    if tr.step < self.min_step {
                        tr.step = self.min_step;
                        return Err(rej);
                    }
                }
            }
        }
        Ok(substeps)
    }

    fn seed(&self, param: f64, baseline: &mut Option<f64>) -> Result<Tracker, Rejection> {
        let dim = self.freq.dim();
        let zero = SolverState::new(
            crate::torus::TorusFunction::zeros(dim, self.n).map_err(|e| Rejection {
                iterations: 0,
                residual: f64::NAN,
                reason: e.to_string(),
            })?,
            0.0,
            &ForceModel::zero(&self.freq.alpha),
            &self.freq,
            self.solve.m,
        );
        let point = self.attempt(&zero, param, None)?;
        if baseline.is_none() && point.sobolev_m > 0.0 {
            *baseline = Some(point.sobolev_m);
        }
        Ok(Tracker {
            param,
            point,
            step: self.max_step,
            streak: 0,
        })
    }
}

fn record(param: f64, p: &Point, substeps: usize, started: Instant) -> ContinuationRecord {
    ContinuationRecord {
        param,
        converged: true,
        iterations: p.iterations,
        residual: p.state.residual.sup,
        lambda_star: Some(p.state.lambda),
        sobolev_m: Some(p.sobolev_m),
        decay_rate: p.state.h.decay_rate(),
        min_l: Some(p.min_l),
        wall_time: started.elapsed().as_secs_f64(),
        substeps,
    }
}

fn failed(param: f64, r: &Rejection, substeps: usize, started: Instant) -> ContinuationRecord {
    ContinuationRecord {
        param,
        converged: false,
        iterations: r.iterations,
        residual: r.residual,
        lambda_star: None,
        sobolev_m: None,
        decay_rate: None,
        min_l: None,
        wall_time: started.elapsed().as_secs_f64(),
        substeps,
    }
}

/// Records of a ramp together with the last accepted state.
#[derive(Debug, Clone)]
pub struct FamilyRun {
    pub records: Vec<ContinuationRecord>,
    /// Parameter and state of the last accepted solve.
    pub last_converged: (f64, SolverState),
    /// Reference Sobolev norm used for the blow-up test.
    pub sobolev_baseline: Option<f64>,
}

/// Solves along `params`, one record per entry.
pub fn continue_family(
    params: &[f64],
    cfg: &ContinuationConfig,
) -> Result<Vec<ContinuationRecord>, ContinuationError> {
    continue_family_detailed(params, cfg).map(|run| run.records)
}

/// [`continue_family`], also returning the state needed to resume or bisect.
///
/// After the first failure the remaining points get a single attempt from the
/// last accepted state.
pub fn continue_family_detailed(
    params: &[f64],
    cfg: &ContinuationConfig,
) -> Result<FamilyRun, ContinuationError> {
    let (&first, rest) = params.split_first().ok_or(ContinuationError::EmptyGrid)?;
    if params.len() > 1 {
        let up = params[1] > params[0];
        for (i, w) in params.windows(2).enumerate() {
            if (w[1] > w[0]) != up || w[1] == w[0] {
                return Err(ContinuationError::NonMonotoneGrid(i + 1));
            }
        }
    }
    let mut baseline = cfg.sobolev_baseline;
    let started = Instant::now();
    let mut tr = cfg
        .seed(first, &mut baseline)
        .map_err(|r| ContinuationError::SeedFailure {
            param: first,
            reason: r.reason,
        })?;
    let mut records = vec![record(first, &tr.point, 1, started)];
    let mut broken = false;
    for &p in rest {
        let started = Instant::now();
        if broken {
            let rec = match cfg.attempt(&tr.point.state, p, baseline) {
                Ok(point) => record(p, &point, 1, started),
                Err(r) => failed(p, &r, 1, started),
            };
            records.push(rec);
            continue;
        }
        match cfg.advance(&mut tr, p, &mut baseline) {
            Ok(substeps) => records.push(record(p, &tr.point, substeps, started)),
            Err(r) => {
                log::info!("continuation failed at p = {p}: {}", r.reason);
                broken = true;
                records.push(failed(p, &r, 0, started));
            }
        }
    }
    Ok(FamilyRun {
        records,
        last_converged: (tr.param, tr.point.state),
        sobolev_baseline: baseline,
    })
}

/// Bisects `[lower, upper]` down to `width_tol`.
///
/// Each midpoint is reached from the current lower end with the same adaptive
/// substeps as [`continue_family`]; `start` is a converged state at `lower`.
pub fn bisect_breakdown(
    lower: f64,
    upper: f64,
    cfg: &ContinuationConfig,
    width_tol: f64,
    start: Option<SolverState>,
) -> Result<BreakdownEstimate, ContinuationError> {
    if !(lower < upper) {
        return Err(ContinuationError::EmptyBracket { lower, upper });
    }
    let mut baseline = cfg.sobolev_baseline;
    let mut tr = match start {
        Some(state) => {
            let sobolev_m = cfg.monitored_norm(&state.h, lower);
            let min_l = condition_numbers(&state.h, &cfg.freq, cfg.solve.m)
                .map(|c| c.min_l)
                .unwrap_or(0.0);
            Tracker {
                param: lower,
                point: Point {
                    iterations: state.iteration,
                    state,
                    sobolev_m,
                    min_l,
                },
                step: cfg.max_step,
                streak: 0,
            }
        }
        None => cfg
            .seed(lower, &mut baseline)
            .map_err(|r| ContinuationError::LowerFails {
                param: lower,
                reason: r.reason,
            })?,
    };
    let (mut lo, mut hi) = (lower, upper);
    let mut probe = tr.clone();
    if cfg.advance(&mut probe, hi, &mut baseline.clone()).is_ok() {
        return Err(ContinuationError::UpperConverges { param: upper });
    }
    let mut steps = 0;
    while hi - lo > width_tol {
        let mid = 0.5 * (lo + hi);
        let mut probe = tr.clone();
        probe.step = probe.step.max(mid - lo);
        let mut b = baseline;
        match cfg.advance(&mut probe, mid, &mut b) {
            Ok(_) => {
                lo = mid;
                tr = probe;
                baseline = b;
            }
            Err(_) => hi = mid,
        }
        steps += 1;
        log::info!("bisection step {steps}: [{lo:.6e}, {hi:.6e}]");
    }
    Ok(BreakdownEstimate {
        lower: lo,
        upper: hi,
        bracket_width: hi - lo,
        steps,
    })
}
