use std::path::Path;

use qpfk::continuation::{
    bisect_breakdown, continue_family_detailed, ContinuationConfig, ContinuationError,
    ContinuationRecord,
};
use qpfk::io::read_dump;
use qpfk::lindstedt::{lindstedt_eval, lindstedt_expand, LindstedtError, ScalingRow};
use qpfk::model::error_functional;
use qpfk::solver::{
    aposteriori_report, solve as run_solver, verify_identities, HistoryRecord, SolverError,
    SolverState,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{fmt_f64, fmt_opt, header_value, Output};

/// Identity residuals below this pass `verify`.
pub const VERIFY_TOL: f64 = 1e-10;

/// Residual threshold handed to the a-posteriori report.
const REPORT_THRESHOLD: f64 = 1e-10;

fn history_rows(history: &[HistoryRecord]) -> Vec<Vec<String>> {
    history
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                fmt_f64(r.sup_residual),
                fmt_f64(r.hm_residual),
                fmt_f64(r.lambda),
                fmt_opt(r.delta_norm),
            ]
        })
        .collect()
}

const HISTORY_HEADER: [&str; 5] = [
    "iteration",
    "sup_residual",
    "Hm_residual",
    "lambda",
    "delta_norm",
];

fn write_history(out: &Output, history: &[HistoryRecord]) -> Result<(), CliError> {
    out.jsonl("history.jsonl", history)?;
    out.csv("history.csv", &HISTORY_HEADER, &history_rows(history))?;
    Ok(())
}

fn solver_failure(e: SolverError) -> CliError {
    let kind = match &e {
        SolverError::DegenerateConjugacy { .. } => "degenerate",
        SolverError::StepFailed { source, .. }
            if matches!(**source, SolverError::DegenerateConjugacy { .. }) =>
        {
            "degenerate"
        }
        SolverError::Cohomology(_) | SolverError::StepFailed { .. } => "small-divisor",
        SolverError::Diverged { .. } => "diverged",
    };
    CliError::Numerical {
        kind,
        msg: e.to_string(),
        detail: json!({ "history": e.history() }),
    }
}

pub fn solve(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let freq = cfg.frequency()?;
    let force = cfg.force_model()?;
    let m = cfg.m();
    let init = SolverState::zero(cfg.d, cfg.N, cfg.lambda0, &force, &freq, m).map_err(|e| {
        CliError::Invalid {
            field: "N".into(),
            msg: e.to_string(),
        }
    })?;
    let outcome = match run_solver(&init, &force, &freq, &cfg.solve_options()) {
        Ok(o) => o,
        Err(e) => {
            write_history(out, e.history())?;
            return Err(solver_failure(e));
        }
    };
    let state = &outcome.state;
    log::info!(
        "converged in {} steps, residual {:.3e}, lambda {:.6e}",
        state.iteration,
        state.residual.sup,
        state.lambda
    );
    out.dump(
        "h.dump",
        &state.h,
        &[
            format!("lambda {}", fmt_f64(state.lambda)),
            format!("residual_sup {}", fmt_f64(state.residual.sup)),
            format!("iterations {}", state.iteration),
        ],
    )?;
    write_history(out, &outcome.history)?;
    let norms: Vec<_> = cfg
        .m_list
        .iter()
        .map(|&r| json!({ "m": r, "residual": state.residual.values.sobolev_norm(r), "h": state.h.sobolev_norm(r) }))
        .collect();
    let report = aposteriori_report(state, &force, &freq, m, REPORT_THRESHOLD);
    out.json(
        "summary.json",
        json!({
            "lambda": state.lambda,
            "iterations": state.iteration,
            "residual_sup": state.residual.sup,
            "sobolev": norms,
            "aposteriori": report,
        }),
    )?;
    Ok(())
}

pub fn lindstedt(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let freq = cfg.frequency()?;
    let force = cfg.force_model()?;
    let order = cfg.lindstedt.order;
    let series = lindstedt_expand(&force, &freq, cfg.N, order).map_err(|e| match e {
        LindstedtError::Cohomology(c) => CliError::numerical("small-divisor", c),
        other => CliError::Invalid {
            field: "lindstedt".into(),
            msg: other.to_string(),
        },
    })?;
    for (i, h) in series.h_terms.iter().enumerate() {
        let n = i + 1;
        out.dump(
            &format!("lindstedt_h{n}.dump"),
            h,
            &[
                format!("order {n}"),
                format!("lambda_term {}", fmt_f64(series.lambda_terms[i])),
            ],
        )?;
    }
    let rows: Vec<ScalingRow> = cfg
        .lindstedt
        .epsilons
        .iter()
        .map(|&eps| {
            let (h, l) = lindstedt_eval(&series, eps);
            ScalingRow {
                epsilon: eps,
                residual_sup: error_functional(&h, l, &force.scaled(eps), &freq, cfg.m()).sup,
            }
        })
        .collect();
    for r in &rows {
        log::info!(
            "eps {:.3e}: truncation residual {:.3e}",
            r.epsilon,
            r.residual_sup
        );
    }
    out.jsonl("scaling.jsonl", &rows)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![fmt_f64(r.epsilon), fmt_f64(r.residual_sup)])
        .collect();
    out.csv("scaling.csv", &["epsilon", "residual_sup"], &csv_rows)?;
    out.json(
        "lindstedt.json",
        json!({ "order": order, "lambda_terms": series.lambda_terms }),
    )?;
    Ok(())
}

fn continuation_config(cfg: &RunConfig) -> Result<ContinuationConfig, CliError> {
    Ok(ContinuationConfig::new(
        cfg.force_model()?,
        cfg.frequency()?,
        cfg.N,
        cfg.solve_options(),
    ))
}

fn continuation_failure(e: ContinuationError) -> CliError {
    match e {
        ContinuationError::EmptyGrid
        | ContinuationError::NonMonotoneGrid(_)
        | ContinuationError::EmptyBracket { .. } => CliError::Invalid {
            field: "ramp".into(),
            msg: e.to_string(),
        },
        ContinuationError::SeedFailure { .. } | ContinuationError::LowerFails { .. } => {
            CliError::numerical("seed-failure", e)
        }
        ContinuationError::UpperConverges { .. } => CliError::numerical("no-breakdown", e),
        ContinuationError::Torus(t) => CliError::Invalid {
            field: "N".into(),
            msg: t.to_string(),
        },
    }
}

const RECORD_HEADER: [&str; 10] = [
    "param",
    "converged",
    "iterations",
    "residual",
    "lambda_star",
    "sobolev_m",
    "decay_rate",
    "min_l",
    "wall_time",
    "substeps",
];

fn write_records(out: &Output, records: &[ContinuationRecord]) -> Result<(), CliError> {
    out.jsonl("records.jsonl", records)?;
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.param),
                r.converged.to_string(),
                r.iterations.to_string(),
                fmt_f64(r.residual),
                fmt_opt(r.lambda_star),
                fmt_opt(r.sobolev_m),
                fmt_opt(r.decay_rate),
                fmt_opt(r.min_l),
                fmt_f64(r.wall_time),
                r.substeps.to_string(),
            ]
        })
        .collect();
    out.csv("records.csv", &RECORD_HEADER, &rows)?;
    Ok(())
}

pub fn continuation(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let params = cfg.ramp_params()?;
    let ccfg = continuation_config(cfg)?;
    let run = continue_family_detailed(&params, &ccfg).map_err(continuation_failure)?;
    write_records(out, &run.records)?;
    let (param, state) = &run.last_converged;
    log::info!(
        "{} of {} ramp points accepted, last at {param}",
        run.records.iter().filter(|r| r.converged).count(),
        run.records.len()
    );
    out.dump(
        "continue_last.dump",
        &state.h,
        &[
            format!("param {}", fmt_f64(*param)),
            format!("lambda {}", fmt_f64(state.lambda)),
        ],
    )?;
    Ok(())
}

pub fn bisect(cfg: &RunConfig, out: &Output) -> Result<(), CliError> {
    let ramp = cfg.ramp.as_ref().ok_or_else(|| CliError::Invalid {
        field: "ramp".into(),
        msg: "missing [ramp] table".into(),
    })?;
    let ccfg = continuation_config(cfg)?;
    let estimate = match (ramp.lower, ramp.upper) {
        (Some(lower), Some(upper)) => bisect_breakdown(lower, upper, &ccfg, ramp.width_tol, None)
            .map_err(continuation_failure)?,
        _ => {
            // locate a bracket with the ramp first
            let params = cfg.ramp_params()?;
            let run = continue_family_detailed(&params, &ccfg).map_err(continuation_failure)?;
            write_records(out, &run.records)?;
            let upper = run
                .records
                .iter()
                .find(|r| !r.converged)
                .map(|r| r.param)
                .ok_or_else(|| {
                    CliError::numerical("no-breakdown", "every ramp point was accepted")
                })?;
            let (lower, state) = run.last_converged;
            let ccfg = ContinuationConfig {
                sobolev_baseline: run.sobolev_baseline,
                ..ccfg
            };
            bisect_breakdown(lower, upper, &ccfg, ramp.width_tol, Some(state))
                .map_err(continuation_failure)?
        }
    };
    log::info!(
        "breakdown in [{:.6}, {:.6}] after {} bisection steps",
        estimate.lower,
        estimate.upper,
        estimate.steps
    );
    out.json("breakdown.json", json!({ "estimate": estimate }))?;
    Ok(())
}

pub fn verify(cfg: &RunConfig, out: &Output, state: &Path) -> Result<(), CliError> {
    let file = std::fs::File::open(state).map_err(|e| CliError::io(state, e))?;
    let h = read_dump(std::io::BufReader::new(file)).map_err(|e| match e {
        qpfk::io::DumpError::Io(io) => CliError::io(state, io),
        other => CliError::Usage(format!("{}: {other}", state.display())),
    })?;
    if h.dim() != cfg.d || h.resolution() != cfg.N {
        return Err(CliError::Usage(format!(
            "{}: state has dim {} and N {}, config has d {} and N {}",
            state.display(),
            h.dim(),
            h.resolution(),
            cfg.d,
            cfg.N
        )));
    }
    let lambda = match header_value(state, "lambda")? {
        Some(v) => v
            .parse::<f64>()
            .map_err(|e| CliError::Usage(format!("{}: bad lambda header: {e}", state.display())))?,
        None => cfg.lambda0,
    };
    let freq = cfg.frequency()?;
    let force = cfg.force_model()?;
    let report = verify_identities(&h, lambda, &force, &freq).map_err(solver_failure)?;
    let residual = error_functional(&h, lambda, &force, &freq, cfg.m());
    // Relative to the error scale when it is large, absolute near convergence,
    // where a relative measure would only amplify round-off.
    let scaled = |x: f64, s: f64| x / s.max(1.0);
    let checks = [
        (
            "geometric",
            scaled(report.geometric, report.geometric_scale),
        ),
        (
            "quasi_newton",
            scaled(report.quasi_newton, report.error_sup),
        ),
        ("w_identity", report.w_identity),
        ("forward_equation", report.forward_equation),
        ("taylor", report.taylor),
    ];
    let worst = checks.iter().map(|c| c.1).fold(0.0, f64::max);
    let pass = worst < VERIFY_TOL;
    let checks_json: serde_json::Map<String, serde_json::Value> = checks
        .iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    let body = json!({
        "state": state.display().to_string(),
        "lambda": lambda,
        "residual_sup": residual.sup,
        "residual_sobolev_m": residual.sobolev_m,
        "identities": report,
        "normalized": checks_json,
        "tolerance": VERIFY_TOL,
        "pass": pass,
    });
    out.json("verify.json", body.clone())?;
    if pass {
        log::info!("all identity residuals below {VERIFY_TOL:e} (worst {worst:.3e})");
        Ok(())
    } else {
        Err(CliError::Numerical {
            kind: "identity-check",
            msg: format!("worst identity residual {worst:.3e} exceeds {VERIFY_TOL:e}"),
            detail: body,
        })
    }
}
