//! Run configuration, read from TOML.

use std::path::Path;

use qpfk::cohomology::{diophantine_estimate, FrequencyData};
use qpfk::model::{build_force, ForceModel, ForceSpec, Mode};
use qpfk::solver::{
    monitoring_exponent, SolveOptions, DEFAULT_BAND, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const DEFAULT_TAU: f64 = 2.5;

/// Parameter ramp for `continue` and bracket for `bisect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// Bisection bracket; defaults to the last accepted and first rejected
    /// ramp parameters.
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
    #[serde(default = "default_width")]
    pub width_tol: f64,
}

fn default_width() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindstedtConfig {
    #[serde(default = "default_order")]
    pub order: usize,
    /// Amplitudes at which the truncated series is scored.
    #[serde(default = "default_eps")]
    pub epsilons: Vec<f64>,
}

fn default_order() -> usize {
    qpfk::lindstedt::DEFAULT_ORDER
}

fn default_eps() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3]
}

impl Default for LindstedtConfig {
    fn default() -> Self {
        Self {
            order: default_order(),
            epsilons: default_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub prefix: String,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            prefix: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RunConfig {
    pub d: usize,
    pub N: usize,
    pub alpha: Vec<f64>,
    pub omega: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Defaults to `N·d/2`.
    #[serde(default)]
    pub K_max: Option<usize>,
    /// Force modes `Û_k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub U_modes: Option<Vec<Mode>>,
    /// Potential modes `V̂_k`, with `Û = ∂_α V̂`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub V_modes: Option<Vec<Mode>>,
    #[serde(default)]
    pub lambda0: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Sobolev exponents reported for the residual; the first is monitored.
    /// Defaults to `[floor(d/2 + 2τ) + 1]`.
    #[serde(default)]
    pub m_list: Vec<f64>,
    #[serde(default = "default_band")]
    pub band: f64,
    #[serde(default)]
    pub ramp: Option<RampConfig>,
    #[serde(default)]
    pub lindstedt: LindstedtConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}
fn default_band() -> f64 {
    DEFAULT_BAND
}

fn invalid(field: &str, msg: impl Into<String>) -> CliError {
    CliError::Invalid {
        field: field.into(),
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if cfg.m_list.is_empty() {
            cfg.m_list = vec![monitoring_exponent(cfg.d, cfg.tau)];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.d < 2 {
            return Err(invalid("d", format!("must be at least 2, got {}", self.d)));
        }
        if self.N < 2 || !self.N.is_power_of_two() {
            return Err(invalid(
                "N",
                format!("must be a power of two (so even), got {}", self.N),
            ));
        }
        if self.alpha.len() != self.d {
            return Err(invalid(
                "alpha",
                format!("has {} entries, expected d = {}", self.alpha.len(), self.d),
            ));
        }
        if self.alpha.iter().any(|a| !a.is_finite()) {
            return Err(invalid("alpha", "entries must be finite"));
        }
        if !self.omega.is_finite() {
            return Err(invalid("omega", "must be finite"));
        }
        if !(self.tau > self.d as f64) {
            return Err(invalid("tau", format!("must exceed d = {}", self.d)));
        }
        if self.K_max == Some(0) {
            return Err(invalid("K_max", "must be positive"));
        }
        match (&self.U_modes, &self.V_modes) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "U_modes",
                    "give either U_modes or V_modes, not both",
                ))
            }
            (u, v) => {
                for (field, modes) in [("U_modes", u), ("V_modes", v)] {
                    for (i, mode) in modes.iter().flatten().enumerate() {
                        if mode.k.0.len() != self.d {
                            return Err(invalid(
                                field,
                                format!(
                                    "mode {i}: k has {} components, expected {}",
                                    mode.k.0.len(),
                                    self.d
                                ),
                            ));
                        }
                    }
                }
            }
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be positive"));
        }
        if self.m_list.iter().any(|m| !(*m >= 0.0)) {
            return Err(invalid("m_list", "exponents must be non-negative"));
        }
        if !(self.band > 0.0 && self.band <= 1.0) {
            return Err(invalid("band", "must lie in (0, 1]"));
        }
        if let Some(r) = &self.ramp {
            if !(r.step > 0.0) || !(r.stop >= r.start) {
                return Err(invalid("ramp", "needs step > 0 and stop >= start"));
            }
            if let (Some(lo), Some(hi)) = (r.lower, r.upper) {
                if !(lo < hi) {
                    return Err(invalid("ramp.lower", "must be below ramp.upper"));
                }
            }
            if !(r.width_tol > 0.0) {
                return Err(invalid("ramp.width_tol", "must be positive"));
            }
        }
        if self.lindstedt.order == 0 {
            return Err(invalid("lindstedt.order", "must be positive"));
        }
        Ok(())
    }

    pub fn k_max(&self) -> usize {
        self.K_max.unwrap_or(self.N * self.d / 2)
    }

    /// Monitored Sobolev exponent.
    pub fn m(&self) -> f64 {
        self.m_list[0]
    }

    pub fn frequency(&self) -> Result<FrequencyData, CliError> {
        diophantine_estimate(&self.alpha, self.omega, self.tau, self.k_max())
            .map_err(|e| invalid("omega", e.to_string()))
    }

    /// Zero force when neither `U_modes` nor `V_modes` is given.
    pub fn force_model(&self) -> Result<ForceModel, CliError> {
        let (spec, field) = match (&self.U_modes, &self.V_modes) {
            (Some(u), _) => (ForceSpec::force(u.clone()), "U_modes"),
            (None, Some(v)) => (ForceSpec::potential(v.clone()), "V_modes"),
            (None, None) => return Ok(ForceModel::zero(&self.alpha)),
        };
        build_force(&spec, &self.alpha).map_err(|e| invalid(field, e.to_string()))
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            band: self.band,
            ..SolveOptions::new(self.m())
        }
    }

    /// Ramp parameters `start, start + step, …` up to `stop`.
    pub fn ramp_params(&self) -> Result<Vec<f64>, CliError> {
        let r = self
            .ramp
            .as_ref()
            .ok_or_else(|| invalid("ramp", "missing [ramp] table"))?;
        let count = ((r.stop - r.start) / r.step + 1e-9).floor() as usize;
        Ok((0..=count).map(|i| r.start + i as f64 * r.step).collect())
    }

    /// SHA-256 of the canonical JSON form of the parsed config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
