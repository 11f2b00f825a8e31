//! Experiment manifests.
//!
//! A manifest is a JSON object with a `mode` and the matching parameter
//! block. Unknown keys are rejected so typos surface as schema errors.

use std::path::{Path, PathBuf};

use equidist_core::constants::AssumptionParams;
use equidist_core::geometry::ConeDomain;
use equidist_core::modular::ModularObservable;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ledger,
    Schedule,
    Correlate,
    Fit,
    Verify,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Ledger => "ledger",
            Mode::Schedule => "schedule",
            Mode::Correlate => "correlate",
            Mode::Fit => "fit",
            Mode::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub mode: Mode,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory, relative to the manifest file.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub ledger: Option<LedgerSpec>,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub correlate: Option<CorrelateSpec>,
    #[serde(default)]
    pub fit: Option<FitSpec>,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Generic recursion, valid for every Δ ≥ 1.
    #[default]
    A,
    /// Power-law recursion with validity thresholds.
    B,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerSpec {
    pub params: AssumptionParams,
    #[serde(default = "default_r_max")]
    pub r_max: usize,
    #[serde(default)]
    pub theorem: Theorem,
}

fn default_r_max() -> usize {
    12
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActionSpec {
    Horospherical { m: usize, n: usize },
    Roots {
        dim_t: usize,
        roots: Vec<Vec<f64>>,
        #[serde(default)]
        multiplicities: Option<Vec<usize>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub action: ActionSpec,
    /// Defaults to the `U_{m,n}` cone for horospherical actions.
    #[serde(default)]
    pub domain: Option<ConeDomain>,
    pub tuples: Vec<Vec<Vec<f64>>>,
    /// Fixed θ; otherwise `max(M_r^{-1}, Δ_r^{-ε_r})` when `params` is
    /// given, else `M_r^{-1/2}`.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub params: Option<AssumptionParams>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// Tuple `(m_1 t, …, m_r t)` for each grid time `t`.
    #[serde(default = "default_multipliers")]
    pub multipliers: Vec<f64>,
}

fn default_multipliers() -> Vec<f64> {
    vec![1.0]
}

impl TimeGrid {
    pub fn tuples(&self) -> Result<Vec<Vec<f64>>, CliError> {
        if !(self.step > 0.0 && self.stop >= self.start && self.start.is_finite() && self.stop.is_finite()) {
            return Err(CliError::Schema("time_grid needs step > 0 and stop >= start".into()));
        }
        if self.multipliers.is_empty() {
            return Err(CliError::Schema("time_grid.multipliers must not be empty".into()));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|k| {
                let t = self.start + k as f64 * self.step;
                self.multipliers.iter().map(|m| m * t).collect()
            })
            .collect())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub params: AssumptionParams,
    #[serde(default)]
    pub theorem: Theorem,
    /// Grid size for the derivative-norm surrogate of each observable.
    #[serde(default = "default_norm_points")]
    pub norm_points: usize,
}

fn default_norm_points() -> usize {
    4000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelateSpec {
    /// Wiener density on the horocycle, `{ "dim": 1, "coeffs": [...] }`; Haar when absent.
    #[serde(default)]
    pub sigma: Option<serde_json::Value>,
    /// One observable per time, or a single one reused for every time.
    pub observables: Vec<ModularObservable>,
    #[serde(default)]
    pub times: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub time_grid: Option<TimeGrid>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Use exactly `nodes` points instead of the resolution floor.
    #[serde(default)]
    pub fixed_nodes: bool,
    #[serde(default)]
    pub xi: i64,
    #[serde(default)]
    pub bound: Option<BoundSpec>,
}

fn default_nodes() -> usize {
    1 << 14
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    /// CSV with `Delta_mult` and `abs_error` columns, relative to the manifest.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default)]
    pub errors: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_cases")]
    pub cases: usize,
}

fn default_cases() -> usize {
    500
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let manifest: Manifest = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        manifest.check_block()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Schema(format!("cannot read manifest {}: {e}", path.display())))?;
        let manifest = Self::parse(&text)?;
        let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Schema(e.to_string()))?;
        Ok((manifest, raw))
    }

    fn check_block(&self) -> Result<(), CliError> {
        let present = [
            (Mode::Ledger, self.ledger.is_some()),
            (Mode::Schedule, self.schedule.is_some()),
            (Mode::Correlate, self.correlate.is_some()),
            (Mode::Fit, self.fit.is_some()),
            (Mode::Verify, self.verify.is_some()),
        ];
        for (mode, has) in present {
            if has && mode != self.mode {
                return Err(CliError::Schema(format!(
                    "block \"{}\" given for mode \"{}\"",
                    mode.name(),
                    self.mode.name()
                )));
            }
        }
        let has_own = present.iter().any(|(m, has)| *m == self.mode && *has);
        if !has_own && self.mode != Mode::Verify {
            return Err(CliError::Schema(format!("mode \"{}\" needs a \"{}\" block", self.mode.name(), self.mode.name())));
        }
        Ok(())
    }
}
