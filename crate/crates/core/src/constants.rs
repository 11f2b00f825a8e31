//! Constant ledgers for the higher-order correlation bounds.
//!
//! Starting from the single-translate equidistribution rate `(D_o, δ_o)`,
//! the mixing rate `(C, c)`, the Hölder constants `(A, a)` and the growth
//! of the norm family `(B_d, b_d, M_d)`, the base case produces
//! `(d_1, D_1, δ_1)` and each inductive step produces `(d_r, D_r, δ_r, ε_r)`.
//!
//! Two recursions are available. The generic one ([`LedgerMode::TheoremA`])
//! is valid for every `Δ_r ≥ 1` but `D_r` grows super-exponentially. The
//! power-law one ([`LedgerMode::TheoremB`]) keeps `D_r` linear in `r` at the
//! price of a per-`r` validity threshold on `Δ_r`. Both share `δ_r`.
//!
//! `D_r` is carried as a natural logarithm throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{log_add_exp, LogScalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("invalid parameter {name} = {value}: {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("norm growth table has no entry for d = {d}")]
    TableTooShort { d: u32 },
    #[error("norm growth tables must have equal non-zero lengths")]
    TableShape,
    #[error("ledger row for r = {r} is missing")]
    MissingRow { r: usize },
    #[error("r = {r} is not available (ledger holds r = 1..={max})")]
    RowOutOfRange { r: usize, max: usize },
    #[error("explicit ledger requires power-law norm growth")]
    NotPowerLaw,
    #[error("P_{d} = {p} exceeds L_1 (L_2 + 2) = {cap}")]
    PowerLawCapViolated { d: u32, p: f64, cap: f64 },
    #[error("Delta_r must be at least 1 (log Delta = {0})")]
    DeltaBelowOne(f64),
    #[error("expected {expected} S-norms, got {found}")]
    NormCount { expected: usize, found: usize },
    #[error("norm values must be finite and non-negative")]
    BadNorm,
    #[error("internal consistency check failed: {0}")]
    Internal(&'static str),
    #[error("invalid parameter file: {0}")]
    Json(String),
}

/// Growth of the norm family: `S_d(φ∘exp w) ≤ B_d max(1,‖w‖)^{b_d} S_d(φ)`
/// and `S_d(φψ) ≤ M_d S_{d+d_o}(φ) S_{d+d_o}(ψ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormGrowth {
    /// Explicit tables indexed by `d = 1, 2, …`.
    Tabulated {
        #[serde(rename = "B")]
        big_b: Vec<f64>,
        b: Vec<f64>,
        #[serde(rename = "M")]
        m: Vec<f64>,
    },
    /// The same `(B, b, M)` for every `d`.
    Constant {
        #[serde(rename = "B")]
        big_b: f64,
        b: f64,
        #[serde(rename = "M")]
        m: f64,
    },
    /// `B_d = L_1^d`, `b_d = ℓ d`, `M_d = L_2^d`.
    PowerLaw {
        #[serde(rename = "L1")]
        l1: f64,
        ell: f64,
        #[serde(rename = "L2")]
        l2: f64,
    },
}

impl NormGrowth {
    fn entry(table: &[f64], d: u32) -> Result<&f64, ConstantsError> {
        if d == 0 {
            return Err(ConstantsError::TableTooShort { d });
        }
        table.get(d as usize - 1).ok_or(ConstantsError::TableTooShort { d })
    }

    /// `ln B_d`.
    pub fn log_big_b(&self, d: u32) -> Result<f64, ConstantsError> {
        Ok(match self {
            NormGrowth::Tabulated { big_b, .. } => Self::entry(big_b, d)?.ln(),
            NormGrowth::Constant { big_b, .. } => big_b.ln(),
            NormGrowth::PowerLaw { l1, .. } => d as f64 * l1.ln(),
        })
    }

    /// `b_d`.
    pub fn exponent(&self, d: u32) -> Result<f64, ConstantsError> {
        Ok(match self {
            NormGrowth::Tabulated { b, .. } => *Self::entry(b, d)?,
            NormGrowth::Constant { b, .. } => *b,
            NormGrowth::PowerLaw { ell, .. } => ell * d as f64,
        })
    }

    /// `ln M_d`.
    pub fn log_m(&self, d: u32) -> Result<f64, ConstantsError> {
        Ok(match self {
            NormGrowth::Tabulated { m, .. } => Self::entry(m, d)?.ln(),
            NormGrowth::Constant { m, .. } => m.ln(),
            NormGrowth::PowerLaw { l2, .. } => d as f64 * l2.ln(),
        })
    }

    fn validate(&self, holder_exponent: f64) -> Result<(), ConstantsError> {
        let b_floor = 0.5f64.max(holder_exponent / 4.0);
        let check_b = |v: f64| {
            if v > b_floor && v.is_finite() {
                Ok(())
            } else {
                Err(ConstantsError::InvalidParameter {
                    name: "b_d",
                    value: v,
                    requirement: "b_d > max(1/2, a/4)",
                })
            }
        };
        let at_least_one = |name: &'static str, v: f64| {
            if v >= 1.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConstantsError::InvalidParameter {
                    name,
                    value: v,
                    requirement: ">= 1",
                })
            }
        };
        match self {
            NormGrowth::Tabulated { big_b, b, m } => {
                if big_b.is_empty() || big_b.len() != b.len() || b.len() != m.len() {
                    return Err(ConstantsError::TableShape);
                }
                big_b.iter().try_for_each(|&v| at_least_one("B_d", v))?;
                m.iter().try_for_each(|&v| at_least_one("M_d", v))?;
                b.iter().try_for_each(|&v| check_b(v))
            }
            NormGrowth::Constant { big_b, b, m } => {
                at_least_one("B", *big_b)?;
                at_least_one("M", *m)?;
                check_b(*b)
            }
            NormGrowth::PowerLaw { l1, ell, l2 } => {
                at_least_one("L1", *l1)?;
                at_least_one("ell", *ell)?;
                at_least_one("L2", *l2)?;
                // b_d = ℓd is smallest at d = 1.
                check_b(*ell)
            }
        }
    }
}

/// Input constants of the equidistribution and mixing hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionParams {
    #[serde(rename = "d_o")]
    pub base_degree: u32,
    #[serde(rename = "D_o")]
    pub eq1_constant: f64,
    #[serde(rename = "delta_o")]
    pub eq1_exponent: f64,
    #[serde(rename = "C")]
    pub mixing_constant: f64,
    #[serde(rename = "c")]
    pub mixing_exponent: f64,
    #[serde(rename = "A")]
    pub holder_constant: f64,
    #[serde(rename = "a")]
    pub holder_exponent: f64,
    pub growth: NormGrowth,
}

impl AssumptionParams {
    pub fn validate(&self) -> Result<(), ConstantsError> {
        fn require(ok: bool, name: &'static str, value: f64, requirement: &'static str) -> Result<(), ConstantsError> {
            if ok {
                Ok(())
            } else {
                Err(ConstantsError::InvalidParameter {
                    name,
                    value,
                    requirement,
                })
            }
        }
        require(self.base_degree >= 1, "d_o", self.base_degree as f64, ">= 1")?;
        require(self.eq1_constant >= 1.0 && self.eq1_constant.is_finite(), "D_o", self.eq1_constant, ">= 1")?;
        require(
            self.eq1_exponent > 0.0 && self.eq1_exponent <= 1.0,
            "delta_o",
            self.eq1_exponent,
            "in (0, 1]",
        )?;
        require(
            self.mixing_constant >= 1.0 && self.mixing_constant.is_finite(),
            "C",
            self.mixing_constant,
            ">= 1",
        )?;
        require(
            self.mixing_exponent > 0.0 && self.mixing_exponent < 0.5,
            "c",
            self.mixing_exponent,
            "in (0, 1/2)",
        )?;
        require(
            self.holder_constant >= 1.0 && self.holder_constant.is_finite(),
            "A",
            self.holder_constant,
            ">= 1",
        )?;
        require(
            self.holder_exponent > 0.0 && self.holder_exponent.is_finite(),
            "a",
            self.holder_exponent,
            "> 0",
        )?;
        self.growth.validate(self.holder_exponent)
    }

    pub fn from_json(text: &str) -> Result<Self, ConstantsError> {
        let params: AssumptionParams = serde_json::from_str(text).map_err(|e| ConstantsError::Json(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }

    /// `c_1 = min(a/2, c/4)`.
    pub fn c1(&self) -> f64 {
        (self.holder_exponent / 2.0).min(self.mixing_exponent / 4.0)
    }

    /// `ln P_1`, with `P_1 = √(14 C)`.
    pub fn log_p1(&self) -> f64 {
        0.5 * (14.0 * self.mixing_constant).ln()
    }

    /// `ln Q`, with `Q = 2 max(A, P_1)`.
    pub fn log_q(&self) -> f64 {
        std::f64::consts::LN_2 + self.holder_constant.ln().max(self.log_p1())
    }

    /// `ln P_d`, with `P_d = (M_d B_{d+d_o}^2 + 2 B_d^2)^{1/(2 b_{d+d_o})}`.
    pub fn log_p(&self, d: u32) -> Result<f64, ConstantsError> {
        let g = &self.growth;
        let shifted = d + self.base_degree;
        let first = g.log_m(d)? + 2.0 * g.log_big_b(shifted)?;
        let second = std::f64::consts::LN_2 + 2.0 * g.log_big_b(d)?;
        Ok(log_add_exp(first, second) / (2.0 * g.exponent(shifted)?))
    }
}

/// Constants of the single-translate (`r = 1`) bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BaseCase {
    pub d_1: u32,
    /// `B'_{d_o} = M_{d_o} B_{2d_o}^2 + 2 B_{d_o}`.
    pub b_prime: f64,
    /// `ln D'_1`, with `D'_1 = 5 max(√C, √(D_o B'_{d_o}))`.
    pub log_d_prime_1: f64,
    /// `ln D_1`, with `D_1 = max(D_o, D'_1)`.
    pub log_d_1: f64,
    pub delta_1: f64,
}

pub fn base_case(params: &AssumptionParams) -> Result<BaseCase, ConstantsError> {
    params.validate()?;
    let d_o = params.base_degree;
    let g = &params.growth;
    let log_b_prime = log_add_exp(
        g.log_m(d_o)? + 2.0 * g.log_big_b(2 * d_o)?,
        std::f64::consts::LN_2 + g.log_big_b(d_o)?,
    );
    let log_d_prime_1 =
        5f64.ln() + 0.5 * params.mixing_constant.ln().max(params.eq1_constant.ln() + log_b_prime);
    let log_d_1 = params.eq1_constant.ln().max(log_d_prime_1);
    let c = params.mixing_exponent;
    let delta_1 = c * params.eq1_exponent / (2.0 * (c + 2.0 * g.exponent(2 * d_o)?));
    if !(delta_1 < params.eq1_exponent && delta_1 > 0.0) {
        return Err(ConstantsError::Internal("delta_1 must lie in (0, delta_o)"));
    }
    Ok(BaseCase {
        d_1: 2 * d_o,
        b_prime: log_b_prime.exp(),
        log_d_prime_1,
        log_d_1,
        delta_1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerMode {
    /// `θ = Δ^{−ε_r}`; valid for every `Δ_r ≥ 1`.
    TheoremA,
    /// `θ = P_{d_{r−1}} Δ^{−ε_r}`; valid once `Δ_r > P_{d_{r−1}}^{1/ε_r}`.
    TheoremB,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LedgerRow {
    pub r: usize,
    pub d_r: u32,
    /// `ln D_r`.
    pub log_big_d: f64,
    pub delta: f64,
    /// `ε_r`; absent for `r = 1`.
    pub eps: Option<f64>,
    /// `ln P_{d_{r−1}}`; absent for `r = 1`.
    pub log_p_prev: Option<f64>,
    /// `ln Q_r` (power-law recursion only).
    pub log_q_r: Option<f64>,
    /// `ln` of the smallest admissible `Δ_r` (0 when every `Δ_r ≥ 1` is admissible).
    pub log_threshold: f64,
}

impl LedgerRow {
    pub fn big_d(&self) -> LogScalar {
        LogScalar::from_ln(self.log_big_d)
    }

    pub fn threshold(&self) -> LogScalar {
        LogScalar::from_ln(self.log_threshold)
    }
}

/// Extra constants reported by [`explicit_ledger`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplicitConstants {
    /// Smallest `λ > 1` (to [`LAMBDA_TOL`]) with `δ_r ≥ 1/((r!)²(r+1)! λ^r)` for all tabulated `r`.
    pub lambda: f64,
    /// `γ = 2 max(c_1, 2ℓ) / λ`.
    pub gamma: f64,
    /// `max(1, max_r D_r / r)`.
    pub h1: f64,
    /// `H_2 = (L_1 (L_2 + 2))^γ`.
    pub h2: f64,
    /// `L_1 (L_2 + 2)`.
    pub p_cap: f64,
    /// `ln (1/((r!)²(r+1)! λ^r))` for `r = 1..=r_max`.
    pub log_factorial_bounds: Vec<f64>,
}

pub const LAMBDA_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundLedger {
    pub mode: LedgerMode,
    pub params: AssumptionParams,
    pub base: BaseCase,
    pub c1: f64,
    pub log_p1: f64,
    pub log_q: f64,
    pub rows: Vec<LedgerRow>,
    pub explicit: Option<ExplicitConstants>,
}

impl BoundLedger {
    /// A ledger holding only the `r = 1` row.
    pub fn start(params: &AssumptionParams, mode: LedgerMode) -> Result<Self, ConstantsError> {
        let base = base_case(params)?;
        if mode == LedgerMode::TheoremB && !matches!(params.growth, NormGrowth::PowerLaw { .. }) {
            return Err(ConstantsError::NotPowerLaw);
        }
        Ok(BoundLedger {
            mode,
            params: params.clone(),
            base,
            c1: params.c1(),
            log_p1: params.log_p1(),
            log_q: params.log_q(),
            rows: vec![LedgerRow {
                r: 1,
                d_r: base.d_1,
                log_big_d: base.log_d_1,
                delta: base.delta_1,
                eps: None,
                log_p_prev: None,
                log_q_r: None,
                log_threshold: 0.0,
            }],
            explicit: None,
        })
    }

    /// The generic recursion filled through `r_max`.
    pub fn theorem_a(params: &AssumptionParams, r_max: usize) -> Result<Self, ConstantsError> {
        let mut ledger = BoundLedger::start(params, LedgerMode::TheoremA)?;
        ledger.extend_to(r_max)?;
        Ok(ledger)
    }

    pub fn extend_to(&mut self, r_max: usize) -> Result<(), ConstantsError> {
        for r in (self.rows.len() + 1)..=r_max {
            let row = recurse(&self.params, self, r)?;
            self.rows.push(row);
        }
        Ok(())
    }

    pub fn r_max(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, r: usize) -> Result<&LedgerRow, ConstantsError> {
        if r == 0 || r > self.rows.len() {
            return Err(ConstantsError::RowOutOfRange {
                r,
                max: self.rows.len(),
            });
        }
        Ok(&self.rows[r - 1])
    }
}

/// One inductive step: `(d_r, D_r, δ_r, ε_r)` from the row `r − 1`.
pub fn recurse(params: &AssumptionParams, ledger: &BoundLedger, r: usize) -> Result<LedgerRow, ConstantsError> {
    if r < 2 {
        return Err(ConstantsError::RowOutOfRange {
            r,
            max: ledger.rows.len(),
        });
    }
    let prev = ledger
        .rows
        .get(r - 2)
        .filter(|row| row.r == r - 1)
        .ok_or(ConstantsError::MissingRow { r: r - 1 })?;
    let d_o = params.base_degree;
    let rf = r as f64;
    let c1 = params.c1();
    let b = params.growth.exponent(prev.d_r + d_o)?;
    let denom = 2.0 * c1 / rf + 2.0 * rf * b;
    let eps = prev.delta / denom;
    let delta = c1 * prev.delta / (rf * denom);
    let log_p_prev = params.log_p(prev.d_r)?;
    let log_p1 = params.log_p1();
    let log_q = params.log_q();
    let ln2 = std::f64::consts::LN_2;

    let (log_big_d, log_q_r, log_threshold) = match ledger.mode {
        LedgerMode::TheoremA => {
            let first = ln2 + log_p1 + rf * b * log_p_prev + 0.5 * prev.log_big_d;
            (log_add_exp(first, rf.ln() + log_q), None, 0.0)
        }
        LedgerMode::TheoremB => {
            let log_q_r = log_q + c1 / rf * log_p_prev;
            let first = ln2 + log_p1 + 0.5 * prev.log_big_d;
            (log_add_exp(first, rf.ln() + log_q_r), Some(log_q_r), log_p_prev / eps)
        }
    };
    Ok(LedgerRow {
        r,
        d_r: prev.d_r + d_o,
        log_big_d,
        delta,
        eps: Some(eps),
        log_p_prev: Some(log_p_prev),
        log_q_r,
        log_threshold,
    })
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `ln` of `1/((r!)²(r+1)! λ^r)`.
pub fn log_factorial_bound(r: usize, lambda: f64) -> f64 {
    -(2.0 * ln_factorial(r) + ln_factorial(r + 1) + r as f64 * lambda.ln())
}

/// Smallest `λ > 1` (bisected to [`LAMBDA_TOL`]) such that
/// `δ_r ≥ 1/((r!)²(r+1)! λ^r)` for every row of `rows`.
pub fn bisect_lambda(rows: &[LedgerRow]) -> f64 {
    let certified = |lambda: f64| rows.iter().all(|row| row.delta.ln() >= log_factorial_bound(row.r, lambda));
    let mut lo = 1.0;
    let mut hi = 2.0;
    if certified(lo) {
        return lo + LAMBDA_TOL;
    }
    while !certified(hi) {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > LAMBDA_TOL {
        let mid = 0.5 * (lo + hi);
        if certified(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// The power-law ledger through `r_max`, with `λ`, `γ`, `H_1`, `H_2`.
pub fn explicit_ledger(params: &AssumptionParams, r_max: usize) -> Result<BoundLedger, ConstantsError> {
    let NormGrowth::PowerLaw { l1, ell, l2 } = params.growth else {
        return Err(ConstantsError::NotPowerLaw);
    };
    let mut ledger = BoundLedger::start(params, LedgerMode::TheoremB)?;
    ledger.extend_to(r_max.max(1))?;

    let p_cap = l1 * (l2 + 2.0);
    for row in &ledger.rows[1..] {
        let log_p = row.log_p_prev.expect("r >= 2 rows carry P");
        if log_p > p_cap.ln() {
            return Err(ConstantsError::PowerLawCapViolated {
                d: row.d_r - params.base_degree,
                p: log_p.exp(),
                cap: p_cap,
            });
        }
    }

    let lambda = bisect_lambda(&ledger.rows);
    let gamma = 2.0 * ledger.c1.max(2.0 * ell) / lambda;
    let h1 = ledger
        .rows
        .iter()
        .map(|row| (row.log_big_d - (row.r as f64).ln()).exp())
        .fold(1.0, f64::max);
    ledger.explicit = Some(ExplicitConstants {
        lambda,
        gamma,
        h1,
        h2: p_cap.powf(gamma),
        p_cap,
        log_factorial_bounds: ledger.rows.iter().map(|row| log_factorial_bound(row.r, lambda)).collect(),
    });
    Ok(ledger)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundEvaluation {
    /// `D_r Δ_r^{−δ_r} ‖σ‖_W ∏ S(φ_i)`.
    pub bound: f64,
    /// `ln (D_r Δ_r^{−δ_r})`.
    pub log_prefactor: f64,
    /// Power-law ledgers: whether `Δ_r` clears the validity threshold.
    pub above_threshold: Option<bool>,
}

pub fn bound_evaluate(
    ledger: &BoundLedger,
    r: usize,
    delta: LogScalar,
    wiener_norm: f64,
    s_norms: &[f64],
) -> Result<BoundEvaluation, ConstantsError> {
    let row = ledger.row(r)?;
    if delta.ln().is_nan() || delta.ln() < 0.0 {
        return Err(ConstantsError::DeltaBelowOne(delta.ln()));
    }
    if s_norms.len() != r {
        return Err(ConstantsError::NormCount {
            expected: r,
            found: s_norms.len(),
        });
    }
    if !(wiener_norm >= 0.0) || s_norms.iter().any(|s| !(*s >= 0.0)) {
        return Err(ConstantsError::BadNorm);
    }
    let log_prefactor = row.log_big_d - row.delta * delta.ln();
    let norms: f64 = wiener_norm * s_norms.iter().product::<f64>();
    let bound = if norms == 0.0 { 0.0 } else { log_prefactor.exp() * norms };
    let above_threshold = match ledger.mode {
        LedgerMode::TheoremA => None,
        LedgerMode::TheoremB => Some(r == 1 || delta.ln() > row.log_threshold),
    };
    Ok(BoundEvaluation {
        bound,
        log_prefactor,
        above_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn reference_params() -> AssumptionParams {
        AssumptionParams {
            base_degree: 1,
            eq1_constant: 1.0,
            eq1_exponent: 1.0,
            mixing_constant: 1.0,
            mixing_exponent: 0.4,
            holder_constant: 1.0,
            holder_exponent: 1.0,
            growth: NormGrowth::Tabulated {
                big_b: vec![1.0; 16],
                b: (1..=16).map(f64::from).collect(),
                m: vec![1.0; 16],
            },
        }
    }

    fn power_law_params() -> AssumptionParams {
        AssumptionParams {
            growth: NormGrowth::PowerLaw {
                l1: 1.0,
                ell: 1.0,
                l2: 1.0,
            },
            ..reference_params()
        }
    }

    #[test]
    fn base_case_reference_values() {
        let base = base_case(&reference_params()).unwrap();
        assert_eq!(base.d_1, 2);
        assert_relative_eq!(base.delta_1, 1.0 / 22.0, max_relative = 1e-15);
        assert_relative_eq!(base.b_prime, 3.0, max_relative = 1e-15);
        assert_relative_eq!(base.log_d_prime_1.exp(), 5.0 * 3f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(base.log_d_1.exp(), 8.660_254_037_844_386, max_relative = 1e-14);
    }

    #[test]
    fn base_case_large_mixing_constant_branch() {
        let params = AssumptionParams {
            mixing_constant: 1e6,
            ..reference_params()
        };
        let base = base_case(&params).unwrap();
        assert_relative_eq!(base.log_d_1.exp(), 5.0 * 1e3, max_relative = 1e-14);
    }

    #[test]
    fn base_case_small_mixing_exponent_limit() {
        let params = AssumptionParams {
            mixing_exponent: 1e-12,
            ..reference_params()
        };
        let base = base_case(&params).unwrap();
        assert!(base.delta_1 < 1e-12);
        assert!(base.delta_1 > 0.0);
    }

    #[test]
    fn recurse_second_row() {
        let ledger = BoundLedger::theorem_a(&reference_params(), 2).unwrap();
        let row = ledger.row(2).unwrap();
        // Independent evaluation of the r = 2 step.
        let delta_1 = 1.0 / 22.0;
        let c1 = 0.1;
        let b3 = 3.0;
        let denom = 2.0 * c1 / 2.0 + 2.0 * 2.0 * b3;
        let p1 = 14f64.sqrt();
        let p2 = 3f64.powf(1.0 / 6.0);
        let d2 = 2.0 * p1 * p2.powf(2.0 * b3) * (5.0 * 3f64.sqrt()).sqrt() + 2.0 * 2.0 * p1;
        assert_eq!(row.d_r, 3);
        assert_relative_eq!(row.delta, c1 * delta_1 / (2.0 * denom), max_relative = 1e-14);
        assert_relative_eq!(row.delta, 1.878_287_002_253_944_6e-4, max_relative = 1e-12);
        assert_relative_eq!(row.eps.unwrap(), delta_1 / denom, max_relative = 1e-14);
        assert_relative_eq!(row.log_p_prev.unwrap().exp(), p2, max_relative = 1e-14);
        assert_relative_eq!(row.big_d().value(), d2, max_relative = 1e-13);
        assert!((row.big_d().value() - 81.04).abs() < 0.01);
    }

    #[test]
    fn degrees_progress_linearly() {
        let ledger = BoundLedger::theorem_a(&reference_params(), 5).unwrap();
        let degrees: Vec<u32> = ledger.rows.iter().map(|row| row.d_r).collect();
        assert_eq!(degrees, vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn recurse_requires_previous_row() {
        let ledger = BoundLedger::start(&reference_params(), LedgerMode::TheoremA).unwrap();
        assert_eq!(
            recurse(&reference_params(), &ledger, 3),
            Err(ConstantsError::MissingRow { r: 2 })
        );
    }

    #[test]
    fn short_table_is_reported() {
        let params = AssumptionParams {
            growth: NormGrowth::Tabulated {
                big_b: vec![1.0; 4],
                b: vec![1.0, 2.0, 3.0, 4.0],
                m: vec![1.0; 4],
            },
            ..reference_params()
        };
        assert_eq!(
            BoundLedger::theorem_a(&params, 6).unwrap_err(),
            ConstantsError::TableTooShort { d: 5 }
        );
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut p = reference_params();
        p.mixing_exponent = 0.5;
        assert!(matches!(p.validate(), Err(ConstantsError::InvalidParameter { name: "c", .. })));
        let mut p = reference_params();
        p.eq1_constant = 0.5;
        assert!(p.validate().is_err());
        let mut p = reference_params();
        p.holder_exponent = 8.0; // b_1 = 1 is not > a/4 = 2
        assert!(matches!(p.validate(), Err(ConstantsError::InvalidParameter { name: "b_d", .. })));
    }

    #[test]
    fn explicit_ledger_rejects_tables() {
        assert_eq!(explicit_ledger(&reference_params(), 4).unwrap_err(), ConstantsError::NotPowerLaw);
    }

    #[test]
    fn explicit_ledger_power_law() {
        let ledger = explicit_ledger(&power_law_params(), 12).unwrap();
        let extra = ledger.explicit.as_ref().unwrap();
        assert_eq!(extra.p_cap, 3.0);
        for row in &ledger.rows[1..] {
            let d = row.d_r - 1;
            assert_relative_eq!(
                row.log_p_prev.unwrap().exp(),
                3f64.powf(1.0 / (2.0 * (d as f64 + 1.0))),
                max_relative = 1e-14
            );
            assert!(row.log_p_prev.unwrap().exp() <= 3.0);
        }
        for (row, bound) in ledger.rows.iter().zip(&extra.log_factorial_bounds) {
            assert!(row.delta.ln() >= *bound);
            assert!(row.big_d().value() <= extra.h1 * row.r as f64 * (1.0 + 1e-12));
        }
        // λ is minimal: shrinking it by more than the bisection tolerance breaks a bound.
        let smaller = extra.lambda - 2.0 * LAMBDA_TOL;
        assert!(ledger.rows.iter().any(|row| row.delta.ln() < log_factorial_bound(row.r, smaller)));
        assert_relative_eq!(extra.h2, 3f64.powf(extra.gamma), max_relative = 1e-14);
    }

    #[test]
    fn modes_share_exponents() {
        let a = BoundLedger::theorem_a(&power_law_params(), 10).unwrap();
        let b = explicit_ledger(&power_law_params(), 10).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.delta.to_bits(), y.delta.to_bits());
            assert_eq!(x.eps, y.eps);
            assert_eq!(x.d_r, y.d_r);
        }
        // The power-law recursion keeps D_r far smaller.
        assert!(b.rows[9].log_big_d < a.rows[9].log_big_d);
    }

    #[test]
    fn bound_evaluate_examples() {
        let ledger = BoundLedger::theorem_a(&reference_params(), 3).unwrap();
        let e = bound_evaluate(&ledger, 1, LogScalar::from_ln(10.0), 1.0, &[1.0]).unwrap();
        assert_relative_eq!(e.bound, 5.0 * 3f64.sqrt() * (-10.0f64 / 22.0).exp(), max_relative = 1e-14);
        assert!((e.bound - 5.4966).abs() < 2e-3);
        let flat = bound_evaluate(&ledger, 2, LogScalar::ONE, 2.0, &[1.5, 3.0]).unwrap();
        assert_relative_eq!(flat.bound, ledger.rows[1].big_d().value() * 9.0, max_relative = 1e-14);
        let zero = bound_evaluate(&ledger, 2, LogScalar::ONE, 0.0, &[1.5, 3.0]).unwrap();
        assert_eq!(zero.bound, 0.0);
        assert!(matches!(
            bound_evaluate(&ledger, 1, LogScalar::from_ln(-1.0), 1.0, &[1.0]),
            Err(ConstantsError::DeltaBelowOne(_))
        ));
        assert!(bound_evaluate(&ledger, 4, LogScalar::ONE, 1.0, &[1.0; 4]).is_err());
        assert!(bound_evaluate(&ledger, 2, LogScalar::ONE, 1.0, &[1.0]).is_err());
    }

    #[test]
    fn bound_evaluate_reports_threshold() {
        let ledger = explicit_ledger(&power_law_params(), 3).unwrap();
        let row = ledger.row(2).unwrap();
        let below = bound_evaluate(&ledger, 2, LogScalar::from_ln(row.log_threshold * 0.5), 1.0, &[1.0, 1.0]).unwrap();
        let above = bound_evaluate(&ledger, 2, LogScalar::from_ln(row.log_threshold * 2.0), 1.0, &[1.0, 1.0]).unwrap();
        assert_eq!(below.above_threshold, Some(false));
        assert_eq!(above.above_threshold, Some(true));
    }

    #[test]
    fn json_round_trip() {
        for params in [reference_params(), power_law_params()] {
            let text = params.to_json();
            assert_eq!(AssumptionParams::from_json(&text).unwrap(), params);
        }
        let text = r#"{"d_o":1,"D_o":2,"delta_o":0.5,"C":3,"c":0.25,"A":1,"a":0.5,
                       "growth":{"kind":"constant","B":2,"b":1,"M":4}}"#;
        let p = AssumptionParams::from_json(text).unwrap();
        assert_eq!(p.growth, NormGrowth::Constant { big_b: 2.0, b: 1.0, m: 4.0 });
        assert!(AssumptionParams::from_json(r#"{"d_o":1}"#).is_err());
    }

    #[test]
    fn ledger_is_reproducible() {
        let a = BoundLedger::theorem_a(&reference_params(), 12).unwrap();
        let b = BoundLedger::theorem_a(&reference_params(), 12).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.log_big_d.to_bits(), y.log_big_d.to_bits());
            assert_eq!(x.delta.to_bits(), y.delta.to_bits());
            assert!(x.log_big_d.is_finite());
        }
    }

    fn arb_params() -> impl Strategy<Value = AssumptionParams> {
        (
            1u32..=3,
            1.0..100.0f64,
            0.01..=1.0f64,
            1.0..100.0f64,
            0.001..0.499f64,
            1.0..10.0f64,
            0.01..2.0f64,
            prop_oneof![
                (1.0..5.0f64, 1.0..3.0f64, 1.0..5.0f64).prop_map(|(l1, ell, l2)| NormGrowth::PowerLaw { l1, ell, l2 }),
                (1.0..5.0f64, 0.51..4.0f64, 1.0..5.0f64).prop_map(|(big_b, b, m)| NormGrowth::Constant { big_b, b, m }),
            ],
        )
            .prop_map(|(d_o, big_d, delta_o, big_c, c, big_a, a, growth)| AssumptionParams {
                base_degree: d_o,
                eq1_constant: big_d,
                eq1_exponent: delta_o,
                mixing_constant: big_c,
                mixing_exponent: c,
                holder_constant: big_a,
                holder_exponent: a,
                growth,
            })
    }

    proptest! {
        #[test]
        fn ledger_invariants_hold(params in arb_params()) {
            let ledger = BoundLedger::theorem_a(&params, 12).unwrap();
            let mut prev = params.eq1_exponent;
            for (k, row) in ledger.rows.iter().enumerate() {
                prop_assert_eq!(row.d_r, (k as u32 + 2) * params.base_degree);
                prop_assert!(row.delta > 0.0 && row.delta < prev);
                prev = row.delta;
                if let Some(eps) = row.eps {
                    prop_assert!(eps > 0.0 && eps < 1.0);
                }
                prop_assert!(row.log_big_d.is_finite());
            }
        }

        #[test]
        fn bound_is_monotone_and_linear(
            log_delta in 0.0..50.0f64,
            step in 0.01..10.0f64,
            w in 0.0..10.0f64,
            s in 0.0..10.0f64,
        ) {
            let ledger = BoundLedger::theorem_a(&reference_params(), 2).unwrap();
            let at = |ld: f64, w: f64, s: f64| {
                bound_evaluate(&ledger, 2, LogScalar::from_ln(ld), w, &[s, 1.5]).unwrap().bound
            };
            prop_assert!(at(log_delta + step, w, s) <= at(log_delta, w, s));
            let base = at(log_delta, w, s);
            prop_assert!((at(log_delta, 2.0 * w, s) - 2.0 * base).abs() <= 1e-12 * base.abs().max(1e-300));
            prop_assert!((at(log_delta, w, 3.0 * s) - 3.0 * base).abs() <= 1e-12 * base.abs().max(1e-300));
        }
    }
}
