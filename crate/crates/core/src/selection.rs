//! Pigeonhole selection of the split index `p` and the averaging window `L`.
//!
//! Given norms `β_1 ≥ … ≥ β_r` with `β_r ≤ β_1 θ`, the points
//! `γ_q = β_1 θ^{q/r}` (`q = 0, …, r−1`) fall into the `r − 1` intervals
//! `(β_{p+1}, β_p]`, so two consecutive ones share an interval. That pair
//! fixes `L = β_1^{-1} θ^{-(q+1/2)/r}`.
//!
//! All comparisons are carried out on logarithms. When every input is an
//! exact power of two the logarithms are integers (base 2) and the
//! comparisons are exact; otherwise non-strict comparisons get a relative
//! slack of `1e-12`.

use thiserror::Error;

use crate::geometry::DirectionSelection;
use crate::numeric::LogScalar;

pub const COMPARE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("need at least two norms, got {0}")]
    TooShort(usize),
    #[error("theta = {0} is not in (0, 1)")]
    ThetaOutOfRange(f64),
    #[error("theta = {theta} is below M_r^-1 = {min}")]
    ThetaBelowMinimum { theta: f64, min: f64 },
    #[error("norms must be non-negative and finite")]
    BadNorm,
    #[error("norms are not in decreasing order at position {0}")]
    NotDecreasing(usize),
    #[error("last norm exceeds beta_1 * theta")]
    TailTooLarge,
    #[error("leading norm must be positive")]
    ZeroLeading,
    #[error("internal: no pigeonhole pair found")]
    NoPair,
}

/// Logarithmic view of `(β, θ)`.
#[derive(Clone, Debug)]
enum LogData {
    /// `β_i = 2^{e_i}` (`None` for `β_i = 0`) and `θ = 2^{−s}`.
    Dyadic { exps: Vec<Option<i64>>, theta_exp: i64 },
    /// Natural logarithms (`-inf` for zero).
    Float { logs: Vec<f64>, log_theta: f64 },
}

fn dyadic_exponent(x: f64) -> Option<i64> {
    if !(x > 0.0 && x.is_finite()) {
        return None;
    }
    let bits = x.to_bits();
    let mantissa = bits & ((1u64 << 52) - 1);
    let biased = ((bits >> 52) & 0x7ff) as i64;
    if biased == 0 || mantissa != 0 {
        return None;
    }
    Some(biased - 1023)
}

impl LogData {
    fn from_values(betas: &[f64], theta: f64) -> Self {
        let theta_exp = dyadic_exponent(theta);
        let exps: Option<Vec<Option<i64>>> = betas
            .iter()
            .map(|&b| if b == 0.0 { Some(None) } else { dyadic_exponent(b).map(Some) })
            .collect();
        match (exps, theta_exp) {
            (Some(exps), Some(theta_exp)) => LogData::Dyadic { exps, theta_exp },
            _ => LogData::Float {
                logs: betas.iter().map(|b| b.ln()).collect(),
                log_theta: theta.ln(),
            },
        }
    }

    fn from_logs(logs: &[f64], log_theta: f64) -> Self {
        LogData::Float {
            logs: logs.to_vec(),
            log_theta,
        }
    }

    fn len(&self) -> usize {
        match self {
            LogData::Dyadic { exps, .. } => exps.len(),
            LogData::Float { logs, .. } => logs.len(),
        }
    }

    /// `Σ k_i log β_i + k_θ log θ` for integer coefficients: exact (base-2
    /// exponents) in the dyadic case, a float with its magnitude scale otherwise.
    fn linear(&self, terms: &[(usize, i64)], theta_coeff: i64) -> Value {
        match self {
            LogData::Dyadic { exps, theta_exp } => {
                let mut acc: i128 = theta_coeff as i128 * *theta_exp as i128;
                let mut infinite = 0i64;
                for &(i, k) in terms {
                    match exps[i] {
                        Some(e) => acc += k as i128 * e as i128,
                        None => infinite += k.signum(),
                    }
                }
                // k · log 0 = −∞ · sign(k)
                match infinite.signum() {
                    1 => Value::Exact(i128::MIN + 1),
                    -1 => Value::Exact(i128::MIN + 1).neg(),
                    _ => Value::Exact(acc),
                }
            }
            LogData::Float { logs, log_theta } => {
                let mut acc = theta_coeff as f64 * log_theta;
                let mut scale = (theta_coeff as f64 * log_theta).abs();
                for &(i, k) in terms {
                    acc += k as f64 * logs[i];
                    scale += (k as f64 * logs[i]).abs();
                }
                Value::Approx { value: acc, scale }
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Value {
    Exact(i128),
    Approx { value: f64, scale: f64 },
}

impl Value {
    fn neg(self) -> Self {
        match self {
            Value::Exact(v) => Value::Exact(-v),
            Value::Approx { value, scale } => Value::Approx { value: -value, scale },
        }
    }

    /// `> 0`, strict.
    fn positive(self) -> bool {
        match self {
            Value::Exact(v) => v > 0,
            Value::Approx { value, .. } => value > 0.0,
        }
    }

    /// `≥ 0`, with slack in the approximate case.
    fn nonnegative(self) -> bool {
        match self {
            Value::Exact(v) => v >= 0,
            Value::Approx { value, scale } => value.is_nan() || value >= -COMPARE_TOL * scale.max(1.0),
        }
    }
}

/// Which of the sandwich relations hold for a given `(p, q)` (1-based `p`).
/// All terms are scaled by `r` so the coefficients are integers.
fn sandwich_holds(data: &LogData, r: usize, p: usize, q: usize) -> bool {
    let r_i = r as i64;
    let q_i = q as i64;
    // β_{p+1} < β_1 θ^{(q+1)/r}  ⇔  r log β_1 + (q+1) log θ − r log β_{p+1} > 0
    let strict = data.linear(&[(0, r_i), (p, -r_i)], q_i + 1).positive();
    // β_1 θ^{q/r} ≤ β_p  ⇔  r log β_p − r log β_1 − q log θ ≥ 0
    let upper = data.linear(&[(p - 1, r_i), (0, -r_i)], -q_i).nonnegative();
    strict && upper
}

fn validate(data: &LogData) -> Result<(), SelectionError> {
    let r = data.len();
    if r < 2 {
        return Err(SelectionError::TooShort(r));
    }
    for i in 1..r {
        // log β_{i-1} − log β_i ≥ 0
        if !data.linear(&[(i - 1, 1), (i, -1)], 0).nonnegative() {
            return Err(SelectionError::NotDecreasing(i));
        }
    }
    // log β_1 + log θ − log β_r ≥ 0
    if !data.linear(&[(0, 1), (r - 1, -1)], 1).nonnegative() {
        return Err(SelectionError::TailTooLarge);
    }
    Ok(())
}

/// Lexicographically smallest `(p, q)` (with `1 ≤ p ≤ r−1`, `0 ≤ q ≤ r−2`)
/// satisfying `β_{p+1} < β_1 θ^{(q+1)/r} < β_1 θ^{q/r} ≤ β_p`.
fn find_pair(data: &LogData) -> Result<(usize, usize), SelectionError> {
    validate(data)?;
    let r = data.len();
    // Walk γ_0 > γ_1 > … > γ_{r-1} through the intervals (β_{p+1}, β_p]:
    // interval[q] is the p whose interval holds γ_q. A pair (p, q) is valid
    // exactly when γ_q and γ_{q+1} share interval p.
    let mut interval = Vec::with_capacity(r);
    let mut p = 1;
    for q in 0..r {
        // advance while γ_q ≤ β_{p+1}, i.e. r log β_{p+1} − r log β_1 − q log θ ≥ 0
        while p < r - 1 && data.linear(&[(p, r as i64), (0, -(r as i64))], -(q as i64)).nonnegative() {
            p += 1;
        }
        interval.push(p);
    }
    (0..r - 1)
        .filter(|&q| interval[q] == interval[q + 1])
        .map(|q| (interval[q], q))
        .filter(|&(p, q)| sandwich_holds(data, r, p, q))
        .min()
        .ok_or(SelectionError::NoPair)
}

/// Pigeonhole choice on multiplicative inputs. Returns `(p, q)` with `p`
/// 1-based.
pub fn pigeonhole(betas: &[f64], theta: f64) -> Result<(usize, usize), SelectionError> {
    check_theta(theta)?;
    if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(SelectionError::BadNorm);
    }
    if betas.first().is_some_and(|&b| b == 0.0) {
        return Err(SelectionError::ZeroLeading);
    }
    find_pair(&LogData::from_values(betas, theta))
}

/// Exhaustive reference search over all `(p, q)`, exposed for
/// cross-checking [`pigeonhole`].
pub fn pigeonhole_brute_force(betas: &[f64], theta: f64) -> Option<(usize, usize)> {
    let data = LogData::from_values(betas, theta);
    let r = betas.len();
    (1..r)
        .flat_map(|p| (0..r - 1).map(move |q| (p, q)))
        .find(|&(p, q)| sandwich_holds(&data, r, p, q))
}

fn check_theta(theta: f64) -> Result<(), SelectionError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(SelectionError::ThetaOutOfRange(theta));
    }
    Ok(())
}

/// The three window inequalities, reported as values together with the
/// outcome of the corresponding (exact where possible) comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowChecks {
    /// `L‖w^{(1)}‖`, required `≤ θ^{-1}`.
    pub leading: f64,
    pub leading_bound: f64,
    pub leading_ok: bool,
    /// `L‖w^{(p)}‖`, required `≥ θ^{-1/(2r)} > 1`.
    pub split: f64,
    pub split_bound: f64,
    pub split_ok: bool,
    /// `L‖w^{(p+1)}‖`, required `< θ^{1/(2r)}`.
    pub tail: f64,
    pub tail_bound: f64,
    pub tail_ok: bool,
}

impl WindowChecks {
    pub fn all_ok(&self) -> bool {
        self.leading_ok && self.split_ok && self.tail_ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowChoice {
    /// 1-based split index.
    pub p: usize,
    pub q: usize,
    pub window: LogScalar,
    pub theta: f64,
    pub checks: WindowChecks,
}

impl WindowChoice {
    /// The averaging length `L`.
    pub fn length(&self) -> f64 {
        self.window.value()
    }
}

fn window_from(data: &LogData, theta: f64) -> Result<WindowChoice, SelectionError> {
    let (p, q) = find_pair(data)?;
    let r = data.len();
    let (r_i, q_i) = (r as i64, q as i64);
    let (log_b1, log_bp, log_bp1, log_theta) = match data {
        LogData::Dyadic { exps, theta_exp } => {
            let ln2 = std::f64::consts::LN_2;
            let get = |i: usize| exps[i].map_or(f64::NEG_INFINITY, |e| e as f64 * ln2);
            (get(0), get(p - 1), get(p), *theta_exp as f64 * ln2)
        }
        LogData::Float { logs, log_theta } => (logs[0], logs[p - 1], logs[p], *log_theta),
    };
    let shift = -(2.0 * q as f64 + 1.0) / (2.0 * r as f64) * log_theta;
    let log_l = -log_b1 + shift;

    // leading: (2q+1) ≤ 2r, independent of the data.
    let leading_ok = 2 * q < 2 * r;
    // split: 2r(log β_p − log β_1) − 2q log θ ≥ 0
    let split_ok = data.linear(&[(p - 1, 2 * r_i), (0, -2 * r_i)], -2 * q_i).nonnegative();
    // tail: (2q+2) log θ − 2r(log β_{p+1} − log β_1) > 0
    let tail_ok = data.linear(&[(p, -2 * r_i), (0, 2 * r_i)], 2 * q_i + 2).positive();

    let rr = r as f64;
    Ok(WindowChoice {
        p,
        q,
        window: LogScalar::from_ln(log_l),
        theta,
        checks: WindowChecks {
            leading: (log_l + log_b1).exp(),
            leading_bound: theta.recip(),
            leading_ok,
            split: (log_l + log_bp).exp(),
            split_bound: (-log_theta / (2.0 * rr)).exp(),
            split_ok,
            tail: (log_l + log_bp1).exp(),
            tail_bound: (log_theta / (2.0 * rr)).exp(),
            tail_ok,
        },
    })
}

/// Window choice from explicit norms `‖w^{(1)}‖ ≥ … ≥ ‖w^{(r)}‖`.
pub fn choose_window_for_norms(norms: &[f64], theta: f64) -> Result<WindowChoice, SelectionError> {
    check_theta(theta)?;
    if norms.len() < 2 {
        return Err(SelectionError::TooShort(norms.len()));
    }
    if norms.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(SelectionError::BadNorm);
    }
    let ratio = norms[0] / norms[norms.len() - 1];
    let min = ratio.recip();
    if theta < min * (1.0 - COMPARE_TOL) {
        return Err(SelectionError::ThetaBelowMinimum { theta, min });
    }
    window_from(&LogData::from_values(norms, theta), theta)
}

/// Window choice for a direction selected from a translation tuple;
/// requires `θ ∈ [M_r^{-1}, 1)`.
pub fn choose_window(selection: &DirectionSelection, theta: f64) -> Result<WindowChoice, SelectionError> {
    check_theta(theta)?;
    let log_m = selection.max_separation.ln();
    if theta.ln() < -log_m - COMPARE_TOL * log_m.max(1.0) {
        return Err(SelectionError::ThetaBelowMinimum {
            theta,
            min: (-log_m).exp(),
        });
    }
    let logs: Vec<f64> = selection.images.iter().map(|x| x.ln()).collect();
    window_from(&LogData::from_logs(&logs, theta.ln()), theta)
}
