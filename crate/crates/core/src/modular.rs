//! Horocycle correlations on the modular surface `SL_2(ℤ)\ℍ`.
//!
//! Observables are incomplete Eisenstein series `E_f(z) = Σ f(Im γz)` over
//! `Γ_∞\Γ`, with `f` supported in `[y_lo, y_hi] ⊂ [1, ∞)`. Measures are
//! Wiener densities on the closed horocycle `{x + i : x ∈ [0, 1)}`.
//!
//! Pushing that horocycle by the geodesic flow for time `t` gives the closed
//! horocycle at height `e^{−t}`, parametrized by the same `x`. In the
//! coordinates of the `U_{1,1}` action this is the point `(t/2, t/2)`, so
//! `ρ = e^{t/2}` and two heights `s, t` are at star distance `e^{|s−t|}`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{tuple_stats, ConeDomain, ExpFloor, GeometryError, RootAction, TranslationTuple, TupleStats};
use crate::numeric::{deterministic_sum, integrate_real, integrate_with_breaks, QuadratureError, Tolerance};
use crate::wiener::{unit_phase, FourierSeries, TorusMeasure, WienerError};

/// Nodes per unit of `e^{t}` in [`correlation`]; see [`resolved_nodes`].
pub const NODES_PER_SCALE: f64 = 64.0;
/// Largest node count [`correlation`] will use.
pub const MAX_NODES: usize = 1 << 27;
pub const MIN_NODES: usize = 16;
pub const MAX_TIME: f64 = 30.0;
/// Snap tolerance for boundary points of the fundamental domain.
pub const REDUCE_SNAP: f64 = 1e-12;
const MAX_REDUCE_STEPS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModularError {
    #[error("point must lie in the upper half plane (y = {0})")]
    BadHeight(f64),
    #[error("profile support [{lo}, {hi}] must satisfy 1 <= y_lo < y_hi < inf")]
    ProfileSupport { lo: f64, hi: f64 },
    #[error("profile amplitude must be finite, got {0}")]
    BadAmplitude(f64),
    #[error("at least {MIN_NODES} quadrature nodes are required, got {0}")]
    TooFewNodes(usize),
    #[error("time {0} is outside [0, {MAX_TIME}]: e^(-t) would be below the resolvable range")]
    TimeOutOfRange(f64),
    #[error("time {t} needs {required} nodes to resolve the horocycle, above the budget of {MAX_NODES}; use fixed nodes")]
    NodeBudget { t: f64, required: f64 },
    #[error("need one time per observable ({observables} observables, {times} times)")]
    TimesMismatch { observables: usize, times: usize },
    #[error("at least one observable is required")]
    NoObservables,
    #[error("horocycle density must be a probability density on the circle")]
    BadDensity,
    #[error("window length must be positive and finite, got {0}")]
    BadWindow(f64),
    #[error("integral estimate needs R >= 1 and 0 < c < 1/2 (R = {r}, c = {c})")]
    EstimateRange { r: f64, c: f64 },
    #[error("decay fit needs at least 3 points, got {0}")]
    FitTooFewPoints(usize),
    #[error("decay fit needs positive finite data (index {0})")]
    FitNonPositive(usize),
    #[error("decay fit is degenerate: all Delta values coincide")]
    FitDegenerate,
    #[error("grid must have at least one point per axis")]
    EmptyGrid,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Wiener(#[from] WienerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperHalfPoint {
    pub x: f64,
    pub y: f64,
}

impl UpperHalfPoint {
    pub fn new(x: f64, y: f64) -> Result<Self, ModularError> {
        if y > 0.0 && y.is_finite() && x.is_finite() {
            Ok(UpperHalfPoint { x, y })
        } else {
            Err(ModularError::BadHeight(y))
        }
    }

    fn abs_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    /// `z ↦ −1/z`.
    pub fn invert(self) -> Self {
        let r = self.abs_sq();
        UpperHalfPoint {
            x: -self.x / r,
            y: self.y / r,
        }
    }

    pub fn translate(self, n: f64) -> Self {
        UpperHalfPoint { x: self.x + n, y: self.y }
    }
}

/// Representative in `{|x| ≤ 1/2, |z| ≥ 1}`, normalized to
/// `x ∈ [−1/2, 1/2)` and `x ≤ 0` on the unit circle.
pub fn reduce(z: UpperHalfPoint) -> UpperHalfPoint {
    let mut z = z;
    for _ in 0..MAX_REDUCE_STEPS {
        z.x -= z.x.round();
        if z.abs_sq() < 1.0 - REDUCE_SNAP {
            z = z.invert();
        } else {
            break;
        }
    }
    if z.x >= 0.5 - REDUCE_SNAP {
        z.x -= 1.0;
    }
    if (z.abs_sq() - 1.0).abs() <= REDUCE_SNAP && z.x > 0.0 {
        z.x = -z.x;
    }
    z
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    Indicator,
    /// `exp(4 − 1/(u(1−u)))` in the rescaled variable `u ∈ (0, 1)`; peak value 1.
    SmoothBump,
}

/// A height profile `f` supported in `[y_lo, y_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpProfile {
    pub y_lo: f64,
    pub y_hi: f64,
    pub shape: ProfileShape,
    #[serde(default = "unit_amplitude")]
    pub amplitude: f64,
}

fn unit_amplitude() -> f64 {
    1.0
}

impl BumpProfile {
    pub fn new(y_lo: f64, y_hi: f64, shape: ProfileShape, amplitude: f64) -> Result<Self, ModularError> {
        let p = BumpProfile {
            y_lo,
            y_hi,
            shape,
            amplitude,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn indicator(y_lo: f64, y_hi: f64) -> Result<Self, ModularError> {
        Self::new(y_lo, y_hi, ProfileShape::Indicator, 1.0)
    }

    pub fn smooth(y_lo: f64, y_hi: f64) -> Result<Self, ModularError> {
        Self::new(y_lo, y_hi, ProfileShape::SmoothBump, 1.0)
    }

    pub fn validate(&self) -> Result<(), ModularError> {
        if !(self.y_lo >= 1.0 && self.y_hi > self.y_lo && self.y_hi.is_finite()) {
            return Err(ModularError::ProfileSupport {
                lo: self.y_lo,
                hi: self.y_hi,
            });
        }
        if !self.amplitude.is_finite() {
            return Err(ModularError::BadAmplitude(self.amplitude));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        BumpProfile {
            amplitude: self.amplitude * factor,
            ..*self
        }
    }

    pub fn eval(&self, y: f64) -> f64 {
        if !(y >= self.y_lo && y <= self.y_hi) {
            return 0.0;
        }
        match self.shape {
            ProfileShape::Indicator => self.amplitude,
            ProfileShape::SmoothBump => {
                let u = (y - self.y_lo) / (self.y_hi - self.y_lo);
                if u <= 0.0 || u >= 1.0 {
                    0.0
                } else {
                    self.amplitude * (4.0 - 1.0 / (u * (1.0 - u))).exp()
                }
            }
        }
    }

    /// Points where the profile fails to be smooth.
    fn breakpoints(&self) -> [f64; 2] {
        [self.y_lo, self.y_hi]
    }

    /// Largest `|(y d/dy)^j f|` for `j ≤ degree`, from iterated fourth-order
    /// central differences in `s = log y` on `points` nodes.
    ///
    /// Only meaningful for smooth profiles; indicators return the sup norm
    /// for `degree = 0` and `+inf` otherwise.
    pub fn derivative_norm(&self, degree: u32, points: usize) -> f64 {
        let points = points.max(64);
        if self.shape == ProfileShape::Indicator {
            return if degree == 0 { self.amplitude.abs() } else { f64::INFINITY };
        }
        let (s0, s1) = (self.y_lo.ln(), self.y_hi.ln());
        let h = (s1 - s0) / (points - 1) as f64;
        let pad = 2 * degree as usize;
        let mut values: Vec<f64> = (0..points + 2 * pad)
            .map(|i| self.eval((s0 + (i as f64 - pad as f64) * h).exp()))
            .collect();
        let mut best = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for _ in 0..degree {
            let next: Vec<f64> = (2..values.len() - 2)
                .map(|i| (values[i - 2] - 8.0 * values[i - 1] + 8.0 * values[i + 1] - values[i + 2]) / (12.0 * h))
                .collect();
            values = next;
            best = best.max(values.iter().map(|v| v.abs()).fold(0.0, f64::max));
        }
        best
    }
}

/// `E_f`, the `Γ`-automorphization of a height profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EisensteinObservable {
    pub profile: BumpProfile,
}

impl EisensteinObservable {
    pub fn new(profile: BumpProfile) -> Result<Self, ModularError> {
        profile.validate()?;
        Ok(EisensteinObservable { profile })
    }

    /// Largest `c` with a term `y/|cz+d|² ≥ y_lo` at height `y`.
    pub fn max_c(&self, y: f64) -> u64 {
        (1.0 / (y * self.profile.y_lo)).sqrt().floor() as u64
    }
}

/// `Σ f(y/|cz+d|²)` over coprime `(c, d)` modulo `±1`.
///
/// Only `c ≤ 1/√(y y_lo)` and `|cx + d|² ≤ y/y_lo − c²y²` can reach the
/// support, so the sum is finite.
pub fn eval_eisenstein(obs: &EisensteinObservable, z: UpperHalfPoint) -> f64 {
    let f = &obs.profile;
    let (x, y) = (z.x, z.y);
    let mut total = f.eval(y);
    let reach = y / f.y_lo;
    for c in 1..=obs.max_c(y) {
        let cf = c as f64;
        let room = reach - cf * cf * y * y;
        if room < 0.0 {
            break;
        }
        let half = room.sqrt();
        let centre = -cf * x;
        let lo = (centre - half).ceil() as i64;
        let hi = (centre + half).floor() as i64;
        for d in lo..=hi {
            if (c as i64).gcd(&d) != 1 {
                continue;
            }
            let u = cf * x + d as f64;
            total += f.eval(y / (u * u + cf * cf * y * y));
        }
    }
    total
}

/// Observables accepted by the correlation routines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModularObservable {
    Constant { value: f64 },
    Eisenstein { profile: BumpProfile },
}

impl ModularObservable {
    pub fn eisenstein(profile: BumpProfile) -> Result<Self, ModularError> {
        profile.validate()?;
        Ok(ModularObservable::Eisenstein { profile })
    }

    pub fn validate(&self) -> Result<(), ModularError> {
        match self {
            ModularObservable::Constant { value } if !value.is_finite() => Err(ModularError::BadAmplitude(*value)),
            ModularObservable::Constant { .. } => Ok(()),
            ModularObservable::Eisenstein { profile } => profile.validate(),
        }
    }

    /// Value at an arbitrary point (no reduction needed).
    pub fn eval(&self, z: UpperHalfPoint) -> f64 {
        match self {
            ModularObservable::Constant { value } => *value,
            ModularObservable::Eisenstein { profile } => eval_eisenstein(&EisensteinObservable { profile: *profile }, z),
        }
    }

    /// Integral against the normalized measure on the modular surface.
    pub fn mean(&self) -> Result<f64, ModularError> {
        match self {
            ModularObservable::Constant { value } => Ok(*value),
            ModularObservable::Eisenstein { profile } => mu_integral(profile),
        }
    }
}

fn quad_tol() -> Tolerance {
    Tolerance {
        abs: 1e-13,
        rel: 1e-11,
        max_subdivisions: 4000,
    }
}

/// `(3/π) ∫ f(y) y^{−2} dy`.
pub fn mu_integral(profile: &BumpProfile) -> Result<f64, ModularError> {
    profile.validate()?;
    let [lo, hi] = profile.breakpoints();
    let (v, _) = integrate_real(|y| profile.eval(y) / (y * y), &[lo, hi], quad_tol())?;
    Ok(3.0 / PI * v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FundamentalDomain {
    /// `|x| ≤ 1/2`, `|z| ≥ 1`.
    Standard,
    /// The image of [`FundamentalDomain::Standard`] under `z ↦ −1/z`:
    /// `|z| ≤ 1`, `|z ± 1| ≥ 1`.
    Inverted,
}

/// `(3/π) ∫∫_F E_f(z) dx dy / y²` by nested adaptive quadrature, evaluating
/// `E_f` by direct enumeration (no reduction).
pub fn mu_integral_2d(profile: &BumpProfile, domain: FundamentalDomain) -> Result<f64, ModularError> {
    let obs = EisensteinObservable::new(*profile)?;
    let inner_tol = Tolerance {
        abs: 1e-10,
        rel: 1e-8,
        max_subdivisions: 4000,
    };
    let outer_tol = Tolerance {
        abs: 1e-8,
        rel: 1e-6,
        max_subdivisions: 2000,
    };
    let inner = |x: f64| -> Result<f64, ModularError> {
        let g = |y: f64| eval_eisenstein(&obs, UpperHalfPoint { x, y }) / (y * y);
        let (lo, hi) = match domain {
            FundamentalDomain::Standard => ((1.0 - x * x).sqrt(), profile.y_hi),
            FundamentalDomain::Inverted => {
                let a = x.abs();
                ((2.0 * a - a * a).sqrt(), (1.0 - x * x).sqrt())
            }
        };
        if hi <= lo {
            return Ok(0.0);
        }
        let mut points = vec![lo];
        points.extend([profile.y_lo].into_iter().filter(|&p| p > lo && p < hi));
        points.push(hi);
        Ok(integrate_real(g, &points, inner_tol)?.0)
    };
    // The outer integrand is even in x.
    let failure = std::cell::RefCell::new(None);
    let outer = |x: f64| match inner(x) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let (v, _) = integrate_real(outer, &[0.0, 0.5], outer_tol)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(2.0 * 3.0 / PI * v)
}

/// Exact horocycle average `∫_0^1 e(kx) E_f(x + iy) dx`.
///
/// Unfolding over `d mod c` turns the sum into Ramanujan sums times
/// one-dimensional Fourier integrals, evaluated by adaptive quadrature.
pub fn horocycle_fourier_coefficient(profile: &BumpProfile, y: f64, k: i64) -> Result<f64, ModularError> {
    profile.validate()?;
    if !(y > 0.0) {
        return Err(ModularError::BadHeight(y));
    }
    let obs = EisensteinObservable { profile: *profile };
    let mut total = if k == 0 { profile.eval(y) } else { 0.0 };
    for c in 1..=obs.max_c(y) {
        let cf = c as f64;
        let ramanujan = ramanujan_sum(c, k.unsigned_abs());
        if ramanujan == 0 {
            continue;
        }
        // y/(c²(u² + y²)) ∈ [y_lo, y_hi]  ⇔  u² ∈ [y/(c² y_hi) − y², y/(c² y_lo) − y²].
        let outer_sq = y / (cf * cf * profile.y_lo) - y * y;
        if outer_sq <= 0.0 {
            continue;
        }
        let inner_sq = (y / (cf * cf * profile.y_hi) - y * y).max(0.0);
        let (u0, u1) = (inner_sq.sqrt(), outer_sq.sqrt());
        let g = |u: f64| profile.eval(y / (cf * cf * (u * u + y * y))) * (TAU * k as f64 * u).cos();
        // Even integrand: twice the half line.
        let (v, _) = integrate_real(g, &[u0, u1], quad_tol())?;
        total += ramanujan as f64 * 2.0 * v;
    }
    Ok(total)
}

/// `Σ_{d mod q, (d,q)=1} e(dk/q) = Σ_{m | (q,k)} μ(q/m) m`.
pub fn ramanujan_sum(q: u64, k: u64) -> i64 {
    let g = if k == 0 { q } else { q.gcd(&k) };
    let mut total = 0i64;
    let mut m = 1;
    while m * m <= g {
        if g % m == 0 {
            total += mobius(q / m) * m as i64;
            let other = g / m;
            if other != m {
                total += mobius(q / other) * other as i64;
            }
        }
        m += 1;
    }
    total
}

fn mobius(mut n: u64) -> i64 {
    let mut sign = 1;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            n /= p;
            if n.is_multiple_of(p) {
                return 0;
            }
            sign = -sign;
        }
        p += 1;
    }
    if n > 1 {
        sign = -sign;
    }
    sign
}

/// A Wiener probability density on the closed horocycle at height 1.
#[derive(Clone, Debug, PartialEq)]
pub struct HorocycleMeasure {
    measure: TorusMeasure,
}

impl HorocycleMeasure {
    pub fn haar() -> Self {
        HorocycleMeasure {
            measure: TorusMeasure::haar(1).expect("circle"),
        }
    }

    pub fn new(density: FourierSeries) -> Result<Self, ModularError> {
        if density.dim() != 1 {
            return Err(ModularError::BadDensity);
        }
        let measure = TorusMeasure::probability(density).map_err(|_| ModularError::BadDensity)?;
        Ok(HorocycleMeasure { measure })
    }

    pub fn measure(&self) -> &TorusMeasure {
        &self.measure
    }

    pub fn density(&self, x: f64) -> Complex64 {
        self.measure.density().eval(&[x])
    }

    pub fn wiener_norm(&self) -> f64 {
        self.measure.wiener_norm()
    }
}

/// Smallest power of two at least `NODES_PER_SCALE · e^{t}`.
///
/// At height `y = e^{−t}` the integrand varies on scale `y`, and the
/// periodic midpoint rule converges spectrally once the spacing is a
/// fraction of that.
pub fn resolved_nodes(t_max: f64) -> Result<usize, ModularError> {
    let required = NODES_PER_SCALE * t_max.exp();
    if required > MAX_NODES as f64 {
        return Err(ModularError::NodeBudget { t: t_max, required });
    }
    Ok((required.ceil() as usize).next_power_of_two())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationValue {
    pub value: Complex64,
    pub nodes: usize,
}

fn validate_inputs(observables: &[ModularObservable], times: &[f64], nodes: usize) -> Result<f64, ModularError> {
    if observables.is_empty() {
        return Err(ModularError::NoObservables);
    }
    if observables.len() != times.len() {
        return Err(ModularError::TimesMismatch {
            observables: observables.len(),
            times: times.len(),
        });
    }
    if nodes < MIN_NODES {
        return Err(ModularError::TooFewNodes(nodes));
    }
    for obs in observables {
        obs.validate()?;
    }
    let mut t_max = 0.0f64;
    for &t in times {
        if !(0.0..=MAX_TIME).contains(&t) {
            return Err(ModularError::TimeOutOfRange(t));
        }
        t_max = t_max.max(t);
    }
    Ok(t_max)
}

/// `∫_0^1 e(ξx) ρ_σ(x) ∏ φ_i(x + i e^{−t_i}) dx` by the midpoint rule on
/// exactly `nodes` points.
pub fn twisted_correlation_fixed(
    sigma: &HorocycleMeasure,
    xi: i64,
    observables: &[ModularObservable],
    times: &[f64],
    nodes: usize,
) -> Result<CorrelationValue, ModularError> {
    validate_inputs(observables, times, nodes)?;
    let heights: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
    let h = 1.0 / nodes as f64;
    let sum = deterministic_sum(nodes, |j| {
        let x = (j as f64 + 0.5) * h;
        let mut prod = 1.0;
        for (obs, &y) in observables.iter().zip(&heights) {
            prod *= match obs {
                ModularObservable::Constant { value } => *value,
                ModularObservable::Eisenstein { .. } => obs.eval(reduce(UpperHalfPoint { x, y })),
            };
            if prod == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
        }
        sigma.density(x) * unit_phase(xi as f64 * x) * prod
    });
    Ok(CorrelationValue {
        value: sum * h,
        nodes,
    })
}

/// Like [`twisted_correlation_fixed`], using at least `nodes` points and
/// never fewer than [`resolved_nodes`] for the deepest height.
pub fn twisted_correlation(
    sigma: &HorocycleMeasure,
    xi: i64,
    observables: &[ModularObservable],
    times: &[f64],
    nodes: usize,
) -> Result<CorrelationValue, ModularError> {
    let t_max = validate_inputs(observables, times, nodes)?;
    let n = nodes.max(resolved_nodes(t_max)?);
    twisted_correlation_fixed(sigma, xi, observables, times, n)
}

/// `σ(φ_1∘g_{t_1} ⋯ φ_r∘g_{t_r})`.
pub fn correlation(
    sigma: &HorocycleMeasure,
    observables: &[ModularObservable],
    times: &[f64],
    nodes: usize,
) -> Result<CorrelationValue, ModularError> {
    twisted_correlation(sigma, 0, observables, times, nodes)
}

pub fn correlation_fixed(
    sigma: &HorocycleMeasure,
    observables: &[ModularObservable],
    times: &[f64],
    nodes: usize,
) -> Result<CorrelationValue, ModularError> {
    twisted_correlation_fixed(sigma, 0, observables, times, nodes)
}

/// Point of the `U_{1,1}` cone matching geodesic time `t`.
pub fn cone_coordinates(t: f64) -> Vec<f64> {
    vec![t / 2.0, t / 2.0]
}

/// `Δ_r` and friends for a tuple of geodesic times.
pub fn horocycle_stats(times: &[f64]) -> Result<TupleStats, ModularError> {
    let action = RootAction::horospherical(1, 1);
    let tuple = TranslationTuple::new(
        times.iter().map(|&t| cone_coordinates(t)).collect(),
        ConeDomain::Horospherical { m: 1, n: 1 },
    )?;
    Ok(tuple_stats(&action, &tuple, &ExpFloor)?)
}

/// A point of `Γ\G` as `n(x) a(y) k(θ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Frame {
    /// `g u(v) · i = x + y k(θ)·(v + i)`.
    pub fn flow(&self, v: f64) -> UpperHalfPoint {
        let (s, c) = self.theta.sin_cos();
        let w = Complex64::new(v, 1.0);
        let rotated = (c * w + s) / (-s * w + c);
        UpperHalfPoint {
            x: self.x + self.y * rotated.re,
            y: self.y * rotated.im,
        }
    }
}

/// Parameters of `φ_L = (1/L) ∫_0^L e(ξ s w)(φ(g u(s w e^{t})) − μ(φ)) ds`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub xi: i64,
    pub w_scale: f64,
    pub t: f64,
    pub length: f64,
}

impl Window {
    /// `R = L ‖Ad(t) w‖`.
    pub fn reach(&self) -> f64 {
        self.length * self.w_scale.abs() * self.t.exp()
    }

    fn validate(&self) -> Result<(), ModularError> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(ModularError::BadWindow(self.length));
        }
        if !(self.w_scale.is_finite() && self.t.is_finite()) {
            return Err(ModularError::BadWindow(self.w_scale));
        }
        Ok(())
    }
}

fn window_average_frame(obs: &ModularObservable, mean: f64, window: &Window, frame: Frame) -> Result<Complex64, ModularError> {
    let speed = window.w_scale * window.t.exp();
    let g = |s: f64| {
        let centred = obs.eval(reduce(frame.flow(s * speed))) - mean;
        unit_phase(window.xi as f64 * s * window.w_scale) * centred
    };
    // Split so each piece covers about one unit of flow.
    let pieces = window.reach().ceil().clamp(1.0, 4096.0) as usize;
    let points: Vec<f64> = (0..=pieces).map(|k| window.length * k as f64 / pieces as f64).collect();
    let tol = Tolerance {
        abs: 1e-10,
        rel: 1e-8,
        max_subdivisions: 20_000,
    };
    Ok(integrate_with_breaks(g, &points, tol)?.value / window.length)
}

/// `φ_L` at the frame over `z` pointing straight up.
pub fn windowed_average(obs: &ModularObservable, window: &Window, z: UpperHalfPoint) -> Result<Complex64, ModularError> {
    windowed_average_frame(obs, window, Frame { x: z.x, y: z.y, theta: 0.0 })
}

pub fn windowed_average_frame(obs: &ModularObservable, window: &Window, frame: Frame) -> Result<Complex64, ModularError> {
    obs.validate()?;
    window.validate()?;
    window_average_frame(obs, obs.mean()?, window, frame)
}

/// Grid sizes for [`windowed_l2`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub x: usize,
    pub u: usize,
    pub theta: usize,
}

/// `μ(|φ_L|²)` over `Γ\G` by the midpoint rule in `(x, u = 1/y, θ)` on the
/// standard domain, with measure `(3/π) dx du dθ/π`.
pub fn windowed_l2(obs: &ModularObservable, window: &Window, grid: FrameGrid) -> Result<f64, ModularError> {
    obs.validate()?;
    window.validate()?;
    if grid.x == 0 || grid.u == 0 || grid.theta == 0 {
        return Err(ModularError::EmptyGrid);
    }
    let mean = obs.mean()?;
    let total = grid.x * grid.u * grid.theta;
    let failure = std::sync::Mutex::new(None);
    let sum = deterministic_sum(total, |idx| {
        let ix = idx % grid.x;
        let iu = (idx / grid.x) % grid.u;
        let it = idx / (grid.x * grid.u);
        let x = -0.5 + (ix as f64 + 0.5) / grid.x as f64;
        let u_max = 1.0 / (1.0 - x * x).sqrt();
        let u = (iu as f64 + 0.5) / grid.u as f64 * u_max;
        let theta = (it as f64 + 0.5) / grid.theta as f64 * PI;
        match window_average_frame(obs, mean, window, Frame { x, y: 1.0 / u, theta }) {
            Ok(v) => Complex64::new(v.norm_sqr() * u_max, 0.0),
            Err(e) => {
                failure.lock().expect("poisoned").get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        }
    });
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }
    // Cell volume (1/nx)(u_max/nu)(π/nθ); the density (3/π)(1/π).
    let cell = 1.0 / (grid.x * grid.u * grid.theta) as f64;
    Ok(sum.re * cell * 3.0 / PI)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegralEstimate {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

fn check_estimate_range(r: f64, c: f64) -> Result<(), ModularError> {
    if r >= 1.0 && r.is_finite() && c > 0.0 && c < 0.5 {
        Ok(())
    } else {
        Err(ModularError::EstimateRange { r, c })
    }
}

/// `(1/R²) ∫_0^R ∫_0^R max(1, |u − v|)^{−c} du dv` against `7 R^{−c}/(1 − c)`.
pub fn check_integral_estimate(r: f64, c: f64) -> Result<IntegralEstimate, ModularError> {
    check_estimate_range(r, c)?;
    // 2 ∫_0^R (R − s) max(1, s)^{−c} ds, split at s = 1.
    let near = 2.0 * r - 1.0;
    let far = 2.0 * (r * (r.powf(1.0 - c) - 1.0) / (1.0 - c) - (r.powf(2.0 - c) - 1.0) / (2.0 - c));
    let lhs = (near + far) / (r * r);
    let rhs = 7.0 * r.powf(-c) / (1.0 - c);
    Ok(IntegralEstimate { lhs, rhs, pass: lhs <= rhs })
}

/// The left side of [`check_integral_estimate`] by nested adaptive quadrature.
pub fn integral_estimate_quadrature(r: f64, c: f64) -> Result<f64, ModularError> {
    check_estimate_range(r, c)?;
    let tol = Tolerance {
        abs: 1e-13,
        rel: 1e-11,
        max_subdivisions: 2000,
    };
    let inner = |u: f64| -> Result<f64, QuadratureError> {
        let mut points = vec![0.0];
        points.extend([u - 1.0, u, u + 1.0].into_iter().filter(|&p| p > 0.0 && p < r));
        points.push(r);
        Ok(integrate_real(|v| (u - v).abs().max(1.0).powf(-c), &points, tol)?.0)
    };
    let failure = std::cell::RefCell::new(None);
    let outer = |u: f64| match inner(u) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let mut points = vec![0.0];
    points.extend([1.0, r - 1.0].into_iter().filter(|&p| p > 0.0 && p < r));
    points.sort_by(f64::total_cmp);
    points.push(r);
    let (v, _) = integrate_real(outer, &points, tol)?;
    if let Some(e) = failure.into_inner() {
        return Err(e.into());
    }
    Ok(v / (r * r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS of the residuals of `log error`.
    pub residual: f64,
}

/// Least-squares fit of `log error = log prefactor − exponent · log Δ`.
pub fn fit_decay(deltas: &[f64], errors: &[f64]) -> Result<DecayFit, ModularError> {
    let n = deltas.len().min(errors.len());
    if n < 3 || deltas.len() != errors.len() {
        return Err(ModularError::FitTooFewPoints(n));
    }
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for (i, (&d, &e)) in deltas.iter().zip(errors).enumerate() {
        if !(d > 0.0 && e > 0.0 && d.is_finite() && e.is_finite()) {
            return Err(ModularError::FitNonPositive(i));
        }
        xs.push(d.ln());
        ys.push(e.ln());
    }
    fit_log_decay(&xs, &ys)
}

/// [`fit_decay`] on data already in logarithms.
pub fn fit_log_decay(log_deltas: &[f64], log_errors: &[f64]) -> Result<DecayFit, ModularError> {
    let n = log_deltas.len();
    if n < 3 || log_errors.len() != n {
        return Err(ModularError::FitTooFewPoints(n.min(log_errors.len())));
    }
    let nf = n as f64;
    let mx = log_deltas.iter().sum::<f64>() / nf;
    let my = log_errors.iter().sum::<f64>() / nf;
    let sxx: f64 = log_deltas.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 1e-24 * (1.0 + mx * mx) {
        return Err(ModularError::FitDegenerate);
    }
    let sxy: f64 = log_deltas.iter().zip(log_errors).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = log_deltas
        .iter()
        .zip(log_errors)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(DecayFit {
        exponent: -slope,
        prefactor: intercept.exp(),
        residual: (rss / nf).sqrt(),
    })
}
