//! Fourier data on the torus `ℝ^k / ℤ^k`.
//!
//! Characters are integer vectors `χ` with `e(χ·x) = exp(2πi χ·x)`.
//! A [`FourierSeries`] stores coefficients `c(χ)` of `Σ c(χ) e(χ·x)`.
//! For a [`TorusMeasure`] this is the density of the measure with respect to
//! Haar measure, so integrating `e(χ·x)` against it returns `c(−χ)`.
//!
//! Twisting by a character, `ν_ξ(η) = ν(e(ξ·x) η)`, is computed exactly
//! from coefficients. Grid quadrature is provided as an independent check.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{deterministic_sum, pairwise_sum};

pub type Character = Vec<i64>;

/// Tolerance for the probability and realness checks.
pub const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WienerError {
    #[error("torus dimension must be positive")]
    ZeroDimension,
    #[error("character {chi:?} does not have dimension {dim}")]
    CharacterDimension { chi: Character, dim: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("coefficient at {chi:?} is not finite")]
    NonFinite { chi: Character },
    #[error("tail bound must be finite and non-negative, got {0}")]
    BadTail(f64),
    #[error("probability measure needs coefficient 1 at the trivial character, found {0}")]
    NotProbability(Complex64),
    #[error("grid needs at least {min} points per axis, got {got}")]
    GridTooCoarse { min: usize, got: usize },
    #[error("invalid coefficient file: {0}")]
    Json(String),
}

/// Finitely supported coefficients, plus a declared bound on the `ℓ¹` mass
/// of anything that was truncated away.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierSeries {
    dim: usize,
    coeffs: BTreeMap<Character, Complex64>,
    tail_bound: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesJson {
    dim: usize,
    coeffs: Vec<CoeffJson>,
    #[serde(default, skip_serializing_if = "is_zero")]
    tail_bound: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoeffJson {
    chi: Character,
    re: f64,
    #[serde(default)]
    im: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// `e(t) = exp(2πi t)` with the argument reduced mod 1 first.
pub fn unit_phase(t: f64) -> Complex64 {
    let frac = t - t.round();
    Complex64::cis(TAU * frac)
}

fn pairing(chi: &[i64], x: &[f64]) -> f64 {
    chi.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum()
}

fn negate(chi: &[i64]) -> Character {
    chi.iter().map(|k| -k).collect()
}

impl FourierSeries {
    pub fn zero(dim: usize) -> Result<Self, WienerError> {
        Self::new(dim, Vec::<(Character, Complex64)>::new())
    }

    /// Repeated characters are summed; exact zeros are dropped.
    pub fn new<I>(dim: usize, coeffs: I) -> Result<Self, WienerError>
    where
        I: IntoIterator<Item = (Character, Complex64)>,
    {
        Self::with_tail(dim, coeffs, 0.0)
    }

    pub fn with_tail<I>(dim: usize, coeffs: I, tail_bound: f64) -> Result<Self, WienerError>
    where
        I: IntoIterator<Item = (Character, Complex64)>,
    {
        if dim == 0 {
            return Err(WienerError::ZeroDimension);
        }
        if !(tail_bound >= 0.0 && tail_bound.is_finite()) {
            return Err(WienerError::BadTail(tail_bound));
        }
        let mut map = BTreeMap::new();
        for (chi, c) in coeffs {
            if chi.len() != dim {
                return Err(WienerError::CharacterDimension { chi, dim });
            }
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(WienerError::NonFinite { chi });
            }
            *map.entry(chi).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        map.retain(|_, c| *c != Complex64::new(0.0, 0.0));
        Ok(FourierSeries {
            dim,
            coeffs: map,
            tail_bound,
        })
    }

    /// Keeps the characters with `max |χ_i| ≤ radius` from `coeff` and
    /// records `tail_bound` for the rest.
    pub fn truncated<F>(dim: usize, radius: i64, coeff: F, tail_bound: f64) -> Result<Self, WienerError>
    where
        F: Fn(&[i64]) -> Complex64,
    {
        let side = (2 * radius + 1) as usize;
        let total = side.pow(dim as u32);
        let entries = (0..total).map(|mut idx| {
            let chi: Character = (0..dim)
                .map(|_| {
                    let k = (idx % side) as i64 - radius;
                    idx /= side;
                    k
                })
                .collect();
            let c = coeff(&chi);
            (chi, c)
        });
        Self::with_tail(dim, entries.collect::<Vec<_>>(), tail_bound)
    }

    /// Circle series from `(frequency, coefficient)` pairs.
    pub fn circle<I>(coeffs: I) -> Result<Self, WienerError>
    where
        I: IntoIterator<Item = (i64, Complex64)>,
    {
        Self::new(1, coeffs.into_iter().map(|(k, c)| (vec![k], c)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn coefficients(&self) -> &BTreeMap<Character, Complex64> {
        &self.coeffs
    }

    pub fn coefficient(&self, chi: &[i64]) -> Complex64 {
        self.coeffs.get(chi).copied().unwrap_or_default()
    }

    pub fn support_len(&self) -> usize {
        self.coeffs.len()
    }

    /// Largest `|χ_i|` over the support.
    pub fn degree(&self) -> i64 {
        self.coeffs.keys().flat_map(|chi| chi.iter().map(|k| k.abs())).max().unwrap_or(0)
    }

    /// `Σ |c(χ)|` plus the declared tail bound.
    pub fn wiener_norm(&self) -> f64 {
        let mags: Vec<f64> = self.coeffs.values().map(|c| c.norm()).collect();
        crate::numeric::pairwise_sum_real(&mags) + self.tail_bound
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        assert_eq!(x.len(), self.dim, "point dimension");
        let terms: Vec<Complex64> = self.coeffs.iter().map(|(chi, c)| c * unit_phase(pairing(chi, x))).collect();
        pairwise_sum(&terms)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let coeffs = self.coeffs.iter().map(|(k, c)| (k.clone(), c * s));
        Self::with_tail(self.dim, coeffs.collect::<Vec<_>>(), self.tail_bound * s.norm()).expect("scaling preserves validity")
    }

    pub fn add(&self, other: &Self) -> Result<Self, WienerError> {
        self.same_dim(other)?;
        let coeffs = self.coeffs.iter().chain(&other.coeffs).map(|(k, c)| (k.clone(), *c));
        Self::with_tail(self.dim, coeffs.collect::<Vec<_>>(), self.tail_bound + other.tail_bound)
    }

    /// Coefficients of `x ↦ f(x + w)`: `c(χ) e(χ·w)`.
    pub fn translate(&self, w: &[f64]) -> Result<Self, WienerError> {
        if w.len() != self.dim {
            return Err(WienerError::DimensionMismatch(w.len(), self.dim));
        }
        let coeffs = self.coeffs.iter().map(|(k, c)| (k.clone(), c * unit_phase(pairing(k, w))));
        Self::with_tail(self.dim, coeffs.collect::<Vec<_>>(), self.tail_bound)
    }

    /// Coefficients of `e(ξ·x) f(x)`.
    pub fn shift(&self, xi: &[i64]) -> Result<Self, WienerError> {
        self.check_character(xi)?;
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, c)| (k.iter().zip(xi).map(|(a, b)| a + b).collect::<Character>(), *c));
        Self::with_tail(self.dim, coeffs.collect::<Vec<_>>(), self.tail_bound)
    }

    /// Pointwise product: coefficient convolution.
    pub fn mul(&self, other: &Self) -> Result<Self, WienerError> {
        self.same_dim(other)?;
        let mut out = Vec::with_capacity(self.coeffs.len() * other.coeffs.len());
        for (a, ca) in &self.coeffs {
            for (b, cb) in &other.coeffs {
                out.push((a.iter().zip(b).map(|(x, y)| x + y).collect::<Character>(), ca * cb));
            }
        }
        // (f + tf)(g + tg) - fg has ℓ¹ mass at most ‖f‖ tg + tf ‖g‖ + tf tg.
        let (nf, ng) = (self.wiener_norm() - self.tail_bound, other.wiener_norm() - other.tail_bound);
        let tail = nf * other.tail_bound + self.tail_bound * ng + self.tail_bound * other.tail_bound;
        Self::with_tail(self.dim, out, tail)
    }

    /// Convolution on the torus: coefficient product.
    pub fn convolve(&self, other: &Self) -> Result<Self, WienerError> {
        self.same_dim(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .filter_map(|(k, c)| other.coeffs.get(k).map(|d| (k.clone(), c * d)));
        let sup_f = self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max);
        let sup_g = other.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max);
        let tail = sup_f * other.tail_bound + self.tail_bound * sup_g + self.tail_bound * other.tail_bound;
        Self::with_tail(self.dim, coeffs.collect::<Vec<_>>(), tail)
    }

    pub fn conj(&self) -> Self {
        let coeffs = self.coeffs.iter().map(|(k, c)| (negate(k), c.conj()));
        Self::with_tail(self.dim, coeffs.collect::<Vec<_>>(), self.tail_bound).expect("conjugation preserves validity")
    }

    /// Whether `c(−χ) = conj c(χ)` for every character, to `tol`.
    pub fn is_real(&self, tol: f64) -> bool {
        self.coeffs
            .iter()
            .all(|(k, c)| (self.coefficient(&negate(k)) - c.conj()).norm() <= tol)
    }

    /// Values on the uniform grid with `per_axis` points per axis,
    /// flattened with the first axis varying fastest.
    pub fn grid_values(&self, per_axis: usize) -> Vec<Complex64> {
        let total = per_axis.pow(self.dim as u32);
        (0..total)
            .map(|idx| self.eval(&grid_point(idx, per_axis, self.dim)))
            .collect()
    }

    /// Largest `|f|` over the uniform grid.
    pub fn sup_on_grid(&self, per_axis: usize) -> f64 {
        self.grid_values(per_axis).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn from_json(text: &str) -> Result<Self, WienerError> {
        let raw: SeriesJson = serde_json::from_str(text).map_err(|e| WienerError::Json(e.to_string()))?;
        Self::with_tail(
            raw.dim,
            raw.coeffs.into_iter().map(|c| (c.chi, Complex64::new(c.re, c.im))).collect::<Vec<_>>(),
            raw.tail_bound,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("series serializes")
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(SeriesJson {
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .map(|(chi, c)| CoeffJson {
                    chi: chi.clone(),
                    re: c.re,
                    im: c.im,
                })
                .collect(),
            tail_bound: self.tail_bound,
        })
        .expect("series serializes")
    }

    fn same_dim(&self, other: &Self) -> Result<(), WienerError> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(WienerError::DimensionMismatch(self.dim, other.dim))
        }
    }

    fn check_character(&self, chi: &[i64]) -> Result<(), WienerError> {
        if chi.len() == self.dim {
            Ok(())
        } else {
            Err(WienerError::CharacterDimension {
                chi: chi.to_vec(),
                dim: self.dim,
            })
        }
    }
}

fn grid_point(mut idx: usize, per_axis: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let j = idx % per_axis;
            idx /= per_axis;
            j as f64 / per_axis as f64
        })
        .collect()
}

/// A measure on the torus given by its density against Haar measure.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusMeasure {
    density: FourierSeries,
    probability: bool,
}

impl TorusMeasure {
    pub fn haar(dim: usize) -> Result<Self, WienerError> {
        let density = FourierSeries::new(dim, [(vec![0; dim], Complex64::new(1.0, 0.0))])?;
        Ok(TorusMeasure {
            density,
            probability: true,
        })
    }

    /// Any density; the probability flag is set when `c(0) = 1`.
    pub fn new(density: FourierSeries) -> Self {
        let c0 = density.coefficient(&vec![0; density.dim()]);
        let probability = (c0 - Complex64::new(1.0, 0.0)).norm() <= STRUCTURE_TOL;
        TorusMeasure { density, probability }
    }

    /// Rejects densities whose trivial coefficient is not 1.
    pub fn probability(density: FourierSeries) -> Result<Self, WienerError> {
        let measure = Self::new(density);
        if measure.probability {
            Ok(measure)
        } else {
            Err(WienerError::NotProbability(measure.density.coefficient(&vec![0; measure.dim()])))
        }
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn density(&self) -> &FourierSeries {
        &self.density
    }

    pub fn is_probability(&self) -> bool {
        self.probability
    }

    pub fn is_real(&self) -> bool {
        self.density.is_real(STRUCTURE_TOL)
    }

    pub fn is_haar(&self) -> bool {
        self.probability && self.density.support_len() == 1 && self.density.tail_bound() == 0.0
    }

    /// Fourier coefficient of the density at `χ`.
    pub fn coefficient(&self, chi: &[i64]) -> Complex64 {
        self.density.coefficient(chi)
    }

    pub fn wiener_norm(&self) -> f64 {
        self.density.wiener_norm()
    }

    /// `∫ η dσ = Σ_k η̂(k) c(−k)`.
    pub fn integrate(&self, eta: &TorusObservable) -> Result<Complex64, WienerError> {
        self.twist(&vec![0; self.dim()]).apply(eta)
    }

    pub fn twist(&self, xi: &[i64]) -> TwistedFunctional<'_> {
        TwistedFunctional {
            measure: self,
            xi: xi.to_vec(),
        }
    }

    /// Measure convolution `σ * τ`.
    pub fn convolve(&self, other: &TorusMeasure) -> Result<TorusMeasure, WienerError> {
        Ok(TorusMeasure::new(self.density.convolve(&other.density)?))
    }

    pub fn from_json(text: &str) -> Result<Self, WienerError> {
        Ok(Self::new(FourierSeries::from_json(text)?))
    }

    pub fn to_json(&self) -> String {
        self.density.to_json()
    }
}

/// A function on the torus given by its Fourier coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusObservable {
    series: FourierSeries,
}

impl TorusObservable {
    pub fn new(series: FourierSeries) -> Self {
        TorusObservable { series }
    }

    pub fn constant(dim: usize, value: Complex64) -> Result<Self, WienerError> {
        Ok(Self::new(FourierSeries::new(dim, [(vec![0; dim], value)])?))
    }

    /// `x ↦ e(χ·x)`.
    pub fn character(chi: Character) -> Result<Self, WienerError> {
        let dim = chi.len();
        Ok(Self::new(FourierSeries::new(dim, [(chi, Complex64::new(1.0, 0.0))])?))
    }

    pub fn series(&self) -> &FourierSeries {
        &self.series
    }

    pub fn dim(&self) -> usize {
        self.series.dim()
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.series.eval(x)
    }

    pub fn wiener_norm(&self) -> f64 {
        self.series.wiener_norm()
    }

    pub fn translate(&self, w: &[f64]) -> Result<Self, WienerError> {
        Ok(Self::new(self.series.translate(w)?))
    }

    pub fn mul(&self, other: &Self) -> Result<Self, WienerError> {
        Ok(Self::new(self.series.mul(&other.series)?))
    }
}

/// `η ↦ ν(e(ξ·x) η)`.
#[derive(Clone, Debug)]
pub struct TwistedFunctional<'a> {
    measure: &'a TorusMeasure,
    xi: Character,
}

impl TwistedFunctional<'_> {
    pub fn xi(&self) -> &[i64] {
        &self.xi
    }

    /// `Σ_k η̂(k) c(−(ξ + k))`, exact on finitely supported data.
    pub fn apply(&self, eta: &TorusObservable) -> Result<Complex64, WienerError> {
        let dim = self.measure.dim();
        if eta.dim() != dim {
            return Err(WienerError::DimensionMismatch(eta.dim(), dim));
        }
        if self.xi.len() != dim {
            return Err(WienerError::CharacterDimension {
                chi: self.xi.clone(),
                dim,
            });
        }
        let terms: Vec<Complex64> = eta
            .series()
            .coefficients()
            .iter()
            .map(|(k, c)| {
                let index: Character = k.iter().zip(&self.xi).map(|(a, b)| -(a + b)).collect();
                c * self.measure.coefficient(&index)
            })
            .collect();
        Ok(pairwise_sum(&terms))
    }

    /// The same pairing by uniform-grid quadrature of `e(ξ·x) η(x) ρ(x)`.
    /// Exact for trigonometric polynomials once `per_axis` exceeds the
    /// degree of the integrand.
    pub fn apply_on_grid(&self, eta: &TorusObservable, per_axis: usize) -> Result<Complex64, WienerError> {
        let dim = self.measure.dim();
        if eta.dim() != dim {
            return Err(WienerError::DimensionMismatch(eta.dim(), dim));
        }
        let xi_max = self.xi.iter().map(|k| k.abs()).max().unwrap_or(0);
        let min = (xi_max + eta.series().degree() + self.measure.density().degree() + 1) as usize;
        if per_axis < min {
            return Err(WienerError::GridTooCoarse { min, got: per_axis });
        }
        let total = per_axis.pow(dim as u32);
        let sum = deterministic_sum(total, |idx| {
            let x = grid_point(idx, per_axis, dim);
            unit_phase(pairing(&self.xi, &x)) * eta.eval(&x) * self.measure.density().eval(&x)
        });
        Ok(sum / total as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Defect {
    pub lhs: Complex64,
    pub rhs: Complex64,
    /// `|lhs − rhs|`, plus any declared tail mass.
    pub defect: f64,
}

/// Compares `ν_ξ(η ∘ (x ↦ x + w))` with `ξ(−w) ν_ξ(η)`.
pub fn equivariance_check(
    measure: &TorusMeasure,
    xi: &[i64],
    w: &[f64],
    eta: &TorusObservable,
) -> Result<Defect, WienerError> {
    let twisted = measure.twist(xi);
    let lhs = twisted.apply(&eta.translate(w)?)?;
    let rhs = unit_phase(-pairing(xi, w)) * twisted.apply(eta)?;
    Ok(Defect {
        lhs,
        rhs,
        defect: (lhs - rhs).norm() + measure.density().tail_bound() * eta.wiener_norm(),
    })
}

/// Checks `σ(Φ) = Σ_χ σ̂(χ) ν_χ(Φ)`, where `ν` is Haar measure.
///
/// `direct` evaluates `σ(Φ)`; `twisted(χ)` evaluates `ν_χ(Φ)`. Both are
/// supplied by the caller, so `Φ` can be any correlation integrand.
pub fn character_expansion_check<E, D, T>(sigma: &TorusMeasure, direct: D, twisted: T) -> Result<Defect, E>
where
    D: FnOnce() -> Result<Complex64, E>,
    T: Fn(&[i64]) -> Result<Complex64, E>,
{
    let lhs = direct()?;
    let mut terms = Vec::with_capacity(sigma.density().support_len());
    for (chi, c) in sigma.density().coefficients() {
        terms.push(c * twisted(chi)?);
    }
    let rhs = pairwise_sum(&terms);
    Ok(Defect {
        lhs,
        rhs,
        defect: (lhs - rhs).norm(),
    })
}

/// [`character_expansion_check`] for a torus observable `Φ`: the direct side
/// is grid quadrature against the density, the expanded side uses exact
/// Haar twists.
pub fn character_expansion_check_on_grid(
    sigma: &TorusMeasure,
    phi: &TorusObservable,
    per_axis: usize,
) -> Result<Defect, WienerError> {
    let haar = TorusMeasure::haar(sigma.dim())?;
    let mut check = character_expansion_check(
        sigma,
        || sigma.twist(&vec![0; sigma.dim()]).apply_on_grid(phi, per_axis),
        |chi| haar.twist(chi).apply(phi),
    )?;
    check.defect += sigma.density().tail_bound() * phi.wiener_norm();
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cosine_density() -> FourierSeries {
        FourierSeries::circle([(0, c(1.0, 0.0)), (1, c(0.5, 0.0)), (-1, c(0.5, 0.0))]).unwrap()
    }

    fn random_poly(rng: &mut ChaCha8Rng, dim: usize, degree: i64, terms: usize) -> FourierSeries {
        let entries: Vec<_> = (0..terms)
            .map(|_| {
                let chi: Character = (0..dim).map(|_| rng.gen_range(-degree..=degree)).collect();
                (chi, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            })
            .collect();
        FourierSeries::new(dim, entries).unwrap()
    }

    #[test]
    fn wiener_norm_examples() {
        assert_eq!(TorusMeasure::haar(1).unwrap().wiener_norm(), 1.0);
        assert_eq!(cosine_density().wiener_norm(), 2.0);
        assert_eq!(FourierSeries::zero(2).unwrap().wiener_norm(), 0.0);
        let tailed = FourierSeries::with_tail(1, [(vec![0], c(1.0, 0.0))], 0.25).unwrap();
        assert_eq!(tailed.wiener_norm(), 1.25);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(FourierSeries::zero(0), Err(WienerError::ZeroDimension));
        assert!(matches!(
            FourierSeries::new(2, [(vec![1], c(1.0, 0.0))]),
            Err(WienerError::CharacterDimension { .. })
        ));
        assert!(matches!(
            FourierSeries::new(1, [(vec![1], c(f64::NAN, 0.0))]),
            Err(WienerError::NonFinite { .. })
        ));
        assert!(FourierSeries::with_tail(1, [], -1.0).is_err());
        assert!(TorusMeasure::probability(FourierSeries::circle([(0, c(2.0, 0.0))]).unwrap()).is_err());
    }

    #[test]
    fn measure_flags() {
        let m = TorusMeasure::new(cosine_density());
        assert!(m.is_probability() && m.is_real() && !m.is_haar());
        assert!(TorusMeasure::haar(3).unwrap().is_haar());
        let complex = TorusMeasure::new(FourierSeries::circle([(0, c(1.0, 0.0)), (1, c(0.0, 0.5))]).unwrap());
        assert!(!complex.is_real());
    }

    #[test]
    fn haar_twists() {
        let haar = TorusMeasure::haar(1).unwrap();
        let one = TorusObservable::constant(1, c(1.0, 0.0)).unwrap();
        assert_eq!(haar.twist(&[0]).apply(&one).unwrap(), c(1.0, 0.0));
        for k in [-3i64, 1, 5] {
            assert_eq!(haar.twist(&[k]).apply(&one).unwrap(), c(0.0, 0.0));
            let eta = TorusObservable::character(vec![-k]).unwrap();
            assert_eq!(haar.twist(&[k]).apply(&eta).unwrap(), c(1.0, 0.0));
        }
        // The trivial twist is the measure itself.
        let eta = TorusObservable::new(cosine_density());
        assert_eq!(haar.twist(&[0]).apply(&eta).unwrap(), haar.integrate(&eta).unwrap());
    }

    #[test]
    fn equivariance_examples() {
        let haar = TorusMeasure::haar(1).unwrap();
        let eta = TorusObservable::character(vec![-1]).unwrap();
        let zero = equivariance_check(&haar, &[1], &[0.0], &eta).unwrap();
        assert_eq!(zero.lhs, zero.rhs);
        let quarter = equivariance_check(&haar, &[1], &[0.25], &eta).unwrap();
        assert_abs_diff_eq!(quarter.lhs.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(quarter.lhs.im, -1.0, epsilon = 1e-15);
        assert!(quarter.defect <= 1e-15);
    }

    #[test]
    fn equivariance_random_trials() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for trial in 0..1000 {
            let dim = 1 + trial % 3;
            let haar = TorusMeasure::haar(dim).unwrap();
            let eta = TorusObservable::new(random_poly(&mut rng, dim, 8, 12));
            let xi: Character = (0..dim).map(|_| rng.gen_range(-8..=8)).collect();
            let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            worst = worst.max(equivariance_check(&haar, &xi, &w, &eta).unwrap().defect);
        }
        assert!(worst <= 1e-12, "worst defect {worst}");
    }

    #[test]
    fn expansion_examples() {
        // Haar: one term.
        let haar = TorusMeasure::haar(1).unwrap();
        let phi = TorusObservable::new(cosine_density());
        let check = character_expansion_check_on_grid(&haar, &phi, 16).unwrap();
        assert!(check.defect <= 1e-15);

        let sigma = TorusMeasure::new(cosine_density());
        let phi = TorusObservable::new(
            FourierSeries::circle([(-2, c(0.3, 0.1)), (0, c(0.7, 0.0)), (1, c(-0.2, 0.4)), (2, c(0.1, 0.0))]).unwrap(),
        );
        let check = character_expansion_check_on_grid(&sigma, &phi, 32).unwrap();
        assert!(check.defect <= 1e-12, "{check:?}");

        let sigma = TorusMeasure::new(
            FourierSeries::circle([(0, c(1.0, 0.0)), (3, c(0.25, 0.1)), (-3, c(0.25, -0.1))]).unwrap(),
        );
        let phi = TorusObservable::character(vec![3]).unwrap();
        let check = character_expansion_check_on_grid(&sigma, &phi, 16).unwrap();
        assert_abs_diff_eq!(check.rhs.re, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(check.rhs.im, -0.1, epsilon = 1e-15);
        assert!(check.defect <= 1e-12);
    }

    #[test]
    fn grid_must_resolve_integrand() {
        let sigma = TorusMeasure::new(cosine_density());
        let phi = TorusObservable::character(vec![5]).unwrap();
        assert!(matches!(
            sigma.twist(&[0]).apply_on_grid(&phi, 4),
            Err(WienerError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn twist_matches_grid_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in 1..=2 {
            let sigma = TorusMeasure::new(random_poly(&mut rng, dim, 4, 6));
            let eta = TorusObservable::new(random_poly(&mut rng, dim, 5, 8));
            for _ in 0..5 {
                let xi: Character = (0..dim).map(|_| rng.gen_range(-4..=4)).collect();
                let exact = sigma.twist(&xi).apply(&eta).unwrap();
                let grid = sigma.twist(&xi).apply_on_grid(&eta, 24).unwrap();
                assert!((exact - grid).norm() <= 1e-10, "{exact} vs {grid}");
            }
        }
    }

    #[test]
    fn translate_and_shift_evaluate_consistently() {
        let f = cosine_density();
        let x = [0.137];
        let w = [0.31];
        assert_abs_diff_eq!(f.translate(&w).unwrap().eval(&x).re, f.eval(&[x[0] + w[0]]).re, epsilon = 1e-14);
        let g = f.shift(&[2]).unwrap();
        let expect = unit_phase(2.0 * x[0]) * f.eval(&x);
        assert!((g.eval(&x) - expect).norm() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"dim": 1, "coeffs": [{"chi": [0], "re": 1.0, "im": 0.0}, {"chi": [1], "re": 0.5}, {"chi": [-1], "re": 0.5}]}"#;
        let m = TorusMeasure::from_json(text).unwrap();
        assert_eq!(m.density(), &cosine_density());
        assert_eq!(TorusMeasure::from_json(&m.to_json()).unwrap(), m);
        let tailed = FourierSeries::with_tail(2, [(vec![0, 1], c(0.1, -0.2))], 1e-3).unwrap();
        assert_eq!(FourierSeries::from_json(&tailed.to_json()).unwrap(), tailed);
        assert!(FourierSeries::from_json(r#"{"dim": 1}"#).is_err());
    }

    #[test]
    fn truncated_series_keeps_box() {
        let f = FourierSeries::truncated(2, 2, |chi| c(0.5f64.powi((chi[0].abs() + chi[1].abs()) as i32), 0.0), 0.1)
            .unwrap();
        assert_eq!(f.support_len(), 25);
        assert_eq!(f.tail_bound(), 0.1);
    }

    fn arb_series(dim: usize) -> impl Strategy<Value = FourierSeries> {
        proptest::collection::vec(
            (proptest::collection::vec(-6i64..=6, dim), -2.0..2.0f64, -2.0..2.0f64),
            0..10,
        )
        .prop_map(move |v| FourierSeries::new(dim, v.into_iter().map(|(k, a, b)| (k, c(a, b)))).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn norm_axioms(f in arb_series(2), g in arb_series(2), s in -3.0..3.0f64, t in -3.0..3.0f64) {
            let sum = f.add(&g).unwrap().wiener_norm();
            prop_assert!(sum <= f.wiener_norm() + g.wiener_norm() + 1e-12);
            let scaled = f.scale(c(s, t)).wiener_norm();
            prop_assert!((scaled - c(s, t).norm() * f.wiener_norm()).abs() <= 1e-12 * (1.0 + scaled));
            prop_assert!(f.wiener_norm() >= f.coefficient(&[0, 0]).norm());
        }

        #[test]
        fn sup_norm_dominated(f in arb_series(1)) {
            prop_assert!(f.sup_on_grid(4096) <= f.wiener_norm() + 1e-9);
        }

        #[test]
        fn algebra_property(f in arb_series(1), g in arb_series(1)) {
            let prod = f.mul(&g).unwrap();
            prop_assert!(prod.wiener_norm() <= f.wiener_norm() * g.wiener_norm() * (1.0 + 1e-12) + 1e-12);
            let conv = f.convolve(&g).unwrap();
            prop_assert!(conv.wiener_norm() <= f.wiener_norm() * g.wiener_norm() * (1.0 + 1e-12) + 1e-12);
            // The product evaluates pointwise.
            let x = [0.3141];
            prop_assert!((prod.eval(&x) - f.eval(&x) * g.eval(&x)).norm() <= 1e-10);
        }

        #[test]
        fn sup_norm_dominated_on_plane(f in arb_series(2)) {
            prop_assert!(f.sup_on_grid(64) <= f.wiener_norm() + 1e-9);
        }

        #[test]
        fn conjugate_symmetric_series_are_real(f in arb_series(1)) {
            let real = f.add(&f.conj()).unwrap();
            prop_assert!(real.is_real(1e-12));
            prop_assert!(real.eval(&[0.77]).im.abs() <= 1e-12);
        }
    }
}
