//! Shared numerical kernels: log-scale scalars, schedule-independent
//! summation and adaptive Gauss–Kronrod quadrature.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A positive quantity stored through its natural logarithm.
///
/// Multiplicative quantities such as `‖t‖_*`, `Δ_r` or `D_r` overflow `f64`
/// long before their logarithms do, so they travel as `LogScalar`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogScalar {
    ln: f64,
}

impl LogScalar {
    pub const ONE: LogScalar = LogScalar { ln: 0.0 };
    pub const INFINITY: LogScalar = LogScalar { ln: f64::INFINITY };

    pub fn from_ln(ln: f64) -> Self {
        LogScalar { ln }
    }

    /// Panics on non-positive input; callers validate first.
    pub fn from_value(value: f64) -> Self {
        assert!(value > 0.0, "LogScalar::from_value needs a positive value, got {value}");
        LogScalar { ln: value.ln() }
    }

    pub fn ln(self) -> f64 {
        self.ln
    }

    pub fn log10(self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    /// The multiplicative value; `+inf` once it leaves the `f64` range.
    pub fn value(self) -> f64 {
        self.ln.exp()
    }

    pub fn is_finite(self) -> bool {
        self.ln.is_finite()
    }

    pub fn powf(self, exponent: f64) -> Self {
        LogScalar { ln: self.ln * exponent }
    }

    pub fn min(self, other: Self) -> Self {
        if other.ln < self.ln {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other.ln > self.ln {
            other
        } else {
            self
        }
    }
}

impl std::ops::Mul for LogScalar {
    type Output = LogScalar;
    fn mul(self, rhs: Self) -> Self {
        LogScalar { ln: self.ln + rhs.ln }
    }
}

impl std::ops::Div for LogScalar {
    type Output = LogScalar;
    fn div(self, rhs: Self) -> Self {
        LogScalar { ln: self.ln - rhs.ln }
    }
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Pairwise (tree) summation. The tree shape depends only on the length.
pub fn pairwise_sum(values: &[Complex64]) -> Complex64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().fold(Complex64::new(0.0, 0.0), |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn pairwise_sum_real(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum_real(&values[..mid]) + pairwise_sum_real(&values[mid..])
}

/// Chunk length used by [`deterministic_sum`]. Fixed so that the reduction
/// tree never depends on the number of worker threads.
pub const SUM_CHUNK: usize = 4096;

/// `Σ_{k<n} f(k)`, evaluated in parallel over fixed-size chunks and reduced
/// with a fixed pairwise tree. Bit-identical for any rayon pool size.
pub fn deterministic_sum<F>(n: usize, f: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync,
{
    let chunks = n.div_ceil(SUM_CHUNK);
    let partial: Vec<Complex64> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * SUM_CHUNK;
            let hi = (lo + SUM_CHUNK).min(n);
            let buf: Vec<Complex64> = (lo..hi).map(&f).collect();
            pairwise_sum(&buf)
        })
        .collect();
    pairwise_sum(&partial)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge on [{a}, {b}]: error estimate {error:e} after {subdivisions} subdivisions")]
    NotConverged {
        a: f64,
        b: f64,
        error: f64,
        subdivisions: usize,
    },
    #[error("integrand returned a non-finite value at x = {x}")]
    NonFinite { x: f64 },
    #[error("invalid integration interval [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct QuadratureResult {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

/// Tolerances for [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-12,
            rel: 1e-10,
            max_subdivisions: 2000,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

fn gk15<F>(f: &F, a: f64, b: f64) -> Result<Segment, QuadratureError>
where
    F: Fn(f64) -> Complex64,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| -> Result<Complex64, QuadratureError> {
        let v = f(x);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NonFinite { x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for k in 0..7 {
        let dx = half * XGK[k];
        let pair = eval(center - dx)? + eval(center + dx)?;
        kronrod += pair * WGK[k];
        if k % 2 == 1 {
            gauss += pair * WG[k / 2];
        }
    }
    Ok(Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).norm(),
    })
}

/// Globally adaptive 15-point Gauss–Kronrod quadrature of a complex
/// integrand over `[a, b]`, bisecting the worst segment until the summed
/// error estimate meets the tolerance.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<QuadratureResult, QuadratureError>
where
    F: Fn(f64) -> Complex64,
{
    integrate_with_breaks(f, &[a, b], tol)
}

/// Like [`integrate`], with the interval pre-split at the given sorted
/// breakpoints (known kinks or jumps of the integrand).
pub fn integrate_with_breaks<F>(
    f: F,
    points: &[f64],
    tol: Tolerance,
) -> Result<QuadratureResult, QuadratureError>
where
    F: Fn(f64) -> Complex64,
{
    if points.len() < 2 {
        return Err(QuadratureError::BadInterval {
            a: f64::NAN,
            b: f64::NAN,
        });
    }
    let (a, b) = (points[0], points[points.len() - 1]);
    if !(a.is_finite() && b.is_finite()) || points.windows(2).any(|w| w[1] < w[0]) {
        return Err(QuadratureError::BadInterval { a, b });
    }
    let mut segments = Vec::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            segments.push(gk15(&f, w[0], w[1])?);
        }
    }
    let mut evaluations = 15 * segments.len();
    let mut subdivisions = 0;
    loop {
        let total: Complex64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if error <= tol.abs.max(tol.rel * total.norm()) {
            return Ok(QuadratureResult {
                value: total,
                error,
                evaluations,
            });
        }
        if subdivisions >= tol.max_subdivisions {
            return Err(QuadratureError::NotConverged {
                a,
                b,
                error,
                subdivisions,
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("at least one segment");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Segment below floating resolution; keep it and give up refining it.
            return Err(QuadratureError::NotConverged {
                a,
                b,
                error,
                subdivisions,
            });
        }
        segments.push(gk15(&f, seg.a, mid)?);
        segments.push(gk15(&f, mid, seg.b)?);
        evaluations += 30;
        subdivisions += 1;
    }
}

/// Real-valued convenience wrapper around [`integrate_with_breaks`].
pub fn integrate_real<F>(f: F, points: &[f64], tol: Tolerance) -> Result<(f64, f64), QuadratureError>
where
    F: Fn(f64) -> f64,
{
    let res = integrate_with_breaks(|x| Complex64::new(f(x), 0.0), points, tol)?;
    Ok((res.value.re, res.error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_integrates_polynomials_exactly() {
        let (v, _) = integrate_real(|x| x.powi(5) - 3.0 * x * x, &[0.0, 2.0], Tolerance::default()).unwrap();
        assert!((v - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn gk_handles_kinks_with_breaks() {
        let (v, _) = integrate_real(|x: f64| x.abs(), &[-1.0, 0.0, 2.0], Tolerance::default()).unwrap();
        assert!((v - 2.5).abs() < 1e-13);
        let (v, _) = integrate_real(|x: f64| x.abs(), &[-1.0, 2.0], Tolerance::default()).unwrap();
        assert!((v - 2.5).abs() < 1e-9);
    }

    #[test]
    fn gk_complex_oscillatory() {
        let res = integrate(
            |x| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * 3.0 * x),
            0.0,
            1.0,
            Tolerance::default(),
        )
        .unwrap();
        assert!(res.value.norm() < 1e-12);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let err = integrate_real(|x| 1.0 / x, &[0.0, 1.0], Tolerance::default()).unwrap_err();
        assert!(matches!(err, QuadratureError::NonFinite { .. } | QuadratureError::NotConverged { .. }));
    }

    #[test]
    fn deterministic_sum_is_pool_independent() {
        let f = |k: usize| Complex64::new((k as f64 * 0.37).sin(), (k as f64).sqrt().cos());
        let n = 3 * SUM_CHUNK + 17;
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| deterministic_sum(n, f));
        let b = four.install(|| deterministic_sum(n, f));
        assert_eq!(a.re.to_bits(), b.re.to_bits());
        assert_eq!(a.im.to_bits(), b.im.to_bits());
    }

    #[test]
    fn log_add_exp_matches_direct() {
        assert!((log_add_exp(1.0_f64.ln(), 2.0_f64.ln()) - 3.0_f64.ln()).abs() < 1e-15);
        assert_eq!(log_add_exp(5.0, f64::NEG_INFINITY), 5.0);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
