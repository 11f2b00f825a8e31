//! Seeded randomized self-checks of the core invariants.

use equidist_core::constants::{AssumptionParams, BoundLedger, NormGrowth};
use equidist_core::modular::{
    check_integral_estimate, eval_eisenstein, integral_estimate_quadrature, reduce, BumpProfile, EisensteinObservable,
    UpperHalfPoint,
};
use equidist_core::selection::{choose_window_for_norms, pigeonhole, pigeonhole_brute_force};
use equidist_core::wiener::{
    character_expansion_check_on_grid, equivariance_check, Character, FourierSeries, TorusMeasure, TorusObservable,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub max_defect: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

struct Tally {
    result: CheckResult,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tally {
            result: CheckResult {
                name,
                cases: 0,
                failures: 0,
                max_defect: 0.0,
                tolerance,
            },
        }
    }

    /// Records a case with a numeric defect compared against the tolerance.
    fn defect(&mut self, d: f64) {
        self.result.cases += 1;
        if d.is_nan() || d > self.result.tolerance {
            self.result.failures += 1;
        }
        if d.is_nan() {
            self.result.max_defect = f64::NAN;
        } else if !self.result.max_defect.is_nan() {
            self.result.max_defect = self.result.max_defect.max(d);
        }
    }

    fn ok(&mut self, ok: bool) {
        self.defect(if ok { 0.0 } else { f64::INFINITY });
    }
}

/// Every check gets its own stream derived from `seed`, so results do not
/// depend on the order they run in.
fn stream(seed: u64, check: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(check);
    rng
}

pub fn run_checks(cases: usize, seed: u64) -> Vec<CheckResult> {
    vec![
        pigeonhole_dyadic(cases, &mut stream(seed, 1)),
        window_inequalities(cases, &mut stream(seed, 2)),
        ledger_invariants(cases.div_ceil(10), &mut stream(seed, 3)),
        wiener_equivariance(cases, &mut stream(seed, 4)),
        wiener_expansion(cases.div_ceil(10), &mut stream(seed, 5)),
        sup_norm_domination(cases.div_ceil(10), &mut stream(seed, 6)),
        reduce_invariance(cases, &mut stream(seed, 7)),
        eisenstein_invariance(cases, &mut stream(seed, 8)),
        integral_estimate(&mut stream(seed, 9)),
    ]
}

/// Exponents `β_i = 2^{-k_i}` with `θ = 2^{-s}`, so every comparison is exact.
pub fn pigeonhole_dyadic(cases: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut tally = Tally::new("pigeonhole_brute_force", 0.0);
    for _ in 0..cases {
        let r = rng.gen_range(2..=8usize);
        let mut ks: Vec<i32> = (0..r).map(|_| rng.gen_range(0..=40)).collect();
        ks.sort_unstable();
        ks[0] = 0;
        let spread = ks[r - 1];
        if spread == 0 {
            ks[r - 1] = 1;
        }
        let s = rng.gen_range(1..=ks[r - 1]);
        let betas: Vec<f64> = ks.iter().map(|&k| 2f64.powi(-k)).collect();
        let theta = 2f64.powi(-s);
        let ok = match pigeonhole(&betas, theta) {
            Ok(found) => Some(found) == pigeonhole_brute_force(&betas, theta),
            Err(_) => false,
        };
        tally.ok(ok);
    }
    tally.result
}

pub fn window_inequalities(cases: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut tally = Tally::new("window_inequalities", 1e-12);
    for _ in 0..cases {
        let r = rng.gen_range(2..=8usize);
        let mut logs: Vec<f64> = (0..r).map(|_| -rng.gen_range(0.0..30.0)).collect();
        logs.sort_by(|a, b| b.total_cmp(a));
        logs[0] = 0.0;
        let spread = -logs[r - 1];
        if spread <= 1e-3 {
            logs[r - 1] = -1.0;
        }
        let spread = -logs[r - 1];
        let log_theta = -spread * rng.gen_range(0.01..1.0);
        let norms: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
        let theta = log_theta.exp();
        match choose_window_for_norms(&norms, theta) {
            Ok(w) => {
                let c = &w.checks;
                let excess = [
                    c.leading / c.leading_bound - 1.0,
                    1.0 - c.split / c.split_bound,
                    c.tail / c.tail_bound - 1.0,
                ]
                .into_iter()
                .fold(0.0f64, f64::max);
                let agrees = Some((w.p, w.q)) == pigeonhole_brute_force(&norms, theta);
                tally.defect(if agrees && c.split_bound > 1.0 { excess } else { f64::INFINITY });
            }
            Err(_) => tally.ok(false),
        }
    }
    tally.result
}

fn random_params(rng: &mut ChaCha8Rng) -> AssumptionParams {
    let growth = if rng.gen_bool(0.5) {
        NormGrowth::PowerLaw {
            l1: rng.gen_range(1.0..5.0),
            ell: rng.gen_range(1.0..3.0),
            l2: rng.gen_range(1.0..5.0),
        }
    } else {
        NormGrowth::Constant {
            big_b: rng.gen_range(1.0..5.0),
            b: rng.gen_range(0.51..4.0),
            m: rng.gen_range(1.0..5.0),
        }
    };
    AssumptionParams {
        base_degree: rng.gen_range(1..=3),
        eq1_constant: rng.gen_range(1.0..100.0),
        eq1_exponent: rng.gen_range(0.01..=1.0),
        mixing_constant: rng.gen_range(1.0..100.0),
        mixing_exponent: rng.gen_range(0.001..0.499),
        holder_constant: rng.gen_range(1.0..10.0),
        holder_exponent: rng.gen_range(0.01..2.0),
        growth,
    }
}

/// Degrees grow by `d_o`, exponents decrease strictly, constants stay finite.
pub fn ledger_invariants(cases: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut tally = Tally::new("ledger_invariants", 0.0);
    for _ in 0..cases {
        let params = random_params(rng);
        let Ok(ledger) = BoundLedger::theorem_a(&params, 12) else {
            tally.ok(false);
            continue;
        };
        let mut prev = params.eq1_exponent;
        let mut ok = true;
        for (k, row) in ledger.rows.iter().enumerate() {
            ok &= row.d_r == (k as u32 + 2) * params.base_degree;
            ok &= row.delta > 0.0 && row.delta < prev;
            ok &= row.eps.is_none_or(|e| e > 0.0 && e < 1.0);
            ok &= row.log_big_d.is_finite();
            prev = row.delta;
        }
        tally.ok(ok);
    }
    tally.result
}

fn random_series(rng: &mut ChaCha8Rng, dim: usize, degree: i64, terms: usize) -> FourierSeries {
    let entries: Vec<(Character, Complex64)> = (0..terms)
        .map(|_| {
            let chi: Character = (0..dim).map(|_| rng.gen_range(-degree..=degree)).collect();
            (chi, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        })
        .collect();
    FourierSeries::new(dim, entries).expect("finite coefficients")
}

pub fn wiener_equivariance(cases: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut tally = Tally::new("wiener_equivariance", 1e-12);
    for _ in 0..cases {
        let dim = rng.gen_range(1..=3usize);
        let haar = TorusMeasure::haar(dim).expect("dim > 0");
        let xi: Character = (0..dim).map(|_| rng.gen_range(-5..=5)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        let eta = TorusObservable::new(random_series(rng, dim, 6, 8));
        match equivariance_check(&haar, &xi, &w, &eta) {
            Ok(d) => tally.defect(d.defect / eta.wiener_norm().max(1.0)),
            Err(_) => tally.ok(false),
        }
    }
    tally.result
}

pub fn wiener_expansion(cases: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut tally = Tally::new("wiener_expansion", 1e-12);
    for _ in 0..cases {
        let dim = rng.gen_range(1..=2usize);
        let sigma = TorusMeasure::new(random_series(rng, dim, 4, 5));
        let phi = TorusObservable::new(random_series(rng, dim, 4, 6));
        // A grid finer than the combined degree integrates exactly.
        let per_axis = if dim == 1 { 64 } else { 32 };
        match character_expansion_check_on_grid(&sigma, &phi, per_axis) {
            Ok(d) => tally.defect(d.defect / (sigma.wiener_norm() * phi.wiener_norm()).max(1.0)),
            Err(_) => tally.ok(false),
        }
    }
    tally.result
}

/// `sup |f| ≤ ‖f‖_A` on a grid.
pub fn sup_norm_domination(cases: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut tally = Tally::new("sup_norm_domination", 1e-12);
    for _ in 0..cases {
        let dim = rng.gen_range(1..=2usize);
        let f = random_series(rng, dim, 5, 7);
        let norm = f.wiener_norm();
        let sup = f.sup_on_grid(if dim == 1 { 257 } else { 33 });
        tally.defect(((sup - norm) / norm.max(1.0)).max(0.0));
    }
    tally.result
}

fn random_point(rng: &mut ChaCha8Rng) -> UpperHalfPoint {
    UpperHalfPoint {
        x: rng.gen_range(-10.0..10.0),
        y: 10f64.powf(rng.gen_range(-2.0..3.0)),
    }
}

fn in_fundamental_domain(z: UpperHalfPoint) -> bool {
    z.x >= -0.5 - 1e-12 && z.x < 0.5 + 1e-12 && z.x * z.x + z.y * z.y >= 1.0 - 1e-10
}

fn point_gap(a: UpperHalfPoint, b: UpperHalfPoint) -> f64 {
    ((a.x - b.x).abs() / (1.0 + a.x.abs())).max((a.y - b.y).abs() / (1.0 + a.y.abs()))
}

/// Reduction lands in the domain, is idempotent and ignores `T` and `S`.
pub fn reduce_invariance(cases: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut tally = Tally::new("reduce_invariance", 1e-10);
    for _ in 0..cases {
        let z = random_point(rng);
        let r = reduce(z);
        if !in_fundamental_domain(r) {
            tally.ok(false);
            continue;
        }
        let gap = point_gap(reduce(r), r)
            .max(point_gap(reduce(z.translate(1.0)), r))
            .max(point_gap(reduce(z.invert()), r));
        tally.defect(gap);
    }
    tally.result
}

pub fn eisenstein_invariance(cases: usize, rng: &mut ChaCha8Rng) -> CheckResult {
    let mut tally = Tally::new("eisenstein_invariance", 1e-10);
    for _ in 0..cases {
        let lo = rng.gen_range(1.0..2.0);
        let width = rng.gen_range(0.2..3.0);
        let obs = EisensteinObservable::new(BumpProfile::smooth(lo, lo + width).expect("valid support")).expect("valid");
        let z = random_point(rng);
        let direct = eval_eisenstein(&obs, z);
        let moved = eval_eisenstein(&obs, z.invert().translate(1.0));
        let reduced = eval_eisenstein(&obs, reduce(z));
        let scale = 1.0 + direct.abs();
        tally.defect(((direct - reduced).abs().max((direct - moved).abs())) / scale);
    }
    tally.result
}

/// The closed form against quadrature, and `lhs ≤ rhs`, on a fixed grid
/// plus one random point.
pub fn integral_estimate(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut tally = Tally::new("integral_estimate", 1e-6);
    let mut grid: Vec<(f64, f64)> = [1.0, 10.0, 100.0]
        .iter()
        .flat_map(|&r| [0.05, 0.25, 0.45].map(|c| (r, c)))
        .collect();
    grid.push((10f64.powf(rng.gen_range(0.0..3.0)), rng.gen_range(0.01..0.49)));
    for (r, c) in grid {
        match (check_integral_estimate(r, c), integral_estimate_quadrature(r, c)) {
            (Ok(est), Ok(quad)) if est.pass => tally.defect((est.lhs - quad).abs() / quad.abs()),
            _ => tally.ok(false),
        }
    }
    tally.result
}
