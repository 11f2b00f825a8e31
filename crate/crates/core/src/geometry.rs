//! Diagonal actions on `Lie(U)`: root data, the star norm `‖t‖_*`,
//! statistics of translation tuples, and the choice of a one-parameter
//! direction for averaging.
//!
//! Elements of `T` are written in additive coordinates `t ∈ ℝ^k`; a root
//! `α` is a linear functional and `Ad(t)` scales the weight space `u_α` by
//! `e^{α(t)}`. Multiplicative quantities are returned as [`LogScalar`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::LogScalar;

/// Absolute tolerance used when checking the balance condition of the
/// `U_{m,n}` cone and for linear-algebra rank decisions.
const LINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("root system must contain at least one root")]
    NoRoots,
    #[error("root {index} is the zero functional")]
    ZeroRoot { index: usize },
    #[error("root {index} has {found} coefficients, expected {expected}")]
    RootLength {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} multiplicities, found {found}")]
    MultiplicityCount { expected: usize, found: usize },
    #[error("multiplicity of root {index} must be positive")]
    ZeroMultiplicity { index: usize },
    #[error("dimension of T must be positive")]
    ZeroDimension,
    #[error("action declared proper but the roots do not span the dual of the domain")]
    NotProper,
    #[error("point has {found} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("translation tuple is empty")]
    EmptyTuple,
    #[error("entry {index} is outside the declared cone: {reason}")]
    OutsideCone { index: usize, reason: String },
    #[error("growth function is below 1 at entry {index} (log rho = {log_rho})")]
    GrowthBelowOne { index: usize, log_rho: f64 },
    #[error("direction selection needs at least two entries, got {r}")]
    TooFewEntries { r: usize },
    #[error("invalid root system description: {0}")]
    Json(String),
}

/// Roots of a diagonalizable `T`-action on `Lie(U)` together with a chosen
/// basis `e_{α,1}, …, e_{α,dim u_α}` of each weight space.
#[derive(Clone, Debug, PartialEq)]
pub struct RootAction {
    dim_t: usize,
    roots: Vec<Vec<f64>>,
    multiplicities: Vec<usize>,
    basis_labels: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RootActionJson {
    dim_t: usize,
    roots: Vec<Vec<f64>>,
    #[serde(default)]
    multiplicities: Option<Vec<usize>>,
    #[serde(default)]
    domain: Option<ConeDomain>,
    #[serde(default)]
    proper: Option<bool>,
}

impl RootAction {
    pub fn new(dim_t: usize, roots: Vec<Vec<f64>>, multiplicities: Vec<usize>) -> Result<Self, GeometryError> {
        if dim_t == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        if roots.is_empty() {
            return Err(GeometryError::NoRoots);
        }
        if multiplicities.len() != roots.len() {
            return Err(GeometryError::MultiplicityCount {
                expected: roots.len(),
                found: multiplicities.len(),
            });
        }
        for (index, root) in roots.iter().enumerate() {
            if root.len() != dim_t {
                return Err(GeometryError::RootLength {
                    index,
                    expected: dim_t,
                    found: root.len(),
                });
            }
            if root.iter().all(|&c| c == 0.0) {
                return Err(GeometryError::ZeroRoot { index });
            }
            if multiplicities[index] == 0 {
                return Err(GeometryError::ZeroMultiplicity { index });
            }
        }
        let basis_labels = multiplicities
            .iter()
            .enumerate()
            .map(|(a, &m)| (1..=m).map(|k| format!("e_{{{a},{k}}}")).collect())
            .collect();
        Ok(RootAction {
            dim_t,
            roots,
            multiplicities,
            basis_labels,
        })
    }

    /// The action of `g_t = diag(e^{t_1},…,e^{t_m}, e^{-t_{m+1}},…,e^{-t_{m+n}})`
    /// on the upper-right block `Mat_{m×n}`: roots `α_{i,j}(t) = t_i + t_{m+j}`,
    /// each with a one-dimensional weight space.
    pub fn horospherical(m: usize, n: usize) -> Self {
        assert!(m >= 1 && n >= 1, "U_{{m,n}} needs m, n >= 1");
        let dim_t = m + n;
        let mut roots = Vec::with_capacity(m * n);
        let mut labels = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                let mut root = vec![0.0; dim_t];
                root[i] = 1.0;
                root[m + j] = 1.0;
                roots.push(root);
                labels.push(vec![format!("E_{{{},{}}}", i + 1, m + j + 1)]);
            }
        }
        RootAction {
            dim_t,
            multiplicities: vec![1; roots.len()],
            roots,
            basis_labels: labels,
        }
    }

    /// Parses `{ "dim_t": k, "roots": [[..], ..], "multiplicities": [..] }`.
    /// Optional keys: `"domain"` (a [`ConeDomain`]) and `"proper": true`,
    /// which makes the loader reject root systems that fail to separate
    /// points of the domain.
    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let raw: RootActionJson = serde_json::from_str(text).map_err(|e| GeometryError::Json(e.to_string()))?;
        let mult = raw.multiplicities.unwrap_or_else(|| vec![1; raw.roots.len()]);
        let action = RootAction::new(raw.dim_t, raw.roots, mult)?;
        if raw.proper.unwrap_or(false) {
            let domain = raw.domain.unwrap_or(ConeDomain::Unconstrained);
            if !action.is_proper_on(&domain)? {
                return Err(GeometryError::NotProper);
            }
        }
        Ok(action)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&RootActionJson {
            dim_t: self.dim_t,
            roots: self.roots.clone(),
            multiplicities: Some(self.multiplicities.clone()),
            domain: None,
            proper: None,
        })
        .expect("root action serializes")
    }

    pub fn dim_t(&self) -> usize {
        self.dim_t
    }

    pub fn roots(&self) -> &[Vec<f64>] {
        &self.roots
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.multiplicities
    }

    pub fn basis_labels(&self) -> &[Vec<String>] {
        &self.basis_labels
    }

    fn check_dim(&self, t: &[f64]) -> Result<(), GeometryError> {
        if t.len() != self.dim_t {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim_t,
                found: t.len(),
            });
        }
        Ok(())
    }

    /// `α(t)` for every root, in root order.
    pub fn root_values(&self, t: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(t)?;
        Ok(self.roots.iter().map(|root| dot(root, t)).collect())
    }

    /// Whether `log ‖·‖_*` separates points of the linear span of `domain`,
    /// i.e. the roots restricted to that subspace span its dual.
    pub fn is_proper_on(&self, domain: &ConeDomain) -> Result<bool, GeometryError> {
        let roots_rank = rank(self.roots.clone());
        match domain {
            ConeDomain::Unconstrained => Ok(roots_rank == self.dim_t),
            ConeDomain::Horospherical { m, n } => {
                if m + n != self.dim_t {
                    return Err(GeometryError::DimensionMismatch {
                        expected: self.dim_t,
                        found: m + n,
                    });
                }
                let balance: Vec<f64> = (0..self.dim_t).map(|k| if k < *m { 1.0 } else { -1.0 }).collect();
                let mut with_balance = self.roots.clone();
                with_balance.push(balance);
                let balance_in_span = rank(with_balance) == roots_rank;
                let restricted = roots_rank - usize::from(balance_in_span);
                Ok(restricted == self.dim_t - 1)
            }
        }
    }

    /// `‖t‖_* = max_α max(e^{α(t)}, e^{−α(t)})`.
    pub fn star_norm(&self, t: &[f64]) -> Result<LogScalar, GeometryError> {
        let values = self.root_values(t)?;
        Ok(LogScalar::from_ln(values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))))
    }

    /// `‖t_a t_b^{-1}‖_*`, computed on the coordinate difference.
    pub fn star_distance(&self, a: &[f64], b: &[f64]) -> Result<LogScalar, GeometryError> {
        self.check_dim(a)?;
        self.check_dim(b)?;
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.star_norm(&diff)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row rank by Gaussian elimination with partial pivoting.
fn rank(mut rows: Vec<Vec<f64>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..cols {
        let pivot = (rank..rows.len()).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()));
        let Some(pivot) = pivot else { break };
        if rows[pivot][col].abs() <= LINEAR_TOL {
            continue;
        }
        rows.swap(rank, pivot);
        for r in 0..rows.len() {
            if r != rank {
                let factor = rows[r][col] / rows[rank][col];
                for c in col..cols {
                    rows[r][c] -= factor * rows[rank][c];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// The region `T_+` in which translation tuples live.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeDomain {
    /// No constraint.
    Unconstrained,
    /// Nonnegative coordinates with `Σ_{i≤m} t_i = Σ_{j>m} t_j`.
    Horospherical { m: usize, n: usize },
}

impl ConeDomain {
    pub fn check(&self, t: &[f64]) -> Result<(), String> {
        if t.iter().any(|x| !x.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        match *self {
            ConeDomain::Unconstrained => Ok(()),
            ConeDomain::Horospherical { m, n } => {
                if t.len() != m + n {
                    return Err(format!("expected {} coordinates, found {}", m + n, t.len()));
                }
                if let Some(x) = t.iter().find(|&&x| x < 0.0) {
                    return Err(format!("negative coordinate {x}"));
                }
                let lhs: f64 = t[..m].iter().sum();
                let rhs: f64 = t[m..].iter().sum();
                if (lhs - rhs).abs() > LINEAR_TOL * (1.0 + lhs.abs().max(rhs.abs())) {
                    return Err(format!("balance violated: {lhs} != {rhs}"));
                }
                Ok(())
            }
        }
    }
}

/// `⌊t⌋ = min(t_1, …, t_{m+n})`.
pub fn floor_expanding(t: &[f64], m: usize, n: usize) -> Result<f64, GeometryError> {
    if t.len() != m + n || t.is_empty() {
        return Err(GeometryError::DimensionMismatch {
            expected: m + n,
            found: t.len(),
        });
    }
    Ok(t.iter().copied().fold(f64::INFINITY, f64::min))
}

/// An `r`-tuple of points of `T_+`.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslationTuple {
    entries: Vec<Vec<f64>>,
    domain: ConeDomain,
}

impl TranslationTuple {
    pub fn new(entries: Vec<Vec<f64>>, domain: ConeDomain) -> Result<Self, GeometryError> {
        if entries.is_empty() {
            return Err(GeometryError::EmptyTuple);
        }
        let dim = entries[0].len();
        for (index, t) in entries.iter().enumerate() {
            if t.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    found: t.len(),
                });
            }
            domain
                .check(t)
                .map_err(|reason| GeometryError::OutsideCone { index, reason })?;
        }
        Ok(TranslationTuple { entries, domain })
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    pub fn domain(&self) -> ConeDomain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The same tuple with entries reordered as `entries[order[k]]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        TranslationTuple {
            entries: order.iter().map(|&k| self.entries[k].clone()).collect(),
            domain: self.domain,
        }
    }
}

/// A growth function `ρ : T_+ → [1, ∞)`, reported through `log ρ`.
pub trait GrowthFunction {
    fn log_rho(&self, t: &[f64]) -> f64;
}

/// `ρ(t) = e^{⌊t⌋}`, the growth function of the `U_{m,n}` cone.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExpFloor;

impl GrowthFunction for ExpFloor {
    fn log_rho(&self, t: &[f64]) -> f64 {
        t.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl<F: Fn(&[f64]) -> f64> GrowthFunction for F {
    fn log_rho(&self, t: &[f64]) -> f64 {
        self(t)
    }
}

/// `ρ_r`, `m_r`, `M_r` and `Δ_r` of a tuple. Each is multiplicative; the
/// logarithm is available through [`LogScalar::ln`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TupleStats {
    pub rho_r: LogScalar,
    /// `min_{i≠j} ‖t_i t_j^{-1}‖_*`; infinite when `r = 1`.
    pub min_separation: LogScalar,
    /// `max_{i,j} ‖t_i t_j^{-1}‖_*`; equal to 1 when `r = 1`.
    pub max_separation: LogScalar,
    pub delta_r: LogScalar,
}

pub fn tuple_stats(
    action: &RootAction,
    tuple: &TranslationTuple,
    rho: &dyn GrowthFunction,
) -> Result<TupleStats, GeometryError> {
    let entries = tuple.entries();
    let mut rho_r = LogScalar::INFINITY;
    for (index, t) in entries.iter().enumerate() {
        action.check_dim(t)?;
        let log_rho = rho.log_rho(t);
        if log_rho.is_nan() || log_rho < 0.0 {
            return Err(GeometryError::GrowthBelowOne { index, log_rho });
        }
        rho_r = rho_r.min(LogScalar::from_ln(log_rho));
    }
    let mut min_sep = LogScalar::INFINITY;
    let mut max_sep = LogScalar::ONE;
    for i in 0..entries.len() {
        for j in (i + 1)..entries.len() {
            let d = action.star_distance(&entries[i], &entries[j])?;
            min_sep = min_sep.min(d);
            max_sep = max_sep.max(d);
        }
    }
    let delta_r = if entries.len() == 1 {
        LogScalar::from_ln(rho.log_rho(&entries[0]))
    } else {
        rho_r.min(min_sep)
    };
    Ok(TupleStats {
        rho_r,
        min_separation: min_sep,
        max_separation: max_sep,
        delta_r,
    })
}

/// A vector of `Lie(U)` supported on a single basis element:
/// `coefficient · e_{root, component}` with `coefficient = e^{log_coefficient}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightVector {
    pub root: usize,
    pub component: usize,
    pub log_coefficient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionSelection {
    /// `M_r(t)`.
    pub max_separation: LogScalar,
    /// `w = Ad(t_j^{-1}) e_{α,1}`.
    pub w: WeightVector,
    /// `‖w^{(1)}‖ ≥ … ≥ ‖w^{(r)}‖` after relabeling.
    pub images: Vec<LogScalar>,
    /// `relabeling[k]` is the original index of the entry placed at position `k`.
    pub relabeling: Vec<usize>,
    pub chosen_root: usize,
    /// Original index `i` attaining the maximum (placed first).
    pub source: usize,
    /// Original index `j` with `w = Ad(t_j^{-1}) e_{α,1}`.
    pub anchor: usize,
    /// Position `l` of the anchor after relabeling; `‖w^{(l)}‖ = 1`.
    pub anchor_position: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Direction {
    Selected(DirectionSelection),
    /// All entries coincide, so `M_r = 1` and no expanding direction exists.
    Degenerate,
}

/// Picks `(α, i, j)` with `α(t_i − t_j) = log M_r`, sets
/// `w = Ad(t_j^{-1}) e_{α,1}` and orders the images `Ad(t_k) w` by norm.
/// Ties in the maximum go to the lexicographically first `(α, i, j)`.
pub fn select_direction(action: &RootAction, tuple: &TranslationTuple) -> Result<Direction, GeometryError> {
    let entries = tuple.entries();
    let r = entries.len();
    if r < 2 {
        return Err(GeometryError::TooFewEntries { r });
    }
    let values: Vec<Vec<f64>> = entries
        .iter()
        .map(|t| action.root_values(t))
        .collect::<Result<_, _>>()?;

    let mut best: Option<(f64, usize, usize, usize)> = None;
    for alpha in 0..action.roots.len() {
        for i in 0..r {
            for j in 0..r {
                let diff: Vec<f64> = entries[i].iter().zip(&entries[j]).map(|(a, b)| a - b).collect();
                let v = dot(&action.roots[alpha], &diff);
                if best.is_none_or(|(b, ..)| v > b) {
                    best = Some((v, alpha, i, j));
                }
            }
        }
    }
    let (log_m, alpha, source, anchor) = best.expect("r >= 2 gives at least one candidate");
    if log_m <= 0.0 {
        return Ok(Direction::Degenerate);
    }

    let log_images: Vec<f64> = (0..r).map(|k| values[k][alpha] - values[anchor][alpha]).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        log_images[b]
            .total_cmp(&log_images[a])
            .then((a != source).cmp(&(b != source)))
            .then(a.cmp(&b))
    });
    let anchor_position = order.iter().position(|&k| k == anchor).expect("anchor present");
    let images = order.iter().map(|&k| LogScalar::from_ln(log_images[k])).collect();
    Ok(Direction::Selected(DirectionSelection {
        max_separation: LogScalar::from_ln(log_m),
        w: WeightVector {
            root: alpha,
            component: 0,
            log_coefficient: -values[anchor][alpha],
        },
        images,
        relabeling: order,
        chosen_root: alpha,
        source,
        anchor,
        anchor_position,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn u11_tuple(points: &[f64]) -> TranslationTuple {
        TranslationTuple::new(
            points.iter().map(|&s| vec![s, s]).collect(),
            ConeDomain::Horospherical { m: 1, n: 1 },
        )
        .unwrap()
    }

    #[test]
    fn star_norm_examples() {
        let u11 = RootAction::horospherical(1, 1);
        assert_eq!(u11.star_norm(&[0.0, 0.0]).unwrap().value(), 1.0);
        assert_relative_eq!(u11.star_norm(&[1.0, 1.0]).unwrap().value(), 7.389_056_098_930_65, max_relative = 1e-14);
        let u21 = RootAction::horospherical(2, 1);
        assert_relative_eq!(u21.star_norm(&[1.0, 2.0, 3.0]).unwrap().value(), 5f64.exp(), max_relative = 1e-14);
        assert_relative_eq!(u21.star_norm(&[1.0, 2.0, 3.0]).unwrap().value(), 148.413_159_102_576_6, max_relative = 1e-14);
    }

    #[test]
    fn star_norm_rejects_wrong_dimension() {
        let u21 = RootAction::horospherical(2, 1);
        assert!(matches!(u21.star_norm(&[1.0]), Err(GeometryError::DimensionMismatch { .. })));
    }

    #[test]
    fn floor_examples() {
        assert_eq!(floor_expanding(&[0.0, 0.0], 1, 1).unwrap(), 0.0);
        assert_eq!(floor_expanding(&[3.0, 1.0, 2.0], 2, 1).unwrap(), 1.0);
        assert_eq!(floor_expanding(&[5.0, 5.0], 1, 1).unwrap(), 5.0);
        assert!(floor_expanding(&[5.0, 5.0], 2, 1).is_err());
    }

    #[test]
    fn tuple_stats_examples() {
        let u11 = RootAction::horospherical(1, 1);
        let s = tuple_stats(&u11, &u11_tuple(&[2.0]), &ExpFloor).unwrap();
        assert_relative_eq!(s.delta_r.ln(), 2.0);
        assert!(s.min_separation.ln().is_infinite());

        let s = tuple_stats(&u11, &u11_tuple(&[2.0, 5.0]), &ExpFloor).unwrap();
        assert_relative_eq!(s.min_separation.ln(), 6.0);
        assert_relative_eq!(s.max_separation.ln(), 6.0);
        assert_relative_eq!(s.rho_r.ln(), 2.0);
        assert_relative_eq!(s.delta_r.ln(), 2.0);

        let s = tuple_stats(&u11, &u11_tuple(&[3.0, 3.0]), &ExpFloor).unwrap();
        assert_eq!(s.min_separation.value(), 1.0);
        assert_eq!(s.delta_r.value(), 1.0);
    }

    #[test]
    fn tuple_stats_rejects_growth_below_one() {
        let u11 = RootAction::horospherical(1, 1);
        let bad = |_: &[f64]| -0.5;
        assert!(matches!(
            tuple_stats(&u11, &u11_tuple(&[1.0]), &bad),
            Err(GeometryError::GrowthBelowOne { index: 0, .. })
        ));
    }

    #[test]
    fn tuple_rejects_points_outside_cone() {
        let dom = ConeDomain::Horospherical { m: 2, n: 1 };
        assert!(TranslationTuple::new(vec![vec![1.0, 2.0, 3.0]], dom).is_ok());
        assert!(TranslationTuple::new(vec![vec![1.0, 2.0, 4.0]], dom).is_err());
        assert!(TranslationTuple::new(vec![vec![-1.0, 2.0, 1.0]], dom).is_err());
        assert!(TranslationTuple::new(vec![], dom).is_err());
    }

    #[test]
    fn select_direction_u11() {
        let u11 = RootAction::horospherical(1, 1);
        let Direction::Selected(sel) = select_direction(&u11, &u11_tuple(&[2.0, 5.0])).unwrap() else {
            panic!("expected a selection");
        };
        assert_eq!((sel.source, sel.anchor), (1, 0));
        assert_eq!(sel.relabeling, vec![1, 0]);
        assert_relative_eq!(sel.images[0].ln(), 6.0);
        assert_eq!(sel.images[1].ln(), 0.0);
        assert_eq!(sel.anchor_position, 1);
        assert_relative_eq!(sel.w.log_coefficient, -4.0);
    }

    #[test]
    fn select_direction_u21() {
        let u21 = RootAction::horospherical(2, 1);
        let tuple = TranslationTuple::new(
            vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.0]],
            ConeDomain::Horospherical { m: 2, n: 1 },
        )
        .unwrap();
        let Direction::Selected(sel) = select_direction(&u21, &tuple).unwrap() else {
            panic!("expected a selection");
        };
        assert_eq!(sel.chosen_root, 1);
        assert_eq!((sel.source, sel.anchor), (0, 1));
        assert_relative_eq!(sel.max_separation.ln(), 5.0);
        assert_relative_eq!(sel.images[0].ln(), 5.0);
        assert_eq!(sel.images[1].ln(), 0.0);
        assert_eq!(sel.w.log_coefficient, 0.0);
    }

    #[test]
    fn select_direction_degenerate_and_short() {
        let u11 = RootAction::horospherical(1, 1);
        assert_eq!(select_direction(&u11, &u11_tuple(&[4.0, 4.0, 4.0])).unwrap(), Direction::Degenerate);
        assert!(matches!(
            select_direction(&u11, &u11_tuple(&[4.0])),
            Err(GeometryError::TooFewEntries { r: 1 })
        ));
    }

    #[test]
    fn json_loading_and_properness() {
        let a = RootAction::from_json(r#"{"dim_t": 2, "roots": [[1, 1]], "multiplicities": [1]}"#).unwrap();
        let u11 = RootAction::horospherical(1, 1);
        assert_eq!(a.roots(), u11.roots());
        assert_eq!(a.multiplicities(), u11.multiplicities());
        let back = RootAction::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        // One root cannot separate points of the plane...
        let improper = r#"{"dim_t": 2, "roots": [[1, 1]], "proper": true}"#;
        assert_eq!(RootAction::from_json(improper), Err(GeometryError::NotProper));
        // ...but it does on the balanced line t_1 = t_2.
        let proper = r#"{"dim_t": 2, "roots": [[1, 1]], "proper": true, "domain": {"kind": "horospherical", "m": 1, "n": 1}}"#;
        assert!(RootAction::from_json(proper).is_ok());
        assert!(RootAction::horospherical(2, 1)
            .is_proper_on(&ConeDomain::Horospherical { m: 2, n: 1 })
            .unwrap());
        assert!(matches!(
            RootAction::from_json(r#"{"dim_t": 2, "roots": [[0, 0]]}"#),
            Err(GeometryError::ZeroRoot { index: 0 })
        ));
        assert!(RootAction::from_json(r#"{"dim_t": 2, "roots": []}"#).is_err());
    }

    fn cone_point(m: usize, n: usize) -> impl Strategy<Value = Vec<f64>> {
        (proptest::collection::vec(0.0..10.0f64, m), proptest::collection::vec(0.01..1.0f64, n)).prop_map(
            move |(top, weights)| {
                let total: f64 = top.iter().sum();
                let wsum: f64 = weights.iter().sum();
                top.into_iter().chain(weights.iter().map(|w| total * w / wsum)).collect()
            },
        )
    }

    proptest! {
        #[test]
        fn star_norm_symmetric_and_submultiplicative(
            s in proptest::collection::vec(-20.0..20.0f64, 3),
            t in proptest::collection::vec(-20.0..20.0f64, 3),
        ) {
            let a = RootAction::horospherical(2, 1);
            let ns = a.star_norm(&s).unwrap();
            let neg: Vec<f64> = s.iter().map(|x| -x).collect();
            prop_assert_eq!(ns, a.star_norm(&neg).unwrap());
            prop_assert!(ns.ln() >= 0.0);
            let sum: Vec<f64> = s.iter().zip(&t).map(|(x, y)| x + y).collect();
            let lhs = a.star_norm(&sum).unwrap().ln();
            let rhs = ns.ln() + a.star_norm(&t).unwrap().ln();
            prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn tuple_stats_permutation_invariant(
            pts in proptest::collection::vec(cone_point(2, 2), 2..6),
            seed in 0usize..1000,
        ) {
            let a = RootAction::horospherical(2, 2);
            let dom = ConeDomain::Horospherical { m: 2, n: 2 };
            let tuple = TranslationTuple::new(pts.clone(), dom).unwrap();
            let mut order: Vec<usize> = (0..pts.len()).collect();
            order.rotate_left(seed % pts.len());
            order.reverse();
            let s1 = tuple_stats(&a, &tuple, &ExpFloor).unwrap();
            let s2 = tuple_stats(&a, &tuple.permuted(&order), &ExpFloor).unwrap();
            prop_assert_eq!(s1, s2);
            prop_assert!(s1.min_separation <= s1.max_separation);
            prop_assert!(s1.delta_r <= s1.rho_r);
        }

        #[test]
        fn delta_two_matches_direct_formula(p in cone_point(1, 2), q in cone_point(1, 2)) {
            let a = RootAction::horospherical(1, 2);
            let tuple = TranslationTuple::new(vec![p.clone(), q.clone()], ConeDomain::Horospherical { m: 1, n: 2 }).unwrap();
            let s = tuple_stats(&a, &tuple, &ExpFloor).unwrap();
            let floor = |t: &[f64]| t.iter().copied().fold(f64::INFINITY, f64::min);
            let sep = (0..2).map(|j| (p[0] - q[0] + p[1 + j] - q[1 + j]).abs()).fold(0.0, f64::max);
            let direct = floor(&p).min(floor(&q)).min(sep);
            prop_assert!((s.delta_r.ln() - direct).abs() <= 1e-12 * (1.0 + direct));
        }

        #[test]
        fn selection_respects_ordering(pts in proptest::collection::vec(cone_point(2, 1), 2..8)) {
            let a = RootAction::horospherical(2, 1);
            let tuple = TranslationTuple::new(pts, ConeDomain::Horospherical { m: 2, n: 1 }).unwrap();
            let stats = tuple_stats(&a, &tuple, &ExpFloor).unwrap();
            match select_direction(&a, &tuple).unwrap() {
                Direction::Degenerate => prop_assert_eq!(stats.max_separation.ln(), 0.0),
                Direction::Selected(sel) => {
                    let logs: Vec<f64> = sel.images.iter().map(|x| x.ln()).collect();
                    prop_assert!((logs[0] - stats.max_separation.ln()).abs() <= 1e-12 * (1.0 + logs[0]));
                    prop_assert!(logs.windows(2).all(|w| w[0] >= w[1]));
                    prop_assert_eq!(logs[sel.anchor_position], 0.0);
                    prop_assert!(*logs.last().unwrap() <= logs[0] - sel.max_separation.ln() + 1e-12);
                    let mut seen = sel.relabeling.clone();
                    seen.sort_unstable();
                    prop_assert_eq!(seen, (0..logs.len()).collect::<Vec<_>>());
                }
            }
        }
    }
}
