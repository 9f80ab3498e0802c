//! Lower/upper squared-distance bound matrices.
//!
//! Every off-diagonal pair is either *observed* (lower = upper = m²),
//! *partially observed* (`alpha_l·|y_i - y_j|² <= L_ij <= alpha_u·|y_i - y_j|²`)
//! or *unobserved* (`alpha_l = 0`, `alpha_u = ∞`). Infinite upper bounds are
//! stored as the finite sentinel [`UNBOUNDED`].

use std::collections::HashSet;
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{BmcError, Result};
use crate::linalg::DistanceMatrix;

/// Finite stand-in for an infinite upper bound.
pub const UNBOUNDED: f64 = 1e18;

/// Largest asymmetry tolerated between `(i, j)` and `(j, i)` bound entries.
const SYMMETRY_TOL: f64 = 1e-12;

pub fn is_unbounded(v: f64) -> bool {
    v >= UNBOUNDED
}

/// `n` points in `d` ambient dimensions, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: DMatrix<f64>,
    labels: Option<Vec<i64>>,
}

impl PointCloud {
    pub fn new(coords: DMatrix<f64>, labels: Option<Vec<i64>>) -> Result<Self> {
        if !coords.iter().all(|v| v.is_finite()) {
            return Err(BmcError::NonFinite("point coordinates".into()));
        }
        if let Some(l) = &labels {
            if l.len() != coords.nrows() {
                return Err(BmcError::Dimension(format!(
                    "{} labels for {} points",
                    l.len(),
                    coords.nrows()
                )));
            }
        }
        Ok(PointCloud { coords, labels })
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn squared_distances(&self) -> DistanceMatrix {
        DistanceMatrix::from_points(&self.coords)
    }
}

/// Per-pair scaling applied to squared ambient distances. A scalar is
/// broadcast to every pair; per-pair matrices are read from their upper
/// triangle. Values `>= UNBOUNDED` (including `+inf`) mean "no bound".
#[derive(Debug, Clone, PartialEq)]
pub enum Scaling {
    Uniform(f64),
    PerPair(DMatrix<f64>),
}

impl Scaling {
    fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            Scaling::Uniform(a) => *a,
            Scaling::PerPair(m) => m[(i, j)],
        }
    }

    fn check(&self, n: usize, name: &str) -> Result<()> {
        match self {
            Scaling::Uniform(a) if a.is_nan() || *a < 0.0 => Err(BmcError::Parameter(format!(
                "{name} must be a non-negative number, got {a}"
            ))),
            Scaling::PerPair(m) if m.shape() != (n, n) => Err(BmcError::Dimension(format!(
                "{name} is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols()
            ))),
            Scaling::PerPair(m) if m.iter().any(|a| a.is_nan() || *a < 0.0) => Err(
                BmcError::Parameter(format!("{name} has negative or NaN entries")),
            ),
            _ => Ok(()),
        }
    }
}

impl From<f64> for Scaling {
    fn from(a: f64) -> Self {
        Scaling::Uniform(a)
    }
}

/// Known manifold distances `M_ij` for a sparse set of unordered pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservedDistances {
    pairs: Vec<(usize, usize, f64)>,
}

impl ObservedDistances {
    pub fn new(pairs: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for &(i, j, m) in &pairs {
            if i == j {
                return Err(BmcError::Parameter(format!(
                    "observed distance on the diagonal ({i}, {i})"
                )));
            }
            if !m.is_finite() || m < 0.0 {
                return Err(BmcError::Parameter(format!(
                    "observed distance ({i}, {j}) = {m} must be finite and non-negative"
                )));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(BmcError::Parameter(format!(
                    "duplicate observed pair ({i}, {j})"
                )));
            }
        }
        Ok(ObservedDistances { pairs })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Solver input: bounds on every squared distance plus the truncation rank.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedDistanceProblem {
    lower: DMatrix<f64>,
    upper: DMatrix<f64>,
    r: usize,
}

impl BoundedDistanceProblem {
    pub fn new(lower: DMatrix<f64>, upper: DMatrix<f64>, r: usize) -> Result<Self> {
        let violations = validate_bounds(&lower, &upper)?;
        if !violations.is_empty() {
            let shown: Vec<String> = violations.iter().take(10).map(|v| v.to_string()).collect();
            return Err(BmcError::Constraint(format!(
                "{} bound violation(s): {}",
                violations.len(),
                shown.join("; ")
            )));
        }
        let n = lower.nrows();
        if r >= n {
            return Err(BmcError::Parameter(format!(
                "truncation rank r = {r} must be below n = {n}"
            )));
        }
        Ok(BoundedDistanceProblem { lower, upper, r })
    }

    /// Fully observed problem with `lower = upper = d`.
    pub fn exact(d: &DistanceMatrix, r: usize) -> Result<Self> {
        Self::new(d.as_matrix().clone(), d.as_matrix().clone(), r)
    }

    pub fn n(&self) -> usize {
        self.lower.nrows()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DMatrix<f64> {
        &self.upper
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_bounds(&self.lower, &self.upper).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    LowerAboveUpper,
    Asymmetric,
    NonzeroDiagonal,
    Negative,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::LowerAboveUpper => "lower bound exceeds upper bound",
            ViolationKind::Asymmetric => "bounds are not symmetric",
            ViolationKind::NonzeroDiagonal => "diagonal bound is not zero",
            ViolationKind::Negative => "negative bound",
            ViolationKind::NonFinite => "non-finite bound",
        };
        write!(f, "({}, {}): {what}", self.i, self.j)
    }
}

/// Every entry at which the bound pair is unusable. Only shape mismatches
/// are reported as errors; an empty list means the bounds are valid.
pub fn validate_bounds(lower: &DMatrix<f64>, upper: &DMatrix<f64>) -> Result<Vec<Violation>> {
    if !lower.is_square() || lower.shape() != upper.shape() {
        return Err(BmcError::Dimension(format!(
            "bounds must be square and equal in shape, got {:?} and {:?}",
            lower.shape(),
            upper.shape()
        )));
    }
    let n = lower.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let (lo, up) = (lower[(i, j)], upper[(i, j)]);
            let mut push = |kind| out.push(Violation { i, j, kind });
            if !lo.is_finite() || !up.is_finite() {
                push(ViolationKind::NonFinite);
                continue;
            }
            if lo < 0.0 || up < 0.0 {
                push(ViolationKind::Negative);
            }
            if lo > up {
                push(ViolationKind::LowerAboveUpper);
            }
            if i == j && (lo != 0.0 || up != 0.0) {
                push(ViolationKind::NonzeroDiagonal);
            }
            if i < j {
                let (lo_t, up_t) = (lower[(j, i)], upper[(j, i)]);
                let up_asym = if is_unbounded(up) && is_unbounded(up_t) {
                    0.0
                } else {
                    (up - up_t).abs()
                };
                if (lo - lo_t).abs() > SYMMETRY_TOL || up_asym > SYMMETRY_TOL {
                    push(ViolationKind::Asymmetric);
                }
            }
        }
    }
    Ok(out)
}

/// Builds `D^l` and `D^u` from a point cloud. Observed pairs get
/// `lower = upper = m²`; every other pair is the scaled squared ambient
/// distance. Diagonals are zero.
pub fn build_bounds(
    cloud: &PointCloud,
    alpha_l: &Scaling,
    alpha_u: &Scaling,
    observed: &ObservedDistances,
    r: usize,
) -> Result<BoundedDistanceProblem> {
    let n = cloud.n();
    alpha_l.check(n, "alpha_l")?;
    alpha_u.check(n, "alpha_u")?;

    let d = cloud.squared_distances();
    let d = d.as_matrix();
    let mut lower = DMatrix::zeros(n, n);
    let mut upper = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let (al, au) = (alpha_l.at(i, j), alpha_u.at(i, j));
            if al > au {
                return Err(BmcError::Constraint(format!(
                    "alpha_l = {al} exceeds alpha_u = {au} at ({i}, {j})"
                )));
            }
            let lo = scale(al, d[(i, j)]);
            let up = scale(au, d[(i, j)]);
            lower[(i, j)] = lo;
            lower[(j, i)] = lo;
            upper[(i, j)] = up;
            upper[(j, i)] = up;
        }
    }
    for &(i, j, m) in observed.pairs() {
        if i >= n || j >= n {
            return Err(BmcError::Index { i, j, n });
        }
        let sq = m * m;
        lower[(i, j)] = sq;
        lower[(j, i)] = sq;
        upper[(i, j)] = sq;
        upper[(j, i)] = sq;
    }
    BoundedDistanceProblem::new(lower, upper, r)
}

fn scale(alpha: f64, sq_dist: f64) -> f64 {
    if is_unbounded(alpha) {
        return UNBOUNDED;
    }
    (alpha * sq_dist).min(UNBOUNDED)
}
