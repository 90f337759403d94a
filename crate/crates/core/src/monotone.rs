//! Closed-form maximal monotone operators on R^d.
//!
//! An operator is described by its kind; resolvents `J_ε = (I + εA)^{-1}`,
//! Yosida approximations `A_ε = (I − J_ε)/ε`, minimal sections, domain
//! projections and graph-membership tests are all evaluated in closed form,
//! so downstream solvers can rely on exact graph membership instead of inner
//! iterations. Every operation is a pure function of the immutable operator
//! description and is safe to call concurrently.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

/// Scalar convex function together with its exact proximal map.
///
/// `prox(eps, x)` must return `argmin_y { f(y) + (y−x)²/(2·eps) }` exactly;
/// `f` is assumed finite on all of R so the operator domain is the line.
#[derive(Clone)]
pub struct ConvexProx {
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub prox: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

/// The shipped operator kinds.
#[derive(Clone)]
pub enum OperatorKind {
    /// A ≡ {0}.
    Zero,
    /// A(x) = Mx with M + Mᵀ positive semidefinite.
    LinearMonotone { matrix: DMatrix<f64> },
    /// Subdifferential of the absolute value (1D).
    SubdiffAbs,
    /// Normal cone of the interval [lo, hi] (1D); ±∞ endpoints drop the
    /// constraint on that side.
    NormalConeInterval { lo: f64, hi: f64 },
    /// Normal cone of a box, componentwise intervals.
    NormalConeBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Subdifferential of a scalar convex function with exact prox (1D).
    SubdiffConvex(ConvexProx),
    /// scale·I + inner, the only sum shape with an exact composite resolvent.
    Sum {
        scale: f64,
        inner: Box<MonotoneOperator>,
    },
}

impl fmt::Debug for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorKind::Zero => write!(f, "Zero"),
            OperatorKind::LinearMonotone { matrix } => {
                write!(f, "LinearMonotone({}x{})", matrix.nrows(), matrix.ncols())
            }
            OperatorKind::SubdiffAbs => write!(f, "SubdiffAbs"),
            OperatorKind::NormalConeInterval { lo, hi } => {
                write!(f, "NormalConeInterval[{lo}, {hi}]")
            }
            OperatorKind::NormalConeBox { lo, hi } => {
                write!(f, "NormalConeBox({lo:?}, {hi:?})")
            }
            OperatorKind::SubdiffConvex(_) => write!(f, "SubdiffConvex"),
            OperatorKind::Sum { scale, inner } => write!(f, "Sum({scale}·I + {:?})", inner.kind),
        }
    }
}

/// A maximal monotone operator with closed-form resolvent.
#[derive(Clone, Debug)]
pub struct MonotoneOperator {
    kind: OperatorKind,
    dim: usize,
}

/// Minimal section A°(x): least-norm element of A(x), or the infinity flag
/// for x outside the domain.
#[derive(Debug, Clone, PartialEq)]
pub enum MinimalSection {
    Point(Vec<f64>),
    Infinite,
}

impl MinimalSection {
    pub fn unwrap_point(self) -> Vec<f64> {
        match self {
            MinimalSection::Point(p) => p,
            MinimalSection::Infinite => panic!("minimal section is infinite"),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            MinimalSection::Point(p) => norm(p),
            MinimalSection::Infinite => f64::INFINITY,
        }
    }
}

/// Certificate (a, m1, m2) for the coercivity inequality
/// `⟨A_ε(x), x−a⟩ ≥ m1·|A_ε(x)| − m2·|x−a| − m1·m2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoercivityCertificate {
    pub a: Vec<f64>,
    pub m1: f64,
    pub m2: f64,
}

/// A point (x, y) of the operator graph, validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl GraphPoint {
    pub fn new(op: &MonotoneOperator, x: Vec<f64>, y: Vec<f64>, tol: f64) -> Result<Self> {
        if !op.graph_contains(&x, &y, tol) {
            return Err(Error::InvalidArgument(format!(
                "({x:?}, {y:?}) is not in the operator graph within {tol}"
            )));
        }
        Ok(Self { x, y })
    }
}

#[inline]
fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[inline]
fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

impl MonotoneOperator {
    // ---- constructors -----------------------------------------------------

    pub fn zero(dim: usize) -> Self {
        Self {
            kind: OperatorKind::Zero,
            dim,
        }
    }

    /// Linear operator A(x) = Mx. Fails unless M + Mᵀ is positive
    /// semidefinite (eigenvalue test, tolerance 1e−10).
    pub fn linear(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidArgument("matrix must be square".into()));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        if eig.iter().any(|&l| l < -1e-10) {
            return Err(Error::UnsupportedOperator(format!(
                "M + Mᵀ has negative eigenvalue {:.3e}; not monotone",
                eig.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        let dim = matrix.nrows();
        Ok(Self {
            kind: OperatorKind::LinearMonotone { matrix },
            dim,
        })
    }

    /// Scalar multiple of the identity, c ≥ 0.
    pub fn scaled_identity(dim: usize, c: f64) -> Result<Self> {
        Self::linear(DMatrix::identity(dim, dim) * c)
    }

    pub fn subdiff_abs() -> Self {
        Self {
            kind: OperatorKind::SubdiffAbs,
            dim: 1,
        }
    }

    /// Normal cone of [lo, hi]. Degenerate intervals (lo == hi) construct but
    /// are rejected by solver entry points via [`MonotoneOperator::require_interior`].
    pub fn normal_cone_interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidArgument(format!(
                "normal cone interval needs lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            kind: OperatorKind::NormalConeInterval { lo, hi },
            dim: 1,
        })
    }

    pub fn normal_cone_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument("box bounds must have equal nonzero length".into()));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l <= h) {
                return Err(Error::InvalidArgument(format!(
                    "box interval needs lo <= hi, got [{l}, {h}]"
                )));
            }
        }
        let dim = lo.len();
        Ok(Self {
            kind: OperatorKind::NormalConeBox { lo, hi },
            dim,
        })
    }

    /// Subdifferential of a scalar convex function, given with its exact prox.
    pub fn subdiff_convex(f: impl Fn(f64) -> f64 + Send + Sync + 'static, prox: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: OperatorKind::SubdiffConvex(ConvexProx {
                f: Arc::new(f),
                prox: Arc::new(prox),
            }),
            dim: 1,
        }
    }

    /// Subdifferential of the hinge max(x, 0): a shipped SubdiffConvex kind.
    pub fn subdiff_hinge() -> Self {
        Self::subdiff_convex(
            |x| x.max(0.0),
            |eps, x| {
                if x >= eps {
                    x - eps
                } else if x <= 0.0 {
                    x
                } else {
                    0.0
                }
            },
        )
    }

    /// Sum of two operators. Accepted only when one summand is a scalar
    /// multiple of the identity, the shape with an exact composite resolvent.
    pub fn sum(left: MonotoneOperator, right: MonotoneOperator) -> Result<Self> {
        if left.dim != right.dim {
            return Err(Error::DimensionMismatch {
                expected: left.dim,
                got: right.dim,
            });
        }
        let as_scale = |op: &MonotoneOperator| -> Option<f64> {
            match &op.kind {
                OperatorKind::Zero => Some(0.0),
                OperatorKind::LinearMonotone { matrix } => {
                    let c = matrix[(0, 0)];
                    let scaled = DMatrix::identity(op.dim, op.dim) * c;
                    if (matrix - scaled).abs().max() <= 1e-14 {
                        Some(c)
                    } else {
                        None
                    }
                }
                _ => None,
            }
        };
        let dim = left.dim;
        let (scale, inner) = if let Some(c) = as_scale(&left) {
            (c, right)
        } else if let Some(c) = as_scale(&right) {
            (c, left)
        } else {
            return Err(Error::UnsupportedOperator(
                "sum requires one summand to be a scalar multiple of the identity".into(),
            ));
        };
        Ok(Self {
            kind: OperatorKind::Sum {
                scale,
                inner: Box::new(inner),
            },
            dim,
        })
    }

    // ---- accessors ---------------------------------------------------------

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            OperatorKind::Zero => "zero",
            OperatorKind::LinearMonotone { .. } => "linear_monotone",
            OperatorKind::SubdiffAbs => "subdiff_abs",
            OperatorKind::NormalConeInterval { .. } => "normal_cone_interval",
            OperatorKind::NormalConeBox { .. } => "normal_cone_box",
            OperatorKind::SubdiffConvex(_) => "subdiff_convex",
            OperatorKind::Sum { .. } => "sum",
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, OperatorKind::Zero)
    }

    /// True when Int(D(A)) is nonempty.
    pub fn has_interior(&self) -> bool {
        match &self.kind {
            OperatorKind::Zero
            | OperatorKind::LinearMonotone { .. }
            | OperatorKind::SubdiffAbs
            | OperatorKind::SubdiffConvex(_) => true,
            OperatorKind::NormalConeInterval { lo, hi } => lo < hi,
            OperatorKind::NormalConeBox { lo, hi } => lo.iter().zip(hi).all(|(l, h)| l < h),
            OperatorKind::Sum { inner, .. } => inner.has_interior(),
        }
    }

    /// Solver entry points reject operators whose domain has empty interior.
    pub fn require_interior(&self) -> Result<()> {
        if self.has_interior() {
            Ok(())
        } else {
            Err(Error::DegenerateDomain(format!("{:?}", self.kind)))
        }
    }

    // ---- resolvent and Yosida approximation --------------------------------

    /// Resolvent J_ε(x) = (I + εA)^{-1}(x); single-valued and 1-Lipschitz.
    pub fn resolvent(&self, eps: f64, x: &[f64]) -> Vec<f64> {
        assert!(eps > 0.0, "resolvent requires eps > 0");
        assert_eq!(x.len(), self.dim, "resolvent: dimension mismatch");
        match &self.kind {
            OperatorKind::Zero => x.to_vec(),
            OperatorKind::LinearMonotone { matrix } => {
                let a = DMatrix::identity(self.dim, self.dim) + matrix * eps;
                let rhs = DVector::from_column_slice(x);
                let y = a
                    .lu()
                    .solve(&rhs)
                    .expect("I + eps*M is invertible for monotone M");
                y.as_slice().to_vec()
            }
            OperatorKind::SubdiffAbs => {
                let v = x[0];
                vec![v.signum() * (v.abs() - eps).max(0.0)]
            }
            OperatorKind::NormalConeInterval { lo, hi } => vec![clamp(x[0], *lo, *hi)],
            OperatorKind::NormalConeBox { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&v, (&l, &h))| clamp(v, l, h))
                .collect(),
            OperatorKind::SubdiffConvex(c) => vec![(c.prox)(eps, x[0])],
            OperatorKind::Sum { scale, inner } => {
                // (I + ε(cI + B))^{-1}(x) = J^B_{ε/(1+εc)}(x/(1+εc))
                let denom = 1.0 + eps * scale;
                let scaled: Vec<f64> = x.iter().map(|v| v / denom).collect();
                inner.resolvent(eps / denom, &scaled)
            }
        }
    }

    /// Yosida approximation A_ε(x) = (x − J_ε(x))/ε; lies in A(J_ε(x)).
    ///
    /// Closed-form kinds avoid the difference quotient: at small ε the
    /// subtraction x − J_ε(x) cancels catastrophically, while e.g.
    /// `clamp(x/ε, −1, 1)` for ∂|·| is exact and monotone in floating point.
    pub fn yosida(&self, eps: f64, x: &[f64]) -> Vec<f64> {
        assert!(eps > 0.0, "yosida requires eps > 0");
        match &self.kind {
            OperatorKind::Zero => vec![0.0; self.dim],
            OperatorKind::LinearMonotone { matrix } => {
                // A_ε(x) = M J_ε(x) exactly, since A_ε(x) ∈ A(J_ε(x)).
                let j = self.resolvent(eps, x);
                let y = matrix * DVector::from_column_slice(&j);
                y.as_slice().to_vec()
            }
            OperatorKind::SubdiffAbs => vec![clamp(x[0] / eps, -1.0, 1.0)],
            OperatorKind::NormalConeInterval { lo, hi } => {
                vec![(x[0] - clamp(x[0], *lo, *hi)) / eps]
            }
            OperatorKind::NormalConeBox { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&v, (&l, &h))| (v - clamp(v, l, h)) / eps)
                .collect(),
            OperatorKind::SubdiffConvex(_) | OperatorKind::Sum { .. } => {
                let j = self.resolvent(eps, x);
                x.iter().zip(&j).map(|(a, b)| (a - b) / eps).collect()
            }
        }
    }

    /// True for kinds whose Yosida approximation goes through a callable or a
    /// composite resolvent; their difference quotient carries cancellation
    /// noise of order ulp(|x|)/ε that exactness checks must allow for.
    pub fn yosida_has_cancellation(&self) -> bool {
        matches!(
            self.kind,
            OperatorKind::SubdiffConvex(_) | OperatorKind::Sum { .. }
        )
    }

    /// Resolvent of the Yosida approximation: `(I + h·A_ε)^{-1}(x)`.
    ///
    /// Evaluated through the identity
    /// `(I + h A_ε)^{-1}(x) = (ε·x + h·J_{ε+h}(x)) / (ε+h)`,
    /// which removes any step-size restriction from the 1/ε-Lipschitz term.
    /// This is the single implicit-step formula shared by the probabilistic
    /// and finite-difference solvers.
    pub fn resolvent_of_yosida(&self, eps: f64, h: f64, x: &[f64]) -> Vec<f64> {
        assert!(eps > 0.0 && h > 0.0);
        if self.is_zero() {
            // A_ε ≡ 0: keep the step bit-exact rather than x·(ε+h)/(ε+h).
            return x.to_vec();
        }
        let j = self.resolvent(eps + h, x);
        x.iter()
            .zip(&j)
            .map(|(xi, ji)| (eps * xi + h * ji) / (eps + h))
            .collect()
    }

    // ---- minimal section, projection, graph --------------------------------

    /// Least-norm element of A(x), or the infinity flag outside the domain.
    pub fn minimal_section(&self, x: &[f64]) -> MinimalSection {
        match &self.kind {
            OperatorKind::Zero => MinimalSection::Point(vec![0.0; self.dim]),
            OperatorKind::LinearMonotone { matrix } => {
                let y = matrix * DVector::from_column_slice(x);
                MinimalSection::Point(y.as_slice().to_vec())
            }
            OperatorKind::SubdiffAbs => {
                let v = x[0];
                MinimalSection::Point(vec![if v == 0.0 { 0.0 } else { v.signum() }])
            }
            OperatorKind::NormalConeInterval { lo, hi } => {
                let v = x[0];
                if v < *lo || v > *hi {
                    MinimalSection::Infinite
                } else {
                    // 0 lies in the normal cone at every domain point.
                    MinimalSection::Point(vec![0.0])
                }
            }
            OperatorKind::NormalConeBox { lo, hi } => {
                let inside = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(&v, (&l, &h))| v >= l && v <= h);
                if inside {
                    MinimalSection::Point(vec![0.0; self.dim])
                } else {
                    MinimalSection::Infinite
                }
            }
            OperatorKind::SubdiffConvex(_) => {
                // No closed form is available from (f, prox) alone; A° is the
                // monotone limit of A_ε as ε ↓ 0, approximated at ε = 1e−12.
                let eps = 1e-12 * (1.0 + norm(x));
                MinimalSection::Point(self.yosida(eps, x))
            }
            OperatorKind::Sum { scale, inner } => match inner.minimal_section(x) {
                MinimalSection::Infinite => MinimalSection::Infinite,
                MinimalSection::Point(p) => MinimalSection::Point(
                    // proj of 0 onto cx + B(x): B(x) closed convex ⇒ cx + proj onto
                    // B(x) of −cx; for the shipped inner kinds B(x) is a point or a
                    // cone interval containing its own least-norm element, and the
                    // translate's least-norm element is cx + proj_{B(x)}(−cx).
                    self.sum_min_section(*scale, inner, x, p),
                ),
            },
        }
    }

    fn sum_min_section(
        &self,
        scale: f64,
        inner: &MonotoneOperator,
        x: &[f64],
        inner_min: Vec<f64>,
    ) -> Vec<f64> {
        // proj_{c·x + B(x)}(0) = c·x + proj_{B(x)}(−c·x).
        let target: Vec<f64> = x.iter().map(|v| -scale * v).collect();
        let proj = inner.project_onto_image(x, &target).unwrap_or(inner_min);
        x.iter()
            .zip(&proj)
            .map(|(xi, pi)| scale * xi + pi)
            .collect()
    }

    /// Projection of `target` onto the set A(x), where available in closed
    /// form; None falls back to the minimal section.
    fn project_onto_image(&self, x: &[f64], target: &[f64]) -> Option<Vec<f64>> {
        match &self.kind {
            OperatorKind::Zero => Some(vec![0.0; self.dim]),
            OperatorKind::LinearMonotone { matrix } => {
                let y = matrix * DVector::from_column_slice(x);
                Some(y.as_slice().to_vec())
            }
            OperatorKind::SubdiffAbs => {
                let v = x[0];
                Some(vec![if v == 0.0 {
                    clamp(target[0], -1.0, 1.0)
                } else {
                    v.signum()
                }])
            }
            OperatorKind::NormalConeInterval { lo, hi } => {
                let v = x[0];
                if v < *lo || v > *hi {
                    None
                } else {
                    let (cl, ch) = cone_interval(v, *lo, *hi);
                    Some(vec![clamp(target[0], cl, ch)])
                }
            }
            OperatorKind::NormalConeBox { lo, hi } => {
                let mut out = Vec::with_capacity(self.dim);
                for ((&v, &t), (&l, &h)) in x.iter().zip(target).zip(lo.iter().zip(hi)) {
                    if v < l || v > h {
                        return None;
                    }
                    let (cl, ch) = cone_interval(v, l, h);
                    out.push(clamp(t, cl, ch));
                }
                Some(out)
            }
            _ => None,
        }
    }

    /// Euclidean projection onto the closure of the operator domain.
    pub fn project_domain_closure(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            OperatorKind::Zero
            | OperatorKind::LinearMonotone { .. }
            | OperatorKind::SubdiffAbs
            | OperatorKind::SubdiffConvex(_) => x.to_vec(),
            OperatorKind::NormalConeInterval { lo, hi } => vec![clamp(x[0], *lo, *hi)],
            OperatorKind::NormalConeBox { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&v, (&l, &h))| clamp(v, l, h))
                .collect(),
            OperatorKind::Sum { inner, .. } => inner.project_domain_closure(x),
        }
    }

    /// dist(y, A(x)) in closed form per kind; +∞ when x is outside the
    /// domain.
    ///
    /// For `SubdiffConvex` the prox characterisation
    /// `y ∈ ∂f(x) ⟺ prox_f(x + y) = x` is used; the residual
    /// `|prox_f(x+y) − x|` is a lower bound on the distance, so it is exact
    /// for members and may under-measure the distance of near-members.
    pub fn graph_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            OperatorKind::Zero => norm(y),
            OperatorKind::LinearMonotone { matrix } => {
                let ax = matrix * DVector::from_column_slice(x);
                y.iter()
                    .zip(ax.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            }
            OperatorKind::SubdiffAbs => {
                let v = x[0];
                if v > 0.0 {
                    (y[0] - 1.0).abs()
                } else if v < 0.0 {
                    (y[0] + 1.0).abs()
                } else {
                    (y[0].abs() - 1.0).max(0.0)
                }
            }
            OperatorKind::NormalConeInterval { lo, hi } => {
                interval_cone_dist(x[0], y[0], *lo, *hi).unwrap_or(f64::INFINITY)
            }
            OperatorKind::NormalConeBox { lo, hi } => {
                let mut d2 = 0.0;
                for ((&v, &w), (&l, &h)) in x.iter().zip(y).zip(lo.iter().zip(hi)) {
                    match interval_cone_dist(v, w, l, h) {
                        Some(d) => d2 += d * d,
                        None => return f64::INFINITY,
                    }
                }
                d2.sqrt()
            }
            OperatorKind::SubdiffConvex(c) => ((c.prox)(1.0, x[0] + y[0]) - x[0]).abs(),
            OperatorKind::Sum { scale, inner } => {
                let shifted: Vec<f64> =
                    y.iter().zip(x).map(|(yi, xi)| yi - scale * xi).collect();
                inner.graph_distance(x, &shifted)
            }
        }
    }

    /// True iff dist(y, A(x)) ≤ tol.
    pub fn graph_contains(&self, x: &[f64], y: &[f64], tol: f64) -> bool {
        assert!(tol >= 0.0);
        self.graph_distance(x, y) <= tol
    }

    // ---- coercivity certificate ---------------------------------------------

    /// Certificate (a, m1, m2) for the coercivity inequality: `a` an interior
    /// domain point, `m1` the radius of a ball around `a` inside the domain,
    /// `m2` the sup of |A°| over that ball.
    pub fn coercivity_certificate(&self) -> Result<CoercivityCertificate> {
        self.require_interior()?;
        let cert = match &self.kind {
            OperatorKind::Zero => CoercivityCertificate {
                a: vec![0.0; self.dim],
                m1: 1.0,
                m2: 0.0,
            },
            OperatorKind::LinearMonotone { matrix } => {
                // sup_{|u|<=1} |Mu| is the spectral norm of M.
                let mtm = matrix.transpose() * matrix;
                let m2 = mtm
                    .symmetric_eigenvalues()
                    .iter()
                    .cloned()
                    .fold(0.0f64, f64::max)
                    .max(0.0)
                    .sqrt();
                CoercivityCertificate {
                    a: vec![0.0; self.dim],
                    m1: 1.0,
                    m2,
                }
            }
            OperatorKind::SubdiffAbs => CoercivityCertificate {
                a: vec![0.0],
                m1: 1.0,
                m2: 1.0,
            },
            OperatorKind::NormalConeInterval { lo, hi } => {
                let (a, m1) = interval_center(*lo, *hi);
                // A° = 0 on the whole closed interval.
                CoercivityCertificate {
                    a: vec![a],
                    m1,
                    m2: 0.0,
                }
            }
            OperatorKind::NormalConeBox { lo, hi } => {
                let mut a = Vec::with_capacity(self.dim);
                let mut m1 = f64::INFINITY;
                for (&l, &h) in lo.iter().zip(hi) {
                    let (c, r) = interval_center(l, h);
                    a.push(c);
                    m1 = m1.min(r);
                }
                CoercivityCertificate { a, m1, m2: 0.0 }
            }
            OperatorKind::SubdiffConvex(_) | OperatorKind::Sum { .. } => {
                // Constructed numerically: a = projection of 0 into the domain,
                // m1 = 1, m2 = sup of |A_ε| at tiny ε over a fine grid of the
                // ball (a monotone lower envelope of sup |A°|), padded 10%.
                let a = self.project_domain_closure(&vec![0.0; self.dim]);
                let m1 = 1.0f64;
                let mut m2 = 0.0f64;
                let grid = 201;
                if self.dim == 1 {
                    for i in 0..grid {
                        let u = a[0] - m1 + 2.0 * m1 * i as f64 / (grid - 1) as f64;
                        m2 = m2.max(norm(&self.yosida(1e-10, &[u])));
                    }
                } else {
                    for i in 0..grid {
                        let mut u = a.clone();
                        for (j, uj) in u.iter_mut().enumerate() {
                            let t = ((i * (j + 3)) % grid) as f64 / (grid - 1) as f64;
                            *uj += (2.0 * t - 1.0) * m1 / (self.dim as f64).sqrt();
                        }
                        m2 = m2.max(norm(&self.yosida(1e-10, &u)));
                    }
                }
                CoercivityCertificate { a, m1, m2: m2 * 1.1 }
            }
        };
        Ok(cert)
    }

    /// Checks the coercivity inequality of a certificate over a grid of
    /// (ε, x) samples; returns the most negative slack found.
    pub fn certificate_slack(&self, cert: &CoercivityCertificate, eps_grid: &[f64], xs: &[Vec<f64>]) -> f64 {
        let mut worst = f64::INFINITY;
        for &eps in eps_grid {
            for x in xs {
                let ae = self.yosida(eps, x);
                let xa: Vec<f64> = x.iter().zip(&cert.a).map(|(v, a)| v - a).collect();
                let lhs: f64 = ae.iter().zip(&xa).map(|(p, q)| p * q).sum();
                let rhs = cert.m1 * norm(&ae) - cert.m2 * norm(&xa) - cert.m1 * cert.m2;
                worst = worst.min(lhs - rhs);
            }
        }
        worst
    }
}

/// Normal cone of [lo, hi] at the domain point v, as an interval of slopes.
fn cone_interval(v: f64, lo: f64, hi: f64) -> (f64, f64) {
    if lo == hi {
        (f64::NEG_INFINITY, f64::INFINITY)
    } else if v <= lo {
        (f64::NEG_INFINITY, 0.0)
    } else if v >= hi {
        (0.0, f64::INFINITY)
    } else {
        (0.0, 0.0)
    }
}

/// Distance from w to the normal cone of [lo, hi] at v; None when v is
/// outside the domain.
fn interval_cone_dist(v: f64, w: f64, lo: f64, hi: f64) -> Option<f64> {
    if v < lo || v > hi {
        return None;
    }
    let (cl, ch) = cone_interval(v, lo, hi);
    Some((w - clamp(w, cl, ch)).abs())
}

/// Interior point and inscribed radius of [lo, hi].
fn interval_center(lo: f64, hi: f64) -> (f64, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => ((lo + hi) * 0.5, (hi - lo) * 0.5),
        (true, false) => (lo + 1.0, 1.0),
        (false, true) => (hi - 1.0, 1.0),
        (false, false) => (0.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{uniform, SubStream};
    use nalgebra::DMatrix;

    fn ident(d: usize) -> MonotoneOperator {
        MonotoneOperator::scaled_identity(d, 1.0).unwrap()
    }

    #[test]
    fn resolvent_closed_forms() {
        // Normal cone: projection for out-of-domain points.
        let nc = MonotoneOperator::normal_cone_interval(0.0, f64::INFINITY).unwrap();
        assert_eq!(nc.resolvent(0.5, &[-1.0])[0], 0.0);
        // Soft thresholding.
        let abs = MonotoneOperator::subdiff_abs();
        assert_eq!(abs.resolvent(0.5, &[2.0])[0], 1.5);
        // (1+ε)y = x.
        let lin = ident(1);
        assert!((lin.resolvent(1.0, &[4.0])[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn yosida_closed_forms() {
        let lin = ident(1);
        assert!((lin.yosida(1.0, &[4.0])[0] - 2.0).abs() < 1e-14);
        let abs = MonotoneOperator::subdiff_abs();
        let y = abs.yosida(0.5, &[0.2])[0];
        assert!((y - 0.4).abs() < 1e-14);
        assert!(abs.graph_contains(&[0.0], &[y], 1e-12));
        let nc = MonotoneOperator::normal_cone_interval(0.0, f64::INFINITY).unwrap();
        assert!((nc.yosida(0.25, &[-1.0])[0] - (-4.0)).abs() < 1e-14);
    }

    #[test]
    fn minimal_sections() {
        let abs = MonotoneOperator::subdiff_abs();
        assert_eq!(abs.minimal_section(&[0.0]), MinimalSection::Point(vec![0.0]));
        let nc = MonotoneOperator::normal_cone_interval(0.0, 1.0).unwrap();
        assert_eq!(nc.minimal_section(&[0.0]), MinimalSection::Point(vec![0.0]));
        assert_eq!(nc.minimal_section(&[2.0]), MinimalSection::Infinite);
    }

    #[test]
    fn domain_projections() {
        let nc = MonotoneOperator::normal_cone_interval(0.0, 1.0).unwrap();
        assert_eq!(nc.project_domain_closure(&[3.0]), vec![1.0]);
        let abs = MonotoneOperator::subdiff_abs();
        assert_eq!(abs.project_domain_closure(&[-7.0]), vec![-7.0]);
        let boxed = MonotoneOperator::normal_cone_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(boxed.project_domain_closure(&[2.0, -1.0]), vec![1.0, 0.0]);
        // Idempotent.
        let p = boxed.project_domain_closure(&[2.0, -1.0]);
        assert_eq!(boxed.project_domain_closure(&p), p);
    }

    #[test]
    fn graph_membership() {
        let abs = MonotoneOperator::subdiff_abs();
        assert!(abs.graph_contains(&[0.0], &[0.7], 0.0));
        let nc = MonotoneOperator::normal_cone_interval(0.0, f64::INFINITY).unwrap();
        assert!(!nc.graph_contains(&[1.0], &[-0.1], 0.0));
        assert!(nc.graph_contains(&[0.0], &[-5.0], 0.0));
        let lin = ident(1);
        assert!(lin.graph_contains(&[3.0], &[3.0], 0.0));
    }

    #[test]
    fn sum_requires_scalar_identity_summand() {
        let a = MonotoneOperator::subdiff_abs();
        let b = MonotoneOperator::subdiff_abs();
        assert!(MonotoneOperator::sum(a.clone(), b).is_err());
        let ok = MonotoneOperator::sum(MonotoneOperator::scaled_identity(1, 0.5).unwrap(), a);
        assert!(ok.is_ok());
        // Resolvent of 0.5I + ∂|·| satisfies the defining inclusion.
        let op = ok.unwrap();
        for &x in &[-3.0, -0.1, 0.0, 0.2, 5.0] {
            for &eps in &[0.1, 0.5, 2.0] {
                let j = op.resolvent(eps, &[x]);
                let a_val = op.yosida(eps, &[x]);
                assert!(op.graph_contains(&j, &a_val, 1e-9), "x={x} eps={eps}");
                // Defining equation J + eps*A_eps(x) = x.
                assert!((j[0] + eps * a_val[0] - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_rejects_non_monotone() {
        let m = DMatrix::from_row_slice(1, 1, &[-0.5]);
        assert!(MonotoneOperator::linear(m).is_err());
        // Rotation is monotone (skew part irrelevant).
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(MonotoneOperator::linear(rot).is_ok());
    }

    #[test]
    fn degenerate_interval_rejected_by_solvers() {
        let deg = MonotoneOperator::normal_cone_interval(1.0, 1.0).unwrap();
        assert!(matches!(deg.require_interior(), Err(Error::DegenerateDomain(_))));
    }

    #[test]
    fn certificates_match_spec_examples() {
        let nc = MonotoneOperator::normal_cone_interval(-1.0, 1.0).unwrap();
        let c = nc.coercivity_certificate().unwrap();
        assert_eq!((c.a[0], c.m1, c.m2), (0.0, 1.0, 0.0));
        let abs = MonotoneOperator::subdiff_abs();
        let c = abs.coercivity_certificate().unwrap();
        assert_eq!((c.a[0], c.m1, c.m2), (0.0, 1.0, 1.0));
        let lin = ident(1);
        let c = lin.coercivity_certificate().unwrap();
        assert_eq!((c.a[0], c.m1, c.m2), (0.0, 1.0, 1.0));
    }

    /// Dense-grid oracle for the coercivity inequality over (ε, x) in
    /// (0,1] × [−10,10], for every shipped kind.
    #[test]
    fn certificate_inequality_on_grid() {
        let eps_grid: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        let xs: Vec<Vec<f64>> = (0..401).map(|i| vec![-10.0 + i as f64 * 0.05]).collect();
        for op in shipped_1d() {
            let cert = op.coercivity_certificate().unwrap();
            let slack = op.certificate_slack(&cert, &eps_grid, &xs);
            assert!(slack >= -1e-9, "{:?}: slack {slack}", op.kind());
        }
        // 2-d box.
        let boxed = MonotoneOperator::normal_cone_box(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let cert = boxed.coercivity_certificate().unwrap();
        let xs2: Vec<Vec<f64>> = (0..100)
            .map(|i| {
                vec![
                    -10.0 + (i % 10) as f64 * 2.0,
                    -10.0 + (i / 10) as f64 * 2.0,
                ]
            })
            .collect();
        let slack = boxed.certificate_slack(&cert, &eps_grid, &xs2);
        assert!(slack >= -1e-9, "box slack {slack}");
    }

    fn shipped_1d() -> Vec<MonotoneOperator> {
        vec![
            MonotoneOperator::zero(1),
            ident(1),
            MonotoneOperator::subdiff_abs(),
            MonotoneOperator::normal_cone_interval(-1.0, 1.0).unwrap(),
            MonotoneOperator::normal_cone_interval(0.0, f64::INFINITY).unwrap(),
            MonotoneOperator::subdiff_hinge(),
            MonotoneOperator::sum(
                MonotoneOperator::scaled_identity(1, 0.5).unwrap(),
                MonotoneOperator::subdiff_abs(),
            )
            .unwrap(),
        ]
    }

    /// Seeded property sweep: nonexpansiveness, Lipschitz bound, monotonicity
    /// and graph consistency of the Yosida approximation.
    #[test]
    fn yosida_property_sweep() {
        for (op_idx, op) in shipped_1d().into_iter().enumerate() {
            for i in 0..2000u64 {
                let u = |slot| uniform(99, SubStream::Perturbation, op_idx as u64, i, slot);
                let x = [20.0 * u(0) - 10.0];
                let xp = [20.0 * u(1) - 10.0];
                let eps = 1e-3 + u(2);
                let jx = op.resolvent(eps, &x);
                let jxp = op.resolvent(eps, &xp);
                let dx = (x[0] - xp[0]).abs();
                assert!(
                    (jx[0] - jxp[0]).abs() <= dx + 1e-12,
                    "nonexpansive fails {:?}",
                    op.kind()
                );
                let ax = op.yosida(eps, &x);
                let axp = op.yosida(eps, &xp);
                assert!(
                    (ax[0] - axp[0]).abs() <= dx / eps + 1e-9,
                    "lipschitz fails {:?}",
                    op.kind()
                );
                let mono_tol = if op.yosida_has_cancellation() {
                    1e-12 + 8.0 * f64::EPSILON * (x[0].abs() + xp[0].abs()) / eps * dx
                } else {
                    1e-12
                };
                assert!(
                    (ax[0] - axp[0]) * (x[0] - xp[0]) >= -mono_tol,
                    "monotonicity fails {:?}",
                    op.kind()
                );
                assert!(
                    op.graph_contains(&jx, &ax, 1e-9),
                    "graph consistency fails {:?} at x={}",
                    op.kind(),
                    x[0]
                );
            }
        }
    }

    /// Yosida-of-Yosida: the resolvent-of-Yosida output solves its defining
    /// equation, and the composed approximation equals A_{ε+λ}.
    #[test]
    fn yosida_of_yosida_identity() {
        for op in shipped_1d() {
            for i in 0..200u64 {
                let u = |slot| uniform(7, SubStream::Perturbation, 0, i, slot);
                let x = [8.0 * u(0) - 4.0];
                let eps = 0.05 + u(1);
                let lam = 0.05 + u(2);
                let y = op.resolvent_of_yosida(eps, lam, &x);
                // Defining equation y + λ A_ε(y) = x, composed from public ops.
                let ay = op.yosida(eps, &y);
                assert!(
                    (y[0] + lam * ay[0] - x[0]).abs() <= 1e-9,
                    "{:?}: defining equation",
                    op.kind()
                );
                // (A_ε)_λ = A_{ε+λ}.
                let lhs = (x[0] - y[0]) / lam;
                let rhs = op.yosida(eps + lam, &x)[0];
                assert!((lhs - rhs).abs() <= 1e-9, "{:?}: composition", op.kind());
            }
        }
        // Closed-form slope for the identity operator: 1/(1+ε+λ).
        let lin = ident(1);
        let (eps, lam, x) = (0.3, 0.2, 2.0);
        let y = lin.resolvent_of_yosida(eps, lam, &[x]);
        let slope = (x - y[0]) / (lam * x);
        assert!((slope - 1.0 / (1.0 + eps + lam)).abs() < 1e-12);
    }

    /// |A_ε(x)| increases to |A°(x)| as ε ↓ 0 on the domain and diverges
    /// outside.
    #[test]
    fn minimal_section_limit() {
        let cases: Vec<(MonotoneOperator, f64)> = vec![
            (MonotoneOperator::subdiff_abs(), 0.7),
            (MonotoneOperator::subdiff_abs(), 0.0),
            (ident(1), 2.0),
            (MonotoneOperator::normal_cone_interval(0.0, 1.0).unwrap(), 0.5),
        ];
        for (op, x) in cases {
            let mut prev = -f64::INFINITY;
            for k in 1..=6 {
                let eps = 10f64.powi(-k);
                let n = norm(&op.yosida(eps, &[x]));
                assert!(n >= prev - 1e-12, "|A_eps| not increasing for {:?}", op.kind());
                prev = n;
            }
            let target = op.minimal_section(&[x]).norm();
            assert!((prev - target).abs() < 1e-5, "{:?}: {prev} vs {target}", op.kind());
        }
        // Outside the domain the Yosida norm diverges like 1/ε.
        let nc = MonotoneOperator::normal_cone_interval(0.0, 1.0).unwrap();
        let n1 = norm(&nc.yosida(1e-2, &[2.0]));
        let n2 = norm(&nc.yosida(1e-4, &[2.0]));
        assert!(n2 > 50.0 * n1);
        assert_eq!(nc.minimal_section(&[2.0]), MinimalSection::Infinite);
    }

    #[test]
    fn graph_point_validates() {
        let nc = MonotoneOperator::normal_cone_interval(0.0, f64::INFINITY).unwrap();
        assert!(GraphPoint::new(&nc, vec![0.0], vec![-2.0], 0.0).is_ok());
        assert!(GraphPoint::new(&nc, vec![1.0], vec![-2.0], 0.0).is_err());
    }
}
