//! Linear matrix inequalities in matrix-valued decision variables.
//!
//! Scalar layout: variables are laid out in declaration order. A symmetric
//! `n×n` variable contributes its upper triangle in row-major order
//! (`(0,0), (0,1), …, (0,n−1), (1,1), …`), a rectangular variable all
//! entries row-major, and a scalar one unknown.
//!
//! Strict constraints `F ≺ 0` / `F ≻ 0` are enforced as `F ⪯ −εI` /
//! `F ⪰ εI` with `ε = margin · max(1, ‖F₀‖_max)`, where `F₀` is the constant
//! part of the constraint.

mod ipm;
mod json;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::extreme_eigs;
use crate::matrix::Mat;

pub use ipm::{IpmSettings, IpmStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Symmetric(usize),
    Rectangular(usize, usize),
    Scalar,
}

impl VarKind {
    pub fn shape(self) -> (usize, usize) {
        match self {
            VarKind::Symmetric(n) => (n, n),
            VarKind::Rectangular(r, c) => (r, c),
            VarKind::Scalar => (1, 1),
        }
    }

    pub fn scalar_count(self) -> usize {
        match self {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Rectangular(r, c) => r * c,
            VarKind::Scalar => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cone {
    Free,
    PositiveDefinite,
    PositiveSemidefinite,
    PositiveScalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarId {
    pub index: usize,
    pub kind: VarKind,
    pub cone: Cone,
}

#[derive(Clone, Debug)]
struct VarInfo {
    name: String,
    id: VarId,
    offset: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    NegDef,
    PosSemiDef,
    PosDef,
}

impl Sense {
    pub fn is_strict(self) -> bool {
        !matches!(self, Sense::PosSemiDef)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sense::NegDef => "< 0",
            Sense::PosSemiDef => ">= 0",
            Sense::PosDef => "> 0",
        }
    }
}

/// `left · X · right` (or `left · Xᵀ · right`). For a scalar variable `x`,
/// the product reads `left · (x I) · right`.
#[derive(Clone, Debug)]
pub struct LinTerm {
    pub left: Mat,
    pub var: VarId,
    pub right: Mat,
    pub transposed: bool,
}

/// A rectangular affine expression `constant + Σ terms`.
#[derive(Clone, Debug)]
pub struct MatExpr {
    pub constant: Mat,
    pub terms: Vec<LinTerm>,
}

impl MatExpr {
    pub fn constant(m: Mat) -> Self {
        MatExpr { constant: m, terms: vec![] }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatExpr::constant(Mat::zeros(rows, cols))
    }

    pub fn var(v: VarId) -> Self {
        let (r, c) = v.kind.shape();
        MatExpr {
            constant: Mat::zeros(r, c),
            terms: vec![LinTerm { left: Mat::identity(r), var: v, right: Mat::identity(c), transposed: false }],
        }
    }

    /// `x · I_p` for a scalar variable `x`.
    pub fn scaled_identity(v: VarId, p: usize) -> Self {
        assert_eq!(v.kind, VarKind::Scalar, "scaled_identity needs a scalar variable");
        MatExpr {
            constant: Mat::zeros(p, p),
            terms: vec![LinTerm { left: Mat::identity(p), var: v, right: Mat::identity(p), transposed: false }],
        }
    }

    /// `x · m` for a scalar variable `x`.
    pub fn scalar_times(v: VarId, m: &Mat) -> Self {
        MatExpr::scaled_identity(v, m.cols()).rmul(m).lmul(&Mat::identity(m.rows()))
    }

    pub fn rows(&self) -> usize {
        self.constant.rows()
    }

    pub fn cols(&self) -> usize {
        self.constant.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    /// `m · self`
    pub fn lmul(&self, m: &Mat) -> Self {
        MatExpr {
            constant: m.matmul(&self.constant),
            terms: self
                .terms
                .iter()
                .map(|t| LinTerm { left: m.matmul(&t.left), ..t.clone() })
                .collect(),
        }
    }

    /// `self · m`
    pub fn rmul(&self, m: &Mat) -> Self {
        MatExpr {
            constant: self.constant.matmul(m),
            terms: self
                .terms
                .iter()
                .map(|t| LinTerm { right: t.right.matmul(m), ..t.clone() })
                .collect(),
        }
    }

    pub fn t(&self) -> Self {
        MatExpr {
            constant: self.constant.transpose(),
            terms: self
                .terms
                .iter()
                .map(|t| LinTerm {
                    left: t.right.transpose(),
                    var: t.var,
                    right: t.left.transpose(),
                    transposed: !t.transposed,
                })
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        MatExpr {
            constant: self.constant.scale(s),
            terms: self.terms.iter().map(|t| LinTerm { left: t.left.scale(s), ..t.clone() }).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    pub fn add(&self, other: &MatExpr) -> Self {
        assert_eq!(self.shape(), other.shape(), "adding expressions of different shapes");
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        MatExpr { constant: &self.constant + &other.constant, terms }
    }

    pub fn sub(&self, other: &MatExpr) -> Self {
        self.add(&other.neg())
    }

    pub fn add_const(&self, m: &Mat) -> Self {
        MatExpr { constant: &self.constant + m, terms: self.terms.clone() }
    }

    pub fn evaluate(&self, values: &dyn Fn(VarId) -> Result<Mat>) -> Result<Mat> {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let x = term_value(t.var, values(t.var)?, t.transposed, t.left.cols());
            out = &out + &t.left.matmul(&x).matmul(&t.right);
        }
        Ok(out)
    }
}

fn term_value(v: VarId, x: Mat, transposed: bool, inner: usize) -> Mat {
    if v.kind == VarKind::Scalar {
        Mat::identity(inner).scale(x[(0, 0)])
    } else if transposed {
        x.transpose()
    } else {
        x
    }
}

/// One term of a symmetric affine expression; `symmetrize` adds the
/// transpose of the product.
#[derive(Clone, Debug)]
pub struct Term {
    pub left: Mat,
    pub var: VarId,
    pub right: Mat,
    pub transposed: bool,
    pub symmetrize: bool,
}

#[derive(Clone, Debug)]
pub struct AffineMatrixExpr {
    pub dim: usize,
    pub constant: Mat,
    pub terms: Vec<Term>,
}

impl AffineMatrixExpr {
    pub fn zeros(dim: usize) -> Self {
        AffineMatrixExpr { dim, constant: Mat::zeros(dim, dim), terms: vec![] }
    }

    /// A square expression whose value is symmetric for symmetric
    /// assignments, taken as is.
    pub fn from_symmetric(e: &MatExpr) -> Self {
        assert_eq!(e.rows(), e.cols());
        AffineMatrixExpr {
            dim: e.rows(),
            constant: e.constant.clone(),
            terms: e
                .terms
                .iter()
                .map(|t| Term {
                    left: t.left.clone(),
                    var: t.var,
                    right: t.right.clone(),
                    transposed: t.transposed,
                    symmetrize: false,
                })
                .collect(),
        }
    }

    pub fn evaluate(&self, values: &dyn Fn(VarId) -> Result<Mat>) -> Result<Mat> {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let x = term_value(t.var, values(t.var)?, t.transposed, t.left.cols());
            let p = t.left.matmul(&x).matmul(&t.right);
            out = &out + &p;
            if t.symmetrize {
                out = &out + &p.transpose();
            }
        }
        Ok(out)
    }
}

/// Builds a symmetric block matrix from rectangular pieces.
pub struct SymBlocks {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    expr: AffineMatrixExpr,
}

impl SymBlocks {
    pub fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for s in sizes {
            offsets.push(acc);
            acc += s;
        }
        SymBlocks { sizes: sizes.to_vec(), offsets, expr: AffineMatrixExpr::zeros(acc) }
    }

    fn check(&self, i: usize, j: usize, e: &MatExpr) {
        assert_eq!(
            e.shape(),
            (self.sizes[i], self.sizes[j]),
            "piece for block ({i}, {j}) has the wrong shape"
        );
    }

    fn embed_left(&self, i: usize, l: &Mat) -> Mat {
        let mut m = Mat::zeros(self.expr.dim, l.cols());
        m.set_block(self.offsets[i], 0, l);
        m
    }

    fn embed_right(&self, j: usize, r: &Mat) -> Mat {
        let mut m = Mat::zeros(r.rows(), self.expr.dim);
        m.set_block(0, self.offsets[j], r);
        m
    }

    /// Places `e` at block `(i, j)` and `eᵀ` at `(j, i)`. On the diagonal
    /// this adds `e + eᵀ`.
    pub fn sym(&mut self, i: usize, j: usize, e: &MatExpr) {
        self.check(i, j, e);
        if e.rows() == 0 || e.cols() == 0 {
            return;
        }
        let (oi, oj) = (self.offsets[i], self.offsets[j]);
        self.expr.constant.add_block(oi, oj, &e.constant);
        self.expr.constant.add_block(oj, oi, &e.constant.transpose());
        for t in &e.terms {
            self.expr.terms.push(Term {
                left: self.embed_left(i, &t.left),
                var: t.var,
                right: self.embed_right(j, &t.right),
                transposed: t.transposed,
                symmetrize: true,
            });
        }
    }

    /// Adds a symmetric-valued `e` at diagonal block `(i, i)` unchanged.
    pub fn diag(&mut self, i: usize, e: &MatExpr) {
        self.check(i, i, e);
        if e.rows() == 0 {
            return;
        }
        let o = self.offsets[i];
        self.expr.constant.add_block(o, o, &e.constant);
        for t in &e.terms {
            self.expr.terms.push(Term {
                left: self.embed_left(i, &t.left),
                var: t.var,
                right: self.embed_right(i, &t.right),
                transposed: t.transposed,
                symmetrize: false,
            });
        }
    }

    pub fn finish(self) -> AffineMatrixExpr {
        self.expr
    }
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub name: String,
    pub expr: AffineMatrixExpr,
    pub sense: Sense,
}

#[derive(Clone, Debug, Default)]
pub struct LmiProblem {
    vars: Vec<VarInfo>,
    constraints: Vec<Constraint>,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare_var(&mut self, name: &str, kind: VarKind, cone: Cone) -> Result<VarId> {
        let ok = match cone {
            Cone::Free => true,
            Cone::PositiveDefinite | Cone::PositiveSemidefinite => matches!(kind, VarKind::Symmetric(_)),
            Cone::PositiveScalar => kind == VarKind::Scalar,
        };
        if !ok {
            return Err(Error::VarDecl(format!("cone {cone:?} is not allowed for kind {kind:?}")));
        }
        if self.vars.iter().any(|v| v.name == name) {
            return Err(Error::VarDecl(format!("variable `{name}` declared twice")));
        }
        let offset = self.scalar_count();
        let id = VarId { index: self.vars.len(), kind, cone };
        self.vars.push(VarInfo { name: name.to_string(), id, offset });
        Ok(id)
    }

    pub fn add_constraint(&mut self, name: &str, expr: AffineMatrixExpr, sense: Sense) -> Result<()> {
        if expr.constant.shape() != (expr.dim, expr.dim) {
            return Err(Error::Problem(format!("constraint `{name}`: constant is not {0}x{0}", expr.dim)));
        }
        for (k, t) in expr.terms.iter().enumerate() {
            match self.vars.get(t.var.index) {
                Some(v) if v.id == t.var => {}
                _ => return Err(Error::Problem(format!("constraint `{name}`: term {k} uses an unregistered variable"))),
            }
            let (r, c) = t.var.kind.shape();
            let (xr, xc) = if t.var.kind == VarKind::Scalar {
                (t.left.cols(), t.left.cols())
            } else if t.transposed {
                (c, r)
            } else {
                (r, c)
            };
            if t.left.rows() != expr.dim || t.left.cols() != xr || t.right.rows() != xc || t.right.cols() != expr.dim {
                return Err(Error::Problem(format!("constraint `{name}`: term {k} has inconsistent dimensions")));
            }
        }
        self.constraints.push(Constraint { name: name.to_string(), expr, sense });
        Ok(())
    }

    pub fn scalar_count(&self) -> usize {
        self.vars.iter().map(|v| v.id.kind.scalar_count()).sum()
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn var_ids(&self) -> Vec<VarId> {
        self.vars.iter().map(|v| v.id).collect()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.index].name
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().find(|v| v.name == name).map(|v| v.id)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// User constraints followed by the cone memberships of the variables.
    pub fn all_constraints(&self) -> Vec<Constraint> {
        let mut out = self.constraints.clone();
        for v in &self.vars {
            let sense = match v.id.cone {
                Cone::Free => continue,
                Cone::PositiveDefinite | Cone::PositiveScalar => Sense::PosDef,
                Cone::PositiveSemidefinite => Sense::PosSemiDef,
            };
            let n = v.id.kind.shape().0;
            out.push(Constraint {
                name: v.name.clone(),
                expr: AffineMatrixExpr::from_symmetric(&MatExpr::var(v.id)),
                sense,
            });
            debug_assert_eq!(out.last().unwrap().expr.dim, n);
        }
        out
    }

    /// Constraint dimensions, including cone memberships.
    pub fn constraint_dims(&self) -> Vec<usize> {
        self.all_constraints().iter().map(|c| c.expr.dim).collect()
    }

    /// Scalar unknowns → matrix values.
    pub fn unpack(&self, x: &[f64]) -> Vec<Mat> {
        self.vars
            .iter()
            .map(|v| {
                let s = &x[v.offset..v.offset + v.id.kind.scalar_count()];
                match v.id.kind {
                    VarKind::Symmetric(n) => {
                        let mut m = Mat::zeros(n, n);
                        let mut k = 0;
                        for i in 0..n {
                            for j in i..n {
                                m[(i, j)] = s[k];
                                m[(j, i)] = s[k];
                                k += 1;
                            }
                        }
                        m
                    }
                    VarKind::Rectangular(r, c) => Mat::from_vec(r, c, s.to_vec()).expect("finite iterate"),
                    VarKind::Scalar => Mat::scalar(s[0]),
                }
            })
            .collect()
    }

    fn scalarize(&self) -> Result<Vec<ScalarConstraint>> {
        self.all_constraints().iter().map(|c| self.scalarize_one(c)).collect()
    }

    fn scalarize_one(&self, c: &Constraint) -> Result<ScalarConstraint> {
        let dim = c.expr.dim;
        let total = self.scalar_count();
        let mut coeffs: Vec<Option<Mat>> = vec![None; total];
        let mut acc = |idx: usize, m: Mat| match &mut coeffs[idx] {
            Some(existing) => *existing = &*existing + &m,
            None => coeffs[idx] = Some(m),
        };
        for t in &c.expr.terms {
            let info = &self.vars[t.var.index];
            let outer = |a: usize, b: usize| -> Mat {
                // left[:, a] · right[b, :]
                let mut m = Mat::zeros(dim, dim);
                for i in 0..dim {
                    let l = t.left[(i, a)];
                    if l == 0.0 {
                        continue;
                    }
                    for j in 0..dim {
                        m[(i, j)] += l * t.right[(b, j)];
                    }
                }
                m
            };
            let finish = |m: Mat| if t.symmetrize { &m + &m.transpose() } else { m };
            match info.id.kind {
                VarKind::Symmetric(n) => {
                    let mut k = 0;
                    for a in 0..n {
                        for b in a..n {
                            let m = if a == b { outer(a, a) } else { &outer(a, b) + &outer(b, a) };
                            acc(info.offset + k, finish(m));
                            k += 1;
                        }
                    }
                }
                VarKind::Rectangular(r, cc) => {
                    for a in 0..r {
                        for b in 0..cc {
                            let m = if t.transposed { outer(b, a) } else { outer(a, b) };
                            acc(info.offset + a * cc + b, finish(m));
                        }
                    }
                }
                VarKind::Scalar => acc(info.offset, finish(t.left.matmul(&t.right))),
            }
        }
        let scale = c.expr.constant.max_abs().max(1.0);
        let mut list = Vec::new();
        for (i, m) in coeffs.into_iter().enumerate() {
            if let Some(m) = m {
                if m.asymmetry() > 1e-9 * scale.max(m.max_abs()) {
                    return Err(Error::Problem(format!("constraint `{}` is not symmetric", c.name)));
                }
                if m.max_abs() > 0.0 {
                    list.push((i, m.symmetric_part()));
                }
            }
        }
        if c.expr.constant.asymmetry() > 1e-9 * scale {
            return Err(Error::Problem(format!("constraint `{}` has a non-symmetric constant", c.name)));
        }
        Ok(ScalarConstraint {
            sense: c.sense,
            f0: c.expr.constant.symmetric_part(),
            coeffs: list,
        })
    }
}

/// `F(x) = f0 + Σ x_i F_i`
#[derive(Clone, Debug)]
struct ScalarConstraint {
    sense: Sense,
    f0: Mat,
    coeffs: Vec<(usize, Mat)>,
}

impl ScalarConstraint {
    fn eval(&self, x: &[f64]) -> Mat {
        let mut m = self.f0.clone();
        for (i, f) in &self.coeffs {
            if x[*i] != 0.0 {
                m = &m + &f.scale(x[*i]);
            }
        }
        m
    }

    fn epsilon(&self, margin: f64) -> f64 {
        if self.sense.is_strict() {
            margin * self.f0.max_abs().max(1.0)
        } else {
            0.0
        }
    }

    /// Signed distance to the shifted cone boundary (≥ 0 means satisfied).
    fn slack(&self, x: &[f64], margin: f64) -> f64 {
        let (lmin, lmax) = extreme_eigs(&self.eval(x));
        let eps = self.epsilon(margin);
        match self.sense {
            Sense::NegDef => -lmax - eps,
            Sense::PosDef | Sense::PosSemiDef => lmin - eps,
        }
    }
}

/// A valuation of every variable of a problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub values: Vec<(String, Mat)>,
    pub margin: f64,
    pub backend_name: String,
    pub iterations: usize,
}

impl Certificate {
    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn set(&mut self, name: &str, m: Mat) {
        match self.values.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = m,
            None => self.values.push((name.to_string(), m)),
        }
    }

    fn lookup(&self, p: &LmiProblem) -> Result<Vec<Mat>> {
        p.vars
            .iter()
            .map(|v| {
                let m = self.get(&v.name).ok_or_else(|| Error::MissingValue(v.name.clone()))?;
                if m.shape() != v.id.kind.shape() {
                    return Err(Error::Certificate(format!(
                        "`{}` has shape {}x{}, expected {}x{}",
                        v.name,
                        m.rows(),
                        m.cols(),
                        v.id.kind.shape().0,
                        v.id.kind.shape().1
                    )));
                }
                if matches!(v.id.kind, VarKind::Symmetric(_)) && m.asymmetry() > 1e-9 * m.max_abs().max(1.0) {
                    return Err(Error::Certificate(format!("`{}` is not symmetric", v.name)));
                }
                Ok(m.clone())
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ConstraintCheck {
    pub name: String,
    pub sense: Sense,
    /// λ_max for `NegDef`, λ_min otherwise.
    pub extreme_eig: f64,
    /// Positive when the constraint holds strictly: `−λ_max` or `λ_min`.
    pub signed_margin: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub checks: Vec<ConstraintCheck>,
    pub tol: f64,
    pub passed: bool,
}

impl VerifyReport {
    /// Every strict constraint holds with positive margin and every
    /// semidefinite one within `tol`.
    pub fn strictly_feasible(&self) -> bool {
        self.checks.iter().all(|c| if c.sense.is_strict() { c.signed_margin > 0.0 } else { c.passed })
    }

    pub fn min_strict_margin(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.sense.is_strict())
            .map(|c| c.signed_margin)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Evaluates every constraint at the certificate's values. A constraint
/// passes when its signed margin is at least `−tol`.
pub fn verify(p: &LmiProblem, cert: &Certificate, tol: f64) -> Result<VerifyReport> {
    let values = cert.lookup(p)?;
    let get = |v: VarId| Ok(values[v.index].clone());
    let mut checks = Vec::new();
    for c in p.all_constraints() {
        let m = c.expr.evaluate(&get)?;
        let (lmin, lmax) = extreme_eigs(&m);
        let (extreme, signed) = match c.sense {
            Sense::NegDef => (lmax, -lmax),
            Sense::PosDef | Sense::PosSemiDef => (lmin, lmin),
        };
        checks.push(ConstraintCheck { name: c.name, sense: c.sense, extreme_eig: extreme, signed_margin: signed, passed: signed >= -tol });
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, tol, passed })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Embedded primal–dual interior-point method.
    InteriorPoint,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::InteriorPoint => "embedded-ipm",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Relative strictness margin.
    pub margin: f64,
    pub max_iter: usize,
    pub backend: Backend,
    /// Box bound on every scalar unknown.
    pub bound: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { margin: 1e-6, max_iter: 150, backend: Backend::InteriorPoint, bound: 1e4 }
    }
}

#[derive(Clone, Debug)]
pub enum SolveOutcome {
    Feasible(Certificate),
    Infeasible(String),
    Inconclusive(String),
}

impl SolveOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            SolveOutcome::Feasible(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Feasible(_))
    }
}

/// Result of pushing every strict constraint as far inside its cone as the
/// box bound and the cap on the margin allow.
#[derive(Clone, Debug)]
pub struct MarginResult {
    /// Largest common shift `s` found: `F ⪯ −(ε + s)I` for strict `≺`
    /// constraints, `F ⪰ (ε + s)I` for strict `≻` ones.
    pub margin: f64,
    pub certificate: Certificate,
    pub status: IpmStatus,
    pub seconds: f64,
}

/// Solve statistics returned alongside the outcome.
#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub seconds: f64,
    pub phase_one_value: Option<f64>,
}

/// Upper cap on the common shift in the phase-one problem.
const SHIFT_CAP: f64 = 1.0;

struct PhaseOne {
    sdp: ipm::Sdp,
    m: usize,
}

fn phase_one(cons: &[ScalarConstraint], m: usize, opts: &SolveOptions) -> PhaseOne {
    let s_idx = m;
    let mut blocks = Vec::new();
    for c in cons {
        let n = c.f0.rows();
        let eps = c.epsilon(opts.margin);
        let shift = Mat::identity(n).scale(eps);
        let (cmat, sign) = match c.sense {
            Sense::NegDef => (&c.f0.scale(-1.0) - &shift, 1.0),
            Sense::PosDef => (&c.f0 - &shift, -1.0),
            Sense::PosSemiDef => (c.f0.clone(), -1.0),
        };
        let mut a: Vec<(usize, Mat)> = c.coeffs.iter().map(|(i, f)| (*i, f.scale(sign))).collect();
        if c.sense.is_strict() {
            a.push((s_idx, Mat::identity(n)));
        }
        blocks.push(ipm::SdpBlock { c: cmat, a });
    }
    let mut lp = Vec::new();
    for i in 0..m {
        lp.push(ipm::LpRow { c: opts.bound, a: vec![(i, 1.0)] });
        lp.push(ipm::LpRow { c: opts.bound, a: vec![(i, -1.0)] });
    }
    lp.push(ipm::LpRow { c: SHIFT_CAP, a: vec![(s_idx, 1.0)] });
    let mut b = vec![0.0; m + 1];
    b[s_idx] = 1.0;
    PhaseOne { sdp: ipm::Sdp { m: m + 1, b, blocks, lp }, m }
}

fn make_certificate(p: &LmiProblem, x: &[f64], opts: &SolveOptions, iterations: usize) -> Certificate {
    let values = p.unpack(x);
    Certificate {
        values: p.vars.iter().zip(values).map(|(v, m)| (v.name.clone(), m)).collect(),
        margin: opts.margin,
        backend_name: opts.backend.name().to_string(),
        iterations,
    }
}

/// Decides feasibility of the strictly shifted constraints.
pub fn solve(p: &LmiProblem, opts: &SolveOptions) -> Result<SolveOutcome> {
    Ok(solve_with_stats(p, opts)?.0)
}

pub fn solve_with_stats(p: &LmiProblem, opts: &SolveOptions) -> Result<(SolveOutcome, SolveStats)> {
    let start = Instant::now();
    let cons = p.scalarize()?;
    let m = p.scalar_count();
    let ph = phase_one(&cons, m, opts);
    let accept = |x: &[f64]| cons.iter().all(|c| c.slack(x, opts.margin) >= 0.0);
    let settings = IpmSettings { max_iter: opts.max_iter, ..IpmSettings::default() };
    let res = ipm::solve_sdp(&ph.sdp, &settings, |y| accept(&y[..m]));
    let mut stats = SolveStats {
        iterations: res.iterations,
        seconds: 0.0,
        phase_one_value: Some(res.y[ph.m]),
    };
    let x = &res.y[..m];
    let outcome = if res.status == IpmStatus::EarlyStop || accept(x) {
        let cert = make_certificate(p, x, opts, res.iterations);
        let report = verify(p, &cert, 0.0)?;
        let ok = report.checks.iter().zip(&cons).all(|(chk, c)| chk.signed_margin >= 0.9 * c.epsilon(opts.margin));
        if ok {
            SolveOutcome::Feasible(cert)
        } else {
            SolveOutcome::Inconclusive("solver iterate failed independent verification".into())
        }
    } else if res.status == IpmStatus::Converged && res.y[ph.m] < 0.0 {
        match ipm::farkas_witness(&ph.sdp, &res, &cons.iter().map(|c| c.sense.is_strict()).collect::<Vec<_>>()) {
            Some(w) => SolveOutcome::Infeasible(format!(
                "dual witness certifies infeasibility (best shift {:.3e}, witness value {:.3e})",
                res.y[ph.m], w
            )),
            None => SolveOutcome::Inconclusive(format!(
                "best achievable shift {:.3e} < 0 but no exact dual witness could be formed",
                res.y[ph.m]
            )),
        }
    } else if res.status == IpmStatus::Converged {
        SolveOutcome::Inconclusive(format!("marginal: best achievable shift {:.3e}", res.y[ph.m]))
    } else {
        SolveOutcome::Inconclusive(format!("interior-point method stopped: {:?}", res.status))
    };
    stats.seconds = start.elapsed().as_secs_f64();
    Ok((outcome, stats))
}

/// Maximizes the common shift of all strict constraints (capped at 1).
pub fn maximize_margin(p: &LmiProblem, opts: &SolveOptions) -> Result<MarginResult> {
    let start = Instant::now();
    let cons = p.scalarize()?;
    let m = p.scalar_count();
    let ph = phase_one(&cons, m, opts);
    let settings = IpmSettings { max_iter: opts.max_iter, ..IpmSettings::default() };
    let res = ipm::solve_sdp(&ph.sdp, &settings, |_| false);
    let x = &res.y[..m];
    let margin = cons
        .iter()
        .filter(|c| c.sense.is_strict())
        .map(|c| c.slack(x, opts.margin))
        .fold(SHIFT_CAP, f64::min);
    Ok(MarginResult {
        margin,
        certificate: make_certificate(p, x, opts, res.iterations),
        status: res.status,
        seconds: start.elapsed().as_secs_f64(),
    })
}
