//! Delay-dependent stability conditions for
//! `D^α x(t) = A x(t) + B x(t − d(t))` with `0 ≤ d(t) ≤ τ`, `ḋ(t) ≤ μ < 1`.
//!
//! The certain condition is a single `4n × 4n` inequality `Γ ≺ 0` in
//! `P ≻ 0`, `Q ⪰ 0`, `Z ≻ 0` and free slacks `N₁..₃`, `T₁..₃`. Writing
//! `Γ = Ψ + sym(G)` with `G` the block row stack `[−TᵢA, −TᵢB, 0, 0]`,
//! the interval condition bounds the uncertain part of `sym(G)` with a
//! scalar `η > 0` and a Schur border:
//!
//! ```text
//! [ Ψ + sym(G₀) + η VᵀV   U  ]
//! [ Uᵀ                   −ηI ] ≺ 0
//! ```
//!
//! where `G₀` uses the centers, `U` stacks `[−TᵢM_A, −TᵢM_B]` and `V` places
//! `R_A`, `R_B` under the first two block columns. Uncertainty slots whose
//! factor column or row is zero are dropped from the border.
//!
//! Both conditions are sufficient only; a failed solve yields
//! [`Verdict::Unknown`], never a claim of instability.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::interval::{vertex_samples, IntervalMatrix, UncertaintyFactors};
use crate::linalg::{gen_eig, Spectrum};
use crate::lmi::{
    solve_with_stats, verify, Certificate, Cone, LmiProblem, MatExpr, SolveOptions, SolveOutcome,
    SymBlocks, VarId, VarKind, VerifyReport,
};
use crate::matrix::Mat;

/// Fixed coefficients of the non-delayed and delayed state.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayedPair {
    pub a: Mat,
    pub b: Mat,
}

impl DelayedPair {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if !a.is_square() || a.shape() != b.shape() {
            return Err(Error::Dimension(format!(
                "delayed pair needs two n×n matrices, got {}x{} and {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        Ok(DelayedPair { a, b })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    CertifiedStable,
    Unknown,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::CertifiedStable => "certified_stable",
            Verdict::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ProblemStats {
    pub constraint_dims: Vec<usize>,
    pub scalar_vars: usize,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub certificate: Option<Certificate>,
    pub verification: Option<VerifyReport>,
    pub stats: ProblemStats,
    /// Why the verdict is not `CertifiedStable`, or a short summary.
    pub reason: String,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct AnalysisOptions {
    pub solve: SolveOptions,
    /// Tolerance for semidefinite constraints during verification.
    pub verify_tol: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { solve: SolveOptions::default(), verify_tol: 1e-8 }
    }
}

/// How the slack matrices `T₁..₃` are parameterized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlackStructure {
    /// Three independent free `n×n` matrices.
    Free,
    /// One shared `T = diag(T_S, T_C)` with `T_S` free `plant_dim × plant_dim`
    /// and `T_C` symmetric.
    SharedBlockDiag { plant_dim: usize },
}

/// Decision variables common to all conditions.
pub(crate) struct CoreVars {
    pub p: VarId,
    pub q: VarId,
    pub z: VarId,
    pub n: [VarId; 3],
}

pub(crate) fn declare_core(prob: &mut LmiProblem, n: usize) -> Result<CoreVars> {
    Ok(CoreVars {
        p: prob.declare_var("P", VarKind::Symmetric(n), Cone::PositiveDefinite)?,
        q: prob.declare_var("Q", VarKind::Symmetric(n), Cone::PositiveSemidefinite)?,
        z: prob.declare_var("Z", VarKind::Symmetric(n), Cone::PositiveDefinite)?,
        n: [
            prob.declare_var("N1", VarKind::Rectangular(n, n), Cone::Free)?,
            prob.declare_var("N2", VarKind::Rectangular(n, n), Cone::Free)?,
            prob.declare_var("N3", VarKind::Rectangular(n, n), Cone::Free)?,
        ],
    })
}

/// Adds the slack-independent structure plus the `Tᵢ` identity entries of
/// `Ψ` to the first four blocks.
pub(crate) fn place_structure(b: &mut SymBlocks, v: &CoreVars, t: &[MatExpr; 3], tau: f64, mu: f64) {
    let p = MatExpr::var(v.p);
    let q = MatExpr::var(v.q);
    let z = MatExpr::var(v.z);
    let [n1, n2, n3] = v.n.map(MatExpr::var);
    b.diag(0, &q);
    b.sym(0, 0, &n1);
    b.sym(0, 1, &n2.t().sub(&n1));
    b.sym(0, 2, &p.add(&n3.t()).add(&t[0]));
    b.sym(0, 3, &n1.scale(tau));
    b.diag(1, &q.scale(-(1.0 - mu)));
    b.sym(1, 1, &n2.neg());
    b.sym(1, 2, &n3.t().neg().add(&t[1]));
    b.sym(1, 3, &n2.scale(tau));
    b.diag(2, &z.scale(tau));
    b.sym(2, 2, &t[2]);
    b.sym(2, 3, &n3.scale(tau));
    b.diag(3, &z.scale(-tau));
}

fn declare_slacks(prob: &mut LmiProblem, n: usize, slack: SlackStructure) -> Result<[MatExpr; 3]> {
    match slack {
        SlackStructure::Free => {
            let t1 = prob.declare_var("T1", VarKind::Rectangular(n, n), Cone::Free)?;
            let t2 = prob.declare_var("T2", VarKind::Rectangular(n, n), Cone::Free)?;
            let t3 = prob.declare_var("T3", VarKind::Rectangular(n, n), Cone::Free)?;
            Ok([MatExpr::var(t1), MatExpr::var(t2), MatExpr::var(t3)])
        }
        SlackStructure::SharedBlockDiag { plant_dim } => {
            if plant_dim == 0 || plant_dim > n {
                return Err(Error::Dimension(format!("plant dimension {plant_dim} does not fit state dimension {n}")));
            }
            let nc = n - plant_dim;
            let ts = prob.declare_var("T_S", VarKind::Rectangular(plant_dim, plant_dim), Cone::Free)?;
            let (e1, e2) = selectors(plant_dim, nc);
            let mut t = MatExpr::var(ts).lmul(&e1).rmul(&e1.transpose());
            if nc > 0 {
                let tc = prob.declare_var("T_C", VarKind::Symmetric(nc), Cone::Free)?;
                t = t.add(&MatExpr::var(tc).lmul(&e2).rmul(&e2.transpose()));
            }
            Ok([t.clone(), t.clone(), t])
        }
    }
}

/// Column selectors `E₁ = [I; 0]` and `E₂ = [0; I]` for a split `np + nc`.
pub(crate) fn selectors(np: usize, nc: usize) -> (Mat, Mat) {
    let n = np + nc;
    let mut e1 = Mat::zeros(n, np);
    let mut e2 = Mat::zeros(n, nc);
    for i in 0..np {
        e1[(i, i)] = 1.0;
    }
    for i in 0..nc {
        e2[(np + i, i)] = 1.0;
    }
    (e1, e2)
}

/// Keeps the uncertainty slots whose factor column and row are both nonzero.
pub(crate) fn active_slots(uf: &UncertaintyFactors) -> (Mat, Mat) {
    let keep: Vec<usize> = (0..uf.slots())
        .filter(|&s| {
            uf.m_factor.col(s).iter().any(|v| *v != 0.0) && uf.r_factor.row(s).iter().any(|v| *v != 0.0)
        })
        .collect();
    let mut m = Mat::zeros(uf.m_factor.rows(), keep.len());
    let mut r = Mat::zeros(keep.len(), uf.r_factor.cols());
    for (k, &s) in keep.iter().enumerate() {
        for i in 0..m.rows() {
            m[(i, k)] = uf.m_factor[(i, s)];
        }
        for j in 0..r.cols() {
            r[(k, j)] = uf.r_factor[(s, j)];
        }
    }
    (m, r)
}

fn check_delay(tau: f64, mu: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Parameter(format!("tau must be positive, got {tau}")));
    }
    if !(mu < 1.0 && mu.is_finite()) {
        return Err(Error::Parameter(format!("mu must be < 1, got {mu}")));
    }
    Ok(())
}

/// Certain-system condition `Γ ≺ 0`.
pub fn assemble_certain(pair: &DelayedPair, tau: f64, mu: f64) -> Result<LmiProblem> {
    check_delay(tau, mu)?;
    let n = pair.n();
    let mut prob = LmiProblem::new();
    let v = declare_core(&mut prob, n)?;
    let t = declare_slacks(&mut prob, n, SlackStructure::Free)?;
    let mut b = SymBlocks::new(&[n; 4]);
    place_structure(&mut b, &v, &t, tau, mu);
    for (i, ti) in t.iter().enumerate() {
        b.sym(i, 0, &ti.rmul(&pair.a).neg());
        b.sym(i, 1, &ti.rmul(&pair.b).neg());
    }
    prob.add_constraint("Gamma", b.finish(), crate::lmi::Sense::NegDef)?;
    Ok(prob)
}

/// Interval-system condition with free slacks.
pub fn assemble_interval(a_uf: &UncertaintyFactors, b_uf: &UncertaintyFactors, tau: f64, mu: f64) -> Result<LmiProblem> {
    assemble_interval_with(a_uf, b_uf, tau, mu, SlackStructure::Free)
}

pub fn assemble_interval_with(
    a_uf: &UncertaintyFactors,
    b_uf: &UncertaintyFactors,
    tau: f64,
    mu: f64,
    slack: SlackStructure,
) -> Result<LmiProblem> {
    check_delay(tau, mu)?;
    let n = a_uf.center.rows();
    if a_uf.dim() != (n, n) || b_uf.dim() != (n, n) {
        return Err(Error::Dimension(format!(
            "factor centers must both be {n}x{n}, got {:?} and {:?}",
            a_uf.dim(),
            b_uf.dim()
        )));
    }
    let (ma, ra) = active_slots(a_uf);
    let (mb, rb) = active_slots(b_uf);
    let (ka, kb) = (ma.cols(), mb.cols());
    let k = ka + kb;
    let mut prob = LmiProblem::new();
    let v = declare_core(&mut prob, n)?;
    let t = declare_slacks(&mut prob, n, slack)?;
    let eta = prob.declare_var("eta", VarKind::Scalar, Cone::PositiveScalar)?;
    let mut b = SymBlocks::new(&[n, n, n, n, k]);
    place_structure(&mut b, &v, &t, tau, mu);
    let mab = Mat::hstack(&[&ma, &mb])?;
    for (i, ti) in t.iter().enumerate() {
        b.sym(i, 0, &ti.rmul(&a_uf.center).neg());
        b.sym(i, 1, &ti.rmul(&b_uf.center).neg());
        b.sym(i, 4, &ti.rmul(&mab).neg());
    }
    // η VᵀV occupies the (0,0), (0,1), (1,1) blocks.
    b.diag(0, &MatExpr::scalar_times(eta, &ra.transpose().matmul(&ra)));
    b.diag(1, &MatExpr::scalar_times(eta, &rb.transpose().matmul(&rb)));
    b.diag(4, &MatExpr::scaled_identity(eta, k).neg());
    prob.add_constraint("robust", b.finish(), crate::lmi::Sense::NegDef)?;
    Ok(prob)
}

/// Solves `prob`, re-verifies any certificate and forms the verdict.
pub fn analyze_problem(prob: &LmiProblem, opts: &AnalysisOptions) -> Result<StabilityReport> {
    let (outcome, s) = solve_with_stats(prob, &opts.solve)?;
    let stats = ProblemStats {
        constraint_dims: prob.constraint_dims(),
        scalar_vars: prob.scalar_count(),
        iterations: s.iterations,
        seconds: s.seconds,
    };
    let mut report =
        StabilityReport { verdict: Verdict::Unknown, certificate: None, verification: None, stats, reason: String::new(), warnings: vec![] };
    match outcome {
        SolveOutcome::Feasible(cert) => {
            let v = verify(prob, &cert, opts.verify_tol)?;
            if v.passed && v.strictly_feasible() {
                report.verdict = Verdict::CertifiedStable;
                report.reason = format!("certificate verified, smallest strict margin {:.3e}", v.min_strict_margin());
            } else {
                report.reason = "solver certificate failed independent verification".into();
            }
            report.certificate = Some(cert);
            report.verification = Some(v);
        }
        SolveOutcome::Infeasible(r) => report.reason = format!("conditions infeasible: {r}"),
        SolveOutcome::Inconclusive(r) => report.reason = format!("inconclusive: {r}"),
    }
    Ok(report)
}

pub fn analyze_certain(pair: &DelayedPair, tau: f64, mu: f64, opts: &AnalysisOptions) -> Result<StabilityReport> {
    analyze_problem(&assemble_certain(pair, tau, mu)?, opts)
}

pub fn analyze_interval(
    a_uf: &UncertaintyFactors,
    b_uf: &UncertaintyFactors,
    tau: f64,
    mu: f64,
    opts: &AnalysisOptions,
) -> Result<StabilityReport> {
    analyze_problem(&assemble_interval(a_uf, b_uf, tau, mu)?, opts)
}

/// The pre-Schur form `Ψ + sym(G₀) + η VᵀV + η⁻¹ U Uᵀ` evaluated at a
/// certificate of the interval condition.
pub fn pre_schur_form(
    a_uf: &UncertaintyFactors,
    b_uf: &UncertaintyFactors,
    tau: f64,
    mu: f64,
    cert: &Certificate,
) -> Result<Mat> {
    let n = a_uf.center.rows();
    let prob = assemble_interval(a_uf, b_uf, tau, mu)?;
    let full = prob.constraints()[0].expr.evaluate(&|v: VarId| {
        cert.get(prob.var_name(v)).cloned().ok_or_else(|| Error::MissingValue(prob.var_name(v).to_string()))
    })?;
    let eta = cert.get("eta").ok_or_else(|| Error::MissingValue("eta".into()))?[(0, 0)];
    let d = 4 * n;
    let k = full.rows() - d;
    let phi = full.submatrix(0, 0, d, d);
    let u = full.submatrix(0, d, d, k);
    Ok(&phi + &u.matmul(&u.transpose()).scale(1.0 / eta))
}

/// Sector diagnostic for one sampled matrix.
#[derive(Clone, Debug)]
pub struct SectorSample {
    pub spectrum: Spectrum,
    /// `min_λ (|arg λ| − απ/2)`; negative means an eigenvalue lies in the
    /// instability sector.
    pub worst_margin: f64,
}

pub fn sector_margin(spectrum: &Spectrum, alpha: f64) -> f64 {
    spectrum.values.iter().map(|l| l.arg().abs() - alpha * PI / 2.0).fold(f64::INFINITY, f64::min)
}

/// Eigenvalue sector scan over seeded members of the uncertainty set. This
/// looks at the non-delayed matrix only.
pub fn sector_scan(a: &UncertaintyFactors, alpha: f64, count: usize, seed: u64) -> Result<Vec<SectorSample>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !a.center.is_square() {
        return Err(Error::Dimension("sector scan needs a square matrix".into()));
    }
    vertex_samples(a, count, seed)
        .iter()
        .map(|m| {
            let spectrum = gen_eig(m)?;
            let worst_margin = sector_margin(&spectrum, alpha);
            Ok(SectorSample { spectrum, worst_margin })
        })
        .collect()
}

pub fn sector_scan_interval(a: &IntervalMatrix, alpha: f64, count: usize, seed: u64) -> Result<Vec<SectorSample>> {
    sector_scan(&crate::interval::build_factors(a), alpha, count, seed)
}

/// CSV with header `sample_id,eig_index,re,im,arg,margin`.
pub fn sector_csv(samples: &[SectorSample], alpha: f64) -> String {
    let mut s = String::from("sample_id,eig_index,re,im,arg,margin\n");
    for (i, smp) in samples.iter().enumerate() {
        for (j, l) in smp.spectrum.values.iter().enumerate() {
            let margin = l.arg().abs() - alpha * PI / 2.0;
            let _ = writeln!(s, "{i},{j},{:.12e},{:.12e},{:.12e},{:.12e}", l.re, l.im, l.arg(), margin);
        }
    }
    s
}

/// Value of constraint `index` at a certificate.
pub fn constraint_value(prob: &LmiProblem, index: usize, cert: &Certificate) -> Result<Mat> {
    let c = &prob.constraints()[index].expr;
    c.evaluate(&|v: VarId| cert.get(prob.var_name(v)).cloned().ok_or_else(|| Error::MissingValue(prob.var_name(v).to_string())))
}
