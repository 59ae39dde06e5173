//! Closed-loop construction and fixed-order dynamic output-feedback
//! synthesis.
//!
//! The controller
//!
//! ```text
//! D^α x_c = A_c x_c + B_c y,    u = C_c x_c + D_c y
//! ```
//!
//! closes the loop around `D^α x = A x + B u(t − d)`, `y = C x`, giving the
//! augmented pair
//!
//! ```text
//! A_cl  = [[A, 0], [B_c C, A_c]]      A_dcl = [[B D_c C, B C_c], [0, 0]]
//! ```
//!
//! Synthesis alternates two convex problems with a shared slack
//! `T = diag(T_S, T_C)` in the robust stability condition:
//!
//! 1. analysis: for the current controller, maximize the margin over all
//!    certificate variables including `T_S`;
//! 2. synthesis: freeze `T_S` and solve for the certificate together with
//!    `T_C`, `W₁ = T_C A_c`, `W₂ = T_C B_c`, `C_c` and `D_c`. With `T_S`
//!    frozen the products `T·A_cl` and `T·A_dcl` are affine, the
//!    `[M_A; 0]`, `[M_B; 0]` factors become constant after multiplication by
//!    `T`, and the controller-dependent factor rows `[R_B D_c C, R_B C_c]`
//!    enter linearly through a Schur border.
//!
//! Every candidate is post-validated with the free-slack interval analysis
//! before it is returned.

use serde_json::{json, Value};

use crate::error::{Error, Result, SynthesisFailure};
use crate::interval::{build_factors, FoSystem, UncertaintyFactors};
use crate::linalg::Lu;
use crate::lmi::{
    maximize_margin, Certificate, Cone, LmiProblem, MatExpr, Sense, SolveOptions, SymBlocks, VarKind,
};
use crate::matrix::{block_assemble, Block, Mat};
use crate::stability::{
    active_slots, analyze_certain, analyze_interval, assemble_interval_with, declare_core, place_structure, selectors,
    AnalysisOptions, DelayedPair, SlackStructure, StabilityReport, Verdict,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Controller {
    pub a_c: Mat,
    pub b_c: Mat,
    pub c_c: Mat,
    pub d_c: Mat,
    pub n_c: usize,
}

impl Controller {
    pub fn new(a_c: Mat, b_c: Mat, c_c: Mat, d_c: Mat) -> Result<Self> {
        let n_c = a_c.rows();
        let (l, m) = d_c.shape();
        if a_c.cols() != n_c || b_c.shape() != (n_c, m) || c_c.shape() != (l, n_c) {
            return Err(Error::Dimension(format!(
                "controller blocks A_c {:?}, B_c {:?}, C_c {:?}, D_c {:?} are inconsistent",
                a_c.shape(),
                b_c.shape(),
                c_c.shape(),
                d_c.shape()
            )));
        }
        Ok(Controller { a_c, b_c, c_c, d_c, n_c })
    }

    /// Static output feedback `u = D_c y`.
    pub fn static_gain(d_c: Mat) -> Self {
        let (l, m) = d_c.shape();
        Controller { a_c: Mat::zeros(0, 0), b_c: Mat::zeros(0, m), c_c: Mat::zeros(l, 0), d_c, n_c: 0 }
    }

    /// All-zero controller of order `n_c` for `inputs` plant inputs and
    /// `outputs` measurements.
    pub fn zero(n_c: usize, inputs: usize, outputs: usize) -> Self {
        Controller {
            a_c: Mat::zeros(n_c, n_c),
            b_c: Mat::zeros(n_c, outputs),
            c_c: Mat::zeros(inputs, n_c),
            d_c: Mat::zeros(inputs, outputs),
            n_c,
        }
    }

    /// Largest entrywise difference between two controllers of equal shape.
    pub fn distance(&self, other: &Controller) -> f64 {
        [(&self.a_c, &other.a_c), (&self.b_c, &other.b_c), (&self.c_c, &other.c_c), (&self.d_c, &other.d_c)]
            .iter()
            .map(|(a, b)| if a.shape() == b.shape() { (*a - *b).max_abs() } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Value {
        let m = |x: &Mat| -> Value {
            if x.is_empty() {
                json!([])
            } else {
                json!(x.to_rows())
            }
        };
        json!({ "n_c": self.n_c, "A_c": m(&self.a_c), "B_c": m(&self.b_c), "C_c": m(&self.c_c), "D_c": m(&self.d_c) })
    }

    /// Parses the JSON form. Empty blocks (`[]`) are sized from `n_c` and
    /// the shape of `D_c`.
    pub fn from_json(v: &Value) -> Result<Controller> {
        let bad = |s: String| Error::Parameter(format!("controller: {s}"));
        let obj = v.as_object().ok_or_else(|| bad("not an object".into()))?;
        for k in obj.keys() {
            if !matches!(k.as_str(), "n_c" | "A_c" | "B_c" | "C_c" | "D_c") {
                return Err(bad(format!("unknown field `{k}`")));
            }
        }
        let n_c = obj.get("n_c").and_then(Value::as_u64).ok_or_else(|| bad("missing integer `n_c`".into()))? as usize;
        let parse = |key: &str| -> Result<Option<Mat>> {
            let rows = obj.get(key).and_then(Value::as_array).ok_or_else(|| bad(format!("missing array `{key}`")))?;
            if rows.is_empty() {
                return Ok(None);
            }
            let mut out = Vec::new();
            for (i, r) in rows.iter().enumerate() {
                let r = r.as_array().ok_or_else(|| bad(format!("`{key}[{i}]` is not an array")))?;
                let mut row = Vec::new();
                for (j, x) in r.iter().enumerate() {
                    row.push(x.as_f64().ok_or_else(|| bad(format!("`{key}[{i}][{j}]` is not a number")))?);
                }
                out.push(row);
            }
            Mat::try_from_rows(&out).map(Some).map_err(|e| bad(format!("`{key}`: {e}")))
        };
        let d_c = parse("D_c")?.ok_or_else(|| bad("`D_c` must not be empty".into()))?;
        let (l, m) = d_c.shape();
        let a_c = parse("A_c")?.unwrap_or_else(|| Mat::zeros(n_c, n_c));
        let b_c = parse("B_c")?.unwrap_or_else(|| Mat::zeros(n_c, m));
        let c_c = parse("C_c")?.unwrap_or_else(|| Mat::zeros(l, n_c));
        let k = Controller::new(a_c, b_c, c_c, d_c)?;
        if k.n_c != n_c {
            return Err(bad(format!("`n_c` = {n_c} but `A_c` is {}x{}", k.a_c.rows(), k.a_c.cols())));
        }
        Ok(k)
    }
}

fn check_controller(sys: &FoSystem, k: &Controller) -> Result<()> {
    if k.d_c.shape() != (sys.inputs(), sys.outputs()) {
        return Err(Error::Dimension(format!(
            "D_c is {}x{} but the plant has {} inputs and {} outputs",
            k.d_c.rows(),
            k.d_c.cols(),
            sys.inputs(),
            sys.outputs()
        )));
    }
    Ok(())
}

/// Uncertainty factors of the augmented non-delayed and delayed matrices.
pub fn close_loop(sys: &FoSystem, k: &Controller) -> Result<(UncertaintyFactors, UncertaintyFactors)> {
    check_controller(sys, k)?;
    let a = build_factors(&sys.a_int);
    let b = build_factors(&sys.b_int);
    let (n, nc) = (sys.n(), k.n_c);
    let c = &sys.c_out;
    let bcc = k.b_c.matmul(c);
    let a0 = block_assemble(&[vec![Block::M(&a.center), Block::M(&Mat::zeros(n, nc))], vec![Block::M(&bcc), Block::M(&k.a_c)]])?;
    let ma = Mat::vstack(&[&a.m_factor, &Mat::zeros(nc, a.m_factor.cols())])?;
    let ra = Mat::hstack(&[&a.r_factor, &Mat::zeros(a.r_factor.rows(), nc)])?;
    let dcc = k.d_c.matmul(c);
    let top = Mat::hstack(&[&b.center.matmul(&dcc), &b.center.matmul(&k.c_c)])?;
    let ad0 = Mat::vstack(&[&top, &Mat::zeros(nc, n + nc)])?;
    let mb = Mat::vstack(&[&b.m_factor, &Mat::zeros(nc, b.m_factor.cols())])?;
    let rb = Mat::hstack(&[&b.r_factor.matmul(&dcc), &b.r_factor.matmul(&k.c_c)])?;
    Ok((UncertaintyFactors::from_parts(a0, ma, ra)?, UncertaintyFactors::from_parts(ad0, mb, rb)?))
}

/// Fixed closed-loop pair for sampled plant matrices.
pub fn close_loop_fixed(a: &Mat, b: &Mat, c: &Mat, k: &Controller) -> Result<DelayedPair> {
    let (n, nc) = (a.rows(), k.n_c);
    let a_cl = block_assemble(&[vec![Block::M(a), Block::M(&Mat::zeros(n, nc))], vec![Block::M(&k.b_c.matmul(c)), Block::M(&k.a_c)]])?;
    let top = Mat::hstack(&[&b.matmul(&k.d_c).matmul(c), &b.matmul(&k.c_c)])?;
    let a_dcl = Mat::vstack(&[&top, &Mat::zeros(nc, n + nc)])?;
    DelayedPair::new(a_cl, a_dcl)
}

/// How plant uncertainty enters the synthesis condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UncertaintyMode {
    /// Robust form unless every radius is zero.
    Auto,
    /// Always the η-bordered robust form.
    Robust,
    /// Centers only; candidates are post-validated on the centers.
    Nominal,
}

#[derive(Clone, Debug)]
pub struct SynthesisOptions {
    pub max_outer_iter: usize,
    /// Max-norm change of the controller below which the iteration stops.
    pub conv_tol: f64,
    pub mode: UncertaintyMode,
    pub solve: SolveOptions,
    pub analysis: AnalysisOptions,
    /// Starting controller; zero of the requested order when absent.
    pub initial: Option<Controller>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            max_outer_iter: 10,
            conv_tol: 1e-6,
            mode: UncertaintyMode::Auto,
            solve: SolveOptions { bound: 1e3, ..SolveOptions::default() },
            analysis: AnalysisOptions::default(),
            initial: None,
        }
    }
}

/// `‖T_S B₀ C_c − W₃‖, ‖T_S B₀ D_c − W₄‖, ‖T_C A_c − W₁‖, ‖T_C B_c − W₂‖`
/// in the max-norm.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecoveryResiduals {
    pub w3: f64,
    pub w4: f64,
    pub w1: f64,
    pub w2: f64,
}

impl RecoveryResiduals {
    pub fn max(&self) -> f64 {
        self.w1.max(self.w2).max(self.w3).max(self.w4)
    }
}

/// Per outer iteration: analysis margin, synthesis margin, and whether the
/// candidate passed post-validation.
#[derive(Clone, Debug)]
pub struct IterationLog {
    pub analysis_margin: f64,
    pub synthesis_margin: f64,
    pub certified: bool,
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub controller: Controller,
    /// Synthesis-step values plus the frozen `T_S`.
    pub certificate: Certificate,
    pub frozen_ts: Mat,
    pub recovery_residuals: RecoveryResiduals,
    pub iterations: usize,
    pub history: Vec<IterationLog>,
    pub post_validation: StabilityReport,
}

fn is_robust(sys: &FoSystem, mode: UncertaintyMode) -> bool {
    match mode {
        UncertaintyMode::Auto => !(sys.a_int.is_degenerate() && sys.b_int.is_degenerate()),
        UncertaintyMode::Robust => true,
        UncertaintyMode::Nominal => false,
    }
}

/// Synthesis condition for a frozen plant slack `T_S` (`n×n`).
///
/// Variables: `P, Q, Z, N1..N3` of the augmented size, `T_C` (symmetric),
/// `W1`, `W2`, `C_c`, `D_c`, and `eta` when the robust form has uncertainty.
pub fn assemble_synthesis(sys: &FoSystem, n_c: usize, ts: &Mat, robust: bool) -> Result<LmiProblem> {
    let (n, l, m) = (sys.n(), sys.inputs(), sys.outputs());
    if ts.shape() != (n, n) {
        return Err(Error::Dimension(format!("T_S must be {n}x{n}, got {}x{}", ts.rows(), ts.cols())));
    }
    let d = sys.delay.clone();
    if !(d.tau > 0.0) || d.mu >= 1.0 {
        return Err(Error::Parameter(format!("need tau > 0 and mu < 1, got tau = {}, mu = {}", d.tau, d.mu)));
    }
    let big_n = n + n_c;
    let a = build_factors(&sys.a_int);
    let b = build_factors(&sys.b_int);
    let c = &sys.c_out;
    let (e1, e2) = selectors(n, n_c);

    let mut prob = LmiProblem::new();
    let v = declare_core(&mut prob, big_n)?;
    let (tc, w1, w2, cc) = if n_c > 0 {
        (
            Some(prob.declare_var("T_C", VarKind::Symmetric(n_c), Cone::Free)?),
            Some(prob.declare_var("W1", VarKind::Rectangular(n_c, n_c), Cone::Free)?),
            Some(prob.declare_var("W2", VarKind::Rectangular(n_c, m), Cone::Free)?),
            Some(prob.declare_var("C_c", VarKind::Rectangular(l, n_c), Cone::Free)?),
        )
    } else {
        (None, None, None, None)
    };
    let dc = prob.declare_var("D_c", VarKind::Rectangular(l, m), Cone::Free)?;

    // T = diag(T_S, T_C)
    let mut t = MatExpr::constant(e1.matmul(ts).matmul(&e1.transpose()));
    if let Some(tc) = tc {
        t = t.add(&MatExpr::var(tc).lmul(&e2).rmul(&e2.transpose()));
    }
    // T·A_cl = [[T_S A₀, 0], [W₂ C, W₁]]
    let mut ta = MatExpr::constant(e1.matmul(&ts.matmul(&a.center)).matmul(&e1.transpose()));
    if let (Some(w1), Some(w2)) = (w1, w2) {
        ta = ta
            .add(&MatExpr::var(w2).lmul(&e2).rmul(&c.matmul(&e1.transpose())))
            .add(&MatExpr::var(w1).lmul(&e2).rmul(&e2.transpose()));
    }
    // T·A_dcl = [[T_S B₀ D_c C, T_S B₀ C_c], [0, 0]]
    let tsb = e1.matmul(&ts.matmul(&b.center));
    let mut tad = MatExpr::var(dc).lmul(&tsb).rmul(&c.matmul(&e1.transpose()));
    if let Some(cc) = cc {
        tad = tad.add(&MatExpr::var(cc).lmul(&tsb).rmul(&e2.transpose()));
    }

    let (ma, ra) = active_slots(&a);
    let (mb, rb) = active_slots(&b);
    let k = if robust { ma.cols() + mb.cols() } else { 0 };
    let mut blocks = SymBlocks::new(&[big_n, big_n, big_n, big_n, k]);
    let tt = [t.clone(), t.clone(), t];
    place_structure(&mut blocks, &v, &tt, d.tau, d.mu);
    for i in 0..3 {
        blocks.sym(i, 0, &ta.neg());
        blocks.sym(i, 1, &tad.neg());
    }
    if k > 0 {
        let eta = prob.declare_var("eta", VarKind::Scalar, Cone::PositiveScalar)?;
        // U: rows 1..3 carry −T·[M_A; 0] and −T·[M_B; 0] = −E₁ T_S M.
        let tm = e1.matmul(&ts.matmul(&Mat::hstack(&[&ma, &mb])?)).scale(-1.0);
        let mut u = Mat::zeros(4 * big_n, k);
        for i in 0..3 {
            u.set_block(i * big_n, 0, &tm);
        }
        let uut = u.matmul(&u.transpose());
        for i in 0..4 {
            for j in i..4 {
                let blk = uut.submatrix(i * big_n, j * big_n, big_n, big_n);
                if blk.max_abs() == 0.0 {
                    continue;
                }
                let e = MatExpr::scalar_times(eta, &blk);
                if i == j {
                    blocks.diag(i, &e);
                } else {
                    blocks.sym(i, j, &e);
                }
            }
        }
        // V rows: [R_A E₁ᵀ | 0] and [0 | R_B D_c C E₁ᵀ + R_B C_c E₂ᵀ].
        let ka = ma.cols();
        let sel_a = Mat::vstack(&[&Mat::identity(ka), &Mat::zeros(mb.cols(), ka)])?;
        let sel_b = Mat::vstack(&[&Mat::zeros(ka, mb.cols()), &Mat::identity(mb.cols())])?;
        blocks.sym(4, 0, &MatExpr::constant(sel_a.matmul(&ra).matmul(&e1.transpose())));
        let mut vb = MatExpr::var(dc).lmul(&sel_b.matmul(&rb)).rmul(&c.matmul(&e1.transpose()));
        if let Some(cc) = cc {
            vb = vb.add(&MatExpr::var(cc).lmul(&sel_b.matmul(&rb)).rmul(&e2.transpose()));
        }
        blocks.sym(4, 1, &vb);
        blocks.diag(4, &MatExpr::scaled_identity(eta, k).neg());
    }
    prob.add_constraint("synthesis", blocks.finish(), Sense::NegDef)?;
    Ok(prob)
}

/// Controller matrices from a synthesis certificate.
pub fn recover(cert: &Certificate, n_c: usize) -> Result<(Controller, RecoveryResiduals)> {
    let fail = |s: String| Error::Synthesis { kind: SynthesisFailure::RecoveryFailure, detail: s };
    let get = |name: &str| cert.get(name).cloned().ok_or_else(|| fail(format!("certificate lacks `{name}`")));
    let d_c = get("D_c")?;
    let mut res = RecoveryResiduals::default();
    let k = if n_c == 0 {
        Controller::static_gain(d_c)
    } else {
        let tc = get("T_C")?;
        let w1 = get("W1")?;
        let w2 = get("W2")?;
        let c_c = get("C_c")?;
        let lu = Lu::new(&tc).map_err(|e| fail(format!("T_C is singular: {e}")))?;
        let a_c = lu.solve(&w1);
        let b_c = lu.solve(&w2);
        res.w1 = (&tc.matmul(&a_c) - &w1).max_abs();
        res.w2 = (&tc.matmul(&b_c) - &w2).max_abs();
        let limit = |w: &Mat| 1e-6 * (1.0 + w.max_abs());
        if res.w1 > limit(&w1) || res.w2 > limit(&w2) {
            return Err(fail(format!("residuals {:.3e}, {:.3e} exceed the threshold", res.w1, res.w2)));
        }
        Controller::new(a_c, b_c, c_c, d_c)?
    };
    // W₃ = T_S B₀ C_c and W₄ = T_S B₀ D_c are never separate unknowns, so
    // their residuals stay zero.
    Ok((k, res))
}

/// Post-validation of a controller with the free-slack interval analysis
/// (or the certain analysis on centers in nominal mode).
pub fn validate(sys: &FoSystem, k: &Controller, robust: bool, opts: &AnalysisOptions) -> Result<StabilityReport> {
    let (a, b) = close_loop(sys, k)?;
    let d = &sys.delay;
    let mut report = if robust {
        analyze_interval(&a, &b, d.tau, d.mu, opts)?
    } else {
        analyze_certain(&DelayedPair::new(a.center, b.center)?, d.tau, d.mu, opts)?
    };
    report.warnings.extend(sys.delay.validate());
    Ok(report)
}

pub fn synthesize(sys: &FoSystem, n_c: usize, opts: &SynthesisOptions) -> Result<SynthesisResult> {
    let robust = is_robust(sys, opts.mode);
    let n = sys.n();
    let mut k = match &opts.initial {
        Some(k0) => {
            check_controller(sys, k0)?;
            if k0.n_c != n_c {
                return Err(Error::Parameter(format!("initial controller has order {}, expected {n_c}", k0.n_c)));
            }
            k0.clone()
        }
        None => Controller::zero(n_c, sys.inputs(), sys.outputs()),
    };
    let d = &sys.delay;
    let mut history = Vec::new();
    let mut last_error: Option<Error> = None;
    for iter in 1..=opts.max_outer_iter.max(1) {
        // Analysis step: best shared slack for the current controller.
        let (a_cl, a_dcl) = close_loop(sys, &k)?;
        let (a_cl, a_dcl) = if robust {
            (a_cl, a_dcl)
        } else {
            (UncertaintyFactors::certain(a_cl.center), UncertaintyFactors::certain(a_dcl.center))
        };
        let ana_prob = assemble_interval_with(&a_cl, &a_dcl, d.tau, d.mu, SlackStructure::SharedBlockDiag { plant_dim: n })?;
        let ana = maximize_margin(&ana_prob, &opts.solve)?;
        let ts_raw = ana.certificate.get("T_S").cloned().expect("declared");
        let scale = ts_raw.max_abs();
        if scale == 0.0 {
            last_error = Some(Error::Synthesis { kind: SynthesisFailure::NoFeasibleIterate, detail: "analysis returned T_S = 0".into() });
            break;
        }
        let ts = ts_raw.scale(1.0 / scale);

        // Synthesis step with T_S frozen.
        let syn_prob = assemble_synthesis(sys, n_c, &ts, robust)?;
        let syn = maximize_margin(&syn_prob, &opts.solve)?;
        let mut log = IterationLog { analysis_margin: ana.margin, synthesis_margin: syn.margin, certified: false };
        let candidate = recover(&syn.certificate, n_c);
        let (k_new, residuals) = match candidate {
            Ok(x) => x,
            Err(e) => {
                history.push(log);
                last_error = Some(e);
                continue;
            }
        };
        if syn.margin >= 0.0 {
            let post = validate(sys, &k_new, robust, &opts.analysis)?;
            if post.verdict == Verdict::CertifiedStable {
                log.certified = true;
                history.push(log);
                let mut certificate = syn.certificate;
                certificate.set("T_S", ts.clone());
                return Ok(SynthesisResult {
                    controller: k_new,
                    certificate,
                    frozen_ts: ts,
                    recovery_residuals: residuals,
                    iterations: iter,
                    history,
                    post_validation: post,
                });
            }
            last_error = Some(Error::Synthesis {
                kind: SynthesisFailure::PostValidationFailure,
                detail: format!("candidate of iteration {iter} not certified: {}", post.reason),
            });
        } else if last_error.is_none() {
            last_error = Some(Error::Synthesis {
                kind: SynthesisFailure::NoFeasibleIterate,
                detail: format!("best synthesis margin {:.3e} after {iter} iteration(s)", syn.margin),
            });
        }
        history.push(log);
        let change = k_new.distance(&k);
        k = k_new;
        if change < opts.conv_tol {
            break;
        }
    }
    Err(last_error.unwrap_or(Error::Synthesis {
        kind: SynthesisFailure::NoFeasibleIterate,
        detail: "no iteration produced a candidate".into(),
    }))
}
