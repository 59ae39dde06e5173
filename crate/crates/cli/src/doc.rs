//! System description documents.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "alpha": 0.3,
//!   "A": { "lower": [[...]], "upper": [[...]] },
//!   "B": { "lower": [[...]], "upper": [[...]] },
//!   "C": [[1, 0]],
//!   "delay": { "tau": 0.25, "mu": 0.15, "form": { "type": "sin_exp", "a": 0.15 } },
//!   "controller": { "n_c": 0, "A_c": [], "B_c": [], "C_c": [], "D_c": [[-1.4215]] }
//! }
//! ```
//!
//! `delay_placement` selects how `B` enters: `"input"` (default) for
//! `D^α x = A x + B u(t − d)`, `y = C x`, or `"state"` for a closed loop given
//! directly as `D^α x = A x + B x(t − d)`. State documents carry no `C` and
//! no controller.

use std::path::Path;

use fodelay::interval::{build_factors, DelayForm, DelaySpec, FoSystem, IntervalMatrix, UncertaintyFactors};
use fodelay::synthesis::{close_loop, Controller};
use fodelay::Mat;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalDoc {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FormDoc {
    /// Constant delay; `value` defaults to `tau`.
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
    },
    /// `d(t) = a (sin t + 1)(1 − e^{−t})`.
    SinExp { a: f64 },
    /// `[t, d]` knots.
    Table { knots: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayDoc {
    pub tau: f64,
    #[serde(default)]
    pub mu: f64,
    pub form: FormDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerDoc {
    pub n_c: usize,
    #[serde(rename = "A_c")]
    pub a_c: Vec<Vec<f64>>,
    #[serde(rename = "B_c")]
    pub b_c: Vec<Vec<f64>>,
    #[serde(rename = "C_c")]
    pub c_c: Vec<Vec<f64>>,
    #[serde(rename = "D_c")]
    pub d_c: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Input,
    State,
}

fn is_input(p: &Placement) -> bool {
    *p == Placement::Input
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub schema_version: u32,
    pub alpha: f64,
    #[serde(rename = "A")]
    pub a: IntervalDoc,
    #[serde(rename = "B")]
    pub b: IntervalDoc,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    pub delay: DelayDoc,
    #[serde(default, skip_serializing_if = "is_input")]
    pub delay_placement: Placement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerDoc>,
}

/// A document problem with the path of the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct DocError(pub String);

impl std::fmt::Display for DocError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn field(path: &str, e: impl std::fmt::Display) -> DocError {
    DocError(format!("{path}: {e}"))
}

fn matrix(path: &str, rows: &[Vec<f64>]) -> Result<Mat, DocError> {
    if rows.is_empty() {
        return Err(field(path, "matrix must have at least one row"));
    }
    Mat::try_from_rows(rows).map_err(|e| field(path, e))
}

fn controller_matrix(path: &str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<Mat, DocError> {
    if rows.is_empty() {
        return Ok(Mat::zeros(shape.0, shape.1));
    }
    let m = matrix(path, rows)?;
    if m.shape() != shape {
        return Err(field(path, format!("expected {}x{}, got {}x{}", shape.0, shape.1, m.rows(), m.cols())));
    }
    Ok(m)
}

fn interval(path: &str, d: &IntervalDoc) -> Result<IntervalMatrix, DocError> {
    let lo = matrix(&format!("{path}.lower"), &d.lower)?;
    let hi = matrix(&format!("{path}.upper"), &d.upper)?;
    IntervalMatrix::new(lo, hi).map_err(|e| field(path, e))
}

/// A validated document.
#[derive(Clone, Debug)]
pub struct System {
    pub doc: SystemDoc,
    pub alpha: f64,
    pub a: IntervalMatrix,
    pub b: IntervalMatrix,
    pub c: Option<Mat>,
    pub delay: DelaySpec,
    pub controller: Option<Controller>,
}

/// Non-delayed and delayed factors of the loop the document describes.
#[derive(Clone, Debug)]
pub struct Loop {
    pub a: UncertaintyFactors,
    pub b: UncertaintyFactors,
}

impl System {
    pub fn placement(&self) -> Placement {
        self.doc.delay_placement
    }

    pub fn n(&self) -> usize {
        self.a.shape().0
    }

    /// Plant model for synthesis; input placement only.
    pub fn fo_system(&self) -> Result<FoSystem, DocError> {
        if self.placement() == Placement::State {
            return Err(DocError("delay_placement: a \"state\" document has no plant input to design for".into()));
        }
        let c = self.c.clone().ok_or_else(|| DocError("C: required for input placement".into()))?;
        FoSystem::new(self.alpha, self.a.clone(), self.b.clone(), c, self.delay.clone()).map_err(|e| DocError(e.to_string()))
    }

    /// The analyzed loop: the state pair as given, the plant closed by the
    /// document's controller, or the plant alone with `u ≡ 0`.
    pub fn closed_loop(&self) -> Result<Loop, DocError> {
        match (self.placement(), &self.controller) {
            (Placement::State, _) => Ok(Loop { a: build_factors(&self.a), b: build_factors(&self.b) }),
            (Placement::Input, Some(k)) => {
                let (a, b) = close_loop(&self.fo_system()?, k).map_err(|e| field("controller", e))?;
                Ok(Loop { a, b })
            }
            (Placement::Input, None) => {
                let n = self.n();
                Ok(Loop { a: build_factors(&self.a), b: UncertaintyFactors::certain(Mat::zeros(n, n)) })
            }
        }
    }
}

pub fn parse_str(text: &str) -> Result<System, DocError> {
    let doc: SystemDoc = serde_json::from_str(text).map_err(|e| DocError(format!("schema: {e}")))?;
    validate(doc)
}

pub fn load(path: &Path) -> Result<System, DocError> {
    let text = std::fs::read_to_string(path).map_err(|e| DocError(format!("{}: {e}", path.display())))?;
    parse_str(&text).map_err(|e| DocError(format!("{}: {e}", path.display())))
}

/// Normalized serialization: pretty JSON with a trailing newline.
pub fn to_string(doc: &SystemDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("serializable");
    s.push('\n');
    s
}

pub fn validate(doc: SystemDoc) -> Result<System, DocError> {
    if doc.schema_version != SCHEMA_VERSION {
        return Err(field("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", doc.schema_version)));
    }
    if !(doc.alpha > 0.0 && doc.alpha < 1.0) {
        return Err(field("alpha", format!("must lie in (0, 1), got {}", doc.alpha)));
    }
    let a = interval("A", &doc.a)?;
    let b = interval("B", &doc.b)?;
    let n = a.shape().0;
    if a.shape().1 != n {
        return Err(field("A", format!("must be square, got {}x{}", n, a.shape().1)));
    }
    if b.shape().0 != n {
        return Err(field("B", format!("must have {n} rows, got {}", b.shape().0)));
    }
    let form = match &doc.delay.form {
        FormDoc::Constant { value } => DelayForm::Constant(value.unwrap_or(doc.delay.tau)),
        FormDoc::SinExp { a } => DelayForm::SinExp(*a),
        FormDoc::Table { knots } => DelayForm::Table(knots.clone()),
    };
    let delay = DelaySpec::new(doc.delay.tau, doc.delay.mu, form).map_err(|e| field("delay", e))?;

    let (c, controller) = match doc.delay_placement {
        Placement::State => {
            if b.shape().1 != n {
                return Err(field("B", format!("state placement needs a square {n}x{n} matrix")));
            }
            if doc.c.is_some() {
                return Err(field("C", "not used with state placement"));
            }
            if doc.controller.is_some() {
                return Err(field("controller", "not used with state placement"));
            }
            (None, None)
        }
        Placement::Input => {
            let c = doc.c.as_ref().map(|c| matrix("C", c)).transpose()?;
            if let Some(c) = &c {
                if c.cols() != n {
                    return Err(field("C", format!("must have {n} columns, got {}", c.cols())));
                }
            }
            let controller = match &doc.controller {
                None => None,
                Some(kd) => {
                    let c = c.as_ref().ok_or_else(|| field("C", "required when a controller is given"))?;
                    let (l, m, nc) = (b.shape().1, c.rows(), kd.n_c);
                    let d_c = matrix("controller.D_c", &kd.d_c)?;
                    if d_c.shape() != (l, m) {
                        return Err(field("controller.D_c", format!("expected {l}x{m}, got {}x{}", d_c.rows(), d_c.cols())));
                    }
                    let a_c = controller_matrix("controller.A_c", &kd.a_c, (nc, nc))?;
                    let b_c = controller_matrix("controller.B_c", &kd.b_c, (nc, m))?;
                    let c_c = controller_matrix("controller.C_c", &kd.c_c, (l, nc))?;
                    Some(Controller::new(a_c, b_c, c_c, d_c).map_err(|e| field("controller", e))?)
                }
            };
            (c, controller)
        }
    };
    Ok(System { alpha: doc.alpha, a, b, c, delay, controller, doc })
}

pub fn controller_doc(k: &Controller) -> ControllerDoc {
    // `+ 0.0` turns −0.0 into 0.0.
    let rows = |m: &Mat| if m.is_empty() { Vec::new() } else { m.map(|v| v + 0.0).to_rows() };
    ControllerDoc { n_c: k.n_c, a_c: rows(&k.a_c), b_c: rows(&k.b_c), c_c: rows(&k.c_c), d_c: rows(&k.d_c) }
}
