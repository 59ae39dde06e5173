//! Grünwald–Letnikov simulation of `D^α x(t) = A x(t) + A_d x(t − d(t))`.
//!
//! The Caputo derivative is discretized as the GL difference of `x − x₀`:
//!
//! ```text
//! h^{−α} Σ_{j=0..k} c_j (x_{k−j} − x₀) = A x_k + A_d x(t_k − d(t_k))
//! ```
//!
//! The `A x_k` term is implicit. The delayed state is linearly interpolated
//! from the computed trace, or from the initial function for arguments in
//! `[−τ, 0]`. When the delayed argument falls inside the current step its
//! `x_k` weight joins the implicit system matrix.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::interval::{interp_knots, DelaySpec};
use crate::linalg::Lu;
use crate::matrix::Mat;
use crate::synthesis::{close_loop_fixed, Controller};

/// First `count` GL coefficients `c₀ = 1`, `c_j = (1 − (1+α)/j) c_{j−1}`.
pub fn gl_coeffs(alpha: f64, count: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if count == 0 {
        return Err(Error::Parameter("coefficient count must be >= 1".into()));
    }
    let mut c = Vec::with_capacity(count);
    c.push(1.0);
    for j in 1..count {
        let prev = c[j - 1];
        c.push((1.0 - (1.0 + alpha) / j as f64) * prev);
    }
    Ok(c)
}

/// Initial function `φ` on `[−τ, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub enum History {
    Constant(Vec<f64>),
    /// `(t, φ(t))` samples with increasing `t ≤ 0`; linear in between,
    /// constant before the first sample and after the last.
    Table(Vec<(f64, Vec<f64>)>),
}

impl History {
    pub fn dim(&self) -> usize {
        match self {
            History::Constant(v) => v.len(),
            History::Table(s) => s.first().map_or(0, |(_, v)| v.len()),
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        match self {
            History::Constant(v) => v.clone(),
            History::Table(s) => {
                let n = self.dim();
                (0..n)
                    .map(|i| {
                        let knots: Vec<(f64, f64)> = s.iter().map(|(t, v)| (*t, v[i])).collect();
                        interp_knots(&knots, t)
                    })
                    .collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            History::Constant(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Parameter("history vector has non-finite entries".into()));
                }
            }
            History::Table(s) => {
                if s.is_empty() {
                    return Err(Error::Parameter("history table is empty".into()));
                }
                let n = s[0].1.len();
                if s.iter().any(|(t, v)| v.len() != n || !t.is_finite() || v.iter().any(|x| !x.is_finite())) {
                    return Err(Error::Parameter("history table rows are ragged or non-finite".into()));
                }
                if s.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::Parameter("history table times must increase strictly".into()));
                }
                if s.iter().any(|(t, _)| *t > 0.0) {
                    return Err(Error::Parameter("history table times must be <= 0".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub step_h: f64,
    pub horizon_t: f64,
    /// Number of past GL terms kept; `None` keeps the full memory.
    pub memory_len: Option<usize>,
    pub history: History,
}

impl SimConfig {
    pub fn new(step_h: f64, horizon_t: f64, history: History) -> Self {
        SimConfig { step_h, horizon_t, memory_len: None, history }
    }

    pub fn steps(&self) -> usize {
        (self.horizon_t / self.step_h).round() as usize
    }

    pub fn validate(&self, tau: f64) -> Result<()> {
        if !(self.step_h > 0.0 && self.step_h.is_finite()) {
            return Err(Error::Parameter(format!("step h must be positive, got {}", self.step_h)));
        }
        if !(self.horizon_t > 0.0 && self.horizon_t.is_finite()) {
            return Err(Error::Parameter(format!("horizon must be positive, got {}", self.horizon_t)));
        }
        if tau > 0.0 && self.step_h > tau {
            return Err(Error::Parameter(format!("step h = {} exceeds the delay bound tau = {tau}", self.step_h)));
        }
        if self.memory_len == Some(0) {
            return Err(Error::Parameter("memory length must be >= 1".into()));
        }
        self.history.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub norm_series: Vec<f64>,
    /// Step index at which the divergence threshold was crossed.
    pub diverged_at: Option<usize>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl Trace {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], |v| v.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut s = String::from("t");
        for i in 1..=n {
            let _ = write!(s, ",x{i}");
        }
        s.push_str(",norm\n");
        for ((t, x), nv) in self.times.iter().zip(&self.states).zip(&self.norm_series) {
            let _ = write!(s, "{t:.11e}");
            for v in x {
                let _ = write!(s, ",{v:.11e}");
            }
            let _ = writeln!(s, ",{nv:.11e}");
        }
        s
    }

    /// Maxima of the norm series over consecutive windows of `width` samples
    /// starting at `from`.
    pub fn window_peaks(&self, from: usize, width: usize) -> Vec<f64> {
        let width = width.max(1);
        self.norm_series[from.min(self.norm_series.len())..]
            .chunks(width)
            .map(|w| w.iter().copied().fold(0.0, f64::max))
            .collect()
    }

    /// Peak norms over the final half of the horizon, in `windows` chunks,
    /// never increase by more than `rel_tol` relative to the first peak.
    pub fn envelope_non_increasing(&self, windows: usize, rel_tol: f64) -> bool {
        let len = self.norm_series.len();
        let half = len / 2;
        let width = ((len - half) / windows.max(1)).max(1);
        let peaks = self.window_peaks(half, width);
        let scale = peaks.first().copied().unwrap_or(0.0);
        peaks.windows(2).all(|w| w[1] <= w[0] + rel_tol * scale)
    }
}

fn interp_state(states: &[Vec<f64>], h: f64, hist: &History, s: f64) -> Vec<f64> {
    if s <= 0.0 {
        return hist.eval(s);
    }
    let u = s / h;
    let i = u.floor() as usize;
    if i + 1 >= states.len() {
        return states[states.len() - 1].clone();
    }
    let w = u - i as f64;
    states[i].iter().zip(&states[i + 1]).map(|(a, b)| (1.0 - w) * a + w * b).collect()
}

pub fn simulate(a: &Mat, a_d: &Mat, delay: &DelaySpec, alpha: f64, cfg: &SimConfig) -> Result<Trace> {
    let n = a.rows();
    if !a.is_square() || a_d.shape() != (n, n) {
        return Err(Error::Dimension(format!("A is {:?} and A_d is {:?}; both must be {n}x{n}", a.shape(), a_d.shape())));
    }
    cfg.validate(delay.tau)?;
    if cfg.history.dim() != n {
        return Err(Error::Dimension(format!("history has dimension {}, system has {n}", cfg.history.dim())));
    }
    let h = cfg.step_h;
    let steps = cfg.steps();
    let mem = cfg.memory_len.unwrap_or(steps).min(steps);
    let c = gl_coeffs(alpha, mem + 1)?;
    let ha = h.powf(alpha);
    let x0 = cfg.history.eval(0.0);
    let limit = 1e6 * (1.0 + norm(&x0));
    let base = &Mat::identity(n) - &a.scale(ha);
    let base_lu = Lu::new(&base).map_err(|e| Error::Step { step: 1, reason: format!("I - h^α A is singular: {e}") })?;
    let had = a_d.scale(ha);

    let mut trace = Trace { times: vec![0.0], states: vec![x0.clone()], norm_series: vec![norm(&x0)], diverged_at: None };
    for k in 1..=steps {
        let tk = k as f64 * h;
        let mut rhs = x0.clone();
        for j in 1..=k.min(mem) {
            let xj = &trace.states[k - j];
            for i in 0..n {
                rhs[i] -= c[j] * (xj[i] - x0[i]);
            }
        }
        let s = tk - delay.eval(tk);
        let xk = if s > tk - h {
            // Delayed argument inside the current step: its x_k weight is implicit.
            let w = (s - (tk - h)) / h;
            let prev = interp_state(&trace.states, h, &cfg.history, tk - h);
            let dx = had.mul_vec(&prev);
            for i in 0..n {
                rhs[i] += (1.0 - w) * dx[i];
            }
            let m = &base - &had.scale(w);
            let lu = Lu::new(&m).map_err(|e| Error::Step { step: k, reason: format!("implicit delay system is singular: {e}") })?;
            lu.solve(&Mat::col_vector(&rhs)).col(0)
        } else {
            let xd = interp_state(&trace.states, h, &cfg.history, s);
            let dx = had.mul_vec(&xd);
            for i in 0..n {
                rhs[i] += dx[i];
            }
            base_lu.solve(&Mat::col_vector(&rhs)).col(0)
        };
        let nk = norm(&xk);
        trace.times.push(tk);
        trace.states.push(xk);
        trace.norm_series.push(nk);
        if !nk.is_finite() || nk > limit {
            trace.diverged_at = Some(k);
            break;
        }
    }
    Ok(trace)
}

/// Simulates the loop closed by `k` around the sampled plant `(a, b, c)`.
/// The controller history is zero; `cfg.history` covers the plant state.
pub fn simulate_closed_loop(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    k: &Controller,
    delay: &DelaySpec,
    alpha: f64,
    cfg: &SimConfig,
) -> Result<Trace> {
    let pair = close_loop_fixed(a, b, c, k)?;
    let pad = |v: Vec<f64>| -> Vec<f64> { v.into_iter().chain(std::iter::repeat(0.0).take(k.n_c)).collect() };
    let history = match &cfg.history {
        History::Constant(v) => History::Constant(pad(v.clone())),
        History::Table(s) => History::Table(s.iter().map(|(t, v)| (*t, pad(v.clone()))).collect()),
    };
    simulate(&pair.a, &pair.b, delay, alpha, &SimConfig { history, ..cfg.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients() {
        assert_eq!(gl_coeffs(1.0, 4).unwrap(), vec![1.0, -1.0, 0.0, 0.0]);
        let c = gl_coeffs(0.5, 4).unwrap();
        // c_j = (−1)^j binom(α, j), evaluated directly.
        let binom = |a: f64, j: usize| (0..j).fold(1.0, |p, i| p * (a - i as f64) / (i as f64 + 1.0));
        for (j, v) in c.iter().enumerate() {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            assert!((v - sign * binom(0.5, j)).abs() < 1e-15);
        }
        assert_eq!(c, vec![1.0, -0.5, -0.125, -0.0625]);
        assert!((gl_coeffs(0.3, 2).unwrap()[1] + 0.3).abs() < 1e-15);
        assert!(gl_coeffs(0.0, 3).is_err());
        assert!(gl_coeffs(1.5, 3).is_err());
        assert!(gl_coeffs(0.5, 0).is_err());
    }

    #[test]
    fn zero_dynamics_constant() {
        let z = Mat::zeros(2, 2);
        let cfg = SimConfig::new(0.01, 1.0, History::Constant(vec![1.0, -2.0]));
        let tr = simulate(&z, &z, &DelaySpec::constant(0.1), 0.4, &cfg).unwrap();
        assert!(tr.states.iter().all(|x| x == &vec![1.0, -2.0]));
        assert_eq!(tr.times.len(), 101);
    }

    #[test]
    fn exponential_oracle() {
        let cfg = SimConfig::new(1e-3, 5.0, History::Constant(vec![1.0]));
        let tr = simulate(&Mat::scalar(-1.0), &Mat::scalar(0.0), &DelaySpec::constant(0.0), 1.0, &cfg).unwrap();
        let err = tr.times.iter().zip(&tr.states).map(|(t, x)| (x[0] - (-t).exp()).abs()).fold(0.0, f64::max);
        assert!(err < 5e-3, "sup error {err}");
    }

    #[test]
    fn refinement_ratio() {
        let final_err = |h: f64| {
            let cfg = SimConfig::new(h, 1.0, History::Constant(vec![1.0]));
            let tr = simulate(&Mat::scalar(-1.0), &Mat::scalar(0.0), &DelaySpec::constant(0.0), 1.0, &cfg).unwrap();
            (tr.final_state()[0] - (-1.0f64).exp()).abs()
        };
        let (e1, e2, e3) = (final_err(0.01), final_err(0.005), final_err(0.0025));
        for r in [e1 / e2, e2 / e3] {
            assert!((r - 2.0).abs() < 0.6, "ratio {r}");
        }
    }

    #[test]
    fn history_at_zero() {
        let hist = History::Table(vec![(-0.5, vec![3.0]), (0.0, vec![1.25])]);
        let cfg = SimConfig::new(0.05, 1.0, hist);
        let tr = simulate(&Mat::scalar(-1.0), &Mat::scalar(0.5), &DelaySpec::constant(0.5), 0.6, &cfg).unwrap();
        assert_eq!(tr.states[0], vec![1.25]);
        assert_eq!(tr.times[0], 0.0);
    }

    #[test]
    fn step_exceeding_delay_rejected() {
        let cfg = SimConfig::new(1.0, 5.0, History::Constant(vec![1.0]));
        let e = simulate(&Mat::scalar(-1.0), &Mat::scalar(0.0), &DelaySpec::constant(0.25), 0.5, &cfg).unwrap_err();
        assert!(matches!(e, Error::Parameter(_)));
    }

    #[test]
    fn singular_step_reported() {
        // I − h·A = 0 for A = 1/h at α = 1.
        let cfg = SimConfig::new(0.5, 2.0, History::Constant(vec![1.0]));
        let e = simulate(&Mat::scalar(2.0), &Mat::scalar(0.0), &DelaySpec::constant(0.0), 1.0, &cfg).unwrap_err();
        assert!(matches!(e, Error::Step { step: 1, .. }));
    }

    #[test]
    fn divergence_flag() {
        let cfg = SimConfig::new(0.01, 50.0, History::Constant(vec![1.0]));
        let tr = simulate(&Mat::scalar(1.0), &Mat::scalar(0.0), &DelaySpec::constant(0.0), 0.8, &cfg).unwrap();
        assert!(tr.diverged());
        assert!(tr.norm_series.last().unwrap() > &1e6);
    }

    #[test]
    fn csv_layout() {
        let z = Mat::zeros(2, 2);
        let cfg = SimConfig::new(0.5, 1.0, History::Constant(vec![1.0, 0.0]));
        let csv = simulate(&z, &z, &DelaySpec::constant(0.5), 0.5, &cfg).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,norm");
        assert_eq!(lines[1], "0.00000000000e0,1.00000000000e0,0.00000000000e0,1.00000000000e0");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn zero_controller_pads_plant() {
        let a = Mat::from_rows(&[[-1.0, 0.5], [0.0, -2.0]]);
        let b = Mat::col_vector(&[1.0, 0.5]);
        let c = Mat::from_rows(&[[1.0, 0.0]]);
        let delay = DelaySpec::constant(0.2);
        let cfg = SimConfig::new(0.01, 3.0, History::Constant(vec![1.0, 1.0]));
        let plant = simulate(&a, &Mat::zeros(2, 2), &delay, 0.7, &cfg).unwrap();
        let cl = simulate_closed_loop(&a, &b, &c, &Controller::zero(1, 1, 1), &delay, 0.7, &cfg).unwrap();
        for (p, q) in plant.states.iter().zip(&cl.states) {
            assert!((p[0] - q[0]).abs() < 1e-14 && (p[1] - q[1]).abs() < 1e-14 && q[2] == 0.0);
        }
    }
}
