//! Interval matrices, their center/radius decomposition and rank-one
//! factorization, delay descriptors, and the fractional-order system type.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Mat;

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalMatrix {
    lower: Mat,
    upper: Mat,
}

impl IntervalMatrix {
    pub fn new(lower: Mat, upper: Mat) -> Result<Self> {
        if lower.shape() != upper.shape() {
            return Err(Error::Interval(format!(
                "lower is {}x{} but upper is {}x{}",
                lower.rows(),
                lower.cols(),
                upper.rows(),
                upper.cols()
            )));
        }
        for i in 0..lower.rows() {
            for j in 0..lower.cols() {
                if lower[(i, j)] > upper[(i, j)] {
                    return Err(Error::Interval(format!(
                        "lower[{i}][{j}] = {} exceeds upper[{i}][{j}] = {}",
                        lower[(i, j)],
                        upper[(i, j)]
                    )));
                }
            }
        }
        Ok(IntervalMatrix { lower, upper })
    }

    pub fn certain(m: Mat) -> Self {
        IntervalMatrix { lower: m.clone(), upper: m }
    }

    pub fn lower(&self) -> &Mat {
        &self.lower
    }

    pub fn upper(&self) -> &Mat {
        &self.upper
    }

    pub fn shape(&self) -> (usize, usize) {
        self.lower.shape()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, m: &Mat, tol: f64) -> bool {
        m.shape() == self.shape()
            && (0..m.rows()).all(|i| {
                (0..m.cols()).all(|j| m[(i, j)] >= self.lower[(i, j)] - tol && m[(i, j)] <= self.upper[(i, j)] + tol)
            })
    }
}

/// Center and radius, entrywise.
pub fn decompose(im: &IntervalMatrix) -> (Mat, Mat) {
    let center = im.lower.zip_map(&im.upper, |l, u| 0.5 * (l + u));
    let radius = im.lower.zip_map(&im.upper, |l, u| 0.5 * (u - l));
    (center, radius)
}

/// `center + m_factor · diag(δ) · r_factor` with every δ in [−1, 1]
/// describes the uncertainty set.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyFactors {
    pub center: Mat,
    /// Entrywise radius of the hull described by the factors.
    pub radius: Mat,
    pub m_factor: Mat,
    pub r_factor: Mat,
}

impl UncertaintyFactors {
    /// Factors of arbitrary structure. The stored radius is the entrywise
    /// hull radius `|M|·|R|`.
    pub fn from_parts(center: Mat, m_factor: Mat, r_factor: Mat) -> Result<Self> {
        if m_factor.rows() != center.rows()
            || r_factor.cols() != center.cols()
            || m_factor.cols() != r_factor.rows()
        {
            return Err(Error::Dimension(format!(
                "factors {}x{} and {}x{} do not fit a {}x{} center",
                m_factor.rows(),
                m_factor.cols(),
                r_factor.rows(),
                r_factor.cols(),
                center.rows(),
                center.cols()
            )));
        }
        let radius = m_factor.map(f64::abs).matmul(&r_factor.map(f64::abs));
        Ok(UncertaintyFactors { center, radius, m_factor, r_factor })
    }

    /// A certain matrix with `slots` zero uncertainty directions.
    pub fn certain(center: Mat) -> Self {
        let (n, c) = center.shape();
        UncertaintyFactors {
            radius: Mat::zeros(n, c),
            m_factor: Mat::zeros(n, n * c),
            r_factor: Mat::zeros(n * c, c),
            center,
        }
    }

    pub fn slots(&self) -> usize {
        self.m_factor.cols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.center.shape()
    }

    pub fn hull(&self) -> IntervalMatrix {
        IntervalMatrix { lower: &self.center - &self.radius, upper: &self.center + &self.radius }
    }

    pub fn is_certain(&self) -> bool {
        self.m_factor.max_abs() == 0.0 || self.r_factor.max_abs() == 0.0
    }
}

/// Rank-one factorization with slots in row-major order over (i, j).
pub fn build_factors(im: &IntervalMatrix) -> UncertaintyFactors {
    let (center, radius) = decompose(im);
    let (n, c) = radius.shape();
    let mut m = Mat::zeros(n, n * c);
    let mut r = Mat::zeros(n * c, c);
    for i in 0..n {
        for j in 0..c {
            let s = i * c + j;
            let root = radius[(i, j)].sqrt();
            m[(i, s)] = root;
            r[(s, j)] = root;
        }
    }
    UncertaintyFactors { center, radius, m_factor: m, r_factor: r }
}

pub fn sample_member(uf: &UncertaintyFactors, deltas: &[f64]) -> Result<Mat> {
    if deltas.len() != uf.slots() {
        return Err(Error::Dimension(format!("{} deltas for {} slots", deltas.len(), uf.slots())));
    }
    if let Some((slot, &value)) = deltas.iter().enumerate().find(|(_, d)| !(-1.0..=1.0).contains(*d)) {
        return Err(Error::DeltaRange { slot, value });
    }
    let mut scaled = uf.m_factor.clone();
    for i in 0..scaled.rows() {
        for (s, d) in deltas.iter().enumerate() {
            scaled[(i, s)] *= d;
        }
    }
    Ok(&uf.center + &scaled.matmul(&uf.r_factor))
}

/// Seeded delta patterns: all −1, all +1, then alternating random ±1
/// vertices and uniform interior draws.
pub fn delta_patterns(slots: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| match k {
            0 => vec![-1.0; slots],
            1 => vec![1.0; slots],
            _ if k % 2 == 0 => (0..slots).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect(),
            _ => (0..slots).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        })
        .collect()
}

pub fn vertex_samples(uf: &UncertaintyFactors, count: usize, seed: u64) -> Vec<Mat> {
    delta_patterns(uf.slots(), count.max(1), seed)
        .iter()
        .map(|d| sample_member(uf, d).expect("patterns lie in [-1, 1]"))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum DelayForm {
    Constant(f64),
    /// `a·(sin t + 1)·(1 − e^{−t})`
    SinExp(f64),
    /// `(t, d)` knots, interpolated linearly, held constant outside.
    Table(Vec<(f64, f64)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelaySpec {
    pub tau: f64,
    pub mu: f64,
    pub form: DelayForm,
}

impl DelaySpec {
    pub fn new(tau: f64, mu: f64, form: DelayForm) -> Result<Self> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::Parameter(format!("tau must be finite and >= 0, got {tau}")));
        }
        if !mu.is_finite() || mu >= 1.0 {
            return Err(Error::Parameter(format!("mu must be finite and < 1, got {mu}")));
        }
        match &form {
            DelayForm::Constant(v) if !(0.0..=tau).contains(v) => {
                return Err(Error::Parameter(format!("constant delay {v} outside [0, tau = {tau}]")))
            }
            DelayForm::SinExp(a) if !a.is_finite() || *a < 0.0 => {
                return Err(Error::Parameter(format!("sin_exp amplitude must be >= 0, got {a}")))
            }
            DelayForm::Table(k) => {
                if k.is_empty() {
                    return Err(Error::Parameter("delay table is empty".into()));
                }
                if k.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::Parameter("delay table times must increase strictly".into()));
                }
                if k.iter().any(|(t, d)| !t.is_finite() || !d.is_finite()) {
                    return Err(Error::Parameter("delay table has non-finite entries".into()));
                }
            }
            _ => {}
        }
        Ok(DelaySpec { tau, mu, form })
    }

    pub fn constant(value: f64) -> Self {
        DelaySpec { tau: value, mu: 0.0, form: DelayForm::Constant(value) }
    }

    /// Delay at time `t ≥ 0`. Table values are clamped to [0, tau].
    pub fn eval(&self, t: f64) -> f64 {
        match &self.form {
            DelayForm::Constant(v) => *v,
            DelayForm::SinExp(a) => a * (t.sin() + 1.0) * (1.0 - (-t).exp()),
            DelayForm::Table(k) => interp_knots(k, t).clamp(0.0, self.tau),
        }
    }

    /// Consistency of the stated bounds against the delay function, probed
    /// on a dense grid over [0, 100].
    pub fn validate(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let h = 1e-3;
        let mut sup_d = f64::NEG_INFINITY;
        let mut sup_rate = f64::NEG_INFINITY;
        let mut prev = self.eval(0.0);
        sup_d = sup_d.max(prev);
        for k in 1..=100_000 {
            let d = self.eval(k as f64 * h);
            sup_d = sup_d.max(d);
            sup_rate = sup_rate.max((d - prev) / h);
            prev = d;
        }
        if let DelayForm::SinExp(a) = self.form {
            sup_d = sup_d.max(2.0 * a * (1.0 - (-100.0f64).exp()));
        }
        if sup_d > self.tau + 1e-9 {
            warnings.push(format!("delay reaches {sup_d:.4} which exceeds the stated bound tau = {}", self.tau));
        }
        if sup_rate > self.mu + 1e-6 {
            warnings.push(format!("delay rate reaches {sup_rate:.4} which exceeds the stated bound mu = {}", self.mu));
        }
        warnings
    }
}

pub(crate) fn interp_knots(k: &[(f64, f64)], t: f64) -> f64 {
    if t <= k[0].0 {
        return k[0].1;
    }
    if t >= k[k.len() - 1].0 {
        return k[k.len() - 1].1;
    }
    let i = k.partition_point(|(ti, _)| *ti <= t);
    let (t0, d0) = k[i - 1];
    let (t1, d1) = k[i];
    d0 + (d1 - d0) * (t - t0) / (t1 - t0)
}

/// `D^α x = A x + B u(t − d(t))`, `y = C x`, with interval `A` and `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct FoSystem {
    pub alpha: f64,
    pub a_int: IntervalMatrix,
    pub b_int: IntervalMatrix,
    pub c_out: Mat,
    pub delay: DelaySpec,
}

impl FoSystem {
    pub fn new(alpha: f64, a_int: IntervalMatrix, b_int: IntervalMatrix, c_out: Mat, delay: DelaySpec) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let (n, nc) = a_int.shape();
        if n != nc {
            return Err(Error::Dimension(format!("A must be square, got {n}x{nc}")));
        }
        if b_int.shape().0 != n {
            return Err(Error::Dimension(format!("B has {} rows, A has {n}", b_int.shape().0)));
        }
        if c_out.cols() != n {
            return Err(Error::Dimension(format!("C has {} columns, A has {n}", c_out.cols())));
        }
        Ok(FoSystem { alpha, a_int, b_int, c_out, delay })
    }

    pub fn n(&self) -> usize {
        self.a_int.shape().0
    }

    /// Number of plant inputs.
    pub fn inputs(&self) -> usize {
        self.b_int.shape().1
    }

    /// Number of measured outputs.
    pub fn outputs(&self) -> usize {
        self.c_out.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex_a() -> IntervalMatrix {
        IntervalMatrix::new(
            Mat::from_rows(&[[-2.3333, 1.0], [-1.6667, 0.0]]),
            Mat::from_rows(&[[-1.0, 1.0], [-0.6, 0.0]]),
        )
        .unwrap()
    }

    fn ex_b() -> IntervalMatrix {
        IntervalMatrix::new(Mat::col_vector(&[0.52, 0.56]), Mat::col_vector(&[1.1333, 1.0667])).unwrap()
    }

    #[test]
    fn rejects_inverted_bounds() {
        let e = IntervalMatrix::new(Mat::scalar(1.0), Mat::scalar(0.0)).unwrap_err();
        assert!(e.to_string().contains("lower[0][0]"));
    }

    #[test]
    fn degenerate_decompose() {
        let (c, r) = decompose(&IntervalMatrix::certain(Mat::identity(2)));
        assert_eq!(c, Mat::identity(2));
        assert_eq!(r, Mat::zeros(2, 2));
    }

    #[test]
    fn plant_decompose() {
        let (c, r) = decompose(&ex_a());
        let c_ref = Mat::from_rows(&[[-1.66665, 1.0], [-1.13335, 0.0]]);
        let r_ref = Mat::from_rows(&[[0.66665, 0.0], [0.53335, 0.0]]);
        assert!((&c - &c_ref).max_abs() < 1e-14);
        assert!((&r - &r_ref).max_abs() < 1e-14);
        let (c, r) = decompose(&ex_b());
        assert!((&c - &Mat::col_vector(&[0.82665, 0.81335])).max_abs() < 1e-14);
        assert!((&r - &Mat::col_vector(&[0.30665, 0.25335])).max_abs() < 1e-14);
    }

    #[test]
    fn plant_factors() {
        let uf = build_factors(&ex_a());
        assert_eq!(uf.m_factor.shape(), (2, 4));
        assert_eq!(uf.r_factor.shape(), (4, 2));
        assert!((uf.m_factor[(0, 0)] - 0.66665f64.sqrt()).abs() < 1e-15);
        assert!((uf.m_factor[(1, 2)] - 0.53335f64.sqrt()).abs() < 1e-15);
        assert_eq!(uf.m_factor[(0, 1)], 0.0);
        assert!((&uf.m_factor.matmul(&uf.r_factor) - &uf.radius).max_abs() < 1e-15);
    }

    #[test]
    fn zero_radius_factors() {
        let uf = build_factors(&IntervalMatrix::certain(Mat::zeros(2, 3)));
        assert_eq!(uf.m_factor, Mat::zeros(2, 6));
        assert_eq!(uf.r_factor, Mat::zeros(6, 3));
    }

    #[test]
    fn scalar_factor() {
        let uf = build_factors(&IntervalMatrix::new(Mat::scalar(0.0), Mat::scalar(2.0)).unwrap());
        assert_eq!(uf.radius, Mat::scalar(1.0));
        assert_eq!(uf.m_factor, Mat::scalar(1.0));
        assert_eq!(uf.r_factor, Mat::scalar(1.0));
    }

    #[test]
    fn member_endpoints() {
        let im = ex_a();
        let uf = build_factors(&im);
        assert_eq!(sample_member(&uf, &[0.0; 4]).unwrap(), uf.center);
        assert!((&sample_member(&uf, &[1.0; 4]).unwrap() - im.upper()).max_abs() < 1e-15);
        assert!(matches!(sample_member(&uf, &[0.0, 1.5, 0.0, 0.0]), Err(Error::DeltaRange { slot: 1, .. })));
    }

    #[test]
    fn random_members_stay_inside() {
        let im = ex_a();
        let uf = build_factors(&im);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let d: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            assert!(im.contains(&sample_member(&uf, &d).unwrap(), 1e-14));
        }
    }

    #[test]
    fn vertex_sampling() {
        let uf = build_factors(&IntervalMatrix::certain(Mat::scalar(3.0)));
        assert_eq!(vertex_samples(&uf, 1, 0), vec![Mat::scalar(3.0)]);
        let uf = build_factors(&IntervalMatrix::new(Mat::scalar(-1.0), Mat::scalar(1.0)).unwrap());
        let s = vertex_samples(&uf, 4, 5);
        assert!(s.contains(&Mat::scalar(-1.0)) && s.contains(&Mat::scalar(1.0)));
        assert_eq!(vertex_samples(&uf, 9, 42), vertex_samples(&uf, 9, 42));
    }

    #[test]
    fn sin_exp_bound_warnings() {
        let d = DelaySpec::new(0.25, 0.15, DelayForm::SinExp(0.15)).unwrap();
        let w = d.validate();
        assert_eq!(w.len(), 2, "{w:?}");
        assert!(w[0].contains("tau"));
        assert!(DelaySpec::constant(0.1).validate().is_empty());
    }

    #[test]
    fn delay_spec_checks() {
        assert!(DelaySpec::new(0.1, 1.0, DelayForm::Constant(0.1)).is_err());
        assert!(DelaySpec::new(0.1, 0.0, DelayForm::Constant(0.2)).is_err());
        let t = DelaySpec::new(0.2, 0.5, DelayForm::Table(vec![(0.0, 0.0), (1.0, 0.4)])).unwrap();
        assert!((t.eval(0.25) - 0.1).abs() < 1e-15);
        assert_eq!(t.eval(0.9), 0.2);
        assert_eq!(t.eval(-1.0), 0.0);
    }
}
