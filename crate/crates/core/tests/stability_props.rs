use fodelay::interval::{build_factors, IntervalMatrix, UncertaintyFactors};
use fodelay::linalg::extreme_eigs;
use fodelay::lmi::{solve, verify, Certificate, SolveOutcome};
use fodelay::stability::{
    analyze_certain, analyze_interval, assemble_certain, assemble_interval, constraint_value, pre_schur_form,
    AnalysisOptions, DelayedPair, Verdict,
};
use fodelay::Mat;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config(seed: u64, cases: u32) -> Config {
    Config { cases, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..Config::default() }
}

fn mat(r: usize, c: usize, lo: f64, hi: f64) -> impl Strategy<Value = Mat> {
    prop::collection::vec(lo..hi, r * c).prop_map(move |v| Mat::from_vec(r, c, v).unwrap())
}

fn sym(n: usize) -> impl Strategy<Value = Mat> {
    mat(n, n, -3.0, 3.0).prop_map(|m| m.symmetric_part())
}

/// `A = −s·I + noise`, `B = noise`, both `n×n`.
fn pair(n: usize, shift: (f64, f64), noise: f64) -> impl Strategy<Value = (Mat, Mat)> {
    (shift.0..shift.1, mat(n, n, -noise, noise), mat(n, n, -noise, noise))
        .prop_map(move |(s, na, b)| (&Mat::identity(n).scale(-s) + &na, b))
}

fn cert(values: Vec<(&str, Mat)>) -> Certificate {
    Certificate {
        values: values.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        margin: 0.0,
        backend_name: "test".into(),
        iterations: 0,
    }
}

/// Γ written out block by block from the stability condition.
#[allow(clippy::too_many_arguments)]
fn gamma_by_hand(a: &Mat, b: &Mat, p: &Mat, q: &Mat, z: &Mat, n: &[Mat; 3], t: &[Mat; 3], tau: f64, mu: f64) -> Mat {
    let k = a.rows();
    let tr = |m: &Mat| m.transpose();
    let g11 = &(&(q + &n[0]) + &tr(&n[0])) - &(&tr(a).matmul(&tr(&t[0])) + &t[0].matmul(a));
    let g12 = &(&(&tr(&n[1]) - &n[0]) - &tr(a).matmul(&tr(&t[1]))) - &t[0].matmul(b);
    let g13 = &(&(p + &tr(&n[2])) + &t[0]) - &tr(a).matmul(&tr(&t[2]));
    let g22 = &(&(&(&q.scale(-(1.0 - mu)) - &n[1]) - &tr(&n[1])) - &t[1].matmul(b)) - &tr(b).matmul(&tr(&t[1]));
    let g23 = &(&(-&tr(&n[2])) + &t[1]) - &tr(b).matmul(&tr(&t[2]));
    let g33 = &(&z.scale(tau) + &t[2]) + &tr(&t[2]);
    let rows = [
        [g11.clone(), g12.clone(), g13.clone(), n[0].scale(tau)],
        [tr(&g12), g22.clone(), g23.clone(), n[1].scale(tau)],
        [tr(&g13), tr(&g23), g33, n[2].scale(tau)],
        [tr(&n[0]).scale(tau), tr(&n[1]).scale(tau), tr(&n[2]).scale(tau), z.scale(-tau)],
    ];
    let mut out = Mat::zeros(4 * k, 4 * k);
    for (i, row) in rows.iter().enumerate() {
        for (j, blk) in row.iter().enumerate() {
            out.set_block(i * k, j * k, blk);
        }
    }
    out
}

proptest! {
    #![proptest_config(config(31, 128))]

    #[test]
    fn block_fidelity(
        (a, b, p, q, z) in (1usize..4).prop_flat_map(|n| (mat(n, n, -3.0, 3.0), mat(n, n, -3.0, 3.0), sym(n), sym(n), sym(n))),
        seeds in prop::collection::vec(-3.0..3.0f64, 6 * 9),
        tau in 0.01..2.0f64,
        mu in -0.5..0.99f64,
    ) {
        let k = a.rows();
        let take = |o: usize| Mat::from_vec(k, k, seeds[o * 9..o * 9 + k * k].to_vec()).unwrap();
        let n = [take(0), take(1), take(2)];
        let t = [take(3), take(4), take(5)];
        let prob = assemble_certain(&DelayedPair::new(a.clone(), b.clone()).unwrap(), tau, mu).unwrap();
        let c = cert(vec![
            ("P", p.clone()), ("Q", q.clone()), ("Z", z.clone()),
            ("N1", n[0].clone()), ("N2", n[1].clone()), ("N3", n[2].clone()),
            ("T1", t[0].clone()), ("T2", t[1].clone()), ("T3", t[2].clone()),
        ]);
        let assembled = constraint_value(&prob, 0, &c).unwrap();
        let hand = gamma_by_hand(&a, &b, &p, &q, &z, &n, &t, tau, mu);
        prop_assert!((&assembled - &hand).max_abs() <= 1e-12 * (1.0 + hand.max_abs()));
    }
}

proptest! {
    #![proptest_config(config(32, 100))]

    #[test]
    fn schur_sign_equivalence(
        (a, b) in pair(2, (0.5, 3.0), 0.6),
        ra in mat(2, 2, 0.0, 0.3),
        rb in mat(2, 2, 0.0, 0.2),
        t_scale in 0.2..4.0f64,
        eta_scale in 0.05..20.0f64,
        tau in 0.05..1.0f64,
    ) {
        let ia = IntervalMatrix::new(&a - &ra, &a + &ra).unwrap();
        let ib = IntervalMatrix::new(&b - &rb, &b + &rb).unwrap();
        let (fa, fb) = (build_factors(&ia), build_factors(&ib));
        let prob = assemble_interval(&fa, &fb, tau, 0.0).unwrap();
        let base = match solve(&prob, &Default::default()).unwrap() {
            SolveOutcome::Feasible(c) => c,
            _ => cert(vec![
                ("P", Mat::identity(2)), ("Q", Mat::identity(2)), ("Z", Mat::identity(2)),
                ("N1", Mat::zeros(2, 2)), ("N2", Mat::zeros(2, 2)), ("N3", Mat::zeros(2, 2)),
                ("T1", Mat::identity(2)), ("T2", Mat::identity(2)), ("T3", Mat::identity(2)),
                ("eta", Mat::scalar(1.0)),
            ]),
        };
        // The solved certificate and a distorted copy; both forms must agree on each.
        let mut distorted = base.clone();
        for name in ["T1", "T2", "T3"] {
            let v = distorted.get(name).unwrap().scale(t_scale);
            distorted.set(name, v);
        }
        let eta = distorted.get("eta").unwrap().scale(eta_scale);
        distorted.set("eta", eta);
        for c in [&base, &distorted] {
            let bordered = constraint_value(&prob, 0, c).unwrap();
            let pre = pre_schur_form(&fa, &fb, tau, 0.0, c).unwrap();
            let (_, lb) = extreme_eigs(&bordered);
            let (_, lp) = extreme_eigs(&pre);
            let tol = 1e-9 * (1.0 + bordered.max_abs() + pre.max_abs());
            if lb.abs() > tol && lp.abs() > tol {
                prop_assert_eq!(lb < 0.0, lp < 0.0, "bordered λmax {} vs pre-Schur λmax {}", lb, lp);
            }
        }
    }

    #[test]
    fn degenerate_interval_agrees_with_certain(
        (a, b) in pair(2, (-0.5, 3.0), 1.0),
        tau in 0.05..1.0f64,
        mu in 0.0..0.5f64,
    ) {
        let opts = AnalysisOptions::default();
        let certain = analyze_certain(&DelayedPair::new(a.clone(), b.clone()).unwrap(), tau, mu, &opts).unwrap();
        let fa = build_factors(&IntervalMatrix::certain(a.clone()));
        let fb = build_factors(&IntervalMatrix::certain(b.clone()));
        let interval = analyze_interval(&fa, &fb, tau, mu, &opts).unwrap();
        prop_assert_eq!(certain.verdict, interval.verdict, "certain: {}; interval: {}", certain.reason, interval.reason);
        let fa0 = UncertaintyFactors::certain(a);
        let fb0 = UncertaintyFactors::certain(b);
        let zero_slots = analyze_interval(&fa0, &fb0, tau, mu, &opts).unwrap();
        prop_assert_eq!(certain.verdict, zero_slots.verdict);
    }

    #[test]
    fn solve_verify_round_trip((a, b) in (1usize..4).prop_flat_map(|n| pair(n, (1.0, 4.0), 0.3)), tau in 0.05..0.5f64) {
        let prob = assemble_certain(&DelayedPair::new(a, b).unwrap(), tau, 0.0).unwrap();
        let c = match solve(&prob, &Default::default()).unwrap() {
            SolveOutcome::Feasible(c) => c,
            other => return Err(TestCaseError::fail(format!("expected feasible, got {other:?}"))),
        };
        let report = verify(&prob, &c, 1e-8).unwrap();
        prop_assert!(report.passed && report.strictly_feasible());
        let back = Certificate::from_json_str(&c.to_json_string()).unwrap();
        prop_assert_eq!(&back.values, &c.values);
        let again = verify(&prob, &back, 1e-8).unwrap();
        prop_assert_eq!(again.min_strict_margin(), report.min_strict_margin());
    }
}

#[test]
fn verdicts_are_certified_for_clearly_stable_pairs() {
    let opts = AnalysisOptions::default();
    let r = analyze_certain(&DelayedPair::new(Mat::scalar(-2.0), Mat::scalar(0.5)).unwrap(), 0.5, 0.0, &opts).unwrap();
    assert_eq!(r.verdict, Verdict::CertifiedStable);
}
