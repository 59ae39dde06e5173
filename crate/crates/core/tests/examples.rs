use fodelay::error::{Error, SynthesisFailure};
use fodelay::interval::{build_factors, DelayForm, DelaySpec, FoSystem, IntervalMatrix, UncertaintyFactors};
use fodelay::lmi::{solve, Certificate, SolveOutcome};
use fodelay::sim::{simulate_closed_loop, History, SimConfig};
use fodelay::stability::{
    analyze_certain, analyze_interval, assemble_certain, assemble_interval, sector_scan, sector_scan_interval,
    AnalysisOptions, DelayedPair, Verdict,
};
use fodelay::synthesis::{
    assemble_synthesis, close_loop, synthesize, validate, Controller, SynthesisOptions, UncertaintyMode,
};
use fodelay::Mat;

fn a_int() -> IntervalMatrix {
    IntervalMatrix::new(Mat::from_rows(&[[-2.3333, 1.0], [-1.6667, 0.0]]), Mat::from_rows(&[[-1.0, 1.0], [-0.6, 0.0]])).unwrap()
}

fn b_int() -> IntervalMatrix {
    IntervalMatrix::new(Mat::col_vector(&[0.52, 0.56]), Mat::col_vector(&[1.1333, 1.0667])).unwrap()
}

fn c_out() -> Mat {
    Mat::from_rows(&[[1.0, 0.0]])
}

fn varying_delay() -> DelaySpec {
    DelaySpec::new(0.25, 0.15, DelayForm::SinExp(0.15)).unwrap()
}

fn plant(delay: DelaySpec) -> FoSystem {
    FoSystem::new(0.3, a_int(), b_int(), c_out(), delay).unwrap()
}

fn scalar(a: f64, b: f64, tau: f64) -> Verdict {
    let pair = DelayedPair::new(Mat::scalar(a), Mat::scalar(b)).unwrap();
    analyze_certain(&pair, tau, 0.0, &AnalysisOptions::default()).unwrap().verdict
}

#[test]
fn certain_scalar_examples() {
    assert_eq!(scalar(-1.0, 0.0, 0.1), Verdict::CertifiedStable);
    assert_eq!(scalar(1.0, 0.0, 0.1), Verdict::Unknown);
    assert_eq!(scalar(0.0, -1.0, 0.1), Verdict::CertifiedStable);
}

#[test]
fn certified_delay_shrinks_with_gain() {
    // Largest certified τ by bisection for D x = b x(t − τ).
    let tau_max = |b: f64| {
        let (mut lo, mut hi) = (0.01, 4.0);
        assert_eq!(scalar(0.0, b, lo), Verdict::CertifiedStable);
        for _ in 0..12 {
            let mid = 0.5 * (lo + hi);
            if scalar(0.0, b, mid) == Verdict::CertifiedStable {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let (t1, t2, t4) = (tau_max(-1.0), tau_max(-2.0), tau_max(-4.0));
    assert!(t1 > t2 && t2 > t4, "{t1} {t2} {t4}");
}

#[test]
fn zero_radius_interval_matches_certain() {
    for (a, b) in [(-1.0, 0.2), (0.5, 0.0), (-0.3, -0.6), (1.0, -3.0)] {
        let pair = DelayedPair::new(Mat::scalar(a), Mat::scalar(b)).unwrap();
        let p1 = assemble_certain(&pair, 0.3, 0.0).unwrap();
        let p2 = assemble_interval(&UncertaintyFactors::certain(pair.a.clone()), &UncertaintyFactors::certain(pair.b.clone()), 0.3, 0.0).unwrap();
        let f1 = solve(&p1, &Default::default()).unwrap().is_feasible();
        let f2 = solve(&p2, &Default::default()).unwrap().is_feasible();
        assert_eq!(f1, f2, "a = {a}, b = {b}");
    }
}

#[test]
fn example_one_closed_loop_hull_contains_reference_bounds() {
    let k = Controller::new(Mat::scalar(0.0), Mat::scalar(1.0), Mat::scalar(0.5), Mat::scalar(2.0)).unwrap();
    let (a, b) = close_loop(&plant(DelaySpec::constant(0.1)), &k).unwrap();
    let acl = IntervalMatrix::new(
        Mat::from_rows(&[[-2.3333, 1.0, 0.0], [-1.6667, 0.0, 0.0], [1.0, 0.0, 0.0]]),
        Mat::from_rows(&[[-1.0, 1.0, 0.0], [-0.6, 0.0, 0.0], [1.0, 0.0, 0.0]]),
    )
    .unwrap();
    let adcl = IntervalMatrix::new(
        Mat::from_rows(&[[1.04, 0.0, 0.26], [1.12, 0.0, 0.28], [0.0, 0.0, 0.0]]),
        Mat::from_rows(&[[2.2666, 0.0, 0.5666], [2.1334, 0.0, 0.5333], [0.0, 0.0, 0.0]]),
    )
    .unwrap();
    for (uf, reference) in [(&a, &acl), (&b, &adcl)] {
        let hull = uf.hull();
        for i in 0..3 {
            for j in 0..3 {
                assert!(hull.lower()[(i, j)] <= reference.lower()[(i, j)] + 1e-12, "lower ({i}, {j})");
                assert!(hull.upper()[(i, j)] >= reference.upper()[(i, j)] - 1e-12, "upper ({i}, {j})");
            }
        }
    }
}

#[test]
fn widened_example_one_not_certified() {
    let a = build_factors(&a_int());
    let wide = UncertaintyFactors::from_parts(a.center.clone(), a.m_factor.scale(10.0), a.r_factor.scale(10.0)).unwrap();
    let b = UncertaintyFactors::certain(Mat::zeros(2, 2));
    let opts = AnalysisOptions::default();
    assert_eq!(analyze_interval(&a, &b, 0.1, 0.0, &opts).unwrap().verdict, Verdict::CertifiedStable);
    // 10× both factors is 100× the radius.
    assert_eq!(analyze_interval(&wide, &b, 0.1, 0.0, &opts).unwrap().verdict, Verdict::Unknown);
}

#[test]
fn sector_examples() {
    let s = sector_scan_interval(&IntervalMatrix::certain(Mat::scalar(-1.0)), 0.5, 3, 1).unwrap();
    assert!((s[0].worst_margin - (std::f64::consts::PI - std::f64::consts::FRAC_PI_4)).abs() < 1e-12);
    let s = sector_scan_interval(&IntervalMatrix::certain(Mat::scalar(1.0)), 0.7, 3, 1).unwrap();
    assert!(s.iter().all(|x| x.worst_margin < 0.0));
}

#[test]
fn reference_static_gain_certified() {
    let sys = plant(varying_delay());
    let report = validate(&sys, &Controller::static_gain(Mat::scalar(-1.4215)), true, &AnalysisOptions::default()).unwrap();
    assert_eq!(report.verdict, Verdict::CertifiedStable, "{}", report.reason);
    assert!(report.verification.unwrap().strictly_feasible());
    assert_eq!(report.warnings.len(), 2);
}

#[test]
fn example_two_synthesis_each_order() {
    let sys = plant(varying_delay());
    for n_c in 0..=2 {
        let r = synthesize(&sys, n_c, &SynthesisOptions::default()).unwrap();
        assert_eq!(r.controller.n_c, n_c);
        assert_eq!(r.controller.d_c.shape(), (1, 1));
        assert_eq!(r.post_validation.verdict, Verdict::CertifiedStable);
        let res = &r.recovery_residuals;
        for (w, name) in [(res.w1, "W1"), (res.w2, "W2")] {
            let scale = r.certificate.get(name).map_or(0.0, Mat::max_abs);
            assert!(w <= 1e-6 * (1.0 + scale));
        }
        assert_eq!(r.certificate.get("T_S").unwrap(), &r.frozen_ts);
        // Fresh independent check of the returned controller.
        let (a, b) = close_loop(&sys, &r.controller).unwrap();
        let again = analyze_interval(&a, &b, 0.25, 0.15, &AnalysisOptions::default()).unwrap();
        assert_eq!(again.verdict, Verdict::CertifiedStable);
        let scan = sector_scan(&a, 0.3, 50, 3).unwrap();
        assert!(scan.iter().all(|s| s.worst_margin > 0.0));
    }
}

#[test]
fn synthesis_problem_feasible_at_order_zero() {
    let sys = plant(varying_delay());
    let ts = synthesize(&sys, 0, &SynthesisOptions::default()).unwrap().frozen_ts;
    let prob = assemble_synthesis(&sys, 0, &ts, true).unwrap();
    assert!(matches!(solve(&prob, &Default::default()).unwrap(), SolveOutcome::Feasible(_)));
}

#[test]
fn stable_certain_scalar_plant() {
    let sys = FoSystem::new(
        0.5,
        IntervalMatrix::certain(Mat::scalar(-1.0)),
        IntervalMatrix::certain(Mat::scalar(1.0)),
        Mat::scalar(1.0),
        DelaySpec::constant(0.2),
    )
    .unwrap();
    let r = synthesize(&sys, 0, &SynthesisOptions::default()).unwrap();
    assert_eq!(r.post_validation.verdict, Verdict::CertifiedStable);
    // Nominal and robust paths agree on a certain plant.
    let robust = synthesize(&sys, 0, &SynthesisOptions { mode: UncertaintyMode::Robust, ..Default::default() }).unwrap();
    let nominal = synthesize(&sys, 0, &SynthesisOptions { mode: UncertaintyMode::Nominal, ..Default::default() }).unwrap();
    for k in [&robust.controller, &nominal.controller] {
        let v = validate(&sys, k, false, &AnalysisOptions::default()).unwrap();
        assert_eq!(v.verdict, Verdict::CertifiedStable);
    }
}

#[test]
fn no_control_authority_fails() {
    let sys = FoSystem::new(
        0.5,
        IntervalMatrix::certain(Mat::scalar(1.0)),
        IntervalMatrix::certain(Mat::scalar(0.0)),
        Mat::scalar(1.0),
        DelaySpec::constant(0.2),
    )
    .unwrap();
    assert!(assemble_synthesis(&sys, 0, &Mat::identity(1), false).is_ok());
    for n_c in [0, 1] {
        match synthesize(&sys, n_c, &SynthesisOptions::default()) {
            Err(Error::Synthesis { kind, .. }) => {
                assert!(matches!(kind, SynthesisFailure::NoFeasibleIterate | SynthesisFailure::PostValidationFailure))
            }
            other => panic!("expected a synthesis failure, got {:?}", other.map(|r| r.controller)),
        }
    }
}

#[test]
fn closed_loop_simulations_decay() {
    let a = build_factors(&a_int()).center;
    let b = build_factors(&b_int()).center;
    let cfg = SimConfig::new(0.01, 50.0, History::Constant(vec![1.0, 1.0]));
    let k = Controller::static_gain(Mat::scalar(-1.4215));
    let tr = simulate_closed_loop(&a, &b, &c_out(), &k, &varying_delay(), 0.3, &cfg).unwrap();
    assert!(!tr.diverged());
    assert!(tr.norm_series.last().unwrap() < &tr.norm_series[0]);
    assert!(tr.envelope_non_increasing(10, 0.0));
    let upper = simulate_closed_loop(a_int().upper(), b_int().upper(), &c_out(), &k, &varying_delay(), 0.3, &cfg).unwrap();
    assert!(!upper.diverged());
}

#[test]
fn certificate_json_survives_synthesis_values() {
    let sys = plant(varying_delay());
    let r = synthesize(&sys, 1, &SynthesisOptions::default()).unwrap();
    let back = Certificate::from_json_str(&r.certificate.to_json_string()).unwrap();
    assert_eq!(back.values, r.certificate.values);
}
