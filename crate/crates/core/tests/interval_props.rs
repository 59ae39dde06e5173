use fodelay::interval::{build_factors, delta_patterns, sample_member, IntervalMatrix};
use fodelay::linalg::sym_eig;
use fodelay::Mat;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config(seed: u64) -> Config {
    Config { cases: 128, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..Config::default() }
}

/// Random interval matrix: center entries in [−3, 3], half-widths in
/// [0, 2], some of them exactly zero.
fn interval() -> impl Strategy<Value = IntervalMatrix> {
    (1usize..4, 1usize..4).prop_flat_map(|(r, c)| {
        (
            prop::collection::vec(-3.0..3.0f64, r * c),
            prop::collection::vec(prop_oneof![Just(0.0), 0.0..2.0f64], r * c),
        )
            .prop_map(move |(mid, w)| {
                let lo: Vec<f64> = mid.iter().zip(&w).map(|(m, w)| m - w).collect();
                let hi: Vec<f64> = mid.iter().zip(&w).map(|(m, w)| m + w).collect();
                IntervalMatrix::new(Mat::from_vec(r, c, lo).unwrap(), Mat::from_vec(r, c, hi).unwrap()).unwrap()
            })
    })
}

fn ulps(x: f64) -> f64 {
    4.0 * f64::EPSILON * (1.0 + x.abs())
}

proptest! {
    #![proptest_config(config(21))]

    #[test]
    fn members_stay_inside(im in interval(), seed in any::<u64>()) {
        let uf = build_factors(&im);
        for d in delta_patterns(uf.slots(), 12, seed) {
            let m = sample_member(&uf, &d).unwrap();
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    let (lo, hi) = (im.lower()[(i, j)], im.upper()[(i, j)]);
                    prop_assert!(m[(i, j)] >= lo - ulps(lo) && m[(i, j)] <= hi + ulps(hi));
                }
            }
        }
    }

    #[test]
    fn every_vertex_attained(im in interval(), pick in any::<u64>()) {
        // A vertex chooses lower or upper per entry; the matching ±1 pattern
        // reproduces it.
        let uf = build_factors(&im);
        let (r, c) = im.shape();
        let signs: Vec<f64> = (0..r * c).map(|s| if (pick >> (s % 64)) & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let m = sample_member(&uf, &signs).unwrap();
        for i in 0..r {
            for j in 0..c {
                let want = if signs[i * c + j] > 0.0 { im.upper()[(i, j)] } else { im.lower()[(i, j)] };
                prop_assert!((m[(i, j)] - want).abs() <= ulps(want), "({}, {}): {} vs {}", i, j, m[(i, j)], want);
            }
        }
    }

    #[test]
    fn any_member_has_a_delta(im in interval(), t in prop::collection::vec(0.0..=1.0f64, 9)) {
        // Convex combination of the bounds is recovered by δ = (x − c) / r.
        let uf = build_factors(&im);
        let (r, c) = im.shape();
        let mut member = Mat::zeros(r, c);
        let mut deltas = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                let s = t[(i * c + j) % t.len()];
                let (lo, hi) = (im.lower()[(i, j)], im.upper()[(i, j)]);
                member[(i, j)] = lo + s * (hi - lo);
                let rad = uf.radius[(i, j)];
                deltas[i * c + j] = if rad > 0.0 { ((member[(i, j)] - uf.center[(i, j)]) / rad).clamp(-1.0, 1.0) } else { 0.0 };
            }
        }
        let back = sample_member(&uf, &deltas).unwrap();
        prop_assert!((&back - &member).max_abs() <= 1e-12 * (1.0 + member.max_abs()));
    }

    #[test]
    fn factor_product_is_radius(im in interval()) {
        let uf = build_factors(&im);
        let prod = uf.m_factor.matmul(&uf.r_factor);
        let (r, c) = im.shape();
        for i in 0..r {
            for j in 0..c {
                let rad = (im.upper()[(i, j)] - im.lower()[(i, j)]) / 2.0;
                prop_assert!((prod[(i, j)] - rad).abs() <= ulps(rad), "({}, {}): {} vs {}", i, j, prod[(i, j)], rad);
                // Each slot touches exactly one entry.
                let s = i * c + j;
                prop_assert_eq!(uf.m_factor.col(s).iter().filter(|v| **v != 0.0).count() <= 1, true);
                prop_assert_eq!(uf.r_factor.row(s).iter().filter(|v| **v != 0.0).count() <= 1, true);
            }
        }
    }

    #[test]
    fn young_inequality_psd(
        (rows, cols, x, y) in (1usize..5, 1usize..5).prop_flat_map(|(r, c)| (
            Just(r),
            Just(c),
            prop::collection::vec(-4.0..4.0f64, r * c),
            prop::collection::vec(-4.0..4.0f64, r * c),
        )),
        log_eta in -4.0..4.0f64,
    ) {
        let x = Mat::from_vec(rows, cols, x).unwrap();
        let y = Mat::from_vec(rows, cols, y).unwrap();
        let eta = 10f64.powf(log_eta);
        let xtx = x.transpose().matmul(&x).scale(eta);
        let yty = y.transpose().matmul(&y).scale(1.0 / eta);
        let xty = x.transpose().matmul(&y);
        let m = &(&(&xtx + &yty) - &xty) - &xty.transpose();
        let lmin = sym_eig(&m.symmetric_part(), 1e-14).unwrap()[0];
        prop_assert!(lmin >= -1e-10, "λ_min = {}", lmin);
    }
}
