use fodelay::lmi::{Cone, LmiProblem, MatExpr, SymBlocks, VarId, VarKind};
use fodelay::{Mat, Result};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

fn config(seed: u64) -> Config {
    Config { cases: 128, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..Config::default() }
}

fn mat(r: usize, c: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-3.0..3.0f64, r * c).prop_map(move |v| Mat::from_vec(r, c, v).unwrap())
}

struct Setup {
    x: VarId,
    s: VarId,
    xv: Mat,
    sv: Mat,
}

impl Setup {
    fn lookup(&self) -> impl Fn(VarId) -> Result<Mat> + '_ {
        move |v: VarId| Ok(if v == self.x { self.xv.clone() } else { self.sv.clone() })
    }
}

fn setup(xv: Mat, sv: Mat) -> Setup {
    let mut p = LmiProblem::new();
    let x = p.declare_var("X", VarKind::Rectangular(2, 3), Cone::Free).unwrap();
    let s = p.declare_var("S", VarKind::Symmetric(3), Cone::Free).unwrap();
    Setup { x, s, xv, sv: sv.symmetric_part() }
}

proptest! {
    #![proptest_config(config(51))]

    #[test]
    fn expressions_are_linear(
        xv in mat(2, 3), sv in mat(3, 3), l in mat(3, 2), r in mat(3, 3), c in mat(3, 3),
        alpha in -2.0..2.0f64,
    ) {
        let st = setup(xv, sv);
        let get = st.lookup();
        // e1 = L X R, e2 = S + C; check α·e1 + e2 and its transpose.
        let e1 = MatExpr::var(st.x).lmul(&l).rmul(&r);
        let e2 = MatExpr::var(st.s).add_const(&c);
        let combo = e1.scale(alpha).add(&e2);
        let want = &l.matmul(&st.xv).matmul(&r).scale(alpha) + &(&st.sv + &c);
        let got = combo.evaluate(&get).unwrap();
        prop_assert!((&got - &want).max_abs() <= 1e-12 * (1.0 + want.max_abs()));
        let got_t = combo.t().evaluate(&get).unwrap();
        prop_assert!((&got_t - &want.transpose()).max_abs() <= 1e-12 * (1.0 + want.max_abs()));
        let diff = combo.sub(&combo).evaluate(&get).unwrap();
        prop_assert!(diff.max_abs() <= 1e-12 * (1.0 + want.max_abs()));
    }

    #[test]
    fn assembled_blocks_are_symmetric(
        xv in mat(2, 3), sv in mat(3, 3), l in mat(3, 2), r in mat(3, 3), c in mat(2, 3),
    ) {
        let st = setup(xv, sv);
        let get = st.lookup();
        let off = MatExpr::var(st.x).rmul(&r).add_const(&c);
        let diag = MatExpr::var(st.s).lmul(&r).rmul(&r.transpose());
        let mut b = SymBlocks::new(&[3, 2]);
        b.diag(0, &diag);
        b.sym(1, 0, &off);
        b.sym(0, 0, &MatExpr::var(st.x).lmul(&l));
        let m = b.finish().evaluate(&get).unwrap();
        prop_assert!(m.asymmetry() <= 1e-12 * (1.0 + m.max_abs()));
        let offv = &st.xv.matmul(&r) + &c;
        prop_assert!((&m.submatrix(3, 0, 2, 3) - &offv).max_abs() <= 1e-12 * (1.0 + offv.max_abs()));
        let lx = l.matmul(&st.xv);
        let d = &(&r.matmul(&st.sv).matmul(&r.transpose()) + &lx) + &lx.transpose();
        prop_assert!((&m.submatrix(0, 0, 3, 3) - &d).max_abs() <= 1e-12 * (1.0 + d.max_abs()));
    }
}
