//! Infeasible-start primal–dual interior-point method for small dense
//! semidefinite programs in the form
//!
//! ```text
//! maximize bᵀy  subject to  C_k − Σ_i y_i A_ik ⪰ 0   (matrix blocks)
//!                           c_j − a_jᵀ y ≥ 0          (scalar rows)
//! ```
//!
//! Search directions use the HKM scaling with a Mehrotra predictor–corrector.

use crate::linalg::{backward_sub_t, cholesky, extreme_eigs, forward_sub, pinv, Lu};
use crate::matrix::Mat;

pub(crate) struct SdpBlock {
    pub c: Mat,
    pub a: Vec<(usize, Mat)>,
}

pub(crate) struct LpRow {
    pub c: f64,
    pub a: Vec<(usize, f64)>,
}

pub(crate) struct Sdp {
    pub m: usize,
    pub b: Vec<f64>,
    pub blocks: Vec<SdpBlock>,
    pub lp: Vec<LpRow>,
}

#[derive(Clone, Debug)]
pub struct IpmSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub step_fraction: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings { max_iter: 150, tol: 1e-8, step_fraction: 0.95 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    EarlyStop,
    MaxIter,
    NumericalFailure,
}

pub(crate) struct IpmResult {
    pub y: Vec<f64>,
    pub x: Vec<Mat>,
    pub status: IpmStatus,
    pub iterations: usize,
}

/// `tr(A B)` for square matrices of equal size.
fn tr_prod(a: &Mat, b: &Mat) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

fn sym_inverse(s: &Mat) -> Option<Mat> {
    let l = cholesky(s)?;
    let linv = forward_sub(&l, &Mat::identity(s.rows()));
    Some(linv.transpose().matmul(&linv))
}

/// Largest step `α` with `X + α ΔX ⪰ 0` (infinite if none binds).
fn max_step(x: &Mat, dx: &Mat) -> f64 {
    let Some(l) = cholesky(x) else { return 0.0 };
    let w = forward_sub(&l, dx);
    let w = forward_sub(&l, &w.transpose());
    let (lmin, _) = extreme_eigs(&w);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct State {
    y: Vec<f64>,
    x: Vec<Mat>,
    s: Vec<Mat>,
    xl: Vec<f64>,
    sl: Vec<f64>,
}

struct Direction {
    dy: Vec<f64>,
    dx: Vec<Mat>,
    ds: Vec<Mat>,
    dxl: Vec<f64>,
    dsl: Vec<f64>,
}

fn factor_schur(m: &Mat) -> Option<Box<dyn Fn(&[f64]) -> Vec<f64>>> {
    let dmax = (0..m.rows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    for reg in [0.0, 1e-14, 1e-12, 1e-10] {
        let mut mr = m.clone();
        for i in 0..m.rows() {
            mr[(i, i)] += reg * dmax;
        }
        if let Some(l) = cholesky(&mr) {
            return Some(Box::new(move |r: &[f64]| {
                let z = forward_sub(&l, &Mat::col_vector(r));
                backward_sub_t(&l, &z).col(0)
            }));
        }
    }
    let lu = Lu::new(m).ok()?;
    Some(Box::new(move |r: &[f64]| lu.solve(&Mat::col_vector(r)).col(0)))
}

pub(crate) fn solve_sdp(p: &Sdp, set: &IpmSettings, mut stop: impl FnMut(&[f64]) -> bool) -> IpmResult {
    let nb = p.blocks.len();
    let dims: Vec<usize> = p.blocks.iter().map(|b| b.c.rows()).collect();
    let ntot = (dims.iter().sum::<usize>() + p.lp.len()) as f64;
    let bnorm = p.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cnorm = (p.blocks.iter().map(|b| b.c.frobenius().powi(2)).sum::<f64>()
        + p.lp.iter().map(|r| r.c * r.c).sum::<f64>())
    .sqrt();

    let mut st = State {
        y: vec![0.0; p.m],
        x: Vec::with_capacity(nb),
        s: Vec::with_capacity(nb),
        xl: Vec::with_capacity(p.lp.len()),
        sl: Vec::with_capacity(p.lp.len()),
    };
    for (blk, &n) in p.blocks.iter().zip(&dims) {
        let amax = blk.a.iter().map(|(_, a)| a.frobenius()).fold(0.0, f64::max);
        let v = 10f64.max((n as f64).sqrt()).max(blk.c.frobenius()).max(amax);
        st.x.push(Mat::identity(n).scale(v));
        st.s.push(Mat::identity(n).scale(v));
    }
    for r in &p.lp {
        let amax = r.a.iter().map(|(_, a)| a.abs()).fold(0.0, f64::max);
        let v = 10f64.max(r.c.abs()).max(amax);
        st.xl.push(v);
        st.sl.push(v);
    }

    let mut status = IpmStatus::MaxIter;
    let mut iterations = 0;
    let mut stalled = 0;
    for it in 0..set.max_iter {
        iterations = it;
        // Residuals.
        let mut rd: Vec<Mat> = Vec::with_capacity(nb);
        let mut rp = p.b.clone();
        for (k, blk) in p.blocks.iter().enumerate() {
            let mut r = &blk.c - &st.s[k];
            for (i, a) in &blk.a {
                if st.y[*i] != 0.0 {
                    r = &r - &a.scale(st.y[*i]);
                }
                rp[*i] -= a.dot(&st.x[k]);
            }
            rd.push(r);
        }
        let mut rdl = Vec::with_capacity(p.lp.len());
        for (j, row) in p.lp.iter().enumerate() {
            let mut r = row.c - st.sl[j];
            for (i, a) in &row.a {
                r -= a * st.y[*i];
                rp[*i] -= a * st.xl[j];
            }
            rdl.push(r);
        }
        let xs: f64 = (0..nb).map(|k| st.x[k].dot(&st.s[k])).sum::<f64>()
            + st.xl.iter().zip(&st.sl).map(|(a, b)| a * b).sum::<f64>();
        let mu = xs / ntot;
        let pobj: f64 = (0..nb).map(|k| p.blocks[k].c.dot(&st.x[k])).sum::<f64>()
            + p.lp.iter().zip(&st.xl).map(|(r, x)| r.c * x).sum::<f64>();
        let dobj: f64 = p.b.iter().zip(&st.y).map(|(b, y)| b * y).sum();
        let pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + bnorm);
        let dinf = (rd.iter().map(|r| r.frobenius().powi(2)).sum::<f64>() + rdl.iter().map(|v| v * v).sum::<f64>())
            .sqrt()
            / (1.0 + cnorm);
        let gap = xs / (1.0 + pobj.abs() + dobj.abs());
        if pinf < set.tol && dinf < set.tol && gap < set.tol {
            status = IpmStatus::Converged;
            break;
        }

        let mut sinv = Vec::with_capacity(nb);
        for s in &st.s {
            match sym_inverse(s) {
                Some(v) => sinv.push(v),
                None => {
                    status = IpmStatus::NumericalFailure;
                    break;
                }
            }
        }
        if sinv.len() != nb {
            break;
        }

        // Schur complement M_ij = Σ_k tr(A_ik X_k A_jk S_k⁻¹) + LP part.
        let mut m = Mat::zeros(p.m, p.m);
        for (k, blk) in p.blocks.iter().enumerate() {
            for (pi, (i, ai)) in blk.a.iter().enumerate() {
                let g = st.x[k].matmul(ai).matmul(&sinv[k]);
                for (j, aj) in &blk.a[pi..] {
                    let v = tr_prod(aj, &g);
                    m[(*i, *j)] += v;
                    if i != j {
                        m[(*j, *i)] += v;
                    }
                }
            }
        }
        for (j, row) in p.lp.iter().enumerate() {
            let w = st.xl[j] / st.sl[j];
            for (i, ai) in &row.a {
                for (l, al) in &row.a {
                    m[(*i, *l)] += ai * al * w;
                }
            }
        }
        let Some(msolve) = factor_schur(&m) else {
            status = IpmStatus::NumericalFailure;
            break;
        };

        let direction = |sigma: f64, kc: Option<(&[Mat], &[f64])>| -> Direction {
            let mut rhs = p.b.clone();
            let mut hs = Vec::with_capacity(nb);
            for (k, blk) in p.blocks.iter().enumerate() {
                let mut t = st.x[k].matmul(&rd[k]);
                if let Some((kcm, _)) = kc {
                    t = &t + &kcm[k];
                }
                let h = &t.matmul(&sinv[k]) - &sinv[k].scale(sigma * mu);
                for (i, a) in &blk.a {
                    rhs[*i] += tr_prod(a, &h);
                }
                hs.push(h);
            }
            for (j, row) in p.lp.iter().enumerate() {
                let mut t = st.xl[j] * rdl[j];
                if let Some((_, kcl)) = kc {
                    t += kcl[j];
                }
                let h = (t - sigma * mu) / st.sl[j];
                for (i, a) in &row.a {
                    rhs[*i] += a * h;
                }
            }
            let dy = msolve(&rhs);
            let mut dx = Vec::with_capacity(nb);
            let mut ds = Vec::with_capacity(nb);
            for (k, blk) in p.blocks.iter().enumerate() {
                let mut dsk = rd[k].clone();
                for (i, a) in &blk.a {
                    if dy[*i] != 0.0 {
                        dsk = &dsk - &a.scale(dy[*i]);
                    }
                }
                let mut t = st.x[k].matmul(&dsk);
                if let Some((kcm, _)) = kc {
                    t = &t + &kcm[k];
                }
                let dxk = &(&sinv[k].scale(sigma * mu) - &st.x[k]) - &t.matmul(&sinv[k]);
                dx.push(dxk.symmetric_part());
                ds.push(dsk);
            }
            let mut dxl = Vec::with_capacity(p.lp.len());
            let mut dsl = Vec::with_capacity(p.lp.len());
            for (j, row) in p.lp.iter().enumerate() {
                let mut d = rdl[j];
                for (i, a) in &row.a {
                    d -= a * dy[*i];
                }
                let mut t = st.xl[j] * d;
                if let Some((_, kcl)) = kc {
                    t += kcl[j];
                }
                dxl.push((sigma * mu - st.xl[j] * st.sl[j] - t) / st.sl[j]);
                dsl.push(d);
            }
            Direction { dy, dx, ds, dxl, dsl }
        };

        let steps = |d: &Direction| -> (f64, f64) {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..nb {
                ap = ap.min(max_step(&st.x[k], &d.dx[k]));
                ad = ad.min(max_step(&st.s[k], &d.ds[k]));
            }
            for j in 0..p.lp.len() {
                if d.dxl[j] < 0.0 {
                    ap = ap.min(-st.xl[j] / d.dxl[j]);
                }
                if d.dsl[j] < 0.0 {
                    ad = ad.min(-st.sl[j] / d.dsl[j]);
                }
            }
            (ap, ad)
        };

        let pred = direction(0.0, None);
        let (ap, ad) = steps(&pred);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut xs_aff = 0.0;
        for k in 0..nb {
            let xa = &st.x[k] + &pred.dx[k].scale(ap);
            let sa = &st.s[k] + &pred.ds[k].scale(ad);
            xs_aff += xa.dot(&sa);
        }
        for j in 0..p.lp.len() {
            xs_aff += (st.xl[j] + ap * pred.dxl[j]) * (st.sl[j] + ad * pred.dsl[j]);
        }
        let sigma = ((xs_aff / ntot) / mu).clamp(0.0, 1.0).powi(3);
        let kcm: Vec<Mat> = (0..nb).map(|k| pred.dx[k].matmul(&pred.ds[k])).collect();
        let kcl: Vec<f64> = (0..p.lp.len()).map(|j| pred.dxl[j] * pred.dsl[j]).collect();
        let corr = direction(sigma, Some((&kcm, &kcl)));
        let (ap, ad) = steps(&corr);
        let ap = (set.step_fraction * ap).min(1.0);
        let ad = (set.step_fraction * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
            if stalled >= 3 {
                status = IpmStatus::NumericalFailure;
                break;
            }
        } else {
            stalled = 0;
        }
        for k in 0..nb {
            st.x[k] = (&st.x[k] + &corr.dx[k].scale(ap)).symmetric_part();
            st.s[k] = (&st.s[k] + &corr.ds[k].scale(ad)).symmetric_part();
        }
        for j in 0..p.lp.len() {
            st.xl[j] += ap * corr.dxl[j];
            st.sl[j] += ad * corr.dsl[j];
        }
        for (y, d) in st.y.iter_mut().zip(&corr.dy) {
            *y += ad * d;
        }
        iterations = it + 1;
        if stop(&st.y) {
            status = IpmStatus::EarlyStop;
            break;
        }
    }
    IpmResult { y: st.y, x: st.x, status, iterations }
}

/// Tries to turn the converged matrix-block multipliers into an exact
/// Farkas certificate: `X̃_k ⪰ 0`, `Σ_k ⟨A_ik, X̃_k⟩ = 0` for every original
/// unknown `i` (all but the last, which is the shift), and
/// `Σ_k ⟨C_k, X̃_k⟩ < 0`. Returns the witness value on success.
pub(crate) fn farkas_witness(p: &Sdp, res: &IpmResult, _strict: &[bool]) -> Option<f64> {
    let nx = p.m - 1;
    let best = res.y[nx];
    let mut x: Vec<Mat> = res.x.iter().map(Mat::symmetric_part).collect();
    // Gram matrix of the coefficient maps restricted to the matrix blocks.
    let mut g = Mat::zeros(nx, nx);
    for blk in &p.blocks {
        for (i, ai) in blk.a.iter().filter(|(i, _)| *i < nx) {
            for (j, aj) in blk.a.iter().filter(|(j, _)| *j < nx) {
                g[(*i, *j)] += ai.dot(aj);
            }
        }
    }
    let gp = pinv(&g, 1e-12);
    for _round in 0..6 {
        let mut r = vec![0.0; nx];
        for (k, blk) in p.blocks.iter().enumerate() {
            for (i, a) in blk.a.iter().filter(|(i, _)| *i < nx) {
                r[*i] += a.dot(&x[k]);
            }
        }
        let z = gp.mul_vec(&r);
        for (k, blk) in p.blocks.iter().enumerate() {
            for (i, a) in blk.a.iter().filter(|(i, _)| *i < nx) {
                if z[*i] != 0.0 {
                    x[k] = &x[k] - &a.scale(z[*i]);
                }
            }
        }
        let resid: f64 = {
            let mut r = vec![0.0; nx];
            for (k, blk) in p.blocks.iter().enumerate() {
                for (i, a) in blk.a.iter().filter(|(i, _)| *i < nx) {
                    r[*i] += a.dot(&x[k]);
                }
            }
            r.iter().fold(0.0, |m, v| m.max(v.abs()))
        };
        let scale = x.iter().map(Mat::max_abs).fold(0.0, f64::max).max(1e-300);
        let mut worst = 0.0f64;
        for xk in x.iter_mut() {
            let (lmin, _) = extreme_eigs(xk);
            if lmin < 0.0 {
                worst = worst.min(lmin);
                *xk = &*xk + &Mat::identity(xk.rows()).scale(-2.0 * lmin);
            }
        }
        if worst == 0.0 && resid <= 1e-12 * scale {
            let value: f64 = p.blocks.iter().zip(&x).map(|(b, xk)| b.c.dot(xk)).sum();
            return (value < 0.0 && value <= 0.5 * best).then_some(value);
        }
    }
    None
}
