//! Univariate and tensor-product polynomial bases.
//!
//! Two univariate families are used throughout:
//!
//! * `bernstein_quadratic`: the three degree-2 Bernstein polynomials on
//!   [0,1], the per-face representation of the mixed-smoothness space;
//! * `spline_half_knot`: the four C1 quadratic B-splines on the knot
//!   vector (0,0,0,1/2,1,1,1), the per-face representation on
//!   extraordinary faces after knot insertion.
//!
//! Tensor products index coefficients as `c[j][k]` with `j` along `u` and
//! `k` along `v`.

/// Values and derivatives of one univariate basis family at a point.
///
/// Only the first `n` entries of each array are meaningful.
#[derive(Clone, Copy, Debug)]
pub struct UniBasis {
    pub n: usize,
    pub val: [f64; 4],
    pub d1: [f64; 4],
    pub d2: [f64; 4],
}

/// Degree-2 Bernstein basis on [0,1] with derivatives.
pub fn bernstein_quadratic(t: f64) -> UniBasis {
    let s = 1.0 - t;
    UniBasis {
        n: 3,
        val: [s * s, 2.0 * t * s, t * t, 0.0],
        d1: [-2.0 * s, 2.0 - 4.0 * t, 2.0 * t, 0.0],
        d2: [2.0, -4.0, 2.0, 0.0],
    }
}

/// Local Bernstein coefficients of the four C1 splines on each half of
/// the knot span: rows are basis functions, columns local coefficients.
const HALF_KNOT_PIECE: [[[f64; 3]; 4]; 2] = [
    // t in [0, 1/2), local s = 2t
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.5], [0.0, 0.0, 0.5], [0.0, 0.0, 0.0]],
    // t in [1/2, 1], local s = 2t - 1
    [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]],
];

/// C1 quadratic B-spline basis on knots (0,0,0,1/2,1,1,1) with derivatives.
///
/// The value at the interior knot 1/2 is the right limit; both one-sided
/// polynomials agree there up to first order.
pub fn spline_half_knot(t: f64) -> UniBasis {
    let (piece, s) = if t < 0.5 { (0, 2.0 * t) } else { (1, 2.0 * t - 1.0) };
    let b = bernstein_quadratic(s);
    let mut out = UniBasis {
        n: 4,
        val: [0.0; 4],
        d1: [0.0; 4],
        d2: [0.0; 4],
    };
    for j in 0..4 {
        let c = &HALF_KNOT_PIECE[piece][j];
        for (i, ci) in c.iter().enumerate() {
            out.val[j] += ci * b.val[i];
            out.d1[j] += ci * b.d1[i] * 2.0; // chain rule: ds/dt = 2
            out.d2[j] += ci * b.d2[i] * 4.0;
        }
    }
    out
}

/// Values (+derivatives up to `order`) of the 16 tensor C1 basis
/// functions on knots (0,0,0,1/2,1,1,1) squared, indexed `[j][k]`.
#[derive(Clone, Copy, Debug)]
pub struct TensorBasis {
    pub n: usize,
    pub val: [[f64; 4]; 4],
    pub du: [[f64; 4]; 4],
    pub dv: [[f64; 4]; 4],
    pub duu: [[f64; 4]; 4],
    pub duv: [[f64; 4]; 4],
    pub dvv: [[f64; 4]; 4],
}

fn tensor(bu: &UniBasis, bv: &UniBasis, order: u8) -> TensorBasis {
    let n = bu.n;
    let mut t = TensorBasis {
        n,
        val: [[0.0; 4]; 4],
        du: [[0.0; 4]; 4],
        dv: [[0.0; 4]; 4],
        duu: [[0.0; 4]; 4],
        duv: [[0.0; 4]; 4],
        dvv: [[0.0; 4]; 4],
    };
    for j in 0..n {
        for k in 0..n {
            t.val[j][k] = bu.val[j] * bv.val[k];
            if order >= 1 {
                t.du[j][k] = bu.d1[j] * bv.val[k];
                t.dv[j][k] = bu.val[j] * bv.d1[k];
            }
            if order >= 2 {
                t.duu[j][k] = bu.d2[j] * bv.val[k];
                t.duv[j][k] = bu.d1[j] * bv.d1[k];
                t.dvv[j][k] = bu.val[j] * bv.d2[k];
            }
        }
    }
    t
}

/// Tensor C1 basis on the half-knot vectors, the representation used on
/// extraordinary faces.
pub fn eval_b1_basis(xi: [f64; 2], order: u8) -> TensorBasis {
    tensor(&spline_half_knot(xi[0]), &spline_half_knot(xi[1]), order)
}

/// Tensor Bernstein basis, the representation used on regular faces.
pub fn eval_b0_basis(xi: [f64; 2], order: u8) -> TensorBasis {
    tensor(&bernstein_quadratic(xi[0]), &bernstein_quadratic(xi[1]), order)
}

/// Univariate basis selected by function count (3 or 4).
pub fn eval_uni_basis(n: usize, t: f64) -> UniBasis {
    match n {
        3 => bernstein_quadratic(t),
        4 => spline_half_knot(t),
        _ => panic!("no univariate basis with {n} functions"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum(b: &UniBasis) -> (f64, f64, f64) {
        let mut s = (0.0, 0.0, 0.0);
        for j in 0..b.n {
            s.0 += b.val[j];
            s.1 += b.d1[j];
            s.2 += b.d2[j];
        }
        s
    }

    #[test]
    fn partition_of_unity() {
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            for b in [bernstein_quadratic(t), spline_half_knot(t)] {
                let (v, d1, d2) = sum(&b);
                assert!((v - 1.0).abs() < 1e-14, "t={t}");
                assert!(d1.abs() < 1e-13);
                assert!(d2.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn endpoint_interpolation() {
        let b = spline_half_knot(0.0);
        assert_eq!(b.val, [1.0, 0.0, 0.0, 0.0]);
        let b = spline_half_knot(1.0);
        assert!((b.val[3] - 1.0).abs() < 1e-15);
        assert!(b.val[0].abs() + b.val[1].abs() + b.val[2].abs() < 1e-15);

        let t = eval_b1_basis([0.0, 0.0], 0);
        for j in 0..4 {
            for k in 0..4 {
                let expect = if j == 0 && k == 0 { 1.0 } else { 0.0 };
                assert!((t.val[j][k] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_and_quadratic_reproduction() {
        // Greville abscissae of the half-knot basis reproduce t; the
        // knot-inserted coefficients of t^2 reproduce t^2.
        let greville = [0.0, 0.25, 0.75, 1.0];
        let tsq = [0.0, 0.0, 0.5, 1.0];
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            let b = spline_half_knot(t);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for j in 0..4 {
                lin += greville[j] * b.val[j];
                quad += tsq[j] * b.val[j];
            }
            assert!((lin - t).abs() < 1e-14);
            assert!((quad - t * t).abs() < 1e-14);
        }
    }

    #[test]
    fn c1_across_interior_knot() {
        // Left limit at 1/2 from the first piece vs the stored right limit.
        let right = spline_half_knot(0.5);
        let left = {
            let b = bernstein_quadratic(1.0);
            let mut out = UniBasis { n: 4, val: [0.0; 4], d1: [0.0; 4], d2: [0.0; 4] };
            for j in 0..4 {
                for i in 0..3 {
                    out.val[j] += HALF_KNOT_PIECE[0][j][i] * b.val[i];
                    out.d1[j] += HALF_KNOT_PIECE[0][j][i] * b.d1[i] * 2.0;
                }
            }
            out
        };
        for j in 0..4 {
            assert!((left.val[j] - right.val[j]).abs() < 1e-15);
            assert!((left.d1[j] - right.d1[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        // Interior points of each polynomial piece only.
        let pts = [0.07, 0.21, 0.33, 0.44, 0.56, 0.68, 0.81, 0.93];
        let h = 1e-5;
        for &t in &pts {
            for eval in [bernstein_quadratic as fn(f64) -> UniBasis, spline_half_knot] {
                let b = eval(t);
                let bp = eval(t + h);
                let bm = eval(t - h);
                for j in 0..b.n {
                    let fd1 = (bp.val[j] - bm.val[j]) / (2.0 * h);
                    let fd2 = (bp.val[j] - 2.0 * b.val[j] + bm.val[j]) / (h * h);
                    let scale1 = b.d1[j].abs().max(1.0);
                    let scale2 = b.d2[j].abs().max(1.0);
                    assert!((fd1 - b.d1[j]).abs() / scale1 < 1e-8, "t={t} j={j}");
                    assert!((fd2 - b.d2[j]).abs() / scale2 < 1e-4, "t={t} j={j}");
                }
            }
        }
    }

    #[test]
    fn tensor_matches_univariate_products() {
        let xi = [0.3, 0.77];
        let t = eval_b1_basis(xi, 2);
        let bu = spline_half_knot(xi[0]);
        let bv = spline_half_knot(xi[1]);
        let mut total = 0.0;
        for j in 0..4 {
            for k in 0..4 {
                assert!((t.val[j][k] - bu.val[j] * bv.val[k]).abs() < 1e-15);
                assert!((t.duv[j][k] - bu.d1[j] * bv.d1[k]).abs() < 1e-15);
                total += t.val[j][k];
            }
        }
        assert!((total - 1.0).abs() < 1e-14);
    }
}
