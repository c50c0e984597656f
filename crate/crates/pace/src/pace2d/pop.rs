//! Polynomial optimization formulation of the translation-free point-to-line
//! problem.

use nalgebra::{Matrix3, Vector3};

use super::poly::Poly;
use super::BearingData;
use crate::core::ShapeLibrary;
use crate::pace3d::SO3_CONSTRAINT_TRIPLETS;
use crate::{Error, Result};

/// Degree-4 polynomial program over `x = [vec(R); c]`:
/// equalities are the 15 SO(3) quadrics plus the sum-to-one line, and the
/// inequalities keep `c` inside the simplex with the redundant ball
/// `c'c <= 1`.
#[derive(Debug, Clone)]
pub struct PopProblem {
    /// Number of variables, `K + 9`.
    pub dim: usize,
    pub num_shapes: usize,
    pub objective: Poly,
    pub equalities: Vec<Poly>,
    pub inequalities: Vec<Poly>,
}

/// SO(3) quadrics as polynomials in `vec(R)` (the lifted-index tables use
/// index 0 as the homogenization constant).
pub(crate) fn so3_polynomials(dim: usize) -> Vec<Poly> {
    SO3_CONSTRAINT_TRIPLETS
        .iter()
        .map(|ts| {
            let mut p = Poly::zero();
            for &(i, j, v) in ts.iter() {
                let scale = if i == j { v } else { 2.0 * v };
                let mut mono = vec![0u8; dim];
                if i > 0 {
                    mono[i - 1] += 1;
                }
                if j > 0 {
                    mono[j - 1] += 1;
                }
                p.add_term(mono, scale);
            }
            p
        })
        .collect()
}

/// Expands the translation-free objective
/// `sum_i || R s_i(c) - sum_j Wtilde_j R s_j(c) ||^2_{W_i} + lambda ||c||^2`
/// into monomial coefficients.
pub fn build_pop(lib: &ShapeLibrary, bd: &BearingData, lambda: f64) -> Result<PopProblem> {
    let n = bd.bearings.len();
    let k = lib.num_models();
    if lib.num_keypoints() != n {
        return Err(Error::InvalidInput("library/measurement size mismatch".into()));
    }
    let dim = k + 9;

    // v_i(x) is bilinear in (r, c): coefficient of r[3b+e] c[kk] in
    // component a is  delta_{a,e} b_i^kk[b] - sum_j Wtilde_j[a,e] b_j^kk[b].
    // Precompute sum_j Wtilde_j[a,e] * b_j^kk[b].
    let mut wt_b = vec![[[0.0f64; 3]; 3]; k]; // [kk][e][b] for each a? needs a too
    let mut wt_ab = vec![[[[0.0f64; 3]; 3]; 3]; k]; // [kk][a][e][b]
    for kk in 0..k {
        for j in 0..n {
            let bj = lib.point(kk, j);
            let wt = &bd.wtilde[j];
            for a in 0..3 {
                for e in 0..3 {
                    for b in 0..3 {
                        wt_ab[kk][a][e][b] += wt[(a, e)] * bj[b];
                    }
                }
            }
        }
    }
    let _ = &mut wt_b;

    let mut objective = Poly::zero();
    for i in 0..n {
        // Bilinear coefficient tables for the three components of v_i.
        let mut coef = vec![[[0.0f64; 9]; 3]; k]; // [kk][a][3b+e]
        let bi: Vec<Vector3<f64>> = (0..k).map(|kk| *lib.point(kk, i)).collect();
        for kk in 0..k {
            for a in 0..3 {
                for e in 0..3 {
                    for b in 0..3 {
                        let mut v = -wt_ab[kk][a][e][b];
                        if a == e {
                            v += bi[kk][b];
                        }
                        coef[kk][a][3 * b + e] = v;
                    }
                }
            }
        }
        // objective += v_i' W_i v_i.
        let w = &bd.w_mats[i];
        for a in 0..3 {
            for a2 in 0..3 {
                let waa = w[(a, a2)];
                if waa == 0.0 {
                    continue;
                }
                for kk in 0..k {
                    for (rv, &c1) in coef[kk][a].iter().enumerate() {
                        if c1 == 0.0 {
                            continue;
                        }
                        for kk2 in 0..k {
                            for (rv2, &c2) in coef[kk2][a2].iter().enumerate() {
                                if c2 == 0.0 {
                                    continue;
                                }
                                let mut mono = vec![0u8; dim];
                                mono[rv] += 1;
                                mono[rv2] += 1;
                                mono[9 + kk] += 1;
                                mono[9 + kk2] += 1;
                                objective.add_term(mono, waa * c1 * c2);
                            }
                        }
                    }
                }
            }
        }
    }
    for kk in 0..k {
        let mut mono = vec![0u8; dim];
        mono[9 + kk] = 2;
        objective.add_term(mono, lambda);
    }

    let mut equalities = so3_polynomials(dim);
    let mut sum_one = Poly::constant(dim, -1.0);
    for kk in 0..k {
        let mut mono = vec![0u8; dim];
        mono[9 + kk] = 1;
        sum_one.add_term(mono, 1.0);
    }
    equalities.push(sum_one);

    let mut inequalities = Vec::with_capacity(k + 1);
    for kk in 0..k {
        let mut p = Poly::zero();
        let mut mono = vec![0u8; dim];
        mono[9 + kk] = 1;
        p.add_term(mono, 1.0);
        inequalities.push(p);
    }
    let mut ball = Poly::constant(dim, 1.0);
    for kk in 0..k {
        let mut mono = vec![0u8; dim];
        mono[9 + kk] = 2;
        ball.add_term(mono, -1.0);
    }
    inequalities.push(ball);

    Ok(PopProblem {
        dim,
        num_shapes: k,
        objective,
        equalities,
        inequalities,
    })
}

/// Packs `(R, c)` into the variable vector `x = [vec(R); c]`.
pub fn pack_x(rot: &Matrix3<f64>, c: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(9 + c.len());
    for col in 0..3 {
        for row in 0..3 {
            x.push(rot[(row, col)]);
        }
    }
    x.extend_from_slice(c);
    x
}
