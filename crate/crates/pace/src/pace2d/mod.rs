//! Certifiably optimal outlier-free 2D-3D solver.
//!
//! The geometric reprojection objective is replaced by the algebraic
//! point-to-line cost, the translation is eliminated in closed form, and the
//! joint rotation-shape problem becomes a degree-4 polynomial program whose
//! order-2 moment relaxation is solved, rounded, and certified. A damped
//! local refinement of the geometric cost is available for robust loops.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::core::{
    bearing, project_to_simplex, project_to_so3, EstimationResult, Keypoints2D, Pose, Rotation,
    ShapeCoeffs, ShapeLibrary,
};
use crate::{Error, Result};

mod moment;
mod poly;
mod pop;
mod refine;

pub use moment::{build_moment_relaxation, MomentRelaxation};
pub use poly::{monomials_up_to, Mono, Poly};
pub use pop::{build_pop, pack_x, PopProblem};
pub use refine::refine_reprojection;

/// Default interior-point tolerance for the moment relaxation. Tighter than
/// the headroom rule used in 3D because the certified gap target is itself
/// 1e-8.
pub const SDP_TOL_2D: f64 = 1e-9;

/// Bearing vectors and point-to-line projection matrices.
#[derive(Debug, Clone)]
pub struct BearingData {
    /// Unit bearings through each pixel.
    pub bearings: Vec<Vector3<f64>>,
    /// Weighted projectors `W_i = w_i (I - v_i v_i')`.
    pub w_mats: Vec<Matrix3<f64>>,
    /// `W = sum_i W_i`.
    pub w_sum: Matrix3<f64>,
    /// `Wtilde_i = W^-1 W_i`; these sum to the identity.
    pub wtilde: Vec<Matrix3<f64>>,
}

/// Builds bearings and projection matrices from calibrated measurements.
pub fn build_bearing_data(meas: &Keypoints2D) -> Result<BearingData> {
    let n = meas.len();
    let mut bearings = Vec::with_capacity(n);
    let mut w_mats = Vec::with_capacity(n);
    let mut w_sum = Matrix3::zeros();
    for i in 0..n {
        let v = bearing(&meas.pixels[i]);
        let w = meas.weights[i] * (Matrix3::identity() - v * v.transpose());
        w_sum += w;
        bearings.push(v);
        w_mats.push(w);
    }
    let eig = w_sum.symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    if eig.eigenvalues.min() < 1e-10 * lmax.max(1.0) {
        return Err(Error::DegenerateBearings);
    }
    let w_inv = w_sum.try_inverse().ok_or(Error::DegenerateBearings)?;
    let wtilde: Vec<Matrix3<f64>> = w_mats.iter().map(|w| w_inv * w).collect();
    Ok(BearingData {
        bearings,
        w_mats,
        w_sum,
        wtilde,
    })
}

/// Optimal translation for fixed rotation and shape:
/// `t* = - sum_i Wtilde_i R s_i(c)`.
pub fn closed_form_translation_2d(
    rot: &Rotation,
    coeffs: &ShapeCoeffs,
    bd: &BearingData,
    lib: &ShapeLibrary,
) -> Vector3<f64> {
    let mut t = Vector3::zeros();
    for (i, wt) in bd.wtilde.iter().enumerate() {
        let s = lib.blend(coeffs.as_slice(), i);
        t -= wt * rot.apply(&s);
    }
    t
}

/// Point-to-line cost at a full pose:
/// `sum_i ||R s_i + t||^2_{W_i} + lambda ||c||^2`.
pub fn cost_point_to_line(
    lib: &ShapeLibrary,
    bd: &BearingData,
    pose: &Pose,
    coeffs: &ShapeCoeffs,
    lambda: f64,
) -> f64 {
    let mut cost = lambda * coeffs.as_slice().iter().map(|c| c * c).sum::<f64>();
    for (i, w) in bd.w_mats.iter().enumerate() {
        let p = pose.apply(&lib.blend(coeffs.as_slice(), i));
        cost += (p.transpose() * w * p)[(0, 0)];
    }
    cost
}

/// Translation-free point-to-line cost: the polynomial objective evaluated
/// geometrically at `(R, c)` with the optimal translation substituted.
pub fn cost_translation_free(
    lib: &ShapeLibrary,
    bd: &BearingData,
    rot: &Rotation,
    coeffs: &ShapeCoeffs,
    lambda: f64,
) -> f64 {
    let t = closed_form_translation_2d(rot, coeffs, bd, lib);
    cost_point_to_line(
        lib,
        bd,
        &Pose {
            rotation: *rot,
            translation: t,
        },
        coeffs,
        lambda,
    )
}

/// Tuning knobs for the 2D-3D solver.
#[derive(Debug, Clone)]
pub struct Pace2dOptions {
    /// Shape-count cap; the moment block grows as `C(K+11, 2)`.
    pub max_shapes: usize,
    pub sdp_tol: f64,
}

impl Default for Pace2dOptions {
    fn default() -> Self {
        Pace2dOptions {
            max_shapes: 8,
            sdp_tol: SDP_TOL_2D,
        }
    }
}

/// Certifiably optimal pose and shape from 2D keypoints via the order-2
/// moment relaxation: solve, round the leading eigenvector of the moment
/// block, certify with the relative suboptimality gap, and recover the
/// translation in closed form.
pub fn pace2d_star(lib: &ShapeLibrary, meas: &Keypoints2D, lambda: f64) -> Result<EstimationResult> {
    pace2d_star_with(lib, meas, lambda, &Pace2dOptions::default())
}

/// [`pace2d_star`] with explicit options.
pub fn pace2d_star_with(
    lib: &ShapeLibrary,
    meas: &Keypoints2D,
    lambda: f64,
    opts: &Pace2dOptions,
) -> Result<EstimationResult> {
    let k = lib.num_models();
    if k > opts.max_shapes {
        return Err(Error::InvalidProblem(format!(
            "shape count {k} above the configured cap {}",
            opts.max_shapes
        )));
    }
    let bd = build_bearing_data(meas)?;
    let pop = build_pop(lib, &bd, lambda)?;
    let tpl = moment::template_for(k)?;
    let relax = moment::solve_relaxation(&tpl, &pop, opts.sdp_tol)?;
    let (rot, coeffs, eta) = round_relaxation(&relax.x0, relax.f_moment, lib, &bd, lambda, k)?;
    let t = closed_form_translation_2d(&rot, &coeffs, &bd, lib);
    let pose = Pose {
        rotation: rot,
        translation: t,
    };
    let cost = cost_point_to_line(lib, &bd, &pose, &coeffs, lambda);
    Ok(EstimationResult {
        pose,
        coeffs,
        gap: eta,
        cost,
        weights: vec![1.0; meas.len()],
        status: EstimationResult::classify(eta),
    })
}

/// Rounds a moment matrix to a feasible `(R, c)` and certifies it against
/// the relaxation value (the converged moment objective).
fn round_relaxation(
    x0: &DMatrix<f64>,
    f_star: f64,
    lib: &ShapeLibrary,
    bd: &BearingData,
    lambda: f64,
    k: usize,
) -> Result<(Rotation, ShapeCoeffs, f64)> {
    let eig = x0.clone().symmetric_eigen();
    let mut lead = 0usize;
    for i in 1..x0.nrows() {
        if eig.eigenvalues[i] > eig.eigenvalues[lead] {
            lead = i;
        }
    }
    let u = eig.eigenvectors.column(lead);
    if u[0].abs() < 1e-9 {
        return Err(Error::RoundingFailure);
    }
    let u = u / u[0];
    let mut m = Matrix3::zeros();
    for col in 0..3 {
        for row in 0..3 {
            m[(row, col)] = u[1 + 3 * col + row];
        }
    }
    let rot = project_to_so3(&m)?;
    let craw: Vec<f64> = (0..k).map(|i| u[10 + i]).collect();
    let coeffs = project_to_simplex(&craw);
    let (rot, coeffs) = polish_algebraic(lib, bd, &rot, &coeffs, lambda);
    let p_hat = cost_translation_free(lib, bd, &rot, &coeffs, lambda);
    let eta = (p_hat - f_star).abs() / (1.0 + p_hat.abs() + f_star.abs());
    Ok((rot, coeffs, eta))
}

/// Local damped Gauss-Newton polish of the algebraic translation-free cost
/// over rotation and shape; cleans eigenvector-extraction noise off the
/// rounded estimate. The shape stays on the sum-to-one plane; nonnegativity
/// is restored by a final simplex projection when it drifts.
fn polish_algebraic(
    lib: &ShapeLibrary,
    bd: &BearingData,
    rot0: &Rotation,
    c0: &ShapeCoeffs,
    lambda: f64,
) -> (Rotation, ShapeCoeffs) {
    let n = bd.bearings.len();
    let k = lib.num_models();
    let nvar = 3 + k;
    let mut rot = *rot0;
    let mut c: Vec<f64> = c0.as_slice().to_vec();
    let eval = |rot: &Rotation, c: &[f64]| {
        cost_translation_free(
            lib,
            bd,
            rot,
            &ShapeCoeffs::from_vec_unchecked(c.to_vec()),
            lambda,
        )
    };
    let mut cost = eval(&rot, &c);
    let mut damping = 1e-10;

    // Square roots of the projectors for a least-squares residual form.
    let w_half: Vec<Matrix3<f64>> = bd
        .w_mats
        .iter()
        .map(|w| {
            let eig = w.symmetric_eigen();
            let mut h = Matrix3::zeros();
            for j in 0..3 {
                h += eig.eigenvalues[j].max(0.0).sqrt()
                    * eig.eigenvectors.column(j)
                    * eig.eigenvectors.column(j).transpose();
            }
            h
        })
        .collect();

    for _ in 0..15 {
        let mut jtj = DMatrix::<f64>::zeros(nvar, nvar);
        let mut jtr = nalgebra::DVector::<f64>::zeros(nvar);
        for i in 0..n {
            // v_i = R s_i(c) - sum_j Wtilde_j R s_j(c); residual W_i^1/2 v_i.
            let si = lib.blend(&c, i);
            let mut vi = rot.apply(&si);
            for (j, wt) in bd.wtilde.iter().enumerate() {
                vi -= wt * rot.apply(&lib.blend(&c, j));
            }
            let mut jac = nalgebra::Matrix3xX::zeros(nvar);
            for a in 0..3 {
                let mut e = Vector3::zeros();
                e[a] = 1.0;
                let gen = Matrix3::new(0.0, -e.z, e.y, e.z, 0.0, -e.x, -e.y, e.x, 0.0);
                let mut dv = rot.matrix() * gen * si;
                for (j, wt) in bd.wtilde.iter().enumerate() {
                    dv -= wt * (rot.matrix() * gen * lib.blend(&c, j));
                }
                jac.set_column(a, &dv);
            }
            for kk in 0..k {
                let mut dv = rot.apply(lib.point(kk, i));
                for (j, wt) in bd.wtilde.iter().enumerate() {
                    dv -= wt * rot.apply(lib.point(kk, j));
                }
                jac.set_column(3 + kk, &dv);
            }
            let jw = &w_half[i] * jac;
            let rw = &w_half[i] * vi;
            jtj += jw.transpose() * &jw;
            jtr += jw.transpose() * rw;
        }
        for kk in 0..k {
            jtj[(3 + kk, 3 + kk)] += lambda;
            jtr[3 + kk] += lambda * c[kk];
        }

        let mut improved = false;
        for _ in 0..6 {
            let mut lhs = jtj.clone();
            for d in 0..nvar {
                lhs[(d, d)] += damping * (jtj[(d, d)].abs() + 1e-15);
            }
            let Some(chol) = nalgebra::Cholesky::new(lhs) else {
                damping *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&jtr));
            let xi = Vector3::new(step[0], step[1], step[2]);
            let th = xi.norm();
            let rot_new = if th < 1e-16 {
                rot
            } else {
                let kx = Matrix3::new(
                    0.0, -xi.z, xi.y, xi.z, 0.0, -xi.x, -xi.y, xi.x, 0.0,
                ) / th;
                let exp = Matrix3::identity() + th.sin() * kx + (1.0 - th.cos()) * (kx * kx);
                Rotation::from_matrix_unchecked(rot.matrix() * exp)
            };
            let mut c_new: Vec<f64> = c
                .iter()
                .zip(step.iter().skip(3))
                .map(|(a, d)| a + d)
                .collect();
            let excess: f64 = (c_new.iter().sum::<f64>() - 1.0) / k as f64;
            c_new.iter_mut().for_each(|x| *x -= excess);
            let cost_new = eval(&rot_new, &c_new);
            if cost_new < cost {
                let rel = (cost - cost_new) / cost.abs().max(1e-300);
                rot = rot_new;
                c = c_new;
                cost = cost_new;
                damping = (damping / 3.0).max(1e-14);
                improved = true;
                if rel < 1e-14 {
                    break;
                }
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    // The polish relaxes nonnegativity; restore it only when violated.
    let coeffs = if c.iter().all(|&x| x >= -1e-12) {
        ShapeCoeffs::from_vec_unchecked(c)
    } else {
        project_to_simplex(&c)
    };
    (rot, coeffs)
}

#[cfg(test)]
mod tests;
