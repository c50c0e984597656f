//! Certifiably optimal outlier-free 3D-3D solver.
//!
//! Translation and shape admit closed forms given the rotation; the rotation
//! subproblem becomes a quadratic over SO(3), lifted to a 10x10 semidefinite
//! relaxation whose solution is rounded back and certified through the
//! relative suboptimality gap.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::core::{EstimationResult, Keypoints3D, Pose, Rotation, ShapeCoeffs, ShapeLibrary};
use crate::optkernels::{solve_sdp, BlockSym, SdpProblem, SdpSolution, SymMat};
use crate::{Error, Result};

/// Default interior-point tolerance; leaves certification headroom below the
/// 1e-5 gap target.
pub const SDP_TOL_3D: f64 = 1e-9;

/// Weighted-centered measurements and model matrix.
#[derive(Debug, Clone)]
pub struct CenteredData3D {
    /// `sqrt(w_i) (y_i - y_w)` per measurement.
    pub ybar: Vec<Vector3<f64>>,
    /// 3N x K matrix of centered model keypoints `sqrt(w_i)(b_i^k - b_{k,w})`.
    pub bbar: DMatrix<f64>,
    /// Weighted centroid of the measurements.
    pub yw: Vector3<f64>,
    /// Weighted centroid of each model.
    pub bw: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

/// Weighted centering of measurements and library.
pub fn center_data(lib: &ShapeLibrary, meas: &Keypoints3D) -> Result<CenteredData3D> {
    let n = meas.len();
    let k = lib.num_models();
    if lib.num_keypoints() != n {
        return Err(Error::InvalidInput("library/measurement size mismatch".into()));
    }
    let wsum: f64 = meas.weights.iter().sum();
    if wsum <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let mut yw = Vector3::zeros();
    for (y, &w) in meas.points.iter().zip(&meas.weights) {
        yw += w * y;
    }
    yw /= wsum;
    let mut bw = vec![Vector3::zeros(); k];
    for (m, bwk) in bw.iter_mut().enumerate() {
        for i in 0..n {
            *bwk += meas.weights[i] * lib.point(m, i);
        }
        *bwk /= wsum;
    }
    let mut ybar = Vec::with_capacity(n);
    let mut bbar = DMatrix::zeros(3 * n, k);
    for i in 0..n {
        let sw = meas.weights[i].sqrt();
        ybar.push(sw * (meas.points[i] - yw));
        for m in 0..k {
            let v = sw * (lib.point(m, i) - bw[m]);
            for a in 0..3 {
                bbar[(3 * i + a, m)] = v[a];
            }
        }
    }
    Ok(CenteredData3D {
        ybar,
        bbar,
        yw,
        bw,
        weights: meas.weights.clone(),
    })
}

/// Constant matrices of the shape closed form:
/// `Hbar = 2(Bbar'Bbar + lambda I)`,
/// `G = Hbar^-1 - Hbar^-1 1 1' Hbar^-1 / (1' Hbar^-1 1)`,
/// `g = Hbar^-1 1 / (1' Hbar^-1 1)`.
#[derive(Debug, Clone)]
pub struct ShapeClosedForm {
    pub hbar: DMatrix<f64>,
    pub g_mat: DMatrix<f64>,
    pub g_vec: DVector<f64>,
}

impl ShapeClosedForm {
    pub fn new(cd: &CenteredData3D, lambda: f64) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::InvalidInput("lambda must be >= 0".into()));
        }
        let k = cd.bbar.ncols();
        let hbar = 2.0 * (cd.bbar.transpose() * &cd.bbar + lambda * DMatrix::identity(k, k));
        let chol = match nalgebra::Cholesky::new(hbar.clone()) {
            Some(c) => c,
            None => return Err(Error::IllPosedShape),
        };
        let hinv_one = chol.solve(&DVector::from_element(k, 1.0));
        let denom = hinv_one.sum();
        if denom.abs() < 1e-14 {
            return Err(Error::IllPosedShape);
        }
        let hinv = chol.solve(&DMatrix::identity(k, k));
        let g_mat = &hinv - &hinv_one * hinv_one.transpose() / denom;
        let g_vec = hinv_one / denom;
        Ok(ShapeClosedForm { hbar, g_mat, g_vec })
    }
}

/// Stacks `R' ybar_i` into a 3N vector.
fn rotated_stack(cd: &CenteredData3D, rot: &Rotation) -> DVector<f64> {
    let n = cd.ybar.len();
    let rt = rot.matrix().transpose();
    let mut u = DVector::zeros(3 * n);
    for (i, y) in cd.ybar.iter().enumerate() {
        let v = rt * y;
        for a in 0..3 {
            u[3 * i + a] = v[a];
        }
    }
    u
}

/// Optimal shape coefficients for a fixed rotation:
/// `c*(R) = 2 G Bbar' (I_N (x) R') ybar + g`. The sum-to-one constraint is
/// satisfied exactly; entries may be negative (nonnegativity is relaxed by
/// this estimator).
pub fn shape_closed_form(
    cd: &CenteredData3D,
    lambda: f64,
    rot: &Rotation,
) -> Result<ShapeCoeffs> {
    let scf = ShapeClosedForm::new(cd, lambda)?;
    Ok(shape_closed_form_with(cd, &scf, rot))
}

/// Same as [`shape_closed_form`] with precomputed system matrices.
pub fn shape_closed_form_with(
    cd: &CenteredData3D,
    scf: &ShapeClosedForm,
    rot: &Rotation,
) -> ShapeCoeffs {
    let u = rotated_stack(cd, rot);
    let bt_u = cd.bbar.transpose() * u;
    let c = 2.0 * &scf.g_mat * bt_u + &scf.g_vec;
    ShapeCoeffs::from_vec_unchecked(c.iter().cloned().collect())
}

/// Optimal translation for fixed rotation and shape:
/// `t*(R, c) = y_w - R sum_k c_k b_{k,w}`.
pub fn optimal_translation(
    cd: &CenteredData3D,
    rot: &Rotation,
    coeffs: &ShapeCoeffs,
) -> Vector3<f64> {
    let mut blended = Vector3::zeros();
    for (k, &ck) in coeffs.as_slice().iter().enumerate() {
        blended += ck * cd.bw[k];
    }
    cd.yw - rot.apply(&blended)
}

/// Quadratic rotation subproblem: `min r~' Q r~` over the lifted rotation
/// vector subject to the 15 SO(3) quadrics plus homogenization.
#[derive(Debug, Clone)]
pub struct RotationQcqp {
    pub q: DMatrix<f64>,
}

/// Nonzero upper-triangular triplets of the homogenization matrix A_0.
pub const A0_TRIPLETS: [(usize, usize, f64); 1] = [(0, 0, 1.0)];

/// Nonzero upper-triangular triplets of the 15 SO(3) constraint matrices
/// over `r~ = [1, vec(R)]`: unit-norm columns, mutual orthogonality, and the
/// right-handed frame identities.
pub const SO3_CONSTRAINT_TRIPLETS: [&[(usize, usize, f64)]; 15] = [
    &[(0, 0, 1.0), (1, 1, -1.0), (2, 2, -1.0), (3, 3, -1.0)],
    &[(0, 0, 1.0), (4, 4, -1.0), (5, 5, -1.0), (6, 6, -1.0)],
    &[(0, 0, 1.0), (7, 7, -1.0), (8, 8, -1.0), (9, 9, -1.0)],
    &[(1, 4, 1.0), (2, 5, 1.0), (3, 6, 1.0)],
    &[(1, 7, 1.0), (2, 8, 1.0), (3, 9, 1.0)],
    &[(4, 7, 1.0), (5, 8, 1.0), (6, 9, 1.0)],
    &[(2, 6, 1.0), (3, 5, -1.0), (0, 7, -1.0)],
    &[(3, 4, 1.0), (1, 6, -1.0), (0, 8, -1.0)],
    &[(1, 5, 1.0), (0, 9, -1.0), (2, 4, -1.0)],
    &[(5, 9, 1.0), (0, 1, -1.0), (6, 8, -1.0)],
    &[(6, 7, 1.0), (4, 9, -1.0), (0, 2, -1.0)],
    &[(4, 8, 1.0), (0, 3, -1.0), (5, 7, -1.0)],
    &[(3, 8, 1.0), (2, 9, -1.0), (0, 4, -1.0)],
    &[(1, 9, 1.0), (0, 5, -1.0), (3, 7, -1.0)],
    &[(2, 7, 1.0), (1, 8, -1.0), (0, 6, -1.0)],
];

/// Nonzero entries `(row, col)` of the permutation with
/// `vec(R') = P vec(R)` (all values 1).
pub const VEC_TRANSPOSE_PERM: [(usize, usize); 9] = [
    (0, 0),
    (1, 3),
    (2, 6),
    (3, 1),
    (4, 4),
    (5, 7),
    (6, 2),
    (7, 5),
    (8, 8),
];

/// Assembles the 10x10 quadratic form of the translation- and
/// shape-eliminated rotation problem. For any rotation, `r~' Q r~` equals
/// the centered cost at `(R, c*(R))`.
pub fn assemble_rotation_qcqp(cd: &CenteredData3D, lambda: f64) -> Result<RotationQcqp> {
    let scf = ShapeClosedForm::new(cd, lambda)?;
    Ok(assemble_rotation_qcqp_with(cd, &scf, lambda))
}

/// Same as [`assemble_rotation_qcqp`] with precomputed shape matrices.
pub fn assemble_rotation_qcqp_with(
    cd: &CenteredData3D,
    scf: &ShapeClosedForm,
    lambda: f64,
) -> RotationQcqp {
    let n = cd.ybar.len();
    let sqrt_l = lambda.sqrt();

    // U = (Y' (x) I_3) P maps vec(R) to the stacked R' ybar_i:
    // entry (3i + a, 3a + b) = ybar_i[b].
    let mut u = DMatrix::zeros(3 * n, 9);
    for (i, y) in cd.ybar.iter().enumerate() {
        for a in 0..3 {
            for b in 0..3 {
                u[(3 * i + a, 3 * a + b)] = y[b];
            }
        }
    }

    let bt_u = cd.bbar.transpose() * &u; // K x 9
    let gbt_u = &scf.g_mat * bt_u; // K x 9
    let z_top = 2.0 * &cd.bbar * &gbt_u - &u; // 3N x 9
    let z_bot = 2.0 * sqrt_l * gbt_u; // K x 9
    let h_top = &cd.bbar * &scf.g_vec; // 3N
    let h_bot = sqrt_l * &scf.g_vec; // K

    let q_rr = z_top.transpose() * &z_top + z_bot.transpose() * &z_bot;
    let q_r = z_top.transpose() * &h_top + z_bot.transpose() * &h_bot;
    let q_00 = h_top.norm_squared() + h_bot.norm_squared();

    let mut q = DMatrix::zeros(10, 10);
    q[(0, 0)] = q_00;
    for i in 0..9 {
        q[(0, i + 1)] = q_r[i];
        q[(i + 1, 0)] = q_r[i];
        for j in 0..9 {
            q[(i + 1, j + 1)] = q_rr[(i, j)];
        }
    }
    RotationQcqp { q }
}

/// Evaluates the lifted quadratic at a rotation: the cost of the
/// translation-free problem at `(R, c*(R))`.
pub fn qcqp_cost(qcqp: &RotationQcqp, rot: &Rotation) -> f64 {
    let mut r = DVector::zeros(10);
    r[0] = 1.0;
    let m = rot.matrix();
    for c in 0..3 {
        for a in 0..3 {
            r[1 + 3 * c + a] = m[(a, c)];
        }
    }
    (r.transpose() * &qcqp.q * r)[(0, 0)]
}

/// Builds the Shor relaxation of the rotation QCQP: a 10x10 SDP with the
/// homogenization constraint `tr(A_0 X) = 1` and `tr(A_i X) = 0`.
pub fn rotation_sdp(qcqp: &RotationQcqp) -> SdpProblem {
    let mut c_dense = vec![0.0; 100];
    for i in 0..10 {
        for j in 0..10 {
            c_dense[i * 10 + j] = qcqp.q[(i, j)];
        }
    }
    let mut constraints = Vec::with_capacity(16);
    let mut rhs = Vec::with_capacity(16);
    constraints.push(BlockSym {
        blocks: vec![SymMat::Sparse(
            A0_TRIPLETS
                .iter()
                .map(|&(i, j, v)| (i as u32, j as u32, v))
                .collect(),
        )],
    });
    rhs.push(1.0);
    for ts in SO3_CONSTRAINT_TRIPLETS.iter() {
        constraints.push(BlockSym {
            blocks: vec![SymMat::Sparse(
                ts.iter().map(|&(i, j, v)| (i as u32, j as u32, v)).collect(),
            )],
        });
        rhs.push(0.0);
    }
    SdpProblem {
        block_sizes: vec![10],
        objective: BlockSym {
            blocks: vec![SymMat::Dense(c_dense)],
        },
        constraints,
        rhs,
    }
}

/// Solves the Shor relaxation of the rotation subproblem.
pub fn solve_rotation(qcqp: &RotationQcqp, tol: f64) -> Result<SdpSolution> {
    solve_sdp(&rotation_sdp(qcqp), tol)
}

/// Ratio of the second to the leading eigenvalue; below 1e-6 the solution is
/// treated as rank one.
pub fn rank1_ratio(x: &DMatrix<f64>) -> f64 {
    let mut ev: Vec<f64> = x
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if ev[0] <= 0.0 {
        return 1.0;
    }
    (ev[1].max(0.0)) / ev[0]
}

/// Rounds the relaxation solution to a feasible rotation and computes the
/// relative suboptimality `eta = |p_hat - f_star| / (1 + |p_hat| + |f_star|)`.
///
/// The leading eigenvector is normalized by its homogenization entry and the
/// nine rotation entries are projected onto SO(3); `f_star` is the
/// relaxation's certified lower bound.
pub fn round_and_certify(sol: &SdpSolution, qcqp: &RotationQcqp) -> Result<(Rotation, f64)> {
    let x = &sol.primal[0];
    let eig = x.clone().symmetric_eigen();
    let mut lead = 0usize;
    for i in 1..10 {
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
    for c in 0..3 {
        for a in 0..3 {
            m[(a, c)] = u[1 + 3 * c + a];
        }
    }
    let rot = crate::core::project_to_so3(&m)?;
    let rot = polish_rotation(qcqp, &rot);
    let p_hat = qcqp_cost(qcqp, &rot);
    let f_star = sol.objective;
    let eta = (p_hat - f_star).abs() / (1.0 + p_hat.abs() + f_star.abs());
    Ok((rot, eta))
}

/// Local Gauss-Newton polish of the lifted quadratic over SO(3); removes the
/// last digits of eigenvector-extraction noise from the rounded estimate.
fn polish_rotation(qcqp: &RotationQcqp, rot: &Rotation) -> Rotation {
    let mut rot = *rot;
    let mut cost = qcqp_cost(qcqp, &rot);
    let mut damping = 1e-12;
    for _ in 0..20 {
        let m = rot.matrix();
        let mut rtil = DVector::zeros(10);
        rtil[0] = 1.0;
        for c in 0..3 {
            for a in 0..3 {
                rtil[1 + 3 * c + a] = m[(a, c)];
            }
        }
        // d vec(R exp(xi^)) / d xi_k = vec(R E_k).
        let mut jac = DMatrix::zeros(10, 3);
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = 1.0;
            let gen = Matrix3::new(0.0, -e.z, e.y, e.z, 0.0, -e.x, -e.y, e.x, 0.0);
            let re = m * gen;
            for c in 0..3 {
                for a in 0..3 {
                    jac[(1 + 3 * c + a, k)] = re[(a, c)];
                }
            }
        }
        let grad = jac.transpose() * (&qcqp.q * &rtil) * 2.0;
        let hess = jac.transpose() * &qcqp.q * &jac * 2.0;
        let mut improved = false;
        for _ in 0..6 {
            let mut lhs = hess.clone();
            for d in 0..3 {
                lhs[(d, d)] += damping * (hess[(d, d)].abs() + 1e-15);
            }
            let Some(chol) = nalgebra::Cholesky::new(lhs) else {
                damping *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            let xi = Vector3::new(step[0], step[1], step[2]);
            let th = xi.norm();
            let rot_new = if th < 1e-16 {
                rot
            } else {
                let k = Matrix3::new(
                    0.0, -xi.z, xi.y, xi.z, 0.0, -xi.x, -xi.y, xi.x, 0.0,
                ) / th;
                let exp = Matrix3::identity() + th.sin() * k + (1.0 - th.cos()) * (k * k);
                Rotation::from_matrix_unchecked(rot.matrix() * exp)
            };
            let cost_new = qcqp_cost(qcqp, &rot_new);
            if cost_new < cost {
                rot = rot_new;
                let rel = (cost - cost_new) / cost.abs().max(1e-300);
                cost = cost_new;
                damping = (damping / 3.0).max(1e-14);
                improved = true;
                if rel < 1e-14 {
                    return rot;
                }
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    rot
}

/// Direct evaluation of the full weighted 3D-3D objective.
pub fn cost_3d3d(
    lib: &ShapeLibrary,
    meas: &Keypoints3D,
    pose: &Pose,
    coeffs: &ShapeCoeffs,
    lambda: f64,
) -> f64 {
    let mut cost = 0.0;
    for i in 0..meas.len() {
        let s = lib.blend(coeffs.as_slice(), i);
        let r = meas.points[i] - pose.apply(&s);
        cost += meas.weights[i] * r.norm_squared();
    }
    cost + lambda * coeffs.as_slice().iter().map(|c| c * c).sum::<f64>()
}

/// Full estimation pipeline: certifiably optimal rotation via the Shor
/// relaxation, then shape and translation in closed form.
pub fn pace3d_star(lib: &ShapeLibrary, meas: &Keypoints3D, lambda: f64) -> Result<EstimationResult> {
    let cd = center_data(lib, meas)?;
    let scf = ShapeClosedForm::new(&cd, lambda)?;
    let qcqp = assemble_rotation_qcqp_with(&cd, &scf, lambda);
    let sol = solve_rotation(&qcqp, SDP_TOL_3D)?;
    let (rot, eta) = round_and_certify(&sol, &qcqp)?;
    let coeffs = shape_closed_form_with(&cd, &scf, &rot);
    let t = optimal_translation(&cd, &rot, &coeffs);
    let pose = Pose {
        rotation: rot,
        translation: t,
    };
    let cost = cost_3d3d(lib, meas, &pose, &coeffs, lambda);
    Ok(EstimationResult {
        pose,
        coeffs,
        gap: eta,
        cost,
        weights: vec![1.0; meas.len()],
        status: EstimationResult::classify(eta),
    })
}
