use nalgebra::{Matrix3, Vector2, Vector3};

use super::{Pose, Rotation, ShapeCoeffs};
use crate::{Error, Result};

/// Projects a 3x3 matrix onto SO(3) in the Frobenius sense.
///
/// Computed from the SVD `m = U S V'` as `U diag(1, 1, det(UV')) V'`, which
/// minimizes the Frobenius distance among rotations.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<Rotation> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix".into()));
    }
    let svd = m.svd(true, true);
    let u = svd.u.ok_or(Error::DegenerateProjection)?;
    let v_t = svd.v_t.ok_or(Error::DegenerateProjection)?;
    // Rank < 2 leaves the nearest rotation ambiguous.
    if svd.singular_values[1] < 1e-12 * svd.singular_values[0].max(1.0) {
        return Err(Error::DegenerateProjection);
    }
    let d = (u * v_t).determinant();
    let s = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum()));
    let r = u * s * v_t;
    // Re-orthonormalize against SVD rounding before wrapping.
    let svd2 = r.svd(true, true);
    let r = svd2.u.unwrap() * svd2.v_t.unwrap();
    Ok(Rotation::from_matrix_unchecked(r))
}

/// Euclidean projection onto the probability simplex.
///
/// Sort-based exact algorithm: O(K log K).
pub fn project_to_simplex(v: &[f64]) -> ShapeCoeffs {
    let k = v.len();
    assert!(k >= 1, "empty vector");
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut rho = 0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - 1.0) / (j as f64 + 1.0);
        if uj - t > 0.0 {
            rho = j;
            theta = t;
        }
    }
    let _ = rho;
    let mut c: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Exact renormalization of the active set kills accumulated rounding.
    let s: f64 = c.iter().sum();
    if s > 0.0 {
        for x in c.iter_mut() {
            *x /= s;
        }
    } else {
        c = vec![1.0 / k as f64; k];
    }
    ShapeCoeffs::from_vec_unchecked(c)
}

/// Canonical perspective projection `(px/pz, py/pz)`.
pub fn perspective_project(p: &Vector3<f64>) -> Result<Vector2<f64>> {
    if p.z <= 0.0 {
        return Err(Error::BehindCamera(p.z));
    }
    Ok(Vector2::new(p.x / p.z, p.y / p.z))
}

/// Unit bearing vector through the calibrated pixel `z`: normalize `(z, 1)`.
pub fn bearing(z: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(z.x, z.y, 1.0).normalize()
}

/// Rotation (geodesic, degrees), translation (l2) and shape (l2) errors of an
/// estimate against ground truth.
pub fn errors(
    est_pose: &Pose,
    est_coeffs: &ShapeCoeffs,
    truth_pose: &Pose,
    truth_coeffs: &ShapeCoeffs,
) -> (f64, f64, f64) {
    let rot_err_deg = est_pose.rotation.angle_to(&truth_pose.rotation).to_degrees();
    let trans_err = (est_pose.translation - truth_pose.translation).norm();
    let shape_err = est_coeffs
        .as_slice()
        .iter()
        .zip(truth_coeffs.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    (rot_err_deg, trans_err, shape_err)
}
