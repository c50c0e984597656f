//! Domain types and geometric primitives shared by all solvers.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance used to validate rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

/// Default certification tolerance: a result is reported as certifiably
/// optimal when the relative suboptimality gap is below this value.
pub const CERTIFICATION_TOL: f64 = 1e-6;

/// A rotation matrix in SO(3).
///
/// Guaranteed orthogonal with determinant +1 to within [`ROTATION_TOL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    m: Matrix3<f64>,
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation {
            m: Matrix3::identity(),
        }
    }

    /// Wraps a matrix after checking the SO(3) invariants.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let ortho = (m.transpose() * m - Matrix3::identity()).norm();
        let det = m.determinant();
        if ortho > 1e-7 || (det - 1.0).abs() > 1e-7 {
            return Err(Error::InvalidInput(format!(
                "not a rotation: ||R'R - I|| = {ortho:.2e}, det = {det}"
            )));
        }
        Ok(Rotation { m })
    }

    /// Wraps a matrix that is known to be a rotation (e.g. from an internal
    /// projection). Debug builds still check.
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        debug_assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-6);
        Rotation { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn transpose(&self) -> Rotation {
        Rotation { m: self.m.transpose() }
    }

    /// Rotates a vector.
    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.m * v
    }

    /// Geodesic distance to another rotation, in radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let c = ((self.m.transpose() * other.m).trace() - 1.0) / 2.0;
        c.clamp(-1.0, 1.0).acos()
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation::from_matrix_unchecked(self.m * rhs.m)
    }
}

/// Rigid pose: rotation plus translation in meters.
#[derive(Debug, Clone, Copy)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Applies the pose to a point: `R p + t`.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.apply(p) + self.translation
    }
}

/// Active shape model: `K` CAD models, each giving the same `N` semantic
/// keypoints in the object frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeLibrary {
    /// `keypoints[k][i]` is keypoint `i` of model `k`, in meters.
    keypoints: Vec<Vec<Vector3<f64>>>,
}

impl ShapeLibrary {
    pub fn new(keypoints: Vec<Vec<Vector3<f64>>>) -> Result<Self> {
        let k = keypoints.len();
        if k < 1 {
            return Err(Error::InvalidInput("shape library needs K >= 1".into()));
        }
        let n = keypoints[0].len();
        if n < 3 {
            return Err(Error::InvalidInput("shape library needs N >= 3".into()));
        }
        for row in &keypoints {
            if row.len() != n {
                return Err(Error::InvalidInput(
                    "all models must have the same keypoint count".into(),
                ));
            }
            if row.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
                return Err(Error::InvalidInput("non-finite model keypoint".into()));
            }
        }
        Ok(ShapeLibrary { keypoints })
    }

    pub fn num_models(&self) -> usize {
        self.keypoints.len()
    }

    pub fn num_keypoints(&self) -> usize {
        self.keypoints[0].len()
    }

    /// Keypoint `i` of model `k`.
    pub fn point(&self, k: usize, i: usize) -> &Vector3<f64> {
        &self.keypoints[k][i]
    }

    pub fn models(&self) -> &[Vec<Vector3<f64>>] {
        &self.keypoints
    }

    /// Blended keypoint `i` under shape coefficients `c`: `sum_k c_k b_i^k`.
    pub fn blend(&self, c: &[f64], i: usize) -> Vector3<f64> {
        let mut p = Vector3::zeros();
        for (k, ck) in c.iter().enumerate() {
            p += *ck * self.keypoints[k][i];
        }
        p
    }

    /// Mean shape `sum_k b_i^k / K`, used by mean-shape baselines.
    pub fn mean_shape(&self) -> Vec<Vector3<f64>> {
        let k = self.num_models() as f64;
        (0..self.num_keypoints())
            .map(|i| {
                self.keypoints.iter().map(|m| m[i]).sum::<Vector3<f64>>() / k
            })
            .collect()
    }
}

/// Shape coefficients on (a relaxation of) the probability simplex.
///
/// The sum-to-one constraint always holds; nonnegativity holds only when the
/// coefficients come from a simplex-constrained context (the 3D solver's
/// closed form relaxes nonnegativity and may return negative entries).
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeCoeffs {
    c: Vec<f64>,
}

impl ShapeCoeffs {
    /// Checks only the affine constraint `sum(c) = 1`.
    pub fn new_affine(c: Vec<f64>) -> Result<Self> {
        let s: f64 = c.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "shape coefficients sum to {s}, expected 1"
            )));
        }
        Ok(ShapeCoeffs { c })
    }

    pub(crate) fn from_vec_unchecked(c: Vec<f64>) -> Self {
        ShapeCoeffs { c }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// True if also nonnegative (within `tol`), i.e. inside the simplex.
    pub fn in_simplex(&self, tol: f64) -> bool {
        self.c.iter().all(|&x| x >= -tol)
    }
}

/// N weighted 3D keypoint measurements.
#[derive(Debug, Clone)]
pub struct Keypoints3D {
    pub points: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

impl Keypoints3D {
    pub fn new(points: Vec<Vector3<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidInput("need at least 3 keypoints".into()));
        }
        if weights.len() != points.len() {
            return Err(Error::InvalidInput("weights length mismatch".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and >= 0".into()));
        }
        Ok(Keypoints3D { points, weights })
    }

    pub fn uniform(points: Vec<Vector3<f64>>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Keypoints3D::new(points, w)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// N weighted 2D keypoint measurements in calibrated (normalized) image
/// coordinates.
#[derive(Debug, Clone)]
pub struct Keypoints2D {
    pub pixels: Vec<Vector2<f64>>,
    pub weights: Vec<f64>,
}

impl Keypoints2D {
    pub fn new(pixels: Vec<Vector2<f64>>, weights: Vec<f64>) -> Result<Self> {
        if pixels.len() < 4 {
            return Err(Error::InvalidInput(
                "need at least 4 keypoints for pose observability".into(),
            ));
        }
        if weights.len() != pixels.len() {
            return Err(Error::InvalidInput("weights length mismatch".into()));
        }
        if pixels.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidInput("non-finite pixel".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and >= 0".into()));
        }
        Ok(Keypoints2D { pixels, weights })
    }

    pub fn uniform(pixels: Vec<Vector2<f64>>) -> Result<Self> {
        let w = vec![1.0; pixels.len()];
        Keypoints2D::new(pixels, w)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Outcome of an estimation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// Relative suboptimality gap is below the certification tolerance.
    CertifiedOptimal,
    /// A feasible estimate was extracted but optimality is not certified.
    Rounded,
    /// The solver did not produce a usable estimate.
    Failed,
}

/// Pose, shape and certificate returned by the solvers.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub pose: Pose,
    pub coeffs: ShapeCoeffs,
    /// Relative suboptimality gap `|p_hat - f_star| / (1 + |p_hat| + |f_star|)`.
    pub gap: f64,
    /// Cost of the estimate under the solver's objective.
    pub cost: f64,
    /// Per-measurement weights in [0, 1] (robust schemes set these).
    pub weights: Vec<f64>,
    pub status: SolveStatus,
}

impl EstimationResult {
    pub(crate) fn classify(gap: f64) -> SolveStatus {
        if gap <= CERTIFICATION_TOL {
            SolveStatus::CertifiedOptimal
        } else {
            SolveStatus::Rounded
        }
    }
}

mod ops;
pub use ops::{bearing, errors, perspective_project, project_to_simplex, project_to_so3};
