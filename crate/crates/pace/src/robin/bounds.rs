//! Pairwise distance bounds over the active shape model and the 3D-3D
//! compatibility test.

use nalgebra::{DMatrix, Vector3};

use crate::core::ShapeLibrary;
use crate::optkernels::{solve_simplex_qp, SimplexQp};
use crate::Result;

/// Extremal keypoint-pair distances over all shapes in the library:
/// `bmin[i][j] <= || s_j(c) - s_i(c) || <= bmax[i][j]` for any simplex `c`.
#[derive(Debug, Clone)]
pub struct PairBounds {
    bmin: DMatrix<f64>,
    bmax: DMatrix<f64>,
}

impl PairBounds {
    pub fn len(&self) -> usize {
        self.bmin.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.bmin.nrows() == 0
    }

    pub fn bmin(&self, i: usize, j: usize) -> f64 {
        self.bmin[(i, j)]
    }

    pub fn bmax(&self, i: usize, j: usize) -> f64 {
        self.bmax[(i, j)]
    }
}

/// Precomputes the pairwise bounds. The maximum of the convex distance
/// function over the simplex is attained at a vertex, so `bmax` is a max
/// over models; `bmin` comes from a small simplex-constrained QP per pair.
pub fn compute_pair_bounds(lib: &ShapeLibrary) -> Result<PairBounds> {
    let n = lib.num_keypoints();
    let k = lib.num_models();
    let mut bmin = DMatrix::zeros(n, n);
    let mut bmax = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut bij = DMatrix::zeros(3, k);
            for m in 0..k {
                let d = lib.point(m, j) - lib.point(m, i);
                bij.set_column(m, &d);
            }
            let mut mx: f64 = 0.0;
            for m in 0..k {
                mx = mx.max(bij.column(m).norm());
            }
            let h = bij.transpose() * &bij;
            let qp = SimplexQp::new(h)?;
            let (_, val) = solve_simplex_qp(&qp)?;
            let mn = val.max(0.0).sqrt();
            bmin[(i, j)] = mn;
            bmin[(j, i)] = mn;
            bmax[(i, j)] = mx;
            bmax[(j, i)] = mx;
        }
    }
    Ok(PairBounds { bmin, bmax })
}

/// Pairwise compatibility test: the measured distance must fall inside the
/// model bounds inflated by the worst-case noise `2 * beta`.
pub fn test_pair_3d(
    yi: &Vector3<f64>,
    yj: &Vector3<f64>,
    (bmin_ij, bmax_ij): (f64, f64),
    beta3d: f64,
) -> bool {
    let d = (yj - yi).norm();
    d >= bmin_ij - 2.0 * beta3d && d <= bmax_ij + 2.0 * beta3d
}
