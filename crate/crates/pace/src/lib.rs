//! Certifiably optimal and outlier-robust category-level object pose and
//! shape estimation from 3D or 2D semantic keypoints.
//!
//! The library is organized around two stages. Stage one prunes gross
//! outliers with graph-theoretic compatibility tests ([`robin`]). Stage two
//! solves the outlier-free estimation problem to certifiable global
//! optimality with convex relaxations ([`pace3d`], [`pace2d`]), optionally
//! wrapped in graduated non-convexity for residual outliers ([`gnc`]).
//! Small dense convex solvers (simplex QP, LP feasibility, a multi-block
//! SDP interior-point method) live in [`optkernels`]; synthetic data
//! generation, experiment sweeps and file I/O live in [`bench`].

pub mod bench;
pub mod core;
pub mod gnc;
pub mod optkernels;
pub mod pace2d;
pub mod pace3d;
pub mod robin;

mod error;

pub use crate::core::{
    EstimationResult, Keypoints2D, Keypoints3D, Pose, Rotation, ShapeCoeffs, ShapeLibrary,
    SolveStatus,
};
pub use error::{Error, Result};
