//! Robustification layer: graduated non-convexity with a truncated least
//! squares loss around either optimal solver, iterative reweighting and
//! RANSAC baselines, the alternation baseline, and the combined
//! prune-then-solve pipeline.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::core::{
    EstimationResult, Keypoints2D, Keypoints3D, Pose, Rotation, ShapeCoeffs, ShapeLibrary,
    SolveStatus,
};
use crate::pace2d::{build_bearing_data, closed_form_translation_2d, refine_reprojection};
use crate::pace3d::{
    assemble_rotation_qcqp_with, center_data, cost_3d3d, optimal_translation, qcqp_cost,
    shape_closed_form_with, ShapeClosedForm,
};
use crate::robin::{compute_pair_bounds, robin, Invariant, Measurements, WindingDictionary};
use crate::{Error, Result};

/// Robust scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustScheme {
    GncTls,
    IrlsGm,
    IrlsTls,
    Ransac,
}

/// Configuration shared by the robust loops.
#[derive(Debug, Clone)]
pub struct RobustConfig {
    /// Inlier noise bound (meters for 3D residuals, normalized pixels for
    /// 2D reprojection residuals).
    pub beta: f64,
    /// Multiplicative control-parameter growth per outer iteration, > 1.
    pub mu_update: f64,
    pub max_iters: usize,
    /// Relative weighted-cost change below which the loop stops.
    pub conv_tol: f64,
    pub scheme: RobustScheme,
}

impl RobustConfig {
    pub fn new(beta: f64, scheme: RobustScheme) -> Self {
        RobustConfig {
            beta,
            mu_update: 1.4,
            max_iters: 100,
            conv_tol: 1e-6,
            scheme,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 || !self.beta.is_finite() {
            return Err(Error::InvalidInput("beta must be > 0".into()));
        }
        if self.mu_update <= 1.0 {
            return Err(Error::InvalidInput("mu_update must be > 1".into()));
        }
        Ok(())
    }
}

/// A solver of the weighted inner problem: given per-measurement weights it
/// returns the optimal estimate, and it can score residuals of any estimate.
pub trait WeightedSolver {
    fn num_measurements(&self) -> usize;
    /// Minimal observable inlier count (3 for 3D, 4 for 2D).
    fn min_inliers(&self) -> usize;
    fn solve(&self, weights: &[f64]) -> Result<EstimationResult>;
    fn residuals(&self, est: &EstimationResult) -> Vec<f64>;
}

/// Weighted 3D-3D inner solver.
pub struct Solver3d<'a> {
    pub lib: &'a ShapeLibrary,
    pub meas: &'a Keypoints3D,
    pub lambda: f64,
}

impl WeightedSolver for Solver3d<'_> {
    fn num_measurements(&self) -> usize {
        self.meas.len()
    }

    fn min_inliers(&self) -> usize {
        3
    }

    fn solve(&self, weights: &[f64]) -> Result<EstimationResult> {
        let eff: Vec<f64> = self
            .meas
            .weights
            .iter()
            .zip(weights)
            .map(|(a, b)| a * b)
            .collect();
        let meas = Keypoints3D::new(self.meas.points.clone(), eff)?;
        let mut res = crate::pace3d::pace3d_star(self.lib, &meas, self.lambda)?;
        res.weights = weights.to_vec();
        Ok(res)
    }

    fn residuals(&self, est: &EstimationResult) -> Vec<f64> {
        (0..self.meas.len())
            .map(|i| {
                let s = self.lib.blend(est.coeffs.as_slice(), i);
                (self.meas.points[i] - est.pose.apply(&s)).norm()
            })
            .collect()
    }
}

/// Weighted 2D-3D inner solver: the algebraic optimal solve optionally
/// followed by local refinement of the geometric reprojection cost.
pub struct Solver2d<'a> {
    pub lib: &'a ShapeLibrary,
    pub meas: &'a Keypoints2D,
    pub lambda: f64,
    pub refine: bool,
}

impl WeightedSolver for Solver2d<'_> {
    fn num_measurements(&self) -> usize {
        self.meas.len()
    }

    fn min_inliers(&self) -> usize {
        4
    }

    fn solve(&self, weights: &[f64]) -> Result<EstimationResult> {
        let eff: Vec<f64> = self
            .meas
            .weights
            .iter()
            .zip(weights)
            .map(|(a, b)| a * b)
            .collect();
        let meas = Keypoints2D::new(self.meas.pixels.clone(), eff)?;
        let mut res = crate::pace2d::pace2d_star(self.lib, &meas, self.lambda)?;
        if self.refine {
            res = refine_reprojection(&res, self.lib, &meas, self.lambda, &vec![1.0; meas.len()])?;
        }
        res.weights = weights.to_vec();
        Ok(res)
    }

    fn residuals(&self, est: &EstimationResult) -> Vec<f64> {
        reprojection_residuals(self.lib, self.meas, est)
    }
}

pub(crate) fn reprojection_residuals(
    lib: &ShapeLibrary,
    meas: &Keypoints2D,
    est: &EstimationResult,
) -> Vec<f64> {
    (0..meas.len())
        .map(|i| {
            let q = est.pose.apply(&lib.blend(est.coeffs.as_slice(), i));
            if q.z <= 1e-9 {
                1e3
            } else {
                (nalgebra::Vector2::new(q.x / q.z, q.y / q.z) - meas.pixels[i]).norm()
            }
        })
        .collect()
}

/// Closed-form truncated-least-squares weight for residual square `r2` at
/// control parameter `mu`.
fn gnc_tls_weight(r2: f64, beta2: f64, mu: f64) -> f64 {
    let upper = beta2 * (mu + 1.0) / mu;
    let lower = beta2 * mu / (mu + 1.0);
    if r2 >= upper {
        0.0
    } else if r2 <= lower {
        1.0
    } else {
        (beta2 * mu * (mu + 1.0)).sqrt() / r2.sqrt() - mu
    }
}

/// Graduated non-convexity with the truncated least squares surrogate:
/// alternates optimal weighted solves with closed-form weight updates while
/// the control parameter grows, then snaps weights binary to classify
/// inliers.
pub fn gnc_tls(solver: &dyn WeightedSolver, cfg: &RobustConfig) -> Result<EstimationResult> {
    cfg.validate()?;
    let n = solver.num_measurements();
    let beta2 = cfg.beta * cfg.beta;

    let mut weights = vec![1.0f64; n];
    let mut est = solver.solve(&weights)?;
    let mut residuals = solver.residuals(&est);
    let r2max = residuals.iter().map(|r| r * r).fold(0.0f64, f64::max);
    if r2max <= beta2 {
        // Already all-inlier: the plain solve is the answer.
        est.weights = weights;
        return Ok(est);
    }
    let mut mu = (beta2 / (2.0 * r2max - beta2)).clamp(1e-6, 1e6);

    let reg = |est: &EstimationResult| {
        est.coeffs.as_slice().iter().map(|c| c * c).sum::<f64>()
    };
    let lambda_reg = {
        // Solver objective = weighted fit + lambda * ||c||^2; recover lambda
        // from the plain solve to keep the descent check consistent.
        let fit: f64 = residuals
            .iter()
            .zip(&weights)
            .map(|(r, w)| w * r * r)
            .sum();
        if reg(&est) > 1e-12 {
            ((est.cost - fit) / reg(&est)).max(0.0)
        } else {
            0.0
        }
    };

    let trace = std::env::var_os("PACE_GNC_TRACE").is_some();
    let mut prev_cost = f64::INFINITY;
    for outer in 0..cfg.max_iters {
        for (w, r) in weights.iter_mut().zip(&residuals) {
            *w = gnc_tls_weight(r * r, beta2, mu);
        }
        // The surrogate weights are uniformly fractional in the convex
        // stage; only a collapsing support is degenerate.
        if weights.iter().filter(|&&w| w > 0.0).count() < solver.min_inliers() {
            break;
        }
        // Full weighted objective at the previous estimate under the new
        // weights; the optimal inner solve may not exceed it.
        let prev_weighted: f64 = weights
            .iter()
            .zip(&residuals)
            .map(|(w, r)| w * r * r)
            .sum::<f64>()
            + lambda_reg * reg(&est);
        est = solver.solve(&weights)?;
        residuals = solver.residuals(&est);
        let cost: f64 = weights
            .iter()
            .zip(&residuals)
            .map(|(w, r)| w * r * r)
            .sum::<f64>()
            + lambda_reg * reg(&est);
        debug_assert!(
            cost <= prev_weighted + 1e-6 * (1.0 + prev_weighted),
            "inner solve increased the weighted cost: {cost} > {prev_weighted}"
        );
        let binary = weights.iter().all(|&w| w < 1e-9 || (w - 1.0).abs() < 1e-9);
        let delta = (prev_cost - cost).abs() / (1.0 + cost.abs());
        prev_cost = cost;
        if trace {
            let nz = weights.iter().filter(|&&w| w > 1e-9).count();
            let ones = weights.iter().filter(|&&w| (w - 1.0).abs() < 1e-9).count();
            eprintln!(
                "gnc iter {outer}: mu {mu:.3e} cost {cost:.6e} delta {delta:.2e} nonzero {nz} ones {ones}"
            );
        }
        if binary || delta < cfg.conv_tol {
            break;
        }
        mu = (mu * cfg.mu_update).min(1e12);
    }

    // Snap weights binary and refit on the classified inliers.
    let binary: Vec<f64> = residuals
        .iter()
        .map(|r| if r * r <= beta2 * 1.0000001 { 1.0 } else { 0.0 })
        .collect();
    let count = binary.iter().filter(|&&w| w > 0.5).count();
    if count < solver.min_inliers() {
        return Err(Error::RobustFailure(format!(
            "{count} inliers after convergence, need {}",
            solver.min_inliers()
        )));
    }
    let mut fin = solver.solve(&binary)?;
    fin.weights = binary;
    Ok(fin)
}

/// Robust loss for the reweighting baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrlsLoss {
    GemanMcClure,
    TruncatedLs,
}

/// Fixed-point iterative reweighting with the Geman-McClure or truncated
/// least squares weights.
pub fn irls(
    solver: &dyn WeightedSolver,
    loss: IrlsLoss,
    cfg: &RobustConfig,
) -> Result<EstimationResult> {
    cfg.validate()?;
    let n = solver.num_measurements();
    let beta2 = cfg.beta * cfg.beta;
    let max_iters = cfg.max_iters.max(1000);

    let mut weights = vec![1.0f64; n];
    let mut est = solver.solve(&weights)?;
    let mut prev_cost = f64::INFINITY;
    for _ in 0..max_iters {
        let residuals = solver.residuals(&est);
        let new_weights: Vec<f64> = residuals
            .iter()
            .map(|r| {
                let r2 = r * r;
                match loss {
                    IrlsLoss::GemanMcClure => {
                        let t = beta2 / (beta2 + r2);
                        t * t
                    }
                    IrlsLoss::TruncatedLs => {
                        if r2 <= beta2 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect();
        let moved = weights
            .iter()
            .zip(&new_weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        weights = new_weights;
        if weights.iter().filter(|&&w| w > 1e-12).count() < solver.min_inliers() {
            break;
        }
        est = solver.solve(&weights)?;
        let cost: f64 = solver
            .residuals(&est)
            .iter()
            .zip(&weights)
            .map(|(r, w)| w * r * r)
            .sum();
        let delta = (prev_cost - cost).abs() / (1.0 + cost.abs());
        prev_cost = cost;
        if moved < 1e-6 || delta < cfg.conv_tol {
            break;
        }
    }
    let residuals = solver.residuals(&est);
    let count = residuals.iter().filter(|&&r| r <= cfg.beta).count();
    if count < solver.min_inliers() {
        return Err(Error::RobustFailure(format!(
            "{count} inliers after IRLS, need {}",
            solver.min_inliers()
        )));
    }
    est.weights = weights;
    Ok(est)
}

/// Sampling problem interface for the consensus loop.
pub trait RansacProblem {
    fn num_measurements(&self) -> usize;
    fn solve_minimal(&self, subset: &[usize]) -> Result<EstimationResult>;
    fn solve_full(&self, weights: &[f64]) -> Result<EstimationResult>;
    fn residuals(&self, est: &EstimationResult) -> Vec<f64>;
}

/// Seeded uniform-sampling consensus: scores hypotheses from minimal subsets
/// by the count of residuals within `beta`, refits the best consensus set
/// with the full solver. Deterministic under a fixed seed; adaptively stops
/// once the sampled confidence reaches 99.9%.
pub fn ransac(
    problem: &dyn RansacProblem,
    cfg: &RobustConfig,
    min_set: usize,
    max_iters: usize,
    seed: u64,
) -> Result<EstimationResult> {
    cfg.validate()?;
    let n = problem.num_measurements();
    if n < min_set {
        return Err(Error::RobustFailure(format!(
            "{n} measurements below the minimal set {min_set}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_count = 0usize;
    let mut best_mask: Vec<bool> = vec![];
    let mut needed = max_iters;
    let mut it = 0usize;
    let mut idx: Vec<usize> = (0..n).collect();
    while it < needed.min(max_iters) {
        it += 1;
        // Partial Fisher-Yates for a uniform subset.
        for s in 0..min_set {
            let t = s + (rng.gen::<u64>() as usize) % (n - s);
            idx.swap(s, t);
        }
        let subset: Vec<usize> = idx[..min_set].to_vec();
        let Ok(est) = problem.solve_minimal(&subset) else {
            continue;
        };
        let res = problem.residuals(&est);
        let mask: Vec<bool> = res.iter().map(|&r| r <= cfg.beta).collect();
        let count = mask.iter().filter(|&&b| b).count();
        if count > best_count {
            best_count = count;
            best_mask = mask;
            // Adaptive iteration bound at 99.9% confidence.
            let ratio = count as f64 / n as f64;
            let p_all = ratio.powi(min_set as i32).clamp(1e-12, 1.0 - 1e-12);
            needed = ((1.0f64 - 0.999).ln() / (1.0 - p_all).ln()).ceil() as usize;
        }
    }
    if best_count < min_set {
        return Err(Error::RobustFailure(format!(
            "no hypothesis reached {min_set} inliers"
        )));
    }
    let weights: Vec<f64> = best_mask
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let mut fin = problem.solve_full(&weights)?;
    fin.weights = weights;
    Ok(fin)
}

/// 3D consensus problem with the certifiable solver on minimal subsets.
pub struct Ransac3d<'a> {
    pub lib: &'a ShapeLibrary,
    pub meas: &'a Keypoints3D,
    pub lambda: f64,
}

impl RansacProblem for Ransac3d<'_> {
    fn num_measurements(&self) -> usize {
        self.meas.len()
    }

    fn solve_minimal(&self, subset: &[usize]) -> Result<EstimationResult> {
        let lib = subset_library(self.lib, subset);
        let pts: Vec<Vector3<f64>> = subset.iter().map(|&i| self.meas.points[i]).collect();
        let w: Vec<f64> = subset.iter().map(|&i| self.meas.weights[i]).collect();
        let meas = Keypoints3D::new(pts, w)?;
        crate::pace3d::pace3d_star(&lib, &meas, self.lambda)
    }

    fn solve_full(&self, weights: &[f64]) -> Result<EstimationResult> {
        Solver3d {
            lib: self.lib,
            meas: self.meas,
            lambda: self.lambda,
        }
        .solve(weights)
    }

    fn residuals(&self, est: &EstimationResult) -> Vec<f64> {
        Solver3d {
            lib: self.lib,
            meas: self.meas,
            lambda: self.lambda,
        }
        .residuals(est)
    }
}

/// 2D consensus problem with a mean-shape perspective solver on minimal
/// subsets (pose only, shape fixed to the library mean).
pub struct RansacMsPnp<'a> {
    pub lib: &'a ShapeLibrary,
    pub meas: &'a Keypoints2D,
    pub lambda: f64,
}

impl RansacProblem for RansacMsPnp<'_> {
    fn num_measurements(&self) -> usize {
        self.meas.len()
    }

    fn solve_minimal(&self, subset: &[usize]) -> Result<EstimationResult> {
        let mean = self.lib.mean_shape();
        let mean_lib = ShapeLibrary::new(vec![subset.iter().map(|&i| mean[i]).collect()])?;
        let pts: Vec<nalgebra::Vector2<f64>> =
            subset.iter().map(|&i| self.meas.pixels[i]).collect();
        let meas = Keypoints2D::uniform(pts)?;
        mean_shape_pnp(&mean_lib, &meas, self.lambda)
    }

    fn solve_full(&self, weights: &[f64]) -> Result<EstimationResult> {
        let mean = self.lib.mean_shape();
        let mean_lib = ShapeLibrary::new(vec![mean])?;
        let eff: Vec<f64> = self
            .meas
            .weights
            .iter()
            .zip(weights)
            .map(|(a, b)| a * b)
            .collect();
        let meas = Keypoints2D::new(self.meas.pixels.clone(), eff)?;
        let mut res = mean_shape_pnp(&mean_lib, &meas, self.lambda)?;
        res.weights = weights.to_vec();
        Ok(res)
    }

    fn residuals(&self, est: &EstimationResult) -> Vec<f64> {
        let mean = self.lib.mean_shape();
        let mean_lib = ShapeLibrary::new(vec![mean]).expect("mean shape");
        let est1 = EstimationResult {
            coeffs: ShapeCoeffs::from_vec_unchecked(vec![1.0]),
            ..est.clone()
        };
        reprojection_residuals(&mean_lib, self.meas, &est1)
    }
}

/// Least-squares perspective pose on a single-model library: multi-start
/// damped refinement of the geometric cost seeded from the algebraic
/// closed-form translation.
pub fn mean_shape_pnp(
    lib: &ShapeLibrary,
    meas: &Keypoints2D,
    lambda: f64,
) -> Result<EstimationResult> {
    let bd = build_bearing_data(meas)?;
    let c1 = ShapeCoeffs::from_vec_unchecked(vec![1.0]);
    let mut best: Option<EstimationResult> = None;
    let seeds = rotation_seeds();
    for r0 in seeds {
        let t0 = closed_form_translation_2d(&r0, &c1, &bd, lib);
        let init = EstimationResult {
            pose: Pose {
                rotation: r0,
                translation: t0,
            },
            coeffs: c1.clone(),
            gap: f64::INFINITY,
            cost: f64::INFINITY,
            weights: vec![1.0; meas.len()],
            status: SolveStatus::Rounded,
        };
        let refined = refine_reprojection(&init, lib, meas, lambda, &vec![1.0; meas.len()])?;
        if best.as_ref().map_or(true, |b| refined.cost < b.cost) {
            best = Some(refined);
        }
    }
    best.ok_or_else(|| Error::RobustFailure("no PnP seed converged".into()))
}

/// Identity plus quarter- and half-turns about each axis.
fn rotation_seeds() -> Vec<Rotation> {
    let mut seeds = vec![Rotation::identity()];
    for axis in 0..3 {
        for &angle in &[
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::PI,
            -std::f64::consts::FRAC_PI_2,
        ] {
            let mut v = Vector3::zeros();
            v[axis] = angle;
            let rot = nalgebra::Rotation3::new(v);
            seeds.push(Rotation::from_matrix_unchecked(*rot.matrix()));
        }
    }
    seeds
}

fn subset_library(lib: &ShapeLibrary, subset: &[usize]) -> ShapeLibrary {
    ShapeLibrary::new(
        lib.models()
            .iter()
            .map(|m| subset.iter().map(|&i| m[i]).collect())
            .collect(),
    )
    .expect("subset library")
}

/// Alternation baseline: closed-form shape update and an SVD attitude solve,
/// iterated from the identity until the cost settles. No optimality
/// guarantee.
pub fn altern(
    lib: &ShapeLibrary,
    meas: &Keypoints3D,
    lambda: f64,
    max_iters: usize,
) -> Result<EstimationResult> {
    let cd = center_data(lib, meas)?;
    let scf = ShapeClosedForm::new(&cd, lambda)?;
    let qcqp = assemble_rotation_qcqp_with(&cd, &scf, lambda);
    let n = meas.len();

    let mut rot = Rotation::identity();
    let mut coeffs;
    let mut prev_cost = f64::INFINITY;
    let mut iters = 0;
    loop {
        // Shape for the current rotation.
        coeffs = shape_closed_form_with(&cd, &scf, &rot);
        // Rotation via the orthogonal Procrustes solve of
        // min_R sum_i || ybar_i - R sbar_i ||^2.
        let mut h = Matrix3::zeros();
        for i in 0..n {
            let mut sbar = Vector3::zeros();
            for (k, &ck) in coeffs.as_slice().iter().enumerate() {
                sbar += ck
                    * Vector3::new(
                        cd.bbar[(3 * i, k)],
                        cd.bbar[(3 * i + 1, k)],
                        cd.bbar[(3 * i + 2, k)],
                    );
            }
            h += sbar * cd.ybar[i].transpose();
        }
        let svd = h.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let d = (vt.transpose() * u.transpose()).determinant();
        let r = vt.transpose()
            * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum()))
            * u.transpose();
        rot = Rotation::from_matrix_unchecked(r);

        let cost = qcqp_cost(&qcqp, &rot);
        iters += 1;
        if (prev_cost - cost).abs() < 1e-12 || iters >= max_iters {
            break;
        }
        prev_cost = cost;
    }
    coeffs = shape_closed_form_with(&cd, &scf, &rot);
    let t = optimal_translation(&cd, &rot, &coeffs);
    let pose = Pose {
        rotation: rot,
        translation: t,
    };
    let cost = cost_3d3d(lib, meas, &pose, &coeffs, lambda);
    Ok(EstimationResult {
        pose,
        coeffs,
        gap: f64::INFINITY,
        cost,
        weights: vec![1.0; n],
        status: SolveStatus::Rounded,
    })
}

/// Input selector for the combined pipeline.
pub enum SharpProblem<'a> {
    ThreeD {
        lib: &'a ShapeLibrary,
        meas: &'a Keypoints3D,
    },
    TwoD {
        lib: &'a ShapeLibrary,
        meas: &'a Keypoints2D,
        dicts: &'a [WindingDictionary],
    },
}

/// Output of the combined pipeline: the robust estimate plus the index set
/// surviving the graph-theoretic pruning. `estimate.weights` has full input
/// length; pruned measurements carry weight zero.
#[derive(Debug, Clone)]
pub struct SharpResult {
    pub estimate: EstimationResult,
    pub survivors: Vec<usize>,
}

/// Two-stage robust pipeline: graph-theoretic pruning followed by graduated
/// non-convexity around the corresponding certifiably optimal solver (the 2D
/// inner solves include the geometric local refinement).
pub fn pace_sharp(
    problem: SharpProblem<'_>,
    cfg: &RobustConfig,
    lambda: f64,
) -> Result<SharpResult> {
    cfg.validate()?;
    match problem {
        SharpProblem::ThreeD { lib, meas } => {
            let bounds = compute_pair_bounds(lib)?;
            let rr = robin(
                Measurements::ThreeD(&meas.points),
                Invariant::Pair3D {
                    bounds: &bounds,
                    beta: cfg.beta,
                },
            )?;
            if rr.survivors.len() < 3 {
                return Err(Error::RobustFailure(format!(
                    "{} survivors after pruning, need 3",
                    rr.survivors.len()
                )));
            }
            let sub_lib = subset_library(lib, &rr.survivors);
            let pts: Vec<Vector3<f64>> = rr.survivors.iter().map(|&i| meas.points[i]).collect();
            let w: Vec<f64> = rr.survivors.iter().map(|&i| meas.weights[i]).collect();
            let sub_meas = Keypoints3D::new(pts, w)?;
            let solver = Solver3d {
                lib: &sub_lib,
                meas: &sub_meas,
                lambda,
            };
            let est = gnc_tls(&solver, cfg)?;
            Ok(expand_weights(est, &rr.survivors, meas.len()))
        }
        SharpProblem::TwoD { lib, meas, dicts } => {
            let rr = robin(
                Measurements::TwoD(&meas.pixels),
                Invariant::Triplet2D { dicts },
            )?;
            if rr.survivors.len() < 4 {
                return Err(Error::RobustFailure(format!(
                    "{} survivors after pruning, need 4",
                    rr.survivors.len()
                )));
            }
            let sub_lib = subset_library(lib, &rr.survivors);
            let px: Vec<nalgebra::Vector2<f64>> =
                rr.survivors.iter().map(|&i| meas.pixels[i]).collect();
            let w: Vec<f64> = rr.survivors.iter().map(|&i| meas.weights[i]).collect();
            let sub_meas = Keypoints2D::new(px, w)?;
            let solver = Solver2d {
                lib: &sub_lib,
                meas: &sub_meas,
                lambda,
                refine: true,
            };
            let est = gnc_tls(&solver, cfg)?;
            Ok(expand_weights(est, &rr.survivors, meas.len()))
        }
    }
}

fn expand_weights(mut est: EstimationResult, survivors: &[usize], n: usize) -> SharpResult {
    let mut full = vec![0.0; n];
    for (slot, &i) in survivors.iter().enumerate() {
        full[i] = est.weights[slot];
    }
    est.weights = full;
    SharpResult {
        estimate: est,
        survivors: survivors.to_vec(),
    }
}
