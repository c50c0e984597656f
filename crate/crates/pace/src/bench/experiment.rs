//! Experiment sweeps over synthetic instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::{derive_seed, gen_synthetic_2d, gen_synthetic_3d, SynthConfig2D, SynthConfig3D};
use crate::core::{errors, EstimationResult, SolveStatus};
use crate::gnc::{
    altern, gnc_tls, irls, mean_shape_pnp, pace_sharp, ransac, IrlsLoss, Ransac3d, RansacMsPnp,
    RobustConfig, RobustScheme, SharpProblem, Solver2d, Solver3d,
};
use crate::robin::{build_winding_dictionary_lp, compute_pair_bounds, robin, Invariant, Measurements};
use crate::{Error, Result};

/// 3D method tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method3D {
    Pace3dStar,
    Altern,
    GncPace3dStar,
    IrlsGm,
    IrlsTls,
    RansacPace3dStar,
    CliquePace3dStar,
    Pace3dSharp,
}

impl Method3D {
    pub fn tag(&self) -> &'static str {
        match self {
            Method3D::Pace3dStar => "pace3d-star",
            Method3D::Altern => "altern",
            Method3D::GncPace3dStar => "gnc-pace3d-star",
            Method3D::IrlsGm => "irls-gm",
            Method3D::IrlsTls => "irls-tls",
            Method3D::RansacPace3dStar => "ransac-pace3d-star",
            Method3D::CliquePace3dStar => "clique-pace3d-star",
            Method3D::Pace3dSharp => "pace3d-sharp",
        }
    }
}

/// 2D method tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method2D {
    Pace2dStar,
    GncPace2dStar,
    CliquePace2dStar,
    Pace2dSharp,
    MsPnp,
    RansacMsPnp,
}

impl Method2D {
    pub fn tag(&self) -> &'static str {
        match self {
            Method2D::Pace2dStar => "pace2d-star",
            Method2D::GncPace2dStar => "gnc-pace2d-star",
            Method2D::CliquePace2dStar => "clique-pace2d-star",
            Method2D::Pace2dSharp => "pace2d-sharp",
            Method2D::MsPnp => "ms-pnp",
            Method2D::RansacMsPnp => "ransac-ms-pnp",
        }
    }
}

/// 3D sweep: the cartesian product of shape counts, noise levels and
/// outlier rates, for every listed method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid3D {
    pub n: usize,
    pub k: Vec<usize>,
    pub sigma: Vec<f64>,
    pub outlier_rate: Vec<f64>,
    #[serde(default)]
    pub r: f64,
    /// Regularization; absent means `sqrt(K/N)`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub methods: Vec<Method3D>,
}

/// 2D sweep over octahedral libraries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid2D {
    pub n: usize,
    pub k: Vec<usize>,
    pub sigma: Vec<f64>,
    pub outlier_rate: Vec<f64>,
    #[serde(default = "default_camera_radius")]
    pub camera_radius: f64,
    #[serde(default = "default_lambda_2d")]
    pub lambda: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub methods: Vec<Method2D>,
}

fn default_beta() -> f64 {
    0.05
}
fn default_camera_radius() -> f64 {
    3.0
}
fn default_lambda_2d() -> f64 {
    0.01
}

/// One row of the results table.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub method: String,
    pub problem: &'static str,
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub outlier_rate: f64,
    pub r: f64,
    pub camera_radius: f64,
    pub lambda: f64,
    pub beta: f64,
    pub seed: u64,
    pub trial: usize,
    pub rot_err_deg: Option<f64>,
    pub trans_err: Option<f64>,
    pub shape_err: Option<f64>,
    pub gap: Option<f64>,
    pub runtime_s: f64,
    pub clique_inlier_rate: Option<f64>,
    pub status: &'static str,
}

/// Fixed CSV column order.
pub const CSV_HEADER: &str = "method,problem,n,k,sigma,outlier_rate,r,camera_radius,lambda,beta,seed,trial,rot_err_deg,trans_err,shape_err,gap,runtime_s,clique_inlier_rate,status";

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

/// Serializes records with full double precision (shortest round-trip
/// formatting); byte-identical for identical inputs.
pub fn write_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.problem,
            r.n,
            r.k,
            r.sigma,
            r.outlier_rate,
            r.r,
            r.camera_radius,
            r.lambda,
            r.beta,
            r.seed,
            r.trial,
            fmt_opt(r.rot_err_deg),
            fmt_opt(r.trans_err),
            fmt_opt(r.shape_err),
            fmt_opt(r.gap),
            r.runtime_s,
            fmt_opt(r.clique_inlier_rate),
            r.status,
        ));
    }
    out
}

/// Median-rotation-error series per method against the swept outlier rate
/// (or shape count when only one rate is present), as plot-ready JSON.
pub fn write_plot_data(records: &[TrialRecord]) -> String {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let sweep_rates = records
        .iter()
        .map(|r| r.outlier_rate.to_bits())
        .collect::<std::collections::BTreeSet<_>>()
        .len()
        > 1;
    for r in records {
        let x = if sweep_rates {
            format!("{}", r.outlier_rate)
        } else {
            format!("{}", r.k)
        };
        if let Some(e) = r.rot_err_deg {
            groups.entry((r.method.clone(), x)).or_default().push(e);
        }
    }
    let mut series: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for ((method, x), mut errs) in groups {
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = errs[errs.len() / 2];
        series.entry(method).or_default().push((x, median));
    }
    let mut out = serde_json::Map::new();
    out.insert(
        "x_axis".into(),
        serde_json::Value::String(if sweep_rates {
            "outlier_rate".into()
        } else {
            "k".into()
        }),
    );
    let mut arr = Vec::new();
    for (method, points) in series {
        let xs: Vec<serde_json::Value> = points
            .iter()
            .map(|(x, _)| serde_json::Value::String(x.clone()))
            .collect();
        let ys: Vec<serde_json::Value> = points
            .iter()
            .map(|(_, y)| serde_json::json!(y))
            .collect();
        arr.push(serde_json::json!({
            "method": method,
            "x": xs,
            "median_rot_err_deg": ys,
        }));
    }
    out.insert("series".into(), serde_json::Value::Array(arr));
    serde_json::to_string_pretty(&serde_json::Value::Object(out)).unwrap()
}

struct Outcome {
    est: Option<EstimationResult>,
    clique_inlier_rate: Option<f64>,
}

fn run_method_3d(
    method: Method3D,
    inst: &super::synth::Synth3D,
    lambda: f64,
    beta: f64,
    seed: u64,
) -> Result<Outcome> {
    let lib = &inst.lib;
    let meas = &inst.meas;
    let cir = |survivors: &[usize]| {
        if survivors.is_empty() {
            None
        } else {
            let good = survivors.iter().filter(|&&i| inst.inlier_mask[i]).count();
            Some(good as f64 / survivors.len() as f64)
        }
    };
    match method {
        Method3D::Pace3dStar => Ok(Outcome {
            est: Some(crate::pace3d::pace3d_star(lib, meas, lambda)?),
            clique_inlier_rate: None,
        }),
        Method3D::Altern => Ok(Outcome {
            est: Some(altern(lib, meas, lambda, 1000)?),
            clique_inlier_rate: None,
        }),
        Method3D::GncPace3dStar => {
            let solver = Solver3d { lib, meas, lambda };
            Ok(Outcome {
                est: Some(gnc_tls(&solver, &RobustConfig::new(beta, RobustScheme::GncTls))?),
                clique_inlier_rate: None,
            })
        }
        Method3D::IrlsGm | Method3D::IrlsTls => {
            let solver = Solver3d { lib, meas, lambda };
            let loss = if method == Method3D::IrlsGm {
                IrlsLoss::GemanMcClure
            } else {
                IrlsLoss::TruncatedLs
            };
            Ok(Outcome {
                est: Some(irls(
                    &solver,
                    loss,
                    &RobustConfig::new(beta, RobustScheme::IrlsGm),
                )?),
                clique_inlier_rate: None,
            })
        }
        Method3D::RansacPace3dStar => {
            let problem = Ransac3d { lib, meas, lambda };
            Ok(Outcome {
                est: Some(ransac(
                    &problem,
                    &RobustConfig::new(beta, RobustScheme::Ransac),
                    5,
                    5000,
                    seed,
                )?),
                clique_inlier_rate: None,
            })
        }
        Method3D::CliquePace3dStar => {
            let bounds = compute_pair_bounds(lib)?;
            let rr = robin(
                Measurements::ThreeD(&meas.points),
                Invariant::Pair3D {
                    bounds: &bounds,
                    beta,
                },
            )?;
            if rr.survivors.len() < 3 {
                return Err(Error::RobustFailure("clique too small".into()));
            }
            let sub_lib = crate::core::ShapeLibrary::new(
                lib.models()
                    .iter()
                    .map(|m| rr.survivors.iter().map(|&i| m[i]).collect())
                    .collect(),
            )?;
            let sub = crate::core::Keypoints3D::new(
                rr.survivors.iter().map(|&i| meas.points[i]).collect(),
                rr.survivors.iter().map(|&i| meas.weights[i]).collect(),
            )?;
            let est = crate::pace3d::pace3d_star(&sub_lib, &sub, lambda)?;
            Ok(Outcome {
                clique_inlier_rate: cir(&rr.survivors),
                est: Some(est),
            })
        }
        Method3D::Pace3dSharp => {
            let sharp = pace_sharp(
                SharpProblem::ThreeD { lib, meas },
                &RobustConfig::new(beta, RobustScheme::GncTls),
                lambda,
            )?;
            Ok(Outcome {
                clique_inlier_rate: cir(&sharp.survivors),
                est: Some(sharp.estimate),
            })
        }
    }
}

fn run_method_2d(
    method: Method2D,
    inst: &super::synth::Synth2D,
    lambda: f64,
    beta: f64,
    seed: u64,
) -> Result<Outcome> {
    let lib = &inst.lib;
    let meas = &inst.meas;
    let cir = |survivors: &[usize]| {
        if survivors.is_empty() {
            None
        } else {
            let good = survivors.iter().filter(|&&i| inst.inlier_mask[i]).count();
            Some(good as f64 / survivors.len() as f64)
        }
    };
    let dicts = || -> Result<Vec<crate::robin::WindingDictionary>> {
        inst.models
            .iter()
            .zip(lib.models())
            .map(|(m, pts)| build_winding_dictionary_lp(m, pts))
            .collect()
    };
    match method {
        Method2D::Pace2dStar => Ok(Outcome {
            est: Some(crate::pace2d::pace2d_star(lib, meas, lambda)?),
            clique_inlier_rate: None,
        }),
        Method2D::GncPace2dStar => {
            let solver = Solver2d {
                lib,
                meas,
                lambda,
                refine: true,
            };
            Ok(Outcome {
                est: Some(gnc_tls(&solver, &RobustConfig::new(beta, RobustScheme::GncTls))?),
                clique_inlier_rate: None,
            })
        }
        Method2D::CliquePace2dStar => {
            let d = dicts()?;
            let rr = robin(
                Measurements::TwoD(&meas.pixels),
                Invariant::Triplet2D { dicts: &d },
            )?;
            if rr.survivors.len() < 4 {
                return Err(Error::RobustFailure("clique too small".into()));
            }
            let sub_lib = crate::core::ShapeLibrary::new(
                lib.models()
                    .iter()
                    .map(|m| rr.survivors.iter().map(|&i| m[i]).collect())
                    .collect(),
            )?;
            let sub = crate::core::Keypoints2D::new(
                rr.survivors.iter().map(|&i| meas.pixels[i]).collect(),
                rr.survivors.iter().map(|&i| meas.weights[i]).collect(),
            )?;
            let est = crate::pace2d::pace2d_star(&sub_lib, &sub, lambda)?;
            Ok(Outcome {
                clique_inlier_rate: cir(&rr.survivors),
                est: Some(est),
            })
        }
        Method2D::Pace2dSharp => {
            let d = dicts()?;
            let sharp = pace_sharp(
                SharpProblem::TwoD {
                    lib,
                    meas,
                    dicts: &d,
                },
                &RobustConfig::new(beta, RobustScheme::GncTls),
                lambda,
            )?;
            Ok(Outcome {
                clique_inlier_rate: cir(&sharp.survivors),
                est: Some(sharp.estimate),
            })
        }
        Method2D::MsPnp => {
            let mean_lib = crate::core::ShapeLibrary::new(vec![lib.mean_shape()])?;
            let mut est = mean_shape_pnp(&mean_lib, meas, lambda)?;
            // Report against the K-dim truth: keep a length-K coefficient
            // vector with the mean-shape interpretation.
            let k = lib.num_models();
            est.coeffs =
                crate::core::ShapeCoeffs::from_vec_unchecked(vec![1.0 / k as f64; k]);
            Ok(Outcome {
                est: Some(est),
                clique_inlier_rate: None,
            })
        }
        Method2D::RansacMsPnp => {
            let problem = RansacMsPnp { lib, meas, lambda };
            let mut est = ransac(
                &problem,
                &RobustConfig::new(beta, RobustScheme::Ransac),
                4,
                1000,
                seed,
            )?;
            let k = lib.num_models();
            est.coeffs =
                crate::core::ShapeCoeffs::from_vec_unchecked(vec![1.0 / k as f64; k]);
            Ok(Outcome {
                est: Some(est),
                clique_inlier_rate: None,
            })
        }
    }
}

/// Executes every (cell, method, trial) combination of a 3D sweep. Cells
/// run in parallel with per-cell seeds derived from the base seed; the
/// output order is deterministic.
pub fn run_experiment_3d(
    grid: &Grid3D,
    trials: usize,
    base_seed: u64,
    redact_timing: bool,
) -> Vec<TrialRecord> {
    let mut cells = Vec::new();
    for &k in &grid.k {
        for &sigma in &grid.sigma {
            for &outlier_rate in &grid.outlier_rate {
                for &method in &grid.methods {
                    cells.push((k, sigma, outlier_rate, method));
                }
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..trials).map(move |t| (c, t)))
        .collect();
    jobs.par_iter()
        .map(|&(ci, trial)| {
            let (k, sigma, outlier_rate, method) = cells[ci];
            let lambda = grid.lambda.unwrap_or((k as f64 / grid.n as f64).sqrt());
            let seed = derive_seed(base_seed, ci as u64, trial as u64);
            let cfg = SynthConfig3D {
                n: grid.n,
                k,
                sigma,
                outlier_rate,
                r: grid.r,
                seed,
            };
            let start = std::time::Instant::now();
            let outcome = gen_synthetic_3d(&cfg).and_then(|inst| {
                run_method_3d(method, &inst, lambda, grid.beta, seed).map(|o| (inst, o))
            });
            let runtime = if redact_timing {
                0.0
            } else {
                start.elapsed().as_secs_f64()
            };
            let mut rec = TrialRecord {
                method: method.tag().to_string(),
                problem: "3d",
                n: grid.n,
                k,
                sigma,
                outlier_rate,
                r: grid.r,
                camera_radius: 0.0,
                lambda,
                beta: grid.beta,
                seed,
                trial,
                rot_err_deg: None,
                trans_err: None,
                shape_err: None,
                gap: None,
                runtime_s: runtime,
                clique_inlier_rate: None,
                status: "failed",
            };
            if let Ok((inst, out)) = outcome {
                rec.clique_inlier_rate = out.clique_inlier_rate;
                if let Some(est) = out.est {
                    let (re, te, se) = errors(
                        &est.pose,
                        &est.coeffs,
                        &inst.truth_pose,
                        &inst.truth_coeffs,
                    );
                    rec.rot_err_deg = Some(re);
                    rec.trans_err = Some(te);
                    rec.shape_err = Some(se);
                    rec.gap = est.gap.is_finite().then_some(est.gap);
                    rec.status = status_tag(est.status);
                }
            }
            rec
        })
        .collect()
}

/// Executes every (cell, method, trial) combination of a 2D sweep.
pub fn run_experiment_2d(
    grid: &Grid2D,
    trials: usize,
    base_seed: u64,
    redact_timing: bool,
) -> Vec<TrialRecord> {
    let mut cells = Vec::new();
    for &k in &grid.k {
        for &sigma in &grid.sigma {
            for &outlier_rate in &grid.outlier_rate {
                for &method in &grid.methods {
                    cells.push((k, sigma, outlier_rate, method));
                }
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..trials).map(move |t| (c, t)))
        .collect();
    jobs.par_iter()
        .map(|&(ci, trial)| {
            let (k, sigma, outlier_rate, method) = cells[ci];
            let seed = derive_seed(base_seed, ci as u64, trial as u64);
            let cfg = SynthConfig2D {
                n: grid.n,
                k,
                sigma,
                outlier_rate,
                camera_radius: grid.camera_radius,
                seed,
            };
            let start = std::time::Instant::now();
            let outcome = gen_synthetic_2d(&cfg).and_then(|inst| {
                run_method_2d(method, &inst, grid.lambda, grid.beta, seed).map(|o| (inst, o))
            });
            let runtime = if redact_timing {
                0.0
            } else {
                start.elapsed().as_secs_f64()
            };
            let mut rec = TrialRecord {
                method: method.tag().to_string(),
                problem: "2d",
                n: grid.n,
                k,
                sigma,
                outlier_rate,
                r: 0.0,
                camera_radius: grid.camera_radius,
                lambda: grid.lambda,
                beta: grid.beta,
                seed,
                trial,
                rot_err_deg: None,
                trans_err: None,
                shape_err: None,
                gap: None,
                runtime_s: runtime,
                clique_inlier_rate: None,
                status: "failed",
            };
            if let Ok((inst, out)) = outcome {
                rec.clique_inlier_rate = out.clique_inlier_rate;
                if let Some(est) = out.est {
                    let (re, te, se) = errors(
                        &est.pose,
                        &est.coeffs,
                        &inst.truth_pose,
                        &inst.truth_coeffs,
                    );
                    rec.rot_err_deg = Some(re);
                    rec.trans_err = Some(te);
                    rec.shape_err = Some(se);
                    rec.gap = est.gap.is_finite().then_some(est.gap);
                    rec.status = status_tag(est.status);
                }
            }
            rec
        })
        .collect()
}

fn status_tag(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::CertifiedOptimal => "certified-optimal",
        SolveStatus::Rounded => "rounded",
        SolveStatus::Failed => "failed",
    }
}
