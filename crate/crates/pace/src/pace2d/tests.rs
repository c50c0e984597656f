use super::*;
use crate::core::Keypoints2D;
use approx::assert_relative_eq;
use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        gaussian(rng),
        gaussian(rng),
        gaussian(rng),
        gaussian(rng),
    ));
    Rotation::new(*q.to_rotation_matrix().matrix()).unwrap()
}

fn look_at_origin(o: &Vector3<f64>) -> (Rotation, Vector3<f64>) {
    let f = (-o).normalize();
    let up = if f.y.abs() > 0.99 {
        Vector3::new(1.0, 0.0, 0.0)
    } else {
        Vector3::new(0.0, 1.0, 0.0)
    };
    let r = up.cross(&f).normalize();
    let d = f.cross(&r);
    let rot = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
    let rot = Rotation::new(rot).unwrap();
    let t = -rot.apply(o);
    (rot, t)
}

struct Instance2D {
    lib: ShapeLibrary,
    meas: Keypoints2D,
    rot: Rotation,
    t: Vector3<f64>,
    c: Vec<f64>,
}

fn make_instance_2d(rng: &mut ChaCha8Rng, n: usize, k: usize, sigma: f64) -> Instance2D {
    loop {
        let lib = ShapeLibrary::new(
            (0..k)
                .map(|_| {
                    (0..n)
                        .map(|_| Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng)))
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let mut c: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let s: f64 = c.iter().sum();
        c.iter_mut().for_each(|x| *x /= s);
        // Camera on the radius-3 sphere looking at the origin.
        let dir = Vector3::new(gaussian(rng), gaussian(rng), gaussian(rng)).normalize();
        let o = 3.0 * dir;
        let (rot, t) = look_at_origin(&o);
        let mut pixels = Vec::with_capacity(n);
        let mut ok = true;
        for i in 0..n {
            let q = rot.apply(&lib.blend(&c, i)) + t;
            if q.z < 0.3 {
                ok = false;
                break;
            }
            pixels.push(Vector2::new(
                q.x / q.z + sigma * gaussian(rng),
                q.y / q.z + sigma * gaussian(rng),
            ));
        }
        if !ok {
            continue;
        }
        return Instance2D {
            lib,
            meas: Keypoints2D::uniform(pixels).unwrap(),
            rot,
            t,
            c,
        };
    }
}

#[test]
fn bearing_projectors_sum_to_identity() {
    let meas = Keypoints2D::new(
        vec![
            Vector2::new(0.1, 0.0),
            Vector2::new(-0.2, 0.3),
            Vector2::new(0.0, -0.4),
            Vector2::new(0.5, 0.5),
        ],
        vec![1.0, 2.0, 0.5, 1.5],
    )
    .unwrap();
    let bd = build_bearing_data(&meas).unwrap();
    let sum: Matrix3<f64> = bd.wtilde.iter().sum();
    assert!((sum - Matrix3::identity()).norm() < 1e-12);
}

#[test]
fn bearing_degenerate_when_parallel() {
    let meas = Keypoints2D::uniform(vec![Vector2::new(0.2, 0.1); 5]).unwrap();
    assert!(matches!(
        build_bearing_data(&meas),
        Err(Error::DegenerateBearings)
    ));
}

#[test]
fn point_to_line_matches_geometric_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let meas = Keypoints2D::uniform(
        (0..5)
            .map(|_| Vector2::new(gaussian(&mut rng) * 0.3, gaussian(&mut rng) * 0.3))
            .collect(),
    )
    .unwrap();
    let bd = build_bearing_data(&meas).unwrap();
    for i in 0..5 {
        for _ in 0..20 {
            let p = Vector3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng));
            let quad = (p.transpose() * bd.w_mats[i] * p)[(0, 0)];
            // Geometric squared distance from p to the bearing ray.
            let v = bd.bearings[i];
            let d2 = (p - v.dot(&p) * v).norm_squared();
            assert_relative_eq!(quad, d2, epsilon = 1e-10, max_relative = 1e-10);
        }
    }
}

#[test]
fn translation_exact_on_noiseless() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = make_instance_2d(&mut rng, 8, 2, 0.0);
    let bd = build_bearing_data(&inst.meas).unwrap();
    let c = ShapeCoeffs::new_affine(inst.c.clone()).unwrap();
    let t = closed_form_translation_2d(&inst.rot, &c, &bd, &inst.lib);
    assert!((t - inst.t).norm() < 1e-8, "t error {}", (t - inst.t).norm());
}

#[test]
fn translation_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inst = make_instance_2d(&mut rng, 6, 2, 0.05);
    let bd = build_bearing_data(&inst.meas).unwrap();
    let r = random_rotation(&mut rng);
    let c = ShapeCoeffs::new_affine(vec![0.4, 0.6]).unwrap();
    let t = closed_form_translation_2d(&r, &c, &bd, &inst.lib);
    // Independent normal-equation solve: W t = -sum_i W_i R s_i.
    let mut rhs = Vector3::zeros();
    for i in 0..6 {
        rhs -= bd.w_mats[i] * r.apply(&inst.lib.blend(c.as_slice(), i));
    }
    let oracle = bd.w_sum.lu().solve(&rhs).unwrap();
    assert!((t - oracle).norm() < 1e-10);
}

#[test]
fn translation_gradient_vanishes_fd() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = make_instance_2d(&mut rng, 7, 3, 0.02);
    let bd = build_bearing_data(&inst.meas).unwrap();
    let r = random_rotation(&mut rng);
    let c = ShapeCoeffs::new_affine(vec![0.2, 0.5, 0.3]).unwrap();
    let t = closed_form_translation_2d(&r, &c, &bd, &inst.lib);
    let cost = |tv: &Vector3<f64>| {
        cost_point_to_line(
            &inst.lib,
            &bd,
            &Pose {
                rotation: r,
                translation: *tv,
            },
            &c,
            0.0,
        )
    };
    let h = 1e-6;
    for d in 0..3 {
        let mut tp = t;
        let mut tm = t;
        tp[d] += h;
        tm[d] -= h;
        let g = (cost(&tp) - cost(&tm)) / (2.0 * h);
        assert!(g.abs() < 1e-5, "gradient component {d} = {g}");
    }
}

#[test]
fn pop_lambda_only_term() {
    // All-zero projectors leave just the regularizer.
    let bd = BearingData {
        bearings: vec![Vector3::z(); 4],
        w_mats: vec![Matrix3::zeros(); 4],
        w_sum: Matrix3::identity(),
        wtilde: vec![Matrix3::zeros(); 4],
    };
    let lib = ShapeLibrary::new(vec![vec![Vector3::x(); 4], vec![Vector3::y(); 4]]).unwrap();
    let pop = build_pop(&lib, &bd, 0.7).unwrap();
    assert_eq!(pop.objective.degree(), 2);
    let x = pack_x(&Matrix3::identity(), &[0.3, 0.7]);
    assert_relative_eq!(
        pop.objective.eval(&x),
        0.7 * (0.09 + 0.49),
        epsilon = 1e-12
    );
}

#[test]
fn pop_k1_quadratic_in_rotation_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inst = make_instance_2d(&mut rng, 5, 1, 0.01);
    let bd = build_bearing_data(&inst.meas).unwrap();
    let pop = build_pop(&inst.lib, &bd, 0.0).unwrap();
    // Every term is r_a r_b c^2: with c = 1 fixed by the constraint the
    // objective is a quadratic in vec(R).
    for m in pop.objective.terms.keys() {
        let rdeg: u32 = m[..9].iter().map(|&e| e as u32).sum();
        let cdeg: u32 = m[9..].iter().map(|&e| e as u32).sum();
        assert_eq!(rdeg, 2);
        assert_eq!(cdeg, 2);
    }
}

#[test]
fn pop_matches_direct_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let inst = make_instance_2d(&mut rng, 6, 3, 0.05);
    let bd = build_bearing_data(&inst.meas).unwrap();
    let lambda = 0.03;
    let pop = build_pop(&inst.lib, &bd, lambda).unwrap();
    for _ in 0..100 {
        let r = random_rotation(&mut rng);
        let mut c: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
        let s: f64 = c.iter().sum();
        c.iter_mut().for_each(|x| *x /= s);
        let x = pack_x(r.matrix(), &c);
        let poly_val = pop.objective.eval(&x);
        let direct = cost_translation_free(
            &inst.lib,
            &bd,
            &r,
            &ShapeCoeffs::new_affine(c).unwrap(),
            lambda,
        );
        assert_relative_eq!(poly_val, direct, epsilon = 1e-8, max_relative = 1e-8);
    }
}

#[test]
fn moment_relaxation_sizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let inst = make_instance_2d(&mut rng, 5, 3, 0.01);
    let bd = build_bearing_data(&inst.meas).unwrap();
    let pop = build_pop(&inst.lib, &bd, 0.01).unwrap();
    let relax = build_moment_relaxation(&pop).unwrap();
    assert_eq!(relax.basis.len(), 91); // C(14, 2)
    assert_eq!(relax.sdp.block_sizes.len(), 5); // moment + K+1 localizers
    assert_eq!(relax.sdp.block_sizes[0], 91);
    for b in &relax.sdp.block_sizes[1..] {
        assert_eq!(*b, 13);
    }
}

#[test]
fn moment_relaxation_lift_is_feasible() {
    // The rank-1 lift of any feasible point satisfies every constraint row
    // and reproduces the polynomial objective: the relaxation never cuts
    // feasible points.
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let inst = make_instance_2d(&mut rng, 5, 2, 0.02);
    let bd = build_bearing_data(&inst.meas).unwrap();
    let pop = build_pop(&inst.lib, &bd, 0.05).unwrap();
    let relax = build_moment_relaxation(&pop).unwrap();

    for _ in 0..5 {
        let r = random_rotation(&mut rng);
        let c0: f64 = rng.gen();
        let c = vec![c0, 1.0 - c0];
        let x = pack_x(r.matrix(), &c);

        // z2 = values of the degree-<=2 basis at x; X0 = z2 z2'.
        let z2: Vec<f64> = relax
            .basis
            .iter()
            .map(|m| {
                let mut v = 1.0;
                for (i, &e) in m.iter().enumerate() {
                    for _ in 0..e {
                        v *= x[i];
                    }
                }
                v
            })
            .collect();
        let n0 = z2.len();
        let basis1: Vec<f64> = std::iter::once(1.0).chain(x.iter().cloned()).collect();
        let gs: Vec<f64> = {
            let mut v: Vec<f64> = c.clone();
            v.push(1.0 - c.iter().map(|a| a * a).sum::<f64>());
            v
        };
        let mut blocks: Vec<nalgebra::DMatrix<f64>> = Vec::new();
        blocks.push(nalgebra::DMatrix::from_fn(n0, n0, |a, b| z2[a] * z2[b]));
        for g in &gs {
            let d1 = basis1.len();
            blocks.push(nalgebra::DMatrix::from_fn(d1, d1, |a, b| {
                g * basis1[a] * basis1[b]
            }));
        }

        // Every constraint row of the pinned form holds on the lift.
        for (j, a) in relax.sdp.constraints.iter().enumerate() {
            let mut v = 0.0;
            for (ab, xb) in a.blocks.iter().zip(&blocks) {
                v += sym_inner(ab, xb);
            }
            assert!(
                (v - relax.sdp.rhs[j]).abs() < 1e-8,
                "row {j}: {v} vs {}",
                relax.sdp.rhs[j]
            );
        }
        // Objective matches the polynomial value.
        let mut obj = 0.0;
        for (cb, xb) in relax.sdp.objective.blocks.iter().zip(&blocks) {
            obj += sym_inner(cb, xb);
        }
        assert_relative_eq!(obj, pop.objective.eval(&x), epsilon = 1e-8, max_relative = 1e-8);
    }
}

fn sym_inner(a: &crate::optkernels::SymMat, x: &nalgebra::DMatrix<f64>) -> f64 {
    match a {
        crate::optkernels::SymMat::Zero => 0.0,
        crate::optkernels::SymMat::Sparse(ts) => ts
            .iter()
            .map(|&(i, j, v)| {
                let (i, j) = (i as usize, j as usize);
                if i == j {
                    v * x[(i, i)]
                } else {
                    2.0 * v * x[(i, j)]
                }
            })
            .sum(),
        crate::optkernels::SymMat::Dense(d) => {
            let n = x.nrows();
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += d[i * n + j] * x[(j, i)];
                }
            }
            s
        }
    }
}

#[test]
fn pace2d_star_noiseless_k2_exact() {
    // Negligible regularization: a finite lambda biases the optimum away
    // from the noiseless truth.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let inst = make_instance_2d(&mut rng, 8, 2, 0.0);
    let res = pace2d_star(&inst.lib, &inst.meas, 1e-6).unwrap();
    let truth_pose = Pose {
        rotation: inst.rot,
        translation: inst.t,
    };
    let truth_c = ShapeCoeffs::new_affine(inst.c.clone()).unwrap();
    let (re, te, se) = crate::core::errors(&res.pose, &res.coeffs, &truth_pose, &truth_c);
    assert!(re.to_radians() < 1e-4, "rot err {re} deg");
    assert!(te < 1e-4, "trans err {te}");
    assert!(se < 1e-3, "shape err {se}");
    assert!(res.gap < 1e-8, "eta {}", res.gap);
}

#[test]
fn pace2d_star_k1_beats_rotation_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let inst = make_instance_2d(&mut rng, 8, 1, 0.01);
    let bd = build_bearing_data(&inst.meas).unwrap();
    let lambda = 0.01;
    let res = pace2d_star(&inst.lib, &inst.meas, lambda).unwrap();
    let ours = cost_translation_free(&inst.lib, &bd, &res.pose.rotation, &res.coeffs, lambda);
    let c1 = ShapeCoeffs::new_affine(vec![1.0]).unwrap();
    let mut grid_best = f64::INFINITY;
    for _ in 0..20_000 {
        let r = random_rotation(&mut rng);
        grid_best = grid_best.min(cost_translation_free(&inst.lib, &bd, &r, &c1, lambda));
    }
    assert!(
        ours <= grid_best + 1e-9,
        "solver cost {ours} worse than grid {grid_best}"
    );
}

#[test]
fn moment_matrix_of_solution_is_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let inst = make_instance_2d(&mut rng, 6, 1, 0.01);
    let bd = build_bearing_data(&inst.meas).unwrap();
    let pop = build_pop(&inst.lib, &bd, 0.01).unwrap();
    let tpl = super::moment::template_for(1).unwrap();
    let relax = super::moment::solve_relaxation(&tpl, &pop, 1e-9).unwrap();
    // Cells sharing a monomial agree exactly since the matrix is built from
    // the moment vector.
    for cells in tpl.groups.iter().filter(|g| g.len() > 1) {
        let (a0, b0) = cells[0];
        let v0 = relax.x0[(a0 as usize, b0 as usize)];
        for &(a, b) in &cells[1..] {
            assert_eq!(relax.x0[(a as usize, b as usize)], v0);
        }
    }
    // Weak duality of the relaxation value against the rounded cost.
    let (rot, coeffs, eta) = {
        let res = pace2d_star(&inst.lib, &inst.meas, 0.01).unwrap();
        (res.pose.rotation, res.coeffs.clone(), res.gap)
    };
    let p_hat = cost_translation_free(&inst.lib, &bd, &rot, &coeffs, 0.01);
    assert!(relax.f_lower <= p_hat + 1e-7);
    assert!(relax.f_moment <= p_hat + 1e-8);
    assert!(eta >= 0.0);
}

#[test]
fn refine_stays_at_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let inst = make_instance_2d(&mut rng, 8, 2, 0.0);
    let truth = EstimationResult {
        pose: Pose {
            rotation: inst.rot,
            translation: inst.t,
        },
        coeffs: ShapeCoeffs::new_affine(inst.c.clone()).unwrap(),
        gap: 0.0,
        cost: 0.0,
        weights: vec![1.0; 8],
        status: crate::core::SolveStatus::CertifiedOptimal,
    };
    let w = vec![1.0; 8];
    let refined = refine_reprojection(&truth, &inst.lib, &inst.meas, 0.0, &w).unwrap();
    assert!(refined.pose.rotation.angle_to(&inst.rot) < 1e-9);
    assert!((refined.pose.translation - inst.t).norm() < 1e-9);
}

#[test]
fn refine_recovers_small_perturbation() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let inst = make_instance_2d(&mut rng, 10, 2, 0.0);
    // Perturb the rotation by one degree about a random axis.
    let axis = Vector3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng)).normalize();
    let pert = nalgebra::Rotation3::from_axis_angle(
        &nalgebra::Unit::new_normalize(axis),
        1.0_f64.to_radians(),
    );
    let rot0 = Rotation::new(inst.rot.matrix() * pert.matrix()).unwrap();
    let init = EstimationResult {
        pose: Pose {
            rotation: rot0,
            translation: inst.t + Vector3::new(0.01, -0.02, 0.015),
        },
        coeffs: ShapeCoeffs::new_affine(inst.c.clone()).unwrap(),
        gap: 1.0,
        cost: 0.0,
        weights: vec![1.0; 10],
        status: crate::core::SolveStatus::Rounded,
    };
    let w = vec![1.0; 10];
    let refined = refine_reprojection(&init, &inst.lib, &inst.meas, 0.0, &w).unwrap();
    assert!(
        refined.pose.rotation.angle_to(&inst.rot) < 1e-4,
        "did not converge back: {} rad",
        refined.pose.rotation.angle_to(&inst.rot)
    );
}

#[test]
fn refine_never_increases_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..50 {
        let inst = make_instance_2d(&mut rng, 6, 2, 0.05);
        let r0 = random_rotation(&mut rng);
        let c0 = {
            let a: f64 = rng.gen();
            vec![a, 1.0 - a]
        };
        let init_pose = Pose {
            rotation: r0,
            translation: Vector3::new(0.0, 0.0, 3.0),
        };
        let coeffs = ShapeCoeffs::new_affine(c0).unwrap();
        let w = vec![1.0; 6];
        let init_cost = refine::cost_reprojection(&inst.lib, &inst.meas, &init_pose, &coeffs, 0.01, &w);
        let init = EstimationResult {
            pose: init_pose,
            coeffs,
            gap: 1.0,
            cost: init_cost,
            weights: w.clone(),
            status: crate::core::SolveStatus::Rounded,
        };
        let refined = refine_reprojection(&init, &inst.lib, &inst.meas, 0.01, &w).unwrap();
        if init_cost.is_finite() {
            assert!(refined.cost <= init_cost + 1e-12);
        }
    }
}

#[test]
fn scale_covariance() {
    // Scaling the model and camera distance by s scales the translation by s
    // and leaves rotation and shape unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let inst = make_instance_2d(&mut rng, 8, 2, 0.0);
    // lambda = 0: the regularizer does not scale with the scene and would
    // move the optimum between the two scales.
    let res1 = pace2d_star(&inst.lib, &inst.meas, 0.0).unwrap();

    let s = 2.5;
    let lib2 = ShapeLibrary::new(
        inst.lib
            .models()
            .iter()
            .map(|m| m.iter().map(|p| s * p).collect())
            .collect(),
    )
    .unwrap();
    // Same pixels arise from scaling the whole scene.
    let pixels: Vec<Vector2<f64>> = (0..8)
        .map(|i| {
            let q = inst.rot.apply(&(s * inst.lib.blend(&inst.c, i))) + s * inst.t;
            Vector2::new(q.x / q.z, q.y / q.z)
        })
        .collect();
    let meas2 = Keypoints2D::uniform(pixels).unwrap();
    let res2 = pace2d_star(&lib2, &meas2, 0.0).unwrap();

    assert!(res2.pose.rotation.angle_to(&res1.pose.rotation) < 1e-6);
    for (a, b) in res2.coeffs.as_slice().iter().zip(res1.coeffs.as_slice()) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!((res2.pose.translation - s * res1.pose.translation).norm() < 1e-5 * s);
}

#[test]
fn translation_gradient_at_final_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let inst = make_instance_2d(&mut rng, 7, 2, 0.01);
    let res = pace2d_star(&inst.lib, &inst.meas, 0.01).unwrap();
    let bd = build_bearing_data(&inst.meas).unwrap();
    let cost = |tv: &Vector3<f64>| {
        cost_point_to_line(
            &inst.lib,
            &bd,
            &Pose {
                rotation: res.pose.rotation,
                translation: *tv,
            },
            &res.coeffs,
            0.01,
        )
    };
    let h = 1e-6;
    for d in 0..3 {
        let mut tp = res.pose.translation;
        let mut tm = res.pose.translation;
        tp[d] += h;
        tm[d] -= h;
        let g = (cost(&tp) - cost(&tm)) / (2.0 * h);
        assert!(g.abs() < 1e-5, "gradient {d}: {g}");
    }
}
