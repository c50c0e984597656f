use super::*;
use crate::core::ShapeLibrary;
use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        rng.gen::<f64>() * 2.0 - 1.0,
        rng.gen::<f64>() * 2.0 - 1.0,
        rng.gen::<f64>() * 2.0 - 1.0,
        rng.gen::<f64>() * 2.0 - 1.0,
    ));
    *q.to_rotation_matrix().matrix()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

// ---------------------------------------------------------------------------
// Pair bounds

#[test]
fn pair_bounds_single_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts: Vec<Vector3<f64>> = (0..5)
        .map(|_| Vector3::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0))
        .collect();
    let lib = ShapeLibrary::new(vec![pts.clone()]).unwrap();
    let b = compute_pair_bounds(&lib).unwrap();
    for i in 0..5 {
        for j in (i + 1)..5 {
            let d = (pts[j] - pts[i]).norm();
            assert!((b.bmin(i, j) - d).abs() < 1e-9);
            assert!((b.bmax(i, j) - d).abs() < 1e-9);
            assert_eq!(b.bmin(i, j), b.bmin(j, i));
        }
    }
}

#[test]
fn pair_bounds_antipodal_segments() {
    // Two models whose difference vectors are (1,0,0) and (-1,0,0): the hull
    // of the differences crosses the origin, so bmin = 0 and bmax = 1.
    let m1 = vec![
        Vector3::zeros(),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
    ];
    let m2 = vec![
        Vector3::zeros(),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
    ];
    let lib = ShapeLibrary::new(vec![m1, m2]).unwrap();
    let b = compute_pair_bounds(&lib).unwrap();
    assert!(b.bmin(0, 1).abs() < 1e-6);
    assert!((b.bmax(0, 1) - 1.0).abs() < 1e-9);
}

#[test]
fn pair_bounds_match_simplex_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lib = ShapeLibrary::new(
        (0..4)
            .map(|_| {
                (0..4)
                    .map(|_| Vector3::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0))
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    let b = compute_pair_bounds(&lib).unwrap();
    for i in 0..4 {
        for j in (i + 1)..4 {
            let diffs: Vec<Vector3<f64>> =
                (0..4).map(|k| lib.point(k, j) - lib.point(k, i)).collect();
            let norm_at = |c: &[f64; 4]| {
                let mut p = Vector3::zeros();
                for (k, ck) in c.iter().enumerate() {
                    p += *ck * diffs[k];
                }
                p.norm()
            };
            // Coarse pass at step 0.02, then a fine local pass around the
            // coarse minimizer to bring the sampled minimum within 1e-3.
            let n = 50usize;
            let mut best = f64::INFINITY;
            let mut argbest = [0.25f64; 4];
            for a in 0..=n {
                for bb in 0..=(n - a) {
                    for c in 0..=(n - a - bb) {
                        let d = n - a - bb - c;
                        let cvec = [
                            a as f64 / n as f64,
                            bb as f64 / n as f64,
                            c as f64 / n as f64,
                            d as f64 / n as f64,
                        ];
                        let v = norm_at(&cvec);
                        if v < best {
                            best = v;
                            argbest = cvec;
                        }
                    }
                }
            }
            let coarse = best;
            let fine = 40i64;
            let h = 0.02 / fine as f64;
            for da in -fine..=fine {
                for db in -fine..=fine {
                    for dc in -fine..=fine {
                        let a = argbest[0] + da as f64 * h;
                        let bb = argbest[1] + db as f64 * h;
                        let c = argbest[2] + dc as f64 * h;
                        let d = 1.0 - a - bb - c;
                        if a >= 0.0 && bb >= 0.0 && c >= 0.0 && d >= 0.0 {
                            best = best.min(norm_at(&[a, bb, c, d]));
                        }
                    }
                }
            }
            assert!(b.bmin(i, j) <= coarse + 1e-9, "QP above the coarse grid");
            assert!(
                best - b.bmin(i, j) < 1e-3,
                "bmin {} refined grid {}",
                b.bmin(i, j),
                best
            );
        }
    }
}

#[test]
fn pair_test_accepts_noiseless_inliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lib = ShapeLibrary::new(
        (0..3)
            .map(|_| {
                (0..6)
                    .map(|_| Vector3::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0))
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    let b = compute_pair_bounds(&lib).unwrap();
    for _ in 0..20 {
        let r = random_rotation(&mut rng);
        let t = Vector3::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let mut c: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
        let s: f64 = c.iter().sum();
        c.iter_mut().for_each(|x| *x /= s);
        let pts: Vec<Vector3<f64>> = (0..6).map(|i| r * lib.blend(&c, i) + t).collect();
        for i in 0..6 {
            for j in (i + 1)..6 {
                assert!(test_pair_3d(
                    &pts[i],
                    &pts[j],
                    (b.bmin(i, j), b.bmax(i, j)),
                    0.0
                ));
            }
        }
    }
}

#[test]
fn pair_test_boundary_exceedance() {
    let yi = Vector3::zeros();
    let yj = Vector3::new(1.0 + 2.0 * 0.05 + 0.01, 0.0, 0.0);
    assert!(!test_pair_3d(&yi, &yj, (1.0, 1.0), 0.05));
    let yj = Vector3::new(1.0 + 2.0 * 0.05 - 0.001, 0.0, 0.0);
    assert!(test_pair_3d(&yi, &yj, (1.0, 1.0), 0.05));
}

#[test]
fn pair_test_monte_carlo_soundness() {
    // 1e4 random inlier pairs with ||eps|| <= beta always pass.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let beta = 0.07;
    let lib = ShapeLibrary::new(
        (0..2)
            .map(|_| {
                (0..3)
                    .map(|_| Vector3::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0))
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    let b = compute_pair_bounds(&lib).unwrap();
    for _ in 0..10_000 {
        let r = random_rotation(&mut rng);
        let t = Vector3::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let c0: f64 = rng.gen();
        let c = [c0, 1.0 - c0];
        let eps_i = random_unit(&mut rng) * (rng.gen::<f64>() * beta);
        let eps_j = random_unit(&mut rng) * (rng.gen::<f64>() * beta);
        let yi = r * lib.blend(&c, 0) + t + eps_i;
        let yj = r * lib.blend(&c, 1) + t + eps_j;
        assert!(test_pair_3d(&yi, &yj, (b.bmin(0, 1), b.bmax(0, 1)), beta));
    }
}

// ---------------------------------------------------------------------------
// Winding orders

#[test]
fn winding_order_unit_triangle() {
    let s = winding_order_2d(
        &Vector2::new(0.0, 0.0),
        &Vector2::new(1.0, 0.0),
        &Vector2::new(0.0, 1.0),
    );
    assert_eq!(s, 1);
}

#[test]
fn winding_order_swap_flips_sign() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let z: Vec<Vector2<f64>> = (0..3)
            .map(|_| Vector2::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        assert_eq!(
            winding_order_2d(&z[0], &z[1], &z[2]),
            -winding_order_2d(&z[0], &z[2], &z[1])
        );
    }
}

#[test]
fn winding_order_collinear() {
    let s = winding_order_2d(
        &Vector2::new(0.0, 0.0),
        &Vector2::new(1.0, 1.0),
        &Vector2::new(2.0, 2.0),
    );
    assert_eq!(s, 0);
}

/// Octahedron with per-axis vertex magnitudes; faces indexed by sign octant.
pub(crate) struct Octahedron {
    /// +x, -x, +y, -y, +z, -z vertex magnitudes.
    pub mags: [f64; 6],
}

impl Octahedron {
    pub fn vertex(&self, axis: usize, positive: bool) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        let idx = axis * 2 + usize::from(!positive);
        v[axis] = if positive { self.mags[idx] } else { -self.mags[idx] };
        v
    }

    /// Face for octant signs, as its three vertices (x, y, z axes order).
    pub fn face_vertices(&self, octant: usize) -> [Vector3<f64>; 3] {
        let sx = octant & 1 == 0;
        let sy = octant & 2 == 0;
        let sz = octant & 4 == 0;
        [
            self.vertex(0, sx),
            self.vertex(1, sy),
            self.vertex(2, sz),
        ]
    }

    /// Outward unit normal and offset of a face plane: n.o + b = 0.
    pub fn face_plane(&self, octant: usize) -> (Vector3<f64>, f64) {
        let [a, b, c] = self.face_vertices(octant);
        let mut n = (b - a).cross(&(c - a));
        if n.dot(&a) < 0.0 {
            n = -n;
        }
        let n = n.normalize();
        (n, -n.dot(&a))
    }

    pub fn shape_model(&self, keypoint_face: Vec<usize>) -> ConvexShapeModel {
        let faces = (0..8).map(|o| self.face_plane(o)).collect();
        ConvexShapeModel::new(faces, keypoint_face).unwrap()
    }

    pub fn contains_interval(&self, o: &Vector3<f64>, p: &Vector3<f64>) -> (f64, f64) {
        // Clip the segment o->p against all 8 inside half-spaces n.x + b <= 0.
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for oct in 0..8 {
            let (n, b) = self.face_plane(oct);
            let g0 = n.dot(o) + b;
            let g1 = n.dot(p) + b;
            let dg = g1 - g0;
            if dg.abs() < 1e-15 {
                if g0 > 0.0 {
                    return (1.0, 0.0);
                }
            } else {
                let t = -g0 / dg;
                if dg > 0.0 {
                    hi = hi.min(t);
                } else {
                    lo = lo.max(t);
                }
            }
        }
        (lo, hi)
    }

    /// Line-of-sight visibility of a surface point from camera position `o`.
    pub fn visible(&self, o: &Vector3<f64>, p: &Vector3<f64>) -> bool {
        let (lo, hi) = self.contains_interval(o, p);
        // Occluded iff the open segment passes through the interior.
        !(lo < hi - 1e-9 && lo < 1.0 - 1e-9)
    }
}

/// Keypoints on distinct faces at fixed barycentric coordinates.
pub(crate) fn octa_keypoints(
    octa: &Octahedron,
    assignment: &[(usize, [f64; 3])],
) -> Vec<Vector3<f64>> {
    assignment
        .iter()
        .map(|&(face, bary)| {
            let [a, b, c] = octa.face_vertices(face);
            a * bary[0] + b * bary[1] + c * bary[2]
        })
        .collect()
}

fn fixture_octahedron() -> (Octahedron, Vec<usize>, Vec<Vector3<f64>>) {
    let octa = Octahedron {
        mags: [0.8, 1.3, 1.0, 1.5, 0.9, 1.2],
    };
    let assignment = vec![
        (0usize, [0.5, 0.3, 0.2]),
        (0, [0.2, 0.3, 0.5]),
        (3, [0.4, 0.4, 0.2]),
        (5, [0.3, 0.5, 0.2]),
        (6, [0.25, 0.35, 0.4]),
        (7, [0.4, 0.25, 0.35]),
    ];
    let faces: Vec<usize> = assignment.iter().map(|a| a.0).collect();
    let pts = octa_keypoints(&octa, &assignment);
    (octa, faces, pts)
}

#[test]
fn lp_dictionary_single_face_triplet() {
    // Three keypoints on one face are visible in exactly one winding order:
    // the camera must be on the outward side of the face.
    let octa = Octahedron {
        mags: [1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
    };
    let assignment = vec![
        (0usize, [0.6, 0.2, 0.2]),
        (0, [0.2, 0.6, 0.2]),
        (0, [0.2, 0.2, 0.6]),
    ];
    let faces: Vec<usize> = assignment.iter().map(|a| a.0).collect();
    let pts = octa_keypoints(&octa, &assignment);
    let shape = octa.shape_model(faces);
    let dict = build_winding_dictionary_lp(&shape, &pts).unwrap();
    let s = dict.get(0, 1, 2);
    assert!(!s.is_empty());
    assert_ne!(s, SignSet::BOTH, "one-face triplet must have a unique order");
}

#[test]
fn lp_dictionary_opposite_faces_empty() {
    // i, j on one face and m on the antipodal face of a centrally symmetric
    // octahedron: opposite normals are exactly antiparallel, the two outside
    // half-spaces are disjoint, and the covisibility region is empty.
    let octa = Octahedron {
        mags: [1.0, 1.0, 0.9, 0.9, 1.05, 1.05],
    };
    // Face 0 = (+,+,+) octant; face 7 = (-,-,-).
    let assignment = vec![
        (0usize, [0.5, 0.25, 0.25]),
        (0, [0.25, 0.5, 0.25]),
        (7, [0.3, 0.4, 0.3]),
    ];
    let faces: Vec<usize> = assignment.iter().map(|a| a.0).collect();
    let pts = octa_keypoints(&octa, &assignment);
    let shape = octa.shape_model(faces);
    let dict = build_winding_dictionary_lp(&shape, &pts).unwrap();
    assert!(dict.get(0, 1, 2).is_empty());
}

#[test]
fn lp_dictionary_matches_camera_grid_oracle() {
    let (octa, faces, pts) = fixture_octahedron();
    let shape = octa.shape_model(faces);
    let dict = build_winding_dictionary_lp(&shape, &pts).unwrap();

    // Dense camera grid: Fibonacci sphere directions at several radii.
    let mut oracle = WindingDictionary::conservative(pts.len());
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            for m in (j + 1)..pts.len() {
                oracle.set(i, j, m, SignSet::EMPTY);
            }
        }
    }
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let ndirs = 4000;
    for radius in [1.9, 2.5, 4.0, 8.0, 30.0, 200.0] {
        for d in 0..ndirs {
            let y = 1.0 - 2.0 * (d as f64 + 0.5) / ndirs as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * d as f64;
            let o = Vector3::new(r * th.cos(), y, r * th.sin()) * radius;
            let vis: Vec<bool> = pts.iter().map(|p| octa.visible(&o, p)).collect();
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    for m in (j + 1)..pts.len() {
                        if vis[i] && vis[j] && vis[m] {
                            let n = (pts[j] - pts[i]).cross(&(pts[m] - pts[i]));
                            let h = (o - pts[i]).dot(&n);
                            if h.abs() > 1e-9 {
                                let mut s = oracle.get(i, j, m);
                                s.insert(if h > 0.0 { 1 } else { -1 });
                                oracle.set(i, j, m, s);
                            }
                        }
                    }
                }
            }
        }
    }

    // Soundness: every sign seen by the camera grid is LP-feasible.
    for ((i, j, m), gr) in oracle.entries() {
        let lp = dict.get(*i, *j, *m);
        assert!(
            gr.is_subset_of(&lp),
            "triplet ({i},{j},{m}): grid {:?} not within lp {:?}",
            gr.signs(),
            lp.signs()
        );
    }

    // Completeness: each LP-feasible sign comes with a witness camera; the
    // independent ray-cast oracle must confirm covisibility and the sign.
    for ((i, j, m), lp) in dict.entries() {
        let (i, j, m) = (*i, *j, *m);
        let normal = (pts[j] - pts[i]).cross(&(pts[m] - pts[i]));
        let nh = normal.normalize();
        for sign in lp.signs() {
            let mut rows = Vec::new();
            let mut seen = Vec::new();
            for &kp in &[i, j, m] {
                let f = shape.keypoint_face[kp];
                if !seen.contains(&f) {
                    seen.push(f);
                    let (fnorm, foff) = shape.faces[f];
                    rows.push(([fnorm.x, fnorm.y, fnorm.z], foff));
                }
            }
            let s = sign as f64;
            rows.push((
                [s * nh.x, s * nh.y, s * nh.z],
                -s * pts[i].dot(&nh),
            ));
            let (ok, witness) =
                crate::optkernels::lp_feasible(&crate::optkernels::LpFeasibility::new(rows, super::winding::LP_MARGIN).unwrap());
            assert!(ok, "LP sign without a witness");
            let o = Vector3::new(witness.unwrap()[0], witness.unwrap()[1], witness.unwrap()[2]);
            for &kp in &[i, j, m] {
                assert!(octa.visible(&o, &pts[kp]), "witness cannot see keypoint {kp}");
            }
            let h = (o - pts[i]).dot(&nh);
            assert_eq!(if h > 0.0 { 1 } else { -1 }, sign, "witness on wrong side");
        }
    }
}

#[test]
fn lp_dictionary_oracle_via_projection_signs() {
    // Same oracle through actual projections: for covisible cameras the
    // observed determinant sign must be the negated half-space sign, and the
    // triplet passes the compatibility test.
    let (octa, faces, pts) = fixture_octahedron();
    let shape = octa.shape_model(faces);
    let dict = build_winding_dictionary_lp(&shape, &pts).unwrap();
    let dicts = [dict];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tested = 0;
    for _ in 0..400 {
        let dir = random_unit(&mut rng);
        let o = dir * 3.0;
        let (r, t) = look_at(&o);
        let vis: Vec<bool> = pts.iter().map(|p| octa.visible(&o, p)).collect();
        let proj: Vec<Option<Vector2<f64>>> = pts
            .iter()
            .map(|p| {
                let q = r * p + t;
                (q.z > 0.0).then(|| Vector2::new(q.x / q.z, q.y / q.z))
            })
            .collect();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                for m in (j + 1)..pts.len() {
                    if vis[i] && vis[j] && vis[m] {
                        if let (Some(zi), Some(zj), Some(zm)) = (proj[i], proj[j], proj[m]) {
                            assert!(
                                test_triplet_2d((i, j, m), &zi, &zj, &zm, &dicts),
                                "covisible triplet rejected"
                            );
                            tested += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(tested > 200, "oracle exercised too few triplets: {tested}");
}

pub(crate) fn look_at(o: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let f = (-o).normalize();
    let up = if f.y.abs() > 0.99 {
        Vector3::new(1.0, 0.0, 0.0)
    } else {
        Vector3::new(0.0, 1.0, 0.0)
    };
    let r = up.cross(&f).normalize();
    let d = f.cross(&r);
    let rot = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
    let t = -rot * o;
    (rot, t)
}

#[test]
fn learned_dictionary_defaults_conservative() {
    let d = learn_winding_dictionary(4, &[]);
    for i in 0..4 {
        for j in (i + 1)..4 {
            for m in (j + 1)..4 {
                assert_eq!(d.get(i, j, m), SignSet::BOTH);
            }
        }
    }
}

#[test]
fn learned_dictionary_single_observation() {
    let d = learn_winding_dictionary(4, &[((0, 1, 2), 1)]);
    // Observed det sign +1 is stored as half-space sign -1.
    assert_eq!(d.get(0, 1, 2), SignSet::MINUS);
    assert_eq!(d.get(0, 1, 3), SignSet::BOTH);
}

#[test]
fn learned_dictionary_subset_of_lp() {
    let (octa, faces, pts) = fixture_octahedron();
    let shape = octa.shape_model(faces);
    let lp = build_winding_dictionary_lp(&shape, &pts).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut annotations = Vec::new();
    for _ in 0..100 {
        let dir = random_unit(&mut rng);
        let o = dir * (2.0 + rng.gen::<f64>() * 4.0);
        let (r, t) = look_at(&o);
        let vis: Vec<bool> = pts.iter().map(|p| octa.visible(&o, p)).collect();
        let proj: Vec<Option<Vector2<f64>>> = pts
            .iter()
            .map(|p| {
                let q = r * p + t;
                (q.z > 0.0).then(|| Vector2::new(q.x / q.z, q.y / q.z))
            })
            .collect();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                for m in (j + 1)..pts.len() {
                    if vis[i] && vis[j] && vis[m] {
                        if let (Some(zi), Some(zj), Some(zm)) = (proj[i], proj[j], proj[m]) {
                            annotations.push(((i, j, m), winding_order_2d(&zi, &zj, &zm)));
                        }
                    }
                }
            }
        }
    }
    assert!(!annotations.is_empty());
    let learned = learn_winding_dictionary(pts.len(), &annotations);
    let mut seen: std::collections::BTreeSet<(usize, usize, usize)> =
        annotations.iter().map(|a| a.0).collect();
    for ((i, j, m), s) in learned.entries() {
        if seen.remove(&(*i, *j, *m)) {
            assert!(
                s.is_subset_of(&lp.get(*i, *j, *m)),
                "triplet ({i},{j},{m}): learned {:?} not within lp {:?}",
                s.signs(),
                lp.get(*i, *j, *m).signs()
            );
        }
    }
}

#[test]
fn triplet_test_empty_dictionary_rejects() {
    let mut d = WindingDictionary::conservative(3);
    d.set(0, 1, 2, SignSet::EMPTY);
    assert!(!test_triplet_2d(
        (0, 1, 2),
        &Vector2::new(0.0, 0.0),
        &Vector2::new(1.0, 0.0),
        &Vector2::new(0.0, 1.0),
        &[d]
    ));
}

#[test]
fn dictionary_roundtrip_preserves_signs() {
    let (octa, faces, pts) = fixture_octahedron();
    let shape = octa.shape_model(faces);
    let dict = build_winding_dictionary_lp(&shape, &pts).unwrap();
    let json = serde_json::to_string(&dict).unwrap();
    let back: WindingDictionary = serde_json::from_str(&json).unwrap();
    assert_eq!(dict, back);
}

// ---------------------------------------------------------------------------
// Hypergraphs and cliques

#[test]
fn complete_graph_edge_count() {
    let g = build_compatibility_graph(6, 2, |_| true).unwrap();
    assert_eq!(g.num_edges(), 15);
    let g = build_compatibility_graph(6, 3, |_| true).unwrap();
    assert_eq!(g.num_edges(), 20);
}

#[test]
fn empty_graph_edge_count() {
    let g = build_compatibility_graph(6, 3, |_| false).unwrap();
    assert_eq!(g.num_edges(), 0);
}

#[test]
fn max_clique_complete_graph() {
    let g = build_compatibility_graph(5, 2, |_| true).unwrap();
    assert_eq!(max_clique(&g).unwrap(), vec![0, 1, 2, 3, 4]);
}

#[test]
fn max_clique_five_cycle_lex() {
    let mut g = CompatibilityHypergraph::new(5, 2).unwrap();
    for i in 0..5 {
        g.insert_edge(vec![i, (i + 1) % 5]).unwrap();
    }
    assert_eq!(max_clique(&g).unwrap(), vec![0, 1]);
}

fn exhaustive_max_clique(g: &CompatibilityHypergraph) -> Vec<usize> {
    let n = g.num_nodes();
    let mut best: Vec<usize> = vec![];
    for mask in 0u32..(1 << n) {
        let set: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        if set.len() <= best.len() && !(set.len() == best.len() && set < best) {
            continue;
        }
        if g.is_hyperclique(&set) && (set.len() > best.len() || set < best) {
            best = set;
        }
    }
    best
}

#[test]
fn max_clique_matches_exhaustive() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let n = 15;
        let mut g = CompatibilityHypergraph::new(n, 2).unwrap();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < 0.5 {
                    g.insert_edge(vec![i, j]).unwrap();
                }
            }
        }
        let ours = max_clique(&g).unwrap();
        let oracle = exhaustive_max_clique(&g);
        assert_eq!(ours, oracle);
    }
}

#[test]
fn max_hyperclique_complete() {
    let g = build_compatibility_graph(5, 3, |_| true).unwrap();
    assert_eq!(max_hyperclique(&g).unwrap(), vec![0, 1, 2, 3, 4]);
}

#[test]
fn max_hyperclique_worked_example() {
    // Five nodes; the passing triplets leave (0,1,2,3) as the maximum
    // hyperclique even though node 4 appears in several edges.
    let mut g = CompatibilityHypergraph::new(5, 3).unwrap();
    for e in [
        [0, 1, 2],
        [0, 1, 3],
        [0, 1, 4],
        [0, 2, 3],
        [1, 2, 3],
        [1, 2, 4],
        [1, 3, 4],
    ] {
        g.insert_edge(e.to_vec()).unwrap();
    }
    assert_eq!(max_hyperclique(&g).unwrap(), vec![0, 1, 2, 3]);
}

#[test]
fn max_hyperclique_matches_exhaustive() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for trial in 0..20 {
        let n = 8 + (trial % 5);
        let density = 0.3 + 0.5 * rng.gen::<f64>();
        let mut g = CompatibilityHypergraph::new(n, 3).unwrap();
        for_each_combination(n, 3, |s| {
            if rng.gen::<f64>() < density {
                let _ = g.insert_edge(s.to_vec());
            }
        });
        let ours = max_hyperclique(&g).unwrap();
        let oracle = exhaustive_max_clique(&g);
        assert_eq!(ours, oracle, "trial {trial}");
        assert!(g.is_hyperclique(&ours));
    }
}

// ---------------------------------------------------------------------------
// Full pruning pipeline

#[test]
fn robin_all_inliers_survive() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let lib = ShapeLibrary::new(
        (0..3)
            .map(|_| {
                (0..8)
                    .map(|_| Vector3::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0))
                    .collect()
            })
            .collect(),
    )
    .unwrap();
    let bounds = compute_pair_bounds(&lib).unwrap();
    let r = random_rotation(&mut rng);
    let t = Vector3::from_fn(|_, _| rng.gen::<f64>());
    let mut c: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
    let s: f64 = c.iter().sum();
    c.iter_mut().for_each(|x| *x /= s);
    let beta = 0.02;
    let pts: Vec<Vector3<f64>> = (0..8)
        .map(|i| r * lib.blend(&c, i) + t + random_unit(&mut rng) * (rng.gen::<f64>() * beta))
        .collect();
    let res = robin(
        Measurements::ThreeD(&pts),
        Invariant::Pair3D {
            bounds: &bounds,
            beta,
        },
    )
    .unwrap();
    assert_eq!(res.survivors, (0..8).collect::<Vec<_>>());
    assert!(!res.degenerate);
}

#[test]
fn robin_small_instances_keep_inliers_exhaustively() {
    // When the inliers form the unique largest clique, they all survive;
    // verified against exhaustive clique search on small instances.
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for trial in 0..10 {
        let n = 10usize;
        let n_out = 3usize;
        let lib = ShapeLibrary::new(
            (0..2)
                .map(|_| {
                    (0..n)
                        .map(|_| Vector3::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0) * 2.0)
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let bounds = compute_pair_bounds(&lib).unwrap();
        let r = random_rotation(&mut rng);
        let t = Vector3::from_fn(|_, _| rng.gen::<f64>());
        let c0: f64 = rng.gen();
        let c = [c0, 1.0 - c0];
        let beta = 0.01;
        let mut pts: Vec<Vector3<f64>> = (0..n)
            .map(|i| r * lib.blend(&c, i) + t + random_unit(&mut rng) * (rng.gen::<f64>() * beta))
            .collect();
        for p in pts.iter_mut().take(n_out) {
            *p = Vector3::from_fn(|_, _| rng.gen::<f64>() * 2.0 - 1.0) * 5.0;
        }
        let res = robin(
            Measurements::ThreeD(&pts),
            Invariant::Pair3D {
                bounds: &bounds,
                beta,
            },
        )
        .unwrap();

        let g = build_compatibility_graph(n, 2, |s| {
            test_pair_3d(
                &pts[s[0]],
                &pts[s[1]],
                (bounds.bmin(s[0], s[1]), bounds.bmax(s[0], s[1])),
                beta,
            )
        })
        .unwrap();
        let oracle = exhaustive_max_clique(&g);
        assert_eq!(res.survivors, oracle, "trial {trial}");
        // Survivors pass the test on all pairs by construction.
        assert!(g.is_hyperclique(&res.survivors));
        // Inliers form a clique, so the maximum has at least that size.
        assert!(res.survivors.len() >= n - n_out);
    }
}

#[test]
fn robin_degenerate_when_too_few_measurements() {
    let pts = [Vector3::new(0.0, 0.0, 0.0)];
    let bounds = compute_pair_bounds(
        &ShapeLibrary::new(vec![vec![
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ]])
        .unwrap(),
    )
    .unwrap();
    let res = robin(
        Measurements::ThreeD(&pts),
        Invariant::Pair3D {
            bounds: &bounds,
            beta: 0.1,
        },
    )
    .unwrap();
    assert!(res.degenerate);
    assert_eq!(res.survivors, vec![0]);
}

#[test]
fn robin_rejects_mismatched_invariant() {
    let pts = [Vector2::new(0.0, 0.0); 4];
    let lib = ShapeLibrary::new(vec![vec![Vector3::zeros(); 3]]).unwrap();
    let bounds = compute_pair_bounds(&lib).unwrap();
    assert!(robin(
        Measurements::TwoD(&pts),
        Invariant::Pair3D {
            bounds: &bounds,
            beta: 0.1
        },
    )
    .is_err());
}
