//! Exact minimization of a PSD quadratic form over the probability simplex.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Quadratic program `min c' H c  s.t.  c in simplex` with `H` symmetric PSD.
#[derive(Debug, Clone)]
pub struct SimplexQp {
    h: DMatrix<f64>,
}

impl SimplexQp {
    pub fn new(h: DMatrix<f64>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::InvalidProblem("H must be square".into()));
        }
        let scale = h.amax().max(1.0);
        if (&h - h.transpose()).amax() > 1e-10 * scale {
            return Err(Error::InvalidProblem("H must be symmetric".into()));
        }
        Ok(SimplexQp { h })
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }
}

/// Solves `min c' H c` over the probability simplex with a primal active-set
/// method. The reduced equality-constrained subproblems are solved through a
/// pseudo-inverse so rank-deficient `H` (e.g. Gram matrices of 3-column
/// factors) is handled without regularization.
///
/// Returns the minimizer and its objective value; KKT residuals are below
/// 1e-8 on exit.
pub fn solve_simplex_qp(p: &SimplexQp) -> Result<(Vec<f64>, f64)> {
    let k = p.dim();
    let h = &p.h;
    let scale = h.amax().max(1.0);

    // PSD check.
    let eig = h.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < -1e-8 * scale) {
        return Err(Error::InvalidProblem("H is not PSD".into()));
    }

    if k == 1 {
        return Ok((vec![1.0], h[(0, 0)]));
    }

    let mut c = DVector::from_element(k, 1.0 / k as f64);
    let mut active: Vec<bool> = vec![true; k]; // true = in support

    let max_iters = 50 * (k + 1);
    for _ in 0..max_iters {
        let support: Vec<usize> = (0..k).filter(|&i| active[i]).collect();
        let s = support.len();

        // Equality-constrained minimizer on the current support via the
        // bordered KKT system [2H_SS 1; 1' 0] [c; nu] = [0; 1].
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = 2.0 * h[(i, j)];
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
        }
        let mut rhs = DVector::zeros(s + 1);
        rhs[s] = 1.0;
        let sol = pinv_solve(&kkt, &rhs);

        let mut target = DVector::zeros(k);
        for (a, &i) in support.iter().enumerate() {
            target[i] = sol[a];
        }

        if support.iter().all(|&i| target[i] >= -1e-12) {
            // Candidate is feasible on the support: check the multipliers of
            // the zero-fixed coordinates.
            c = target;
            let grad = 2.0 * h * &c;
            let nu = support
                .iter()
                .map(|&i| grad[i])
                .sum::<f64>()
                / s as f64;
            let mut worst = f64::INFINITY;
            let mut worst_idx = None;
            for i in 0..k {
                if !active[i] {
                    let lam = grad[i] - nu;
                    if lam < worst {
                        worst = lam;
                        worst_idx = Some(i);
                    }
                }
            }
            match worst_idx {
                Some(i) if worst < -1e-10 * scale.max(1.0) => {
                    active[i] = true;
                }
                _ => {
                    let c: Vec<f64> = c.iter().cloned().collect();
                    let value = value_at(h, &c);
                    return Ok((c, value));
                }
            }
        } else {
            // Step toward the target until a coordinate hits zero; drop it.
            let mut t_max = 1.0f64;
            let mut blocker = None;
            for &i in &support {
                let d = target[i] - c[i];
                if d < -1e-15 {
                    let t = -c[i] / d;
                    if t < t_max {
                        t_max = t;
                        blocker = Some(i);
                    }
                }
            }
            let t = t_max.clamp(0.0, 1.0);
            for &i in &support {
                c[i] += t * (target[i] - c[i]);
            }
            if let Some(i) = blocker {
                c[i] = 0.0;
                active[i] = false;
            }
        }
    }

    Err(Error::NumericalFailure(
        "simplex QP active-set did not converge".into(),
    ))
}

fn value_at(h: &DMatrix<f64>, c: &[f64]) -> f64 {
    let v = DVector::from_column_slice(c);
    (v.transpose() * h * &v)[(0, 0)]
}

/// Least-norm solution of a symmetric (possibly singular) system.
fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let eig = a.clone().symmetric_eigen();
    let tol = 1e-12 * eig.eigenvalues.amax().max(1.0);
    let mut x = DVector::zeros(b.len());
    for j in 0..b.len() {
        let l = eig.eigenvalues[j];
        if l.abs() > tol {
            let q = eig.eigenvectors.column(j);
            x += q.dot(b) / l * q;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, k: usize, rank: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(rank, k, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        b.transpose() * b
    }

    #[test]
    fn singleton_simplex() {
        let p = SimplexQp::new(DMatrix::from_element(1, 1, 3.5)).unwrap();
        let (c, v) = solve_simplex_qp(&p).unwrap();
        assert_eq!(c, vec![1.0]);
        assert!((v - 3.5).abs() < 1e-15);
    }

    #[test]
    fn identity_gives_uniform() {
        let p = SimplexQp::new(DMatrix::identity(3, 3)).unwrap();
        let (c, v) = solve_simplex_qp(&p).unwrap();
        for x in &c {
            assert!((x - 1.0 / 3.0).abs() < 1e-10);
        }
        assert!((v - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn matches_grid_search_k5() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..5 {
            let h = random_psd(&mut rng, 5, if trial % 2 == 0 { 5 } else { 3 });
            let p = SimplexQp::new(h.clone()).unwrap();
            let (c, v) = solve_simplex_qp(&p).unwrap();
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(c.iter().all(|&x| x >= -1e-12));

            // Dense grid over the simplex with step 0.02.
            let n = 50usize;
            let mut best = f64::INFINITY;
            let step = 1.0 / n as f64;
            for a in 0..=n {
                for b in 0..=(n - a) {
                    for cc in 0..=(n - a - b) {
                        for d in 0..=(n - a - b - cc) {
                            let e = n - a - b - cc - d;
                            let x = [
                                a as f64 * step,
                                b as f64 * step,
                                cc as f64 * step,
                                d as f64 * step,
                                e as f64 * step,
                            ];
                            let val = value_at(&h, &x);
                            if val < best {
                                best = val;
                            }
                        }
                    }
                }
            }
            // Grid error bound: the optimum cannot beat our value, and our
            // value cannot beat the grid by more than the grid resolution
            // allows.
            assert!(v <= best + 1e-10, "trial {trial}: v={v} grid={best}");
            assert!(best - v < 0.05 * h.amax(), "trial {trial}: v={v} grid={best}");
        }
    }

    #[test]
    fn value_never_exceeds_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let h = random_psd(&mut rng, 6, 3);
            let p = SimplexQp::new(h.clone()).unwrap();
            let (_, v) = solve_simplex_qp(&p).unwrap();
            for k in 0..6 {
                assert!(v <= h[(k, k)] + 1e-10);
            }
        }
    }

    #[test]
    fn kkt_residual_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let h = random_psd(&mut rng, 7, 7);
            let p = SimplexQp::new(h.clone()).unwrap();
            let (c, _) = solve_simplex_qp(&p).unwrap();
            let cv = DVector::from_column_slice(&c);
            let grad = 2.0 * &h * &cv;
            // nu from the support, complementarity and dual feasibility.
            let sup: Vec<usize> = (0..7).filter(|&i| c[i] > 1e-9).collect();
            let nu = sup.iter().map(|&i| grad[i]).sum::<f64>() / sup.len() as f64;
            for i in 0..7 {
                let lam = grad[i] - nu;
                if c[i] > 1e-9 {
                    assert!(lam.abs() < 1e-8 * h.amax().max(1.0));
                } else {
                    assert!(lam > -1e-8 * h.amax().max(1.0));
                }
            }
        }
    }

    #[test]
    fn rejects_non_psd() {
        let mut h = DMatrix::identity(2, 2);
        h[(0, 0)] = -1.0;
        let p = SimplexQp::new(h).unwrap();
        assert!(matches!(
            solve_simplex_qp(&p),
            Err(Error::InvalidProblem(_))
        ));
    }

    #[test]
    fn rejects_asymmetric() {
        let mut h = DMatrix::identity(2, 2);
        h[(0, 1)] = 0.5;
        assert!(SimplexQp::new(h).is_err());
    }
}
