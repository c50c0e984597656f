//! Multi-block primal-dual interior-point SDP solver.
//!
//! Solves `min <C, X>  s.t.  <A_j, X> = b_j, X >= 0` over a block-diagonal
//! PSD variable, with Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector step. The Schur complement is factored densely. All
//! arithmetic is sequential and allocation-order independent, so identical
//! problems produce bitwise-identical iterates.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::{Error, Result};

/// Symmetric matrix for one block of a constraint or objective.
#[derive(Debug, Clone)]
pub enum SymMat {
    Zero,
    /// Upper-triangular triplets `(i, j, v)` with `i <= j`; `v` is the value
    /// of both the `(i,j)` and `(j,i)` entries.
    Sparse(Vec<(u32, u32, f64)>),
    /// Full row-major `n x n` symmetric storage.
    Dense(Vec<f64>),
}

impl SymMat {
    /// `<A, X>` against dense symmetric `X`.
    fn inner(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            SymMat::Zero => 0.0,
            SymMat::Sparse(ts) => {
                let mut s = 0.0;
                for &(i, j, v) in ts {
                    let (i, j) = (i as usize, j as usize);
                    if i == j {
                        s += v * x[(i, i)];
                    } else {
                        s += 2.0 * v * x[(i, j)];
                    }
                }
                s
            }
            SymMat::Dense(d) => {
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

    /// `buf += scale * A` for dense column-major `buf` of size `n x n`.
    fn add_scaled_to(&self, buf: &mut DMatrix<f64>, scale: f64) {
        match self {
            SymMat::Zero => {}
            SymMat::Sparse(ts) => {
                for &(i, j, v) in ts {
                    let (i, j) = (i as usize, j as usize);
                    buf[(i, j)] += scale * v;
                    if i != j {
                        buf[(j, i)] += scale * v;
                    }
                }
            }
            SymMat::Dense(d) => {
                let n = buf.nrows();
                for j in 0..n {
                    for i in 0..n {
                        buf[(i, j)] += scale * d[i * n + j];
                    }
                }
            }
        }
    }

    fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        self.add_scaled_to(&mut m, 1.0);
        m
    }

    fn norm(&self, n: usize) -> f64 {
        match self {
            SymMat::Zero => 0.0,
            SymMat::Sparse(ts) => {
                let mut s = 0.0;
                for &(i, j, v) in ts {
                    s += if i == j { v * v } else { 2.0 * v * v };
                }
                s.sqrt()
            }
            SymMat::Dense(d) => {
                let _ = n;
                d.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            SymMat::Zero => {}
            SymMat::Sparse(ts) => ts.iter_mut().for_each(|t| t.2 *= s),
            SymMat::Dense(d) => d.iter_mut().for_each(|v| *v *= s),
        }
    }
}

/// Block-diagonal symmetric matrix: one [`SymMat`] per block.
#[derive(Debug, Clone)]
pub struct BlockSym {
    pub blocks: Vec<SymMat>,
}

impl BlockSym {
    pub fn zero(nblocks: usize) -> Self {
        BlockSym {
            blocks: (0..nblocks).map(|_| SymMat::Zero).collect(),
        }
    }
}

/// Multi-block semidefinite program in primal standard form.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub block_sizes: Vec<usize>,
    pub objective: BlockSym,
    pub constraints: Vec<BlockSym>,
    pub rhs: Vec<f64>,
}

impl SdpProblem {
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Iteration limit or stalled steps; best iterate returned.
    MaxIterations,
}

/// KKT residuals recomputed from the returned iterates:
/// `primal_res = ||b - A(X)||_2 / (1 + ||b||_2)`,
/// `dual_res = ||C - A'(y) - S||_F / (1 + ||C||_F)`,
/// `comp_gap = <X, S> / (1 + |<C,X>| + |b'y|)`.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    pub primal_res: f64,
    pub dual_res: f64,
    pub comp_gap: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub primal: Vec<DMatrix<f64>>,
    pub dual: Vec<f64>,
    /// Primal objective `<C, X>`.
    pub objective: f64,
    /// Dual objective `b'y`; a valid lower bound at convergence.
    pub dual_objective: f64,
    pub slack: Vec<DMatrix<f64>>,
    pub kkt: KktResiduals,
    pub status: SdpStatus,
    pub iterations: usize,
}

const MAX_ITERS: usize = 120;

struct Blocks {
    mats: Vec<DMatrix<f64>>,
}

impl Blocks {
    fn identity(sizes: &[usize], tau: f64) -> Self {
        Blocks {
            mats: sizes
                .iter()
                .map(|&n| DMatrix::identity(n, n) * tau)
                .collect(),
        }
    }
    fn zeros(sizes: &[usize]) -> Self {
        Blocks {
            mats: sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
        }
    }
    fn inner(&self, other: &Blocks) -> f64 {
        self.mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| a.dot(b))
            .sum()
    }
    fn axpy(&mut self, alpha: f64, other: &Blocks) {
        for (a, b) in self.mats.iter_mut().zip(&other.mats) {
            *a += alpha * b;
        }
    }
    fn norm(&self) -> f64 {
        self.mats.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
    }
}

/// `A(X)` for all constraints.
fn apply_a(p: &SdpProblem, x: &Blocks) -> DVector<f64> {
    DVector::from_fn(p.constraints.len(), |j, _| {
        p.constraints[j]
            .blocks
            .iter()
            .zip(&x.mats)
            .map(|(a, xb)| a.inner(xb))
            .sum()
    })
}

/// `A'(y)` as dense blocks.
fn apply_at(p: &SdpProblem, y: &DVector<f64>, out: &mut Blocks) {
    for m in out.mats.iter_mut() {
        m.fill(0.0);
    }
    for (j, a) in p.constraints.iter().enumerate() {
        let yj = y[j];
        if yj != 0.0 {
            for (ab, ob) in a.blocks.iter().zip(out.mats.iter_mut()) {
                ab.add_scaled_to(ob, yj);
            }
        }
    }
}

/// Largest step `alpha` with `X + alpha dX` still PSD, from the minimum
/// eigenvalue of `L^-1 dX L^-T`.
fn max_step(chol: &Cholesky<f64, nalgebra::Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let z = l.solve_lower_triangular(dx).unwrap();
    let t = l.solve_lower_triangular(&z.transpose()).unwrap();
    let tsym = (&t + t.transpose()) * 0.5;
    let eig = tsym.symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    if lmin >= -1e-14 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn chol_with_jitter(m: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().amax().max(1e-30);
    let mut jitter = 1e-14 * scale;
    for _ in 0..5 {
        let mut mj = m.clone();
        for i in 0..m.nrows() {
            mj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(mj) {
            return Some(c);
        }
        jitter *= 100.0;
    }
    None
}

/// Solves the SDP to complementarity gap and residuals below `tol`.
///
/// Assumes the problem is solvable (Slater-type condition); divergence is
/// detected and reported as `NumericalFailure`. Hitting the iteration cap
/// returns the best iterate with `SdpStatus::MaxIterations`.
pub fn solve_sdp(p: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    let m = p.constraints.len();
    let nb = p.block_sizes.len();
    if p.objective.blocks.len() != nb || p.rhs.len() != m {
        return Err(Error::InvalidProblem("inconsistent SDP dimensions".into()));
    }
    for a in &p.constraints {
        if a.blocks.len() != nb {
            return Err(Error::InvalidProblem("constraint block count mismatch".into()));
        }
    }

    // Row normalization: unit Frobenius norm per constraint.
    let mut prob = p.clone();
    let mut row_scale = vec![1.0f64; m];
    for j in 0..m {
        let norm: f64 = prob.constraints[j]
            .blocks
            .iter()
            .zip(&prob.block_sizes)
            .map(|(a, &n)| a.norm(n).powi(2))
            .sum::<f64>()
            .sqrt();
        if norm > 1e-12 {
            let s = 1.0 / norm;
            row_scale[j] = s;
            for a in prob.constraints[j].blocks.iter_mut() {
                a.scale(s);
            }
            prob.rhs[j] *= s;
        }
    }
    let prob = &prob;

    let nu: usize = prob.block_sizes.iter().sum();
    let b = DVector::from_column_slice(&prob.rhs);
    let c_norm: f64 = prob
        .objective
        .blocks
        .iter()
        .zip(&prob.block_sizes)
        .map(|(cb, &n)| cb.norm(n).powi(2))
        .sum::<f64>()
        .sqrt();
    let b_norm = b.norm();

    // Identity-scaled feasible-cone start.
    let tau = (1.0_f64).max(b_norm.sqrt()).max(c_norm.sqrt());
    let mut x = Blocks::identity(&prob.block_sizes, tau);
    let mut s = Blocks::identity(&prob.block_sizes, tau);
    let mut y = DVector::zeros(m);

    let total_cells: usize = prob.block_sizes.iter().map(|&n| n * n).sum();
    // Scaled constraint matrices G' A_j G, one column per constraint.
    let mut hm = DMatrix::<f64>::zeros(total_cells, m);

    let c_dense: Vec<DMatrix<f64>> = prob
        .objective
        .blocks
        .iter()
        .zip(&prob.block_sizes)
        .map(|(cb, &n)| cb.to_dense(n))
        .collect();

    let mut at_y = Blocks::zeros(&prob.block_sizes);
    let mut best: Option<(f64, Blocks, Blocks, DVector<f64>, usize)> = None;
    let mut iter = 0;
    let mut consecutive_tiny_steps = 0;
    let mut stalled_iters = 0;

    let mu0 = x.inner(&s) / nu as f64;

    while iter < MAX_ITERS {
        // Residuals.
        let ax = apply_a(prob, &x);
        let rp = &b - &ax;
        apply_at(prob, &y, &mut at_y);
        let mut rd = Blocks::zeros(&prob.block_sizes);
        for bi in 0..nb {
            rd.mats[bi] = &c_dense[bi] - &s.mats[bi] - &at_y.mats[bi];
        }
        let mu = x.inner(&s) / nu as f64;
        let obj_p = x
            .mats
            .iter()
            .zip(&c_dense)
            .map(|(xb, cb)| xb.dot(cb))
            .sum::<f64>();
        let obj_d = b.dot(&y);

        if std::env::var_os("PACE_SDP_TRACE").is_some() {
            eprintln!(
                "iter {iter}: mu {mu:.3e} obj_p {obj_p:.6e} obj_d {obj_d:.6e} rp {:.3e} rd {:.3e}",
                rp.norm(),
                rd.norm()
            );
        }
        let pres = rp.norm() / (1.0 + b_norm);
        let dres = rd.norm() / (1.0 + c_norm);
        let relgap = x.inner(&s) / (1.0 + obj_p.abs() + obj_d.abs());

        let merit = pres.max(dres).max(relgap);
        if best.as_ref().map_or(true, |(bm, ..)| merit < *bm) {
            best = Some((
                merit,
                Blocks { mats: x.mats.clone() },
                Blocks { mats: s.mats.clone() },
                y.clone(),
                iter,
            ));
            stalled_iters = 0;
        } else {
            // No merit progress: once the gap side is essentially done,
            // floating-point noise dominates near the optimal face and the
            // recorded best iterate is the answer.
            stalled_iters += 1;
            if (stalled_iters >= 4 && relgap <= 10.0 * tol) || stalled_iters >= 12 {
                break;
            }
        }

        if pres <= tol && dres <= tol && relgap <= tol {
            return Ok(finish(p, &row_scale, x, s, y, SdpStatus::Optimal, iter));
        }
        if !mu.is_finite() || mu > 1e10 * mu0.max(1.0) {
            return Err(Error::NumericalFailure(
                "interior-point iterates diverged (no strictly feasible point?)".into(),
            ));
        }
        // Past this point the complementarity gap is far below the request
        // while a residual is stuck at its floating-point floor; the best
        // iterate is the honest answer.
        let gap_scale = 1.0 + obj_p.abs() + obj_d.abs();
        if mu < 1e-3 * tol * gap_scale / nu as f64 {
            break;
        }

        // NT scaling per block: W = G G' with W S W = X. In the scaled space
        // both G^-1 X G^-T and G' S G equal the diagonal V = diag(lambda^1/2),
        // which makes the Lyapunov solves of the corrector trivial.
        let mut gs = Vec::with_capacity(nb);
        let mut ginvs = Vec::with_capacity(nb);
        let mut vdiags: Vec<DVector<f64>> = Vec::with_capacity(nb);
        let mut chol_x = Vec::with_capacity(nb);
        let mut chol_s = Vec::with_capacity(nb);
        for bi in 0..nb {
            let cx = chol_with_jitter(&x.mats[bi]).ok_or_else(|| {
                Error::NumericalFailure("primal block lost positive definiteness".into())
            })?;
            let cs = chol_with_jitter(&s.mats[bi]).ok_or_else(|| {
                Error::NumericalFailure("dual block lost positive definiteness".into())
            })?;
            let lx = cx.l();
            let mmat = lx.transpose() * &s.mats[bi] * &lx;
            let msym = (&mmat + mmat.transpose()) * 0.5;
            let eig = msym.symmetric_eigen();
            // G = Lx Q Lam^-1/4, G^-1 = Lam^1/4 Q' Lx^-1.
            let mut lam_qt = eig.eigenvectors.transpose();
            let mut lam_qt_inv = lam_qt.clone();
            let n = prob.block_sizes[bi];
            let mut v = DVector::zeros(n);
            let lmax = eig.eigenvalues.amax().max(1e-300);
            for (r, &l) in eig.eigenvalues.iter().enumerate() {
                let l = l.max(1e-15 * lmax);
                lam_qt.row_mut(r).scale_mut(l.powf(-0.25));
                lam_qt_inv.row_mut(r).scale_mut(l.powf(0.25));
                v[r] = l.sqrt();
            }
            let g = &lx * lam_qt.transpose();
            let lx_inv = lx
                .solve_lower_triangular(&DMatrix::identity(n, n))
                .ok_or_else(|| Error::NumericalFailure("singular Cholesky factor".into()))?;
            let ginv = lam_qt_inv * lx_inv;
            gs.push(g);
            ginvs.push(ginv);
            vdiags.push(v);
            chol_x.push(cx);
            chol_s.push(cs);
        }

        // Scaled constraints H_j = G' A_j G stacked into hm (one column per
        // constraint; columns of a column-major matrix are contiguous).
        for j in 0..m {
            let col_base = j * total_cells;
            let mut off = 0usize;
            for bi in 0..nb {
                let n = prob.block_sizes[bi];
                let g = &gs[bi];
                let dst =
                    &mut hm.as_mut_slice()[col_base + off..col_base + off + n * n];
                match &prob.constraints[j].blocks[bi] {
                    SymMat::Zero => dst.fill(0.0),
                    SymMat::Sparse(ts) => {
                        dst.fill(0.0);
                        // G' E_pq G has entries G[p,a] G[q,b].
                        for &(pi, qi, v) in ts {
                            let (pi, qi) = (pi as usize, qi as usize);
                            if pi == qi {
                                for a in 0..n {
                                    let gpa = v * g[(pi, a)];
                                    for bcol in 0..n {
                                        dst[a * n + bcol] += gpa * g[(pi, bcol)];
                                    }
                                }
                            } else {
                                for a in 0..n {
                                    let gpa = v * g[(pi, a)];
                                    let gqa = v * g[(qi, a)];
                                    for bcol in 0..n {
                                        dst[a * n + bcol] +=
                                            gpa * g[(qi, bcol)] + gqa * g[(pi, bcol)];
                                    }
                                }
                            }
                        }
                    }
                    SymMat::Dense(d) => {
                        let ad = DMatrix::from_fn(n, n, |r, cc| d[r * n + cc]);
                        let tmp = &ad * g;
                        let h = g.transpose() * tmp;
                        for a in 0..n {
                            for bcol in 0..n {
                                dst[a * n + bcol] = h[(a, bcol)];
                            }
                        }
                    }
                }
                off += n * n;
            }
        }

        // Schur complement H'H and its Cholesky.
        let hmt = hm.transpose();
        let schur = &hmt * &hm;
        let schur_chol = match chol_with_jitter(&schur) {
            Some(c) => c,
            None => {
                return Err(Error::NumericalFailure(
                    "Schur complement factorization failed".into(),
                ))
            }
        };

        // Shared pieces of the RHS: D = G' Rd G per block, flattened.
        let mut d_flat = DVector::<f64>::zeros(total_cells);
        {
            let mut off = 0usize;
            for bi in 0..nb {
                let n = prob.block_sizes[bi];
                let g = &gs[bi];
                let h = g.transpose() * &rd.mats[bi] * g;
                for a in 0..n {
                    for bcol in 0..n {
                        d_flat[off + a * n + bcol] = h[(a, bcol)];
                    }
                }
                off += n * n;
            }
        }
        let a_wrdw = hmt * &d_flat; // <A_j, W Rd W> for all j

        let solve_dir = |rc: &Blocks| -> (Blocks, DVector<f64>, Blocks) {
            // rhs_j = rp_j - <A_j, Rc> + <A_j, W Rd W>
            let mut rhs = DVector::zeros(m);
            for j in 0..m {
                let mut a_rc = 0.0;
                for (ab, rcb) in prob.constraints[j].blocks.iter().zip(&rc.mats) {
                    a_rc += ab.inner(rcb);
                }
                rhs[j] = rp[j] - a_rc + a_wrdw[j];
            }
            // The Schur complement conditioning grows like 1/mu^2; two
            // rounds of iterative refinement keep the direction accurate
            // enough that primal feasibility does not regrow near the end.
            let mut dy = schur_chol.solve(&rhs);
            for _ in 0..2 {
                let resid = &rhs - &schur * &dy;
                dy += schur_chol.solve(&resid);
            }
            // dS = Rd - A'(dy); dX = Rc - W dS W.
            let mut ds = Blocks::zeros(&prob.block_sizes);
            for bi in 0..nb {
                ds.mats[bi] = rd.mats[bi].clone();
            }
            for (j, a) in prob.constraints.iter().enumerate() {
                let v = dy[j];
                if v != 0.0 {
                    for (ab, db) in a.blocks.iter().zip(ds.mats.iter_mut()) {
                        ab.add_scaled_to(db, -v);
                    }
                }
            }
            let mut dx = Blocks::zeros(&prob.block_sizes);
            for bi in 0..nb {
                let g = &gs[bi];
                let wdsw = g * (g.transpose() * &ds.mats[bi] * g) * g.transpose();
                let wdsw = (&wdsw + wdsw.transpose()) * 0.5;
                dx.mats[bi] = &rc.mats[bi] - wdsw;
            }
            (dx, dy, ds)
        };

        // Predictor (affine scaling): Rc = -X.
        let mut rc = Blocks::zeros(&prob.block_sizes);
        for bi in 0..nb {
            rc.mats[bi] = -&x.mats[bi];
        }
        let (dxa, _dya, dsa) = solve_dir(&rc);

        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for bi in 0..nb {
            ap = ap.min(max_step(&chol_x[bi], &dxa.mats[bi]));
            ad = ad.min(max_step(&chol_s[bi], &dsa.mats[bi]));
        }
        let ap_aff = ap.min(1.0);
        let ad_aff = ad.min(1.0);

        let mut xa = Blocks {
            mats: x.mats.clone(),
        };
        xa.axpy(ap_aff, &dxa);
        let mut sa = Blocks {
            mats: s.mats.clone(),
        };
        sa.axpy(ad_aff, &dsa);
        let mu_aff = (xa.inner(&sa) / nu as f64).max(0.0);
        // Mehrotra sigma, floored so the gap lands near the tolerance target
        // instead of overshooting into the numerical noise floor.
        let mu_target = 0.1 * tol * gap_scale / nu as f64;
        let sigma = ((mu_aff / mu).powi(3))
            .max((mu_target / mu).min(1.0))
            .clamp(1e-10, 1.0);

        // Corrector in the scaled space: with V diagonal, the Lyapunov solve
        // L_V^-1(sym(dXa_hat dSa_hat)) is entrywise division by (v_i + v_j).
        //   Rc_hat = sigma*mu*V^-1 - V - L_V^-1(sym(dXa_hat dSa_hat))
        //   Rc     = G Rc_hat G'
        let mut rc = Blocks::zeros(&prob.block_sizes);
        for bi in 0..nb {
            let n = prob.block_sizes[bi];
            let g = &gs[bi];
            let ginv = &ginvs[bi];
            let v = &vdiags[bi];
            let dxh = ginv * &dxa.mats[bi] * ginv.transpose();
            let dsh = g.transpose() * &dsa.mats[bi] * g;
            let prod = &dxh * &dsh;
            let mut rch = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let theta = 0.5 * (prod[(i, j)] + prod[(j, i)]);
                    rch[(i, j)] = -2.0 * theta / (v[i] + v[j]);
                }
                rch[(i, i)] += sigma * mu / v[i] - v[i];
            }
            rc.mats[bi] = g * rch * g.transpose();
            rc.mats[bi] = (&rc.mats[bi] + rc.mats[bi].transpose()) * 0.5;
        }
        let (dx, dy, ds) = solve_dir(&rc);

        let mut ap_raw = f64::INFINITY;
        let mut ad_raw = f64::INFINITY;
        for bi in 0..nb {
            ap_raw = ap_raw.min(max_step(&chol_x[bi], &dx.mats[bi]));
            ad_raw = ad_raw.min(max_step(&chol_s[bi], &ds.mats[bi]));
        }
        let gamma = 0.9 + 0.09 * ap_raw.min(ad_raw).min(1.0);
        let mut ap = (gamma * ap_raw).min(1.0);
        let mut ad = (gamma * ad_raw).min(1.0);

        // Keep iterates strictly inside the cone.
        for _ in 0..30 {
            let mut xt = Blocks {
                mats: x.mats.clone(),
            };
            xt.axpy(ap, &dx);
            if xt.mats.iter().all(|mb| Cholesky::new(mb.clone()).is_some()) {
                break;
            }
            ap *= 0.8;
        }
        for _ in 0..30 {
            let mut st = Blocks {
                mats: s.mats.clone(),
            };
            st.axpy(ad, &ds);
            if st.mats.iter().all(|mb| Cholesky::new(mb.clone()).is_some()) {
                break;
            }
            ad *= 0.8;
        }

        x.axpy(ap, &dx);
        s.axpy(ad, &ds);
        y += ad * &dy;

        if ap.min(ad) < 1e-4 {
            consecutive_tiny_steps += 1;
            if consecutive_tiny_steps >= 3 {
                break; // stalled; return best iterate below
            }
        } else {
            consecutive_tiny_steps = 0;
        }

        iter += 1;
    }

    let (_, bx, bs, by, bit) = best.expect("at least one iterate recorded");
    Ok(finish(p, &row_scale, bx, bs, by, SdpStatus::MaxIterations, bit.max(iter)))
}

fn finish(
    orig: &SdpProblem,
    row_scale: &[f64],
    x: Blocks,
    s: Blocks,
    y_scaled: DVector<f64>,
    status: SdpStatus,
    iterations: usize,
) -> SdpSolution {
    // Undo row normalization: scaled row j was s_j * A_j, so y_orig = s_j * y_j.
    let y: Vec<f64> = y_scaled
        .iter()
        .zip(row_scale)
        .map(|(v, s)| v * s)
        .collect();

    let nb = orig.block_sizes.len();
    let obj_p: f64 = orig
        .objective
        .blocks
        .iter()
        .zip(&x.mats)
        .map(|(cb, xb)| cb.inner(xb))
        .sum();
    let obj_d: f64 = orig.rhs.iter().zip(&y).map(|(b, v)| b * v).sum();

    // Recompute KKT residuals from the returned values only.
    let ax: Vec<f64> = orig
        .constraints
        .iter()
        .map(|a| {
            a.blocks
                .iter()
                .zip(&x.mats)
                .map(|(ab, xb)| ab.inner(xb))
                .sum::<f64>()
        })
        .collect();
    let b_norm = orig.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let primal_res = orig
        .rhs
        .iter()
        .zip(&ax)
        .map(|(b, v)| (b - v) * (b - v))
        .sum::<f64>()
        .sqrt()
        / (1.0 + b_norm);

    let mut dual_viol = 0.0f64;
    let mut c_norm2 = 0.0f64;
    for bi in 0..nb {
        let n = orig.block_sizes[bi];
        let mut rd = orig.objective.blocks[bi].to_dense(n);
        c_norm2 += rd.norm_squared();
        for (j, a) in orig.constraints.iter().enumerate() {
            a.blocks[bi].add_scaled_to(&mut rd, -y[j]);
        }
        rd -= &s.mats[bi];
        dual_viol += rd.norm_squared();
    }
    let dual_res = dual_viol.sqrt() / (1.0 + c_norm2.sqrt());

    let xs: f64 = x.mats.iter().zip(&s.mats).map(|(a, b)| a.dot(b)).sum();
    let comp_gap = xs / (1.0 + obj_p.abs() + obj_d.abs());

    SdpSolution {
        primal: x.mats,
        dual: y,
        objective: obj_p,
        dual_objective: obj_d,
        slack: s.mats,
        kkt: KktResiduals {
            primal_res,
            dual_res,
            comp_gap,
        },
        status,
        iterations,
    }
}
