//! Order-2 moment relaxation of the polynomial problem, plus the reduced
//! formulation actually handed to the interior-point kernel.
//!
//! The relaxation in its standard multi-block primal form has one row per
//! moment-matrix consistency cell, localizing-matrix cell and
//! equality-times-monomial product, several thousand rows for realistic
//! shape counts. All of that structure is data independent: only the
//! objective changes between instances. The constraint system is therefore
//! eliminated once per shape count; the independent rows feed the pinned
//! primal form, and the nullspace parametrization yields an equivalent SDP
//! whose row count equals the dimension of the feasible moment subspace,
//! which is what gets solved.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use super::poly::{mono_mul, monomials_up_to, Mono, Poly};
use super::pop::PopProblem;
use crate::optkernels::{solve_sdp, BlockSym, SdpProblem, SdpSolution, SymMat};
use crate::{Error, Result};

/// Moment relaxation in the standard multi-block primal form: moment block
/// `X_0` over the degree-<=2 basis plus one localizing block per inequality.
#[derive(Debug, Clone)]
pub struct MomentRelaxation {
    /// Degree-<=2 monomial basis indexing `X_0`, graded lexicographic.
    pub basis: Vec<Mono>,
    pub sdp: SdpProblem,
}

/// Data-independent relaxation structure for a fixed variable count.
pub(crate) struct Template {
    pub dim: usize,
    pub num_shapes: usize,
    pub n0: usize,
    pub basis2: Vec<Mono>,
    pub basis1_len: usize,
    pub mono4: Vec<Mono>,
    pub mono_index: HashMap<Mono, usize>,
    /// All upper cells `(a, b)` of `X_0` sharing each monomial.
    pub groups: Vec<Vec<(u32, u32)>>,
    /// First cell of each group.
    pub rep_cell: Vec<(u32, u32)>,
    /// Localizing cell expansions: for inequality `j`, upper cell `(a,b)`
    /// maps to the moment combination `sum_t coeff_t y_{mono_t}`.
    pub loc_cells: Vec<Vec<((u32, u32), Vec<(usize, f64)>)>>,
    /// Independent equality-times-monomial rows in monomial space.
    pub selected_rows: Vec<Vec<(usize, f64)>>,
    /// Nullspace basis of the equality system (one column per free moment).
    pub nullspace: DMatrix<f64>,
    /// Particular solution with `y_const = 1`.
    pub y_particular: DVector<f64>,
    /// Reduced SDP: `A_i = -L(N_i)`, `C = L(y_p)`; only `b` is per instance.
    pub red_block_sizes: Vec<usize>,
    pub red_constraints: Vec<BlockSym>,
    pub red_objective: BlockSym,
}

static TEMPLATES: OnceLock<Mutex<BTreeMap<usize, Arc<Template>>>> = OnceLock::new();

pub(crate) fn template_for(num_shapes: usize) -> Result<Arc<Template>> {
    let cache = TEMPLATES.get_or_init(|| Mutex::new(BTreeMap::new()));
    {
        let guard = cache.lock().unwrap();
        if let Some(t) = guard.get(&num_shapes) {
            return Ok(t.clone());
        }
    }
    let t = Arc::new(build_template(num_shapes)?);
    cache.lock().unwrap().insert(num_shapes, t.clone());
    Ok(t)
}

/// Standard equality polynomials for `K` shapes: 15 SO(3) quadrics plus the
/// sum-to-one line.
fn standard_equalities(dim: usize, k: usize) -> Vec<Poly> {
    let mut eqs = super::pop::so3_polynomials(dim);
    let mut sum_one = Poly::constant(dim, -1.0);
    for kk in 0..k {
        let mut mono = vec![0u8; dim];
        mono[9 + kk] = 1;
        sum_one.add_term(mono, 1.0);
    }
    eqs.push(sum_one);
    eqs
}

fn standard_inequalities(dim: usize, k: usize) -> Vec<Poly> {
    let mut ineqs = Vec::with_capacity(k + 1);
    for kk in 0..k {
        let mut p = Poly::zero();
        let mut mono = vec![0u8; dim];
        mono[9 + kk] = 1;
        p.add_term(mono, 1.0);
        ineqs.push(p);
    }
    let mut ball = Poly::constant(dim, 1.0);
    for kk in 0..k {
        let mut mono = vec![0u8; dim];
        mono[9 + kk] = 2;
        ball.add_term(mono, -1.0);
    }
    ineqs.push(ball);
    ineqs
}

fn build_template(k: usize) -> Result<Template> {
    let dim = k + 9;
    let basis2 = monomials_up_to(dim, 2);
    let n0 = basis2.len();
    let basis1_len = dim + 1;
    let mono4 = monomials_up_to(dim, 4);
    let m4 = mono4.len();
    let mono_index: HashMap<Mono, usize> = mono4
        .iter()
        .enumerate()
        .map(|(i, m)| (m.clone(), i))
        .collect();

    // Moment-matrix cell structure.
    let mut groups: Vec<Vec<(u32, u32)>> = vec![Vec::new(); m4];
    for a in 0..n0 {
        for b in a..n0 {
            let m = mono_mul(&basis2[a], &basis2[b]);
            let idx = mono_index[&m];
            groups[idx].push((a as u32, b as u32));
        }
    }
    let rep_cell: Vec<(u32, u32)> = groups
        .iter()
        .map(|g| *g.first().expect("every degree-<=4 monomial splits"))
        .collect();

    // Localizing cell expansions over the degree-<=1 basis.
    let basis1 = monomials_up_to(dim, 1);
    let ineqs = standard_inequalities(dim, k);
    let mut loc_cells = Vec::with_capacity(ineqs.len());
    for g in &ineqs {
        let mut cells = Vec::new();
        for a in 0..basis1_len {
            for b in a..basis1_len {
                let base = mono_mul(&basis1[a], &basis1[b]);
                let mut terms = Vec::new();
                for (gm, &gc) in &g.terms {
                    let full = mono_mul(&base, gm);
                    terms.push((mono_index[&full], gc));
                }
                cells.push(((a as u32, b as u32), terms));
            }
        }
        loc_cells.push(cells);
    }

    // Equality system rows in monomial space. Row 0 pins the constant
    // moment to one; the rest are equality-times-multiplier products.
    let eqs = standard_equalities(dim, k);
    let mut raw_rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut raw_rhs: Vec<f64> = Vec::new();
    raw_rows.push(vec![(0, 1.0)]); // the constant monomial is index 0
    raw_rhs.push(1.0);
    for h in &eqs {
        let max_mult = 4 - h.degree();
        for mult in monomials_up_to(dim, max_mult) {
            let prod = h.times_mono(&mult);
            let row: Vec<(usize, f64)> = prod
                .terms
                .iter()
                .map(|(m, &c)| (mono_index[m], c))
                .collect();
            raw_rows.push(row);
            raw_rhs.push(0.0);
        }
    }

    // Dense Gaussian elimination with max-abs pivoting; incoming rows are
    // reduced against the accepted echelon, and a final pass produces the
    // reduced row echelon form needed for the nullspace.
    let mut echelon: Vec<Vec<f64>> = Vec::new();
    let mut ech_rhs: Vec<f64> = Vec::new();
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut selected: Vec<usize> = Vec::new();
    for (orig, row) in raw_rows.iter().enumerate() {
        let mut dense = vec![0.0f64; m4];
        for &(c, v) in row {
            dense[c] += v;
        }
        let mut rhs = raw_rhs[orig];
        for (r, (e, &pc)) in echelon.iter().zip(&pivot_cols).enumerate() {
            let f = dense[pc];
            if f != 0.0 {
                for (d, ev) in dense.iter_mut().zip(e) {
                    *d -= f * ev;
                }
                rhs -= f * ech_rhs[r];
            }
        }
        let (mut best_col, mut best_abs) = (0usize, 0.0f64);
        for (c, &v) in dense.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best_col = c;
            }
        }
        if best_abs > 1e-8 {
            let inv = 1.0 / dense[best_col];
            for v in dense.iter_mut() {
                *v *= inv;
            }
            rhs *= inv;
            echelon.push(dense);
            ech_rhs.push(rhs);
            pivot_cols.push(best_col);
            selected.push(orig);
        } else if rhs.abs() > 1e-7 {
            return Err(Error::NumericalFailure(
                "inconsistent moment equality system".into(),
            ));
        }
    }
    // Back-substitution to reduced row echelon form.
    for r in (0..echelon.len()).rev() {
        let pc = pivot_cols[r];
        let (head, tail) = echelon.split_at_mut(r);
        let rhs_r = ech_rhs[r];
        let row_r: &Vec<f64> = &tail[0];
        for (e, rhs_e) in head.iter_mut().zip(ech_rhs.iter_mut()) {
            let f = e[pc];
            if f != 0.0 {
                for (d, v) in e.iter_mut().zip(row_r) {
                    *d -= f * v;
                }
                *rhs_e -= f * rhs_r;
            }
        }
    }

    let rank = echelon.len();
    let mut is_pivot = vec![false; m4];
    for &pc in &pivot_cols {
        is_pivot[pc] = true;
    }
    let free_cols: Vec<usize> = (0..m4).filter(|&c| !is_pivot[c]).collect();
    let n_free = free_cols.len();
    debug_assert_eq!(rank + n_free, m4);

    let mut nullspace = DMatrix::zeros(m4, n_free);
    for (f, &fc) in free_cols.iter().enumerate() {
        nullspace[(fc, f)] = 1.0;
        for (r, &pc) in pivot_cols.iter().enumerate() {
            let v = echelon[r][fc];
            if v != 0.0 {
                nullspace[(pc, f)] = -v;
            }
        }
    }
    let mut y_particular = DVector::zeros(m4);
    for (r, &pc) in pivot_cols.iter().enumerate() {
        y_particular[pc] = ech_rhs[r];
    }

    // Selected equality rows, excluding the pinned constant row.
    let selected_rows: Vec<Vec<(usize, f64)>> = selected
        .iter()
        .filter(|&&o| o > 0)
        .map(|&o| raw_rows[o].clone())
        .collect();

    // Reduced SDP structure.
    let mut red_block_sizes = vec![n0];
    red_block_sizes.extend(std::iter::repeat(basis1_len).take(ineqs.len()));
    let lmap = |y: &dyn Fn(usize) -> f64| -> Vec<SymMat> {
        let mut blocks = Vec::with_capacity(1 + loc_cells.len());
        let mut x0 = vec![0.0f64; n0 * n0];
        for (idx, cells) in groups.iter().enumerate() {
            let v = y(idx);
            if v != 0.0 {
                for &(a, b) in cells {
                    let (a, b) = (a as usize, b as usize);
                    x0[a * n0 + b] = v;
                    x0[b * n0 + a] = v;
                }
            }
        }
        blocks.push(SymMat::Dense(x0));
        for cells in &loc_cells {
            let mut xb = vec![0.0f64; basis1_len * basis1_len];
            for ((a, b), terms) in cells {
                let mut v = 0.0;
                for &(idx, c) in terms {
                    v += c * y(idx);
                }
                let (a, b) = (*a as usize, *b as usize);
                xb[a * basis1_len + b] = v;
                xb[b * basis1_len + a] = v;
            }
            blocks.push(SymMat::Dense(xb));
        }
        blocks
    };

    let mut red_constraints = Vec::with_capacity(n_free);
    for f in 0..n_free {
        let col = nullspace.column(f);
        let blocks = lmap(&|idx| -col[idx]);
        red_constraints.push(BlockSym { blocks });
    }
    let red_objective = BlockSym {
        blocks: lmap(&|idx| y_particular[idx]),
    };

    Ok(Template {
        dim,
        num_shapes: k,
        n0,
        basis2,
        basis1_len,
        mono4,
        mono_index,
        groups,
        rep_cell,
        loc_cells,
        selected_rows,
        nullspace,
        y_particular,
        red_block_sizes,
        red_constraints,
        red_objective,
    })
}

/// Accumulates symmetric sparse triplets with `<A, X>` semantics: adding
/// `val` for cell `(a, b)` contributes `val * X[a, b]`.
struct SymBuilder {
    map: BTreeMap<(u32, u32), f64>,
}

impl SymBuilder {
    fn new() -> Self {
        SymBuilder {
            map: BTreeMap::new(),
        }
    }
    fn add(&mut self, a: u32, b: u32, val: f64) {
        let key = if a <= b { (a, b) } else { (b, a) };
        let scaled = if key.0 == key.1 { val } else { val / 2.0 };
        *self.map.entry(key).or_insert(0.0) += scaled;
    }
    fn build(self) -> SymMat {
        let ts: Vec<(u32, u32, f64)> = self
            .map
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((a, b), v)| (a, b, v))
            .collect();
        if ts.is_empty() {
            SymMat::Zero
        } else {
            SymMat::Sparse(ts)
        }
    }
}

/// Builds the pinned multi-block primal form of the order-2 relaxation:
/// moment block of size `C(K+11, 2)`, one localizing block per inequality,
/// moment consistency and equality-product rows folded into `A(X) = b`, and
/// the objective carried entirely by the moment block.
pub fn build_moment_relaxation(pop: &PopProblem) -> Result<MomentRelaxation> {
    if pop.objective.degree() > 4 {
        return Err(Error::InvalidProblem("objective degree exceeds 4".into()));
    }
    let tpl = template_for(pop.num_shapes)?;
    if pop.dim != tpl.dim {
        return Err(Error::InvalidProblem("dimension mismatch".into()));
    }
    let n0 = tpl.n0;
    let nb = 1 + tpl.loc_cells.len();
    let block_sizes: Vec<usize> = std::iter::once(n0)
        .chain(std::iter::repeat(tpl.basis1_len).take(nb - 1))
        .collect();

    // Objective on representative cells of the moment block.
    let mut cb = SymBuilder::new();
    for (m, &coeff) in &pop.objective.terms {
        let idx = *tpl
            .mono_index
            .get(m)
            .ok_or_else(|| Error::InvalidProblem("objective monomial out of range".into()))?;
        let (a, b) = tpl.rep_cell[idx];
        cb.add(a, b, coeff);
    }
    let mut objective = BlockSym::zero(nb);
    objective.blocks[0] = cb.build();

    let mut constraints = Vec::new();
    let mut rhs = Vec::new();

    // Constant moment pinned to one.
    {
        let mut row = SymBuilder::new();
        row.add(0, 0, 1.0);
        let mut bs = BlockSym::zero(nb);
        bs.blocks[0] = row.build();
        constraints.push(bs);
        rhs.push(1.0);
    }
    // Moment-matrix consistency: equate duplicated cells chainwise.
    for cells in tpl.groups.iter() {
        for w in cells.windows(2) {
            let mut row = SymBuilder::new();
            row.add(w[0].0, w[0].1, 1.0);
            row.add(w[1].0, w[1].1, -1.0);
            let mut bs = BlockSym::zero(nb);
            bs.blocks[0] = row.build();
            constraints.push(bs);
            rhs.push(0.0);
        }
    }
    // Independent equality-times-monomial rows on representative cells.
    for srow in &tpl.selected_rows {
        let mut row = SymBuilder::new();
        for &(idx, coeff) in srow {
            let (a, b) = tpl.rep_cell[idx];
            row.add(a, b, coeff);
        }
        let mut bs = BlockSym::zero(nb);
        bs.blocks[0] = row.build();
        constraints.push(bs);
        rhs.push(0.0);
    }
    // Localizing definitions: X_j cell minus its moment combination.
    for (j, cells) in tpl.loc_cells.iter().enumerate() {
        for ((a, b), terms) in cells {
            let mut x0row = SymBuilder::new();
            for &(idx, coeff) in terms {
                let (ra, rb) = tpl.rep_cell[idx];
                x0row.add(ra, rb, -coeff);
            }
            let mut loc = SymBuilder::new();
            loc.add(*a, *b, 1.0);
            let mut bs = BlockSym::zero(nb);
            bs.blocks[0] = x0row.build();
            bs.blocks[1 + j] = loc.build();
            constraints.push(bs);
            rhs.push(0.0);
        }
    }

    Ok(MomentRelaxation {
        basis: tpl.basis2.clone(),
        sdp: SdpProblem {
            block_sizes,
            objective,
            constraints,
            rhs,
        },
    })
}

/// Result of solving the relaxation through the reduced formulation.
pub(crate) struct RelaxationSolution {
    /// Moment matrix `X_0` reconstructed from the optimal moment vector.
    pub x0: DMatrix<f64>,
    /// Certified lower bound on the polynomial optimum.
    pub f_lower: f64,
    /// Objective of the PSD-feasible moment iterate (upper window edge).
    pub f_moment: f64,
    pub sdp: SdpSolution,
}

/// Solves the relaxation by substituting the equality system's nullspace
/// parametrization into the kernel's standard form, then reconstructs the
/// moment matrix from the optimal moments.
pub(crate) fn solve_relaxation(
    tpl: &Template,
    pop: &PopProblem,
    tol: f64,
) -> Result<RelaxationSolution> {
    let m4 = tpl.mono4.len();
    let mut p = DVector::zeros(m4);
    for (m, &coeff) in &pop.objective.terms {
        let idx = *tpl
            .mono_index
            .get(m)
            .ok_or_else(|| Error::InvalidProblem("objective monomial out of range".into()))?;
        p[idx] += coeff;
    }
    let p_shift = p.dot(&tpl.y_particular);
    let q = tpl.nullspace.transpose() * &p;
    let rhs: Vec<f64> = q.iter().map(|v| -v).collect();

    let prob = SdpProblem {
        block_sizes: tpl.red_block_sizes.clone(),
        objective: tpl.red_objective.clone(),
        constraints: tpl.red_constraints.clone(),
        rhs,
    };
    let sol = solve_sdp(&prob, tol)?;

    // y* = y_p + N v with v the dual vector of the reduced problem.
    let v = DVector::from_column_slice(&sol.dual);
    let y = &tpl.y_particular + &tpl.nullspace * v;
    let n0 = tpl.n0;
    let mut x0 = DMatrix::zeros(n0, n0);
    for (idx, cells) in tpl.groups.iter().enumerate() {
        for &(a, b) in cells {
            let (a, b) = (a as usize, b as usize);
            x0[(a, b)] = y[idx];
            x0[(b, a)] = y[idx];
        }
    }
    let f_lower = p_shift - sol.objective;
    let f_moment = p.dot(&y);
    Ok(RelaxationSolution {
        x0,
        f_lower,
        f_moment,
        sdp: sol,
    })
}
