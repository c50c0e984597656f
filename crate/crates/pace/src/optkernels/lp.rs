//! LP feasibility for small half-space systems in R^3.

use crate::Result;

/// Half-space system: each row encodes `a . o + b >= margin`.
#[derive(Debug, Clone)]
pub struct LpFeasibility {
    pub rows: Vec<([f64; 3], f64)>,
    /// Required strict margin, > 0.
    pub margin: f64,
}

/// Box bound on the witness search; covisibility regions of unit-scale
/// shapes always intersect this box when nonempty.
const WITNESS_BOX: f64 = 1e6;

impl LpFeasibility {
    pub fn new(rows: Vec<([f64; 3], f64)>, margin: f64) -> Result<Self> {
        if margin <= 0.0 || !margin.is_finite() {
            return Err(crate::Error::InvalidProblem("margin must be > 0".into()));
        }
        for (a, b) in &rows {
            if !a.iter().all(|x| x.is_finite()) || !b.is_finite() {
                return Err(crate::Error::InvalidProblem("non-finite row".into()));
            }
        }
        Ok(LpFeasibility { rows, margin })
    }
}

/// Decides feasibility of the half-space system by maximizing the common
/// margin `s` with a phase-style simplex over `max s  s.t.  a_i.o + b_i >= s`,
/// the witness constrained to a large box. Feasible iff the maximal margin
/// reaches `margin`; the returned witness then satisfies every row with at
/// least that margin.
pub fn lp_feasible(p: &LpFeasibility) -> (bool, Option<[f64; 3]>) {
    let c = p.margin;

    // Zero-normal rows cannot be influenced by the witness.
    let mut rows = Vec::new();
    for (a, b) in &p.rows {
        let norm = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        if norm < 1e-15 {
            if *b < c {
                return (false, None);
            }
        } else {
            rows.push((*a, *b));
        }
    }
    if rows.is_empty() {
        return (true, Some([0.0; 3]));
    }

    // Variables x = [o1+, o2+, o3+, o1-, o2-, o3-, s] >= 0 with s capped, and
    // inequality rows in `A x <= rhs` form:
    //   s - a.o <= b_i          (margin rows)
    //   oj+ <= M, oj- <= M      (box)
    //   s <= 2c + 1             (cap keeps the LP bounded)
    let nv = 7;
    let m = rows.len() + 7;
    let mut a = vec![vec![0.0; nv]; m];
    let mut rhs = vec![0.0; m];
    for (i, (ai, bi)) in rows.iter().enumerate() {
        for j in 0..3 {
            a[i][j] = -ai[j];
            a[i][3 + j] = ai[j];
        }
        a[i][6] = 1.0;
        rhs[i] = *bi;
    }
    for j in 0..6 {
        a[rows.len() + j][j] = 1.0;
        rhs[rows.len() + j] = WITNESS_BOX;
    }
    a[rows.len() + 6][6] = 1.0;
    rhs[rows.len() + 6] = 2.0 * c + 1.0;

    let mut obj = vec![0.0; nv];
    obj[6] = 1.0;

    let x = match simplex_max(&a, &rhs, &obj) {
        Some(x) => x,
        None => return (false, None),
    };
    let s = x[6];
    if s >= c {
        let o = [x[0] - x[3], x[1] - x[4], x[2] - x[5]];
        (true, Some(o))
    } else {
        (false, None)
    }
}

/// Textbook tableau simplex for `max obj.x  s.t.  A x <= rhs, x >= 0` with
/// `rhs` possibly negative handled by a big-M-free two-phase method.
/// Returns the maximizer, or None if infeasible. Bland's rule prevents
/// cycling; problems here are tiny.
fn simplex_max(a: &[Vec<f64>], rhs: &[f64], obj: &[f64]) -> Option<Vec<f64>> {
    let m = a.len();
    let n = obj.len();

    // rhs >= 0 always here? No: margin rows can have negative b. Use the
    // standard trick: multiply violating rows by -1 and run phase 1 with
    // artificial variables.
    let mut t = vec![vec![0.0; n + m + m + 1]; m + 1]; // slack + artificial
    let mut basis = vec![0usize; m];
    let mut need_phase1 = false;
    for i in 0..m {
        let flip = rhs[i] < 0.0;
        let sgn = if flip { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sgn * a[i][j];
        }
        t[i][n + i] = sgn; // slack
        t[i][n + m + i] = 1.0; // artificial
        t[i][n + m + m] = sgn * rhs[i];
        if flip {
            need_phase1 = true;
        }
        basis[i] = n + m + i;
    }

    let total = n + m + m;
    if need_phase1 {
        // Phase 1: minimize sum of artificials.
        for j in 0..=total {
            let mut s = 0.0;
            for row in t.iter().take(m) {
                s += row[j];
            }
            t[m][j] = -s; // we maximize -(sum of artificials)
        }
        for i in 0..m {
            t[m][n + m + i] = 0.0;
        }
        if !pivot_loop(&mut t, &mut basis, total) {
            return None;
        }
        let p1 = -t[m][total];
        if p1 > 1e-7 {
            return None; // infeasible
        }
        // Drive lingering artificials out of the basis where possible.
        for i in 0..m {
            if basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| t[i][j].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, j);
                }
            }
        }
    } else {
        for i in 0..m {
            basis[i] = n + i;
            t[i][n + m + i] = 0.0;
        }
    }

    // Phase 2 objective row (artificials locked out).
    for j in 0..=total {
        t[m][j] = 0.0;
    }
    for j in 0..n {
        t[m][j] = -obj[j];
    }
    // Restore reduced costs w.r.t. the current basis.
    for i in 0..m {
        let bi = basis[i];
        if bi < n && t[m][bi].abs() > 0.0 {
            let f = t[m][bi];
            for j in 0..=total {
                t[m][j] -= f * t[i][j];
            }
        }
    }
    for i in 0..m {
        t[m][n + m + i] = f64::INFINITY; // never re-enter artificials
    }
    if !pivot_loop(&mut t, &mut basis, total) {
        return None;
    }

    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][total];
        }
    }
    Some(x)
}

fn pivot_loop(t: &mut [Vec<f64>], basis: &mut [usize], total: usize) -> bool {
    let m = basis.len();
    for _ in 0..10_000 {
        // Bland: smallest index with negative reduced cost.
        let mut col = None;
        for j in 0..total {
            if t[m][j] < -1e-10 && t[m][j].is_finite() {
                col = Some(j);
                break;
            }
        }
        let Some(col) = col else { return true };
        // Ratio test, Bland tie-break on basis index.
        let mut row = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][col] > 1e-10 {
                let r = t[i][total] / t[i][col];
                if r < best - 1e-12 || (r < best + 1e-12 && row.map_or(true, |p: usize| basis[i] < basis[p]))
                {
                    best = r;
                    row = Some(i);
                }
            }
        }
        let Some(row) = row else { return false }; // unbounded
        pivot(t, basis, row, col);
    }
    false
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let width = t[0].len();
    let pv = t[row][col];
    for j in 0..width {
        t[row][j] /= pv;
    }
    for i in 0..t.len() {
        if i != row {
            let f = t[i][col];
            if f != 0.0 && f.is_finite() {
                for j in 0..width {
                    let v = t[row][j];
                    t[i][j] -= f * v;
                }
            }
        }
    }
    if row < basis.len() {
        basis[row] = col;
    }
}
