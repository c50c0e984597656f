//! Multivariate polynomials over the solver variables `x = [vec(R); c]`,
//! with the graded lexicographic monomial order pinned for reproducibility.

use std::collections::BTreeMap;

/// Monomial as an exponent vector over `dim` variables.
pub type Mono = Vec<u8>;

/// Sparse polynomial: exponent vector -> coefficient. BTreeMap keeps
/// iteration deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Poly {
    pub terms: BTreeMap<Mono, f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(dim: usize, v: f64) -> Self {
        let mut p = Poly::zero();
        p.add_term(vec![0; dim], v);
        p
    }

    pub fn add_term(&mut self, mono: Mono, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        match self.terms.entry(mono) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let v = e.get() + coeff;
                if v == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|m| m.iter().map(|&e| e as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (m, &coeff) in &self.terms {
            let mut t = coeff;
            for (i, &e) in m.iter().enumerate() {
                for _ in 0..e {
                    t *= x[i];
                }
            }
            s += t;
        }
        s
    }

    /// Multiplies by a single monomial.
    pub fn times_mono(&self, mono: &Mono) -> Poly {
        let mut out = Poly::zero();
        for (m, &c) in &self.terms {
            let prod: Mono = m.iter().zip(mono).map(|(a, b)| a + b).collect();
            out.add_term(prod, c);
        }
        out
    }
}

pub fn mono_degree(m: &Mono) -> usize {
    m.iter().map(|&e| e as usize).sum()
}

pub fn mono_mul(a: &Mono, b: &Mono) -> Mono {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// All monomials of degree <= `max_deg` in `dim` variables, graded
/// lexicographic: degree ascending, and within a degree the variable-index
/// tuples `(i1 <= i2 <= ...)` in lexicographic order. Degree one lists the
/// variables in their natural order, so the lifted vector starts
/// `[1, x_1, ..., x_d, x_1^2, x_1 x_2, ...]`.
pub fn monomials_up_to(dim: usize, max_deg: usize) -> Vec<Mono> {
    let mut out = Vec::new();
    for deg in 0..=max_deg {
        if deg == 0 {
            out.push(vec![0; dim]);
            continue;
        }
        // Non-decreasing variable-index tuples of length `deg`.
        let mut idx: Vec<usize> = vec![0; deg];
        'enumerate: loop {
            let mut m = vec![0u8; dim];
            for &v in &idx {
                m[v] += 1;
            }
            out.push(m);
            // Advance: rightmost position that can still increase.
            let mut p = deg;
            loop {
                if p == 0 {
                    break 'enumerate;
                }
                p -= 1;
                if idx[p] + 1 < dim {
                    idx[p] += 1;
                    let v = idx[p];
                    for t in p + 1..deg {
                        idx[t] = v;
                    }
                    continue 'enumerate;
                }
            }
        }
    }
    out
}
