//! Exact maximum clique and maximum hyperclique search.

use super::{for_each_combination, CompatibilityHypergraph};
use crate::{Error, Result};

/// Fixed-capacity bitset over node indices.
#[derive(Clone, PartialEq, Eq)]
struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    fn new(n: usize) -> Self {
        BitSet {
            words: vec![0; n.div_ceil(64)],
        }
    }
    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }
    fn clear(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }
    fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }
    fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }
    fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }
    fn and(&self, other: &BitSet) -> BitSet {
        BitSet {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }
    fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

/// Exact maximum clique of an ordinary (2-uniform) compatibility graph via
/// branch-and-bound with greedy-coloring upper bounds. Among all maximum
/// cliques the lexicographically smallest node set is returned.
pub fn max_clique(g: &CompatibilityHypergraph) -> Result<Vec<usize>> {
    if g.uniformity() != 2 {
        return Err(Error::InvalidInput("max_clique needs a 2-uniform graph".into()));
    }
    let n = g.num_nodes();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut adj: Vec<BitSet> = (0..n).map(|_| BitSet::new(n)).collect();
    for e in g.edges() {
        adj[e[0]].set(e[1]);
        adj[e[1]].set(e[0]);
    }

    // Phase 1: maximum clique size.
    let mut full = BitSet::new(n);
    for i in 0..n {
        full.set(i);
    }
    let mut best = 1usize;
    expand_size(&adj, &mut Vec::new(), &full, &mut best);

    // Phase 2: lexicographically smallest clique of that size. Depth-first
    // in ascending node order visits sorted node sets in lex order, so the
    // first hit is the answer; the coloring bound only removes branches that
    // cannot reach the target size.
    let mut found = Vec::new();
    lex_clique(&adj, &mut Vec::new(), &full, best, &mut found);
    debug_assert_eq!(found.len(), best);
    Ok(found)
}

/// Greedy sequential coloring upper bound on the clique number of the
/// subgraph induced by `cand`.
fn coloring_bound(adj: &[BitSet], cand: &BitSet) -> usize {
    let mut color_classes: Vec<BitSet> = Vec::new();
    for v in cand.iter_ones() {
        let mut placed = false;
        for class in color_classes.iter_mut() {
            if class.and(&adj[v]).is_empty() {
                class.set(v);
                placed = true;
                break;
            }
        }
        if !placed {
            let mut c = BitSet::new(adj.len());
            c.set(v);
            color_classes.push(c);
        }
    }
    color_classes.len()
}

fn expand_size(adj: &[BitSet], current: &mut Vec<usize>, cand: &BitSet, best: &mut usize) {
    if cand.is_empty() {
        *best = (*best).max(current.len());
        return;
    }
    if current.len() + cand.count() <= *best {
        return;
    }
    if current.len() + coloring_bound(adj, cand) <= *best {
        return;
    }
    let verts: Vec<usize> = cand.iter_ones().collect();
    let mut cand = cand.clone();
    for v in verts {
        if current.len() + cand.count() <= *best {
            return;
        }
        cand.clear(v);
        current.push(v);
        let next = cand.and(&adj[v]);
        if current.len() > *best {
            *best = current.len();
        }
        expand_size(adj, current, &next, best);
        current.pop();
    }
}

fn lex_clique(
    adj: &[BitSet],
    current: &mut Vec<usize>,
    cand: &BitSet,
    target: usize,
    found: &mut Vec<usize>,
) -> bool {
    if current.len() == target {
        *found = current.clone();
        return true;
    }
    if current.len() + cand.count() < target {
        return false;
    }
    if current.len() + coloring_bound(adj, cand) < target {
        return false;
    }
    let mut cand = cand.clone();
    let verts: Vec<usize> = cand.iter_ones().collect();
    for v in verts {
        cand.clear(v);
        current.push(v);
        let next = cand.and(&adj[v]);
        if lex_clique(adj, current, &next, target, found) {
            return true;
        }
        current.pop();
        if current.len() + cand.count() < target {
            return false;
        }
    }
    false
}

/// Exact maximum hyperclique via 0/1 branch-and-bound over node inclusion.
///
/// Equivalent to the binary program maximizing the selected node count
/// subject to `sum_{i in T} b_i <= n-1` for every non-edge n-subset `T`; the
/// bound combines candidate counting with a greedy packing of disjoint
/// non-edge subsets (each forces dropping at least one candidate).
/// Lexicographic tie-break as in [`max_clique`]. A set smaller than the
/// uniformity is vacuously a hyperclique.
pub fn max_hyperclique(g: &CompatibilityHypergraph) -> Result<Vec<usize>> {
    let nu = g.uniformity();
    if nu < 2 {
        return Err(Error::InvalidInput("uniformity must be >= 2".into()));
    }
    let n = g.num_nodes();
    if n == 0 {
        return Ok(vec![]);
    }
    if n < nu {
        return Ok((0..n).collect());
    }

    // Non-edge list for the packing bound.
    let mut non_edges: Vec<Vec<usize>> = Vec::new();
    for_each_combination(n, nu, |s| {
        if !g.has_edge(s) {
            non_edges.push(s.to_vec());
        }
    });

    let ctx = HyperCtx { g, non_edges };

    let mut best = nu - 1; // vacuous hyperclique floor
    let all: Vec<usize> = (0..n).collect();
    hyper_size(&ctx, &mut Vec::new(), &all, &mut best);

    let mut found = Vec::new();
    hyper_lex(&ctx, &mut Vec::new(), &all, best, &mut found);
    debug_assert_eq!(found.len(), best);
    Ok(found)
}

struct HyperCtx<'a> {
    g: &'a CompatibilityHypergraph,
    non_edges: Vec<Vec<usize>>,
}

impl HyperCtx<'_> {
    /// Can `v` extend the chosen hyperclique? Every nu-subset formed by `v`
    /// and nu-1 chosen nodes must be an edge.
    fn compatible(&self, chosen: &[usize], v: usize) -> bool {
        let nu = self.g.uniformity();
        if chosen.len() < nu - 1 {
            return true;
        }
        let mut ok = true;
        for_each_combination(chosen.len(), nu - 1, |idx| {
            if ok {
                let mut sub: Vec<usize> = idx.iter().map(|&t| chosen[t]).collect();
                sub.push(v);
                sub.sort_unstable();
                if !self.g.has_edge(&sub) {
                    ok = false;
                }
            }
        });
        ok
    }

    /// Upper bound: |chosen| + |cand| minus a greedy packing of disjoint
    /// non-edge subsets lying fully inside `cand`.
    fn bound(&self, chosen_len: usize, cand: &[usize]) -> usize {
        let mut in_cand = vec![false; self.g.num_nodes()];
        for &v in cand {
            in_cand[v] = true;
        }
        let mut used = vec![false; self.g.num_nodes()];
        let mut packed = 0usize;
        'outer: for t in &self.non_edges {
            for &v in t {
                if !in_cand[v] || used[v] {
                    continue 'outer;
                }
            }
            for &v in t {
                used[v] = true;
            }
            packed += 1;
        }
        chosen_len + cand.len() - packed
    }
}

fn hyper_size(ctx: &HyperCtx, chosen: &mut Vec<usize>, cand: &[usize], best: &mut usize) {
    *best = (*best).max(chosen.len());
    if chosen.len() + cand.len() <= *best {
        return;
    }
    if ctx.bound(chosen.len(), cand) <= *best {
        return;
    }
    for (pos, &v) in cand.iter().enumerate() {
        if chosen.len() + (cand.len() - pos) <= *best {
            return;
        }
        if !ctx.compatible(chosen, v) {
            continue;
        }
        chosen.push(v);
        let next: Vec<usize> = cand[pos + 1..]
            .iter()
            .copied()
            .filter(|&u| ctx.compatible(chosen, u))
            .collect();
        hyper_size(ctx, chosen, &next, best);
        chosen.pop();
    }
}

fn hyper_lex(
    ctx: &HyperCtx,
    chosen: &mut Vec<usize>,
    cand: &[usize],
    target: usize,
    found: &mut Vec<usize>,
) -> bool {
    if chosen.len() == target {
        *found = chosen.clone();
        return true;
    }
    if chosen.len() + cand.len() < target {
        return false;
    }
    if ctx.bound(chosen.len(), cand) < target {
        return false;
    }
    for (pos, &v) in cand.iter().enumerate() {
        if chosen.len() + (cand.len() - pos) < target {
            return false;
        }
        if !ctx.compatible(chosen, v) {
            continue;
        }
        chosen.push(v);
        let next: Vec<usize> = cand[pos + 1..]
            .iter()
            .copied()
            .filter(|&u| ctx.compatible(chosen, u))
            .collect();
        if hyper_lex(ctx, chosen, &next, target, found) {
            return true;
        }
        chosen.pop();
    }
    false
}
