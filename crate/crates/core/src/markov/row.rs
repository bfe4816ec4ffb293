//! One transition row `P(A₁ = · | A₀ = (d₁, …, d_α))`.
//!
//! The α·β returned contacts are generated jointly by sweeping the distance
//! `a = 0, 1, …` upwards. Each queried node carries a small local state: the
//! bucket branch `l` it drew and how many of its β slots are filled, or
//! `Done`. At distance `a` a node with `R` unused bucket entries places
//! `Binomial(R, h_a)` of them there, `h_a` being the hazard of the region's
//! distance law. The per-distance counts are then thinned by the
//! distinctness model and the first α survivors form the next state.
//!
//! Prefixes of up to α−2 survivors are carried forward explicitly. Once α−1
//! are known, the last one is read from a backward table holding, for every
//! joint node state, the law of the first survivor at or beyond `a`.

use std::collections::HashMap;

use crate::binomial::small_pmf;
use crate::contacts::ContactKernel;
use crate::state::StateSpace;

use super::survivors::Distinctness;

/// Hazard of the distance law on a region of `2^span` IDs:
/// `P(X = a | X ≥ a)`.
pub(crate) fn hazard(span: u32, a: u32) -> f64 {
    if a >= span {
        1.0
    } else if a == 0 {
        (-(span as f64)).exp2()
    } else {
        let hit = (a as f64 - 1.0).exp2();
        hit / (span as f64).exp2().mul_add(1.0, -hit)
    }
}

/// A queried node's local chain.
struct Node {
    /// Region span `d − l` per populated branch.
    spans: Vec<u32>,
    /// Usable bucket entries.
    k: u32,
    /// Weight of each local state at `a = 0`.
    init: Vec<f64>,
}

impl Node {
    fn states(&self, beta: u32) -> usize {
        1 + self.spans.len() * beta as usize
    }
}

/// Local successor `(state', emitted, prob)` lists for one node at one `a`.
type Moves = Vec<Vec<(usize, u32, f64)>>;

fn node_moves(node: &Node, beta: u32, a: u32) -> Moves {
    let mut out: Moves = vec![Vec::new(); node.states(beta)];
    out[0].push((0, 0, 1.0));
    for (li, &span) in node.spans.iter().enumerate() {
        if a > span {
            continue;
        }
        let h = hazard(span, a);
        for f in 0..beta.min(node.k) {
            let idx = 1 + li * beta as usize + f as usize;
            let left = node.k - f;
            let need = beta - f;
            let mut full = 0.0;
            for c in 0..=left {
                let p = small_pmf(left, h, c);
                if p == 0.0 {
                    continue;
                }
                if c >= need {
                    full += p;
                } else if c == left {
                    // bucket exhausted before β contacts
                    out[idx].push((0, c, p));
                } else {
                    out[idx].push((idx + c as usize, c, p));
                }
            }
            if full > 0.0 {
                out[idx].push((0, need, full));
            }
        }
    }
    out
}

/// Shared per-matrix context.
pub(crate) struct RowBuilder<'a> {
    pub kernel: &'a ContactKernel,
    pub space: &'a StateSpace,
    pub beta: u32,
    pub stale: f64,
    pub upper: bool,
    pub distinct: Distinctness,
}

/// Sparse row: terminal mass plus `(state, prob)` entries, and a dense
/// scratch buffer reused between rows.
pub(crate) struct Scratch {
    dense: Vec<f64>,
    touched: Vec<usize>,
}

impl Scratch {
    pub(crate) fn new(len: usize) -> Self {
        Scratch {
            dense: vec![0.0; len],
            touched: Vec::new(),
        }
    }

    #[inline]
    fn add(&mut self, idx: usize, p: f64) {
        if self.dense[idx] == 0.0 {
            self.touched.push(idx);
        }
        self.dense[idx] += p;
    }

    fn drain(&mut self) -> Vec<(u32, f64)> {
        self.touched.sort_unstable();
        self.touched.dedup();
        let out = self
            .touched
            .iter()
            .map(|&i| (i as u32, std::mem::take(&mut self.dense[i])))
            .filter(|&(_, p)| p != 0.0)
            .collect();
        self.touched.clear();
        out
    }
}

impl RowBuilder<'_> {
    /// Row for the sorted query state `ds`, as sparse `(index, prob)` pairs
    /// sorted by index (terminal first when present).
    pub(crate) fn row(&mut self, ds: &[u8], scratch: &mut Scratch) -> Vec<(u32, f64)> {
        let alpha = ds.len();
        let beta = self.beta;
        let d_min = ds[0] as u32;
        let d_max = ds[alpha - 1] as u32;
        let b = self.kernel.bits();
        let fill = if self.upper { d_max } else { b } as u8;

        if d_min == 0 {
            return vec![(0, 1.0)];
        }

        let mut continue_all = 1.0;
        let mut nodes = Vec::with_capacity(alpha);
        for &d in ds {
            let d = d as usize;
            let k = self.kernel.bucket(d);
            let spans: Vec<u32> = self.kernel.branches(d).map(|(l, _, _)| d as u32 - l).collect();
            let mut init = vec![0.0; 1 + spans.len() * beta as usize];
            init[0] = self.stale;
            let mut cont = self.stale;
            for (li, (_, w, found)) in self.kernel.branches(d).enumerate() {
                let q = (1.0 - self.stale) * w * (1.0 - found);
                cont += q;
                if k == 0 {
                    init[0] += q;
                } else {
                    init[1 + li * beta as usize] += q;
                }
            }
            continue_all *= cont;
            nodes.push(Node { spans, k, init });
        }
        let terminal = 1.0 - continue_all;

        let a_max = nodes
            .iter()
            .flat_map(|n| n.spans.iter().copied())
            .max()
            .unwrap_or(0);
        let radix: Vec<usize> = nodes.iter().map(|n| n.states(beta)).collect();
        let sigma_count: usize = radix.iter().product();
        let mut stride = vec![1usize; alpha];
        for j in 1..alpha {
            stride[j] = stride[j - 1] * radix[j - 1];
        }

        // joint initial law
        let mut init = vec![0.0; sigma_count];
        for (s, slot) in init.iter_mut().enumerate() {
            let mut p = 1.0;
            for j in 0..alpha {
                p *= nodes[j].init[(s / stride[j]) % radix[j]];
                if p == 0.0 {
                    break;
                }
            }
            *slot = p;
        }

        // per-distance joint transitions, aggregated by (σ', survivors)
        let mut trans: Vec<Vec<Vec<(u32, u8, f64)>>> = Vec::with_capacity(a_max as usize + 1);
        for a in 0..=a_max {
            let moves: Vec<Moves> = nodes.iter().map(|n| node_moves(n, beta, a)).collect();
            let capped = !self.upper && a >= d_min;
            let mut level = vec![Vec::new(); sigma_count];
            let mut agg: HashMap<(u32, u8), f64> = HashMap::new();
            for (s, out) in level.iter_mut().enumerate() {
                let locals: Vec<usize> = (0..alpha).map(|j| (s / stride[j]) % radix[j]).collect();
                if locals
                    .iter()
                    .enumerate()
                    .any(|(j, &loc)| moves[j][loc].is_empty())
                {
                    continue;
                }
                agg.clear();
                self.expand(&moves, &locals, &stride, 0, 0, 0, 1.0, a, capped, &mut agg);
                let mut list: Vec<(u32, u8, f64)> =
                    agg.iter().map(|(&(t, e), &p)| (t, e, p)).collect();
                list.sort_unstable_by_key(|x| (x.0, x.1));
                *out = list;
            }
            trans.push(level);
        }

        // backward: law of the first survivor at distance ≥ a; slot a_max+1 is K*
        let width = a_max as usize + 2;
        let mut first = vec![vec![0.0; sigma_count * width]; a_max as usize + 2];
        first[a_max as usize + 1][width - 1] = 1.0;
        for a in (0..=a_max as usize).rev() {
            let (head, tail) = first.split_at_mut(a + 1);
            let cur = &mut head[a];
            let next = &tail[0];
            for s in 0..sigma_count {
                let row = &mut cur[s * width..(s + 1) * width];
                for &(t, e, p) in &trans[a][s] {
                    if e > 0 {
                        row[a] += p;
                    } else {
                        let src = &next[t as usize * width..(t as usize + 1) * width];
                        for x in a + 1..width {
                            row[x] += p * src[x];
                        }
                    }
                }
            }
        }

        let space = self.space;
        let emit_full = |scratch: &mut Scratch, prefix: &[u8], p: f64| {
            scratch.add(space.index_sorted(prefix), p);
        };

        let mut cur: HashMap<Vec<u8>, Vec<f64>> = HashMap::new();
        cur.insert(Vec::new(), init);
        let mut buf = Vec::with_capacity(alpha);
        for a in 0..=a_max as usize {
            let mut next: HashMap<Vec<u8>, Vec<f64>> = HashMap::new();
            let mut pending: HashMap<Vec<u8>, Vec<f64>> = HashMap::new();
            for (prefix, mass) in &cur {
                let r = prefix.len();
                for (s, &m) in mass.iter().enumerate() {
                    if m == 0.0 {
                        continue;
                    }
                    for &(t, e, p) in &trans[a][s] {
                        let e = e as usize;
                        let w = m * p;
                        buf.clear();
                        buf.extend_from_slice(prefix);
                        if r + e >= alpha {
                            buf.resize(alpha, a as u8);
                            emit_full(scratch, &buf, w);
                        } else {
                            buf.resize(r + e, a as u8);
                            let slot = if r + e == alpha - 1 { &mut pending } else { &mut next };
                            let dst = slot
                                .entry(buf.clone())
                                .or_insert_with(|| vec![0.0; sigma_count]);
                            dst[t as usize] += w;
                        }
                    }
                }
            }
            // join prefixes of α−1 survivors with the backward table
            let after = &first[a + 1];
            for (prefix, mass) in pending {
                let base: usize = 1 + prefix
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| space_rank(space, i, x))
                    .sum::<usize>();
                let mut law = vec![0.0; width];
                for (s, &m) in mass.iter().enumerate() {
                    if m == 0.0 {
                        continue;
                    }
                    for (x, v) in law.iter_mut().zip(&after[s * width..(s + 1) * width]) {
                        *x += m * v;
                    }
                }
                for (x, &v) in law.iter().enumerate().skip(a + 1) {
                    if v == 0.0 {
                        continue;
                    }
                    let value = if x == width - 1 { fill } else { x as u8 };
                    scratch.add(base + space_rank(space, alpha - 1, value), v);
                }
            }
            cur = next;
        }
        // fewer than α−1 survivors overall: pad with K*
        for (prefix, mass) in cur {
            let total: f64 = mass.iter().sum();
            if total == 0.0 {
                continue;
            }
            buf.clear();
            buf.extend_from_slice(&prefix);
            buf.resize(alpha, fill);
            emit_full(scratch, &buf, total);
        }

        let mut row = scratch.drain();
        if terminal > 0.0 {
            row.insert(0, (0, terminal));
        }
        row
    }

    #[allow(clippy::too_many_arguments)]
    fn expand(
        &mut self,
        moves: &[Moves],
        locals: &[usize],
        stride: &[usize],
        j: usize,
        target: usize,
        packed: u64,
        p: f64,
        a: u32,
        capped: bool,
        agg: &mut HashMap<(u32, u8), f64>,
    ) {
        if j == locals.len() {
            let law = self.distinct.law(a as usize, capped, packed, locals.len());
            for (e, &q) in law.iter().enumerate() {
                if q > 0.0 {
                    *agg.entry((target as u32, e as u8)).or_insert(0.0) += p * q;
                }
            }
            return;
        }
        for &(to, c, q) in &moves[j][locals[j]] {
            self.expand(
                moves,
                locals,
                stride,
                j + 1,
                target + to * stride[j],
                packed | ((c as u64) << (4 * j)),
                p * q,
                a,
                capped,
                agg,
            );
        }
    }
}

#[inline]
fn space_rank(space: &StateSpace, pos: usize, value: u8) -> usize {
    space.rank_term(pos, value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hazard_recovers_region_law() {
        for span in 0..10u32 {
            let mut survive = 1.0;
            for a in 0..=span {
                let h = hazard(span, a);
                let pa = survive * h;
                let expect = crate::contacts::region_cdf(span, a as i64)
                    - crate::contacts::region_cdf(span, a as i64 - 1);
                assert!((pa - expect).abs() < 1e-14, "span {span} a {a}");
                survive *= 1.0 - h;
            }
            assert!(survive.abs() < 1e-14);
        }
    }

    #[test]
    fn node_moves_are_stochastic() {
        let node = Node {
            spans: vec![5, 4],
            k: 3,
            init: vec![],
        };
        for a in 0..=5 {
            for (idx, list) in node_moves(&node, 2, a).iter().enumerate() {
                if list.is_empty() {
                    continue;
                }
                let total: f64 = list.iter().map(|x| x.2).sum();
                assert!((total - 1.0).abs() < 1e-14, "a {a} state {idx}");
            }
        }
    }
}
