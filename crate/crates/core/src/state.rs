//! Markov state space: the terminal state plus every sorted α-tuple of
//! distances in `[0, b]`.
//!
//! Index 0 is the terminal state. Non-terminal tuples `x₁ ≤ … ≤ x_α` are
//! ranked colexicographically with the combinatorial number system for
//! multisets, `rank = Σᵢ C(xᵢ + i − 1, i)`.

use crate::error::{Error, Result};

/// Largest state space the engine will allocate.
pub const MAX_STATES: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    Terminal,
    /// Distances of the queried contacts, sorted ascending.
    Query(Vec<u8>),
}

impl State {
    /// Builds a query state, sorting the distances.
    pub fn query(mut distances: Vec<u8>) -> Self {
        distances.sort_unstable();
        State::Query(distances)
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, State::Terminal)
    }
}

/// Binomial coefficient `C(n, k)` as `u128`, saturating on overflow.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Total number of states, terminal included: `1 + C(b + α, α)`.
pub fn state_count(alpha: u32, b: u32) -> u128 {
    1 + binomial(b as u64 + alpha as u64, alpha as u64)
}

/// Closed-form non-terminal count for `α = 3`, `(b+1)(b+2)(2b+6)/12`.
pub fn nonterminal_count_alpha3(b: u32) -> u128 {
    let b = b as u128;
    (b + 1) * (b + 2) * (2 * b + 6) / 12
}

/// Bijection between [`State`]s and `[0, count)`.
#[derive(Debug, Clone)]
pub struct StateSpace {
    alpha: usize,
    b: u32,
    count: usize,
    /// `table[i][x] = C(x + i, i + 1)`, the rank contribution of value `x`
    /// at sorted position `i`.
    table: Vec<Vec<usize>>,
}

impl StateSpace {
    pub fn new(alpha: u32, b: u32) -> Result<Self> {
        if alpha == 0 {
            return Err(Error::Config("alpha must be positive".into()));
        }
        let total = state_count(alpha, b);
        if total > MAX_STATES as u128 {
            return Err(Error::Capacity(format!(
                "state space of {total} states for alpha = {alpha}, b = {b}"
            )));
        }
        let alpha = alpha as usize;
        let table = (0..alpha)
            .map(|i| {
                (0..=b as u64 + 1)
                    .map(|x| binomial(x + i as u64, i as u64 + 1) as usize)
                    .collect()
            })
            .collect();
        Ok(StateSpace {
            alpha,
            b,
            count: total as usize,
            table,
        })
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn bits(&self) -> u32 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of a sorted distance tuple (no validation beyond debug asserts).
    #[inline]
    pub fn index_sorted(&self, sorted: &[u8]) -> usize {
        debug_assert_eq!(sorted.len(), self.alpha);
        debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
        1 + sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| self.table[i][x as usize])
            .sum::<usize>()
    }

    /// Rank contribution of `value` at sorted position `pos`; the index of a
    /// sorted tuple is one plus the sum of its terms.
    #[inline]
    pub fn rank_term(&self, pos: usize, value: u8) -> usize {
        self.table[pos][value as usize]
    }

    pub fn index(&self, state: &State) -> usize {
        match state {
            State::Terminal => 0,
            State::Query(d) => {
                assert_eq!(d.len(), self.alpha, "state arity");
                assert!(d.iter().all(|&x| (x as u32) <= self.b), "distance > b");
                let mut sorted = d.clone();
                sorted.sort_unstable();
                self.index_sorted(&sorted)
            }
        }
    }

    pub fn state(&self, index: usize) -> State {
        assert!(index < self.count, "state index out of range");
        if index == 0 {
            return State::Terminal;
        }
        let mut rem = index - 1;
        let mut out = vec![0u8; self.alpha];
        for i in (0..self.alpha).rev() {
            let row = &self.table[i];
            // largest x with row[x] <= rem
            let x = row.partition_point(|&v| v <= rem) - 1;
            out[i] = x as u8;
            rem -= row[x];
        }
        State::Query(out)
    }

    /// Iterates over all states in index order.
    pub fn iter(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.count).map(|i| self.state(i))
    }
}
