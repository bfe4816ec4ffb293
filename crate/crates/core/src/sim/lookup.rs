//! Strict-parallel iterative lookups on a [`Topology`].

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::topology::Topology;
use crate::system::distance;

/// One lookup: the nodes queried in every round and the outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupTrace {
    pub source: u32,
    pub target: u32,
    pub rounds: Vec<Vec<u32>>,
    /// Round in which the target was queried.
    pub hops: u32,
    pub terminated: bool,
}

/// Lookup parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Routing {
    pub alpha: u32,
    pub beta: u32,
    /// Probability that a queried node does not answer.
    pub stale: f64,
    /// Round limit.
    pub htl: Option<u32>,
}

/// Reusable lookup state for one topology.
pub struct Router<'a> {
    topo: &'a Topology,
    routing: Routing,
    seen: Vec<u32>,
    stamp: u32,
    heap: BinaryHeap<Reverse<(u128, u32)>>,
    scratch: Vec<(u128, u32)>,
}

impl<'a> Router<'a> {
    pub fn new(topo: &'a Topology, routing: Routing) -> Self {
        Router {
            topo,
            routing,
            seen: vec![0; topo.len()],
            stamp: 0,
            heap: BinaryHeap::new(),
            scratch: Vec::new(),
        }
    }

    /// The β entries of `node`'s table closest to `target` among those
    /// strictly closer (in distance classes) than `node` itself.
    pub fn answer(&mut self, node: u32, target: u128, out: &mut Vec<u32>) {
        out.clear();
        let topo = self.topo;
        let d = distance(topo.id(node), target);
        if d == 0 {
            return;
        }
        let beta = self.routing.beta as usize;
        // smallest block around the target holding β candidates
        let (mut lo, mut hi) = (0u32, d - 1);
        if topo.table_block(node, target, hi).len() > beta {
            while lo < hi {
                let mid = (lo + hi) / 2;
                if topo.table_block(node, target, mid).len() >= beta {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
        }
        let block = topo.table_block(node, target, hi);
        self.scratch.clear();
        self.scratch
            .extend(block.iter().map(|&c| (topo.id(c) ^ target, c)));
        if self.scratch.len() > beta {
            self.scratch.select_nth_unstable(beta - 1);
            self.scratch.truncate(beta);
        }
        self.scratch.sort_unstable();
        out.extend(self.scratch.iter().map(|x| x.1));
    }

    fn run(&mut self, source: u32, target: u32, rng: &mut impl Rng, mut trace: Option<&mut Vec<Vec<u32>>>) -> Option<u32> {
        let topo = self.topo;
        let goal = topo.id(target);
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.seen.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
        let stamp = self.stamp;
        self.seen[source as usize] = stamp;
        let mut seed: Vec<Reverse<(u128, u32)>> = Vec::with_capacity(topo.table(source).len());
        for &c in topo.table(source) {
            self.seen[c as usize] = stamp;
            seed.push(Reverse((topo.id(c) ^ goal, c)));
        }
        self.heap = BinaryHeap::from(seed);

        let limit = self.routing.htl.unwrap_or(u32::MAX);
        let mut batch = Vec::with_capacity(self.routing.alpha as usize);
        let mut returned = Vec::new();
        let mut round = 0u32;
        while round < limit {
            batch.clear();
            while batch.len() < self.routing.alpha as usize {
                match self.heap.pop() {
                    Some(Reverse((_, c))) => batch.push(c),
                    None => break,
                }
            }
            if batch.is_empty() {
                return None;
            }
            round += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(batch.clone());
            }
            if batch.contains(&target) {
                return Some(round);
            }
            for &node in &batch {
                if self.routing.stale > 0.0 && rng.random_bool(self.routing.stale) {
                    continue;
                }
                self.answer(node, goal, &mut returned);
                for &c in &returned {
                    if self.seen[c as usize] != stamp {
                        self.seen[c as usize] = stamp;
                        self.heap.push(Reverse((topo.id(c) ^ goal, c)));
                    }
                }
            }
        }
        None
    }

    /// Hop count of one lookup, `None` when it does not reach the target.
    pub fn hops(&mut self, source: u32, target: u32, rng: &mut impl Rng) -> Option<u32> {
        self.run(source, target, rng, None)
    }

    pub fn trace(&mut self, source: u32, target: u32, rng: &mut impl Rng) -> LookupTrace {
        let mut rounds = Vec::new();
        let hops = self.run(source, target, rng, Some(&mut rounds));
        LookupTrace {
            source,
            target,
            hops: hops.unwrap_or(rounds.len() as u32),
            terminated: hops.is_some(),
            rounds,
        }
    }
}

/// Runs a single lookup on `topo`.
pub fn lookup(
    topo: &Topology,
    source: u32,
    target: u32,
    routing: Routing,
    rng: &mut impl Rng,
) -> LookupTrace {
    assert_ne!(source, target, "source and target coincide");
    Router::new(topo, routing).trace(source, target, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Preset, SystemSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn routing(alpha: u32, beta: u32) -> Routing {
        Routing {
            alpha,
            beta,
            stale: 0.0,
            htl: None,
        }
    }

    #[test]
    fn known_target_takes_one_hop() {
        let spec = SystemSpec::preset(Preset::Kad, 32, 300, 3, 2).unwrap();
        let topo = Topology::generate(&spec, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let source = 5;
        let target = topo.table(source)[0];
        let tr = lookup(&topo, source, target, routing(3, 2), &mut rng);
        // the target is the closest possible candidate
        assert_eq!(tr.hops, 1);
        assert!(tr.terminated);
    }

    #[test]
    fn tiny_network_one_hop() {
        let spec = SystemSpec::preset(Preset::Mdht, 8, 3, 1, 1).unwrap();
        let topo = Topology::generate(&spec, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(lookup(&topo, 0, 1, routing(1, 1), &mut rng).hops, 1);
    }

    #[test]
    fn static_lookups_always_terminate() {
        for preset in Preset::ALL {
            let spec = SystemSpec::preset(preset, 40, 2000, 3, 2).unwrap();
            let topo = Topology::generate(&spec, 11).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut router = Router::new(&topo, routing(3, 2));
            for s in (0..2000).step_by(37) {
                let t = (s * 7 + 13) % 2000;
                if s == t {
                    continue;
                }
                let tr = router.trace(s, t, &mut rng);
                assert!(tr.terminated);
                assert!(tr.rounds.iter().all(|r| r.len() <= 3));
                assert!(tr.hops >= 1 && tr.hops <= 12);
            }
        }
    }

    #[test]
    fn answers_are_strictly_closer() {
        let spec = SystemSpec::preset(Preset::Kad, 24, 1500, 3, 2).unwrap();
        let topo = Topology::generate(&spec, 2).unwrap();
        let mut router = Router::new(&topo, routing(3, 2));
        let mut out = Vec::new();
        for v in (0..1500u32).step_by(13) {
            let t = topo.id((v * 31 + 7) % 1500);
            router.answer(v, t, &mut out);
            let dv = distance(topo.id(v), t);
            assert!(out.len() <= 2);
            for &c in &out {
                assert!(distance(topo.id(c), t) < dv);
            }
        }
    }
}
