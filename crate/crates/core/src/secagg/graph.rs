//! Neighbor graph deciding which client pairs share a mask seed.

use std::collections::{BTreeSet, VecDeque};

use sha2::{Digest, Sha256};

/// 256-bit seed shared by two neighboring clients.
pub type PairSeed = [u8; 32];

pub const DEFAULT_DEGREE_FACTOR: f64 = 2.0;

/// Circulant (Harary-style) graph of degree about `c · log2 n`.
///
/// Client `u` is adjacent to `u ± 1, …, u ± ⌈k/2⌉ (mod n)`. Pair seeds are
/// derived from the graph seed with SHA-256 over the unordered pair, which
/// stands in for an out-of-band key agreement.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskGraph {
    n: usize,
    degree: usize,
    neighbors: Vec<Vec<usize>>,
    seed: u64,
}

impl MaskGraph {
    pub fn build(n: usize, c: f64, seed: u64) -> Self {
        let target = if n < 2 {
            0
        } else {
            let k = (c * (n as f64).log2()).ceil();
            (k.max(1.0) as usize).min(n - 1)
        };
        let half_width = target.div_ceil(2);
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|u| {
                let set: BTreeSet<usize> = (1..=half_width)
                    .flat_map(|j| [(u + j) % n, (u + n - j % n) % n])
                    .filter(|&v| v != u)
                    .collect();
                set.into_iter().collect()
            })
            .collect();
        let degree = neighbors.first().map_or(0, Vec::len);
        Self {
            n,
            degree,
            neighbors,
            seed,
        }
    }

    pub fn participants(&self) -> usize {
        self.n
    }

    /// Realized degree; the graph is regular.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn are_neighbors(&self, u: usize, v: usize) -> bool {
        u < self.n && self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Seed shared by `u` and `v`, or `None` if they are not adjacent.
    pub fn pair_seed(&self, u: usize, v: usize) -> Option<PairSeed> {
        if !self.are_neighbors(u, v) {
            return None;
        }
        let (lo, hi) = (u.min(v) as u64, u.max(v) as u64);
        let mut hasher = Sha256::new();
        hasher.update(b"privirec/mask-pair/v1");
        hasher.update(self.seed.to_le_bytes());
        hasher.update(lo.to_le_bytes());
        hasher.update(hi.to_le_bytes());
        Some(hasher.finalize().into())
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_participant_has_no_neighbors() {
        let g = MaskGraph::build(1, 2.0, 0);
        assert_eq!(g.degree(), 0);
        assert!(g.neighbors(0).is_empty());
    }

    #[test]
    fn two_participants_pair_up() {
        let g = MaskGraph::build(2, 2.0, 0);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn eight_participants_degree_six() {
        let g = MaskGraph::build(8, 2.0, 0);
        assert_eq!(g.degree(), 6);
        assert_eq!(g.neighbors(0), &[1, 2, 3, 5, 6, 7]);
        for u in 0..8 {
            assert_eq!(g.neighbors(u).len(), 6);
        }
    }

    #[test]
    fn structure_invariants() {
        for n in [1, 2, 3, 5, 8, 32, 100, 257] {
            for c in [0.5, 1.0, 2.0, 3.5] {
                let g = MaskGraph::build(n, c, 17);
                assert!(g.is_connected(), "n={n} c={c}");
                for u in 0..n {
                    assert!(!g.neighbors(u).contains(&u));
                    assert_eq!(g.neighbors(u).len(), g.degree());
                    for &v in g.neighbors(u) {
                        assert!(g.are_neighbors(v, u));
                        assert_eq!(g.pair_seed(u, v), g.pair_seed(v, u));
                    }
                }
                if n >= 2 {
                    let k = (c * (n as f64).log2()).ceil().max(1.0) as usize;
                    assert!(g.degree() >= k.min(n - 1));
                    assert!(g.degree() <= k + 1);
                }
            }
        }
    }

    #[test]
    fn seeds_depend_on_graph_seed_and_pair() {
        let a = MaskGraph::build(8, 2.0, 1);
        let b = MaskGraph::build(8, 2.0, 2);
        assert_ne!(a.pair_seed(0, 1), b.pair_seed(0, 1));
        assert_ne!(a.pair_seed(0, 1), a.pair_seed(0, 2));
        assert_eq!(a.pair_seed(0, 4), None);
    }
}
