//! Seeded random acyclic graphs for property sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{DirectedGraph, EdgeRecord, GraphFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomBounds {
    pub max_vertices: usize,
    pub max_edges: usize,
    pub max_sink_indegree: usize,
}

impl RandomBounds {
    pub const fn new(max_vertices: usize, max_edges: usize, max_sink_indegree: usize) -> Self {
        Self {
            max_vertices,
            max_edges,
            max_sink_indegree,
        }
    }
}

/// Bounds of the standard sweep corpus.
pub const CORPUS_BOUNDS: RandomBounds = RandomBounds::new(8, 14, 4);

/// Deterministic DAG: every edge runs from a lower to a higher vertex index,
/// parallel edges are allowed, and sinks receive at most
/// `max_sink_indegree` edges. The highest-index vertex is always a sink.
pub fn random_acyclic_graph(seed: u64, bounds: RandomBounds) -> DirectedGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=bounds.max_vertices.max(1));
    let m = if n < 2 {
        0
    } else {
        rng.random_range(0..=bounds.max_edges)
    };
    let mut edges: Vec<(usize, usize)> = (0..m)
        .map(|_| {
            let s = rng.random_range(0..n - 1);
            let r = rng.random_range(s + 1..n);
            (s, r)
        })
        .collect();

    // Dropping edges can turn their sources into sinks, so repeat until stable.
    loop {
        let mut out_deg = vec![0usize; n];
        for &(s, _) in &edges {
            out_deg[s] += 1;
        }
        let mut seen = vec![0usize; n];
        let before = edges.len();
        edges.retain(|&(_, r)| {
            if out_deg[r] > 0 {
                return true;
            }
            seen[r] += 1;
            seen[r] <= bounds.max_sink_indegree
        });
        if edges.len() == before {
            break;
        }
    }

    let file = GraphFile {
        vertices: (0..n).map(|v| format!("v{v}")).collect(),
        edges: edges
            .iter()
            .enumerate()
            .map(|(k, &(s, r))| EdgeRecord {
                id: format!("e{k}"),
                src: format!("v{s}"),
                rng: format!("v{r}"),
            })
            .collect(),
    };
    DirectedGraph::new(&file).expect("generated ids are unique")
}

/// The standard corpus: seeds `1..=count` at [`CORPUS_BOUNDS`].
pub fn corpus(count: u64) -> Vec<(u64, DirectedGraph)> {
    (1..=count)
        .map(|seed| (seed, random_acyclic_graph(seed, CORPUS_BOUNDS)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let b = RandomBounds::new(5, 8, 3);
        assert_eq!(random_acyclic_graph(1, b), random_acyclic_graph(1, b));
        assert_eq!(random_acyclic_graph(7, b).to_json(), random_acyclic_graph(7, b).to_json());
    }

    #[test]
    fn single_vertex_bounds() {
        let g = random_acyclic_graph(3, RandomBounds::new(1, 0, 1));
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn respects_bounds() {
        for seed in 0..200 {
            let b = RandomBounds::new(8, 14, 2);
            let g = random_acyclic_graph(seed, b);
            assert!(g.is_acyclic());
            assert!(g.vertex_count() <= 8 && g.edge_count() <= 14);
            assert_eq!(g.out_degree(g.vertex_count() - 1), 0);
            for v in 0..g.vertex_count() {
                if g.out_degree(v) == 0 {
                    assert!(g.in_degree(v) <= 2);
                }
            }
        }
    }
}
