//! Seed sweeps over random graphs, data-parallel when the `parallel`
//! feature is on. Results always come back in seed order.

use serde::Serialize;

use crate::pipeline::{prove_graph, ProofOptions, Verdict};
use crate::random::{random_acyclic_graph, RandomBounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether `Parallel` actually runs on a thread pool in this build.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// `items.map(f)` in input order.
pub fn ordered_map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub vertices: usize,
    pub edges: usize,
    pub dim: usize,
    pub max_residual: Option<f64>,
    pub dims: Option<(usize, usize)>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub bounds: RandomBounds,
    pub passed: usize,
    pub total: usize,
    pub results: Vec<SeedResult>,
}

impl SweepSummary {
    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }

    /// Worst non-passing verdict by exit code, or `Pass`.
    pub fn worst(&self) -> Verdict {
        self.results
            .iter()
            .map(|r| &r.verdict)
            .max_by_key(|v| v.exit_code())
            .cloned()
            .unwrap_or(Verdict::Pass)
    }
}

pub fn random_sweep(seeds: &[u64], bounds: RandomBounds, exec: Execution, opts: &ProofOptions) -> SweepSummary {
    let results = ordered_map(seeds, exec, |&seed| {
        let graph = random_acyclic_graph(seed, bounds);
        let out = prove_graph(&graph, None, opts);
        SeedResult {
            seed,
            vertices: out.vertices,
            edges: out.edges,
            dim: out.dim,
            max_residual: out.recovery.as_ref().map(|r| r.max_residual),
            dims: out.generation.as_ref().map(|g| (g.generated_dim, g.family_dim)),
            verdict: out.verdict,
        }
    });
    SweepSummary {
        bounds,
        passed: results.iter().filter(|r| r.verdict.is_pass()).count(),
        total: results.len(),
        results,
    }
}
