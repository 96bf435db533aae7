use proptest::prelude::*;

use ckgen::oracle::{single_generation_check, span_closure_dim};
use ckgen::random::{random_acyclic_graph, RandomBounds};
use ckgen::representation::MatrixCkFamily;
use ckgen::{
    build_generator, build_path_representation, classify, default_schedule, parse_graph, prove_graph,
    validate_schedule, CoefficientSchedule, DirectedGraph, GeneratorOptions, ProofOptions,
};

const SMALL: RandomBounds = RandomBounds::new(6, 9, 3);

/// Number of paths starting at `v`, trivial path included.
fn paths_from(g: &DirectedGraph, v: usize) -> usize {
    1 + g.emitted(v).map(|e| paths_from(g, g.rng(e))).sum::<usize>()
}

/// The path representation splits into one irreducible block per
/// receiver-free vertex `u`, of size "paths starting at u".
fn structural_dimension(g: &DirectedGraph) -> usize {
    (0..g.vertex_count())
        .filter(|&v| g.in_degree(v) == 0)
        .map(|v| paths_from(g, v).pow(2))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_graphs_are_deterministic_and_bounded(seed in any::<u64>(), v in 1usize..9, e in 0usize..15, k in 1usize..5) {
        let b = RandomBounds::new(v, e, k);
        let g = random_acyclic_graph(seed, b);
        prop_assert_eq!(&g, &random_acyclic_graph(seed, b));
        prop_assert!(g.is_acyclic());
        prop_assert!(g.vertex_count() <= v && g.edge_count() <= e);
        prop_assert!(!classify(&g).sinks.is_empty());
    }

    #[test]
    fn graph_and_schedule_files_round_trip(seed in any::<u64>()) {
        let g = random_acyclic_graph(seed, SMALL);
        prop_assert_eq!(&parse_graph(&g.to_json()).unwrap(), &g);
        let cls = classify(&g);
        let s = default_schedule(&g, &cls);
        let back = CoefficientSchedule::from_json(&s.to_json()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert!(validate_schedule(&back, &g, &cls).unwrap().passed());
    }

    #[test]
    fn family_files_round_trip(seed in any::<u64>()) {
        let g = random_acyclic_graph(seed, SMALL);
        let fam = build_path_representation(&g).unwrap();
        let back = MatrixCkFamily::from_json(&fam.to_json()).unwrap();
        prop_assert_eq!(back.projections, fam.projections);
        prop_assert_eq!(back.partial_isometries, fam.partial_isometries);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_small_graph_proves(seed in any::<u64>()) {
        let g = random_acyclic_graph(seed, SMALL);
        let out = prove_graph(&g, None, &ProofOptions::default());
        prop_assert!(out.verdict.is_pass(), "seed {}: {:?}", seed, out.verdict);
    }

    #[test]
    fn closure_is_monotone_and_idempotent(seed in any::<u64>()) {
        let g = random_acyclic_graph(seed, RandomBounds::new(5, 6, 2));
        let fam = build_path_representation(&g).unwrap();
        let mut gens = vec![fam.partial_isometries.first().cloned().unwrap_or_else(|| fam.projections[0].clone())];
        let small = span_closure_dim(&gens).unwrap();
        gens.extend(fam.projections.iter().cloned());
        let big = span_closure_dim(&gens).unwrap();
        prop_assert!(small.dim <= big.dim);
        prop_assert!(big.contains(&small) <= 1e-9);
        let again: Vec<_> = (0..big.dim).map(|k| big.element(k)).collect();
        prop_assert_eq!(span_closure_dim(&again).unwrap().dim, big.dim);
    }
}

#[test]
fn oracle_matches_the_block_structure() {
    for seed in 1..=40 {
        let g = random_acyclic_graph(seed, RandomBounds::new(6, 10, 3));
        let fam = build_path_representation(&g).unwrap();
        let span = span_closure_dim(&fam.generators()).unwrap();
        assert_eq!(span.dim, structural_dimension(&g), "seed {seed}");
    }
}

#[test]
fn generator_alone_reaches_the_block_structure() {
    for seed in 1..=20 {
        let g = random_acyclic_graph(seed, RandomBounds::new(6, 10, 3));
        let cls = classify(&g);
        let fam = build_path_representation(&g).unwrap();
        let s = default_schedule(&g, &cls);
        let parts = build_generator(&fam, &g, &cls, &s, GeneratorOptions::default()).unwrap();
        let chk = single_generation_check(&parts.g, &fam).unwrap();
        assert!(chk.pass, "seed {seed}: {chk:?}");
        assert_eq!(chk.generated_dim, structural_dimension(&g));
    }
}
