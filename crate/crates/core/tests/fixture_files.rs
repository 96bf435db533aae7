use std::path::PathBuf;

use ckgen::graph::fixtures;
use ckgen::parse_graph;

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"));
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn files_match_the_built_in_graphs() {
    let all = [
        ("g1", fixtures::g1()),
        ("g2", fixtures::g2()),
        ("g3", fixtures::g3()),
        ("g4", fixtures::g4()),
        ("g5", fixtures::g5()),
        ("g6", fixtures::g6()),
        ("two_cycle", fixtures::two_cycle()),
    ];
    for (name, g) in all {
        assert_eq!(parse_graph(&fixture(name)).unwrap(), g, "{name}");
    }
}
