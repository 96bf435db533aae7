//! Single-generator construction and recovery for graph C*-algebras of
//! finite directed graphs.
//!
//! The crate builds concrete Cuntz-Krieger families on path spaces, assembles
//! one element `g` from them, and then recovers every vertex projection and
//! edge partial isometry from `g` alone. An independent span-closure oracle
//! confirms that `g` generates the whole algebra.

#![allow(clippy::needless_range_loop)]

pub mod exact;
pub mod extraction;
pub mod generator;
pub mod graph;
pub mod linalg;
pub mod oracle;
pub mod pipeline;
pub mod random;
pub mod representation;
pub mod schedule;
pub mod sweep;
pub mod symbolic;

pub use extraction::{ExtractionMode, ExtractionOptions, RecoveryReport};
pub use generator::{build_generator, GeneratorOptions, GeneratorParts};
pub use graph::{classify, parse_graph, Classification, DirectedGraph};
pub use linalg::CMatrix;
pub use pipeline::{prove_graph, ProofOptions, ProofOutcome, Verdict};
pub use representation::{build_path_representation, build_truncated_representation, MatrixCkFamily};
pub use schedule::{default_schedule, validate_schedule, CoefficientSchedule};
pub use sweep::Execution;
