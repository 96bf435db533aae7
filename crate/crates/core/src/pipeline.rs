//! End-to-end checks on one graph: representation, symbolic identities,
//! schedule, generator structure, extraction and the generation oracle.

use serde::Serialize;

use crate::extraction::{no_sinks_fast_path, run_full_extraction, ExtractionError, ExtractionOptions, RecoveryReport};
use crate::generator::{build_generator, structure_report, GeneratorOptions, StructureReport};
use crate::graph::{classify, DirectedGraph};
use crate::oracle::{single_generation_check, GenerationCheck};
use crate::representation::{build_path_representation, verify_ck_family};
use crate::schedule::{default_schedule, validate_schedule, CoefficientSchedule};
use crate::symbolic::verify_orthogonality_lemma;

pub const REPORT_SCHEMA: &str = "ckgen-report/1";
pub const DEFAULT_DEPTH: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    InvariantViolation(String),
    ConvergenceFailure(String),
    InputError(String),
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::InvariantViolation(_) => 2,
            Verdict::ConvergenceFailure(_) => 3,
            Verdict::InputError(_) => 4,
        }
    }

    pub fn is_pass(&self) -> bool {
        *self == Verdict::Pass
    }

    pub fn from_extraction(e: &ExtractionError) -> Self {
        if e.is_convergence() {
            Verdict::ConvergenceFailure(e.to_string())
        } else {
            Verdict::InvariantViolation(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProofOptions {
    pub extraction: ExtractionOptions,
    pub generator: GeneratorOptions,
    pub oracle: bool,
    /// Truncation depth for sink-free graphs.
    pub depth: usize,
    pub relation_tol: f64,
    pub structure_tol: f64,
}

impl Default for ProofOptions {
    fn default() -> Self {
        Self {
            extraction: ExtractionOptions::default(),
            generator: GeneratorOptions::default(),
            oracle: true,
            depth: DEFAULT_DEPTH,
            relation_tol: 1e-12,
            structure_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProofOutcome {
    pub schema: &'static str,
    pub vertices: usize,
    pub edges: usize,
    pub dim: usize,
    pub relations_max: Option<f64>,
    pub symbolic_pass: Option<bool>,
    pub schedule_pass: Option<bool>,
    pub structure: Option<StructureReport>,
    pub recovery: Option<RecoveryReport>,
    pub generation: Option<GenerationCheck>,
    pub verdict: Verdict,
}

impl ProofOutcome {
    fn new(graph: &DirectedGraph) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            vertices: graph.vertex_count(),
            edges: graph.edge_count(),
            dim: 0,
            relations_max: None,
            symbolic_pass: None,
            schedule_pass: None,
            structure: None,
            recovery: None,
            generation: None,
            verdict: Verdict::Pass,
        }
    }

    fn fail(mut self, v: Verdict) -> Self {
        self.verdict = v;
        self
    }
}

/// Runs every stage on `graph`; the first failing stage decides the verdict.
pub fn prove_graph(graph: &DirectedGraph, schedule: Option<&CoefficientSchedule>, opts: &ProofOptions) -> ProofOutcome {
    let mut out = ProofOutcome::new(graph);
    let cls = classify(graph);
    let s = schedule.cloned().unwrap_or_else(|| default_schedule(graph, &cls));
    match validate_schedule(&s, graph, &cls) {
        Ok(rep) => {
            out.schedule_pass = Some(rep.passed());
            if !rep.passed() {
                let first = &rep.violations[0];
                return out.fail(Verdict::InvariantViolation(format!("schedule: {} {}", first.constraint, first.message)));
            }
        }
        Err(e) => return out.fail(Verdict::InputError(e.to_string())),
    }

    if cls.sinks.is_empty() && graph.vertex_count() > 0 {
        return match no_sinks_fast_path(graph, Some(&s), opts.depth, &opts.extraction) {
            Ok(rep) => {
                let verdict = if rep.pass {
                    Verdict::Pass
                } else {
                    Verdict::InvariantViolation(format!("windowed residual {:e}", rep.max_residual))
                };
                out.recovery = Some(rep);
                out.fail(verdict)
            }
            Err(e) => out.fail(Verdict::from_extraction(&e)),
        };
    }
    if !graph.is_acyclic() {
        return out.fail(Verdict::InputError("graph has a cycle and sinks".into()));
    }

    let family = match build_path_representation(graph) {
        Ok(f) => f,
        Err(e) => return out.fail(Verdict::InputError(e.to_string())),
    };
    out.dim = family.dim;
    let ck = verify_ck_family(&family, graph, opts.relation_tol);
    out.relations_max = Some(ck.max_residual());
    if !ck.passed() {
        return out.fail(Verdict::InvariantViolation(format!("relations: {:e}", ck.max_residual())));
    }
    let sym = verify_orthogonality_lemma(graph, &cls);
    out.symbolic_pass = Some(sym.passed());
    if !sym.passed() {
        return out.fail(Verdict::InvariantViolation("orthogonality identities".into()));
    }

    let parts = match build_generator(&family, graph, &cls, &s, opts.generator) {
        Ok(p) => p,
        Err(e) => return out.fail(Verdict::InvariantViolation(e.to_string())),
    };
    let structure = structure_report(&parts, &family, &cls);
    let structure_ok = structure.passed(opts.structure_tol);
    out.structure = Some(structure);
    if !structure_ok {
        return out.fail(Verdict::InvariantViolation("generator structure".into()));
    }

    match run_full_extraction(&parts.g, graph, &cls, &s, &parts.intervals, &family, &opts.extraction) {
        Ok(rep) => {
            let pass = rep.pass;
            let worst = rep.max_residual;
            out.recovery = Some(rep);
            if !pass {
                return out.fail(Verdict::InvariantViolation(format!("extraction residual {worst:e}")));
            }
        }
        Err(e) => return out.fail(Verdict::from_extraction(&e)),
    }

    if opts.oracle {
        match single_generation_check(&parts.g, &family) {
            Ok(check) => {
                let pass = check.pass;
                out.generation = Some(check);
                if !pass {
                    return out.fail(Verdict::InvariantViolation("g does not generate the family".into()));
                }
            }
            Err(e) => return out.fail(Verdict::InvariantViolation(e.to_string())),
        }
    }
    out
}
