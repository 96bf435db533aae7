use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ckgen::extraction::{choose_route, no_sinks_fast_path, run_full_extraction, ExtractionError};
use ckgen::graph::EdgeClass;
use ckgen::pipeline::{ProofOptions, Verdict, DEFAULT_DEPTH, REPORT_SCHEMA};
use ckgen::random::RandomBounds;
use ckgen::representation::{load_family, Exactness};
use ckgen::schedule::ScheduleError;
use ckgen::sweep::{random_sweep, Execution};
use ckgen::symbolic::verify_orthogonality_lemma;
use ckgen::{
    build_generator, build_path_representation, classify, default_schedule, parse_graph, prove_graph,
    validate_schedule, CoefficientSchedule, DirectedGraph, ExtractionMode, ExtractionOptions, GeneratorOptions,
};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

/// Single generators for Cuntz-Krieger graph algebras: build, extract, verify.
#[derive(Parser)]
#[command(name = "ckgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sink / boundary / interior strata and the enumerations built on them.
    Classify { graph: PathBuf },
    /// Assemble g = a + b + c + d on the path-space representation.
    Build {
        graph: PathBuf,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the Cuntz-Krieger relations of a stored family.
    Verify {
        family: PathBuf,
        graph: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Recover every P_v and S_e from g and compare with the family.
    Extract {
        graph: PathBuf,
        #[command(flatten)]
        ext: ExtractArgs,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build, extract and run the single-generation oracle.
    Prove {
        graph: PathBuf,
        #[command(flatten)]
        ext: ExtractArgs,
        #[arg(long)]
        no_oracle: bool,
    },
    /// Run `prove` on random acyclic graphs.
    RandomTest {
        /// Inclusive range `A..B`.
        #[arg(long, default_value = "1..100")]
        seeds: String,
        #[arg(long, default_value_t = 8)]
        max_v: usize,
        #[arg(long, default_value_t = 14)]
        max_e: usize,
        #[arg(long, default_value_t = 4)]
        max_sink_indegree: usize,
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        mode: Option<ExtractionMode>,
        /// Print every seed, not just failures.
        #[arg(long)]
        verbose: bool,
    },
    /// Exact check of the orthogonality identities.
    SymbolicCheck { graph: PathBuf },
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, default_value = "power")]
    mode: ExtractionMode,
    /// Step tolerance for the limits.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Cross-check every limit with the other mode.
    #[arg(long)]
    cross_check: bool,
    /// Fail instead of switching to spectral mode.
    #[arg(long)]
    no_fallback: bool,
    /// Truncation depth for sink-free graphs.
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
}

impl ExtractArgs {
    fn options(&self) -> ExtractionOptions {
        ExtractionOptions {
            mode: self.mode,
            tol: self.tol,
            cross_check: self.cross_check,
            fallback: !self.no_fallback,
            ..Default::default()
        }
    }
}

struct Failure(Verdict);

impl From<Verdict> for Failure {
    fn from(v: Verdict) -> Self {
        Failure(v)
    }
}

fn input(msg: impl std::fmt::Display) -> Failure {
    Failure(Verdict::InputError(msg.to_string()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<DirectedGraph, Failure> {
    parse_graph(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_schedule(path: Option<&Path>, graph: &DirectedGraph) -> Result<CoefficientSchedule, Failure> {
    match path {
        Some(p) => CoefficientSchedule::from_json(&read(p)?)
            .map_err(|e: ScheduleError| input(format!("{}: {e}", p.display()))),
        None => Ok(default_schedule(graph, &classify(graph))),
    }
}

fn write(path: &Path, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    fs::write(path, text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn report(command: &str, verdict: &Verdict, body: Value) -> Value {
    let mut out = json!({
        "schema": REPORT_SCHEMA,
        "command": command,
        "verdict": verdict,
    });
    if let (Value::Object(o), Value::Object(b)) = (&mut out, body) {
        o.extend(b);
    }
    out
}

fn verdict_of(pass: bool, reason: impl FnOnce() -> String) -> Verdict {
    if pass {
        Verdict::Pass
    } else {
        Verdict::InvariantViolation(reason())
    }
}

fn classify_cmd(path: &Path) -> Result<(Verdict, Value), Failure> {
    let g = load_graph(path)?;
    let cls = classify(&g);
    let vname = |v: &usize| g.vertex_name(*v).to_string();
    let ename = |e: &usize| g.edge_name(*e).to_string();
    let edge_class: serde_json::Map<String, Value> = (0..g.edge_count())
        .map(|e| {
            let c = match cls.edge_class[e] {
                EdgeClass::SinkEdge => "sink",
                EdgeClass::BoundaryEdge => "boundary",
                EdgeClass::InteriorEdge => "interior",
            };
            (g.edge_name(e).to_string(), json!(c))
        })
        .collect();
    let y: serde_json::Map<String, Value> = cls
        .boundary_edges_by_source
        .iter()
        .map(|(v, es)| (vname(v), json!(es.iter().map(ename).collect::<Vec<_>>())))
        .collect();
    let body = json!({
        "acyclic": g.is_acyclic(),
        "sinks": cls.sinks.iter().map(vname).collect::<Vec<_>>(),
        "sink_edges": cls.sink_edges.iter().map(|l| l.iter().map(ename).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "boundary_levels": cls.boundary_levels.iter().map(|l| l.iter().map(vname).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "boundary_vertices": cls.boundary_vertices.iter().map(vname).collect::<Vec<_>>(),
        "interior_vertices": cls.interior_vertices.iter().map(vname).collect::<Vec<_>>(),
        "boundary_edges_by_source": y,
        "interior_edges": cls.interior_edges.iter().map(ename).collect::<Vec<_>>(),
        "edge_class": edge_class,
        "extraction_route": if cls.sinks.is_empty() { json!("no_sinks") } else { json!(choose_route(&g, &cls)) },
    });
    Ok((Verdict::Pass, body))
}

fn build_cmd(path: &Path, schedule: Option<&Path>, out: Option<&Path>) -> Result<(Verdict, Value), Failure> {
    let g = load_graph(path)?;
    let cls = classify(&g);
    let s = load_schedule(schedule, &g)?;
    let sched = validate_schedule(&s, &g, &cls).map_err(input)?;
    if !sched.passed() {
        let body = json!({ "schedule": sched });
        return Ok((verdict_of(false, || "schedule violates its constraints".into()), body));
    }
    let family = build_path_representation(&g).map_err(input)?;
    let parts = build_generator(&family, &g, &cls, &s, GeneratorOptions::default())
        .map_err(|e| Failure(Verdict::InvariantViolation(e.to_string())))?;
    let doc = parts.to_json(&g);
    let body = match out {
        Some(p) => {
            write(p, &doc)?;
            json!({ "dim": family.dim, "out": p.display().to_string(), "spectral_margin": parts.spectral_margin })
        }
        None => json!({ "parts": doc }),
    };
    Ok((Verdict::Pass, body))
}

fn verify_cmd(family: &Path, graph: &Path, tol: f64) -> Result<(Verdict, Value), Failure> {
    let g = load_graph(graph)?;
    let fam = load_family(family).map_err(|e| input(format!("{}: {e}", family.display())))?;
    if fam.projections.len() != g.vertex_count() || fam.partial_isometries.len() != g.edge_count() {
        return Err(input("family does not match the graph's vertex and edge counts"));
    }
    let rep = ckgen::representation::verify_ck_family(&fam, &g, tol);
    let pass = match fam.exactness {
        Exactness::Exact => rep.passed(),
        Exactness::TruncatedAtDepth(_) => rep.windowed_passed(),
    };
    let worst = rep.max_residual();
    let verdict = verdict_of(pass, || format!("relation residual {worst:e} above {tol:e}"));
    Ok((verdict, json!({ "exactness": fam.exactness, "relations": rep })))
}

fn extract_cmd(path: &Path, args: &ExtractArgs, out: Option<&Path>) -> Result<(Verdict, Value), Failure> {
    let g = load_graph(path)?;
    let cls = classify(&g);
    let s = load_schedule(args.schedule.as_deref(), &g)?;
    let opts = args.options();
    let fail = |e: ExtractionError| Failure(Verdict::from_extraction(&e));
    let rep = if cls.sinks.is_empty() && g.vertex_count() > 0 {
        no_sinks_fast_path(&g, Some(&s), args.depth, &opts).map_err(fail)?
    } else {
        if !g.is_acyclic() {
            return Err(input("graph has a cycle and sinks"));
        }
        let sched = validate_schedule(&s, &g, &cls).map_err(input)?;
        if !sched.passed() {
            return Ok((verdict_of(false, || "schedule violates its constraints".into()), json!({ "schedule": sched })));
        }
        let family = build_path_representation(&g).map_err(input)?;
        let parts = build_generator(&family, &g, &cls, &s, GeneratorOptions::default())
            .map_err(|e| Failure(Verdict::InvariantViolation(e.to_string())))?;
        run_full_extraction(&parts.g, &g, &cls, &s, &parts.intervals, &family, &opts).map_err(fail)?
    };
    let worst = rep.max_residual;
    let verdict = verdict_of(rep.pass, || format!("extraction residual {worst:e}"));
    let body = json!({ "recovery": rep });
    if let Some(p) = out {
        write(p, &report("extract", &verdict, body.clone()))?;
    }
    Ok((verdict, body))
}

fn prove_cmd(path: &Path, args: &ExtractArgs, no_oracle: bool) -> Result<(Verdict, Value), Failure> {
    let g = load_graph(path)?;
    let s = load_schedule(args.schedule.as_deref(), &g)?;
    let opts = ProofOptions {
        extraction: args.options(),
        oracle: !no_oracle,
        depth: args.depth,
        ..Default::default()
    };
    let out = prove_graph(&g, Some(&s), &opts);
    let verdict = out.verdict.clone();
    let mut body = serde_json::to_value(&out).expect("outcome serializes");
    if let Value::Object(o) = &mut body {
        o.remove("schema");
        o.remove("verdict");
    }
    Ok((verdict, json!({ "outcome": body })))
}

fn parse_seeds(range: &str) -> Result<Vec<u64>, Failure> {
    let bad = || input(format!("--seeds expects A..B, got {range:?}"));
    let (a, b) = range.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
    if a > b {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

#[allow(clippy::too_many_arguments)]
fn random_test_cmd(
    seeds: &str,
    max_v: usize,
    max_e: usize,
    max_sink_indegree: usize,
    parallel: bool,
    mode: Option<ExtractionMode>,
    verbose: bool,
) -> Result<(Verdict, Value), Failure> {
    let seeds = parse_seeds(seeds)?;
    if max_v == 0 || max_sink_indegree == 0 {
        return Err(input("bounds must be at least 1"));
    }
    let bounds = RandomBounds::new(max_v, max_e, max_sink_indegree);
    let mut opts = ProofOptions::default();
    if let Some(m) = mode {
        opts.extraction.mode = m;
    }
    let exec = if parallel { Execution::Parallel } else { Execution::Sequential };
    let summary = random_sweep(&seeds, bounds, exec, &opts);
    for r in &summary.results {
        if verbose || !r.verdict.is_pass() {
            eprintln!(
                "seed {}: V{} E{} dim {} residual {} dims {:?} {:?}",
                r.seed,
                r.vertices,
                r.edges,
                r.dim,
                r.max_residual.map_or("-".into(), |x| format!("{x:.2e}")),
                r.dims,
                r.verdict
            );
        }
    }
    let status = if summary.all_passed() { "PASS" } else { "FAIL" };
    eprintln!("{}/{} {status}", summary.passed, summary.total);
    Ok((summary.worst(), json!({ "summary": summary })))
}

fn symbolic_cmd(path: &Path) -> Result<(Verdict, Value), Failure> {
    let g = load_graph(path)?;
    let rep = verify_orthogonality_lemma(&g, &classify(&g));
    let failed = rep.failures().count();
    let verdict = verdict_of(rep.passed(), || format!("{failed} identities left a nonzero residue"));
    Ok((verdict, json!({ "symbolic": rep })))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, result) = match &cli.command {
        Command::Classify { graph } => ("classify", classify_cmd(graph)),
        Command::Build { graph, schedule, out } => ("build", build_cmd(graph, schedule.as_deref(), out.as_deref())),
        Command::Verify { family, graph, tol } => ("verify", verify_cmd(family, graph, *tol)),
        Command::Extract { graph, ext, report } => ("extract", extract_cmd(graph, ext, report.as_deref())),
        Command::Prove { graph, ext, no_oracle } => ("prove", prove_cmd(graph, ext, *no_oracle)),
        Command::RandomTest {
            seeds,
            max_v,
            max_e,
            max_sink_indegree,
            parallel,
            mode,
            verbose,
        } => (
            "random-test",
            random_test_cmd(seeds, *max_v, *max_e, *max_sink_indegree, *parallel, *mode, *verbose),
        ),
        Command::SymbolicCheck { graph } => ("symbolic-check", symbolic_cmd(graph)),
    };
    let (verdict, body) = match result {
        Ok(pair) => pair,
        Err(Failure(v)) => (v, json!({})),
    };
    let doc = report(name, &verdict, body);
    println!("{}", serde_json::to_string_pretty(&doc).expect("report serializes"));
    ExitCode::from(verdict.exit_code() as u8)
}
