//! Concrete Cuntz-Krieger families on path spaces.
//!
//! For an acyclic graph the basis is every path whose source receives no
//! edges (trivial paths included at such vertices). `S_e` prepends `e` on the
//! range side and `P_v` projects onto paths ending at `v`; every relation
//! holds exactly with 0/1 matrices.

use std::collections::HashMap;
use std::path::Path as FsPath;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::DirectedGraph;
use crate::linalg::{self, CMatrix};
use crate::symbolic::Path;

pub const FAMILY_SCHEMA: &str = "ckgen-family/1";

#[derive(Debug, Error)]
pub enum RepresentationError {
    #[error("graph has a cycle; use the truncated builder")]
    Cyclic,
    #[error("truncation depth must be at least 1")]
    BadDepth,
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("family file schema: {0}")]
    Schema(String),
    #[error("family file i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    Exact,
    TruncatedAtDepth(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixCkFamily {
    pub dim: usize,
    pub basis_labels: Vec<String>,
    /// Path length of each basis vector, when known.
    pub basis_lengths: Option<Vec<usize>>,
    pub vertex_ids: Vec<String>,
    pub edge_ids: Vec<String>,
    /// `P_v`, vertex file order.
    pub projections: Vec<CMatrix>,
    /// `S_e`, edge file order.
    pub partial_isometries: Vec<CMatrix>,
    pub exactness: Exactness,
}

impl MatrixCkFamily {
    pub fn projection(&self, v: usize) -> &CMatrix {
        &self.projections[v]
    }

    pub fn isometry(&self, e: usize) -> &CMatrix {
        &self.partial_isometries[e]
    }

    /// `S_e S_e*`.
    pub fn range_projection(&self, e: usize) -> CMatrix {
        let s = &self.partial_isometries[e];
        s * s.adjoint()
    }

    /// All `P_v` and `S_e`, the generating set of the represented algebra.
    pub fn generators(&self) -> Vec<CMatrix> {
        self.projections
            .iter()
            .chain(self.partial_isometries.iter())
            .cloned()
            .collect()
    }

    /// Projection onto basis vectors satisfying `keep(index)`.
    pub fn coordinate_projection<F: Fn(usize) -> bool>(&self, keep: F) -> CMatrix {
        let mut p = linalg::zeros(self.dim);
        for i in 0..self.dim {
            if keep(i) {
                p[(i, i)] = linalg::c(1.0);
            }
        }
        p
    }
}

fn enumerate_paths(graph: &DirectedGraph, starts: &[usize], max_len: Option<usize>) -> Vec<Path> {
    let mut layer: Vec<Path> = starts.iter().map(|&v| Path::trivial(v)).collect();
    let mut all = layer.clone();
    let mut len = 0;
    while !layer.is_empty() && max_len.is_none_or(|m| len < m) {
        let mut next = Vec::new();
        for mu in &layer {
            for e in graph.emitted(mu.rng) {
                next.push(Path::edge(graph, e).concat(mu));
            }
        }
        all.extend(next.iter().cloned());
        layer = next;
        len += 1;
    }
    all
}

fn assemble(graph: &DirectedGraph, basis: Vec<Path>, depth: Option<usize>, exactness: Exactness) -> MatrixCkFamily {
    let n = basis.len();
    let index: HashMap<&Path, usize> = basis.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let one = linalg::c(1.0);
    let mut projections = vec![linalg::zeros(n); graph.vertex_count()];
    for (i, mu) in basis.iter().enumerate() {
        projections[mu.rng][(i, i)] = one;
    }
    let mut partial_isometries = vec![linalg::zeros(n); graph.edge_count()];
    for (i, mu) in basis.iter().enumerate() {
        if depth.is_some_and(|l| mu.len() >= l) {
            continue;
        }
        for e in graph.emitted(mu.rng) {
            let target = Path::edge(graph, e).concat(mu);
            if let Some(&j) = index.get(&target) {
                partial_isometries[e][(j, i)] = one;
            }
        }
    }
    MatrixCkFamily {
        dim: n,
        basis_labels: basis.iter().map(|p| p.label(graph)).collect(),
        basis_lengths: Some(basis.iter().map(Path::len).collect()),
        vertex_ids: graph.vertices().to_vec(),
        edge_ids: graph.edges().iter().map(|e| e.id.clone()).collect(),
        projections,
        partial_isometries,
        exactness,
    }
}

fn receiver_free(graph: &DirectedGraph) -> Vec<usize> {
    (0..graph.vertex_count())
        .filter(|&v| graph.in_degree(v) == 0)
        .collect()
}

/// Exact family for an acyclic graph.
pub fn build_path_representation(graph: &DirectedGraph) -> Result<MatrixCkFamily, RepresentationError> {
    if !graph.is_acyclic() {
        return Err(RepresentationError::Cyclic);
    }
    let basis = enumerate_paths(graph, &receiver_free(graph), None);
    Ok(assemble(graph, basis, None, Exactness::Exact))
}

/// Window of paths of length at most `depth`, starting either at a
/// receiver-free vertex or at a vertex fed by a cycle. `S_e` annihilates the
/// deepest layer, so relation (i) fails there and relation (iii) fails on
/// trivial paths at cycle-fed vertices. On acyclic graphs whose paths all
/// fit in the window this coincides with [`build_path_representation`].
pub fn build_truncated_representation(graph: &DirectedGraph, depth: usize) -> Result<MatrixCkFamily, RepresentationError> {
    if depth == 0 {
        return Err(RepresentationError::BadDepth);
    }
    let fed = graph.fed_by_cycle();
    let starts: Vec<usize> = (0..graph.vertex_count())
        .filter(|&v| graph.in_degree(v) == 0 || fed[v])
        .collect();
    let basis = enumerate_paths(graph, &starts, Some(depth));
    let exact_fit = graph.is_acyclic() && basis.iter().all(|p| p.len() < depth);
    if exact_fit {
        return Ok(assemble(graph, basis, None, Exactness::Exact));
    }
    Ok(assemble(graph, basis, Some(depth), Exactness::TruncatedAtDepth(depth)))
}

#[derive(Debug, Clone, Serialize)]
pub struct RelationResidual {
    pub relation: &'static str,
    pub residual: f64,
    pub witness: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CkReport {
    pub tol: f64,
    pub residuals: Vec<RelationResidual>,
    /// For truncated families: residuals compressed to the subspace where
    /// each relation is expected to hold.
    pub windowed: Vec<RelationResidual>,
    pub zero_projections: Vec<String>,
    pub problems: Vec<String>,
}

impl CkReport {
    pub fn passed(&self) -> bool {
        self.problems.is_empty() && self.residuals.iter().all(|r| r.residual <= self.tol)
    }

    pub fn windowed_passed(&self) -> bool {
        self.problems.is_empty() && self.windowed.iter().all(|r| r.residual <= self.tol)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |a, r| a.max(r.residual))
    }

    pub fn residual(&self, relation: &str) -> f64 {
        self.residuals
            .iter()
            .filter(|r| r.relation == relation)
            .fold(0.0, |a, r| a.max(r.residual))
    }

    pub fn windowed_residual(&self, relation: &str) -> f64 {
        self.windowed
            .iter()
            .filter(|r| r.relation == relation)
            .fold(0.0, |a, r| a.max(r.residual))
    }
}

struct Worst {
    relation: &'static str,
    residual: f64,
    witness: String,
}

impl Worst {
    fn new(relation: &'static str) -> Self {
        Self {
            relation,
            residual: 0.0,
            witness: String::new(),
        }
    }

    fn see(&mut self, r: f64, witness: impl FnOnce() -> String) {
        if r > self.residual || (self.witness.is_empty() && r == self.residual) {
            self.residual = r;
            self.witness = witness();
        }
    }

    fn done(self) -> RelationResidual {
        RelationResidual {
            relation: self.relation,
            residual: self.residual,
            witness: self.witness,
        }
    }
}

/// Per-relation worst operator-norm residuals.
pub fn verify_ck_family(family: &MatrixCkFamily, graph: &DirectedGraph, tol: f64) -> CkReport {
    let mut problems = Vec::new();
    if family.vertex_ids != graph.vertices() {
        problems.push("family vertex ids do not match the graph".to_string());
    }
    let edge_ids: Vec<String> = graph.edges().iter().map(|e| e.id.clone()).collect();
    if family.edge_ids != edge_ids {
        problems.push("family edge ids do not match the graph".to_string());
    }
    let dims_ok = family
        .projections
        .iter()
        .chain(family.partial_isometries.iter())
        .all(|m| m.nrows() == family.dim && m.ncols() == family.dim);
    if !dims_ok {
        problems.push("matrix dimensions inconsistent with dim".to_string());
    }
    if !problems.is_empty() {
        return CkReport {
            tol,
            residuals: Vec::new(),
            windowed: Vec::new(),
            zero_projections: Vec::new(),
            problems,
        };
    }

    let residuals = relation_residuals(family, graph, None, None);
    let windowed = match (family.exactness, &family.basis_lengths) {
        (Exactness::TruncatedAtDepth(depth), Some(lengths)) => {
            let inner = family.coordinate_projection(|i| lengths[i] < depth);
            let free: Vec<bool> = (0..graph.vertex_count()).map(|v| graph.in_degree(v) == 0).collect();
            let labels = &family.basis_labels;
            let nontrivial = family.coordinate_projection(|i| {
                lengths[i] > 0 || graph.vertex_id(&labels[i]).is_some_and(|v| free[v])
            });
            relation_residuals(family, graph, Some(&inner), Some(&nontrivial))
        }
        _ => Vec::new(),
    };
    let zero_projections = family
        .projections
        .iter()
        .enumerate()
        .filter(|(_, p)| linalg::max_abs(p) == 0.0)
        .map(|(v, _)| graph.vertex_name(v).to_string())
        .collect();
    CkReport {
        tol,
        residuals,
        windowed,
        zero_projections,
        problems,
    }
}

fn relation_residuals(
    family: &MatrixCkFamily,
    graph: &DirectedGraph,
    source_window: Option<&CMatrix>,
    sum_window: Option<&CMatrix>,
) -> Vec<RelationResidual> {
    let compress = |m: CMatrix, w: Option<&CMatrix>| match w {
        Some(w) => w * m * w,
        None => m,
    };
    let p = &family.projections;
    let s = &family.partial_isometries;
    let ranges: Vec<CMatrix> = (0..s.len()).map(|e| family.range_projection(e)).collect();
    let vname = |v: usize| graph.vertex_name(v).to_string();
    let ename = |e: usize| graph.edge_name(e).to_string();

    let mut proj = Worst::new("projection");
    let mut orth = Worst::new("vertex_orthogonality");
    for v in 0..p.len() {
        proj.see(linalg::projection_defect(&p[v]), || vname(v));
        for w in (v + 1)..p.len() {
            orth.see(linalg::op_norm(&(&p[v] * &p[w])), || format!("{},{}", vname(v), vname(w)));
        }
    }
    let mut source = Worst::new("(i) source");
    let mut range = Worst::new("(ii) range");
    let mut partial = Worst::new("partial_isometry");
    let mut range_orth = Worst::new("range_orthogonality");
    for e in 0..s.len() {
        let (src, rng) = (graph.src(e), graph.rng(e));
        let r = linalg::op_norm(&compress(s[e].adjoint() * &s[e] - &p[src], source_window));
        source.see(r, || ename(e));
        range.see(linalg::op_norm(&(&p[rng] * &ranges[e] - &ranges[e])), || ename(e));
        partial.see(linalg::op_norm(&(&ranges[e] * &s[e] - &s[e])), || ename(e));
        for f in (e + 1)..s.len() {
            range_orth.see(linalg::op_norm(&(&ranges[e] * &ranges[f])), || {
                format!("{},{}", ename(e), ename(f))
            });
        }
    }
    let mut summation = Worst::new("(iii) summation");
    for v in 0..p.len() {
        let incoming: Vec<usize> = graph.received(v).collect();
        if incoming.is_empty() {
            continue;
        }
        let mut total = linalg::zeros(family.dim);
        for &e in &incoming {
            total += &ranges[e];
        }
        summation.see(linalg::op_norm(&compress(&p[v] - total, sum_window)), || vname(v));
    }
    vec![
        proj.done(),
        orth.done(),
        source.done(),
        range.done(),
        partial.done(),
        range_orth.done(),
        summation.done(),
    ]
}

/// Ascending eigenvalues of a self-adjoint matrix with spectral projections
/// per cluster.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigen: linalg::HermitianEigen,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.values
    }

    /// Distinct eigenvalues (clustered) with multiplicities and projections.
    pub fn clusters(&self, tol: f64) -> Vec<(f64, usize, CMatrix)> {
        self.eigen
            .clusters(tol)
            .into_iter()
            .map(|c| {
                let p = self.eigen.projection(&c.columns);
                (c.value, c.multiplicity, p)
            })
            .collect()
    }
}

pub fn spectrum(x: &CMatrix) -> Result<Spectrum, RepresentationError> {
    if !x.is_square() {
        return Err(RepresentationError::NonSquare {
            rows: x.nrows(),
            cols: x.ncols(),
        });
    }
    Ok(Spectrum {
        eigen: linalg::hermitian_eigen(x),
    })
}

// ---- JSON ----

pub(crate) fn number(x: f64) -> serde_json::Value {
    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        serde_json::Value::from(x as i64)
    } else {
        serde_json::Value::from(x)
    }
}

pub(crate) fn matrix_to_json(m: &CMatrix) -> serde_json::Value {
    serde_json::Value::Array(
        (0..m.nrows())
            .map(|i| {
                serde_json::Value::Array(
                    (0..m.ncols())
                        .map(|j| {
                            let z = m[(i, j)];
                            serde_json::Value::Array(vec![number(z.re), number(z.im)])
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

pub(crate) fn matrix_from_json(v: &serde_json::Value, dim: usize) -> Result<CMatrix, RepresentationError> {
    let bad = |msg: &str| RepresentationError::Schema(msg.to_string());
    let rows = v.as_array().ok_or_else(|| bad("matrix must be an array of rows"))?;
    let ncols = rows.first().and_then(|r| r.as_array()).map_or(0, |r| r.len());
    if rows.len() != ncols {
        return Err(RepresentationError::NonSquare {
            rows: rows.len(),
            cols: ncols,
        });
    }
    if rows.len() != dim {
        return Err(bad(&format!("matrix has size {}, expected {dim}", rows.len())));
    }
    let mut m = linalg::zeros(dim);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| bad("row must be an array"))?;
        if row.len() != dim {
            return Err(RepresentationError::NonSquare {
                rows: dim,
                cols: row.len(),
            });
        }
        for (j, entry) in row.iter().enumerate() {
            let pair = entry
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| bad("entry must be [re, im]"))?;
            let re = pair[0].as_f64().ok_or_else(|| bad("re must be a number"))?;
            let im = pair[1].as_f64().ok_or_else(|| bad("im must be a number"))?;
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

#[derive(Serialize, Deserialize)]
struct FamilyFile {
    schema: String,
    dim: usize,
    basis_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis_lengths: Option<Vec<usize>>,
    exactness: Exactness,
    vertices: Vec<String>,
    edges: Vec<String>,
    projections: Vec<serde_json::Value>,
    partial_isometries: Vec<serde_json::Value>,
}

impl MatrixCkFamily {
    pub fn to_json(&self) -> String {
        let file = FamilyFile {
            schema: FAMILY_SCHEMA.into(),
            dim: self.dim,
            basis_labels: self.basis_labels.clone(),
            basis_lengths: self.basis_lengths.clone(),
            exactness: self.exactness,
            vertices: self.vertex_ids.clone(),
            edges: self.edge_ids.clone(),
            projections: self.projections.iter().map(matrix_to_json).collect(),
            partial_isometries: self.partial_isometries.iter().map(matrix_to_json).collect(),
        };
        serde_json::to_string_pretty(&file).expect("family serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RepresentationError> {
        let file: FamilyFile =
            serde_json::from_str(text).map_err(|e| RepresentationError::Schema(e.to_string()))?;
        if file.schema != FAMILY_SCHEMA {
            return Err(RepresentationError::Schema(format!("unknown schema {:?}", file.schema)));
        }
        if file.basis_labels.len() != file.dim {
            return Err(RepresentationError::Schema("basis_labels length differs from dim".into()));
        }
        if file.projections.len() != file.vertices.len() || file.partial_isometries.len() != file.edges.len() {
            return Err(RepresentationError::Schema("matrix count differs from id list".into()));
        }
        let projections = file
            .projections
            .iter()
            .map(|m| matrix_from_json(m, file.dim))
            .collect::<Result<_, _>>()?;
        let partial_isometries = file
            .partial_isometries
            .iter()
            .map(|m| matrix_from_json(m, file.dim))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            dim: file.dim,
            basis_labels: file.basis_labels,
            basis_lengths: file.basis_lengths,
            vertex_ids: file.vertices,
            edge_ids: file.edges,
            projections,
            partial_isometries,
            exactness: file.exactness,
        })
    }
}

pub fn save_family(family: &MatrixCkFamily, path: &FsPath) -> Result<(), RepresentationError> {
    std::fs::write(path, family.to_json())?;
    Ok(())
}

pub fn load_family(path: &FsPath) -> Result<MatrixCkFamily, RepresentationError> {
    MatrixCkFamily::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures;

    #[test]
    fn g2_basis_and_isometry() {
        let fam = build_path_representation(&fixtures::g2()).unwrap();
        assert_eq!(fam.dim, 2);
        assert_eq!(fam.basis_labels, vec!["u", "e"]);
        // S_e = matrix unit δ_u ↦ δ_e.
        assert_eq!(fam.partial_isometries[0][(1, 0)], linalg::c(1.0));
        assert_eq!(linalg::frobenius(&fam.partial_isometries[0]), 1.0);
    }

    #[test]
    fn g3_basis_and_sink_projection() {
        let fam = build_path_representation(&fixtures::g3()).unwrap();
        assert_eq!(fam.basis_labels, vec!["u", "i", "f·i"]);
        let pw = &fam.projections[2];
        assert_eq!(pw[(2, 2)], linalg::c(1.0));
        assert_eq!(linalg::frobenius(pw), 1.0);
    }

    #[test]
    fn g1_is_scalar() {
        let fam = build_path_representation(&fixtures::g1()).unwrap();
        assert_eq!(fam.dim, 1);
        assert_eq!(fam.projections[0], linalg::identity(1));
        assert!(fam.partial_isometries.is_empty());
    }

    #[test]
    fn cyclic_graph_needs_truncation() {
        assert!(matches!(build_path_representation(&fixtures::g5()), Err(RepresentationError::Cyclic)));
    }

    #[test]
    fn truncated_loop_dimensions() {
        let g = fixtures::g5();
        assert_eq!(build_truncated_representation(&g, 4).unwrap().dim, 5);
        assert_eq!(build_truncated_representation(&g, 1).unwrap().dim, 2);
        assert!(build_truncated_representation(&g, 0).is_err());
    }

    #[test]
    fn truncated_acyclic_is_exact() {
        let g = fixtures::g3();
        let exact = build_path_representation(&g).unwrap();
        for depth in [3, 5] {
            assert_eq!(build_truncated_representation(&g, depth).unwrap(), exact);
        }
    }

    #[test]
    fn exact_family_has_zero_residuals() {
        for (_, g) in fixtures::acyclic() {
            let fam = build_path_representation(&g).unwrap();
            let rep = verify_ck_family(&fam, &g, 0.0);
            assert!(rep.passed(), "{:?}", rep.residuals);
            assert!(rep.zero_projections.is_empty());
        }
    }

    #[test]
    fn scaled_isometry_flags_relation_i() {
        let g = fixtures::g2();
        let mut fam = build_path_representation(&g).unwrap();
        fam.partial_isometries[0] = linalg::scale(&fam.partial_isometries[0], 1.1);
        let rep = verify_ck_family(&fam, &g, 1e-12);
        assert!(!rep.passed());
        assert!((rep.residual("(i) source") - 0.21).abs() < 1e-12);
    }

    #[test]
    fn truncated_loop_reports_window() {
        let g = fixtures::g5();
        let fam = build_truncated_representation(&g, 4).unwrap();
        let rep = verify_ck_family(&fam, &g, 1e-12);
        assert!(!rep.passed());
        assert!((rep.residual("(iii) summation") - 1.0).abs() < 1e-12);
        assert_eq!(rep.windowed_residual("(iii) summation"), 0.0);
        assert_eq!(rep.windowed_residual("(i) source"), 0.0);
        assert!(rep.windowed_passed());
    }

    #[test]
    fn spectrum_examples() {
        let z = spectrum(&linalg::zeros(3)).unwrap();
        assert_eq!(z.eigenvalues(), &[0.0, 0.0, 0.0]);
        let mut p = linalg::zeros(3);
        p[(0, 0)] = linalg::c(1.0);
        p[(2, 2)] = linalg::c(1.0);
        let s = spectrum(&p).unwrap();
        assert_eq!(s.eigenvalues(), &[0.0, 1.0, 1.0]);
        assert_eq!(s.clusters(1e-10).len(), 2);
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(spectrum(&rect), Err(RepresentationError::NonSquare { .. })));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let fam = build_path_representation(&fixtures::g3()).unwrap();
        let text = fam.to_json();
        assert!(text.contains("[\n") && !text.contains("1.0"));
        assert_eq!(MatrixCkFamily::from_json(&text).unwrap(), fam);
        let mut odd = fam.clone();
        odd.partial_isometries[0][(1, 0)] = Complex64::new(0.1 + 0.2, -1e-300);
        assert_eq!(MatrixCkFamily::from_json(&odd.to_json()).unwrap(), odd);
    }

    #[test]
    fn non_square_matrix_rejected() {
        let text = r#"{"schema":"ckgen-family/1","dim":2,"basis_labels":["u","e"],"exactness":"exact",
            "vertices":["u","w"],"edges":["e"],
            "projections":[[[[1,0],[0,0]],[[0,0],[0,0]]],[[[0,0],[0,0]],[[0,0],[1,0]]]],
            "partial_isometries":[[[[0,0],[0,0],[0,0]],[[1,0],[0,0],[0,0]]]]}"#;
        assert!(matches!(
            MatrixCkFamily::from_json(text),
            Err(RepresentationError::NonSquare { .. })
        ));
    }
}
