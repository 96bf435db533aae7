//! Finite directed graphs, the JSON graph file format, and the
//! sink / boundary / interior taxonomy with its enumerations.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("malformed graph file at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate vertex id {id:?} at vertices[{index}]")]
    DuplicateVertex { id: String, index: usize },
    #[error("duplicate edge id {id:?} at edges[{index}]")]
    DuplicateEdge { id: String, index: usize },
    #[error("dangling endpoint {vertex:?} in edges[{index}].{field}")]
    DanglingEndpoint {
        vertex: String,
        index: usize,
        field: &'static str,
    },
}

/// On-disk graph document: `{"vertices": [...], "edges": [{"id", "src", "rng"}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub id: String,
    pub src: String,
    pub rng: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub id: String,
    pub src: usize,
    pub rng: usize,
}

/// A finite directed graph `E = (E⁰, E¹, r, s)`. Vertices and edges are
/// addressed by their position in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    vertex_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
}

impl DirectedGraph {
    pub fn new(file: &GraphFile) -> Result<Self, GraphError> {
        let mut vertex_index = HashMap::with_capacity(file.vertices.len());
        for (index, id) in file.vertices.iter().enumerate() {
            if vertex_index.insert(id.clone(), index).is_some() {
                return Err(GraphError::DuplicateVertex {
                    id: id.clone(),
                    index,
                });
            }
        }
        let mut edge_index = HashMap::with_capacity(file.edges.len());
        let mut edges = Vec::with_capacity(file.edges.len());
        for (index, rec) in file.edges.iter().enumerate() {
            if edge_index.insert(rec.id.clone(), index).is_some() {
                return Err(GraphError::DuplicateEdge {
                    id: rec.id.clone(),
                    index,
                });
            }
            let lookup = |v: &String, field| {
                vertex_index
                    .get(v)
                    .copied()
                    .ok_or_else(|| GraphError::DanglingEndpoint {
                        vertex: v.clone(),
                        index,
                        field,
                    })
            };
            let src = lookup(&rec.src, "src")?;
            let rng = lookup(&rec.rng, "rng")?;
            edges.push(Edge {
                id: rec.id.clone(),
                src,
                rng,
            });
        }
        Ok(Self {
            vertices: file.vertices.clone(),
            edges,
            vertex_index,
            edge_index,
        })
    }

    /// Convenience constructor from `(id, src, rng)` triples.
    pub fn from_lists(vertices: &[&str], edges: &[(&str, &str, &str)]) -> Result<Self, GraphError> {
        Self::new(&GraphFile {
            vertices: vertices.iter().map(|s| s.to_string()).collect(),
            edges: edges
                .iter()
                .map(|(id, s, r)| EdgeRecord {
                    id: id.to_string(),
                    src: s.to_string(),
                    rng: r.to_string(),
                })
                .collect(),
        })
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            vertices: self.vertices.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    id: e.id.clone(),
                    src: self.vertices[e.src].clone(),
                    rng: self.vertices[e.rng].clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("graph serializes")
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn vertex_name(&self, v: usize) -> &str {
        &self.vertices[v]
    }

    pub fn edge_name(&self, e: usize) -> &str {
        &self.edges[e].id
    }

    pub fn vertex_id(&self, name: &str) -> Option<usize> {
        self.vertex_index.get(name).copied()
    }

    pub fn edge_id(&self, name: &str) -> Option<usize> {
        self.edge_index.get(name).copied()
    }

    pub fn src(&self, e: usize) -> usize {
        self.edges[e].src
    }

    pub fn rng(&self, e: usize) -> usize {
        self.edges[e].rng
    }

    /// Edges emitted by `v`, file order.
    pub fn emitted(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(move |&e| self.edges[e].src == v)
    }

    /// Edges received by `v` (that is, `r⁻¹(v)`), file order.
    pub fn received(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(move |&e| self.edges[e].rng == v)
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.received(v).count()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.emitted(v).count()
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Kahn's algorithm; `None` if there is a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.vertices.len();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.in_degree(v)).collect();
        let mut ready: Vec<usize> = (0..n).rev().filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for e in self.emitted(v) {
                let r = self.edges[e].rng;
                indeg[r] -= 1;
                if indeg[r] == 0 {
                    ready.push(r);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Vertices that admit arbitrarily long paths ending at them, i.e. those
    /// reachable from a cycle.
    pub fn fed_by_cycle(&self) -> Vec<bool> {
        let n = self.vertices.len();
        // Strip receiver-free vertices repeatedly; what remains is fed by a cycle.
        let mut indeg: Vec<usize> = (0..n).map(|v| self.in_degree(v)).collect();
        let mut removed = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        while let Some(v) = stack.pop() {
            removed[v] = true;
            for e in self.emitted(v) {
                let r = self.edges[e].rng;
                indeg[r] -= 1;
                if indeg[r] == 0 {
                    stack.push(r);
                }
            }
        }
        removed.iter().map(|r| !r).collect()
    }

    /// Stable structural fingerprint, used to refuse mixing symbolic elements
    /// from different graphs.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the canonical JSON form.
        let mut h: u64 = 0xcbf29ce484222325;
        for b in serde_json::to_vec(&self.to_file()).expect("graph serializes") {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

impl fmt::Display for DirectedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vertices, {} edges", self.vertex_count(), self.edge_count())
    }
}

/// Parses a graph file. Errors carry the JSON location or the offending
/// index in the vertex or edge list.
pub fn parse_graph(text: &str) -> Result<DirectedGraph, GraphError> {
    let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    DirectedGraph::new(&file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VertexClass {
    Sink,
    Boundary,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeClass {
    SinkEdge,
    BoundaryEdge,
    InteriorEdge,
}

/// The vertex/edge strata and every enumeration the generator needs.
///
/// Sink indices `m` are 1-based in the mathematics but 0-based here:
/// `sinks[0]` is `w_1`, `sink_edges[0][0]` is `f_{1,1}`, and so on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub vertex_class: Vec<VertexClass>,
    pub edge_class: Vec<EdgeClass>,
    /// `w_1, w_2, ...` as vertex indices.
    pub sinks: Vec<usize>,
    /// `sink_edges[m]` lists `f_{m+1,1}, f_{m+1,2}, ...`.
    pub sink_edges: Vec<Vec<usize>>,
    /// `m(v)` (0-based) for each boundary vertex.
    pub m_of: BTreeMap<usize, usize>,
    /// `boundary_levels[l]` is `V_{l+1}`, one entry per sink.
    pub boundary_levels: Vec<Vec<usize>>,
    /// `Y`, vertex file order.
    pub y: Vec<usize>,
    /// `e_{y,1}, e_{y,2}, ...` for each `y ∈ Y`.
    pub boundary_edges_by_source: BTreeMap<usize, Vec<usize>>,
    pub interior_edges: Vec<usize>,
    pub interior_vertices: Vec<usize>,
    pub boundary_vertices: Vec<usize>,
}

impl Classification {
    pub fn sink_index(&self, v: usize) -> Option<usize> {
        self.sinks.iter().position(|&w| w == v)
    }

    /// Position `(m, n)` (0-based) of a sink edge in the enumeration.
    pub fn sink_edge_position(&self, f: usize) -> Option<(usize, usize)> {
        self.sink_edges
            .iter()
            .enumerate()
            .find_map(|(m, list)| list.iter().position(|&x| x == f).map(|n| (m, n)))
    }

    /// Position `(y, n)` (n 0-based) of a boundary edge.
    pub fn boundary_edge_position(&self, e: usize) -> Option<(usize, usize)> {
        self.boundary_edges_by_source
            .iter()
            .find_map(|(&y, list)| list.iter().position(|&x| x == e).map(|n| (y, n)))
    }

    /// Boundary edges whose range lies in `V_{l+1}`, file order.
    pub fn boundary_edges_into_level(&self, graph: &DirectedGraph, l: usize) -> Vec<usize> {
        (0..graph.edge_count())
            .filter(|&e| {
                self.edge_class[e] == EdgeClass::BoundaryEdge
                    && self.m_of.get(&graph.rng(e)) == Some(&l)
            })
            .collect()
    }

    /// The edge set `S = E¹_int ∪ {e_{y,1}}` whose sources are exactly the interior vertices.
    pub fn xi_edges(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.interior_edges.clone();
        s.extend(self.boundary_edges_by_source.values().map(|list| list[0]));
        s.sort_unstable();
        s
    }
}

pub fn classify(graph: &DirectedGraph) -> Classification {
    let n = graph.vertex_count();
    let is_sink: Vec<bool> = (0..n).map(|v| graph.out_degree(v) == 0).collect();
    let vertex_class: Vec<VertexClass> = (0..n)
        .map(|v| {
            if is_sink[v] {
                VertexClass::Sink
            } else if graph.emitted(v).all(|e| is_sink[graph.rng(e)]) {
                VertexClass::Boundary
            } else {
                VertexClass::Interior
            }
        })
        .collect();
    let edge_class: Vec<EdgeClass> = graph
        .edges()
        .iter()
        .map(|e| match vertex_class[e.rng] {
            VertexClass::Sink => EdgeClass::SinkEdge,
            VertexClass::Boundary => EdgeClass::BoundaryEdge,
            VertexClass::Interior => EdgeClass::InteriorEdge,
        })
        .collect();

    let sinks: Vec<usize> = (0..n).filter(|&v| is_sink[v]).collect();
    let sink_edges: Vec<Vec<usize>> = sinks.iter().map(|&w| graph.received(w).collect()).collect();

    let mut m_of = BTreeMap::new();
    let mut boundary_levels = vec![Vec::new(); sinks.len()];
    let boundary_vertices: Vec<usize> = (0..n)
        .filter(|&v| vertex_class[v] == VertexClass::Boundary)
        .collect();
    for &v in &boundary_vertices {
        let targets: HashSet<usize> = graph.emitted(v).map(|e| graph.rng(e)).collect();
        let m = sinks
            .iter()
            .position(|w| targets.contains(w))
            .expect("boundary vertex emits into a sink");
        m_of.insert(v, m);
        boundary_levels[m].push(v);
    }

    let mut boundary_edges_by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (e, class) in edge_class.iter().enumerate() {
        if *class == EdgeClass::BoundaryEdge {
            boundary_edges_by_source
                .entry(graph.src(e))
                .or_default()
                .push(e);
        }
    }
    let y: Vec<usize> = boundary_edges_by_source.keys().copied().collect();
    let interior_edges = (0..graph.edge_count())
        .filter(|&e| edge_class[e] == EdgeClass::InteriorEdge)
        .collect();
    let interior_vertices = (0..n)
        .filter(|&v| vertex_class[v] == VertexClass::Interior)
        .collect();

    Classification {
        vertex_class,
        edge_class,
        sinks,
        sink_edges,
        m_of,
        boundary_levels,
        y,
        boundary_edges_by_source,
        interior_edges,
        interior_vertices,
        boundary_vertices,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphValidation {
    pub violations: Vec<String>,
    pub acyclic: bool,
    pub isolated: Vec<String>,
    pub notes: Vec<String>,
}

impl GraphValidation {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a raw graph document without failing on the first problem.
pub fn validate_graph(file: &GraphFile) -> GraphValidation {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    for (i, v) in file.vertices.iter().enumerate() {
        if !seen.insert(v.as_str()) {
            violations.push(format!("duplicate vertex id {v:?} at vertices[{i}]"));
        }
    }
    let mut seen_edges = HashSet::new();
    for (i, e) in file.edges.iter().enumerate() {
        if !seen_edges.insert(e.id.as_str()) {
            violations.push(format!("duplicate edge id {:?} at edges[{i}]", e.id));
        }
        for (field, v) in [("src", &e.src), ("rng", &e.rng)] {
            if !seen.contains(v.as_str()) {
                violations.push(format!("dangling endpoint {v:?} in edges[{i}].{field}"));
            }
        }
    }
    if !violations.is_empty() {
        return GraphValidation {
            violations,
            acyclic: false,
            isolated: Vec::new(),
            notes: vec!["structure invalid; acyclicity not evaluated".into()],
        };
    }
    let graph = DirectedGraph::new(file).expect("violations already reported");
    let acyclic = graph.is_acyclic();
    let isolated: Vec<String> = (0..graph.vertex_count())
        .filter(|&v| graph.in_degree(v) == 0 && graph.out_degree(v) == 0)
        .map(|v| graph.vertex_name(v).to_string())
        .collect();
    let mut notes: Vec<String> = isolated
        .iter()
        .map(|v| format!("{v} is a sink receiving no edges"))
        .collect();
    if acyclic {
        notes.push("acyclic: exact path-space representation available".into());
    } else {
        notes.push("has cycles: only truncated representations are available".into());
    }
    GraphValidation {
        violations,
        acyclic,
        isolated,
        notes,
    }
}

impl DirectedGraph {
    pub fn validate(&self) -> GraphValidation {
        validate_graph(&self.to_file())
    }
}

/// The canonical test graphs G1–G6 shared by the test suites and the CLI.
pub mod fixtures {
    use super::DirectedGraph;

    /// Lone sink.
    pub fn g1() -> DirectedGraph {
        DirectedGraph::from_lists(&["w"], &[]).unwrap()
    }

    /// `u -e-> w`.
    pub fn g2() -> DirectedGraph {
        DirectedGraph::from_lists(&["u", "w"], &[("e", "u", "w")]).unwrap()
    }

    /// `u -i-> v -f-> w`.
    pub fn g3() -> DirectedGraph {
        DirectedGraph::from_lists(&["u", "v", "w"], &[("i", "u", "v"), ("f", "v", "w")]).unwrap()
    }

    /// `u0 -j-> u -i-> v -f-> w`.
    pub fn g4() -> DirectedGraph {
        DirectedGraph::from_lists(
            &["u0", "u", "v", "w"],
            &[("j", "u0", "u"), ("i", "u", "v"), ("f", "v", "w")],
        )
        .unwrap()
    }

    /// Single loop at `v`.
    pub fn g5() -> DirectedGraph {
        DirectedGraph::from_lists(&["v"], &[("e", "v", "v")]).unwrap()
    }

    /// `v -f1-> w1`, `v -f2-> w2`, `u -i-> v`, sinks listed `w1` before `w2`.
    pub fn g6() -> DirectedGraph {
        DirectedGraph::from_lists(
            &["u", "v", "w1", "w2"],
            &[("f1", "v", "w1"), ("f2", "v", "w2"), ("i", "u", "v")],
        )
        .unwrap()
    }

    /// Two-cycle `a ⇄ b`.
    pub fn two_cycle() -> DirectedGraph {
        DirectedGraph::from_lists(&["a", "b"], &[("e", "a", "b"), ("f", "b", "a")]).unwrap()
    }

    /// The acyclic canonical graphs used by corpus sweeps.
    pub fn acyclic() -> Vec<(&'static str, DirectedGraph)> {
        vec![("G1", g1()), ("G2", g2()), ("G3", g3()), ("G4", g4()), ("G6", g6())]
    }
}
