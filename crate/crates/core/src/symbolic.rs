//! Exact computation with words in `s_e`, `s_e*`, `p_v`.
//!
//! Elements are kept in the Toeplitz normal form `Σ c_{μν} s_μ s_ν*` with
//! `s(μ) = s(ν)`. The summation relation `p_v = Σ_{r(e)=v} s_e s_e*` is not
//! built into the normal form; [`SymbolicElement::expand_ck3`] applies it as
//! an explicit rewrite.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::exact::Rational;
use crate::graph::{Classification, DirectedGraph, EdgeClass, VertexClass};
use crate::linalg::{self, CMatrix};
use crate::representation::MatrixCkFamily;
use crate::schedule::CoefficientSchedule;

pub type Coeff = Complex<BigRational>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SymbolicError {
    #[error("operands belong to different graphs")]
    MixedGraph,
    #[error("relation (iii) expansion exceeded depth bound {0}")]
    DepthExceeded(usize),
}

/// A path `e_k ⋯ e_1` stored range side first: `edges[0] = e_k`.
/// Trivial paths carry only their vertex.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path {
    pub edges: Vec<usize>,
    pub src: usize,
    pub rng: usize,
}

impl Path {
    pub fn trivial(v: usize) -> Self {
        Path {
            edges: Vec::new(),
            src: v,
            rng: v,
        }
    }

    pub fn edge(graph: &DirectedGraph, e: usize) -> Self {
        Path {
            edges: vec![e],
            src: graph.src(e),
            rng: graph.rng(e),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_trivial(&self) -> bool {
        self.edges.is_empty()
    }

    /// `self · other`, defined when `s(self) = r(other)`.
    pub fn concat(&self, other: &Path) -> Path {
        debug_assert_eq!(self.src, other.rng);
        let mut edges = self.edges.clone();
        edges.extend_from_slice(&other.edges);
        Path {
            edges,
            src: other.src,
            rng: self.rng,
        }
    }

    /// If `self = prefix · rest`, returns `rest`.
    pub fn strip_prefix(&self, prefix: &Path) -> Option<Path> {
        if self.rng != prefix.rng || !self.edges.starts_with(&prefix.edges) {
            return None;
        }
        Some(Path {
            edges: self.edges[prefix.edges.len()..].to_vec(),
            src: self.src,
            rng: prefix.src,
        })
    }

    /// Path label such as `f·i`, or the vertex id for a trivial path.
    pub fn label(&self, graph: &DirectedGraph) -> String {
        if self.is_trivial() {
            graph.vertex_name(self.src).to_string()
        } else {
            self.edges
                .iter()
                .map(|&e| graph.edge_name(e))
                .collect::<Vec<_>>()
                .join("·")
        }
    }
}

fn rat(x: &Rational) -> BigRational {
    x.0.clone()
}

pub fn coeff_real(x: &Rational) -> Coeff {
    Complex::new(rat(x), BigRational::zero())
}

fn coeff_one() -> Coeff {
    Complex::new(BigRational::one(), BigRational::zero())
}

fn coeff_is_zero(c: &Coeff) -> bool {
    c.re.is_zero() && c.im.is_zero()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicElement {
    graph: u64,
    terms: BTreeMap<(Path, Path), Coeff>,
}

impl SymbolicElement {
    pub fn zero(graph: &DirectedGraph) -> Self {
        Self {
            graph: graph.fingerprint(),
            terms: BTreeMap::new(),
        }
    }

    pub fn monomial(graph: &DirectedGraph, mu: Path, nu: Path, c: Coeff) -> Self {
        let mut x = Self::zero(graph);
        if mu.src == nu.src && !coeff_is_zero(&c) {
            x.terms.insert((mu, nu), c);
        }
        x
    }

    /// `p_v`.
    pub fn vertex(graph: &DirectedGraph, v: usize) -> Self {
        Self::monomial(graph, Path::trivial(v), Path::trivial(v), coeff_one())
    }

    /// `s_e`.
    pub fn edge(graph: &DirectedGraph, e: usize) -> Self {
        Self::monomial(
            graph,
            Path::edge(graph, e),
            Path::trivial(graph.src(e)),
            coeff_one(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Path, &Path, &Coeff)> {
        self.terms.iter().map(|((m, n), c)| (m, n, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn same_graph(&self, other: &Self) -> Result<(), SymbolicError> {
        if self.graph == other.graph {
            Ok(())
        } else {
            Err(SymbolicError::MixedGraph)
        }
    }

    fn accumulate(&mut self, key: (Path, Path), c: Coeff) {
        let slot = self
            .terms
            .entry(key.clone())
            .or_insert_with(|| Complex::new(BigRational::zero(), BigRational::zero()));
        *slot = &*slot + &c;
        if coeff_is_zero(slot) {
            self.terms.remove(&key);
        }
    }

    pub fn plus(&self, other: &Self) -> Result<Self, SymbolicError> {
        self.same_graph(other)?;
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.accumulate(k.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn minus(&self, other: &Self) -> Result<Self, SymbolicError> {
        self.plus(&other.scaled(&Complex::new(-BigRational::one(), BigRational::zero())))
    }

    pub fn scaled(&self, c: &Coeff) -> Self {
        let mut out = Self {
            graph: self.graph,
            terms: BTreeMap::new(),
        };
        if coeff_is_zero(c) {
            return out;
        }
        for (k, v) in &self.terms {
            out.terms.insert(k.clone(), v * c);
        }
        out
    }

    pub fn scaled_real(&self, x: &Rational) -> Self {
        self.scaled(&coeff_real(x))
    }

    /// Product in the Toeplitz normal form:
    /// `(s_μ s_ν*)(s_α s_β*) = s_{μα̂} s_β*` if `α = να̂`,
    /// `s_μ s_{βν̂}*` if `ν = αν̂`, and `0` otherwise.
    pub fn multiply(&self, other: &Self) -> Result<Self, SymbolicError> {
        self.same_graph(other)?;
        let mut out = Self {
            graph: self.graph,
            terms: BTreeMap::new(),
        };
        for ((mu, nu), c1) in &self.terms {
            for ((alpha, beta), c2) in &other.terms {
                let key = if let Some(rest) = alpha.strip_prefix(nu) {
                    (mu.concat(&rest), beta.clone())
                } else if let Some(rest) = nu.strip_prefix(alpha) {
                    (mu.clone(), beta.concat(&rest))
                } else {
                    continue;
                };
                out.accumulate(key, c1 * c2);
            }
        }
        Ok(out)
    }

    pub fn adjoint(&self) -> Self {
        Self {
            graph: self.graph,
            terms: self
                .terms
                .iter()
                .map(|((m, n), c)| ((n.clone(), m.clone()), c.conj()))
                .collect(),
        }
    }

    /// Rewrites `s_μ s_ν* = Σ_{r(e)=s(μ)} s_{μe} s_{νe}*` wherever the common
    /// source receives edges, until every monomial starts at a receiver-free
    /// vertex. `max_rounds` bounds the rewriting on cyclic graphs.
    pub fn expand_ck3(&self, graph: &DirectedGraph, max_rounds: Option<usize>) -> Result<Self, SymbolicError> {
        let receivers: Vec<Vec<usize>> = (0..graph.vertex_count())
            .map(|v| graph.received(v).collect())
            .collect();
        let bound = max_rounds.unwrap_or(graph.vertex_count() + 1);
        let mut current = self.clone();
        for _ in 0..=bound {
            let mut next = Self {
                graph: self.graph,
                terms: BTreeMap::new(),
            };
            let mut changed = false;
            for ((mu, nu), c) in &current.terms {
                let incoming = &receivers[mu.src];
                if incoming.is_empty() {
                    next.accumulate((mu.clone(), nu.clone()), c.clone());
                    continue;
                }
                changed = true;
                for &e in incoming {
                    let pe = Path::edge(graph, e);
                    next.accumulate((mu.concat(&pe), nu.concat(&pe)), c.clone());
                }
            }
            if !changed {
                return Ok(next);
            }
            current = next;
        }
        Err(SymbolicError::DepthExceeded(bound))
    }

    /// Image under a concrete family: `s_μ s_ν* ↦ S_μ S_ν*`.
    pub fn evaluate(&self, family: &MatrixCkFamily) -> CMatrix {
        let n = family.dim;
        let mut out = linalg::zeros(n);
        for ((mu, nu), c) in &self.terms {
            let m = path_matrix(family, mu) * path_matrix(family, nu).adjoint();
            let z = num_complex::Complex64::new(to_f64(&c.re), to_f64(&c.im));
            out += m * z;
        }
        out
    }

    /// Sum of absolute values of coefficients (an upper bound for the norm).
    pub fn l1_bound(&self) -> f64 {
        self.terms
            .values()
            .map(|c| (to_f64(&c.re).powi(2) + to_f64(&c.im).powi(2)).sqrt())
            .sum()
    }

    pub fn display(&self, graph: &DirectedGraph) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|((mu, nu), c)| {
                let word = monomial_word(graph, mu, nu);
                if *c == coeff_one() {
                    word
                } else {
                    format!("({})·{}", fmt_coeff(c), word)
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

fn to_f64(x: &BigRational) -> f64 {
    num_traits::ToPrimitive::to_f64(x).unwrap_or(f64::NAN)
}

fn fmt_rat(x: &BigRational) -> String {
    Rational(x.clone()).to_string()
}

fn fmt_coeff(c: &Coeff) -> String {
    if c.im.is_zero() {
        fmt_rat(&c.re)
    } else if c.re.is_zero() {
        format!("{}i", fmt_rat(&c.im))
    } else {
        let sign = if c.im.is_negative() { "-" } else { "+" };
        format!("{}{}{}i", fmt_rat(&c.re), sign, fmt_rat(&c.im.abs()))
    }
}

fn monomial_word(graph: &DirectedGraph, mu: &Path, nu: &Path) -> String {
    if mu.is_trivial() && nu.is_trivial() {
        return format!("p_{}", graph.vertex_name(mu.src));
    }
    let mut parts: Vec<String> = mu
        .edges
        .iter()
        .map(|&e| format!("s_{}", graph.edge_name(e)))
        .collect();
    parts.extend(
        nu.edges
            .iter()
            .rev()
            .map(|&e| format!("s_{}*", graph.edge_name(e))),
    );
    parts.join(" ")
}

fn path_matrix(family: &MatrixCkFamily, path: &Path) -> CMatrix {
    if path.is_trivial() {
        return family.projections[path.src].clone();
    }
    let mut m = family.projections[path.src].clone();
    for &e in path.edges.iter().rev() {
        m = &family.partial_isometries[e] * m;
    }
    m
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub identity: String,
    pub indices: String,
    pub residue: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymbolicReport {
    pub checks: Vec<IdentityCheck>,
}

impl SymbolicReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &IdentityCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

struct Checker<'g> {
    graph: &'g DirectedGraph,
    checks: Vec<IdentityCheck>,
}

impl Checker<'_> {
    fn expect(&mut self, identity: &str, indices: String, lhs: SymbolicElement, rhs: &SymbolicElement) {
        let residue = lhs.minus(rhs).expect("same graph");
        self.checks.push(IdentityCheck {
            identity: identity.to_string(),
            indices,
            pass: residue.is_zero(),
            residue: residue.display(self.graph),
        });
    }
}

/// Exact check of the relations used by the extraction argument:
/// `s_e*s_{e'} = 0`, `q_m ⊥ s_e`, `q_m ⊥ p_v`, `p_v t_{m,n} = 0`,
/// `t_{m,n}t_{m',n'} = 0`, `s_{y,k}s_{y,n}*s_{y,n} = s_{y,k}`,
/// and `q_{m'}t_{m,n} = [m = m'] t_{m,n}`.
pub fn verify_orthogonality_lemma(graph: &DirectedGraph, cls: &Classification) -> SymbolicReport {
    let s: Vec<SymbolicElement> = (0..graph.edge_count()).map(|e| SymbolicElement::edge(graph, e)).collect();
    let p: Vec<SymbolicElement> = (0..graph.vertex_count()).map(|v| SymbolicElement::vertex(graph, v)).collect();
    let zero = SymbolicElement::zero(graph);
    let mul = |a: &SymbolicElement, b: &SymbolicElement| a.multiply(b).expect("same graph");
    let name_e = |e: usize| graph.edge_name(e).to_string();
    let name_v = |v: usize| graph.vertex_name(v).to_string();
    let mut ck = Checker {
        graph,
        checks: Vec::new(),
    };

    for e in 0..graph.edge_count() {
        for f in 0..graph.edge_count() {
            if e != f {
                ck.expect("s_e* s_e' = 0", format!("{},{}", name_e(e), name_e(f)), mul(&s[e].adjoint(), &s[f]), &zero);
            }
        }
    }

    for (m, &w) in cls.sinks.iter().enumerate() {
        let q = &p[w];
        for e in 0..graph.edge_count() {
            if cls.edge_class[e] == EdgeClass::SinkEdge {
                continue;
            }
            let idx = format!("{},{}", m + 1, name_e(e));
            let se = &s[e];
            let st = se.adjoint();
            ck.expect("q_m s_e = 0", idx.clone(), mul(q, se), &zero);
            ck.expect("s_e q_m = 0", idx.clone(), mul(se, q), &zero);
            ck.expect("q_m s_e* = 0", idx.clone(), mul(q, &st), &zero);
            ck.expect("s_e* q_m = 0", idx, mul(&st, q), &zero);
        }
        for v in 0..graph.vertex_count() {
            if cls.vertex_class[v] == VertexClass::Sink {
                continue;
            }
            let idx = format!("{},{}", m + 1, name_v(v));
            ck.expect("q_m p_v = 0", idx.clone(), mul(q, &p[v]), &zero);
            ck.expect("p_v q_m = 0", idx, mul(&p[v], q), &zero);
        }
    }

    let sink_edges: Vec<(usize, usize, usize)> = cls
        .sink_edges
        .iter()
        .enumerate()
        .flat_map(|(m, list)| list.iter().enumerate().map(move |(n, &f)| (m, n, f)))
        .collect();
    for &(m, n, f) in &sink_edges {
        let t = &s[f];
        for v in 0..graph.vertex_count() {
            if cls.vertex_class[v] != VertexClass::Sink {
                ck.expect("p_v t_{m,n} = 0", format!("{},{},{}", name_v(v), m + 1, n + 1), mul(&p[v], t), &zero);
            }
        }
        for &(m2, n2, f2) in &sink_edges {
            ck.expect(
                "t_{m,n} t_{m',n'} = 0",
                format!("{},{};{},{}", m + 1, n + 1, m2 + 1, n2 + 1),
                mul(t, &s[f2]),
                &zero,
            );
        }
        for (m2, &w) in cls.sinks.iter().enumerate() {
            let want = if m2 == m { t.clone() } else { zero.clone() };
            ck.expect(
                "q_m' t_{m,n} = [m = m'] t_{m,n}",
                format!("{};{},{}", m2 + 1, m + 1, n + 1),
                mul(&p[w], t),
                &want,
            );
        }
    }

    for (&y, list) in &cls.boundary_edges_by_source {
        for (k, &ek) in list.iter().enumerate() {
            for (n, &en) in list.iter().enumerate() {
                let lhs = mul(&mul(&s[ek], &s[en].adjoint()), &s[en]);
                ck.expect("s_{y,k} s_{y,n}* s_{y,n} = s_{y,k}", format!("{},{},{}", name_v(y), k + 1, n + 1), lhs, &s[ek]);
            }
        }
    }

    SymbolicReport { checks: ck.checks }
}

/// Symbolic twins of `a`, `b`, `c` with exact schedule coefficients.
pub struct SymbolicParts {
    pub a: SymbolicElement,
    pub b: SymbolicElement,
    pub c: SymbolicElement,
}

pub fn symbolic_abc(graph: &DirectedGraph, cls: &Classification, s: &CoefficientSchedule) -> SymbolicParts {
    let edge = |e| SymbolicElement::edge(graph, e);
    let add = |x: &SymbolicElement, y: SymbolicElement| x.plus(&y).expect("same graph");
    let mut a = SymbolicElement::zero(graph);
    for (&y, list) in &cls.boundary_edges_by_source {
        let row = &s.alpha[graph.vertex_name(y)];
        for n in 0..list.len().saturating_sub(1) {
            let term = edge(list[n + 1]).multiply(&edge(list[n]).adjoint()).expect("same graph");
            a = add(&a, term.scaled_real(&row[n + 1]));
        }
    }
    let mut b = SymbolicElement::zero(graph);
    let mut c = SymbolicElement::zero(graph);
    for (m, list) in cls.sink_edges.iter().enumerate() {
        c = add(&c, SymbolicElement::vertex(graph, cls.sinks[m]).scaled_real(&s.delta[m + 1]));
        for (n, &f) in list.iter().enumerate() {
            let t = edge(f);
            b = add(&b, t.scaled_real(&s.beta[m][n]));
            let tt = t.multiply(&t.adjoint()).expect("same graph");
            c = add(&c, tt.scaled_real(&(&s.gamma[m][n] - &s.delta[m + 1])));
        }
    }
    SymbolicParts { a, b, c }
}

/// Exact check of `a*(b+c) = 0` and `(b+c)*a = 0`.
pub fn verify_abc_orthogonality(graph: &DirectedGraph, cls: &Classification, s: &CoefficientSchedule) -> SymbolicReport {
    let parts = symbolic_abc(graph, cls, s);
    let bc = parts.b.plus(&parts.c).expect("same graph");
    let zero = SymbolicElement::zero(graph);
    let mut ck = Checker {
        graph,
        checks: Vec::new(),
    };
    ck.expect("a*(b+c) = 0", String::new(), parts.a.adjoint().multiply(&bc).expect("same graph"), &zero);
    ck.expect("(b+c)*a = 0", String::new(), bc.adjoint().multiply(&parts.a).expect("same graph"), &zero);
    SymbolicReport { checks: ck.checks }
}

/// Builds a coefficient from small integers; used by tests and examples.
pub fn coeff(re: (i64, i64), im: (i64, i64)) -> Coeff {
    Complex::new(
        BigRational::new(BigInt::from(re.0), BigInt::from(re.1)),
        BigRational::new(BigInt::from(im.0), BigInt::from(im.1)),
    )
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_trivial() {
            write!(f, "v{}", self.src)
        } else {
            let parts: Vec<String> = self.edges.iter().map(|e| format!("e{e}")).collect();
            write!(f, "{}", parts.join("·"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{classify, fixtures};
    use crate::representation::build_path_representation;

    #[test]
    fn partial_isometry_relations() {
        let g = fixtures::g3();
        let (i, f) = (0, 1);
        let si = SymbolicElement::edge(&g, i);
        let sf = SymbolicElement::edge(&g, f);
        assert_eq!(si.adjoint().multiply(&si).unwrap(), SymbolicElement::vertex(&g, g.src(i)));
        assert!(si.adjoint().multiply(&sf).unwrap().is_zero());
        let proj = si.multiply(&si.adjoint()).unwrap();
        assert_eq!(proj.multiply(&proj).unwrap(), proj);
    }

    #[test]
    fn adjoint_cases() {
        let g = fixtures::g2();
        let se = SymbolicElement::edge(&g, 0);
        assert_eq!(se.adjoint().display(&g), "s_e*");
        let c = coeff((1, 2), (3, 4));
        let pv = SymbolicElement::vertex(&g, 0).scaled(&c);
        assert_eq!(pv.adjoint(), SymbolicElement::vertex(&g, 0).scaled(&c.conj()));
        assert_eq!(pv.adjoint().adjoint(), pv);
    }

    #[test]
    fn expand_examples() {
        let g = fixtures::g3();
        let pv = SymbolicElement::vertex(&g, 1);
        let expanded = pv.expand_ck3(&g, None).unwrap();
        assert_eq!(expanded.display(&g), "s_i s_i*");
        let pu = SymbolicElement::vertex(&g, 0);
        assert_eq!(pu.expand_ck3(&g, None).unwrap(), pu);

        let g6 = fixtures::g6();
        let v = g6.vertex_id("v").unwrap();
        assert_eq!(
            SymbolicElement::vertex(&g6, v).expand_ck3(&g6, None).unwrap().display(&g6),
            "s_i s_i*"
        );
    }

    #[test]
    fn expand_on_cycle_needs_bound() {
        let g = fixtures::g5();
        let p = SymbolicElement::vertex(&g, 0);
        assert_eq!(p.expand_ck3(&g, Some(3)), Err(SymbolicError::DepthExceeded(3)));
    }

    #[test]
    fn mixed_graphs_rejected() {
        let a = SymbolicElement::vertex(&fixtures::g2(), 0);
        let b = SymbolicElement::vertex(&fixtures::g3(), 0);
        assert_eq!(a.multiply(&b), Err(SymbolicError::MixedGraph));
    }

    #[test]
    fn pretty_printer() {
        let g = DirectedGraph::from_lists(&["u", "w"], &[("f", "u", "w")]).unwrap();
        let sf = SymbolicElement::edge(&g, 0);
        let x = sf
            .scaled(&coeff((1, 8), (0, 1)))
            .plus(&sf.multiply(&sf.adjoint()).unwrap().scaled(&coeff((3, 4), (0, 1))))
            .unwrap();
        let text = x.display(&g);
        assert!(text.contains("(1/8)·s_f"));
        assert!(text.contains("(3/4)·s_f s_f*"));
    }

    #[test]
    fn orthogonality_lemma_examples() {
        let g = fixtures::g6();
        let c = classify(&g);
        let rep = verify_orthogonality_lemma(&g, &c);
        assert!(rep.passed());
        let t11 = rep
            .checks
            .iter()
            .find(|x| x.identity == "t_{m,n} t_{m',n'} = 0" && x.indices == "1,1;2,1")
            .unwrap();
        assert!(t11.pass);
        let q2 = rep
            .checks
            .iter()
            .find(|x| x.identity.starts_with("q_m' t") && x.indices == "2;1,1")
            .unwrap();
        assert!(q2.pass);
        let g3 = fixtures::g3();
        let rep3 = verify_orthogonality_lemma(&g3, &classify(&g3));
        assert!(rep3
            .checks
            .iter()
            .any(|x| x.identity.starts_with("s_{y,k}") && x.indices == "u,1,1" && x.pass));
    }

    #[test]
    fn evaluate_matches_family() {
        let g = fixtures::g3();
        let fam = build_path_representation(&g).unwrap();
        let si = SymbolicElement::edge(&g, 0);
        assert_eq!(si.evaluate(&fam), fam.partial_isometries[0]);
        let pv = SymbolicElement::vertex(&g, 1);
        let diff = pv.expand_ck3(&g, None).unwrap().evaluate(&fam) - pv.evaluate(&fam);
        assert_eq!(linalg::max_abs(&diff), 0.0);
    }
}
