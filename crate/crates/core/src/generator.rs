//! Assembly of the single generator `g = a + b + c + d`.
//!
//! With `T_{m,n} = S_{f_{m,n}}` and `Q_m = P_{w_m}`:
//!
//! * `a = Σ α_{y,n+1} S_{y,n+1} S_{y,n}*`
//! * `b = Σ β_{m,n} T_{m,n}`
//! * `c = Σ δ_m Q_m + Σ (γ_{m,n} − δ_m) T_{m,n} T_{m,n}*`
//! * `d = (Σ_y α_{y,1} S_{y,1} + Σ_{e interior} ε_e S_e) ξ^{1/2}`
//!
//! `ξ` is a positive element of the commutative algebra spanned by the
//! interior vertex projections and interior range projections, chosen so that
//! the nonzero spectrum of `d*d` sits in disjoint intervals that avoid the
//! spectrum `C` of `a*a + (b+c)*(b+c)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Classification, DirectedGraph};
use crate::linalg::{self, CMatrix};
use crate::representation::{matrix_to_json, MatrixCkFamily};
use crate::schedule::CoefficientSchedule;

pub const DEFAULT_MINWIDTH: f64 = 1e-9;
const ATOM_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("residual atom at vertex {vertex} is not a projection (defect {defect:.3e})")]
    AtomNotProjection { vertex: String, defect: f64 },
    #[error("no admissible gap of width >= {minwidth:e} for vertex {vertex}")]
    NoAdmissibleGap { vertex: String, minwidth: f64 },
    #[error("vertex {vertex} has non-positive weight sum {mu}")]
    NonPositiveMu { vertex: String, mu: f64 },
    #[error("spectral safety check failed: {0}")]
    SpectralSafety(String),
    #[error("index ({m}, {n}) outside the sink enumeration")]
    IndexOutOfRange { m: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomKind {
    /// `S_e S_e*` for an interior edge `e` (edge index).
    RangeProjectionOf(usize),
    /// `P_v − Σ_{r(e)=v, e interior} S_e S_e*`.
    Residual,
}

#[derive(Debug, Clone)]
pub struct Atom {
    pub projection: CMatrix,
    pub owner: usize,
    pub kind: AtomKind,
}

#[derive(Debug, Clone)]
pub struct AtomDecomposition {
    pub atoms: Vec<Atom>,
    /// `K_v`: atom indices per interior vertex.
    pub by_vertex: BTreeMap<usize, Vec<usize>>,
}

impl AtomDecomposition {
    pub fn of_vertex(&self, v: usize) -> &[usize] {
        self.by_vertex.get(&v).map_or(&[], Vec::as_slice)
    }
}

pub fn atom_label(graph: &DirectedGraph, owner: usize, kind: AtomKind) -> String {
    match kind {
        AtomKind::RangeProjectionOf(e) => format!("s_{0} s_{0}*", graph.edge_name(e)),
        AtomKind::Residual => format!("residual@{}", graph.vertex_name(owner)),
    }
}

/// Minimal projections of the commutative algebra generated by the interior
/// vertex projections and the interior range projections.
pub fn compute_atoms(
    family: &MatrixCkFamily,
    graph: &DirectedGraph,
    cls: &Classification,
) -> Result<AtomDecomposition, GeneratorError> {
    let mut atoms = Vec::new();
    let mut by_vertex = BTreeMap::new();
    for &v in &cls.interior_vertices {
        let mut ids = Vec::new();
        let mut rest = family.projections[v].clone();
        for e in graph.received(v) {
            if !cls.interior_edges.contains(&e) {
                continue;
            }
            let p = family.range_projection(e);
            rest -= &p;
            ids.push(atoms.len());
            atoms.push(Atom {
                projection: p,
                owner: v,
                kind: AtomKind::RangeProjectionOf(e),
            });
        }
        if linalg::op_norm(&rest) > ATOM_THRESHOLD {
            let defect = linalg::projection_defect(&rest);
            if defect > ATOM_THRESHOLD {
                return Err(GeneratorError::AtomNotProjection {
                    vertex: graph.vertex_name(v).to_string(),
                    defect,
                });
            }
            ids.push(atoms.len());
            atoms.push(Atom {
                projection: rest,
                owner: v,
                kind: AtomKind::Residual,
            });
        }
        by_vertex.insert(v, ids);
    }
    Ok(AtomDecomposition { atoms, by_vertex })
}

#[derive(Debug, Clone)]
pub struct AbcParts {
    pub a: CMatrix,
    pub b: CMatrix,
    pub c: CMatrix,
}

pub fn assemble_abc(
    family: &MatrixCkFamily,
    graph: &DirectedGraph,
    cls: &Classification,
    s: &CoefficientSchedule,
) -> AbcParts {
    let n = family.dim;
    let mut a = linalg::zeros(n);
    for (&y, list) in &cls.boundary_edges_by_source {
        for k in 1..list.len() {
            let term = family.isometry(list[k]) * family.isometry(list[k - 1]).adjoint();
            a += term * linalg::c(s.alpha_of(graph, y, k));
        }
    }
    let mut b = linalg::zeros(n);
    let mut c = linalg::zeros(n);
    for (m, &w) in cls.sinks.iter().enumerate() {
        let delta = s.delta_of(m);
        c += family.projection(w) * linalg::c(delta);
        for (k, &f) in cls.sink_edges[m].iter().enumerate() {
            b += family.isometry(f) * linalg::c(s.beta_of(m, k));
            c += family.range_projection(f) * linalg::c(s.gamma_of(m, k) - delta);
        }
    }
    AbcParts { a, b, c }
}

/// `C`: ascending spectrum of `a*a + (b+c)*(b+c)`.
pub fn forbidden_from(abc: &AbcParts) -> Vec<f64> {
    let bc = &abc.b + &abc.c;
    let x = abc.a.adjoint() * &abc.a + bc.adjoint() * &bc;
    linalg::hermitian_eigen(&x).values
}

pub fn forbidden_set(
    family: &MatrixCkFamily,
    graph: &DirectedGraph,
    cls: &Classification,
    s: &CoefficientSchedule,
) -> Vec<f64> {
    forbidden_from(&assemble_abc(family, graph, cls, s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexInterval {
    pub vertex: usize,
    pub id: String,
    pub theta: f64,
    pub theta_prime: f64,
    pub mu: f64,
}

impl VertexInterval {
    pub fn width(&self) -> f64 {
        self.theta_prime - self.theta
    }

    pub fn contains(&self, x: f64) -> bool {
        self.theta <= x && x <= self.theta_prime
    }
}

/// Greedy placement: each vertex (in the given order) takes the middle third
/// of the widest gap of `(0, min(μ_v, 1))` between points of `C ∪ {0}` and
/// previously placed intervals. Ties go to the lowest gap.
pub fn choose_intervals(
    forbidden: &[f64],
    mu: &[(usize, String, f64)],
    minwidth: f64,
) -> Result<Vec<VertexInterval>, GeneratorError> {
    let mut placed: Vec<VertexInterval> = Vec::new();
    for (v, id, mu_v) in mu {
        if mu_v.is_nan() || *mu_v <= 0.0 {
            return Err(GeneratorError::NonPositiveMu {
                vertex: id.clone(),
                mu: *mu_v,
            });
        }
        let top = mu_v.min(1.0);
        let mut points = vec![0.0, top];
        points.extend(forbidden.iter().copied().filter(|&x| x > 0.0 && x < top));
        for iv in &placed {
            points.extend([iv.theta, iv.theta_prime].into_iter().filter(|&x| x > 0.0 && x < top));
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut best: Option<(f64, f64)> = None;
        for pair in points.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let mid = 0.5 * (lo + hi);
            if placed.iter().any(|iv| iv.contains(mid)) {
                continue;
            }
            if best.is_none_or(|(blo, bhi)| hi - lo > (bhi - blo) * (1.0 + 1e-12)) {
                best = Some((lo, hi));
            }
        }
        let (lo, hi) = match best {
            Some((lo, hi)) if hi - lo >= minwidth => (lo, hi),
            _ => {
                return Err(GeneratorError::NoAdmissibleGap {
                    vertex: id.clone(),
                    minwidth,
                })
            }
        };
        let w = hi - lo;
        placed.push(VertexInterval {
            vertex: *v,
            id: id.clone(),
            theta: lo + w / 3.0,
            theta_prime: lo + 2.0 * w / 3.0,
            mu: *mu_v,
        });
    }
    Ok(placed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomValue {
    pub owner: usize,
    pub kind: AtomKind,
    pub label: String,
    /// Value of `ξ` on the atom.
    pub value: f64,
}

/// Public construction metadata: intervals and the value of `ξ` on each atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalAssignment {
    pub minwidth: f64,
    pub intervals: Vec<VertexInterval>,
    pub values: Vec<AtomValue>,
}

impl IntervalAssignment {
    pub fn interval_of(&self, v: usize) -> Option<&VertexInterval> {
        self.intervals.iter().find(|iv| iv.vertex == v)
    }

    /// Expected nonzero eigenvalue `μ_v · val` of `d*d` on each atom.
    pub fn expected_eigenvalue(&self, k: usize) -> f64 {
        let av = &self.values[k];
        self.interval_of(av.owner).map_or(0.0, |iv| iv.mu * av.value)
    }

    /// Distance between neighbouring expected eigenvalues inside `v`'s interval.
    pub fn spacing(&self, v: usize) -> f64 {
        let k = self.values.iter().filter(|a| a.owner == v).count();
        self.interval_of(v).map_or(0.0, |iv| iv.width() / (k as f64 + 1.0))
    }

    pub fn min_theta(&self) -> Option<f64> {
        self.intervals.iter().map(|iv| iv.theta).min_by(f64::total_cmp)
    }
}

/// `ξ = Σ val(atom)·atom`, values equally spaced strictly inside
/// `[θ_v/μ_v, θ'_v/μ_v]`.
pub fn build_xi(
    atoms: &AtomDecomposition,
    graph: &DirectedGraph,
    intervals: Vec<VertexInterval>,
    minwidth: f64,
    dim: usize,
) -> (CMatrix, IntervalAssignment) {
    let mut xi = linalg::zeros(dim);
    let mut values = Vec::with_capacity(atoms.atoms.len());
    let mut table: BTreeMap<usize, f64> = BTreeMap::new();
    for iv in &intervals {
        let ids = atoms.of_vertex(iv.vertex);
        let (lo, hi) = (iv.theta / iv.mu, iv.theta_prime / iv.mu);
        let k = ids.len() as f64;
        for (j, &id) in ids.iter().enumerate() {
            table.insert(id, lo + (hi - lo) * (j as f64 + 1.0) / (k + 1.0));
        }
    }
    for (id, atom) in atoms.atoms.iter().enumerate() {
        let value = table[&id];
        xi += &atom.projection * linalg::c(value);
        values.push(AtomValue {
            owner: atom.owner,
            kind: atom.kind,
            label: atom_label(graph, atom.owner, atom.kind),
            value,
        });
    }
    (
        xi,
        IntervalAssignment {
            minwidth,
            intervals,
            values,
        },
    )
}

/// Functional calculus on `ξ` through its atoms: `Σ f(val)·atom`.
pub fn xi_function<F: Fn(f64) -> f64>(atoms: &[CMatrix], values: &[f64], dim: usize, f: F) -> CMatrix {
    let mut out = linalg::zeros(dim);
    for (p, &v) in atoms.iter().zip(values) {
        out += p * linalg::c(f(v));
    }
    out
}

#[derive(Debug, Clone)]
pub struct GeneratorParts {
    pub a: CMatrix,
    pub b: CMatrix,
    pub c: CMatrix,
    pub d: CMatrix,
    pub xi: CMatrix,
    pub xi_sqrt: CMatrix,
    pub g: CMatrix,
    /// `h_v` with `ξ^{1/2} h_v = P_v`, per interior vertex.
    pub h: BTreeMap<usize, CMatrix>,
    pub schedule: CoefficientSchedule,
    pub intervals: IntervalAssignment,
    pub atoms: AtomDecomposition,
    pub forbidden: Vec<f64>,
    /// Smallest distance from a nonzero eigenvalue of `d*d` to `C`.
    pub spectral_margin: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorOptions {
    pub minwidth: f64,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            minwidth: DEFAULT_MINWIDTH,
        }
    }
}

/// Eigenvalues of `d*d` treated as nonzero.
pub(crate) fn zero_threshold(intervals: &IntervalAssignment) -> f64 {
    intervals.min_theta().map_or(1e-300, |t| 1e-3 * t)
}

/// Assembles `a, b, c, d, g` from the atoms and intervals, and checks that
/// the nonzero spectrum of `d*d` lies in the intervals and avoids `C`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_abcd(
    family: &MatrixCkFamily,
    graph: &DirectedGraph,
    cls: &Classification,
    s: &CoefficientSchedule,
    atoms: AtomDecomposition,
    intervals: IntervalAssignment,
    abc: AbcParts,
    forbidden: Vec<f64>,
) -> Result<GeneratorParts, GeneratorError> {
    let n = family.dim;
    let projections: Vec<CMatrix> = atoms.atoms.iter().map(|a| a.projection.clone()).collect();
    let values: Vec<f64> = intervals.values.iter().map(|v| v.value).collect();
    let xi = xi_function(&projections, &values, n, |v| v);
    let xi_sqrt = xi_function(&projections, &values, n, f64::sqrt);

    let mut weighted = linalg::zeros(n);
    for e in cls.xi_edges() {
        weighted += family.isometry(e) * linalg::c(s.xi_weight(graph, cls, e));
    }
    let d = weighted * &xi_sqrt;
    let g = &abc.a + &abc.b + &abc.c + &d;

    let mut h = BTreeMap::new();
    for &v in &cls.interior_vertices {
        let ids = atoms.of_vertex(v);
        let ps: Vec<CMatrix> = ids.iter().map(|&k| projections[k].clone()).collect();
        let vs: Vec<f64> = ids.iter().map(|&k| values[k]).collect();
        h.insert(v, xi_function(&ps, &vs, n, |x| x.powf(-0.5)));
    }

    let spectral_margin = check_spectral_safety(&d, &intervals, &forbidden)?;
    Ok(GeneratorParts {
        a: abc.a,
        b: abc.b,
        c: abc.c,
        d,
        xi,
        xi_sqrt,
        g,
        h,
        schedule: s.clone(),
        intervals,
        atoms,
        forbidden,
        spectral_margin,
    })
}

fn check_spectral_safety(d: &CMatrix, intervals: &IntervalAssignment, forbidden: &[f64]) -> Result<f64, GeneratorError> {
    let dd = d.adjoint() * d;
    let zero = zero_threshold(intervals);
    let mut margin = f64::INFINITY;
    for &lambda in &linalg::hermitian_eigen(&dd).values {
        if lambda <= zero {
            continue;
        }
        if !intervals.intervals.iter().any(|iv| iv.contains(lambda)) {
            return Err(GeneratorError::SpectralSafety(format!(
                "eigenvalue {lambda:e} of d*d lies outside every interval"
            )));
        }
        for &c in forbidden {
            margin = margin.min((lambda - c).abs());
        }
    }
    if margin == 0.0 {
        return Err(GeneratorError::SpectralSafety("d*d shares an eigenvalue with C".into()));
    }
    Ok(margin)
}

/// Full construction on a family: atoms, `C`, intervals, `ξ` and `g`.
pub fn build_generator(
    family: &MatrixCkFamily,
    graph: &DirectedGraph,
    cls: &Classification,
    s: &CoefficientSchedule,
    opts: GeneratorOptions,
) -> Result<GeneratorParts, GeneratorError> {
    let atoms = compute_atoms(family, graph, cls)?;
    let abc = assemble_abc(family, graph, cls, s);
    let forbidden = forbidden_from(&abc);
    let mu: Vec<(usize, String, f64)> = cls
        .interior_vertices
        .iter()
        .map(|&v| (v, graph.vertex_name(v).to_string(), s.mu(graph, cls, v)))
        .collect();
    let placed = choose_intervals(&forbidden, &mu, opts.minwidth)?;
    let (_, assignment) = build_xi(&atoms, graph, placed, opts.minwidth, family.dim);
    assemble_abcd(family, graph, cls, s, atoms, assignment, abc, forbidden)
}

impl GeneratorParts {
    /// `a_1 = Σ_{v boundary} P_v g_{1,1} = a + (Σ_y α_{y,1} S_{y,1}) ξ^{1/2}`.
    pub fn a1(&self, family: &MatrixCkFamily, cls: &Classification) -> CMatrix {
        let g11 = &self.a + &self.b + &self.c + self.boundary_d(family, cls);
        let mut out = linalg::zeros(family.dim);
        for &v in &cls.boundary_vertices {
            out += family.projection(v) * &g11;
        }
        out
    }

    /// The part of `d` coming from the first boundary edges `e_{y,1}`.
    fn boundary_d(&self, family: &MatrixCkFamily, cls: &Classification) -> CMatrix {
        let mut sum = linalg::zeros(family.dim);
        for (&y, list) in &cls.boundary_edges_by_source {
            let alpha = self.schedule.alpha[&family.vertex_ids[y]][0].to_f64();
            sum += family.isometry(list[0]) * linalg::c(alpha);
        }
        sum * &self.xi_sqrt
    }

    /// `a_M = Σ_{ℓ ≥ M} Σ_{v ∈ V_ℓ} P_v a_1`, with `M` 0-based.
    pub fn a_m(&self, family: &MatrixCkFamily, cls: &Classification, m: usize) -> CMatrix {
        let a1 = self.a1(family, cls);
        let mut out = linalg::zeros(family.dim);
        for (&v, &level) in &cls.m_of {
            if level >= m {
                out += family.projection(v) * &a1;
            }
        }
        out
    }

    /// Reference `g_{M,N}` (0-based, lexicographic) built from ground truth,
    /// together with `a_M`. `M` may equal the number of sinks and `N` the
    /// in-degree of sink `M`, denoting the empty tails.
    pub fn modified_generator(
        &self,
        family: &MatrixCkFamily,
        cls: &Classification,
        m: usize,
        n: usize,
    ) -> Result<(CMatrix, CMatrix), GeneratorError> {
        let k = cls.sinks.len();
        let in_range = m < k && n <= cls.sink_edges[m].len() || m == k && n == 0;
        if !in_range {
            return Err(GeneratorError::IndexOutOfRange { m, n });
        }
        let s = &self.schedule;
        let a_m = self.a_m(family, cls, m);
        let mut g = a_m.clone();
        for mm in m..k {
            let delta = s.delta_of(mm);
            g += family.projection(cls.sinks[mm]) * linalg::c(delta);
            let start = if mm == m { n } else { 0 };
            for (nn, &f) in cls.sink_edges[mm].iter().enumerate().skip(start) {
                g += family.isometry(f) * linalg::c(s.beta_of(mm, nn));
                g += family.range_projection(f) * linalg::c(s.gamma_of(mm, nn) - delta);
            }
        }
        Ok((g, a_m))
    }

    pub fn to_json(&self, graph: &DirectedGraph) -> serde_json::Value {
        let h: BTreeMap<&str, serde_json::Value> = self
            .h
            .iter()
            .map(|(&v, m)| (graph.vertex_name(v), matrix_to_json(m)))
            .collect();
        serde_json::json!({
            "schema": "ckgen-generator/1",
            "dim": self.g.nrows(),
            "schedule": serde_json::to_value(&self.schedule).expect("schedule serializes"),
            "intervals": self.intervals,
            "forbidden": self.forbidden,
            "spectral_margin": self.spectral_margin,
            "a": matrix_to_json(&self.a),
            "b": matrix_to_json(&self.b),
            "c": matrix_to_json(&self.c),
            "d": matrix_to_json(&self.d),
            "xi": matrix_to_json(&self.xi),
            "g": matrix_to_json(&self.g),
            "h": h,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub a_star_d: f64,
    pub a_star_bc: f64,
    pub d_star_bc: f64,
    pub gg_decomposition: f64,
    pub sum_defect: f64,
    pub xi_norm: f64,
    pub xi_min_eigenvalue: f64,
    pub xi_commutator: f64,
    pub h_defect: f64,
    /// `(‖a_M‖, δ_M)` per sink.
    pub a_m_norms: Vec<(f64, f64)>,
    pub spectral_margin: f64,
    pub minwidth: f64,
}

impl StructureReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.a_star_d <= tol
            && self.a_star_bc <= tol
            && self.d_star_bc <= tol
            && self.gg_decomposition <= tol
            && self.sum_defect <= tol
            && self.xi_norm <= 1.0 + tol
            && self.xi_min_eigenvalue >= -tol
            && self.xi_commutator <= tol
            && self.h_defect <= tol
            && self.a_m_norms.iter().all(|&(a, d)| a <= d + tol)
            && self.spectral_margin >= self.minwidth / 3.0
    }
}

/// Orthogonality, decomposition and norm properties of an assembled generator.
pub fn structure_report(parts: &GeneratorParts, family: &MatrixCkFamily, cls: &Classification) -> StructureReport {
    let bc = &parts.b + &parts.c;
    let a_star = parts.a.adjoint();
    let d_star = parts.d.adjoint();
    let gg = parts.g.adjoint() * &parts.g;
    let split = &a_star * &parts.a + bc.adjoint() * &bc + &d_star * &parts.d;
    let sum = &parts.a + &parts.b + &parts.c + &parts.d;
    let xi_eig = linalg::hermitian_eigen(&parts.xi);
    let xi_commutator = parts
        .atoms
        .atoms
        .iter()
        .map(|a| linalg::op_norm(&(&parts.xi * &a.projection - &a.projection * &parts.xi)))
        .fold(0.0, f64::max);
    let h_defect = parts
        .h
        .iter()
        .map(|(&v, h)| linalg::distance(&(&parts.xi_sqrt * h), family.projection(v)))
        .fold(0.0, f64::max);
    let a_m_norms = (0..cls.sinks.len())
        .map(|m| (linalg::op_norm(&parts.a_m(family, cls, m)), parts.schedule.delta_of(m)))
        .collect();
    StructureReport {
        a_star_d: linalg::op_norm(&(&a_star * &parts.d)),
        a_star_bc: linalg::op_norm(&(&a_star * &bc)),
        d_star_bc: linalg::op_norm(&(&d_star * &bc)),
        gg_decomposition: linalg::distance(&gg, &split),
        sum_defect: linalg::distance(&sum, &parts.g),
        xi_norm: linalg::op_norm(&parts.xi),
        xi_min_eigenvalue: xi_eig.values.first().copied().unwrap_or(0.0),
        xi_commutator,
        h_defect,
        a_m_norms,
        spectral_margin: parts.spectral_margin,
        minwidth: parts.intervals.minwidth,
    }
}
