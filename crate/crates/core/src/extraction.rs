//! Recovery of every vertex projection and edge isometry from `g` alone.
//!
//! The extractor sees `g`, the graph, the coefficient schedule and the
//! interval table. Ground-truth matrices enter only afterwards, in
//! [`residual_report`], to measure how well the recovery worked.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{
    build_generator, zero_threshold, AtomKind, GeneratorError, GeneratorOptions, IntervalAssignment,
};
use crate::graph::{classify, Classification, DirectedGraph};
use crate::linalg::{self, CMatrix, HermitianEigen};
use crate::representation::{
    build_truncated_representation, verify_ck_family, Exactness, MatrixCkFamily, RepresentationError,
};
use crate::schedule::{default_schedule, CoefficientSchedule};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("ambiguous spectral split: eigenvalue {eigenvalue:e} near interval of {vertex} (margin {margin:e}): {detail}")]
    Margin {
        eigenvalue: f64,
        vertex: String,
        margin: f64,
        detail: String,
    },
    #[error("atom {label} has no eigenvector in the recovered d*d")]
    MissingAtom { label: String },
    #[error("{stage}: no convergence after exponent {exponent} (observed contraction {observed:.6}, bound {theoretical:.6})")]
    Convergence {
        stage: String,
        exponent: usize,
        observed: f64,
        theoretical: f64,
    },
    #[error("{stage}: |z| = {z_norm} exceeds 1/2")]
    ZNorm { stage: String, z_norm: f64 },
    #[error("{stage}: limit is not a projection (defect {defect:e})")]
    NotProjection { stage: String, defect: f64 },
    #[error("{stage}: resolvent singular on the contour")]
    Singular { stage: String },
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error("graph has sinks; the no-sinks path does not apply")]
    HasSinks,
    #[error("graph has a cycle and sinks; only sink-free cyclic graphs are supported")]
    CyclicWithSinks,
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Representation(#[from] RepresentationError),
}

impl ExtractionError {
    pub fn is_convergence(&self) -> bool {
        matches!(self, ExtractionError::Convergence { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    /// Normalized powers `(x/λ)^k`, evaluated by repeated squaring.
    Power,
    /// Riesz projection by contour quadrature around the dominant eigenvalue.
    Spectral,
}

impl std::str::FromStr for ExtractionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "power" => Ok(Self::Power),
            "spectral" => Ok(Self::Spectral),
            other => Err(format!("unknown mode {other:?} (expected power or spectral)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractionOptions {
    pub mode: ExtractionMode,
    /// Step tolerance for the limits.
    pub tol: f64,
    /// Largest exponent tried in power mode.
    pub k_max: usize,
    /// Residual tolerance for the final PASS verdict.
    pub residual_tol: f64,
    /// Run the other mode too and record the agreement.
    pub cross_check: bool,
    /// Also compute `(yy*)^{1/k}` by repeated square roots.
    pub root_limit_check: bool,
    /// Switch to spectral mode when power mode does not converge.
    pub fallback: bool,
    pub contour_points: usize,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        Self {
            mode: ExtractionMode::Power,
            tol: 1e-12,
            k_max: 10_000,
            residual_tol: 1e-6,
            cross_check: false,
            root_limit_check: false,
            fallback: true,
            contour_points: 64,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StageDiagnostic {
    pub stage: String,
    pub mode: String,
    /// Exponent reached in power mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed_contraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theoretical_contraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_limit_distance: Option<f64>,
}

// ---- spectral split ----

#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub eigen: HermitianEigen,
    /// Eigenvector columns classified into the interval union.
    pub inside: Vec<usize>,
    pub dd_part: CMatrix,
    pub rest_part: CMatrix,
    /// Smallest distance from an eigenvalue to an interval endpoint.
    pub margin: f64,
}

/// Splits the positive matrix `x = g*g` into the part with spectrum inside
/// the intervals (`d*d`) and the rest. Inside an interval every eigenvalue
/// must sit at one of the tabulated atom values; anything else, or anything
/// within the clustering band of an endpoint, is a margin error.
pub fn split_disjoint_spectra(x: &CMatrix, intervals: &IntervalAssignment) -> Result<SpectralSplit, ExtractionError> {
    let eigen = linalg::hermitian_eigen(x);
    let scale = linalg::op_norm(x).max(1.0);
    let mut inside = Vec::new();
    let mut margin = f64::INFINITY;
    for (k, &lambda) in eigen.values.iter().enumerate() {
        for iv in &intervals.intervals {
            let band = (1e-9 * iv.width()).max(1e-15 * scale);
            let d_end = (lambda - iv.theta).abs().min((lambda - iv.theta_prime).abs());
            margin = margin.min(d_end);
            if d_end <= band {
                return Err(ExtractionError::Margin {
                    eigenvalue: lambda,
                    vertex: iv.id.clone(),
                    margin: d_end,
                    detail: "eigenvalue within the clustering band of an endpoint".into(),
                });
            }
            if !iv.contains(lambda) {
                continue;
            }
            let nearest = (0..intervals.values.len())
                .filter(|&a| intervals.values[a].owner == iv.vertex)
                .map(|a| (lambda - intervals.expected_eigenvalue(a)).abs())
                .fold(f64::INFINITY, f64::min);
            let allowed = intervals.spacing(iv.vertex) / 4.0;
            if nearest > allowed {
                return Err(ExtractionError::Margin {
                    eigenvalue: lambda,
                    vertex: iv.id.clone(),
                    margin: nearest,
                    detail: format!("eigenvalue inside the interval but {nearest:e} away from every atom value"),
                });
            }
            inside.push(k);
        }
    }
    let outside: Vec<usize> = (0..eigen.dim()).filter(|k| !inside.contains(k)).collect();
    let part = |cols: &[usize]| {
        let mut out = linalg::zeros(x.nrows());
        for &k in cols {
            let v = eigen.vectors.column(k);
            out += (v * v.adjoint()) * linalg::c(eigen.values[k]);
        }
        out
    };
    Ok(SpectralSplit {
        dd_part: part(&inside),
        rest_part: part(&outside),
        inside,
        eigen,
        margin,
    })
}

// ---- interior ----

/// Order in which the pieces of `g` are peeled off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionRoute {
    /// Interior first by splitting the spectrum of `g*g`, then sinks, then
    /// boundary.
    InteriorFirst,
    /// Sinks first from `g` itself, then `d = (g − b − c)(1 − P_bdry)`,
    /// then boundary. Used when some interior vertex emits a sink edge:
    /// there `b*b` carries `β² P_v` on interior coordinates and `g*g` no
    /// longer splits into orthogonal pieces.
    SinksFirst,
}

/// Whether `a*a + (b+c)*(b+c)` and `d*d` are orthogonal, which holds
/// exactly when no sink edge leaves an interior vertex.
pub fn interior_split_applies(graph: &DirectedGraph, cls: &Classification) -> bool {
    cls.sink_edges
        .iter()
        .flatten()
        .all(|&f| !cls.interior_vertices.contains(&graph.src(f)))
}

pub fn choose_route(graph: &DirectedGraph, cls: &Classification) -> ExtractionRoute {
    if interior_split_applies(graph, cls) {
        ExtractionRoute::InteriorFirst
    } else {
        ExtractionRoute::SinksFirst
    }
}

#[derive(Debug, Clone)]
pub struct InteriorRecovery {
    /// Atom projections, aligned with `IntervalAssignment::values`.
    pub atoms: Vec<CMatrix>,
    pub projections: BTreeMap<usize, CMatrix>,
    pub range_projections: BTreeMap<usize, CMatrix>,
    pub isometries: BTreeMap<usize, CMatrix>,
    pub xi: CMatrix,
    pub xi_sqrt: CMatrix,
    pub h: BTreeMap<usize, CMatrix>,
    pub dd: CMatrix,
    pub margin: f64,
}

fn combine(mats: &[(&CMatrix, f64)], n: usize) -> CMatrix {
    let mut out = linalg::zeros(n);
    for (m, w) in mats {
        out += *m * linalg::c(*w);
    }
    out
}

pub fn recover_interior(
    g: &CMatrix,
    graph: &DirectedGraph,
    cls: &Classification,
    s: &CoefficientSchedule,
    intervals: &IntervalAssignment,
) -> Result<InteriorRecovery, ExtractionError> {
    let split = split_disjoint_spectra(&(g.adjoint() * g), intervals)?;
    interior_from_split(g, split, graph, cls, s, intervals)
}

fn interior_from_split(
    g: &CMatrix,
    split: SpectralSplit,
    graph: &DirectedGraph,
    cls: &Classification,
    s: &CoefficientSchedule,
    intervals: &IntervalAssignment,
) -> Result<InteriorRecovery, ExtractionError> {
    let n = g.nrows();
    let zero = zero_threshold(intervals);

    let mut atoms = Vec::with_capacity(intervals.values.len());
    for (k, av) in intervals.values.iter().enumerate() {
        let expected = intervals.expected_eigenvalue(k);
        let allowed = intervals.spacing(av.owner) / 4.0;
        let cols: Vec<usize> = split
            .inside
            .iter()
            .copied()
            .filter(|&c| split.eigen.values[c] > zero && (split.eigen.values[c] - expected).abs() <= allowed)
            .collect();
        if cols.is_empty() {
            return Err(ExtractionError::MissingAtom {
                label: av.label.clone(),
            });
        }
        atoms.push(split.eigen.projection(&cols));
    }

    let values: Vec<f64> = intervals.values.iter().map(|a| a.value).collect();
    let weighted = |f: &dyn Fn(f64) -> f64, owner: Option<usize>| {
        let terms: Vec<(&CMatrix, f64)> = atoms
            .iter()
            .zip(&intervals.values)
            .zip(&values)
            .filter(|((_, av), _)| owner.is_none_or(|v| av.owner == v))
            .map(|((p, _), &val)| (p, f(val)))
            .collect();
        combine(&terms, n)
    };
    let xi = weighted(&|v| v, None);
    let xi_sqrt = weighted(&f64::sqrt, None);

    let mut projections = BTreeMap::new();
    let mut h = BTreeMap::new();
    for &v in &cls.interior_vertices {
        projections.insert(v, weighted(&|_| 1.0, Some(v)));
        h.insert(v, weighted(&|x| x.powf(-0.5), Some(v)));
    }

    let mut range_projections = BTreeMap::new();
    let mut isometries = BTreeMap::new();
    for (k, av) in intervals.values.iter().enumerate() {
        if let AtomKind::RangeProjectionOf(e) = av.kind {
            let eps = s.epsilon_of(graph, e);
            let h_src = h
                .get(&graph.src(e))
                .ok_or_else(|| ExtractionError::MissingPrerequisite(format!("h for source of {}", graph.edge_name(e))))?;
            isometries.insert(e, &atoms[k] * g * h_src * linalg::c(1.0 / eps));
            range_projections.insert(e, atoms[k].clone());
        }
    }
    Ok(InteriorRecovery {
        atoms,
        projections,
        range_projections,
        isometries,
        xi,
        xi_sqrt,
        h,
        dd: split.dd_part,
        margin: split.margin,
    })
}

// ---- limits ----

struct Limit {
    value: CMatrix,
    exponent: Option<usize>,
    observed: Option<f64>,
}

/// `lim (x/λ)^k` by repeated squaring of `x/λ`.
fn power_limit(x: &CMatrix, lambda: f64, opts: &ExtractionOptions, stage: &str, theoretical: f64) -> Result<Limit, ExtractionError> {
    let mut cur = x * linalg::c(1.0 / lambda);
    let mut k = 1usize;
    let mut prev_diff: Option<f64> = None;
    let mut observed = None;
    loop {
        let next = &cur * &cur;
        let diff = linalg::frobenius(&(&next - &cur));
        if let Some(p) = prev_diff {
            if p > 0.0 && diff > 0.0 {
                observed = Some((diff / p).powf(1.0 / k as f64));
            }
        }
        let scale = linalg::frobenius(&next).max(1.0);
        if diff <= opts.tol * scale {
            return Ok(Limit {
                value: next,
                exponent: Some(2 * k),
                observed,
            });
        }
        if 2 * k > opts.k_max {
            return Err(ExtractionError::Convergence {
                stage: stage.to_string(),
                exponent: 2 * k,
                observed: observed.unwrap_or(f64::NAN),
                theoretical,
            });
        }
        prev_diff = Some(diff);
        cur = next;
        k *= 2;
    }
}

fn riesz_limit(x: &CMatrix, center: f64, gap: f64, opts: &ExtractionOptions, stage: &str) -> Result<Limit, ExtractionError> {
    let value = linalg::riesz_projection(x, center, gap / 2.0, opts.contour_points).ok_or_else(|| {
        ExtractionError::Singular {
            stage: stage.to_string(),
        }
    })?;
    Ok(Limit {
        value,
        exponent: None,
        observed: None,
    })
}

fn limit_in_mode(
    mode: ExtractionMode,
    x: &CMatrix,
    lambda: f64,
    below: f64,
    opts: &ExtractionOptions,
    stage: &str,
) -> Result<Limit, ExtractionError> {
    match mode {
        ExtractionMode::Power => power_limit(x, lambda, opts, stage, below / lambda),
        ExtractionMode::Spectral => riesz_limit(x, lambda, lambda - below, opts, stage),
    }
}

fn mode_name(mode: ExtractionMode) -> &'static str {
    match mode {
        ExtractionMode::Power => "power",
        ExtractionMode::Spectral => "spectral",
    }
}

fn other(mode: ExtractionMode) -> ExtractionMode {
    match mode {
        ExtractionMode::Power => ExtractionMode::Spectral,
        ExtractionMode::Spectral => ExtractionMode::Power,
    }
}

/// Runs the configured mode, falling back to spectral mode on a power-mode
/// convergence failure when allowed.
fn dominant_limit(
    x: &CMatrix,
    lambda: f64,
    below: f64,
    opts: &ExtractionOptions,
    stage: &str,
    diag: &mut StageDiagnostic,
) -> Result<CMatrix, ExtractionError> {
    diag.theoretical_contraction = Some(below / lambda);
    let lim = match limit_in_mode(opts.mode, x, lambda, below, opts, stage) {
        Ok(l) => {
            diag.mode = mode_name(opts.mode).into();
            l
        }
        Err(e) if e.is_convergence() && opts.fallback && opts.mode == ExtractionMode::Power => {
            diag.mode = "spectral (fallback)".into();
            if let ExtractionError::Convergence { observed, .. } = e {
                diag.observed_contraction = Some(observed);
            }
            limit_in_mode(ExtractionMode::Spectral, x, lambda, below, opts, stage)?
        }
        Err(e) => return Err(e),
    };
    diag.exponent = lim.exponent;
    if lim.observed.is_some() {
        diag.observed_contraction = lim.observed;
    }
    Ok(lim.value)
}

fn projection_above_half(m: &CMatrix) -> CMatrix {
    let eig = linalg::hermitian_eigen(m);
    let cols: Vec<usize> = (0..eig.dim()).filter(|&k| eig.values[k] >= 0.5).collect();
    eig.projection(&cols)
}

/// `lim_k (yy*)^{1/2^k}` by repeated square roots; eigenvalues below a noise
/// floor are set to zero so that they stay at zero.
pub fn root_limit(yy: &CMatrix, tol: f64) -> CMatrix {
    let floor = 1e-10 * linalg::op_norm(yy).max(1.0);
    let mut cur = yy.clone();
    for _ in 0..64 {
        let next = linalg::hermitian_eigen(&cur).apply(|x| if x <= floor { 0.0 } else { x.sqrt() });
        let diff = linalg::frobenius(&(&next - &cur));
        cur = next;
        if diff <= tol {
            break;
        }
    }
    cur
}

#[derive(Debug, Clone)]
pub struct SinkEdgeRecovery {
    pub y: CMatrix,
    pub tt: CMatrix,
    pub t: CMatrix,
    pub z_norm: f64,
    pub diag: StageDiagnostic,
}

fn sink_edge_from_y(g_mn: &CMatrix, y: &CMatrix, gamma: f64, beta: f64) -> (CMatrix, CMatrix, f64) {
    let tt = projection_above_half(&(y * y.adjoint()));
    let t = (&tt * g_mn - &tt * linalg::c(gamma)) * linalg::c(1.0 / beta);
    let z = t.adjoint() * (y - &tt);
    (tt, t, linalg::op_norm(&z))
}

/// Recovers `t = T_{M,N}` from `g_{M,N}`: `y = lim (g/γ)^k = tt* + tz`,
/// `tt*` is the spectral projection of `yy*` on `[1/2, ∞)`, and
/// `t = (tt* g − γ tt*)/β`. `below` bounds the rest of the spectrum:
/// `max(γ_{M,N+1}, δ_M)`.
pub fn recover_sink_edge(
    g_mn: &CMatrix,
    gamma: f64,
    beta: f64,
    below: f64,
    opts: &ExtractionOptions,
    stage: &str,
) -> Result<SinkEdgeRecovery, ExtractionError> {
    let mut diag = StageDiagnostic {
        stage: stage.to_string(),
        ..Default::default()
    };
    let y = dominant_limit(g_mn, gamma, below, opts, stage, &mut diag)?;
    let (tt, t, z_norm) = sink_edge_from_y(g_mn, &y, gamma, beta);
    diag.z_norm = Some(z_norm);
    if z_norm > 0.5 + 1e-9 {
        return Err(ExtractionError::ZNorm {
            stage: stage.to_string(),
            z_norm,
        });
    }
    let defect = linalg::projection_defect(&tt);
    if defect > 1e-8 {
        return Err(ExtractionError::NotProjection {
            stage: stage.to_string(),
            defect,
        });
    }
    if opts.cross_check {
        let alt = limit_in_mode(other(opts.mode), g_mn, gamma, below, opts, stage)?;
        let (_, t_alt, _) = sink_edge_from_y(g_mn, &alt.value, gamma, beta);
        diag.mode_agreement = Some(linalg::op_norm(&(&t - &t_alt)));
    }
    if opts.root_limit_check {
        let r = root_limit(&(&y * y.adjoint()), opts.tol);
        diag.root_limit_distance = Some(linalg::op_norm(&(&r - &tt)));
    }
    Ok(SinkEdgeRecovery { y, tt, t, z_norm, diag })
}

/// Recovers `Q_M = lim (x/δ_M)^k` for `x = g_{M+1,1} + δ_M Q_M`; `below`
/// bounds the spectrum of `g_{M+1,1}`.
pub fn recover_sink_projection(
    x: &CMatrix,
    delta: f64,
    below: f64,
    opts: &ExtractionOptions,
    stage: &str,
) -> Result<(CMatrix, StageDiagnostic), ExtractionError> {
    let mut diag = StageDiagnostic {
        stage: stage.to_string(),
        ..Default::default()
    };
    let q = dominant_limit(x, delta, below, opts, stage, &mut diag)?;
    let defect = linalg::projection_defect(&q);
    if defect > 1e-8 {
        return Err(ExtractionError::NotProjection {
            stage: stage.to_string(),
            defect,
        });
    }
    if opts.cross_check {
        let alt = limit_in_mode(other(opts.mode), x, delta, below, opts, stage)?;
        diag.mode_agreement = Some(linalg::op_norm(&(&q - &alt.value)));
    }
    Ok((q, diag))
}

#[derive(Debug, Clone)]
pub struct BoundaryRecovery {
    pub projections: BTreeMap<usize, CMatrix>,
    pub isometries: BTreeMap<usize, CMatrix>,
    pub a1: CMatrix,
    pub a: CMatrix,
}

/// Boundary projections from `t_f* t_f`, then `a_1 = Σ P_v g_{1,1}`,
/// `S_{y,1} = a_1 h_y / α_{y,1}`, `a = a_1 − (Σ α_{y,1} S_{y,1}) ξ^{1/2}` and
/// `S_{y,n+1} = a S_{y,n} / α_{y,n+1}`.
#[allow(clippy::too_many_arguments)]
pub fn recover_boundary(
    g11: &CMatrix,
    sink_isometries: &BTreeMap<usize, CMatrix>,
    h: &BTreeMap<usize, CMatrix>,
    xi_sqrt: &CMatrix,
    graph: &DirectedGraph,
    cls: &Classification,
    s: &CoefficientSchedule,
) -> Result<BoundaryRecovery, ExtractionError> {
    let n = g11.nrows();
    let mut projections = BTreeMap::new();
    for &v in &cls.boundary_vertices {
        let f = graph
            .emitted(v)
            .next()
            .ok_or_else(|| ExtractionError::MissingPrerequisite(format!("edge out of {}", graph.vertex_name(v))))?;
        let t = sink_isometries
            .get(&f)
            .ok_or_else(|| ExtractionError::MissingPrerequisite(format!("sink edge {}", graph.edge_name(f))))?;
        projections.insert(v, t.adjoint() * t);
    }
    let mut a1 = linalg::zeros(n);
    for p in projections.values() {
        a1 += p * g11;
    }
    let mut isometries = BTreeMap::new();
    let mut first = linalg::zeros(n);
    for (&y, list) in &cls.boundary_edges_by_source {
        let hy = h
            .get(&y)
            .ok_or_else(|| ExtractionError::MissingPrerequisite(format!("h for {}", graph.vertex_name(y))))?;
        let alpha = s.alpha_of(graph, y, 0);
        let s1 = &a1 * hy * linalg::c(1.0 / alpha);
        first += &s1 * linalg::c(alpha);
        isometries.insert(list[0], s1);
    }
    let a = &a1 - first * xi_sqrt;
    for (&y, list) in &cls.boundary_edges_by_source {
        for k in 1..list.len() {
            let prev = &isometries[&list[k - 1]];
            let next = &a * prev * linalg::c(1.0 / s.alpha_of(graph, y, k));
            isometries.insert(list[k], next);
        }
    }
    Ok(BoundaryRecovery {
        projections,
        isometries,
        a1,
        a,
    })
}

// ---- pipeline ----

/// Everything recovered from `g`, indexed like the graph.
#[derive(Debug, Clone)]
pub struct RecoveredFamily {
    pub projections: Vec<CMatrix>,
    pub isometries: Vec<CMatrix>,
    pub stages: Vec<StageDiagnostic>,
    pub split_margin: f64,
    pub route: ExtractionRoute,
}

impl RecoveredFamily {
    pub fn to_family(&self, graph: &DirectedGraph) -> MatrixCkFamily {
        let dim = self.projections.first().or(self.isometries.first()).map_or(0, |m| m.nrows());
        MatrixCkFamily {
            dim,
            basis_labels: (0..dim).map(|i| format!("b{i}")).collect(),
            basis_lengths: None,
            vertex_ids: graph.vertices().to_vec(),
            edge_ids: graph.edges().iter().map(|e| e.id.clone()).collect(),
            projections: self.projections.clone(),
            partial_isometries: self.isometries.clone(),
            exactness: Exactness::Exact,
        }
    }
}

/// Upper bound on the spectrum of `g_{M+1,1}` below `δ_M`.
fn below_sink_projection(s: &CoefficientSchedule, cls: &Classification, m: usize) -> f64 {
    match cls.sinks.get(m + 1) {
        Some(_) if !cls.sink_edges[m + 1].is_empty() => s.gamma_of(m + 1, 0),
        Some(_) => s.delta_of(m + 1),
        None => 0.0,
    }
}

/// Recovers every `P_v` and `S_e` from `g` and the public metadata.
pub fn extract(
    g: &CMatrix,
    graph: &DirectedGraph,
    cls: &Classification,
    s: &CoefficientSchedule,
    intervals: &IntervalAssignment,
    opts: &ExtractionOptions,
) -> Result<RecoveredFamily, ExtractionError> {
    extract_with_route(g, graph, cls, s, intervals, opts, choose_route(graph, cls))
}

fn interior_stage(mode: &str, margin: f64) -> StageDiagnostic {
    StageDiagnostic {
        stage: "interior".into(),
        mode: mode.into(),
        margin: Some(margin),
        ..Default::default()
    }
}

fn strip_interior(g: &CMatrix, interior: &InteriorRecovery, graph: &DirectedGraph, s: &CoefficientSchedule) -> CMatrix {
    let mut eps_sum = linalg::zeros(g.nrows());
    for (&e, se) in &interior.isometries {
        eps_sum += se * linalg::c(s.epsilon_of(graph, e));
    }
    g - eps_sum * &interior.xi_sqrt
}

/// Like [`extract`] with an explicit route. Forcing
/// [`ExtractionRoute::InteriorFirst`] on a graph where
/// [`interior_split_applies`] is false shows the split breaking down.
#[allow(clippy::too_many_arguments)]
pub fn extract_with_route(
    g: &CMatrix,
    graph: &DirectedGraph,
    cls: &Classification,
    s: &CoefficientSchedule,
    intervals: &IntervalAssignment,
    opts: &ExtractionOptions,
    route: ExtractionRoute,
) -> Result<RecoveredFamily, ExtractionError> {
    let mut stages = Vec::new();
    let mut projections: BTreeMap<usize, CMatrix> = BTreeMap::new();
    let mut isometries: BTreeMap<usize, CMatrix> = BTreeMap::new();

    let early = match route {
        ExtractionRoute::InteriorFirst => {
            let interior = recover_interior(g, graph, cls, s, intervals)?;
            stages.push(interior_stage("spectral split", interior.margin));
            let g11 = strip_interior(g, &interior, graph, s);
            Some((interior, g11))
        }
        ExtractionRoute::SinksFirst => None,
    };

    let mut g_cur = early.as_ref().map_or_else(|| g.clone(), |(_, g11)| g11.clone());
    for (m, &w) in cls.sinks.iter().enumerate() {
        let delta = s.delta_of(m);
        let edges = &cls.sink_edges[m];
        for (k, &f) in edges.iter().enumerate() {
            let gamma = s.gamma_of(m, k);
            let beta = s.beta_of(m, k);
            let below = if k + 1 < edges.len() { s.gamma_of(m, k + 1) } else { delta };
            let stage = format!("sink_edge {}", graph.edge_name(f));
            let rec = recover_sink_edge(&g_cur, gamma, beta, below, opts, &stage)?;
            g_cur -= &rec.t * linalg::c(beta) + &rec.tt * linalg::c(gamma - delta);
            stages.push(rec.diag);
            isometries.insert(f, rec.t);
        }
        if let Some((_, g11)) = &early {
            for &v in &cls.boundary_levels[m] {
                let f = graph.emitted(v).find(|&f| graph.rng(f) == w).ok_or_else(|| {
                    ExtractionError::MissingPrerequisite(format!("edge {} -> sink", graph.vertex_name(v)))
                })?;
                let t = &isometries[&f];
                let pv = t.adjoint() * t;
                g_cur -= &pv * g11;
            }
        }
        let stage = format!("sink_projection {}", graph.vertex_name(w));
        let (q, diag) = recover_sink_projection(&g_cur, delta, below_sink_projection(s, cls, m), opts, &stage)?;
        g_cur -= &q * linalg::c(delta);
        stages.push(diag);
        projections.insert(w, q);
    }

    let (interior, g11) = match early {
        Some(pair) => pair,
        None => {
            // g_cur is now a + d, and a lives on boundary coordinates.
            let mut p_bdry = linalg::zeros(g.nrows());
            for &v in &cls.boundary_vertices {
                let f = graph.emitted(v).next().ok_or_else(|| {
                    ExtractionError::MissingPrerequisite(format!("edge out of {}", graph.vertex_name(v)))
                })?;
                let t = &isometries[&f];
                p_bdry += t.adjoint() * t;
            }
            let d = &g_cur - &g_cur * &p_bdry;
            let split = split_disjoint_spectra(&(d.adjoint() * &d), intervals)?;
            let interior = interior_from_split(g, split, graph, cls, s, intervals)?;
            stages.push(interior_stage("d*d after sinks", interior.margin));
            let g11 = strip_interior(g, &interior, graph, s);
            (interior, g11)
        }
    };
    projections.extend(interior.projections.clone());
    isometries.extend(interior.isometries.clone());

    let sink_isometries: BTreeMap<usize, CMatrix> = cls
        .sink_edges
        .iter()
        .flatten()
        .map(|&f| (f, isometries[&f].clone()))
        .collect();
    let boundary = recover_boundary(&g11, &sink_isometries, &interior.h, &interior.xi_sqrt, graph, cls, s)?;
    stages.push(StageDiagnostic {
        stage: "boundary".into(),
        mode: "algebraic".into(),
        ..Default::default()
    });
    projections.extend(boundary.projections);
    isometries.extend(boundary.isometries);

    let take = |map: &mut BTreeMap<usize, CMatrix>, count: usize, what: &str, name: &dyn Fn(usize) -> String| {
        (0..count)
            .map(|i| {
                map.remove(&i)
                    .ok_or_else(|| ExtractionError::MissingPrerequisite(format!("{what} {} not recovered", name(i))))
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let projections = take(&mut projections, graph.vertex_count(), "vertex", &|v| graph.vertex_name(v).to_string())?;
    let isometries = take(&mut isometries, graph.edge_count(), "edge", &|e| graph.edge_name(e).to_string())?;
    Ok(RecoveredFamily {
        projections,
        isometries,
        stages,
        split_margin: interior.margin,
        route,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub mode: ExtractionMode,
    pub tol: f64,
    pub residual_tol: f64,
    pub edge_residuals: BTreeMap<String, f64>,
    pub vertex_residuals: BTreeMap<String, f64>,
    pub max_residual: f64,
    /// Worst Cuntz-Krieger relation residual of the recovered family.
    pub recovered_relations: f64,
    /// Worst `‖T T'‖` over pairs of recovered sink-edge isometries.
    pub sink_edge_products: f64,
    pub split_margin: f64,
    pub route: ExtractionRoute,
    pub stages: Vec<StageDiagnostic>,
    pub notes: Vec<String>,
    pub pass: bool,
}

/// Compares a recovered family with ground truth, optionally compressed by
/// `window` on both sides.
pub fn residual_report(
    recovered: &RecoveredFamily,
    truth: &MatrixCkFamily,
    graph: &DirectedGraph,
    cls: &Classification,
    window: Option<&CMatrix>,
    opts: &ExtractionOptions,
) -> RecoveryReport {
    let dist = |a: &CMatrix, b: &CMatrix| match window {
        Some(w) => linalg::op_norm(&(w * (a - b) * w)),
        None => linalg::distance(a, b),
    };
    let edge_residuals: BTreeMap<String, f64> = (0..graph.edge_count())
        .map(|e| (graph.edge_name(e).to_string(), dist(&recovered.isometries[e], truth.isometry(e))))
        .collect();
    let vertex_residuals: BTreeMap<String, f64> = (0..graph.vertex_count())
        .map(|v| (graph.vertex_name(v).to_string(), dist(&recovered.projections[v], truth.projection(v))))
        .collect();
    let max_residual = edge_residuals
        .values()
        .chain(vertex_residuals.values())
        .fold(0.0f64, |a, &b| a.max(b));
    let recovered_relations = if window.is_none() {
        verify_ck_family(&recovered.to_family(graph), graph, opts.residual_tol).max_residual()
    } else {
        0.0
    };
    let sink: Vec<usize> = cls.sink_edges.iter().flatten().copied().collect();
    let mut sink_edge_products = 0.0f64;
    for &f in &sink {
        for &f2 in &sink {
            let p = &recovered.isometries[f] * &recovered.isometries[f2];
            sink_edge_products = sink_edge_products.max(linalg::op_norm(&p));
        }
    }
    let pass = max_residual <= opts.residual_tol && recovered_relations <= opts.residual_tol && max_residual.is_finite();
    RecoveryReport {
        mode: opts.mode,
        tol: opts.tol,
        residual_tol: opts.residual_tol,
        edge_residuals,
        vertex_residuals,
        max_residual,
        recovered_relations,
        sink_edge_products,
        split_margin: recovered.split_margin,
        route: recovered.route,
        stages: recovered.stages.clone(),
        notes: Vec::new(),
        pass,
    }
}

/// Extraction followed by comparison with ground truth.
pub fn run_full_extraction(
    g: &CMatrix,
    graph: &DirectedGraph,
    cls: &Classification,
    s: &CoefficientSchedule,
    intervals: &IntervalAssignment,
    truth: &MatrixCkFamily,
    opts: &ExtractionOptions,
) -> Result<RecoveryReport, ExtractionError> {
    let recovered = extract(g, graph, cls, s, intervals, opts)?;
    Ok(residual_report(&recovered, truth, graph, cls, None, opts))
}

/// Sink-free graphs: `g = d` on the truncated path space of depth `depth`.
/// Residuals are compressed to paths of length at most `depth − 1`.
pub fn no_sinks_fast_path(
    graph: &DirectedGraph,
    schedule: Option<&CoefficientSchedule>,
    depth: usize,
    opts: &ExtractionOptions,
) -> Result<RecoveryReport, ExtractionError> {
    let cls = classify(graph);
    if !cls.sinks.is_empty() {
        return Err(ExtractionError::HasSinks);
    }
    let truth = build_truncated_representation(graph, depth)?;
    let s = schedule.cloned().unwrap_or_else(|| default_schedule(graph, &cls));
    let parts = build_generator(&truth, graph, &cls, &s, GeneratorOptions::default())?;
    let recovered = extract(&parts.g, graph, &cls, &s, &parts.intervals, opts)?;
    let lengths = truth.basis_lengths.clone().unwrap_or_default();
    let window = truth.coordinate_projection(|i| lengths.get(i).is_some_and(|&l| l < depth));
    let mut report = residual_report(&recovered, &truth, graph, &cls, Some(&window), opts);
    report.notes.push(format!(
        "no sinks: truncated path space of depth {depth} (dim {}); residuals on paths of length <= {}",
        truth.dim,
        depth.saturating_sub(1)
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures;
    use crate::representation::build_path_representation;

    fn pipeline(g: &DirectedGraph, opts: &ExtractionOptions) -> RecoveryReport {
        let fam = build_path_representation(g).unwrap();
        let cls = classify(g);
        let s = default_schedule(g, &cls);
        let parts = build_generator(&fam, g, &cls, &s, GeneratorOptions::default()).unwrap();
        run_full_extraction(&parts.g, g, &cls, &s, &parts.intervals, &fam, opts).unwrap()
    }

    #[test]
    fn g2_intermediate_y() {
        let g = fixtures::g2();
        let fam = build_path_representation(&g).unwrap();
        let cls = classify(&g);
        let s = default_schedule(&g, &cls);
        let parts = build_generator(&fam, &g, &cls, &s, GeneratorOptions::default()).unwrap();
        let rec = recover_sink_edge(&parts.g, 0.75, 0.125, 0.5, &ExtractionOptions::default(), "f").unwrap();
        let mut y = linalg::zeros(2);
        y[(1, 1)] = linalg::c(1.0);
        y[(1, 0)] = linalg::c(1.0 / 6.0);
        assert!(linalg::distance(&rec.y, &y) < 1e-12);
        assert!((rec.z_norm - 1.0 / 6.0).abs() < 1e-12);
        assert!(linalg::distance(&rec.t, &fam.partial_isometries[0]) < 1e-12);
    }

    #[test]
    fn fixtures_recover_in_both_modes() {
        for (name, g) in fixtures::acyclic() {
            for mode in [ExtractionMode::Power, ExtractionMode::Spectral] {
                let opts = ExtractionOptions {
                    mode,
                    cross_check: true,
                    root_limit_check: true,
                    ..Default::default()
                };
                let rep = pipeline(&g, &opts);
                assert!(rep.pass, "{name} {mode:?}: {rep:?}");
                assert!(rep.max_residual <= 1e-8, "{name}: {}", rep.max_residual);
                for st in &rep.stages {
                    if let Some(a) = st.mode_agreement {
                        assert!(a <= 1e-9, "{name} {}: {a}", st.stage);
                    }
                    if let Some(r) = st.root_limit_distance {
                        assert!(r <= 1e-6, "{name} {}: {r}", st.stage);
                    }
                }
            }
        }
    }

    #[test]
    fn loop_on_truncated_window() {
        let rep = no_sinks_fast_path(&fixtures::g5(), None, 6, &ExtractionOptions::default()).unwrap();
        assert!(rep.edge_residuals["e"] <= 1e-8, "{rep:?}");
        let rep = no_sinks_fast_path(&fixtures::two_cycle(), None, 6, &ExtractionOptions::default()).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(matches!(
            no_sinks_fast_path(&fixtures::g2(), None, 6, &ExtractionOptions::default()),
            Err(ExtractionError::HasSinks)
        ));
    }

    #[test]
    fn power_mode_gives_up_at_k_max() {
        let g = fixtures::g2();
        let fam = build_path_representation(&g).unwrap();
        let mut x = fam.partial_isometries[0].clone() * linalg::c(0.1);
        x[(1, 1)] = linalg::c(0.75);
        x[(0, 0)] = linalg::c(0.7499);
        let opts = ExtractionOptions {
            k_max: 64,
            fallback: false,
            ..Default::default()
        };
        let err = recover_sink_edge(&x, 0.75, 0.1, 0.7499, &opts, "f").unwrap_err();
        assert!(err.is_convergence());
    }
}
