//! Coefficient schedules `δ_m, α_{y,n}, γ_{m,n}, β_{m,n}, ε_e` and their
//! validation.
//!
//! Indexing convention: sink positions are 0-based as in
//! [`Classification`], so `delta[0]` is the fixed `δ_0 = 1` and
//! `delta[m + 1]` belongs to the sink `w_{m+1}` stored at `sinks[m]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::Rational;
use crate::graph::{Classification, DirectedGraph};

pub const SCHEDULE_SCHEMA: &str = "ckgen-schedule/1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("schedule does not match the graph: {0}")]
    IndexMismatch(String),
    #[error("schedule file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientSchedule {
    #[serde(default = "schema_tag")]
    pub schema: String,
    /// `δ_0 = 1, δ_1, …, δ_{K+1}` for `K` sinks.
    pub delta: Vec<Rational>,
    /// `α_{y,1}, α_{y,2}, …` keyed by the id of `y`.
    pub alpha: BTreeMap<String, Vec<Rational>>,
    /// `gamma[m][n]` is `γ_{m+1,n+1}`.
    pub gamma: Vec<Vec<Rational>>,
    /// `beta[m][n]` is `β_{m+1,n+1}`.
    pub beta: Vec<Vec<Rational>>,
    /// `ε_e` keyed by interior edge id.
    pub epsilon: BTreeMap<String, Rational>,
}

fn schema_tag() -> String {
    SCHEDULE_SCHEMA.to_string()
}

impl CoefficientSchedule {
    pub fn from_json(text: &str) -> Result<Self, ScheduleError> {
        let s: Self = serde_json::from_str(text).map_err(|e| ScheduleError::Format(e.to_string()))?;
        if s.schema != SCHEDULE_SCHEMA {
            return Err(ScheduleError::Format(format!("unknown schema {:?}", s.schema)));
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    /// `δ` of the sink at 0-based position `m`.
    pub fn delta_of(&self, m: usize) -> f64 {
        self.delta[m + 1].to_f64()
    }

    pub fn gamma_of(&self, m: usize, n: usize) -> f64 {
        self.gamma[m][n].to_f64()
    }

    pub fn beta_of(&self, m: usize, n: usize) -> f64 {
        self.beta[m][n].to_f64()
    }

    pub fn alpha_of(&self, graph: &DirectedGraph, y: usize, n: usize) -> f64 {
        self.alpha[graph.vertex_name(y)][n].to_f64()
    }

    pub fn epsilon_of(&self, graph: &DirectedGraph, e: usize) -> f64 {
        self.epsilon[graph.edge_name(e)].to_f64()
    }

    /// Weight of an edge of `S = E¹_int ∪ {e_{y,1}}` in `d`.
    pub fn xi_weight(&self, graph: &DirectedGraph, cls: &Classification, e: usize) -> f64 {
        match self.epsilon.get(graph.edge_name(e)) {
            Some(eps) => eps.to_f64(),
            None => {
                let y = graph.src(e);
                debug_assert_eq!(cls.boundary_edges_by_source[&y][0], e);
                self.alpha_of(graph, y, 0)
            }
        }
    }

    /// `μ_v = Σ_{e ∈ S, s(e) = v} ε_e²` for an interior vertex `v`.
    pub fn mu(&self, graph: &DirectedGraph, cls: &Classification, v: usize) -> f64 {
        cls.xi_edges()
            .into_iter()
            .filter(|&e| graph.src(e) == v)
            .map(|e| self.xi_weight(graph, cls, e).powi(2))
            .sum()
    }

    /// Exact `μ_v`.
    pub fn mu_exact(&self, graph: &DirectedGraph, cls: &Classification, v: usize) -> Rational {
        cls.xi_edges()
            .into_iter()
            .filter(|&e| graph.src(e) == v)
            .map(|e| {
                let w = match self.epsilon.get(graph.edge_name(e)) {
                    Some(eps) => eps.clone(),
                    None => self.alpha[graph.vertex_name(graph.src(e))][0].clone(),
                };
                &w * &w
            })
            .sum()
    }
}

/// Dyadic defaults: `δ_m = 2⁻ᵐ`, `γ_{m,n} = δ_m + (δ_{m−1} − δ_m)·2⁻ⁿ`,
/// `β = (γ − δ)/2`, `α = 2^{−(ℓ+1)}·2^{−j}` for the `j`-th boundary edge into
/// `V_ℓ`, and `ε = 2^{−j}` for the `j`-th interior edge.
pub fn default_schedule(graph: &DirectedGraph, cls: &Classification) -> CoefficientSchedule {
    let k = cls.sinks.len();
    let delta: Vec<Rational> = (0..=k + 1).map(|m| Rational::dyadic(m as u32)).collect();

    let mut gamma = Vec::with_capacity(k);
    let mut beta = Vec::with_capacity(k);
    for (m, edges) in cls.sink_edges.iter().enumerate() {
        let (lo, hi) = (&delta[m + 1], &delta[m]);
        let gap = hi - lo;
        let g: Vec<Rational> = (1..=edges.len())
            .map(|n| lo + &(&gap * &Rational::dyadic(n as u32)))
            .collect();
        beta.push(g.iter().map(|x| (x - lo).half()).collect());
        gamma.push(g);
    }

    let mut alpha_by_edge: BTreeMap<usize, Rational> = BTreeMap::new();
    for l in 0..k {
        for (j, e) in cls.boundary_edges_into_level(graph, l).into_iter().enumerate() {
            let a = &Rational::dyadic(l as u32 + 2) * &Rational::dyadic(j as u32 + 1);
            alpha_by_edge.insert(e, a);
        }
    }
    let alpha = cls
        .boundary_edges_by_source
        .iter()
        .map(|(&y, list)| {
            (
                graph.vertex_name(y).to_string(),
                list.iter().map(|e| alpha_by_edge[e].clone()).collect(),
            )
        })
        .collect();

    let epsilon = cls
        .interior_edges
        .iter()
        .enumerate()
        .map(|(j, &e)| (graph.edge_name(e).to_string(), Rational::dyadic(j as u32 + 1)))
        .collect();

    CoefficientSchedule {
        schema: schema_tag(),
        delta,
        alpha,
        gamma,
        beta,
        epsilon,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub constraint: &'static str,
    pub indices: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleReport {
    pub violations: Vec<Violation>,
    /// Largest ratio (next spectral value)/(dominant value) over every
    /// extraction stage; governs power-iteration speed.
    pub worst_contraction: f64,
    /// Slack `δ_m − Σ_{ℓ ≥ m} Σ α` per sink (positive means strict).
    pub tail_slack: Vec<Rational>,
}

impl ScheduleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, constraint: &str) -> bool {
        self.violations.iter().any(|v| v.constraint == constraint)
    }
}

fn check_shape(
    s: &CoefficientSchedule,
    graph: &DirectedGraph,
    cls: &Classification,
) -> Result<(), ScheduleError> {
    let k = cls.sinks.len();
    let bad = |msg: String| Err(ScheduleError::IndexMismatch(msg));
    if s.delta.len() != k + 2 {
        return bad(format!("expected {} delta entries, found {}", k + 2, s.delta.len()));
    }
    if s.gamma.len() != k || s.beta.len() != k {
        return bad(format!("expected {k} gamma/beta rows"));
    }
    for (m, edges) in cls.sink_edges.iter().enumerate() {
        if s.gamma[m].len() != edges.len() || s.beta[m].len() != edges.len() {
            return bad(format!("sink {} expects {} gamma/beta entries", m + 1, edges.len()));
        }
    }
    if s.alpha.len() != cls.y.len() {
        return bad(format!("expected alpha rows for {} vertices", cls.y.len()));
    }
    for (&y, list) in &cls.boundary_edges_by_source {
        match s.alpha.get(graph.vertex_name(y)) {
            Some(row) if row.len() == list.len() => {}
            _ => return bad(format!("alpha row for {} must have {} entries", graph.vertex_name(y), list.len())),
        }
    }
    if s.epsilon.len() != cls.interior_edges.len() {
        return bad(format!("expected {} epsilon entries", cls.interior_edges.len()));
    }
    for &e in &cls.interior_edges {
        if !s.epsilon.contains_key(graph.edge_name(e)) {
            return bad(format!("missing epsilon for interior edge {}", graph.edge_name(e)));
        }
    }
    Ok(())
}

/// Checks every constraint exactly. Messages use the 1-based indices of the
/// mathematical enumeration.
pub fn validate_schedule(
    s: &CoefficientSchedule,
    graph: &DirectedGraph,
    cls: &Classification,
) -> Result<ScheduleReport, ScheduleError> {
    check_shape(s, graph, cls)?;
    let k = cls.sinks.len();
    let zero = Rational::zero();
    let one = Rational::one();
    let mut v = Vec::new();
    let mut push = |constraint, indices: String, message: String| {
        v.push(Violation {
            constraint,
            indices,
            message,
        })
    };

    if s.delta[0] != one {
        push("delta_0", "0".into(), format!("δ_0 = {} must equal 1", s.delta[0]));
    }
    for m in 1..s.delta.len() {
        let d = &s.delta[m];
        if !(d > &zero && d < &one) {
            push("delta_range", m.to_string(), format!("δ_{m} = {d} not in (0,1)"));
        }
        if d >= &s.delta[m - 1] {
            push(
                "delta_decreasing",
                m.to_string(),
                format!("δ_{m} = {d} not strictly less than δ_{} = {}", m - 1, s.delta[m - 1]),
            );
        }
    }

    for (y, row) in &s.alpha {
        for (n, a) in row.iter().enumerate() {
            if !(a > &zero && a < &one) {
                push("alpha_range", format!("{y},{}", n + 1), format!("α_{{{y},{}}} = {a} not in (0,1)", n + 1));
            }
        }
    }

    // Σ_{r(e_{y,n}) ∈ V_ℓ} α_{y,n}, per level.
    let mut level_sums = vec![Rational::zero(); k];
    for (&y, list) in &cls.boundary_edges_by_source {
        for (n, &e) in list.iter().enumerate() {
            let l = cls.m_of[&graph.rng(e)];
            level_sums[l] = &level_sums[l] + &s.alpha[graph.vertex_name(y)][n];
        }
    }
    for (l, sum) in level_sums.iter().enumerate() {
        let budget = &s.delta[l + 1] - &s.delta[l + 2];
        if sum > &budget {
            push(
                "alpha_level_budget",
                (l + 1).to_string(),
                format!("Σ α into V_{} = {sum} exceeds δ_{} − δ_{} = {budget}", l + 1, l + 1, l + 2),
            );
        }
    }
    let mut tail_slack = Vec::with_capacity(k);
    for m in 0..k {
        let tail: Rational = level_sums[m..].iter().sum();
        let slack = &s.delta[m + 1] - &tail;
        if slack < zero {
            push(
                "alpha_tail_bound",
                (m + 1).to_string(),
                format!("Σ_{{ℓ ≥ {}}} Σ α = {tail} exceeds δ_{} = {}", m + 1, m + 1, s.delta[m + 1]),
            );
        }
        tail_slack.push(slack);
    }

    for m in 0..k {
        let (lo, hi) = (&s.delta[m + 1], &s.delta[m]);
        for (n, g) in s.gamma[m].iter().enumerate() {
            let idx = format!("{},{}", m + 1, n + 1);
            if g <= lo {
                push("gamma_interval", idx.clone(), format!("γ_{{{idx}}} not strictly greater than δ_{}", m + 1));
            }
            if g >= hi {
                push("gamma_interval", idx.clone(), format!("γ_{{{idx}}} not strictly less than δ_{m}"));
            }
            if n > 0 && g >= &s.gamma[m][n - 1] {
                push("gamma_decreasing", idx.clone(), format!("γ_{{{idx}}} not strictly less than γ_{{{},{}}}", m + 1, n));
            }
            let want = (g - lo).half();
            if s.beta[m][n] != want {
                push(
                    "beta_formula",
                    idx.clone(),
                    format!("β_{{{idx}}} = {} ≠ (γ_{{{idx}}} − δ_{})/2 = {want}", s.beta[m][n], m + 1),
                );
            }
        }
    }

    for (e, eps) in &s.epsilon {
        if !eps.is_positive() {
            push("epsilon_positive", e.clone(), format!("ε_{e} = {eps} not positive"));
        }
    }

    Ok(ScheduleReport {
        violations: v,
        worst_contraction: worst_contraction(s, cls),
        tail_slack,
    })
}

/// For each stage of the extraction, the ratio of the second largest
/// spectral value of the current modified generator to the dominant one.
pub fn worst_contraction(s: &CoefficientSchedule, cls: &Classification) -> f64 {
    let k = cls.sinks.len();
    let mut worst: f64 = 0.0;
    for m in 0..k {
        let d = s.delta_of(m);
        let row = &s.gamma[m];
        for n in 0..row.len() {
            let next = if n + 1 < row.len() { row[n + 1].to_f64() } else { d };
            worst = worst.max(next / row[n].to_f64());
        }
        let mut next_q = s.delta[m + 2].to_f64();
        if m + 1 < k {
            if let Some(g) = s.gamma[m + 1].first() {
                next_q = next_q.max(g.to_f64());
            }
        }
        worst = worst.max(next_q / d);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{classify, fixtures};

    fn setup(g: &DirectedGraph) -> (Classification, CoefficientSchedule) {
        let c = classify(g);
        let s = default_schedule(g, &c);
        (c, s)
    }

    #[test]
    fn default_values() {
        let g = fixtures::g6();
        let (_, s) = setup(&g);
        assert_eq!(s.delta[1], Rational::new(1, 2));
        assert_eq!(s.delta[2], Rational::new(1, 4));
        assert_eq!(s.gamma[0][0], Rational::new(3, 4));
        assert_eq!(s.beta[0][0], Rational::new(1, 8));
        assert_eq!(s.gamma[1][0], Rational::new(3, 8));
        assert_eq!(s.beta[1][0], Rational::new(1, 16));
    }

    #[test]
    fn g3_alpha_and_g4_epsilon() {
        let (_, s) = setup(&fixtures::g3());
        assert_eq!(s.alpha["u"], vec![Rational::new(1, 8)]);
        let (_, s4) = setup(&fixtures::g4());
        assert_eq!(s4.epsilon["j"], Rational::new(1, 2));
    }

    #[test]
    fn g6_defaults_validate_by_hand() {
        let g = fixtures::g6();
        let (c, s) = setup(&g);
        let rep = validate_schedule(&s, &g, &c).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        // One boundary edge i into V_1: α = 1/8 against δ_1 − δ_2 = 1/4 and δ_1 = 1/2.
        assert_eq!(s.alpha["u"], vec![Rational::new(1, 8)]);
        assert_eq!(rep.tail_slack, vec![Rational::new(3, 8), Rational::new(1, 4)]);
    }

    #[test]
    fn gamma_on_open_interval_boundary() {
        let g = fixtures::g2();
        let (c, mut s) = setup(&g);
        s.gamma[0][0] = s.delta[1].clone();
        let rep = validate_schedule(&s, &g, &c).unwrap();
        assert!(rep
            .violations
            .iter()
            .any(|v| v.message == "γ_{1,1} not strictly greater than δ_1"));
    }

    #[test]
    fn beta_missing_half() {
        let g = fixtures::g2();
        let (c, mut s) = setup(&g);
        s.beta[0][0] = &s.gamma[0][0] - &s.delta[1];
        let rep = validate_schedule(&s, &g, &c).unwrap();
        assert!(rep.mentions("beta_formula"));
        assert_eq!(rep.violations.len(), 1);
    }

    #[test]
    fn mismatched_shape_is_an_error() {
        let g = fixtures::g2();
        let (_, s) = setup(&g);
        let g3 = fixtures::g3();
        let c3 = classify(&g3);
        assert!(matches!(
            validate_schedule(&s, &g3, &c3),
            Err(ScheduleError::IndexMismatch(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let g = fixtures::g4();
        let (_, s) = setup(&g);
        let back = CoefficientSchedule::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn worst_contraction_g2() {
        let g = fixtures::g2();
        let (c, s) = setup(&g);
        // t-stage: δ_1/γ_{1,1} = (1/2)/(3/4); q-stage: δ_2/δ_1 = 1/2.
        assert!((worst_contraction(&s, &c) - 2.0 / 3.0).abs() < 1e-15);
    }
}
