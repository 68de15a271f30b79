//! The common-neighbor estimators.
//!
//! Each algorithm is written as an explicit exchange between vertex-side code
//! (which may read the vertex's own true neighbor list) and curator-side code
//! in [`curator`], whose functions only ever see noisy reports. Every run
//! returns an [`EstimateReport`] carrying the estimate, the privacy ledger and
//! the message transcript.
//!
//! Stream layout: the randomness a vertex uses in round `r` is
//! `RandomSource::stream(vertex.stream_key(), r)`, except for the degree
//! round, where vertex `i` of the query layer draws slot `i` of round 1. The
//! central baseline draws from [`CURATOR_STREAM`].

use std::fmt;
use std::time::{Duration, Instant};

use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{exact_common_neighbors, BipartiteGraph, QueryPair, VertexRef};
use crate::ledger::{Composition, Mechanism, PrivacyLedger, PrivacyModel};
use crate::mechanisms::{randomized_response, Laplace, NoisyNeighborSet, PrivacyBudget};
use crate::optimizer::{self, BudgetPlan};
use crate::protocol::{Message, Transcript};
use crate::rng::{RandomSource, CURATOR_STREAM};

/// Share of the total budget spent on the degree round of the double-source algorithm.
pub const DEGREE_ROUND_SHARE: f64 = 0.05;

/// Default share of the budget the single-source algorithm spends on randomized response.
pub const DEFAULT_EPS1_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Algorithm {
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "oner")]
    OneR,
    #[serde(rename = "ss")]
    SingleSource,
    #[serde(rename = "ds")]
    DoubleSource,
    #[serde(rename = "central")]
    Central,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Naive,
        Algorithm::OneR,
        Algorithm::SingleSource,
        Algorithm::DoubleSource,
        Algorithm::Central,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Naive => "naive",
            Algorithm::OneR => "oner",
            Algorithm::SingleSource => "ss",
            Algorithm::DoubleSource => "ds",
            Algorithm::Central => "central",
        }
    }

    /// Interaction rounds of the protocol.
    pub fn rounds(self) -> u32 {
        match self {
            Algorithm::Naive | Algorithm::OneR | Algorithm::Central => 1,
            Algorithm::SingleSource => 2,
            Algorithm::DoubleSource => 3,
        }
    }

    pub fn is_unbiased(self) -> bool {
        self != Algorithm::Naive
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Algorithm::Naive),
            "oner" => Ok(Algorithm::OneR),
            "ss" | "multir-ss" => Ok(Algorithm::SingleSource),
            "ds" | "multir-ds" => Ok(Algorithm::DoubleSource),
            "central" | "centraldp" => Ok(Algorithm::Central),
            other => Err(Error::validation(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Wall time spent on each side of the protocol.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub vertex: Duration,
    pub curator: Duration,
}

impl PhaseTimes {
    fn vertex<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.vertex += start.elapsed();
        out
    }

    fn curator<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.curator += start.elapsed();
        out
    }
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub algorithm: Algorithm,
    /// The estimate of the common-neighbor count. Never rounded or clamped.
    pub value: f64,
    pub ledger: PrivacyLedger,
    pub transcript: Transcript,
    pub comm_bytes: u64,
    pub rounds: u32,
    pub plan: Option<BudgetPlan>,
    /// Set when the optimizer failed and the default plan was used.
    pub plan_fallback: bool,
    pub timing: PhaseTimes,
}

struct Run {
    algorithm: Algorithm,
    ledger: PrivacyLedger,
    transcript: Transcript,
    timing: PhaseTimes,
}

impl Run {
    fn new(algorithm: Algorithm, model: PrivacyModel) -> Self {
        Self {
            algorithm,
            ledger: PrivacyLedger::new(model),
            transcript: Transcript::new(),
            timing: PhaseTimes::default(),
        }
    }

    fn finish(self, value: f64, plan: Option<BudgetPlan>, plan_fallback: bool) -> EstimateReport {
        EstimateReport {
            algorithm: self.algorithm,
            value,
            ledger: self.ledger,
            comm_bytes: self.transcript.total_bytes(),
            transcript: self.transcript,
            rounds: self.algorithm.rounds(),
            plan,
            plan_fallback,
            timing: self.timing,
        }
    }
}

/// Curator-side computations. Nothing here can see the true graph.
pub mod curator {
    use crate::error::{Error, Result};
    use crate::graph::intersection_size;
    use crate::mechanisms::{FlipProbability, NoisyNeighborSet};

    /// Common neighbors on the noisy graph.
    pub fn naive_count(a: &NoisyNeighborSet, b: &NoisyNeighborSet) -> f64 {
        intersection_size(&a.members, &b.members) as f64
    }

    /// OneR value from the noisy intersection size `n_inter`, union size
    /// `n_union` and opposite-layer size `n1`.
    pub fn oner_from_counts(n_inter: usize, n_union: usize, n1: usize, p: FlipProbability) -> f64 {
        let p = p.p();
        let q = 1.0 - p;
        let c2 = (1.0 - 2.0 * p).powi(2);
        let (i, u, n) = (n_inter as f64, n_union as f64, n1 as f64);
        (i * q * q - (u - i) * q * p + (n - u) * p * p) / c2
    }

    /// Unbiased count from two noisy lists perturbed with the same budget.
    pub fn oner_value(a: &NoisyNeighborSet, b: &NoisyNeighborSet) -> Result<f64> {
        if a.opposite_size != b.opposite_size || a.flip != b.flip {
            return Err(Error::validation(
                "noisy sets disagree on layer size or flip probability",
            ));
        }
        let inter = intersection_size(&a.members, &b.members);
        let union = a.len() + b.len() - inter;
        Ok(oner_from_counts(inter, union, a.opposite_size, a.flip))
    }

    /// Average of the reported degrees.
    pub fn mean_degree(reports: &[f64]) -> f64 {
        reports.iter().sum::<f64>() / reports.len() as f64
    }

    /// Replaces a non-positive noisy degree with the layer mean, then clamps to at least 1.
    pub fn working_degree(noisy: f64, mean: f64) -> f64 {
        let d = if noisy <= 0.0 { mean } else { noisy };
        d.max(1.0)
    }

    pub fn combine(alpha: f64, f_u: f64, f_w: f64) -> f64 {
        alpha * f_u + (1.0 - alpha) * f_w
    }
}

/// Vertex-side computations: each reads only the calling vertex's own list
/// plus whatever the curator delivered to it.
pub mod vertex {
    use rand::Rng;

    use crate::error::{Error, Result};
    use crate::graph::{BipartiteGraph, VertexRef};
    use crate::mechanisms::{phi, Laplace, NoisyNeighborSet, PrivacyBudget};

    /// `S1 = |N(u) ∩ N'(w)|`, `S2 = d_u - S1` and the pre-noise estimate
    /// `S1 (1-p)/(1-2p) - S2 p/(1-2p)`.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct LocalCounts {
        pub s1: usize,
        pub s2: usize,
        pub value: f64,
    }

    pub fn local_counts(
        g: &BipartiteGraph,
        u: VertexRef,
        noisy_w: &NoisyNeighborSet,
    ) -> Result<LocalCounts> {
        g.check_vertex(u)?;
        if noisy_w.owner.layer != u.layer || noisy_w.owner == u {
            return Err(Error::validation(
                "noisy list must belong to the other query vertex",
            ));
        }
        let own = g.neighbors(u);
        let s1 = crate::graph::intersection_size(own, &noisy_w.members);
        let s2 = own.len() - s1;
        let p = noisy_w.flip;
        let value = s1 as f64 * phi(true, p) + s2 as f64 * phi(false, p);
        Ok(LocalCounts { s1, s2, value })
    }

    /// The released single-source estimate: local counts plus Laplace noise
    /// calibrated to the sensitivity `(1-p)/(1-2p)` and budget `eps2`.
    pub fn single_source_release<R: Rng + ?Sized>(
        g: &BipartiteGraph,
        u: VertexRef,
        noisy_w: &NoisyNeighborSet,
        eps2: PrivacyBudget,
        rng: &mut R,
    ) -> Result<f64> {
        let counts = local_counts(g, u, noisy_w)?;
        let noise = Laplace::calibrated(noisy_w.flip.phi_sensitivity(), eps2)?;
        Ok(counts.value + noise.sample(rng))
    }

    /// Degree plus `Lap(1/eps0)`, drawn from the vertex's slot `bits`.
    pub fn noisy_degree(g: &BipartiteGraph, v: VertexRef, noise: &Laplace, bits: u64) -> f64 {
        g.degree(v) as f64 + noise.from_bits(bits)
    }
}

fn perturb_pair(
    g: &BipartiteGraph,
    q: &QueryPair,
    eps: PrivacyBudget,
    src: &RandomSource,
    round: u32,
    run: &mut Run,
) -> Result<(NoisyNeighborSet, NoisyNeighborSet)> {
    let (nu, nw) = run.timing.vertex(|| -> Result<_> {
        let nu = randomized_response(g, q.u, eps, &mut src.stream(q.u.stream_key(), round))?;
        let nw = randomized_response(g, q.w, eps, &mut src.stream(q.w.stream_key(), round))?;
        Ok((nu, nw))
    })?;
    for noisy in [&nu, &nw] {
        run.transcript
            .record(Message::noisy_edges(round, noisy.len()))?;
        run.ledger.spend(
            round,
            Mechanism::RandomizedResponse,
            eps.epsilon(),
            Composition::Parallel,
            1,
        );
    }
    Ok((nu, nw))
}

fn check_query(g: &BipartiteGraph, q: &QueryPair) -> Result<()> {
    QueryPair::new(q.u, q.w)?;
    g.check_pair(q)
}

/// Counts common neighbors directly on the noisy graph (biased upward on sparse graphs).
pub fn naive_estimate(
    g: &BipartiteGraph,
    q: &QueryPair,
    eps: PrivacyBudget,
    src: &RandomSource,
) -> Result<EstimateReport> {
    check_query(g, q)?;
    let mut run = Run::new(Algorithm::Naive, PrivacyModel::EdgeLdp);
    let (nu, nw) = perturb_pair(g, q, eps, src, 1, &mut run)?;
    let value = run.timing.curator(|| curator::naive_count(&nu, &nw));
    Ok(run.finish(value, None, false))
}

/// One-round unbiased estimator over the whole opposite layer.
pub fn oner_estimate(
    g: &BipartiteGraph,
    q: &QueryPair,
    eps: PrivacyBudget,
    src: &RandomSource,
) -> Result<EstimateReport> {
    check_query(g, q)?;
    let mut run = Run::new(Algorithm::OneR, PrivacyModel::EdgeLdp);
    let (nu, nw) = perturb_pair(g, q, eps, src, 1, &mut run)?;
    let value = run.timing.curator(|| curator::oner_value(&nu, &nw))?;
    Ok(run.finish(value, None, false))
}

fn split(eps: PrivacyBudget, eps1_fraction: f64) -> Result<(PrivacyBudget, PrivacyBudget)> {
    if !(eps1_fraction > 0.0 && eps1_fraction < 1.0) {
        return Err(Error::validation(format!(
            "eps1 fraction must lie in (0, 1), got {eps1_fraction}"
        )));
    }
    let e1 = eps.epsilon() * eps1_fraction;
    Ok((
        PrivacyBudget::new(e1)?,
        PrivacyBudget::new(eps.epsilon() - e1)?,
    ))
}

/// Two-round single-source estimator: `w` publishes a noisy list under
/// `eps1`, `u` combines it with its own neighbors and releases the sum with
/// Laplace noise under `eps2`.
pub fn single_source_estimate(
    g: &BipartiteGraph,
    q: &QueryPair,
    eps: PrivacyBudget,
    eps1_fraction: f64,
    src: &RandomSource,
) -> Result<EstimateReport> {
    check_query(g, q)?;
    let (eps1, eps2) = split(eps, eps1_fraction)?;
    let mut run = Run::new(Algorithm::SingleSource, PrivacyModel::EdgeLdp);

    let noisy_w = run
        .timing
        .vertex(|| randomized_response(g, q.w, eps1, &mut src.stream(q.w.stream_key(), 1)))?;
    run.transcript
        .record(Message::noisy_edges(1, noisy_w.len()))?;
    run.ledger.spend(
        1,
        Mechanism::RandomizedResponse,
        eps1.epsilon(),
        Composition::Sequential,
        1,
    );

    let value = run.timing.vertex(|| {
        vertex::single_source_release(g, q.u, &noisy_w, eps2, &mut src.stream(q.u.stream_key(), 2))
    })?;
    run.transcript.record(Message::estimator_report(2))?;
    run.ledger.spend(
        2,
        Mechanism::Laplace,
        eps2.epsilon(),
        Composition::Sequential,
        1,
    );

    let plan = BudgetPlan {
        eps0: 0.0,
        eps1: eps1.epsilon(),
        eps2: eps2.epsilon(),
        alpha: 1.0,
    };
    Ok(run.finish(value, Some(plan), false))
}

/// Result of the first round of the double-source algorithm: noisy degrees,
/// their corrections and the budget plan derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeRound {
    pub eps: f64,
    pub eps0: f64,
    /// Number of vertices on the query layer that reported.
    pub reporters: usize,
    pub noisy_du: f64,
    pub noisy_dw: f64,
    pub mean_degree: f64,
    pub working_du: f64,
    pub working_dw: f64,
    pub plan: BudgetPlan,
    pub fallback: bool,
    pub timing: PhaseTimes,
}

impl DegreeRound {
    /// Every query-layer vertex reports `degree + Lap(1/eps0)`; the curator
    /// corrects the query vertices' reports and optimizes the plan.
    pub fn run(
        g: &BipartiteGraph,
        q: &QueryPair,
        eps: PrivacyBudget,
        src: &RandomSource,
    ) -> Result<Self> {
        check_query(g, q)?;
        let total = eps.epsilon();
        let eps0 = PrivacyBudget::new(DEGREE_ROUND_SHARE * total)?;
        let noise = Laplace::calibrated(1.0, eps0)?;
        let layer = q.layer();
        let mut timing = PhaseTimes::default();

        let reports: Vec<f64> = timing.vertex(|| {
            let mut slots = src.slot_stream(1);
            (0..g.layer_size(layer) as u32)
                .map(|i| {
                    vertex::noisy_degree(g, VertexRef::new(layer, i), &noise, slots.next_u64())
                })
                .collect()
        });

        let (noisy_du, noisy_dw) = (reports[q.u.index as usize], reports[q.w.index as usize]);
        let (mean_degree, working_du, working_dw, plan, fallback) = timing.curator(|| {
            let mean = curator::mean_degree(&reports);
            let du = curator::working_degree(noisy_du, mean);
            let dw = curator::working_degree(noisy_dw, mean);
            let (plan, fallback) = match optimizer::optimize_plan(du, dw, total, eps0.epsilon()) {
                Ok(plan) => (plan, false),
                Err(_) => (fallback_plan(total, eps0.epsilon()), true),
            };
            (mean, du, dw, plan, fallback)
        });

        Ok(Self {
            eps: total,
            eps0: eps0.epsilon(),
            reporters: reports.len(),
            noisy_du,
            noisy_dw,
            mean_degree,
            working_du,
            working_dw,
            plan,
            fallback,
            timing,
        })
    }
}

/// Plan used when the optimizer fails: equal weights and an even split.
pub fn fallback_plan(eps: f64, eps0: f64) -> BudgetPlan {
    let half = 0.5 * (eps - eps0);
    BudgetPlan {
        eps0,
        eps1: half,
        eps2: eps - eps0 - half,
        alpha: 0.5,
    }
}

/// Three-round double-source estimator `alpha f_u + (1 - alpha) f_w`.
pub fn double_source_estimate(
    g: &BipartiteGraph,
    q: &QueryPair,
    eps: PrivacyBudget,
    src: &RandomSource,
) -> Result<EstimateReport> {
    let degrees = DegreeRound::run(g, q, eps, src)?;
    double_source_with_degrees(g, q, &degrees, src)
}

/// Rounds 2 and 3 of the double-source algorithm given an already executed
/// degree round. Round-1 messages and spend are still charged to the report.
pub fn double_source_with_degrees(
    g: &BipartiteGraph,
    q: &QueryPair,
    degrees: &DegreeRound,
    src: &RandomSource,
) -> Result<EstimateReport> {
    check_query(g, q)?;
    if degrees.reporters != g.layer_size(q.layer()) {
        return Err(Error::validation(
            "degree round was run on a different graph or layer",
        ));
    }
    let plan = degrees.plan;
    plan.validate(degrees.eps)?;
    let mut run = Run::new(Algorithm::DoubleSource, PrivacyModel::EdgeLdp);
    run.timing = degrees.timing;

    for _ in 0..degrees.reporters {
        run.transcript.record(Message::degree_report(1))?;
    }
    run.ledger.spend(
        1,
        Mechanism::Laplace,
        degrees.eps0,
        Composition::Parallel,
        degrees.reporters,
    );

    let eps1 = PrivacyBudget::new(plan.eps1)?;
    let eps2 = PrivacyBudget::new(plan.eps2)?;
    let (nu, nw) = perturb_pair(g, q, eps1, src, 2, &mut run)?;

    let (f_u, f_w) = run.timing.vertex(|| -> Result<_> {
        let f_u =
            vertex::single_source_release(g, q.u, &nw, eps2, &mut src.stream(q.u.stream_key(), 3))?;
        let f_w =
            vertex::single_source_release(g, q.w, &nu, eps2, &mut src.stream(q.w.stream_key(), 3))?;
        Ok((f_u, f_w))
    })?;
    for _ in 0..2 {
        run.transcript.record(Message::estimator_report(3))?;
        run.ledger.spend(
            3,
            Mechanism::Laplace,
            eps2.epsilon(),
            Composition::Parallel,
            1,
        );
    }

    let value = run
        .timing
        .curator(|| curator::combine(plan.alpha, f_u, f_w));
    Ok(run.finish(value, Some(plan), degrees.fallback))
}

/// Central-model baseline: exact count plus `Lap(1/eps)` added by a trusted curator.
pub fn central_dp_estimate(
    g: &BipartiteGraph,
    q: &QueryPair,
    eps: PrivacyBudget,
    src: &RandomSource,
) -> Result<EstimateReport> {
    check_query(g, q)?;
    let mut run = Run::new(Algorithm::Central, PrivacyModel::Central);
    let noise = Laplace::calibrated(1.0, eps)?;
    let value = run.timing.curator(|| -> Result<f64> {
        let exact = exact_common_neighbors(g, q)? as f64;
        Ok(exact + noise.sample(&mut src.stream(CURATOR_STREAM, 1)))
    })?;
    run.ledger.spend(
        1,
        Mechanism::CentralLaplace,
        eps.epsilon(),
        Composition::Sequential,
        1,
    );
    Ok(run.finish(value, None, false))
}

/// Tunables that only some algorithms read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub eps1_fraction: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            eps1_fraction: DEFAULT_EPS1_FRACTION,
        }
    }
}

pub fn estimate(
    algorithm: Algorithm,
    g: &BipartiteGraph,
    q: &QueryPair,
    eps: PrivacyBudget,
    options: &EstimatorOptions,
    src: &RandomSource,
) -> Result<EstimateReport> {
    match algorithm {
        Algorithm::Naive => naive_estimate(g, q, eps, src),
        Algorithm::OneR => oner_estimate(g, q, eps, src),
        Algorithm::SingleSource => single_source_estimate(g, q, eps, options.eps1_fraction, src),
        Algorithm::DoubleSource => double_source_estimate(g, q, eps, src),
        Algorithm::Central => central_dp_estimate(g, q, eps, src),
    }
}

/// Exact quantities of a query pair that the analytic loss models need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats {
    pub common: f64,
    pub d_u: f64,
    pub d_w: f64,
    /// Opposite-layer size.
    pub n1: f64,
    /// Query-layer size.
    pub n2: f64,
}

impl PairStats {
    pub fn of(g: &BipartiteGraph, q: &QueryPair) -> Result<Self> {
        Ok(Self {
            common: exact_common_neighbors(g, q)? as f64,
            d_u: g.degree(q.u) as f64,
            d_w: g.degree(q.w) as f64,
            n1: g.layer_size(q.layer().opposite()) as f64,
            n2: g.layer_size(q.layer()) as f64,
        })
    }
}

/// Expected squared error of `algorithm` on a pair. For the double-source
/// algorithm this is conditional on the realized `plan`.
pub fn analytic_loss(
    algorithm: Algorithm,
    stats: &PairStats,
    eps: f64,
    options: &EstimatorOptions,
    plan: Option<&BudgetPlan>,
) -> Result<f64> {
    let PairStats {
        common,
        d_u,
        d_w,
        n1,
        ..
    } = *stats;
    match algorithm {
        Algorithm::Naive => optimizer::naive_loss(common, d_u, d_w, n1, eps),
        Algorithm::OneR => optimizer::oner_loss(d_u, d_w, n1, eps),
        Algorithm::SingleSource => {
            let (e1, e2) = split(PrivacyBudget::new(eps)?, options.eps1_fraction)?;
            optimizer::ss_loss(d_u, e1.epsilon(), e2.epsilon())
        }
        Algorithm::DoubleSource => {
            let plan =
                plan.ok_or_else(|| Error::validation("double-source loss needs a budget plan"))?;
            optimizer::plan_loss(d_u, d_w, plan)
        }
        Algorithm::Central => optimizer::central_loss(eps),
    }
}

/// Chebyshev deviation bound: `P(|X - E X| >= radius) <= probability_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationBound {
    pub radius: f64,
    pub probability_bound: f64,
}

pub fn chebyshev_bound(variance: f64, k: f64) -> Result<DeviationBound> {
    if !(variance >= 0.0 && k > 0.0 && variance.is_finite() && k.is_finite()) {
        return Err(Error::validation(format!(
            "need variance >= 0 and k > 0, got {variance}, {k}"
        )));
    }
    Ok(DeviationBound {
        radius: k * variance.sqrt(),
        probability_bound: 1.0 / (k * k),
    })
}

/// Budget of an algorithm's randomized-response round, if it has one.
pub fn rr_epsilon(
    algorithm: Algorithm,
    eps: f64,
    options: &EstimatorOptions,
    plan: Option<&BudgetPlan>,
) -> Option<f64> {
    match algorithm {
        Algorithm::Naive | Algorithm::OneR => Some(eps),
        Algorithm::SingleSource => Some(eps * options.eps1_fraction),
        Algorithm::DoubleSource => plan.map(|p| p.eps1),
        Algorithm::Central => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_synthetic;
    use crate::mechanisms::{flip_probability_of, phi};

    fn budget(e: f64) -> PrivacyBudget {
        PrivacyBudget::new(e).unwrap()
    }

    fn example() -> (BipartiteGraph, QueryPair) {
        let edges = [
            (0, 0),
            (0, 1),
            (0, 3),
            (1, 0),
            (1, 1),
            (1, 3),
            (1, 99),
            (2, 2),
            (2, 50),
        ];
        let g = BipartiteGraph::from_edges(3, 100, edges).unwrap();
        let q = QueryPair::new(VertexRef::upper(0), VertexRef::upper(1)).unwrap();
        (g, q)
    }

    #[test]
    fn large_epsilon_recovers_truth() {
        let (g, q) = example();
        let src = RandomSource::new(3);
        let eps = budget(1e6);
        for algo in Algorithm::ALL {
            let r = estimate(algo, &g, &q, eps, &EstimatorOptions::default(), &src).unwrap();
            assert!((r.value - 3.0).abs() < 1e-3, "{algo}: {}", r.value);
        }
    }

    #[test]
    fn oner_expansion_example() {
        // N1 = 2, N2 = 5, n1 = 10, p = 0.25 -> 3.5
        let p = flip_probability_of(3f64.ln()).unwrap();
        assert!((curator::oner_from_counts(2, 5, 10, p) - 3.5).abs() < 1e-12);
        let u = VertexRef::upper(0);
        let w = VertexRef::upper(1);
        let eps = budget(3f64.ln());
        let a = NoisyNeighborSet::from_members(u, eps, 10, vec![1, 2, 3]).unwrap();
        let b = NoisyNeighborSet::from_members(w, eps, 10, vec![2, 3, 7, 9]).unwrap();
        let direct: f64 = (0..10).map(|j| phi(a.bit(j), p) * phi(b.bit(j), p)).sum();
        assert!((curator::oner_value(&a, &b).unwrap() - direct).abs() < 1e-12);
        assert!((direct - 3.5).abs() < 1e-12);
    }

    #[test]
    fn oner_rejects_mismatched_sets() {
        let u = VertexRef::upper(0);
        let a = NoisyNeighborSet::from_members(u, budget(1.0), 10, vec![1]).unwrap();
        let b =
            NoisyNeighborSet::from_members(VertexRef::upper(1), budget(2.0), 10, vec![1]).unwrap();
        assert!(curator::oner_value(&a, &b).is_err());
    }

    #[test]
    fn single_source_local_counts_match_phi_sum() {
        // d_u = 3, two of u's neighbors appear in w's noisy list.
        let g =
            BipartiteGraph::from_edges(2, 10, [(0, 1), (0, 4), (0, 6), (1, 1), (1, 2)]).unwrap();
        let (u, w) = (VertexRef::upper(0), VertexRef::upper(1));
        let eps1 = budget(3f64.ln());
        let noisy_w = NoisyNeighborSet::from_members(w, eps1, 10, vec![1, 6, 8]).unwrap();
        let counts = vertex::local_counts(&g, u, &noisy_w).unwrap();
        assert_eq!((counts.s1, counts.s2), (2, 1));
        assert!((counts.value - 2.5).abs() < 1e-12);
        let direct: f64 = g
            .neighbors(u)
            .iter()
            .map(|&v| phi(noisy_w.bit(v), noisy_w.flip))
            .sum();
        assert!((counts.value - direct).abs() < 1e-12);
        let scale = Laplace::calibrated(noisy_w.flip.phi_sensitivity(), budget(1.0))
            .unwrap()
            .scale();
        assert!((scale - 1.5).abs() < 1e-12);
    }

    #[test]
    fn local_counts_reject_own_list() {
        let (g, q) = example();
        let own = NoisyNeighborSet::from_members(q.u, budget(1.0), 100, vec![]).unwrap();
        assert!(vertex::local_counts(&g, q.u, &own).is_err());
    }

    #[test]
    fn ledgers_total_epsilon() {
        let g = generate_synthetic(60, 60, 0.1, 2).unwrap();
        let q = QueryPair::new(VertexRef::lower(1), VertexRef::lower(2)).unwrap();
        let src = RandomSource::new(10);
        for eps in [0.5, 1.0, 2.0, 3.0] {
            for algo in Algorithm::ALL {
                let r = estimate(
                    algo,
                    &g,
                    &q,
                    budget(eps),
                    &EstimatorOptions { eps1_fraction: 0.3 },
                    &src,
                )
                .unwrap();
                assert!((r.ledger.total() - eps).abs() < 1e-9, "{algo} at {eps}");
                assert_eq!(r.comm_bytes, r.transcript.total_bytes());
                assert_eq!(r.rounds, algo.rounds());
                if algo == Algorithm::DoubleSource {
                    let plan = r.plan.unwrap();
                    plan.validate(eps).unwrap();
                    assert!((plan.eps0 - 0.05 * eps).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transcripts_have_expected_rounds() {
        let g = generate_synthetic(40, 30, 0.2, 5).unwrap();
        let q = QueryPair::new(VertexRef::upper(1), VertexRef::upper(2)).unwrap();
        let src = RandomSource::new(4);
        let eps = budget(2.0);
        let opts = EstimatorOptions::default();
        let ds = estimate(Algorithm::DoubleSource, &g, &q, eps, &opts, &src).unwrap();
        assert_eq!(ds.transcript.rounds(), 3);
        let reports = ds
            .transcript
            .messages()
            .iter()
            .filter(|m| m.round == 1)
            .count();
        assert_eq!(reports, 40);
        let ss = estimate(Algorithm::SingleSource, &g, &q, eps, &opts, &src).unwrap();
        assert_eq!(ss.transcript.rounds(), 2);
        for algo in [Algorithm::Naive, Algorithm::OneR] {
            assert_eq!(
                estimate(algo, &g, &q, eps, &opts, &src)
                    .unwrap()
                    .transcript
                    .rounds(),
                1
            );
        }
        let central = estimate(Algorithm::Central, &g, &q, eps, &opts, &src).unwrap();
        assert_eq!(central.comm_bytes, 0);
    }

    #[test]
    fn estimates_are_deterministic() {
        let (g, q) = example();
        let src = RandomSource::new(99).with_trial(4);
        for algo in Algorithm::ALL {
            let a = estimate(
                algo,
                &g,
                &q,
                budget(1.0),
                &EstimatorOptions::default(),
                &src,
            )
            .unwrap();
            let b = estimate(
                algo,
                &g,
                &q,
                budget(1.0),
                &EstimatorOptions::default(),
                &src,
            )
            .unwrap();
            assert_eq!(a.value.to_bits(), b.value.to_bits());
            assert_eq!(a.transcript, b.transcript);
        }
    }

    #[test]
    fn eps1_fraction_validated() {
        let (g, q) = example();
        let src = RandomSource::new(1);
        for f in [0.0, 1.0, -0.2, 1.3] {
            assert!(single_source_estimate(&g, &q, budget(1.0), f, &src).is_err());
        }
    }

    #[test]
    fn double_source_weighting() {
        assert_eq!(curator::combine(1.0, 3.25, -8.0), 3.25);
        assert_eq!(curator::combine(0.0, 3.25, -8.0), -8.0);
        assert!((curator::combine(0.25, 4.0, 8.0) - 7.0).abs() < 1e-15);
    }

    #[test]
    fn degree_correction() {
        assert_eq!(curator::working_degree(-3.0, 7.5), 7.5);
        assert_eq!(curator::working_degree(0.0, 7.5), 7.5);
        assert_eq!(curator::working_degree(0.4, 7.5), 1.0);
        assert_eq!(curator::working_degree(-1.0, -2.0), 1.0);
        assert_eq!(curator::working_degree(12.5, 7.5), 12.5);
    }

    #[test]
    fn degree_round_reuse_pins_plan() {
        let g = generate_synthetic(50, 50, 0.1, 8).unwrap();
        let q = QueryPair::new(VertexRef::upper(3), VertexRef::upper(9)).unwrap();
        let deg = DegreeRound::run(&g, &q, budget(2.0), &RandomSource::new(5)).unwrap();
        let a =
            double_source_with_degrees(&g, &q, &deg, &RandomSource::new(5).with_trial(1)).unwrap();
        let b =
            double_source_with_degrees(&g, &q, &deg, &RandomSource::new(5).with_trial(2)).unwrap();
        assert_eq!(a.plan, b.plan);
        assert_ne!(a.value, b.value);
        let other = generate_synthetic(40, 50, 0.1, 8).unwrap();
        assert!(double_source_with_degrees(&other, &q, &deg, &RandomSource::new(5)).is_err());
    }

    #[test]
    fn imbalanced_pair_weights_low_degree_side() {
        // u has degree 556, w has degree 2.
        let mut edges: Vec<(u32, u32)> = (0..556).map(|l| (0u32, l)).collect();
        edges.extend([(1, 0), (1, 1)]);
        let g = BipartiteGraph::from_edges(2, 2000, edges).unwrap();
        let q = QueryPair::new(VertexRef::upper(0), VertexRef::upper(1)).unwrap();
        let r = double_source_estimate(&g, &q, budget(2.0), &RandomSource::new(12)).unwrap();
        // with two reporters d' is the mean of both reports, so allow a few seeds
        let plan = r.plan.unwrap();
        assert!(1.0 - plan.alpha > 0.5, "alpha = {}", plan.alpha);
    }

    #[test]
    fn chebyshev_values() {
        let b = chebyshev_bound(4.0, 2.0).unwrap();
        assert_eq!((b.radius, b.probability_bound), (4.0, 0.25));
        let b = chebyshev_bound(0.0, 10.0).unwrap();
        assert_eq!(b.radius, 0.0);
        assert!((b.probability_bound - 0.01).abs() < 1e-15);
        assert!(chebyshev_bound(-1.0, 1.0).is_err());
        assert!(chebyshev_bound(1.0, 0.0).is_err());
    }

    #[test]
    fn algorithm_tags_round_trip() {
        for algo in Algorithm::ALL {
            assert_eq!(algo.tag().parse::<Algorithm>().unwrap(), algo);
        }
        assert!("bogus".parse::<Algorithm>().is_err());
    }
}
