//! Benchmark harness: sampled query pairs, repeated trials, per-row metrics and
//! per-algorithm summaries.
//!
//! Rows are a deterministic function of the graph, the configuration and the
//! seed. Trials run on the rayon pool; each (pair, algorithm, trial) owns its
//! random streams, and results are collected in (epsilon, pair, algorithm,
//! trial) order regardless of completion order. Wall times are the only
//! nondeterministic output and are written as `#` comment lines.

use std::io::Write;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    analytic_loss, estimate, Algorithm, EstimatorOptions, PairStats, PhaseTimes,
};
use crate::graph::{sample_query_pairs, BipartiteGraph, Layer, QueryPair};
use crate::mechanisms::PrivacyBudget;
use crate::rng::{derive_seed, RandomSource};

/// Tag mixed into the seed used for pair sampling, so it never collides with a
/// per-(pair, algorithm) seed.
const PAIR_SAMPLING_TAG: u64 = 0x7061_6972;

pub const MIN_DISTRIBUTION_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithms: Vec<Algorithm>,
    pub epsilons: Vec<f64>,
    pub pairs: usize,
    pub kappa: Option<f64>,
    pub trials_per_pair: usize,
    pub seed: u64,
    pub layer: Layer,
    pub eps1_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            epsilons: vec![2.0],
            pairs: 100,
            kappa: None,
            trials_per_pair: 1,
            seed: 0,
            layer: Layer::Upper,
            eps1_fraction: crate::estimators::DEFAULT_EPS1_FRACTION,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::validation("at least one algorithm is required"));
        }
        if self.epsilons.is_empty() {
            return Err(Error::validation("at least one epsilon is required"));
        }
        for &e in &self.epsilons {
            PrivacyBudget::new(e)?;
        }
        if self.pairs == 0 {
            return Err(Error::validation("pairs must be at least 1"));
        }
        if self.trials_per_pair == 0 {
            return Err(Error::validation("trials per pair must be at least 1"));
        }
        check_fraction(self.eps1_fraction)
    }

    fn options(&self) -> EstimatorOptions {
        EstimatorOptions {
            eps1_fraction: self.eps1_fraction,
        }
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "eps1 fraction must lie in (0, 1), got {f}"
        )))
    }
}

/// One estimate. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub algo: Algorithm,
    pub epsilon: f64,
    pub u_id: u64,
    pub w_id: u64,
    pub true_c2: u64,
    pub estimate: f64,
    pub abs_error: f64,
    pub comm_bytes: u64,
    pub eps0: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub alpha: Option<f64>,
    pub trial: u64,
    pub seed: u64,
    /// Expected squared error under the loss model; conditional on the
    /// realized plan for `ds`.
    pub analytic_loss: f64,
}

/// An algorithm together with the tunables it reads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub algorithm: Algorithm,
    pub options: EstimatorOptions,
}

impl Variant {
    /// Fraction column for summaries; only meaningful for `ss`.
    fn eps1_fraction(&self) -> Option<f64> {
        (self.algorithm == Algorithm::SingleSource).then_some(self.options.eps1_fraction)
    }
}

/// Aggregate over all rows of one (variant, epsilon).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algo: Algorithm,
    pub epsilon: f64,
    pub eps1_fraction: Option<f64>,
    pub rows: usize,
    pub mae: f64,
    pub mean_l2: f64,
    pub mean_comm_bytes: f64,
    pub mean_analytic_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    #[serde(flatten)]
    pub row: SummaryRow,
    pub vertex_secs: f64,
    pub curator_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairInfo {
    pub u_id: u64,
    pub w_id: u64,
    pub true_c2: u64,
    pub d_u: u64,
    pub d_w: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchOutput {
    pub pairs: Vec<PairInfo>,
    pub rows: Vec<MetricRow>,
    pub summaries: Vec<Summary>,
}

/// Seed owned by one (pair, algorithm) combination.
pub fn pair_seed(master: u64, pair_index: usize, algorithm: Algorithm) -> u64 {
    derive_seed(&[master, pair_index as u64, algorithm as u64])
}

/// The query pairs a benchmark with this configuration runs on.
pub fn sample_pairs(g: &BipartiteGraph, config: &RunConfig) -> Result<Vec<QueryPair>> {
    sample_query_pairs(
        g,
        config.layer,
        config.pairs,
        config.kappa,
        derive_seed(&[config.seed, PAIR_SAMPLING_TAG]),
    )
}

fn run_trial(
    g: &BipartiteGraph,
    q: &QueryPair,
    stats: &PairStats,
    variant: &Variant,
    eps: f64,
    seed: u64,
    trial: u64,
) -> Result<(MetricRow, PhaseTimes)> {
    let budget = PrivacyBudget::new(eps)?;
    let src = RandomSource::new(seed).with_trial(trial);
    let report = estimate(variant.algorithm, g, q, budget, &variant.options, &src)?;
    let loss = analytic_loss(
        variant.algorithm,
        stats,
        eps,
        &variant.options,
        report.plan.as_ref(),
    )?;
    let (eps0, eps1, eps2, alpha) = match (variant.algorithm, report.plan) {
        (Algorithm::Naive | Algorithm::OneR, _) => (None, Some(eps), None, None),
        (_, Some(p)) => (Some(p.eps0), Some(p.eps1), Some(p.eps2), Some(p.alpha)),
        (_, None) => (None, None, None, None),
    };
    let row = MetricRow {
        algo: variant.algorithm,
        epsilon: eps,
        u_id: q.u.external_id(),
        w_id: q.w.external_id(),
        true_c2: stats.common as u64,
        estimate: report.value,
        abs_error: (report.value - stats.common).abs(),
        comm_bytes: report.comm_bytes,
        eps0,
        eps1,
        eps2,
        alpha,
        trial,
        seed,
        analytic_loss: loss,
    };
    Ok((row, report.timing))
}

/// Runs every variant at every epsilon on the given pairs.
pub fn run_on_pairs(
    g: &BipartiteGraph,
    pairs: &[QueryPair],
    variants: &[Variant],
    epsilons: &[f64],
    trials_per_pair: usize,
    seed: u64,
) -> Result<BenchOutput> {
    if variants.is_empty() || epsilons.is_empty() || pairs.is_empty() || trials_per_pair == 0 {
        return Err(Error::validation(
            "benchmark needs pairs, variants, epsilons and trials",
        ));
    }
    let stats = pairs
        .iter()
        .map(|q| PairStats::of(g, q))
        .collect::<Result<Vec<_>>>()?;

    let trials = trials_per_pair as u64;
    let per_eps = pairs.len() * variants.len() * trials_per_pair;
    let jobs = epsilons.len() * per_eps;
    let results: Vec<(MetricRow, PhaseTimes)> = (0..jobs)
        .into_par_iter()
        .map(|job| {
            let (e, rest) = (job / per_eps, job % per_eps);
            let trial = (rest % trials_per_pair) as u64;
            let rest = rest / trials_per_pair;
            let (p, v) = (rest / variants.len(), rest % variants.len());
            let variant = &variants[v];
            let seed = pair_seed(seed, p, variant.algorithm);
            run_trial(g, &pairs[p], &stats[p], variant, epsilons[e], seed, trial)
        })
        .collect::<Result<_>>()?;
    debug_assert!(
        results.len() as u64
            == epsilons.len() as u64 * pairs.len() as u64 * variants.len() as u64 * trials
    );

    let mut summaries = Vec::new();
    for (e, &eps) in epsilons.iter().enumerate() {
        for (v, variant) in variants.iter().enumerate() {
            let selected = results[e * per_eps..(e + 1) * per_eps]
                .iter()
                .enumerate()
                .filter(|(i, _)| (i / trials_per_pair) % variants.len() == v)
                .map(|(_, r)| r);
            summaries.push(summarize(variant, eps, selected));
        }
    }

    let pairs = pairs
        .iter()
        .zip(&stats)
        .map(|(q, s)| PairInfo {
            u_id: q.u.external_id(),
            w_id: q.w.external_id(),
            true_c2: s.common as u64,
            d_u: s.d_u as u64,
            d_w: s.d_w as u64,
        })
        .collect();
    let rows = results.into_iter().map(|(row, _)| row).collect();
    Ok(BenchOutput {
        pairs,
        rows,
        summaries,
    })
}

fn summarize<'a>(
    variant: &Variant,
    eps: f64,
    rows: impl Iterator<Item = &'a (MetricRow, PhaseTimes)>,
) -> Summary {
    let (mut n, mut abs, mut sq, mut bytes, mut loss) = (0usize, 0.0, 0.0, 0.0, 0.0);
    let (mut vertex, mut curator) = (Duration::ZERO, Duration::ZERO);
    for (row, t) in rows {
        n += 1;
        abs += row.abs_error;
        sq += row.abs_error * row.abs_error;
        bytes += row.comm_bytes as f64;
        loss += row.analytic_loss;
        vertex += t.vertex;
        curator += t.curator;
    }
    let k = n as f64;
    Summary {
        row: SummaryRow {
            algo: variant.algorithm,
            epsilon: eps,
            eps1_fraction: variant.eps1_fraction(),
            rows: n,
            mae: abs / k,
            mean_l2: sq / k,
            mean_comm_bytes: bytes / k,
            mean_analytic_loss: loss / k,
        },
        vertex_secs: vertex.as_secs_f64(),
        curator_secs: curator.as_secs_f64(),
    }
}

fn variants(config: &RunConfig) -> Vec<Variant> {
    config
        .algorithms
        .iter()
        .map(|&algorithm| Variant {
            algorithm,
            options: config.options(),
        })
        .collect()
}

/// Samples `config.pairs` pairs and runs every algorithm and epsilon on them.
pub fn run_bench(g: &BipartiteGraph, config: &RunConfig) -> Result<BenchOutput> {
    config.validate()?;
    let pairs = sample_pairs(g, config)?;
    run_on_pairs(
        g,
        &pairs,
        &variants(config),
        &config.epsilons,
        config.trials_per_pair,
        config.seed,
    )
}

/// Like [`run_bench`], but `ss` runs once per entry of `eps1_fractions`.
/// Needs at least two epsilons or at least two fractions.
pub fn run_sweep(
    g: &BipartiteGraph,
    config: &RunConfig,
    eps1_fractions: &[f64],
) -> Result<BenchOutput> {
    config.validate()?;
    if config.epsilons.len() < 2 && eps1_fractions.len() < 2 {
        return Err(Error::validation(
            "a sweep needs at least two epsilons or two eps1 fractions",
        ));
    }
    for &f in eps1_fractions {
        check_fraction(f)?;
    }
    let mut list = Vec::new();
    for v in variants(config) {
        if v.algorithm == Algorithm::SingleSource && !eps1_fractions.is_empty() {
            list.extend(eps1_fractions.iter().map(|&f| Variant {
                algorithm: v.algorithm,
                options: EstimatorOptions { eps1_fraction: f },
            }));
        } else {
            list.push(v);
        }
    }
    let pairs = sample_pairs(g, config)?;
    run_on_pairs(
        g,
        &pairs,
        &list,
        &config.epsilons,
        config.trials_per_pair,
        config.seed,
    )
}

/// Runs `config.trials_per_pair` trials of every algorithm on one explicit pair.
pub fn run_pair(g: &BipartiteGraph, q: &QueryPair, config: &RunConfig) -> Result<BenchOutput> {
    config.validate()?;
    run_on_pairs(
        g,
        &[*q],
        &variants(config),
        &config.epsilons,
        config.trials_per_pair,
        config.seed,
    )
}

/// Per-trial estimates on one pair for external histogramming.
pub fn run_distribution(
    g: &BipartiteGraph,
    q: &QueryPair,
    config: &RunConfig,
) -> Result<BenchOutput> {
    if config.trials_per_pair < MIN_DISTRIBUTION_TRIALS {
        return Err(Error::validation(format!(
            "a distribution needs at least {MIN_DISTRIBUTION_TRIALS} trials, got {}",
            config.trials_per_pair
        )));
    }
    run_pair(g, q, config)
}

/// Writes rows as CSV with a header in [`MetricRow`] field order.
pub fn write_rows_csv(rows: &[MetricRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(METRIC_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const METRIC_COLUMNS: [&str; 15] = [
    "algo",
    "epsilon",
    "u_id",
    "w_id",
    "true_c2",
    "estimate",
    "abs_error",
    "comm_bytes",
    "eps0",
    "eps1",
    "eps2",
    "alpha",
    "trial",
    "seed",
    "analytic_loss",
];

fn summary_csv(rows: impl Iterator<Item = SummaryRow>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes summaries as `#`-prefixed CSV lines, followed by one wall-time
/// comment per summary.
pub fn write_summary_block(summaries: &[Summary], mut out: impl Write) -> Result<()> {
    let body = summary_csv(summaries.iter().map(|s| s.row.clone()))?;
    for line in body.lines() {
        writeln!(out, "# {line}")?;
    }
    write_timing_comments(summaries, out)
}

/// Writes summaries as a plain CSV table, wall times as trailing comments.
pub fn write_summary_csv(summaries: &[Summary], mut out: impl Write) -> Result<()> {
    out.write_all(summary_csv(summaries.iter().map(|s| s.row.clone()))?.as_bytes())?;
    write_timing_comments(summaries, out)
}

fn write_timing_comments(summaries: &[Summary], mut out: impl Write) -> Result<()> {
    for s in summaries {
        let fraction = s
            .row
            .eps1_fraction
            .map(|f| format!(" eps1_fraction={f}"))
            .unwrap_or_default();
        writeln!(
            out,
            "# wall_time algo={} epsilon={}{fraction} vertex_secs={:.6} curator_secs={:.6}",
            s.row.algo, s.row.epsilon, s.vertex_secs, s.curator_secs
        )?;
    }
    Ok(())
}

pub fn write_json(output: &BenchOutput, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, output)?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, VertexRef};

    fn small() -> BipartiteGraph {
        generate_synthetic(80, 80, 0.08, 21).unwrap()
    }

    fn config() -> RunConfig {
        RunConfig {
            pairs: 6,
            trials_per_pair: 3,
            seed: 17,
            ..RunConfig::default()
        }
    }

    #[test]
    fn rows_are_ordered_and_complete() {
        let g = small();
        let out = run_bench(&g, &config()).unwrap();
        assert_eq!(out.rows.len(), 6 * 5 * 3);
        assert_eq!(out.summaries.len(), 5);
        let mut i = 0;
        for pair in &out.pairs {
            for algo in Algorithm::ALL {
                for trial in 0..3 {
                    let r = &out.rows[i];
                    assert_eq!(
                        (r.u_id, r.w_id, r.algo, r.trial),
                        (pair.u_id, pair.w_id, algo, trial)
                    );
                    assert_eq!(r.abs_error, (r.estimate - r.true_c2 as f64).abs());
                    i += 1;
                }
            }
        }
    }

    #[test]
    fn bench_is_deterministic() {
        let g = small();
        let a = run_bench(&g, &config()).unwrap();
        let b = run_bench(&g, &config()).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(
            a.summaries.iter().map(|s| &s.row).collect::<Vec<_>>(),
            b.summaries.iter().map(|s| &s.row).collect::<Vec<_>>()
        );
        let other = run_bench(
            &g,
            &RunConfig {
                seed: 18,
                ..config()
            },
        )
        .unwrap();
        assert_ne!(a.rows, other.rows);
    }

    #[test]
    fn algorithms_share_pairs_and_epsilons_share_seeds() {
        let g = small();
        let cfg = RunConfig {
            epsilons: vec![1.0, 2.0],
            ..config()
        };
        let out = run_bench(&g, &cfg).unwrap();
        let half = out.rows.len() / 2;
        for (a, b) in out.rows[..half].iter().zip(&out.rows[half..]) {
            assert_eq!(
                (a.u_id, a.w_id, a.algo, a.trial, a.seed),
                (b.u_id, b.w_id, b.algo, b.trial, b.seed)
            );
            assert_eq!((a.epsilon, b.epsilon), (1.0, 2.0));
        }
    }

    #[test]
    fn csv_header_matches_columns() {
        let g = small();
        let out = run_bench(
            &g,
            &RunConfig {
                pairs: 1,
                trials_per_pair: 1,
                ..config()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_rows_csv(&out.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRIC_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 1 + 5);
        let mut empty = Vec::new();
        write_rows_csv(&[], &mut empty).unwrap();
        assert_eq!(
            String::from_utf8(empty).unwrap().trim_end(),
            METRIC_COLUMNS.join(",")
        );
    }

    #[test]
    fn summary_block_is_commented() {
        let g = small();
        let out = run_bench(&g, &config()).unwrap();
        let mut buf = Vec::new();
        write_summary_block(&out.summaries, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l.starts_with('#')));
        assert!(text.contains("mae"));
        assert!(text.contains("vertex_secs"));
    }

    #[test]
    fn config_validation() {
        let g = small();
        for bad in [
            RunConfig {
                pairs: 0,
                ..config()
            },
            RunConfig {
                trials_per_pair: 0,
                ..config()
            },
            RunConfig {
                epsilons: vec![2.0, -1.0],
                ..config()
            },
            RunConfig {
                epsilons: vec![],
                ..config()
            },
            RunConfig {
                algorithms: vec![],
                ..config()
            },
            RunConfig {
                eps1_fraction: 1.0,
                ..config()
            },
        ] {
            assert!(run_bench(&g, &bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn sweep_requires_two_points() {
        let g = small();
        assert!(run_sweep(&g, &config(), &[]).is_err());
        assert!(run_sweep(&g, &config(), &[0.3]).is_err());
        let out = run_sweep(&g, &config(), &[0.3, 0.6]).unwrap();
        let ss = out
            .summaries
            .iter()
            .filter(|s| s.row.algo == Algorithm::SingleSource)
            .count();
        assert_eq!(ss, 2);
        assert_eq!(out.summaries.len(), 6);
    }

    #[test]
    fn distribution_needs_trials() {
        let g = small();
        let q = QueryPair::new(VertexRef::upper(0), VertexRef::upper(1)).unwrap();
        assert!(run_distribution(&g, &q, &config()).is_err());
        let cfg = RunConfig {
            trials_per_pair: 100,
            algorithms: vec![Algorithm::OneR, Algorithm::Central],
            ..config()
        };
        let out = run_distribution(&g, &q, &cfg).unwrap();
        assert_eq!(out.rows.len(), 200);
    }
}
