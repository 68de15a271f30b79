//! Edge-LDP primitives: randomized response over a neighbor list, the Laplace
//! mechanism, and the unbiased single-entry estimator `phi`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, VertexRef};
use crate::rng::bernoulli_indices;

/// A strictly positive, finite privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon > 0.0 && epsilon.is_finite() {
            Ok(Self(epsilon))
        } else {
            Err(Error::validation(format!(
                "privacy budget must be finite and > 0, got {epsilon}"
            )))
        }
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }
}

/// Randomized-response flip probability `p = 1 / (1 + e^eps)`, always in (0, 1/2).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FlipProbability(f64);

impl FlipProbability {
    pub fn p(self) -> f64 {
        self.0
    }

    /// `1 - 2p`, the contraction factor that `phi` undoes.
    pub fn contraction(self) -> f64 {
        1.0 - 2.0 * self.0
    }

    /// Variance of one `phi` term: `p(1-p)/(1-2p)^2`.
    pub fn phi_variance(self) -> f64 {
        let p = self.0;
        p * (1.0 - p) / (self.contraction() * self.contraction())
    }

    /// Largest `|phi|`, `(1-p)/(1-2p)`: the sensitivity of a sum of `phi` terms
    /// to one neighbor-list bit.
    pub fn phi_sensitivity(self) -> f64 {
        (1.0 - self.0) / self.contraction()
    }
}

pub fn flip_probability(eps: PrivacyBudget) -> FlipProbability {
    // 1/(1+e^eps) written to stay accurate for large eps.
    let e = (-eps.0).exp();
    FlipProbability(e / (1.0 + e))
}

/// Checked variant of [`flip_probability`] for raw epsilons.
pub fn flip_probability_of(epsilon: f64) -> Result<FlipProbability> {
    PrivacyBudget::new(epsilon).map(flip_probability)
}

/// `P(output bit | input bit)` under randomized response.
pub fn rr_output_probability(input: bool, output: bool, p: FlipProbability) -> f64 {
    if input == output {
        1.0 - p.0
    } else {
        p.0
    }
}

/// Worst-case likelihood ratio between the two inputs of one entry, over both outputs.
pub fn rr_privacy_ratio(p: FlipProbability) -> f64 {
    [false, true]
        .iter()
        .flat_map(|&out| {
            let a = rr_output_probability(true, out, p);
            let b = rr_output_probability(false, out, p);
            [a / b, b / a]
        })
        .fold(0.0, f64::max)
}

/// One perturbed neighbor list: row `owner` of the noisy adjacency restricted
/// to the opposite layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyNeighborSet {
    pub owner: VertexRef,
    pub epsilon_used: PrivacyBudget,
    pub flip: FlipProbability,
    /// Size of the opposite layer (public).
    pub opposite_size: usize,
    /// Sorted, deduplicated opposite-layer indices reported as neighbors.
    pub members: Vec<u32>,
}

impl NoisyNeighborSet {
    /// Builds a set from already-noisy members (e.g. replayed or hand-constructed).
    pub fn from_members(
        owner: VertexRef,
        epsilon_used: PrivacyBudget,
        opposite_size: usize,
        mut members: Vec<u32>,
    ) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.last().is_some_and(|&m| m as usize >= opposite_size) {
            return Err(Error::validation("noisy member outside the opposite layer"));
        }
        Ok(Self {
            owner,
            epsilon_used,
            flip: flip_probability(epsilon_used),
            opposite_size,
            members,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, j: u32) -> bool {
        self.members.binary_search(&j).is_ok()
    }

    /// The noisy bit for opposite-layer vertex `j`.
    pub fn bit(&self, j: u32) -> bool {
        self.contains(j)
    }
}

/// Perturbs every opposite-layer entry of `v`'s adjacency row: each bit is
/// flipped independently with probability `1/(1+e^eps)`.
pub fn randomized_response<R: Rng + ?Sized>(
    g: &BipartiteGraph,
    v: VertexRef,
    eps: PrivacyBudget,
    rng: &mut R,
) -> Result<NoisyNeighborSet> {
    g.check_vertex(v)?;
    let flip = flip_probability(eps);
    let p = flip.p();
    let neighbors = g.neighbors(v);
    let n_opp = g.layer_size(v.layer.opposite());

    let kept: Vec<u32> = neighbors
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() >= p)
        .collect();

    // 0 -> 1 flips, sampled over the whole row and filtered to the true non-neighbors.
    let mut spurious = Vec::new();
    let mut cursor = 0usize;
    bernoulli_indices(rng, n_opp as u64, p, |j| {
        let j = j as u32;
        while cursor < neighbors.len() && neighbors[cursor] < j {
            cursor += 1;
        }
        if cursor == neighbors.len() || neighbors[cursor] != j {
            spurious.push(j);
        }
    });

    let mut members = Vec::with_capacity(kept.len() + spurious.len());
    let (mut a, mut b) = (kept.iter().peekable(), spurious.iter().peekable());
    loop {
        let next = match (a.peek(), b.peek()) {
            (Some(&&x), Some(&&y)) if x < y => a.next(),
            (Some(_), Some(_)) => b.next(),
            (Some(_), None) => a.next(),
            (None, Some(_)) => b.next(),
            (None, None) => break,
        };
        members.push(*next.unwrap());
    }

    Ok(NoisyNeighborSet {
        owner: v,
        epsilon_used: eps,
        flip,
        opposite_size: n_opp,
        members,
    })
}

/// Zero-mean Laplace distribution with a validated scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Laplace {
    scale: f64,
}

impl Laplace {
    pub fn new(scale: f64) -> Result<Self> {
        if scale > 0.0 && scale.is_finite() {
            Ok(Self { scale })
        } else {
            Err(Error::validation(format!(
                "Laplace scale must be finite and > 0, got {scale}"
            )))
        }
    }

    /// Calibrated noise for a statistic with the given sensitivity and budget.
    pub fn calibrated(sensitivity: f64, eps: PrivacyBudget) -> Result<Self> {
        Self::new(sensitivity / eps.epsilon())
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.scale * self.scale
    }

    pub fn density(&self, x: f64) -> f64 {
        (-x.abs() / self.scale).exp() / (2.0 * self.scale)
    }

    /// Inverse transform of `u` in (-1/2, 1/2).
    pub fn from_uniform(&self, u: f64) -> f64 {
        -self.scale * sign(u) * (1.0 - 2.0 * u.abs()).ln()
    }

    /// Maps 64 random bits to a draw. The top 52 bits select `u = (k + 1/2) / 2^52 - 1/2`,
    /// which lies strictly inside (-1/2, 1/2) and is symmetric about 0.
    pub fn from_bits(&self, bits: u64) -> f64 {
        let k = (bits >> 12) as f64;
        self.from_uniform((k + 0.5) / (1u64 << 52) as f64 - 0.5)
    }

    /// One draw; consumes exactly one `u64` of `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.from_bits(rng.next_u64())
    }
}

fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn laplace_sample<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    Ok(Laplace::new(scale)?.sample(rng))
}

/// Unbiased estimate of one true adjacency bit from its noisy report.
pub fn phi(noisy_bit: bool, p: FlipProbability) -> f64 {
    let bit = if noisy_bit { 1.0 } else { 0.0 };
    (bit - p.0) / p.contraction()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_synthetic;
    use crate::rng::RandomSource;

    fn budget(e: f64) -> PrivacyBudget {
        PrivacyBudget::new(e).unwrap()
    }

    #[test]
    fn flip_probability_values() {
        assert!((flip_probability(budget(3f64.ln())).p() - 0.25).abs() < 1e-15);
        assert!(flip_probability(budget(50.0)).p() < 1e-20);
        assert!(PrivacyBudget::new(1f64.ln()).is_err());
        assert!(PrivacyBudget::new(-1.0).is_err());
        assert!(PrivacyBudget::new(f64::NAN).is_err());
    }

    #[test]
    fn ldp_ratio_is_exp_eps() {
        for eps in [0.1, 0.5, 1.0, 2.0, 3.0, 8.0] {
            let p = flip_probability(budget(eps));
            assert!((rr_privacy_ratio(p) - eps.exp()).abs() <= 1e-12 * eps.exp());
            assert!(((1.0 - p.p()) / p.p() - eps.exp()).abs() <= 1e-12 * eps.exp());
        }
    }

    #[test]
    fn phi_values() {
        let p = flip_probability(budget(3f64.ln()));
        assert!((phi(true, p) - 1.5).abs() < 1e-12);
        assert!((phi(false, p) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn phi_is_unbiased_with_closed_form_variance() {
        for eps in [0.3, 3f64.ln(), 2.0, 5.0] {
            let p = flip_probability(budget(eps));
            for truth in [false, true] {
                let outcomes = [
                    (true, rr_output_probability(truth, true, p)),
                    (false, rr_output_probability(truth, false, p)),
                ];
                let mean: f64 = outcomes.iter().map(|&(b, w)| w * phi(b, p)).sum();
                let var: f64 = outcomes
                    .iter()
                    .map(|&(b, w)| w * (phi(b, p) - mean).powi(2))
                    .sum();
                let target = if truth { 1.0 } else { 0.0 };
                assert!((mean - target).abs() < 1e-12);
                assert!((var - p.phi_variance()).abs() < 1e-12 * var.max(1.0));
            }
        }
        let p = flip_probability(budget(3f64.ln()));
        assert!((p.phi_variance() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn phi_variance_monte_carlo() {
        let p = flip_probability(budget(3f64.ln()));
        let mut rng = RandomSource::new(77).stream(0, 0);
        let t = 1_000_000;
        let draws: Vec<f64> = (0..t).map(|_| phi(rng.gen::<f64>() >= p.p(), p)).collect();
        let mean = draws.iter().sum::<f64>() / t as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
        assert!((var / p.phi_variance() - 1.0).abs() < 0.03);
    }

    #[test]
    fn rr_large_eps_is_identity() {
        let g = generate_synthetic(30, 40, 0.2, 1).unwrap();
        let v = VertexRef::upper(4);
        let mut rng = RandomSource::new(1).stream(v.stream_key(), 1);
        let noisy = randomized_response(&g, v, budget(60.0), &mut rng).unwrap();
        assert_eq!(noisy.members, g.neighbors(v));
        assert_eq!(noisy.opposite_size, 40);
    }

    #[test]
    fn rr_is_reproducible_and_in_range() {
        let g = generate_synthetic(30, 40, 0.2, 1).unwrap();
        let v = VertexRef::lower(7);
        let src = RandomSource::new(5).with_trial(2);
        let a =
            randomized_response(&g, v, budget(1.0), &mut src.stream(v.stream_key(), 1)).unwrap();
        let b =
            randomized_response(&g, v, budget(1.0), &mut src.stream(v.stream_key(), 1)).unwrap();
        assert_eq!(a, b);
        assert!(a.members.windows(2).all(|w| w[0] < w[1]));
        assert!(a.members.iter().all(|&m| (m as usize) < g.n1()));
    }

    #[test]
    fn rr_expected_size() {
        let g = generate_synthetic(20, 500, 0.05, 3).unwrap();
        let v = VertexRef::upper(0);
        let d = g.degree(v) as f64;
        let n = 500.0;
        let eps = budget(1.0);
        let p = flip_probability(eps).p();
        let trials = 10_000u64;
        let src = RandomSource::new(8);
        let total: usize = (0..trials)
            .map(|t| {
                let mut rng = src.with_trial(t).stream(v.stream_key(), 1);
                randomized_response(&g, v, eps, &mut rng).unwrap().len()
            })
            .sum();
        let mean = total as f64 / trials as f64;
        let expect = d * (1.0 - p) + (n - d) * p;
        let var = n * p * (1.0 - p);
        assert!(
            (mean - expect).abs() < 4.0 * (var / trials as f64).sqrt(),
            "{mean} vs {expect}"
        );
    }

    #[test]
    fn rr_entry_frequencies_match_flip_rule() {
        let g = generate_synthetic(2, 6, 0.5, 9).unwrap();
        let v = VertexRef::upper(0);
        let eps = budget(1.0);
        let p = flip_probability(eps).p();
        let trials = 40_000u64;
        let mut ones = [0usize; 6];
        for t in 0..trials {
            let mut rng = RandomSource::new(2).with_trial(t).stream(0, 1);
            for m in randomized_response(&g, v, eps, &mut rng).unwrap().members {
                ones[m as usize] += 1;
            }
        }
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        for j in 0..6u32 {
            let truth = g.neighbors(v).contains(&j);
            let expect = rr_output_probability(truth, true, flip_probability(eps));
            let freq = ones[j as usize] as f64 / trials as f64;
            assert!(
                (freq - expect).abs() < 4.0 * sd,
                "entry {j}: {freq} vs {expect}"
            );
        }
    }

    #[test]
    fn laplace_zero_uniform_maps_to_zero() {
        assert_eq!(Laplace::new(3.0).unwrap().from_uniform(0.0), 0.0);
        let lap = Laplace::new(1.0).unwrap();
        for bits in [0, 1 << 12, u64::MAX, u64::MAX >> 1, (u64::MAX >> 1) + 1] {
            assert!(lap.from_bits(bits).is_finite());
        }
        assert_eq!(lap.from_bits(0), -lap.from_bits(u64::MAX));
    }

    #[test]
    fn laplace_rejects_bad_scale() {
        let mut rng = RandomSource::new(1).stream(0, 0);
        assert!(laplace_sample(0.0, &mut rng).is_err());
        assert!(laplace_sample(-1.0, &mut rng).is_err());
    }

    #[test]
    fn laplace_moments() {
        let mut rng = RandomSource::new(31).stream(0, 0);
        let lap = Laplace::new(1.0).unwrap();
        let t = 1_000_000;
        let xs: Vec<f64> = (0..t).map(|_| lap.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / t as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var / 2.0 - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn laplace_density_ratio_bounded() {
        let sens = 1.7;
        let eps = budget(0.8);
        let lap = Laplace::calibrated(sens, eps).unwrap();
        for i in -200..=200 {
            let x = i as f64 * 0.05;
            let r = lap.density(x) / lap.density(x + sens);
            assert!(r <= eps.epsilon().exp() * (1.0 + 1e-12));
            assert!(1.0 / r <= eps.epsilon().exp() * (1.0 + 1e-12));
        }
    }
}
