//! Byzantine-robust coordinate-wise aggregation.
//!
//! The univariate trimmed mean splits the `M` reports into a quantile chunk
//! and an averaging chunk. Empirical quantiles `γ ≤ β` of the first chunk
//! bound the second: every value of the averaging chunk is clamped into
//! `[γ, β]` before it is averaged. Vectors are aggregated one coordinate at a
//! time with the same chunk partition for every coordinate.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::geometry::{GeometryError, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregationError {
    #[error("aggregation input is empty")]
    EmptyInput,
    #[error("chunk lengths differ: {quantile} quantile values vs {average} averaged values")]
    ChunkLengthMismatch { quantile: usize, average: usize },
    #[error("expected {expected} rows, got {found}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("non-finite value {0} in aggregation input")]
    NonFinite(f64),
    #[error("number of agents must be even and at least 2 for the two-chunk split, got {0}")]
    OddAgentCount(usize),
    #[error("confidence delta must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error(
        "corruption fraction alpha={alpha} is outside the {schedule} trimming regime [0, {limit})"
    )]
    AlphaOutOfRange {
        alpha: f64,
        limit: f64,
        schedule: &'static str,
    },
    #[error("delta={delta} is below 4·exp(-M/2) = {minimum:e} for M={agents}")]
    ConfidenceOutOfRange {
        delta: f64,
        minimum: f64,
        agents: usize,
    },
    #[error("trim level epsilon={epsilon} must lie in [0, 1/2){}", min_agents_hint(*.min_agents))]
    EpsilonOutOfRange {
        epsilon: f64,
        min_agents: Option<usize>,
    },
    #[error("invalid chunk partition: {0}")]
    InvalidPartition(String),
}

fn min_agents_hint(min_agents: Option<usize>) -> String {
    match min_agents {
        Some(m) => format!("; at least M={m} agents would admit this (alpha, delta)"),
        None => "; no number of agents admits this alpha".to_string(),
    }
}

/// Constants of the trim-level rule `ε = a·α + b·ln(4/δ)/M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrimSchedule {
    /// `a = 8`, `b = 24`, with `α < 1/16`: the regime of the deviation
    /// guarantee. Requires thousands of agents before `ε < 1/2`.
    Theory,
    /// `a = 3`, `b = 1`, with `α < 1/6`: same shape, constants scaled so
    /// that `M ≈ 100` with a few percent corruption gives `ε < 1/2`.
    #[default]
    Desk,
}

impl TrimSchedule {
    pub fn name(self) -> &'static str {
        match self {
            TrimSchedule::Theory => "theory",
            TrimSchedule::Desk => "desk",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "theory" => Some(TrimSchedule::Theory),
            "desk" => Some(TrimSchedule::Desk),
            _ => None,
        }
    }

    fn coefficients(self) -> (f64, f64) {
        match self {
            TrimSchedule::Theory => (8.0, 24.0),
            TrimSchedule::Desk => (3.0, 1.0),
        }
    }

    /// Exclusive upper bound on `α`.
    pub fn alpha_limit(self) -> f64 {
        match self {
            TrimSchedule::Theory => 1.0 / 16.0,
            TrimSchedule::Desk => 1.0 / 6.0,
        }
    }

    /// `ε = a·α + b·ln(4/δ)/M` (natural logarithm).
    pub fn epsilon(self, alpha: f64, delta: f64, agents: usize) -> f64 {
        let (a, b) = self.coefficients();
        a * alpha + b * (4.0 / delta).ln() / agents as f64
    }

    /// Smallest even `M` for which `epsilon(α, δ, M) < 1/2`.
    pub fn min_agents(self, alpha: f64, delta: f64) -> Option<usize> {
        let (a, b) = self.coefficients();
        let slack = 0.5 - a * alpha;
        if slack <= 0.0 {
            return None;
        }
        let mut m = (b * (4.0 / delta).ln() / slack).floor() as usize;
        m += if m.is_multiple_of(2) { 2 } else { 1 };
        while m > 2 && self.epsilon(alpha, delta, m - 2) < 0.5 {
            m -= 2;
        }
        Some(m.max(2))
    }
}

/// `ε = 8α + 24·ln(4/δ)/M`, validated against the deviation-guarantee regime.
pub fn compute_epsilon(alpha: f64, delta: f64, agents: usize) -> Result<f64, AggregationError> {
    TrimParams::new(alpha, delta, agents, TrimSchedule::Theory).map(|p| p.epsilon())
}

/// Validated trimming parameters for a population of `M` agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimParams {
    alpha: f64,
    delta: Option<f64>,
    agents: usize,
    epsilon: f64,
    schedule: Option<TrimSchedule>,
}

impl TrimParams {
    pub fn new(
        alpha: f64,
        delta: f64,
        agents: usize,
        schedule: TrimSchedule,
    ) -> Result<Self, AggregationError> {
        if agents < 2 || !agents.is_multiple_of(2) {
            return Err(AggregationError::OddAgentCount(agents));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(AggregationError::InvalidConfidence(delta));
        }
        let limit = schedule.alpha_limit();
        if !(alpha >= 0.0 && alpha < limit) {
            return Err(AggregationError::AlphaOutOfRange {
                alpha,
                limit,
                schedule: schedule.name(),
            });
        }
        let minimum = 4.0 * (-(agents as f64) / 2.0).exp();
        if delta < minimum {
            return Err(AggregationError::ConfidenceOutOfRange {
                delta,
                minimum,
                agents,
            });
        }
        let epsilon = schedule.epsilon(alpha, delta, agents);
        if epsilon >= 0.5 {
            return Err(AggregationError::EpsilonOutOfRange {
                epsilon,
                min_agents: schedule.min_agents(alpha, delta),
            });
        }
        Ok(Self {
            alpha,
            delta: Some(delta),
            agents,
            epsilon,
            schedule: Some(schedule),
        })
    }

    /// Parameters with a caller-chosen trim level, bypassing the schedule.
    pub fn with_epsilon(alpha: f64, agents: usize, epsilon: f64) -> Result<Self, AggregationError> {
        if agents < 2 || !agents.is_multiple_of(2) {
            return Err(AggregationError::OddAgentCount(agents));
        }
        if !(0.0..0.5).contains(&alpha) {
            return Err(AggregationError::AlphaOutOfRange {
                alpha,
                limit: 0.5,
                schedule: "explicit",
            });
        }
        check_epsilon(epsilon)?;
        Ok(Self {
            alpha,
            delta: None,
            agents,
            epsilon,
            schedule: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn schedule(&self) -> Option<TrimSchedule> {
        self.schedule
    }

    /// Per-round aggregation error scale `c·σ·(√α + √(ln(4dT²)/M))`.
    pub fn error_bound(&self, sigma: f64, dim: usize, rounds: usize, c: f64) -> f64 {
        let t = rounds as f64;
        let log_term = (4.0 * dim as f64 * t * t).ln() / self.agents as f64;
        c * sigma * (self.alpha.sqrt() + log_term.sqrt())
    }
}

/// 1-based order-statistic indices `(k_lo, k_hi)` of the truncation levels in
/// a quantile chunk of length `half`.
///
/// `k_lo = max(1, ⌈ε·half⌉)` and `k_hi = min(half, ⌈(1−ε)·half⌉)`. Products
/// that land within 1e-9 above an integer are treated as that integer so that
/// representation error does not shift an index.
pub fn quantile_indices(epsilon: f64, half: usize) -> (usize, usize) {
    let h = half as f64;
    let up = |x: f64| (x - 1e-9).ceil().max(0.0) as usize;
    let lo = up(epsilon * h).max(1);
    let hi = up((1.0 - epsilon) * h).clamp(1, half);
    (lo.min(hi), hi)
}

fn check_epsilon(epsilon: f64) -> Result<(), AggregationError> {
    if (0.0..0.5).contains(&epsilon) {
        Ok(())
    } else {
        Err(AggregationError::EpsilonOutOfRange {
            epsilon,
            min_agents: None,
        })
    }
}

fn check_finite(values: &[f64]) -> Result<(), AggregationError> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(&v) => Err(AggregationError::NonFinite(v)),
        None => Ok(()),
    }
}

/// Mean anchored at the first element: `v₀ + Σ(vᵢ − v₀)/n`.
///
/// Exact on constant input, which plain summation is not.
pub(crate) fn anchored_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut values = values;
    let first = values.next()?;
    let mut count = 1usize;
    let mut offset = 0.0;
    for v in values {
        offset += v - first;
        count += 1;
    }
    Some(first + offset / count as f64)
}

/// Trimmed mean of `average_chunk` with truncation levels taken from the
/// sorted `quantile_chunk`. The result always lies in `[γ, β]`.
pub fn trimmed_mean_1d(
    quantile_chunk: &[f64],
    average_chunk: &[f64],
    epsilon: f64,
) -> Result<f64, AggregationError> {
    if quantile_chunk.is_empty() || average_chunk.is_empty() {
        return Err(AggregationError::EmptyInput);
    }
    if quantile_chunk.len() != average_chunk.len() {
        return Err(AggregationError::ChunkLengthMismatch {
            quantile: quantile_chunk.len(),
            average: average_chunk.len(),
        });
    }
    check_epsilon(epsilon)?;
    check_finite(quantile_chunk)?;
    check_finite(average_chunk)?;

    let mut sorted = quantile_chunk.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let (k_lo, k_hi) = quantile_indices(epsilon, sorted.len());
    let gamma = sorted[k_lo - 1];
    let beta = sorted[k_hi - 1];

    let mean = anchored_mean(average_chunk.iter().map(|&z| z.clamp(gamma, beta)))
        .expect("nonempty chunk");
    Ok(mean.clamp(gamma, beta))
}

/// Assignment of agents to the quantile chunk and the averaging chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPartition {
    quantile_ids: Vec<usize>,
    average_ids: Vec<usize>,
}

impl ChunkPartition {
    pub fn new(quantile_ids: Vec<usize>, average_ids: Vec<usize>) -> Result<Self, AggregationError> {
        let total = quantile_ids.len() + average_ids.len();
        if quantile_ids.is_empty() || quantile_ids.len() != average_ids.len() {
            return Err(AggregationError::InvalidPartition(format!(
                "chunks must be equal and nonempty, got {} and {}",
                quantile_ids.len(),
                average_ids.len()
            )));
        }
        let mut seen = vec![false; total];
        for &id in quantile_ids.iter().chain(&average_ids) {
            if id >= total || seen[id] {
                return Err(AggregationError::InvalidPartition(format!(
                    "agent {id} is out of range or assigned twice"
                )));
            }
            seen[id] = true;
        }
        Ok(Self {
            quantile_ids,
            average_ids,
        })
    }

    /// Even agent indices form the quantile chunk, odd ones the averaging chunk.
    pub fn alternating(agents: usize) -> Result<Self, AggregationError> {
        if agents < 2 || !agents.is_multiple_of(2) {
            return Err(AggregationError::OddAgentCount(agents));
        }
        Ok(Self {
            quantile_ids: (0..agents).step_by(2).collect(),
            average_ids: (1..agents).step_by(2).collect(),
        })
    }

    /// Uniformly random equal split.
    pub fn shuffled<R: Rng + ?Sized>(agents: usize, rng: &mut R) -> Result<Self, AggregationError> {
        if agents < 2 || !agents.is_multiple_of(2) {
            return Err(AggregationError::OddAgentCount(agents));
        }
        let mut ids: Vec<usize> = (0..agents).collect();
        ids.shuffle(rng);
        let average_ids = ids.split_off(agents / 2);
        Ok(Self {
            quantile_ids: ids,
            average_ids,
        })
    }

    pub fn agents(&self) -> usize {
        self.quantile_ids.len() + self.average_ids.len()
    }

    pub fn quantile_ids(&self) -> &[usize] {
        &self.quantile_ids
    }

    pub fn average_ids(&self) -> &[usize] {
        &self.average_ids
    }
}

fn check_rows(rows: &[Vector], expected: usize) -> Result<usize, AggregationError> {
    if rows.is_empty() {
        return Err(AggregationError::EmptyInput);
    }
    if rows.len() != expected {
        return Err(AggregationError::RowCountMismatch {
            expected,
            found: rows.len(),
        });
    }
    let dim = rows[0].dim();
    for row in rows {
        row.check_dim(dim)?;
    }
    Ok(dim)
}

/// Coordinate-wise trimmed mean of `M` row vectors.
pub fn trim_vectors(
    rows: &[Vector],
    params: &TrimParams,
    partition: &ChunkPartition,
) -> Result<Vector, AggregationError> {
    if partition.agents() != params.agents() {
        return Err(AggregationError::InvalidPartition(format!(
            "partition covers {} agents, parameters expect {}",
            partition.agents(),
            params.agents()
        )));
    }
    let dim = check_rows(rows, params.agents())?;
    let half = partition.quantile_ids.len();
    let mut quantile = vec![0.0; half];
    let mut average = vec![0.0; half];
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        for (slot, &id) in quantile.iter_mut().zip(&partition.quantile_ids) {
            *slot = rows[id][j];
        }
        for (slot, &id) in average.iter_mut().zip(&partition.average_ids) {
            *slot = rows[id][j];
        }
        out.push(trimmed_mean_1d(&quantile, &average, params.epsilon())?);
    }
    Ok(Vector::from_raw(out))
}

/// Coordinate-wise arithmetic mean (the non-robust baseline).
pub fn mean_vectors(rows: &[Vector]) -> Result<Vector, AggregationError> {
    let dim = check_rows(rows, rows.len())?;
    let out = (0..dim)
        .map(|j| anchored_mean(rows.iter().map(|r| r[j])).expect("nonempty rows"))
        .collect();
    Ok(Vector::from_raw(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::probe_stream;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn epsilon_examples() {
        assert!(matches!(
            compute_epsilon(0.0, 4.0, 100),
            Err(AggregationError::InvalidConfidence(_))
        ));
        let eps = compute_epsilon(0.01, 0.01, 2400).unwrap();
        let expected = 0.08 + 24.0 * 400f64.ln() / 2400.0;
        assert_eq!(eps, expected);
        assert!((eps - 0.13992).abs() < 1e-5);
        match compute_epsilon(0.05, 0.01, 100) {
            Err(AggregationError::EpsilonOutOfRange { epsilon, min_agents }) => {
                assert!((epsilon - 1.838).abs() < 1e-3);
                // 0.4 + 24·ln(400)/M < 0.5  ⇔  M > 1437.9
                assert_eq!(min_agents, Some(1438));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trim_params_validation() {
        assert!(matches!(
            TrimParams::new(0.0, 0.5, 99, TrimSchedule::Desk),
            Err(AggregationError::OddAgentCount(99))
        ));
        assert!(matches!(
            TrimParams::new(0.07, 0.01, 100_000, TrimSchedule::Theory),
            Err(AggregationError::AlphaOutOfRange { .. })
        ));
        // 4·e^{-1} ≈ 1.47 > any valid delta when M = 2.
        assert!(matches!(
            TrimParams::new(0.0, 0.5, 2, TrimSchedule::Desk),
            Err(AggregationError::ConfidenceOutOfRange { .. })
        ));
        let p = TrimParams::new(0.06, 0.05, 100, TrimSchedule::Desk).unwrap();
        assert!((p.epsilon() - (0.18 + 80f64.ln() / 100.0)).abs() < 1e-15);
        assert_eq!(TrimSchedule::Theory.min_agents(0.0625, 0.1), None);
    }

    #[test]
    fn min_agents_is_tight() {
        for &(alpha, delta) in &[(0.0, 0.05), (0.01, 0.01), (0.05, 0.2), (0.03, 1e-4)] {
            for schedule in [TrimSchedule::Theory, TrimSchedule::Desk] {
                let m = schedule.min_agents(alpha, delta).unwrap();
                assert_eq!(m % 2, 0);
                assert!(schedule.epsilon(alpha, delta, m) < 0.5);
                if m > 2 {
                    assert!(schedule.epsilon(alpha, delta, m - 2) >= 0.5);
                }
            }
        }
    }

    #[test]
    fn error_bound_formula() {
        let p = TrimParams::new(0.04, 0.05, 200, TrimSchedule::Desk).unwrap();
        let expected = 6.0 * 2.0 * (0.2 + ((4.0 * 10.0 * 1e6f64).ln() / 200.0).sqrt());
        assert!((p.error_bound(2.0, 10, 1000, 6.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn trimmed_mean_examples() {
        let sixteen = [5.0; 8];
        assert_eq!(trimmed_mean_1d(&sixteen, &sixteen, 0.3).unwrap(), 5.0);
        let data = [0.0, 1.0, 2.0, 100.0];
        assert_eq!(quantile_indices(0.25, 4), (1, 3));
        assert_eq!(trimmed_mean_1d(&data, &data, 0.25).unwrap(), 1.25);
        assert_eq!(trimmed_mean_1d(&[0.0, 10.0], &[-5.0, 5.0], 0.0).unwrap(), 2.5);
    }

    #[test]
    fn trimmed_mean_errors() {
        assert_eq!(trimmed_mean_1d(&[], &[], 0.1), Err(AggregationError::EmptyInput));
        assert!(matches!(
            trimmed_mean_1d(&[1.0], &[1.0, 2.0], 0.1),
            Err(AggregationError::ChunkLengthMismatch { .. })
        ));
        assert!(trimmed_mean_1d(&[1.0], &[1.0], 0.5).is_err());
        assert!(trimmed_mean_1d(&[f64::NAN], &[1.0], 0.1).is_err());
    }

    #[test]
    fn quantile_indices_are_monotone_in_epsilon() {
        for half in 1..60 {
            let mut prev = quantile_indices(0.0, half);
            assert_eq!(prev, (1, half));
            for step in 1..500 {
                let eps = step as f64 * 0.001;
                let cur = quantile_indices(eps, half);
                assert!(cur.0 >= prev.0 && cur.1 <= prev.1 && cur.0 <= cur.1);
                prev = cur;
            }
        }
    }

    #[test]
    fn vector_examples() {
        let p = TrimParams::new(0.0, 0.5, 8, TrimSchedule::Desk).unwrap();
        let partition = ChunkPartition::alternating(8).unwrap();
        let row = Vector::new(vec![1.5, -2.0, 0.1]).unwrap();
        let rows = vec![row.clone(); 8];
        assert_eq!(trim_vectors(&rows, &p, &partition).unwrap(), row);
        assert_eq!(mean_vectors(&rows).unwrap(), row);

        let two = vec![
            Vector::new(vec![0.0, 0.0]).unwrap(),
            Vector::new(vec![2.0, 4.0]).unwrap(),
        ];
        assert_eq!(mean_vectors(&two).unwrap(), Vector::new(vec![1.0, 2.0]).unwrap());
        assert_eq!(mean_vectors(&[]), Err(AggregationError::EmptyInput));
        assert!(matches!(
            trim_vectors(&rows[..6], &p, &partition),
            Err(AggregationError::InvalidPartition(_)) | Err(AggregationError::RowCountMismatch { .. })
        ));
    }

    #[test]
    fn columns_compose_one_dimensional_results() {
        // Column 0 reproduces the [0,1,2,100] example at ε = 0.25, column 1
        // clips [-5, 5, -5, 5] to the range of [0, 10, 0, 10].
        let q = [[0.0, 0.0], [1.0, 10.0], [2.0, 0.0], [100.0, 10.0]];
        let a = [[0.0, -5.0], [1.0, 5.0], [2.0, -5.0], [100.0, 5.0]];
        let rows: Vec<Vector> = q
            .iter()
            .chain(&a)
            .map(|r| Vector::new(r.to_vec()).unwrap())
            .collect();
        let partition = ChunkPartition::new(vec![0, 1, 2, 3], vec![4, 5, 6, 7]).unwrap();
        let params = TrimParams::with_epsilon(0.0, 8, 0.25).unwrap();
        let out = trim_vectors(&rows, &params, &partition).unwrap();
        for j in 0..2 {
            let qj: Vec<f64> = q.iter().map(|r| r[j]).collect();
            let aj: Vec<f64> = a.iter().map(|r| r[j]).collect();
            assert_eq!(out[j], trimmed_mean_1d(&qj, &aj, 0.25).unwrap());
        }
        // Column 1: sorted [0, 0, 10, 10], k_lo = 1 → γ = 0, k_hi = 3 → β = 10,
        // clamped [0, 5, 0, 5].
        assert_eq!(out.as_slice(), &[1.25, 2.5]);
    }

    #[test]
    fn partitions() {
        let p = ChunkPartition::alternating(6).unwrap();
        assert_eq!(p.quantile_ids(), &[0, 2, 4]);
        assert_eq!(p.average_ids(), &[1, 3, 5]);
        assert!(ChunkPartition::new(vec![0, 1], vec![1, 2]).is_err());
        assert!(ChunkPartition::new(vec![0], vec![1, 2]).is_err());
        let mut rng = probe_stream(1, 1);
        let s = ChunkPartition::shuffled(10, &mut rng).unwrap();
        ChunkPartition::new(s.quantile_ids().to_vec(), s.average_ids().to_vec()).unwrap();
    }

    #[test]
    fn mean_matches_reverse_summation() {
        let mut rng = probe_stream(2, 2);
        let rows: Vec<Vector> = (0..100)
            .map(|_| {
                Vector::new(
                    (0..7)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect::<Vec<f64>>(),
                )
                .unwrap()
            })
            .collect();
        let mean = mean_vectors(&rows).unwrap();
        for j in 0..7 {
            let oracle: f64 = rows.iter().rev().map(|r| r[j]).sum::<f64>() / 100.0;
            assert!((mean[j] - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn trim_vectors_meets_deviation_bound_without_corruption() {
        // α = 0, M = 100, δ = 0.5 keeps the theory schedule valid (ε ≈ 0.499).
        let params = TrimParams::new(0.0, 0.5, 100, TrimSchedule::Theory).unwrap();
        let partition = ChunkPartition::alternating(100).unwrap();
        let bound = 6.0 * ((1.0f64 / 0.5).ln() / 100.0).sqrt();
        let means = [1.0, -3.0, 0.25];
        let mut hits = [0usize; 3];
        let trials = 2000;
        for trial in 0..trials {
            let mut rng = probe_stream(77, trial);
            let rows: Vec<Vector> = (0..100)
                .map(|_| {
                    Vector::new(
                        means
                            .iter()
                            .map(|m| m + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                            .collect(),
                    )
                    .unwrap()
                })
                .collect();
            let est = trim_vectors(&rows, &params, &partition).unwrap();
            for j in 0..3 {
                if (est[j] - means[j]).abs() <= bound {
                    hits[j] += 1;
                }
            }
        }
        for h in hits {
            assert!(h as f64 / trials as f64 >= 1.0 - params.delta().unwrap());
        }
    }

    fn chunk_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(-1e3f64..1e3, n),
                proptest::collection::vec(-1e6f64..1e6, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn output_stays_in_quantile_chunk_range((q, a) in chunk_pair(), eps in 0.0f64..0.5) {
            let m = trimmed_mean_1d(&q, &a, eps).unwrap();
            let lo = q.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= m && m <= hi);
        }

        #[test]
        fn permutation_within_chunks((q, a) in chunk_pair(), eps in 0.0f64..0.5, seed in 0u64..1000) {
            let mut rng = probe_stream(seed, 0);
            let mut q2 = q.clone();
            q2.shuffle(&mut rng);
            let mut a2 = a.clone();
            a2.shuffle(&mut rng);
            let m1 = trimmed_mean_1d(&q, &a, eps).unwrap();
            let m2 = trimmed_mean_1d(&q2, &a2, eps).unwrap();
            prop_assert!((m1 - m2).abs() <= 1e-9 * m1.abs().max(1.0));
        }
    }
}
