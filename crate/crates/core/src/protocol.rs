//! The distributed extra-gradient server loop.
//!
//! Each round the server broadcasts `z_t`, aggregates the `M` gradient reports
//! into `g̃(z_t)`, steps to the midpoint `ẑ_t = Π(z_t − η·[g̃_x; −g̃_y])`,
//! broadcasts `ẑ_t`, aggregates fresh reports into `g̃(ẑ_t)` and commits
//! `z_{t+1} = Π(z_t − η·[g̃_x(ẑ_t); −g̃_y(ẑ_t)])`. The robust variant aggregates
//! with the coordinate-wise trimmed mean, the vanilla baseline with the plain
//! mean.

use std::time::Instant;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::aggregation::{
    mean_vectors, trim_vectors, AggregationError, ChunkPartition, TrimParams,
};
use crate::geometry::{pair_distance_sq, GeometryError, IteratePair, Vector};
use crate::problems::{GradientSample, ProblemError, SaddleProblem};
use crate::rng::{agent_stream, partition_stream, Query};

/// Per-coordinate magnitude cap on adversarial reports.
pub const BYZANTINE_CAP: f64 = 1e12;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("numerical abort: non-finite value in round {round}")]
    NumericalAbort { round: usize, partial: Box<RunTrace> },
    #[error("invalid run parameter: {0}")]
    InvalidParameter(String),
}

/// How a Byzantine agent corrupts its report.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackStrategy {
    /// `−scale · g` for the agent's own honest sample `g`.
    SignFlip { scale: f64 },
    /// Pure noise, i.i.d. `N(0, std²)` per coordinate.
    GaussianBlast { std: f64 },
    /// Honest sample plus a fixed offset.
    ConstantShift { shift: GradientSample },
    /// All Byzantine agents push the naive mean so that one step from the
    /// current iterate lands on `target`.
    Collusive { target: IteratePair },
}

impl AttackStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AttackStrategy::SignFlip { .. } => "sign-flip",
            AttackStrategy::GaussianBlast { .. } => "gaussian-blast",
            AttackStrategy::ConstantShift { .. } => "constant-shift",
            AttackStrategy::Collusive { .. } => "collusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentBehavior {
    Honest,
    Byzantine(AttackStrategy),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPopulation {
    agents: Vec<AgentBehavior>,
}

impl AgentPopulation {
    pub fn new(agents: Vec<AgentBehavior>) -> Result<Self, ProtocolError> {
        if agents.is_empty() {
            return Err(ProtocolError::InvalidParameter("population is empty".into()));
        }
        Ok(Self { agents })
    }

    pub fn honest(count: usize) -> Result<Self, ProtocolError> {
        Self::new(vec![AgentBehavior::Honest; count])
    }

    /// `⌊α·M⌋` Byzantine agents (the lowest indices) running `strategy`, the
    /// rest honest.
    pub fn generate(count: usize, alpha: f64, strategy: AttackStrategy) -> Result<Self, ProtocolError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ProtocolError::InvalidParameter(format!(
                "corruption fraction must lie in [0, 1], got {alpha}"
            )));
        }
        let byzantine = byzantine_count(count, alpha);
        let agents = (0..count)
            .map(|i| {
                if i < byzantine {
                    AgentBehavior::Byzantine(strategy.clone())
                } else {
                    AgentBehavior::Honest
                }
            })
            .collect();
        Self::new(agents)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn behaviors(&self) -> &[AgentBehavior] {
        &self.agents
    }

    pub fn byzantine_count(&self) -> usize {
        self.agents
            .iter()
            .filter(|a| matches!(a, AgentBehavior::Byzantine(_)))
            .count()
    }

    fn check_against(&self, problem: &dyn SaddleProblem) -> Result<(), ProtocolError> {
        for behavior in &self.agents {
            let AgentBehavior::Byzantine(strategy) = behavior else {
                continue;
            };
            match strategy {
                AttackStrategy::ConstantShift { shift } => {
                    shift.gx.check_dim(problem.dim_x())?;
                    shift.gy.check_dim(problem.dim_y())?;
                }
                AttackStrategy::Collusive { target } => {
                    target.x.check_dim(problem.dim_x())?;
                    target.y.check_dim(problem.dim_y())?;
                }
                AttackStrategy::SignFlip { scale } if !scale.is_finite() => {
                    return Err(ProtocolError::InvalidParameter("sign-flip scale must be finite".into()));
                }
                AttackStrategy::GaussianBlast { std } if !(std.is_finite() && *std >= 0.0) => {
                    return Err(ProtocolError::InvalidParameter(
                        "gaussian-blast std must be finite and nonnegative".into(),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// `⌊α·M⌋`, robust to `α·M` landing just below an integer.
pub fn byzantine_count(agents: usize, alpha: f64) -> usize {
    ((alpha * agents as f64) + 1e-9).floor() as usize
}

/// What a Byzantine agent knows when it forges a report.
#[derive(Debug, Clone, Copy)]
pub struct AttackContext<'a> {
    /// The iterate the server's next update is anchored at.
    pub anchor: &'a IteratePair,
    pub step_size: f64,
    pub agents: usize,
    pub byzantine: usize,
}

/// An honest agent's report: one fresh stochastic gradient.
pub fn honest_response(
    problem: &dyn SaddleProblem,
    at: &IteratePair,
    rng: &mut dyn RngCore,
) -> GradientSample {
    problem.sample_gradient(at, rng)
}

fn capped(v: Vector) -> Vector {
    Vector::from_raw(
        v.into_inner()
            .into_iter()
            .map(|x| if x.is_nan() { 0.0 } else { x.clamp(-BYZANTINE_CAP, BYZANTINE_CAP) })
            .collect(),
    )
}

pub fn byzantine_response(
    strategy: &AttackStrategy,
    honest: &GradientSample,
    ctx: &AttackContext<'_>,
    rng: &mut dyn RngCore,
) -> GradientSample {
    let forged = match strategy {
        AttackStrategy::SignFlip { scale } => honest.scale(-scale),
        AttackStrategy::GaussianBlast { std } => {
            let mut blast = |dim: usize| {
                Vector::from_raw(
                    (0..dim)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut *rng);
                            std * z
                        })
                        .collect(),
                )
            };
            let gx = blast(honest.gx.dim());
            let gy = blast(honest.gy.dim());
            GradientSample::new(gx, gy)
        }
        AttackStrategy::ConstantShift { shift } => {
            GradientSample::new(honest.gx.add(&shift.gx), honest.gy.add(&shift.gy))
        }
        AttackStrategy::Collusive { target } => {
            // x ← x − η·g_x and y ← y + η·g_y reach the target when the mean
            // equals these gradients; each colluder carries M/|B| of the push.
            let weight = ctx.agents as f64 / ctx.byzantine.max(1) as f64 / ctx.step_size;
            let gx = ctx.anchor.x.sub(&target.x).scale(weight);
            let gy = target.y.sub(&ctx.anchor.y).scale(weight);
            GradientSample::new(gx, gy)
        }
    };
    GradientSample::new(capped(forged.gx), capped(forged.gy))
}

/// Server-side aggregation rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregator {
    /// Coordinate-wise arithmetic mean (vanilla distributed extra-gradient).
    Mean,
    /// Coordinate-wise trimmed mean (RDEG).
    Trimmed {
        params: TrimParams,
        partition: PartitionMode,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionMode {
    /// One partition for the whole run.
    Fixed(ChunkPartition),
    /// A fresh uniformly random partition each round, shared by both queries.
    Reshuffled,
}

impl PartitionMode {
    pub fn name(&self) -> &'static str {
        match self {
            PartitionMode::Fixed(_) => "fixed",
            PartitionMode::Reshuffled => "reshuffled",
        }
    }
}

/// Mutable server state between rounds.
#[derive(Debug, Clone)]
pub struct ServerState {
    /// Index of the next round to execute, starting at 1.
    pub round: usize,
    pub iterate: IteratePair,
    pub midpoint: Option<IteratePair>,
    midpoint_sum_x: Vec<f64>,
    midpoint_sum_y: Vec<f64>,
    midpoints: usize,
}

impl ServerState {
    pub fn new(start: IteratePair) -> Self {
        let (n, m) = (start.x.dim(), start.y.dim());
        Self {
            round: 1,
            iterate: start,
            midpoint: None,
            midpoint_sum_x: vec![0.0; n],
            midpoint_sum_y: vec![0.0; m],
            midpoints: 0,
        }
    }

    /// Running average `(x̄_t, ȳ_t)` of the midpoints so far.
    pub fn midpoint_average(&self) -> Option<IteratePair> {
        if self.midpoints == 0 {
            return None;
        }
        let k = self.midpoints as f64;
        let avg = |sum: &[f64]| Vector::from_raw(sum.iter().map(|s| s / k).collect());
        Some(IteratePair::new(avg(&self.midpoint_sum_x), avg(&self.midpoint_sum_y)))
    }

    fn accumulate(&mut self, midpoint: &IteratePair) {
        for (s, v) in self.midpoint_sum_x.iter_mut().zip(midpoint.x.as_slice()) {
            *s += v;
        }
        for (s, v) in self.midpoint_sum_y.iter_mut().zip(midpoint.y.as_slice()) {
            *s += v;
        }
        self.midpoints += 1;
    }
}

/// Everything observable about one executed round.
#[derive(Debug, Clone)]
pub struct RoundDetail {
    pub round: usize,
    pub iterate: IteratePair,
    pub midpoint: IteratePair,
    pub next: IteratePair,
    /// Aggregated gradient at the iterate.
    pub grad_iterate: GradientSample,
    /// Aggregated gradient at the midpoint.
    pub grad_midpoint: GradientSample,
    /// Aggregated minus population gradient at the iterate.
    pub error_iterate: GradientSample,
    /// Aggregated minus population gradient at the midpoint.
    pub error_midpoint: GradientSample,
}

/// Projected primal-dual step `(Π_X(x − η·g_x), Π_Y(y + η·g_y))` from `anchor`.
pub fn projected_step(
    problem: &dyn SaddleProblem,
    anchor: &IteratePair,
    grad: &GradientSample,
    step_size: f64,
) -> Result<IteratePair, GeometryError> {
    let x = problem.set_x().project(&anchor.x.axpy(-step_size, &grad.gx))?;
    let y = problem.set_y().project(&anchor.y.axpy(step_size, &grad.gy))?;
    Ok(IteratePair::new(x, y))
}

/// Shared context for a run's rounds.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext {
    pub step_size: f64,
    pub seed: u64,
    /// Number of worker threads for agent responses; 1 runs inline.
    pub workers: usize,
}

fn collect_responses(
    problem: &dyn SaddleProblem,
    population: &AgentPopulation,
    at: &IteratePair,
    anchor: &IteratePair,
    round: usize,
    query: Query,
    ctx: &RoundContext,
) -> Vec<GradientSample> {
    let attack = AttackContext {
        anchor,
        step_size: ctx.step_size,
        agents: population.len(),
        byzantine: population.byzantine_count(),
    };
    let respond = |(agent, behavior): (usize, &AgentBehavior)| {
        let mut rng = agent_stream(ctx.seed, agent, round, query);
        let honest = honest_response(problem, at, &mut rng);
        match behavior {
            AgentBehavior::Honest => honest,
            AgentBehavior::Byzantine(strategy) => byzantine_response(strategy, &honest, &attack, &mut rng),
        }
    };
    if ctx.workers <= 1 {
        population.behaviors().iter().enumerate().map(respond).collect()
    } else {
        population.behaviors().par_iter().enumerate().map(respond).collect()
    }
}

fn split_blocks(samples: Vec<GradientSample>) -> (Vec<Vector>, Vec<Vector>) {
    samples.into_iter().map(|s| (s.gx, s.gy)).unzip()
}

fn extragradient_round(
    state: &mut ServerState,
    problem: &dyn SaddleProblem,
    population: &AgentPopulation,
    ctx: &RoundContext,
    aggregate: &dyn Fn(&[Vector]) -> Result<Vector, AggregationError>,
) -> Result<RoundDetail, ProtocolError> {
    let round = state.round;
    let iterate = state.iterate.clone();
    // The run loop fills in the partial trace.
    let abort = || ProtocolError::NumericalAbort {
        round,
        partial: Box::default(),
    };

    let aggregate_all = |samples: Vec<GradientSample>| -> Result<GradientSample, ProtocolError> {
        let (gx_rows, gy_rows) = split_blocks(samples);
        Ok(GradientSample::new(aggregate(&gx_rows)?, aggregate(&gy_rows)?))
    };

    let first = collect_responses(problem, population, &iterate, &iterate, round, Query::Iterate, ctx);
    let grad_iterate = aggregate_all(first)?;
    if !grad_iterate.is_finite() {
        return Err(abort());
    }
    let midpoint = projected_step(problem, &iterate, &grad_iterate, ctx.step_size)?;

    let second = collect_responses(problem, population, &midpoint, &iterate, round, Query::Midpoint, ctx);
    let grad_midpoint = aggregate_all(second)?;
    if !grad_midpoint.is_finite() {
        return Err(abort());
    }
    // Anchored at z_t, not at the midpoint.
    let next = projected_step(problem, &iterate, &grad_midpoint, ctx.step_size)?;
    if !(midpoint.is_finite() && next.is_finite()) {
        return Err(abort());
    }

    let error_iterate = grad_iterate.sub(&problem.population_gradient(&iterate));
    let error_midpoint = grad_midpoint.sub(&problem.population_gradient(&midpoint));

    state.accumulate(&midpoint);
    state.iterate = next.clone();
    state.midpoint = Some(midpoint.clone());
    state.round += 1;

    Ok(RoundDetail {
        round,
        iterate,
        midpoint,
        next,
        grad_iterate,
        grad_midpoint,
        error_iterate,
        error_midpoint,
    })
}

/// One RDEG round: trimmed-mean aggregation with the given chunk partition.
pub fn rdeg_round(
    state: &mut ServerState,
    problem: &dyn SaddleProblem,
    population: &AgentPopulation,
    params: &TrimParams,
    partition: &ChunkPartition,
    ctx: &RoundContext,
) -> Result<RoundDetail, ProtocolError> {
    if population.len() != params.agents() {
        return Err(ProtocolError::InvalidParameter(format!(
            "population has {} agents, trim parameters expect {}",
            population.len(),
            params.agents()
        )));
    }
    extragradient_round(state, problem, population, ctx, &|rows| {
        trim_vectors(rows, params, partition)
    })
}

/// One vanilla distributed extra-gradient round (mean aggregation).
pub fn vanilla_round(
    state: &mut ServerState,
    problem: &dyn SaddleProblem,
    population: &AgentPopulation,
    ctx: &RoundContext,
) -> Result<RoundDetail, ProtocolError> {
    extragradient_round(state, problem, population, ctx, &mean_vectors)
}

/// `η = 1/(4L)` for strongly convex-strongly concave problems, else `1/(2L)`.
pub fn default_step_size(problem: &dyn SaddleProblem) -> f64 {
    if problem.strong_convexity() > 0.0 {
        1.0 / (4.0 * problem.smoothness())
    } else {
        1.0 / (2.0 * problem.smoothness())
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub aggregator: Aggregator,
    pub step_size: f64,
    pub rounds: usize,
    pub seed: u64,
    pub workers: usize,
    /// Record wall-clock milliseconds per round; zero otherwise so traces stay
    /// byte-reproducible.
    pub record_wall_time: bool,
    /// Starting iterate; the problem's default start when absent.
    pub start: Option<IteratePair>,
}

/// Per-round metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    /// Primal-dual gap at the running midpoint average.
    pub gap: f64,
    /// `‖z* − z_{t+1}‖²`; NaN when the problem has no known saddle.
    pub dist_sq: f64,
    pub err_x_t: f64,
    pub err_y_t: f64,
    pub err_x_hat: f64,
    pub err_y_hat: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub records: Vec<RoundRecord>,
    /// `(x̄_T, ȳ_T)`: average of the midpoints.
    pub average: Option<IteratePair>,
    pub final_iterate: Option<IteratePair>,
}

impl RunTrace {
    pub fn final_gap(&self) -> Option<f64> {
        self.records.last().map(|r| r.gap)
    }

    pub fn final_dist_sq(&self) -> Option<f64> {
        self.records.last().map(|r| r.dist_sq)
    }

    /// Mean gap over the final 10% of rounds (at least one).
    pub fn error_floor(&self) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        let tail = self.records.len().div_ceil(10).max(1);
        let slice = &self.records[self.records.len() - tail..];
        Some(slice.iter().map(|r| r.gap).sum::<f64>() / tail as f64)
    }

    /// Largest recorded aggregation error norm.
    pub fn max_error_norm(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| [r.err_x_t, r.err_y_t, r.err_x_hat, r.err_y_hat])
            .fold(0.0, f64::max)
    }
}

/// Runs `rounds` extra-gradient rounds.
pub fn run(
    problem: &dyn SaddleProblem,
    population: &AgentPopulation,
    options: &RunOptions,
) -> Result<RunTrace, ProtocolError> {
    run_with_observer(problem, population, options, |_| {})
}

/// [`run`], handing every round's [`RoundDetail`] to `observe`.
pub fn run_with_observer(
    problem: &dyn SaddleProblem,
    population: &AgentPopulation,
    options: &RunOptions,
    mut observe: impl FnMut(&RoundDetail) + Send,
) -> Result<RunTrace, ProtocolError> {
    if !(options.step_size.is_finite() && options.step_size > 0.0) {
        return Err(ProtocolError::InvalidParameter(format!(
            "step size must be positive, got {}",
            options.step_size
        )));
    }
    if options.rounds == 0 {
        return Err(ProtocolError::InvalidParameter("at least one round is required".into()));
    }
    population.check_against(problem)?;
    let start = options.start.clone().unwrap_or_else(|| problem.initial_point());
    if !problem.is_feasible(&start) {
        return Err(ProtocolError::InvalidParameter("start point is infeasible".into()));
    }
    if let Aggregator::Trimmed { params, partition } = &options.aggregator {
        if population.len() != params.agents() {
            return Err(ProtocolError::InvalidParameter(format!(
                "population has {} agents, trim parameters expect {}",
                population.len(),
                params.agents()
            )));
        }
        if let PartitionMode::Fixed(p) = partition {
            if p.agents() != params.agents() {
                return Err(AggregationError::InvalidPartition(format!(
                    "partition covers {} agents, expected {}",
                    p.agents(),
                    params.agents()
                ))
                .into());
            }
        }
    }

    let pool = if options.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .map_err(|e| ProtocolError::InvalidParameter(e.to_string()))?,
        )
    } else {
        None
    };
    let body = || execute(problem, population, options, start, &mut observe);
    match pool {
        Some(pool) => pool.install(body),
        None => body(),
    }
}

fn execute(
    problem: &dyn SaddleProblem,
    population: &AgentPopulation,
    options: &RunOptions,
    start: IteratePair,
    observe: &mut (dyn FnMut(&RoundDetail) + Send),
) -> Result<RunTrace, ProtocolError> {
    let ctx = RoundContext {
        step_size: options.step_size,
        seed: options.seed,
        workers: options.workers,
    };
    let clock = Instant::now();
    let mut state = ServerState::new(start);
    let mut trace = RunTrace {
        records: Vec::with_capacity(options.rounds),
        average: None,
        final_iterate: None,
    };

    for _ in 0..options.rounds {
        let outcome = match &options.aggregator {
            Aggregator::Mean => vanilla_round(&mut state, problem, population, &ctx),
            Aggregator::Trimmed { params, partition } => {
                let reshuffled;
                let partition = match partition {
                    PartitionMode::Fixed(p) => p,
                    PartitionMode::Reshuffled => {
                        let mut rng = partition_stream(options.seed, state.round);
                        reshuffled = ChunkPartition::shuffled(params.agents(), &mut rng)?;
                        &reshuffled
                    }
                };
                rdeg_round(&mut state, problem, population, params, partition, &ctx)
            }
        };
        let detail = match outcome {
            Ok(detail) => detail,
            Err(ProtocolError::NumericalAbort { round, .. }) => {
                trace.average = state.midpoint_average();
                trace.final_iterate = Some(state.iterate.clone());
                return Err(ProtocolError::NumericalAbort {
                    round,
                    partial: Box::new(trace),
                });
            }
            Err(e) => return Err(e),
        };
        observe(&detail);

        let average = state.midpoint_average().expect("one midpoint per round");
        let gap = problem.primal_dual_gap(&average.x, &average.y)?;
        let dist_sq = match problem.saddle() {
            Some(saddle) => pair_distance_sq(saddle, &detail.next)?,
            None => f64::NAN,
        };
        let wall_ms = if options.record_wall_time {
            clock.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        trace.records.push(RoundRecord {
            t: detail.round,
            gap,
            dist_sq,
            err_x_t: detail.error_iterate.gx.norm(),
            err_y_t: detail.error_iterate.gy.norm(),
            err_x_hat: detail.error_midpoint.gx.norm(),
            err_y_hat: detail.error_midpoint.gy.norm(),
            wall_ms,
        });
    }
    trace.average = state.midpoint_average();
    trace.final_iterate = Some(state.iterate);
    Ok(trace)
}

/// Slack `rhs − lhs` of the four projection inequalities at a probe point
/// `(x, y)`; each entry is nonnegative up to rounding:
///
/// ```text
///  2η⟨g̃_x(z_t), x̂_t − x⟩     ≤ ‖x − x_t‖² − ‖x − x̂_t‖² − ‖x̂_t − x_t‖²
/// −2η⟨g̃_y(z_t), ŷ_t − y⟩     ≤ ‖y − y_t‖² − ‖y − ŷ_t‖² − ‖ŷ_t − y_t‖²
///  2η⟨g̃_x(ẑ_t), x_{t+1} − x⟩ ≤ ‖x − x_t‖² − ‖x − x_{t+1}‖² − ‖x_{t+1} − x_t‖²
/// −2η⟨g̃_y(ẑ_t), y_{t+1} − y⟩ ≤ ‖y − y_t‖² − ‖y − y_{t+1}‖² − ‖y_{t+1} − y_t‖²
/// ```
pub fn projection_inequality_slack(detail: &RoundDetail, step_size: f64, probe: &IteratePair) -> [f64; 4] {
    let three_point = |anchor: &Vector, moved: &Vector, p: &Vector| {
        p.distance_sq(anchor) - p.distance_sq(moved) - moved.distance_sq(anchor)
    };
    let z = &detail.iterate;
    let h = &detail.midpoint;
    let n = &detail.next;
    let two_eta = 2.0 * step_size;
    [
        three_point(&z.x, &h.x, &probe.x) - two_eta * detail.grad_iterate.gx.dot(&h.x.sub(&probe.x)),
        three_point(&z.y, &h.y, &probe.y) + two_eta * detail.grad_iterate.gy.dot(&h.y.sub(&probe.y)),
        three_point(&z.x, &n.x, &probe.x) - two_eta * detail.grad_midpoint.gx.dot(&n.x.sub(&probe.x)),
        three_point(&z.y, &n.y, &probe.y) + two_eta * detail.grad_midpoint.gy.dot(&n.y.sub(&probe.y)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::TrimSchedule;
    use crate::problems::{build_preset, BilinearGame, Preset, PresetParams};
    use nalgebra::DMatrix;

    fn v(entries: &[f64]) -> Vector {
        Vector::new(entries.to_vec()).unwrap()
    }

    fn scalar_game(a: f64, sigma2: f64) -> BilinearGame {
        BilinearGame::new(DMatrix::from_element(1, 1, a), v(&[0.0]), v(&[0.0]), 10.0, sigma2).unwrap()
    }

    fn ctx(step_size: f64) -> RoundContext {
        RoundContext {
            step_size,
            seed: 1,
            workers: 1,
        }
    }

    #[test]
    fn honest_response_matches_population_without_noise() {
        let game = scalar_game(1.0, 0.0);
        let at = IteratePair::new(v(&[0.4]), v(&[-0.3]));
        let mut rng = agent_stream(0, 0, 1, Query::Iterate);
        assert_eq!(honest_response(&game, &at, &mut rng), game.population_gradient(&at));
    }

    #[test]
    fn honest_draws_are_replayable_and_fresh() {
        let game = scalar_game(1.0, 1.0);
        let at = IteratePair::new(v(&[0.0]), v(&[0.0]));
        let a = honest_response(&game, &at, &mut agent_stream(3, 2, 5, Query::Iterate));
        let b = honest_response(&game, &at, &mut agent_stream(3, 2, 5, Query::Iterate));
        let c = honest_response(&game, &at, &mut agent_stream(3, 2, 5, Query::Midpoint));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn attack_examples() {
        let g = GradientSample::new(v(&[1.0, -2.0]), v(&[0.5]));
        let anchor = IteratePair::new(v(&[0.0, 0.0]), v(&[0.0]));
        let ctx = AttackContext {
            anchor: &anchor,
            step_size: 0.1,
            agents: 10,
            byzantine: 1,
        };
        let mut rng = agent_stream(0, 0, 0, Query::Iterate);
        let flipped = byzantine_response(&AttackStrategy::SignFlip { scale: 1.0 }, &g, &ctx, &mut rng);
        assert_eq!(flipped, g.scale(-1.0));
        let zero = GradientSample::new(v(&[0.0, 0.0]), v(&[0.0]));
        let shifted = byzantine_response(&AttackStrategy::ConstantShift { shift: zero }, &g, &ctx, &mut rng);
        assert_eq!(shifted, g);
        let huge = byzantine_response(&AttackStrategy::SignFlip { scale: 1e300 }, &g, &ctx, &mut rng);
        assert_eq!(huge.gx.as_slice(), &[-BYZANTINE_CAP, BYZANTINE_CAP]);
        let blast = byzantine_response(&AttackStrategy::GaussianBlast { std: 0.0 }, &g, &ctx, &mut rng);
        assert_eq!(blast.gx.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn collusive_population_steers_mean_step_to_target() {
        let problem = build_preset(Preset::BilinearSec6, &PresetParams::default()).unwrap();
        let target = IteratePair::new(Vector::filled(10, 3.0), Vector::filled(10, -7.0));
        let population = AgentPopulation::new(vec![
            AgentBehavior::Byzantine(AttackStrategy::Collusive {
                target: target.clone(),
            });
            8
        ])
        .unwrap();
        let start = problem.initial_point();
        let mut state = ServerState::new(start);
        let detail = vanilla_round(&mut state, problem.as_ref(), &population, &ctx(0.37)).unwrap();
        assert!(pair_distance_sq(&detail.midpoint, &target).unwrap().sqrt() <= 1e-9);
        assert!(pair_distance_sq(&detail.next, &target).unwrap().sqrt() <= 1e-9);
    }

    #[test]
    fn hand_executed_round() {
        // f = xy, η = 0.1, z₁ = (1, 1).
        let game = scalar_game(1.0, 0.0);
        let population = AgentPopulation::honest(4).unwrap();
        let params = TrimParams::with_epsilon(0.0, 4, 0.25).unwrap();
        let partition = ChunkPartition::alternating(4).unwrap();
        let mut state = ServerState::new(IteratePair::new(v(&[1.0]), v(&[1.0])));
        let detail = rdeg_round(&mut state, &game, &population, &params, &partition, &ctx(0.1)).unwrap();
        assert!((detail.midpoint.x[0] - 0.9).abs() < 1e-15);
        assert!((detail.midpoint.y[0] - 1.1).abs() < 1e-15);
        assert!((detail.next.x[0] - 0.89).abs() < 1e-15);
        assert!((detail.next.y[0] - 1.09).abs() < 1e-15);
        assert_eq!(state.round, 2);
        assert_eq!(state.iterate, detail.next);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let game = scalar_game(0.0, 0.0);
        let population = AgentPopulation::honest(2).unwrap();
        let start = IteratePair::new(v(&[0.3]), v(&[-0.2]));
        let mut state = ServerState::new(start.clone());
        let detail = vanilla_round(&mut state, &game, &population, &ctx(0.5)).unwrap();
        assert_eq!(detail.next, start);
    }

    #[test]
    fn rdeg_equals_vanilla_on_constant_columns() {
        let problem = build_preset(Preset::BilinearSec6, &PresetParams { sigma2: 0.0, ..Default::default() })
            .unwrap();
        let population = AgentPopulation::honest(20).unwrap();
        let params = TrimParams::new(0.0, 0.05, 20, TrimSchedule::Desk).unwrap();
        let partition = ChunkPartition::alternating(20).unwrap();
        let mut robust = ServerState::new(problem.initial_point());
        let mut plain = robust.clone();
        for _ in 0..50 {
            let a = rdeg_round(&mut robust, problem.as_ref(), &population, &params, &partition, &ctx(0.5)).unwrap();
            let b = vanilla_round(&mut plain, problem.as_ref(), &population, &ctx(0.5)).unwrap();
            assert_eq!(a.next, b.next);
            assert_eq!(a.midpoint, b.midpoint);
        }
    }

    #[test]
    fn single_agent_vanilla_is_stochastic_extragradient() {
        let game = scalar_game(1.0, 2.0);
        let population = AgentPopulation::honest(1).unwrap();
        let start = IteratePair::new(v(&[1.0]), v(&[1.0]));
        let mut state = ServerState::new(start.clone());
        let c = ctx(0.2);
        let detail = vanilla_round(&mut state, &game, &population, &c).unwrap();
        let g1 = game.sample_gradient(&start, &mut agent_stream(c.seed, 0, 1, Query::Iterate));
        let mid = projected_step(&game, &start, &g1, 0.2).unwrap();
        let g2 = game.sample_gradient(&mid, &mut agent_stream(c.seed, 0, 1, Query::Midpoint));
        assert_eq!(detail.next, projected_step(&game, &start, &g2, 0.2).unwrap());
    }

    #[test]
    fn endpoint_replays_from_recorded_inputs() {
        let problem = build_preset(Preset::BilinearSec6, &PresetParams::default()).unwrap();
        let population = AgentPopulation::generate(20, 0.05, AttackStrategy::SignFlip { scale: 3.0 }).unwrap();
        let params = TrimParams::new(0.05, 0.05, 20, TrimSchedule::Desk).unwrap();
        let options = RunOptions {
            aggregator: Aggregator::Trimmed {
                params,
                partition: PartitionMode::Reshuffled,
            },
            step_size: 0.5,
            rounds: 30,
            seed: 4,
            workers: 1,
            record_wall_time: false,
            start: None,
        };
        run_with_observer(problem.as_ref(), &population, &options, |d| {
            let replay = projected_step(problem.as_ref(), &d.iterate, &d.grad_midpoint, 0.5).unwrap();
            assert_eq!(replay, d.next);
            let mid = projected_step(problem.as_ref(), &d.iterate, &d.grad_iterate, 0.5).unwrap();
            assert_eq!(mid, d.midpoint);
        })
        .unwrap();
    }

    #[test]
    fn noiseless_trajectory_ignores_partition() {
        let problem = build_preset(Preset::BilinearSec6, &PresetParams { sigma2: 0.0, ..Default::default() })
            .unwrap();
        let population = AgentPopulation::honest(10).unwrap();
        let params = TrimParams::new(0.0, 0.05, 10, TrimSchedule::Desk).unwrap();
        let run_with = |partition: PartitionMode| {
            let options = RunOptions {
                aggregator: Aggregator::Trimmed { params, partition },
                step_size: 0.5,
                rounds: 40,
                seed: 9,
                workers: 1,
                record_wall_time: false,
                start: None,
            };
            run(problem.as_ref(), &population, &options).unwrap()
        };
        let a = run_with(PartitionMode::Fixed(ChunkPartition::alternating(10).unwrap()));
        let b = run_with(PartitionMode::Fixed(
            ChunkPartition::new(vec![9, 8, 7, 6, 5], vec![0, 1, 2, 3, 4]).unwrap(),
        ));
        let c = run_with(PartitionMode::Reshuffled);
        assert_eq!(a.records, b.records);
        assert_eq!(a.records, c.records);
    }

    #[test]
    fn run_boundaries_and_errors() {
        let problem = build_preset(Preset::ScScQuadratic, &PresetParams::default()).unwrap();
        let population = AgentPopulation::honest(4).unwrap();
        let mut options = RunOptions {
            aggregator: Aggregator::Mean,
            step_size: default_step_size(problem.as_ref()),
            rounds: 1,
            seed: 0,
            workers: 1,
            record_wall_time: false,
            start: None,
        };
        assert_eq!(run(problem.as_ref(), &population, &options).unwrap().records.len(), 1);
        options.step_size = 0.0;
        assert!(run(problem.as_ref(), &population, &options).is_err());
        options.step_size = 0.1;
        options.rounds = 0;
        assert!(run(problem.as_ref(), &population, &options).is_err());
        options.rounds = 3;
        options.aggregator = Aggregator::Trimmed {
            params: TrimParams::with_epsilon(0.0, 6, 0.2).unwrap(),
            partition: PartitionMode::Reshuffled,
        };
        assert!(run(problem.as_ref(), &population, &options).is_err());
    }

    #[test]
    fn default_step_sizes() {
        let bil = build_preset(Preset::BilinearSec6, &PresetParams::default()).unwrap();
        let sc = build_preset(Preset::ScScQuadratic, &PresetParams::default()).unwrap();
        assert!((default_step_size(bil.as_ref()) - 0.5).abs() < 1e-12);
        assert!((default_step_size(sc.as_ref()) - 1.0 / 4.4).abs() < 1e-12);
    }

    #[test]
    fn byzantine_count_floors() {
        assert_eq!(byzantine_count(100, 0.06), 6);
        assert_eq!(byzantine_count(20, 0.06), 1);
        assert_eq!(byzantine_count(100, 0.07), 7);
        assert_eq!(byzantine_count(10, 0.0), 0);
    }
}
