//! Invariant suites run by `rdeg selftest`.

use rand::Rng;

use crate::aggregation::{trimmed_mean_1d, ChunkPartition, TrimParams, TrimSchedule};
use crate::geometry::{BallSet, IteratePair, Vector};
use crate::problems::{build_preset, Preset, PresetParams, SaddleProblem};
use crate::protocol::{
    default_step_size, projection_inequality_slack, run, run_with_observer, AgentPopulation, Aggregator,
    AttackStrategy, PartitionMode, RunOptions,
};
use crate::rng::probe_stream;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn random_vector(rng: &mut impl Rng, dim: usize, scale: f64) -> Vector {
    Vector::new((0..dim).map(|_| rng.random_range(-scale..scale)).collect()).expect("finite")
}

fn random_pair(rng: &mut impl Rng, dim: usize, scale: f64) -> IteratePair {
    IteratePair::new(random_vector(rng, dim, scale), random_vector(rng, dim, scale))
}

fn presets() -> Vec<Box<dyn SaddleProblem>> {
    [Preset::BilinearSec6, Preset::ScScQuadratic]
        .into_iter()
        .map(|p| build_preset(p, &PresetParams::default()).expect("preset builds"))
        .collect()
}

fn projection_check() -> Check {
    let mut rng = probe_stream(11, 0);
    let ball = BallSet::new(3.0, 5).expect("valid ball");
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let u = random_vector(&mut rng, 5, 6.0);
        let v = random_vector(&mut rng, 5, 6.0);
        let w = ball.project(&random_vector(&mut rng, 5, 3.0 / 5f64.sqrt())).expect("dims");
        let pu = ball.project(&u).expect("dims");
        let pv = ball.project(&v).expect("dims");
        let idem = ball.project(&pu).expect("dims").distance_sq(&pu).sqrt();
        let expand = pu.distance_sq(&pv).sqrt() - u.distance_sq(&v).sqrt();
        let vi = u.sub(&pu).dot(&w.sub(&pu));
        worst = worst.max(idem).max(expand).max(vi);
    }
    Check::new(
        "projection",
        worst <= 1e-9,
        format!("2000 sampled projections, worst violation {worst:.2e}"),
    )
}

fn trimmed_mean_check() -> Check {
    let mut rng = probe_stream(12, 0);
    let mut failures = 0;
    for case in 0..500 {
        let half = rng.random_range(2..40usize);
        let eps = rng.random_range(0.0..0.45);
        let q: Vec<f64> = (0..half).map(|_| rng.random_range(-1e3..1e3)).collect();
        let a: Vec<f64> = (0..half).map(|_| rng.random_range(-1e3..1e3)).collect();
        let value = trimmed_mean_1d(&q, &a, eps).expect("valid input");
        let lo = q.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut qr = q.clone();
        qr.reverse();
        let mut ar = a.clone();
        ar.rotate_left(case % half);
        let permuted = trimmed_mean_1d(&qr, &ar, eps).expect("valid input");
        let constant = trimmed_mean_1d(&vec![q[0]; half], &vec![q[0]; half], eps).expect("valid input");
        if value < lo || value > hi || (value - permuted).abs() > 1e-9 * (1.0 + value.abs()) || constant != q[0] {
            failures += 1;
        }
    }
    Check::new(
        "trimmed-mean",
        failures == 0,
        format!("{failures} failures on 500 random cases"),
    )
}

fn oracle_check() -> Check {
    let mut worst_z: f64 = 0.0;
    for (k, problem) in presets().into_iter().enumerate() {
        let mut rng = probe_stream(13, k as u64);
        let at = problem.initial_point();
        let exact = problem.population_gradient(&at);
        let n = 20_000;
        let dim = problem.dim_x();
        let mut sum = vec![0.0; 2 * dim];
        for _ in 0..n {
            let g = problem.sample_gradient(&at, &mut rng);
            for j in 0..dim {
                sum[j] += g.gx[j] - exact.gx[j];
                sum[dim + j] += g.gy[j] - exact.gy[j];
            }
        }
        // Each noisy coordinate has standard deviation 2σ.
        let se = 2.0 * problem.noise_sigma() / (n as f64).sqrt();
        for s in sum {
            worst_z = worst_z.max((s / n as f64).abs() / se);
        }
    }
    Check::new(
        "gradient-oracle",
        worst_z < 5.0,
        format!("largest standardized mean error {worst_z:.2} over 2e4 samples per preset"),
    )
}

fn monotonicity_check() -> Check {
    let mut rng = probe_stream(14, 0);
    let mut worst: f64 = 0.0;
    for problem in presets() {
        let mu = problem.strong_convexity();
        let l = problem.smoothness();
        for _ in 0..500 {
            let z = random_pair(&mut rng, problem.dim_x(), 30.0);
            let w = random_pair(&mut rng, problem.dim_x(), 30.0);
            let (fz, fw) = (problem.operator(&z), problem.operator(&w));
            let dx = z.x.sub(&w.x);
            let dy = z.y.sub(&w.y);
            let dfx = fz.x.sub(&fw.x);
            let dfy = fz.y.sub(&fw.y);
            let dist_sq = dx.norm_sq() + dy.norm_sq();
            let inner = dfx.dot(&dx) + dfy.dot(&dy);
            let lipschitz = (dfx.norm_sq() + dfy.norm_sq()).sqrt() / dist_sq.sqrt();
            worst = worst
                .max(mu * dist_sq - inner - 1e-9 * dist_sq)
                .max(lipschitz - l - 1e-9);
        }
    }
    Check::new(
        "operator-monotone",
        worst <= 0.0,
        format!("strong monotonicity and Lipschitz bounds on 500 pairs per preset, worst excess {worst:.2e}"),
    )
}

fn saddle_check() -> Check {
    let mut worst: f64 = 0.0;
    for problem in presets() {
        let saddle = problem.saddle().expect("presets have a saddle").clone();
        worst = worst.max(problem.primal_dual_gap(&saddle.x, &saddle.y).expect("feasible"));
    }
    Check::new("saddle-gap", worst <= 1e-9, format!("gap at the saddle point {worst:.2e}"))
}

fn short_rdeg(problem: &dyn SaddleProblem, rounds: usize, workers: usize) -> (AgentPopulation, RunOptions) {
    let params = TrimParams::new(0.06, 0.05, 100, TrimSchedule::Desk).expect("valid trim parameters");
    let population =
        AgentPopulation::generate(100, 0.06, AttackStrategy::SignFlip { scale: 3.0 }).expect("valid population");
    let options = RunOptions {
        aggregator: Aggregator::Trimmed {
            params,
            partition: PartitionMode::Fixed(ChunkPartition::alternating(100).expect("even")),
        },
        step_size: default_step_size(problem),
        rounds,
        seed: 5,
        workers,
        record_wall_time: false,
        start: None,
    };
    (population, options)
}

fn projection_inequality_check() -> Check {
    let problem = build_preset(Preset::BilinearSec6, &PresetParams::default()).expect("preset");
    let (population, options) = short_rdeg(problem.as_ref(), 200, 1);
    let mut rng = probe_stream(15, 0);
    let probes: Vec<IteratePair> = (0..8)
        .map(|_| {
            let p = random_pair(&mut rng, 10, 40.0);
            IteratePair::new(
                problem.set_x().project(&p.x).expect("dims"),
                problem.set_y().project(&p.y).expect("dims"),
            )
        })
        .collect();
    let mut worst = f64::INFINITY;
    let eta = options.step_size;
    run_with_observer(problem.as_ref(), &population, &options, |detail| {
        for probe in &probes {
            for slack in projection_inequality_slack(detail, eta, probe) {
                worst = worst.min(slack);
            }
        }
    })
    .expect("run completes");
    // Terms are of order D² = 4e4, so allow rounding at that scale.
    Check::new(
        "projection-inequalities",
        worst >= -1e-8 * 4e4,
        format!("minimum slack {worst:.3e} over 200 rounds and 8 probe points"),
    )
}

fn determinism_check() -> Check {
    let problem = build_preset(Preset::ScScQuadratic, &PresetParams::default()).expect("preset");
    let traces: Vec<Vec<u64>> = [1, 1, 4]
        .into_iter()
        .map(|workers| {
            let (population, options) = short_rdeg(problem.as_ref(), 100, workers);
            run(problem.as_ref(), &population, &options)
                .expect("run completes")
                .records
                .iter()
                .flat_map(|r| [r.gap.to_bits(), r.dist_sq.to_bits(), r.err_x_t.to_bits(), r.err_y_hat.to_bits()])
                .collect()
        })
        .collect();
    Check::new(
        "determinism",
        traces[0] == traces[1] && traces[0] == traces[2],
        "repeat run and 4-worker run reproduce the 1-worker trace bit for bit".to_string(),
    )
}

fn error_bound_check() -> Check {
    let problem = build_preset(Preset::BilinearSec6, &PresetParams::default()).expect("preset");
    let rounds = 500;
    let (population, options) = short_rdeg(problem.as_ref(), rounds, 1);
    let trace = run(problem.as_ref(), &population, &options).expect("run completes");
    let bound = match &options.aggregator {
        Aggregator::Trimmed { params, .. } => params.error_bound(problem.sigma(), problem.dim_x(), rounds, 6.0),
        Aggregator::Mean => unreachable!(),
    };
    let exceed = trace
        .records
        .iter()
        .filter(|r| r.err_x_t.max(r.err_y_t).max(r.err_x_hat).max(r.err_y_hat) > bound)
        .count();
    Check::new(
        "aggregation-error-bound",
        exceed * 20 <= rounds,
        format!("{exceed} of {rounds} rounds exceed the bound {bound:.2}"),
    )
}

/// Runs every suite in order.
pub fn run_all() -> Vec<Check> {
    vec![
        projection_check(),
        trimmed_mean_check(),
        oracle_check(),
        monotonicity_check(),
        saddle_check(),
        projection_inequality_check(),
        determinism_check(),
        error_bound_check(),
    ]
}
