use rdeg::geometry::FEASIBILITY_TOL;
use rdeg::harness::{run_experiment, Algo, AttackKind, ExecOptions, RunConfig};
use rdeg::problems::{build_preset, Preset};
use rdeg::protocol::run_with_observer;

fn config(algo: Algo, attack: AttackKind, scale: f64, rounds: usize) -> RunConfig {
    let mut cfg = RunConfig::default_for(Preset::BilinearSec6);
    cfg.algo = algo;
    cfg.attack = attack;
    cfg.attack_scale = scale;
    cfg.rounds = rounds;
    cfg
}

fn max_distance(cfg: &RunConfig) -> f64 {
    let out = run_experiment(cfg, ExecOptions::default(), None).unwrap();
    out.trace.records.iter().map(|r| r.dist_sq.sqrt()).fold(0.0, f64::max)
}

#[test]
fn collusive_minority_drags_vanilla_out_of_the_rdeg_ball() {
    let rdeg = max_distance(&config(Algo::Rdeg, AttackKind::Collusive, 95.0, 1000));
    let vanilla = max_distance(&config(Algo::Vanilla, AttackKind::Collusive, 95.0, 1000));
    // The colluders' target sits at distance 95·√2 from the saddle.
    assert!(vanilla > 130.0, "vanilla {vanilla}");
    assert!(rdeg < 0.7 * vanilla, "rdeg {rdeg} vanilla {vanilla}");
}

#[test]
fn iterates_and_midpoints_stay_feasible_under_every_attack() {
    for attack in [AttackKind::SignFlip, AttackKind::GaussianBlast, AttackKind::ConstantShift, AttackKind::Collusive] {
        for algo in [Algo::Rdeg, Algo::Vanilla] {
            let cfg = config(algo, attack, 1e9, 200);
            let problem = build_preset(cfg.problem, &cfg.preset_params()).unwrap();
            let options = rdeg::protocol::RunOptions {
                aggregator: cfg.aggregator().unwrap(),
                step_size: cfg.step_size(problem.as_ref()),
                rounds: cfg.rounds,
                seed: 1,
                workers: 1,
                record_wall_time: false,
                start: None,
            };
            let limit = problem.set_x().radius() + FEASIBILITY_TOL;
            let mut worst: f64 = 0.0;
            let trace = run_with_observer(problem.as_ref(), &cfg.population(), &options, |d| {
                for p in [&d.midpoint, &d.next] {
                    worst = worst.max(p.x.norm()).max(p.y.norm());
                }
            })
            .unwrap();
            assert_eq!(trace.records.len(), 200);
            assert!(worst <= limit, "{attack:?} {algo:?}: {worst}");
            assert!(trace.records.iter().all(|r| r.gap >= 0.0 && r.dist_sq >= 0.0));
        }
    }
}

#[test]
fn rdeg_floor_beats_vanilla_under_large_sign_flip() {
    // Sign-flip scale 3 barely moves the plain mean; at scale 30 the
    // Byzantine share outweighs the honest one and vanilla climbs uphill.
    let r = run_experiment(&config(Algo::Rdeg, AttackKind::SignFlip, 30.0, 2000), ExecOptions::default(), None)
        .unwrap();
    let v = run_experiment(&config(Algo::Vanilla, AttackKind::SignFlip, 30.0, 2000), ExecOptions::default(), None)
        .unwrap();
    let (rf, vf) = (r.summary.error_floor.unwrap(), v.summary.error_floor.unwrap());
    assert!(vf > 3.0 * rf, "rdeg {rf} vanilla {vf}");
}
