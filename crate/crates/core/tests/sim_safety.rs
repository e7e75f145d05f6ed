//! Simulator invariants checked by an independent trajectory scanner.

use envgen::env::{Coord, Domain, Environment, TileType};
use envgen::sim::{assign_task, evaluate, plan_window, run_simulation, AgentState, GoalSets, PlanRequest, SimConfig, TaskPhase};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{random_valid, scan};

#[test]
fn randomized_mini_simulations_are_conflict_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let domains = [Domain::WarehouseEven, Domain::WarehouseUneven, Domain::Manufacturing];
    let mut congested = 0;
    for case in 0..200u64 {
        let env = random_valid(domains[case as usize % 3], &mut rng);
        let cfg = SimConfig {
            num_agents: rng.random_range(1..=30),
            horizon: 500,
            seed: case,
            record_trajectories: true,
            ..SimConfig::default()
        };
        let r = run_simulation(&env, &cfg).unwrap();
        congested += usize::from(r.congested);
        let traj = r.trajectories.as_ref().unwrap();
        assert_eq!(traj[0].len(), r.elapsed + 1);
        assert_eq!(scan(&env, traj), 0, "case {case}\n{}", env.to_text());
        let series: u64 = r.finished_per_timestep.iter().map(|&v| u64::from(v)).sum();
        assert_eq!(series, r.agent_tasks.iter().sum::<u64>());
        assert_eq!(series, r.tasks_finished);
        if r.elapsed > 0 {
            assert_eq!((r.throughput * r.elapsed as f64).round() as u64, r.tasks_finished);
        }
        assert_eq!(r.tile_usage.iter().sum::<u64>(), (r.elapsed * cfg.num_agents) as u64);
        assert!(!r.congested || r.elapsed < cfg.horizon);
    }
    println!("{congested}/200 congested");
}

#[test]
fn corridor_arrival_then_wait() {
    let env = Environment::from_text("maze 8 3\n########\n#......#\n########\n").unwrap();
    let req = PlanRequest {
        pos: env.index(1, 1),
        goal: env.index(6, 1),
        hold: 0,
    };
    let paths = plan_window(&env, &[req], 10, &mut ChaCha8Rng::seed_from_u64(0));
    let xs: Vec<usize> = paths[0].iter().map(|&c| env.coord(c).x).collect();
    assert_eq!(xs, vec![1, 2, 3, 4, 5, 6, 6, 6, 6, 6, 6]);
}

#[test]
fn head_on_agents_pass_in_wide_corridor() {
    let env = Environment::from_text("maze 9 4\n#########\n#.......#\n#.......#\n#########\n").unwrap();
    let reqs = [
        PlanRequest { pos: env.index(1, 1), goal: env.index(7, 1), hold: 0 },
        PlanRequest { pos: env.index(7, 1), goal: env.index(1, 1), hold: 0 },
    ];
    for seed in 0..10 {
        let paths = plan_window(&env, &reqs, 10, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(scan(&env, &paths), 0);
        assert_eq!(paths[0][10], reqs[0].goal);
        assert_eq!(paths[1][10], reqs[1].goal);
    }
}

#[test]
fn dwelling_agent_plans_waits() {
    let env = Environment::from_text("maze 5 3\n#####\n#...#\n#####\n").unwrap();
    let req = PlanRequest { pos: env.index(1, 1), goal: env.index(1, 1), hold: 3 };
    let p = &plan_window(&env, &[req], 10, &mut ChaCha8Rng::seed_from_u64(0))[0];
    assert!(p.iter().all(|&c| c == req.pos));
}

#[test]
fn uneven_left_draw_frequency() {
    let env = random_valid(Domain::WarehouseUneven, &mut ChaCha8Rng::seed_from_u64(1));
    let goals = GoalSets::new(&env, 5.0).unwrap();
    let agent = AgentState {
        pos: env.index(7, 0),
        goal: 0,
        phase: TaskPhase::ToWorkstation,
        dwell: 0,
        finished: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let draws = 1_000_000;
    let left = (0..draws)
        .filter(|_| env.coord(assign_task(&agent, &goals, &mut rng).unwrap()).x == 0)
        .count();
    let freq = left as f64 / draws as f64;
    assert!((freq - 5.0 / 6.0).abs() < 0.01, "{freq}");
}

#[test]
fn even_goals_alternate() {
    let env = random_valid(Domain::WarehouseEven, &mut ChaCha8Rng::seed_from_u64(2));
    let goals = GoalSets::new(&env, 5.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut a = AgentState { pos: env.index(0, 1), goal: 0, phase: TaskPhase::ToWorkstation.next(), dwell: 0, finished: 0 };
    for _ in 0..20 {
        let g = assign_task(&a, &goals, &mut rng).unwrap();
        let want = if a.phase == TaskPhase::ToEndpoint { TileType::Endpoint } else { TileType::Workstation };
        assert_eq!(env.tile(g), want);
        a.pos = g;
        a.phase = a.phase.next();
    }
}

#[test]
fn manufacturing_goals_follow_station_colour() {
    let env = random_valid(Domain::Manufacturing, &mut ChaCha8Rng::seed_from_u64(8));
    let goals = GoalSets::new(&env, 5.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (phase, colour) in [(TaskPhase::ToR, TileType::StationR), (TaskPhase::ToG, TileType::StationG), (TaskPhase::ToY, TileType::StationY)] {
        let a = AgentState { pos: 0, goal: 0, phase, dwell: 0, finished: 0 };
        for _ in 0..20 {
            let g = assign_task(&a, &goals, &mut rng).unwrap();
            assert_eq!(env.tile(g), TileType::Endpoint);
            assert!(env.neighbors(g).any(|k| env.tile(k) == colour));
        }
    }
}

#[test]
fn manufacturing_dwell_shuttle() {
    // One endpoint per colour along the bottom row, so every goal is forced.
    let env = Environment::from_text("manufacturing 5 2\nrgy..\neee..\n").unwrap();
    let cfg = SimConfig {
        num_agents: 1,
        horizon: 60,
        dwell_counts_as_wait: false,
        start_positions: Some(vec![Coord::new(1, 1)]),
        ..SimConfig::default()
    };
    let r = run_simulation(&env, &cfg).unwrap();
    // Replay: walk to the station's endpoint, then dwell; the task closes on
    // the step that ends the dwell.
    let (goal_x, dwell) = ([0usize, 1, 2], [2usize, 5, 10]);
    let (mut time, mut x, mut expected) = (0usize, 1usize, vec![0u32; 60]);
    for k in 0.. {
        let p = k % 3;
        time += x.abs_diff(goal_x[p]) + dwell[p];
        x = goal_x[p];
        if time > 60 {
            break;
        }
        expected[time - 1] += 1;
    }
    assert!(!r.congested);
    assert_eq!(r.finished_per_timestep, expected);
    assert_eq!(r.tasks_finished, 8);
}

#[test]
fn fixed_seed_is_deterministic() {
    let env = random_valid(Domain::WarehouseEven, &mut ChaCha8Rng::seed_from_u64(5));
    let cfg = SimConfig { num_agents: 20, horizon: 300, seed: 7, ..SimConfig::default() };
    assert_eq!(run_simulation(&env, &cfg).unwrap(), run_simulation(&env, &cfg).unwrap());
}

#[test]
fn evaluate_is_mean_of_independent_runs() {
    let env = random_valid(Domain::WarehouseEven, &mut ChaCha8Rng::seed_from_u64(6));
    let cfg = SimConfig { num_agents: 15, horizon: 200, ..SimConfig::default() };
    let ev = evaluate(&env, &cfg, 5, 100).unwrap();
    let runs: Vec<f64> = (0..5)
        .map(|k| run_simulation(&env, &SimConfig { seed: 100 + k, ..cfg.clone() }).unwrap().throughput)
        .collect();
    assert_eq!(ev.throughputs, runs);
    assert_eq!(ev.f_res, runs.iter().sum::<f64>() / 5.0);
    let one = evaluate(&env, &cfg, 1, 100).unwrap();
    assert_eq!(one.f_res, runs[0]);
}

#[test]
fn walled_off_maze_goal_scores_zero() {
    let env = Environment::from_text("maze 6 3\n######\n#.##.#\n######\n").unwrap();
    let ev = evaluate(&env, &SimConfig::default(), 1, 0).unwrap();
    assert_eq!(ev.f_res, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn usage_and_task_counts_agree(seed in any::<u64>(), agents in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = random_valid(Domain::WarehouseEven, &mut rng);
        let cfg = SimConfig { num_agents: agents, horizon: 120, seed, record_trajectories: true, ..SimConfig::default() };
        let r = run_simulation(&env, &cfg).unwrap();
        prop_assert_eq!(scan(&env, r.trajectories.as_ref().unwrap()), 0);
        prop_assert!(r.throughput >= 0.0);
        prop_assert_eq!(r.finished_per_timestep.len(), r.elapsed);
    }
}
